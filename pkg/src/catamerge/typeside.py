"""The fixed typeside: base types plus built-in functions and predicates.

There are no user-defined base types or functions; every schema draws from
this one table. Functions are overloaded by argument types and every
reference must resolve to exactly one signature.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Union

from .errors import SchemaError


class BaseType(enum.Enum):
    STRING = "String"
    INT = "Int"
    DOUBLE = "Double"
    BOOL = "Bool"

    def __str__(self) -> str:
        return self.value


BASE_TYPES_BY_NAME = {t.value: t for t in BaseType}

PyValue = Union[str, int, float, bool]


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance (insert/delete/substitute, unit costs)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    row = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        prev, row[0] = row[0], i
        for j, cb in enumerate(b, start=1):
            cur = row[j]
            row[j] = min(row[j] + 1, row[j - 1] + 1, prev + (ca != cb))
            prev = cur
    return row[-1]


@dataclass(frozen=True)
class FnSig:
    name: str
    arg_types: tuple[BaseType, ...]
    result: BaseType
    impl: Callable[..., PyValue]


def _int_div(a: int, b: int) -> int:
    return a // b


def _dbl_div(a: float, b: float) -> float:
    return a / b


_S, _I, _D = BaseType.STRING, BaseType.INT, BaseType.DOUBLE

BUILTIN_FUNCTIONS: tuple[FnSig, ...] = (
    FnSig("levenshtein", (_S, _S), _I, levenshtein),
    FnSig("concat", (_S, _S), _S, lambda a, b: a + b),
    FnSig("add", (_I, _I), _I, lambda a, b: a + b),
    FnSig("add", (_D, _D), _D, lambda a, b: a + b),
    FnSig("sub", (_I, _I), _I, lambda a, b: a - b),
    FnSig("sub", (_D, _D), _D, lambda a, b: a - b),
    FnSig("mul", (_I, _I), _I, lambda a, b: a * b),
    FnSig("mul", (_D, _D), _D, lambda a, b: a * b),
    FnSig("div", (_I, _I), _I, _int_div),
    FnSig("div", (_D, _D), _D, _dbl_div),
)

_FN_INDEX: dict[tuple[str, tuple[BaseType, ...]], FnSig] = {
    (sig.name, sig.arg_types): sig for sig in BUILTIN_FUNCTIONS
}

FUNCTION_NAMES = frozenset(sig.name for sig in BUILTIN_FUNCTIONS)

# Comparison predicates usable in constraint premises. Equality is defined
# on every base type; the orderings only on Int and Double.
COMPARE_OPS = ("=", "<", ">", "<=", ">=")
_NUMERIC = frozenset({BaseType.INT, BaseType.DOUBLE})


def resolve_function(name: str, arg_types: tuple[BaseType, ...]) -> FnSig:
    """Resolve a function reference to its unique signature or fail."""
    sig = _FN_INDEX.get((name, arg_types))
    if sig is None:
        if name not in FUNCTION_NAMES:
            raise SchemaError(f"unknown built-in function '{name}'")
        raise SchemaError(
            f"no signature {name}({', '.join(map(str, arg_types))}) among built-ins"
        )
    return sig


def predicate_defined(op: str, left: BaseType, right: BaseType) -> bool:
    if op == "=":
        return left == right or (left in _NUMERIC and right in _NUMERIC)
    return left in _NUMERIC and right in _NUMERIC


def apply_predicate(op: str, left: PyValue, right: PyValue) -> bool:
    if op == "=":
        return left == right
    if op == "<":
        return left < right  # type: ignore[operator]
    if op == ">":
        return left > right  # type: ignore[operator]
    if op == "<=":
        return left <= right  # type: ignore[operator]
    if op == ">=":
        return left >= right  # type: ignore[operator]
    raise SchemaError(f"unknown predicate '{op}'")


def normalize_double(value: float) -> float:
    """Doubles are normalized at parse time so equality is exact."""
    return round(float(value), 6)
