"""Evaluation of simple conjunctive queries over a saturated instance."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from .errors import QueryError
from .instance import (
    Const,
    Instance,
    NullRef,
    UNDEFINED,
    Value,
    eval_term,
    values_equal,
)
from .schema import Eq, Term


@dataclass(frozen=True)
class QuerySpec:
    """from-bindings, where-equations, attribute projections."""

    name: str
    extension: str
    bindings: tuple[tuple[str, str], ...]  # (variable, entity) in declaration order
    wheres: tuple[Eq, ...]
    projections: tuple[tuple[str, Term], ...]  # (output column, term)


@dataclass
class ResultTable:
    columns: tuple[str, ...]
    rows: list[tuple[str, ...]] = field(default_factory=list)


def _render_cell(inst: Instance, value: Value) -> str:
    from .printer import render_constant

    if value is UNDEFINED:
        raise QueryError("internal error: path evaluation hit an undefined foreign key")
    if isinstance(value, NullRef):
        return "-"
    if isinstance(value, Const):
        return render_constant(value)
    raise QueryError("projections must be attribute-valued")


def evaluate(q: QuerySpec, sat: Instance) -> ResultTable:
    """Filtered cross product of the from-bindings, in deterministic order.

    Rows come out lexicographically over the canonical ids of the bound
    tuple; labelled nulls render as "-". Atoms are applied as soon as their
    variables are bound, so the full product is never materialized.
    """
    table = ResultTable(columns=tuple(name for name, _ in q.projections))
    carriers = [sat.carrier(entity) for _, entity in q.bindings]
    names = [name for name, _ in q.bindings]

    # Pre-compute, per binding position, which atoms become checkable there.
    stage: list[list[Eq]] = [[] for _ in q.bindings]
    for atom in q.wheres:
        needed = _atom_vars(atom)
        last = 0
        for i, name in enumerate(names):
            if name in needed:
                last = i
        stage[last].append(atom)

    def descend(depth: int, env: dict[str, Value]) -> None:
        if depth == len(carriers):
            row = []
            for _, term in q.projections:
                row.append(_render_cell(sat, eval_term(sat, env, term)))
            table.rows.append(tuple(row))
            return
        for elem in carriers[depth]:
            env[names[depth]] = elem
            ok = True
            for atom in stage[depth]:
                lv = eval_term(sat, env, atom.left)
                rv = eval_term(sat, env, atom.right)
                if lv is UNDEFINED or rv is UNDEFINED:
                    raise QueryError(
                        "internal error: where-atom evaluation hit an undefined foreign key"
                    )
                if not values_equal(sat, lv, rv):
                    ok = False
                    break
            if ok:
                descend(depth + 1, env)
        env.pop(names[depth], None)

    descend(0, {})
    return table


def _atom_vars(atom: Eq) -> set[str]:
    from .schema import _term_vars

    return _term_vars(atom.left) | _term_vars(atom.right)


# ---------------------------------------------------------------------------
# Plans

@dataclass
class JoinPlan:
    query: str
    bindings: list[tuple[str, str, int]]  # (variable, entity, carrier size)
    product_size: int
    filters: list[tuple[str, int]]  # (rendered atom, rows surviving)
    result_rows: int

    @property
    def empty(self) -> bool:
        return self.result_rows == 0

    def render(self) -> str:
        lines = [f"plan for {self.query}:"]
        for var, entity, size in self.bindings:
            lines.append(f"  bind {var} : {entity} ({size} rows)")
        lines.append(f"  cross product: {self.product_size} tuples")
        for atom, rows in self.filters:
            lines.append(f"  filter {atom} -> {rows} tuples")
        lines.append(f"  result: {self.result_rows} rows")
        if self.empty:
            lines.append("  note: empty result")
        return "\n".join(lines) + "\n"


def explain(q: QuerySpec, sat: Instance) -> JoinPlan:
    """Describe the evaluation: binding order, filters, and cardinalities."""
    from .printer import render_term

    carriers = [sat.carrier(entity) for _, entity in q.bindings]
    names = [name for name, _ in q.bindings]
    bindings = [
        (name, entity, len(carrier))
        for (name, entity), carrier in zip(q.bindings, carriers)
    ]
    product = 1
    for c in carriers:
        product *= len(c)
    tuples: list[dict[str, Value]] = [
        dict(zip(names, combo)) for combo in itertools.product(*carriers)
    ]
    filters: list[tuple[str, int]] = []
    for atom in q.wheres:
        survivors = []
        for env in tuples:
            lv = eval_term(sat, env, atom.left)
            rv = eval_term(sat, env, atom.right)
            if values_equal(sat, lv, rv):
                survivors.append(env)
        tuples = survivors
        filters.append((f"{render_term(atom.left)} = {render_term(atom.right)}", len(tuples)))
    return JoinPlan(
        query=q.name,
        bindings=bindings,
        product_size=product,
        filters=filters,
        result_rows=len(tuples),
    )
