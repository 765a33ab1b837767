"""Exception types shared across the engine."""

from __future__ import annotations


class CatamergeError(Exception):
    """Base class for all engine errors."""


class SchemaError(CatamergeError):
    """A schema, path, or constraint is malformed or ill-typed."""


class InstanceError(CatamergeError):
    """An instance builder operation violated typing or uniqueness rules."""


class ConstantClash(CatamergeError):
    """Two distinct constants were forced equal.

    Witnesses an unsatisfiable theory extension for the given data: the
    attribute (or element pair) where the clash surfaced plus both values.
    """

    def __init__(self, attribute: str, first: object, second: object, context: str = ""):
        self.attribute = attribute
        self.first = first
        self.second = second
        self.context = context
        where = f" at {context}" if context else ""
        super().__init__(f"constant clash on {attribute}{where}: {first!r} != {second!r}")


class IdentificationCollision(CatamergeError):
    """A merged entity class has an ambiguous signature even after prefixing."""


class ChasePreconditionError(CatamergeError):
    """The chase was invoked on inputs that violate its preconditions."""


class QueryError(CatamergeError):
    """Query evaluation failed (e.g. a path hit an undefined foreign key)."""
