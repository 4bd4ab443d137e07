"""Exception hierarchy shared by every module of the package."""


class AggAccessError(Exception):
    """Base class for all errors raised by this package."""


# semiring
class DomainTooLarge(AggAccessError):
    pass


class NotMonotone(AggAccessError):
    pass


# model / ingestion
class QuerySyntaxError(AggAccessError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class QuerySemanticError(AggAccessError):
    pass


class ArityMismatch(AggAccessError):
    def __init__(self, relation: str, row: int, expected: int, got: int):
        super().__init__(
            f"{relation}: row {row} has {got} columns, expected {expected}")
        self.row = row


class DuplicateFact(AggAccessError):
    pass


class AnnotationParseError(AggAccessError):
    pass


class MissingDomain(AggAccessError):
    pass


# structure / rewrites
class NotFreeConnex(AggAccessError):
    pass


class NotIdempotent(AggAccessError):
    pass


class NotLocallyAnnotated(AggAccessError):
    pass


class ZBlockViolation(AggAccessError):
    pass


class DisruptiveTrio(AggAccessError):
    def __init__(self, witness):
        super().__init__(f"disruptive trio {witness}")
        self.witness = witness


class CyclicQuery(AggAccessError):
    def __init__(self, witness):
        super().__init__(f"query is cyclic; residue {witness}")
        self.witness = witness


# access
class WeightOverflow(AggAccessError):
    pass


class IndexOutOfRange(AggAccessError):
    pass


# oracle
class InstanceTooLarge(AggAccessError):
    pass


# planner / cli
class UsageError(AggAccessError):
    pass
