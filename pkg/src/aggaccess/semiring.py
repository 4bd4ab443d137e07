"""Commutative semirings used to annotate facts and answers.

Every semiring exposes ``plus``/``times``, its identities ``zero``/``one``,
a total order given by :meth:`Semiring.sort_key`, and two structural flags
that the planner consults:

``plus_idempotent``
    ``a + a == a`` for every value (tropical and set semirings).
``times_monotone``
    ``x -> c * x`` is monotone for every ``c`` (all but the set semiring).

Values are plain Python objects so that they hash and compare cheaply:

=================  ===============================================
Counting           ``int`` (non-negative)
Numeric            ``int`` or ``fractions.Fraction``
MinTropical        number or ``math.inf``
MaxTropical        number or ``-math.inf``
SetSemiring        ``int`` bit mask over the declared domain
AvgPair            ``(sum, count)`` with ``sum`` rational
=================  ===============================================
"""

from __future__ import annotations

import math
import re
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Sequence

from .errors import AnnotationParseError, DomainTooLarge, NotMonotone

DEFAULT_SET_BOUND = 64

_INT = re.compile(r"[+-]?\d+\Z")
_RAT = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\Z|[+-]?\d+/\d+\Z")


class Direction(Enum):
    NON_DECREASING = "NonDecreasing"
    NON_INCREASING = "NonIncreasing"


class Kind(Enum):
    COUNTING = "counting"
    NUMERIC = "numeric"
    MIN_TROPICAL = "mintrop"
    MAX_TROPICAL = "maxtrop"
    SET = "set"
    AVG = "avg"


def parse_number(text: str) -> int | Fraction:
    """Parse an exact rational literal (``3``, ``-2.5``, ``7/3``)."""
    text = text.strip()
    if _INT.match(text):
        return int(text)
    if _RAT.match(text):
        return normalize(Fraction(text))
    raise AnnotationParseError(f"not a number: {text!r}")


def normalize(x):
    """Collapse integral fractions to ``int`` so values print and hash uniformly."""
    if isinstance(x, Fraction) and x.denominator == 1:
        return int(x.numerator)
    return x


def format_number(x) -> str:
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    x = normalize(x)
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return str(x)


def _is_number(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


class Semiring:
    kind: Kind
    zero: Any
    one: Any
    plus_idempotent = False
    times_monotone = True
    contains_naturals = True

    def plus(self, a, b):
        raise NotImplementedError

    def times(self, a, b):
        raise NotImplementedError

    def sort_key(self, a):
        return a

    def compare(self, a, b) -> int:
        """Return -1, 0 or 1."""
        ka, kb = self.sort_key(a), self.sort_key(b)
        return (ka > kb) - (ka < kb)

    def monotone_direction(self, c) -> Direction:
        if not self.times_monotone:
            raise NotMonotone(f"{self.name} is not times-monotone")
        return Direction.NON_DECREASING

    def sum(self, values: Iterable):
        acc = self.zero
        for v in values:
            acc = self.plus(acc, v)
        return acc

    def product(self, values: Iterable):
        acc = self.one
        for v in values:
            acc = self.times(acc, v)
        return acc

    def contains(self, a) -> bool:
        raise NotImplementedError

    def parse(self, text: str):
        raise NotImplementedError

    def format(self, a) -> str:
        return format_number(a)

    def from_constant(self, c):
        """Annotation contributed by an aggregated constant ``c``."""
        if not _is_number(c):
            raise AnnotationParseError(
                f"{self.name} annotation needs a number, got {c!r}")
        return c

    @property
    def name(self) -> str:
        return self.kind.value

    def __repr__(self) -> str:
        return f"<semiring {self.name}>"

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self._ident() == other._ident()

    def __hash__(self) -> int:
        return hash((type(self), self._ident()))

    def _ident(self):
        return ()


class Counting(Semiring):
    kind = Kind.COUNTING
    zero = 0
    one = 1

    def plus(self, a, b):
        return a + b

    def times(self, a, b):
        return a * b

    def contains(self, a) -> bool:
        return isinstance(a, int) and not isinstance(a, bool) and a >= 0

    def parse(self, text: str):
        text = text.strip()
        if not _INT.match(text) or int(text) < 0:
            raise AnnotationParseError(f"not a natural number: {text!r}")
        return int(text)

    def from_constant(self, c):
        if not self.contains(c):
            raise AnnotationParseError(f"counting annotation must be natural: {c!r}")
        return c


class Numeric(Semiring):
    kind = Kind.NUMERIC
    zero = 0
    one = 1

    def plus(self, a, b):
        return normalize(a + b)

    def times(self, a, b):
        return normalize(a * b)

    def monotone_direction(self, c) -> Direction:
        return Direction.NON_INCREASING if c < 0 else Direction.NON_DECREASING

    def contains(self, a) -> bool:
        return _is_number(a)

    def parse(self, text: str):
        return parse_number(text)


class MinTropical(Semiring):
    kind = Kind.MIN_TROPICAL
    zero = math.inf
    one = 0
    plus_idempotent = True

    def plus(self, a, b):
        return a if a <= b else b

    def times(self, a, b):
        if a == math.inf or b == math.inf:
            return math.inf
        return normalize(a + b)

    def contains(self, a) -> bool:
        return _is_number(a) or a == math.inf

    def parse(self, text: str):
        t = text.strip().lower()
        if t in ("inf", "+inf", "infinity"):
            return math.inf
        return parse_number(text)


class MaxTropical(Semiring):
    kind = Kind.MAX_TROPICAL
    zero = -math.inf
    one = 0
    plus_idempotent = True

    def plus(self, a, b):
        return a if a >= b else b

    def times(self, a, b):
        if a == -math.inf or b == -math.inf:
            return -math.inf
        return normalize(a + b)

    def contains(self, a) -> bool:
        return _is_number(a) or a == -math.inf

    def parse(self, text: str):
        t = text.strip().lower()
        if t in ("-inf", "-infinity"):
            return -math.inf
        return parse_number(text)


class SetSemiring(Semiring):
    """Subsets of a finite ordered domain, stored as bit masks.

    Bit ``i`` stands for ``domain[i]``.  Sets are ordered by cardinality and
    then lexicographically on their sorted element positions.
    """

    kind = Kind.SET
    plus_idempotent = True
    times_monotone = False
    contains_naturals = False

    def __init__(self, domain: Sequence, bound: int = DEFAULT_SET_BOUND):
        domain = tuple(domain)
        if not domain:
            raise DomainTooLarge("set semiring needs a non-empty domain")
        if len(set(domain)) != len(domain):
            raise DomainTooLarge("set semiring domain has duplicates")
        if len(domain) > bound:
            raise DomainTooLarge(
                f"domain of size {len(domain)} exceeds the bound {bound}")
        self.domain = domain
        self.index = {c: i for i, c in enumerate(domain)}
        self.zero = 0
        self.one = (1 << len(domain)) - 1

    def _ident(self):
        return self.domain

    def plus(self, a, b):
        return a | b

    def times(self, a, b):
        return a & b

    def members(self, a) -> list[int]:
        return [i for i in range(len(self.domain)) if a >> i & 1]

    def sort_key(self, a):
        return (bin(a).count("1"), tuple(self.members(a)))

    def contains(self, a) -> bool:
        return isinstance(a, int) and 0 <= a <= self.one

    def singleton(self, c) -> int:
        try:
            return 1 << self.index[c]
        except KeyError:
            raise AnnotationParseError(f"{c!r} is not in the declared domain") from None

    def from_constant(self, c):
        return self.singleton(c)

    def parse(self, text: str):
        from .model import parse_constant

        text = text.strip()
        if text.startswith("{") and text.endswith("}"):
            text = text[1:-1]
        mask = 0
        for part in filter(None, (p.strip() for p in text.split("|"))):
            mask |= self.singleton(parse_constant(part))
        return mask

    def format(self, a) -> str:
        from .model import format_constant

        return "{" + "|".join(format_constant(self.domain[i]) for i in self.members(a)) + "}"


class AvgPair(Semiring):
    """Pairs ``(sum, count)`` whose ratio is an average.

    ``(s1, c1) * (s2, c2) = (s1*c2 + s2*c1, c1*c2)`` so the ratio of a product
    is the sum of the ratios; ``plus`` is componentwise.
    """

    kind = Kind.AVG
    zero = (0, 0)
    one = (0, 1)

    def plus(self, a, b):
        return (normalize(a[0] + b[0]), a[1] + b[1])

    def times(self, a, b):
        return (normalize(a[0] * b[1] + b[0] * a[1]), a[1] * b[1])

    def sort_key(self, a):
        if a[1] == 0:
            return (0, 0)
        return (1, Fraction(a[0]) / a[1])

    def contains(self, a) -> bool:
        return (isinstance(a, tuple) and len(a) == 2 and _is_number(a[0])
                and isinstance(a[1], int) and a[1] >= 0 and (a[1] > 0 or a[0] == 0))

    def from_constant(self, c):
        return (super().from_constant(c), 1)

    def parse(self, text: str):
        parts = text.strip().split(":")
        if len(parts) != 2:
            raise AnnotationParseError(f"avg annotation must be 'sum:count': {text!r}")
        s = parse_number(parts[0])
        c = parse_number(parts[1])
        value = (s, c)
        if not isinstance(c, int) or not self.contains(value):
            raise AnnotationParseError(f"invalid avg annotation: {text!r}")
        return value

    def format(self, a) -> str:
        return f"{format_number(a[0])}:{a[1]}"

    @staticmethod
    def ratio(a):
        return normalize(Fraction(a[0]) / a[1])


_SIMPLE = {
    Kind.COUNTING: Counting,
    Kind.NUMERIC: Numeric,
    Kind.MIN_TROPICAL: MinTropical,
    Kind.MAX_TROPICAL: MaxTropical,
    Kind.AVG: AvgPair,
}


def instantiate(kind: Kind | str, domain: Sequence | None = None,
                bound: int = DEFAULT_SET_BOUND) -> Semiring:
    """Build the semiring named by ``kind`` (a :class:`Kind` or its string)."""
    kind = Kind(kind)
    if kind is Kind.SET:
        if domain is None:
            raise DomainTooLarge("set semiring requires a domain")
        return SetSemiring(domain, bound)
    return _SIMPLE[kind]()


def load_domain(path: str) -> list:
    """Read a newline-separated domain file for the set semiring."""
    from .model import parse_constant

    with open(path, encoding="utf-8") as fh:
        items = [parse_constant(line) for line in fh if line.strip()]
    if len(set(items)) != len(items):
        raise DomainTooLarge(f"{path}: duplicate domain constants")
    return items
