"""Queries, relations, annotated databases and the aggregate translation."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .errors import (AnnotationParseError, ArityMismatch, DuplicateFact,
                     MissingDomain, QuerySemanticError, QuerySyntaxError)
from .semiring import Kind, Semiring, SetSemiring, format_number, instantiate

AGG_FUNCS = ("Count", "CountD", "Sum", "Avg", "Min", "Max")
_AGG_BY_LOWER = {f.lower(): f for f in AGG_FUNCS}

# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

_INT = re.compile(r"[+-]?\d+\Z")
_DEC = re.compile(r"[+-]?(\d+\.\d*|\.\d+)\Z")


def parse_constant(text: str):
    """Numeric-looking text becomes a number; anything else stays a string."""
    text = text.strip()
    if _INT.match(text):
        return int(text)
    if _DEC.match(text):
        f = Fraction(text)
        return int(f) if f.denominator == 1 else f
    return text


def const_key(c):
    """Global order on constants: numbers (by value) before strings."""
    if isinstance(c, str):
        return (1, c)
    return (0, c)


def format_constant(c) -> str:
    if isinstance(c, str):
        return c
    return format_number(c)


# ---------------------------------------------------------------------------
# query AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def vars(self) -> frozenset:
        return frozenset(self.terms)

    def __str__(self) -> str:
        return f"{self.relation}({', '.join(self.terms)})"


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Star:
    def __str__(self) -> str:
        return "*"


@dataclass(frozen=True)
class Agg:
    func: str
    arg: str | None = None

    def __str__(self) -> str:
        return f"{self.func}({self.arg or ''})"


HeadEntry = Union[Var, Star, Agg]


@dataclass(frozen=True)
class Query:
    head: tuple
    body: tuple
    name: str = "Q"

    def __post_init__(self):
        object.__setattr__(self, "head", tuple(self.head))
        object.__setattr__(self, "body", tuple(self.body))

    @property
    def head_vars(self) -> tuple:
        return tuple(e.name for e in self.head if isinstance(e, Var))

    @property
    def free(self) -> frozenset:
        return frozenset(self.head_vars)

    @property
    def variables(self) -> tuple:
        """Body variables in order of first occurrence."""
        seen = {}
        for atom in self.body:
            for t in atom.terms:
                seen.setdefault(t, None)
        return tuple(seen)

    @property
    def existential(self) -> frozenset:
        return frozenset(self.variables) - self.free

    @property
    def star_position(self) -> int | None:
        for i, e in enumerate(self.head):
            if isinstance(e, (Star, Agg)):
                return i
        return None

    @property
    def aggregates(self) -> tuple:
        return tuple(e for e in self.head if isinstance(e, Agg))

    @property
    def has_star(self) -> bool:
        return any(isinstance(e, Star) for e in self.head)

    @property
    def is_acq(self) -> bool:
        return bool(self.aggregates)

    @property
    def is_full(self) -> bool:
        return not self.existential

    @property
    def star_last(self) -> bool:
        """No computed value, or computed values only at the end of the head."""
        pos = self.star_position
        return pos is None or all(not isinstance(e, Var) for e in self.head[pos:])

    @property
    def prefix_vars(self) -> tuple:
        """Head variables before the computed value."""
        pos = self.star_position
        if pos is None:
            return self.head_vars
        return tuple(e.name for e in self.head[:pos] if isinstance(e, Var))

    @property
    def suffix_vars(self) -> tuple:
        pos = self.star_position
        if pos is None:
            return ()
        return tuple(e.name for e in self.head[pos:] if isinstance(e, Var))

    def relations(self) -> list:
        return [a.relation for a in self.body]

    def is_self_join_free(self) -> bool:
        names = self.relations()
        return len(names) == len(set(names))

    def atom_of(self, relation: str) -> int:
        for i, a in enumerate(self.body):
            if a.relation == relation:
                return i
        raise KeyError(relation)

    def with_head(self, head: Iterable) -> "Query":
        return Query(tuple(head), self.body, self.name)

    def with_body(self, body: Iterable) -> "Query":
        return Query(self.head, tuple(body), self.name)

    def __str__(self) -> str:
        return pretty_print(self)


def pretty_print(q: Query) -> str:
    head = ", ".join(str(e) for e in q.head)
    body = ", ".join(str(a) for a in q.body)
    return f"{q.name}({head}) :- {body}."


def fresh_var(q: Query, base: str = "y") -> str:
    used = set(q.variables) | set(q.head_vars)
    if base not in used:
        return base
    i = 1
    while f"{base}{i}" in used:
        i += 1
    return f"{base}{i}"


def fresh_relation(used: Iterable[str], base: str, numbered: bool = False) -> str:
    """``base`` if unused, else ``base`` with the smallest free numeric suffix."""
    used = set(used)
    if base not in used and not numbered:
        return base
    i = 1
    while f"{base}{i}" in used:
        i += 1
    return f"{base}{i}"


def validate_query(q: Query) -> Query:
    body_vars = set(q.variables)
    names = q.head_vars
    if len(set(names)) != len(names):
        raise QuerySemanticError("head variables must be distinct")
    for v in names:
        if v not in body_vars:
            raise QuerySemanticError(f"head variable {v} does not occur in the body")
    stars = [e for e in q.head if isinstance(e, Star)]
    aggs = q.aggregates
    if len(stars) > 1:
        raise QuerySemanticError("at most one * entry is allowed")
    if stars and aggs:
        raise QuerySemanticError("cannot mix * with aggregates")
    if len(aggs) > 1 and not q.star_last:
        raise QuerySemanticError("multiple aggregates must all come last in the head")
    for a in aggs:
        if a.func == "Count":
            if a.arg is not None:
                raise QuerySemanticError("Count() takes no argument")
            continue
        if a.arg is None:
            raise QuerySemanticError(f"{a.func} needs an argument")
        if a.arg not in body_vars:
            raise QuerySemanticError(f"aggregate argument {a.arg} occurs in no atom")
        if a.arg in names:
            raise QuerySemanticError(f"aggregate argument {a.arg} must be existential")
    return q


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<arrow>:-)|(?P<sym>[(),.*]))")


def _tokenize(text: str):
    pos = 0
    out = []
    while True:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise QuerySyntaxError(f"unexpected character {text[bad]!r}", bad)
        start = m.start(m.lastgroup)
        out.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind, value=None):
        tok = self.toks[self.i]
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value or kind
            raise QuerySyntaxError(f"expected {want!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def variable(self):
        tok = self.take("name")
        if not tok[1][0].islower():
            raise QuerySyntaxError(f"variables start lowercase: {tok[1]!r}", tok[2])
        return tok[1]

    def relation(self):
        tok = self.take("name")
        if not tok[1][0].isupper():
            raise QuerySyntaxError(f"relation names start uppercase: {tok[1]!r}", tok[2])
        return tok[1]

    def entry(self):
        kind, value, pos = self.peek()
        if kind == "sym" and value == "*":
            self.i += 1
            return Star()
        if kind == "name" and self.toks[self.i + 1][1] == "(":
            func = _AGG_BY_LOWER.get(value.lower())
            if func is None:
                raise QuerySyntaxError(f"unknown aggregate {value!r}", pos)
            self.i += 2
            arg = None
            if self.peek()[1] != ")":
                arg = self.variable()
            self.take("sym", ")")
            return Agg(func, arg)
        return Var(self.variable())

    def query(self) -> Query:
        name = self.relation()
        self.take("sym", "(")
        head = []
        if self.peek()[1] != ")":
            head.append(self.entry())
            while self.peek()[1] == ",":
                self.i += 1
                head.append(self.entry())
        self.take("sym", ")")
        self.take("arrow")
        body = [self.atom()]
        while self.peek()[1] == ",":
            self.i += 1
            body.append(self.atom())
        if self.peek()[1] == ".":
            self.i += 1
        self.take("eof")
        return Query(tuple(head), tuple(body), name)

    def atom(self) -> Atom:
        rel = self.relation()
        self.take("sym", "(")
        terms = []
        if self.peek()[1] != ")":
            terms.append(self.variable())
            while self.peek()[1] == ",":
                self.i += 1
                terms.append(self.variable())
        self.take("sym", ")")
        return Atom(rel, tuple(terms))


def parse_query(text: str) -> Query:
    """Parse ``Q(x, Sum(w)) :- R(x, w), S(w).`` style text and validate it."""
    return validate_query(_Parser(text).query())


# ---------------------------------------------------------------------------
# relations and databases
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Relation:
    name: str
    arity: int
    facts: tuple


def load_relation(path: str, name: str, arity: int, annotated: bool = False):
    """Read a header-less CSV file.

    With ``annotated`` the last column is split off and returned as a list of
    raw annotation literals aligned with the facts.
    """
    facts = []
    raw = [] if annotated else None
    seen = set()
    width = arity + (1 if annotated else 0)
    with open(path, newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise ArityMismatch(name, rowno, width, len(row))
            fact = tuple(parse_constant(c) for c in row[:arity])
            if fact in seen:
                raise DuplicateFact(f"{name}: duplicate fact {fact} at row {rowno}")
            seen.add(fact)
            facts.append(fact)
            if annotated:
                raw.append(row[-1].strip())
    return Relation(name, arity, tuple(facts)), raw


class AnnotatedDatabase:
    """Relations mapped to ``{fact: annotation}`` dictionaries.

    ``annotated_relation`` names the single relation carrying non-one
    annotations, if exactly one does.  ``locally_annotated`` additionally
    holds when every annotation is the semiring one.
    """

    def __init__(self, semiring: Semiring, relations: dict, arities: dict | None = None):
        self.semiring = semiring
        self.relations = relations
        if arities is None:
            arities = {}
            for name, facts in relations.items():
                arities[name] = len(next(iter(facts))) if facts else 0
        self.arities = dict(arities)
        one = semiring.one
        loaded = [name for name, facts in relations.items()
                  if any(v != one for v in facts.values())]
        self.annotated_relation = loaded[0] if len(loaded) == 1 else None
        self.locally_annotated = len(loaded) <= 1

    def facts(self, name: str) -> dict:
        return self.relations[name]

    def size(self) -> int:
        return sum(len(f) for f in self.relations.values())

    def with_relations(self, relations: dict, arities: dict | None = None) -> "AnnotatedDatabase":
        return AnnotatedDatabase(self.semiring, relations, arities)

    def plain(self) -> dict:
        return {n: Relation(n, self.arities[n], tuple(f)) for n, f in self.relations.items()}

    def __repr__(self) -> str:
        sizes = {n: len(f) for n, f in self.relations.items()}
        return f"<AnnotatedDatabase {self.semiring.name} {sizes}>"


def database_from(semiring: Semiring, data: dict, annotations: dict | None = None) -> AnnotatedDatabase:
    """Convenience constructor from ``{name: [tuple, ...]}``.

    ``annotations`` maps a relation name to either a list aligned with its
    facts or a ``{fact: value}`` dict; unlisted facts get the semiring one.
    """
    annotations = annotations or {}
    rels, arities = {}, {}
    for name, rows in data.items():
        if isinstance(rows, Relation):
            arity, rows = rows.arity, rows.facts
        else:
            rows = [tuple(r) for r in rows]
            arity = len(rows[0]) if rows else 0
        ann = annotations.get(name)
        table = {}
        for i, fact in enumerate(rows):
            if fact in table:
                raise DuplicateFact(f"{name}: duplicate fact {fact}")
            if ann is None:
                table[fact] = semiring.one
            elif isinstance(ann, dict):
                table[fact] = ann.get(fact, semiring.one)
            else:
                table[fact] = ann[i]
        rels[name] = table
        arities[name] = arity
    return AnnotatedDatabase(semiring, rels, arities)


@dataclass(frozen=True)
class AnnotationRule:
    """Annotate facts of ``relation`` from column ``column`` with ``func``.

    ``source`` names the stored relation whose facts ``relation`` copies when
    the carrier atom had to be given its own name.
    """

    func: str
    atom: int | None = None
    relation: str | None = None
    column: int | None = None
    source: str | None = None

    def alias(self, relations: dict) -> dict:
        """``relations`` extended with the carrier copy, if any."""
        if self.source is None or self.source == self.relation:
            return relations
        out = dict(relations)
        out[self.relation] = relations[self.source]
        return out


def annotate_database(relations: dict, semiring: Semiring, rule: AnnotationRule | None = None,
                      raw: dict | None = None) -> AnnotatedDatabase:
    """Attach annotations to plain ``Relation`` objects.

    Either ``rule`` (from :func:`translate_acq`) or ``raw`` annotation
    literal columns may be given; everything else is annotated with one.
    """
    raw = raw or {}
    if rule is not None:
        relations = rule.alias(relations)
    tables, arities = {}, {}
    for name, rel in relations.items():
        table = {}
        lits = raw.get(name)
        for i, fact in enumerate(rel.facts):
            if rule is not None and rule.relation == name and rule.column is not None:
                value = semiring.from_constant(fact[rule.column])
            elif lits is not None:
                try:
                    value = semiring.parse(lits[i])
                except AnnotationParseError:
                    raise
                except Exception as exc:  # malformed literal of any kind
                    raise AnnotationParseError(f"{name}: bad annotation {lits[i]!r}") from exc
            else:
                value = semiring.one
            table[fact] = value
        tables[name] = table
        arities[name] = rel.arity
    return AnnotatedDatabase(semiring, tables, arities)


_KIND_OF = {
    "Count": Kind.COUNTING,
    "Sum": Kind.NUMERIC,
    "Min": Kind.MIN_TROPICAL,
    "Max": Kind.MAX_TROPICAL,
    "CountD": Kind.SET,
    "Avg": Kind.AVG,
}


def carrier_atom(q: Query, var: str) -> int:
    """The atom with the fewest variables containing ``var`` (ties: body order)."""
    best = None
    for i, atom in enumerate(q.body):
        if var in atom.vars and (best is None or len(atom.vars) < len(q.body[best].vars)):
            best = i
    if best is None:
        raise QuerySemanticError(f"aggregate argument {var} occurs in no atom")
    return best


def translate_acq(q: Query, domain: Sequence | None = None):
    """Turn an aggregate query into ``(q_star, semiring, rule)``.

    The rule designates the carrier atom whose facts are annotated with the
    aggregated value; all other facts get the semiring one.
    """
    aggs = q.aggregates
    if len(aggs) != 1:
        raise QuerySemanticError("translation expects exactly one aggregate")
    agg = aggs[0]
    kind = _KIND_OF[agg.func]
    if kind is Kind.SET and domain is None:
        raise MissingDomain("CountD needs a declared domain for the set semiring")
    semiring = instantiate(kind, domain)
    head = tuple(Star() if isinstance(e, Agg) else e for e in q.head)
    q_star = Query(head, q.body, q.name)
    if agg.func == "Count":
        return q_star, semiring, AnnotationRule("Count")
    atom = carrier_atom(q, agg.arg)
    carrier = q.body[atom]
    column = carrier.terms.index(agg.arg)
    relation = carrier.relation
    if q.relations().count(relation) > 1:
        # the other occurrences must keep the annotation one
        relation = fresh_relation(q.relations(), f"{relation}_", numbered=True)
        body = list(q_star.body)
        body[atom] = Atom(relation, carrier.terms)
        q_star = q_star.with_body(body)
    return q_star, semiring, AnnotationRule(agg.func, atom, relation, column, carrier.relation)


def split_aggregates(q: Query) -> list:
    """One single-aggregate query per aggregate of ``q`` (same grouping)."""
    out = []
    for a in q.aggregates:
        head = tuple(e for e in q.head if isinstance(e, Var)) + (a,)
        out.append(Query(head, q.body, q.name))
    return out


def finalize(func: str | None, semiring: Semiring, value):
    """Map a semiring value to the user-facing aggregate value."""
    if func == "CountD":
        return bin(value).count("1")
    if func == "Avg":
        return semiring.ratio(value)
    return value


def is_set_semiring(s: Semiring) -> bool:
    return isinstance(s, SetSemiring)
