"""Direct-access structures.

:func:`build_lex` handles full acyclic queries whose head order has no
disruptive trio.  Position ``i`` of the order gets a *layer* over the
variable ``v_i`` together with its neighbours that come earlier
(``P_i``).  The absence of disruptive trios makes ``P_i + v_i`` a clique,
so some atom covers it; the layer relation is that atom's projection.  The
parent of layer ``i`` is the layer of the last variable of ``P_i``, which
contains all of ``P_i``, so the layers form a join tree in which every
parent precedes its children.

Each layer tuple carries a weight (number of completions of its subtree)
and the product of the annotations of the atoms assigned to it; an atom is
assigned to the layer of its last variable.  Buckets group a layer's tuples
by their ``P_i`` values and keep prefix sums of weights, so the ``i``-th
answer is decoded one position at a time with a binary search per layer.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from functools import total_ordering
from itertools import accumulate
from operator import itemgetter

from .errors import (CyclicQuery, DisruptiveTrio, IndexOutOfRange,
                     QuerySemanticError, WeightOverflow, ZBlockViolation)
from .hypergraph import Tree, find_disruptive_trio, gyo_acyclic, hypergraph_of
from .model import AnnotatedDatabase, Agg, Query, Star, Var, const_key
from .rewrite import (extend_with_y, full_reduce, is_normalized,
                      make_self_join_free, tuple_getter, z_block_ok)
from .semiring import Direction

MAX_WEIGHT = 2 ** 63 - 1


@total_ordering
class Desc:
    """Wraps a value so that it sorts in reverse."""

    __slots__ = ("v",)

    def __init__(self, v):
        self.v = v

    def __lt__(self, other):
        return other.v < self.v

    def __eq__(self, other):
        return isinstance(other, Desc) and self.v == other.v

    def __hash__(self):
        return hash(("desc", self.v))

    def __repr__(self):
        return f"Desc({self.v!r})"


class _Bucket:
    __slots__ = ("values", "starts", "weights", "annots", "total")


class _Layer:
    __slots__ = ("var", "prev", "parent", "buckets", "size")


class LexIndex:
    """Immutable lexicographic direct-access index; see :func:`build_lex`."""

    def __init__(self, q: Query, semiring, layers: list, total: int, base_annot, star: bool):
        self.query = q
        self.semiring = semiring
        self.layers = layers
        self.total = total
        self.base_annot = base_annot
        self.star = star

    def count(self) -> int:
        return self.total

    def access_raw(self, i: int):
        """Return ``(values by position, annotation)`` of answer ``i`` or ``None``."""
        if i < 1:
            raise IndexOutOfRange(f"answer indices start at 1, got {i}")
        if i > self.total:
            return None
        k = i - 1
        remaining = self.total
        values = [None] * len(self.layers)
        times = self.semiring.times
        annot = self.base_annot
        for pos, layer in enumerate(self.layers):
            b = layer.buckets[tuple([values[j] for j in layer.prev])]
            scale = remaining // b.total
            j = bisect_right(b.starts, k // scale) - 1
            values[pos] = b.values[j]
            k -= scale * b.starts[j]
            remaining = scale * b.weights[j]
            annot = times(annot, b.annots[j])
        return values, annot

    def access(self, i: int):
        """The ``i``-th answer (1-based) as a tuple, annotation last if starred."""
        raw = self.access_raw(i)
        if raw is None:
            return None
        values, annot = raw
        return tuple(values) + (annot,) if self.star else tuple(values)

    def buckets(self):
        for layer in self.layers:
            yield from layer.buckets.values()

    def check_invariants(self) -> bool:
        for b in self.buckets():
            if any(w < 1 for w in b.weights):
                return False
            if any(x >= y for x, y in zip(b.starts, b.starts[1:])):
                return False
            if b.starts[-1] + b.weights[-1] != b.total or sum(b.weights) != b.total:
                return False
        if self.total == 0:
            return True
        prod = 1
        for layer in self.layers:
            if not layer.prev:
                prod *= layer.buckets[()].total
        return prod == self.total

    def stats(self) -> dict:
        depth = {}
        for pos, layer in enumerate(self.layers):
            depth[pos] = 1 if layer.parent is None else depth[layer.parent] + 1
        return {
            "total": self.total,
            "sizes": [layer.size for layer in self.layers],
            "buckets": [len(layer.buckets) for layer in self.layers],
            "depth": max(depth.values(), default=0),
        }


def _map_columns(q: Query, adb: AnnotatedDatabase, keys: dict) -> dict:
    rels = dict(adb.relations)
    for atom in q.body:
        cols = [(i, keys[t]) for i, t in enumerate(atom.terms) if t in keys]
        if not cols:
            continue
        table = {}
        for fact, ann in rels[atom.relation].items():
            f = list(fact)
            for i, fn in cols:
                f[i] = fn(f[i])
            table[tuple(f)] = ann
        if len(table) != len(rels[atom.relation]):
            raise QuerySemanticError("column key map merged distinct facts")
        rels[atom.relation] = table
    return rels


def build_lex(q: Query, adb: AnnotatedDatabase, keys: dict | None = None,
              bigint: bool = False) -> LexIndex:
    """Build a direct-access index for a full acyclic query without disruptive trios.

    The head may end with ``*`` (the answer annotation is then appended).
    ``keys`` maps variables to functions applied to their column values
    before building; those columns are then ordered by the mapped values
    themselves, other variables by the global constant order.

    Dangling facts need not be removed beforehand: every atom is checked in
    the layer it is assigned to and zero-weight tuples are dropped.
    """
    pos = q.star_position
    if pos is not None and (pos != len(q.head) - 1 or not isinstance(q.head[pos], Star)):
        raise QuerySemanticError("build_lex needs the computed value last")
    if not is_normalized(q):
        q, adb = make_self_join_free(q, adb)
    order = q.head_vars
    if set(q.variables) - set(order):
        raise QuerySemanticError("build_lex needs a full query")
    tree = gyo_acyclic(hypergraph_of(q))
    if not isinstance(tree, Tree):
        raise CyclicQuery(tree)
    trio = find_disruptive_trio(q)
    if trio is not None:
        raise DisruptiveTrio(trio)
    keys = keys or {}
    rels = _map_columns(q, adb, keys) if keys else adb.relations
    s = adb.semiring
    times = s.times

    where = {v: i for i, v in enumerate(order)}
    nb = {v: set() for v in order}
    for a in q.body:
        for v in a.terms:
            nb[v].update(a.terms)
    base_annot = s.one
    empty = False
    assigned = [[] for _ in order]
    for a in q.body:
        if not a.terms:
            table = rels.get(a.relation, {})
            if () in table:
                base_annot = times(base_annot, table[()])
            else:
                empty = True
            continue
        assigned[max(where[v] for v in a.terms)].append(a)

    layers, lvars = [], []
    for i, v in enumerate(order):
        prev = tuple(j for j in range(i) if order[j] in nb[v])
        lv = tuple(order[j] for j in prev) + (v,)
        cover = next((a for a in q.body if set(lv) <= a.vars), None)
        if cover is None:
            raise DisruptiveTrio(find_disruptive_trio(q))
        layer = _Layer()
        layer.var = v
        layer.prev = prev
        layer.parent = prev[-1] if prev else None
        layers.append((layer, cover))
        lvars.append(lv)

    children = [[] for _ in order]
    for i, (layer, _) in enumerate(layers):
        if layer.parent is not None:
            p = layer.parent
            get = tuple_getter([lvars[p].index(order[j]) for j in layer.prev])
            children[p].append((i, get))

    totals = [None] * len(order)
    for i in range(len(order) - 1, -1, -1):
        layer, cover = layers[i]
        lv = lvars[i]
        proj = tuple_getter([cover.terms.index(v) for v in lv])
        tuples = set(map(proj, rels.get(cover.relation, {})))
        checks = [(tuple_getter([lv.index(t) for t in a.terms]), rels.get(a.relation, {}))
                  for a in assigned[i]]
        kids = [(totals[c], get) for c, get in children[i]]
        groups = {}
        for t in tuples:
            w = 1
            for tot, get in kids:
                w *= tot.get(get(t), 0)
                if not w:
                    break
            if not w:
                continue
            ann = s.one
            for get, table in checks:
                val = table.get(get(t), _MISSING)
                if val is _MISSING:
                    break
                ann = times(ann, val)
            else:
                groups.setdefault(t[:-1], []).append((t[-1], w, ann))
        sort_key = itemgetter(0) if order[i] in keys else (lambda it: const_key(it[0]))
        buckets = {}
        tot = {}
        size = 0
        for p, items in groups.items():
            items.sort(key=sort_key)
            b = _Bucket()
            b.values = [it[0] for it in items]
            b.weights = [it[1] for it in items]
            b.annots = [it[2] for it in items]
            b.starts = [0] + list(accumulate(b.weights))[:-1]
            b.total = b.starts[-1] + b.weights[-1]
            if not bigint and b.total > MAX_WEIGHT:
                raise WeightOverflow(f"bucket weight {b.total} exceeds 64-bit range")
            buckets[p] = b
            tot[p] = b.total
            size += len(items)
        layer.buckets = buckets
        layer.size = size
        totals[i] = tot

    total = 0 if empty else 1
    for i, (layer, _) in enumerate(layers):
        if layer.parent is None:
            total *= totals[i].get((), 0)
    if not bigint and total > MAX_WEIGHT:
        raise WeightOverflow(f"answer count {total} exceeds 64-bit range; use bigint mode")
    star = pos is not None
    return LexIndex(q, s, [l for l, _ in layers], total, base_annot, star)


_MISSING = object()


# ---------------------------------------------------------------------------
# interior computed value
# ---------------------------------------------------------------------------


class MonotonePair:
    """Forward/backward structures for a computed value between head variables.

    The prefix atoms' annotation ``c`` of an answer decides which structure
    serves it: ``x -> c * x`` non-decreasing means the forward (ascending
    ``y``) one, non-increasing the backward one.  When ``c`` is the semiring
    zero the map is constant, so the group is ordered by the suffix alone and
    a third structure ordered by ``(x, z)`` answers it.
    """

    def __init__(self, q: Query, adb: AnnotatedDatabase, value_key=None, bigint: bool = False):
        s = adb.semiring
        s.monotone_direction(s.one)  # raises NotMonotone early
        if not z_block_ok(q):
            raise ZBlockViolation(f"an atom meets only part of {q.suffix_vars}")
        if not is_normalized(q):
            q, adb = make_self_join_free(q, adb)
        value_key = value_key or s.sort_key
        self.query = q
        self.semiring = s
        adb = full_reduce(q, adb)
        q_plus, adb_plus, info = extend_with_y(q, adb)
        self.info = info
        y = info.y
        self.forward = build_lex(q_plus, adb_plus, {y: value_key}, bigint)
        self.backward = build_lex(q_plus, adb_plus, {y: lambda v: Desc(value_key(v))}, bigint)
        flat_head = tuple(Var(v) for v in q.prefix_vars + q.suffix_vars) + (Star(),)
        self.flat = build_lex(q.with_head(flat_head), adb, None, bigint)
        self.x = q.prefix_vars
        self.z = q.suffix_vars
        self.before = []
        for i in info.before:
            a = q.body[i]
            self.before.append((tuple_getter([self.x.index(v) for v in a.terms]),
                                adb.relations[a.relation]))

    def count(self) -> int:
        return self.forward.count()

    def prefix_annotation(self, xvals):
        s = self.semiring
        c = s.one
        for get, table in self.before:
            c = s.times(c, table[get(xvals)])
        return c

    def direction_at(self, i: int):
        raw = self.forward.access_raw(i)
        if raw is None:
            return None
        c = self.prefix_annotation(tuple(raw[0][:len(self.x)]))
        if c == self.semiring.zero:
            return "flat"
        return self.semiring.monotone_direction(c)

    def access(self, i: int):
        """Answer ``i`` in head order ``(x, value, z)``."""
        raw = self.forward.access_raw(i)
        if raw is None:
            return None
        nx = len(self.x)
        c = self.prefix_annotation(tuple(raw[0][:nx]))
        if c == self.semiring.zero:
            values, annot = self.flat.access_raw(i)
            return tuple(values[:nx]) + (annot,) + tuple(values[nx:])
        if self.semiring.monotone_direction(c) is Direction.NON_INCREASING:
            raw = self.backward.access_raw(i)
        values, annot = raw
        return tuple(values[:nx]) + (annot,) + tuple(values[nx + 1:])


def build_interior(q: Query, adb: AnnotatedDatabase, value_key=None, bigint: bool = False) -> MonotonePair:
    return MonotonePair(q, adb, value_key, bigint)


# ---------------------------------------------------------------------------
# Count() over a product of two binary relations
# ---------------------------------------------------------------------------


def count_product_shape(q: Query):
    """Match ``Q(Count(), x, y) :- R(x, w), S(y, z)``; return the atom indices or None."""
    if len(q.head) != 3 or len(q.body) != 2:
        return None
    agg, a, b = q.head
    if not (isinstance(agg, Agg) and agg.func == "Count" and isinstance(a, Var) and isinstance(b, Var)):
        return None
    r, s = q.body
    if len(r.terms) != 2 or len(s.terms) != 2 or len(set(r.terms) | set(s.terms)) != 4:
        return None
    if a.name in r.vars and b.name in s.vars:
        return 0, 1
    if a.name in s.vars and b.name in r.vars:
        return 1, 0
    return None


@dataclass
class CountBucket:
    c: int
    c2: int
    xs: list
    ys: list

    @property
    def size(self) -> int:
        return len(self.xs) * len(self.ys)

    @property
    def product(self) -> int:
        return self.c * self.c2


class CountProduct:
    """Answers of ``Q(Count(), x, y) :- R(x, w), S(y, z)`` ordered by count.

    Buckets pair an occurrence count ``c`` of ``x`` values with a count
    ``c2`` of ``y`` values; they are sorted by ``c * c2`` and then by ``c``,
    and each bucket lists its ``(x, y)`` pairs lexicographically.
    """

    def __init__(self, left: list, right: list):
        self.left_counts = Counter(left)
        self.right_counts = Counter(right)
        self.x_by_count = self._group(self.left_counts)
        self.y_by_count = self._group(self.right_counts)
        buckets = [CountBucket(c, c2, xs, ys)
                   for c, xs in self.x_by_count.items()
                   for c2, ys in self.y_by_count.items()]
        buckets.sort(key=lambda b: (b.product, b.c))
        self.buckets = buckets
        sizes = [b.size for b in buckets]
        self.starts = [0] + list(accumulate(sizes))[:-1] if sizes else []
        self.total = sum(sizes)

    @staticmethod
    def _group(counts: Counter) -> dict:
        out = {}
        for v, c in counts.items():
            out.setdefault(c, []).append(v)
        for vs in out.values():
            vs.sort(key=const_key)
        return dict(sorted(out.items()))

    def count(self) -> int:
        return self.total

    def access(self, d: int):
        """Answer ``d`` (1-based) as ``(count, x, y)``."""
        if d < 1:
            raise IndexOutOfRange(f"answer indices start at 1, got {d}")
        if d > self.total:
            return None
        j = bisect_right(self.starts, d - 1) - 1
        b = self.buckets[j]
        off = d - 1 - self.starts[j]
        return (b.product, b.xs[off // len(b.ys)], b.ys[off % len(b.ys)])


def build_count_product(q: Query, adb: AnnotatedDatabase) -> CountProduct:
    shape = count_product_shape(q)
    if shape is None:
        raise QuerySemanticError("query is not of the shape Q(Count(), x, y) :- R(x, w), S(y, z)")
    li, ri = shape
    head_vars = q.head_vars
    cols = []
    for idx, var in ((li, head_vars[0]), (ri, head_vars[1])):
        atom = q.body[idx]
        k = atom.terms.index(var)
        cols.append([f[k] for f in adb.relations.get(atom.relation, {})])
    return CountProduct(cols[0], cols[1])
