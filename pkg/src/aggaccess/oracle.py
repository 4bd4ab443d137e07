"""Brute-force reference evaluation.

Deliberately naive: a backtracking join over the raw fact lists, with no
indices and no code shared with the access structures.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import InstanceTooLarge, QuerySemanticError
from .model import Agg, AnnotatedDatabase, Query, Star, Var, const_key
from .semiring import normalize

DEFAULT_LIMIT = 10 ** 6


def homomorphisms(q: Query, adb: AnnotatedDatabase, limit: int = DEFAULT_LIMIT):
    """Yield ``(assignment, annotations)`` for every homomorphism of the body."""
    body = q.body
    tables = [list(adb.relations.get(a.relation, {}).items()) for a in body]
    budget = [limit]

    def extend(k, assignment, anns):
        if k == len(body):
            yield dict(assignment), list(anns)
            return
        terms = body[k].terms
        for fact, ann in tables[k]:
            budget[0] -= 1
            if budget[0] < 0:
                raise InstanceTooLarge(f"more than {limit} candidates")
            added = []
            ok = True
            for t, c in zip(terms, fact):
                bound = assignment.get(t, _UNSET)
                if bound is _UNSET:
                    assignment[t] = c
                    added.append(t)
                elif bound != c:
                    ok = False
                    break
            if ok:
                anns.append(ann)
                yield from extend(k + 1, assignment, anns)
                anns.pop()
            for t in added:
                del assignment[t]

    yield from extend(0, {}, [])


_UNSET = object()


def _aggregate(func: str, bag: list):
    if func == "Count":
        return len(bag)
    if func == "CountD":
        return len(set(bag))
    for w in bag:
        if isinstance(w, str):
            raise QuerySemanticError(f"{func} over non-numeric value {w!r}")
    if func == "Sum":
        return normalize(sum(bag, Fraction(0)))
    if func == "Min":
        return min(bag)
    if func == "Max":
        return max(bag)
    if func == "Avg":
        return normalize(Fraction(sum(bag, Fraction(0))) / len(bag))
    raise QuerySemanticError(f"unknown aggregate {func}")


def brute_force(q: Query, adb: AnnotatedDatabase, limit: int = DEFAULT_LIMIT,
                order: str = "lex") -> list:
    """All answers of ``q`` sorted by the head order.

    A starred head gets the semiring sum over homomorphisms of the product of
    their facts' annotations; aggregates are computed directly from the bag of
    aggregated values.  ``order="count-product"`` sorts answers of
    ``Q(Count(), x, y)`` by count, then by the occurrence count of ``x``.
    """
    s = adb.semiring
    head = q.head
    var_names = q.head_vars
    groups = {}
    for h, anns in homomorphisms(q, adb, limit):
        key = tuple(h[v] for v in var_names)
        acc = groups.get(key)
        if any(isinstance(e, Star) for e in head):
            prod = s.one
            for a in anns:
                prod = s.times(prod, a)
            groups[key] = prod if acc is None else s.plus(acc, prod)
        else:
            if acc is None:
                acc = groups[key] = []
            acc.append(h)

    answers = []
    for key, acc in groups.items():
        vals = iter(key)
        row = []
        for e in head:
            if isinstance(e, Var):
                row.append(next(vals))
            elif isinstance(e, Star):
                row.append(acc)
            else:
                bag = [h[e.arg] for h in acc] if e.arg else acc
                row.append(_aggregate(e.func, bag))
        answers.append(tuple(row))

    if order == "count-product":
        return sorted(answers, key=_count_product_key(q, adb))

    def sort_key(row):
        out = []
        for e, v in zip(head, row):
            if isinstance(e, Var):
                out.append(const_key(v))
            elif isinstance(e, Star):
                out.append(s.sort_key(v))
            else:
                out.append(v)
        return tuple(out)

    return sorted(answers, key=sort_key)


def _count_product_key(q: Query, adb: AnnotatedDatabase):
    xv, yv = q.head_vars
    counts = {}
    for var in (xv,):
        atom = next(a for a in q.body if var in a.terms)
        k = atom.terms.index(var)
        for f in adb.relations.get(atom.relation, {}):
            counts[f[k]] = counts.get(f[k], 0) + 1
    pos = [i for i, e in enumerate(q.head) if isinstance(e, Var)]
    cpos = next(i for i, e in enumerate(q.head) if isinstance(e, Agg))

    def key(row):
        x, y = row[pos[0]], row[pos[1]]
        return (row[cpos], counts[x], const_key(x), const_key(y))

    return key
