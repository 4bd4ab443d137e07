"""Query/database transformations that feed the access structures.

Every function returns fresh objects; inputs are never mutated.  Most accept
an optional ``trace`` list that collects :class:`RewriteStep` records so the
planner can report the chain it executed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from operator import itemgetter

from .errors import (CyclicQuery, NotIdempotent, NotLocallyAnnotated,
                     QuerySemanticError, ZBlockViolation)
from .hypergraph import (Tree, anchored_ext_tree, free_connex_tree,
                         gyo_acyclic, hypergraph_of)
from .model import (AnnotatedDatabase, Atom, Query, Star, Var, fresh_relation,
                    fresh_var, pretty_print)


@dataclass(frozen=True)
class RewriteStep:
    tag: str
    detail: str
    query: str

    def __str__(self) -> str:
        label = f"{self.tag}({self.detail})" if self.detail else self.tag
        return f"{label}: {self.query}"


def _record(trace, tag, detail, q):
    if trace is not None:
        trace.append(RewriteStep(tag, detail, pretty_print(q)))


def tuple_getter(positions):
    """A function mapping a fact to the tuple of its values at ``positions``."""
    positions = tuple(positions)
    if not positions:
        return lambda f: ()
    if len(positions) == 1:
        k = positions[0]
        return lambda f: (f[k],)
    return itemgetter(*positions)


def is_normalized(q: Query) -> bool:
    return q.is_self_join_free() and all(len(set(a.terms)) == len(a.terms) for a in q.body)


def make_self_join_free(q: Query, adb: AnnotatedDatabase, trace=None):
    """Give every atom its own relation with distinct variables.

    Relations used by several atoms are copied (annotations included); atoms
    repeating a variable keep only consistent facts, projected on the first
    occurrences.  Relations not mentioned by ``q`` are dropped.
    """
    uses = Counter(q.relations())
    used_names = set(adb.relations) | set(uses)
    body, rels, arities = [], {}, {}
    changed = False
    for atom in q.body:
        distinct = tuple(dict.fromkeys(atom.terms))
        source = adb.relations.get(atom.relation, {})
        if uses[atom.relation] == 1 and len(distinct) == len(atom.terms):
            body.append(atom)
            rels[atom.relation] = source
            arities[atom.relation] = adb.arities.get(atom.relation, len(atom.terms))
            continue
        changed = True
        name = fresh_relation(used_names, f"{atom.relation}_", numbered=True)
        used_names.add(name)
        first = [atom.terms.index(v) for v in distinct]
        checks = [(i, atom.terms.index(t)) for i, t in enumerate(atom.terms)
                  if atom.terms.index(t) != i]
        get = tuple_getter(first)
        table = {}
        for fact, ann in source.items():
            if all(fact[i] == fact[j] for i, j in checks):
                table[get(fact)] = ann
        body.append(Atom(name, distinct))
        rels[name] = table
        arities[name] = len(distinct)
    q2 = q.with_body(body)
    if changed:
        _record(trace, "SelfJoinSplit", "", q2)
    return q2, adb.with_relations(rels, arities)


def _semijoin(target: Atom, table: dict, source: Atom, stable: dict) -> dict:
    shared = [v for v in target.terms if v in source.vars]
    if not shared:
        return table if stable else {}
    tg = tuple_getter([target.terms.index(v) for v in shared])
    sg = tuple_getter([source.terms.index(v) for v in shared])
    keys = set(map(sg, stable))
    return {f: a for f, a in table.items() if tg(f) in keys}


def full_reduce(q: Query, adb: AnnotatedDatabase, trace=None) -> AnnotatedDatabase:
    """Yannakakis semi-join reduction along a join tree of ``q``.

    ``q`` must be acyclic with one relation per atom and distinct variables
    per atom (see :func:`make_self_join_free`).
    """
    if not is_normalized(q):
        raise QuerySemanticError("full_reduce expects a normalized query")
    tree = gyo_acyclic(hypergraph_of(q))
    if not isinstance(tree, Tree):
        raise CyclicQuery(tree)
    tables = {a.relation: adb.relations.get(a.relation, {}) for a in q.body}
    if not q.body:
        return adb
    order, parent = [0], {0: None}
    for u in order:
        for w in sorted(tree.adj[u]):
            if w not in parent:
                parent[w] = u
                order.append(w)
    body = q.body
    for c in reversed(order[1:]):
        p = parent[c]
        tables[body[p].relation] = _semijoin(body[p], tables[body[p].relation],
                                             body[c], tables[body[c].relation])
    for c in order[1:]:
        p = parent[c]
        tables[body[c].relation] = _semijoin(body[c], tables[body[c].relation],
                                             body[p], tables[body[p].relation])
    rels = dict(adb.relations)
    rels.update(tables)
    _record(trace, "FullReduce", "", q)
    return adb.with_relations(rels, adb.arities)


# ---------------------------------------------------------------------------
# existential elimination
# ---------------------------------------------------------------------------


def _eliminate(q: Query, adb: AnnotatedDatabase, tree: Tree, trace=None):
    """Eliminate every non-free node of ``tree`` into its neighbour.

    Returns ``(q_full, adb', names)`` where ``names`` maps surviving node ids
    to relation names in ``q_full``.
    """
    s = adb.semiring
    order_vars = q.variables
    used = set(adb.relations) | set(q.relations())
    names, terms, tables = {}, {}, {}
    for nid, node in enumerate(tree.nodes):
        label = tree.labels[nid]
        if isinstance(label, int):
            atom = q.body[label]
            names[nid] = atom.relation
            terms[nid] = atom.terms
            tables[nid] = adb.relations.get(atom.relation, {})
            continue
        names[nid] = fresh_relation(used, "E", numbered=True)
        used.add(names[nid])
        terms[nid] = tuple(v for v in order_vars if v in node)
        holders = [i for i, a in enumerate(q.body) if node <= a.vars]
        src = min(holders, key=lambda i: len(adb.relations.get(q.body[i].relation, {})))
        atom = q.body[src]
        get = tuple_getter([atom.terms.index(v) for v in terms[nid]])
        tables[nid] = dict.fromkeys(map(get, adb.relations.get(atom.relation, {})), s.one)

    adj = {k: set(v) for k, v in tree.adj.items()}
    free = tree.free
    alive = set(range(len(tree.nodes)))

    def snapshot():
        body = [Atom(names[n], terms[n]) for n in sorted(alive)]
        return q.with_body(body)

    while True:
        leaves = sorted(n for n in alive if n not in free and len(adj[n]) <= 1)
        if not leaves:
            break
        v = leaves[0]
        (u,) = adj[v]
        shared = [x for x in terms[u] if x in tree.nodes[v]]
        vget = tuple_getter([terms[v].index(x) for x in shared])
        uget = tuple_getter([terms[u].index(x) for x in shared])
        summed = {}
        plus = s.plus
        for fact, ann in tables[v].items():
            key = vget(fact)
            prev = summed.get(key)
            summed[key] = ann if prev is None else plus(prev, ann)
        times = s.times
        merged = {}
        for fact, ann in tables[u].items():
            extra = summed.get(uget(fact))
            if extra is not None:
                merged[fact] = times(ann, extra)
        tables[u] = merged
        adj[u].discard(v)
        del adj[v]
        alive.discard(v)
        _record(trace, "EliminateLeaf", names[v], snapshot())

    keep = sorted(alive)
    body = [Atom(names[n], terms[n]) for n in keep]
    rels = {names[n]: tables[n] for n in keep}
    arities = {names[n]: len(terms[n]) for n in keep}
    return q.with_body(body), adb.with_relations(rels, arities), {n: names[n] for n in keep}


def eliminate_existentials(q: Query, adb: AnnotatedDatabase, tree: Tree | None = None, trace=None):
    """Reduce a free-connex query to a full acyclic one with equal answers and annotations."""
    q, adb = make_self_join_free(q, adb, trace)
    if q.is_full and tree is None:
        return q, adb
    if tree is None:
        tree = free_connex_tree(q)
    q_full, adb2, _ = _eliminate(q, adb, tree, trace)
    return q_full, adb2


def _check_local(adb: AnnotatedDatabase, relation: str) -> None:
    if not adb.locally_annotated or adb.annotated_relation not in (None, relation):
        raise NotLocallyAnnotated(
            f"database is not locally annotated at {relation}"
            f" (non-one annotations in {adb.annotated_relation or 'several relations'})")


def idempotent_eliminate(q: Query, relation: str, adb: AnnotatedDatabase, trace=None):
    """Eliminate existentials keeping the database locally annotated.

    Returns ``(q_full, relation', adb')`` where only ``relation'`` carries
    non-one annotations.
    """
    if not adb.semiring.plus_idempotent:
        raise NotIdempotent(f"{adb.semiring.name} addition is not idempotent")
    if not q.is_self_join_free():
        raise QuerySemanticError("idempotent elimination needs a self-join-free query")
    _check_local(adb, relation)
    atom = q.atom_of(relation)
    q, adb = make_self_join_free(q, adb, trace)
    relation = q.body[atom].relation
    if q.is_full:
        return q, relation, adb
    tree = free_connex_tree(q)
    node = tree.labels.index(atom)
    if node in tree.free:
        root = node
    else:
        anchored = anchored_ext_tree(q, atom, tree)
        tree, root = anchored.tree, anchored.root
    q_full, adb2, names = _eliminate(q, adb, tree, trace)
    return q_full, names[root], adb2


def project_private(q: Query, relation: str, adb: AnnotatedDatabase, trace=None):
    """Sum out existential variables that occur only in ``relation``'s atom.

    Valid in any semiring since the summed variables are private to one atom.
    """
    idx = q.atom_of(relation)
    atom = q.body[idx]
    others = set().union(*(a.vars for i, a in enumerate(q.body) if i != idx))
    drop = {v for v in atom.terms if v in q.existential and v not in others}
    if not drop:
        return q, adb
    keep = tuple(v for v in atom.terms if v not in drop)
    get = tuple_getter([atom.terms.index(v) for v in keep])
    s = adb.semiring
    table = {}
    for fact, ann in adb.relations[relation].items():
        key = get(fact)
        prev = table.get(key)
        table[key] = ann if prev is None else s.plus(prev, ann)
    body = list(q.body)
    body[idx] = Atom(relation, keep)
    rels = dict(adb.relations)
    rels[relation] = table
    arities = dict(adb.arities)
    arities[relation] = len(keep)
    q2 = q.with_body(body)
    _record(trace, "EliminateLeaf", f"{relation}:private", q2)
    return q2, adb.with_relations(rels, arities)


# ---------------------------------------------------------------------------
# annotation as a variable
# ---------------------------------------------------------------------------


def deannotate(q: Query, relation: str, y: str | None = None, trace=None) -> Query:
    """Replace the computed value by a variable functionally determined by ``relation``."""
    atom = q.body[q.atom_of(relation)]
    y = y or fresh_var(q)
    head = [Var(y) if isinstance(e, Star) else e for e in q.head]
    if atom.vars <= set(q.prefix_vars):
        head.remove(Var(y))
        last = max((i for i, e in enumerate(head) if isinstance(e, Var) and e.name in atom.vars),
                   default=-1)
        head.insert(last + 1, Var(y))
    body = [Atom(a.relation, a.terms + (y,)) if atom.vars <= a.vars else a for a in q.body]
    out = Query(tuple(head), tuple(body), q.name)
    _record(trace, "Deannotate", relation, out)
    return out


def extend_with_annotation_var(q: Query, relation: str, adb: AnnotatedDatabase,
                               keep_annotations: bool = False, value_map=None, trace=None):
    """Materialize the annotation of ``relation`` as an extra column.

    Each atom whose variables include those of ``relation`` gains the
    annotation of its unique agreeing ``relation`` fact; facts with no such
    fact are dropped.  ``value_map`` optionally transforms the stored column
    value (the planner stores order keys there).
    """
    _check_local(adb, relation)
    q_r = deannotate(q, relation)
    r_atom = q.body[q.atom_of(relation)]
    r_table = adb.relations[relation]
    if value_map is None:
        lookup = {f: a for f, a in r_table.items()}
    else:
        lookup = {f: value_map(a) for f, a in r_table.items()}
    one = adb.semiring.one
    rels, arities = dict(adb.relations), dict(adb.arities)
    for atom in q.body:
        if not r_atom.vars <= atom.vars:
            continue
        get = tuple_getter([atom.terms.index(v) for v in r_atom.terms])
        table = {}
        for fact, ann in adb.relations[atom.relation].items():
            col = lookup.get(get(fact), _MISSING)
            if col is not _MISSING:
                table[fact + (col,)] = ann if keep_annotations else one
        rels[atom.relation] = table
        arities[atom.relation] = len(atom.terms) + 1
    if not keep_annotations:
        rels = {name: dict.fromkeys(t, one) for name, t in rels.items()}
    _record(trace, "AnnotationToColumn", relation, q_r)
    return q_r, adb.with_relations(rels, arities)


_MISSING = object()


@dataclass(frozen=True)
class YExtension:
    y: str
    before: tuple  # atom indices with variables inside the prefix
    after: tuple
    phi: int


def z_block_ok(q: Query) -> bool:
    z = set(q.suffix_vars)
    return all(not (a.vars & z) or z <= a.vars for a in q.body)


def extend_with_y(q: Query, adb: AnnotatedDatabase, value_map=None, trace=None):
    """Move the computed value behind an explicit ``y`` column.

    Returns ``(q_plus, adb', info)``; ``q_plus`` has head ``(x, y, z, *)``
    and for every answer ``y`` times the product of the prefix atoms'
    annotations equals the answer's annotation.  With ``value_map`` the
    stored ``y`` is ``value_map`` of that product.
    """
    x, z = q.prefix_vars, q.suffix_vars
    if q.star_position is None or not z:
        raise QuerySemanticError("extend_with_y needs a computed value before some variable")
    if not z_block_ok(q):
        raise ZBlockViolation(f"an atom meets only part of the suffix {z}")
    xs = set(x)
    before = tuple(i for i, a in enumerate(q.body) if a.vars <= xs)
    after = tuple(i for i in range(len(q.body)) if i not in before)
    after_vars = set().union(*(q.body[i].vars for i in after))
    phi = next((i for i in after if after_vars <= q.body[i].vars), None)
    if phi is None:
        raise ZBlockViolation("no atom covers all variables after the prefix")
    y = fresh_var(q)
    s = adb.semiring
    p_atom = q.body[phi]
    lookups = []
    for i in after:
        a = q.body[i]
        lookups.append((tuple_getter([p_atom.terms.index(v) for v in a.terms]),
                        adb.relations[a.relation]))
    table = {}
    for fact, ann in adb.relations[p_atom.relation].items():
        acc = s.one
        for get, other in lookups:
            val = other.get(get(fact), _MISSING)
            if val is _MISSING:
                break
            acc = s.times(acc, val)
        else:
            table[fact + (acc if value_map is None else value_map(acc),)] = ann
    body = list(q.body)
    body[phi] = Atom(p_atom.relation, p_atom.terms + (y,))
    head = tuple(Var(v) for v in x) + (Var(y),) + tuple(Var(v) for v in z) + (Star(),)
    q_plus = Query(head, tuple(body), q.name)
    rels, arities = dict(adb.relations), dict(adb.arities)
    rels[p_atom.relation] = table
    arities[p_atom.relation] = len(p_atom.terms) + 1
    _record(trace, "ExtendY", p_atom.relation, q_plus)
    return q_plus, adb.with_relations(rels, arities), YExtension(y, before, after, phi)
