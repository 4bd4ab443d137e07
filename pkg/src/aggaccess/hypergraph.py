"""Acyclicity, join trees, ext-connex trees and disruptive trios."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import NotFreeConnex
from .model import Query


@dataclass(frozen=True)
class Hypergraph:
    vertices: frozenset
    edges: tuple

    @classmethod
    def of(cls, edges: Iterable[Iterable]) -> "Hypergraph":
        edges = tuple(frozenset(e) for e in edges)
        return cls(frozenset().union(*edges) if edges else frozenset(), edges)


def hypergraph_of(q: Query) -> Hypergraph:
    return Hypergraph.of(a.terms for a in q.body)


@dataclass
class Tree:
    """A tree over variable sets.

    ``labels[i]`` is the body-atom index a node stands for, or ``None`` for
    extension nodes.  ``free`` is the set of node ids forming the marked
    subtree of an ext-connex tree (``None`` for a plain join tree).
    """

    nodes: list
    labels: list
    adj: dict = field(default_factory=dict)
    free: set | None = None

    def add_node(self, vars_: Iterable, label=None) -> int:
        self.nodes.append(frozenset(vars_))
        self.labels.append(label)
        nid = len(self.nodes) - 1
        self.adj[nid] = set()
        return nid

    def link(self, a: int, b: int) -> None:
        self.adj[a].add(b)
        self.adj[b].add(a)

    def unlink(self, a: int, b: int) -> None:
        self.adj[a].discard(b)
        self.adj[b].discard(a)

    def edges(self) -> list:
        return sorted((a, b) for a in self.adj for b in self.adj[a] if a < b)

    def path(self, src: int, dst: int) -> list:
        prev = {src: None}
        stack = [src]
        while stack:
            u = stack.pop()
            for w in self.adj[u]:
                if w not in prev:
                    prev[w] = u
                    stack.append(w)
        if dst not in prev:
            return []
        out = [dst]
        while out[-1] != src:
            out.append(prev[out[-1]])
        return out[::-1]

    def copy(self) -> "Tree":
        return Tree(list(self.nodes), list(self.labels),
                    {k: set(v) for k, v in self.adj.items()},
                    None if self.free is None else set(self.free))


@dataclass(frozen=True)
class CyclicWitness:
    residue: tuple

    def __str__(self) -> str:
        return "{" + ", ".join("".join(sorted(e)) for e in self.residue) + "}"


@dataclass(frozen=True)
class NotConnex:
    residue: tuple


@dataclass(frozen=True)
class TrioWitness:
    x1: str
    x2: str
    x3: str

    def as_tuple(self) -> tuple:
        return (self.x1, self.x2, self.x3)

    def __str__(self) -> str:
        return f"({self.x1}, {self.x2}, {self.x3})"


# ---------------------------------------------------------------------------
# GYO
# ---------------------------------------------------------------------------


def _gyo(edges: list, keep: frozenset = frozenset()):
    """Run GYO ear removal, never deleting vertices in ``keep``.

    Returns ``(links, alive, current)``: the tree links made while removing
    contained edges, the indices still alive, and the shrunken edge sets.
    """
    cur = [set(e) for e in edges]
    alive = list(range(len(cur)))
    links = []
    changed = True
    while changed:
        changed = False
        # drop an edge contained in another (smallest index first)
        for i in alive:
            for j in alive:
                if i != j and cur[i] <= cur[j]:
                    alive.remove(i)
                    links.append((i, j))
                    changed = True
                    break
            if changed:
                break
        if changed:
            continue
        counts = {}
        for i in alive:
            for v in cur[i]:
                counts[v] = counts.get(v, 0) + 1
        for i in alive:
            lonely = {v for v in cur[i] if counts[v] == 1 and v not in keep}
            if lonely:
                cur[i] -= lonely
                changed = True
    return links, alive, cur


def gyo_acyclic(h: Hypergraph):
    """Return a join tree of ``h`` or a :class:`CyclicWitness`."""
    edges = list(h.edges)
    links, alive, cur = _gyo(edges)
    if len(alive) > 1:
        return CyclicWitness(tuple(frozenset(cur[i]) for i in alive))
    tree = Tree([], [])
    for i, e in enumerate(edges):
        tree.add_node(e, i)
    for a, b in links:
        tree.link(a, b)
    return tree


def is_acyclic(edges: Iterable[Iterable]) -> bool:
    return isinstance(gyo_acyclic(Hypergraph.of(edges)), Tree)


def is_free_connex(q: Query) -> bool:
    edges = [a.terms for a in q.body]
    return is_acyclic(edges) and is_acyclic(edges + [q.free])


def check_running_intersection(tree: Tree) -> bool:
    """Independent validation: ``tree`` is a tree and every variable's nodes are connected."""
    n = len(tree.nodes)
    if n == 0:
        return True
    if len(tree.edges()) != n - 1:
        return False
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for w in tree.adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if len(seen) != n:
        return False
    for v in set().union(*tree.nodes):
        holders = {i for i in range(n) if v in tree.nodes[i]}
        start = next(iter(holders))
        reach = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in tree.adj[u]:
                if w in holders and w not in reach:
                    reach.add(w)
                    stack.append(w)
        if reach != holders:
            return False
    return True


# ---------------------------------------------------------------------------
# ext-connex trees
# ---------------------------------------------------------------------------


def ext_connex_tree(h: Hypergraph, s: Iterable):
    """Build an ext-``s``-connex tree of ``h`` or return :class:`NotConnex`.

    Vertices outside ``s`` are eliminated GYO-style: an edge losing its
    private outside vertices is replaced by a fresh extension node holding
    the remainder, and contained edges hang off their container.  The edges
    that survive mention only ``s`` and are joined by plain GYO; they form
    the marked subtree.
    """
    s = frozenset(s)
    edges = list(h.edges)
    tree = Tree([], [])
    for i, e in enumerate(edges):
        tree.add_node(e, i)
    root = list(range(len(edges)))
    cur = [set(e) for e in edges]
    alive = list(range(len(edges)))

    def outside_left():
        return any(cur[i] - s for i in alive)

    while outside_left():
        progressed = False
        for i in alive:
            for j in alive:
                if i != j and cur[i] <= cur[j]:
                    alive.remove(i)
                    tree.link(root[i], root[j])
                    progressed = True
                    break
            if progressed:
                break
        if progressed:
            continue
        counts = {}
        for i in alive:
            for v in cur[i]:
                counts[v] = counts.get(v, 0) + 1
        for i in alive:
            lonely = {v for v in cur[i] - s if counts[v] == 1}
            if lonely:
                cur[i] -= lonely
                node = tree.add_node(cur[i], None)
                tree.link(node, root[i])
                root[i] = node
                progressed = True
                break
        if not progressed:
            return NotConnex(tuple(frozenset(cur[i]) for i in alive))

    if not alive:
        return NotConnex(())
    rest = [cur[i] for i in alive]
    links, left, residue = _gyo(rest)
    if len(left) > 1:
        return NotConnex(tuple(frozenset(residue[k]) for k in left))
    for a, b in links:
        tree.link(root[alive[a]], root[alive[b]])
    tree.free = {root[i] for i in alive}
    return tree


def free_connex_tree(q: Query) -> Tree:
    t = ext_connex_tree(hypergraph_of(q), q.free)
    if not isinstance(t, Tree):
        raise NotFreeConnex(f"query is not free-connex: {q}")
    return t


def check_ext_tree(tree: Tree, edges: Sequence, s: Iterable) -> bool:
    """Validate running intersection, inclusiveness and the marked subtree."""
    s = frozenset(s)
    if not check_running_intersection(tree):
        return False
    edges = [frozenset(e) for e in edges]
    for node in tree.nodes:
        if not any(node <= e for e in edges):
            return False
    for i, e in enumerate(edges):
        if not any(tree.nodes[k] == e for k in range(len(tree.nodes)) if tree.labels[k] == i):
            return False
    free = tree.free or set()
    if not free:
        return False
    if frozenset().union(*(tree.nodes[k] for k in free)) != s:
        return False
    if any(not tree.nodes[k] <= s for k in free):
        return False
    start = next(iter(free))
    reach, stack = {start}, [start]
    while stack:
        u = stack.pop()
        for w in tree.adj[u]:
            if w in free and w not in reach:
                reach.add(w)
                stack.append(w)
    return reach == free


# ---------------------------------------------------------------------------
# disruptive trios
# ---------------------------------------------------------------------------


def neighbor_sets(edges: Iterable[Iterable]) -> dict:
    nb = {}
    for e in edges:
        e = list(e)
        for v in e:
            nb.setdefault(v, set()).update(e)
    for v in nb:
        nb[v].discard(v)
    return nb


def find_trio(order: Sequence, edges: Iterable[Iterable]) -> TrioWitness | None:
    """First disruptive trio of ``order``, scanning x3 left to right, then (x1, x2)."""
    nb = neighbor_sets(edges)
    for k, x3 in enumerate(order):
        before = [v for v in order[:k] if v in nb.get(x3, ())]
        for a in range(len(before)):
            for b in range(a + 1, len(before)):
                if before[b] not in nb[before[a]]:
                    return TrioWitness(before[a], before[b], x3)
    return None


def find_disruptive_trio(q: Query) -> TrioWitness | None:
    return find_trio(q.head_vars, [a.terms for a in q.body])


def check_trio(w: TrioWitness, order: Sequence, edges: Iterable[Iterable]) -> bool:
    nb = neighbor_sets(edges)
    pos = {v: i for i, v in enumerate(order)}
    return (w.x1 in nb.get(w.x3, ()) and w.x2 in nb.get(w.x3, ())
            and w.x2 not in nb.get(w.x1, ())
            and pos[w.x3] > pos[w.x1] and pos[w.x3] > pos[w.x2])


# ---------------------------------------------------------------------------
# anchored tree
# ---------------------------------------------------------------------------


@dataclass
class AnchoredTree:
    tree: Tree
    path: list  # node ids from the atom's node to its free root

    @property
    def root(self) -> int:
        return self.path[-1]


def anchored_ext_tree(q: Query, atom: int, tree: Tree | None = None) -> AnchoredTree:
    """Rework a free-connex tree so the annotation of ``atom`` lands on one free node.

    On the path ``v1 .. vk`` from the atom's node to the first free node the
    result satisfies: ``k >= 2``; consecutive nodes among ``v1 .. v(k-1)``
    share an existential variable; ``vk`` holds exactly the free variables of
    ``v(k-1)``.
    """
    if tree is None:
        tree = free_connex_tree(q)
    tree = tree.copy()
    free_vars = q.free
    exist = q.existential
    v = tree.labels.index(atom)
    if v in tree.free:
        # split into a non-free original and a free twin
        twin = tree.add_node(tree.nodes[v], None)
        for w in list(tree.adj[v]):
            if w in tree.free:
                tree.unlink(v, w)
                tree.link(twin, w)
        tree.link(v, twin)
        tree.free.discard(v)
        tree.free.add(twin)
        return AnchoredTree(tree, [v, twin])

    path = _path_to_free(tree, v)
    if _anchored(tree, path, free_vars, exist):
        return AnchoredTree(tree, path)
    k = len(path)
    i = next(i for i in range(1, k)
             if not (tree.nodes[path[i - 1]] & tree.nodes[path[i]] & exist))
    prev, nxt = path[i - 1], path[i]
    tree.unlink(prev, nxt)
    hub = tree.add_node(tree.nodes[prev] & free_vars, None)
    tree.link(prev, hub)
    tree.link(hub, path[-1])
    tree.free.add(hub)
    return AnchoredTree(tree, path[:i] + [hub])


def _path_to_free(tree: Tree, v: int) -> list:
    prev = {v: None}
    queue = [v]
    for u in queue:
        if u in tree.free:
            out = [u]
            while out[-1] != v:
                out.append(prev[out[-1]])
            return out[::-1]
        for w in sorted(tree.adj[u]):
            if w not in prev:
                prev[w] = u
                queue.append(w)
    raise NotFreeConnex("no free node reachable")


def _anchored(tree: Tree, path: list, free_vars, exist) -> bool:
    k = len(path)
    if k < 2:
        return False
    for a, b in zip(path[:k - 2], path[1:k - 1]):
        if not (tree.nodes[a] & tree.nodes[b] & exist):
            return False
    return tree.nodes[path[-1]] == tree.nodes[path[-2]] & free_vars


def check_anchored(q: Query, at: AnchoredTree) -> bool:
    tree, path = at.tree, at.path
    if path[-1] not in tree.free or any(p in tree.free for p in path[:-1]):
        return False
    for a, b in zip(path, path[1:]):
        if b not in tree.adj[a]:
            return False
    return _anchored(tree, path, q.free, q.existential)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def to_dot(tree: Tree, q: Query | None = None) -> str:
    lines = ["graph jointree {"]
    for i, node in enumerate(tree.nodes):
        label = tree.labels[i]
        name = q.body[label].relation if (q is not None and isinstance(label, int)) else "ext"
        vars_ = ",".join(sorted(node))
        style = ", style=filled, fillcolor=lightgray" if tree.free and i in tree.free else ""
        lines.append(f'  n{i} [label="{name}({vars_})"{style}];')
    for a, b in tree.edges():
        lines.append(f"  n{a} -- n{b};")
    lines.append("}")
    return "\n".join(lines)
