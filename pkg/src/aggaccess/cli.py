"""Command-line entry point: ``aggaccess classify | get | bench``."""

from __future__ import annotations

import argparse
import gc
import hashlib
import json
import math
import os
import random
import statistics
import sys
import time

import tomli

from .errors import AggAccessError, UsageError
from .hypergraph import NotConnex, ext_connex_tree, hypergraph_of, to_dot
from .model import (AnnotatedDatabase, Relation, annotate_database, format_constant,
                    load_relation, parse_query)
from .planner import Certificate, Profile, classify, prepare, profile_of
from .rewrite import make_self_join_free
from .semiring import Counting, Kind, format_number, instantiate, load_domain

EXIT_OK, EXIT_ERROR, EXIT_INTRACTABLE, EXIT_UNKNOWN = 0, 1, 2, 3
_VERDICT_EXIT = {"tractable": EXIT_OK, "intractable": EXIT_INTRACTABLE, "unknown": EXIT_UNKNOWN}

# (manifest digest, query digest, semiring) -> (certificate, engine)
_CACHE: dict = {}


class Workspace:
    """A parsed manifest with its relations loaded."""

    def __init__(self, path: str, semiring: str | None = None, annot_cols=()):
        self.path = path
        base = os.path.dirname(os.path.abspath(path))
        with open(path, "rb") as fh:
            raw = fh.read()
        try:
            manifest = tomli.loads(raw.decode("utf-8"))
        except tomli.TOMLDecodeError as exc:
            raise UsageError(f"{path}: {exc}") from exc
        self.digest = hashlib.sha256(raw).hexdigest()
        query_path = manifest.get("query")
        if not query_path:
            raise UsageError(f"{path}: missing 'query'")
        with open(os.path.join(base, query_path), encoding="utf-8") as fh:
            self.query_text = fh.read()
        self.query = parse_query(self.query_text)
        self.semiring_spec = semiring or manifest.get("semiring", "counting")
        self.domain = None
        if self.semiring_spec.startswith("set:"):
            self.domain = load_domain(os.path.join(base, self.semiring_spec[4:]))
            self.semiring = instantiate(Kind.SET, self.domain)
        else:
            try:
                self.semiring = instantiate(self.semiring_spec)
            except ValueError as exc:
                raise UsageError(f"unknown semiring {self.semiring_spec!r}") from exc
        self.relations, self.raw = {}, {}
        forced = set(annot_cols)
        for entry in manifest.get("relations", []):
            name, arity = entry["name"], int(entry["arity"])
            annotated = bool(entry.get("annot_col", False)) or name in forced
            rel, lits = load_relation(os.path.join(base, entry["path"]), name, arity, annotated)
            self.relations[name] = rel
            if lits is not None:
                self.raw[name] = lits
        missing = set(self.query.relations()) - set(self.relations)
        if missing:
            raise UsageError(f"query uses undeclared relations {sorted(missing)}")

    def database(self) -> AnnotatedDatabase:
        s = Counting() if self.query.is_acq else self.semiring
        raw = {} if self.query.is_acq else self.raw
        return annotate_database(self.relations, s, raw=raw)

    def cache_key(self, extra=()) -> tuple:
        qd = hashlib.sha256(self.query_text.encode("utf-8")).hexdigest()
        return (self.digest, qd, self.semiring_spec) + tuple(extra)


def _profile(args, adb: AnnotatedDatabase) -> Profile:
    if getattr(args, "generic_annotations", False):
        return Profile.generic()
    if getattr(args, "annotated_relation", None):
        return Profile.at(args.annotated_relation)
    return profile_of(adb)


def _certify(ws: Workspace, args, adb) -> Certificate:
    return classify(ws.query, ws.semiring, _profile(args, adb), ws.domain)


def format_value(v) -> str:
    if isinstance(v, str):
        return format_constant(v)
    return format_number(v)


def render_row(row, cert: Certificate) -> str:
    s = cert.semiring
    out = []
    for e, v in zip(cert.query.head, row):
        if type(e).__name__ == "Star" and s is not None:
            out.append(s.format(v))
        elif type(e).__name__ == "Var":
            out.append(format_constant(v))
        else:
            out.append(format_value(v))
    return ",".join(out)


def cmd_classify(args) -> int:
    ws = Workspace(args.manifest, args.semiring, args.annot_col)
    adb = ws.database()
    cert = _certify(ws, args, adb)
    print(json.dumps(cert.to_json(), indent=2))
    if args.explain and cert.plan is not None:
        for step in cert.plan.chain:
            print(step, file=sys.stderr)
    if args.emit_tree == "dot":
        q, _ = make_self_join_free(ws.query, adb)
        tree = ext_connex_tree(hypergraph_of(q), q.free)
        if isinstance(tree, NotConnex):
            print(f"// not free-connex; residue {[sorted(e) for e in tree.residue]}", file=sys.stderr)
        else:
            print(to_dot(tree, q), file=sys.stderr)
    return _VERDICT_EXIT[cert.verdict]


def _engine(ws: Workspace, args):
    key = ws.cache_key((args.bigint, getattr(args, "annotated_relation", None),
                        getattr(args, "generic_annotations", False)))
    hit = _CACHE.get(key)
    if hit is not None:
        return hit
    adb = ws.database()
    cert = _certify(ws, args, adb)
    engine = prepare(cert, adb, args.bigint) if cert.tractable else None
    _CACHE[key] = (cert, engine)
    return cert, engine


def _parse_range(text: str):
    lo, sep, hi = text.partition("..")
    if not sep:
        raise UsageError(f"range must look like a..b, got {text!r}")
    return int(lo), int(hi)


def cmd_get(args) -> int:
    ws = Workspace(args.manifest, args.semiring, args.annot_col)
    cert, engine = _engine(ws, args)
    if engine is None:
        print(json.dumps(cert.to_json(), indent=2), file=sys.stderr)
        return _VERDICT_EXIT[cert.verdict]
    total = engine.count()
    if args.quantile is not None:
        if not 0 <= args.quantile <= 1:
            raise UsageError("quantile must lie in [0, 1]")
        lo = hi = max(1, math.ceil(args.quantile * total))
    elif args.range is not None:
        lo, hi = _parse_range(args.range)
    elif args.index is not None:
        lo = hi = args.index
    else:
        raise UsageError("give an index, --range or --quantile")
    if lo < 1:
        raise UsageError("answer indices start at 1")
    if hi > total:
        print(f"warning: only {total} answers", file=sys.stderr)
    for i in range(lo, min(hi, total) + 1):
        print(render_row(engine.get(i), cert))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

PATH3 = "Q(a, b, c, d, *) :- R(a, b), S(b, c), T(c, d)."


def path3_instance(n: int, rng: random.Random) -> AnnotatedDatabase:
    """Three binary relations of ``n // 3`` random facts each over a domain of the same size."""
    per = max(1, n // 3)
    dom = per
    rels = {}
    for name in ("R", "S", "T"):
        facts = set()
        while len(facts) < per:
            facts.add((rng.randrange(dom), rng.randrange(dom)))
        rels[name] = Relation(name, 2, tuple(facts))
    return annotate_database(rels, Counting())


def bench(sizes, reps: int = 5, probes: int = 100, seed: int = 0) -> dict:
    if not sizes or any(n < 3 for n in sizes) or reps < 1 or probes < 1:
        raise UsageError("bench needs sizes >= 3, reps >= 1 and probes >= 1")
    q = parse_query(PATH3)
    rng = random.Random(seed)
    build, access, latencies, counts = [], [], [], []
    for n in sizes:
        adb = path3_instance(n, rng)
        cert = classify(q, Counting(), profile_of(adb))
        times, engine = [], None
        for _ in range(reps):
            gc.collect()
            gc.disable()
            try:
                t0 = time.perf_counter()
                engine = prepare(cert, adb, bigint=True)
                times.append(time.perf_counter() - t0)
            finally:
                gc.enable()
        total = engine.count()
        lat = []
        for _ in range(probes):
            i = rng.randint(1, max(1, total))
            t0 = time.perf_counter()
            engine.get(i)
            lat.append(time.perf_counter() - t0)
        build.append(statistics.median(times))
        access.append(statistics.median(lat))
        latencies.append(lat)
        counts.append(total)
    ratios = [b / a for a, b in zip(build, build[1:])]
    return {
        "generator": "path3",
        "query": PATH3,
        "sizes": list(sizes),
        "reps": reps,
        "answers": counts,
        "build_median_s": build,
        "access_median_s": access,
        "access_latency_s": latencies,
        "doubling_ratios": ratios,
        "build_doubling_ratio": statistics.median(ratios) if ratios else None,
        "access_ratio": access[-1] / access[0],
    }


def cmd_bench(args) -> int:
    if args.generator != "path3":
        raise UsageError(f"unknown generator {args.generator!r}")
    sizes = [int(x) for x in args.sizes.split(",")] if args.sizes else [2 ** k for k in range(14, 18)]
    print(json.dumps(bench(sizes, args.reps, args.probes, args.seed), indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aggaccess", description="Direct access to aggregate query answers.")
    sub = p.add_subparsers(dest="command", required=True)

    def workspace_args(sp):
        sp.add_argument("manifest")
        sp.add_argument("--semiring", help="counting|numeric|mintrop|maxtrop|avg|set:<domain-file>")
        sp.add_argument("--annot-col", action="append", default=[], metavar="REL",
                        help="the last CSV column of REL holds annotations (repeatable)")
        grp = sp.add_mutually_exclusive_group()
        grp.add_argument("--annotated-relation", metavar="REL",
                         help="assert that only REL carries non-one annotations")
        grp.add_argument("--generic-annotations", action="store_true",
                         help="assume annotations may appear anywhere")

    c = sub.add_parser("classify", help="print the tractability certificate")
    workspace_args(c)
    c.add_argument("--explain", action="store_true", help="print the rewrite chain to stderr")
    c.add_argument("--emit-tree", choices=["dot"], help="print the ext-connex tree to stderr")
    c.set_defaults(func=cmd_classify)

    g = sub.add_parser("get", help="print answers by position")
    workspace_args(g)
    g.add_argument("index", nargs="?", type=int)
    g.add_argument("--range")
    g.add_argument("--quantile", type=float)
    g.add_argument("--bigint", action="store_true", help="allow counts beyond 64 bits")
    g.set_defaults(func=cmd_get)

    b = sub.add_parser("bench", help="time build and access on generated instances")
    b.add_argument("--generator", default="path3")
    b.add_argument("--sizes", help="comma-separated fact counts")
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--probes", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, AggAccessError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
