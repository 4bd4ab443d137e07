import json
import random

import pytest

from aggaccess import cli
from aggaccess.model import database_from, parse_query
from aggaccess.oracle import brute_force
from aggaccess.semiring import Counting

from named import REPLAYS_TABLES, SPONSORS


def write_workspace(root, query, tables, semiring=None, annotated=()):
    root.mkdir(parents=True, exist_ok=True)
    (root / "query.dl").write_text(query + "\n")
    lines = ['query = "query.dl"']
    if semiring:
        lines.append(f'semiring = "{semiring}"')
    for name, rows in tables.items():
        (root / f"{name}.csv").write_text("".join(",".join(map(str, r)) + "\n" for r in rows))
        arity = len(rows[0]) - (name in annotated) if rows else 1
        lines += ["", "[[relations]]", f'name = "{name}"', f'path = "{name}.csv"', f"arity = {arity}"]
        if name in annotated:
            lines.append("annot_col = true")
    (root / "workspace.toml").write_text("\n".join(lines) + "\n")
    return str(root / "workspace.toml")


@pytest.fixture(autouse=True)
def clear_cache():
    cli._CACHE.clear()


@pytest.fixture
def replays(tmp_path):
    return write_workspace(tmp_path / "replays",
                           "Q(c, Sum(t)) :- Teams(p, c), Goals(g, p, t), Replays(g, t).",
                           REPLAYS_TABLES)


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_intractable_exit(tmp_path, capsys):
    m = write_workspace(tmp_path, "Q(*, x, y) :- R(x), S(y).",
                        {"R": [(1, 2)], "S": [(3, 4)]}, annotated=("R", "S"))
    code, out, _ = run(["classify", m, "--semiring", "counting", "--generic-annotations"], capsys)
    assert code == 2
    assert json.loads(out)["theorem"] == "Thm 5.1"


def test_classify_sponsors(tmp_path, capsys):
    m = write_workspace(tmp_path, SPONSORS, {"Teams": [(1, 5)], "Sponsors": [(7, 5)], "Goals": [(2, 1, 9)]})
    code, out, err = run(["classify", m, "--explain", "--emit-tree", "dot"], capsys)
    assert code == 0
    cert = json.loads(out)
    assert cert["verdict"] == "tractable" and cert["plan"]["tag"] == "StarLast"
    assert "graph" in err


def test_classify_unknown_exit(tmp_path, capsys):
    m = write_workspace(tmp_path, "Q(x, z) :- R(x, y), R(y, z).", {"R": [(1, 2)]})
    code, _, _ = run(["classify", m], capsys)
    assert code == 3


def test_missing_csv(tmp_path, capsys):
    m = write_workspace(tmp_path, "Q(x) :- R(x).", {"R": [(1,)]})
    (tmp_path / "R.csv").unlink()
    code, _, err = run(["classify", m], capsys)
    assert code == 1 and err.startswith("error:")


def test_bad_query(tmp_path, capsys):
    m = write_workspace(tmp_path, "Q(x) :- R(x) $", {"R": [(1,)]})
    code, _, err = run(["get", m, "1"], capsys)
    assert code == 1 and "error" in err


def test_get_replays(replays, capsys):
    assert run(["get", replays, "1"], capsys)[:2] == (0, "5,31\n")
    assert run(["get", replays, "--quantile", "1.0"], capsys)[1] == "6,50\n"
    assert run(["get", replays, "--quantile", "0"], capsys)[1] == "5,31\n"
    code, out, err = run(["get", replays, "--range", "1..3"], capsys)
    assert code == 0 and out == "5,31\n6,50\n" and "warning" in err
    code, out, err = run(["get", replays, "7"], capsys)
    assert code == 0 and out == "" and "warning" in err
    assert run(["get", replays, "0"], capsys)[0] == 1


def test_get_annotated_star(tmp_path, capsys):
    tables = dict(REPLAYS_TABLES)
    tables["Replays"] = [(g, t, t) for g, t in REPLAYS_TABLES["Replays"]]
    m = write_workspace(tmp_path, "Q(c, *) :- Teams(p, c), Goals(g, p, t), Replays(g, t).",
                        tables, semiring="numeric", annotated=("Replays",))
    code, out, _ = run(["get", m, "--range", "1..2"], capsys)
    assert code == 0 and out == "5,31\n6,50\n"


def test_get_intractable_reports_certificate(tmp_path, capsys):
    m = write_workspace(tmp_path, "Q(x, CountD(y)) :- R(x, w), S(y, w).",
                        {"R": [(1, 2)], "S": [(3, 2)]})
    code, out, err = run(["get", m, "1"], capsys)
    assert code == 2 and out == "" and json.loads(err)["theorem"] == "Thm 4.4"
    (tmp_path / "dom.txt").write_text("3\n4\n")
    code, out, _ = run(["get", m, "1", "--semiring", "set:dom.txt"], capsys)
    assert code == 0 and out == "1,1\n"


def test_end_to_end_matches_oracle(tmp_path, capsys):
    rng = random.Random(9)
    q = "Q(x, Max(w), y) :- R(x, y), S(y, w)."
    tables = {"R": sorted({(rng.randrange(6), rng.randrange(6)) for _ in range(20)}),
              "S": sorted({(rng.randrange(6), rng.randrange(9)) for _ in range(20)})}
    m = write_workspace(tmp_path, q, tables)
    expected = brute_force(parse_query(q), database_from(Counting(), tables))
    code, out, _ = run(["get", m, "--range", f"1..{len(expected)}"], capsys)
    assert code == 0
    assert out.splitlines() == [",".join(map(str, row)) for row in expected]


def test_bench_output(capsys):
    code, out, _ = run(["bench", "--sizes", "300,600", "--reps", "2", "--probes", "5"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["sizes"] == [300, 600]
    assert len(report["doubling_ratios"]) == 1
    assert len(report["access_latency_s"][1]) == 5
    assert {"build_doubling_ratio", "access_ratio", "build_median_s"} <= set(report)
    assert run(["bench", "--generator", "star"], capsys)[0] == 1
    assert run(["bench", "--sizes", "1"], capsys)[0] == 1
