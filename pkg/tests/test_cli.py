import csv
import io
import subprocess
import sys

import pytest

from adasub.cli import CSV_COLUMNS, main
from adasub.objectives import evaluate, load_instance
from adasub.verify import fixture_path


def call(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_run_sensor_exact(capsys):
    code, out, _ = call(capsys, "run", "--instance", fixture_path("sensor1"), "--policy", "greedy", "--k", "1")
    assert code == 0
    assert out.splitlines()[0] == ",".join(CSV_COLUMNS)
    (row,) = rows(out)
    assert row["favg"] == "1" and row["stderr"] == "0" and row["mode"] == "exact"


def test_run_is_reproducible(capsys):
    args = ("run", "--instance", fixture_path("mixed4"), "--policy", "arg,lt", "--k", "2", "--epsilon", "0.2",
            "--mode", "mc", "--trials", "200", "--seed", "3")
    strip = lambda text: [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows(text)]
    _, first, _ = call(capsys, *args)
    _, second, _ = call(capsys, *args)
    _, third, _ = call(capsys, *args, "--jobs", "2")
    assert strip(first) == strip(second) == strip(third)
    assert [r["policy"] for r in rows(first)] == ["arg", "lt"]


def test_run_grid_and_matroid(capsys):
    code, out, _ = call(capsys, "run", "--instance", fixture_path("coverage4_matroid"),
                        "--policy", "greedy,local,gasg", "--k", "1,2", "--epsilon", "0.1,0.3")
    assert code == 0
    got = [(r["policy"], r["k"], r["epsilon"]) for r in rows(out)]
    assert got == [("greedy", "1", ""), ("greedy", "2", ""), ("local", "", ""),
                   ("gasg", "", "0.1"), ("gasg", "", "0.3")]
    for r in rows(out):
        float(r["favg"])
        assert len(r["favg"].replace(".", "").lstrip("0")) <= 9


def test_run_generated_instance(capsys):
    code, out, _ = call(capsys, "run", "--instance", "gen:cut:n=5,edge_prob=0.7", "--policy", "arg", "--k", "2")
    assert code == 0 and rows(out)[0]["instance"].startswith("cut-n5")


def test_run_writes_out_file(capsys, tmp_path):
    dest = tmp_path / "res.csv"
    code, out, _ = call(capsys, "run", "--instance", fixture_path("sensor1"), "--policy", "greedy", "--k", "1",
                        "--out", dest)
    assert code == 0 and out == ""
    assert rows(dest.read_text())[0]["favg"] == "1"


@pytest.mark.parametrize("argv, flag", [
    (["--policy", "asg", "--k", "2"], "--epsilon"),
    (["--policy", "greedy"], "--k"),
    (["--policy", "local"], "--instance"),
    (["--policy", "nope", "--k", "1"], "--policy"),
    (["--policy", "greedy", "--k", "9"], "--k"),
    (["--policy", "lt", "--k", "2", "--epsilon", "0.7"], "--epsilon"),
    (["--policy", "greedy", "--k", "x"], "--k"),
    (["--policy", "greedy", "--k", "1", "--trials", "0"], "--trials"),
])
def test_run_invalid_config(capsys, argv, flag):
    code, out, err = call(capsys, "run", "--instance", fixture_path("mixed4"), *argv)
    assert code == 1
    assert flag in err
    assert out == ""


def test_run_missing_file(capsys):
    code, _, err = call(capsys, "run", "--instance", "missing.yaml", "--policy", "greedy", "--k", "1")
    assert code == 1 and "--instance" in err and "missing.yaml" in err


def test_run_bad_file_names_location(capsys, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("version: 1\nitems: [\n")
    code, _, err = call(capsys, "run", "--instance", bad, "--policy", "greedy", "--k", "1")
    assert code == 1 and f"{bad}:" in err


def test_run_usage_error_is_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--policy", "greedy"])
    assert exc.value.code == 1
    assert "--instance" in capsys.readouterr().err


def test_run_cap_error(capsys):
    code, out, err = call(capsys, "run", "--instance", "gen:coverage:n=16,m=5", "--policy", "greedy", "--k", "1")
    assert code == 2
    assert "use --mode mc" in err
    assert out == ""
    code, out, _ = call(capsys, "run", "--instance", "gen:coverage:n=16,m=5", "--policy", "greedy", "--k", "1",
                        "--mode", "mc", "--trials", "20")
    assert code == 0 and rows(out)[0]["trials"] == "20"


def test_cap_env_var(capsys, monkeypatch):
    monkeypatch.setenv("ADASUB_ENUM_CAP", "4")
    code, _, _ = call(capsys, "run", "--instance", fixture_path("coverage3"), "--policy", "greedy", "--k", "1")
    assert code == 2


def test_verify_queries(capsys):
    code, out, _ = call(capsys, "verify", "queries")
    assert code == 0
    assert out.count("PASS") == 2 and "FAIL" not in out


def test_verify_failure_exit_code(capsys, monkeypatch):
    from adasub import cli
    from adasub.verify import Check

    monkeypatch.setattr(cli, "run_suite", lambda name, seed: [Check("x", False, "1", "0")])
    code, out, _ = call(capsys, "verify", "sampling")
    assert code == 3 and out.startswith("FAIL")


def test_generate_coverage(capsys, tmp_path):
    dest = tmp_path / "c.yaml"
    assert call(capsys, "generate", "coverage", "n=3", "m=4", "density=1.0", "--out", dest)[0] == 0
    inst = load_instance(dest)
    assert inst.n == 3
    assert all(per_state[1] == frozenset(range(4)) for per_state in inst.objective.covers)


def test_generate_is_seeded(capsys):
    first = call(capsys, "generate", "mixed", "n=4", "m=3", "--seed", "5")[1]
    second = call(capsys, "generate", "mixed", "n=4", "m=3", "--seed", "5")[1]
    other = call(capsys, "generate", "mixed", "n=4", "m=3", "--seed", "6")[1]
    assert first == second != other


def test_generate_cut_from_edges(capsys, tmp_path):
    dest = tmp_path / "cut.yaml"
    code = call(capsys, "generate", "cut", "n=4", "--edges", "0-1:2.5,1-2,2-3:0.5", "--out", dest)[0]
    assert code == 0
    inst = load_instance(dest)
    assert evaluate(inst.objective, [1], (0,) * 4) == 3.5
    assert evaluate(inst.objective, [0, 2], (0,) * 4) == 4.0


def test_generate_with_matroid(capsys, tmp_path):
    dest = tmp_path / "m.yaml"
    assert call(capsys, "generate", "coverage", "n=6", "blocks=3", "limit=4", "--out", dest)[0] == 0
    inst = load_instance(dest)
    assert len(inst.matroid.blocks) == 3 and inst.matroid.total_limit == 4


@pytest.mark.parametrize("argv", [
    ["coverage", "m=3"],
    ["coverage", "n=3", "density=2"],
    ["coverage", "n=three"],
    ["cut", "n=3", "m=2"],
    ["coverage", "n=3", "--edges", "0-1"],
    ["cut", "n=3", "--edges", "0:1"],
    ["coverage", "n=4", "blocks=2"],
])
def test_generate_invalid(capsys, argv):
    code, out, err = call(capsys, "generate", *argv)
    assert code == 1 and out == "" and err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "adasub", "run", "--instance", str(fixture_path("sensor1")),
                          "--policy", "greedy", "--k", "1"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.splitlines()[1].startswith("sensor1,greedy,1,,0,0,exact,1,0,")
