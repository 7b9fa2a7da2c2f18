import csv
import io
import shutil
import subprocess

import pytest

from projcomplete.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, sweep_initial_data


def run(*argv):
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    return code, buf.getvalue()


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# classify --------------------------------------------------------------------------------------


@pytest.mark.parametrize("argv, expected", [
    (["--cover", "full", "--monodromy", "rot:1"], "elliptic,closed,none,1,,true"),
    (["--cover", "chart", "--monodromy", "trans:1"], "parabolic,closed,1,,0,false"),
    (["--cover", "half", "--monodromy", "dil:2"], "hyperbolic,closed,1,2,0,false"),
    (["--cover", "full", "--monodromy", "trans:1:2"], "parabolic,closed,2,,2,true"),
    (["--cover", "full", "--monodromy", "dil:3:1"], "hyperbolic,closed,2,3,1,true"),
    (["--topology", "open", "--interval", "0,inf"], "parabolic,open,2,,,false"),
])
def test_classify(argv, expected):
    code, out = run("classify", *argv)
    assert code == EXIT_OK
    assert out.splitlines() == ["kind,topology,subtype,invariant,winding,complete", expected]


@pytest.mark.parametrize("argv", [
    ["classify", "--cover", "full"],                           # closed without monodromy
    ["classify", "--cover", "full", "--monodromy", "rot:0"],   # identity monodromy
    ["classify", "--cover", "full", "--monodromy", "spin:1"],
    ["classify", "--topology", "open", "--monodromy", "rot:1"],
    ["complete", "--conn", "klein-bottle"],
    ["complete", "--window", "-5"],
    ["geodesic", "--conn", "flat", "--v0", "1 0", "--rtol", "0"],
    ["geodesic", "--conn", "flat", "--v0", "1 0 0"],
    ["lie", "--algebra", "e8"],
    ["zoll", "--alpha", "0"],
    ["no-such-command"],
])
def test_usage_errors_exit_2(argv):
    assert run(*argv)[0] == EXIT_USAGE


def test_help_exits_cleanly():
    assert run("--help")[0] == EXIT_OK


# complete ---------------------------------------------------------------------------------------


@pytest.mark.parametrize("conn, verdict", [
    ("sphere", "complete"), ("flat-torus", "incomplete"), ("lie:so3", "complete"),
])
def test_complete_sweeps(conn, verdict):
    code, out = run("complete", "--conn", conn, "--sweep", "2", "--window", "40", "--seed", "3")
    assert code == EXIT_OK
    got = [r["verdict"] for r in rows(out)]
    assert got == [verdict] * 2, f"{conn}: {got}"


def test_seeded_sweep_is_reproducible():
    argv = ("complete", "--conn", "lie:heisenberg", "--sweep", "3", "--window", "30", "--seed", "11")
    assert run(*argv)[1] == run(*argv)[1]
    a = sweep_initial_data("lie", 3, 3, 11)
    assert all((x1 == x2).all() and (v1 == v2).all()
               for (x1, v1), (x2, v2) in zip(a, sweep_initial_data("lie", 3, 3, 11)))
    assert not (a[0][1] == sweep_initial_data("lie", 3, 3, 12)[0][1]).all()


def test_workers_do_not_change_output():
    argv = ("complete", "--conn", "sphere", "--sweep", "4", "--window", "30", "--seed", "5")
    assert run(*argv, "--workers", "2")[1] == run(*argv, "--workers", "1")[1]


# zoll -------------------------------------------------------------------------------------------


def test_zoll_table_and_plot(tmp_path, capsys):
    svg = tmp_path / "kappa.svg"
    code, out = run("zoll", "--profile", "round", "--grid", "11", "--plot", str(svg))
    assert code == EXIT_OK
    table = rows(out)
    assert len(table) == 11 and all(float(r["kappa"]) == pytest.approx(1.0) for r in table)
    text = svg.read_text()
    assert text.startswith("<svg") and "<polyline" in text
    assert "negative bands 0" in capsys.readouterr().err


def test_zoll_closure_sweep(tmp_path):
    path = tmp_path / "closure.csv"
    code, _ = run("zoll", "--grid", "5", "--geodesics", "2", "--geodesic-out", str(path),
                  "--out", str(tmp_path / "kappa.csv"))
    assert code == EXIT_OK
    table = rows(path.read_text())
    assert [r["closed"] for r in table] == ["true", "true"]
    assert all(r["verdict"] == "complete" for r in table)
    assert all(abs(float(r["period"]) - 6.283185307179586) < 1e-6 for r in table)


# lie ---------------------------------------------------------------------------------------------


def test_lie_ricci_and_normality():
    code, out = run("lie", "--algebra", "sl2", "--op", "ricci")
    assert code == EXIT_OK
    table = list(csv.reader(io.StringIO(out)))
    r = [[float(x) for x in row[2:]] for row in table[1:4]]
    assert r == [[-2, 0, 0], [0, 0, -1], [0, -1, 0]], f"r = {r}"
    assert run("lie", "--op", "normality")[1].splitlines()[1].startswith("true,")
    assert run("lie", "--op", "normality", "--p", "0")[1].splitlines()[1].startswith("false,")


def test_lie_classify_directions():
    code, out = run("lie", "--algebra", "sl2", "--op", "classify",
                    "--direction", "0 1 -1", "--direction", "1 0 0", "--direction", "0 1 0")
    assert code == EXIT_OK
    assert [r["kind"] for r in rows(out)] == ["elliptic", "hyperbolic", "parabolic"]


def test_lie_algebra_file(tmp_path):
    path = tmp_path / "heis.txt"
    path.write_text("dim 3\n1 2 3 1\n")
    code, out = run("lie", "--algebra-file", str(path), "--op", "killing")
    assert code == EXIT_OK and all(float(x) == 0 for r in rows(out) for k, x in r.items()
                                   if k.startswith("c"))
    path.write_text("dim 3\n1 2 3 1\n1 3 1 1\n")
    assert run("lie", "--algebra-file", str(path))[0] == EXIT_USAGE


# geodesic and jacobi ------------------------------------------------------------------------------


def test_geodesic_and_jacobi_csv():
    code, out = run("geodesic", "--conn", "flat", "--x0", "1 2", "--v0", "1 0", "--t1", "3")
    assert code == EXIT_OK
    last = rows(out)[-1]
    assert float(last["t"]) == pytest.approx(3) and float(last["x0"]) == pytest.approx(4)
    code, out = run("jacobi", "--conn", "sphere", "--v0", "0 1", "--t1", "4")
    assert code == EXIT_OK
    zeros = [r for r in rows(out) if r["zero"]]
    assert [round(float(r["t"]), 6) for r in zeros] == [0.0, 3.141593]


# config ---------------------------------------------------------------------------------------------


def test_config_file(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[classify]\ncover = chart\nmonodromy = trans:1\n")
    code, out = run("--config", str(cfg), "classify")
    assert code == EXIT_OK and out.splitlines()[1] == "parabolic,closed,1,,0,false"
    code, out = run("--config", str(cfg), "classify", "--cover", "full", "--monodromy", "rot:2")
    assert out.splitlines()[1].startswith("elliptic"), "command line overrides the file"
    cfg.write_text("[classify]\ncolour = blue\n")
    assert run("--config", str(cfg), "classify")[0] == EXIT_USAGE
    cfg.write_text("[complete]\nwindow = -1\n")
    assert run("--config", str(cfg), "complete")[0] == EXIT_USAGE
    assert run("--config", str(tmp_path / "missing.ini"), "classify")[0] == EXIT_USAGE


def test_console_script():
    exe = shutil.which("projcomplete")
    if exe is None:
        pytest.skip("console script not installed")
    res = subprocess.run([exe, "classify", "--cover", "full", "--monodromy", "rot:1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == EXIT_OK and "elliptic" in res.stdout
    assert EXIT_NUMERIC == 3
