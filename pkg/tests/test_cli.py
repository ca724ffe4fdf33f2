import numpy as np
import pytest

from streamkern import cli, projection
from streamkern import simulate as sm


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_preset_writes_csv(tmp_path, capsys):
    out = tmp_path / "ex2.csv"
    code, text, _ = run(["run", "--preset", "ex2", "--seed", "7", "--out", str(out), "--reps", "2", "--grid-max", "400", "--serial"], capsys)
    assert code == 0
    lines = out.read_text().split("\n")
    assert lines[0] == "estimator,rep,n,N,sq_l2_error,cum_cpu_ns"
    assert "projection" in text and "krr" in text and "sgd" in text


def test_repeated_runs_byte_identical(tmp_path, capsys):
    args = ["run", "--preset", "exA1", "--seed", "3", "--reps", "2", "--grid-max", "500", "--no-timing"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b), "--serial"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_config_file(tmp_path, capsys):
    cfg = tmp_path / "small.ini"
    cfg.write_text(
        "[experiment]\n"
        "preset = ex1\n"
        "repetitions = 1\n"
        "n_min = 100\n"
        "n_max = 300\n"
        "estimators = projection, krr\n"
        "c = 1/5\n"
    )
    out = tmp_path / "o.csv"
    code, text, _ = run(["run", "--config", str(cfg), "--out", str(out)], capsys)
    assert code == 0
    rows = sm.read_csv(str(out))
    assert {r.estimator for r in rows} == {"projection", "krr"}
    assert max(r.n for r in rows) == 300


def test_full_config_without_preset(tmp_path):
    cfg = tmp_path / "full.ini"
    cfg.write_text(
        "[experiment]\nexample_id = ex2\ncovariate = tilted\nnoise = normal\nnoise_param = 5\n"
        "kernel = sobolev_min\nalpha = 1\nc = 0.5\nn_grid = 100, 200\nrepetitions = 1\n"
    )
    spec = cli.load_config(str(cfg))
    assert spec.n_grid == (100, 200) and spec.estimators == ("projection",)


@pytest.mark.parametrize(
    "body",
    [
        "[experiment]\npreset = ex2\nbogus = 1\n",
        "[experiment]\npreset = ex2\nkernel = matern\n",
        "[other]\npreset = ex2\n",
        "[experiment]\nalpha = 1\n",
        "[experiment]\npreset = ex2\nrepetitions = many\n",
    ],
)
def test_bad_config_is_usage_error(tmp_path, capsys, body):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(body)
    code, _, err = run(["run", "--config", str(cfg), "--out", str(tmp_path / "x.csv")], capsys)
    assert code == 2 and "error" in err


def test_usage_errors(capsys):
    assert run(["run"], capsys)[0] == 2
    assert run(["run", "--preset", "ex2", "--config", "a.ini"], capsys)[0] == 2
    assert run(["run", "--preset", "nope"], capsys)[0] == 2
    assert run([], capsys)[0] == 2
    assert run(["--help"], capsys)[0] == 0


def test_runtime_failure_exit_one(tmp_path, capsys, monkeypatch):
    def broken(*a, **k):
        raise projection.DegeneratePivotError("forced")

    monkeypatch.setattr(projection, "sherman_morrison_update", broken)
    out = tmp_path / "f.csv"
    code, _, err = run(["run", "--preset", "ex2", "--reps", "1", "--grid-max", "200", "--estimators", "projection", "--out", str(out)], capsys)
    assert code == 1 and "failure" in err
    assert out.exists()


def test_runtime_failure_writes_na_cells(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(sm.KrrModel, "fit", lambda self, X, Y: (_ for _ in ()).throw(ArithmeticError("forced")))
    out = tmp_path / "k.csv"
    code, _, _ = run(["run", "--preset", "ex2", "--reps", "1", "--grid-max", "200", "--estimators", "krr", "--out", str(out)], capsys)
    assert code == 1
    body = out.read_text().splitlines()[1:]
    assert body and all(",NA," in line for line in body)


def test_verify_fresh_build(capsys):
    code, text, _ = run(["verify"], capsys)
    assert code == 0
    assert "oracle" in text and "schedule" in text and "FAIL" not in text


def test_verify_filter_ortho_only(capsys):
    code, text, _ = run(["verify", "--filter", "ortho"], capsys)
    assert code == 0
    names = [line.split()[1] for line in text.strip().splitlines()]
    assert names and all(n.startswith("ortho") for n in names)


def test_verify_detects_sign_fault(capsys, monkeypatch):
    def flipped(phi, psi, jitter_tol=1e-10, out=None):
        u = phi @ psi
        v = u / np.sqrt(1.0 + psi @ u)
        return np.add(phi, np.multiply.outer(v, v), out=out)

    monkeypatch.setattr(projection, "sherman_morrison_update", flipped)
    code, text, err = run(["verify", "--filter", "oracle"], capsys)
    assert code == 1
    assert "FAIL  oracle" in text and "oracle" in err


def write_rows(path, rows):
    sm.write_csv(rows, str(path))


def test_slope_on_synthetic_inverse_n(tmp_path, capsys):
    ns = sm.log_grid(100, 10_000)
    path = tmp_path / "s.csv"
    write_rows(path, [sm.ErrorRow("projection", r, n, 1, 1.0 / n, 0) for r in range(2) for n in ns])
    code, text, _ = run(["slope", str(path)], capsys)
    assert code == 0
    assert "-1.000" in text


def test_slope_errors(tmp_path, capsys):
    ns = sm.log_grid(100, 1000)
    path = tmp_path / "s.csv"
    write_rows(path, [sm.ErrorRow("projection", 0, n, 1, 1.0 / n, 0) for n in ns])
    assert run(["slope", str(path), "--nmin", "1e6"], capsys)[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    assert run(["slope", str(bad)], capsys)[0] == 2
    assert run(["slope", str(tmp_path / "missing.csv")], capsys)[0] == 2


def test_snapshot_create_resume_inspect(tmp_path, capsys):
    first = tmp_path / "a.ope"
    assert cli.main(["snapshot", "--preset", "ex2", "--n", "300", "--out", str(first)]) == 0
    second = tmp_path / "b.ope"
    assert cli.main(["snapshot", "--preset", "ex2", "--n", "600", "--resume", str(first), "--out", str(second)]) == 0
    direct = tmp_path / "c.ope"
    assert cli.main(["snapshot", "--preset", "ex2", "--n", "600", "--out", str(direct)]) == 0
    assert second.read_bytes() == direct.read_bytes()
    capsys.readouterr()
    code, text, _ = run(["snapshot", "--inspect", str(direct)], capsys)
    assert code == 0 and "n: 600" in text and "kernel: sobolev_min" in text
    assert run(["snapshot", "--inspect", str(tmp_path / "nope.ope")], capsys)[0] == 2
    assert run(["snapshot", "--preset", "ex2"], capsys)[0] == 2


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "streamkern", "verify", "--filter", "schedule"], capture_output=True, text=True)
    assert res.returncode == 0 and "PASS" in res.stdout
