import subprocess
import sys

import numpy as np
import pytest

from hawkes_agg import io
from hawkes_agg.cli import main
from hawkes_agg.core import aggregate

CONFIG = """\
nu = 0.3, 0.3
alpha = 0.7 0.9; 0.6 1.0
beta = 1.5 2.0; 2.0 3.5
horizon = {T}
delta = 1
"""


@pytest.fixture
def cfg(tmp_path):
    f = tmp_path / "sim.cfg"
    f.write_text(CONFIG.format(T=300))
    return f


@pytest.fixture
def sim(tmp_path, cfg):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--seed", "1", "--out", str(out)]) == 0
    return out


def test_simulate_outputs(sim):
    b = io.read_counts(sim / "counts.csv")
    ev = io.read_events(sim / "events.csv")
    assert b.K == 300 and b.P == 2
    assert b.totals.tolist() == ev.counts.tolist()
    assert "seed = 1" in (sim / "config.txt").read_text()


def test_reference_shape(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(CONFIG.format(T=2000))
    main(["simulate", "--config", str(f), "--seed", "1", "--out", str(tmp_path / "o")])
    rows = [l for l in (tmp_path / "o" / "counts.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "bin_index,count_1,count_2" and len(rows) == 2001


def test_simulate_byte_identical(tmp_path, cfg):
    for name in ("a", "b"):
        main(["simulate", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / name)])
    for f in ("events.csv", "counts.csv", "config.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_non_stationary_config(tmp_path, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text("nu = 1\nalpha = 2\nbeta = 1\n")
    assert main(["simulate", "--config", str(f), "--out", str(tmp_path / "o")]) == 2
    assert "spectral radius 2" in capsys.readouterr().err


def test_fit_mle_and_report(tmp_path, sim):
    out = tmp_path / "fit"
    assert main(["fit", "--method", "mle", "--input", str(sim / "events.csv"), "--out", str(out)]) == 0
    names = [r[0] for r in io.estimate_rows(io.read_params(out / "estimates.csv"))]
    assert "gamma_2_2" in names
    report = dict(r[1] for r in io.read_csv(out / "fit_report.csv")[2])
    assert report["converged"] == "1" and "wall" not in report


@pytest.mark.parametrize("method,fname", [("mle", "counts.csv"), ("inar", "events.csv")])
def test_method_input_mismatch(tmp_path, sim, method, fname):
    assert main(["fit", "--method", method, "--input", str(sim / fname), "--out", str(tmp_path / "x")]) == 2


def test_malformed_csv_exit_code(tmp_path, capsys):
    f = tmp_path / "c.csv"
    f.write_text("# delta=1\nbin_index,count_1\n0,1\n1,oops\n")
    assert main(["fit", "--method", "binned", "--input", str(f), "--out", str(tmp_path / "x")]) == 3
    assert ":4:" in capsys.readouterr().err


def test_degenerate_counts_exit_code(tmp_path):
    f = tmp_path / "c.csv"
    f.write_text("# delta=1\nbin_index,count_1\n0,0\n1,0\n")
    assert main(["fit", "--method", "binned", "--input", str(f), "--out", str(tmp_path / "x")]) == 3


def test_numerical_exit_code(tmp_path):
    f = tmp_path / "c.csv"
    rows = "\n".join(f"{j},{1 if j % 3 == 0 else 0},0" for j in range(60))
    f.write_text("# delta=1\nbin_index,count_1,count_2\n" + rows + "\n")
    c = tmp_path / "inar.cfg"
    c.write_text("ridge = 0\nlag_order = 2\n")
    assert main(["fit", "--method", "inar", "--input", str(f), "--config", str(c),
                 "--out", str(tmp_path / "x")]) == 4


def test_fit_inar_on_poisson_counts(tmp_path):
    rng = np.random.default_rng(0)
    counts = rng.poisson([0.5, 1.0], (5000, 2))
    rows = "\n".join(f"{j},{a},{b}" for j, (a, b) in enumerate(counts))
    f = tmp_path / "c.csv"
    f.write_text("# delta=1\nbin_index,count_1,count_2\n" + rows + "\n")
    assert main(["fit", "--method", "inar", "--input", str(f), "--out", str(tmp_path / "x")]) == 0
    est = dict((r[1][0], float(r[1][1])) for r in io.read_csv(tmp_path / "x" / "estimates.csv")[2])
    assert all(est[f"gamma_{i}_{j}"] < 0.05 for i in (1, 2) for j in (1, 2))
    report = dict(r[1] for r in io.read_csv(tmp_path / "x" / "fit_report.csv")[2])
    assert report["valid"] == "1"


def test_gof_identity(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("nu = 1\nalpha = 0\nbeta = 1\nhorizon = 500\n")
    main(["simulate", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "s")])
    main(["fit", "--method", "mle", "--input", str(tmp_path / "s" / "events.csv"), "--out", str(tmp_path / "f")])
    p = tmp_path / "true.csv"
    io.write_estimates(p, io.params_from_config(io.read_config(cfg)))
    assert main(["gof", "--params", str(p), "--input", str(tmp_path / "s" / "events.csv"),
                 "--out", str(tmp_path / "g")]) == 0
    _, header, rows = io.read_csv(tmp_path / "g" / "qq.csv")
    emp = np.array([float(r[1][2]) for r in rows])
    theo = np.array([float(r[1][3]) for r in rows])
    assert np.max(np.abs(emp - theo)[theo < 3]) < 0.3
    ks = io.read_csv(tmp_path / "g" / "ks.csv")[2][0][1]
    assert float(ks[3]) < float(ks[4])


def test_gof_counts_input(tmp_path, sim):
    p = tmp_path / "true.csv"
    io.write_estimates(p, io.params_from_config(io.read_config(sim / "config.txt")))
    assert main(["gof", "--params", str(p), "--input", str(sim / "counts.csv"), "--out",
                 str(tmp_path / "g")]) == 0
    meta = io.read_csv(tmp_path / "g" / "ks.csv")[0]
    assert meta["latent_times"].startswith("one consistent proposal")


def test_gof_skips_empty_process(tmp_path, capsys):
    p = tmp_path / "p.csv"
    p.write_text("parameter,value\nnu_1,1\nnu_2,1\nalpha_1_1,0\nalpha_1_2,0\nalpha_2_1,0\nalpha_2_2,0\n"
                 "beta_1_1,1\nbeta_1_2,1\nbeta_2_1,1\nbeta_2_2,1\n")
    f = tmp_path / "ev2.csv"
    f.write_text("# horizon=10\n# processes=2\ntime,process\n1.0,1\n2.0,1\n3.0,1\n")
    assert main(["gof", "--params", str(p), "--input", str(f), "--out", str(tmp_path / "g")]) == 0
    assert "process 2 has fewer than 2 events" in capsys.readouterr().err


def test_ingest_round_trip(tmp_path, sim):
    out = tmp_path / "ing"
    assert main(["ingest", "--input", str(sim / "events.csv"), "--time-col", "time", "--label-col",
                 "process", "--delta", "1", "--labels", "1,2", "--start", "0", "--end", "300",
                 "--out", str(out)]) == 0
    assert np.array_equal(io.read_counts(out / "counts.csv").counts,
                          io.read_counts(sim / "counts.csv").counts)
    ev = io.read_events(sim / "events.csv")
    assert np.array_equal(aggregate(ev, 1.0).counts, io.read_counts(out / "counts.csv").counts)


def test_ingest_needs_delta(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["ingest", "--input", "x", "--time-col", "t", "--label-col", "l", "--out", str(tmp_path)])
    assert e.value.code == 2


def test_usage_error_exit_code():
    r = subprocess.run([sys.executable, "-m", "hawkes_agg", "fit"], capture_output=True, text=True)
    assert r.returncode == 2


def test_help_documents_config_keys():
    r = subprocess.run([sys.executable, "-m", "hawkes_agg", "--help"], capture_output=True, text=True)
    for key in ("nu", "alpha", "beta", "horizon", "delta", "M", "m_tilde", "lag_order", "ridge",
                "reps", "methods", "trim", "HAWKES_AGG_THREADS"):
        assert key in r.stdout
