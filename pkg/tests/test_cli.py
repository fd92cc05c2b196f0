import json
import subprocess
import sys

import numpy as np

from floquet_transport import cli, io_utils


def write_config(path, **overrides):
    cfg = {
        "family": "rank_one",
        "period": 1.0,
        "dimension": 1,
        "params": {"a0": -0.5, "beta": 2.0, "k_sigma": 0.3},
        "box": {"half_width": 6.0, "cells_per_dim": 64},
        "propagator": {"steps_per_period": 64},
        "seed": 0,
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return cfg


def gauss_config(path, cells=32, steps=32):
    params = {"kappa": 1.0, "c": 0.5, "a0": 1.0, "a1": 1.0, "a2": 1.0,
              "beta": 2.0, "sigma": 0.2}
    return write_config(path, family="gaussian_confined", params=params,
                        box={"half_width": 6.0, "cells_per_dim": cells},
                        propagator={"steps_per_period": steps})


def test_solve_rank_one(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    out = tmp_path / "out"
    rc = cli.main(["solve", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert abs(report["eigen"]["lambda_F_extrapolated"] - 1.5) < 1e-3
    assert (out / "eigen_f0.csv").exists()
    assert (out / "eigen_phi0.csv").exists()
    assert "config_hash" in report and "timings" in report


def test_oracle_size_guard_exit_2(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    out = tmp_path / "out"
    rc = cli.main(["oracle", "--config", str(cfg), "--out", str(out),
                   "--cells", "8192"])
    assert rc == 2
    # a report is written even on numerical failure, with the error recorded
    report = json.loads((out / "report.json").read_text())
    assert "guard" in report["error"]


def test_dt_override(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    out = tmp_path / "out"
    rc = cli.main(["check", "--config", str(cfg), "--out", str(out),
                   "--dt", str(1.0 / 16)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["propagator"]["steps_per_period"] == 16


def test_oracle_report(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    out = tmp_path / "out"
    rc = cli.main(["oracle", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["oracle"]["peripheral_count"] == 1
    assert abs(report["oracle"]["leading_real"] - np.exp(1.5)) < 0.05


def test_check_require_hypotheses_exit_3(tmp_path):
    # kernel multiplied by the indicator x > y: positivity on the band fails
    n = 64
    x = -6.0 + (np.arange(n) + 0.5) * (12.0 / n)
    K = 2.0 * np.exp(-0.5 * ((x[:, None] - x[None, :]) / 0.2) ** 2) \
        / (0.2 * np.sqrt(2 * np.pi))
    K = K * (x[:, None] > x[None, :])
    cfg_path = tmp_path / "half.json"
    write_config(cfg_path, family="custom_tabulated", params={
        "grid": {"half_width": 6.0, "cells_per_dim": n},
        "velocity": np.zeros((1, n, 1)).tolist(),
        "fitness": (1 - x ** 2).reshape(1, n).tolist(),
        "kernel": K.tolist(), "r0": 0.2})
    out = tmp_path / "out"
    rc = cli.main(["check", "--config", str(cfg_path), "--out", str(out),
                   "--require-hypotheses"])
    assert rc == 3
    report = json.loads((out / "report.json").read_text())
    cond = report["hypotheses"]["conditions"]["Hq_positivity"]
    assert cond["status"] == "fail"
    assert cond["witness"]["witness"] is not None


def test_check_without_flag_reports_and_succeeds(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    out = tmp_path / "out"
    rc = cli.main(["check", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["hypotheses"]["conditions"]["Ha_confinement"]["status"] == "fail"


def test_invalid_config_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["solve", "--config", str(bad), "--out",
                     str(tmp_path / "o1")]) == 1
    cfg = tmp_path / "nofam.json"
    cfg.write_text(json.dumps({"family": "nope", "period": 1.0,
                               "dimension": 1,
                               "box": {"half_width": 6, "cells_per_dim": 16}}))
    assert cli.main(["solve", "--config", str(cfg), "--out",
                     str(tmp_path / "o2")]) == 1
    cfg2 = tmp_path / "nobox.json"
    cfg2.write_text(json.dumps({"family": "rank_one", "period": 1.0,
                                "dimension": 1}))
    assert cli.main(["solve", "--config", str(cfg2), "--out",
                     str(tmp_path / "o3")]) == 1


def test_refuses_nonempty_outdir_without_force(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    out = tmp_path / "out"
    out.mkdir()
    (out / "junk.txt").write_text("x")
    assert cli.main(["check", "--config", str(cfg), "--out", str(out)]) == 1
    assert cli.main(["check", "--config", str(cfg), "--out", str(out),
                     "--force"]) == 0


def test_solve_runs_are_deterministic(tmp_path):
    cfg = tmp_path / "g.json"
    gauss_config(cfg)
    reports = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["solve", "--config", str(cfg), "--out", str(out),
                         "--seed", "7"]) == 0
        rep = json.loads((out / "report.json").read_text())
        rep.pop("timings")
        reports.append(io_utils.canonical_json(rep))
    assert reports[0] == reports[1]


def test_svg_output(tmp_path):
    cfg = tmp_path / "g.json"
    gauss_config(cfg)
    out = tmp_path / "out"
    rc = cli.main(["converge", "--config", str(cfg), "--out", str(out),
                   "--svg"])
    assert rc == 0
    svg = (out / "solution.svg").read_text()
    assert svg.startswith("<?xml")
    assert (out / "decay.csv").exists()


def test_sweep_rank_one_beta(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    out = tmp_path / "out"
    rc = cli.main(["sweep", "--config", str(cfg), "--out", str(out),
                   "--param", "params.beta", "--values", "[0.5, 1.0, 2.0]"])
    assert rc == 0
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert rows[0] == "value,lambda_F,rho_hat,zeta_constructive,zeta_observed"
    for line, beta in zip(rows[1:], (0.5, 1.0, 2.0)):
        cells = line.split(",")
        assert float(cells[0]) == beta
        assert abs(float(cells[1]) - (-0.5 + beta)) < 1e-3
        # flat fitness: no Lyapunov certificate, column stays empty
        assert cells[3] == ""


def test_sweep_gaussian_sigma_smoke(tmp_path):
    cfg = tmp_path / "g.json"
    gauss_config(cfg, cells=32, steps=32)
    out = tmp_path / "out"
    rc = cli.main(["sweep", "--config", str(cfg), "--out", str(out),
                   "--param", "params.sigma", "--values", "[0.2, 0.4]"])
    assert rc == 0
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert len(rows) == 3
    for line in rows[1:]:
        cells = line.split(",")
        assert float(cells[1]) > 0      # lambda_F emitted
        assert float(cells[2]) > 0      # rho_hat emitted


def test_sweep_empty_values_exit_1(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    rc = cli.main(["sweep", "--config", str(cfg), "--out",
                   str(tmp_path / "out"), "--param", "params.beta",
                   "--values", "[]"])
    assert rc == 1


def test_sweep_bad_param_path(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    rc = cli.main(["sweep", "--config", str(cfg), "--out",
                   str(tmp_path / "out"), "--param", "params.nonexistent",
                   "--values", "[1.0]"])
    assert rc == 1


def test_console_script_entry_point(tmp_path):
    cfg = tmp_path / "ro.json"
    write_config(cfg)
    out = tmp_path / "out"
    proc = subprocess.run([sys.executable, "-m", "floquet_transport.cli",
                           "check", "--config", str(cfg), "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_field_binary_roundtrip(tmp_path, box64):
    from floquet_transport import GridField
    rng = np.random.default_rng(0)
    f = GridField(rng.random(box64.num_nodes), box64, time_tag=0.25)
    path = tmp_path / "field.bin"
    io_utils.write_field_binary(path, f)
    g = io_utils.read_field_binary(path)
    np.testing.assert_array_equal(f.values, g.values)
    assert g.box == box64
    assert g.time_tag == 0.25
