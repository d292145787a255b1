import dataclasses
import filecmp
import os

import numpy as np
import pytest

from nsosp import cli, harness
from nsosp.errors import DomainError

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "scripts", "configs")


def test_parse_config_comments_and_errors():
    text = "# header\nT = 50   # horizon\n\nflips=2\npolicies = constant, polyak\n"
    values = harness.parse_config(text)
    assert values == {"T": "50", "flips": "2", "policies": "constant, polyak"}
    cfg = harness.make_config(values)
    assert cfg.T == 50 and cfg.policies == ("constant", "polyak")
    with pytest.raises(DomainError):
        harness.parse_config("T 50")
    with pytest.raises(DomainError):
        harness.make_config({"horizon": "5"})
    with pytest.raises(DomainError):
        harness.make_config(policies="constant, newton")
    with pytest.raises(DomainError):
        harness.make_config(trials=0)


def test_shipped_configs_load():
    for name in sorted(os.listdir(CONFIGS)):
        harness.load_config(os.path.join(CONFIGS, name))


def test_trial_seeds_are_distinct_and_stable():
    seeds = {harness.trial_seeds(0, i) for i in range(20)}
    assert len(seeds) == 20
    assert harness.trial_seeds(3, 1) == harness.trial_seeds(3, 1)


def test_small_run_writes_traces(tmp_path):
    cfg = harness.make_config(T=10, flips=1, trials=1, out=str(tmp_path))
    result = harness.run_experiment(cfg)
    for pol in harness.POLICIES:
        header, rows = harness.read_csv(tmp_path / f"{pol}_trial00.csv")
        assert tuple(header) == harness.CSV_COLUMNS
        assert len(rows) == 10
        A = np.array(rows)
        cols = {c: A[:, i] for i, c in enumerate(header)}
        np.testing.assert_array_equal(cols["t"], np.arange(1, 11))
        for c, cum in (("target", "cum_target"), ("expected_target", "cum_expected"),
                       ("surrogate", "cum_surrogate")):
            np.testing.assert_allclose(np.cumsum(cols[c]), cols[cum], atol=1e-12)
        assert set(cols["target"].tolist()) <= {0.0, 1.0}
    with open(tmp_path / "summary.csv") as fh:
        lines = fh.read().splitlines()
    assert len(lines) == 1 + len(harness.POLICIES)
    assert set(result.summary) == set(harness.POLICIES)


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        harness.run_experiment(harness.make_config(T=300, flips=3, trials=2, out=str(out)))
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors


def test_worker_pool_matches_serial():
    cfg = harness.make_config(T=200, flips=2, trials=2)
    serial = harness.run_experiment(cfg)
    pooled = harness.run_experiment(dataclasses.replace(cfg, workers=2))
    for pol in cfg.policies:
        assert serial.summary[pol].mean == pooled.summary[pol].mean


def test_mean_ci():
    mean, half = harness.mean_ci([1.0, 3.0])
    assert mean == 2.0
    assert half == pytest.approx(1.96 * np.sqrt(2.0) / np.sqrt(2.0))
    assert harness.mean_ci([5.0]) == (5.0, 0.0)


def test_verify_bounds_best_fixed():
    cfg = harness.make_config(T=600, flips=0, margin=0.1, surrogate="smooth-hinge", D=20,
                              comparators="best-fixed", policies=("constant", "polyak"), trials=1)
    checks = harness.verify_bounds(cfg)
    assert len(checks) == 2
    for c in checks:
        assert c.P_T == 0.0 and c.passed, c.describe()


def test_verify_bounds_tracking_with_intervals():
    cfg = harness.load_config(os.path.join(CONFIGS, "bound_smooth_hinge.cfg"), T=2000, flips=3)
    for c in harness.verify_bounds(cfg):
        assert c.passed and c.F_T == 0.0 and len(c.interval_slacks) == cfg.intervals


def test_cli_run(tmp_path, capsys):
    code = cli.main(["run", "--set", "T=20", "--set", "flips=1", "--trials", "1",
                     "--out", str(tmp_path)])
    assert code == 0
    assert "polyak" in capsys.readouterr().out
    assert (tmp_path / "summary.csv").exists()


def test_cli_verify_identities(capsys):
    assert cli.main(["verify-identities", "--seed", "1"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_cli_verify_bounds(capsys):
    code = cli.main(["verify-bounds", "--config", os.path.join(CONFIGS, "bound_smooth_hinge.cfg"),
                     "--set", "T=1000", "--set", "flips=2"])
    assert code == 0
    assert capsys.readouterr().out.count("PASS") == 2


def test_cli_verify_lower(capsys):
    assert cli.main(["verify-lower", "--T", "2000", "--trials", "3"]) == 0


def test_cli_bad_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("surrogate = perceptron\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["run", "--set", "flips=50", "--set", "T=10", "--trials", "1"]) == 2
