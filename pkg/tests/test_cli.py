"""End-to-end command line tests driving main() in process."""

import json
import subprocess
import sys

import numpy as np
import pytest

from bdcert.cli import main
from bdcert.conformal import CalibrationSet, calibration_from_json, calibration_to_json
from bdcert.models import make_linear_classifier
from bdcert.smoothing import NoiseStream, estimate_slpv, ldp_from_slpvs, ldp_to_json

TINY = dict(
    seed=2026,
    num_classes=4,
    dim=16,
    shadow_per_class=25,
    well_trained_per_class=60,
    validation_per_class=12,
    eval_per_class=20,
    hidden_sizes=[16],
    epochs=40,
    shadow_count=8,
    benign_count=2,
    attack_count=1,
    sample_count=256,
    sigma_select_models=1,
    sigma_select_sample_count=64,
    sigma_grid_points=12,
    attack_max_retries=4,
    poison_ratio=0.15,
    trigger_perturb_range=[-1.0, 1.0],
    trigger_nullify_prob=0.0,
)


def write_config(tmp_path, **overrides):
    doc = dict(TINY, **overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


def write_calibration(tmp_path, values, m=0, **metadata):
    cal = CalibrationSet(values=np.asarray(values, dtype=float), m=m,
                         metadata=metadata)
    path = tmp_path / "calibration.json"
    path.write_text(json.dumps(calibration_to_json(cal)))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    payload = json.loads(captured.out) if captured.out.strip() else None
    return code, payload, captured.err


# ----------------------------------------------------------------- calibrate


def test_calibrate_writes_calibration_and_report(tmp_path, capsys):
    cfg = write_config(tmp_path, sigma=1.2)
    out = tmp_path / "out"
    code, summary, _ = run_cli(capsys, "calibrate", "--config", cfg,
                               "--out-dir", str(out))
    assert code == 0
    assert summary["sigma"] == 1.2
    assert summary["calibration_size"] == 8
    assert summary["shadow_errors"] == 0
    cal = calibration_from_json(json.loads((out / "calibration.json").read_text()))
    assert cal.size == 8
    assert cal.metadata["sigma"] == 1.2
    assert (out / "calibration-report.json").exists()
    assert (out / "calibration-report.csv").exists()


def test_calibrate_selects_sigma_when_unpinned(tmp_path, capsys):
    cfg = write_config(tmp_path)
    code, summary, _ = run_cli(capsys, "calibrate", "--config", cfg)
    assert code == 0
    assert summary["sigma"] > 0
    assert "calibration_file" not in summary  # no out-dir requested


# -------------------------------------------------------------------- detect


def test_detect_bare_statistic(tmp_path, capsys):
    gen = np.random.default_rng(4)
    cal_path = write_calibration(tmp_path, gen.uniform(0.3, 0.8, 30))
    code, verdict, _ = run_cli(capsys, "detect", "--calibration", cal_path,
                               "--statistic", "0.95")
    assert code == 0
    assert verdict["alarm"] is True
    assert verdict["p_value"] == 0.0
    assert verdict["alpha"] == 0.05

    code, verdict, _ = run_cli(capsys, "detect", "--calibration", cal_path,
                               "--statistic", "0.1", "--out-dir", str(tmp_path))
    assert code == 0
    assert verdict["alarm"] is False
    # below every calibration value: the adjusted p-value tops out at N/(N+1)
    assert verdict["p_value"] == 1.0 - 1.0 / 31.0
    saved = json.loads((tmp_path / "verdict.json").read_text())
    assert saved == verdict


def test_detect_rejects_statistic_outside_unit_interval(tmp_path, capsys):
    gen = np.random.default_rng(4)
    cal_path = write_calibration(tmp_path, gen.uniform(0.3, 0.8, 30))
    for bad in ("2.0", "-0.1"):
        code, _, err = run_cli(capsys, "detect", "--calibration", cal_path,
                               "--statistic", bad)
        assert code == 2
        assert "[0, 1]" in err


def test_detect_statistic_file_checks_consistency(tmp_path, capsys):
    biases = np.zeros(3)
    biases[1] = 1.0
    model = make_linear_classifier(np.zeros((3, 4)), biases)
    slpvs = [estimate_slpv(model, np.zeros(4), 0.8, 64,
                           stream=NoiseStream(1, (k,))) for k in range(3)]
    ldp_path = tmp_path / "ldp.json"
    ldp_path.write_text(json.dumps(ldp_to_json(ldp_from_slpvs(slpvs))))

    matching = write_calibration(tmp_path, np.linspace(0.4, 0.9, 12), sigma=0.8)
    code, verdict, _ = run_cli(capsys, "detect", "--calibration", matching,
                               "--statistic-file", str(ldp_path))
    assert code == 0
    assert verdict["statistic"] == 1.0
    assert verdict["dominant_class"] == 2
    assert verdict["alarm"] is True

    mismatched = write_calibration(tmp_path, np.linspace(0.4, 0.9, 12), sigma=1.2)
    code, _, err = run_cli(capsys, "detect", "--calibration", mismatched,
                           "--statistic-file", str(ldp_path))
    assert code == 2
    assert "sigma" in err


# ------------------------------------------------------------------- certify


def test_certify_emits_certificate_and_region(tmp_path, capsys):
    values = np.linspace(0.3, 0.68, 19)  # 18th smallest = 0.66 at alpha 0.05
    cal_path = write_calibration(tmp_path, values)
    out = tmp_path / "cert"
    code, doc, _ = run_cli(capsys, "certify", "--calibration", cal_path,
                           "--sigma", "1.0", "--pi", "0.9", "--delta", "0.2",
                           "--region", "--out-dir", str(out))
    assert code == 0
    assert doc["certified"] is True
    assert doc["pi"] == 0.9
    saved = json.loads((out / "certificate.json").read_text())
    assert saved == doc
    region_rows = (out / "region.csv").read_text().strip().splitlines()
    assert region_rows[0] == "pi,delta_bound"
    assert len(region_rows) == 100
    region_doc = json.loads((out / "region.json").read_text())
    assert len(region_doc["pi_grid"]) == 99

    code, doc, _ = run_cli(capsys, "certify", "--calibration", cal_path,
                           "--sigma", "1.0", "--pi", "0.9", "--delta", "5.0")
    assert code == 0
    assert doc["certified"] is False


def test_certify_bad_alpha_is_contract_error(tmp_path, capsys):
    cal_path = write_calibration(tmp_path, np.linspace(0.3, 0.68, 19))
    code, _, err = run_cli(capsys, "certify", "--calibration", cal_path,
                           "--sigma", "1.0", "--pi", "0.9", "--delta", "0.2",
                           "--alpha", "1.5")
    assert code == 2
    assert "alpha" in err


# ----------------------------------------------------------------- fpr-bound


def test_fpr_bound_list_pool(tmp_path, capsys):
    gen = np.random.default_rng(8)
    pool_path = tmp_path / "pool.json"
    pool_path.write_text(json.dumps(gen.uniform(0.3, 0.9, 600).tolist()))
    out = tmp_path / "fpr"
    code, verdict, _ = run_cli(capsys, "fpr-bound", "--pool", str(pool_path),
                               "--calibration-size", "25", "--trials", "80",
                               "--out-dir", str(out))
    assert code == 0
    assert verdict["holds"] is True
    assert verdict["params"]["calibration_size"] == 25
    assert verdict["params"]["outlier_count"] == 0
    assert verdict["params"]["pool_size"] == 600
    csv_lines = (out / "fpr-dominance.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "q,empirical_cdf,beta_cdf"
    assert json.loads((out / "fpr-verdict.json").read_text()) == verdict


def test_fpr_bound_accepts_calibration_file_and_beta(tmp_path, capsys):
    gen = np.random.default_rng(9)
    cal_path = write_calibration(tmp_path, gen.uniform(0.3, 0.9, 200))
    code, verdict, _ = run_cli(capsys, "fpr-bound", "--pool", cal_path,
                               "--calibration-size", "20", "--beta-ratio",
                               "0.2", "--trials", "60", "--seed", "5")
    assert code == 0
    assert verdict["params"]["outlier_count"] == 4
    assert verdict["params"]["beta_ratio"] == 0.2

    bad = tmp_path / "bad-pool.json"
    bad.write_text(json.dumps({"novalues": []}))
    code, _, err = run_cli(capsys, "fpr-bound", "--pool", str(bad),
                           "--calibration-size", "20")
    assert code == 2
    assert "values" in err


# ------------------------------------------------------------ run-experiment


def test_run_experiment_detection(tmp_path, capsys):
    cfg = write_config(tmp_path, sigma=1.2)
    out = tmp_path / "exp"
    code, summary, _ = run_cli(capsys, "run-experiment", "--config", cfg,
                               "--kind", "detection", "--out-dir", str(out))
    assert code == 0
    assert summary["kind"] == "detection"
    assert 0.0 <= summary["tpr"] <= 1.0
    report = json.loads((out / "detection-report.json").read_text())
    assert len(report["rows"]) == 8 + 2 + 1
    assert (out / "detection-report.csv").exists()


def test_run_experiment_certification_with_overrides(tmp_path, capsys):
    cfg = write_config(tmp_path, sigma=1.2, shadow_count=6, benign_count=1)
    code, summary, _ = run_cli(capsys, "run-experiment", "--config", cfg,
                               "--kind", "certification", "--seed", "7",
                               "--alpha", "0.1", "--workers", "1")
    assert code == 0
    assert summary["alpha"] == 0.1
    assert summary["soundness_violations"] == 0
    assert summary["ctpr"] <= summary["tpr_alarm_only"]


def test_run_experiment_fpr_validation(tmp_path, capsys):
    cfg = write_config(tmp_path, fpr_calibration_sizes=[25],
                       fpr_beta_ratios=[0.0], fpr_trials=60,
                       fpr_pool_size=400)
    code, summary, _ = run_cli(capsys, "run-experiment", "--config", cfg,
                               "--kind", "fpr-validation")
    assert code == 0
    assert summary["kind"] == "fpr-validation"
    assert summary["all_cells_hold"] is True


# ---------------------------------------------------------- ldp-monotonicity


def test_ldp_monotonicity_command(tmp_path, capsys):
    out = tmp_path / "mono"
    code, summary, _ = run_cli(capsys, "ldp-monotonicity", "--t-grid", "1,2",
                               "--trials", "3000", "--seed", "3",
                               "--out-dir", str(out))
    assert code == 0
    assert summary["monotone"] is True
    assert [row["t"] for row in summary["estimates"]] == [1.0, 2.0]
    assert (out / "ldp-monotonicity-report.json").exists()

    code, _, err = run_cli(capsys, "ldp-monotonicity", "--t-grid", "2,1",
                           "--trials", "3000")
    assert code == 2
    assert "ascending" in err


# ---------------------------------------------------------------- exit codes


def test_missing_and_malformed_config_exit_2(tmp_path, capsys):
    code, _, err = run_cli(capsys, "calibrate", "--config",
                           str(tmp_path / "nope.json"))
    assert code == 2
    assert "cannot read" in err or "nope.json" in err

    cfg = tmp_path / "weird.json"
    cfg.write_text(json.dumps(dict(TINY, not_a_field=1)))
    code, _, err = run_cli(capsys, "calibrate", "--config", str(cfg))
    assert code == 2
    assert "not_a_field" in err


def test_training_failure_exits_3(tmp_path, capsys):
    cfg = write_config(tmp_path, learning_rate=1e12, epochs=3,
                       sigma_select_models=1)
    code, _, err = run_cli(capsys, "calibrate", "--config", cfg)
    assert code == 3
    assert "training" in err.lower()


def test_module_entry_point_help():
    proc = subprocess.run(
        [sys.executable, "-m", "bdcert.cli", "--help"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    for name in ("calibrate", "detect", "certify", "fpr-bound",
                 "run-experiment", "ldp-monotonicity"):
        assert name in proc.stdout
