"""Command line front end.

Subcommands mirror the desk workflow: `calibrate` trains the shadow
cohort and persists the calibration set, `detect` scores one suspect
statistic against it, `certify` turns measured attack margins into a
certificate (optionally with a certified-region grid), `fpr-bound`
validates the false-positive-rate bound against a value pool, and
`run-experiment` / `ldp-monotonicity` drive the full study pipelines.

Exit codes: 0 on success, 2 when an input violates a documented
contract (bad flag values, malformed files, inconsistent settings),
3 when model training fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .certify import (
    certificate_to_json,
    certified_region,
    certify_attack,
    region_csv_rows,
    region_to_json,
)
from .conformal import (
    alarm_threshold,
    beta_outlier_count,
    calibration_from_json,
    calibration_to_json,
    conformal_pvalue,
)
from .conformal import detect as conformal_detect
from .errors import ContractError, TrainingError
from .experiments import (
    ExperimentConfig,
    load_config,
    report_to_csv_rows,
    run_calibration_pipeline,
    run_certification_pipeline,
    run_detection_pipeline,
    run_fpr_validation,
    run_ldp_monotonicity,
    save_report,
)
from .fpr import (
    dominance_csv_rows,
    dominance_report,
    fpr_beta_bound,
    simulate_fpr_distribution,
)
from .smoothing import AttackMargins, ldp_from_json

CONFIG_OVERRIDE_FIELDS = ("seed", "sigma", "psi", "alpha", "beta_ratio",
                          "conservative", "workers")


def _read_json(path: str) -> object:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ContractError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path} is not valid JSON: {exc}") from exc


def _write_json(path: str, doc: object) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def _out_dir(args) -> str | None:
    if args.out_dir is None:
        return None
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def _emit(doc: dict) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _load_overridden_config(args) -> ExperimentConfig:
    config = load_config(args.config)
    doc = config.to_json()
    for field in CONFIG_OVERRIDE_FIELDS:
        value = getattr(args, field, None)
        if value is not None:
            doc[field] = value
    # an explicit psi asks for data-driven noise selection, so it clears a
    # pinned sigma unless one was passed alongside it
    if getattr(args, "psi", None) is not None and getattr(args, "sigma", None) is None:
        doc["sigma"] = None
    return ExperimentConfig.from_json(doc)


def _add_common_flags(parser, sigma_psi=True):
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--alpha", type=float, default=None,
                        help="detection level (default 0.05)")
    parser.add_argument("--out-dir", default=None,
                        help="directory for output files (created if missing)")
    if sigma_psi:
        group = parser.add_mutually_exclusive_group()
        group.add_argument("--sigma", type=float, default=None,
                           help="pin the smoothing noise scale")
        group.add_argument("--psi", type=float, default=None,
                           help="diffusion target for data-driven sigma selection")


# ----------------------------------------------------------------- calibrate


def _cmd_calibrate(args) -> int:
    config = _load_overridden_config(args)
    calibration, report = run_calibration_pipeline(config)
    out = _out_dir(args)
    summary = dict(report.aggregates)
    if out is not None:
        cal_path = os.path.join(out, "calibration.json")
        _write_json(cal_path, calibration_to_json(calibration))
        save_report(report, os.path.join(out, "calibration-report.json"))
        _write_csv(os.path.join(out, "calibration-report.csv"),
                   report_to_csv_rows(report))
        summary["calibration_file"] = cal_path
    _emit(summary)
    return 0


# -------------------------------------------------------------------- detect


def _cmd_detect(args) -> int:
    alpha = 0.05 if args.alpha is None else args.alpha
    calibration = calibration_from_json(_read_json(args.calibration))
    if args.statistic_file is not None:
        ldp = ldp_from_json(_read_json(args.statistic_file))
        verdict = conformal_detect(calibration, ldp, alpha).to_json()
    else:
        if not (0.0 <= args.statistic <= 1.0):
            raise ContractError(
                f"--statistic must be a probability in [0, 1], got {args.statistic!r}"
            )
        threshold, _ = alarm_threshold(calibration, alpha)
        p_value = conformal_pvalue(calibration, args.statistic)
        verdict = {
            "statistic": float(args.statistic),
            "p_value": p_value,
            "alarm": bool(p_value <= alpha),
            "alpha": alpha,
            "threshold_value": threshold,
        }
    out = _out_dir(args)
    if out is not None:
        _write_json(os.path.join(out, "verdict.json"), verdict)
    _emit(verdict)
    return 0


# ------------------------------------------------------------------- certify


def _cmd_certify(args) -> int:
    alpha = 0.05 if args.alpha is None else args.alpha
    calibration = calibration_from_json(_read_json(args.calibration))
    margins = AttackMargins(pi=args.pi, delta=args.delta)
    certificate = certify_attack(calibration, alpha, args.sigma, margins,
                                 conservative=bool(args.conservative))
    doc = certificate_to_json(certificate)
    out = _out_dir(args)
    if out is not None:
        _write_json(os.path.join(out, "certificate.json"), doc)
    if args.region:
        grid = np.linspace(0.01, 0.99, args.region_points)
        region = certified_region(calibration, alpha, args.sigma, grid,
                                  conservative=bool(args.conservative))
        if out is not None:
            _write_json(os.path.join(out, "region.json"), region_to_json(region))
            _write_csv(os.path.join(out, "region.csv"), region_csv_rows(region))
        else:
            doc = dict(doc, region=region_to_json(region))
    _emit(doc)
    return 0


# ----------------------------------------------------------------- fpr-bound


def _cmd_fpr_bound(args) -> int:
    alpha = 0.05 if args.alpha is None else args.alpha
    pool_doc = _read_json(args.pool)
    if isinstance(pool_doc, dict):
        if "values" not in pool_doc:
            raise ContractError(
                f"{args.pool} must be a JSON array or an object with a "
                f"'values' key"
            )
        pool = pool_doc["values"]
    else:
        pool = pool_doc
    n = args.calibration_size
    beta_ratio = 0.0 if args.beta_ratio is None else args.beta_ratio
    m = beta_outlier_count(beta_ratio, n)
    seed = 0 if args.seed is None else args.seed
    empirical = simulate_fpr_distribution(pool, n, m, alpha,
                                          trials=args.trials, seed=seed)
    bound = fpr_beta_bound(n, m, alpha)
    verdict = dominance_report(empirical, bound)
    verdict["params"].update({
        "beta_ratio": beta_ratio,
        "trials": args.trials,
        "seed": seed,
        "pool_size": len(pool),
    })
    out = _out_dir(args)
    if out is not None:
        _write_json(os.path.join(out, "fpr-verdict.json"), verdict)
        _write_csv(os.path.join(out, "fpr-dominance.csv"),
                   dominance_csv_rows(empirical, bound))
    _emit(verdict)
    return 0


# ------------------------------------------------------------ run-experiment


_PIPELINES = {
    "detection": run_detection_pipeline,
    "certification": run_certification_pipeline,
    "fpr-validation": run_fpr_validation,
}


def _cmd_run_experiment(args) -> int:
    config = _load_overridden_config(args)
    report = _PIPELINES[args.kind](config)
    report.assert_invariants()
    out = _out_dir(args)
    summary = dict(report.aggregates, kind=report.kind)
    if out is not None:
        report_path = os.path.join(out, f"{report.kind}-report.json")
        save_report(report, report_path)
        _write_csv(os.path.join(out, f"{report.kind}-report.csv"),
                   report_to_csv_rows(report))
        summary["report_file"] = report_path
    _emit(summary)
    return 0


# ---------------------------------------------------------- ldp-monotonicity


def _parse_t_grid(text: str) -> list:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ContractError(f"bad t-grid {text!r}: {exc}") from exc


def _cmd_ldp_monotonicity(args) -> int:
    report = run_ldp_monotonicity(
        _parse_t_grid(args.t_grid),
        sigma=1.0 if args.sigma is None else args.sigma,
        trials=args.trials,
        seed=0 if args.seed is None else args.seed,
        class_separation=args.class_separation,
        class_scale=args.class_scale,
    )
    out = _out_dir(args)
    summary = {
        "monotone": report.aggregates["monotone"],
        "estimates": [
            {"t": row["t"], "expected_ldp": row["expected_ldp"],
             "standard_error": row["standard_error"]}
            for row in report.rows
        ],
    }
    if out is not None:
        report_path = os.path.join(out, "ldp-monotonicity-report.json")
        save_report(report, report_path)
        _write_csv(os.path.join(out, "ldp-monotonicity-report.csv"),
                   report_to_csv_rows(report))
        summary["report_file"] = report_path
    _emit(summary)
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdcert",
        description="certified backdoor detection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate",
                       help="train the shadow cohort and persist the calibration set")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel training processes")
    _add_common_flags(p)
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("detect",
                       help="score one suspect statistic against a calibration file")
    p.add_argument("--calibration", required=True,
                   help="calibration JSON from `calibrate`")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--statistic", type=float,
                       help="bare statistic value in [1/K, 1]")
    group.add_argument("--statistic-file",
                       help="full statistic JSON (enables consistency checks "
                            "and the dominant class)")
    _add_common_flags(p, sigma_psi=False)
    p.set_defaults(handler=_cmd_detect)

    p = sub.add_parser("certify",
                       help="issue a detection certificate from measured margins")
    p.add_argument("--calibration", required=True,
                   help="calibration JSON from `calibrate`")
    p.add_argument("--sigma", type=float, required=True,
                   help="smoothing noise scale the margins were measured at")
    p.add_argument("--pi", type=float, required=True,
                   help="smoothed target-class probability at the trigger")
    p.add_argument("--delta", type=float, required=True,
                   help="trigger perturbation norm")
    p.add_argument("--conservative", action="store_true", default=None,
                   help="use finite-sample confidence corrections")
    p.add_argument("--region", action="store_true",
                   help="also emit the certified (pi, delta) region grid")
    p.add_argument("--region-points", type=int, default=99,
                   help="grid resolution for --region (default 99)")
    _add_common_flags(p, sigma_psi=False)
    p.set_defaults(handler=_cmd_certify)

    p = sub.add_parser("fpr-bound",
                       help="validate the false-positive-rate bound on a value pool")
    p.add_argument("--pool", required=True,
                   help="JSON array of statistic values, or an object with a "
                        "'values' key (a calibration file works)")
    p.add_argument("--calibration-size", type=int, required=True,
                   help="calibration size N per simulated trial")
    p.add_argument("--beta-ratio", type=float, default=None,
                   help="outlier ratio, removes round(beta*N) top values "
                        "(default 0)")
    p.add_argument("--trials", type=int, default=500,
                   help="simulated trials (default 500)")
    _add_common_flags(p, sigma_psi=False)
    p.set_defaults(handler=_cmd_fpr_bound)

    p = sub.add_parser("run-experiment",
                       help="run a full pipeline from a config file")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--kind", choices=sorted(_PIPELINES), default="detection",
                   help="pipeline to run (default detection)")
    p.add_argument("--beta-ratio", type=float, default=None,
                   help="override the config outlier ratio")
    p.add_argument("--conservative", action="store_true", default=None,
                   help="certify with finite-sample confidence corrections")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel training processes")
    _add_common_flags(p)
    p.set_defaults(handler=_cmd_run_experiment)

    p = sub.add_parser("ldp-monotonicity",
                       help="Monte Carlo check that expected LDP grows with "
                            "boundary deviation")
    p.add_argument("--t-grid", default="1,1.5,2,3",
                   help="comma-separated likelihood-ratio thresholds, "
                        "ascending from 1 (default 1,1.5,2,3)")
    p.add_argument("--trials", type=int, default=100_000,
                   help="Monte Carlo draws per class (default 100000)")
    p.add_argument("--class-separation", type=float, default=1.0,
                   help="half-distance between the two class means")
    p.add_argument("--class-scale", type=float, default=1.0,
                   help="in-class standard deviation")
    p.add_argument("--sigma", type=float, default=None,
                   help="smoothing noise scale (default 1.0)")
    _add_common_flags(p, sigma_psi=False)
    p.set_defaults(handler=_cmd_ldp_monotonicity)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
