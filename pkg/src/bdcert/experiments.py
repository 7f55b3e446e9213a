"""End-to-end desk-scale pipelines: shadow-model calibration, detection and
certification cohorts, the expected-LDP monotonicity study, and the FPR
bound validation harness.

Every pipeline is deterministic given the config seed: data draws, model
training, sample selection, and smoothing noise are all derived from the
seed through fixed stream paths, so reruns (and worker pools of any size)
produce byte-identical reports.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .conformal import (
    beta_outlier_count,
    build_calibration_set,
    detect,
    mad_outlier_count,
    select_sigma,
)
from .certify import certificate_to_json, certify_attack
from .errors import ContractError, TrainingError
from .fpr import (
    check_stochastic_dominance,
    dkw_tolerance,
    fpr_beta_bound,
    simulate_fpr_distribution,
    warn_if_dominance_violated,
)
from .models import (
    LabeledDataset,
    TrainingConfig,
    attack_success_rate,
    generate_random_trigger,
    make_blob_dataset,
    poison_dataset,
    train_feedforward,
)
from .smoothing import (
    AttackMargins,
    NoiseStream,
    compute_ldp,
    ldp_from_json,
    ldp_to_json,
    measure_attack_margins,
    select_ldp_samples,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "load_config",
    "run_calibration_pipeline",
    "run_detection_pipeline",
    "run_certification_pipeline",
    "run_ldp_monotonicity",
    "run_fpr_validation",
    "report_to_json",
    "report_to_csv_rows",
    "save_report",
]

# Stream-path role codes: every random draw in a pipeline hangs off the
# master seed through one of these, so roles never collide.
ROLE_MEANS = 0
ROLE_VAL = 1
ROLE_EVAL = 2
ROLE_SIGMA = 3
ROLE_SHADOW = 4
ROLE_BENIGN = 5
ROLE_ATTACK = 6
ROLE_FPR = 7
ROLE_MONO = 8


def derive_seed(master: int, *path) -> int:
    """A child seed for (master, path), stable across runs and platforms."""
    seq = np.random.SeedSequence(entropy=master, spawn_key=tuple(int(p) for p in path))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated pipeline configuration.

    The defaults describe the desk-scale domain: K=10 classes over d=64
    features, 200 training samples per class for well-trained models and
    40 for shadow models, random additive triggers inside an l2 ball of
    1.5, and the detector at alpha=0.05 with noise scale chosen by the
    psi-diffusion sweep unless sigma is pinned.
    """

    seed: int = 0
    # domain
    num_classes: int = 10
    dim: int = 64
    class_mean_scale: float = 0.5
    spread: float = 0.3
    shadow_per_class: int = 40
    well_trained_per_class: int = 200
    validation_per_class: int = 20
    eval_per_class: int = 30
    # training
    hidden_sizes: tuple = (32,)
    epochs: int = 40
    learning_rate: float = 0.1
    batch_size: int = 32
    # cohort sizes
    shadow_count: int = 100
    benign_count: int = 20
    attack_count: int = 20
    # attack
    trigger_l2_bound: float = 1.5
    trigger_nullify_prob: float = 0.5
    trigger_perturb_range: tuple = (-0.5, 0.5)
    poison_ratio: float = 0.1
    asr_threshold: float = 0.9
    accuracy_drop_limit: float = 0.02
    attack_max_retries: int = 10
    # detector
    sigma: float | None = None
    psi: float = 0.5
    sigma_grid_points: int = 40
    sigma_grid_lo: float = 0.01
    sigma_grid_hi: float = 10.0
    sigma_select_models: int = 5
    sigma_select_sample_count: int = 128
    sample_count: int = 1024
    alpha: float = 0.05
    outlier_policy: str = "fixed"
    outlier_count: int = 0
    beta_ratio: float = 0.1
    conservative: bool = False
    # execution
    workers: int = 1
    # fpr validation grid
    fpr_calibration_sizes: tuple = (25, 50, 100)
    fpr_beta_ratios: tuple = (0.0, 0.1, 0.2)
    fpr_trials: int = 500
    fpr_pool_size: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes",
                           tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "trigger_perturb_range",
                           tuple(float(v) for v in self.trigger_perturb_range))
        object.__setattr__(self, "fpr_calibration_sizes",
                           tuple(int(n) for n in self.fpr_calibration_sizes))
        object.__setattr__(self, "fpr_beta_ratios",
                           tuple(float(b) for b in self.fpr_beta_ratios))
        if self.num_classes < 2:
            raise ContractError("num_classes must be >= 2")
        if self.dim < 1:
            raise ContractError("dim must be >= 1")
        for name in ("class_mean_scale", "spread"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")
        for name in ("shadow_per_class", "well_trained_per_class",
                     "validation_per_class", "eval_per_class", "shadow_count",
                     "benign_count", "sample_count", "sigma_select_models",
                     "sigma_select_sample_count", "attack_max_retries",
                     "sigma_grid_points", "fpr_trials", "fpr_pool_size"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.attack_count < 0:
            raise ContractError("attack_count must be >= 0")
        if not (0.0 < self.alpha < 1.0):
            raise ContractError(f"alpha must be in (0, 1), got {self.alpha!r}")
        if not (0.0 < self.psi < 1.0):
            raise ContractError(f"psi must be in (0, 1), got {self.psi!r}")
        if self.sigma is not None and not self.sigma > 0:
            raise ContractError("sigma must be positive when given")
        if not (0.0 < self.sigma_grid_lo < self.sigma_grid_hi):
            raise ContractError("sigma grid bounds must satisfy 0 < lo < hi")
        if self.outlier_policy not in ("fixed", "beta", "mad"):
            raise ContractError(
                f"outlier_policy must be fixed, beta, or mad, got {self.outlier_policy!r}"
            )
        if self.outlier_count < 0:
            raise ContractError("outlier_count must be >= 0")
        if not (0.0 <= self.beta_ratio < 1.0):
            raise ContractError("beta_ratio must be in [0, 1)")
        if not (0.0 <= self.poison_ratio < 1.0):
            raise ContractError("poison_ratio must be in [0, 1)")
        if not (0.0 < self.asr_threshold <= 1.0):
            raise ContractError("asr_threshold must be in (0, 1]")
        if self.accuracy_drop_limit < 0:
            raise ContractError("accuracy_drop_limit must be >= 0")
        if self.workers < 1:
            raise ContractError("workers must be >= 1")
        if not self.trigger_l2_bound > 0:
            raise ContractError("trigger_l2_bound must be positive")

    def to_json(self) -> dict:
        doc = {}
        for f in fields(self):
            value = getattr(self, f.name)
            doc[f.name] = list(value) if isinstance(value, tuple) else value
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ContractError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)

    def training_config(self, epochs: int | None = None) -> TrainingConfig:
        return TrainingConfig(
            hidden_sizes=self.hidden_sizes,
            epochs=epochs if epochs is not None else self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
        )


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON experiment config."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as err:
        raise ContractError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ContractError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ContractError("config file must hold a JSON object")
    return ExperimentConfig.from_json(doc)


@dataclass(frozen=True)
class ExperimentReport:
    """Pipeline output: per-model rows, aggregates, and environment echo."""

    kind: str
    config: dict
    environment: dict
    rows: tuple
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    def assert_invariants(self):
        """Certified detections must never exceed empirical detections."""
        agg = self.aggregates
        if "ctpr" in agg:
            if "tpr_alarm_only" in agg and agg["ctpr"] > agg["tpr_alarm_only"] + 1e-12:
                raise ContractError(
                    f"certified TPR {agg['ctpr']} exceeds alarm TPR "
                    f"{agg['tpr_alarm_only']}"
                )
            if "tpr" in agg and agg["ctpr"] > agg["tpr"] + 1e-12:
                raise ContractError(
                    f"certified TPR {agg['ctpr']} exceeds TPR {agg['tpr']}"
                )
        for row in self.rows:
            if row.get("certified") and row.get("alarm") is False:
                raise ContractError(
                    f"soundness violation: row {row.get('model_id')} certified "
                    "without an alarm"
                )


def report_to_json(report: ExperimentReport) -> dict:
    return {
        "kind": report.kind,
        "config": report.config,
        "environment": report.environment,
        "rows": list(report.rows),
        "aggregates": report.aggregates,
    }


def save_report(report: ExperimentReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report_to_json(report), handle, indent=2, sort_keys=True)
        handle.write("\n")


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, sort_keys=True)
    if value is None:
        return ""
    return str(value)


def report_to_csv_rows(report: ExperimentReport) -> list:
    """Flat CSV rows: one line per report row over the union of keys."""
    columns = sorted({key for row in report.rows for key in row})
    out = [tuple(columns)]
    for row in report.rows:
        out.append(tuple(_csv_cell(row.get(c)) for c in columns))
    return out


# ------------------------------------------------------------ per-model tasks


def _accuracy(model, data: LabeledDataset) -> float:
    return float(np.mean(model.classify_batch(data.features) == data.labels))


def _pool_dataset(payload, key) -> LabeledDataset:
    features, labels, num_classes = payload[key]
    return LabeledDataset(features=features, labels=labels,
                          num_classes=num_classes)


def _pool_payload(data: LabeledDataset):
    return (data.features, data.labels, data.num_classes)


def _train_cohort_model(config, means, role, index, per_class):
    data = make_blob_dataset(
        config.num_classes, config.dim, per_class, config.spread,
        seed=derive_seed(config.seed, role, index, 0), means=means,
    )
    model = train_feedforward(
        data, config.training_config(), seed=derive_seed(config.seed, role, index, 1)
    )
    return model


def _evaluate_model(config, model, val_pool, eval_pool, role, index, sigma):
    samples = select_ldp_samples(
        model, val_pool, seed=derive_seed(config.seed, role, index, 2)
    )
    ldp = compute_ldp(
        model, samples, sigma, config.sample_count,
        stream=NoiseStream(config.seed, (role, index, 3)),
    )
    return samples, ldp


def _shadow_task(payload) -> dict:
    config = ExperimentConfig.from_json(payload["config"])
    index = payload["index"]
    row = {"model_id": f"shadow-{index}", "role": "shadow", "index": index}
    try:
        model = _train_cohort_model(config, payload["means"], ROLE_SHADOW,
                                    index, config.shadow_per_class)
        _, ldp = _evaluate_model(
            config, model, _pool_dataset(payload, "val_pool"),
            _pool_dataset(payload, "eval_pool"), ROLE_SHADOW, index,
            payload["sigma"],
        )
        row["accuracy"] = _accuracy(model, _pool_dataset(payload, "eval_pool"))
        row["ldp"] = ldp_to_json(ldp)
        row["ldp_value"] = ldp.value
    except (ContractError, TrainingError) as err:
        row["error"] = str(err)
    return row


def _benign_task(payload) -> dict:
    config = ExperimentConfig.from_json(payload["config"])
    index = payload["index"]
    row = {"model_id": f"benign-{index}", "role": "benign", "index": index}
    try:
        model = _train_cohort_model(config, payload["means"], ROLE_BENIGN,
                                    index, config.well_trained_per_class)
        _, ldp = _evaluate_model(
            config, model, _pool_dataset(payload, "val_pool"),
            _pool_dataset(payload, "eval_pool"), ROLE_BENIGN, index,
            payload["sigma"],
        )
        row["accuracy"] = _accuracy(model, _pool_dataset(payload, "eval_pool"))
        row["ldp"] = ldp_to_json(ldp)
        row["ldp_value"] = ldp.value
    except (ContractError, TrainingError) as err:
        row["error"] = str(err)
    return row


def _attack_task(payload) -> dict:
    config = ExperimentConfig.from_json(payload["config"])
    index = payload["index"]
    baseline = payload["baseline_accuracy"]
    eval_pool = _pool_dataset(payload, "eval_pool")
    val_pool = _pool_dataset(payload, "val_pool")
    row = {"model_id": f"attack-{index}", "role": "attacked", "index": index}
    best = None
    try:
        for attempt in range(config.attack_max_retries):
            picker = np.random.default_rng(
                derive_seed(config.seed, ROLE_ATTACK, index, attempt, 0)
            )
            target = int(picker.integers(1, config.num_classes + 1))
            trigger = generate_random_trigger(
                config.dim, config.trigger_l2_bound,
                config.trigger_nullify_prob, config.trigger_perturb_range,
                target, seed=derive_seed(config.seed, ROLE_ATTACK, index, attempt, 1),
            )
            train = make_blob_dataset(
                config.num_classes, config.dim, config.well_trained_per_class,
                config.spread,
                seed=derive_seed(config.seed, ROLE_ATTACK, index, attempt, 2),
                means=payload["means"],
            )
            poisoned = poison_dataset(
                train, trigger, config.poison_ratio,
                seed=derive_seed(config.seed, ROLE_ATTACK, index, attempt, 3),
            )
            model = train_feedforward(
                poisoned, config.training_config(),
                seed=derive_seed(config.seed, ROLE_ATTACK, index, attempt, 4),
            )
            accuracy = _accuracy(model, eval_pool)
            asr = attack_success_rate(model, eval_pool, trigger)
            gates_met = (asr >= config.asr_threshold
                         and baseline - accuracy <= config.accuracy_drop_limit)
            candidate = (gates_met, asr, attempt, model, trigger, accuracy, target)
            if best is None or candidate[:2] > best[:2]:
                best = candidate
            if gates_met:
                break
        gates_met, asr, attempt, model, trigger, accuracy, target = best
        samples = select_ldp_samples(
            model, val_pool, seed=derive_seed(config.seed, ROLE_ATTACK, index, attempt, 5)
        )
        ldp = compute_ldp(
            model, samples, payload["sigma"], config.sample_count,
            stream=NoiseStream(config.seed, (ROLE_ATTACK, index, attempt, 6)),
        )
        margins = measure_attack_margins(
            model, trigger, samples, payload["sigma"], config.sample_count,
            stream=NoiseStream(config.seed, (ROLE_ATTACK, index, attempt, 7)),
            conservative=config.conservative,
        )
        row.update({
            "target": target,
            "attempts": attempt + 1,
            "gates_met": bool(gates_met),
            "asr": asr,
            "accuracy": accuracy,
            "accuracy_drop": baseline - accuracy,
            "trigger": trigger.to_json(),
            "ldp": ldp_to_json(ldp),
            "ldp_value": ldp.value,
            "pi": margins.pi,
            "delta": margins.delta,
            "str_values": [est.value for est in margins.robustness],
        })
    except (ContractError, TrainingError) as err:
        row["error"] = str(err)
    return row


def _map_tasks(task, payloads, workers: int) -> list:
    if workers <= 1 or len(payloads) <= 1:
        return [task(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(task, payloads))


# ------------------------------------------------------------------ pipelines


def _draw_means(config: ExperimentConfig) -> np.ndarray:
    gen = NoiseStream(config.seed, (ROLE_MEANS,)).generator()
    return config.class_mean_scale * gen.standard_normal(
        (config.num_classes, config.dim)
    )


def _select_pipeline_sigma(config, means, val_pool) -> float:
    if config.sigma is not None:
        return float(config.sigma)
    models = []
    samples = []
    for j in range(config.sigma_select_models):
        model = _train_cohort_model(config, means, ROLE_SIGMA, j,
                                    config.shadow_per_class)
        models.append(model)
        samples.append(select_ldp_samples(
            model, val_pool, seed=derive_seed(config.seed, ROLE_SIGMA, j, 2)
        ))
    feature_scale = float(np.std(val_pool.features))
    grid = np.geomspace(config.sigma_grid_lo * feature_scale,
                        config.sigma_grid_hi * feature_scale,
                        config.sigma_grid_points)
    return select_sigma(models, samples, config.psi, grid,
                        config.sigma_select_sample_count,
                        NoiseStream(config.seed, (ROLE_SIGMA,)))


def _outlier_count(config: ExperimentConfig, values) -> int:
    if config.outlier_policy == "fixed":
        return min(config.outlier_count, len(values) - 1)
    if config.outlier_policy == "beta":
        return beta_outlier_count(config.beta_ratio, len(values))
    return min(mad_outlier_count(values), len(values) - 1)


def _environment(config: ExperimentConfig) -> dict:
    return {
        "seed": config.seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
    }


def _calibration_phase(config: ExperimentConfig):
    """Shared opening of every cohort pipeline: draw the domain, pick the
    noise scale, train the shadow cohort, and build the calibration set."""
    means = _draw_means(config)
    val_pool = make_blob_dataset(
        config.num_classes, config.dim, config.validation_per_class,
        config.spread, seed=derive_seed(config.seed, ROLE_VAL), means=means,
    )
    eval_pool = make_blob_dataset(
        config.num_classes, config.dim, config.eval_per_class,
        config.spread, seed=derive_seed(config.seed, ROLE_EVAL), means=means,
    )
    sigma = _select_pipeline_sigma(config, means, val_pool)

    base_payload = {
        "config": config.to_json(),
        "means": means,
        "val_pool": _pool_payload(val_pool),
        "eval_pool": _pool_payload(eval_pool),
        "sigma": sigma,
    }
    shadow_rows = _map_tasks(
        _shadow_task,
        [dict(base_payload, index=i) for i in range(config.shadow_count)],
        config.workers,
    )
    shadow_ldps = [ldp_from_json(r["ldp"]) for r in shadow_rows if "ldp" in r]
    if not shadow_ldps:
        raise ContractError("every shadow model failed; cannot calibrate")
    m = _outlier_count(config, [ldp.value for ldp in shadow_ldps])
    calibration = build_calibration_set(
        shadow_ldps, m, extra_metadata={"psi": config.psi}
    )
    return base_payload, shadow_rows, calibration


def run_calibration_pipeline(config: ExperimentConfig):
    """Shadow phase on its own: returns the calibration set ready to
    persist, plus a report covering the shadow cohort."""
    base_payload, shadow_rows, calibration = _calibration_phase(config)
    report = ExperimentReport(
        kind="calibration",
        config=config.to_json(),
        environment=_environment(config),
        rows=tuple(shadow_rows),
        aggregates={
            "sigma": base_payload["sigma"],
            "calibration_size": calibration.size,
            "outlier_count": calibration.m,
            "alpha": config.alpha,
            "shadow_errors": sum("error" in r for r in shadow_rows),
        },
    )
    return calibration, report


def _run_cohorts(config: ExperimentConfig, certify: bool) -> ExperimentReport:
    base_payload, shadow_rows, calibration = _calibration_phase(config)
    sigma = base_payload["sigma"]
    values = list(calibration.values)

    benign_rows = _map_tasks(
        _benign_task,
        [dict(base_payload, index=i) for i in range(config.benign_count)],
        config.workers,
    )
    benign_ok = [r for r in benign_rows if "ldp" in r]
    baseline_accuracy = (
        float(np.mean([r["accuracy"] for r in benign_ok])) if benign_ok else 0.0
    )

    attack_rows = _map_tasks(
        _attack_task,
        [dict(base_payload, index=i, baseline_accuracy=baseline_accuracy)
         for i in range(config.attack_count)],
        config.workers,
    )

    for row in benign_rows + attack_rows:
        if "ldp" not in row:
            continue
        verdict = detect(calibration, ldp_from_json(row["ldp"]), config.alpha)
        row.update({
            "p_value": verdict.p_value,
            "alarm": verdict.alarm,
            "dominant_class": verdict.dominant_class,
            "threshold_value": verdict.threshold_value,
            "tie_count": verdict.tie_count,
        })
        if certify and row["role"] == "attacked":
            certificate = certify_attack(
                calibration, config.alpha, sigma,
                AttackMargins(pi=row["pi"], delta=row["delta"]),
                conservative=config.conservative,
            )
            row["certificate"] = certificate_to_json(certificate)
            row["certified"] = certificate.certified

    benign_values = [r["ldp_value"] for r in benign_ok]
    precondition_gap = None
    if benign_values:
        precondition_gap = warn_if_dominance_violated(values, benign_values)

    aggregates = {
        "sigma": sigma,
        "calibration_size": calibration.size,
        "outlier_count": calibration.m,
        "alpha": config.alpha,
        "shadow_errors": sum("error" in r for r in shadow_rows),
        "benign_errors": sum("error" in r for r in benign_rows),
        "attack_errors": sum("error" in r for r in attack_rows),
        "tie_total": sum(r.get("tie_count", 0)
                         for r in benign_rows + attack_rows),
    }
    if precondition_gap is not None:
        aggregates["dominance_precondition_gap"] = precondition_gap
    if benign_ok:
        aggregates["fpr"] = float(np.mean([r["alarm"] for r in benign_ok]))
        aggregates["benign_accuracy"] = baseline_accuracy
    attacked_ok = [r for r in attack_rows if "ldp" in r]
    if attacked_ok:
        aggregates["tpr"] = float(np.mean(
            [r["alarm"] and r["dominant_class"] == r["target"]
             for r in attacked_ok]
        ))
        aggregates["tpr_alarm_only"] = float(np.mean(
            [r["alarm"] for r in attacked_ok]
        ))
        aggregates["mean_asr"] = float(np.mean([r["asr"] for r in attacked_ok]))
        aggregates["gates_met_count"] = sum(r["gates_met"] for r in attacked_ok)
    if certify and attacked_ok:
        aggregates["ctpr"] = float(np.mean(
            [r["certified"] for r in attacked_ok]
        ))
        aggregates["soundness_violations"] = sum(
            r["certified"] and not r["alarm"] for r in attacked_ok
        )

    report = ExperimentReport(
        kind="certification" if certify else "detection",
        config=config.to_json(),
        environment=_environment(config),
        rows=tuple(shadow_rows + benign_rows + attack_rows),
        aggregates=aggregates,
    )
    return report


def run_detection_pipeline(config: ExperimentConfig) -> ExperimentReport:
    """Train shadow models, calibrate, and score benign plus attacked
    cohorts with the conformal detector."""
    return _run_cohorts(config, certify=False)


def run_certification_pipeline(config: ExperimentConfig) -> ExperimentReport:
    """Detection pipeline plus attack margins and a certificate per attack."""
    return _run_cohorts(config, certify=True)


# --------------------------------------------------- expected-LDP monotonicity


def run_ldp_monotonicity(
    t_grid,
    sigma: float,
    trials: int = 100_000,
    seed: int = 0,
    class_separation: float = 1.0,
    class_scale: float = 1.0,
    swap_class_labels: bool = False,
) -> ExperimentReport:
    """Monte Carlo check that the expected LDP grows with boundary deviation.

    The domain is two unit-prior 1-D Gaussians at -c and +c (scale
    class_scale); the classifier family thresholds the likelihood ratio at
    t >= 1, which shifts the decision boundary to -scale^2*ln(t)/(2c).
    For each t the expected LDP is max over the two classes of the mean
    smoothed probability vector, estimated with common random numbers so
    consecutive differences carry tight error bands.
    """
    ts = [float(t) for t in t_grid]
    if not ts:
        raise ContractError("t_grid must be nonempty")
    if ts[0] < 1.0:
        raise ContractError(f"thresholds must start at t >= 1, got {ts[0]}")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ContractError("t_grid must be strictly ascending")
    if not sigma > 0:
        raise ContractError("sigma must be positive")
    if trials < 2:
        raise ContractError("need at least 2 Monte Carlo draws")
    if not (class_separation > 0 and class_scale > 0):
        raise ContractError("class separation and scale must be positive")

    c = float(class_separation)
    scale = float(class_scale)
    stream = NoiseStream(seed, (ROLE_MONO,))
    draws_a = -c + scale * stream.substream(0).generator().standard_normal(trials)
    draws_b = c + scale * stream.substream(1).generator().standard_normal(trials)

    from .statfun import gaussian_cdf

    cdf = np.frompyfunc(gaussian_cdf, 1, 1)

    def smoothed_low_probability(x, boundary):
        # chance that Gaussian smoothing pushes x below the boundary
        return cdf((boundary - x) / sigma).astype(float)

    rows = []
    winner_draws = []
    for t in ts:
        boundary = -(scale ** 2) * math.log(t) / (2.0 * c)
        low_a = smoothed_low_probability(draws_a, boundary)
        low_b = smoothed_low_probability(draws_b, boundary)
        per_draw = np.stack([
            0.5 * (low_a + low_b),              # class at -c
            0.5 * ((1.0 - low_a) + (1.0 - low_b)),
        ])
        if swap_class_labels:
            per_draw = per_draw[::-1]
        means = per_draw.mean(axis=1)
        winner = int(np.argmax(means))
        estimate = float(means[winner])
        winner_draws.append(per_draw[winner])
        rows.append({
            "t": t,
            "boundary": boundary,
            "expected_ldp": estimate,
            "class_means": [float(v) for v in means],
            "winner_class": winner + 1,
            "standard_error": float(per_draw[winner].std(ddof=1)
                                    / math.sqrt(trials)),
        })

    diffs = []
    monotone = True
    for i in range(len(ts) - 1):
        delta_draws = winner_draws[i + 1] - winner_draws[i]
        diff = float(delta_draws.mean())
        band = 3.0 * float(delta_draws.std(ddof=1) / math.sqrt(trials))
        ok = diff >= -band
        monotone = monotone and ok
        diffs.append({
            "from_t": ts[i],
            "to_t": ts[i + 1],
            "difference": diff,
            "band": band,
            "nondecreasing": bool(ok),
        })

    return ExperimentReport(
        kind="ldp-monotonicity",
        config={
            "t_grid": ts,
            "sigma": sigma,
            "trials": trials,
            "seed": seed,
            "class_separation": c,
            "class_scale": scale,
            "swap_class_labels": bool(swap_class_labels),
        },
        environment={"seed": seed, "package_version": __version__,
                     "numpy_version": np.__version__},
        rows=tuple(rows),
        aggregates={"monotone": bool(monotone), "differences": diffs},
    )


# -------------------------------------------------------------- fpr validation


def run_fpr_validation(config: ExperimentConfig) -> ExperimentReport:
    """Dominance validation over the (calibration size, outlier ratio) grid
    with a synthetic exchangeable LDP pool."""
    gen = NoiseStream(config.seed, (ROLE_FPR, 0)).generator()
    pool = gen.uniform(0.25, 0.95, size=config.fpr_pool_size)
    rows = []
    cell = 0
    for beta_ratio in config.fpr_beta_ratios:
        for n in config.fpr_calibration_sizes:
            m = beta_outlier_count(beta_ratio, n) if beta_ratio > 0 else 0
            empirical = simulate_fpr_distribution(
                pool, n, m, config.alpha, trials=config.fpr_trials,
                seed=derive_seed(config.seed, ROLE_FPR, 1, cell),
            )
            bound = fpr_beta_bound(n, m, config.alpha)
            holds, worst_gap = check_stochastic_dominance(
                empirical, bound, tolerance=dkw_tolerance(config.fpr_trials)
            )
            rows.append({
                "calibration_size": n,
                "beta_ratio": beta_ratio,
                "outlier_count": m,
                "alpha": config.alpha,
                "trials": config.fpr_trials,
                "holds": bool(holds),
                "worst_gap": worst_gap,
                "fpr_quantile_095": empirical.quantile(0.95),
                "beta_params": {"a": bound.a, "b": bound.b, "l": bound.l},
            })
            cell += 1
    quantile_monotone = {}
    for beta_ratio in config.fpr_beta_ratios:
        cells = [r for r in rows if r["beta_ratio"] == beta_ratio]
        cells.sort(key=lambda r: r["calibration_size"])
        quantiles = [r["fpr_quantile_095"] for r in cells]
        quantile_monotone[repr(float(beta_ratio))] = bool(
            all(b <= a for a, b in zip(quantiles, quantiles[1:]))
        )
    return ExperimentReport(
        kind="fpr-validation",
        config=config.to_json(),
        environment=_environment(config),
        rows=tuple(rows),
        aggregates={
            "all_cells_hold": bool(all(r["holds"] for r in rows)),
            "quantile_095_decreasing_in_size": quantile_monotone,
        },
    )
