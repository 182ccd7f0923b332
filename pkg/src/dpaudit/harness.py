"""End-to-end audits: build the poison pair, calibrate, run trials, estimate.

Random streams are allocated by purpose so that no two consumers share one:

* fixed ids below ``CALIBRATION_BASE`` for dataset synthesis, splits,
  attack construction, the reference model and shared initializations;
* ``CALIBRATION_BASE + 2 i + arm`` for calibration trial ``i``;
* ``ESTIMATION_BASE + 2 i + arm`` for estimation trial ``i``.

Each trial is a pure function of its stream id, so results do not depend on
how many worker processes execute them.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import itertools
import json
import logging
import math
import time
import warnings
from pathlib import Path

import numpy as np

from dpaudit import __version__
from dpaudit.attacks import (
    PatchPerturbation,
    PoisonPlan,
    ReluFeatureMap,
    backdoor_generate,
    clipbkd_generate,
    feature_clipbkd_generate,
    plan_statistic,
)
from dpaudit.data import Dataset, SynthSpec, load_dataset, synth_dataset, train_test_split
from dpaudit.dpsgd import SgdConfig, TrainingDiverged, dp_sgd_train
from dpaudit.estimator import (
    EpsilonEstimate,
    TrialCounts,
    audit_eps,
    eps_from_advantage,
    eps_opt,
    membership_advantage,
)
from dpaudit.models import ModelParams, accuracy, init_params, loss
from dpaudit.numerics import RngStream
from dpaudit.ridge import random_design, ridge_audit

log = logging.getLogger(__name__)

DATA_STREAM = 0
SPLIT_STREAM = 1
ATTACK_STREAM = 2
REFERENCE_STREAM = 3
INIT_STREAM = 4
ENCODER_STREAM = 5
RIDGE_STREAM = 6
MI_BASE = 1 << 16
CALIBRATION_BASE = 1 << 20
ESTIMATION_BASE = 1 << 40

MODEL_ARCH = {"lr": "logistic", "fnn": "fnn"}
ATTACKS = ("clipbkd", "backdoor", "feature-clipbkd")
MAX_FAILURE_RATE = 0.01


class AuditAborted(RuntimeError):
    """Too many training runs diverged for the audit to be meaningful."""


@dataclasses.dataclass(frozen=True)
class AuditConfig:
    """Everything needed to replay an audit bit-for-bit.

    ``calibration_trials`` defaults to ``trials``. ``delta`` and ``alpha``
    are the estimator's parameters; the claimed guarantee lives in
    ``sgd.claimed_eps_th`` / ``sgd.delta``. When ``data`` is a CSV path it
    wins over ``synthetic``. ``test_size`` rows are held out (drawn fresh for
    synthetic data, split off for CSV data) for the backdoor statistic.
    """

    attack: str = "clipbkd"
    model: str = "lr"
    k: int = 1
    trials: int = 100
    calibration_trials: int | None = None
    alpha: float = 0.01
    delta: float = 0.0
    sgd: SgdConfig = SgdConfig()
    data: str | None = None
    synthetic: str = "gauss:n=1000,d=20"
    test_size: int = 200
    seed: int = 0
    threads: int = 1
    poison_norm: float | None = None
    target: int = 1
    patch: PatchPerturbation | None = None
    q_low: int | None = None
    q_high: int | None = None
    ascent_iterations: int = 10000
    ascent_step: float = 1.0

    def __post_init__(self):
        if self.attack not in ATTACKS:
            raise ValueError(f"unknown attack {self.attack!r}")
        if self.model not in MODEL_ARCH:
            raise ValueError(f"unknown model {self.model!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.calibration_trials is not None and self.calibration_trials < 2:
            raise ValueError("calibration needs at least 2 trials per arm")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")

    @property
    def t_cal(self) -> int:
        return self.trials if self.calibration_trials is None else self.calibration_trials

    @property
    def arch(self) -> str:
        return MODEL_ARCH[self.model]

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["sgd"] = {k: _enc(v) for k, v in dataclasses.asdict(self.sgd).items()}
        out["patch"] = None if self.patch is None else self.patch.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AuditConfig":
        d = dict(d)
        d["sgd"] = SgdConfig(**{k: _dec(v) for k, v in d["sgd"].items()})
        if d.get("patch") is not None:
            d["patch"] = PatchPerturbation.from_dict(d["patch"])
        return cls(**d)


def _enc(x):
    # strict JSON has no inf/nan literals
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _dec(x):
    if x in ("inf", "-inf", "nan"):
        return float(x)
    return x


@dataclasses.dataclass(frozen=True, eq=False)
class AuditResult:
    kind: str
    config: dict
    estimate: EpsilonEstimate
    threshold: float | None
    eps_opt: float | None
    eps_th: float
    accuracy: dict
    wall_time: float
    seed: int
    version: str = __version__
    failed_trials: int = 0
    extra: dict = dataclasses.field(default_factory=dict)

    @property
    def eps_lb(self) -> float:
        return self.estimate.eps_lb

    @property
    def counts(self) -> TrialCounts | None:
        return self.estimate.counts

    def to_json(self) -> dict:
        est = self.estimate
        c = est.counts
        return {
            "kind": self.kind,
            "config": self.config,
            "counts": None if c is None else {"ct0": c.ct0, "ct1": c.ct1, "t": c.t},
            "p0_hat": est.p0_hat,
            "p1_hat": est.p1_hat,
            "eps_lb": _enc(est.eps_lb),
            "k": est.k,
            "delta": est.delta,
            "alpha": est.alpha,
            "used_complement": est.used_complement,
            "used_arm_swap": est.used_arm_swap,
            "threshold": _enc(self.threshold),
            "eps_opt": self.eps_opt,
            "eps_th": _enc(self.eps_th),
            "accuracy": self.accuracy,
            "wall_time": self.wall_time,
            "seed": self.seed,
            "version": self.version,
            "failed_trials": self.failed_trials,
            "extra": self.extra,
        }

    @classmethod
    def from_json(cls, d: dict) -> "AuditResult":
        c = d["counts"]
        counts = None if c is None else TrialCounts(c["ct0"], c["ct1"], c["t"])
        est = EpsilonEstimate(d["p0_hat"], d["p1_hat"], _dec(d["eps_lb"]), d["k"], d["delta"], d["alpha"],
                              d["used_complement"], d["used_arm_swap"], counts)
        return cls(d["kind"], d["config"], est, _dec(d["threshold"]), d["eps_opt"], _dec(d["eps_th"]),
                   d["accuracy"], d["wall_time"], d["seed"], d["version"], d["failed_trials"], d["extra"])

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "AuditResult":
        return cls.from_json(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# data and attack construction


def load_source(cfg: AuditConfig) -> tuple[Dataset, Dataset]:
    """Training pool and held-out rows for an audit configuration."""
    if cfg.data is not None:
        full = load_dataset(cfg.data)
        frac = min(0.5, cfg.test_size / full.n)
        return train_test_split(full, frac, RngStream(cfg.seed, SPLIT_STREAM))
    spec = SynthSpec.parse(cfg.synthetic)
    train = synth_dataset(spec, RngStream(cfg.seed, DATA_STREAM))
    test = synth_dataset(dataclasses.replace(spec, n=max(2, cfg.test_size)), RngStream(cfg.seed, SPLIT_STREAM))
    return train, test


def fixed_init(cfg: AuditConfig, input_dim: int, class_count: int) -> ModelParams | None:
    """Initialization shared by every trial, or None for per-trial random init.

    Logistic regression with zero init scale starts at zero. A ReLU network
    started at zero never leaves it, so its fixed initialization is a single
    Glorot draw reused by all trials.
    """
    if cfg.sgd.init_scale > 0:
        return None
    if cfg.arch == "logistic":
        return init_params("logistic", input_dim, class_count, 0.0)
    return init_params("fnn", input_dim, class_count, 1.0, RngStream(cfg.seed, INIT_STREAM))


def reference_model(cfg: AuditConfig, data: Dataset) -> ModelParams:
    """Non-private, unclipped model on the clean data; picks the target class."""
    sgd = dataclasses.replace(cfg.sgd, clip_norm=math.inf, noise_multiplier=0.0, init_scale=0.0)
    init = fixed_init(dataclasses.replace(cfg, sgd=sgd), data.d, data.class_count)
    return dp_sgd_train(data, sgd, cfg.arch, RngStream(cfg.seed, REFERENCE_STREAM), init=init)


def pretrained_encoder(cfg: AuditConfig, data: Dataset) -> ReluFeatureMap:
    """Hidden layer of a non-private network trained on the clean data."""
    sgd = dataclasses.replace(cfg.sgd, clip_norm=math.inf, noise_multiplier=0.0, init_scale=1.0)
    net = dp_sgd_train(data, sgd, "fnn", RngStream(cfg.seed, ENCODER_STREAM))
    return ReluFeatureMap.from_params(net)


def default_patch(d: int) -> PatchPerturbation:
    side = int(round(math.sqrt(d)))
    if side * side != d:
        raise ValueError(f"cannot infer a square image shape from {d} features; pass a patch")
    return PatchPerturbation(image_shape=(side, side))


def build_plan(cfg: AuditConfig, train: Dataset) -> PoisonPlan:
    rng = RngStream(cfg.seed, ATTACK_STREAM)
    if cfg.attack == "backdoor":
        patch = cfg.patch or default_patch(train.d)
        return backdoor_generate(train, cfg.k, patch, cfg.target, rng)
    if cfg.attack == "clipbkd":
        return clipbkd_generate(train, cfg.k, reference_model(cfg, train), cfg.poison_norm, rng)
    encoder = pretrained_encoder(cfg, train)
    ref = reference_model(cfg, train.with_features(encoder(train.features)))
    return feature_clipbkd_generate(encoder, train, cfg.k, ref, rng, cfg.q_low, cfg.q_high,
                                    cfg.ascent_iterations, cfg.ascent_step)


# --------------------------------------------------------------------------
# trials

_CONTEXT: dict = {}


@dataclasses.dataclass(frozen=True, eq=False)
class TrialContext:
    """Immutable inputs shared by every trial of one audit."""

    sets: tuple[Dataset, Dataset]
    sgd: SgdConfig
    arch: str
    statistic: object
    init: ModelParams | None
    seed: int


def _set_context(ctx: TrialContext):
    _CONTEXT["ctx"] = ctx


def _trial(job: tuple[int, int]):
    """Train one model; return ``(score, training accuracy)`` or None on divergence."""
    arm, stream_id = job
    ctx: TrialContext = _CONTEXT["ctx"]
    data = ctx.sets[arm]
    try:
        params = dp_sgd_train(data, ctx.sgd, ctx.arch, RngStream(ctx.seed, stream_id), init=ctx.init)
    except TrainingDiverged as exc:
        log.warning("trial on stream %d diverged at step %d", stream_id, exc.step)
        return None
    return ctx.statistic.score(params), accuracy(params, data.features, data.labels)


def run_trials(ctx: TrialContext, base: int, count: int, threads: int = 1) -> list:
    """Scores for ``count`` trials per arm, ordered ``[(arm0, arm1), ...]``."""
    if count < 0 or 2 * count > ESTIMATION_BASE - CALIBRATION_BASE:
        raise ValueError("trial count exceeds the stream id range")
    jobs = [(arm, base + 2 * i + arm) for i in range(count) for arm in (0, 1)]
    if threads <= 1:
        _set_context(ctx)
        flat = [_trial(j) for j in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(threads, initializer=_set_context, initargs=(ctx,)) as pool:
            flat = list(pool.map(_trial, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    return [(flat[2 * i], flat[2 * i + 1]) for i in range(count)]


def select_threshold(scores0, scores1, k: int, delta: float, alpha: float) -> tuple[float, EpsilonEstimate]:
    """Threshold maximizing the estimate on calibration scores.

    The output set is ``{score > Z}``. Every observed score is tried as ``Z``
    (the estimator already considers both arm orders and the complement, so
    both directions of the statistic are covered). Among equally good
    candidates the middle one of the first run is taken, and ``Z`` is moved
    halfway to the next observed score so it sits inside the gap.
    """
    s0 = np.sort(np.asarray(scores0, dtype=np.float64))
    s1 = np.sort(np.asarray(scores1, dtype=np.float64))
    t = min(len(s0), len(s1))
    if t < 1:
        raise ValueError("need at least one calibration score per arm")
    s0, s1 = s0[:t], s1[:t]
    values = np.unique(np.concatenate([s0, s1]))
    if len(values) == 1:
        warnings.warn("all calibration statistics are identical", RuntimeWarning, stacklevel=2)
        return float(values[0]), audit_eps(TrialCounts(0, 0, t), max(k, 1), delta, alpha)
    ct0 = t - np.searchsorted(s0, values, side="right")
    ct1 = t - np.searchsorted(s1, values, side="right")
    kk = max(k, 1)
    ests = [audit_eps(TrialCounts(int(a), int(b), t), kk, delta, alpha) for a, b in zip(ct0, ct1)]
    eps = np.array([e.eps_lb for e in ests])
    best = eps.max()
    first = int(np.argmax(eps >= best))
    last = first
    while last + 1 < len(eps) and eps[last + 1] >= best:
        last += 1
    idx = (first + last) // 2
    z = values[idx] if idx + 1 == len(values) else 0.5 * (values[idx] + values[idx + 1])
    return float(z), ests[idx]


def _split_failures(pairs):
    ok = [p for p in pairs if p[0] is not None and p[1] is not None]
    failed = sum((p[0] is None) + (p[1] is None) for p in pairs)
    return ok, failed


def calibrate_threshold(plan: PoisonPlan, sgd: SgdConfig, t_cal: int, k: int, delta: float, alpha: float,
                        seed: int, arch: str = "logistic", test_features=None, init: ModelParams | None = None,
                        threads: int = 1):
    """Train ``t_cal`` models per arm of ``plan`` and return the statistic with ``Z`` fixed.

    Returns ``(statistic, calibration estimate, failed trainings)``.
    """
    if t_cal < 2:
        raise ValueError("t_cal must be >= 2")
    stat = plan_statistic(plan, test_features)
    ctx = TrialContext(plan.training_sets(), sgd, arch, stat, init, seed)
    return _calibrate(ctx, t_cal, k, delta, alpha, threads)


def _calibrate(ctx: TrialContext, t_cal: int, k: int, delta: float, alpha: float, threads: int = 1):
    pairs = run_trials(ctx, CALIBRATION_BASE, t_cal, threads)
    ok, failed = _split_failures(pairs)
    if not ok:
        raise AuditAborted("every calibration trial diverged")
    z, est = select_threshold([p[0][0] for p in ok], [p[1][0] for p in ok], k, delta, alpha)
    return ctx.statistic.with_threshold(z), est, failed


def run_audit(cfg: AuditConfig) -> AuditResult:
    start = time.perf_counter()
    train, test = load_source(cfg)
    plan = build_plan(cfg, train)
    sets = plan.training_sets()
    init = fixed_init(cfg, sets[0].d, sets[0].class_count)
    stat = plan_statistic(plan, test.features if plan.attack == "backdoor" else None)
    ctx = TrialContext(sets, cfg.sgd, cfg.arch, stat, init, cfg.seed)
    stat, cal_est, cal_failed = _calibrate(ctx, cfg.t_cal, cfg.k, cfg.delta, cfg.alpha, cfg.threads)
    ctx = dataclasses.replace(ctx, statistic=stat)

    pairs = run_trials(ctx, ESTIMATION_BASE, cfg.trials, cfg.threads)
    ok, failed = _split_failures(pairs)
    total_failed = failed + cal_failed
    if total_failed > MAX_FAILURE_RATE * 2 * (cfg.trials + cfg.t_cal):
        raise AuditAborted(f"{total_failed} training runs diverged")
    if not ok:
        raise AuditAborted("every estimation trial diverged")
    z = stat.threshold
    counts = TrialCounts(sum(p[0][0] > z for p in ok), sum(p[1][0] > z for p in ok), len(ok))
    k_eff = max(cfg.k, 1)
    est = audit_eps(counts, k_eff, cfg.delta, cfg.alpha)
    accs = [p[a][1] for p in ok for a in (0, 1)]
    return AuditResult(
        kind="audit",
        config=cfg.to_dict(),
        estimate=est,
        threshold=z,
        eps_opt=eps_opt(counts.t, cfg.alpha, k_eff, cfg.delta),
        eps_th=cfg.sgd.claimed_eps_th,
        accuracy={"min": min(accs), "mean": float(np.mean(accs)), "max": max(accs)},
        wall_time=time.perf_counter() - start,
        seed=cfg.seed,
        failed_trials=total_failed,
        extra={
            "calibration_eps": cal_est.eps_lb,
            "target_class": plan.y_p,
            "replaced_rows": plan.replaced.tolist(),
            "notes": list(plan.notes),
        },
    )


# --------------------------------------------------------------------------
# sweeps


@dataclasses.dataclass(frozen=True)
class SweepSpec:
    """Axes of a hyperparameter grid.

    ``noise`` pairs each noise multiplier with the epsilon it is claimed to
    give (use ``math.inf`` for noise 0).
    """

    clip_norms: tuple[float, ...] = (0.5, 1.0, 2.0)
    noise: tuple[tuple[float, float], ...] = ((5.02, 1.0), (2.68, 2.0), (1.55, 4.0), (1.01, 8.0),
                                              (0.73, 16.0), (0.0, math.inf))
    init_scales: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    ks: tuple[int, ...] = (1, 2, 4, 8)

    def __post_init__(self):
        for name in ("clip_norms", "noise", "init_scales", "ks"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis {name} is empty")

    def cells(self):
        for (sigma, eps_th), init, clip_norm in itertools.product(self.noise, self.init_scales, self.clip_norms):
            yield clip_norm, sigma, eps_th, init


@dataclasses.dataclass(frozen=True, eq=False)
class SweepCell:
    clip_norm: float
    noise_multiplier: float
    eps_th: float
    init_scale: float
    results: dict
    errors: dict

    @property
    def best_k(self) -> int | None:
        if not self.results:
            return None
        return max(self.results, key=lambda k: self.results[k].eps_lb)

    @property
    def best_eps(self) -> float | None:
        k = self.best_k
        return None if k is None else self.results[k].eps_lb


def run_sweep(sweep: SweepSpec, base: AuditConfig, out_dir=None) -> list[SweepCell]:
    """Audit every grid cell for every k; failures are recorded per cell."""
    cells = []
    for clip_norm, sigma, eps_th, init in sweep.cells():
        sgd = dataclasses.replace(base.sgd, clip_norm=clip_norm, noise_multiplier=sigma,
                                  claimed_eps_th=eps_th, init_scale=init)
        results, errors = {}, {}
        for k in sweep.ks:
            cfg = dataclasses.replace(base, sgd=sgd, k=k)
            try:
                results[k] = run_audit(cfg)
            except Exception as exc:  # noqa: BLE001 - one bad cell must not stop the grid
                log.error("sweep cell clip=%s sigma=%s init=%s k=%s failed: %s", clip_norm, sigma, init, k, exc)
                errors[k] = f"{type(exc).__name__}: {exc}"
        cells.append(SweepCell(clip_norm, sigma, eps_th, init, results, errors))
    if out_dir is not None:
        write_sweep(cells, sweep, out_dir)
    return cells


def write_sweep(cells: list[SweepCell], sweep: SweepSpec, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clip_norm", "noise_multiplier", "eps_th", "init_scale", "k", "eps_lb", "is_max",
                    "ct0", "ct1", "t", "threshold", "acc_mean", "error", "config"])
        for cell in cells:
            for k in sweep.ks:
                base = [cell.clip_norm, cell.noise_multiplier, _enc(cell.eps_th), cell.init_scale, k]
                if k in cell.results:
                    r = cell.results[k]
                    c = r.counts
                    w.writerow(base + [f"{r.eps_lb:.6f}", int(k == cell.best_k), c.ct0, c.ct1, c.t,
                                       r.threshold, f"{r.accuracy['mean']:.4f}", "", json.dumps(r.config)])
                    r.save(out / "audits" / _cell_name(cell, k))
                else:
                    w.writerow(base + ["", 0, "", "", "", "", "", cell.errors.get(k, ""), ""])
    (out / "table.txt").write_text(format_table(cells, sweep))


def _cell_name(cell: SweepCell, k: int) -> str:
    return f"clip{cell.clip_norm}_noise{cell.noise_multiplier}_init{cell.init_scale}_k{k}.json"


def format_table(cells: list[SweepCell], sweep: SweepSpec) -> str:
    """Rows by claimed epsilon, columns by init scale, cells ``a / b / c`` over clip norms.

    Each entry is the maximum over the k axis, tagged with the k that reached it.
    """
    by_key = {(c.noise_multiplier, c.init_scale, c.clip_norm): c for c in cells}
    header = ["params"] + [f"init={s:g}" + (" (fixed)" if s == 0 else "") for s in sweep.init_scales]
    lines = [" | ".join(header)]
    for sigma, eps_th in sweep.noise:
        row = [f"eps_th={eps_th:g}, sigma_GD={sigma:g}"]
        for init in sweep.init_scales:
            parts = []
            for clip_norm in sweep.clip_norms:
                cell = by_key[(sigma, init, clip_norm)]
                parts.append("err" if cell.best_eps is None else f"{cell.best_eps:.2f}(k={cell.best_k})")
            row.append(" / ".join(parts))
        lines.append(" | ".join(row))
    lines.append(f"clip norms per cell: {' / '.join(f'{c:g}' for c in sweep.clip_norms)}; "
                 f"max over k in {list(sweep.ks)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# baselines


def run_mi_baseline(cfg: AuditConfig, models: int = 10, samples: int = 1000) -> AuditResult:
    """Loss-threshold membership inference averaged over ``models`` trainings.

    Each model trains on ``samples`` member rows and is tested against
    ``samples`` non-member rows; the per-model advantages are averaged before
    conversion to epsilon.
    """
    start = time.perf_counter()
    if cfg.data is not None:
        full = load_dataset(cfg.data)
        if full.n < 2 * samples:
            raise ValueError(f"need {2 * samples} rows for membership inference, have {full.n}")
        perm = RngStream(cfg.seed, SPLIT_STREAM).generator.permutation(full.n)
        members, outsiders = full.subset(perm[:samples]), full.subset(perm[samples:2 * samples])
    else:
        spec = dataclasses.replace(SynthSpec.parse(cfg.synthetic), n=samples)
        members = synth_dataset(spec, RngStream(cfg.seed, DATA_STREAM))
        outsiders = synth_dataset(spec, RngStream(cfg.seed, SPLIT_STREAM))
    init = fixed_init(cfg, members.d, members.class_count)
    advs, accs, failed = [], [], 0
    for i in range(models):
        try:
            params = dp_sgd_train(members, cfg.sgd, cfg.arch, RngStream(cfg.seed, MI_BASE + i), init=init)
        except TrainingDiverged:
            failed += 1
            continue
        train_losses = loss(params, members.features, members.labels)
        test_losses = loss(params, outsiders.features, outsiders.labels)
        advs.append(membership_advantage(train_losses, test_losses, float(np.mean(train_losses))))
        accs.append(accuracy(params, members.features, members.labels))
    if not advs:
        raise AuditAborted("every membership-inference model diverged")
    est = eps_from_advantage(float(np.mean(advs)))
    return AuditResult(
        kind="mi", config=cfg.to_dict(), estimate=est, threshold=None, eps_opt=None,
        eps_th=cfg.sgd.claimed_eps_th,
        accuracy={"min": min(accs), "mean": float(np.mean(accs)), "max": max(accs)},
        wall_time=time.perf_counter() - start, seed=cfg.seed, failed_trials=failed,
        extra={"advantages": advs, "models": models, "samples": samples},
    )


def run_ridge_study(n: int = 100, d: int = 10, lam: float = 1.0, eps: float = 1.0, delta: float = 1e-5,
                    trials: int = 5000, alpha: float = 0.01, seed: int = 0,
                    noise_scale: float = 1.0) -> AuditResult:
    start = time.perf_counter()
    x, y = random_design(n, d, RngStream(seed, DATA_STREAM))
    audit = ridge_audit(x, y, lam, eps, delta, trials, RngStream(seed, RIDGE_STREAM), alpha, noise_scale)
    config = {"n": n, "d": d, "lam": lam, "eps": eps, "delta": delta, "trials": trials, "alpha": alpha,
              "seed": seed, "noise_scale": noise_scale}
    return AuditResult(
        kind="ridge", config=config, estimate=audit.estimate, threshold=0.0,
        eps_opt=eps_opt(trials, alpha, 1, delta), eps_th=eps,
        accuracy={}, wall_time=time.perf_counter() - start, seed=seed,
        extra={"mu_d": audit.mu_d, "closed_form_error": audit.closed_form_error,
               "theorem_eps": audit.theorem_eps, "success_probability": audit.success_probability},
    )
