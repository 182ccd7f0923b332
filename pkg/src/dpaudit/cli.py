"""Command-line entry point: ``dpaudit {audit,sweep,mi,ridge,synth}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from dpaudit import __version__
from dpaudit.data import SynthSpec, save_dataset, synth_dataset
from dpaudit.dpsgd import SgdConfig
from dpaudit.harness import (
    DATA_STREAM,
    AuditConfig,
    AuditResult,
    SweepSpec,
    run_audit,
    run_mi_baseline,
    run_ridge_study,
    run_sweep,
)
from dpaudit.numerics import RngStream


def _float(s: str) -> float:
    if s.lower() in ("inf", "infinity", "none", "unclipped"):
        return math.inf
    return float(s)


def _list(conv):
    def parse(s: str):
        return tuple(conv(part) for part in s.split(",") if part.strip())
    return parse


def _common(p: argparse.ArgumentParser, sweep: bool = False):
    many = (lambda conv: _list(conv)) if sweep else (lambda conv: conv)
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV with a header and a 'label' column")
    g.add_argument("--synthetic", default="gauss:n=1000,d=20",
                   help="synthetic spec, e.g. 'gauss:n=1000,d=20' or 'images:n=1000' (default %(default)s)")
    g.add_argument("--test-size", type=int, default=200, help="held-out rows for the backdoor statistic")
    g = p.add_argument_group("model and training")
    g.add_argument("--model", choices=["lr", "fnn"], default="lr")
    g.add_argument("--clip", type=many(_float), default=None, help="clipping norm C ('inf' for unclipped)")
    g.add_argument("--noise", type=many(float), default=None, help="noise multiplier sigma_GD")
    g.add_argument("--eps-th", type=many(_float), default=None, help="claimed epsilon label")
    g.add_argument("--init-scale", type=many(float), default=None, help="Glorot std multiplier, 0 = fixed init")
    g.add_argument("--epochs", type=int, default=24)
    g.add_argument("--batch", type=int, default=250)
    g.add_argument("--lr", type=float, default=0.15)
    g.add_argument("--l2", type=float, default=0.0)
    g.add_argument("--sampling", choices=["shuffle", "poisson"], default="shuffle")
    g.add_argument("--noise-scaling", choices=["sum", "mean"], default="sum",
                   help="'sum': std C*sigma on the summed gradient; 'mean': on the averaged gradient")
    g = p.add_argument_group("audit")
    g.add_argument("--attack", choices=["clipbkd", "backdoor", "feature-clipbkd"], default="clipbkd")
    g.add_argument("--k", type=many(int), default=None, help="number of poisoned rows")
    g.add_argument("--trials", type=int, default=100, help="estimation trials per arm")
    g.add_argument("--calibration-trials", type=int, default=None, help="defaults to --trials")
    g.add_argument("--alpha", type=float, default=0.01)
    g.add_argument("--delta", type=float, default=0.0, help="delta used by the estimator")
    g.add_argument("--target", type=int, default=1, help="backdoor target class")
    g.add_argument("--poison-norm", type=float, default=None, help="ClipBKD poison norm (default: mean row norm)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="output directory")


def _sgd(args, clip=1.0, noise=0.0, eps_th=None, init=0.0) -> SgdConfig:
    if eps_th is None:
        eps_th = math.inf if noise == 0 else math.nan
    return SgdConfig(clip_norm=clip, noise_multiplier=noise, epochs=args.epochs, batch_size=args.batch,
                     learning_rate=args.lr, init_scale=init, l2_reg=args.l2, claimed_eps_th=eps_th,
                     sampling=args.sampling, noise_scaling=args.noise_scaling)


def _config(args, sgd: SgdConfig, k: int) -> AuditConfig:
    return AuditConfig(attack=args.attack, model=args.model, k=k, trials=args.trials,
                       calibration_trials=args.calibration_trials, alpha=args.alpha, delta=args.delta,
                       sgd=sgd, data=args.data, synthetic=args.synthetic, test_size=args.test_size,
                       seed=args.seed, threads=args.threads, poison_norm=args.poison_norm, target=args.target)


def _pick(value, default):
    return default if value is None else value


def _single_config(args) -> AuditConfig:
    sgd = _sgd(args, _pick(args.clip, 1.0), _pick(args.noise, 0.0), args.eps_th, _pick(args.init_scale, 0.0))
    return _config(args, sgd, _pick(args.k, 1))


def _emit(result: AuditResult, out: str | None, name: str):
    doc = result.to_json()
    if out:
        path = result.save(Path(out) / name)
        print(f"wrote {path}", file=sys.stderr)
    summary = {k: doc[k] for k in ("kind", "counts", "p0_hat", "p1_hat", "eps_lb", "used_complement",
                                   "used_arm_swap", "threshold", "eps_opt", "eps_th", "accuracy")}
    print(json.dumps(summary, indent=2))


def cmd_audit(args) -> int:
    if args.replay:
        cfg = AuditConfig.from_dict(AuditResult.load(args.replay).config)
        cfg = dataclasses.replace(cfg, threads=args.threads)
    else:
        cfg = _single_config(args)
    _emit(run_audit(cfg), args.out, "audit.json")
    return 0


def cmd_sweep(args) -> int:
    noises = _pick(args.noise, (5.02, 2.68, 1.55, 1.01, 0.73, 0.0))
    if args.eps_th is None:
        labels = {5.02: 1.0, 2.68: 2.0, 1.55: 4.0, 1.01: 8.0, 0.73: 16.0, 0.0: math.inf}
        eps = tuple(labels.get(s, math.nan) for s in noises)
    else:
        eps = args.eps_th
        if len(eps) != len(noises):
            raise SystemExit("--eps-th needs one label per --noise value")
    spec = SweepSpec(clip_norms=_pick(args.clip, (0.5, 1.0, 2.0)), noise=tuple(zip(noises, eps)),
                     init_scales=_pick(args.init_scale, (0.0, 0.5, 1.0, 2.0)), ks=_pick(args.k, (1, 2, 4, 8)))
    base = _config(args, _sgd(args), 1)
    out = args.out or "sweep-out"
    cells = run_sweep(spec, base, out)
    failures = sum(len(c.errors) for c in cells)
    print((Path(out) / "table.txt").read_text())
    print(f"{len(cells)} cells, {failures} failed audits; results in {out}", file=sys.stderr)
    return 1 if failures else 0


def cmd_mi(args) -> int:
    _emit(run_mi_baseline(_single_config(args), models=args.models, samples=args.samples), args.out, "mi.json")
    return 0


def cmd_ridge(args) -> int:
    r = run_ridge_study(n=args.n, d=args.d, lam=args.lam, eps=args.eps, delta=args.delta,
                        trials=args.trials, alpha=args.alpha, seed=args.seed)
    _emit(r, args.out, "ridge.json")
    print(json.dumps(r.extra, indent=2))
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec.parse(args.synthetic)
    data = synth_dataset(spec, RngStream(args.seed, DATA_STREAM))
    path = Path(args.out or ".") / "synthetic.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(data, path)
    print(f"wrote {data.n} rows x {data.d} features to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpaudit", description="Empirical privacy audits of DP-SGD.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="run one poisoning audit")
    _common(p)
    p.add_argument("--replay", help="re-run the config stored in a result JSON")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="grid of audits; list flags take comma-separated values")
    _common(p, sweep=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mi", help="membership-inference baseline")
    _common(p)
    p.add_argument("--models", type=int, default=10)
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("ridge", help="output-perturbed ridge regression study")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--trials", type=int, default=5000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ridge)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    p.add_argument("--synthetic", default="gauss:n=1000,d=20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"dpaudit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
