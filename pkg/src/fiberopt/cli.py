"""Command-line front end.

Subcommands wire configs to runs and emit CSV/JSON artifacts.  Every CSV
starts with a one-line JSON header carrying the fully resolved config, so
identical flags and seed reproduce byte-identical payload rows.

Exit codes: 0 ok, 2 config error, 3 numerical/convergence failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from fiberopt import diagnostics, models, optimizers, privacy
from fiberopt.attenuation import (
    a_innovation,
    adaptive_impulse,
    attenuation_impulse,
    attenuation_state_space,
    innovation_realization,
    monte_carlo_attenuation_scan,
)
from fiberopt.errors import (
    CalibrationFailure,
    ConvergenceFailure,
    FiberError,
    InstabilityError,
)
from fiberopt.filters import InnovationFilter
from fiberopt.mechanism import DpMechanismConfig, TwoPointConfig
from fiberopt.optimizers import AdamConfig

FMT = "%.17g"


def _write_csv(path, config: dict, header: list, rows):
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(config, sort_keys=True) + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                FMT % v if isinstance(v, float) else str(v) for v in row) + "\n")


def _write_json(path, payload: dict):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _default_seed():
    return int(os.environ.get("FIBER_SEED", "0"))


def cmd_calibrate(args):
    sigma = privacy.calibrate_noise(args.eps, args.delta, args.q, args.steps)
    params = privacy.AccountingParams(
        sampling_rate=args.q, steps=args.steps, noise_multiplier=sigma,
        delta=args.delta)
    eps_achieved, order = privacy.compose_and_convert(params)
    _write_json(args.output, {
        "sigma_dp": sigma,
        "eps_achieved": eps_achieved,
        "order_argmin": order,
        "deviations": list(privacy.ACCOUNTANT_DEVIATIONS),
    })
    return 0


def cmd_attenuation(args):
    seed = args.seed if args.seed is not None else _default_seed()
    omegas = args.omega if args.omega else [round(0.1 * i, 2) for i in range(1, 10)] + [0.99]
    rows = []
    for omega in omegas:
        closed = a_innovation(omega)
        lyap = attenuation_state_space(innovation_realization(omega))
        h, tail = adaptive_impulse(lambda: InnovationFilter(1, omega),
                                   decay_rate=np.sqrt(1.0 - omega) if omega < 1 else 0.0)
        imp, _ = attenuation_impulse(h, tail)
        rng = np.random.default_rng(seed)
        mc, se = monte_carlo_attenuation_scan(
            "innovation", omega, 1.0, steps=args.mc_steps,
            replicas=args.mc_replicas, rng=rng)
        rows.append((omega, closed, lyap, imp, mc, se))
    _write_csv(args.output, {
        "command": "attenuation", "omegas": omegas, "seed": seed,
        "mc_steps": args.mc_steps, "mc_replicas": args.mc_replicas,
    }, ["omega", "a_closed_form", "a_lyapunov", "a_impulse",
        "a_monte_carlo", "mc_stderr"], rows)
    return 0


def _resolve_sigma_dp(args, n):
    has_eps = args.eps is not None
    has_sigma = args.sigma_dp is not None
    if has_eps == has_sigma:
        raise FiberError("provide exactly one of --eps and --sigma-dp")
    if has_sigma:
        return args.sigma_dp
    delta = args.delta if args.delta is not None else privacy.default_delta(n)
    q = args.batch_size / n
    return privacy.calibrate_noise(args.eps, delta, q, args.steps)


def cmd_train(args):
    seed = args.seed if args.seed is not None else _default_seed()
    dataset = models.make_synthetic(args.model, args.n, args.p, seed=seed)
    spec = models.ModelSpec(kind=args.model, n_features=args.p,
                            hidden=args.hidden if args.model == "mlp" else 0)
    sigma_dp = _resolve_sigma_dp(args, args.n)
    dp = DpMechanismConfig(clip_norm=args.clip, batch_size=args.batch_size,
                           noise_multiplier=sigma_dp)
    tp = TwoPointConfig(kappa=args.kappa, gamma=args.gamma)
    adam = AdamConfig(lr=args.lr, weight_decay=args.weight_decay,
                      variance_floor=args.eps_v)
    run = optimizers.run_training(
        spec, dataset, args.optimizer, args.steps, adam, dp, tp,
        omega=args.omega, seed=seed)
    config = {
        "command": "train", "optimizer": args.optimizer, "model": args.model,
        "n": args.n, "p": args.p, "steps": args.steps,
        "batch_size": args.batch_size, "clip": args.clip,
        "sigma_dp": sigma_dp, "lr": args.lr, "kappa": args.kappa,
        "gamma": args.gamma, "omega": args.omega, "eps_v": args.eps_v,
        "weight_decay": args.weight_decay, "seed": seed,
    }
    rows = [(r.step, r.loss, r.clamp_mass, r.grad_evals) for r in run.records]
    _write_csv(args.output, config,
               ["step", "loss", "clamp_mass", "grad_evals"], rows)
    summary = dict(config)
    summary.update(final_loss=run.records[-1].loss,
                   final_clamp_mass=run.records[-1].clamp_mass,
                   grad_evals=run.state.grad_evals)
    _write_json(args.summary, summary)
    return 0


def cmd_drift_bench(args):
    seed = args.seed if args.seed is not None else _default_seed()
    rows = []
    for model in args.models:
        rows.extend(diagnostics.drift_benchmark(
            model, args.eps, n_seeds=args.n_seeds, dim=args.dim,
            horizon=args.horizon, omega=args.omega, kappa=args.kappa))
    config = {
        "command": "drift-bench", "models": args.models, "eps": args.eps,
        "n_seeds": args.n_seeds, "dim": args.dim, "horizon": args.horizon,
        "omega": args.omega, "kappa": args.kappa, "seed": seed,
    }
    _write_csv(args.output, config,
               ["model", "eps", "snr", "seed", "mse_ema", "mse_innov",
                "improvement", "win"],
               [(r.model, r.eps, r.snr, r.seed, r.mse_ema, r.mse_innov,
                 r.improvement, int(r.win)) for r in rows])
    return 0


def _paired_run_setup(args, seed):
    dataset = models.make_synthetic("logistic", args.n, args.p, seed=seed)
    spec = models.ModelSpec(kind="logistic", n_features=args.p)
    dp = DpMechanismConfig(clip_norm=args.clip, batch_size=args.batch_size,
                           noise_multiplier=args.sigma_dp)
    tp = TwoPointConfig(kappa=args.kappa, gamma=args.gamma)
    adam = AdamConfig(lr=args.lr)
    probes = diagnostics.ProjectionProbe.make(args.probes, args.p, seed=seed)
    return spec, dataset, adam, dp, tp, probes


def cmd_paired_run(args):
    seed = args.seed if args.seed is not None else _default_seed()
    spec, dataset, adam, dp, tp, probes = _paired_run_setup(args, seed)
    result = diagnostics.paired_run_attenuation(
        spec, dataset, adam, dp, tp, args.omega, probes, args.steps,
        seed=seed, warmup=args.warmup)
    config = {
        "command": "paired-run", "n": args.n, "p": args.p,
        "batch_size": args.batch_size, "clip": args.clip,
        "sigma_dp": args.sigma_dp, "lr": args.lr, "kappa": args.kappa,
        "gamma": args.gamma, "omega": args.omega, "probes": args.probes,
        "steps": args.steps, "warmup": result.warmup, "seed": seed,
        "rho_bar": result.rho_bar, "r_bar": result.r_bar,
        "a_omega": a_innovation(args.omega),
    }
    rows = [(t, result.rho[t], result.r[t]) for t in range(len(result.rho))]
    _write_csv(args.output, config, ["step", "rho", "r"], rows)
    return 0


def cmd_audit(args):
    seed = args.seed if args.seed is not None else _default_seed()
    spec, dataset, adam, dp, tp, probes = _paired_run_setup(args, seed)
    report = diagnostics.assumption_audit(
        spec, dataset, adam, dp, tp, args.omega, probes, args.steps,
        args.warmup, seed=seed)
    _write_json(args.output, {
        "omega": report.omega,
        "total_steps": args.steps,
        "warmup_steps": report.warmup_steps,
        "steady_steps": report.steady_steps,
        "rho_hat": report.rho_hat,
        "cross_term_ratio": report.cross_term_ratio,
        "cv": report.cv,
        "seed": seed,
    })
    return 0


def _add_train_like_flags(p):
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--p", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=200)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--kappa", type=float, default=0.6)
    p.add_argument("--gamma", type=float, default=0.7)
    p.add_argument("--omega", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="fiberopt")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="noise multiplier for a target budget")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("attenuation", help="cross-validated attenuation sweep")
    p.add_argument("--omega", type=float, action="append", default=None)
    p.add_argument("--mc-steps", type=int, default=2000)
    p.add_argument("--mc-replicas", type=int, default=128)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", default="attenuation.csv")
    p.set_defaults(func=cmd_attenuation)

    p = sub.add_parser("train", help="train one optimizer on a synthetic task")
    p.add_argument("--optimizer", choices=optimizers.OPTIMIZERS, required=True)
    p.add_argument("--model", choices=models.KINDS, required=True)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--sigma-dp", type=float, default=None)
    p.add_argument("--eps-v", type=float, default=1e-8)
    p.add_argument("--weight-decay", type=float, default=0.0)
    _add_train_like_flags(p)
    p.add_argument("--output", default="train.csv")
    p.add_argument("--summary", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("drift-bench", help="synthetic drift benchmark sweep")
    p.add_argument("--models", nargs="+", choices=["cv", "rw"], default=["cv", "rw"])
    p.add_argument("--eps", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0, 8.0])
    p.add_argument("--n-seeds", type=int, default=7)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--horizon", type=int, default=500)
    p.add_argument("--omega", type=float, default=0.9)
    p.add_argument("--kappa", type=float, default=None,
                   help="EMA gain; default matches each cell's noise level")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", default="drift_bench.csv")
    p.set_defaults(func=cmd_drift_bench)

    p = sub.add_parser("paired-run", help="paired-replica attenuation check")
    _add_train_like_flags(p)
    p.add_argument("--sigma-dp", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=800)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--probes", type=int, default=16)
    p.add_argument("--output", default="paired_run.csv")
    p.set_defaults(func=cmd_paired_run)

    p = sub.add_parser("audit", help="assumption audit on a closed-loop run")
    _add_train_like_flags(p)
    p.add_argument("--sigma-dp", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=800)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--probes", type=int, default=16)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (CalibrationFailure, ConvergenceFailure, InstabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FiberError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
