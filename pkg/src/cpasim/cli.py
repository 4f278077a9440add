"""Command-line entry point: ``cpasim <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import bench, figures
from .analysis import NORMALIZATIONS, evaluate
from .config import SystemConfig, load_config
from .pi_mc import pi_frame, pi_micro_grid
from .sic import CHANNEL_MODELS, simulate, write_trace


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x)


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x)


def _base_config(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else SystemConfig()
    updates = {"seed": args.seed} if args.seed is not None else {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        updates[key.strip()] = value.strip()
    d = cfg.to_dict()
    d.update(updates)
    return SystemConfig.from_dict(d)


def _pis(args, betas=bench.BETA_GRID):
    return bench.PiSource(betas=sorted(set(betas) | {1.0}), trials=args.pi_trials, cache_dir=args.cache_dir,
                          mode=args.pi_mode, frame_trials=args.frame_trials, threads=args.threads)


def _write(report, args):
    if args.out:
        bench.emit_csv(report, args.out)
    else:
        bench.emit_csv_stream(report, sys.stdout)


def cmd_simulate(args):
    cfg = _base_config(args)
    if args.alpha is not None or args.beta is not None:
        cfg = cfg.with_scheme(args.alpha if args.alpha is not None else cfg.alpha,
                              args.beta if args.beta is not None else cfg.beta)
    summary, results = simulate(cfg, args.trials, threads=args.threads, keep=True, model=args.model,
                                sic=not args.no_sic)
    if args.trace:
        write_trace(results, args.trace)
    scale = cfg.L / cfg.tau if args.normalization == "sec4" else 1.0
    row = bench.ThroughputRow("CPA" if not args.no_sic else "ALOHA", cfg.M, cfg.tau, cfg.alpha, cfg.beta, cfg.R,
                              summary.p_d, summary.gamma * scale, summary.gamma_stderr * scale, "sim",
                              args.normalization, cfg.seed, cfg.K, cfg.L, cfg.sigma2, args.trials)
    _write(bench.ThroughputReport([row]), args)


def cmd_analyze(args):
    cfg = _base_config(args)
    alphas = _floats(args.alphas) if args.alphas else (cfg.alpha,)
    betas = _floats(args.betas) if args.betas else (cfg.beta,)
    spec = bench.SweepSpec(cfg, alphas, betas, taus=_ints(args.taus) if args.taus else None,
                           Ms=_ints(args.Ms) if args.Ms else None, Rs=_floats(args.Rs) if args.Rs else None,
                           backend=args.backend, trials=args.trials, normalization=args.normalization,
                           threads=args.threads)
    _write(bench.sweep(spec, _pis(args, betas)), args)


def cmd_pi(args):
    cfg = _base_config(args)
    if args.mode == "frame":
        est = pi_frame(cfg, args.trials, threads=args.threads)
    else:
        est = pi_micro_grid(cfg, [cfg.beta], args.pi_trials).estimate(cfg.beta)
        keep = est.pi > 0
        keep[0] = True
        est = type(est)(est.degrees[keep], est.pi[keep], est.stderr[keep], est.trials[keep], est.mode)
    if args.out:
        est.to_csv(args.out)
    else:
        print("degree,estimate,stderr,trials,mode")
        for d, p, s, n in zip(est.degrees, est.pi, est.stderr, est.trials):
            print(f"{d},{float(p)!r},{float(s)!r},{n},{est.mode}")


def cmd_optimize(args):
    cfg = _base_config(args)
    alphas = _floats(args.alphas) if args.alphas else bench.ALPHA_GRID
    betas = _floats(args.betas) if args.betas else bench.BETA_GRID
    taus = _ints(args.taus) if args.taus else (cfg.tau,)
    opt = bench.optimize(cfg, alphas, betas, taus, pis=_pis(args, betas), normalization=args.normalization,
                         threads=args.threads)
    _write(bench.ThroughputReport([opt.row]), args)


def cmd_compare(args):
    cfg = _base_config(args)
    Ms = _ints(args.Ms) if args.Ms else (cfg.M,)
    Rs = _floats(args.Rs) if args.Rs else (cfg.R,)
    taus = _ints(args.taus) if args.taus else bench.TAU_GRID
    _write(bench.compare_schemes(cfg, Ms, Rs, taus=taus, pis=_pis(args), threads=args.threads), args)


def cmd_fig(args):
    recipe = figures.RECIPES[args.number]
    if args.number == 5:
        # the alpha sweep is cheap only with single-node pi tables
        mode = "ones" if args.pi_mode == "ones" else "micro"
        kw = {"pis": bench.PiSource(mode=mode, trials=args.pi_trials, cache_dir=args.cache_dir)}
    else:
        kw = {"pis": _pis(args)}
    if args.number in (5, 6) and args.sim_trials:
        kw["sim_trials"] = args.sim_trials
    if args.Ms and args.number != 5:
        kw["Ms"] = _ints(args.Ms)
    report, points = recipe(**kw)
    if args.plotdata:
        bench.emit_plotdata(points, args.plotdata)
    _write(report, args)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--trials", type=int, default=20, help="frames per simulated point")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--normalization", choices=NORMALIZATIONS, default="eq5")
    common.add_argument("--config", help="YAML or JSON file with SystemConfig fields")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
    common.add_argument("--out", help="CSV output path (default: stdout)")
    common.add_argument("--pi-mode", choices=bench.PI_MODES, default="frame")
    common.add_argument("--pi-trials", type=int, default=10_000, help="micro-mode draws per degree")
    common.add_argument("--frame-trials", type=int, default=40, help="frames per beta for frame-mode pi")
    common.add_argument("--cache-dir", help="directory for cached pi tables")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cpasim", description="Coded pilot access simulator and analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo frames at one configuration")
    s.add_argument("--alpha", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--model", choices=CHANNEL_MODELS, default="gram")
    s.add_argument("--no-sic", action="store_true", help="framed ALOHA: decode singletons only")
    s.add_argument("--trace", help="write the per-frame decoding trace CSV here")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", parents=[common], help="and-or evaluation over a grid")
    for flag in ("alphas", "betas", "taus", "Ms", "Rs"):
        a.add_argument(f"--{flag}", help="comma separated values")
    a.add_argument("--backend", choices=bench.BACKENDS, default="aot")
    a.set_defaults(func=cmd_analyze)

    q = sub.add_parser("pi", parents=[common], help="estimate node recovery probabilities")
    q.add_argument("--mode", choices=("micro", "frame"), default="micro")
    q.set_defaults(func=cmd_pi)

    o = sub.add_parser("optimize", parents=[common], help="grid optimum of (alpha, beta, tau)")
    for flag in ("alphas", "betas", "taus"):
        o.add_argument(f"--{flag}", help="comma separated values")
    o.set_defaults(func=cmd_optimize)

    c = sub.add_parser("compare", parents=[common], help="CPA, ALOHA and SMM at optimised parameters")
    for flag in ("Ms", "Rs", "taus"):
        c.add_argument(f"--{flag}", help="comma separated values")
    c.set_defaults(func=cmd_compare)

    f = sub.add_parser("fig", parents=[common], help="data for one of the throughput figures")
    f.add_argument("number", type=int, choices=figures.FIGURES)
    f.add_argument("--Ms", help="comma separated antenna counts")
    f.add_argument("--sim-trials", type=int, default=0, help="also simulate (figures 5 and 6)")
    f.add_argument("--plotdata", help="write (figure, x, series, y) rows here")
    f.set_defaults(func=cmd_fig)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
