"""Command-line front end: experiment sweeps, bit allocation, and precoding."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import allocation, channel, feedback, precoding, reconstruction
from .config import ConfigError, ScenarioConfig, load_config
from .harness import derive_trial_seed, emit_csv, run_experiment
from .precoding import GpipError


def _load_scenario(args) -> ScenarioConfig:
    paper_scale = getattr(args, "paper_scale", False)
    if args.config:
        cfg = load_config(args.config, paper_scale=paper_scale)
    else:
        cfg = ScenarioConfig()
        if paper_scale:
            cfg = cfg.replace(n_antennas=256, n_users=16, trials=1000)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "workers", None) is not None:
        cfg = cfg.replace(workers=args.workers)
    return cfg


def _cmd_sim(args) -> int:
    cfg = _load_scenario(args)
    records = run_experiment(args.experiment, cfg)
    emit_csv(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_allocate(args) -> int:
    weights = tuple(float(tok) for tok in args.weights.split(",") if tok.strip())
    problem = allocation.AllocationProblem(weights=weights, budget=args.budget)
    solver = (allocation.allocate_greedy if args.method == "greedy"
              else allocation.allocate_bruteforce)
    result = solver(problem)
    print(json.dumps({
        "weights": list(weights),
        "budget": args.budget,
        "method": args.method,
        "bits": list(result.bits),
        "objective": result.objective,
    }))
    return 0


def _make_reconstructions(cfg: ScenarioConfig, scene, ests, h_true, geom):
    if cfg.reconstruction == "no_feedback":
        return [reconstruction.reconstruct_no_feedback(est, geom) for est in ests]
    if cfg.reconstruction == "dft":
        return [reconstruction.reconstruct_dft(
            feedback.dft_codebook_feedback(h_true[:, k], cfg.b_tot, geom)[1], geom)
            for k in range(cfg.n_users)]
    recs = []
    for ps, est in zip(scene, ests):
        bits = (tuple(0 for _ in est.betas) if cfg.allocator == "none"
                else _alloc_bits(cfg, est.betas**2))
        fp = feedback.make_feedback_plan(ps, bits, geom)
        recs.append(reconstruction.reconstruct_mmse(est, fp, geom))
    return recs


def _alloc_bits(cfg: ScenarioConfig, weights):
    problem = allocation.AllocationProblem(weights=tuple(weights), budget=cfg.b_tot)
    if cfg.allocator == "uniform":
        return allocation.allocate_uniform(problem).bits
    return allocation.allocate_greedy(problem).bits


def _cmd_precode(args) -> int:
    cfg = _load_scenario(args)
    method = args.method or cfg.precoder
    geom = cfg.geometry()
    noise = channel.EstimationNoise(cfg.aoa_sigma, cfg.gain_rel_sigma)
    noisy = cfg.aoa_sigma > 0 or cfg.gain_rel_sigma > 0
    power = cfg.power_watts()
    sigma2 = np.full(cfg.n_users, cfg.noise_watts)
    gcfg = precoding.GpipConfig(epsilon=cfg.gpip_epsilon, max_iter=cfg.gpip_max_iter)

    rows = []
    for drop in range(cfg.trials):
        rng = np.random.default_rng(derive_trial_seed(cfg.seed, drop))
        scene = [channel.draw_user_paths(cfg, rng) for _ in range(cfg.n_users)]
        ests = [channel.perturb_estimates(ps, noise, rng) if noisy else ps
                for ps in scene]
        h_true = np.column_stack([channel.dl_channel(ps, geom) for ps in scene])
        recs = _make_reconstructions(cfg, scene, ests, h_true, geom)
        pp = precoding.PrecodingProblem.from_reconstructions(
            recs, power=power, sigma2=sigma2, use_cov=(method == "gpip"))
        iterations = 0
        if method == "gpip":
            result = precoding.gpip_solve(pp, gcfg)
            stack, iterations = result.f, result.iterations
        elif method == "zf":
            stack = precoding.zf_precoder(pp.hhat, pp)
        else:  # wmmse on perfect CSI
            pp = precoding.PrecodingProblem(
                hhat=h_true,
                phi=np.zeros((cfg.n_users, geom.num_antennas, geom.num_antennas),
                             dtype=complex),
                sigma2=sigma2, power=power)
            stack = precoding.wmmse_precoder(h_true, pp)
        rows.append((drop, method, cfg.reconstruction, cfg.b_tot,
                     float(cfg.power_dbm_grid[0]),
                     precoding.true_sum_se(stack, h_true, pp),
                     precoding.sum_se_lower_bound(stack, pp),
                     iterations))

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("drop", "method", "reconstruction", "b_tot", "power_dbm",
                         "true_sum_se", "se_lower_bound", "iterations"))
        for row in rows:
            writer.writerow([str(v) for v in row])
    print(f"wrote {len(rows)} drops to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fddlink",
        description="FDD massive MIMO limited-feedback link simulator")
    parser.add_argument("--verbose", action="store_true", help="enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="run a Monte Carlo experiment sweep")
    sim.add_argument("experiment", choices=("mse", "delta", "se"))
    sim.add_argument("--config", help="scenario file (flat key = value text)")
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.add_argument("--seed", type=int, help="override the master seed")
    sim.add_argument("--workers", type=int, help="trial-level parallelism")
    sim.add_argument("--paper-scale", action="store_true",
                     help="use the full-scale reference scenario sizes")
    sim.set_defaults(func=_cmd_sim)

    alloc = sub.add_parser("allocate", help="solve one bit-allocation instance")
    alloc.add_argument("--weights", required=True,
                       help="comma-separated per-path squared gains")
    alloc.add_argument("--budget", type=int, required=True)
    alloc.add_argument("--method", choices=("greedy", "bruteforce"), default="greedy")
    alloc.set_defaults(func=_cmd_allocate)

    pre = sub.add_parser("precode", help="per-drop precoding on drawn scenes")
    pre.add_argument("--method", choices=("gpip", "zf", "wmmse"))
    pre.add_argument("--config", help="scenario file (flat key = value text)")
    pre.add_argument("--out", required=True, help="output CSV path")
    pre.add_argument("--seed", type=int, help="override the master seed")
    pre.set_defaults(func=_cmd_precode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, GpipError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
