"""Seeded Monte Carlo experiment campaigns with CSV output.

Every experiment is a pure function of (config, master seed): per-trial RNG
streams are derived by hashing (seed, trial index), so results do not depend
on execution order or worker count.  Records carry a mean, its standard
error, and the sample count for every sweep coordinate and method.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import allocation, channel, feedback, precoding, reconstruction
from .config import ScenarioConfig

log = logging.getLogger(__name__)

CSV_COLUMNS = ("experiment", "n_antennas", "n_users", "n_paths", "b_tot",
               "power_dbm", "method", "metric", "mean", "std_err", "trials")


@dataclass(frozen=True)
class ExperimentRecord:
    """One aggregated data point of an experiment sweep."""

    experiment: str
    n_antennas: int
    n_users: int
    n_paths: int
    b_tot: int
    power_dbm: float
    method: str
    metric: str
    mean: float
    std_err: float
    trials: int


def derive_trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    """Stable per-trial seed stream hashed from (master seed, trial index)."""
    return np.random.SeedSequence([int(master_seed), int(trial)])


def emit_csv(records, path) -> None:
    """Write records with a header row; formatting is bit-stable."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([
                r.experiment, r.n_antennas, r.n_users, r.n_paths, r.b_tot,
                str(float(r.power_dbm)), r.method, r.metric,
                str(float(r.mean)), str(float(r.std_err)), r.trials,
            ])


def _run_trials(cfg: ScenarioConfig, trial_fn, workers: int | None = None) -> np.ndarray:
    """Evaluate trial_fn(rng) for every trial; stacking order is trial order."""
    workers = cfg.workers if workers is None else workers
    rngs = [np.random.default_rng(derive_trial_seed(cfg.seed, t))
            for t in range(cfg.trials)]
    if workers <= 1:
        results = [trial_fn(rng) for rng in rngs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(trial_fn, rngs))
    return np.stack(results)


def _mean_and_stderr(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = samples.mean(axis=0)
    n = samples.shape[0]
    if n > 1:
        std_err = samples.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        std_err = np.zeros_like(mean)
    return mean, std_err


# ---------------------------------------------------------------------------
# reconstruction-MSE experiment


MSE_STRATEGIES = ("greedy", "uniform", "none")


def _allocate(strategy: str, weights, budget: int) -> tuple:
    if strategy == "none":
        return tuple(0 for _ in weights)
    problem = allocation.AllocationProblem(weights=tuple(weights), budget=budget)
    if strategy == "greedy":
        return allocation.allocate_greedy(problem).bits
    if strategy == "uniform":
        return allocation.allocate_uniform(problem).bits
    raise ValueError(f"unknown allocator {strategy!r}")


def run_mse_experiment(cfg: ScenarioConfig, workers: int | None = None) -> list:
    """Per-user reconstruction MSE versus the total feedback budget.

    For each budget and each allocation strategy the closed-form expected MSE
    and the realized Monte Carlo squared error are both aggregated.
    """
    geom = cfg.geometry()
    b_grid = cfg.b_tot_grid

    def trial(rng):
        ps = channel.draw_user_paths(cfg, rng)
        weights = ps.betas**2
        h = channel.dl_channel(ps, geom)
        out = np.empty((len(b_grid), len(MSE_STRATEGIES), 2))
        for bi, b_tot in enumerate(b_grid):
            for si, strategy in enumerate(MSE_STRATEGIES):
                bits = _allocate(strategy, weights, b_tot)
                fp = feedback.make_feedback_plan(ps, bits, geom)
                rc = reconstruction.reconstruct_mmse(ps, fp, geom)
                err = float(np.sum(np.abs(h - rc.hhat) ** 2))
                cf = allocation.theoretical_weighted_mse(ps.betas, bits, geom.num_antennas)
                out[bi, si] = (cf, err)
        return out

    samples = _run_trials(cfg, trial, workers)
    mean, std_err = _mean_and_stderr(samples)
    records = []
    for bi, b_tot in enumerate(b_grid):
        for si, strategy in enumerate(MSE_STRATEGIES):
            for mi, metric in enumerate(("mse_closed_form", "mse_monte_carlo")):
                records.append(ExperimentRecord(
                    experiment="mse", n_antennas=cfg.n_antennas, n_users=1,
                    n_paths=cfg.n_paths, b_tot=b_tot,
                    power_dbm=cfg.power_dbm_grid[0], method=strategy,
                    metric=metric, mean=float(mean[bi, si, mi]),
                    std_err=float(std_err[bi, si, mi]), trials=cfg.trials))
    return records


# ---------------------------------------------------------------------------
# outer-product approximation-error experiment


def run_delta_experiment(cfg: ScenarioConfig, workers: int | None = None) -> list:
    """Normalized outer-product approximation error versus budget and path count.

    Emits the realized (1/N^2)*||Delta||_F^2 alongside the large-array
    closed-form value evaluated at the same realized quantization errors.
    """
    geom = cfg.geometry()
    b_grid = cfg.b_tot_grid
    l_grid = cfg.l_grid
    cfgs_by_l = {L: cfg.replace(n_paths=L, l_grid=(L,)) for L in l_grid}

    def trial(rng):
        out = np.empty((len(l_grid), len(b_grid), 2))
        for li, L in enumerate(l_grid):
            ps = channel.draw_user_paths(cfgs_by_l[L], rng)
            weights = ps.betas**2
            h = channel.dl_channel(ps, geom)
            for bi, b_tot in enumerate(b_grid):
                bits = _allocate(cfg.allocator, weights, b_tot)
                fp = feedback.make_feedback_plan(ps, bits, geom)
                rc = reconstruction.reconstruct_mmse(ps, fp, geom)
                emp = reconstruction.outer_error_norm(h, rc.hhat, ps, bits, geom)
                asym = reconstruction.asymptotic_delta_norm(ps.betas, bits, fp.deltas)
                out[li, bi] = (emp, asym)
        return out

    samples = _run_trials(cfg, trial, workers)
    mean, std_err = _mean_and_stderr(samples)
    records = []
    for li, L in enumerate(l_grid):
        for bi, b_tot in enumerate(b_grid):
            for mi, metric in enumerate(("delta_norm_emp", "delta_norm_asym")):
                records.append(ExperimentRecord(
                    experiment="delta", n_antennas=cfg.n_antennas, n_users=1,
                    n_paths=L, b_tot=b_tot, power_dbm=cfg.power_dbm_grid[0],
                    method=cfg.allocator, metric=metric,
                    mean=float(mean[li, bi, mi]),
                    std_err=float(std_err[li, bi, mi]), trials=cfg.trials))
    return records


# ---------------------------------------------------------------------------
# sum-spectral-efficiency experiment


SE_METRICS = ("true_sum_se", "se_lower_bound")
_FEEDBACK_FREE = ("zf_nofeedback", "gpip_nofeedback", "wmmse_perfect")


def _zf_columns(recs_mmse, recs_nf) -> np.ndarray:
    """MMSE estimate columns; users without any feedback fall back to the
    geometry-only estimate so zero-forcing stays defined at zero budget."""
    cols = np.column_stack([rc.hhat for rc in recs_mmse])
    norms = np.linalg.norm(cols, axis=0)
    floor = 1e-12 * max(float(norms.max()), 1e-300)
    for k in np.nonzero(norms <= floor)[0]:
        cols[:, k] = recs_nf[k].hhat
    return cols


def _method_outputs(method: str, ctx: dict) -> tuple[float, float]:
    """(true sum SE, CSI-side lower bound) for one precoding method."""
    cfg: ScenarioConfig = ctx["cfg"]
    gcfg = precoding.GpipConfig(epsilon=cfg.gpip_epsilon, max_iter=cfg.gpip_max_iter)
    power, sigma2, h_true = ctx["power"], ctx["sigma2"], ctx["h_true"]

    def problem(recs, use_cov):
        return precoding.PrecodingProblem.from_reconstructions(
            recs, power=power, sigma2=sigma2, use_cov=use_cov)

    if method == "wmmse_perfect":
        n = h_true.shape[0]
        pp = precoding.PrecodingProblem(
            hhat=h_true, phi=np.zeros((h_true.shape[1], n, n), dtype=complex),
            sigma2=sigma2, power=power)
        stack = precoding.wmmse_precoder(h_true, pp)
    elif method == "gpip_robust":
        pp = problem(ctx["recs_mmse"], use_cov=True)
        stack = precoding.gpip_solve(pp, gcfg).f
    elif method == "gpip_plain":
        pp = problem(ctx["recs_mmse"], use_cov=False)
        stack = precoding.gpip_solve(pp, gcfg).f
    elif method == "gpip_nofeedback":
        pp = problem(ctx["recs_nf"], use_cov=True)
        stack = precoding.gpip_solve(pp, gcfg).f
    elif method == "gpip_dft":
        pp = problem(ctx["recs_dft"], use_cov=True)
        stack = precoding.gpip_solve(pp, gcfg).f
    elif method == "zf_mmse":
        cols = _zf_columns(ctx["recs_mmse"], ctx["recs_nf"])
        pp = problem(ctx["recs_mmse"], use_cov=False)
        stack = precoding.zf_precoder(cols, pp)
    elif method == "zf_nofeedback":
        pp = problem(ctx["recs_nf"], use_cov=False)
        stack = precoding.zf_precoder(pp.hhat, pp)
    elif method == "zf_dft":
        pp = problem(ctx["recs_dft"], use_cov=False)
        stack = precoding.zf_precoder(pp.hhat, pp)
    else:
        raise ValueError(f"unknown SE method {method!r}")

    true_se = precoding.true_sum_se(stack, h_true, pp)
    lb = precoding.sum_se_lower_bound(stack, pp)
    return true_se, lb


def run_se_experiment(cfg: ScenarioConfig, workers: int | None = None) -> list:
    """Ergodic sum spectral efficiency over drops for each configured method.

    Sweeps the cross product of the antenna, path-count, power, and budget
    grids; methods that ignore the feedback budget are computed once per
    drop and replicated across budget coordinates.
    """
    n_grid, l_grid = cfg.n_grid, cfg.l_grid
    p_grid, b_grid = cfg.power_dbm_grid, cfg.b_tot_grid
    methods = cfg.se_methods
    noise = channel.EstimationNoise(cfg.aoa_sigma, cfg.gain_rel_sigma)
    noisy = cfg.aoa_sigma > 0 or cfg.gain_rel_sigma > 0
    cfgs_by_l = {L: cfg.replace(n_paths=L, l_grid=(L,)) for L in l_grid}

    def trial(rng):
        out = np.empty((len(n_grid), len(l_grid), len(p_grid), len(b_grid),
                        len(methods), len(SE_METRICS)))
        for li, L in enumerate(l_grid):
            scene = [channel.draw_user_paths(cfgs_by_l[L], rng)
                     for _ in range(cfg.n_users)]
            ests = [channel.perturb_estimates(ps, noise, rng) if noisy else ps
                    for ps in scene]
            for ni, n in enumerate(n_grid):
                geom = cfg.geometry(n)
                h_true = np.column_stack([channel.dl_channel(ps, geom) for ps in scene])
                recs_nf = [reconstruction.reconstruct_no_feedback(est, geom)
                           for est in ests]
                for pi, pdbm in enumerate(p_grid):
                    ctx = {
                        "cfg": cfg, "h_true": h_true, "recs_nf": recs_nf,
                        "power": cfg.power_watts(pdbm),
                        "sigma2": np.full(cfg.n_users, cfg.noise_watts),
                    }
                    cached = {m: _method_outputs(m, ctx)
                              for m in methods if m in _FEEDBACK_FREE}
                    for bi, b_tot in enumerate(b_grid):
                        recs_mmse = []
                        for ps, est in zip(scene, ests):
                            bits = _allocate(cfg.allocator, est.betas**2, b_tot)
                            fp = feedback.make_feedback_plan(ps, bits, geom)
                            recs_mmse.append(
                                reconstruction.reconstruct_mmse(est, fp, geom))
                        ctx["recs_mmse"] = recs_mmse
                        if any(m in ("zf_dft", "gpip_dft") for m in methods):
                            ctx["recs_dft"] = [
                                reconstruction.reconstruct_dft(
                                    feedback.dft_codebook_feedback(
                                        h_true[:, k], b_tot, geom)[1], geom)
                                for k in range(cfg.n_users)]
                        for mi, method in enumerate(methods):
                            if method in cached:
                                out[ni, li, pi, bi, mi] = cached[method]
                            else:
                                out[ni, li, pi, bi, mi] = _method_outputs(method, ctx)
        return out

    samples = _run_trials(cfg, trial, workers)
    mean, std_err = _mean_and_stderr(samples)
    records = []
    for ni, n in enumerate(n_grid):
        for li, L in enumerate(l_grid):
            for pi, pdbm in enumerate(p_grid):
                for bi, b_tot in enumerate(b_grid):
                    for mi, method in enumerate(methods):
                        for xi, metric in enumerate(SE_METRICS):
                            records.append(ExperimentRecord(
                                experiment="se", n_antennas=n,
                                n_users=cfg.n_users, n_paths=L, b_tot=b_tot,
                                power_dbm=pdbm, method=method, metric=metric,
                                mean=float(mean[ni, li, pi, bi, mi, xi]),
                                std_err=float(std_err[ni, li, pi, bi, mi, xi]),
                                trials=cfg.trials))
    return records


EXPERIMENTS = {
    "mse": run_mse_experiment,
    "delta": run_delta_experiment,
    "se": run_se_experiment,
}


def run_experiment(kind: str, cfg: ScenarioConfig, workers: int | None = None) -> list:
    if kind not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {kind!r}; choose from {tuple(EXPERIMENTS)}")
    return EXPERIMENTS[kind](cfg, workers)
