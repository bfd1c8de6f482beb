"""Feedback-bit allocation across channel paths.

The per-path reconstruction quality is governed by the compensation factor
eta(B) = (2**B / pi) * sin(pi / 2**B) and the normalized MSE
nmmse(B) = 1 - eta(B)**2.  Granting bits one at a time to the path with the
largest weighted marginal NMMSE decrease is optimal for the piecewise-linear
relaxation, which agrees with nmmse at every integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_BITS = 62  # 2**B stays exactly representable in float64


def _as_bits_array(bits) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.dtype.kind == "f":
        if not np.all(arr == np.floor(arr)):
            raise ValueError("bit counts must be integers")
        arr = arr.astype(np.int64)
    elif arr.dtype.kind not in "iu":
        raise ValueError(f"bit counts must be integers, got dtype {arr.dtype}")
    if np.any(arr < 0) or np.any(arr > MAX_BITS):
        raise ValueError(f"bit counts must lie in [0, {MAX_BITS}]")
    return arr.astype(np.int64)


def eta(bits):
    """Phase-error compensation factor (2**B / pi) * sin(pi / 2**B).

    Vanishes at B = 0 (sin(pi) = 0) and increases toward 1.  Accepts scalars
    or arrays of nonnegative integers.
    """
    b = _as_bits_array(bits)
    p = np.exp2(b.astype(float))
    with np.errstate(all="ignore"):
        val = np.where(b == 0, 0.0, p / math.pi * np.sin(math.pi / p))
    return val if np.ndim(bits) else float(val)


def nmmse(bits):
    """Normalized per-path MMSE 1 - eta(B)**2, in [0, 1]."""
    e = eta(bits)
    return 1.0 - e * e


def nmmse_pl(x):
    """Piecewise-linear interpolant of nmmse between adjacent integers."""
    x = float(x)
    if not np.isfinite(x) or x < 0:
        raise ValueError(f"x must be a nonnegative real, got {x}")
    if x > MAX_BITS:
        raise ValueError(f"x must not exceed {MAX_BITS}")
    lo = math.floor(x)
    frac = x - lo
    if frac == 0.0:
        return nmmse(lo)
    return (1.0 - frac) * nmmse(lo) + frac * nmmse(lo + 1)


def marginal_gain_table(max_bits: int) -> np.ndarray:
    """Marginal NMMSE decrease nmmse(B) - nmmse(B+1) for B = 0..max_bits-1.

    The first two gains are both exactly 4/pi**2; the table pins that
    equality bitwise so that argmax tie-breaking sees a true tie.
    """
    if max_bits < 1:
        return np.zeros(0)
    vals = nmmse(np.arange(max_bits + 1))
    gains = vals[:-1] - vals[1:]
    gains[0] = 4.0 / math.pi**2
    if max_bits >= 2:
        gains[1] = gains[0]
    return gains


@dataclass(frozen=True)
class AllocationProblem:
    """Path weights (squared amplitudes) and a total bit budget."""

    weights: tuple[float, ...]
    budget: int

    def __post_init__(self):
        if len(self.weights) < 1:
            raise ValueError("need at least one weight")
        if any(not np.isfinite(w) or w < 0 for w in self.weights):
            raise ValueError("weights must be finite and nonnegative")
        if self.budget < 0 or int(self.budget) != self.budget:
            raise ValueError(f"budget must be a nonnegative integer, got {self.budget}")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "budget", int(self.budget))


@dataclass(frozen=True)
class Allocation:
    """Bit counts per path and the weighted NMMSE they achieve."""

    bits: tuple[int, ...]
    objective: float


def weighted_nmmse(weights, bits) -> float:
    """Objective sum_l weights[l] * nmmse(bits[l])."""
    w = np.asarray(weights, dtype=float)
    return float(w @ nmmse(_as_bits_array(bits)))


def allocate_greedy(p: AllocationProblem) -> Allocation:
    """Incremental marginal-analysis allocator.

    Starting from all-zero bits, each round grants one bit to the path with
    the largest weighted marginal decrease; ties go to the lowest path index
    (numpy argmax convention).
    """
    L = len(p.weights)
    w = np.asarray(p.weights, dtype=float)
    bits = np.zeros(L, dtype=np.int64)
    if p.budget > 0:
        cap = min(p.budget, MAX_BITS)
        gains = marginal_gain_table(cap)
        for _ in range(p.budget):
            candidate = np.full(L, -1.0)
            open_paths = bits < cap
            candidate[open_paths] = w[open_paths] * gains[bits[open_paths]]
            step = int(np.argmax(candidate))
            if candidate[step] < 0.0:
                raise ValueError(f"budget {p.budget} exceeds {MAX_BITS} bits on every path")
            bits[step] += 1
    return Allocation(bits=tuple(int(b) for b in bits),
                      objective=weighted_nmmse(w, bits))


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def allocate_bruteforce(p: AllocationProblem) -> Allocation:
    """Exhaustive minimizer over all compositions of the budget.

    Serves as the optimality oracle for the greedy allocator; guarded so
    enumeration stays below 10**7 candidates.
    """
    L = len(p.weights)
    count = math.comb(p.budget + L - 1, L - 1)
    if count > 10**7:
        raise ValueError(f"enumeration of {count} compositions exceeds the 1e7 guard")
    comps = np.fromiter(
        (b for comp in _compositions(p.budget, L) for b in comp),
        dtype=np.int64, count=count * L,
    ).reshape(count, L)
    table = nmmse(np.arange(p.budget + 1))
    w = np.asarray(p.weights, dtype=float)
    objectives = table[comps] @ w
    best = int(np.argmin(objectives))
    bits = tuple(int(b) for b in comps[best])
    return Allocation(bits=bits, objective=weighted_nmmse(w, bits))


def allocate_uniform(p: AllocationProblem) -> Allocation:
    """Even split of the budget; any remainder goes to the leading paths."""
    L = len(p.weights)
    base, extra = divmod(p.budget, L)
    bits = tuple(base + (1 if i < extra else 0) for i in range(L))
    return Allocation(bits=bits, objective=weighted_nmmse(p.weights, bits))


def theoretical_weighted_mse(betas, bits, num_antennas: int) -> float:
    """Closed-form reconstruction MSE sum_l N * beta_l**2 * nmmse(B_l)."""
    betas = np.asarray(betas, dtype=float)
    b = _as_bits_array(bits)
    if betas.shape != b.shape:
        raise ValueError("betas and bits must have matching lengths")
    return float(num_antennas * (betas**2 @ nmmse(b)))
