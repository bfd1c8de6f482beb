"""Per-path phase quantization and the DFT-codebook feedback baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import TWO_PI, ArrayGeometry, PathSet, dl_phases

MAX_BITS = 62  # keeps 2**B exactly representable in float64


def _check_bits(bits: int) -> int:
    b = int(bits)
    if b != bits or b < 0:
        raise ValueError(f"bit count must be a nonnegative integer, got {bits!r}")
    if b > MAX_BITS:
        raise ValueError(f"bit count {b} exceeds the supported maximum {MAX_BITS}")
    return b


def wrap_angle(x):
    """Wrap angle(s) to [-pi, pi)."""
    return np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi


@dataclass(frozen=True)
class PhaseCodebook:
    """Uniform phase codebook {2*pi*j / 2**bits : j = 0..2**bits - 1}."""

    bits: int

    def __post_init__(self):
        _check_bits(self.bits)

    @property
    def codewords(self) -> np.ndarray:
        size = 1 << self.bits
        return TWO_PI * np.arange(size) / size


@dataclass(frozen=True)
class QuantizedPhase:
    """A quantized phase: the chosen codeword, its index, and the wrapped error."""

    q: float
    index: int
    delta: float


@dataclass(frozen=True)
class FeedbackPlan:
    """Per-path bit counts together with the quantized DL phases."""

    bits: tuple[int, ...]
    quantized: tuple[QuantizedPhase, ...]

    def __post_init__(self):
        if len(self.bits) != len(self.quantized):
            raise ValueError("bits and quantized phases must have equal length")

    def __len__(self):
        return len(self.bits)

    @property
    def q_values(self) -> np.ndarray:
        return np.array([qp.q for qp in self.quantized])

    @property
    def deltas(self) -> np.ndarray:
        return np.array([qp.delta for qp in self.quantized])


def quantize_phase(angle: float, bits: int) -> QuantizedPhase:
    """Quantize an angle to the nearest codeword in circular distance.

    The error delta = wrap(angle - q) always lands in [-pi/2**bits,
    pi/2**bits].  With bits = 0 the codebook is the single word {0} and
    delta is simply the wrapped angle.
    """
    if not np.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle}")
    b = _check_bits(bits)
    size = 1 << b
    step = TWO_PI / size
    reduced = math.fmod(float(angle), TWO_PI)
    if reduced < 0:
        reduced += TWO_PI
    index = int(round(reduced / step)) % size
    delta = float(wrap_angle(reduced - index * step))
    return QuantizedPhase(q=index * step, index=index, delta=delta)


def quantize_phases(angles, bits) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized quantizer: returns (q, index, delta) arrays.

    ``bits`` broadcasts against ``angles``; same circular rule as
    quantize_phase.
    """
    angles = np.asarray(angles, dtype=float)
    b = np.asarray(bits)
    if np.any(b < 0) or np.any(b > MAX_BITS):
        raise ValueError("bit counts must be in [0, 62]")
    size = np.power(2.0, b)
    step = TWO_PI / size
    reduced = np.mod(angles, TWO_PI)
    index = np.mod(np.round(reduced / step), size).astype(np.int64)
    q = index * step
    delta = wrap_angle(reduced - q)
    return q, index, delta


def feedback_error_bound(bits: int) -> float:
    """Half-width pi/2**bits of the quantization-error support."""
    return math.pi / (1 << _check_bits(bits))


def make_feedback_plan(ps: PathSet, bits, geom: ArrayGeometry) -> FeedbackPlan:
    """Quantize each true DL path phase of ``ps`` with the given bit counts."""
    bits = [int(b) for b in bits]
    if len(bits) != len(ps):
        raise ValueError(f"got {len(bits)} bit counts for {len(ps)} paths")
    angles = dl_phases(ps, geom)
    quantized = tuple(quantize_phase(a, b) for a, b in zip(angles, bits))
    return FeedbackPlan(bits=tuple(bits), quantized=quantized)


def dft_codebook(num_antennas: int, total_bits: int) -> np.ndarray:
    """N x 2**total_bits matrix of unit-norm DFT-style codewords.

    With 2**total_bits >= N the grid is the oversampled DFT (oversampling
    factor 2**total_bits / N); otherwise the N-point DFT columns are
    uniformly subsampled.
    """
    if num_antennas < 1:
        raise ValueError("num_antennas must be >= 1")
    size = 1 << _check_bits(total_bits)
    n = np.arange(num_antennas)[:, None]
    if size >= num_antennas:
        freqs = np.arange(size) / size
    else:
        freqs = np.floor(np.arange(size) * num_antennas / size) / num_antennas
    return np.exp(-1j * TWO_PI * n * freqs[None, :]) / math.sqrt(num_antennas)


def dft_codebook_feedback(h: np.ndarray, total_bits: int,
                          geom: ArrayGeometry) -> tuple[int, np.ndarray]:
    """Pick the codeword best aligned with ``h`` and rebuild the channel from it.

    Returns (index, hhat) where hhat = ||h|| * c for the unit-norm codeword c
    maximizing |c^H h|; the channel norm is assumed perfectly known so that
    only the direction loss of the codebook is measured.
    """
    h = np.asarray(h)
    if h.size == 0:
        raise ValueError("empty channel vector")
    cb = dft_codebook(geom.num_antennas, total_bits)
    index = int(np.argmax(np.abs(cb.conj().T @ h)))
    return index, float(np.linalg.norm(h)) * cb[:, index]
