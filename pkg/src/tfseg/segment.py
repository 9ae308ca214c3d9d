"""Iterative tight-frame segmentation of tubular structures.

Each iteration estimates an intensity range for the unresolved pixels,
thresholds and stretches the image against it, then smooths the pixels that
are still ambiguous with a frame denoiser. Every non-stopping iteration
permanently resolves at least the brightest in-range candidate, so the loop
ends at an exactly binary image.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from tfseg.errors import (
    InvalidArgumentError,
    InvalidInputError,
    IterationCapExceededError,
    NoCandidatesError,
)
from tfseg.transform import FrameBackend, ThresholdVector, denoise

DEFAULT_LAMBDA = 0.1
DEFAULT_EPSILON = {2: 0.003, 3: 0.06}
DEFAULT_DTCWT_LEVELS = 4
MEAN_TIE_RTOL = 1e-12


def normalize_dynamic_range(f: np.ndarray) -> np.ndarray:
    """Affine min-max map onto [0, 1]; constant fields map to zeros."""
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("image contains non-finite pixels")
    lo, hi = float(f.min()), float(f.max())
    if hi == lo:
        return np.zeros_like(f)
    if lo == 0.0 and hi == 1.0:
        return f.copy()
    out = (f - lo) / (hi - lo)
    # pin the extremes so the result spans exactly [0, 1]
    out[f == lo] = 0.0
    out[f == hi] = 1.0
    return out


def gradient_l1(f: np.ndarray) -> np.ndarray:
    """Per-pixel 1-norm of forward differences (zero difference at trailing edges)."""
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    for axis in range(f.ndim):
        last = np.take(f, [-1], axis=axis)
        out += np.abs(np.diff(f, axis=axis, append=last))
    return out


def init_candidates(f: np.ndarray, epsilon: float) -> np.ndarray:
    """Boolean mask of pixels whose gradient 1-norm is at least ``epsilon``."""
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be > 0, got {epsilon}")
    mask = gradient_l1(f) >= epsilon
    if not mask.any():
        raise NoCandidatesError(
            f"no boundary candidates: no pixel has gradient >= {epsilon}; "
            "the image is flat at this scale, try a smaller epsilon"
        )
    return mask


@dataclass(frozen=True)
class RangeEstimate:
    mu: float
    mu_minus: float
    mu_plus: float
    alpha: float
    beta: float
    M: float | None = None
    m: float | None = None


def compute_range(f: np.ndarray, candidates: np.ndarray) -> RangeEstimate:
    values = np.asarray(f, dtype=float)[candidates]
    if values.size == 0:
        raise InvalidArgumentError("range estimation needs a non-empty candidate set")
    # denoised candidates may overshoot [0, 1]; the statistics must not leave it
    values = np.clip(values, 0.0, 1.0)
    # a rounded mean may fall just outside [min, max] when values are equal
    mu = min(max(float(values.mean()), float(values.min())), float(values.max()))
    # values equal to the mean up to rounding count on both sides
    tol = MEAN_TIE_RTOL * max(1.0, abs(mu))
    mu_minus = min(float(values[values <= mu + tol].mean()), mu)
    mu_plus = max(float(values[values >= mu - tol].mean()), mu)
    alpha = max((mu + mu_minus) / 2.0, 0.0)
    beta = min((mu + mu_plus) / 2.0, 1.0)
    return RangeEstimate(mu, mu_minus, mu_plus, alpha, beta)


def threshold_stretch(
    f: np.ndarray, candidates: np.ndarray, r: RangeEstimate
) -> tuple[np.ndarray, RangeEstimate]:
    """Two-sided threshold at ``[alpha, beta]`` with a linear stretch in between.

    ``M``/``m`` are the extremes of the in-range candidate values. Candidate
    pixels in ``(alpha, beta)`` are stretched by ``(f - m) / (M - m)`` and
    clamped to [0, 1]; when ``M == m`` they map to 1. Non-candidate pixels in
    ``(alpha, beta)`` (only possible on the first pass) are resolved to 0/1 by
    rounding their stretched value, so the candidate set can only shrink.
    Without any in-range candidate they split at the range midpoint.
    """
    f = np.asarray(f, dtype=float)
    alpha, beta = r.alpha, r.beta
    cand_vals = f[candidates]
    in_range = cand_vals[(cand_vals >= alpha) & (cand_vals <= beta)]

    low = f <= alpha
    high = f >= beta
    # alpha == beta: a pixel sitting on the threshold goes to the nearer of 0 and 1
    tie = low & high
    low[tie] = f[tie] < 0.5
    high[tie] = ~low[tie]
    mid = ~(low | high)

    out = np.empty_like(f)
    out[low] = 0.0
    out[high] = 1.0
    if in_range.size == 0:
        M = m = None
        out[mid] = np.where(f[mid] < (alpha + beta) / 2.0, 0.0, 1.0)
        return out, replace(r, M=M, m=m)
    M, m = float(in_range.max()), float(in_range.min())
    if M == m:
        out[mid] = 1.0
    else:
        out[mid] = np.clip((f[mid] - m) / (M - m), 0.0, 1.0)
    outside = mid & ~candidates
    out[outside] = np.where(out[outside] >= 0.5, 1.0, 0.0)
    return out, replace(r, M=M, m=m)


def next_candidates(f_half: np.ndarray) -> np.ndarray:
    return (f_half > 0.0) & (f_half < 1.0)


def masked_denoise(
    f_half: np.ndarray,
    candidates: np.ndarray,
    backend: FrameBackend,
    lam: float | ThresholdVector,
) -> np.ndarray:
    """Replace candidate pixels by their frame-denoised values; others stay bit-identical."""
    out = np.array(f_half, dtype=float, copy=True)
    if not candidates.any():
        return out
    t = lam if isinstance(lam, ThresholdVector) else ThresholdVector(lam)
    smoothed = denoise(out, backend, t)
    out[candidates] = smoothed[candidates]
    return out


def smooth_binary(
    mask: np.ndarray, backend: FrameBackend, lam: float | ThresholdVector = DEFAULT_LAMBDA
) -> np.ndarray:
    """One unmasked pass of the frame denoiser over a binary result (display aid)."""
    t = lam if isinstance(lam, ThresholdVector) else ThresholdVector(lam)
    return denoise(np.asarray(mask, dtype=float), backend, t)


@dataclass(frozen=True)
class SegmentParams:
    epsilon: float
    lam: float = DEFAULT_LAMBDA
    backend: FrameBackend = field(default_factory=lambda: FrameBackend.dtcwt(DEFAULT_DTCWT_LEVELS))
    max_iters: int | None = None
    lowpass_exempt: bool = True

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.lam >= 0:
            raise InvalidArgumentError(f"lambda must be >= 0, got {self.lam}")
        if self.max_iters is not None and self.max_iters < 1:
            raise InvalidArgumentError(f"max_iters must be >= 1, got {self.max_iters}")

    @classmethod
    def for_dimension(cls, ndim: int, **overrides) -> "SegmentParams":
        """Default parameters for a 2-D image or 3-D volume."""
        if ndim not in DEFAULT_EPSILON:
            raise InvalidArgumentError(f"segmentation supports 2-D and 3-D fields, not {ndim}-D")
        backend = FrameBackend.dtcwt(DEFAULT_DTCWT_LEVELS) if ndim == 2 else FrameBackend.bspline(3)
        kwargs = {"epsilon": DEFAULT_EPSILON[ndim], "backend": backend}
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    @property
    def thresholds(self) -> ThresholdVector:
        return ThresholdVector(self.lam, self.lowpass_exempt)


@dataclass(frozen=True)
class IterationRecord:
    i: int
    candidates: int
    range: RangeEstimate | None = None
    seconds: float = 0.0


@dataclass
class IterationStats:
    shape: tuple[int, ...]
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def omega(self) -> int:
        return math.prod(self.shape)

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    @property
    def cardinalities(self) -> list[int]:
        return [r.candidates for r in self.records]

    def to_table(self, include_timing: bool = False) -> str:
        """Plain-text table: header with |Omega|, one row per iteration."""
        lines = [
            "# tfseg iteration statistics",
            f"# shape: {'x'.join(str(n) for n in self.shape)}",
            f"|Omega| = {self.omega}",
            f"{'i':>4}  {'|Lambda(i)|':>12}" + (f"  {'seconds':>10}" if include_timing else ""),
        ]
        for r in self.records:
            row = f"{r.i:>4d}  {r.candidates:>12d}"
            if include_timing:
                row += f"  {r.seconds:>10.4f}"
            lines.append(row)
        return "\n".join(lines) + "\n"

    def to_keyvalue(self, include_timing: bool = False) -> str:
        """``key=value`` lines; floats use shortest round-trip repr."""
        lines = [
            "format=tfseg-stats-1",
            f"shape={'x'.join(str(n) for n in self.shape)}",
            f"omega={self.omega}",
            f"iterations={self.iterations}",
        ]
        for r in self.records:
            lines.append(f"lambda.{r.i}={r.candidates}")
            if r.range is not None:
                for name in ("mu", "mu_minus", "mu_plus", "alpha", "beta", "M", "m"):
                    value = getattr(r.range, name)
                    lines.append(f"{name}.{r.i}={'none' if value is None else repr(value)}")
            if include_timing:
                lines.append(f"seconds.{r.i}={r.seconds!r}")
        return "\n".join(lines) + "\n"


@dataclass
class IterationState:
    """Snapshot of one pass of the loop, as yielded by :func:`iterate`."""

    i: int
    f: np.ndarray
    candidates: np.ndarray
    range: RangeEstimate
    f_half: np.ndarray
    next_candidates: np.ndarray
    f_next: np.ndarray | None
    seconds: float

    @property
    def stopped(self) -> bool:
        return self.f_next is None


def iterate(f: np.ndarray, params: SegmentParams) -> Iterator[IterationState]:
    """Run the segmentation loop on a raw field, yielding every iteration.

    The last state yielded has ``stopped`` set and ``f_half`` binary.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim not in (2, 3):
        raise InvalidInputError(f"expected a 2-D or 3-D field, got {f.ndim}-D")
    params.backend.check_field(f.shape)
    current = normalize_dynamic_range(f)
    cand = init_candidates(current, params.epsilon)
    # each non-final pass removes at least one candidate, so |candidates| passes suffice
    cap = params.max_iters if params.max_iters is not None else int(cand.sum())
    t = params.thresholds
    i = 0
    while True:
        start = time.perf_counter()
        r = compute_range(current, cand)
        f_half, r = threshold_stretch(current, cand, r)
        nxt = next_candidates(f_half)
        if not nxt.any():
            yield IterationState(
                i, current, cand, r, f_half, nxt, None, time.perf_counter() - start
            )
            return
        if i + 1 >= cap:
            raise IterationCapExceededError(
                f"no binary image after {cap} iterations ({int(nxt.sum())} pixels unresolved)"
            )
        f_next = masked_denoise(f_half, nxt, params.backend, t)
        yield IterationState(
            i, current, cand, r, f_half, nxt, f_next, time.perf_counter() - start
        )
        current, cand = f_next, nxt
        i += 1


def segment(f: np.ndarray, params: SegmentParams | None = None) -> tuple[np.ndarray, IterationStats]:
    """Segment a raw 2-D image or 3-D volume into an exactly binary mask."""
    f = np.asarray(f, dtype=float)
    if params is None:
        params = SegmentParams.for_dimension(f.ndim)
    stats = IterationStats(tuple(f.shape))
    result = None
    for state in iterate(f, params):
        stats.records.append(
            IterationRecord(state.i, int(state.candidates.sum()), state.range, state.seconds)
        )
        result = state.f_half
    stats.records.append(IterationRecord(stats.records[-1].i + 1, 0))
    return result, stats
