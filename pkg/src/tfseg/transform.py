"""Tight-frame analysis/synthesis operators and soft-thresholding.

Two backends are provided:

``bspline``
    Single-level undecimated piecewise-linear B-spline framelet, tensor
    product over 1, 2 or 3 axes (3**d subbands). Boundaries use half-sample
    mirror extension, under which the frame stays exactly tight.
``dtcwt``
    2-D dual-tree complex wavelet transform: four separable orthonormal
    decimated pyramids (tree pairs gg, hh, hg, gh) combined by the
    orthogonal ``1/sqrt(8)`` butterfly, stored as complex subbands.

Summation order is fixed (subbands in label order, taps in index order),
so results are bitwise reproducible for identical inputs.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from tfseg import filters
from tfseg.errors import (
    InvalidArgumentError,
    OracleScaleExceededError,
    UnsupportedBackendError,
)

ORACLE_MAX_PIXELS = 4096

_INV_SQRT8 = 1.0 / math.sqrt(8.0)
_DTCWT_TREES = (("g", "g"), ("h", "h"), ("h", "g"), ("g", "h"))
_ORIENTATIONS = ("LH", "HL", "HH")


class BackendKind(str, enum.Enum):
    BSPLINE = "bspline"
    DTCWT = "dtcwt"


@dataclass(frozen=True)
class FrameBackend:
    """A tight-frame definition: filter family plus decomposition depth.

    ``dimension`` of ``None`` accepts any supported dimensionality; otherwise
    inputs must match it.
    """

    kind: BackendKind = BackendKind.BSPLINE
    levels: int = 1
    dimension: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BackendKind(self.kind))
        if self.levels < 1:
            raise InvalidArgumentError(f"levels must be >= 1, got {self.levels}")
        if self.kind is BackendKind.BSPLINE and self.levels != 1:
            raise InvalidArgumentError("the B-spline framelet backend is single-level")
        if self.dimension is not None:
            if self.kind is BackendKind.DTCWT and self.dimension != 2:
                raise UnsupportedBackendError(
                    f"dtcwt supports 2-D fields only, not {self.dimension}-D"
                )
            if not 1 <= self.dimension <= 3:
                raise InvalidArgumentError(f"unsupported dimension {self.dimension}")

    @classmethod
    def bspline(cls, dimension: int | None = None) -> "FrameBackend":
        return cls(BackendKind.BSPLINE, 1, dimension)

    @classmethod
    def dtcwt(cls, levels: int = 4) -> "FrameBackend":
        return cls(BackendKind.DTCWT, levels, 2)

    def check_field(self, shape: Sequence[int]) -> None:
        ndim = len(shape)
        if self.kind is BackendKind.DTCWT and ndim != 2:
            raise UnsupportedBackendError(f"dtcwt supports 2-D fields only, not {ndim}-D")
        if self.dimension is not None and ndim != self.dimension:
            raise InvalidArgumentError(
                f"backend expects {self.dimension}-D input, got {ndim}-D"
            )
        if not 1 <= ndim <= 3:
            raise InvalidArgumentError(f"unsupported dimension {ndim}")
        if any(n < 1 for n in shape):
            raise InvalidArgumentError(f"empty extent in shape {tuple(shape)}")


@dataclass(frozen=True)
class Geometry:
    """Original extent plus the padded extent the transform actually ran on."""

    shape: tuple[int, ...]
    padded_shape: tuple[int, ...]
    backend: FrameBackend


@dataclass
class CoefficientSet:
    subbands: list[tuple[str, np.ndarray]]
    geometry: Geometry
    lowpass: frozenset[str] = field(default_factory=frozenset)

    def __getitem__(self, label: str) -> np.ndarray:
        for name, arr in self.subbands:
            if name == label:
                return arr
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [name for name, _ in self.subbands]

    def count(self) -> int:
        """Number of real coefficients (complex entries count twice)."""
        return sum(a.size * (2 if np.iscomplexobj(a) else 1) for _, a in self.subbands)

    def to_vector(self) -> np.ndarray:
        """Flatten to a real vector; complex subbands contribute real then imag parts."""
        parts = []
        for _, arr in self.subbands:
            if np.iscomplexobj(arr):
                parts.append(arr.real.ravel())
                parts.append(arr.imag.ravel())
            else:
                parts.append(arr.ravel())
        return np.concatenate(parts)

    def map(self, fn) -> "CoefficientSet":
        return CoefficientSet(
            [(name, fn(name, arr)) for name, arr in self.subbands],
            self.geometry,
            self.lowpass,
        )

    def scaled(self, factor: float) -> "CoefficientSet":
        return self.map(lambda _, a: a * factor)


ThresholdValue = Union[float, np.ndarray]


@dataclass(frozen=True)
class ThresholdVector:
    """Thresholds for soft shrinkage.

    ``lam`` is a scalar, an array broadcastable to every subband, or a mapping
    from subband label to scalar/array. Lowpass subbands are left untouched
    when ``lowpass_exempt`` is set.
    """

    lam: ThresholdValue | Mapping[str, ThresholdValue] = 0.1
    lowpass_exempt: bool = True

    def __post_init__(self) -> None:
        values = self.lam.values() if isinstance(self.lam, Mapping) else [self.lam]
        for v in values:
            arr = np.asarray(v, dtype=float)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise InvalidArgumentError("thresholds must be finite and >= 0")

    def for_subband(self, label: str) -> ThresholdValue | None:
        if isinstance(self.lam, Mapping):
            return self.lam.get(label)
        return self.lam


# ---------------------------------------------------------------------------
# 1-D building blocks


def _slicer(ndim: int, axis: int, sl: slice | int) -> tuple:
    idx: list = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def _mirror_index(i: int, n: int) -> int:
    # half-sample symmetric: ... b a | a b c | c b ...
    period = 2 * n
    i %= period
    return i if i < n else period - 1 - i


def conv_sym(signal: np.ndarray, taps: Sequence[float], axis: int = -1) -> np.ndarray:
    """Same-length convolution along ``axis`` with half-sample mirror extension.

    ``y[j] = sum_k taps[k] * x[j - k + c]`` with ``c = (len(taps) - 1) // 2``.
    """
    taps = np.asarray(taps, dtype=float)
    if taps.ndim != 1 or taps.size == 0:
        raise InvalidArgumentError("filter must be a non-empty 1-D tap sequence")
    x = np.asarray(signal, dtype=float)
    if x.ndim == 0 or x.shape[axis] < 1:
        raise InvalidArgumentError("signal must have length >= 1")
    axis = axis % x.ndim
    n = x.shape[axis]
    length = taps.size
    c = (length - 1) // 2
    before, after = length - 1 - c, c
    src = np.arange(-before, n + after)
    idx = np.array([_mirror_index(int(i), n) for i in src])
    xp = np.take(x, idx, axis=axis)
    out = np.zeros_like(x)
    for k in range(length):
        if taps[k] != 0.0:
            start = length - 1 - k
            out += taps[k] * xp[_slicer(x.ndim, axis, slice(start, start + n))]
    return out


def conv_sym_adjoint(coeffs: np.ndarray, taps: Sequence[float], axis: int = -1) -> np.ndarray:
    """Exact transpose of :func:`conv_sym` along ``axis``."""
    taps = np.asarray(taps, dtype=float)
    if taps.ndim != 1 or taps.size == 0:
        raise InvalidArgumentError("filter must be a non-empty 1-D tap sequence")
    u = np.asarray(coeffs, dtype=float)
    axis = axis % u.ndim
    n = u.shape[axis]
    length = taps.size
    c = (length - 1) // 2
    before, after = length - 1 - c, c
    padded_shape = list(u.shape)
    padded_shape[axis] = n + before + after
    up = np.zeros(padded_shape)
    for k in range(length):
        if taps[k] != 0.0:
            start = length - 1 - k
            up[_slicer(u.ndim, axis, slice(start, start + n))] += taps[k] * u
    out = up[_slicer(u.ndim, axis, slice(before, before + n))].copy()
    for t in itertools.chain(range(before), range(before + n, before + n + after)):
        m = _mirror_index(t - before, n)
        out[_slicer(u.ndim, axis, slice(m, m + 1))] += up[
            _slicer(u.ndim, axis, slice(t, t + 1))
        ]
    return out


def _periodic_analysis(x: np.ndarray, h: np.ndarray, axis: int) -> np.ndarray:
    """Decimated periodic filtering: ``y[n] = sum_k h[k] x[(2n + k) mod N]``."""
    out = None
    for k in range(h.size):
        term = h[k] * np.roll(x, -k, axis=axis)[_slicer(x.ndim, axis, slice(0, None, 2))]
        out = term if out is None else out + term
    return out


def _periodic_synthesis(y: np.ndarray, h: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of :func:`_periodic_analysis`."""
    shape = list(y.shape)
    shape[axis] *= 2
    up = np.zeros(shape, dtype=y.dtype)
    up[_slicer(y.ndim, axis, slice(0, None, 2))] = y
    out = np.zeros(shape, dtype=y.dtype)
    for k in range(h.size):
        out += h[k] * np.roll(up, k, axis=axis)
    return out


# ---------------------------------------------------------------------------
# B-spline framelet backend


def _bspline_labels(ndim: int) -> list[str]:
    return ["".join(p) for p in itertools.product("012", repeat=ndim)]


def _bspline_analyze(f: np.ndarray, backend: FrameBackend) -> CoefficientSet:
    bands: list[tuple[str, np.ndarray]] = [("", f)]
    for axis in range(f.ndim):
        bands = [
            (label + str(i), conv_sym(arr, filters.BSPLINE_TAPS[i], axis))
            for label, arr in bands
            for i in range(3)
        ]
    geom = Geometry(f.shape, f.shape, backend)
    return CoefficientSet(bands, geom, frozenset({"0" * f.ndim}))


def _bspline_synthesize(c: CoefficientSet) -> np.ndarray:
    shape = c.geometry.shape
    out = np.zeros(shape)
    for label, arr in c.subbands:
        x = np.real(arr)
        for axis, ch in enumerate(label):
            x = conv_sym_adjoint(x, filters.BSPLINE_TAPS[int(ch)], axis)
        out += x
    return out


# ---------------------------------------------------------------------------
# Dual-tree complex wavelet backend


def _dtcwt_padded_shape(shape: Sequence[int], levels: int) -> tuple[int, ...]:
    block = 2**levels
    return tuple(-(-n // block) * block for n in shape)


def _symmetric_pad_end(f: np.ndarray, padded_shape: Sequence[int]) -> np.ndarray:
    out = f
    for axis, (n, m) in enumerate(zip(f.shape, padded_shape)):
        if m != n:
            idx = np.array([_mirror_index(i, n) for i in range(m)])
            out = np.take(out, idx, axis=axis)
    return out


def _tree_filters(tree: str, level: int) -> tuple[np.ndarray, np.ndarray]:
    h0 = filters.dtcwt_lowpass(tree, level)
    return h0, filters.qmf_highpass(h0)


def _tree_analyze(x: np.ndarray, row_tree: str, col_tree: str, levels: int):
    """One separable orthonormal 2-D DWT pyramid.

    Column filters run along axis 0, row filters along axis 1.
    Returns ``(highs, lowpass)`` with ``highs[j][o]`` for orientation ``o``.
    """
    highs = []
    for level in range(1, levels + 1):
        c0, c1 = _tree_filters(col_tree, level)
        r0, r1 = _tree_filters(row_tree, level)
        lo = _periodic_analysis(x, c0, 0)
        hi = _periodic_analysis(x, c1, 0)
        highs.append(
            {
                "LH": _periodic_analysis(lo, r1, 1),
                "HL": _periodic_analysis(hi, r0, 1),
                "HH": _periodic_analysis(hi, r1, 1),
            }
        )
        x = _periodic_analysis(lo, r0, 1)
    return highs, x


def _tree_synthesize(highs, lowpass: np.ndarray, row_tree: str, col_tree: str) -> np.ndarray:
    x = lowpass
    for level in range(len(highs), 0, -1):
        c0, c1 = _tree_filters(col_tree, level)
        r0, r1 = _tree_filters(row_tree, level)
        band = highs[level - 1]
        lo = _periodic_synthesis(x, r0, 1) + _periodic_synthesis(band["LH"], r1, 1)
        hi = _periodic_synthesis(band["HL"], r0, 1) + _periodic_synthesis(band["HH"], r1, 1)
        x = _periodic_synthesis(lo, c0, 0) + _periodic_synthesis(hi, c1, 0)
    return x


def _combine(gg, hh, hg, gh) -> tuple[np.ndarray, np.ndarray]:
    # rows of the 1/sqrt(8) butterfly, paired (1,3) and (2,4) into complex values
    plus = (gg - hh) * _INV_SQRT8 + 1j * ((hg + gh) * _INV_SQRT8)
    minus = (gg + hh) * _INV_SQRT8 + 1j * ((hg - gh) * _INV_SQRT8)
    return plus, minus


def _split(plus: np.ndarray, minus: np.ndarray):
    r1, r3 = plus.real, plus.imag
    r2, r4 = minus.real, minus.imag
    gg = (r1 + r2) * _INV_SQRT8
    hh = (r2 - r1) * _INV_SQRT8
    hg = (r3 + r4) * _INV_SQRT8
    gh = (r3 - r4) * _INV_SQRT8
    return gg, hh, hg, gh


def _dtcwt_analyze(f: np.ndarray, backend: FrameBackend) -> CoefficientSet:
    levels = backend.levels
    padded_shape = _dtcwt_padded_shape(f.shape, levels)
    x = _symmetric_pad_end(f, padded_shape)
    per_tree = [_tree_analyze(x, rt, ct, levels) for rt, ct in _DTCWT_TREES]
    subbands: list[tuple[str, np.ndarray]] = []
    for j in range(levels):
        for o in _ORIENTATIONS:
            plus, minus = _combine(*(t[0][j][o] for t in per_tree))
            subbands.append((f"L{j + 1}{o}+", plus))
            subbands.append((f"L{j + 1}{o}-", minus))
    plus, minus = _combine(*(t[1] for t in per_tree))
    subbands.append(("LP+", plus))
    subbands.append(("LP-", minus))
    geom = Geometry(f.shape, padded_shape, backend)
    return CoefficientSet(subbands, geom, frozenset({"LP+", "LP-"}))


def _dtcwt_synthesize(c: CoefficientSet) -> np.ndarray:
    levels = c.geometry.backend.levels
    highs_by_tree: list[list[dict]] = [[{} for _ in range(levels)] for _ in _DTCWT_TREES]
    for j in range(levels):
        for o in _ORIENTATIONS:
            parts = _split(c[f"L{j + 1}{o}+"], c[f"L{j + 1}{o}-"])
            for t, part in enumerate(parts):
                highs_by_tree[t][j][o] = part
    lows = _split(c["LP+"], c["LP-"])
    out = np.zeros(c.geometry.padded_shape)
    for t, (rt, ct) in enumerate(_DTCWT_TREES):
        out += _tree_synthesize(highs_by_tree[t], lows[t], rt, ct)
    return out[tuple(slice(0, n) for n in c.geometry.shape)]


def _expected_shapes(geom: Geometry) -> dict[str, tuple[int, ...]]:
    backend = geom.backend
    if backend.kind is BackendKind.BSPLINE:
        return {label: geom.shape for label in _bspline_labels(len(geom.shape))}
    shapes = {}
    for j in range(1, backend.levels + 1):
        sub = tuple(n // 2**j for n in geom.padded_shape)
        for o in _ORIENTATIONS:
            shapes[f"L{j}{o}+"] = sub
            shapes[f"L{j}{o}-"] = sub
    last = tuple(n // 2**backend.levels for n in geom.padded_shape)
    shapes["LP+"] = last
    shapes["LP-"] = last
    return shapes


# ---------------------------------------------------------------------------
# Public operators


def analyze(f: np.ndarray, backend: FrameBackend) -> CoefficientSet:
    """Apply the frame operator to ``f``."""
    f = np.asarray(f, dtype=float)
    backend.check_field(f.shape)
    if not np.all(np.isfinite(f)):
        raise InvalidArgumentError("field contains non-finite values")
    if backend.kind is BackendKind.BSPLINE:
        return _bspline_analyze(f, backend)
    return _dtcwt_analyze(f, backend)


def synthesize(c: CoefficientSet, backend: FrameBackend) -> np.ndarray:
    """Apply the adjoint frame operator; inverts :func:`analyze` exactly."""
    geom = c.geometry
    if geom.backend.kind is not backend.kind or geom.backend.levels != backend.levels:
        raise InvalidArgumentError(
            f"coefficients from {geom.backend.kind.value}/{geom.backend.levels} "
            f"cannot be synthesized by {backend.kind.value}/{backend.levels}"
        )
    expected = _expected_shapes(geom)
    got = {label: arr.shape for label, arr in c.subbands}
    if got != expected:
        raise InvalidArgumentError("coefficient geometry does not match its backend")
    if backend.kind is BackendKind.BSPLINE:
        return _bspline_synthesize(c)
    return _dtcwt_synthesize(c)


def _shrink(v: np.ndarray, lam: ThresholdValue) -> np.ndarray:
    mag = np.abs(v)
    kept = np.maximum(mag - lam, 0.0)
    if not np.iscomplexobj(v):
        return np.sign(v) * kept
    scale = np.divide(kept, mag, out=np.zeros_like(kept), where=mag > 0)
    return v * scale


def soft_threshold(c: CoefficientSet, t: ThresholdVector) -> CoefficientSet:
    """Elementwise soft shrinkage; complex entries shrink in magnitude, keeping phase."""

    def apply(label: str, arr: np.ndarray) -> np.ndarray:
        if t.lowpass_exempt and label in c.lowpass:
            return arr.copy()
        lam = t.for_subband(label)
        if lam is None:
            return arr.copy()
        return _shrink(arr, np.asarray(lam, dtype=float))

    return c.map(apply)


def denoise(f: np.ndarray, backend: FrameBackend, t: ThresholdVector) -> np.ndarray:
    """Frame-domain soft-thresholding denoiser: synthesize(shrink(analyze(f)))."""
    return synthesize(soft_threshold(analyze(f, backend), t), backend)


# ---------------------------------------------------------------------------
# Dense oracle


def _dense_mirror_conv(taps: np.ndarray, n: int) -> np.ndarray:
    length = taps.size
    c = (length - 1) // 2
    mat = np.zeros((n, n))
    for j in range(n):
        for k in range(length):
            mat[j, _mirror_index(j - k + c, n)] += taps[k]
    return mat


def _dense_periodic_decimated(taps: np.ndarray, n: int) -> np.ndarray:
    mat = np.zeros((n // 2, n))
    for row in range(n // 2):
        for k in range(taps.size):
            mat[row, (2 * row + k) % n] += taps[k]
    return mat


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, m)
    return out


def dense_frame_matrix(backend: FrameBackend, shape: Sequence[int]) -> np.ndarray:
    """Materialize the frame operator as a dense matrix (test oracle).

    Rows follow :meth:`CoefficientSet.to_vector` ordering and columns the
    C-order flattening of the field, so ``A @ f.ravel()`` equals
    ``analyze(f).to_vector()``.
    """
    shape = tuple(int(n) for n in shape)
    if math.prod(shape) > ORACLE_MAX_PIXELS:
        raise OracleScaleExceededError(
            f"{math.prod(shape)} pixels exceeds the dense-oracle limit {ORACLE_MAX_PIXELS}"
        )
    backend.check_field(shape)
    if backend.kind is BackendKind.BSPLINE:
        blocks = []
        for label in _bspline_labels(len(shape)):
            mats = [
                _dense_mirror_conv(filters.BSPLINE_TAPS[int(ch)], n)
                for ch, n in zip(label, shape)
            ]
            blocks.append(_kron_all(mats))
        return np.vstack(blocks)

    levels = backend.levels
    padded = _dtcwt_padded_shape(shape, levels)
    pad = _kron_all(
        [
            np.eye(n)[[_mirror_index(i, n) for i in range(m)]]
            for n, m in zip(shape, padded)
        ]
    )
    trees = []
    for row_tree, col_tree in _DTCWT_TREES:
        bands: dict[str, np.ndarray] = {}
        current = np.eye(math.prod(padded))
        size = padded
        for level in range(1, levels + 1):
            c0, c1 = _tree_filters(col_tree, level)
            r0, r1 = _tree_filters(row_tree, level)
            col = {"L": _dense_periodic_decimated(c0, size[0]), "H": _dense_periodic_decimated(c1, size[0])}
            row = {"L": _dense_periodic_decimated(r0, size[1]), "H": _dense_periodic_decimated(r1, size[1])}
            for o in _ORIENTATIONS:
                bands[f"L{level}{o}"] = np.kron(col[o[0]], row[o[1]]) @ current
            current = np.kron(col["L"], row["L"]) @ current
            size = (size[0] // 2, size[1] // 2)
        bands["LP"] = current
        trees.append(bands)

    rows = []
    keys = [f"L{j}{o}" for j in range(1, levels + 1) for o in _ORIENTATIONS] + ["LP"]
    for key in keys:
        gg, hh, hg, gh = (t[key] for t in trees)
        # plus: real then imag; minus: real then imag
        rows.extend(
            [
                (gg - hh) * _INV_SQRT8,
                (hg + gh) * _INV_SQRT8,
                (gg + hh) * _INV_SQRT8,
                (hg - gh) * _INV_SQRT8,
            ]
        )
    return np.vstack(rows) @ pad
