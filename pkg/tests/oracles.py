"""Independent reference computations shared by the test modules."""

from __future__ import annotations

import math

import numpy as np

from tfseg.transform import CoefficientSet


def mirrored_sum(x, h):
    """Reference: y[j] = sum_k h[k] x[mirror(j - k + c)] with half-sample mirror."""
    n, c = len(x), (len(h) - 1) // 2
    out = []
    for j in range(n):
        acc = 0.0
        for k, hk in enumerate(h):
            i = j - k + c
            while i < 0 or i >= n:
                i = -i - 1 if i < 0 else 2 * n - 1 - i
            acc += hk * x[i]
        out.append(acc)
    return np.array(out)


def unflatten(template: CoefficientSet, vec: np.ndarray) -> CoefficientSet:
    """Inverse of CoefficientSet.to_vector for the template's layout."""
    out, pos = [], 0
    for label, arr in template.subbands:
        n = arr.size
        if np.iscomplexobj(arr):
            re, im = vec[pos : pos + n], vec[pos + n : pos + 2 * n]
            out.append((label, (re + 1j * im).reshape(arr.shape)))
            pos += 2 * n
        else:
            out.append((label, vec[pos : pos + n].reshape(arr.shape)))
            pos += n
    assert pos == vec.size
    return CoefficientSet(out, template.geometry, template.lowpass)


def ref_shrink(v, lam):
    mag = np.abs(v)
    kept = np.maximum(mag - lam, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mag > 0, v / np.where(mag > 0, mag, 1) * kept, 0 * v)


def crop_matrix(shape, padded):
    idx = np.arange(math.prod(padded)).reshape(padded)
    keep = idx[tuple(slice(0, n) for n in shape)].ravel()
    return np.eye(math.prod(padded))[keep]
