"""Filter tap tables for the tight-frame backends.

Tables are versioned constants; bump ``FILTER_TABLE_VERSION`` whenever a
tap value changes so serialized coefficient sets can be rejected.

Provenance
----------
* B-spline framelet: piecewise-linear B-spline tight frame (Ron-Shen),
  exact rational/surd values.
* DTCWT level 1: Abdelnour-Selesnick ("Farras") orthonormal 10-tap lowpass.
  The taps have the closed form used below; tree ``h`` uses the time
  reversal of tree ``g``.
* DTCWT levels >= 2: Kingsbury Q-shift (14,14) "qshift_b" orthonormal
  lowpass, 17 significant digits, as distributed with the Cambridge DTCWT
  toolbox. Tree ``h`` is the time reversal of tree ``g``.

None of these values is trusted on its own: the test suite checks
orthonormality and perfect reconstruction directly.
"""

from __future__ import annotations

import math

import numpy as np

FILTER_TABLE_VERSION = 1

_S2 = math.sqrt(2.0)

BSPLINE_TAPS: tuple[np.ndarray, np.ndarray, np.ndarray] = (
    np.array([1.0, 2.0, 1.0]) / 4.0,
    np.array([1.0, 0.0, -1.0]) * (_S2 / 4.0),
    np.array([-1.0, 2.0, -1.0]) / 4.0,
)

_FA = 1.0 / (8.0 * _S2)
_FB = (4.0 + math.sqrt(15.0)) / (8.0 * _S2)
_FC = (4.0 - math.sqrt(15.0)) / (8.0 * _S2)

FARRAS_H0 = np.array([0.0, 0.0, -_FA, _FA, _FB, _FB, _FA, -_FA, _FC, _FC])

QSHIFT_B_H0A = np.array(
    [
        0.00325314276365318,
        -0.00388321199915849,
        0.03466034684485349,
        -0.03887280126882779,
        -0.11720388769911527,
        0.27529538466888204,
        0.7561456438925225,
        0.5688104207121227,
        0.011866092033797,
        -0.1067118046866654,
        0.0238253847949203,
        0.01702522388155399,
        -0.00543947593727412,
        -0.00455689562847549,
    ]
)


def qmf_highpass(h0: np.ndarray) -> np.ndarray:
    """Orthonormal highpass partner ``h1[k] = (-1)^k h0[L-1-k]`` (even L)."""
    h0 = np.asarray(h0, dtype=float)
    if h0.size % 2:
        raise ValueError("orthonormal two-channel filters must have even length")
    signs = np.where(np.arange(h0.size) % 2 == 0, 1.0, -1.0)
    return signs * h0[::-1]


def dtcwt_lowpass(tree: str, level: int) -> np.ndarray:
    """Lowpass analysis filter for ``tree`` in {"g", "h"} at ``level`` >= 1."""
    if tree not in ("g", "h"):
        raise ValueError(f"unknown tree {tree!r}")
    base = FARRAS_H0 if level == 1 else QSHIFT_B_H0A
    return base.copy() if tree == "g" else base[::-1].copy()
