"""Synthetic tubular phantoms with exact ground truth, and the Dice overlap.

Phantom description files are plain text::

    # comments start with '#'
    extents = 256 256
    sigma = 0.05
    seed = 1
    background = 0.0

    [tube]
    template = branching_y
    origin = 250 128          # trunk start (index coordinates)
    bifurcation = 128 128
    length = 110              # child branch length
    angle = 70                # full opening angle in degrees
    radius = 6                # trunk radius
    child_radii = 4 3
    intensity = 1.0

Global keys: ``extents`` (2 or 3 ints), ``sigma`` (>= 0), ``seed`` (int),
``background`` (in [0, 1)). Each ``[tube]`` section sets ``template`` to one of
``polyline``, ``helix``, ``branching_y`` plus ``intensity`` (in (0, 1]) and the
template keys:

``polyline``
    ``points`` (flat list, d values per vertex), ``radius`` (one value, or
    one per vertex).
``helix``
    ``center`` (3 values, z y x), ``helix_radius``, ``pitch`` (voxels per
    turn along axis 0), ``turns``, ``radius``, optional ``phase`` (degrees).
``branching_y``
    ``origin``, ``bifurcation``, ``length``, ``angle``, ``radius``,
    ``child_radii`` (2 values); optional ``direction`` (2 values, default
    along the origin->bifurcation line) for 2-D, or ``normal`` for 3-D (the
    plane of the branches is spanned by the trunk and the ``normal``-free
    axis; defaults to the plane containing axis 2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from tfseg.errors import InvalidArgumentError, PhantomSpecError


@dataclass
class TubeSpec:
    """A tube: polyline centerline with per-vertex radius and a foreground level."""

    centerline: np.ndarray
    radius: np.ndarray
    intensity: float = 0.8

    def __post_init__(self) -> None:
        self.centerline = np.atleast_2d(np.asarray(self.centerline, dtype=float))
        r = np.asarray(self.radius, dtype=float)
        if r.ndim == 0:
            r = np.full(len(self.centerline), float(r))
        self.radius = r
        if self.radius.shape != (len(self.centerline),):
            raise InvalidArgumentError("radius needs one value per centerline vertex")
        if np.any(self.radius <= 0):
            raise InvalidArgumentError("tube radius must be > 0")
        if not 0 < self.intensity <= 1:
            raise InvalidArgumentError("foreground intensity must lie in (0, 1]")

    @property
    def ndim(self) -> int:
        return self.centerline.shape[1]

    @classmethod
    def straight(cls, start, end, radius: float, intensity: float = 0.8) -> "TubeSpec":
        return cls(np.array([start, end], dtype=float), radius, intensity)

    @classmethod
    def helix(
        cls,
        center: Sequence[float],
        helix_radius: float,
        pitch: float,
        turns: float,
        radius: float,
        intensity: float = 0.8,
        phase: float = 0.0,
        samples_per_turn: int = 96,
    ) -> "TubeSpec":
        """Helix winding around axis 0 through ``center`` (z, y, x order)."""
        n = max(int(math.ceil(turns * samples_per_turn)), 2)
        t = np.linspace(0.0, turns * 2 * math.pi, n + 1) + math.radians(phase)
        z0 = center[0] - pitch * turns / 2.0
        pts = np.stack(
            [
                z0 + pitch * (t - t[0]) / (2 * math.pi),
                center[1] + helix_radius * np.sin(t),
                center[2] + helix_radius * np.cos(t),
            ],
            axis=1,
        )
        return cls(pts, radius, intensity)

    @classmethod
    def branching_y(
        cls,
        origin: Sequence[float],
        bifurcation: Sequence[float],
        length: float,
        angle: float,
        radius: float,
        child_radii: Sequence[float],
        intensity: float = 0.8,
        plane_axis: Sequence[float] | None = None,
    ) -> list["TubeSpec"]:
        """Trunk from ``origin`` to ``bifurcation`` then two children splayed by ``angle`` degrees.

        The trunk keeps ``radius``; each child tapers from ``radius`` at the
        junction to its own radius, so diameters vary along the tree.
        """
        o = np.asarray(origin, dtype=float)
        b = np.asarray(bifurcation, dtype=float)
        axis = b - o
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise InvalidArgumentError("origin and bifurcation coincide")
        axis /= norm
        if plane_axis is None:
            perp = np.zeros_like(axis)
            perp[-1] = 1.0
        else:
            perp = np.asarray(plane_axis, dtype=float)
        perp = perp - axis * float(perp @ axis)
        if np.linalg.norm(perp) < 1e-9:
            perp = np.roll(axis, 1)
            perp = perp - axis * float(perp @ axis)
        perp /= np.linalg.norm(perp)
        half = math.radians(angle) / 2.0
        tubes = [cls(np.array([o, b]), [radius, radius], intensity)]
        for sign, child_r in zip((1.0, -1.0), child_radii):
            d = math.cos(half) * axis + sign * math.sin(half) * perp
            tubes.append(cls(np.array([b, b + length * d]), [radius, child_r], intensity))
        return tubes


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise InvalidArgumentError("noise sigma must be >= 0")


@dataclass
class PhantomSpec:
    extents: tuple[int, ...]
    tubes: list[TubeSpec] = field(default_factory=list)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    background: float = 0.0


def _tube_mask(tube: TubeSpec, grid: list[np.ndarray], shape: tuple[int, ...]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    pts = tube.centerline
    for k in range(len(pts) - 1):
        p, q = pts[k], pts[k + 1]
        r0, r1 = tube.radius[k], tube.radius[k + 1]
        reach = max(r0, r1)
        lo = np.maximum(np.floor(np.minimum(p, q) - reach), 0).astype(int)
        hi = np.minimum(np.ceil(np.maximum(p, q) + reach) + 1, shape).astype(int)
        if np.any(hi <= lo):
            continue
        box = tuple(slice(a, b) for a, b in zip(lo, hi))
        coords = [g[box] for g in grid]
        seg = q - p
        seg_len2 = float(seg @ seg)
        if seg_len2 == 0:
            t = np.zeros(coords[0].shape)
        else:
            t = sum((c - pc) * sc for c, pc, sc in zip(coords, p, seg)) / seg_len2
            t = np.clip(t, 0.0, 1.0)
        dist2 = sum((c - (pc + t * sc)) ** 2 for c, pc, sc in zip(coords, p, seg))
        r = r0 + t * (r1 - r0)
        mask[box] |= dist2 <= r * r
    return mask


def _tube_fits(tube: TubeSpec, shape: tuple[int, ...]) -> bool:
    pts = tube.centerline
    r = tube.radius[:, None]
    return bool(np.all(pts - r >= 0) and np.all(pts + r <= np.asarray(shape) - 1))


def gen_phantom(
    tubes: Sequence[TubeSpec],
    extents: Sequence[int],
    noise: NoiseSpec = NoiseSpec(),
    background: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Render tubes into ``extents``; return ``(image, truth)``.

    Truth is the union of pixels whose centers lie within the local radius of
    a centerline. The image holds ``background`` outside and each tube's
    intensity inside (max where tubes overlap), plus Gaussian noise clipped
    to [0, 1]. Identical inputs give bit-identical outputs.
    """
    shape = tuple(int(n) for n in extents)
    if len(shape) not in (2, 3) or any(n < 1 for n in shape):
        raise InvalidArgumentError(f"extents must be 2-D or 3-D and positive, got {shape}")
    if not 0 <= background < 1:
        raise InvalidArgumentError("background level must lie in [0, 1)")
    grid = list(np.indices(shape, dtype=float))
    image = np.full(shape, float(background))
    truth = np.zeros(shape, dtype=bool)
    for tube in tubes:
        if tube.ndim != len(shape):
            raise InvalidArgumentError(
                f"{tube.ndim}-D tube cannot be drawn into {len(shape)}-D extents"
            )
        if tube.intensity <= background:
            raise InvalidArgumentError("tube intensity must exceed the background level")
        if not _tube_fits(tube, shape):
            warnings.warn("tube exceeds the phantom extents and is clipped", stacklevel=2)
        inside = _tube_mask(tube, grid, shape)
        image[inside] = np.maximum(image[inside], tube.intensity)
        truth |= inside
    if noise.sigma > 0:
        rng = np.random.default_rng(noise.seed)
        image = np.clip(image + rng.normal(0.0, noise.sigma, shape), 0.0, 1.0)
    return image, truth


def render(spec: PhantomSpec) -> tuple[np.ndarray, np.ndarray]:
    return gen_phantom(spec.tubes, spec.extents, spec.noise, spec.background)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap ``2|a & b| / (|a| + |b|)``; two empty masks score 1."""
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"mask extents differ: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


# ---------------------------------------------------------------------------
# Bundled phantoms

BUNDLED = {"branching-y": "branching_y_2d.txt", "helix": "helix_3d.txt"}


def bundled_spec_text(name: str) -> str:
    from importlib import resources

    if name not in BUNDLED:
        raise InvalidArgumentError(f"unknown bundled phantom {name!r}; choose from {sorted(BUNDLED)}")
    return resources.files("tfseg").joinpath("data").joinpath(BUNDLED[name]).read_text()


def bundled(name: str, sigma: float | None = None, seed: int | None = None) -> PhantomSpec:
    """Load a bundled phantom description, optionally overriding its noise."""
    spec = parse_phantom_spec(bundled_spec_text(name))
    if sigma is not None or seed is not None:
        spec.noise = NoiseSpec(
            spec.noise.sigma if sigma is None else sigma,
            spec.noise.seed if seed is None else seed,
        )
    return spec


def branching_y_2d(sigma: float | None = None, seed: int | None = None) -> PhantomSpec:
    """256x256 Y bifurcation plus a dimmer thin vessel, dark background."""
    return bundled("branching-y", sigma, seed)


def helix_3d(sigma: float | None = None, seed: int | None = None) -> PhantomSpec:
    """64x64x64 helical vessel, dark background."""
    return bundled("helix", sigma, seed)


# ---------------------------------------------------------------------------
# Text spec parsing

_GLOBAL_KEYS = {"extents", "sigma", "seed", "background"}
_TEMPLATE_KEYS = {
    "polyline": {"points", "radius", "intensity"},
    "helix": {"center", "helix_radius", "pitch", "turns", "radius", "intensity", "phase"},
    "branching_y": {
        "origin",
        "bifurcation",
        "length",
        "angle",
        "radius",
        "child_radii",
        "intensity",
        "direction",
        "normal",
    },
}
_REQUIRED = {
    "polyline": {"points", "radius"},
    "helix": {"center", "helix_radius", "pitch", "turns", "radius"},
    "branching_y": {"origin", "bifurcation", "length", "angle", "radius", "child_radii"},
}


def _floats(value: str, key: str, line: int) -> list[float]:
    try:
        return [float(tok) for tok in value.replace(",", " ").split()]
    except ValueError:
        raise PhantomSpecError(f"expected numbers, got {value!r}", key, line) from None


def _tube_from_section(entries: dict[str, tuple[str, int]], ndim: int, header_line: int) -> list[TubeSpec]:
    if "template" not in entries:
        raise PhantomSpecError("tube section without a template", "template", header_line)
    template, tline = entries.pop("template")
    if template not in _TEMPLATE_KEYS:
        raise PhantomSpecError(f"unknown template {template!r}", "template", tline)
    for key, (_, line) in entries.items():
        if key not in _TEMPLATE_KEYS[template]:
            raise PhantomSpecError(f"unknown key for template {template!r}", key, line)
    for key in sorted(_REQUIRED[template] - entries.keys()):
        raise PhantomSpecError(f"missing key for template {template!r}", key, header_line)

    def num(key: str, count: int | None = 1, default=None):
        if key not in entries:
            return default
        value, line = entries[key]
        vals = _floats(value, key, line)
        if count is not None and len(vals) != count:
            raise PhantomSpecError(f"expected {count} value(s), got {len(vals)}", key, line)
        return vals[0] if count == 1 else vals

    try:
        intensity = num("intensity", default=0.8)
        if template == "polyline":
            value, line = entries["points"]
            pts = _floats(value, "points", line)
            if len(pts) % ndim or len(pts) < 2 * ndim:
                raise PhantomSpecError(f"points need >= 2 vertices of {ndim} values", "points", line)
            pts_arr = np.array(pts).reshape(-1, ndim)
            radius = num("radius", count=None)
            if len(radius) == 1:
                radius = radius[0]
            return [TubeSpec(pts_arr, radius, intensity)]
        if template == "helix":
            if ndim != 3:
                raise PhantomSpecError("helix needs 3-D extents", "template", tline)
            return [
                TubeSpec.helix(
                    num("center", 3),
                    num("helix_radius"),
                    num("pitch"),
                    num("turns"),
                    num("radius"),
                    intensity,
                    num("phase", default=0.0),
                )
            ]
        plane = num("direction", ndim) if ndim == 2 else num("normal", 3)
        return TubeSpec.branching_y(
            num("origin", ndim),
            num("bifurcation", ndim),
            num("length"),
            num("angle"),
            num("radius"),
            num("child_radii", 2),
            intensity,
            plane,
        )
    except InvalidArgumentError as exc:
        raise PhantomSpecError(str(exc), template, header_line) from None


def parse_phantom_spec(text: str) -> PhantomSpec:
    """Parse the plain-text phantom description (see module docstring)."""
    globals_: dict[str, tuple[str, int]] = {}
    sections: list[tuple[int, dict[str, tuple[str, int]]]] = []
    current = globals_
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[tube]":
                raise PhantomSpecError(f"unknown section {line}", line.strip("[]"), lineno)
            sections.append((lineno, {}))
            current = sections[-1][1]
            continue
        if "=" not in line:
            raise PhantomSpecError("expected 'key = value'", line, lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if current is globals_ and key not in _GLOBAL_KEYS:
            raise PhantomSpecError("unknown key", key, lineno)
        if key in current:
            raise PhantomSpecError("duplicate key", key, lineno)
        current[key] = (value, lineno)

    if "extents" not in globals_:
        raise PhantomSpecError("missing key", "extents", None)
    value, line = globals_["extents"]
    ext = _floats(value, "extents", line)
    if len(ext) not in (2, 3) or any(e < 1 or e != int(e) for e in ext):
        raise PhantomSpecError("extents must be 2 or 3 positive integers", "extents", line)
    extents = tuple(int(e) for e in ext)

    def scalar(key: str, default: float) -> float:
        if key not in globals_:
            return default
        value, line = globals_[key]
        vals = _floats(value, key, line)
        if len(vals) != 1:
            raise PhantomSpecError("expected a single value", key, line)
        return vals[0]

    sigma = scalar("sigma", 0.0)
    seed = scalar("seed", 0.0)
    if seed != int(seed):
        raise PhantomSpecError("seed must be an integer", "seed", globals_["seed"][1])
    background = scalar("background", 0.0)
    if sigma < 0:
        raise PhantomSpecError("sigma must be >= 0", "sigma", globals_["sigma"][1])
    if not 0 <= background < 1:
        raise PhantomSpecError("background must lie in [0, 1)", "background", globals_["background"][1])

    tubes: list[TubeSpec] = []
    for header_line, entries in sections:
        tubes.extend(_tube_from_section(dict(entries), len(extents), header_line))
    return PhantomSpec(extents, tubes, NoiseSpec(sigma, int(seed)), background)


def load_phantom_spec(path: str | Path) -> PhantomSpec:
    return parse_phantom_spec(Path(path).read_text())
