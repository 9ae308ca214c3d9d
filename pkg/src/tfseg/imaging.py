"""Image/volume I/O and geometric exports (contours, isosurface meshes).

Raw volume format
-----------------
A volume is a headerless payload file plus a text sidecar (``<stem>.hdr`` by
default) holding ``key: value`` lines; ``#`` starts a comment::

    format: tfseg-raw-1
    extents: 201 201 201        # x y z, x varies fastest in the payload
    type: u16                   # u8 | u16 | f32
    endianness: little          # little | big
    spacing: 0.5 0.5 0.8        # optional, one value per axis (default 1)

Readers return the field indexed ``[x, y, z]`` (or ``[x, y]`` for 2-D
headers). 2-D images read from PGM/PNG are indexed ``[row, col]``.
Readers never rescale: intensities come back raw.
"""

from __future__ import annotations

import base64
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from tfseg.errors import (
    ColorImageError,
    ImagingError,
    InvalidInputError,
    MalformedHeaderError,
    SizeMismatchError,
    TruncatedPayloadError,
    UnknownElementTypeError,
)

RAW_FORMAT_TAG = "tfseg-raw-1"
_ELEMENT_TYPES = {"u8": "u1", "u16": "u2", "f32": "f4"}


# ---------------------------------------------------------------------------
# 2-D images


def _pgm_tokens(data: bytes, count: int, path) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise MalformedHeaderError(f"{path}: PGM header ends early")
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def _decode_pgm(data: bytes, path) -> np.ndarray:
    magic = data[:2]
    (w_tok, h_tok, max_tok), pos = _pgm_tokens(data[2:], 3, path)
    pos += 2
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-numeric PGM header field") from None
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise MalformedHeaderError(
            f"{path}: invalid PGM geometry {width}x{height} maxval {maxval}"
        )
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the payload
        payload = data[pos + 1 :]
        itemsize = np.dtype(dtype).itemsize
        expected = count * itemsize
        if len(payload) < expected:
            raise TruncatedPayloadError(expected, len(payload), path)
        values = np.frombuffer(payload[:expected], dtype=dtype)
    else:
        try:
            values = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise MalformedHeaderError(f"{path}: non-numeric ASCII PGM sample") from None
        if values.size < count:
            raise TruncatedPayloadError(count, int(values.size), path)
        values = values[:count]
    if values.size and int(values.max()) > maxval:
        raise MalformedHeaderError(f"{path}: sample exceeds maxval {maxval}")
    out_dtype = np.uint8 if maxval < 256 else np.uint16
    return values.astype(out_dtype).reshape(height, width)


def _decode_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        mode = img.mode
        if mode in ("RGB", "RGBA", "CMYK", "YCbCr", "LAB", "HSV", "P", "PA", "LA", "RGBX"):
            raise ColorImageError(f"{path}: colour PNG (mode {mode}) is not supported")
        if mode == "1":
            return np.asarray(img, dtype=np.uint8)
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise ColorImageError(f"{path}: expected a single grayscale channel")
    if mode.startswith("I;16") or mode == "I":
        return arr.astype(np.uint16) if arr.max(initial=0) < 65536 else arr
    return arr


def read_image2d(path: str | Path) -> np.ndarray:
    """Read an 8/16-bit grayscale PGM (P2/P5) or PNG into a ``[row, col]`` array."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P5", b"P2"):
        return _decode_pgm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _decode_png(path)
    if data[:2] in (b"P3", b"P6"):
        raise ColorImageError(f"{path}: colour PPM is not supported")
    raise MalformedHeaderError(f"{path}: not a PGM or PNG file")


def write_pgm(image: np.ndarray, path: str | Path, maxval: int = 255) -> Path:
    """Write integer samples in ``[0, maxval]`` as binary PGM (P5)."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise InvalidInputError("PGM output needs a 2-D array")
    if arr.size and (arr.min() < 0 or arr.max() > maxval):
        raise InvalidInputError(f"samples must lie in [0, {maxval}]")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    path = Path(path)
    path.write_bytes(header + np.ascontiguousarray(arr, dtype=dtype).tobytes())
    return path


# ---------------------------------------------------------------------------
# Raw volumes


@dataclass(frozen=True)
class VolumeHeader:
    extents: tuple[int, ...]
    element_type: str = "u8"
    endianness: str = "little"
    spacing: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.extents) not in (2, 3) or any(n < 1 for n in self.extents):
            raise MalformedHeaderError(f"extents must be 2 or 3 positive integers: {self.extents}")
        if self.element_type not in _ELEMENT_TYPES:
            raise UnknownElementTypeError(f"unknown element type {self.element_type!r}")
        if self.endianness not in ("little", "big"):
            raise MalformedHeaderError(f"unknown endianness {self.endianness!r}")
        if self.spacing is not None and (
            len(self.spacing) != len(self.extents) or any(s <= 0 for s in self.spacing)
        ):
            raise MalformedHeaderError("spacing needs one positive value per axis")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(("<" if self.endianness == "little" else ">") + _ELEMENT_TYPES[self.element_type])

    @property
    def payload_bytes(self) -> int:
        return math.prod(self.extents) * self.dtype.itemsize

    def to_text(self) -> str:
        lines = [
            f"format: {RAW_FORMAT_TAG}",
            f"extents: {' '.join(str(n) for n in self.extents)}",
            f"type: {self.element_type}",
            f"endianness: {self.endianness}",
        ]
        if self.spacing is not None:
            lines.append(f"spacing: {' '.join(repr(float(s)) for s in self.spacing)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, source: object = "header") -> "VolumeHeader":
        fields: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise MalformedHeaderError(f"{source}:{lineno}: expected 'key: value'")
            key, value = (p.strip() for p in line.split(":", 1))
            fields[key] = value
        unknown = set(fields) - {"format", "extents", "type", "endianness", "spacing"}
        if unknown:
            raise MalformedHeaderError(f"{source}: unknown header keys {sorted(unknown)}")
        if fields.get("format", RAW_FORMAT_TAG) != RAW_FORMAT_TAG:
            raise MalformedHeaderError(f"{source}: unsupported format {fields['format']!r}")
        if "extents" not in fields:
            raise MalformedHeaderError(f"{source}: missing 'extents'")
        try:
            extents = tuple(int(v) for v in fields["extents"].split())
            spacing = (
                tuple(float(v) for v in fields["spacing"].split()) if "spacing" in fields else None
            )
        except ValueError:
            raise MalformedHeaderError(f"{source}: non-numeric extents or spacing") from None
        return cls(
            extents,
            fields.get("type", "u8"),
            fields.get("endianness", "little"),
            spacing,
        )


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".hdr")


def read_volume_header(header_path: str | Path) -> VolumeHeader:
    header_path = Path(header_path)
    return VolumeHeader.parse(header_path.read_text(), header_path)


def read_volume3d(path: str | Path, header_path: str | Path | None = None) -> np.ndarray:
    """Read a raw payload described by its sidecar header; result is indexed ``[x, y, z]``."""
    path = Path(path)
    header = read_volume_header(header_path if header_path is not None else sidecar_path(path))
    payload = path.read_bytes()
    if len(payload) != header.payload_bytes:
        raise SizeMismatchError(
            f"{path}: header extents {header.extents} x {header.dtype.itemsize} bytes "
            f"= {header.payload_bytes}, payload has {len(payload)}"
        )
    values = np.frombuffer(payload, dtype=header.dtype)
    return values.astype(header.dtype.newbyteorder("=")).reshape(header.extents, order="F")


def write_volume(
    field: np.ndarray,
    path: str | Path,
    element_type: str = "f32",
    endianness: str = "little",
    spacing: Sequence[float] | None = None,
) -> tuple[Path, Path]:
    """Write ``field`` (indexed ``[x, y, z]``) as raw payload + sidecar header."""
    arr = np.asarray(field)
    header = VolumeHeader(
        tuple(arr.shape), element_type, endianness, tuple(spacing) if spacing is not None else None
    )
    path = Path(path)
    path.write_bytes(np.asarray(arr, dtype=header.dtype).tobytes(order="F"))
    hdr = sidecar_path(path)
    hdr.write_text(header.to_text())
    return path, hdr


def write_mask(mask: np.ndarray, path: str | Path, spacing: Sequence[float] | None = None) -> list[Path]:
    """Write a binary mask: 2-D as PGM {0, 255}, 3-D as raw u8 {0, 255} + sidecar."""
    arr = np.asarray(mask)
    values = np.unique(arr)
    if not np.all(np.isin(values, (0, 1))):
        raise InvalidInputError("mask must contain only 0 and 1")
    payload = np.where(arr.astype(bool), 255, 0).astype(np.uint8)
    if arr.ndim == 2:
        return [write_pgm(payload, path)]
    if arr.ndim == 3:
        return list(write_volume(payload, path, "u8", "little", spacing))
    raise InvalidInputError(f"masks must be 2-D or 3-D, got {arr.ndim}-D")


# ---------------------------------------------------------------------------
# Contours


def contour2d(mask: np.ndarray) -> list[np.ndarray]:
    """Closed marching-squares polylines at level 0.5, as ``(row, col)`` vertex arrays.

    The mask is zero-padded first so every loop closes; each polyline repeats
    its first vertex at the end.
    """
    from skimage import measure

    arr = np.asarray(mask, dtype=float)
    if arr.ndim != 2:
        raise InvalidInputError("contours need a 2-D mask")
    if not np.any(arr > 0.5):
        return []
    padded = np.pad(arr, 1)
    return [c - 1.0 for c in measure.find_contours(padded, 0.5)]


def _png_data_uri(image: np.ndarray) -> str:
    from PIL import Image

    arr = np.asarray(image, dtype=float)
    lo, hi = float(arr.min()), float(arr.max())
    scaled = np.zeros(arr.shape) if hi == lo else (arr - lo) / (hi - lo)
    buf = io.BytesIO()
    Image.fromarray(np.round(scaled * 255).astype(np.uint8), mode="L").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def contour_svg(
    image: np.ndarray, polylines: Sequence[np.ndarray], stroke: str = "#ff3030", width: float = 0.5
) -> str:
    """SVG 1.1 document: grayscale render of ``image`` with the polylines on top."""
    rows, cols = np.asarray(image).shape
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'version="1.1" width="{cols}" height="{rows}" viewBox="0 0 {cols} {rows}">',
        f'<image x="0" y="0" width="{cols}" height="{rows}" '
        f'style="image-rendering:pixelated" xlink:href="{_png_data_uri(image)}"/>',
        f'<g id="contours" fill="none" stroke="{stroke}" stroke-width="{width}">',
    ]
    for line in polylines:
        # pixel (r, c) covers [c, c+1] x [r, r+1] in SVG user space
        pts = " ".join(f"{c + 0.5:.3f},{r + 0.5:.3f}" for r, c in line)
        out.append(f'<polyline points="{pts}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Isosurfaces


@dataclass
class Mesh:
    vertices: np.ndarray  # (n, 3) float, index space scaled by spacing
    faces: np.ndarray  # (m, 3) int, zero-based

    @property
    def empty(self) -> bool:
        return len(self.faces) == 0

    def edges(self) -> np.ndarray:
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return np.sort(e, axis=1)

    def euler_characteristic(self) -> int:
        if self.empty:
            return 0
        unique_edges = np.unique(self.edges(), axis=0)
        used = np.unique(self.faces)
        return int(len(used) - len(unique_edges) + len(self.faces))

    def is_closed(self) -> bool:
        if self.empty:
            return True
        _, counts = np.unique(self.edges(), axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def signed_volume(self) -> float:
        v = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def to_obj(self) -> str:
        lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in self.vertices]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.faces]
        return "\n".join(lines) + ("\n" if lines else "")


def isosurface3d(
    field: np.ndarray, level: float = 0.5, spacing: Sequence[float] | None = None
) -> Mesh:
    """Marching-cubes surface of ``field`` at ``level`` with outward-facing triangles.

    The field is padded with a below-level shell so surfaces touching the
    volume border still close.
    """
    from skimage import measure

    arr = np.asarray(field, dtype=float)
    if arr.ndim != 3:
        raise InvalidInputError("isosurfaces need a 3-D field")
    spacing = tuple(float(s) for s in spacing) if spacing is not None else (1.0, 1.0, 1.0)
    if arr.size == 0 or not np.any(arr > level):
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    fill = min(float(arr.min()), level) - 1.0
    padded = np.pad(arr, 1, constant_values=fill)
    verts, faces, _, _ = measure.marching_cubes(padded, level=level, allow_degenerate=False)
    verts = (verts - 1.0) * np.asarray(spacing)
    faces = faces.astype(np.int64)
    tri = verts[faces]
    area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    faces = faces[area2 > 0]
    mesh = Mesh(verts, faces)
    if mesh.signed_volume() < 0:
        mesh.faces = mesh.faces[:, ::-1].copy()
    return mesh


def write_obj(mesh: Mesh, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(mesh.to_obj())
    return path


def write_svg(svg: str, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(svg)
    return path

