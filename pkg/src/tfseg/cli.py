"""Command-line front end.

``tfseg segment INPUT`` reads a 2-D image (PGM/PNG) or a raw volume with its
sidecar header, runs the segmentation and writes the requested artifacts.
``tfseg phantom SPEC`` renders a phantom description to image + truth files.

Exit codes: 0 success, 2 invalid configuration, 3 unreadable or malformed
input, 4 no boundary candidates, 5 iteration cap reached, 6 bad phantom spec,
7 output could not be written.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from tfseg import imaging, phantom
from tfseg.errors import (
    ImagingError,
    InvalidArgumentError,
    InvalidInputError,
    IterationCapExceededError,
    NoCandidatesError,
    PhantomSpecError,
    UnsupportedBackendError,
)
from tfseg.segment import SegmentParams, segment, smooth_binary
from tfseg.transform import FrameBackend

log = logging.getLogger("tfseg")

OUT_ENV = "TFSEG_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_NO_CANDIDATES = 4
EXIT_ITERATION_CAP = 5
EXIT_PHANTOM_SPEC = 6
EXIT_OUTPUT = 7

EMIT_CHOICES = ("mask", "contour", "mesh", "stats")
_IMAGE_SUFFIXES = {".pgm", ".png"}


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception, code: int):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.code = code


@dataclass
class RunConfig:
    inputs: list[Path]
    out: Path
    dimension: int | None = None
    header: Path | None = None
    epsilon: float | None = None
    lam: float | None = None
    backend: str | None = None
    levels: int | None = None
    max_iters: int | None = None
    emit: set[str] = field(default_factory=lambda: {"mask", "stats"})
    post_smooth: bool = False

    def params_for(self, ndim: int) -> SegmentParams:
        backend = None
        if self.backend is not None or self.levels is not None:
            kind = self.backend or ("dtcwt" if ndim == 2 else "bspline")
            if kind == "dtcwt":
                backend = FrameBackend.dtcwt(self.levels or 4)
                if ndim != 2:
                    raise UnsupportedBackendError(f"dtcwt is 2-D only; input is {ndim}-D")
            else:
                if self.levels not in (None, 1):
                    raise InvalidArgumentError("the bspline backend is single-level")
                backend = FrameBackend.bspline(ndim)
        return SegmentParams.for_dimension(
            ndim,
            epsilon=self.epsilon,
            lam=self.lam,
            backend=backend,
            max_iters=self.max_iters,
        )


def _stage(stage: str, code: int, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ImagingError, OSError, InvalidInputError) as exc:
        raise StageError(stage, exc, code) from exc


def load_input(path: Path, dimension: int | None, header: Path | None) -> tuple[np.ndarray, tuple[float, ...] | None]:
    """Read an input file, inferring 2-D vs 3-D from its format."""
    is_image = path.suffix.lower() in _IMAGE_SUFFIXES and header is None
    if is_image:
        field_ = imaging.read_image2d(path)
        spacing = None
    else:
        hdr_path = header if header is not None else imaging.sidecar_path(path)
        hdr = imaging.read_volume_header(hdr_path)
        field_ = imaging.read_volume3d(path, hdr_path)
        spacing = hdr.spacing
    if dimension is not None and field_.ndim != dimension:
        raise InvalidInputError(f"{path} is {field_.ndim}-D but --dim {dimension} was given")
    return field_, spacing


def _write_float_field(values: np.ndarray, path: Path, spacing) -> list[Path]:
    if values.ndim == 2:
        q = np.round(np.clip(values, 0.0, 1.0) * 65535).astype(np.uint16)
        return [imaging.write_pgm(q, path.with_suffix(".pgm"), maxval=65535)]
    return list(imaging.write_volume(values.astype(np.float32), path.with_suffix(".raw"), "f32", spacing=spacing))


def run_one(path: Path, config: RunConfig) -> list[Path]:
    raw, spacing = _stage("read", EXIT_INPUT, load_input, path, config.dimension, config.header)
    ndim = raw.ndim
    try:
        params = config.params_for(ndim)
    except (InvalidArgumentError, UnsupportedBackendError) as exc:
        raise StageError("configure", exc, EXIT_CONFIG) from exc
    log.info(
        "%s: %s field, epsilon=%g lambda=%g backend=%s levels=%d",
        path.name, "x".join(map(str, raw.shape)), params.epsilon, params.lam,
        params.backend.kind.value, params.backend.levels,
    )
    try:
        mask, stats = segment(raw, params)
    except NoCandidatesError as exc:
        raise StageError("segment", exc, EXIT_NO_CANDIDATES) from exc
    except IterationCapExceededError as exc:
        raise StageError("segment", exc, EXIT_ITERATION_CAP) from exc
    except (InvalidInputError, InvalidArgumentError, UnsupportedBackendError) as exc:
        raise StageError("segment", exc, EXIT_INPUT) from exc
    log.info("%s: converged in %d iterations, |Lambda| = %s", path.name, stats.iterations, stats.cardinalities)

    out = config.out
    stem = path.stem
    written: list[Path] = []

    def emit(fn, *args):
        try:
            written.extend(fn(*args))
        except OSError as exc:
            raise StageError("write", exc, EXIT_OUTPUT) from exc

    binary = mask.astype(np.uint8)
    if "mask" in config.emit:
        suffix = ".pgm" if ndim == 2 else ".raw"
        emit(imaging.write_mask, binary, out / f"{stem}_mask{suffix}", spacing)
    if "stats" in config.emit:
        emit(
            lambda: [
                _write_text(out / f"{stem}_stats.txt", stats.to_table()),
                _write_text(out / f"{stem}_stats.kv", stats.to_keyvalue()),
            ]
        )
    smoothed = None
    if config.post_smooth:
        smoothed = smooth_binary(binary, params.backend, params.lam)
        emit(_write_float_field, smoothed, out / f"{stem}_smooth", spacing)
    surface_field = smoothed if smoothed is not None else binary
    if "contour" in config.emit:
        if ndim == 2:
            lines = imaging.contour2d(binary)
            emit(lambda: [imaging.write_svg(imaging.contour_svg(raw, lines), out / f"{stem}_contour.svg")])
        else:
            log.warning("contour export is 2-D only; skipped for %s", path.name)
    if "mesh" in config.emit:
        if ndim == 3:
            mesh = imaging.isosurface3d(surface_field, 0.5, spacing)
            emit(lambda: [imaging.write_obj(mesh, out / f"{stem}_mesh.obj")])
        else:
            log.warning("mesh export is 3-D only; skipped for %s", path.name)
    return written


def _write_text(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def run(config: RunConfig) -> int:
    try:
        config.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"tfseg: error [write]: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    status = EXIT_OK
    for path in config.inputs:
        try:
            for p in run_one(path, config):
                log.info("wrote %s", p)
        except StageError as exc:
            print(f"tfseg: error {exc} ({path})", file=sys.stderr)
            status = status or exc.code
    return status


def run_phantom(spec_path: Path | None, builtin: str | None, out: Path, name: str | None) -> int:
    try:
        if builtin is not None:
            spec = phantom.bundled(builtin)
            name = name or builtin.replace("-", "_")
        else:
            spec = phantom.load_phantom_spec(spec_path)
            name = name or spec_path.stem
    except PhantomSpecError as exc:
        print(f"tfseg: error [phantom] {spec_path}: {exc}", file=sys.stderr)
        return EXIT_PHANTOM_SPEC
    except (OSError, InvalidArgumentError) as exc:
        print(f"tfseg: error [phantom] {exc}", file=sys.stderr)
        return EXIT_INPUT
    image, truth = phantom.render(spec)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = _write_float_field(image, out / name, None)
        suffix = ".pgm" if image.ndim == 2 else ".raw"
        written += imaging.write_mask(truth.astype(np.uint8), out / f"{name}_truth{suffix}")
    except OSError as exc:
        print(f"tfseg: error [write]: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    for p in written:
        log.info("wrote %s", p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment images or volumes")
    seg.add_argument("inputs", nargs="+", type=Path, help="PGM/PNG image or raw volume (sidecar .hdr next to it)")
    seg.add_argument("--header", type=Path, help="sidecar header path for a single raw input")
    seg.add_argument("--dim", type=int, choices=(2, 3), help="require this dimensionality")
    seg.add_argument("--epsilon", type=float, help="gradient threshold (default 0.003 2-D, 0.06 3-D)")
    seg.add_argument("--lambda", dest="lam", type=float, help="soft threshold (default 0.1)")
    seg.add_argument("--backend", choices=("bspline", "dtcwt"), help="tight frame (default dtcwt 2-D, bspline 3-D)")
    seg.add_argument("--levels", type=int, help="dtcwt decomposition levels (default 4)")
    seg.add_argument("--max-iters", type=int, help="iteration cap (default: theoretical bound)")
    seg.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./tfseg-out)")
    seg.add_argument(
        "--emit",
        action="append",
        help="artifacts to write, comma separated or repeated: mask, contour, mesh, stats (default mask,stats)",
    )
    seg.add_argument("--post-smooth", action="store_true", help="also write a once-smoothed copy of the mask")

    ph = sub.add_parser("phantom", help="render a phantom description")
    src = ph.add_mutually_exclusive_group(required=True)
    src.add_argument("spec", nargs="?", type=Path, help="phantom description file")
    src.add_argument("--builtin", choices=sorted(phantom.BUNDLED), help="use a bundled phantom")
    ph.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./tfseg-out)")
    ph.add_argument("--name", help="output file stem")
    return parser


def _parse_emit(values: Sequence[str] | None, parser: argparse.ArgumentParser) -> set[str]:
    if not values:
        return {"mask", "stats"}
    emit = {v.strip() for item in values for v in item.split(",") if v.strip()}
    bad = emit - set(EMIT_CHOICES)
    if bad:
        parser.error(f"unknown --emit value(s): {', '.join(sorted(bad))}")
    return emit


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="tfseg: %(message)s",
    )
    out = args.out or Path(os.environ.get(OUT_ENV, "tfseg-out"))
    if args.command == "phantom":
        return run_phantom(args.spec, args.builtin, out, args.name)
    if args.header is not None and len(args.inputs) != 1:
        parser.error("--header applies to a single input")
    config = RunConfig(
        inputs=list(args.inputs),
        out=out,
        dimension=args.dim,
        header=args.header,
        epsilon=args.epsilon,
        lam=args.lam,
        backend=args.backend,
        levels=args.levels,
        max_iters=args.max_iters,
        emit=_parse_emit(args.emit, parser),
        post_smooth=args.post_smooth,
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
