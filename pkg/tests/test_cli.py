from __future__ import annotations

import numpy as np
import pytest

from tfseg import imaging
from tfseg.cli import main
from tfseg.phantom import NoiseSpec, TubeSpec, gen_phantom


@pytest.fixture
def tube_pgm(tmp_path):
    image, _ = gen_phantom([TubeSpec.straight((32, 6), (32, 58), 4.0, 1.0)], (64, 64), NoiseSpec(0.02, 4))
    q = np.round(image * 255).astype(np.uint8)
    return imaging.write_pgm(q, tmp_path / "tube.pgm")


@pytest.fixture
def tube_raw(tmp_path):
    image, _ = gen_phantom(
        [TubeSpec.straight((4, 12, 12), (20, 12, 12), 3.0, 1.0)], (24, 24, 24), NoiseSpec(0.02, 5)
    )
    return imaging.write_volume(image.astype(np.float32), tmp_path / "tube.raw", "f32")[0]


def _stats_rows(path):
    rows = [line.split() for line in path.read_text().splitlines() if line and line[0] != "#"]
    return [int(r[1]) for r in rows if r[0].isdigit()]


def test_segment_2d_pipeline(tube_pgm, tmp_path):
    out = tmp_path / "out"
    rc = main(["segment", str(tube_pgm), "--out", str(out), "--emit", "mask,stats,contour"])
    assert rc == 0
    mask = imaging.read_image2d(out / "tube_mask.pgm")
    assert set(np.unique(mask)) <= {0, 255}
    assert mask[32, 32] == 255
    card = _stats_rows(out / "tube_stats.txt")
    assert card[-1] == 0
    assert all(b < a for a, b in zip(card, card[1:]))
    assert "|Omega| = 4096" in (out / "tube_stats.txt").read_text()
    svg = (out / "tube_contour.svg").read_text()
    assert "<polyline" in svg


def test_segment_3d_mesh(tube_raw, tmp_path):
    out = tmp_path / "out"
    rc = main(["segment", str(tube_raw), "--epsilon", "0.06", "--out", str(out), "--emit", "mask", "--emit", "mesh"])
    assert rc == 0
    vol = imaging.read_volume3d(out / "tube_mask.raw")
    assert vol.shape == (24, 24, 24) and vol[12, 12, 12] == 255
    obj = (out / "tube_mesh.obj").read_text()
    assert obj.startswith("v ") and "\nf " in obj


def test_post_smooth_outputs(tube_pgm, tmp_path):
    out = tmp_path / "out"
    assert main(["segment", str(tube_pgm), "--out", str(out), "--post-smooth"]) == 0
    assert (out / "tube_smooth.pgm").exists()


def test_constant_image_exit_code(tmp_path, capsys):
    p = imaging.write_pgm(np.full((16, 16), 90, np.uint8), tmp_path / "flat.pgm")
    rc = main(["segment", str(p), "--out", str(tmp_path / "out")])
    assert rc == 4
    assert "no boundary candidates" in capsys.readouterr().err


def test_unreadable_input(tmp_path, capsys):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    assert main(["segment", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert "[read]" in capsys.readouterr().err


def test_dtcwt_on_volume_is_config_error(tube_raw, tmp_path):
    assert main(["segment", str(tube_raw), "--backend", "dtcwt", "--out", str(tmp_path / "o")]) == 2


def test_iteration_cap_exit_code(tmp_path):
    noise = np.random.default_rng(6).integers(0, 65536, (48, 48)).astype(np.uint16)
    p = imaging.write_pgm(noise, tmp_path / "noise.pgm", maxval=65535)
    assert main(["segment", str(p), "--max-iters", "1", "--out", str(tmp_path / "o")]) == 5


def test_out_from_environment(tube_pgm, tmp_path, monkeypatch):
    monkeypatch.setenv("TFSEG_OUT", str(tmp_path / "env"))
    assert main(["segment", str(tube_pgm)]) == 0
    assert (tmp_path / "env" / "tube_mask.pgm").exists()


def test_determinism(tube_pgm, tmp_path):
    for name in ("a", "b"):
        assert main(["segment", str(tube_pgm), "--out", str(tmp_path / name)]) == 0
    for f in ("tube_mask.pgm", "tube_stats.txt", "tube_stats.kv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_phantom_subcommand(tmp_path):
    out = tmp_path / "ph"
    assert main(["phantom", "--builtin", "helix", "--out", str(out)]) == 0
    vol = imaging.read_volume3d(out / "helix.raw")
    truth = imaging.read_volume3d(out / "helix_truth.raw")
    assert vol.shape == truth.shape == (64, 64, 64)
    assert main(["phantom", "--builtin", "helix", "--out", str(tmp_path / "ph2")]) == 0
    for f in ("helix.raw", "helix_truth.raw"):
        assert (out / f).read_bytes() == (tmp_path / "ph2" / f).read_bytes()


def test_phantom_bad_key(tmp_path, capsys):
    spec = tmp_path / "bad.txt"
    spec.write_text("extents = 8 8\nshade = 2\n")
    assert main(["phantom", str(spec), "--out", str(tmp_path / "o")]) == 6
    err = capsys.readouterr().err
    assert "shade" in err and "line 2" in err
