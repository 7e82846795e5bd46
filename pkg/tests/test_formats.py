import numpy as np
import pytest

from heightlab import formats
from heightlab.errors import FormatError
from heightlab.geometry import RigidTransform, compose, rot_x, rot_z, translate
from heightlab.heightgrid import BevGrid, HeightMap


def test_hgt_round_trip_bytes(tmp_path, rng):
    g = BevGrid(5, 3, 0.5, -0.75, 0.0)
    vals = rng.normal(size=g.shape).astype(np.float32).astype(np.float64)
    vals[1, 2] = np.nan
    formats.save_heightmap(tmp_path / "a.hgt", HeightMap(g, vals))
    back = formats.load_heightmap(tmp_path / "a.hgt")
    assert back.grid == g
    np.testing.assert_array_equal(back.values, vals)
    formats.save_heightmap(tmp_path / "b.hgt", back)
    assert (tmp_path / "a.hgt").read_bytes() == (tmp_path / "b.hgt").read_bytes()


def test_hgt_layout(tmp_path):
    formats.write_hgt(tmp_path / "x.hgt", np.array([[1.0, np.nan]]), 0.5, -1.0, 2.0)
    blob = (tmp_path / "x.hgt").read_bytes()
    assert blob[:8] == b"HGT1\n   "
    assert len(blob) == 8 + 48 + 8
    assert blob[-4:] == bytes.fromhex("0000c07f")


def test_feature_grid_round_trip(tmp_path, rng):
    f = rng.normal(size=(4, 6, 3)).astype(np.float32).astype(np.float64)
    formats.save_feature_grid(tmp_path / "f.hgt", f)
    np.testing.assert_array_equal(formats.load_feature_grid(tmp_path / "f.hgt"), f)


def test_params_round_trip(tmp_path, rng):
    w, b = rng.normal(size=(8, 5)), rng.normal(size=5)
    formats.save_params(tmp_path / "p.prm", w, b)
    w2, b2 = formats.load_params(tmp_path / "p.prm")
    np.testing.assert_array_equal(w, w2)
    np.testing.assert_array_equal(b, b2)
    formats.save_params(tmp_path / "q.prm", w2, b2)
    assert (tmp_path / "p.prm").read_bytes() == (tmp_path / "q.prm").read_bytes()


def test_pose_round_trip(tmp_path):
    poses = [RigidTransform.identity(), compose(translate(1.5, -2.0, 0.25), compose(rot_z(0.3), rot_x(-0.02)))]
    formats.write_poses(tmp_path / "p.txt", poses, "comment")
    back = formats.read_poses(tmp_path / "p.txt")
    for a, b in zip(poses, back):
        np.testing.assert_array_equal(a.matrix(), b.matrix())
    formats.write_poses(tmp_path / "q.txt", back, "comment")
    assert (tmp_path / "p.txt").read_text() == (tmp_path / "q.txt").read_text()


def test_pose_drift_is_repaired(tmp_path):
    M = np.hstack([np.eye(3) * (1 + 3e-7), np.zeros((3, 1))])
    (tmp_path / "d.txt").write_text(" ".join(repr(float(x)) for x in M.ravel()) + "\n")
    (p,) = formats.read_poses(tmp_path / "d.txt")
    np.testing.assert_allclose(p.rotation, np.eye(3), atol=1e-15)


def test_pose_bad_line(tmp_path):
    (tmp_path / "e.txt").write_text("1 2 3\n")
    with pytest.raises(FormatError):
        formats.read_poses(tmp_path / "e.txt")


def test_pgm_round_trip(tmp_path, rng):
    m = (rng.random((7, 5)) > 0.5).astype(np.uint8)
    formats.write_pgm(tmp_path / "m.pgm", m)
    np.testing.assert_array_equal(formats.read_pgm(tmp_path / "m.pgm"), m)
    assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n5 7\n255\n")


@pytest.mark.parametrize("name,magic", [("x.hgt", b"HGT1\n   "), ("x.prm", b"PRM1\n   ")])
def test_corruption_raises(tmp_path, name, magic):
    p = tmp_path / name
    p.write_bytes(b"JUNK\n   " + bytes(64))
    loader = formats.read_hgt if name.endswith("hgt") else formats.load_params
    with pytest.raises(FormatError):
        loader(p)
    p.write_bytes(magic + bytes(10))
    with pytest.raises(FormatError):
        loader(p)


def test_pgm_rejects_grey_levels(tmp_path):
    (tmp_path / "g.pgm").write_bytes(b"P5\n2 1\n255\n\x00\x80")
    with pytest.raises(FormatError):
        formats.read_pgm(tmp_path / "g.pgm")
