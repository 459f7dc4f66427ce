import struct

import numpy as np
import pytest

from cloudsphere.config import RunConfig, load_config, parse_config
from cloudsphere.errors import EmptyInputError, FormatError, InvalidArgumentError
from cloudsphere.fitter import CloudSphereRep
from cloudsphere.geometry import generate_sphere_template
from cloudsphere.plyio import read_cloud, read_colors, write_cloud
from cloudsphere.repfile import load_rep, load_sidecar, save_rep, save_sidecar


class TestRead:
    def test_xyz(self, tmp_path):
        p = tmp_path / "a.xyz"
        p.write_text("0 0 0\n1 0 0\n")
        np.testing.assert_array_equal(read_cloud(p), [[0, 0, 0], [1, 0, 0]])

    def test_ascii_with_normals_and_faces(self, tmp_path):
        p = tmp_path / "a.ply"
        p.write_text(
            "ply\nformat ascii 1.0\ncomment made by hand\n"
            "element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
            "property float nx\nproperty float ny\nproperty float nz\n"
            "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
            "0 0 0 0 0 1\n1 0 0 0 0 1\n0 1 0 0 0 1\n3 0 1 2\n")
        np.testing.assert_array_equal(read_cloud(p), [[0, 0, 0], [1, 0, 0], [0, 1, 0]])

    def test_binary_after_list_element(self, tmp_path):
        p = tmp_path / "b.ply"
        head = ("ply\nformat binary_little_endian 1.0\n"
                "element face 2\nproperty list uchar int vertex_indices\n"
                "element vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n")
        body = struct.pack("<B3i", 3, 0, 1, 2) + struct.pack("<B4i", 4, 0, 1, 2, 3)
        body += struct.pack("<6f", 1, 2, 3, 4, 5, 6)
        p.write_bytes(head.encode() + body)
        np.testing.assert_array_equal(read_cloud(p), [[1, 2, 3], [4, 5, 6]])

    def test_empty(self, tmp_path):
        p = tmp_path / "e.ply"
        write_cloud(np.zeros((0, 3)), p)
        with pytest.raises(EmptyInputError):
            read_cloud(p)

    def test_bad_xyz_line(self, tmp_path):
        p = tmp_path / "bad.xyz"
        p.write_text("0 0 0\n1 zero 0\n")
        with pytest.raises(FormatError) as info:
            read_cloud(p)
        assert info.value.line == 2

    def test_truncated_binary(self, tmp_path):
        p = tmp_path / "t.ply"
        write_cloud(np.ones((10, 3)), p)
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(FormatError) as info:
            read_cloud(p)
        assert info.value.offset is not None

    def test_missing_coordinates(self, tmp_path):
        p = tmp_path / "m.ply"
        p.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n")
        with pytest.raises(FormatError):
            read_cloud(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_cloud(tmp_path / "nope.ply")

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.ply"
        p.write_text("not a ply\n")
        with pytest.raises(FormatError):
            read_cloud(p)


class TestWrite:
    @pytest.mark.parametrize("fmt,suffix", [("ply-binary-le", ".ply"), ("ply-ascii", ".ply"), ("xyz", ".xyz")])
    def test_round_trip(self, tmp_path, rng, fmt, suffix):
        pts = rng.normal(size=(4096, 3))
        p = tmp_path / ("c" + suffix)
        write_cloud(pts, p, fmt)
        back = read_cloud(p)
        assert np.abs(back - pts).max() <= 1e-12

    def test_single_point(self, tmp_path):
        p = tmp_path / "one.ply"
        write_cloud([[1.5, -2, 3]], p)
        np.testing.assert_array_equal(read_cloud(p), [[1.5, -2, 3]])

    @pytest.mark.parametrize("fmt", ["ply-binary-le", "ply-ascii"])
    def test_colors(self, tmp_path, rng, fmt):
        pts = rng.normal(size=(50, 3))
        colors = rng.integers(0, 256, size=(50, 3)).astype(np.uint8)
        p = tmp_path / "col.ply"
        write_cloud(pts, p, fmt, colors)
        got = read_colors(p)
        assert len(got) == len(read_cloud(p)) == 50
        assert np.array_equal(got, colors)

    def test_deterministic_bytes(self, tmp_path, rng):
        pts = rng.normal(size=(20, 3))
        write_cloud(pts, tmp_path / "a.ply")
        write_cloud(pts, tmp_path / "b.ply")
        assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError) as info:
            write_cloud(np.zeros((1, 3)), tmp_path / "missing_dir" / "x.ply")
        assert "missing_dir" in str(info.value)


class TestRepFile:
    def test_round_trip(self, tmp_path, rng):
        tpl = generate_sphere_template(64, radius=1.0)
        rep = CloudSphereRep(tpl, rng.normal(size=(3, 64, 3)))
        save_rep(rep, tmp_path / "r.csr")
        back = load_rep(tmp_path / "r.csr")
        assert back.offsets.tobytes() == rep.offsets.tobytes()
        assert back.template.points.tobytes() == tpl.points.tobytes()

    def test_size(self, tmp_path):
        rep = CloudSphereRep.zeros(generate_sphere_template(10), 2)
        save_rep(rep, tmp_path / "r.csr")
        assert (tmp_path / "r.csr").stat().st_size == 28 + 8 * 3 * 10 * 3

    def test_corrupt(self, tmp_path):
        p = tmp_path / "r.csr"
        save_rep(CloudSphereRep.zeros(generate_sphere_template(10), 1), p)
        raw = p.read_bytes()
        p.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(FormatError):
            load_rep(p)
        p.write_bytes(raw[:-8])
        with pytest.raises(FormatError):
            load_rep(p)

    def test_sidecar(self, tmp_path):
        p = tmp_path / "r.csr"
        assert load_sidecar(p) is None
        save_sidecar(p, final_loss=0.5, config={"a": 1})
        assert load_sidecar(p) == {"config": {"a": 1}, "final_loss": 0.5}


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == RunConfig()
        assert cfg.points == 4096 and cfg.stages == (1024, 256, 64, 16)
        weights = cfg.fit_config().weights()
        assert weights.alpha == (0.5, 0.2, 0.2, 0.2, 0.2)
        assert weights.beta == (0.0, 0.0, 0.0, 1.0, 10.0)

    def test_values(self):
        cfg = parse_config("points = 512\nstages = 64, 16  # two levels\nlr = 0.05\nmetric_emd = off\n")
        assert cfg.points == 512 and cfg.stages == (64, 16) and cfg.lr == 0.05 and not cfg.metric_emd

    def test_empty_stages(self):
        assert parse_config("stages =\n").stages == ()

    def test_round_trip(self):
        cfg = RunConfig(points=256, stages=(64,), alpha=(0.3, 0.7), beta=(0.0, 2.0), lr=0.0123456789)
        assert parse_config(cfg.dump()) == cfg

    @pytest.mark.parametrize("text", ["bogus = 1\n", "points\n", "points = many\n", "metric_cd = maybe\n"])
    def test_errors(self, text):
        with pytest.raises(InvalidArgumentError):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            load_config(tmp_path / "none.txt")
