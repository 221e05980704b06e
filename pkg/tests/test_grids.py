"""Grid conventions and dataset round trips."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tideop import grids as gd


def toy_trajectory(rng, n_times=5, n_x=8, seed=7):
    times = np.linspace(0.0, 1.0, n_times)
    u = rng.normal(size=(n_times, n_x))
    ut = rng.normal(size=(n_times, n_x))
    return gd.Trajectory(times, u, ut, seed)


def toy_container(rng, n_traj=3, **kw):
    trajs = [toy_trajectory(rng, seed=i) for i in range(n_traj)]
    args = dict(equation="heat1d", grid=gd.Grid1D(8), dt=0.25, seed=11, split="train")
    args.update(kw)
    return gd.DatasetContainer(trajectories=trajs, **args)


class TestGrids:
    def test_nonperiodic_includes_both_endpoints(self):
        g = gd.Grid1D(5, 0.0, 1.0, periodic=False)
        assert np.allclose(g.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert g.spacing == 0.25

    def test_periodic_excludes_duplicate_endpoint(self):
        g = gd.Grid1D(4, 0.0, 1.0, periodic=True)
        assert np.allclose(g.nodes, [0.0, 0.25, 0.5, 0.75])
        assert g.spacing == 0.25

    def test_grid2d_nodes_row_major(self):
        g = gd.Grid2D(2, 3, periodic_x=False, periodic_y=False)
        nodes = g.nodes
        assert nodes.shape == (6, 2)
        # x slowest: first three rows share x=0
        assert np.allclose(nodes[:3, 0], 0.0)
        assert np.allclose(nodes[:3, 1], [0.0, 0.5, 1.0])

    def test_degenerate_grids_rejected(self):
        with pytest.raises(ValueError):
            gd.Grid1D(1)
        with pytest.raises(ValueError):
            gd.Grid1D(4, 1.0, 0.0)


class TestTrajectory:
    def test_must_start_at_zero(self):
        with pytest.raises(ValueError):
            gd.Trajectory([0.5, 1.0], np.zeros((2, 3)), np.zeros((2, 3)), 0)

    def test_times_strictly_increasing(self):
        with pytest.raises(ValueError):
            gd.Trajectory([0.0, 0.5, 0.5], np.zeros((3, 2)), np.zeros((3, 2)), 0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            gd.Trajectory([0.0, 1.0], np.zeros((2, 3)), np.zeros((2, 4)), 0)

    def test_at_time_lookup(self):
        rng = np.random.default_rng(0)
        tr = toy_trajectory(rng)
        snap = tr.at_time(0.5)
        assert snap.t == 0.5
        assert np.array_equal(snap.u, tr.u[2])
        with pytest.raises(KeyError):
            tr.at_time(0.33)


class TestContainer:
    def test_unknown_equation_lists_allowed_ids(self):
        rng = np.random.default_rng(0)
        with pytest.raises(gd.DatasetFormatError) as err:
            toy_container(rng, equation="wave1d")
        for eq in gd.EQUATIONS:
            assert eq in str(err.value)

    def test_unknown_split_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(gd.DatasetFormatError):
            toy_container(rng, split="holdout")

    def test_mixed_lengths_rejected(self):
        rng = np.random.default_rng(0)
        trajs = [toy_trajectory(rng, n_times=5), toy_trajectory(rng, n_times=6)]
        with pytest.raises(ValueError):
            gd.DatasetContainer("heat1d", gd.Grid1D(8), 0.25, 1, "train", trajs)


class TestRoundTrip:
    def test_bit_exact_roundtrip(self, tmp_path):
        rng = np.random.default_rng(42)
        c = toy_container(rng)
        gd.write_dataset(c, tmp_path / "d")
        back = gd.read_dataset(tmp_path / "d")
        assert back.equation == c.equation
        assert back.dt == c.dt and back.seed == c.seed and back.split == c.split
        assert back.branch_scale == c.branch_scale
        for a, b in zip(c.trajectories, back.trajectories):
            assert np.array_equal(a.u, b.u)
            assert np.array_equal(a.u_t, b.u_t)
            assert np.array_equal(a.times, b.times)
            assert a.ic_seed == b.ic_seed

    @given(seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=10, deadline=None)
    def test_roundtrip_property(self, tmp_path_factory, seed):
        rng = np.random.default_rng(seed)
        c = toy_container(rng, n_traj=int(rng.integers(1, 4)))
        d = tmp_path_factory.mktemp("ds")
        gd.write_dataset(c, d)
        back = gd.read_dataset(d)
        assert np.array_equal(c.stack("u"), back.stack("u"))
        assert np.array_equal(c.stack("u_t"), back.stack("u_t"))

    def test_manifest_key_set_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        gd.write_dataset(toy_container(rng), tmp_path / "d")
        with open(tmp_path / "d" / "manifest.json") as f:
            m = json.load(f)
        assert set(m) == {
            "equation",
            "grid",
            "dt",
            "n_trajectories",
            "n_times",
            "branch_scale",
            "seed",
            "split",
            "arrays",
        }
        assert set(m["grid"]) == {"nx", "ny", "periodic_x", "periodic_y"}
        for entry in m["arrays"]:
            assert set(entry) == {"name", "dtype", "shape"}
            assert entry["dtype"] == "f64le"

    def test_empty_container_written_without_array_files(self, tmp_path):
        c = gd.DatasetContainer("heat1d", gd.Grid1D(8), 0.25, 1, "train", [])
        gd.write_dataset(c, tmp_path / "d")
        files = {p.name for p in (tmp_path / "d").iterdir()}
        assert files == {"manifest.json"}
        back = gd.read_dataset(tmp_path / "d")
        assert back.n_trajectories == 0

    def test_2d_fields_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        times = np.linspace(0, 1, 3)
        trajs = [
            gd.Trajectory(times, rng.normal(size=(3, 4, 4)), rng.normal(size=(3, 4, 4)), i)
            for i in range(2)
        ]
        c = gd.DatasetContainer("allencahn2d", gd.Grid2D(4, 4), 0.5, 9, "test", trajs)
        gd.write_dataset(c, tmp_path / "d")
        back = gd.read_dataset(tmp_path / "d")
        assert back.trajectories[1].u.shape == (3, 4, 4)
        assert np.array_equal(back.trajectories[1].u, trajs[1].u)
        assert isinstance(back.grid, gd.Grid2D)

    def test_truncated_array_file_names_file(self, tmp_path):
        rng = np.random.default_rng(0)
        gd.write_dataset(toy_container(rng), tmp_path / "d")
        target = tmp_path / "d" / "ut.f64"
        target.write_bytes(target.read_bytes()[:-16])
        with pytest.raises(gd.DatasetFormatError) as err:
            gd.read_dataset(tmp_path / "d")
        assert "ut.f64" in str(err.value)

    def test_corrupt_manifest_names_file(self, tmp_path):
        rng = np.random.default_rng(0)
        gd.write_dataset(toy_container(rng), tmp_path / "d")
        (tmp_path / "d" / "manifest.json").write_text("{not json")
        with pytest.raises(gd.DatasetFormatError) as err:
            gd.read_dataset(tmp_path / "d")
        assert "manifest.json" in str(err.value)

    def test_unknown_equation_in_manifest_lists_ids(self, tmp_path):
        rng = np.random.default_rng(0)
        gd.write_dataset(toy_container(rng), tmp_path / "d")
        with open(tmp_path / "d" / "manifest.json") as f:
            m = json.load(f)
        m["equation"] = "kdv1d"
        (tmp_path / "d" / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(gd.DatasetFormatError) as err:
            gd.read_dataset(tmp_path / "d")
        assert "heat1d" in str(err.value) and "burgers1d" in str(err.value)


class TestDownsample:
    def test_endpoints_exact_and_linear_inbetween(self):
        times = np.array([0.0, 1.0, 2.0])
        u = np.array([[0.0, 0.0], [2.0, 4.0], [4.0, 8.0]])
        tr = gd.Trajectory(times, u, 0.5 * u, 3)
        down = gd.downsample_time(tr, 5)
        assert np.array_equal(down.times, [0.0, 0.5, 1.0, 1.5, 2.0])
        assert np.array_equal(down.u[0], u[0])
        assert np.array_equal(down.u[-1], u[-1])
        assert np.allclose(down.u[1], [1.0, 2.0])
        assert np.allclose(down.u_t[3], 0.5 * np.array([3.0, 6.0]))

    def test_nonuniform_source_times(self):
        times = np.array([0.0, 0.1, 1.0])
        u = times[:, None] * np.ones((1, 3))
        tr = gd.Trajectory(times, u, np.zeros_like(u), 0)
        down = gd.downsample_time(tr, 3)
        # u(t) = t is reproduced exactly by linear interpolation
        assert np.allclose(down.u[1], 0.5)
