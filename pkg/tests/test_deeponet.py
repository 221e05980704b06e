"""Operator network: config validation, head splitting, conv stack, checkpoints."""

import numpy as np
import pytest

from tideop import autodiff as ad
from tideop import deeponet as dn
from tideop.grids import Grid1D, Grid2D


def dense_config(**kw):
    args = dict(
        branch_type="dense",
        branch_widths=(16, 16),
        trunk_widths=(16,),
        p=4,
        sensor_shape=(12,),
        dual_output=True,
        split_trunk=True,
    )
    args.update(kw)
    return dn.NetConfig(**args)


def conv_config(**kw):
    args = dict(
        branch_type="conv2d",
        branch_widths=(8,),
        trunk_widths=(8,),
        p=4,
        sensor_shape=(16, 16),
        dual_output=True,
        split_trunk=True,
    )
    args.update(kw)
    return dn.NetConfig(**args)


class TestConfig:
    def test_dual_output_requires_a_split(self):
        with pytest.raises(ValueError):
            dense_config(split_trunk=False)

    def test_split_without_dual_rejected(self):
        with pytest.raises(ValueError):
            dense_config(dual_output=False, split_trunk=True)

    def test_special_form_requires_dual(self):
        with pytest.raises(ValueError):
            dense_config(dual_output=False, split_trunk=False, special_form=True)

    def test_conv_requires_16x16(self):
        with pytest.raises(ValueError):
            conv_config(sensor_shape=(8, 8))

    def test_special_form_drops_time_coordinate(self):
        assert dense_config().trunk_in_dim == 2
        assert dense_config(special_form=True).trunk_in_dim == 1

    def test_split_doubles_feature_width(self):
        c = dense_config(split_branch=True, split_trunk=False)
        assert c.branch_out == 8 and c.trunk_out == 4
        c = dense_config(split_branch=True, split_trunk=True)
        assert c.branch_out == 8 and c.trunk_out == 8

    def test_dict_roundtrip(self):
        c = dense_config(special_form=True, branch_scale=100.0)
        assert dn.NetConfig.from_dict(c.to_dict()) == c


class TestInit:
    def test_deterministic_per_seed(self):
        c = dense_config()
        a = dn.init_params(c, seed=3)
        b = dn.init_params(c, seed=3)
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, dn.init_params(c, seed=4).data)

    def test_biases_zero_weights_glorot_bounded(self):
        c = dense_config()
        pv = dn.init_params(c, seed=0)
        for name, shape in zip(pv.layout.names, pv.layout.shapes):
            w = pv.view(name)
            if name.split(".")[-1].startswith("w"):
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                assert np.max(np.abs(w)) <= limit
                assert np.any(w != 0.0)
            else:
                assert np.all(w == 0.0)

    def test_head_biases_present(self):
        dual = dn.init_params(dense_config(), 0)
        assert "head.bias_u" in dual.layout.names and "head.bias_ut" in dual.layout.names
        single = dn.init_params(dense_config(dual_output=False, split_trunk=False), 0)
        assert "head.bias_ut" not in single.layout.names


class TestCombine:
    def make(self, **kw):
        c = dense_config(**kw)
        rng = np.random.default_rng(0)
        b = rng.normal(size=(3, c.branch_out))
        tau = rng.normal(size=(5, c.trunk_out))
        views = {"head.bias_u": np.array(0.25), "head.bias_ut": np.array(-0.5)}
        return c, b, tau, views

    def test_split_trunk_halves(self):
        c, b, tau, views = self.make(split_trunk=True)
        u, ut = dn.combine(views, c, b, tau)
        assert np.allclose(u, b @ tau[:, :4].T + 0.25)
        assert np.allclose(ut, b @ tau[:, 4:].T - 0.5)

    def test_split_branch_halves(self):
        c, b, tau, views = self.make(split_branch=True, split_trunk=False)
        u, ut = dn.combine(views, c, b, tau)
        assert np.allclose(u, b[:, :4] @ tau.T + 0.25)
        assert np.allclose(ut, b[:, 4:] @ tau.T - 0.5)

    def test_split_both_pairwise_matched(self):
        c, b, tau, views = self.make(split_branch=True, split_trunk=True)
        u, ut = dn.combine(views, c, b, tau)
        assert np.allclose(u, b[:, :4] @ tau[:, :4].T + 0.25)
        assert np.allclose(ut, b[:, 4:] @ tau[:, 4:].T - 0.5)

    def test_single_output(self):
        c, b, tau, views = self.make(dual_output=False, split_trunk=False)
        u, ut = dn.combine(views, c, b, tau)
        assert ut is None
        assert np.allclose(u, b @ tau.T + 0.25)

    def test_bias_skipped_for_derivative_components(self):
        c, b, tau, views = self.make()
        u, _ = dn.combine(views, c, b, tau, with_bias=False)
        assert np.allclose(u, b @ tau[:, :4].T)


class TestForward:
    def test_shapes_and_numpy_fast_path(self):
        c = dense_config()
        pv = dn.init_params(c, 1)
        u = np.random.default_rng(0).normal(size=(7, 12))
        coords = np.random.default_rng(1).normal(size=(9, 2))
        u_hat, ut_hat = dn.forward(pv.views(), c, u, coords)
        assert isinstance(u_hat, np.ndarray) and u_hat.shape == (7, 9)
        assert ut_hat.shape == (7, 9)

    def test_branch_scale_equivalence(self):
        base = dense_config()
        scaled = dense_config(branch_scale=50.0)
        pv = dn.init_params(base, 1)
        u = np.random.default_rng(0).normal(size=(4, 12))
        coords = np.zeros((3, 2))
        a, _ = dn.forward(pv.views(), base, u, coords)
        b, _ = dn.forward(pv.views(), scaled, 50.0 * u, coords)
        assert np.allclose(a, b, atol=1e-12)

    def test_taped_matches_plain(self):
        c = dense_config()
        pv = dn.init_params(c, 2)
        u = np.random.default_rng(3).normal(size=(4, 12))
        coords = np.random.default_rng(4).normal(size=(6, 2))
        plain, _ = dn.forward(pv.views(), c, u, coords)
        taped, _ = dn.forward(pv.as_leaves(), c, u, coords)
        assert np.array_equal(ad.value_of(taped), plain)

    def test_trunk_accepts_jets(self):
        c = dense_config()
        pv = dn.init_params(c, 2)
        j = ad.jet_seed(np.zeros((5, 2)), {"x": 1}, {"x": 1})
        out = dn.trunk_net(pv.views(), c, j)
        assert isinstance(out, ad.Jet)
        assert ad.value_of(out.first["x"]).shape == (5, c.trunk_out)


class TestConvBranch:
    def test_space_to_depth_layout(self):
        x = np.arange(16.0).reshape(1, 4, 4, 1)
        out = dn._space_to_depth(x)
        assert out.shape == (1, 2, 2, 4)
        # top-left block [[0,1],[4,5]] flattens row-major
        assert np.array_equal(out[0, 0, 0], [0.0, 1.0, 4.0, 5.0])
        assert np.array_equal(out[0, 1, 1], [10.0, 11.0, 14.0, 15.0])

    def test_avg_pool(self):
        x = np.arange(16.0).reshape(1, 4, 4, 1)
        out = dn._avg_pool(x)
        assert out.shape == (1, 2, 2, 1)
        assert out[0, 0, 0, 0] == pytest.approx((0 + 1 + 4 + 5) / 4)

    def test_conv_stack_output_shapes(self):
        c = conv_config()
        pv = dn.init_params(c, 0)
        u = np.random.default_rng(0).normal(size=(3, 16, 16))
        feats = dn.branch_net(pv.views(), c, u)
        assert feats.shape == (3, c.branch_out)

    def test_constant_field_gives_uniform_features(self):
        # every 2x2 patch of a constant field is identical, so the conv
        # trunk collapses to a single repeated feature vector
        c = conv_config()
        pv = dn.init_params(c, 5)
        a = dn.branch_net(pv.views(), c, np.full((1, 16, 16), 0.7))
        b = dn.branch_net(pv.views(), c, np.full((1, 16, 16), 0.7))
        assert np.array_equal(a, b)
        u_hat, ut_hat = dn.forward(pv.views(), c, np.full((2, 16, 16), 0.7), np.zeros((4, 3)))
        assert u_hat.shape == (2, 4)

    def test_conv_gradients_match_fd(self):
        c = conv_config()
        pv = dn.init_params(c, 7)
        u = np.random.default_rng(1).normal(size=(2, 16, 16))
        coords = np.random.default_rng(2).normal(size=(3, 3))
        target = np.random.default_rng(3).normal(size=(2, 3))

        def loss_eval(leaves):
            u_hat, _ = dn.forward(leaves, c, u, coords)
            return ad.mse(u_hat, target)

        def loss_np(vec):
            p = ad.ParamVector(vec, pv.layout)
            u_hat, _ = dn.forward(p.views(), c, u, coords)
            return float(np.mean((u_hat - target) ** 2))

        loss, grad = ad.grad_params(loss_eval, pv)
        rng = np.random.default_rng(4)
        for _ in range(5):
            d = rng.normal(size=pv.data.size)
            d /= np.linalg.norm(d)
            h = 1e-5
            fd = (loss_np(pv.data + h * d) - loss_np(pv.data - h * d)) / (2 * h)
            assert abs(grad @ d - fd) < 1e-5 * max(1.0, abs(fd))


class TestTangentOperator:
    def test_single_output_rejected(self):
        c = dense_config(dual_output=False, split_trunk=False)
        pv = dn.init_params(c, 0)
        with pytest.raises(ad.CapabilityError):
            dn.tangent_operator(pv, c, Grid1D(12), np.zeros((2, 12)))
        with pytest.raises(ad.CapabilityError):
            dn.make_tangent_fn(pv, c, Grid1D(12))

    def test_matches_forward_ut_channel(self):
        c = dense_config()
        pv = dn.init_params(c, 3)
        grid = Grid1D(12)
        states = np.random.default_rng(0).normal(size=(4, 12))
        out = dn.tangent_operator(pv, c, grid, states)
        _, ut = dn.forward(pv.views(), c, states, dn.sensor_coords(grid, c))
        assert np.array_equal(out, ut)

    def test_single_state_shape_preserved(self):
        c = dense_config()
        pv = dn.init_params(c, 3)
        out = dn.tangent_operator(pv, c, Grid1D(12), np.zeros(12))
        assert out.shape == (12,)

    def test_fast_closures_match(self):
        c = dense_config(split_branch=True)
        pv = dn.init_params(c, 8)
        grid = Grid1D(12)
        states = np.random.default_rng(1).normal(size=(5, 12))
        fn = dn.make_tangent_fn(pv, c, grid)
        assert np.allclose(fn(states), dn.tangent_operator(pv, c, grid, states), atol=1e-12)
        recon = dn.make_reconstruction_fn(pv, c, grid)
        u_hat, _ = dn.forward(pv.views(), c, states, dn.sensor_coords(grid, c))
        assert np.allclose(recon(states), u_hat, atol=1e-12)

    def test_conv_tangent_keeps_grid_shape(self):
        c = conv_config()
        pv = dn.init_params(c, 1)
        out = dn.tangent_operator(pv, c, Grid2D(16, 16), np.zeros((3, 16, 16)))
        assert out.shape == (3, 16, 16)

    def test_phantom_time_column(self):
        coords = dn.sensor_coords(Grid1D(5), dense_config())
        assert coords.shape == (5, 2)
        assert np.all(coords[:, 0] == 0.0)
        coords = dn.sensor_coords(Grid1D(5), dense_config(special_form=True))
        assert coords.shape == (5, 1)


class TestOutputScale:
    def test_forward_scales_both_heads(self):
        base = dense_config()
        scaled = dense_config(output_scale=7.0)
        pv = dn.init_params(base, 11)
        states = np.random.default_rng(2).normal(size=(3, 12))
        coords = dn.sensor_coords(Grid1D(12), base)
        u1, ut1 = dn.forward(pv.views(), base, states, coords)
        u7, ut7 = dn.forward(pv.views(), scaled, states, coords)
        assert np.allclose(u7, 7.0 * u1, atol=1e-12)
        assert np.allclose(ut7, 7.0 * ut1, atol=1e-12)

    def test_fast_closures_honor_scale(self):
        c = dense_config(output_scale=50.0, branch_scale=3.0)
        pv = dn.init_params(c, 5)
        grid = Grid1D(12)
        states = np.random.default_rng(3).normal(size=(4, 12))
        u_hat, ut_hat = dn.forward(pv.views(), c, states, dn.sensor_coords(grid, c))
        assert np.allclose(dn.make_tangent_fn(pv, c, grid)(states), ut_hat, atol=1e-10)
        assert np.allclose(dn.make_reconstruction_fn(pv, c, grid)(states), u_hat, atol=1e-10)

    def test_scale_survives_checkpoint(self, tmp_path):
        c = dense_config(output_scale=100.0)
        pv = dn.init_params(c, 1)
        dn.save_checkpoint(tmp_path / "ck", c, pv, 1, 0)
        back, _, _, _ = dn.load_checkpoint(tmp_path / "ck")
        assert back.output_scale == 100.0


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        c = dense_config(branch_scale=100.0)
        pv = dn.init_params(c, 11)
        dn.save_checkpoint(tmp_path / "ck", c, pv, seed=11, step=40)
        c2, pv2, seed, step = dn.load_checkpoint(tmp_path / "ck")
        assert c2 == c and seed == 11 and step == 40
        assert np.array_equal(pv2.data, pv.data)

    def test_truncated_params_detected(self, tmp_path):
        c = dense_config()
        pv = dn.init_params(c, 0)
        dn.save_checkpoint(tmp_path / "ck", c, pv, 0, 0)
        f = tmp_path / "ck" / "params.f64"
        f.write_bytes(f.read_bytes()[:-8])
        with pytest.raises(dn.CheckpointMismatchError):
            dn.load_checkpoint(tmp_path / "ck")
