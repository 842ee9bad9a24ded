"""Fusion unit: attention oracle, alignment, ablation paths, identity at init."""

import numpy as np
import pytest

from tcve.config import AblationConfig, StuConfig
from tcve.rng import CounterRng
from tcve.stu import SpatialTemporalUnit, temporal_attention
from tcve.tensor import Tensor

FULL = AblationConfig()


def unit(stage="mid", c_t=3, c_k=4, balance=0.1, ablation=FULL, seed=1):
    return SpatialTemporalUnit(stage, c_t, c_k, StuConfig(balance=balance), ablation,
                               CounterRng(seed))


class TestTemporalAttention:
    def test_scalar_two_frame_oracle(self):
        # d=1, identity projections, frames (1, -1):
        # row softmax (e/(e+1/e), ...) = (0.880797, 0.119203)
        # outputs 0.880797*1 + 0.119203*(-1) = 0.761594 and its negation
        x = Tensor(np.array([1.0, -1.0]).reshape(1, 1, 2, 1, 1))
        one = Tensor(np.ones((1, 1)))
        out = temporal_attention(x, one, one, one)
        got = out.data.reshape(2)
        assert abs(got[0] - 0.761594) < 1e-6
        assert abs(got[1] + 0.761594) < 1e-6

    def test_zero_value_projection_zero_output(self):
        rng = CounterRng(2)
        x = Tensor(rng.normal((2, 3, 4, 2, 2), dtype=np.float32))
        w = Tensor(rng.normal((3, 3), dtype=np.float32))
        zero = Tensor(np.zeros((3, 3), dtype=np.float32))
        out = temporal_attention(x, w, w, zero)
        assert np.allclose(out.data, 0.0, atol=1e-12)

    def test_constant_over_frames_stays_constant(self):
        rng = CounterRng(3)
        frame = rng.normal((1, 3, 1, 2, 2), dtype=np.float32)
        x = Tensor(np.repeat(frame, 4, axis=2))
        w = Tensor(rng.normal((3, 3), dtype=np.float32))
        out = temporal_attention(x, w, w, w)
        assert np.allclose(out.data, np.repeat(out.data[:, :, :1], 4, axis=2), atol=1e-5)

    def test_frame_permutation_equivariance(self):
        rng = CounterRng(4)
        x = rng.normal((1, 3, 5, 2, 2), dtype=np.float32)
        w_q = Tensor(rng.normal((3, 3), dtype=np.float32))
        w_k = Tensor(rng.normal((3, 3), dtype=np.float32))
        w_v = Tensor(rng.normal((3, 3), dtype=np.float32))
        perm = np.array([2, 0, 4, 1, 3])
        out = temporal_attention(Tensor(x), w_q, w_k, w_v)
        out_perm = temporal_attention(Tensor(x[:, :, perm]), w_q, w_k, w_v)
        assert np.allclose(out.data[:, :, perm], out_perm.data, atol=1e-5)

    def test_no_spatial_mixing(self):
        # zero out one spatial location; its output must not depend on others
        rng = CounterRng(5)
        x = rng.normal((1, 2, 3, 2, 2), dtype=np.float32)
        w = Tensor(np.eye(2, dtype=np.float32))
        out_a = temporal_attention(Tensor(x), w, w, w).data
        y = x.copy()
        y[:, :, :, 1, 1] = 7.0
        out_b = temporal_attention(Tensor(y), w, w, w).data
        assert np.array_equal(out_a[:, :, :, 0, 0], out_b[:, :, :, 0, 0])

    def test_nonsquare_projection_rejected(self):
        with pytest.raises(ValueError, match="square"):
            temporal_attention(Tensor(np.zeros((1, 3, 2, 1, 1))),
                               Tensor(np.zeros((3, 2))), Tensor(np.zeros((3, 3))),
                               Tensor(np.zeros((3, 3))))


class TestAlign:
    def test_matching_shapes_identity_projection(self):
        u = unit(c_t=3, c_k=3)
        u.proj.make_dirac()
        rng = CounterRng(6)
        x_tem = Tensor(rng.normal((1 * 4 * 4, 3, 2), dtype=np.float32))
        out = u.align(x_tem, (1, 3, 2, 4, 4), (4, 4))
        from tcve.temporal import unfold_space
        expected = unfold_space(x_tem, 1, 4, 4)
        assert np.array_equal(out.data, expected.data)

    def test_output_shape_exact(self):
        u = unit(c_t=16, c_k=64, seed=7)
        x_tem = Tensor(CounterRng(8).normal((1 * 16 * 16, 16, 4), dtype=np.float32))
        out = u.align(x_tem, (1, 64, 8, 8, 8), (16, 16))
        assert out.shape == (1, 64, 8, 8, 8)

    def test_constant_input_constant_before_bias(self):
        u = unit(c_t=2, c_k=2, seed=9)
        u.proj.b.data[:] = 0
        x_tem = Tensor(np.full((4, 2, 3), 1.5, dtype=np.float32))
        out = u.align(x_tem, (1, 2, 6, 1, 2), (2, 2))
        flat = out.data.reshape(2, -1)
        assert np.allclose(flat, flat[:, :1], atol=1e-5)

    def test_incompatible_batch_rejected(self):
        u = unit()
        with pytest.raises(ValueError, match="batch"):
            u.align(Tensor(np.zeros((10, 3, 2), dtype=np.float32)), (1, 4, 2, 4, 4), (4, 4))


class TestFusion:
    def _inputs(self, seed, b=1, f=4, h=4, w=4, c_t=3, c_k=4, hk=2, wk=2):
        rng = CounterRng(seed)
        x_spa = Tensor(rng.normal((b * f, c_k, hk, wk), dtype=np.float32))
        x_tem = Tensor(rng.normal((b * h * w, c_t, f // 2), dtype=np.float32))
        return x_spa, x_tem, (b, f, h, w)

    def test_identity_at_initialization(self):
        # W_v = 0 and Dirac conv3d: the unit must pass x_spa through bitwise
        u = unit(seed=10)
        x_spa, x_tem, dims = self._inputs(11)
        out = u(x_spa, x_tem, dims, spa_stage="mid", tem_stage="mid")
        assert np.array_equal(out.data, x_spa.data)

    def test_balance_factor_scalar_case(self):
        # X_spa = 1, aligned attention output = 2, balance 0.1 -> 1.2
        u = unit(c_t=1, c_k=1, seed=12, ablation=AblationConfig(conv3d=False))
        u.proj.make_dirac()
        u.w_q.data[:] = 1.0
        u.w_k.data[:] = 1.0
        u.w_v.data[:] = 1.0
        x_spa = Tensor(np.ones((2, 1, 1, 1), dtype=np.float32))
        x_tem = Tensor(np.full((1, 1, 2), 2.0, dtype=np.float32))
        out = u(x_spa, x_tem, (1, 2, 1, 1))
        assert np.allclose(out.data, 1.2, atol=1e-6)

    def test_zero_balance_with_dirac_conv_is_identity_path(self):
        # even with nonzero value projections, balance 0 kills the temporal
        # branch and the Dirac conv passes the spatial feature through
        u = unit(balance=0.0, seed=18)
        u.w_v.data[:] = 0.5
        x_spa, x_tem, dims = self._inputs(19)
        out = u(x_spa, x_tem, dims)
        assert np.array_equal(out.data, x_spa.data)

    def test_output_shape_always_matches_spatial(self):
        for ablation in (FULL, AblationConfig(temporal_attention=False),
                         AblationConfig(conv3d=False), AblationConfig(stu=False)):
            u = unit(ablation=ablation, seed=13)
            x_spa, x_tem, dims = self._inputs(14)
            assert u(x_spa, x_tem, dims).shape == x_spa.shape

    def test_disabled_unit_is_elementwise_sum(self):
        u = unit(ablation=AblationConfig(stu=False), seed=15)
        x_spa, x_tem, dims = self._inputs(16)
        out = u(x_spa, x_tem, dims)
        from tcve.spatial import fold_frames, unfold_frames
        aligned = u.align(x_tem, (1, 4, 4, 2, 2), (4, 4))
        expected = fold_frames(unfold_frames(x_spa, 1) + aligned)
        assert np.array_equal(out.data, expected.data)

    def test_disabled_unit_has_only_projection_params(self):
        u = unit(ablation=AblationConfig(stu=False))
        names = [n for n, _ in u.named_params()]
        assert sorted(names) == ["proj.b", "proj.w"]

    def test_no_attention_drops_three_tensors(self):
        full = set(n for n, _ in unit().named_params())
        no_ta = set(n for n, _ in unit(ablation=AblationConfig(temporal_attention=False))
                    .named_params())
        assert full - no_ta == {"w_q", "w_k", "w_v"}

    def test_no_conv3d_drops_two_tensors(self):
        full = set(n for n, _ in unit().named_params())
        no_c3 = set(n for n, _ in unit(ablation=AblationConfig(conv3d=False)).named_params())
        assert full - no_c3 == {"fuse_conv.w", "fuse_conv.b"}

    def test_stage_mismatch_rejected(self):
        u = unit(stage="down0")
        x_spa, x_tem, dims = self._inputs(17)
        with pytest.raises(ValueError, match="stage mismatch"):
            u(x_spa, x_tem, dims, spa_stage="mid", tem_stage="down0")
