"""Schedule, objective, and DDIM recursion contracts."""

import math

import numpy as np
import pytest

from tcve.diffusion import (GuidanceConfig, ddim_invert, ddim_invert_step,
                            ddim_sample, ddim_step, guided_eps, ldm_loss,
                            make_schedule, q_sample)
from tcve.rng import CounterRng
from tcve.tensor import Tensor, check_gradients


class TestSchedule:
    def test_fifty_of_thousand_hits_endpoints(self):
        sched = make_schedule(1000, 50)
        assert len(sched.ddim_steps) == 50
        assert sched.ddim_steps[0] == 0
        assert sched.ddim_steps[-1] == 999

    def test_alpha_bar_strictly_decreasing(self):
        sched = make_schedule(4, 2)
        assert len(sched.alpha_bar) == 4
        assert np.all(np.diff(sched.alpha_bar) < 0)

    def test_alpha_bar_cumulative_product(self):
        # independent oracle: explicit running product over the betas
        sched = make_schedule(100, 10)
        running = 1.0
        for t in range(100):
            running *= 1.0 - sched.beta[t]
            assert abs(sched.alpha_bar[t] - running) < 1e-9

    def test_terminal_level_is_nearly_pure_noise(self):
        sched = make_schedule(1000, 50)
        assert sched.alpha_bar[999] < 0.01
        assert sched.alpha_bar[0] > 0.99

    def test_beta_range(self):
        sched = make_schedule(10, 2)
        assert np.all(sched.beta > 0) and np.all(sched.beta < 1)

    def test_steps_strictly_increasing(self):
        for total, sample in [(1000, 50), (100, 100), (37, 11), (7, 7)]:
            steps = make_schedule(total, sample).ddim_steps
            assert all(b > a for a, b in zip(steps, steps[1:]))

    def test_single_step_uses_deepest_level(self):
        assert make_schedule(100, 1).ddim_steps == (99,)

    def test_too_many_sample_steps_rejected(self):
        with pytest.raises(ValueError, match="sample_steps"):
            make_schedule(10, 11)


class TestQSample:
    def test_no_noise_limit(self):
        sched = make_schedule(1000, 10)
        z0 = Tensor(np.full((2, 3), 5.0))
        out = q_sample(z0, 0, Tensor(np.ones((2, 3))), sched)
        assert np.allclose(out.data, z0.data, atol=1e-2)

    def test_pure_noise_limit(self):
        sched = make_schedule(1000, 10)
        eps = Tensor(np.full((2, 3), -1.5))
        out = q_sample(Tensor(np.full((2, 3), 5.0)), 999, eps, sched)
        assert np.allclose(out.data, eps.data, atol=0.05)

    def test_scalar_formula_case(self):
        # 0.5*2 + sqrt(0.75)*1 = 1.8660 at alpha_bar = 0.25
        sched = make_schedule(3, 1)
        object.__setattr__(sched, "alpha_bar", np.array([0.9, 0.25, 0.1]))
        out = q_sample(Tensor([2.0], dtype=np.float64), 1, Tensor([1.0], dtype=np.float64), sched)
        assert abs(out.data[0] - (0.5 * 2 + math.sqrt(0.75))) < 1e-9
        assert round(float(out.data[0]), 4) == 1.8660

    def test_exact_limits(self):
        # alpha_bar exactly 1 returns the latent; exactly 0 returns the noise
        sched = make_schedule(2, 1)
        object.__setattr__(sched, "alpha_bar", np.array([1.0, 0.0]))
        z0 = Tensor(np.array([3.25, -1.5], dtype=np.float64))
        eps = Tensor(np.array([0.125, 9.0], dtype=np.float64))
        assert np.array_equal(q_sample(z0, 0, eps, sched).data, z0.data)
        assert np.array_equal(q_sample(z0, 1, eps, sched).data, eps.data)

    def test_out_of_range_timestep_rejected(self):
        sched = make_schedule(10, 2)
        with pytest.raises(ValueError, match="timestep"):
            q_sample(Tensor([1.0]), 10, Tensor([0.0]), sched)

    def test_variance_transfer(self):
        # Var(z_t) ~ a*Var(z0) + (1-a) for independent unit noise, within 3 sigma.
        sched = make_schedule(1000, 10)
        rng = CounterRng(5)
        t = 600
        a = float(sched.alpha_bar[t])
        n = 40000
        z0 = Tensor(rng.normal((n,)) * 2.0)
        eps = Tensor(rng.normal((n,)))
        zt = q_sample(z0, t, eps, sched)
        expected = a * 4.0 + (1.0 - a)
        sigma = expected * math.sqrt(2.0 / n) * 3
        assert abs(zt.data.var() - expected) < 3 * sigma + 0.05


class TestLdmLoss:
    def test_perfect_oracle_model_zero_loss(self):
        sched = make_schedule(50, 5)
        rng = CounterRng(3)
        seen = {}

        def peeking_model(z_t, t, p):
            return Tensor(seen["eps"])

        # replicate the draw stream to know eps ahead of the model call
        probe = CounterRng(3)
        probe.randint(0, 50)
        seen["eps"] = probe.normal((2, 3, 4))
        loss = ldm_loss(peeking_model, Tensor(np.ones((2, 3, 4))), None, rng, sched)
        assert loss.item() == 0.0

    def test_zero_model_loss_near_one(self):
        sched = make_schedule(100, 5)
        rng = CounterRng(11)
        z0 = Tensor(np.zeros((1, 4, 16, 16)))
        vals = [ldm_loss(lambda z, t, p: z * 0.0, z0, None, rng, sched).item()
                for _ in range(20)]
        n = 4 * 16 * 16
        # mean of ||eps||^2/n over 20 draws; 3 sigma of the pooled estimate
        assert abs(np.mean(vals) - 1.0) < 3 * math.sqrt(2.0 / (n * 20)) + 0.01

    def test_loss_nonnegative(self):
        sched = make_schedule(20, 2)
        rng = CounterRng(7)
        model = lambda z, t, p: z * 0.5 - 0.3
        for _ in range(5):
            assert ldm_loss(model, Tensor(np.ones((2, 2))), None, rng, sched).item() >= 0.0

    def test_shape_mismatch_rejected(self):
        sched = make_schedule(20, 2)
        with pytest.raises(ValueError, match="shape"):
            ldm_loss(lambda z, t, p: z.reshape(4), Tensor(np.ones((2, 2))), None,
                     CounterRng(0), sched)

    def test_gradient_through_model(self, rng64):
        sched = make_schedule(30, 3)
        w = Tensor(rng64((3, 3)), requires_grad=True)
        z0 = Tensor(rng64((2, 3)))

        def make_loss():
            rng = CounterRng(99)
            return ldm_loss(lambda z, t, p: z @ w, z0, None, rng, sched)

        assert check_gradients(make_loss, [w]) < 1e-4


class TestDdimSteps:
    def test_identity_when_levels_equal(self):
        z = Tensor(np.array([1.234567, -2.5]))
        out = ddim_step(z, Tensor(np.array([9.9, 9.9])), 0.5, 0.5)
        assert out is z

    def test_step_to_clean_formula(self):
        # eps=0: z0 = z_t / sqrt(abar_t); 1/sqrt(0.25) = 2
        out = ddim_step(Tensor([1.0], dtype=np.float64), Tensor([0.0], dtype=np.float64),
                        0.25, 1.0)
        assert abs(out.data[0] - 2.0) < 1e-12

    def test_scalar_forward_case(self):
        out = ddim_step(Tensor([0.925], dtype=np.float64), Tensor([0.5], dtype=np.float64),
                        0.36, 0.64)
        assert abs(out.data[0] - 1.0) < 1e-12

    def test_scalar_inversion_case(self):
        # sqrt(.36)*(1 - sqrt(1-.64)*0.5)/sqrt(.64) + sqrt(1-.36)*0.5 = 0.925
        out = ddim_invert_step(Tensor([1.0], dtype=np.float64), Tensor([0.5], dtype=np.float64),
                               0.64, 0.36)
        assert abs(out.data[0] - 0.925) < 1e-12

    def test_invert_identity_when_levels_equal(self):
        z = Tensor(np.array([0.5]))
        assert ddim_invert_step(z, Tensor(np.array([1.0])), 0.7, 0.7) is z

    def test_step_invert_roundtrip_many_random_cases(self):
        # both composition orders must return the input to machine precision
        rng = CounterRng(21)
        worst = 0.0
        for _ in range(1000):
            z = float(rng.normal(()) * 3)
            eps = float(rng.normal(()))
            a = 0.01 + 0.98 * float(rng.uniform(()))
            b = 0.01 + 0.98 * float(rng.uniform(()))
            zt = Tensor([z], dtype=np.float64)
            et = Tensor([eps], dtype=np.float64)
            up_down = ddim_step(ddim_invert_step(zt, et, a, b), et, b, a)
            down_up = ddim_invert_step(ddim_step(zt, et, a, b), et, b, a)
            denom = max(abs(z), 1e-6)
            worst = max(worst, abs(float(up_down.data[0]) - z) / denom)
            worst = max(worst, abs(float(down_up.data[0]) - z) / denom)
        assert worst < 1e-12

    def test_nonpositive_coefficients_rejected(self):
        with pytest.raises(ValueError, match="coefficients"):
            ddim_step(Tensor([1.0]), Tensor([0.0]), 0.0, 0.5)
        with pytest.raises(ValueError, match="coefficients"):
            ddim_invert_step(Tensor([1.0]), Tensor([0.0]), -0.1, 0.5)


class TestGuidance:
    def test_scale_one_returns_conditional_bitwise(self):
        c = Tensor(np.array([0.1, 0.7, -0.3]))
        u = Tensor(np.array([5.0, -1.0, 2.0]))
        assert guided_eps(c, u, 1.0) is c

    def test_scale_zero_returns_unconditional_bitwise(self):
        c, u = Tensor(np.array([1.0])), Tensor(np.array([2.0]))
        assert guided_eps(c, u, 0.0) is u

    def test_large_scale_extrapolates(self):
        out = guided_eps(Tensor([1.0], dtype=np.float64), Tensor([0.0], dtype=np.float64), 12.5)
        assert out.data[0] == 12.5

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            guided_eps(Tensor(np.zeros(2)), Tensor(np.zeros(3)), 2.0)

    def test_negative_scale_rejected(self):
        with pytest.raises(ValueError, match="scale"):
            GuidanceConfig(scale=-1.0)


class TestChains:
    def _zero_model(self, z, t, p):
        return z * 0.0

    def test_zero_model_sample_is_rescale_chain(self):
        # telescoping oracle: all intermediate levels cancel, leaving
        # z / sqrt(alpha_bar[deepest retained step])
        sched = make_schedule(200, 7)
        z = Tensor(np.full((1, 2, 2), 0.5, dtype=np.float64))
        out = ddim_sample(z, self._zero_model, None, GuidanceConfig(1.0), sched)
        expected = 0.5 / math.sqrt(sched.alpha_bar[sched.ddim_steps[-1]])
        assert np.allclose(out.data, expected, rtol=1e-10)

    def test_zero_model_invert_is_rescale_chain(self):
        sched = make_schedule(200, 7)
        z0 = Tensor(np.full((1, 2, 2), 0.5, dtype=np.float64))
        out = ddim_invert(z0, self._zero_model, None, sched)
        expected = 0.5 * math.sqrt(sched.alpha_bar[sched.ddim_steps[-1]])
        assert np.allclose(out.data, expected, rtol=1e-10)

    def test_zero_model_roundtrip_exact(self):
        sched = make_schedule(100, 10)
        rng = CounterRng(4)
        z0 = Tensor(rng.normal((1, 3, 4, 4), dtype=np.float64))
        zT = ddim_invert(z0, self._zero_model, None, sched)
        back = ddim_sample(zT, self._zero_model, None, GuidanceConfig(1.0), sched)
        rel = np.linalg.norm(back.data - z0.data) / np.linalg.norm(z0.data)
        assert rel < 1e-12

    def test_single_step_schedule(self):
        sched = make_schedule(100, 1)
        z = Tensor(np.ones((1, 2), dtype=np.float64))
        out = ddim_sample(z, self._zero_model, None, GuidanceConfig(1.0), sched)
        expected = 1.0 / math.sqrt(sched.alpha_bar[99])
        assert np.allclose(out.data, expected, rtol=1e-12)

    def test_sampling_deterministic_bitwise(self):
        sched = make_schedule(50, 5)
        rng = CounterRng(8)
        w = rng.normal((4, 4), dtype=np.float64) * 0.05
        model = lambda z, t, p: (z.reshape(-1, 4) @ Tensor(w)).reshape(z.shape) * (t / 50.0)
        z = Tensor(rng.normal((2, 4), dtype=np.float64))
        a = ddim_sample(z, model, None, GuidanceConfig(1.0), sched)
        b = ddim_sample(z, model, None, GuidanceConfig(1.0), sched)
        assert np.array_equal(a.data, b.data)

    def test_inversion_deterministic_bitwise(self):
        sched = make_schedule(50, 5)
        rng = CounterRng(23)
        w = rng.normal((4, 4), dtype=np.float64) * 0.05
        model = lambda z, t, p: (z.reshape(-1, 4) @ Tensor(w)).reshape(z.shape) * (t / 50.0)
        z0 = Tensor(rng.normal((2, 4), dtype=np.float64))
        a = ddim_invert(z0, model, None, sched)
        b = ddim_invert(z0, model, None, sched)
        assert np.array_equal(a.data, b.data)

    def test_smooth_model_roundtrip_small_error(self):
        # round-trip measurement with a small random linear model, 50 steps
        sched = make_schedule(1000, 50)
        rng = CounterRng(13)
        w = rng.normal((8, 8), dtype=np.float64) * 0.02

        def model(z, t, p):
            flat = z.reshape(-1, 8)
            return (flat @ Tensor(w)).reshape(z.shape)

        z0 = Tensor(rng.normal((2, 8), dtype=np.float64))
        zT = ddim_invert(z0, model, None, sched)
        back = ddim_sample(zT, model, None, GuidanceConfig(1.0), sched)
        rel = np.linalg.norm(back.data - z0.data) / np.linalg.norm(z0.data)
        assert rel < 5e-2

    def test_guided_sampling_queries_model_twice(self):
        sched = make_schedule(20, 3)
        calls = []

        def counting_model(z, t, p):
            calls.append(p)
            return z * 0.0

        z = Tensor(np.ones((1, 2)))
        ddim_sample(z, counting_model, "cond", GuidanceConfig(7.5, "uncond"), sched)
        assert len(calls) == 6
        assert calls.count("cond") == 3 and calls.count("uncond") == 3

    def test_scale_one_guidance_queries_once(self):
        sched = make_schedule(20, 3)
        calls = []

        def counting_model(z, t, p):
            calls.append(p)
            return z * 0.0

        ddim_sample(Tensor(np.ones((1, 2))), counting_model, "cond",
                    GuidanceConfig(1.0, "uncond"), sched)
        assert calls == ["cond"] * 3
