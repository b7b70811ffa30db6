import numpy as np

from spoofnet import autodiff as ad
from spoofnet.optim import AdamW


def make_param(value):
    p = ad.parameter(np.array(value, dtype=np.float64))
    return {"w": p}, p


class TestAdamW:
    def test_first_step_bias_corrected(self):
        params, p = make_param([0.0])
        opt = AdamW(params, lr=1e-3, weight_decay=0.0)
        p.grad = np.array([1.0])
        opt.step()
        # m_hat = v_hat = 1 on step one, so the update is -lr / (1 + eps)
        expected = -1e-3 * (1.0 / (1.0 + 1e-8))
        np.testing.assert_allclose(p.data, [expected], rtol=1e-12)

    def test_zero_grad_zero_decay_is_identity(self):
        params, p = make_param([2.5, -1.5])
        opt = AdamW(params, lr=1e-2, weight_decay=0.0)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [2.5, -1.5])

    def test_decoupled_decay_shrinks_parameter(self):
        params, p = make_param([4.0])
        opt = AdamW(params, lr=0.1, weight_decay=0.01)
        p.grad = np.zeros(1)
        opt.step()
        np.testing.assert_allclose(p.data, [4.0 * (1.0 - 0.1 * 0.01)], rtol=1e-12)

    def test_moments_track_parameter_shapes(self):
        params = {"a": ad.parameter(np.zeros((3, 4))),
                  "b": ad.parameter(np.zeros(7))}
        opt = AdamW(params, lr=1e-3)
        assert opt.m["a"].shape == (3, 4) and opt.v["b"].shape == (7,)

    def test_descends_a_quadratic(self):
        params, p = make_param([5.0])
        opt = AdamW(params, lr=0.05)
        for _ in range(400):
            opt.zero_grad()
            loss = ad.reshape(ad.mul(ad.mul(p, 1.0), p), ())
            ad.backward(loss)
            opt.step()
        assert abs(float(p.data[0])) < 0.1
