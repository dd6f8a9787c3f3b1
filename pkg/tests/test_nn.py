import numpy as np
import pytest

from bandgen.nn import (
    MLP,
    Adam,
    bce_with_logits,
    clip_global_norm,
    flatten_params,
    polyak_update,
    sigmoid,
    unflatten_params,
)


def finite_diff_grads(loss_fn, params, eps=1e-6):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            hi = loss_fn()
            p[idx] = orig - eps
            lo = loss_fn()
            p[idx] = orig
            g[idx] = (hi - lo) / (2 * eps)
            it.iternext()
        grads.append(g)
    return grads


class TestMLPGradients:
    def test_mse_gradcheck(self):
        rng = np.random.default_rng(0)
        net = MLP((3, 8, 2), rng)
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=(5, 2))

        def loss():
            out, _ = net.forward(x)
            return float(((out - y) ** 2).mean())

        out, acts = net.forward(x)
        analytic, _ = net.backward(acts, 2.0 * (out - y) / out.size)
        numeric = finite_diff_grads(loss, net.params)
        for a, n in zip(analytic, numeric):
            denom = np.maximum(np.abs(n), 1e-6)
            assert np.max(np.abs(a - n) / denom) < 1e-4

    def test_bce_through_sigmoid_gradcheck(self):
        rng = np.random.default_rng(1)
        net = MLP((4, 6, 1), rng)
        x = rng.normal(size=(7, 4))
        y = rng.uniform(0.05, 0.95, size=7)
        w = np.where(y > 0.5, 5.0, 1.0)

        def loss():
            z, _ = net.forward(x)
            return float(np.mean(w * bce_with_logits(z[:, 0], y)))

        z, acts = net.forward(x)
        grad_z = (w * (sigmoid(z[:, 0]) - y) / len(y))[:, None]
        analytic, _ = net.backward(acts, grad_z)
        numeric = finite_diff_grads(loss, net.params)
        for a, n in zip(analytic, numeric):
            denom = np.maximum(np.abs(n), 1e-6)
            assert np.max(np.abs(a - n) / denom) < 1e-4

    def test_input_grad(self):
        rng = np.random.default_rng(2)
        net = MLP((3, 5, 1), rng)
        x = rng.normal(size=(1, 3))
        out, acts = net.forward(x)
        _, gx = net.backward(acts, np.ones((1, 1)), need_input_grad=True)
        eps = 1e-6
        for j in range(3):
            xp = x.copy(); xp[0, j] += eps
            xm = x.copy(); xm[0, j] -= eps
            num = (net(xp)[0, 0] - net(xm)[0, 0]) / (2 * eps)
            assert gx[0, j] == pytest.approx(num, rel=1e-4, abs=1e-8)


class TestAdam:
    def test_minimizes_quadratic(self):
        rng = np.random.default_rng(3)
        p = [rng.normal(size=(4,))]
        opt = Adam(p, lr=0.05)
        for _ in range(500):
            opt.step(p, [2.0 * p[0]])
        assert np.abs(p[0]).max() < 1e-3

    def test_state_roundtrip(self):
        rng = np.random.default_rng(4)
        p = [rng.normal(size=(3, 2)), rng.normal(size=(2,))]
        opt = Adam(p, lr=0.01)
        opt.step(p, [np.ones((3, 2)), np.ones(2)])
        state = [a.copy() for a in opt.state_arrays()]
        opt2 = Adam(p, lr=0.01)
        opt2.load_state_arrays(state)
        assert opt2.t == opt.t
        for a, b in zip(opt.m + opt.v, opt2.m + opt2.v):
            np.testing.assert_array_equal(a, b)


class TestPolyak:
    def test_exact_geometric_shrink(self):
        rng = np.random.default_rng(5)
        online = [rng.normal(size=(6,))]
        target = [np.zeros(6)]
        tau = 0.01
        d0 = np.linalg.norm(target[0] - online[0])
        k = 25
        for _ in range(k):
            polyak_update(target, online, tau)
        dk = np.linalg.norm(target[0] - online[0])
        assert dk == pytest.approx(d0 * (1 - tau) ** k, rel=1e-12)


class TestHelpers:
    def test_clip_global_norm(self):
        g = [np.full(4, 3.0), np.full(9, 4.0)]
        total = np.sqrt(4 * 9 + 9 * 16)
        returned = clip_global_norm(g, 1.0)
        assert returned == pytest.approx(total)
        new_norm = np.sqrt(sum((x**2).sum() for x in g))
        assert new_norm == pytest.approx(1.0)

    def test_flatten_roundtrip(self):
        rng = np.random.default_rng(6)
        params = [rng.normal(size=(3, 4)), rng.normal(size=(4,))]
        flat = flatten_params(params)
        back = unflatten_params(flat, params)
        for a, b in zip(params, back):
            np.testing.assert_array_equal(a, b)

    def test_sigmoid_stable(self):
        z = np.array([-800.0, 0.0, 800.0])
        s = sigmoid(z)
        assert np.all(np.isfinite(s))
        assert s[0] == pytest.approx(0.0, abs=1e-12)
        assert s[1] == 0.5
        assert s[2] == pytest.approx(1.0)
