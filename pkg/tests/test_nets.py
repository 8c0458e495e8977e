"""Dense nets: layout contract, backprop exactness, Adam, checkpoints."""

import json

import numpy as np
import pytest

from coneplan.nets import Adam, Mlp, PolicyBundle


def layout_forward(theta, sizes, x):
    """Independent forward pass from the documented flat layout."""
    h = np.asarray(x, dtype=np.float64)
    off = 0
    for k, (nin, nout) in enumerate(zip(sizes, sizes[1:])):
        w = np.asarray(theta[off : off + nin * nout], dtype=np.float64).reshape(
            nin, nout
        )
        off += nin * nout
        b = np.asarray(theta[off : off + nout], dtype=np.float64)
        off += nout
        h = h @ w + b
        if k < len(sizes) - 2:
            h = np.tanh(h)
    return h


class TestMlp:
    def test_forward_matches_flat_layout(self):
        net = Mlp((6, 8, 7, 4), seed=1, dtype=np.float64)
        x = np.random.default_rng(0).standard_normal((5, 6))
        got = net.forward(x)
        want = layout_forward(net.theta, net.sizes, x)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_single_vector_matches_batch_row(self):
        net = Mlp((6, 8, 4), seed=2)
        x = np.random.default_rng(1).standard_normal((3, 6)).astype(np.float32)
        batch = net.forward(x)
        one = net.forward(x[1])
        assert one.shape == (4,)
        assert np.allclose(one, batch[1], atol=1e-6)

    def test_backward_matches_central_differences(self):
        net = Mlp((6, 8, 7, 4), seed=3, dtype=np.float64)
        rng = np.random.default_rng(2)
        x = rng.standard_normal((5, 6))
        upstream = rng.standard_normal((5, 4))

        net.forward(x)
        grad = net.backward(upstream)

        def loss(theta):
            return float(np.sum(layout_forward(theta, net.sizes, x) * upstream))

        h = 1e-6
        fd = np.zeros_like(net.theta)
        base = net.theta.copy()
        for i in range(net.n_params):
            tp = base.copy()
            tp[i] += h
            tm = base.copy()
            tm[i] -= h
            fd[i] = (loss(tp) - loss(tm)) / (2.0 * h)
        denom = np.maximum(np.abs(fd), 1e-8)
        assert float(np.max(np.abs(grad - fd) / denom)) < 1e-5

    def test_theta_views_are_live(self):
        net = Mlp((3, 4, 2), seed=4, dtype=np.float64)
        x = np.ones(3)
        before = net.forward(x).copy()
        net.theta[...] = net.theta * 2.0
        after = net.forward(x)
        assert not np.allclose(before, after)

    def test_set_theta_shape_checked(self):
        net = Mlp((3, 4, 2), seed=0)
        with pytest.raises(ValueError):
            net.set_theta(np.zeros(5))
        vals = np.arange(net.n_params, dtype=np.float32)
        net.set_theta(vals)
        assert np.array_equal(net.theta, vals)

    def test_backward_requires_forward(self):
        net = Mlp((3, 4, 2), seed=0)
        with pytest.raises(RuntimeError):
            net.backward(np.zeros((1, 2)))

    def test_init_determinism(self):
        a = Mlp((5, 6, 2), seed=9)
        b = Mlp((5, 6, 2), seed=9)
        c = Mlp((5, 6, 2), seed=10)
        assert np.array_equal(a.theta, b.theta)
        assert not np.array_equal(a.theta, c.theta)


class TestAdam:
    def test_matches_reference_updates(self):
        rng = np.random.default_rng(3)
        theta = rng.standard_normal(40)
        ref = theta.copy()
        opt = Adam(lr=1e-2)
        m = np.zeros(40)
        v = np.zeros(40)
        for t in range(1, 8):
            grad = rng.standard_normal(40)
            opt.step(theta, grad)
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad * grad
            mhat = m / (1.0 - 0.9**t)
            vhat = v / (1.0 - 0.999**t)
            ref -= 1e-2 * mhat / (np.sqrt(vhat) + 1e-8)
            assert np.allclose(theta, ref, rtol=1e-12, atol=1e-12)

    def test_minimizes_quadratic(self):
        target = np.array([1.0, -2.0, 0.5])
        theta = np.zeros(3)
        opt = Adam(lr=0.05)
        for _ in range(400):
            opt.step(theta, 2.0 * (theta - target))
        assert np.allclose(theta, target, atol=1e-3)


class TestPolicyBundle:
    def test_create_shapes(self):
        bundle = PolicyBundle.create(20, hidden=(16, 8), seed=5)
        assert bundle.obs_dim == 20
        assert bundle.discrete.sizes == (20, 16, 8, 2)
        assert bundle.continuous.sizes == (20, 16, 8, 4)
        assert bundle.value.sizes == (20, 16, 8, 1)
        assert not np.array_equal(
            bundle.discrete.theta[:50], bundle.continuous.theta[:50]
        )

    def test_checkpoint_round_trip(self, tmp_path):
        bundle = PolicyBundle.create(12, hidden=(10, 6), seed=6)
        path = tmp_path / "policy.ckpt"
        bundle.save(path, meta={"note": "round trip", "steps": 7})
        loaded = PolicyBundle.load(path)
        for name in ("discrete", "continuous", "value"):
            assert np.array_equal(
                getattr(loaded, name).theta, getattr(bundle, name).theta
            )
        assert PolicyBundle.read_meta(path) == {"note": "round trip", "steps": 7}

    def test_checkpoint_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not json at all\n\x00\x01")
        with pytest.raises(ValueError):
            PolicyBundle.load(path)
        path.write_bytes(json.dumps({"format": "other"}).encode() + b"\n")
        with pytest.raises(ValueError, match="format"):
            PolicyBundle.load(path)

    def test_checkpoint_rejects_wrong_version_or_truncation(self, tmp_path):
        bundle = PolicyBundle.create(8, hidden=(6,), seed=7)
        path = tmp_path / "policy.ckpt"
        bundle.save(path)
        raw = path.read_bytes()
        head, blob = raw.split(b"\n", 1)
        header = json.loads(head)
        header["version"] = 99
        bumped = tmp_path / "bumped.ckpt"
        bumped.write_bytes(json.dumps(header).encode() + b"\n" + blob)
        with pytest.raises(ValueError, match="version"):
            PolicyBundle.load(bumped)
        clipped = tmp_path / "clipped.ckpt"
        clipped.write_bytes(raw[: len(raw) - 40])
        with pytest.raises(ValueError, match="shorter"):
            PolicyBundle.load(clipped)
