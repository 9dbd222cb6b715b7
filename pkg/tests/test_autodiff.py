import numpy as np
import pytest

from mmae import autodiff as ad
from mmae.exceptions import InputError
from mmae.linalg import make_rng, pairwise_distances
from mmae.train import TrainConfig, init_params, total_loss


def test_sum_gradient_is_ones():
    tape = ad.Tape()
    w = tape.param(np.arange(4.0).reshape(2, 2))
    assert np.array_equal(ad.backward(ad.sum(w))[w], np.ones((2, 2)))


def test_mean_square_gradient():
    tape = ad.Tape()
    W = np.array([[1.0, 2.0], [3.0, 4.0]])
    w = tape.param(W)
    np.testing.assert_array_equal(ad.backward(ad.mean(ad.square(w)))[w], W / 2)


def test_backward_rejects_non_scalar():
    tape = ad.Tape()
    w = tape.param(np.ones((2, 2)))
    with pytest.raises(InputError):
        ad.backward(ad.square(w))


def test_unused_param_gets_zero_gradient():
    tape = ad.Tape()
    a = tape.param(np.ones((1, 3)))
    b = tape.param(np.ones((2, 2)))
    grads = ad.backward(ad.sum(a))
    assert np.array_equal(grads[b], np.zeros((2, 2)))


def test_relu_adjoint_mask():
    tape = ad.Tape()
    x = tape.param(np.array([[-1.0, 0.0, 2.0]]))
    g = ad.backward(ad.sum(ad.relu(x)))[x]
    assert g.tolist() == [[0.0, 0.0, 1.0]]


def test_bias_broadcast_gradient():
    tape = ad.Tape()
    x = tape.const(np.ones((5, 3)))
    b = tape.param(np.zeros(3))
    g = ad.backward(ad.sum(ad.add(x, b)))[b]
    assert g.tolist() == [5.0, 5.0, 5.0]


def test_pairwise_sq_dist_forward():
    z = make_rng(0).standard_normal((9, 4))
    tape = ad.Tape()
    sq = ad.pairwise_sq_dist(tape.param(z)).value
    np.testing.assert_allclose(sq, pairwise_distances(z) ** 2, atol=1e-9)


def _check(build, params, tol=1e-4):
    report = ad.grad_check(build, params, step=1e-5, tol=tol)
    assert report.passed, report
    return report


def test_pairwise_sq_dist_gradcheck():
    z = make_rng(1).standard_normal((6, 3))
    weights = make_rng(2).standard_normal((6, 6))
    _check(lambda t, p: ad.sum(ad.mul(ad.pairwise_sq_dist(p[0]), weights)), [z])


def test_batchnorm_gradcheck():
    rng = make_rng(3)
    x, g, b = rng.standard_normal((7, 4)), rng.uniform(0.5, 2, 4), rng.standard_normal(4)
    weights = rng.standard_normal((7, 4))

    def build(t, p):
        y, _, _ = ad.batchnorm(p[0], p[1], p[2])
        return ad.sum(ad.mul(ad.square(y), weights))

    _check(build, [x, g, b])


def test_sqrt_log_take_gradcheck():
    rng = make_rng(4)
    x = rng.uniform(0.5, 2.0, (3, 3))

    def build(t, p):
        s = ad.take(ad.sqrt(p[0]), [0, 1, 2], [2, 0, 1])
        return ad.sum(ad.log(ad.add(s, 1.0)))

    _check(build, [x])


def test_sqrt_derivative_clamped_at_zero():
    tape = ad.Tape()
    x = tape.param(np.zeros((1, 2)))
    g = ad.backward(ad.sum(ad.sqrt(x)))[x]
    assert np.all(np.isfinite(g))


def test_zero_parameter_grad_check():
    report = ad.grad_check(lambda t, p: ad.sum(t.const(np.ones((1, 1)))), [])
    assert report.passed and report.max_rel_error == []


def test_gradient_linearity():
    rng = make_rng(5)
    w0 = rng.standard_normal((4, 3))
    x = rng.standard_normal((6, 4))

    def grads(a, b):
        tape = ad.Tape()
        w = tape.param(w0)
        h = ad.matmul(x, w)
        l1 = ad.mean(ad.square(ad.relu(h)))
        l2 = ad.sum(ad.sqrt(ad.pairwise_sq_dist(h)))
        return ad.backward(ad.add(ad.scale(l1, a), ad.scale(l2, b)))[w]

    lin = 2.5 * grads(1.0, 0.0) - 0.7 * grads(0.0, 1.0)
    np.testing.assert_allclose(grads(2.5, -0.7), lin, atol=1e-9)


# -- network losses: b=8, D=5, hidden=[3] or [4], d=2 -------------------------------


def _net_case(kind, hidden=(3,), batchnorm=True, seed=0):
    rng = make_rng(100 + seed)
    X = rng.standard_normal((8, 5))
    E = X if kind != "mm_pca" else X[:, :3]
    cfg = TrainConfig(latent_dim=2, hidden=hidden, regularizer=kind if kind != "mm_pca" else "mm",
                      lam=0.7, batch_size=8, batchnorm=batchnorm)
    params = init_params(5, hidden, 2, batchnorm=batchnorm, seed=seed)
    # Zero biases can put a whole row of the bottleneck at 0, which makes
    # the next ReLU sit on its kink; check at a generic point instead.
    jitter = make_rng(200 + seed)
    for layer in params.layers:
        layer.bias = 0.1 * jitter.standard_normal(layer.bias.shape)

    def build(tape, pv):
        return total_loss(cfg, X, E, params, tape=tape, param_vars=pv).loss

    return build, params


@pytest.mark.parametrize("kind", ["none", "mm", "mm_pca", "spae", "topoae"])
@pytest.mark.parametrize("batchnorm", [True, False])
@pytest.mark.parametrize("hidden", [(3,), (4,)])
def test_network_losses_gradcheck(kind, batchnorm, hidden):
    build, params = _net_case(kind, hidden=hidden, batchnorm=batchnorm)
    _check(build, params)


def test_determinism_bitwise():
    build, params = _net_case("mm")

    def run():
        tape = ad.Tape()
        pv = [tape.param(a) for a in params.trainable()]
        g = ad.backward(build(tape, pv))
        return [g[v] for v in pv]

    for a, b in zip(run(), run()):
        assert np.array_equal(a, b)


def test_grad_check_reports_failure():
    # Deliberately wrong adjoint: claims d(x^2)/dx = x.
    def bad_square(a):
        return a.tape._push(a.value ** 2, (a.index,), lambda g: (g * a.value,))

    report = ad.grad_check(lambda t, p: ad.sum(bad_square(p[0])), [np.array([[1.0, 2.0]])])
    assert not report.passed


def test_grad_check_non_finite():
    report = ad.grad_check(lambda t, p: ad.sum(ad.scale(p[0], np.inf)), [np.ones((1, 1))])
    assert report.error is not None and not report.passed
