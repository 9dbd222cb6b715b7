import json

import numpy as np
import pytest

from mmae import autodiff as ad
from mmae.datasets import PointCloud, gen_nested_spheres, random_orthonormal
from mmae.exceptions import InputError, NumericalError
from mmae.linalg import make_rng
from mmae.losses import loss_mm, loss_recon, loss_spae, loss_topoae
from mmae.linalg import pairwise_distances
from mmae.reference import fit_pca
from mmae.train import (
    AdamState,
    _batches,
    Layer,
    AutoencoderParams,
    TrainConfig,
    adam_step,
    decode,
    encode,
    fit,
    identity_params,
    init_params,
    load_checkpoint,
    save_checkpoint,
    total_loss,
    write_history_csv,
)


def small_cloud(n=60, d=6, seed=0):
    rng = make_rng(seed)
    return PointCloud(rng.standard_normal((n, d)), np.arange(n) % 3)


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(InputError):
            TrainConfig.from_dict({"lamda": 1.0})

    def test_round_trip(self):
        cfg = TrainConfig(hidden=(8, 4), lam=0.3, reference={"kind": "pca", "k": 3})
        assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    @pytest.mark.parametrize("kw", [{"lam": -1}, {"regularizer": "rtd"},
                                    {"regularizer": "mm", "batch_size": 1},
                                    {"regularizer": "spae", "batch_size": 2}, {"lr": 0}])
    def test_invalid(self, kw):
        with pytest.raises(InputError):
            TrainConfig(**kw)

    def test_lam_schedule(self):
        cfg = TrainConfig(lam=4.0, lam_end=0.0, epochs=5)
        assert [cfg.lam_at(e) for e in range(5)] == [4.0, 3.0, 2.0, 1.0, 0.0]
        assert TrainConfig(lam=2.0).lam_at(3) == 2.0


class TestEncode:
    def test_zero_weights(self):
        p = init_params(4, (3,), 2, batchnorm=False)
        for layer in p.layers:
            layer.weight[:] = 0.0
        assert np.array_equal(encode(p, np.ones((5, 4))), np.zeros((5, 2)))

    def test_single_linear_layer(self):
        rng = make_rng(0)
        W, b, X = rng.standard_normal((4, 2)), rng.standard_normal(2), rng.standard_normal((6, 4))
        p = AutoencoderParams([Layer(W, b)], [Layer(W.T.copy(), np.zeros(4))])
        assert np.array_equal(encode(p, X), X @ W + b)

    def test_eval_determinism(self):
        p = init_params(5, (7, 3), 2)
        X = make_rng(1).standard_normal((9, 5))
        assert np.array_equal(encode(p, X), encode(p, X))

    def test_dim_mismatch(self):
        with pytest.raises(InputError):
            encode(init_params(5, (3,), 2), np.zeros((2, 4)))

    def test_symmetric_decoder(self):
        p = init_params(10, (8, 6), 2)
        enc = [l.weight.shape for l in p.encoder]
        dec = [l.weight.shape for l in p.decoder]
        assert enc == [(10, 8), (8, 6), (6, 2)]
        assert dec == [(2, 6), (6, 8), (8, 10)]
        assert [l.relu for l in p.encoder] == [True, True, False]

    def test_identity_params(self):
        X = make_rng(2).standard_normal((4, 3))
        p = identity_params(3)
        assert np.array_equal(decode(p, encode(p, X)), X)


class TestTotalLoss:
    def setup_method(self):
        rng = make_rng(3)
        self.X = rng.standard_normal((10, 5))
        self.params = init_params(5, (6,), 2, batchnorm=False, seed=1)

    def _z_xhat(self):
        return encode(self.params, self.X), decode(self.params, encode(self.params, self.X))

    def test_lambda_zero_is_recon(self):
        a = total_loss(TrainConfig(regularizer="mm", lam=0.0), self.X, self.X, self.params)
        b = total_loss(TrainConfig(regularizer="none", lam=0.0), self.X, None, self.params)
        assert a.value == b.value
        z, xhat = self._z_xhat()
        assert a.value == pytest.approx(loss_recon(self.X, xhat), abs=1e-12)

    def test_components_match_array_losses(self):
        z, xhat = self._z_xhat()
        E = self.X[:, :3]
        for kind, ref in [("mm", loss_mm(z, E)), ("spae", loss_spae(z, E)),
                          ("topoae", loss_topoae(pairwise_distances(E), pairwise_distances(z)))]:
            obj = total_loss(TrainConfig(regularizer=kind, lam=0.5, batch_size=10), self.X, E,
                             self.params)
            assert obj.components[kind] == pytest.approx(ref, rel=1e-10, abs=1e-12)
            assert obj.value == pytest.approx(obj.components["recon"] + 0.5 * ref, rel=1e-12)

    def test_matching_distances_leave_recon(self):
        z, _ = self._z_xhat()
        obj = total_loss(TrainConfig(regularizer="mm", lam=1.0), self.X, z, self.params)
        assert obj.components["mm"] < 1e-20
        assert obj.value == pytest.approx(obj.components["recon"], rel=1e-12)

    def test_e_row_mismatch(self):
        with pytest.raises(InputError):
            total_loss(TrainConfig(regularizer="mm"), self.X, self.X[:4], self.params)


class TestAdam:
    def test_zero_gradient(self):
        p = [np.array([[1.0, -2.0]])]
        new, _ = adam_step(p, [np.zeros((1, 2))], AdamState.zeros_like(p), 0.1, 0.0)
        assert np.array_equal(new[0], p[0])

    def test_first_step(self):
        p = [np.array([[1.0]])]
        new, st = adam_step(p, [np.array([[1.0]])], AdamState.zeros_like(p), 0.1)
        assert new[0][0, 0] == pytest.approx(0.9, abs=1e-7) and st.t == 1

    def test_weight_decay_enters_gradient(self):
        p = [np.array([[2.0]])]
        new, st = adam_step(p, [np.zeros((1, 1))], AdamState.zeros_like(p), 0.1, 0.5)
        assert st.m[0][0, 0] == pytest.approx(0.1 * 0.5 * 2.0)
        assert new[0][0, 0] < 2.0

    def test_quadratic_descent(self):
        A = np.diag([1.0, 3.0])
        theta = [np.array([[2.0, -1.5]])]
        state = AdamState.zeros_like(theta)
        losses = []
        for _ in range(100):
            t = theta[0]
            losses.append((t @ A @ t.T).item())
            theta, state = adam_step(theta, [2 * t @ A], state, 0.01)
        assert all(b <= a for a, b in zip(losses[5:], losses[6:]))

    def test_inputs_not_mutated(self):
        p = [np.ones((2, 2))]
        g = [np.ones((2, 2))]
        st = AdamState.zeros_like(p)
        adam_step(p, g, st, 0.1)
        assert np.array_equal(p[0], np.ones((2, 2))) and st.t == 0 and not st.m[0].any()


class TestFit:
    def test_zero_epochs(self):
        cloud = small_cloud()
        cfg = TrainConfig(hidden=(4,), epochs=0, batch_size=16, seed=5)
        res = fit(cfg, cloud)
        init = init_params(6, (4,), 2, True, 5)
        assert all(np.array_equal(a, b) for a, b in zip(res.params.trainable(), init.trainable()))
        assert res.history == []

    def test_determinism(self):
        cloud = small_cloud()
        cfg = TrainConfig(hidden=(8,), epochs=3, batch_size=16, seed=2)
        a, b = fit(cfg, cloud), fit(cfg, cloud)
        assert a.history == b.history
        assert all(np.array_equal(x, y) for x, y in zip(a.params.trainable(), b.params.trainable()))

    def test_linear_autoencoder(self):
        rng = make_rng(0)
        x = rng.standard_normal((256, 2)) @ random_orthonormal(rng, 10, 2).T
        cfg = TrainConfig(latent_dim=2, hidden=(), regularizer="none", lam=0.0, batch_size=32,
                          lr=1e-2, weight_decay=0.0, epochs=150, batchnorm=False)
        res = fit(cfg, PointCloud(x))
        assert res.history[-1]["recon"] < 1e-3

    def test_history_columns(self):
        cloud = small_cloud()
        for kind in ("none", "mm", "spae", "topoae"):
            res = fit(TrainConfig(hidden=(4,), regularizer=kind, epochs=1, batch_size=20), cloud)
            assert list(res.history[0]) == res.history_columns()

    def test_lambda_zero_history(self, tmp_path):
        res = fit(TrainConfig(hidden=(4,), lam=0.0, epochs=2, batch_size=20), small_cloud())
        assert all(r["mm"] == 0.0 for r in res.history)

    def test_trailing_batch_dropped(self):
        sizes = [b.size for b in _batches(np.arange(41), 20, 3)]
        assert sizes == [20, 20]
        assert [b.size for b in _batches(np.arange(43), 20, 3)] == [20, 20, 3]

    def test_callbacks(self):
        seen = []
        fit(TrainConfig(hidden=(4,), epochs=3, batch_size=30), small_cloud(),
            callbacks=[lambda e, rec: seen.append(e)])
        assert seen == [0, 1, 2]

    def test_pca_reference(self):
        cloud = small_cloud()
        ref = fit_pca(cloud, 3)
        res = fit(TrainConfig(hidden=(4,), epochs=1, batch_size=20), cloud, ref=ref)
        assert np.isfinite(res.history[0]["mm"])
        cfg = TrainConfig(hidden=(4,), epochs=1, batch_size=20, reference={"kind": "pca", "k": 3})
        assert fit(cfg, cloud).history == res.history

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_diagnostic(self):
        cloud = PointCloud(np.full((20, 3), 1e200))
        with pytest.raises(NumericalError, match=r"epoch 0, batch 0: non-finite"):
            fit(TrainConfig(hidden=(4,), epochs=1, batch_size=10, batchnorm=False), cloud)

    def test_resume_equivalence(self, tmp_path):
        cloud = gen_nested_spheres(n_per_sphere=8, n_small=3, d=6, seed=1)
        cfg = TrainConfig(hidden=(8,), epochs=4, batch_size=16, seed=3)
        full = fit(cfg, cloud)
        half = fit(TrainConfig.from_dict({**cfg.to_dict(), "epochs": 2}), cloud)
        save_checkpoint(tmp_path / "ck.json", half)
        resumed = fit(cfg, cloud, resume=load_checkpoint(tmp_path / "ck.json"))
        assert resumed.history == full.history
        assert all(np.array_equal(a, b) for a, b in
                   zip(resumed.params.trainable(), full.params.trainable()))
        write_history_csv(tmp_path / "a.csv", full)
        write_history_csv(tmp_path / "b.csv", resumed)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_checkpoint_round_trip(tmp_path):
    res = fit(TrainConfig(hidden=(5,), epochs=2, batch_size=20), small_cloud())
    save_checkpoint(tmp_path / "c.json", res)
    back = load_checkpoint(tmp_path / "c.json")
    assert back.config == res.config and back.epoch == 2 and back.history == res.history
    for a, b in zip(back.params.layers, res.params.layers):
        for name in ("weight", "bias", "gamma", "beta", "running_mean", "running_var"):
            assert np.array_equal(getattr(a, name), getattr(b, name))
    assert all(np.array_equal(a, b) for a, b in zip(back.adam.v, res.adam.v))


def test_checkpoint_rejects_other_json(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(InputError):
        load_checkpoint(tmp_path / "x.json")


def test_tape_gradient_matches_fd_for_mm():
    build_params = init_params(4, (3,), 2, batchnorm=False, seed=4)
    for layer in build_params.layers:
        layer.bias = 0.1 * make_rng(9).standard_normal(layer.bias.shape)
    X = make_rng(8).standard_normal((6, 4))
    cfg = TrainConfig(hidden=(3,), lam=2.0, batchnorm=False)

    def build(tape, pv):
        return total_loss(cfg, X, X, build_params, tape=tape, param_vars=pv).loss

    assert ad.grad_check(build, build_params).passed
