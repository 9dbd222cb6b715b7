"""
MLP autoencoder, regularized objectives, Adam and the minibatch training loop.

The encoder is ``D -> hidden[0] -> ... -> latent_dim`` and the decoder mirrors
it. Hidden layers are ``Linear -> BatchNorm -> ReLU`` (BatchNorm optional);
the bottleneck and output layers are linear.

The training objective is ``recon + lam * reg`` where ``reg`` is one of

- ``"mm"``: mean squared difference between latent and reference distance
  matrices over all ordered pairs,
- ``"spae"``: variance of log distance ratios,
- ``"topoae"``: squared distance gaps on the MST edges of both spaces,
- ``"none"``: plain autoencoder.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .datasets import PointCloud, format_float
from .exceptions import InputError, NumericalError
from .linalg import as_matrix, make_rng, pairwise_distances
from .losses import SPAE_EPS_FLOOR, spae_pairs, topo_pairs
from .reference import ReferenceEmbedding, fit_external, fit_identity, fit_pca

__all__ = [
    "REGULARIZERS",
    "TrainConfig",
    "Layer",
    "AutoencoderParams",
    "init_params",
    "identity_params",
    "encode",
    "decode",
    "Objective",
    "total_loss",
    "AdamState",
    "adam_step",
    "FitResult",
    "fit",
    "build_reference",
    "save_checkpoint",
    "load_checkpoint",
    "write_history_csv",
]

REGULARIZERS = ("none", "mm", "spae", "topoae")
CHECKPOINT_VERSION = 1
BN_MOMENTUM = 0.9


@dataclass
class TrainConfig:
    latent_dim: int = 2
    hidden: tuple = (128, 64)
    regularizer: str = "mm"
    lam: float = 1.0
    # Linear schedule from ``lam`` (first epoch) to ``lam_end`` (last epoch).
    lam_end: float | None = None
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-5
    epochs: int = 100
    seed: int = 0
    batchnorm: bool = True
    spae_eps: float = SPAE_EPS_FLOOR
    reference: dict = field(default_factory=lambda: {"kind": "identity"})

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self):
        if self.regularizer not in REGULARIZERS:
            raise InputError(f"regularizer must be one of {REGULARIZERS}")
        if self.latent_dim < 1 or any(h < 1 for h in self.hidden):
            raise InputError("layer widths must be positive")
        if self.lam < 0 or (self.lam_end is not None and self.lam_end < 0):
            raise InputError("lam must be >= 0")
        if self.batch_size < self.min_batch:
            raise InputError(f"batch_size must be >= {self.min_batch} for this configuration")
        if self.lr <= 0 or self.weight_decay < 0 or self.epochs < 0:
            raise InputError("need lr > 0, weight_decay >= 0, epochs >= 0")
        if not isinstance(self.reference, dict) or "kind" not in self.reference:
            raise InputError("reference must be a dict with a 'kind' key")

    @property
    def min_batch(self) -> int:
        if self.regularizer == "spae":
            return 3
        if self.regularizer != "none" or self.batchnorm:
            return 2
        return 1

    def lam_at(self, epoch: int) -> float:
        if self.lam_end is None or self.epochs <= 1:
            return float(self.lam)
        frac = epoch / (self.epochs - 1)
        return float(self.lam + (self.lam_end - self.lam) * frac)

    @property
    def uses_regularizer(self) -> bool:
        return self.regularizer != "none" and (self.lam > 0 or bool(self.lam_end))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# -- model -------------------------------------------------------------------


@dataclass
class Layer:
    weight: np.ndarray  # d_in x d_out
    bias: np.ndarray
    relu: bool = False
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None

    @property
    def has_bn(self) -> bool:
        return self.gamma is not None

    def trainable(self) -> list:
        out = [self.weight, self.bias]
        if self.has_bn:
            out += [self.gamma, self.beta]
        return out


@dataclass
class AutoencoderParams:
    encoder: list
    decoder: list

    @property
    def layers(self) -> list:
        return self.encoder + self.decoder

    @property
    def input_dim(self) -> int:
        return self.encoder[0].weight.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.encoder[-1].weight.shape[1]

    def trainable(self) -> list:
        return [a for layer in self.layers for a in layer.trainable()]

    def with_trainable(self, arrays: Sequence[np.ndarray]) -> "AutoencoderParams":
        it = iter(arrays)
        new = []
        for layer in self.layers:
            w, b = next(it), next(it)
            g = be = None
            if layer.has_bn:
                g, be = next(it), next(it)
            new.append(Layer(w, b, layer.relu, g, be,
                             _copy(layer.running_mean), _copy(layer.running_var)))
        k = len(self.encoder)
        return AutoencoderParams(new[:k], new[k:])

    def copy(self) -> "AutoencoderParams":
        return self.with_trainable([a.copy() for a in self.trainable()])


def _copy(a):
    return None if a is None else a.copy()


def _glorot(rng, d_in, d_out):
    a = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-a, a, size=(d_in, d_out))


def init_params(input_dim, hidden, latent_dim, batchnorm=True, seed=0) -> AutoencoderParams:
    """Glorot-uniform weights, zero biases, BatchNorm scale 1 / shift 0."""
    rng = make_rng(seed)
    enc_dims = [int(input_dim), *map(int, hidden), int(latent_dim)]
    dec_dims = enc_dims[::-1]

    def stack(dims):
        layers = []
        for i in range(len(dims) - 1):
            hidden_layer = i < len(dims) - 2
            layer = Layer(_glorot(rng, dims[i], dims[i + 1]), np.zeros(dims[i + 1]), relu=hidden_layer)
            if hidden_layer and batchnorm:
                w = dims[i + 1]
                layer.gamma, layer.beta = np.ones(w), np.zeros(w)
                layer.running_mean, layer.running_var = np.zeros(w), np.ones(w)
            layers.append(layer)
        return layers

    return AutoencoderParams(stack(enc_dims), stack(dec_dims))


def identity_params(dim) -> AutoencoderParams:
    """Single linear layer each way with identity weights: encode(x) = decode(x) = x."""
    eye = np.eye(dim)
    return AutoencoderParams([Layer(eye.copy(), np.zeros(dim))], [Layer(eye.copy(), np.zeros(dim))])


def _apply_eval(layers, h):
    for layer in layers:
        h = h @ layer.weight + layer.bias
        if layer.has_bn:
            h = (h - layer.running_mean) / np.sqrt(layer.running_var + ad.BN_EPS)
            h = h * layer.gamma + layer.beta
        if layer.relu:
            h = np.maximum(h, 0.0)
    return h


def encode(params: AutoencoderParams, X) -> np.ndarray:
    """Latent codes in evaluation mode (BatchNorm uses running statistics)."""
    X = as_matrix(X, "X")
    if X.shape[1] != params.input_dim:
        raise InputError(f"expected {params.input_dim} features, got {X.shape[1]}")
    return _apply_eval(params.encoder, X)


def decode(params: AutoencoderParams, Z) -> np.ndarray:
    Z = as_matrix(Z, "Z")
    if Z.shape[1] != params.latent_dim:
        raise InputError(f"expected {params.latent_dim} latent dims, got {Z.shape[1]}")
    return _apply_eval(params.decoder, Z)


# -- objective on the tape ------------------------------------------------------


@dataclass
class Objective:
    loss: ad.Var
    param_vars: list
    components: dict
    bn_stats: list  # (layer index, batch mean, batch var)
    z: ad.Var

    @property
    def tape(self) -> ad.Tape:
        return self.loss.tape

    @property
    def value(self) -> float:
        return float(self.loss.value.item())


def _forward_train(tape, params, X, param_vars):
    it = iter(param_vars)
    h = tape.const(X)
    stats = []
    z = None
    n_enc = len(params.encoder)
    for li, layer in enumerate(params.layers):
        w, b = next(it), next(it)
        h = ad.add(ad.matmul(h, w), b)
        if layer.has_bn:
            g, be = next(it), next(it)
            h, mu, var = ad.batchnorm(h, g, be)
            stats.append((li, mu, var))
        if layer.relu:
            h = ad.relu(h)
        if li == n_enc - 1:
            z = h
    return z, h, stats


def _latent_distances(z):
    return ad.sqrt(ad.pairwise_sq_dist(z))


def mm_term(z: ad.Var, D_E: np.ndarray) -> ad.Var:
    return ad.mean(ad.square(ad.sub(_latent_distances(z), D_E)))


def spae_term(z: ad.Var, D_E: np.ndarray, eps_floor=SPAE_EPS_FLOOR) -> ad.Var:
    iu, ju, _ = spae_pairs(D_E, eps_floor)
    if iu.size == 0:
        return ad.scale(ad.sum(z), 0.0)
    # log d_Z = 0.5 * log d_Z^2, avoiding a second floor through sqrt
    log_dz = ad.scale(ad.log(ad.take(ad.pairwise_sq_dist(z), iu, ju)), 0.5)
    logr = ad.sub(log_dz, np.log(D_E[iu, ju])[None, :])
    centered = ad.sub(logr, ad.mean(logr))
    return ad.mean(ad.square(centered))


def topoae_term(z: ad.Var, D_X: np.ndarray) -> ad.Var:
    D_Z = _latent_distances(z)
    (xi, xj), (zi, zj) = topo_pairs(D_X, D_Z.value)
    gap_x = ad.sub(ad.take(D_Z, xi, xj), D_X[xi, xj][None, :])
    gap_z = ad.sub(ad.take(D_Z, zi, zj), D_X[zi, zj][None, :])
    return ad.scale(ad.add(ad.sum(ad.square(gap_x)), ad.sum(ad.square(gap_z))), 0.5)


def regularizer_term(kind, z, E_batch, eps_floor=SPAE_EPS_FLOOR):
    D_E = pairwise_distances(E_batch)
    if kind == "mm":
        return mm_term(z, D_E)
    if kind == "spae":
        return spae_term(z, D_E, eps_floor)
    if kind == "topoae":
        return topoae_term(z, D_E)
    raise InputError(f"unknown regularizer {kind!r}")


def total_loss(config: TrainConfig, X_batch, E_batch, params: AutoencoderParams,
               *, lam=None, tape=None, param_vars=None) -> Objective:
    """Record ``recon + lam * reg`` for one batch on a fresh tape.

    ``lam`` defaults to ``config.lam``. With ``lam == 0`` or regularizer
    ``"none"`` the regularizer is not evaluated at all.
    """
    X_batch = as_matrix(X_batch, "X_batch")
    if X_batch.shape[1] != params.input_dim:
        raise InputError(f"expected {params.input_dim} features, got {X_batch.shape[1]}")
    lam = config.lam if lam is None else lam
    tape = ad.Tape() if tape is None else tape
    if param_vars is None:
        param_vars = [tape.param(a) for a in params.trainable()]
    z, xhat, stats = _forward_train(tape, params, X_batch, param_vars)
    b = X_batch.shape[0]
    recon = ad.scale(ad.sum(ad.square(ad.sub(xhat, X_batch))), 1.0 / b)
    components = {"recon": recon.value.item()}
    loss = recon
    if config.regularizer != "none":
        reg_value = 0.0
        if lam != 0:
            E_batch = as_matrix(E_batch, "E_batch")
            if E_batch.shape[0] != b:
                raise InputError("E_batch row count differs from X_batch")
            reg = regularizer_term(config.regularizer, z, E_batch, config.spae_eps)
            reg_value = reg.value.item()
            loss = ad.add(recon, ad.scale(reg, lam))
        components[config.regularizer] = reg_value
    components["total"] = loss.value.item()
    return Objective(loss, param_vars, components, stats, z)


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params, grads, state: AdamState, lr, weight_decay=0.0):
    """One bias-corrected Adam update with L2 weight decay folded into the gradient.

    Returns ``(new_params, new_state)``; the inputs are not modified.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InputError("params, grads and optimizer state differ in length")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise InputError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        g = g + weight_decay * p
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        new_p.append(p - lr * mhat / (np.sqrt(vhat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t, b1, b2, state.eps)


# -- training loop ---------------------------------------------------------------


@dataclass
class FitResult:
    config: TrainConfig
    params: AutoencoderParams
    adam: AdamState
    rng_state: dict
    epoch: int
    history: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    def history_columns(self) -> list:
        cols = ["epoch", "total", "recon"]
        if self.config.regularizer != "none":
            cols.append(self.config.regularizer)
        return cols + ["lam"]


def build_reference(spec: dict, train: PointCloud) -> ReferenceEmbedding:
    kind = spec.get("kind")
    extra = set(spec) - {"kind", "k", "path"}
    if extra:
        raise InputError(f"unknown reference keys: {sorted(extra)}")
    if kind == "identity":
        return fit_identity(train)
    if kind == "pca":
        if "k" not in spec:
            raise InputError("pca reference needs 'k'")
        return fit_pca(train, int(spec["k"]))
    if kind == "external":
        if "path" not in spec:
            raise InputError("external reference needs 'path'")
        return fit_external(spec["path"], n_rows=train.n)
    raise InputError(f"unknown reference kind {kind!r}")


def _batches(perm, batch_size, min_batch):
    out = [perm[i:i + batch_size] for i in range(0, perm.size, batch_size)]
    if out and out[-1].size < min_batch:
        out.pop()
    return out


def fit(config: TrainConfig, train: PointCloud, ref: ReferenceEmbedding | None = None,
        callbacks: Sequence[Callable] = (), resume: FitResult | None = None) -> FitResult:
    """Train an autoencoder with minibatch Adam.

    Each epoch shuffles the training rows with the run's seeded generator and
    walks them in batches of ``config.batch_size`` (a trailing batch smaller
    than the configuration's minimum is dropped). Reference rows for a batch
    are sliced from ``ref.E`` by the same indices.

    ``callbacks`` are called as ``cb(epoch, record)`` after each epoch.
    Passing ``resume`` continues a previous run up to ``config.epochs``; the
    result is bitwise identical to an uninterrupted run.

    Raises
    ------
    NumericalError
        If any loss component becomes non-finite; the message names the
        epoch, batch and component.
    """
    config.validate()
    X = train.points
    if ref is None and config.regularizer != "none":
        ref = build_reference(config.reference, train)
    if ref is not None and ref.E.shape[0] != train.n:
        raise InputError("reference row count does not match the training set")

    if resume is None:
        params = init_params(train.dim, config.hidden, config.latent_dim, config.batchnorm, config.seed)
        adam = AdamState.zeros_like(params.trainable())
        # Shuffling stream is separate from the initialization stream.
        rng = make_rng([config.seed, 1])
        history, seconds, start = [], [], 0
    else:
        params = resume.params.copy()
        adam = AdamState([m.copy() for m in resume.adam.m], [v.copy() for v in resume.adam.v],
                         resume.adam.t, resume.adam.beta1, resume.adam.beta2, resume.adam.eps)
        rng = make_rng(0)
        rng.bit_generator.state = _rng_state_from_json(resume.rng_state)
        history, seconds, start = list(resume.history), list(resume.epoch_seconds), resume.epoch

    use_reg = config.uses_regularizer
    for epoch in range(start, config.epochs):
        t0 = time.perf_counter()
        lam = config.lam_at(epoch)
        perm = rng.permutation(train.n)
        sums: dict = {}
        batches = _batches(perm, config.batch_size, config.min_batch)
        for bi, idx in enumerate(batches):
            E_b = ref.rows(idx) if (use_reg and ref is not None) else None
            obj = total_loss(config, X[idx], E_b, params, lam=lam if use_reg else 0.0)
            for name, val in obj.components.items():
                if not np.isfinite(val):
                    raise NumericalError(f"epoch {epoch}, batch {bi}: non-finite {name} loss ({val})")
                sums[name] = sums.get(name, 0.0) + val
            grads = ad.backward(obj.loss)
            arrays = params.trainable()
            new_arrays, adam = adam_step(arrays, [grads[v] for v in obj.param_vars], adam,
                                         config.lr, config.weight_decay)
            params = params.with_trainable(new_arrays)
            layers = params.layers
            for li, mu, var in obj.bn_stats:
                n_b = idx.size
                unbiased = var * n_b / max(n_b - 1, 1)
                layer = layers[li]
                layer.running_mean = BN_MOMENTUM * layer.running_mean + (1 - BN_MOMENTUM) * mu
                layer.running_var = BN_MOMENTUM * layer.running_var + (1 - BN_MOMENTUM) * unbiased
        nb = max(len(batches), 1)
        record = {"epoch": epoch, "total": sums.get("total", 0.0) / nb,
                  "recon": sums.get("recon", 0.0) / nb}
        if config.regularizer != "none":
            record[config.regularizer] = sums.get(config.regularizer, 0.0) / nb
        record["lam"] = lam if config.regularizer != "none" else 0.0
        history.append(record)
        seconds.append(time.perf_counter() - t0)
        for cb in callbacks:
            cb(epoch, dict(record))

    return FitResult(config, params, adam, _rng_state_to_json(rng.bit_generator.state),
                     max(start, config.epochs), history, seconds)


# -- persistence ------------------------------------------------------------------


def _rng_state_to_json(state):
    if isinstance(state, dict):
        return {k: _rng_state_to_json(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return {"__uint64__": [int(x) for x in state]}
    if isinstance(state, np.integer):
        return int(state)
    return state


def _rng_state_from_json(state):
    if isinstance(state, dict):
        if "__uint64__" in state:
            return np.array(state["__uint64__"], dtype=np.uint64)
        return {k: _rng_state_from_json(v) for k, v in state.items()}
    return state


def _arr(a):
    return None if a is None else np.asarray(a, dtype=np.float64).tolist()


def _unarr(a):
    return None if a is None else np.array(a, dtype=np.float64)


def save_checkpoint(path, result: FitResult) -> None:
    """JSON container: config echo, parameters, optimizer state, RNG state, history.

    Floats are written with Python's shortest round-trip repr, so loading
    restores every array bitwise. Wall-clock timings are left out so that
    re-running a seed yields the same bytes.
    """
    def layer_dict(layer):
        return {"weight": _arr(layer.weight), "bias": _arr(layer.bias), "relu": layer.relu,
                "gamma": _arr(layer.gamma), "beta": _arr(layer.beta),
                "running_mean": _arr(layer.running_mean), "running_var": _arr(layer.running_var)}

    doc = {
        "format": "mmae-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": result.config.to_dict(),
        "epoch": result.epoch,
        "encoder": [layer_dict(l) for l in result.params.encoder],
        "decoder": [layer_dict(l) for l in result.params.decoder],
        "adam": {"t": result.adam.t, "beta1": result.adam.beta1, "beta2": result.adam.beta2,
                 "eps": result.adam.eps, "m": [_arr(a) for a in result.adam.m],
                 "v": [_arr(a) for a in result.adam.v]},
        "rng_state": result.rng_state,
        "history": result.history,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> FitResult:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "mmae-checkpoint":
        raise InputError(f"{path} is not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {doc.get('version')}")

    def layer(d):
        return Layer(_unarr(d["weight"]), _unarr(d["bias"]), d["relu"], _unarr(d["gamma"]),
                     _unarr(d["beta"]), _unarr(d["running_mean"]), _unarr(d["running_var"]))

    a = doc["adam"]
    adam = AdamState([_unarr(x) for x in a["m"]], [_unarr(x) for x in a["v"]], a["t"],
                     a["beta1"], a["beta2"], a["eps"])
    params = AutoencoderParams([layer(d) for d in doc["encoder"]], [layer(d) for d in doc["decoder"]])
    return FitResult(TrainConfig.from_dict(doc["config"]), params, adam, doc["rng_state"],
                     doc["epoch"], doc["history"], [])


def write_history_csv(path, result: FitResult) -> None:
    cols = result.history_columns()
    lines = [",".join(cols)]
    for rec in result.history:
        cells = [str(rec["epoch"])] + [format_float(rec.get(c, 0.0)) for c in cols[1:]]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
