"""DeepKriging network: MLP blocks (affine, batch-norm, ReLU, dropout) with a
linear output, trained by mini-batch Adam with validation early stopping.

Everything is plain numpy. Parameters are exposed as a flat list of arrays
(:meth:`MlpModel.params`) so the optimizer and the gradient checks can
treat them uniformly; :func:`backward` returns gradients in that order.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, InvalidArgumentError

HUBER_DELTA = 1.345


@dataclass(frozen=True)
class Loss:
    kind: str = "mse"  # "mse" | "huber"
    delta: float = HUBER_DELTA

    def __post_init__(self):
        if self.kind not in ("mse", "huber"):
            raise InvalidArgumentError(f"unknown loss {self.kind!r}")
        if self.kind == "huber" and not self.delta > 0:
            raise InvalidArgumentError("Huber delta must be positive")


MSE = Loss("mse")
HUBER = Loss("huber", HUBER_DELTA)


def loss_value(loss: Loss, residual):
    """Per-observation loss: ``r^2`` for MSE, Huber otherwise."""
    r = np.asarray(residual, dtype=float)
    if loss.kind == "mse":
        out = r * r
    else:
        a = np.abs(r)
        d = loss.delta
        out = np.where(a <= d, 0.5 * r * r, d * (a - 0.5 * d))
    return float(out) if out.ndim == 0 else out


def loss_derivative(loss: Loss, residual) -> np.ndarray:
    r = np.asarray(residual, dtype=float)
    if loss.kind == "mse":
        return 2.0 * r
    return np.clip(r, -loss.delta, loss.delta)


def risk(loss: Loss, targets, predictions) -> float:
    return float(np.mean(loss_value(loss, np.asarray(targets) - np.asarray(predictions))))


@dataclass
class DenseBlock:
    weight: np.ndarray  # (d_out, d_in)
    bias: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    run_mean: np.ndarray
    run_var: np.ndarray


@dataclass
class MlpModel:
    blocks: list[DenseBlock]
    out_weight: np.ndarray  # (1, d_L)
    out_bias: np.ndarray  # shape (1,)
    input_dim: int
    bn_eps: float = 1e-5

    def params(self) -> list[np.ndarray]:
        out = []
        for b in self.blocks:
            out += [b.weight, b.bias, b.gamma, b.beta]
        out += [self.out_weight, self.out_bias]
        return out

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.blocks)):
            names += [f"block{i}.weight", f"block{i}.bias", f"block{i}.gamma", f"block{i}.beta"]
        return names + ["out.weight", "out.bias"]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


def init_mlp(input_dim: int, widths: Sequence[int], rng: np.random.Generator,
             bn_eps: float = 1e-5) -> MlpModel:
    """He-uniform hidden weights, zero output layer, identity batch-norm.

    The zero output layer makes the untrained network predict the
    (standardized) target mean exactly.
    """
    if input_dim < 1:
        raise InvalidArgumentError("input_dim must be >= 1")
    blocks = []
    d_in = input_dim
    for d in widths:
        lim = math.sqrt(6.0 / d_in)
        blocks.append(DenseBlock(
            weight=rng.uniform(-lim, lim, size=(d, d_in)),
            bias=np.zeros(d),
            gamma=np.ones(d),
            beta=np.zeros(d),
            run_mean=np.zeros(d),
            run_var=np.ones(d),
        ))
        d_in = d
    return MlpModel(blocks, np.zeros((1, d_in)), np.zeros(1), input_dim, bn_eps)


@dataclass
class ForwardCache:
    x: np.ndarray
    layers: list[dict] = field(default_factory=list)
    h_last: np.ndarray | None = None
    batch_stats: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


def forward(model: MlpModel, x, mode: str = "infer", dropout_rate: float = 0.0,
            rng: np.random.Generator | None = None, dropout_seed: int | None = None,
            return_cache: bool = False):
    """Network output for a feature matrix.

    ``mode="train"`` normalizes with batch statistics and applies inverted
    dropout after each ReLU (mask drawn from ``rng``, or from
    ``dropout_seed`` when a reproducible mask is needed). ``mode="infer"``
    uses the running statistics and no dropout.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise InvalidArgumentError(f"expected width {model.input_dim}, got shape {x.shape}")
    train = mode == "train"
    if mode not in ("train", "infer"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    if train and x.shape[0] < 2:
        raise InvalidArgumentError("train mode needs a batch of at least 2 rows")
    if train and dropout_rate > 0 and rng is None:
        rng = np.random.default_rng(dropout_seed)
    cache = ForwardCache(x)
    h = x
    eps = model.bn_eps
    for blk in model.blocks:
        pre = h @ blk.weight.T + blk.bias
        if train:
            mu = pre.mean(axis=0)
            var = pre.var(axis=0)
        else:
            mu, var = blk.run_mean, blk.run_var
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (pre - mu) * inv_std
        bn = blk.gamma * xhat + blk.beta
        act = np.maximum(bn, 0.0)
        mask = None
        if train and dropout_rate > 0:
            keep = 1.0 - dropout_rate
            mask = (rng.random(act.shape) < keep) / keep
            out = act * mask
        else:
            out = act
        if return_cache:
            cache.layers.append(dict(h_in=h, xhat=xhat, inv_std=inv_std, bn=bn, mask=mask))
        if train:
            cache.batch_stats.append((mu, pre.var(axis=0, ddof=1)))
        h = out
    cache.h_last = h
    y = h @ model.out_weight[0] + model.out_bias[0]
    return (y, cache) if return_cache else y


def backward(model: MlpModel, cache: ForwardCache, targets, loss: Loss):
    """Batch risk and its exact gradient for every trainable parameter.

    ``cache`` must come from a train-mode forward pass with
    ``return_cache=True``; gradients flow through the batch statistics.
    """
    targets = np.asarray(targets, dtype=float)
    h = cache.h_last
    yhat = h @ model.out_weight[0] + model.out_bias[0]
    n = targets.shape[0]
    r = targets - yhat
    batch_risk = float(np.mean(loss_value(loss, r)))
    dy = -loss_derivative(loss, r) / n
    grads_rev = [np.array([dy.sum()]), (dy @ h)[None, :]]
    dh = np.outer(dy, model.out_weight[0])
    for blk, lay in zip(reversed(model.blocks), reversed(cache.layers)):
        if lay["mask"] is not None:
            dh = dh * lay["mask"]
        dbn = dh * (lay["bn"] > 0.0)
        xhat = lay["xhat"]
        dgamma = np.sum(dbn * xhat, axis=0)
        dbeta = np.sum(dbn, axis=0)
        dxhat = dbn * blk.gamma
        m = dxhat.shape[0]
        dpre = (lay["inv_std"] / m) * (
            m * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
        )
        dw = dpre.T @ lay["h_in"]
        db = dpre.sum(axis=0)
        grads_rev += [dbeta, dgamma, db, dw]
        dh = dpre @ blk.weight
    return batch_risk, grads_rev[::-1]


@dataclass
class TrainConfig:
    loss: Loss = MSE
    hidden: tuple[int, ...] = (100, 100, 100)
    epochs_max: int = 500
    batch_size: int = 256
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout_rate: float = 0.2
    patience: int = 50
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidArgumentError("dropout_rate must be in [0, 1)")
        if self.epochs_max < 1 or self.patience < 0:
            raise InvalidArgumentError("epochs_max >= 1 and patience >= 0 required")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update; ``params`` and ``state`` change in place."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


@dataclass
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


@dataclass
class TrainedPredictor:
    model: MlpModel
    best_val_risk: float
    best_epoch: int
    history: list[tuple[float, float]]
    loss: Loss = MSE
    x_shift: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    y_shift: float = 0.0
    y_scale: float = 1.0

    def predict(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if self.x_shift is not None:
            x = (x - self.x_shift) / self.x_scale
        return forward(self.model, x, "infer") * self.y_scale + self.y_shift


def _standardizers(x: np.ndarray, y: np.ndarray, on: bool):
    if not on:
        return np.zeros(x.shape[1]), np.ones(x.shape[1]), 0.0, 1.0
    # centre each column but share one scale: a per-column scale would blow
    # up features that are almost constant on the training rows (sparse
    # compact-support bases) yet vary at prediction points
    xs = x.mean(axis=0)
    rms = float(np.sqrt(np.mean((x - xs) ** 2)))
    xsc = np.full(x.shape[1], rms if rms > 1e-12 else 1.0)
    ys = float(y.mean())
    ysc = float(y.std())
    if not ysc > 1e-12:
        ysc = 1.0
    return xs, xsc, ys, ysc


def train(features, targets, split: SplitIndices, config: TrainConfig = TrainConfig()) -> TrainedPredictor:
    """Mini-batch Adam with early stopping on the validation risk.

    Targets are standardized with training-set moments and inputs are
    centred and divided by one shared scale. The loss is still the one
    defined on data-scale residuals: the Huber threshold is divided by
    the target scale internally, and reported risks are multiplied back
    by its square. The returned model carries the weights of the epoch
    with the lowest validation risk, not the last epoch.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    tr = np.asarray(split.train, dtype=int)
    va = np.asarray(split.val, dtype=int)
    if tr.size == 0 or va.size == 0:
        raise InvalidArgumentError("train and validation sets must be non-empty")
    if np.intersect1d(tr, va).size:
        raise InvalidArgumentError("train and validation sets overlap")
    if tr.size < 2:
        raise InvalidArgumentError("need at least 2 training rows for batch-norm")

    xs, xsc, ys, ysc = _standardizers(x[tr], y[tr], config.standardize)
    xtr = (x[tr] - xs) / xsc
    ytr = (y[tr] - ys) / ysc
    xva = (x[va] - xs) / xsc
    yva = (y[va] - ys) / ysc
    # Huber_delta(c r) = c^2 Huber_{delta/c}(r), MSE(c r) = c^2 MSE(r)
    loss = config.loss
    if loss.kind == "huber":
        loss = Loss("huber", loss.delta / ysc)
    unit = ysc * ysc

    rng = np.random.default_rng(config.seed)
    model = init_mlp(x.shape[1], config.hidden, rng, config.bn_eps)
    params = model.params()
    state = AdamState.zeros_like(params)
    mom = config.bn_momentum
    n_tr = tr.size
    bs = max(2, min(config.batch_size, n_tr))

    best = model.copy()
    best_risk = math.inf
    best_epoch = -1
    history: list[tuple[float, float]] = []
    for epoch in range(config.epochs_max):
        order = rng.permutation(n_tr)
        starts = list(range(0, n_tr, bs))
        if n_tr - starts[-1] < 2 and len(starts) > 1:
            starts.pop()
        bounds = starts[1:] + [n_tr]
        risk_sum = 0.0
        for s, e in zip(starts, bounds):
            idx = order[s:e]
            _, cache = forward(model, xtr[idx], "train", config.dropout_rate, rng=rng,
                               return_cache=True)
            batch_risk, grads = backward(model, cache, ytr[idx], loss)
            if not math.isfinite(batch_risk):
                raise DivergenceError("non-finite training loss", epoch)
            adam_step(params, grads, state, config.learning_rate, config.adam_beta1,
                      config.adam_beta2, config.adam_eps)
            for blk, (mu, var) in zip(model.blocks, cache.batch_stats):
                blk.run_mean *= 1.0 - mom
                blk.run_mean += mom * mu
                blk.run_var *= 1.0 - mom
                blk.run_var += mom * var
            risk_sum += batch_risk * idx.size
        val_risk = unit * risk(loss, yva, forward(model, xva, "infer"))
        if not math.isfinite(val_risk):
            raise DivergenceError("non-finite validation loss", epoch)
        history.append((unit * risk_sum / n_tr, val_risk))
        if val_risk < best_risk:
            best_risk, best_epoch = val_risk, epoch
            best = model.copy()
        elif epoch - best_epoch >= max(1, config.patience):
            break
    return TrainedPredictor(best, best_risk, best_epoch, history, config.loss,
                            xs, xsc, ys, ysc)


def select_k(candidates: Sequence[int], features_for_k: Callable[[int], np.ndarray], targets,
             split: SplitIndices, config: TrainConfig = TrainConfig()):
    """Train one predictor per candidate basis size; keep the lowest validation risk.

    Ties go to the smaller ``K``. Returns ``(k_hat, predictor, risks)`` where
    ``risks`` maps each candidate to its best validation risk.
    """
    cands = sorted(set(int(k) for k in candidates))
    if not cands:
        raise InvalidArgumentError("candidate set is empty")
    best_k, best_pred = None, None
    risks = {}
    for k in cands:
        pred = train(features_for_k(k), targets, split, config)
        risks[k] = pred.best_val_risk
        if best_pred is None or pred.best_val_risk < best_pred.best_val_risk:
            best_k, best_pred = k, pred
    return best_k, best_pred, risks
