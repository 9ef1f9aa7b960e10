"""Toy attention + Chebyshev graph forecaster.

One spatiotemporal block: temporal attention, spatial attention, Chebyshev
graph convolution masked by the spatial attention, a width-3 temporal
convolution and a linear head mapping the window to ``T_out`` future steps.

Inputs are windows ``z`` of shape ``(N, C, T_w)`` or batches ``(B, N, C, T_w)``
where ``C = K + d`` (mode channels plus auxiliary channels).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InvalidInputError, TrainingFailure
from .graph import Graph, chebyshev_basis
from .optim import Adam
from .signal import SplitConfig

SCHEMA_VERSION = 1

ATTENTION_FIELDS = ("V_s", "b_s", "W1", "W2", "W3", "V_e", "b_e", "V1", "V2", "V3")


@dataclass
class AttentionParams:
    V_s: np.ndarray  # (N, N)
    b_s: np.ndarray  # (N, N)
    W1: np.ndarray  # (T_w,)
    W2: np.ndarray  # (C, T_w)
    W3: np.ndarray  # (C,)
    V_e: np.ndarray  # (T_w, T_w)
    b_e: np.ndarray  # (T_w, T_w)
    V1: np.ndarray  # (N,)
    V2: np.ndarray  # (N, C)
    V3: np.ndarray  # (C,)

    @classmethod
    def zeros(cls, N: int, C: int, T_w: int) -> "AttentionParams":
        shapes = attention_shapes(N, C, T_w)
        return cls(**{name: np.zeros(shape) for name, shape in shapes.items()})

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in ATTENTION_FIELDS}


@dataclass
class ChebParams:
    theta: np.ndarray  # (M, C_in, C_out)

    @property
    def order(self) -> int:
        return self.theta.shape[0]


def attention_shapes(N: int, C: int, T_w: int) -> dict:
    return {"V_s": (N, N), "b_s": (N, N), "W1": (T_w,), "W2": (C, T_w), "W3": (C,),
            "V_e": (T_w, T_w), "b_e": (T_w, T_w), "V1": (N,), "V2": (N, C), "V3": (C,)}


def _check_shapes(arrays: dict, expected: dict) -> None:
    for name, shape in expected.items():
        got = np.shape(arrays[name])
        if tuple(got) != tuple(shape):
            raise InvalidInputError(f"{name}: expected shape {tuple(shape)}, got {tuple(got)}")


def _batched(z):
    z = np.asarray(z, dtype=float)
    if z.ndim == 3:
        return z[None], True
    if z.ndim == 4:
        return z, False
    raise InvalidInputError(f"feature tensor must be (N, C, T_w) or (B, N, C, T_w), got shape {z.shape}")


# Tape-level building blocks. ``p`` maps parameter names to Var; ``z`` is a Var
# of shape (B, N, C, T).

def _temporal_attention(z, p):
    lhs = ad.einsum("bnct,n->btc", z, p["V1"])
    lhs = ad.einsum("btc,nc->btn", lhs, p["V2"])
    rhs = ad.einsum("c,bnct->bnt", p["V3"], z)
    logits = ad.einsum("btn,bns->bts", lhs, rhs) + p["b_e"]
    E = ad.einsum("ts,bsu->btu", p["V_e"], ad.sigmoid(logits))
    E_norm = ad.softmax(E, axis=-1)
    z_adj = ad.einsum("bncs,bst->bnct", z, E_norm)
    return E_norm, z_adj


def _spatial_attention(z, p):
    lhs = ad.einsum("bnct,t->bnc", z, p["W1"])
    lhs = ad.einsum("bnc,ct->bnt", lhs, p["W2"])
    rhs = ad.einsum("c,bmct->bmt", p["W3"], z)
    logits = ad.einsum("bnt,bmt->bnm", lhs, rhs) + p["b_s"]
    S = ad.einsum("nk,bkm->bnm", p["V_s"], ad.sigmoid(logits))
    return ad.softmax(S, axis=-1)


def _cheb_conv(z, basis, S_norm, theta):
    masked = ad.einsum("mnk,bnk->bmnk", basis, S_norm)
    mixed = ad.einsum("bmnk,bkct->bmnct", masked, z)
    out = ad.einsum("bmnct,mco->bnot", mixed, theta)
    return ad.relu(out)


def _shift_matrix(T: int) -> np.ndarray:
    # shift[j, t, s] = 1 where input step t feeds output step s through tap j
    shift = np.zeros((3, T, T))
    for j in range(3):
        for s in range(T):
            t = s + j - 1
            if 0 <= t < T:
                shift[j, t, s] = 1.0
    return shift


def _forward(z, p, basis, shift):
    _, z_adj = _temporal_attention(z, p)
    S_norm = _spatial_attention(z_adj, p)
    h = _cheb_conv(z_adj, basis, S_norm, p["theta"])
    taps = ad.einsum("bnct,jts->bncjs", h, shift)
    h = ad.einsum("ocj,bncjs->bnos", p["W_time"], taps) + ad.einsum("o,s->os", p["b_time"], np.ones(shift.shape[1]))
    h = ad.relu(h)
    return ad.einsum("pos,bnos->bnp", p["W_head"], h) + p["b_head"]


def _vars(arrays: dict) -> dict:
    return {name: ad.Var(value, name=name) for name, value in arrays.items()}


def spatial_attention(z, p: AttentionParams) -> np.ndarray:
    """Row-stochastic node-node attention ``softmax_rows(V_s sigmoid(...) + ...)``."""
    zb, single = _batched(z)
    _, N, C, T = zb.shape
    _check_shapes(p.as_dict(), attention_shapes(N, C, T))
    out = _spatial_attention(ad.Var(zb), _vars(p.as_dict())).value
    return out[0] if single else out


def temporal_attention(z, p: AttentionParams):
    """Row-stochastic time-time attention and the time-reweighted features.

    Returns ``(E_norm, z_adjusted)`` with ``z_adjusted[n, c, t] = sum_s z[n, c, s] E_norm[s, t]``.
    """
    zb, single = _batched(z)
    _, N, C, T = zb.shape
    _check_shapes(p.as_dict(), attention_shapes(N, C, T))
    E, z_adj = _temporal_attention(ad.Var(zb), _vars(p.as_dict()))
    if single:
        return E.value[0], z_adj.value[0]
    return E.value, z_adj.value


def cheb_conv(z_adjusted, graph: Graph, S_norm, cheb: ChebParams) -> np.ndarray:
    """``relu(sum_m (T_m(L_hat) * S') z_t theta_m)`` for every time step."""
    zb, single = _batched(z_adjusted)
    S = np.asarray(S_norm, dtype=float)
    if S.ndim == 2:
        S = np.broadcast_to(S, (zb.shape[0],) + S.shape)
    basis = chebyshev_basis(graph.laplacian_scaled, cheb.order)
    if cheb.theta.shape[1] != zb.shape[2]:
        raise InvalidInputError(f"theta: expected {zb.shape[2]} input channels, got {cheb.theta.shape[1]}")
    out = _cheb_conv(ad.Var(zb), basis, ad.Var(S), ad.Var(cheb.theta)).value
    return out[0] if single else out


@dataclass(frozen=True)
class ForecastConfig:
    cheb_order: int = 3
    cheb_channels: int = 16
    time_channels: int = 16
    T_w: int = 12
    T_out: int = 12
    learning_rate: float = 1e-3
    max_epochs: int = 100
    early_stop_patience: int = 10
    batch_size: int = 16
    seed: int = 0
    split: SplitConfig = SplitConfig(0.6, 0.2, 0.2)
    init_scale: float = 1.0

    def __post_init__(self):
        for name in ("cheb_order", "cheb_channels", "time_channels", "T_w", "T_out", "max_epochs",
                     "early_stop_patience", "batch_size"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"must be an integer >= 1, got {value}", name)
        if not self.learning_rate > 0:
            raise ConfigError(f"must be > 0, got {self.learning_rate}", "learning_rate")
        chebyshev_basis(np.zeros((1, 1)), self.cheb_order)


@dataclass
class ForecasterParams:
    arrays: dict
    n_nodes: int
    n_channels: int
    T_w: int
    T_out: int

    @classmethod
    def init(cls, N: int, C: int, cfg: ForecastConfig, seed: int | None = None) -> "ForecasterParams":
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        s = cfg.init_scale
        T, M, F, G, P = cfg.T_w, cfg.cheb_order, cfg.cheb_channels, cfg.time_channels, cfg.T_out

        def normal(shape, fan_in):
            return rng.normal(0.0, s / np.sqrt(fan_in), size=shape)

        arrays = {
            "V_s": normal((N, N), N), "b_s": np.zeros((N, N)),
            "W1": normal((T,), T), "W2": normal((C, T), C), "W3": normal((C,), C),
            "V_e": normal((T, T), T), "b_e": np.zeros((T, T)),
            "V1": normal((N,), N), "V2": normal((N, C), N), "V3": normal((C,), C),
            "theta": normal((M, C, F), M * C),
            "W_time": normal((G, F, 3), 3 * F), "b_time": np.zeros(G),
            "W_head": normal((P, G, T), G * T), "b_head": np.zeros(P),
        }
        return cls(arrays, N, C, T, P)

    @property
    def attention(self) -> AttentionParams:
        return AttentionParams(**{name: self.arrays[name] for name in ATTENTION_FIELDS})

    @property
    def cheb(self) -> ChebParams:
        return ChebParams(self.arrays["theta"])

    def copy(self) -> "ForecasterParams":
        return ForecasterParams({k: v.copy() for k, v in self.arrays.items()}, self.n_nodes,
                                self.n_channels, self.T_w, self.T_out)

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))

    def save(self, path) -> None:
        payload = {"schema": SCHEMA_VERSION, "kind": "forecaster-params", "n_nodes": self.n_nodes,
                   "n_channels": self.n_channels, "T_w": self.T_w, "T_out": self.T_out,
                   "arrays": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                              for k, v in self.arrays.items()}}
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path) -> "ForecasterParams":
        data = json.loads(Path(path).read_text())
        if data.get("kind") != "forecaster-params" or data.get("schema") != SCHEMA_VERSION:
            raise InvalidInputError(f"{path}: not a forecaster parameter file of schema {SCHEMA_VERSION}")
        arrays = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in data["arrays"].items()}
        return cls(arrays, data["n_nodes"], data["n_channels"], data["T_w"], data["T_out"])


def _prepare(window, graph: Graph, params: ForecasterParams):
    zb, single = _batched(window)
    _, N, C, T = zb.shape
    if (N, C, T) != (params.n_nodes, params.n_channels, params.T_w):
        raise InvalidInputError(
            f"window: expected (N, C, T_w) = {(params.n_nodes, params.n_channels, params.T_w)}, got {(N, C, T)}")
    if graph.n_nodes != N:
        raise InvalidInputError(f"graph: expected {N} nodes, got {graph.n_nodes}")
    basis = chebyshev_basis(graph.laplacian_scaled, params.arrays["theta"].shape[0])
    return zb, single, basis, _shift_matrix(T)


def forecaster_forward(window, graph: Graph, params: ForecasterParams) -> np.ndarray:
    """Predictions ``(N, T_out)`` (or ``(B, N, T_out)`` for a batch)."""
    zb, single, basis, shift = _prepare(window, graph, params)
    out = _forward(ad.Var(zb), _vars(params.arrays), basis, shift).value
    return out[0] if single else out


def loss_and_grads(windows, targets, graph: Graph, params: ForecasterParams):
    """MAE over a batch and its gradients with respect to every parameter array."""
    zb, _, basis, shift = _prepare(windows, graph, params)
    targets = np.asarray(targets, dtype=float).reshape(zb.shape[0], params.n_nodes, params.T_out)
    p = _vars(params.arrays)
    pred = _forward(ad.Var(zb), p, basis, shift)
    loss = ad.mean_abs(pred - targets)
    loss.backward()
    grads = {name: (v.grad if v.grad is not None else np.zeros_like(v.value)) for name, v in p.items()}
    return float(loss.value), grads


def time_of_day_features(T: int, period: float) -> np.ndarray:
    """Auxiliary ``(2, T)`` channels ``sin`` and ``cos`` of the phase within ``period`` steps."""
    if not period > 0:
        raise ConfigError(f"must be > 0, got {period}", "time_of_day_period")
    phase = 2 * np.pi * np.arange(T) / period
    return np.stack([np.sin(phase), np.cos(phase)])


def make_windows(features, target, T_w: int = 12, T_out: int = 12, stride: int = 1):
    """Slide over time: inputs ``features[:, :, t-T_w:t]`` and targets ``target[:, t:t+T_out]``.

    ``features`` is ``(N, C, T)`` and ``target`` is ``(N, T)``. Returns
    ``(windows (B, N, C, T_w), targets (B, N, T_out), starts)``.
    """
    features = np.asarray(features, dtype=float)
    target = np.asarray(target, dtype=float)
    if features.ndim != 3 or target.ndim != 2:
        raise InvalidInputError(f"features must be (N, C, T) and target (N, T), got {features.shape}, {target.shape}")
    if features.shape[0] != target.shape[0] or features.shape[2] != target.shape[1]:
        raise InvalidInputError(
            f"features {features.shape} and target {target.shape} disagree on nodes or time steps")
    T = features.shape[2]
    starts = np.arange(T_w, T - T_out + 1, stride)
    if starts.size == 0:
        raise InvalidInputError(f"series of length {T} too short for T_w={T_w}, T_out={T_out}")
    windows = np.stack([features[:, :, t - T_w:t] for t in starts])
    targets = np.stack([target[:, t:t + T_out] for t in starts])
    return windows, targets, starts - T_w


@dataclass
class ForecastHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    wall_clock: float = 0.0

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {"train_loss": self.train_loss, "val_loss": self.val_loss,
               "best_epoch": self.best_epoch, "stopped_epoch": self.stopped_epoch}
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out


def predict(windows, graph: Graph, params: ForecasterParams, batch_size: int = 256) -> np.ndarray:
    windows = np.asarray(windows, dtype=float)
    outs = [forecaster_forward(windows[i:i + batch_size], graph, params)
            for i in range(0, len(windows), batch_size)]
    return np.concatenate(outs)


def mae(pred, truth) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(truth))))


def train_forecaster(windows, targets, graph: Graph, cfg: ForecastConfig | None = None):
    """Adam on MAE with a chronological 60/20/20 split and early stopping.

    Returns ``(best params, ForecastHistory)``.
    """
    cfg = cfg or ForecastConfig()
    windows = np.asarray(windows, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if windows.ndim != 4 or targets.ndim != 3 or len(windows) != len(targets):
        raise InvalidInputError(f"windows {windows.shape} and targets {targets.shape} are misaligned")
    if windows.shape[1] != targets.shape[1] or windows.shape[3] != cfg.T_w or targets.shape[2] != cfg.T_out:
        raise InvalidInputError(f"windows {windows.shape} / targets {targets.shape} do not match "
                                f"T_w={cfg.T_w}, T_out={cfg.T_out}")
    start = time.perf_counter()
    B, N, C, _ = windows.shape
    tr, va, _ = cfg.split.bounds(B)
    Xtr, Ytr = windows[tr], targets[tr]
    Xva, Yva = windows[va], targets[va]
    params = ForecasterParams.init(N, C, cfg)
    opt = Adam(params.arrays, cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    hist = ForecastHistory()
    best, best_val, stale = params.copy(), np.inf, 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(Xtr))
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = loss_and_grads(Xtr[idx], Ytr[idx], graph, params)
            if not np.isfinite(loss):
                raise TrainingFailure(f"loss diverged in epoch {epoch}", epoch=epoch)
            opt.step(grads)
            losses.append(loss * len(idx))
        hist.train_loss.append(float(np.sum(losses) / len(Xtr)))
        val = mae(predict(Xva, graph, params), Yva)
        hist.val_loss.append(val)
        if val < best_val:
            best_val, best, hist.best_epoch, stale = val, params.copy(), epoch, 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    hist.stopped_epoch = epoch
    hist.wall_clock = time.perf_counter() - start
    return best, hist


def metrics(pred, truth, mask_threshold: float = 1e-3) -> dict:
    """MAE, RMSE and MAPE (%); MAPE skips entries with ``|truth| < mask_threshold``."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise InvalidInputError(f"pred shape {pred.shape} != truth shape {truth.shape}")
    err = pred - truth
    keep = np.abs(truth) >= mask_threshold
    mape = float(np.mean(np.abs(err[keep]) / np.abs(truth[keep])) * 100.0) if keep.any() else float("nan")
    return {"MAE": float(np.mean(np.abs(err))), "RMSE": float(np.sqrt(np.mean(err ** 2))),
            "MAPE": mape, "MAPE_excluded": int((~keep).sum())}


def horizon_metrics(pred, truth, horizons=(3, 6, 12)) -> dict:
    """Metrics at the given 1-based horizons plus ``average`` = mean over every horizon."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    T_out = pred.shape[-1]
    out = {}
    for h in horizons:
        if h <= T_out:
            out[str(h)] = metrics(pred[..., h - 1], truth[..., h - 1])
    per = [metrics(pred[..., h], truth[..., h]) for h in range(T_out)]
    out["average"] = {key: float(np.mean([m[key] for m in per])) for key in ("MAE", "RMSE", "MAPE")}
    out["average"]["MAPE_excluded"] = int(sum(m["MAPE_excluded"] for m in per))
    return out
