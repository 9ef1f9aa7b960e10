"""Unfolded VMD: a fixed number of Gauss-Seidel sweeps with trainable constants.

Each layer ``n`` updates the modes in order ``k = 0..K-1``::

    u_k <- (f - sum_{i<k} u_i(new) - sum_{i>k} u_i(old) + H_n / 2)
           / (1 + 2 softplus(alpha_raw_k) (w - omega_k)^2)

followed by a centroid update of every ``omega_k``. The bandwidths
``alpha_raw`` are shared across layers, one complex offset ``H_n`` exists per
layer. Training minimizes ``||f - sum_k u_k||_2`` over the one-sided spectrum.

Gradients treat the center frequencies as constants (stop-gradient): they are
recomputed from the data in the forward pass but not differentiated through.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError, NumericFailure, TrainingFailure
from .optim import Adam
from .signal import SplitConfig, TimeSeries, half_to_time, one_sided_grid, signal_half_spectrum
from .vmd import ModeSet, initial_omegas, omega_update

SCHEMA_VERSION = 1
MAX_DEPTH = 2


def softplus(x):
    """``log(1 + exp(x))``, exact identity above 30 and overflow-free below."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))
    return out if out.ndim else float(out)


def softplus_grad(x):
    """Derivative of :func:`softplus`, i.e. the logistic sigmoid."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def inverse_softplus(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ConfigError("softplus values must be > 0", "alpha")
    out = np.where(y > 30.0, y, np.log(np.expm1(np.minimum(y, 30.0))))
    return out if out.ndim else float(out)


@dataclass
class UvmdParams:
    """Trainable state of the unfolded network.

    ``alpha_raw`` has shape ``(K,)``, or ``(1,)`` when one bandwidth is shared
    by all modes (then ``n_modes`` gives K). ``H`` is complex with shape
    ``(depth, T)`` over the one-sided grid.
    """

    alpha_raw: np.ndarray
    H: np.ndarray
    n_modes: int
    omega_init: str = "uniform"
    normalization: dict | None = None

    def __post_init__(self):
        self.alpha_raw = np.array(self.alpha_raw, dtype=float).reshape(-1)
        self.H = np.array(self.H, dtype=complex)
        if self.H.ndim != 2:
            raise ConfigError(f"H must be 2-D (depth, T), got shape {self.H.shape}", "H")
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ConfigError(f"must be 1 or 2, got {self.depth}", "depth")
        if self.alpha_raw.size not in (1, self.n_modes):
            raise ConfigError(f"expected 1 or {self.n_modes} entries, got {self.alpha_raw.size}", "alpha_raw")
        if not (np.all(np.isfinite(self.alpha_raw)) and np.all(np.isfinite(self.H))):
            raise ConfigError("parameters must be finite", "params")

    @classmethod
    def init(cls, K: int, T: int, depth: int = 1, alpha: float = 2000.0, shared_alpha: bool = False,
             omega_init: str = "uniform"):
        """Bandwidth ``alpha`` (effective, after SoftPlus) and zero offsets."""
        if int(K) != K or K < 1:
            raise ConfigError(f"must be an integer >= 1, got {K}", "K")
        if not 1 <= depth <= MAX_DEPTH:
            raise ConfigError(f"must be 1 or 2, got {depth}", "depth")
        raw = inverse_softplus(alpha)
        alpha_raw = np.full(1 if shared_alpha else K, raw)
        return cls(alpha_raw, np.zeros((depth, T), dtype=complex), K, omega_init)

    @property
    def K(self) -> int:
        return self.n_modes

    @property
    def depth(self) -> int:
        return self.H.shape[0]

    @property
    def length(self) -> int:
        return self.H.shape[1]

    @property
    def shared_alpha(self) -> bool:
        return self.alpha_raw.size == 1 and self.n_modes > 1

    def alphas(self) -> np.ndarray:
        """Effective per-mode bandwidths ``softplus(alpha_raw)``, shape ``(K,)``."""
        return np.broadcast_to(softplus(self.alpha_raw), (self.n_modes,)).astype(float)

    def omega0(self) -> np.ndarray:
        return initial_omegas(self.n_modes, self.omega_init)

    def copy(self) -> "UvmdParams":
        return UvmdParams(self.alpha_raw.copy(), self.H.copy(), self.n_modes, self.omega_init,
                          None if self.normalization is None else dict(self.normalization))

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.alpha_raw.tobytes())
        h.update(self.H.tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "uvmd-params",
            "K": self.n_modes,
            "depth": self.depth,
            "grid_length": self.length,
            "omega_init": self.omega_init,
            "alpha_raw": self.alpha_raw.tolist(),
            "H": [{"re": row.real.tolist(), "im": row.imag.tolist()} for row in self.H],
            "normalization": self.normalization,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UvmdParams":
        if data.get("kind") != "uvmd-params":
            raise InvalidInputError("not a UVMD parameter file")
        if data.get("schema") != SCHEMA_VERSION:
            raise InvalidInputError(f"unsupported schema {data.get('schema')!r}")
        H = np.array([np.asarray(r["re"]) + 1j * np.asarray(r["im"]) for r in data["H"]])
        params = cls(np.asarray(data["alpha_raw"]), H, int(data["K"]), data.get("omega_init", "uniform"),
                     data.get("normalization"))
        if params.depth != data["depth"] or params.length != data["grid_length"]:
            raise InvalidInputError("parameter file is internally inconsistent (depth/grid_length)")
        return params

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path, expected_length: int | None = None) -> "UvmdParams":
        params = cls.from_dict(json.loads(Path(path).read_text()))
        if expected_length is not None:
            params.check_length(expected_length)
        return params

    def check_length(self, T: int) -> None:
        if T != self.length:
            raise InvalidInputError(
                f"parameters were trained for signals of length {self.length}, got length {T}")


@dataclass
class ForwardTrace:
    """Intermediates of one forward pass, kept for the reverse pass."""

    modes: np.ndarray
    omegas: np.ndarray  # (depth + 1, K); row n is used by layer n
    residual: np.ndarray
    denominators: list = field(default_factory=list)  # [(layer, k, d, new)]


def _forward(f_hat, alphas, H, omega0, omegas=None, counter=None, keep=False):
    f_hat = np.asarray(f_hat, dtype=complex)
    T = f_hat.size
    depth, K = H.shape[0], alphas.size
    if H.shape[1] != T:
        raise InvalidInputError(f"spectrum length {T} does not match parameter grid length {H.shape[1]}")
    grid = one_sided_grid(T)
    modes = np.zeros((K, T), dtype=complex)
    resid = f_hat.copy()
    trace = np.empty((depth + 1, K))
    trace[0] = omega0
    steps = []
    for n in range(depth):
        om = trace[n] if omegas is None else omegas[n]
        trace[n] = om
        half_h = H[n] / 2.0
        for k in range(K):
            d = 1.0 + 2.0 * alphas[k] * (grid - om[k]) ** 2
            base = resid + modes[k]
            new = (base + half_h) / d
            resid = base - new
            modes[k] = new
            if counter is not None:
                counter[0] += 1
            if keep:
                steps.append((n, k, d, new))
            if not np.all(np.isfinite(new)):
                raise NumericFailure(f"non-finite mode {k} in layer {n}", layer=n, mode=k)
        for k in range(K):
            trace[n + 1, k], _ = omega_update(modes[k], grid, om[k])
    return ForwardTrace(modes, trace, resid, steps)


def uvmd_forward(f_hat, params: UvmdParams, omega_init=None, omegas=None, counter=None):
    """Run ``params.depth`` sweeps on a one-sided spectrum.

    Returns ``(mode_spectra (K, T), omegas (K,))`` with the omegas produced by
    the last layer. ``omegas`` (shape ``(depth, K)``) overrides the centers
    used by each layer instead of the data-driven ones.
    """
    omega0 = params.omega0() if omega_init is None else np.asarray(omega_init, dtype=float)
    tr = _forward(f_hat, params.alphas(), params.H, omega0, omegas, counter)
    return tr.modes, tr.omegas[-1].copy()


def reconstruction_loss(f_hat, mode_spectra) -> float:
    """``||f - sum_k u_k||_2`` over the one-sided grid."""
    return float(np.linalg.norm(np.asarray(f_hat) - np.sum(mode_spectra, axis=0)))


def _backward(tr: ForwardTrace, params: UvmdParams):
    """Reverse pass of :func:`_forward` for the loss ``||residual||``."""
    K, depth, T = params.n_modes, params.depth, params.length
    grid = one_sided_grid(T)
    loss = float(np.linalg.norm(tr.residual))
    g_alpha = np.zeros(K)
    g_H = np.zeros((depth, T), dtype=complex)
    if loss == 0.0:
        # ||.|| is not differentiable at 0; return the zero subgradient
        return loss, g_alpha, g_H
    # complex adjoints carry dL/dRe + i dL/dIm
    g_r = tr.residual / loss
    g_u = np.zeros((K, T), dtype=complex)
    dsp = softplus_grad(params.alpha_raw)
    dsp = np.broadcast_to(dsp, (K,))
    for n, k, d, new in reversed(tr.denominators):
        g_new = g_u[k] - g_r
        g_num = g_new / d
        # d depends on alpha_k: d = 1 + 2 softplus(a_k) (w - omega)^2
        g_d = -(g_new.real * new.real + g_new.imag * new.imag) / d
        offset2 = (grid - tr.omegas[n, k]) ** 2
        g_alpha[k] += 2.0 * dsp[k] * np.dot(g_d, offset2)
        g_H[n] += g_num / 2.0
        # r' = r + u_k - new, num = r + u_k + H/2
        g_r = g_r + g_num
        g_u[k] = g_r
    if params.shared_alpha:
        g_alpha = np.array([g_alpha.sum()])
    return loss, g_alpha, g_H


def uvmd_gradients(f_hat, params: UvmdParams, omega_init=None):
    """Loss and its gradients with respect to ``alpha_raw`` and ``H``.

    Returns ``(loss, grad_alpha_raw, grad_H)``; ``grad_H`` is complex with the
    real part holding dL/dRe(H) and the imaginary part dL/dIm(H). The
    center frequencies are held fixed (stop-gradient).
    """
    omega0 = params.omega0() if omega_init is None else np.asarray(omega_init, dtype=float)
    tr = _forward(f_hat, params.alphas(), params.H, omega0, keep=True)
    loss, g_alpha, g_H = _backward(tr, params)
    for name, g in (("alpha_raw", g_alpha), ("H", g_H)):
        if not np.all(np.isfinite(g)):
            raise NumericFailure(f"non-finite gradient for {name}", parameter=name)
    return loss, g_alpha, g_H


def forward_omegas(f_hat, params: UvmdParams, omega_init=None) -> np.ndarray:
    """Per-layer centers ``(depth, K)`` used by an unperturbed forward pass."""
    omega0 = params.omega0() if omega_init is None else np.asarray(omega_init, dtype=float)
    tr = _forward(f_hat, params.alphas(), params.H, omega0)
    return tr.omegas[:-1].copy()


def decompose_with(params: UvmdParams, signal, counter=None) -> ModeSet:
    """Decompose a signal with frozen parameters."""
    if not isinstance(signal, TimeSeries):
        signal = TimeSeries("signal", signal)
    params.check_length(signal.length)
    f_hat = signal_half_spectrum(signal)
    tr = _forward(f_hat, params.alphas(), params.H, params.omega0(), counter=counter)
    return ModeSet(half_to_time(tr.modes), tr.omegas[-1].copy(), params.depth, True, tr.modes)


def relative_spectral_error(f_hat, mode_spectra) -> float:
    norm = np.linalg.norm(f_hat)
    loss = reconstruction_loss(f_hat, mode_spectra)
    if norm == 0.0:
        return 0.0 if loss == 0.0 else float("inf")
    return loss / float(norm)


@dataclass(frozen=True)
class UvmdTrainConfig:
    K: int = 13
    depth: int = 1
    lr_alpha: float = 10.0
    lr_H: float = 1e-3
    max_epochs: int = 100
    early_stop_patience: int = 10
    split: SplitConfig = SplitConfig()
    batch_size: int = 1
    seed: int = 0
    alpha_init: float = 2000.0
    shared_alpha: bool = False
    omega_init: str = "uniform"

    def __post_init__(self):
        for name in ("K", "max_epochs", "early_stop_patience", "batch_size"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"must be an integer >= 1, got {value}", name)
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ConfigError(f"must be 1 or 2 (deeper unfolding overfits), got {self.depth}", "depth")
        for name in ("lr_alpha", "lr_H", "alpha_init"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be > 0, got {getattr(self, name)}", name)
        initial_omegas(1, self.omega_init)


@dataclass
class TrainReport:
    train_loss: list
    val_loss: list
    val_relative: list
    final_alphas: list
    stopped_epoch: int
    best_epoch: int
    wall_clock: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_relative": self.val_relative,
            "final_alphas": self.final_alphas,
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
        }
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    @property
    def best_val_relative(self) -> float:
        return self.val_relative[self.best_epoch - 1]


def _spectra(signals) -> np.ndarray:
    lengths = {s.length if isinstance(s, TimeSeries) else len(s) for s in signals}
    if len(lengths) != 1:
        raise InvalidInputError(f"all signals must share one length, got {sorted(lengths)}")
    return np.array([signal_half_spectrum(s) for s in signals])


def evaluate(params: UvmdParams, spectra) -> tuple[float, float]:
    """Mean absolute and mean relative reconstruction loss over spectra."""
    omega0 = params.omega0()
    alphas = params.alphas()
    losses, rel = [], []
    for f in spectra:
        tr = _forward(f, alphas, params.H, omega0)
        loss = float(np.linalg.norm(tr.residual))
        norm = float(np.linalg.norm(f))
        losses.append(loss)
        rel.append(loss / norm if norm > 0 else 0.0)
    return float(np.mean(losses)), float(np.mean(rel))


def uvmd_train(signals: Sequence, cfg: UvmdTrainConfig | None = None, spectra=None):
    """Fit global parameters on a chronologically split list of signals.

    One Adam step per minibatch (``batch_size`` signals, default 1). Early
    stopping watches the mean validation loss and the best parameters are
    returned. With fewer than three signals the training signals double as
    the validation set.
    """
    cfg = cfg or UvmdTrainConfig()
    if len(signals) == 0 and spectra is None:
        raise InvalidInputError("at least one signal is required")
    start = time.perf_counter()
    spectra = _spectra(signals) if spectra is None else np.asarray(spectra)
    n, T = spectra.shape
    tr_sl, va_sl, _ = cfg.split.bounds(n)
    train = spectra[tr_sl]
    val = spectra[va_sl]
    if len(train) == 0:
        train = spectra
    if len(val) == 0:
        val = train

    params = UvmdParams.init(cfg.K, T, cfg.depth, cfg.alpha_init, cfg.shared_alpha, cfg.omega_init)
    H_view = params.H.view(float)
    opt = Adam({"alpha_raw": params.alpha_raw, "H": H_view}, {"alpha_raw": cfg.lr_alpha, "H": cfg.lr_H})
    rng = np.random.default_rng(cfg.seed)
    omega0 = params.omega0()

    best = params.copy()
    best_val, best_epoch = np.inf, 0
    train_hist, val_hist, rel_hist = [], [], []
    stale = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train))
        epoch_losses = []
        for s in range(0, len(order), cfg.batch_size):
            batch = order[s:s + cfg.batch_size]
            g_a = np.zeros_like(params.alpha_raw)
            g_h = np.zeros_like(params.H)
            for i in batch:
                tr = _forward(train[i], params.alphas(), params.H, omega0, keep=True)
                loss, ga, gh = _backward(tr, params)
                g_a += ga
                g_h += gh
                epoch_losses.append(loss)
            g_a /= len(batch)
            g_h /= len(batch)
            if not (np.all(np.isfinite(g_a)) and np.all(np.isfinite(g_h))):
                raise TrainingFailure(f"non-finite gradient in epoch {epoch}", epoch=epoch)
            opt.step({"alpha_raw": g_a, "H": g_h.view(float)})
        train_loss = float(np.mean(epoch_losses))
        val_loss, val_rel = evaluate(params, val)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingFailure(f"loss diverged in epoch {epoch}", epoch=epoch)
        train_hist.append(train_loss)
        val_hist.append(val_loss)
        rel_hist.append(val_rel)
        if val_loss < best_val:
            best_val, best_epoch, best = val_loss, epoch, params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
        if val_loss == 0.0:
            break
    report = TrainReport(train_hist, val_hist, rel_hist, best.alphas().tolist(), epoch, best_epoch,
                         time.perf_counter() - start)
    return best, report
