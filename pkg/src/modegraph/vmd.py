"""Classical ADMM-based variational mode decomposition.

This is the convergence-looped reference engine. The unfolded network in
:mod:`modegraph.unfolded` is checked against it and benchmarked against it.

All spectral quantities live on the one-sided grid ``[0, 0.5)`` of the
mirror-extended signal (see :mod:`modegraph.signal`).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError, NumericFailure
from .signal import TimeSeries, half_to_time, one_sided_grid, signal_half_spectrum


@dataclass(frozen=True)
class VmdConfig:
    K: int = 3
    alpha: float = 2000.0
    tau: float = 0.0
    tol: float = 1e-7
    max_iter: int = 500
    omega_init: str = "uniform"

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.K}", "K")
        if not self.alpha > 0:
            raise ConfigError(f"must be > 0, got {self.alpha}", "alpha")
        if not self.tau >= 0:
            raise ConfigError(f"must be >= 0, got {self.tau}", "tau")
        if not self.tol >= 0:
            raise ConfigError(f"must be >= 0 (0 runs every iteration), got {self.tol}", "tol")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.max_iter}", "max_iter")
        if self.omega_init not in ("uniform", "zero"):
            raise ConfigError(f"must be 'uniform' or 'zero', got {self.omega_init!r}", "omega_init")


@dataclass
class ModeSet:
    """K band-limited modes in the time domain plus their center frequencies."""

    modes: np.ndarray
    omegas: np.ndarray
    iterations_used: int = 0
    converged: bool = True
    spectra: np.ndarray | None = field(default=None, repr=False)
    stalls: int = 0

    @property
    def K(self) -> int:
        return self.modes.shape[0]

    def reconstruction(self) -> np.ndarray:
        return self.modes.sum(axis=0)

    def sorted(self) -> "ModeSet":
        order = np.argsort(self.omegas, kind="stable")
        spectra = None if self.spectra is None else self.spectra[order]
        return ModeSet(self.modes[order], self.omegas[order], self.iterations_used,
                       self.converged, spectra, self.stalls)


def initial_omegas(K: int, method: str = "uniform") -> np.ndarray:
    """Mode centers ``0.5 (k + 0.5) / (2K)``, spread over the lower half of [0, 0.5).

    Starting low lets the upper modes climb toward strong high tones instead of
    two modes settling on the same low one.
    """
    if method == "uniform":
        return 0.5 * (np.arange(K) + 0.5) / (2.0 * K)
    if method == "zero":
        return np.zeros(K)
    raise ConfigError(f"unknown method {method!r}", "omega_init")


def wiener_kernel(grid, omega_k, alpha):
    """``1 / (1 + 2 alpha (w - omega_k)^2)``."""
    return 1.0 / (1.0 + 2.0 * alpha * (grid - omega_k) ** 2)


def mode_update(f_hat, modes_hat, lambda_hat, k, alpha, omega_k, grid=None):
    """Wiener-filtered residual update of mode ``k``.

    ``modes_hat`` must hold modes ``< k`` at the new iterate and modes ``> k``
    at the old one; row ``k`` itself is ignored.
    """
    if not alpha > 0:
        raise ConfigError(f"must be > 0, got {alpha}", "alpha")
    f_hat = np.asarray(f_hat)
    modes_hat = np.asarray(modes_hat)
    if grid is None:
        grid = one_sided_grid(f_hat.size)
    if modes_hat.shape[-1] != f_hat.size or grid.size != f_hat.size or np.shape(lambda_hat)[-1] != f_hat.size:
        raise InvalidInputError("f_hat, modes_hat, lambda_hat and grid must share their last dimension")
    others = modes_hat[:k].sum(axis=0) + modes_hat[k + 1:].sum(axis=0)
    return (f_hat - others + lambda_hat / 2.0) / (1.0 + 2.0 * alpha * (grid - omega_k) ** 2)


def omega_update(mode_hat, grid=None, previous=None):
    """Power-weighted spectral centroid. Returns ``(omega, stalled)``.

    A zero-energy mode returns ``previous`` unchanged and flags a stall.
    """
    mode_hat = np.asarray(mode_hat)
    if grid is None:
        grid = one_sided_grid(mode_hat.size)
    power = mode_hat.real ** 2 + mode_hat.imag ** 2
    energy = power.sum()
    if energy <= 0.0:
        return (0.0 if previous is None else float(previous)), True
    return float(np.dot(grid, power) / energy), False


def lambda_update(lambda_hat, f_hat, modes_hat, tau):
    """Dual ascent ``lambda + tau * (f - sum_k u_k)``."""
    if tau == 0:
        return lambda_hat
    return lambda_hat + tau * (f_hat - np.sum(modes_hat, axis=0))


def _relative_change(new, old):
    total = 0.0
    for u_new, u_old in zip(new, old):
        diff = np.vdot(u_new - u_old, u_new - u_old).real
        if diff == 0.0:
            continue
        norm = np.vdot(u_old, u_old).real
        total += diff / norm if norm > 0 else np.inf
    return total


def decompose_spectrum(f_hat, cfg: VmdConfig, omega0=None, counter=None):
    """Run Gauss-Seidel sweeps on a one-sided spectrum until converged.

    Returns ``(modes_hat, omegas, iterations, converged, stalls)``.
    ``counter``, if given, is a one-element list incremented per mode update.
    """
    f_hat = np.asarray(f_hat, dtype=complex)
    T = f_hat.size
    K = cfg.K
    grid = one_sided_grid(T)
    omegas = initial_omegas(K, cfg.omega_init) if omega0 is None else np.array(omega0, dtype=float)
    modes = np.zeros((K, T), dtype=complex)
    lam = np.zeros(T, dtype=complex)
    resid = f_hat.copy()  # f - sum of current modes, kept in the same form as the unfolded layers
    stalls = 0
    converged = False
    n = 0
    while n < cfg.max_iter:
        n += 1
        old = modes.copy()
        for k in range(K):
            base = resid + modes[k]
            modes[k] = (base + lam / 2.0) / (1.0 + 2.0 * cfg.alpha * (grid - omegas[k]) ** 2)
            resid = base - modes[k]
            if counter is not None:
                counter[0] += 1
        for k in range(K):
            omegas[k], stalled = omega_update(modes[k], grid, omegas[k])
            stalls += stalled
        lam = lambda_update(lam, f_hat, modes, cfg.tau)
        if not (np.all(np.isfinite(modes)) and np.all(np.isfinite(omegas))):
            raise NumericFailure(f"non-finite modes at iteration {n}", iteration=n)
        if _relative_change(modes, old) < cfg.tol:
            converged = True
            break
    return modes, omegas, n, converged, stalls


def vmd_decompose(signal, cfg: VmdConfig | None = None, counter=None) -> ModeSet:
    """Decompose ``signal`` into ``cfg.K`` modes with the iterative algorithm."""
    cfg = cfg or VmdConfig()
    if not isinstance(signal, TimeSeries):
        signal = TimeSeries("signal", signal)
    f_hat = signal_half_spectrum(signal)
    modes_hat, omegas, n, converged, stalls = decompose_spectrum(f_hat, cfg, counter=counter)
    return ModeSet(half_to_time(modes_hat), omegas, n, converged, modes_hat, stalls)


def reconstruction_error(signal, modeset) -> float:
    """Relative L2 norm of ``signal - sum(modes)``."""
    x = signal.values if isinstance(signal, TimeSeries) else np.asarray(signal, dtype=float)
    modes = modeset.modes if isinstance(modeset, ModeSet) else np.asarray(modeset)
    resid = np.linalg.norm(x - modes.sum(axis=0))
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return 0.0 if resid == 0.0 else float("inf")
    return float(resid / norm)


def timed_decompose(signal, cfg: VmdConfig):
    """``vmd_decompose`` plus wall-clock milliseconds."""
    start = time.perf_counter()
    result = vmd_decompose(signal, cfg)
    return result, (time.perf_counter() - start) * 1e3
