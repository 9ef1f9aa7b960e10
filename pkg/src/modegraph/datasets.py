"""Seeded synthetic datasets for the decomposition and forecasting experiments."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError
from .signal import TimeSeries


def mixed_tone_signals(n: int, T: int, seed: int = 0, tones=(3, 6), noise_std: float = 0.1,
                       band=(0.005, 0.48)) -> list[TimeSeries]:
    """``n`` signals, each a sum of a random number of random tones plus white noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    out = []
    for i in range(n):
        freqs = np.sort(rng.uniform(*band, rng.integers(tones[0], tones[1] + 1)))
        x = np.zeros(T)
        for f in freqs:
            x += rng.uniform(0.3, 2.0) * np.cos(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        x += rng.normal(0.0, noise_std, T)
        out.append(TimeSeries(f"s{i}", x))
    return out


def heterogeneous_signals(n: int, T: int, seed: int = 0) -> list[TimeSeries]:
    """Narrowband tones mixed with broadband AR(1) noise of random color."""
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    out = []
    for i in range(n):
        x = np.zeros(T)
        for f in np.sort(rng.uniform(0.005, 0.45, rng.integers(2, 5))):
            x += rng.uniform(0.5, 2.0) * np.cos(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        pole = rng.uniform(0.5, 0.95)
        colored = lfilter([1.0], [1.0, -pole], rng.normal(size=T)) * np.sqrt(1 - pole ** 2)
        x += rng.uniform(0.5, 1.5) * colored
        out.append(TimeSeries(f"s{i}", x))
    return out


@dataclass(frozen=True)
class GraphDatasetSpec:
    """Synthetic sensor graph: every node mixes shared periodic tones and its own.

    ``shared_periods`` are in samples. Neighbouring nodes also leak a fraction
    ``coupling`` of each other's private tone, so the graph carries signal.
    ``broadband`` scales an AR(1) component whose color differs per node.
    """

    n_nodes: int = 8
    length: int = 2048
    density: float = 0.3
    noise_std: float = 0.1
    shared_periods: tuple = (48.0, 16.0)
    private_band: tuple = (0.02, 0.2)
    coupling: float = 0.3
    broadband: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ConfigError(f"must be >= 1, got {self.n_nodes}", "n_nodes")
        if self.length < 4:
            raise ConfigError(f"must be >= 4, got {self.length}", "length")
        if not 0.0 <= self.density <= 1.0:
            raise ConfigError(f"must lie in [0, 1], got {self.density}", "density")
        if self.noise_std < 0:
            raise ConfigError(f"must be >= 0, got {self.noise_std}", "noise_std")
        if self.broadband < 0:
            raise ConfigError(f"must be >= 0, got {self.broadband}", "broadband")
        if any(p <= 2 for p in self.shared_periods):
            raise ConfigError("periods must exceed 2 samples", "shared_periods")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shared_periods"] = list(self.shared_periods)
        d["private_band"] = list(self.private_band)
        return d


@dataclass
class GraphDataset:
    series: list
    adjacency: np.ndarray
    tones: list = field(default_factory=list)  # per node: list of (freq, amp, phase)

    @property
    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.series])


def random_adjacency(n: int, density: float, rng) -> np.ndarray:
    """Symmetric weighted adjacency with exactly ``round(density * n(n-1)/2)`` edges.

    When the budget allows, a random spanning tree goes in first so the graph
    is connected.
    """
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    m = int(round(density * len(pairs)))
    chosen = set()
    if m >= n - 1:
        order = rng.permutation(n)
        for pos in range(1, n):
            a, b = order[pos], order[rng.integers(pos)]
            chosen.add((min(a, b), max(a, b)))
    rest = [p for p in pairs if p not in chosen]
    for idx in rng.permutation(len(rest))[:m - len(chosen)]:
        chosen.add(rest[idx])
    A = np.zeros((n, n))
    for i, j in sorted(chosen):
        A[i, j] = A[j, i] = rng.uniform(0.1, 1.0)
    return A


def generate_graph_dataset(spec: GraphDatasetSpec) -> GraphDataset:
    rng = np.random.default_rng(spec.seed)
    n, T = spec.n_nodes, spec.length
    A = random_adjacency(n, spec.density, rng)
    t = np.arange(T)
    private = rng.uniform(*spec.private_band, n)
    private_amp = rng.uniform(0.5, 1.5, n)
    private_phase = rng.uniform(0, 2 * np.pi, n)
    W = A / np.maximum(A.sum(axis=1, keepdims=True), 1e-12)
    series, tones = [], []
    for i in range(n):
        node_tones = []
        for period in spec.shared_periods:
            node_tones.append((1.0 / period, rng.uniform(0.5, 1.5), rng.uniform(0, 2 * np.pi)))
        node_tones.append((private[i], private_amp[i], private_phase[i]))
        for j in np.nonzero(W[i])[0]:
            node_tones.append((private[j], spec.coupling * W[i, j] * private_amp[j], private_phase[j]))
        x = np.zeros(T)
        for f, a, ph in node_tones:
            x += a * np.cos(2 * np.pi * f * t + ph)
        x += rng.normal(0.0, spec.noise_std, T)
        if spec.broadband > 0:
            pole = rng.uniform(0.3, 0.95)
            x += spec.broadband * lfilter([1.0], [1.0, -pole], rng.normal(size=T)) * np.sqrt(1 - pole ** 2)
        series.append(TimeSeries(f"n{i}", x))
        tones.append([(float(f), float(a), float(ph)) for f, a, ph in node_tones])
    return GraphDataset(series, A, tones)
