import numpy as np
import pytest

from modegraph.datasets import (GraphDatasetSpec, generate_graph_dataset, heterogeneous_signals, mixed_tone_signals,
                                random_adjacency)
from modegraph.errors import ConfigError


def test_shapes_and_density():
    data = generate_graph_dataset(GraphDatasetSpec(n_nodes=8, length=2048, density=0.3, seed=7))
    assert len(data.series) == 8 and all(s.length == 2048 for s in data.series)
    A = data.adjacency
    np.testing.assert_array_equal(A, A.T)
    assert np.count_nonzero(np.triu(A, 1)) == round(0.3 * 28)


def test_deterministic():
    a = generate_graph_dataset(GraphDatasetSpec(seed=3, broadband=0.5))
    b = generate_graph_dataset(GraphDatasetSpec(seed=3, broadband=0.5))
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.adjacency, b.adjacency)


@pytest.mark.parametrize("n,density", [(6, 1.0), (10, 0.2), (5, 0.0)])
def test_connected_when_budget_allows(n, density):
    A = random_adjacency(n, density, np.random.default_rng(0))
    m = np.count_nonzero(np.triu(A, 1))
    assert m == round(density * n * (n - 1) / 2)
    if m >= n - 1:
        reach = np.eye(n, dtype=bool)
        for _ in range(n):
            reach = reach | ((reach.astype(float) @ (A > 0)) > 0)
        assert reach.all()


def test_tones_recoverable_by_periodogram():
    spec = GraphDatasetSpec(n_nodes=8, length=2048, noise_std=0.1, seed=11)
    data = generate_graph_dataset(spec)
    T = spec.length
    freqs = np.fft.rfftfreq(T)
    for series, tones in zip(data.series, data.tones):
        power = np.abs(np.fft.rfft(series.values)) ** 2
        floor = np.median(power)
        for f, amp, _ in tones:
            if amp >= 0.5:
                near = np.abs(freqs - f) <= 1.0 / T
                assert power[near].max() > 100 * floor
        assert min(abs(freqs[np.argmax(power)] - t[0]) for t in tones) <= 1.0 / T


@pytest.mark.parametrize("kwargs,field", [({"n_nodes": 0}, "n_nodes"), ({"density": 1.5}, "density"),
                                          ({"noise_std": -1}, "noise_std"), ({"broadband": -1}, "broadband"),
                                          ({"shared_periods": (2.0,)}, "shared_periods")])
def test_spec_validation(kwargs, field):
    with pytest.raises(ConfigError, match=field):
        GraphDatasetSpec(**kwargs)


def test_signal_families():
    a = mixed_tone_signals(3, 64, seed=1)
    b = heterogeneous_signals(3, 64, seed=1)
    assert len(a) == len(b) == 3
    np.testing.assert_array_equal(a[0].values, mixed_tone_signals(3, 64, seed=1)[0].values)
    assert not np.array_equal(a[0].values, b[0].values)
