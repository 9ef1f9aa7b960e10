"""Acceptance criteria at their stated tolerances and runtime budgets.

Each test records a one-line PASS/FAIL summary that is printed at the end of
the pytest run, then asserts the same condition.
"""

import time

import numpy as np
import pytest

from fdcheck import forecaster_check, forecaster_instance, uvmd_check, uvmd_instance
from modegraph import forecaster as fc
from modegraph.datasets import GraphDatasetSpec, generate_graph_dataset, heterogeneous_signals, mixed_tone_signals
from modegraph.experiments import BenchConfig, PipelineConfig, bench_cell, chunk_signals, forecast_pipeline, mode_vs_raw
from modegraph.forecaster import ForecastConfig
from modegraph.graph import build_laplacians, chebyshev_basis
from modegraph.signal import (SyntheticSpec, from_spectrum, gen_synthetic, mirror_extend,
                              signal_half_spectrum, to_spectrum, unmirror)
from modegraph.unfolded import UvmdParams, UvmdTrainConfig, relative_spectral_error, uvmd_forward, uvmd_train
from modegraph.vmd import VmdConfig, decompose_spectrum, reconstruction_error, vmd_decompose

pytestmark = pytest.mark.acceptance

SEEDS = range(5)


def test_criterion_1_reduces_to_one_sweep(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    T = 1024
    worst = 0.0
    for i in range(20):
        K = (1, 3, 5)[i % 3]
        alpha = rng.uniform(100.0, 5000.0)
        f = signal_half_spectrum(rng.normal(size=T))
        modes, om = uvmd_forward(f, UvmdParams(np.full(K, alpha), np.zeros((1, T), complex), K))
        ref, ref_om, _, _, _ = decompose_spectrum(f, VmdConfig(K=K, alpha=alpha, max_iter=1))
        scale = np.maximum(np.abs(ref), np.finfo(float).tiny)
        worst = max(worst, float(np.max(np.abs(modes - ref) / scale)),
                    float(np.max(np.abs(om - ref_om) / np.abs(ref_om))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    assert acceptance_report(1, ok, f"max relative deviation {worst:.2e} (<= 1e-12), {elapsed:.1f} s (< 10 s)")


def test_criterion_2_iterative_recovers_tones(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    T = 4096
    bin_width = 1.0 / (2 * T)
    worst_bins, worst_err = 0.0, 0.0
    triples = 0
    while triples < 10:
        freqs = np.sort(rng.uniform(0.02, 0.45, 3))
        if np.min(np.diff(freqs)) < 0.03:
            continue
        triples += 1
        tones = [(f, rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)) for f in freqs]
        sig = gen_synthetic(SyntheticSpec(tones, T))
        res = vmd_decompose(sig, VmdConfig(K=3, tau=1.0, tol=1e-9, max_iter=2000)).sorted()
        worst_bins = max(worst_bins, float(np.max(np.abs(res.omegas - freqs))) / bin_width)
        worst_err = max(worst_err, reconstruction_error(sig, res))
    elapsed = time.perf_counter() - start
    ok = worst_bins <= 2 and worst_err <= 1e-2 and elapsed < 60
    assert acceptance_report(2, ok, f"worst omega offset {worst_bins:.2f} bins (<= 2), worst reconstruction "
                                    f"error {worst_err:.2e} (<= 1e-2), {elapsed:.1f} s (< 60 s)")


def test_criterion_3_gradient_fidelity(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    uvmd_ok = 0
    for i in range(20):
        K, depth = 1 + i % 3, 1 + (i // 3) % 2
        f, p = uvmd_instance(rng, K, depth, 256, shared=(i % 4 == 3))
        uvmd_ok += uvmd_check(f, p)
    fc_ok = 0
    for i in range(10):
        N = 2 + i % 5
        X, Y, graph, params = forecaster_instance(rng, N, C=1 + i % 3, T_w=12)
        fc_ok += forecaster_check(X, Y, graph, params)[0]
    elapsed = time.perf_counter() - start
    ok = uvmd_ok == 20 and fc_ok == 10 and elapsed < 120
    assert acceptance_report(3, ok, f"UVMD {uvmd_ok}/20 and forecaster {fc_ok}/10 instances within 1e-4, "
                                    f"{elapsed:.1f} s (< 120 s)")


def test_criterion_4_held_out_reconstruction(acceptance_report):
    start = time.perf_counter()
    signals = mixed_tone_signals(50, 4096, seed=4)
    cfg = UvmdTrainConfig(K=13, depth=1)
    params, _ = uvmd_train(signals, cfg)
    _, _, test = cfg.split.bounds(len(signals))
    errors = []
    for sig in signals[test]:
        f = signal_half_spectrum(sig)
        errors.append(relative_spectral_error(f, uvmd_forward(f, params)[0]))
    median = float(np.median(errors))
    elapsed = time.perf_counter() - start
    ok = median <= 1e-2 and elapsed < 600
    assert acceptance_report(4, ok, f"median held-out relative error {median:.2e} over {len(errors)} signals "
                                    f"(<= 1e-2), {elapsed:.1f} s (< 600 s)")


def test_criterion_5_speedup(acceptance_report):
    start = time.perf_counter()
    cell = bench_cell(16384, 13, BenchConfig(lengths=(16384,), modes=(13,), repetitions=5, max_iter=500), threads=1)
    err = cell["mean_reconstruction_error"]
    elapsed = time.perf_counter() - start
    ok = cell["speedup"] >= 10 and err["unfolded"] <= 2 * err["iterative"] and elapsed < 300
    assert acceptance_report(5, ok, f"speedup {cell['speedup']:.0f}x (>= 10), reconstruction error unfolded "
                                    f"{err['unfolded']:.2e} vs iterative {err['iterative']:.2e} (<= 2x), "
                                    f"{elapsed:.1f} s (< 300 s)")


def test_criterion_6_mode_specific_alpha(acceptance_report):
    start = time.perf_counter()
    wins, pairs = 0, []
    for seed in SEEDS:
        signals = heterogeneous_signals(30, 2048, seed=seed)
        per_mode = uvmd_train(signals, UvmdTrainConfig(K=13, seed=seed))[1].best_val_loss
        shared = uvmd_train(signals, UvmdTrainConfig(K=13, seed=seed, shared_alpha=True))[1].best_val_loss
        wins += per_mode <= shared
        pairs.append(f"{per_mode:.4g}/{shared:.4g}")
    elapsed = time.perf_counter() - start
    ok = wins >= 4 and elapsed < 600
    assert acceptance_report(6, ok, f"per-mode <= shared in {wins}/5 seeds (>= 4) [{', '.join(pairs)}], "
                                    f"{elapsed:.1f} s (< 600 s)")


def test_criterion_7_window_length_trend(acceptance_report):
    start = time.perf_counter()
    holds = 0
    for seed in SEEDS:
        signals = mixed_tone_signals(30, 4096, seed=seed)
        losses = [uvmd_train(chunk_signals(signals, frac), UvmdTrainConfig(K=13, seed=seed))[1].best_val_relative
                  for frac in (1.0, 0.5, 0.125)]
        holds += losses[0] <= losses[1] <= losses[2]
    elapsed = time.perf_counter() - start
    ok = holds >= 4 and elapsed < 600
    assert acceptance_report(7, ok, f"full <= 1/2 <= 1/8 in {holds}/5 seeds (>= 4), {elapsed:.1f} s (< 600 s)")


def test_criterion_8_modes_help_forecasting(acceptance_report):
    start = time.perf_counter()
    wins, pairs = 0, []
    for seed in SEEDS:
        res = mode_vs_raw(GraphDatasetSpec(seed=seed), UvmdTrainConfig(K=4, max_epochs=30, seed=seed),
                          ForecastConfig(max_epochs=40, seed=seed))
        wins += res["modes"] <= res["raw"]
        pairs.append(f"{res['modes']:.3f}/{res['raw']:.3f}")
    elapsed = time.perf_counter() - start
    ok = wins >= 4 and elapsed < 900
    assert acceptance_report(8, ok, f"modes <= raw validation MAE in {wins}/5 seeds (>= 4) [{', '.join(pairs)}], "
                                    f"{elapsed:.1f} s (< 900 s)")


def _structural_invariants() -> dict:
    rng = np.random.default_rng(9)
    checks = {}

    stochastic = True
    for _ in range(20):
        N, C, T = rng.integers(1, 7), rng.integers(1, 4), rng.integers(1, 13)
        p = fc.AttentionParams(*(rng.normal(size=s) for s in fc.attention_shapes(N, C, T).values()))
        z = rng.uniform(0.1, 20) * rng.normal(size=(N, C, T))
        for M in (fc.spatial_attention(z, p), fc.temporal_attention(z, p)[0]):
            stochastic &= bool(np.allclose(M.sum(axis=1), 1.0, atol=1e-9) and np.all(M >= 0))
    checks["attention row-stochastic"] = stochastic

    cheb, spectrum = True, True
    for n in range(2, 11):
        A = np.triu(rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) < 0.5), 1)
        L_hat = build_laplacians(A + A.T).laplacian_scaled
        evals, evecs = np.linalg.eigh(L_hat)
        spectrum &= bool(evals.min() >= -1 - 1e-6 and evals.max() <= 1 + 1e-6)
        basis = chebyshev_basis(L_hat, 8)
        theta = np.arccos(np.clip(evals, -1, 1))
        for m in range(8):
            cheb &= bool(np.allclose(basis[m], (evecs * np.cos(m * theta)) @ evecs.T, atol=1e-8))
    checks["Chebyshev recursion vs eigendecomposition"] = cheb
    checks["scaled Laplacian spectrum in [-1, 1]"] = spectrum

    round_trip, parseval = True, True
    for _ in range(20):
        x = rng.normal(size=2 * rng.integers(2, 300))
        m = mirror_extend(x)
        spec = to_spectrum(m)
        round_trip &= bool(np.allclose(unmirror(from_spectrum(spec)), x, atol=1e-10))
        parseval &= bool(np.isclose(np.sum(np.abs(spec.coeffs) ** 2) / m.values.size, np.sum(m.values ** 2)))
    checks["mirror/DFT round trip"] = round_trip
    checks["Parseval"] = parseval

    spec = GraphDatasetSpec(n_nodes=4, length=256, seed=3)
    cfg = PipelineConfig(uvmd=UvmdTrainConfig(K=2, max_epochs=2),
                         forecast=ForecastConfig(max_epochs=2, cheb_channels=4, time_channels=4))
    runs = [forecast_pipeline(generate_graph_dataset(spec), cfg).summary(include_timing=False) for _ in range(2)]
    checks["seeded end-to-end determinism"] = runs[0] == runs[1]
    return checks


def test_criterion_9_structural_invariants(acceptance_report):
    start = time.perf_counter()
    checks = _structural_invariants()
    elapsed = time.perf_counter() - start
    failed = [name for name, ok in checks.items() if not ok]
    ok = not failed and elapsed < 60
    detail = "all invariants hold" if not failed else f"failed: {', '.join(failed)}"
    assert acceptance_report(9, ok, f"{detail} ({len(checks)} checks), {elapsed:.1f} s (< 60 s)")
