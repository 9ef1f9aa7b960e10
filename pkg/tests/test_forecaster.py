import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdcheck import forecaster_check, forecaster_instance
from modegraph import forecaster as fc
from modegraph.errors import InvalidInputError
from modegraph.graph import build_laplacians


def sigmoid(x):
    return 1 / (1 + np.exp(-x))


def softmax_rows(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def random_attention(rng, N, C, T):
    shapes = fc.attention_shapes(N, C, T)
    return fc.AttentionParams(**{k: 0.5 * rng.normal(size=s) for k, s in shapes.items()})


def spatial_oracle(z, p):
    N, C, T = z.shape
    lhs = np.zeros((N, T))
    for n in range(N):
        zw = z[n] @ p.W1  # (C,)
        lhs[n] = zw @ p.W2
    rhs = np.array([p.W3 @ z[m] for m in range(N)])  # (N, T)
    return softmax_rows(p.V_s @ sigmoid(lhs @ rhs.T + p.b_s))


def temporal_oracle(z, p):
    N, C, T = z.shape
    zt = np.transpose(z, (2, 1, 0))  # (T, C, N)
    lhs = (zt @ p.V1) @ p.V2.T  # (T, C) @ (C, N)
    rhs = np.einsum("c,nct->nt", p.V3, z)
    E = softmax_rows(p.V_e @ sigmoid(lhs @ rhs + p.b_e))
    z_adj = (z.reshape(N * C, T) @ E).reshape(N, C, T)
    return E, z_adj


def small_graph(rng, N):
    A = np.triu(rng.uniform(size=(N, N)), 1)
    return build_laplacians(A + A.T)


class TestAttention:
    def test_zero_params_uniform(self, rng):
        z = rng.normal(size=(4, 3, 6))
        p = fc.AttentionParams.zeros(4, 3, 6)
        np.testing.assert_allclose(fc.spatial_attention(z, p), 0.25)
        E, _ = fc.temporal_attention(z, p)
        np.testing.assert_allclose(E, 1 / 6)

    def test_single_node_and_step(self, rng):
        z = rng.normal(size=(1, 2, 5))
        np.testing.assert_array_equal(fc.spatial_attention(z, random_attention(rng, 1, 2, 5)), [[1.0]])
        z1 = rng.normal(size=(3, 2, 1))
        E, z_adj = fc.temporal_attention(z1, random_attention(rng, 3, 2, 1))
        np.testing.assert_array_equal(E, [[1.0]])
        np.testing.assert_allclose(z_adj, z1, rtol=1e-15)

    @pytest.mark.parametrize("seed", range(3))
    def test_against_direct_formulas(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(5, 3, 7))
        p = random_attention(rng, 5, 3, 7)
        np.testing.assert_allclose(fc.spatial_attention(z, p), spatial_oracle(z, p), atol=1e-9)
        E, z_adj = fc.temporal_attention(z, p)
        E_o, z_adj_o = temporal_oracle(z, p)
        np.testing.assert_allclose(E, E_o, atol=1e-9)
        np.testing.assert_allclose(z_adj, z_adj_o, atol=1e-9)

    @given(st.integers(1, 6), st.integers(1, 4), st.integers(1, 8), st.floats(0.1, 20), st.integers(0, 1000))
    def test_row_stochastic(self, N, C, T, scale, seed):
        rng = np.random.default_rng(seed)
        z = scale * rng.normal(size=(N, C, T))
        p = random_attention(rng, N, C, T)
        S = fc.spatial_attention(z, p)
        E, _ = fc.temporal_attention(z, p)
        for M in (S, E):
            np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(M >= 0) and np.all(M <= 1)

    def test_shape_mismatch(self, rng):
        with pytest.raises(InvalidInputError, match=r"V_s: expected shape \(4, 4\)"):
            fc.spatial_attention(rng.normal(size=(4, 2, 3)), fc.AttentionParams.zeros(3, 2, 3))


class TestChebConv:
    def test_order_one_identity(self, rng):
        z = np.abs(rng.normal(size=(4, 3, 5)))
        theta = np.eye(3)[None]
        out = fc.cheb_conv(z, small_graph(rng, 4), np.ones((4, 4)), fc.ChebParams(theta))
        np.testing.assert_allclose(out, z, rtol=1e-15)

    def test_against_loop(self, rng):
        N, C, F, T, M = 4, 2, 3, 5, 3
        g = small_graph(rng, N)
        z = rng.normal(size=(N, C, T))
        S = fc.spatial_attention(z, random_attention(rng, N, C, T))
        theta = rng.normal(size=(M, C, F))
        out = fc.cheb_conv(z, g, S, fc.ChebParams(theta))
        basis = [np.eye(N), g.laplacian_scaled]
        basis.append(2 * g.laplacian_scaled @ basis[1] - basis[0])
        expected = np.zeros((N, F, T))
        for t in range(T):
            acc = sum((basis[m] * S) @ z[:, :, t] @ theta[m] for m in range(M))
            expected[:, :, t] = np.maximum(acc, 0)
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestForward:
    def test_zero_input_zero_output(self, rng):
        cfg = fc.ForecastConfig()
        p = fc.ForecasterParams.init(5, 4, cfg)
        out = fc.forecaster_forward(np.zeros((5, 4, 12)), small_graph(rng, 5), p)
        np.testing.assert_array_equal(out, 0)

    def test_shape_and_purity(self, rng):
        p = fc.ForecasterParams.init(5, 4, fc.ForecastConfig())
        g = small_graph(rng, 5)
        z = rng.normal(size=(5, 4, 12))
        a = fc.forecaster_forward(z, g, p)
        b = fc.forecaster_forward(z, g, p)
        assert a.shape == (5, 12)
        assert a.tobytes() == b.tobytes()

    def test_wrong_window_shape(self, rng):
        p = fc.ForecasterParams.init(5, 4, fc.ForecastConfig())
        with pytest.raises(InvalidInputError, match="expected"):
            fc.forecaster_forward(np.zeros((5, 3, 12)), small_graph(rng, 5), p)

    @pytest.mark.parametrize("seed", range(2))
    def test_gradients_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        ok, name = forecaster_check(*forecaster_instance(rng, N=4, C=2))
        assert ok, name

    def test_save_load(self, tmp_path):
        p = fc.ForecasterParams.init(3, 2, fc.ForecastConfig(seed=4))
        p.save(tmp_path / "m.json")
        q = fc.ForecasterParams.load(tmp_path / "m.json")
        for k in p.arrays:
            np.testing.assert_array_equal(p.arrays[k], q.arrays[k])


def periodic_dataset(N=8, T=320, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    x = np.stack([np.sin(2 * np.pi * t / 24 + rng.uniform(0, 6)) + 0.5 * np.cos(2 * np.pi * t / 8)
                  for _ in range(N)])
    A = np.triu(rng.uniform(size=(N, N)) * (rng.uniform(size=(N, N)) < 0.4), 1)
    return x, build_laplacians(A + A.T)


class TestTraining:
    def test_memorizes_periodic_data(self):
        x, g = periodic_dataset()
        W, Y, _ = fc.make_windows(x[:, None, :], x, 12, 12)
        cfg = fc.ForecastConfig(max_epochs=200, early_stop_patience=200, learning_rate=3e-3)
        params, hist = fc.train_forecaster(W, Y, g, cfg)
        tr, _, _ = cfg.split.bounds(len(W))
        train_mae = fc.mae(fc.predict(W[tr], g, params), Y[tr])
        assert train_mae < 0.1 * Y.std()

    def test_seeded_runs_identical(self):
        x, g = periodic_dataset(N=4, T=120)
        W, Y, _ = fc.make_windows(x[:, None, :], x, 12, 12)
        cfg = fc.ForecastConfig(max_epochs=3, seed=9)
        a, ha = fc.train_forecaster(W, Y, g, cfg)
        b, hb = fc.train_forecaster(W, Y, g, cfg)
        assert ha.to_dict(False) == hb.to_dict(False)
        assert all(np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)

    def test_misaligned(self, rng):
        g = small_graph(rng, 3)
        with pytest.raises(InvalidInputError, match="misaligned"):
            fc.train_forecaster(np.zeros((5, 3, 1, 12)), np.zeros((4, 3, 12)), g)

    def test_windows(self):
        feats = np.arange(2 * 1 * 30, dtype=float).reshape(2, 1, 30)
        W, Y, starts = fc.make_windows(feats, feats[:, 0], 12, 12)
        assert W.shape == (7, 2, 1, 12) and Y.shape == (7, 2, 12)
        np.testing.assert_array_equal(W[0, 0, 0], np.arange(12))
        np.testing.assert_array_equal(Y[0, 0], np.arange(12, 24))
        assert starts[0] == 0
        with pytest.raises(InvalidInputError, match="too short"):
            fc.make_windows(feats[:, :, :20], feats[:, 0, :20], 12, 12)

    def test_time_of_day(self):
        aux = fc.time_of_day_features(48, 24.0)
        assert aux.shape == (2, 48)
        np.testing.assert_allclose(aux[:, 0], [0, 1])
        np.testing.assert_allclose(aux[:, :24], aux[:, 24:], atol=1e-12)


class TestMetrics:
    def test_exact(self):
        m = fc.metrics(np.ones(5), np.ones(5))
        assert (m["MAE"], m["RMSE"], m["MAPE"]) == (0.0, 0.0, 0.0)

    def test_offset(self):
        m = fc.metrics(np.full(6, 3.0), np.full(6, 2.0))
        assert m["MAE"] == pytest.approx(1.0) and m["RMSE"] == pytest.approx(1.0)
        assert m["MAPE"] == pytest.approx(50.0)

    def test_random_against_loop(self, rng):
        pred, truth = rng.normal(size=50), rng.normal(size=50)
        truth[:3] = 0.0
        m = fc.metrics(pred, truth)
        abs_err, sq_err, pct, excluded = 0.0, 0.0, [], 0
        for p, t in zip(pred, truth):
            abs_err += abs(p - t)
            sq_err += (p - t) ** 2
            if abs(t) < 1e-3:
                excluded += 1
            else:
                pct.append(abs(p - t) / abs(t))
        assert m["MAE"] == pytest.approx(abs_err / 50)
        assert m["RMSE"] == pytest.approx(np.sqrt(sq_err / 50))
        assert m["MAPE"] == pytest.approx(100 * np.mean(pct))
        assert m["MAPE_excluded"] == excluded >= 3

    def test_horizons(self, rng):
        pred, truth = rng.normal(size=(4, 3, 12)), rng.normal(size=(4, 3, 12))
        out = fc.horizon_metrics(pred, truth)
        assert sorted(out) == ["12", "3", "6", "average"]
        assert out["3"]["MAE"] == pytest.approx(np.mean(np.abs(pred[..., 2] - truth[..., 2])))
        per = [np.mean(np.abs(pred[..., h] - truth[..., h])) for h in range(12)]
        assert out["average"]["MAE"] == pytest.approx(np.mean(per))
