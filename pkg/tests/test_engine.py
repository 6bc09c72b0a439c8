import math
import tracemalloc

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvpdma.dlm import PriorSpec, init_state, log_pred_density, predict_moments
from tvpdma.engine import (
    DmaConfig,
    DmaEngine,
    MixtureProbs,
    _argmax_lowest,
    delta_posterior_mean,
    dms_size,
    expected_size,
    forgetting_update,
    inclusion_probs,
    posterior_theta,
    run_dma,
    top_prob_stats,
    variance_decomposition,
)
from tvpdma.errors import ConfigError, DataError
from tvpdma.models import KITCHEN_SINK, enumerate_models

from oracles import naive_dma, static_bma

SERIES = ["yhat_dma", "yhat_dms", "lpdf_dma", "lpdf_dms", "incl", "theta", "size",
          "size_dms", "deltahat", "pmt", "vdec", "highmp", "highmp_top01"]


def random_data(seed, T, n, scale=1.0):
    rng = np.random.default_rng(seed)
    F = np.column_stack([np.ones(T), rng.standard_normal((T, n - 1))])
    beta = rng.standard_normal(n) * scale
    y = F @ beta + 0.5 * rng.standard_normal(T)
    return y, F


class TestForgetting:
    def test_uniform_fixed_point(self):
        p = MixtureProbs.uniform(5, 3)
        out = forgetting_update(p, 0.7)
        np.testing.assert_allclose(out.cond, 0.2, rtol=1e-15)
        np.testing.assert_allclose(out.dprob, 1 / 3, rtol=1e-15)

    def test_alpha_one_identity(self):
        p = MixtureProbs.from_probs([[0.8, 0.3], [0.2, 0.7]], [0.6, 0.4])
        out = forgetting_update(p, 1.0)
        np.testing.assert_array_equal(out.cond, p.cond)
        np.testing.assert_array_equal(out.dprob, p.dprob)

    def test_square_root_flattening(self):
        out = forgetting_update(MixtureProbs.from_probs([[0.8], [0.2]], [1.0]), 0.5)
        np.testing.assert_allclose(out.cond[:, 0], [2 / 3, 1 / 3], rtol=1e-14)

    def test_underflow_resets_column(self, caplog):
        p = MixtureProbs(np.array([[-np.inf, 0.0], [-np.inf, -1.0]]), np.array([0.0, -np.inf]))
        out = forgetting_update(p, 0.5)
        np.testing.assert_allclose(out.cond[:, 0], [0.5, 0.5])
        assert "underflow" in caplog.text

    def test_bad_alpha(self):
        with pytest.raises(ConfigError):
            forgetting_update(MixtureProbs.uniform(2, 1), 0.0)


class TestAggregates:
    def test_inclusion_single_model(self):
        space = enumerate_models(3, keep=KITCHEN_SINK)
        space = type(space)(n=3, keep=frozenset(), masks=np.array([0b101], dtype=np.uint64))
        incl = inclusion_probs(MixtureProbs.uniform(1, 2), space)
        np.testing.assert_allclose(incl, [1.0, 0.0, 1.0])

    def test_sizes_tie_break(self):
        space = enumerate_models(2)
        # masks 01, 10, 11 -> sizes 1, 1, 2; put equal mass on 01 and 11
        probs = MixtureProbs.from_probs([[0.5], [0.0], [0.5]], [1.0])
        assert expected_size(probs, space) == pytest.approx(1.5)
        assert dms_size(probs, space) == 1
        space3 = enumerate_models(3, keep=[0])
        # masks 001, 011, 101, 111 with mass on 001 and 111
        probs = MixtureProbs.from_probs([[0.5], [0.0], [0.0], [0.5]], [1.0])
        assert expected_size(probs, space3) == pytest.approx(2.0)
        assert dms_size(probs, space3) == 1

    def test_size_brute_force_k7(self):
        rng = np.random.default_rng(0)
        space = enumerate_models(3)
        cond = rng.dirichlet(np.ones(7), size=2).T
        dprob = rng.dirichlet(np.ones(2))
        probs = MixtureProbs.from_probs(cond, dprob)
        total = 0.0
        for i, mask in enumerate(space.masks):
            for j in range(2):
                total += bin(int(mask)).count("1") * cond[i, j] * dprob[j]
        assert expected_size(probs, space) == pytest.approx(total, rel=1e-13)

    def test_theta_single_and_average(self):
        space = type(enumerate_models(1))(n=3, keep=frozenset(), masks=np.array([0b101], dtype=np.uint64))
        theta = posterior_theta([np.array([[2.0, -1.0]])], MixtureProbs.uniform(1, 1), space)
        np.testing.assert_allclose(theta, [2.0, 0.0, -1.0])
        space2 = enumerate_models(2, keep=[0])  # masks 01, 11
        theta = posterior_theta([np.array([[0.0]]), np.array([[0.0, 2.0]])], MixtureProbs.uniform(2, 1), space2)
        assert theta[1] == pytest.approx(1.0)

    def test_vdec_degenerate(self):
        v = variance_decomposition(np.array([[1.3]]), np.array([[0.4]]), np.array([[0.2]]),
                                   MixtureProbs.uniform(1, 1))
        assert v[2] == 0.0 and v[3] == 0.0
        assert v[4] == pytest.approx(0.6, rel=1e-15)

    def test_top_prob(self):
        assert top_prob_stats(np.array([1.0])) == (1.0, 1.0)
        hi, top = top_prob_stats(np.full(10, 0.1))
        assert hi == pytest.approx(0.1) and top == pytest.approx(0.1)

    @given(seed=st.integers(0, 2**32 - 1))
    def test_top_prob_sort_oracle(self, seed):
        p = np.random.default_rng(seed).dirichlet(np.ones(20))
        hi, top = top_prob_stats(p)
        ordered = sorted(p, reverse=True)
        assert hi == ordered[0]
        assert top == pytest.approx(ordered[0] + ordered[1], rel=1e-14)

    def test_deltahat(self):
        assert delta_posterior_mean(MixtureProbs.uniform(1, 1), [0.95]) == pytest.approx(0.95)
        assert delta_posterior_mean(MixtureProbs.uniform(1, 2), [0.9, 1.0]) == pytest.approx(0.95)
        rng = np.random.default_rng(1)
        dp = rng.dirichlet(np.ones(5))
        grid = np.linspace(0.9, 1.0, 5)
        expected = sum(g * w for g, w in zip(grid, dp))
        assert delta_posterior_mean(MixtureProbs.from_probs(np.ones((1, 5)), dp), grid) == pytest.approx(expected, rel=1e-14)

    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
    def test_dms_argmax_scale_invariant(self, seed, scale):
        rng = np.random.default_rng(seed)
        w = rng.integers(1, 4, size=12).astype(float)  # small ints force ties
        keys = rng.permutation(12)
        assert _argmax_lowest(w, keys) == _argmax_lowest(w * scale, keys)


class TestRun:
    def test_single_model_single_delta(self):
        y, F = random_data(0, 20, 2)
        out = run_dma(y, F, DmaConfig(delta_grid=(0.97,), alpha=0.99, keep=KITCHEN_SINK))
        state = init_state(2, PriorSpec())
        from tvpdma.dlm import update_state
        for t in range(20):
            pm = predict_moments(state, F[t], 0.97)
            assert out.yhat_dma[t] == pytest.approx(pm.yhat, rel=1e-12, abs=1e-12)
            assert out.lpdf_dma[t] == pytest.approx(log_pred_density(pm, y[t]), rel=1e-12)
            assert out.vdec[t, 4] == pytest.approx(pm.q, rel=1e-12)
            assert out.vdec[t, 2] == 0.0 and out.vdec[t, 3] == 0.0
            state = update_state(state, F[t], y[t], 0.97)
        np.testing.assert_array_equal(out.incl, 1.0)
        np.testing.assert_array_equal(out.pmt, 1.0)

    def test_matches_naive_reference(self):
        y, F = random_data(5, 50, 3)
        deltas = (0.9, 0.97)
        out = run_dma(y, F, DmaConfig(delta_grid=deltas, alpha=0.95))
        ref = naive_dma(y, F, deltas, 0.95)
        for key in SERIES:
            np.testing.assert_allclose(getattr(out, key), ref[key], rtol=1e-12, atol=1e-12, err_msg=key)

    def test_matches_naive_reference_with_keep(self):
        y, F = random_data(6, 40, 4)
        deltas = (0.95, 1.0)
        out = run_dma(y, F, DmaConfig(delta_grid=deltas, alpha=0.99, keep=[0, 2]))
        ref = naive_dma(y, F, deltas, 0.99, keep=(0, 2))
        for key in SERIES:
            np.testing.assert_allclose(getattr(out, key), ref[key], rtol=1e-12, atol=1e-12, err_msg=key)
        np.testing.assert_array_equal(out.incl[:, [0, 2]], 1.0)

    def test_static_bma_oracle(self):
        y, F = random_data(11, 60, 3)
        out = run_dma(y, F, DmaConfig(delta_grid=(1.0,), alpha=1.0))
        ref = static_bma(y, F)
        np.testing.assert_allclose(out.yhat_dma, ref["yhat_bma"], rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(out.lpdf_dma, ref["lpdf_bma"], rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(out.yhat_dms, ref["yhat_bms"], rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(out.lpdf_dms, ref["lpdf_bms"], rtol=1e-10, atol=1e-10)

    def test_probability_invariants_each_step(self):
        y, F = random_data(2, 60, 4, scale=3.0)
        eng = DmaEngine(4, DmaConfig(delta_grid=(0.9, 0.95, 1.0), alpha=0.9))
        for t in range(60):
            eng.step(F[t], y[t])
            cond, dprob = eng.probs.cond, eng.probs.dprob
            np.testing.assert_allclose(cond.sum(axis=0), 1.0, atol=1e-12)
            assert abs(dprob.sum() - 1.0) <= 1e-12
            assert cond.min() >= 0 and dprob.min() >= 0

    def test_one_step_measurability(self):
        y, F = random_data(3, 40, 3)
        cfg = DmaConfig(delta_grid=(0.9, 0.99), alpha=0.97)
        a = run_dma(y, F, cfg)
        y2 = y.copy()
        y2[25:] = 100.0
        b = run_dma(y2, F, cfg)
        for key in SERIES:
            # the density at step 25 scores y_25 itself; everything else is ex ante
            upto = 25 if key.startswith("lpdf") else 26
            np.testing.assert_array_equal(getattr(a, key)[:upto], getattr(b, key)[:upto], err_msg=key)

    def test_permutation_equivariance(self):
        y, F = random_data(4, 50, 4)
        perm = [0, 3, 1, 2]
        a = run_dma(y, F, DmaConfig(delta_grid=(0.95, 1.0), keep=[0]))
        b = run_dma(y, F[:, perm], DmaConfig(delta_grid=(0.95, 1.0), keep=[0]))
        np.testing.assert_allclose(b.incl, a.incl[:, perm], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(b.theta, a.theta[:, perm], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(b.yhat_dma, a.yhat_dma, rtol=1e-10, atol=1e-12)

    def test_thread_count_bit_identical(self, monkeypatch):
        import tvpdma.engine as eng_mod
        monkeypatch.setattr(eng_mod, "BLOCK_ENTRIES", 64)  # force many blocks
        y, F = random_data(8, 30, 5)
        runs = [run_dma(y, F, DmaConfig(delta_grid=(0.9, 1.0), threads=t)) for t in (1, 3, 8)]
        for key in SERIES:
            for r in runs[1:]:
                np.testing.assert_array_equal(getattr(runs[0], key), getattr(r, key), err_msg=key)

    def test_metadata_counts(self):
        y, F = random_data(0, 5, 6)
        out = run_dma(y, F, DmaConfig(delta_grid=np.round(np.arange(0.90, 1.001, 0.01), 2)))
        assert (out.k, out.k * out.d) == (63, 693)
        assert out.meta()["combinations_with_delta"] == 693

    def test_zellner_runs(self):
        y, F = random_data(9, 40, 3)
        out = run_dma(y, F, DmaConfig(delta_grid=(0.99,), prior=PriorSpec(kind="zellner", g=40)))
        assert np.all(np.isfinite(out.lpdf_dma))
        assert "Zellner" in out.prior

    def test_zellner_singular_gram(self):
        y, F = random_data(9, 30, 3)
        F[:, 2] = F[:, 1]  # collinear columns
        out = run_dma(y, F, DmaConfig(delta_grid=(0.99,), prior=PriorSpec(kind="zellner", g=30)))
        assert np.all(np.isfinite(out.yhat_dma))

    def test_zellner_covariances_stay_symmetric(self):
        from tvpdma.simulate import SimSpec, simulate_dlm
        y, F, _ = simulate_dlm(SimSpec(seed=0))
        eng = DmaEngine(6, DmaConfig(delta_grid=(0.9,), prior=PriorSpec(kind="zellner", g=1)), design=F)
        for t in range(500):
            eng.step(F[t], y[t])
        for blk in eng.blocks:
            np.testing.assert_array_equal(blk.C, np.swapaxes(blk.C, -1, -2))
            assert np.linalg.eigvalsh(blk.C).min() > 0

    def test_rejects_missing(self):
        y, F = random_data(0, 10, 2)
        F[3, 1] = np.nan
        with pytest.raises(DataError):
            run_dma(y, F, DmaConfig())

    @pytest.mark.parametrize("kw", [{"delta_grid": ()}, {"delta_grid": (1.0, 0.9)},
                                    {"delta_grid": (1.1,)}, {"alpha": 1.5}, {"burn": -1}])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            DmaConfig(**kw)


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(1, 4),
    deltas=st.lists(st.sampled_from([0.8, 0.9, 0.95, 0.99, 1.0]), min_size=1, max_size=3, unique=True),
    alpha=st.floats(0.5, 1.0),
    T=st.integers(1, 25),
    scale=st.sampled_from([0.1, 1.0, 10.0, 1e3]),
)
def test_mixture_invariants_property(seed, n, deltas, alpha, T, scale):
    y, F = random_data(seed, T, n, scale=scale)
    eng = DmaEngine(n, DmaConfig(delta_grid=tuple(sorted(deltas)), alpha=alpha))
    for t in range(T):
        st_ = eng.step(F[t], y[t])
        cond, dprob = eng.probs.cond, eng.probs.dprob
        assert np.all(np.abs(cond.sum(axis=0) - 1.0) <= 1e-12)
        assert abs(dprob.sum() - 1.0) <= 1e-12
        assert cond.min() >= 0 and dprob.min() >= 0
        v = st_.vdec
        assert np.all(v >= 0)
        assert abs(v[4] - v[:4].sum()) <= 1e-10 * abs(v[4])
        assert np.all((st_.incl >= 0) & (st_.incl <= 1 + 1e-12))
        assert 1 - 1e-12 <= st_.size <= n + 1e-12
        assert st_.highmp <= st_.highmp_top01 <= 1 + 1e-12


def test_state_memory_does_not_grow_with_T():
    y, F = random_data(1, 400, 6)
    cfg = DmaConfig(delta_grid=(0.9, 0.95, 1.0))
    peaks = []
    for T in (50, 400):
        tracemalloc.start()
        run_dma(y[:T], F[:T], cfg)
        peaks.append(tracemalloc.get_traced_memory()[1])
        tracemalloc.stop()
    # a T x k x d array of doubles for the extra 350 steps would add 350*63*3*8 bytes
    growth = peaks[1] - peaks[0]
    assert growth < 350 * 63 * 3 * 8 / 4
    # what remains is O(T n) output
    assert growth < 350 * 40 * 8 * 2
