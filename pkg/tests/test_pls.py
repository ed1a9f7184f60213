import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from revspec import pls
from revspec.design import simplex_lattice, interior_points
from revspec.errors import AxisMismatch, FoldTooSmall, ZeroVarianceColumn
from revspec.pls import CvScheme, cross_validate, fit_nipals, fit_pls1, metrics, predict, predict_pls1, rmse
from revspec.spectra import SpectrumMatrix, WavenumberAxis
from revspec.synth import generate_material, mix_batch


@pytest.fixture(scope="module")
def materials4(axis):
    return [generate_material(10 + i, axis, 6) for i in range(4)]


def design_data(materials, design_points, noise=0.0, seed=0):
    X = mix_batch(materials, design_points, noise, seed, axis=WavenumberAxis.default())
    return X, 100.0 * np.asarray(design_points)


def rank_k_data(s=25, n=40, k=3, r=2, seed=0):
    rng = np.random.default_rng(seed)
    T = rng.normal(size=(s, k))
    X = T @ rng.normal(size=(k, n)) + rng.normal(size=n)
    Y = T @ rng.normal(size=(k, r)) + rng.normal(size=r)
    return X, Y


def test_exact_linear_case():
    X, Y = rank_k_data()
    m = fit_nipals(X, Y, 3)
    assert rmse(Y, m.fitted).max() <= 1e-8


def test_zero_lv_predicts_means():
    X, Y = rank_k_data()
    m = fit_nipals(X, Y, 0)
    assert np.allclose(predict(m, X), Y.mean(axis=0), atol=1e-12)
    assert np.allclose(rmse(Y, m.fitted), Y.std(axis=0), rtol=1e-12)


def test_noise_free_design_spectra(materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 2).points)
    assert len(X) == 10
    m = fit_nipals(X, Y, 4)
    assert rmse(Y, predict(m, X)).max() <= 1e-6


def test_rank_exhaustion_truncates(materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 2).points)
    m = fit_nipals(X, Y, 8)
    assert m.n_lv == 3 and m.n_lv_requested == 8


def test_predict_reproduces_fit_bitwise(materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 3).points, 0.01, 3)
    m = fit_nipals(X, Y, 3)
    assert np.array_equal(predict(m, X), m.fitted)


def test_duplicate_rows_predict_identically(materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 3).points, 0.01, 3)
    m = fit_nipals(X, Y, 3)
    A = X.rows[[2, 2, 5]]
    P = predict(m, A)
    assert np.array_equal(P[0], P[1])


@pytest.mark.parametrize("seed", range(5))
def test_held_out_simplex_points(materials4, seed):
    X, Y = design_data(materials4, simplex_lattice(4, 3).points, 0.01, seed)
    cv = cross_validate(X, Y, lv_max=6)
    m = fit_nipals(X, Y, max(cv.selected, 3))
    test_pts = np.vstack(interior_points(4)[:2])
    Xt, Yt = design_data(materials4, test_pts, 0.01, 100 + seed)
    err = np.abs(predict(m, Xt) - Yt).max()
    assert err <= 2.0


def test_cv_finds_true_rank():
    X, Y = rank_k_data(k=3)
    cv = cross_validate(X, Y, lv_max=6)
    assert cv.selected == 3
    tot = cv.rmsecv_total
    assert np.all(np.diff(tot[:4]) < 0)
    assert tot[3] <= 1e-8


def test_pure_noise_selects_zero(materials4):
    X, _ = design_data(materials4, simplex_lattice(4, 3).points, 0.01, 1)
    hits = 0
    for seed in range(20):
        Y = np.random.default_rng(seed).normal(size=(len(X), 2))
        cv = cross_validate(X, Y, lv_max=5)
        hits += cv.selected == 0 and np.all(cv.q2y(cv.selected) <= 0)
    assert hits >= 18


def test_five_component_loo_selection(axis):
    mats = [generate_material(40 + i, axis, 6) for i in range(5)]
    X, Y = design_data(mats, simplex_lattice(5, 3).points, 0.01, 7)
    cv = cross_validate(X, Y, CvScheme("loo"), lv_max=8)
    assert cv.selected in {4, 5, 6}


def test_perfect_model_metrics():
    X, Y = rank_k_data(k=3)
    Xt, Yt = rank_k_data(s=10, k=3, seed=0)
    m = fit_nipals(X, Y, 3)
    rep = metrics(m, X, Y, Xt[:0], Yt[:0])
    assert np.all(rep.rmsec <= 1e-8)
    assert np.allclose(rep.r2y, 1, atol=1e-12) and np.allclose(rep.q2y, 1, atol=1e-10)
    assert rep.rmsep is None and any("EmptyTestSet" in f for f in rep.flags)
    rep = metrics(m, X[:20], Y[:20], X[20:], Y[20:])
    assert np.all(rep.rmsep <= 1e-6)


def test_mean_model_r2y_zero():
    X, Y = rank_k_data()
    rep = metrics(fit_nipals(X, Y, 0), X, Y)
    assert np.allclose(rep.r2y, 0, atol=1e-12)
    assert np.all(rep.q2y < 0)


def test_metrics_invariants(materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 3).points, 0.01, 2)
    rep = metrics(fit_nipals(X, Y, 3), X, Y)
    assert np.all(rep.rmsec >= 0) and np.all(rep.rmsecv >= 0) and np.all(rep.r2y <= 1)
    text = rep.to_csv()
    assert text.splitlines()[0] == "response,RMSEC,RMSECV,RMSEP,R2Y,Q2Y"
    assert len(text.splitlines()) == 5


def test_scores_orthogonal(materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 3).points, 0.01, 4)
    T = fit_nipals(X, Y, 8).x_scores
    for i in range(T.shape[1]):
        for j in range(i):
            assert abs(T[:, i] @ T[:, j]) <= 1e-8 * np.linalg.norm(T[:, i]) * np.linalg.norm(T[:, j])


def test_rmsec_monotone(materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 3).points, 0.01, 5)
    errs = [rmse(Y, fit_nipals(X, Y, a).fitted).mean() for a in range(9)]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_closure_consistency(materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 3).points, 0.01, 6)
    P = predict(fit_nipals(X, Y, 3), X)
    assert np.abs(P.sum(axis=1) - 100).max() <= 1.0


def test_determinism(materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 3).points, 0.01, 8)
    a = metrics(fit_nipals(X, Y, 3), X, Y)
    b = metrics(fit_nipals(X, Y, 3), X, Y)
    assert a.to_csv() == b.to_csv()


def test_save_load_round_trip(tmp_path, materials4):
    X, Y = design_data(materials4, simplex_lattice(4, 3).points, 0.01, 9)
    m = fit_nipals(X, Y, 3, response_names=["a", "b", "c", "d"])
    pls.save_model(tmp_path / "m", m)
    back = pls.load_model(tmp_path / "m")
    assert back == m
    assert np.array_equal(predict(back, X), predict(m, X))
    assert (tmp_path / "m" / "coefficients.csv").read_text().startswith("wavenumber_cm1,a,b,c,d")


def test_clip():
    X, Y = rank_k_data()
    m = fit_nipals(X, Y * 100, 3)
    P = predict(m, X * 5, clip=True)
    assert P.min() >= 0 and P.max() <= 100


def test_errors(materials4):
    X, Y = rank_k_data()
    with pytest.raises(ZeroVarianceColumn):
        fit_nipals(X, np.c_[Y[:, 0], np.ones(len(Y))], 2)
    with pytest.raises(ValueError):
        fit_nipals(X, Y, 40)
    m = fit_nipals(X, Y, 2)
    with pytest.raises(AxisMismatch):
        predict(m, X[:, :-1])
    Xs, Ys = design_data(materials4, simplex_lattice(4, 2).points)
    ms = fit_nipals(Xs, Ys, 2)
    other = SpectrumMatrix(WavenumberAxis.from_range(152, 3480, 4), Xs.rows)
    with pytest.raises(AxisMismatch):
        predict(ms, other)
    with pytest.raises(FoldTooSmall):
        cross_validate(X[:2], Y[:2], lv_max=0)
    with pytest.raises(FoldTooSmall):
        cross_validate(X[:10], Y[:10], lv_max=9)


@given(st.integers(1, 60), st.integers(2, 8))
def test_folds_partition(s, k):
    for scheme in (CvScheme("loo"), CvScheme("venetian", k)):
        held = np.concatenate(scheme.folds(s))
        assert sorted(held.tolist()) == list(range(s))


def test_default_scheme():
    assert CvScheme.default_for(30).kind == "loo"
    assert CvScheme.default_for(31) == CvScheme("venetian", 5)


def krylov_oracle(X, y, a):
    """PLS1 fit as least squares restricted to the Krylov space of X'X and X'y."""
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    v = Xc.T @ yc
    K = [v]
    for _ in range(a - 1):
        K.append(Xc.T @ (Xc @ K[-1]))
    Q, _ = np.linalg.qr(np.array(K).T)
    coef, *_ = np.linalg.lstsq(Xc @ Q, yc, rcond=None)
    return Xc @ (Q @ coef) + y.mean()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5))
def test_pls1_matches_krylov_oracle(seed, a):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 12))
    y = X @ rng.normal(size=12) + rng.normal(size=30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        (m,) = fit_pls1(X, y, a)
    expected = krylov_oracle(X, y, a)
    assert np.allclose(predict_pls1([m], X)[:, 0], expected, atol=1e-8 * np.abs(y).max())
