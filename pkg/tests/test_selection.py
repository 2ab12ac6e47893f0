import numpy as np
import pytest

from transmc.datasets import MaskedDataset
from transmc.estimators import PenaltyPolicy, fit_single
from transmc.selection import (
    SelectionConfig,
    benchmark_loss,
    fold_loss,
    s_trans_mc,
    select_sources,
    source_losses,
    split_folds,
)
from transmc.simulation import SamplingModel, sample_observations
from transmc.solver import SolverConfig
from _oracles import loss_double_loop

RNG = np.random.default_rng(777)
CFG = SolverConfig(max_iters=1000)


def uniform_task(T, n, seed, task_id=0, noise=0.3):
    model = SamplingModel(kind="uniform", m1=T.shape[0], m2=T.shape[1])
    return sample_observations(T, model, n, noise, seed, task_id=task_id)


# ---------------------------------------------------------------------------
# split_folds
# ---------------------------------------------------------------------------

def test_split_folds_divisible():
    ds = uniform_task(np.ones((4, 4)), 8, 1)
    folds = split_folds(ds, 4, seed=0)
    assert [f.n for f in folds] == [2, 2, 2, 2]


def test_split_folds_remainder_rule():
    ds = uniform_task(np.ones((4, 4)), 9, 1)
    folds = split_folds(ds, 4, seed=0)
    assert sorted(f.n for f in folds) == [2, 2, 2, 3]


def test_split_folds_partition_and_determinism():
    ds = uniform_task(np.ones((6, 5)), 23, 2)
    folds1 = split_folds(ds, 4, seed=99)
    folds2 = split_folds(ds, 4, seed=99)
    for f1, f2 in zip(folds1, folds2):
        assert np.array_equal(f1.rows, f2.rows)
        assert np.array_equal(f1.values, f2.values)
    # union of folds = original multiset of observations
    tagged = sorted(
        (r, c, v) for f in folds1 for r, c, v in zip(f.rows, f.cols, f.values)
    )
    original = sorted(zip(ds.rows, ds.cols, ds.values))
    assert tagged == original


def test_split_folds_rejects_tiny_dataset():
    ds = uniform_task(np.ones((3, 3)), 3, 1)
    with pytest.raises(ValueError):
        split_folds(ds, 4, seed=0)


# ---------------------------------------------------------------------------
# fold_loss
# ---------------------------------------------------------------------------

def test_fold_loss_zero_on_interpolant():
    T = RNG.standard_normal((4, 4))
    ds = uniform_task(T, 10, 3, noise=0.0)
    assert fold_loss(ds, T) == 0.0


def test_fold_loss_single_observation():
    ds = MaskedDataset(2, 2, [1], [1], [2.5])
    assert fold_loss(ds, np.zeros((2, 2))) == pytest.approx(6.25)


def test_fold_loss_matches_double_loop():
    T = RNG.standard_normal((5, 6))
    ds = uniform_task(T, 17, 4, noise=0.5)
    A = RNG.standard_normal((5, 6))
    assert fold_loss(ds, A) == pytest.approx(
        loss_double_loop(A, ds.rows, ds.cols, ds.values), abs=1e-12
    )


# ---------------------------------------------------------------------------
# benchmark_loss
# ---------------------------------------------------------------------------

def test_benchmark_loss_near_zero_in_easy_regime():
    T = np.outer([1.0, 2.0, -1.0, 0.5], [1.0, -0.5, 2.0])
    ds = uniform_task(T, 400, 5, noise=0.0)
    folds = split_folds(ds, 4, seed=1)
    losses, mean, sigma, fits = benchmark_loss(ds, folds, 1e-6, 10.0, CFG)
    assert mean <= 1e-4
    assert sigma <= 1e-4
    assert len(fits) == 4


def test_benchmark_sigma_closed_forms():
    # constant fold losses -> sigma 0; {1, 3} -> mean 2, sigma sqrt(2)
    losses = np.array([1.0, 3.0])
    mean = losses.mean()
    sigma_sample = np.sqrt(np.sum((losses - mean) ** 2) / (len(losses) - 1))
    assert mean == pytest.approx(2.0)
    assert sigma_sample == pytest.approx(np.sqrt(2.0))
    report = select_sources((1.0, 3.0), (), 1.0, 0.01, sigma_sample)
    assert report.benchmark == pytest.approx(2.0)
    assert report.sigma_hat == pytest.approx(np.sqrt(2.0))
    same = select_sources((5.0, 5.0, 5.0), (), 1.0, 0.01, 0.0)
    assert same.benchmark == pytest.approx(5.0)
    assert same.sigma_hat == 0.0


# ---------------------------------------------------------------------------
# source_losses
# ---------------------------------------------------------------------------

def test_source_loss_modes_agree_on_equal_folds():
    T = RNG.standard_normal((5, 4))
    ds = uniform_task(T, 20, 6, noise=0.2)
    folds = split_folds(ds, 4, seed=0)
    A = RNG.standard_normal((5, 4))
    full = source_losses(ds, [A], mode="full_target")
    folded = source_losses(ds, [A], folds=folds, mode="fold_averaged")
    assert full[0] == pytest.approx(folded[0], rel=1e-12)


def test_source_loss_near_zero_for_identical_dense_source():
    T = np.outer([1.0, -2.0, 0.5, 1.5], [2.0, 1.0, -1.0])
    target = uniform_task(T, 200, 30, 0, noise=0.0)
    source = uniform_task(T, 200, 31, 1, noise=0.0)
    est = fit_single(source, 1e-6, 10.0, CFG)
    (lk,) = source_losses(target, [est])
    assert lk <= 1e-4


def test_source_loss_zero_matrix_is_mean_square():
    T = RNG.standard_normal((4, 4))
    ds = uniform_task(T, 15, 7, noise=0.1)
    (lk,) = source_losses(ds, [np.zeros((4, 4))])
    assert lk == pytest.approx(float(np.mean(ds.values**2)))


def test_source_loss_orders_by_contrast():
    rng = np.random.default_rng(11)
    T = np.outer(rng.standard_normal(8), rng.standard_normal(6)) * 3
    close = T + 0.1 * rng.standard_normal(T.shape)
    far = T + 3.0 * rng.standard_normal(T.shape)
    wins = 0
    for rep in range(20):
        target = uniform_task(T, 150, (11, rep), 0, noise=0.3)
        fit_close = fit_single(uniform_task(close, 150, (12, rep), 1, noise=0.3),
                               0.02, 12.0, CFG)
        fit_far = fit_single(uniform_task(far, 150, (13, rep), 2, noise=0.3),
                             0.02, 12.0, CFG)
        la, lb = source_losses(target, [fit_close, fit_far])
        wins += la < lb
    assert wins >= 15


# ---------------------------------------------------------------------------
# select_sources
# ---------------------------------------------------------------------------

def test_select_all_when_losses_equal_benchmark():
    report = select_sources((2.0, 2.0, 2.0, 2.0), (2.0, 2.0), 1.0, 0.01, 0.0)
    assert report.selected == (1, 2)
    assert report.threshold == pytest.approx(0.01)


def test_select_threshold_arithmetic():
    # sigma 0, eps0 0.01, c_tilde 1, excess 0.02 -> excluded
    report = select_sources((1.0, 1.0), (1.02,), 1.0, 0.01, 0.0)
    assert report.selected == ()
    report = select_sources((1.0, 1.0), (1.005,), 1.0, 0.01, 0.0)
    assert report.selected == (1,)


def test_selection_rule_monotonicity():
    fold_losses = (1.0, 1.2, 0.8, 1.0)
    base = select_sources(fold_losses, (1.4, 1.9), 2.0, 0.05, 0.1)
    lower = select_sources(fold_losses, (1.2, 1.9), 2.0, 0.05, 0.1)
    assert set(base.selected) <= set(lower.selected)
    wider = select_sources(fold_losses, (1.4, 1.9), 3.0, 0.05, 0.1)
    assert set(base.selected) <= set(wider.selected)
    wider_eps = select_sources(fold_losses, (1.4, 1.9), 2.0, 0.5, 0.1)
    assert set(base.selected) <= set(wider_eps.selected)


def test_selection_relabel_invariance():
    fold_losses = (1.0, 1.1, 0.9, 1.0)
    lks = (1.05, 3.0, 1.1)
    report = select_sources(fold_losses, lks, 2.0, 0.05, 0.1)
    perm = (2, 0, 1)  # relabeled source order
    permuted = select_sources(fold_losses, tuple(lks[i] for i in perm), 2.0, 0.05, 0.1)
    relabeled = tuple(sorted(perm.index(k - 1) + 1 for k in report.selected))
    assert permuted.selected == relabeled


def test_selection_report_invariants():
    report = select_sources((1.0, 2.0, 3.0), (2.5, 1.0), 1.5, 0.2, 0.7)
    assert report.benchmark == pytest.approx(np.mean(report.fold_losses), abs=1e-12)
    assert report.threshold == pytest.approx(1.5 * max(0.7, 0.2))
    expected = tuple(
        k + 1 for k, lk in enumerate(report.source_losses)
        if lk - report.benchmark <= report.threshold
    )
    assert report.selected == expected


# ---------------------------------------------------------------------------
# s_trans_mc
# ---------------------------------------------------------------------------

def test_s_trans_mc_no_sources_degenerates():
    T = np.outer([1.0, -1.0, 2.0], [0.5, 1.0, -0.5, 2.0])
    target = uniform_task(T, 120, 8, noise=0.1)
    policy = PenaltyPolicy(a=5.0, mode="explicit", lam1=0.02, lam2=0.02, v=0.1)
    cfg = SelectionConfig(J=4, seed=3)
    report, est = s_trans_mc(target, [], cfg, policy, CFG)
    assert report.selected == ()
    assert est.stage == "combined"


def test_s_trans_mc_determinism():
    rng = np.random.default_rng(14)
    T = np.outer(rng.standard_normal(6), rng.standard_normal(5)) * 2
    target = uniform_task(T, 90, (14, 0), 0)
    sources = [uniform_task(T, 60, (14, k), k) for k in (1, 2)]
    policy = PenaltyPolicy(a=8.0, mode="explicit", lam1=0.02, lam2=0.03, v=0.3)
    cfg = SelectionConfig(J=3, seed=5, epsilon0=0.5)
    r1, e1 = s_trans_mc(target, sources, cfg, policy, CFG)
    r2, e2 = s_trans_mc(target, sources, cfg, policy, CFG)
    assert r1 == r2
    assert np.array_equal(e1.matrix, e2.matrix)


def test_s_trans_mc_all_pass_matches_trans_mc():
    from transmc.estimators import trans_mc

    rng = np.random.default_rng(15)
    T = np.outer(rng.standard_normal(6), rng.standard_normal(5)) * 2
    target = uniform_task(T, 100, (15, 0), 0)
    sources = [uniform_task(T, 70, (15, k), k) for k in (1, 2, 3)]
    policy = PenaltyPolicy(a=8.0, mode="explicit", lam1=0.02, lam2=0.03, v=0.3)
    cfg = SelectionConfig(J=4, seed=6, epsilon0=100.0)  # threshold passes everything
    report, est = s_trans_mc(target, sources, cfg, policy, CFG)
    assert report.selected == (1, 2, 3)
    direct = trans_mc(target, sources, policy, CFG)
    assert np.array_equal(est.matrix, direct.matrix)


def test_selection_config_validation():
    with pytest.raises(ValueError):
        SelectionConfig(J=1)
    with pytest.raises(ValueError):
        SelectionConfig(epsilon0=-0.1)
    with pytest.raises(ValueError):
        SelectionConfig(c_tilde=0.0)
    with pytest.raises(ValueError):
        SelectionConfig(source_loss_mode="bogus")
    with pytest.raises(ValueError):
        SelectionConfig(sigma_mode="bogus")
