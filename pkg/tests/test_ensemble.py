import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from varpar import (
    InvalidContextError,
    NoResultError,
    PredictionVector,
    ScalingContext,
    TopKCompressor,
    VariantEnsemble,
    aggregate,
    scale,
    softmax,
    top_m_hit,
)
from varpar.ensemble import combine, scale_factor, top_m_hits
from varpar.harness import CIFAR10_TOP1, ExperimentConfig, build_setup, standalone_accuracy
from varpar.variants import RESOLUTIONS


def mp_softmax(v):
    e = [mpmath.exp(mpmath.mpf(x)) for x in v]
    s = mpmath.fsum(e)
    return [float(x / s) for x in e]


@pytest.mark.parametrize("v", [[0, 0], [1000, 0], [-1000, 1000], [0.1, 0.2, 0.7], [3, 1, -2, 0.5]])
def test_softmax_against_high_precision(v):
    np.testing.assert_allclose(softmax(v), mp_softmax(v), rtol=1e-12, atol=1e-300)


def test_scale_factor_examples():
    ctx = ScalingContext({96, 224}, {0.35}, 1.0)
    assert scale_factor(96, 0.35, ctx) == pytest.approx(96 / 224)
    assert scale_factor(224, 0.35, ctx) == 1.0
    ctx = ScalingContext({224}, {0.5, 0.35}, 1.0)
    assert scale_factor(224, 0.5, ctx) == pytest.approx(0.5 / 0.35)
    assert scale_factor(224, 0.5, ScalingContext({224}, {0.5, 0.35}, 2.0)) == pytest.approx((0.5 / 0.35) ** 2)


def test_uniform_context_leaves_rows_unchanged():
    ctx = ScalingContext({160}, {0.35})
    row = np.array([0.1, 0.9])
    np.testing.assert_array_equal(scale(row, 160, 0.35, ctx), row)


def test_invalid_context():
    with pytest.raises(InvalidContextError):
        ScalingContext(set(), {0.35})
    with pytest.raises(InvalidContextError):
        scale_factor(128, 0.35, ScalingContext({96}, {0.35}))


# Scores on a 2**-20 grid: distinct values stay distinguishable through exp, as float32 predictions do.
rows_strategy = st.integers(2, 12).flatmap(
    lambda C: st.integers(1, 7).flatmap(
        lambda V: arrays(np.int64, (V, C), elements=st.integers(0, 2**20)).map(lambda a: a / 2**20)
    )
)


def _ctx_for(n):
    rhos = [RESOLUTIONS[i % 7] for i in range(n)]
    return rhos, [0.35] * n, ScalingContext(set(rhos), {0.35})


@given(rows_strategy, st.randoms(use_true_random=False))
def test_permutation_invariance(rows, rnd):
    rhos, widths, ctx = _ctx_for(len(rows))
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    a = aggregate(rows, rhos, widths, ctx)
    b = aggregate(rows[perm], [rhos[i] for i in perm], widths, ctx)
    np.testing.assert_allclose(a.combined, b.combined, rtol=1e-12, atol=1e-15)


@given(rows_strategy)
def test_combined_is_distribution(rows):
    rhos, widths, ctx = _ctx_for(len(rows))
    res = aggregate(rows, rhos, widths, ctx)
    assert abs(res.combined.sum() - 1) <= 1e-6 and np.all(res.combined >= 0)
    assert res.top1 == int(np.argmax(res.combined))


@given(rows_strategy, st.data())
def test_every_subset_aggregates(rows, data):
    rhos, widths, ctx = _ctx_for(len(rows))
    keep = data.draw(st.lists(st.integers(0, len(rows) - 1), min_size=1, unique=True))
    res = aggregate(rows[keep], [rhos[i] for i in keep], [widths[i] for i in keep], ctx, variant_ids=keep)
    assert res.contributing_variant_ids == tuple(keep)


@given(arrays(np.float64, 8, elements=st.floats(0, 1)), st.floats(0.01, 10))
def test_scaling_keeps_order(row, s):
    p = softmax(row)
    assert list(np.argsort(-p * s, kind="stable")) == list(np.argsort(-p, kind="stable"))


@given(rows_strategy)
def test_single_row_keeps_its_argmax(rows):
    row = rows[0]
    res = aggregate(row, [96], [0.35], ScalingContext({96, 224}, {0.35}))
    assert res.top1 == int(np.argmax(row))


@given(rows_strategy, st.data())
def test_duplicate_agreeing_row_keeps_top1(rows, data):
    C = rows.shape[1]
    c = data.draw(st.integers(0, C - 1))
    rows = rows.copy()
    rows[:, c] = 2.0  # every row agrees on c
    rhos, widths, ctx = _ctx_for(len(rows))
    base = aggregate(rows, rhos, widths, ctx).top1
    dup = aggregate(np.vstack([rows, rows[:1]]), rhos + rhos[:1], widths + widths[:1], ctx).top1
    assert base == dup == c


def test_unanimous_one_hot():
    rows = np.eye(5)[[3, 3]]
    assert aggregate(rows, [96, 320], [0.35, 0.35], ScalingContext({96, 320}, {0.35})).top1 == 3


def test_no_rows_is_no_result():
    with pytest.raises(NoResultError):
        aggregate(np.empty((0, 4)), [], [], ScalingContext({96}, {0.35}))
    with pytest.raises(NoResultError):
        combine(np.ones((1, 2, 3)), [1, 1], present=[[False, False]])


def test_absent_rows_contribute_nothing():
    X = np.array([[[0.7, 0.2, 0.1], [np.nan] * 3, [0.1, 0.1, 0.8]]])
    full = combine(X, [0.5, 1.0, 1.0], present=[[True, False, True]])
    sub = combine(X[:, [0, 2]], [0.5, 1.0])
    np.testing.assert_array_equal(full, sub)
    masked = combine(np.nan_to_num(X), [0.5, 1, 1], present=[[True, False, True]], kept=np.nan_to_num(X) > 0)
    assert np.all(np.isfinite(masked))


def test_top_m_examples(golden_row):
    v = PredictionVector(1, np.array(golden_row, dtype=np.float32))
    assert top_m_hit(v, 3, 2) and not top_m_hit(v, 3, 1)
    assert all(top_m_hit(np.eye(6)[2], 2, m) for m in range(1, 7))
    assert all(top_m_hit(v, c, 6) for c in range(6))
    np.testing.assert_array_equal(top_m_hits(np.array([golden_row] * 2), [3, 0], 2), [True, False])


def _ensemble(V=3):
    return VariantEnsemble(resolutions=list(RESOLUTIONS[:V]), width_factors=[0.35] * V)


def test_estimator_params_and_clone():
    est = _ensemble()
    params = est.get_params()
    assert params["alpha"] == 1.0 and params["mask_untransmitted"] is False
    cloned = clone(est).set_params(alpha=2.0)
    assert cloned.alpha == 2.0 and est.alpha == 1.0


def test_estimator_matches_aggregate():
    X = np.random.default_rng(1).dirichlet(np.ones(6), size=(20, 3))
    est = _ensemble().fit(X)
    ctx = ScalingContext(set(RESOLUTIONS[:3]), {0.35})
    for x, p in zip(X, est.predict_proba(X)):
        np.testing.assert_allclose(p, aggregate(x, RESOLUTIONS[:3], [0.35] * 3, ctx).combined, rtol=1e-12)
    np.testing.assert_array_equal(est.predict(X), est.predict_proba(X).argmax(1))


def test_unfitted_estimator():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        _ensemble().predict(np.ones((1, 3, 4)))


def test_pipeline_with_compressor():
    X = np.random.default_rng(2).dirichlet(np.ones(6), size=(20, 3))
    y = X.sum(axis=1).argmax(1)
    pipe = make_pipeline(TopKCompressor(k=2), _ensemble())
    pipe.fit(X, y)
    ref = _ensemble().fit(X).predict(TopKCompressor(k=2).fit_transform(X))
    np.testing.assert_array_equal(pipe.predict(X), ref)
    assert 0.0 <= pipe.score(X, y) <= 1.0


def test_ensemble_not_worse_than_best_single():
    cfg = ExperimentConfig(num_samples=10_000, targets=CIFAR10_TOP1)
    setup = build_setup(cfg, seed=0)
    X, y = setup.predictions(), setup.labels
    best = max(standalone_accuracy(X, y))
    specs = setup.specs
    est = VariantEnsemble([s.input_resolution_rho for s in specs], [s.width_factor_d for s in specs])
    acc = est.fit(X).score(TopKCompressor(2).fit_transform(X), y)
    assert acc >= best - 0.002
