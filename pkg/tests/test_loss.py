import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from succinct.descriptors import MatchSet
from succinct.extraction import InterestPointSet
from succinct.geometry import INLIER, OUTLIER, UNLABELED, LabeledMatches
from succinct.loss import (
    LossUndefinedError,
    loss_gradient,
    rank_loss,
    rank_targets,
    reinforcement_loss,
    total_loss,
)


def point_set(S, xy):
    xy = np.asarray(xy, dtype=np.int64).reshape(-1, 2)
    return InterestPointSet(xy, S[xy[:, 1], xy[:, 0]].copy(), 1.0)


def labeled(idx0, idx1, labels):
    n = len(idx0)
    m = MatchSet(np.asarray(idx0, dtype=np.int64), np.asarray(idx1, dtype=np.int64), np.zeros(n, dtype=np.int64))
    return LabeledMatches(m, np.asarray(labels, dtype=np.int64))


def hand_example():
    """Five points per image; image 0 carries the scores of the worked example."""
    S0 = np.zeros((1, 5))
    S0[0] = [0.9, 0.7, 0.6, 0.2, 0.5]
    S1 = np.zeros((1, 5))
    S1[0] = [0.9, 0.8, 0.7, 0.6, 0.1]
    xy = [[x, 0] for x in range(5)]
    P0, P1 = point_set(S0, xy), point_set(S1, xy)
    # point 0 matches rank 4 on the other side, point 1 matches rank 2
    lab = labeled([0, 1, 2, 3], [3, 1, 0, 2], [INLIER, INLIER, OUTLIER, OUTLIER])
    return S0, S1, P0, P1, lab


def test_reinforcement_cases():
    S = np.array([[0.7, 0.7, 0.7]])
    P = point_set(S, [[0, 0], [1, 0], [2, 0]])
    lab = labeled([0, 1], [0, 1], [INLIER, OUTLIER])
    np.testing.assert_allclose(reinforcement_loss(S, P, lab, 0), [0.3, 0.7, 0.0])


def test_unlabeled_matches_contribute_nothing():
    S = np.array([[0.7, 0.4]])
    P = point_set(S, [[0, 0], [1, 0]])
    lab = labeled([0, 1], [0, 1], [INLIER, UNLABELED])
    assert reinforcement_loss(S, P, lab, 0).tolist() == pytest.approx([0.3, 0.0])
    assert rank_loss(S, P, P, lab, 0)[1] == 0.0


def test_rank_term_hand_example():
    S0, S1, P0, P1, lab = hand_example()
    terms = rank_loss(S0, P0, P1, lab, 0)
    np.testing.assert_allclose(terms, [0.16, 0, 0, 0, 0], atol=1e-15)
    p, q = rank_targets(P0, P1, lab, 0)
    assert p.tolist() == [0, 1] and q.tolist() == [4, 1]


def test_total_hand_example():
    S0, S1, P0, P1, lab = hand_example()
    b = total_loss(S0, P0, P1, lab, 0)
    np.testing.assert_allclose(b.reinforcement[:4], [0.1, 0.3, 0.6, 0.2], atol=1e-15)
    assert b.total == pytest.approx(0.38, abs=1e-12)
    assert b.total == pytest.approx(b.reinforcement.sum() / 4 + b.rank.sum() / 2, abs=1e-9)


def test_rank_gradient_hand_example():
    S0, S1, P0, P1, lab = hand_example()
    g = loss_gradient(S0, P0, P1, lab, 0)
    # reinforcement -1/4 at the inlier, rank +2*0.4/2 there and -2*0.4/2 at its target
    assert g[0, 0] == pytest.approx(-0.25 + 0.4)
    assert g[0, 4] == pytest.approx(-0.4)
    assert g[0, 1] == pytest.approx(-0.25)
    assert g[0, 2] == pytest.approx(0.25) and g[0, 3] == pytest.approx(0.25)


def test_consistent_ranks_give_zero_rank_terms():
    S = np.array([[0.9, 0.5, 0.3]])
    P = point_set(S, [[0, 0], [1, 0], [2, 0]])
    lab = labeled([0, 1, 2], [0, 1, 2], [INLIER] * 3)
    assert not rank_loss(S, P, P, lab, 0).any()


def test_global_minimum_and_outliers_only():
    S = np.array([[1.0, 1.0, 0.0]])
    P = point_set(S, [[0, 0], [1, 0], [2, 0]])
    lab = labeled([0, 1, 2], [0, 1, 2], [INLIER, INLIER, OUTLIER])
    assert total_loss(S, P, P, lab, 0).total == 0.0
    S = np.array([[0.2, 0.6]])
    P = point_set(S, [[0, 0], [1, 0]])
    lab = labeled([0, 1], [0, 1], [OUTLIER, OUTLIER])
    assert total_loss(S, P, P, lab, 0).total == pytest.approx(0.4)


def test_single_inlier_gradient():
    S = np.full((3, 3), 0.5)
    P = point_set(S, [[1, 1]])
    lab = labeled([0], [0], [INLIER])
    g = loss_gradient(S, P, P, lab, 0)
    expect = np.zeros((3, 3))
    expect[1, 1] = -1.0
    np.testing.assert_array_equal(g, expect)


def test_errors():
    S = np.array([[0.5, 0.5]])
    P = point_set(S, [[0, 0], [1, 0]])
    with pytest.raises(LossUndefinedError):
        total_loss(S, P, P, labeled([0], [0], [UNLABELED]), 0)
    with pytest.raises(LossUndefinedError):
        loss_gradient(S, P, P, labeled([], [], []), 0)
    with pytest.raises(ValueError):
        reinforcement_loss(np.array([[1.5, 0.5]]), P, labeled([0], [0], [INLIER]), 0)
    big = point_set(np.full((1, 4), 0.5), [[0, 0], [1, 0], [2, 0], [3, 0]])
    with pytest.raises(ValueError):
        rank_targets(P, big, labeled([0], [3], [INLIER]), 0)


def random_instance(seed, h=8, w=9):
    rng = np.random.default_rng(seed)
    S0 = rng.uniform(0.05, 0.95, size=(h, w))
    S1 = rng.uniform(0.05, 0.95, size=(h, w))
    n = int(rng.integers(2, 12))
    flat0 = rng.choice(h * w, n, replace=False)
    flat1 = rng.choice(h * w, n, replace=False)
    P0 = point_set(S0, np.column_stack([flat0 % w, flat0 // w]))
    P1 = point_set(S1, np.column_stack([flat1 % w, flat1 // w]))
    m = int(rng.integers(1, n + 1))
    idx0 = rng.choice(n, m, replace=False)
    idx1 = rng.choice(n, m, replace=False)
    labels = rng.choice([INLIER, OUTLIER, UNLABELED], size=m, p=[0.5, 0.35, 0.15])
    labels[0] = INLIER
    return S0, S1, P0, P1, labeled(idx0, idx1, labels)


def finite_difference(S, f, h=1e-4):
    g = np.zeros_like(S)
    for idx in np.ndindex(S.shape):
        a, b = S.copy(), S.copy()
        a[idx] += h
        b[idx] -= h
        g[idx] = (f(a) - f(b)) / (2 * h)
    return g


@given(st.integers(0, 2**32 - 1), st.sampled_from([0, 1]))
def test_gradient_matches_finite_differences(seed, side):
    S0, S1, P0, P1, lab = random_instance(seed)
    S, Pi, Pj = (S0, P0, P1) if side == 0 else (S1, P1, P0)
    g = loss_gradient(S, Pi, Pj, lab, side)
    fd = finite_difference(S, lambda T: total_loss(T, Pi, Pj, lab, side).total)
    nz = (g != 0) | (fd != 0)
    assert np.all(np.abs(g[nz] - fd[nz]) <= 1e-3 * np.maximum(np.abs(fd[nz]), 1e-8) + 1e-10)
    # nonzero only at extracted pixels
    mask = np.zeros(S.shape, dtype=bool)
    mask[Pi.xy[:, 1], Pi.xy[:, 0]] = True
    assert not g[~mask].any()


@given(st.integers(0, 2**32 - 1))
def test_total_is_nonnegative_and_reproducible(seed):
    S0, S1, P0, P1, lab = random_instance(seed)
    b = total_loss(S0, P0, P1, lab, 0)
    assert b.total >= 0
    expect = b.reinforcement.sum() / (b.n_inliers + b.n_outliers) + b.rank.sum() / b.n_inliers
    assert b.total == pytest.approx(expect, abs=1e-9)


def test_rank_terms_depend_only_on_extracted_scores():
    S0, S1, P0, P1, lab = hand_example()
    T0 = S0 ** 0.5  # different map, then restore the extracted values
    T0[P0.xy[:, 1], P0.xy[:, 0]] = S0[P0.xy[:, 1], P0.xy[:, 0]]
    np.testing.assert_array_equal(rank_loss(S0, P0, P1, lab, 0), rank_loss(T0, P0, P1, lab, 0))
