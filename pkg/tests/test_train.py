import numpy as np
import pytest

from conftest import textured
from succinct.pipeline import PipelineConfig
from succinct.scorenet import AdamState, FcnConfig, init_params
from succinct.synthetic import Trajectory, render_synthetic
from succinct.train import TrainPair, inlier_rank_correlation, train, train_iteration

CFG = PipelineConfig(n=100, nms_radius=4, method="klt")


def small_net(seed=0):
    return init_params(FcnConfig(depth=2, conv_channels=4, deconv_channels=5, seed=seed))


def same(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a.tensors(), b.tensors()))


def test_identical_images_have_no_outliers():
    img = textured(64, 64, seed=3)
    p = small_net()
    q, st, log = train_iteration(p, AdamState.for_params(p), TrainPair(img, img), CFG)
    assert not log.skipped
    assert log.n_inliers > 5 and log.n_outliers <= 0.05 * log.n_inliers
    assert not same(p, q) and st.step == 2


def test_no_matches_skips_and_keeps_params():
    # too small for any descriptor to fit, so nothing can match
    tiny = textured(24, 24)
    p = small_net()
    st0 = AdamState.for_params(p)
    q, st, log = train_iteration(p, st0, TrainPair(tiny, tiny), CFG)
    assert log.skipped and log.reason
    assert q is p and st is st0


def test_p3p_needs_depth():
    img = textured(32, 32)
    p = small_net()
    with pytest.raises(ValueError):
        train_iteration(p, AdamState.for_params(p), TrainPair(img, img), PipelineConfig(n=50, method="p3p"))


@pytest.fixture(scope="module")
def seq_pairs():
    sc = render_synthetic(2, n_points=600, trajectory=Trajectory(n_frames=5, step=0.05, lateral=0.05), size=(80, 60))
    return [TrainPair(sc.images[i], sc.images[i + 1], sc.depths[i], i, i + 1) for i in range(4)], sc.K


def test_training_is_deterministic(seq_pairs):
    pairs, _ = seq_pairs
    a = train(small_net(), pairs, CFG, 4, seed=7)
    b = train(small_net(), pairs, CFG, 4, seed=7)
    assert same(a.params, b.params)
    assert [lg.as_dict() for lg in a.logs] == [lg.as_dict() for lg in b.logs]


def test_p3p_training_runs(seq_pairs):
    pairs, K = seq_pairs
    cfg = PipelineConfig(n=100, nms_radius=4, method="p3p")
    res = train(small_net(), pairs, cfg, 2, seed=1, K=K)
    assert len(res.logs) == 2


def test_rank_correlation_in_range(seq_pairs):
    pairs, _ = seq_pairs
    rho = inlier_rank_correlation(small_net(), pairs, CFG)
    assert np.isnan(rho) or -1.0 <= rho <= 1.0


def test_train_rejects_empty():
    with pytest.raises(ValueError):
        train(small_net(), [], CFG, 1)
