import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import textured
from oracles import adam_reference, fcn_forward_loops
from succinct.scorenet import (
    AdamState,
    FcnConfig,
    FcnParams,
    _forward_cache,
    adam_step,
    backward,
    forward,
    init_params,
    load_checkpoint,
    relu_gates,
    save_checkpoint,
)

SMALL = dict(conv_channels=4, deconv_channels=5)


def small_params(depth=2, seed=0, bias_scale=0.1):
    p = init_params(FcnConfig(depth=depth, seed=seed, **SMALL))
    rng = np.random.default_rng(seed + 100)
    for b in p.biases:
        b[:] = rng.normal(0, bias_scale, size=b.shape)
    return p


def zeros_like(p: FcnParams) -> FcnParams:
    return FcnParams(p.config, [np.zeros_like(w) for w in p.weights], [np.zeros_like(b) for b in p.biases])


def test_config_validation():
    with pytest.raises(ValueError):
        FcnConfig(depth=3)
    with pytest.raises(ValueError):
        FcnConfig(depth=0)


def test_init_deterministic_and_bounded():
    a, b = init_params(FcnConfig(depth=2, seed=4)), init_params(FcnConfig(depth=2, seed=4))
    assert all(np.array_equal(x, y) for x, y in zip(a.tensors(), b.tensors()))
    assert a.config.layer_kinds == ["conv", "deconv", "final"]
    assert [w.shape for w in a.weights] == [(64, 1, 3, 3), (64, 128, 3, 3), (1, 128, 3, 3)]
    for w, fan_in in zip(a.weights, (9, 64 * 9, 128 * 9)):
        assert np.all(np.isfinite(w)) and np.abs(w).max() <= np.sqrt(6.0 / fan_in)
    assert not any(b.any() for b in a.biases)


def test_d4_shape_telescope():
    p = init_params(FcnConfig(depth=4, **SMALL))
    out, cache = _forward_cache(p, textured(32, 32))
    sizes = [cache[2 * i + 1].shape[1:] for i in range(4)]
    assert sizes == [(30, 30), (28, 28), (30, 30), (32, 32)]
    assert out.shape == (32, 32)


@given(st.integers(5, 20), st.integers(5, 20), st.sampled_from([2, 4]))
def test_output_shape_and_range(h, w, d):
    out = forward(small_params(d), textured(h, w))
    assert out.shape == (h, w)
    assert np.all((out > 0) & (out < 1))


def test_too_small_image():
    with pytest.raises(ValueError):
        forward(small_params(4), np.zeros((4, 10)))


def test_zero_weights_give_half():
    p = zeros_like(small_params())
    np.testing.assert_array_equal(forward(p, textured(9, 9)), 0.5)


def test_forward_matches_loop_oracle():
    p = small_params(2, seed=3)
    img = textured(8, 7, seed=3)
    ref = fcn_forward_loops(p.weights, p.biases, p.config.layer_kinds, img)
    np.testing.assert_allclose(forward(p, img), ref, atol=1e-12)


def test_forward_matches_loop_oracle_d4():
    p = small_params(4, seed=5)
    img = textured(9, 10, seed=1)
    ref = fcn_forward_loops(p.weights, p.biases, p.config.layer_kinds, img)
    np.testing.assert_allclose(forward(p, img), ref, atol=1e-12)


def test_backward_zero_upstream():
    p = small_params()
    img = textured(12, 12)
    g = backward(p, img, np.zeros((12, 12)))
    assert not any(t.any() for t in g.tensors())


def test_backward_shape_mismatch():
    with pytest.raises(ValueError):
        backward(small_params(), textured(12, 12), np.zeros((11, 12)))


def test_sigmoid_scaling_at_half_output():
    # with zero weights the output is 0.5 everywhere and d/d(final bias) = 0.25 * sum(upstream)
    p = zeros_like(small_params())
    up = np.random.default_rng(0).normal(size=(10, 10))
    g = backward(p, textured(10, 10), up)
    assert g.biases[-1][0] == pytest.approx(0.25 * up.sum())


@pytest.mark.parametrize("depth", [2, 4])
def test_backward_matches_finite_differences(depth):
    p = small_params(depth, seed=7)
    img = textured(12, 12, seed=2)
    up = np.random.default_rng(1).normal(size=(12, 12))
    gates = relu_gates(p, img)
    g = backward(p, img, up)
    h = 1e-4
    rng = np.random.default_rng(2)
    for li, (w, b) in enumerate(zip(p.weights, p.biases)):
        for which, arr, garr in (("w", w, g.weights[li]), ("b", b, g.biases[li])):
            flat = rng.choice(arr.size, min(arr.size, 12), replace=False)
            for k in flat:
                idx = np.unravel_index(k, arr.shape)
                plus, minus = p.copy(), p.copy()
                tgt_p = plus.weights[li] if which == "w" else plus.biases[li]
                tgt_m = minus.weights[li] if which == "w" else minus.biases[li]
                tgt_p[idx] += h
                tgt_m[idx] -= h
                fd = (np.sum(up * forward(plus, img, gates)) - np.sum(up * forward(minus, img, gates))) / (2 * h)
                an = garr[idx]
                assert abs(an - fd) <= 1e-3 * max(abs(fd), 1e-6), (li, which, idx, an, fd)


def test_adam_zero_gradient_keeps_params():
    p = small_params()
    st0 = AdamState.for_params(p)
    q, st1 = adam_step(p, zeros_like(p), st0)
    assert all(np.array_equal(a, b) for a, b in zip(p.tensors(), q.tensors()))
    assert st1.step == 1 and st0.step == 0


def test_adam_first_step_is_lr():
    p = small_params()
    g = FcnParams(p.config, [np.full_like(w, 0.3) for w in p.weights], [np.full_like(b, -2.0) for b in p.biases])
    q, _ = adam_step(p, g, AdamState.for_params(p, lr=1e-5))
    for a, b, gg in zip(p.tensors(), q.tensors(), g.tensors()):
        np.testing.assert_allclose(a - b, 1e-5 * np.sign(gg), rtol=1e-6)


def test_adam_matches_reference():
    rng = np.random.default_rng(0)
    p = small_params()
    grads = [FcnParams(p.config, [rng.normal(size=w.shape) for w in p.weights],
                       [rng.normal(size=b.shape) for b in p.biases]) for _ in range(3)]
    st_ = AdamState.for_params(p, lr=1e-3)
    q = p
    for g in grads:
        q, st_ = adam_step(q, g, st_)
    flat = lambda f: np.concatenate([t.ravel() for t in f.tensors()])
    ref = adam_reference(flat(p), [flat(g) for g in grads], lr=1e-3)
    np.testing.assert_allclose(flat(q), ref, rtol=1e-12, atol=1e-15)


def test_adam_deterministic_and_rejects_nan():
    p = small_params()
    g = small_params(seed=9)
    a = adam_step(p, g, AdamState.for_params(p))
    b = adam_step(p, g, AdamState.for_params(p))
    assert all(np.array_equal(x, y) for x, y in zip(a[0].tensors(), b[0].tensors()))
    g.weights[0][0, 0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        adam_step(p, g, AdamState.for_params(p))


def test_checkpoint_round_trip(tmp_path):
    p = small_params(4, seed=2)
    path = tmp_path / "net.bin"
    save_checkpoint(path, p, [{"iteration": 0, "loss": 0.5}])
    q = load_checkpoint(path)
    assert q.config == p.config
    for a, b in zip(p.tensors(), q.tensors()):
        np.testing.assert_array_equal(a.astype(np.float32), b)
    assert (tmp_path / "net.bin.json").exists()
    # saving the loaded params reproduces the blob byte for byte
    save_checkpoint(tmp_path / "again.bin", q)
    assert path.read_bytes() == (tmp_path / "again.bin").read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(bad)
    p = small_params()
    save_checkpoint(tmp_path / "ok.bin", p)
    (tmp_path / "trunc.bin").write_bytes((tmp_path / "ok.bin").read_bytes()[:-4])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "trunc.bin")
