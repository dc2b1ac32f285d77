import math

import numpy as np
import pytest

from fedvad import detector, layout
from fedvad.detector import TrainBatch
from fedvad.errors import ProtocolError, ValidationError


def _reference_forward(theta, d, x):
    """Straight-line single-sample re-implementation of the wiring, written
    independently of the kernels (no batching, explicit loops where cheap)."""
    W1, b1, Wa1, ba1, W2, b2, Wa2, ba2, Wo, bo = layout.unpack(
        theta.astype(np.float64), d
    )

    def softmax(v):
        e = np.exp(v - v.max())
        return e / e.sum()

    h1 = np.maximum(W1 @ x + b1, 0.0)
    g1 = h1 * softmax(Wa1 @ h1 + ba1) * 512.0
    h2 = np.maximum(W2 @ g1 + b2, 0.0)
    g2 = h2 * softmax(Wa2 @ h2 + ba2) * 32.0
    s = float(Wo[0] @ g2 + bo[0])
    return 1.0 / (1.0 + math.exp(-s))


def test_param_count_closed_form():
    d = 64
    expected = 64 * 512 + 512 + 512 * 512 + 512 + 512 * 32 + 32 + 32 * 32 + 32 + 32 + 1
    assert layout.param_count(d) == expected == 313441
    assert layout.dim_from_count(expected) == 64


def test_init_deterministic_bitwise():
    a = detector.init_params(12, 99)
    b = detector.init_params(12, 99)
    np.testing.assert_array_equal(a, b)
    assert a.dtype == np.float32


def test_init_biases_zero_weights_bounded():
    d = 6
    params = detector.init_params(d, 5)
    tensors = layout.unpack(params, d)
    for t, shape in zip(tensors, layout.tensor_shapes(d)):
        if len(shape) == 1:
            assert np.all(t == 0.0)
        else:
            fan_out, fan_in = shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            assert np.all(np.abs(t) < lim)
            assert np.abs(t).max() > 0.5 * lim  # actually drawn, not zeros


def test_zero_params_score_half():
    d = 5
    params = np.zeros(layout.param_count(d), dtype=np.float32)
    x = np.random.default_rng(0).standard_normal((3, d)).astype(np.float32)
    np.testing.assert_array_equal(detector.forward(params, x), [0.5, 0.5, 0.5])


def test_eval_forward_deterministic():
    d = 7
    params = detector.init_params(d, 3)
    x = np.random.default_rng(1).standard_normal((4, d)).astype(np.float32)
    s1 = detector.forward(params, x, train_mode=False)
    s2 = detector.forward(params, x, train_mode=False)
    np.testing.assert_array_equal(s1, s2)


def test_forward_matches_reference_wiring(rng):
    d, B = 8, 4
    theta = (rng.standard_normal(layout.param_count(d)) * 0.2).astype(np.float32)
    X = rng.standard_normal((B, d)).astype(np.float32)
    scores = detector.forward(theta, X)
    assert np.all((scores > 0) & (scores < 1))
    for i in range(B):
        ref = _reference_forward(theta, d, X[i].astype(np.float64))
        assert scores[i] == pytest.approx(ref, rel=1e-6)


def test_attention_softmax_sums_to_one(rng):
    from fedvad import _nn_numpy

    d, B = 6, 5
    theta = rng.standard_normal(layout.param_count(d)) * 0.3
    X = rng.standard_normal((B, d))
    m1, m2 = np.ones((B, 512)), np.ones((B, 32))
    _, _, A1, _, _, _, A2, _, _ = _nn_numpy._forward_parts(theta, d, X, m1, m2)
    np.testing.assert_allclose(A1.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(A2.sum(axis=1), 1.0, atol=1e-6)


def test_bce_ln2_at_zero_params():
    d = 4
    params = np.zeros(layout.param_count(d), dtype=np.float32)
    batch = TrainBatch(
        features=np.ones((2, d), dtype=np.float32), labels=np.array([1, 1])
    )
    loss, _ = detector.loss_and_grad(params, batch, l2_coeff=0.0, train_mode=False)
    assert loss == pytest.approx(math.log(2.0), rel=1e-9)


def test_l2_gradient_term_exact():
    d = 4
    params = detector.init_params(d, 2)
    batch = TrainBatch(
        features=np.zeros((2, d), dtype=np.float32), labels=np.array([0, 0])
    )
    _, g0 = detector.loss_and_grad(params, batch, l2_coeff=0.0, train_mode=False)
    _, g1 = detector.loss_and_grad(params, batch, l2_coeff=0.1, train_mode=False)
    diff = (g1.astype(np.float64) - g0.astype(np.float64))
    theta = params.astype(np.float64)
    for sl in layout.weight_slices(d):
        np.testing.assert_allclose(diff[sl], 2 * 0.1 * theta[sl], atol=1e-7)
    # biases excluded from the penalty
    mask = np.ones(len(params), dtype=bool)
    for sl in layout.weight_slices(d):
        mask[sl] = False
    np.testing.assert_allclose(diff[mask], 0.0, atol=1e-7)


def _gradcheck(theta, d, X, y, l2, m1, m2, rng, samples=160, h=1e-4):
    """Central finite differences in float64 on a stratified coordinate
    sample covering every tensor, output layer exhaustively."""
    loss, grad = detector._loss_grad_f64(theta, d, X, y, l2, m1, m2)
    offs = layout.offsets(d)
    idx = []
    for lo, hi in zip(offs[:-1], offs[1:]):
        take = min(samples // 10, hi - lo)
        idx.extend(rng.choice(np.arange(lo, hi), take, replace=False).tolist())
    idx.extend(range(offs[-3], offs[-1]))  # all output-layer params
    worst = 0.0
    for i in set(idx):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        fd = (
            detector._loss_f64(tp, d, X, y, l2, m1, m2)
            - detector._loss_f64(tm, d, X, y, l2, m1, m2)
        ) / (2 * h)
        err = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-6)
        worst = max(worst, err)
    return worst


def test_gradient_check_small_configs(rng):
    for trial in range(4):
        d = int(rng.integers(2, 17))
        B = int(rng.integers(1, 9))
        theta = rng.standard_normal(layout.param_count(d)) * 0.3
        X = rng.standard_normal((B, d))
        y = rng.integers(0, 2, B).astype(np.float64)
        keep = 0.7
        m1 = (rng.random((B, 512)) < keep) / keep
        m2 = (rng.random((B, 32)) < keep) / keep
        worst = _gradcheck(theta, d, X, y, 0.01, m1, m2, rng, samples=120)
        assert worst <= 1e-4, f"trial {trial}: max rel err {worst}"


def test_sgd_step_examples():
    params = np.array([1.0, 1.0], dtype=np.float32)
    grad = np.array([2.0, -2.0], dtype=np.float32)
    np.testing.assert_array_equal(detector.sgd_step(params, grad, 0.5), [0.0, 2.0])
    np.testing.assert_array_equal(detector.sgd_step(params, grad, 0.0), params)


def test_sgd_layout_mismatch():
    with pytest.raises(ProtocolError):
        detector.sgd_step(np.zeros(3, dtype=np.float32), np.zeros(4, dtype=np.float32), 0.1)


def test_loss_decreases_on_separable_toy():
    rng = np.random.default_rng(17)
    d = 6
    X = np.vstack(
        [rng.standard_normal((32, d)) * 0.2, rng.standard_normal((32, d)) * 0.2 + 1.0]
    ).astype(np.float32)
    y = np.concatenate([np.zeros(32), np.ones(32)]).astype(np.int8)
    batch = TrainBatch(features=X, labels=y)
    params = detector.init_params(d, 8)
    losses = []
    for step in range(100):
        loss, grad = detector.loss_and_grad(
            params, batch, l2_coeff=0.0, train_mode=True, dropout_seed=step
        )
        params = detector.sgd_step(params, grad, 0.5)
        losses.append(loss)
    assert np.mean(losses[-10:]) < 0.5 * np.mean(losses[:10])


def test_model_file_roundtrip_bitexact(tmp_path):
    d = 9
    params = detector.init_params(d, 21)
    path = detector.save_model(params, d, tmp_path / "m.bin")
    loaded, d2 = detector.load_model(path)
    assert d2 == d
    assert loaded.tobytes() == params.tobytes()


def test_model_file_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"not a model")
    with pytest.raises(ValidationError):
        detector.load_model(p)


def test_batch_validation():
    with pytest.raises(ValidationError):
        TrainBatch(features=np.zeros((2, 3), dtype=np.float32), labels=np.array([0, 2]))
    with pytest.raises(ValidationError):
        TrainBatch(features=np.zeros((0, 3), dtype=np.float32), labels=np.zeros(0))


def test_forward_width_mismatch():
    params = detector.init_params(4, 0)
    with pytest.raises(ProtocolError):
        detector.forward(params, np.zeros((2, 5), dtype=np.float32))
