"""Adam with log-linear learning-rate decay."""
import numpy as np
import pytest

from layerfield.adam import AdamState, LrSchedule, adam_init, adam_step


def test_zero_gradient_is_a_fixed_point():
    params = [np.array([1.0, -2.0]), np.array([[3.0]])]
    state = adam_init(params)
    before = [p.copy() for p in params]
    adam_step(state, params, [np.zeros(2), np.zeros((1, 1))], lr=1e-2)
    assert all(np.array_equal(a, b) for a, b in zip(params, before))
    assert state.step == 1


def test_first_step_moves_by_lr_times_sign():
    params = [np.array([0.0, 0.0, 0.0])]
    g = np.array([0.5, -3.0, 1e-3])
    adam_step(adam_init(params), params, [g.copy()], lr=1e-2)
    # bias correction makes the first update exactly lr * g/(|g| + eps')
    assert np.allclose(params[0], -1e-2 * np.sign(g), rtol=1e-4)


def _adam_oracle(params, grads_seq, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar-loop reference over a fixed gradient sequence."""
    p = [x.astype(np.float64).copy() for x in params]
    m = [np.zeros_like(x) for x in p]
    v = [np.zeros_like(x) for x in p]
    for t, grads in enumerate(grads_seq, start=1):
        for i, g in enumerate(grads):
            flat_p = p[i].reshape(-1)
            flat_m = m[i].reshape(-1)
            flat_v = v[i].reshape(-1)
            flat_g = g.reshape(-1)
            for j in range(flat_p.size):
                flat_m[j] = beta1 * flat_m[j] + (1 - beta1) * flat_g[j]
                flat_v[j] = beta2 * flat_v[j] + (1 - beta2) * flat_g[j] ** 2
                mh = flat_m[j] / (1 - beta1 ** t)
                vh = flat_v[j] / (1 - beta2 ** t)
                flat_p[j] -= lr * mh / (np.sqrt(vh) + eps)
    return p


def test_matches_scalar_loop_oracle_over_several_steps():
    gen = np.random.default_rng(0)
    params = [gen.normal(size=(3, 2)), gen.normal(size=5)]
    grads_seq = [[gen.normal(size=(3, 2)), gen.normal(size=5)] for _ in range(7)]
    expect = _adam_oracle(params, grads_seq, lr=1e-2)
    state = adam_init(params)
    for grads in grads_seq:
        adam_step(state, params, [g.copy() for g in grads], lr=1e-2)
    for got, ref in zip(params, expect):
        assert np.allclose(got, ref, atol=1e-12)


def test_updates_happen_in_place():
    params = [np.zeros(3)]
    alias = params[0]
    adam_step(adam_init(params), params, [np.ones(3)], lr=1e-2)
    assert alias is params[0]
    assert not np.array_equal(alias, np.zeros(3))


def test_non_finite_gradient_raises_with_context():
    params = [np.zeros(2), np.zeros(2)]
    state = adam_init(params)
    bad = [np.zeros(2), np.array([1.0, np.nan])]
    with pytest.raises(FloatingPointError, match="tensor 1 at optimizer step 1"):
        adam_step(state, params, bad, lr=1e-2)


def test_gradient_count_mismatch_raises():
    params = [np.zeros(2)]
    with pytest.raises(ValueError):
        adam_step(adam_init(params), params, [np.zeros(2), np.zeros(2)], lr=1e-2)


def test_schedule_endpoints_and_log_linearity():
    s = LrSchedule(initial=1e-4, final=1e-5, horizon=100)
    assert s.at(0) == pytest.approx(1e-4)
    assert s.at(100) == pytest.approx(1e-5)
    assert s.at(50) == pytest.approx(np.sqrt(1e-4 * 1e-5), rel=1e-12)
    # constant ratio between consecutive steps
    ratios = [s.at(k + 1) / s.at(k) for k in range(0, 99, 7)]
    assert np.allclose(ratios, ratios[0], rtol=1e-9)


def test_schedule_clamps_beyond_horizon():
    s = LrSchedule(initial=1e-4, final=1e-5, horizon=10)
    assert s.at(10_000) == pytest.approx(1e-5)
    assert s.at(-5) == pytest.approx(1e-4)


def test_schedule_degenerate_horizon_returns_final():
    s = LrSchedule(initial=1e-4, final=1e-5, horizon=0)
    assert s.at(0) == pytest.approx(1e-5)
    assert s.at(3) == pytest.approx(1e-5)


def test_state_tracks_moments_shapes():
    params = [np.zeros((2, 3)), np.zeros(4)]
    state = adam_init(params)
    assert isinstance(state, AdamState)
    assert [m.shape for m in state.m] == [(2, 3), (4,)]
    assert [v.shape for v in state.v] == [(2, 3), (4,)]
