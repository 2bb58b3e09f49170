import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmtrust.tensor import Tensor, gradcheck, mul, parameter, total
from gmtrust.temporal import (discretize, init_block, mamba_block, selective_scan, ssm_scan, state_diagonal,
                              temporal_forward)


def test_discretize_closed_form():
    b_bar, c_bar = discretize(-1.0, 2.0, 0.5)
    assert abs(b_bar - 0.606531) < 5e-7 and abs(c_bar - 0.786939) < 5e-7
    assert abs(b_bar - math.exp(-0.5)) <= 1e-12
    assert abs(c_bar - (-2.0) * (math.exp(-0.5) - 1.0) * 1.0) <= 1e-12


def test_discretize_small_step_limit():
    b_bar, c_bar = discretize(-1.0, 3.0, 1e-8)
    assert abs(b_bar - 1.0) < 1e-6 and abs(c_bar) < 1e-6


def test_discretize_large_step_limit():
    b_bar, c_bar = discretize(-1.0, 0.7, 50.0)
    assert abs(b_bar) < 1e-10 and abs(c_bar - 0.7) < 1e-10


@pytest.mark.parametrize("b,delta", [(-1.0, 0.0), (-1.0, -0.5), (0.0, 1.0)])
def test_discretize_errors(b, delta):
    with pytest.raises(ValueError):
        discretize(b, 1.0, delta)


@given(st.floats(-20, -1e-3), st.floats(1e-4, 20))
def test_discretize_stable(b, delta):
    b_bar, _ = discretize(b, 1.0, delta)
    assert 0.0 <= b_bar < 1.0


def test_scan_two_step_example():
    y = ssm_scan(np.ones((2, 1)), np.full((2, 1, 1), 0.5), np.ones((2, 1, 1)), np.ones((2, 1)))
    np.testing.assert_array_equal(y.data[:, 0], [1.0, 1.5])


def _random_scan_inputs(rng, steps=5, ch=3, n=4):
    x = rng.normal(size=(steps, ch))
    a = rng.uniform(0.1, 0.99, size=(steps, ch, n))
    cb = rng.normal(size=(steps, ch, n))
    d = rng.normal(size=(steps, n))
    return x, a, cb, d


def _naive_scan(x, a, cb, d):
    steps, ch = x.shape
    n = d.shape[1]
    z = [[0.0] * n for _ in range(ch)]
    y = np.zeros((steps, ch))
    for s in range(steps):
        for c in range(ch):
            acc = 0.0
            for k in range(n):
                z[c][k] = a[s, c, k] * z[c][k] + cb[s, c, k] * x[s, c]
                acc = acc + d[s, k] * z[c][k]
            y[s, c] = acc
    return y


@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(1, 4), st.integers(1, 5))
def test_scan_matches_naive_bitwise(seed, steps, ch, n):
    x, a, cb, d = _random_scan_inputs(np.random.default_rng(seed), steps, ch, n)
    np.testing.assert_array_equal(ssm_scan(x, a, cb, d).data, _naive_scan(x, a, cb, d))


def test_scan_zero_input(rng):
    _, a, cb, d = _random_scan_inputs(rng)
    assert not ssm_scan(np.zeros((5, 3)), a, cb, d).data.any()


@given(st.integers(0, 2**31 - 1), st.integers(0, 5))
def test_scan_causal(seed, s):
    rng = np.random.default_rng(seed)
    x, a, cb, d = _random_scan_inputs(rng, steps=6)
    x2 = x.copy()
    x2[s] += rng.normal(size=x.shape[1])
    y1, y2 = ssm_scan(x, a, cb, d).data, ssm_scan(x2, a, cb, d).data
    np.testing.assert_array_equal(y1[:s], y2[:s])


def test_scan_gradcheck(rng):
    x, a, cb, d = (parameter(v) for v in _random_scan_inputs(rng))
    w = Tensor(rng.normal(size=(5, 3)))
    assert gradcheck(lambda: total(mul(ssm_scan(x, a, cb, d), w)), [x, a, cb, d]) <= 1e-5


def test_selective_scan_equals_discretise_then_scan(rng):
    x = rng.normal(size=(2, 4, 3))
    delta = rng.uniform(0.1, 1.0, size=(2, 4, 3))
    b = -np.arange(1.0, 5.0)
    c, d = rng.normal(size=(2, 4, 4)), rng.normal(size=(2, 4, 4))
    b_bar, c_bar = discretize(b, c[..., None, :], delta[..., None])
    np.testing.assert_array_equal(selective_scan(x, delta, b, c, d).data, ssm_scan(x, b_bar, c_bar, d).data)


def test_selective_scan_gradcheck(rng):
    x = parameter(rng.normal(size=(2, 4, 3)))
    delta = parameter(rng.uniform(0.1, 1.0, size=(2, 4, 3)))
    b = parameter(-rng.uniform(0.5, 3.0, size=4))
    c, d = parameter(rng.normal(size=(2, 4, 4))), parameter(rng.normal(size=(2, 4, 4)))
    w = Tensor(rng.normal(size=(2, 4, 3)))
    assert gradcheck(lambda: total(mul(selective_scan(x, delta, b, c, d), w)), [x, delta, b, c, d]) <= 1e-5


def test_state_diagonal_init():
    p = init_block(4, 4, np.random.default_rng(0), d_inner=4, d_state=16)
    np.testing.assert_allclose(state_diagonal(p).data, -np.arange(1.0, 17.0), rtol=1e-15)


# -------------------------------------------------------------------- block

def _silu(v):
    return v / (1.0 + np.exp(-v))


def _literal_block(H, p, residual=True, norm=False):
    """Straight transcription of one block for a single (S, d_in) trajectory."""
    P = {k: v.data for k, v in p.items()}
    S = H.shape[0]
    U = H / np.sqrt(np.mean(H * H, axis=-1, keepdims=True) + 1e-6) if norm else H
    H_lin = U @ P["in_proj"].T
    k, d_m = P["conv"].shape
    H_conv = np.zeros_like(H_lin)
    for s in range(S):
        for j in range(k):
            src = s - (k - 1) + j
            if src >= 0:
                H_conv[s] += P["conv"][j] * H_lin[src]
    H_conv = _silu(H_conv)
    C = H_conv @ P["C_proj"].T
    D = H_conv @ P["D_proj"].T
    delta = np.log1p(np.exp(H_conv @ P["delta_W"].T + P["delta_b"]))
    B = -np.exp(P["B_log"])
    N = B.shape[0]
    z = np.zeros((d_m, N))
    O = np.zeros((S, d_m))
    for s in range(S):
        for ch in range(d_m):
            for n in range(N):
                b_bar = math.exp(delta[s, ch] * B[n])
                c_bar = (1.0 / (delta[s, ch] * B[n])) * (b_bar - 1.0) * (delta[s, ch] * C[s, n])
                z[ch, n] = b_bar * z[ch, n] + c_bar * H_conv[s, ch]
            O[s, ch] = sum(D[s, n] * z[ch, n] for n in range(N))
    out = (O * _silu(U @ P["gate_proj"].T)) @ P["out_proj"].T
    if residual and out.shape == H.shape:
        out = out + H
    return out


@pytest.mark.parametrize("d_in,d_out,norm", [(5, 6, False), (6, 6, False), (6, 6, True), (5, 6, True)])
def test_block_matches_literal_transcription(d_in, d_out, norm):
    rng = np.random.default_rng(d_in * 10 + d_out)
    p = init_block(d_in, d_out, rng, d_inner=4, d_state=3, conv_width=2)
    H = rng.normal(size=(3, d_in))
    got = mamba_block(Tensor(H), p, residual=True, norm=norm).data
    np.testing.assert_allclose(got, _literal_block(H, p, True, norm), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("norm", [False, True])
def test_block_zero_in_zero_out(norm):
    p = init_block(6, 6, np.random.default_rng(0), d_inner=4, d_state=3)
    assert not mamba_block(Tensor(np.zeros((4, 6))), p, norm=norm).data.any()


def test_block_single_step():
    rng = np.random.default_rng(3)
    p = init_block(5, 6, rng, d_inner=4, d_state=3)
    H = rng.normal(size=(1, 5))
    np.testing.assert_allclose(mamba_block(Tensor(H), p, norm=False).data, _literal_block(H, p), rtol=1e-12)


def test_block_rejects_empty_sequence():
    p = init_block(5, 6, np.random.default_rng(0), d_inner=4, d_state=3)
    with pytest.raises(ValueError):
        mamba_block(Tensor(np.zeros((0, 5))), p)


@pytest.mark.parametrize("norm", [False, True])
def test_block_gradcheck(norm):
    rng = np.random.default_rng(7)
    p = init_block(4, 4, rng, d_inner=3, d_state=2, conv_width=2)
    H = parameter(rng.normal(size=(2, 3, 4)))
    w = Tensor(rng.normal(size=(2, 3, 4)))
    assert gradcheck(lambda: total(mul(mamba_block(H, p, norm=norm), w)), [H, *p.values()]) <= 1e-5


def _stack(rng, d_in=32, d_out=128, n_blocks=4):
    blocks, width = [], d_in
    for _ in range(n_blocks):
        blocks.append(init_block(width, d_out, rng, d_inner=8, d_state=4))
        width = d_out
    return blocks


def test_temporal_forward_shape():
    rng = np.random.default_rng(0)
    out = temporal_forward(Tensor(rng.normal(size=(9, 32))), _stack(rng))
    assert out.shape == (128,) and np.all(np.isfinite(out.data))


def test_temporal_forward_is_maxpool_of_last_block():
    rng = np.random.default_rng(1)
    blocks = _stack(rng, 6, 6, 2)
    H = Tensor(rng.normal(size=(5, 6)))
    h = H
    for p in blocks:
        h = mamba_block(h, p)
    np.testing.assert_array_equal(temporal_forward(H, blocks).data, h.data.max(axis=0))


def test_temporal_forward_order_sensitive():
    rng = np.random.default_rng(2)
    blocks = _stack(rng, 6, 8, 2)
    H = rng.normal(size=(4, 6))
    assert not np.allclose(temporal_forward(Tensor(H), blocks).data, temporal_forward(Tensor(H[::-1]), blocks).data)
