"""Selective state-space (Mamba) blocks over per-device trust trajectories.

Shapes follow ``(..., time, channels)``. Each feature channel carries its own
``d_state`` diagonal SSM whose step size, input matrix and readout are
computed from the current input, discretised with a zero-order hold.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import (Tensor, _result, as_tensor, causal_conv1d, dropout, exp, matmul, maxpool_over_axis, mul,
                     parameter, rms_norm, scale, silu, softplus, transpose)


def discretize(b, c, delta):
    """Zero-order-hold step parameters for a scalar (or elementwise) diagonal SSM.

    Returns ``(b_bar, c_bar)`` with ``b_bar = exp(delta*b)`` and
    ``c_bar = (delta*b)^-1 (exp(delta*b) - 1) (delta*c)``.
    """
    b, c, delta = np.asarray(b, float), np.asarray(c, float), np.asarray(delta, float)
    if np.any(delta <= 0):
        raise ValueError(f"delta must be positive, got min {delta.min()}")
    if np.any(b >= 0):
        raise ValueError(f"b must be negative, got {b}")
    db = delta * b
    b_bar = np.exp(db)
    c_bar = (1.0 / db) * (b_bar - 1.0) * (delta * c)
    if b_bar.ndim == 0:
        return float(b_bar), float(c_bar)
    return b_bar, c_bar


def _scan_forward(x, a, cb, d):
    steps, n_state = x.shape[-2], d.shape[-1]
    z = np.zeros(a.shape[:-3] + a.shape[-2:])
    states = np.empty_like(a)
    y = np.empty_like(x)
    for s in range(steps):
        z = a[..., s, :, :] * z + cb[..., s, :, :] * x[..., s, :, None]
        states[..., s, :, :] = z
        acc = np.zeros(x.shape[:-2] + x.shape[-1:])
        for k in range(n_state):
            acc = acc + d[..., s, None, k] * z[..., k]
        y[..., s, :] = acc
    return y, states


def _scan_backward(g, x, a, cb, d, states):
    ga, gcb = np.zeros_like(a), np.zeros_like(cb)
    gx, gd = np.zeros_like(x), np.zeros_like(d)
    gz = np.zeros(a.shape[:-3] + a.shape[-2:])
    for s in reversed(range(x.shape[-2])):
        z_s = states[..., s, :, :]
        gd[..., s, :] = np.einsum("...c,...ck->...k", g[..., s, :], z_s)
        gz = gz + g[..., s, :, None] * d[..., s, None, :]
        if s > 0:
            ga[..., s, :, :] = gz * states[..., s - 1, :, :]
        gcb[..., s, :, :] = gz * x[..., s, :, None]
        gx[..., s, :] = (gz * cb[..., s, :, :]).sum(axis=-1)
        gz = gz * a[..., s, :, :]
    return gx, ga, gcb, gd


def _check_scan_shapes(x, a, cb, d):
    if a.shape != cb.shape or a.shape[:-1] != x.shape or d.shape[:-1] != x.shape[:-1] or d.shape[-1] != a.shape[-1]:
        raise ValueError(f"ssm_scan: shape mismatch x{x.shape} b_bar{a.shape} c_bar{cb.shape} d{d.shape}")


def ssm_scan(x, b_bar, c_bar, d) -> Tensor:
    """Run ``z(s) = b_bar(s) z(s-1) + c_bar(s) x(s)``, ``y(s) = <d(s), z(s)>`` from ``z(0) = 0``.

    ``x`` is ``(..., S, ch)``; ``b_bar`` and ``c_bar`` are ``(..., S, ch, N)``;
    ``d`` is ``(..., S, N)`` and is shared by all channels at a step. The
    readout sums over the state index in ascending order.
    """
    x, b_bar, c_bar, d = (as_tensor(t) for t in (x, b_bar, c_bar, d))
    _check_scan_shapes(x.data, b_bar.data, c_bar.data, d.data)
    y, states = _scan_forward(x.data, b_bar.data, c_bar.data, d.data)

    def back(g):
        return _scan_backward(g, x.data, b_bar.data, c_bar.data, d.data, states)

    return _result(y, (x, b_bar, c_bar, d), back, "ssm_scan")


def selective_scan(x, delta, b, c, d) -> Tensor:
    """Discretise per channel and step, then scan.

    ``x`` and ``delta`` are ``(..., S, ch)``, ``b`` is the ``(N,)`` negative
    diagonal, ``c`` and ``d`` are ``(..., S, N)``. Equivalent to building
    ``b_bar, c_bar`` with :func:`discretize` and calling :func:`ssm_scan`,
    without keeping the discretised tensors on the autodiff tape.
    """
    x, delta, b, c, d = (as_tensor(t) for t in (x, delta, b, c, d))
    if delta.shape != x.shape or b.ndim != 1 or c.shape != d.shape or c.shape[-1] != b.shape[0]:
        raise ValueError(f"selective_scan: shape mismatch x{x.shape} delta{delta.shape} b{b.shape} "
                         f"c{c.shape} d{d.shape}")
    dl = delta.data[..., None]
    cc = c.data[..., None, :]
    b_bar, c_bar = discretize(b.data, cc, dl)
    _check_scan_shapes(x.data, b_bar, c_bar, d.data)
    y, states = _scan_forward(x.data, b_bar, c_bar, d.data)

    def back(g):
        gx, ga, gcb, gd = _scan_backward(g, x.data, b_bar, c_bar, d.data, states)
        bv = b.data
        g_delta = (ga * bv * b_bar + gcb * b_bar * cc).sum(axis=-1)
        gb_terms = ga * dl * b_bar + gcb * cc * (dl * bv * b_bar - (b_bar - 1.0)) / (bv * bv)
        g_b = gb_terms.reshape(-1, bv.shape[0]).sum(axis=0)
        g_c = (gcb * (b_bar - 1.0) / bv).sum(axis=-2)
        return gx, g_delta, g_b, g_c, gd

    return _result(y, (x, delta, b, c, d), back, "selective_scan")


def _inv_softplus(y: np.ndarray) -> np.ndarray:
    return y + np.log(-np.expm1(-y))


def init_block(d_in: int, d_out: int, rng: np.random.Generator, d_inner: int = 32, d_state: int = 16,
               conv_width: int = 4) -> dict[str, Tensor]:
    d_m = d_inner
    dt0 = np.exp(rng.uniform(np.log(0.1), np.log(1.0), size=d_m))
    return {
        "in_proj": parameter(rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_m, d_in))),
        "gate_proj": parameter(rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_m, d_in))),
        "conv": parameter(rng.normal(0.0, 1.0 / np.sqrt(conv_width), size=(conv_width, d_m))),
        "B_log": parameter(np.log(np.arange(1, d_state + 1, dtype=np.float64))),
        "C_proj": parameter(rng.normal(0.0, 1.0 / np.sqrt(d_m), size=(d_state, d_m))),
        "D_proj": parameter(rng.normal(0.0, 1.0 / np.sqrt(d_m), size=(d_state, d_m))),
        "delta_W": parameter(rng.normal(0.0, 0.02, size=(d_m, d_m))),
        "delta_b": parameter(_inv_softplus(dt0)),
        "out_proj": parameter(rng.normal(0.0, 1.0 / np.sqrt(d_m), size=(d_out, d_m))),
    }


def state_diagonal(params) -> Tensor:
    """Diagonal of the continuous transition matrix; negative by construction."""
    return scale(exp(params["B_log"]), -1.0)


def mamba_block(h, params, residual: bool = True, norm: bool = True) -> Tensor:
    """``(..., S, d_in) -> (..., S, d_out)``.

    With ``norm`` the block reads an RMS-normalised copy of ``h`` (the
    residual path still adds ``h`` itself). Without it the output scales with
    the cube of the input scale, since ``x``, ``C`` and ``D`` are all linear
    in the input.
    """
    h = as_tensor(h)
    if h.ndim < 2 or h.shape[-2] == 0:
        raise ValueError(f"mamba_block needs at least one time step, got shape {h.shape}")
    u = rms_norm(h) if norm else h
    h_lin = matmul(u, transpose(params["in_proj"]))
    h_conv = silu(causal_conv1d(h_lin, params["conv"]))
    c = matmul(h_conv, transpose(params["C_proj"]))
    d = matmul(h_conv, transpose(params["D_proj"]))
    delta = softplus(matmul(h_conv, transpose(params["delta_W"])) + params["delta_b"])

    y = selective_scan(h_conv, delta, state_diagonal(params), c, d)
    gate = silu(matmul(u, transpose(params["gate_proj"])))
    out = matmul(mul(y, gate), transpose(params["out_proj"]))
    if residual and out.shape == h.shape:
        out = out + h
    return out


def temporal_forward(trajectory, blocks: Sequence[dict], residual: bool = True, dropout_rate: float = 0.0,
                     train: bool = False, rng: np.random.Generator | None = None, norm: bool = True) -> Tensor:
    """Stacked blocks then max over time: ``(..., S, d_in) -> (..., d_out)``."""
    h = as_tensor(trajectory)
    for params in blocks:
        h = dropout(mamba_block(h, params, residual, norm), dropout_rate, train, rng)
    return maxpool_over_axis(h, axis=-2)
