"""Numba kernels for the spiking layers.

These loops are memory-bandwidth bound, which drives three layout rules:

  * Hard spike trains are uint8 throughout — a quarter of the float
    traffic, and the drive/weight-gradient kernels skip inactive bins
    outright so their cost scales with spike count, not array size.
  * The temporal scans run on time-major (T, N) arrays with
    N = batch * neurons flattened into one contiguous axis, emitting the
    pre-reset state and the uint8 spike train in a single pass.
  * Scalar neuron constants are passed pre-cast to the array dtype
    (decay factors, not alphas) so the inner loops stay in one
    precision and LLVM can vectorize them.

The resonate-and-fire input layer is one fused kernel (drive
accumulation + scan): with few input channels the per-bin drive fits in
a cache-resident row buffer, which beats materializing two full
(T, batch, neurons) drive arrays. The wider LIF layers go the other
way — a sparse drive kernel into a dense array, then the flat scan —
because at 64 presynaptic channels the fused variant's per-bin branch
tests cost more than the extra array traffic.

The backward kernels implement truncated-reset BPTT: the reset gate is
a constant uint8 mask (the stored spike train, or any 0/1 array marking
where the trajectory reset), and the spike nonlinearity uses the
exponential surrogate derivative, precomputed by the caller into a
dense array so the reverse scans stay free of transcendental calls.
They accept float64 gradient arrays with the same uint8 masks, which is
what lets the production backward pass run unchanged on a soft relaxed
trajectory for finite-difference checking.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_Z = np.float32(0.0)
_U0 = np.uint8(0)
_U1 = np.uint8(1)


@njit(cache=True, fastmath=True)
def rf_layer(s_prev, wt_re, wt_im, c1, c2, thr):
    """Fused drive + resonate-and-fire scan + spike emission.

    State z = re + i*im rotates and decays by (c1 + i*c2) per step, then
    the complex drive (wt_re, wt_im per presynaptic channel) is added.
    The drive at bin t comes from s_prev[t - 1] (one-bin delay, zero at
    t = 0). A spike fires when im >= thr; reset zeroes re only. Returns
    (im_pre, spikes): the pre-reset imaginary part per bin as (T, B, H)
    in the weight dtype, and the uint8 spike train of the same shape.
    """
    T, B, C = s_prev.shape
    H = wt_re.shape[1]
    im_pre = np.empty((T, B, H), dtype=wt_re.dtype)
    s_out = np.empty((T, B, H), dtype=np.uint8)
    re = np.zeros((B, H), dtype=wt_re.dtype)
    im = np.zeros((B, H), dtype=wt_re.dtype)
    dre = np.zeros(H, dtype=wt_re.dtype)
    dim = np.zeros(H, dtype=wt_re.dtype)
    for t in range(T):
        for b in range(B):
            for h in range(H):
                dre[h] = 0.0
                dim[h] = 0.0
            if t > 0:
                sp = s_prev[t - 1, b]
                for c in range(C):
                    if sp[c]:
                        wr, wi = wt_re[c], wt_im[c]
                        for h in range(H):
                            dre[h] += wr[h]
                            dim[h] += wi[h]
            re_b, im_b = re[b], im[b]
            out_r, s_r = im_pre[t, b], s_out[t, b]
            for h in range(H):
                rp = c1 * re_b[h] - c2 * im_b[h] + dre[h]
                ip = c2 * re_b[h] + c1 * im_b[h] + dim[h]
                out_r[h] = ip
                fired = ip >= thr
                s_r[h] = _U1 if fired else _U0
                re_b[h] = _Z if fired else rp
                im_b[h] = ip
    return im_pre, s_out


@njit(cache=True)
def spike_drive(spikes, wt, out):
    """out[m, :] = sum of wt rows whose spike bit is set: (M,C)@(C,H).

    Equivalent to spikes.astype(float) @ wt for binary spikes, but skips
    the zero bins, so the cost scales with the number of spikes rather
    than M*C.
    """
    M, C = spikes.shape
    H = wt.shape[1]
    for m in range(M):
        for h in range(H):
            out[m, h] = 0.0
        for c in range(C):
            if spikes[m, c]:
                for h in range(H):
                    out[m, h] += wt[c, h]
    return out


@njit(cache=True, fastmath=True)
def cuba_forward(x, ki, kv, thr):
    """Current-based LIF scan with decay factors ki, kv.

    i <- ki*i + x; v <- kv*v + i; spike when v >= thr, reset v to 0
    (current unchanged). Returns (v_pre, spikes): the pre-reset membrane
    potential per bin and the uint8 spike train, both (T, N).
    """
    T, N = x.shape
    v_pre = np.empty((T, N), dtype=x.dtype)
    s_out = np.empty((T, N), dtype=np.uint8)
    cur = np.zeros(N, dtype=x.dtype)
    v = np.zeros(N, dtype=x.dtype)
    for t in range(T):
        x_r, out_r, s_r = x[t], v_pre[t], s_out[t]
        for n in range(N):
            c = ki * cur[n] + x_r[n]
            vp = kv * v[n] + c
            cur[n] = c
            out_r[n] = vp
            fired = vp >= thr
            s_r[n] = _U1 if fired else _U0
            v[n] = _Z if fired else vp
    return v_pre, s_out


@njit(cache=True, fastmath=True)
def rf_backward_wgrad(gs, surr, reset, s_prev, c1, c2):
    """Reverse scan of the resonate-and-fire input layer, fused with the
    input weight gradient; returns (gw_re, gw_im), both (C, H).

    The input layer's drive gradients feed nothing downstream, so
    instead of materializing two (T, B, H) arrays this kernel scatters
    each bin's gradient straight into the weight gradient against the
    presynaptic spikes at t - 1 (skipping silent bins; float spike
    values from a relaxed trajectory weight the row). gs, surr and the
    uint8 reset mask are (T, B, H).
    """
    T, B, H = gs.shape
    C = s_prev.shape[2]
    gw_re = np.zeros((C, H), dtype=gs.dtype)
    gw_im = np.zeros((C, H), dtype=gs.dtype)
    gre_next = np.zeros((B, H), dtype=gs.dtype)
    gim_next = np.zeros((B, H), dtype=gs.dtype)
    for t in range(T - 1, -1, -1):
        for b in range(B):
            gs_r, surr_r, m_r = gs[t, b], surr[t, b], reset[t, b]
            gre_n, gim_n = gre_next[b], gim_next[b]
            for h in range(H):
                g_im = gs_r[h] * surr_r[h] + (c1 * gim_n[h] - c2 * gre_n[h])
                g_re = _Z if m_r[h] else c1 * gre_n[h] + c2 * gim_n[h]
                gre_n[h] = g_re
                gim_n[h] = g_im
            if t > 0:
                sp = s_prev[t - 1, b]
                for c in range(C):
                    v = sp[c]
                    if v != 0:
                        gwr, gwi = gw_re[c], gw_im[c]
                        if v == 1:
                            for h in range(H):
                                gwr[h] += gre_n[h]
                                gwi[h] += gim_n[h]
                        else:
                            for h in range(H):
                                gwr[h] += v * gre_n[h]
                                gwi[h] += v * gim_n[h]
    return gw_re, gw_im


@njit(cache=True, fastmath=True)
def cuba_backward_wgrad(gs, surr, reset, s_prev, ki, kv):
    """Reverse scan of a LIF input layer fused with the input weight
    gradient; returns gw (C, H). Same contract as rf_backward_wgrad.
    """
    T, B, H = gs.shape
    C = s_prev.shape[2]
    gw = np.zeros((C, H), dtype=gs.dtype)
    gv_next = np.zeros((B, H), dtype=gs.dtype)
    gcur = np.zeros((B, H), dtype=gs.dtype)
    for t in range(T - 1, -1, -1):
        for b in range(B):
            gs_r, surr_r, m_r = gs[t, b], surr[t, b], reset[t, b]
            gv_n, gc_b = gv_next[b], gcur[b]
            for h in range(H):
                carry = _Z if m_r[h] else kv * gv_n[h]
                gvp = gs_r[h] * surr_r[h] + carry
                gc = gvp + ki * gc_b[h]
                gv_n[h] = gvp
                gc_b[h] = gc
            if t > 0:
                sp = s_prev[t - 1, b]
                for c in range(C):
                    v = sp[c]
                    if v != 0:
                        gw_c = gw[c]
                        if v == 1:
                            for h in range(H):
                                gw_c[h] += gc_b[h]
                        else:
                            for h in range(H):
                                gw_c[h] += v * gc_b[h]
    return gw


@njit(cache=True, fastmath=True)
def cuba_backward(gs, surr, reset, ki, kv):
    """Reverse scan of the LIF layer; returns gx (gradient w.r.t. drive).

    reset is the uint8 spike/reset mask (1 where v was zeroed, cutting
    the voltage carry).
    """
    T, N = gs.shape
    gx = np.empty((T, N), dtype=gs.dtype)
    gv_next = np.zeros(N, dtype=gs.dtype)
    gcur = np.zeros(N, dtype=gs.dtype)
    for t in range(T - 1, -1, -1):
        gs_r, surr_r, m_r, gx_r = gs[t], surr[t], reset[t], gx[t]
        for n in range(N):
            carry = _Z if m_r[n] else kv * gv_next[n]
            gvp = gs_r[n] * surr_r[n] + carry
            gc = gvp + ki * gcur[n]
            gx_r[n] = gc
            gv_next[n] = gvp
            gcur[n] = gc
    return gx


@njit(cache=True, fastmath=True)
def surr_arg(pre, thr, inv_w, neg_ln_w, out):
    """out[i] = -|pre[i] - thr| * inv_w + neg_ln_w, one fused pass.

    Exponentiating this argument (done by the caller with numpy's SIMD
    exp) yields the surrogate derivative exp(-|u - thr| / w) / w, with
    the 1/w factor folded into the exponent as -ln(w). Fusing the
    subtract/abs/scale chain into one pass matters because the arrays
    are far larger than cache.
    """
    for i in range(pre.size):
        d = pre[i] - thr
        if d < 0:
            d = -d
        out[i] = neg_ln_w - d * inv_w


@njit(cache=True)
def spike_weight_grad(spikes, gx):
    """gw[c, :] = sum over rows of spikes[m, c] * gx[m, :].

    Equivalent to spikes.T.astype(gx.dtype) @ gx, skipping zero bins.
    Binary uint8 trains hit the pure-accumulate fast path; float spike
    arrays (relaxed trajectories) weight each row by the stored value.
    Returns (C, H); callers transpose to (fan_out, fan_in).
    """
    M, C = spikes.shape
    H = gx.shape[1]
    gw = np.zeros((C, H), dtype=gx.dtype)
    for m in range(M):
        for c in range(C):
            v = spikes[m, c]
            if v != 0:
                if v == 1:
                    for h in range(H):
                        gw[c, h] += gx[m, h]
                else:
                    for h in range(H):
                        gw[c, h] += v * gx[m, h]
    return gw
