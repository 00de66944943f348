"""Manual backpropagation for the encoder-decoder.

Every training objective here is a weighted sum of token log-probabilities

    J(w) = sum_{b,j} coeff[b,j] * log pi_w(y_{b,j} | x_b, y_{b,<j})

for some per-token coefficient matrix (treated as constant w.r.t. ``w``),
so a single backward routine serves cross-entropy and all counterfactual
objectives; only the coefficients differ.  ``weighted_logprob_grad`` returns
the gradient of J, not of -J.  Coefficients must be zero on padding.
"""

from __future__ import annotations

import numpy as np

from .forward import Batch, EncCache, ForwardCache, GruCache, StepCache, forward
from .params import NetConfig, zeros_like_params


def gru_backward(p: dict, prefix: str, cache: GruCache, dh_out: np.ndarray,
                 grads: dict) -> tuple[np.ndarray, np.ndarray]:
    """Backprop one GRU step; returns (dx, dh_prev).  Accumulates into grads."""
    if cache.m is not None:
        dh_new = dh_out * cache.m
        dh_prev = dh_out * (1.0 - cache.m)
    else:
        dh_new = dh_out
        dh_prev = np.zeros_like(dh_out)
    x, h_prev, r, z, hc = cache.x, cache.h_prev, cache.r, cache.z, cache.hc

    dz = dh_new * (hc - h_prev)
    dhc = dh_new * z
    dh_prev += dh_new * (1.0 - z)

    dpre_h = dhc * (1.0 - hc * hc)
    grads[f"{prefix}_Wh"] += x.T @ dpre_h
    grads[f"{prefix}_Uh"] += (r * h_prev).T @ dpre_h
    grads[f"{prefix}_bh"] += dpre_h.sum(axis=0)
    dx = dpre_h @ p[f"{prefix}_Wh"].T
    drh = dpre_h @ p[f"{prefix}_Uh"].T
    dr = drh * h_prev
    dh_prev += drh * r

    dpre_r = dr * r * (1.0 - r)
    dpre_z = dz * z * (1.0 - z)
    grads[f"{prefix}_Wr"] += x.T @ dpre_r
    grads[f"{prefix}_Ur"] += h_prev.T @ dpre_r
    grads[f"{prefix}_br"] += dpre_r.sum(axis=0)
    grads[f"{prefix}_Wz"] += x.T @ dpre_z
    grads[f"{prefix}_Uz"] += h_prev.T @ dpre_z
    grads[f"{prefix}_bz"] += dpre_z.sum(axis=0)
    dx += dpre_r @ p[f"{prefix}_Wr"].T + dpre_z @ p[f"{prefix}_Wz"].T
    dh_prev += dpre_r @ p[f"{prefix}_Ur"].T + dpre_z @ p[f"{prefix}_Uz"].T
    return dx, dh_prev


def attention_backward(p: dict, st: StepCache, hs: np.ndarray, dctx: np.ndarray,
                       grads: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (ds_hat, dhs_local, dhUa_local).  Masked positions have
    alpha == 0 exactly (scores at -1e9 underflow in the softmax), so no
    explicit mask is needed here."""
    alpha, a = st.alpha, st.a
    dalpha = np.einsum("bi,bti->bt", dctx, hs)
    dhs_local = alpha[:, :, None] * dctx[:, None, :]
    dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    grads["att_v"] += np.einsum("bta,bt->a", a, dscores)
    dpre = dscores[:, :, None] * p["att_v"][None, None, :] * (1.0 - a * a)
    dpre_sum = dpre.sum(axis=1)
    grads["att_W"] += st.s_hat.T @ dpre_sum
    ds_hat = dpre_sum @ p["att_W"].T
    return ds_hat, dhs_local, dpre


def encoder_backward(p: dict, cfg: NetConfig, enc: EncCache, dhs: np.ndarray,
                     dhUa: np.ndarray, ds0: np.ndarray, grads: dict) -> None:
    dpre0 = ds0 * (1.0 - enc.s0 * enc.s0)
    grads["init_W"] += enc.hmean.T @ dpre0
    grads["init_b"] += dpre0.sum(axis=0)
    dhmean = dpre0 @ p["init_W"].T
    dhs = dhs + dhmean[:, None, :] / enc.denom[:, :, None]

    grads["att_U"] += np.einsum("bti,bta->ia", enc.hs, dhUa)
    dhs += dhUa @ p["att_U"].T

    h = cfg.hidden
    m = enc.src_mask[:, :, None]
    dfwd = dhs[:, :, :h] * m
    dbwd = dhs[:, :, h:] * m

    batch, tx = enc.src_ids.shape
    dx_emb = np.zeros_like(enc.x_emb)
    carry = np.zeros((batch, h))
    for t in range(tx - 1, -1, -1):
        dx, carry = gru_backward(p, "ef", enc.f_caches[t], dfwd[:, t] + carry, grads)
        dx_emb[:, t] += dx
    carry = np.zeros((batch, h))
    for t in range(tx):
        dx, carry = gru_backward(p, "eb", enc.b_caches[t], dbwd[:, t] + carry, grads)
        dx_emb[:, t] += dx
    np.add.at(grads["src_emb"], enc.src_ids.ravel(), dx_emb.reshape(batch * tx, -1))


def weighted_logprob_grad(p: dict, cfg: NetConfig, batch: Batch, coeff: np.ndarray,
                          fw: ForwardCache | None = None) -> dict[str, np.ndarray]:
    """Gradient of sum(coeff * picked token logprobs) w.r.t. every parameter."""
    if fw is None:
        fw = forward(p, cfg, batch)
    batch_n, ty = batch.tgt_in.shape
    h = cfg.hidden

    # d/dlogits of coeff * log softmax[target] = coeff * (onehot - softmax)
    dlogits = -np.exp(fw.logprobs) * coeff[:, :, None]
    dlogits[np.arange(batch_n)[:, None], np.arange(ty)[None, :], batch.tgt_out] += coeff

    grads = zeros_like_params(p)
    enc = fw.enc
    dhs = np.zeros_like(enc.hs)
    dhUa = np.zeros_like(enc.hUa)
    de_rows = np.zeros((batch_n, ty, cfg.emb))
    ds_next = np.zeros((batch_n, h))

    for t in range(ty - 1, -1, -1):
        st = fw.steps[t]
        dl = dlogits[:, t]
        readout = np.concatenate([st.s, st.ctx, st.e], axis=1)
        grads["out_W"] += readout.T @ dl
        grads["out_b"] += dl.sum(axis=0)
        dreadout = dl @ p["out_W"].T

        ds = dreadout[:, :h] + ds_next
        dctx = dreadout[:, h:3 * h].copy()
        de = dreadout[:, 3 * h:].copy()

        dctx2, ds_hat = gru_backward(p, "d2", st.g2, ds, grads)
        dctx += dctx2
        ds_hat2, dhs_local, dhUa_local = attention_backward(p, st, enc.hs, dctx, grads)
        ds_hat += ds_hat2
        dhs += dhs_local
        dhUa += dhUa_local

        de1, ds_prev = gru_backward(p, "d1", st.g1, ds_hat, grads)
        de += de1
        de_rows[:, t] = de
        ds_next = ds_prev

    np.add.at(grads["tgt_emb"], batch.tgt_in.ravel(), de_rows.reshape(batch_n * ty, -1))
    encoder_backward(p, cfg, enc, dhs, dhUa, ds_next, grads)
    return grads
