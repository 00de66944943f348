"""Forward pass of the attention-based encoder-decoder.

The encoder is a bidirectional GRU over the question; the decoder is a
conditional GRU: a first cell updates the state from the previous output
token, attention over the encoder states is computed from that intermediate
state, and a second cell folds the context vector back in.  The readout
concatenates decoder state, context and previous-token embedding.

Everything is batched with explicit masks (1.0 inside a sequence, 0.0 on
padding) so that a whole minibatch or beam front runs as one set of matrix
multiplies.  Caches returned here carry every intermediate needed by the
manual backward pass in :mod:`banditparse.policy.backward`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import NetConfig


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class GruCache:
    x: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    hc: np.ndarray
    m: np.ndarray | None  # [B,1] step mask, None = unmasked


def gru_step(p: dict, prefix: str, x: np.ndarray, h_prev: np.ndarray,
             m: np.ndarray | None = None) -> tuple[np.ndarray, GruCache]:
    r = sigmoid(x @ p[f"{prefix}_Wr"] + h_prev @ p[f"{prefix}_Ur"] + p[f"{prefix}_br"])
    z = sigmoid(x @ p[f"{prefix}_Wz"] + h_prev @ p[f"{prefix}_Uz"] + p[f"{prefix}_bz"])
    hc = np.tanh(x @ p[f"{prefix}_Wh"] + (r * h_prev) @ p[f"{prefix}_Uh"] + p[f"{prefix}_bh"])
    h = (1.0 - z) * h_prev + z * hc
    if m is not None:
        h = m * h + (1.0 - m) * h_prev
    return h, GruCache(x, h_prev, r, z, hc, m)


@dataclass
class EncCache:
    src_ids: np.ndarray   # [B,Tx] int
    src_mask: np.ndarray  # [B,Tx] float
    x_emb: np.ndarray     # [B,Tx,E]
    f_caches: list[GruCache]
    b_caches: list[GruCache]  # indexed by source position, not processing order
    hs: np.ndarray        # [B,Tx,2H]
    denom: np.ndarray     # [B,1]
    hmean: np.ndarray     # [B,2H]
    s0: np.ndarray        # [B,H]
    hUa: np.ndarray       # [B,Tx,A] precomputed attention keys


def encode(p: dict, cfg: NetConfig, src_ids: np.ndarray, src_mask: np.ndarray) -> EncCache:
    batch, tx = src_ids.shape
    h = cfg.hidden
    x_emb = p["src_emb"][src_ids]

    fwd = np.zeros((batch, tx, h))
    f_caches = []
    state = np.zeros((batch, h))
    for t in range(tx):
        state, cache = gru_step(p, "ef", x_emb[:, t], state, src_mask[:, t:t + 1])
        f_caches.append(cache)
        fwd[:, t] = state

    bwd = np.zeros((batch, tx, h))
    b_caches: list = [None] * tx
    state = np.zeros((batch, h))
    for t in range(tx - 1, -1, -1):
        state, cache = gru_step(p, "eb", x_emb[:, t], state, src_mask[:, t:t + 1])
        b_caches[t] = cache
        bwd[:, t] = state

    hs = np.concatenate([fwd, bwd], axis=2) * src_mask[:, :, None]
    denom = src_mask.sum(axis=1, keepdims=True)
    hmean = hs.sum(axis=1) / denom
    s0 = np.tanh(hmean @ p["init_W"] + p["init_b"])
    hUa = hs @ p["att_U"]
    return EncCache(src_ids, src_mask, x_emb, f_caches, b_caches, hs, denom, hmean, s0, hUa)


@dataclass
class StepCache:
    e: np.ndarray        # [B,E] previous-token embedding
    g1: GruCache
    s_hat: np.ndarray    # [B,H]
    a: np.ndarray        # [B,Tx,A] post-tanh attention features
    alpha: np.ndarray    # [B,Tx]
    ctx: np.ndarray      # [B,2H]
    g2: GruCache
    s: np.ndarray        # [B,H]


def attend(p: dict, s_hat: np.ndarray, hs: np.ndarray, hUa: np.ndarray,
           src_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Additive attention; returns (ctx, alpha, post-tanh features)."""
    a = np.tanh(s_hat[:, None, :] @ p["att_W"][None] + hUa)
    scores = a @ p["att_v"] + (src_mask - 1.0) * 1e9
    shifted = scores - scores.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    alpha = expd / expd.sum(axis=1, keepdims=True)
    ctx = np.einsum("bt,bti->bi", alpha, hs)
    return ctx, alpha, a


def decode_step(p: dict, enc_hs: np.ndarray, enc_hUa: np.ndarray, src_mask: np.ndarray,
                prev_ids: np.ndarray, s_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray, StepCache]:
    """One decoder step; returns (logits, new state, cache)."""
    e = p["tgt_emb"][prev_ids]
    s_hat, g1 = gru_step(p, "d1", e, s_prev)
    ctx, alpha, a = attend(p, s_hat, enc_hs, enc_hUa, src_mask)
    s, g2 = gru_step(p, "d2", ctx, s_hat)
    readout = np.concatenate([s, ctx, e], axis=1)
    logits = readout @ p["out_W"] + p["out_b"]
    return logits, s, StepCache(e, g1, s_hat, a, alpha, ctx, g2, s)


@dataclass
class Batch:
    """One teacher-forced batch; tgt_out ends with EOS at every live position."""

    src_ids: np.ndarray   # [B,Tx] int
    src_mask: np.ndarray  # [B,Tx]
    tgt_in: np.ndarray    # [B,Ty] int, starts with BOS
    tgt_out: np.ndarray   # [B,Ty] int
    tgt_mask: np.ndarray  # [B,Ty]
    rows: list = field(default_factory=list)  # caller bookkeeping (log indices etc.)


@dataclass
class ForwardCache:
    enc: EncCache
    steps: list[StepCache]
    logits: np.ndarray    # [B,Ty,V]
    logprobs: np.ndarray  # [B,Ty,V]


def forward(p: dict, cfg: NetConfig, batch: Batch) -> ForwardCache:
    enc = encode(p, cfg, batch.src_ids, batch.src_mask)
    batch_n, ty = batch.tgt_in.shape
    logits = np.zeros((batch_n, ty, cfg.n_tgt))
    steps = []
    state = enc.s0
    for t in range(ty):
        logits[:, t], state, cache = decode_step(
            p, enc.hs, enc.hUa, enc.src_mask, batch.tgt_in[:, t], state)
        steps.append(cache)
    return ForwardCache(enc, steps, logits, log_softmax(logits))


def token_logprobs(p: dict, cfg: NetConfig, batch: Batch) -> np.ndarray:
    """Per-position log pi(y_j | x, y_<j), zero on padding.  Shape [B,Ty]."""
    fw = forward(p, cfg, batch)
    batch_n, ty = batch.tgt_out.shape
    picked = fw.logprobs[np.arange(batch_n)[:, None], np.arange(ty)[None, :], batch.tgt_out]
    return picked * batch.tgt_mask


def sequence_logprobs(p: dict, cfg: NetConfig, batch: Batch) -> np.ndarray:
    """log pi(y|x) per row; includes the EOS factor carried in tgt_out."""
    return token_logprobs(p, cfg, batch).sum(axis=1)


def next_token_logprobs(p: dict, cfg: NetConfig, src_ids: list[int],
                        prefix_ids: list[int], bos: int) -> np.ndarray:
    """Distribution over the next token after ``prefix_ids``; single sequence."""
    src = np.asarray([src_ids], dtype=np.int64)
    mask = np.ones_like(src, dtype=np.float64)
    enc = encode(p, cfg, src, mask)
    state = enc.s0
    logits = None
    for prev in [bos, *prefix_ids]:
        prev_arr = np.asarray([prev], dtype=np.int64)
        logits, state, _ = decode_step(p, enc.hs, enc.hUa, enc.src_mask, prev_arr, state)
    return log_softmax(logits)[0]
