"""Batched beam search over the policy.

All beams of all questions run as one matrix batch per step.  Hypotheses are
scored by raw sequence log-probability including the terminating EOS; there
is no length normalisation, so beam size 1 is exact greedy decoding.  Any
hypothesis still open when ``max_len`` tokens have been produced is closed by
forcing EOS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..vocab import BOS, EOS
from .forward import decode_step, encode, log_softmax
from .params import NetConfig

NEG_INF = -1e30


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]  # output ids, EOS not included
    score: float             # log pi(y|x) including the EOS factor


def beam_search(p: dict, cfg: NetConfig, src: list[list[int]], beam_size: int,
                max_len: int | None = None) -> list[list[Hypothesis]]:
    """Decode a batch of questions; returns per question the best
    ``beam_size`` finished hypotheses, sorted by descending score."""
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    if max_len is None:
        max_len = cfg.max_len
    from .data import pad_ids

    n_q = len(src)
    k = beam_size
    src_ids, src_mask = pad_ids(src, EOS)
    enc = encode(p, cfg, src_ids, src_mask)

    # expand encoder outputs to one row per (question, beam)
    row_q = np.repeat(np.arange(n_q), k)
    hs = enc.hs[row_q]
    hUa = enc.hUa[row_q]
    mask = enc.src_mask[row_q]

    state = enc.s0[row_q]
    prev = np.full(n_q * k, BOS, dtype=np.int64)
    tokens = np.zeros((n_q * k, max_len), dtype=np.int64)
    scores = np.full((n_q, k), NEG_INF)
    scores[:, 0] = 0.0  # one live root per question; clones would duplicate it
    finished: list[list[Hypothesis]] = [[] for _ in range(n_q)]
    done = np.zeros(n_q, dtype=bool)

    for t in range(max_len + 1):
        logits, new_state, _ = decode_step(p, hs, hUa, mask, prev, state)
        logprobs = log_softmax(logits)  # [n_q*k, V]
        total = scores.reshape(-1, 1) + logprobs

        # every live hypothesis may finish here by emitting EOS
        eos_scores = total[:, EOS].reshape(n_q, k)
        for q in range(n_q):
            if done[q]:
                continue
            for b in range(k):
                if scores[q, b] <= NEG_INF / 2:
                    continue
                finished[q].append(Hypothesis(tuple(tokens[q * k + b, :t]),
                                              float(eos_scores[q, b])))
        if t == max_len:
            break

        total[:, EOS] = NEG_INF  # continuations must not carry EOS forward
        cand = total.reshape(n_q, k * cfg.n_tgt)
        width = min(k, cand.shape[1])
        top = np.argpartition(-cand, width - 1, axis=1)[:, :width]
        top_scores = np.take_along_axis(cand, top, axis=1)
        order = np.argsort(-top_scores, axis=1)
        top = np.take_along_axis(top, order, axis=1)
        top_scores = np.take_along_axis(top_scores, order, axis=1)

        parent = top // cfg.n_tgt
        tok = top % cfg.n_tgt

        new_scores = np.where(done[:, None], NEG_INF, top_scores)
        # prune questions whose best continuation cannot beat finished pool
        for q in range(n_q):
            if done[q]:
                continue
            if len(finished[q]) >= k:
                kth = sorted(h.score for h in finished[q])[-k]
                if new_scores[q, 0] <= kth:
                    done[q] = True
                    new_scores[q, :] = NEG_INF
        if np.all(new_scores <= NEG_INF / 2):
            break

        src_rows = np.repeat(np.arange(n_q) * k, k) + parent.ravel()
        tokens = tokens[src_rows]
        tokens[np.arange(n_q * k), t] = tok.ravel()
        state = new_state[src_rows]
        prev = tok.ravel().astype(np.int64)
        scores = new_scores

    out = []
    for q in range(n_q):
        best = sorted(finished[q], key=lambda hyp: -hyp.score)[:k]
        out.append(best)
    return out


def greedy_decode(p: dict, cfg: NetConfig, src: list[list[int]],
                  max_len: int | None = None) -> list[Hypothesis]:
    return [hyps[0] for hyps in beam_search(p, cfg, src, 1, max_len)]
