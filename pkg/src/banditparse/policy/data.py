"""Padding and batch assembly for the policy network."""

from __future__ import annotations

import numpy as np

from ..vocab import BOS, EOS
from .forward import Batch


def pad_ids(seqs: list[list[int]], pad: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad to a rectangle; returns (ids, mask)."""
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), pad, dtype=np.int64)
    mask = np.zeros((len(seqs), width))
    for i, seq in enumerate(seqs):
        ids[i, :len(seq)] = seq
        mask[i, :len(seq)] = 1.0
    return ids, mask


def make_batch(src: list[list[int]], tgt: list[list[int]], rows: list | None = None) -> Batch:
    """``tgt`` sequences are raw token ids; EOS is appended here, BOS prepended
    on the input side, so the model always scores the terminating EOS."""
    if any(len(s) == 0 for s in src):
        raise ValueError("empty source sequence")
    src_ids, src_mask = pad_ids(src, EOS)
    tgt_in, _ = pad_ids([[BOS, *t] for t in tgt], EOS)
    tgt_out, tgt_mask = pad_ids([[*t, EOS] for t in tgt], EOS)
    return Batch(src_ids, src_mask, tgt_in[:, :tgt_out.shape[1]], tgt_out, tgt_mask,
                 rows if rows is not None else list(range(len(src))))


def iter_minibatches(n: int, batch_size: int, rng: np.random.Generator | None = None):
    """Yield index arrays covering range(n); shuffled when rng is given."""
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
