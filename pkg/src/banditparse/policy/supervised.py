"""Cross-entropy training on question/gold-query pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .backward import weighted_logprob_grad
from .data import iter_minibatches, make_batch
from .forward import Batch, forward
from .optim import Adadelta
from .params import clip_global_norm, copy_params


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 16
    clip_norm: float = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    seed: int = 0
    validate_every: int | None = None  # updates between validations, None = once per epoch
    progress: Callable[[str], None] | None = None


@dataclass
class TrainResult:
    best_params: dict
    best_score: float
    history: list[dict] = field(default_factory=list)


def ce_loss_and_grad(p: dict, cfg, batch: Batch) -> tuple[float, dict]:
    """Mean negative log-likelihood over the batch and its gradient."""
    fw = forward(p, cfg, batch)
    n = batch.tgt_in.shape[0]
    rows, cols = np.arange(n)[:, None], np.arange(batch.tgt_out.shape[1])[None, :]
    picked = fw.logprobs[rows, cols, batch.tgt_out] * batch.tgt_mask
    loss = -float(picked.sum()) / n
    coeff = -batch.tgt_mask / n
    return loss, weighted_logprob_grad(p, cfg, batch, coeff, fw=fw)


def train_supervised(params: dict, cfg, src_seqs: list[list[int]],
                     tgt_seqs: list[list[int]],
                     validate: Callable[[dict], float] | None = None,
                     tc: TrainConfig = TrainConfig()) -> TrainResult:
    """Adadelta descent on CE loss, mutating ``params`` in place.  Model
    selection keeps the parameters with the best validation score; with no
    validator the final parameters win."""
    if len(src_seqs) != len(tgt_seqs) or not src_seqs:
        raise ValueError("need equally many non-empty source and target lists")
    opt = Adadelta(params, rho=tc.rho, eps=tc.eps)
    rng = np.random.default_rng(tc.seed)
    history: list[dict] = []
    best_params = copy_params(params)
    best_score = -np.inf
    updates = 0

    def check(epoch: int, loss: float) -> None:
        nonlocal best_params, best_score
        score = validate(params) if validate is not None else -loss
        history.append({"update": updates, "epoch": epoch, "loss": loss, "score": score})
        if score > best_score:
            best_score = score
            best_params = copy_params(params)
        if tc.progress is not None:
            tc.progress(f"epoch {epoch} update {updates} loss {loss:.4f} score {score:.4f}")

    for epoch in range(1, tc.epochs + 1):
        losses = []
        for idx in iter_minibatches(len(src_seqs), tc.batch_size, rng):
            batch = make_batch([src_seqs[i] for i in idx], [tgt_seqs[i] for i in idx])
            loss, grads = ce_loss_and_grad(params, cfg, batch)
            clip_global_norm(grads, tc.clip_norm)
            opt.step(params, grads)
            losses.append(loss)
            updates += 1
            if tc.validate_every and updates % tc.validate_every == 0:
                check(epoch, float(np.mean(losses)))
        if not tc.validate_every:
            check(epoch, float(np.mean(losses)))
    if not history:
        check(tc.epochs, float("nan"))
    return TrainResult(best_params, best_score, history)
