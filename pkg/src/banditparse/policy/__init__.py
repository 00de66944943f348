"""Neural semantic parsing policy: a bidirectional GRU encoder with an
attention-based conditional GRU decoder, written directly against numpy with
hand-derived gradients."""

from .backward import weighted_logprob_grad
from .beam import Hypothesis, beam_search, greedy_decode
from .data import iter_minibatches, make_batch, pad_ids
from .forward import (Batch, attend, decode_step, encode, forward, log_softmax,
                      next_token_logprobs, sequence_logprobs, token_logprobs)
from .model import Policy, ScoredQuery
from .optim import Adadelta
from .params import (NetConfig, add_scaled, clip_global_norm, copy_params,
                     flatten_params, global_norm, init_params, load_checkpoint,
                     param_shapes, save_checkpoint, zeros_like_params)
from .supervised import TrainConfig, TrainResult, ce_loss_and_grad, train_supervised

__all__ = [
    "Adadelta", "Batch", "Hypothesis", "NetConfig", "Policy", "ScoredQuery",
    "TrainConfig", "TrainResult", "add_scaled", "attend", "beam_search",
    "ce_loss_and_grad", "clip_global_norm", "copy_params", "decode_step",
    "encode", "flatten_params", "forward", "global_norm", "greedy_decode",
    "init_params", "iter_minibatches", "load_checkpoint", "log_softmax",
    "make_batch", "next_token_logprobs", "pad_ids", "param_shapes",
    "save_checkpoint", "sequence_logprobs", "token_logprobs",
    "train_supervised", "weighted_logprob_grad", "zeros_like_params",
]
