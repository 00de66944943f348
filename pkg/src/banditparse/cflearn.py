"""Counterfactual learning from deterministically logged bandit feedback.

Objectives over a log {(x_t, y_t, delta_t)} produced by a deterministic
logging policy (propensities are all 1):

  DPM        mean of delta_t * pi_w(y_t|x_t)
  DPM+R      the same, self-normalized by the mean sequence probability
  DPM+OSL    minibatch numerator over a one-step-late full-log constant
  DPM+T      mean of sum_j delta_{t,j} * log pi_w(y_{t,j} | y_{t,<j}, x_t)
  DPM+T+OSL  token-level numerator over the one-step-late constant
  B2S        bandit-to-supervised: fully-correct entries as a CE training set

Rewards live in [0, 1] and objectives are maximized by gradient ascent; a
loss-style formulation in [-1, 0] is the affine map loss = reward - 1 and
changes gradients only by a constant offset times the DPM weight.

Convention for token-level objectives: token-reward lists cover the query
tokens only, and the terminating EOS position is scored with the sequence
reward (the decision to stop is right exactly when the whole sequence is).
All-zero rewards therefore give a zero objective, and under all-ones rewards
DPM+T is exactly the negated cross-entropy objective, including the
termination factor.

Probabilities are handled in log space throughout; ratios such as
pi_w / constant are formed by exponentiating log differences.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .corpus import SupervisedPair
from .errors import (DegenerateLogError, MissingTokenRewardsError, ParseError)
from .mrl import LinearQuery
from .policy.backward import weighted_logprob_grad
from .policy.data import iter_minibatches, make_batch
from .policy.forward import Batch, ForwardCache, forward
from .policy.optim import Adadelta
from .policy.params import clip_global_norm, copy_params, scale_params
from .policy.supervised import TrainResult

REWARD_RANGE = (0.0, 1.0)
MAX_REWARD = REWARD_RANGE[1]


def loss_from_reward(reward: float) -> float:
    """Map a reward in [0,1] to the loss-style range [-1,0]."""
    return reward - 1.0


# ---------------------------------------------------------------------------
# log records and files


@dataclass(frozen=True)
class LogEntry:
    question: str
    query: str
    seq_reward: float
    token_rewards: tuple[float, ...] | None = None

    def __post_init__(self):
        lo, hi = REWARD_RANGE
        if not lo <= self.seq_reward <= hi:
            raise ValueError(f"sequence reward {self.seq_reward} outside {REWARD_RANGE}")
        if self.token_rewards is not None:
            object.__setattr__(self, "token_rewards", tuple(float(r) for r in self.token_rewards))
            if len(self.token_rewards) != len(self.query.split()):
                raise ValueError("token rewards must align one-to-one with query tokens")
            if any(not lo <= r <= hi for r in self.token_rewards):
                raise ValueError(f"token reward outside {REWARD_RANGE}")


def format_log_line(e: LogEntry) -> str:
    # repr keeps full float precision so the written log reads back bit-equal
    fields = [e.question, e.query, repr(e.seq_reward)]
    if e.token_rewards is not None:
        fields.append(",".join(repr(r) for r in e.token_rewards))
    return "\t".join(fields)


def write_log(entries: Sequence[LogEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(format_log_line(e) + "\n")


def read_log(path) -> list[LogEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) not in (3, 4):
                raise ParseError(f"expected 3 or 4 tab-separated fields, got {len(fields)}",
                                 path=str(path), line=lineno)
            try:
                tok = tuple(float(r) for r in fields[3].split(",")) if len(fields) == 4 else None
                entries.append(LogEntry(fields[0], fields[1], float(fields[2]), tok))
            except ValueError as exc:
                raise ParseError(str(exc), path=str(path), line=lineno) from exc
    return entries


@dataclass(frozen=True)
class TraceRecord:
    step: int
    dev_f1: float  # nan on non-validation steps
    objective_value: float
    osl_constant: float  # nan when the objective has no reweighting state


def write_trace(records: Sequence[TraceRecord], path, append: bool = False) -> None:
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        if not append:
            fh.write("step\tdev_f1\tobjective_value\tosl_constant\n")
        for r in records:
            fh.write(f"{r.step}\t{r.dev_f1:.6g}\t{r.objective_value:.6g}\t{r.osl_constant:.6g}\n")


def read_trace(path) -> list[TraceRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        next(fh, None)
        for line in fh:
            step, f1, val, const = line.rstrip("\n").split("\t")
            records.append(TraceRecord(int(step), float(f1), float(val), float(const)))
    return records


# ---------------------------------------------------------------------------
# estimators on raw log-probabilities (exact-arithmetic layer)


def dpm_value_from(seq_logprobs: np.ndarray, rewards: np.ndarray) -> float:
    return float(np.mean(rewards * np.exp(seq_logprobs)))


def dpmr_value_from(seq_logprobs: np.ndarray, rewards: np.ndarray) -> float:
    lse = logsumexp(seq_logprobs)
    if not np.isfinite(lse):
        raise DegenerateLogError("all sequence probabilities underflow to zero")
    weights = np.exp(seq_logprobs - lse)
    weights = weights / weights.sum()
    # shifted weighted average: algebraically the same, but constant rewards
    # come back bit-exact instead of accumulating a few ulps of roundoff
    rewards = np.asarray(rewards, dtype=float)
    ref = float(rewards[0])
    return ref + float(np.sum(weights * (rewards - ref)))


def osl_log_constant(seq_logprobs: np.ndarray) -> float:
    """log[(1/n) sum_t pi(y_t|x_t)]."""
    return float(logsumexp(seq_logprobs) - math.log(len(seq_logprobs)))


def dpm_osl_value_from(seq_logprobs: np.ndarray, rewards: np.ndarray,
                       log_constant: float) -> float:
    return float(np.mean(rewards * np.exp(seq_logprobs - log_constant)))


def dpmt_value_from(token_logprob_rows: Sequence[np.ndarray],
                    reward_rows: Sequence[np.ndarray]) -> float:
    total = 0.0
    for lps, rs in zip(token_logprob_rows, reward_rows):
        if len(lps) != len(rs):
            raise ValueError("token logprobs and rewards must align")
        total += float(np.dot(rs, lps))
    return total / len(token_logprob_rows)


def logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    if not np.isfinite(m):
        return m
    return m + float(np.log(np.sum(np.exp(x - m))))


# ---------------------------------------------------------------------------
# policy-coupled objectives


@dataclass
class ScoredEntries:
    """One forward pass over a set of log entries."""

    batch: Batch
    fw: ForwardCache
    token_lp: np.ndarray  # [n, Ty], zero on padding
    seq_lp: np.ndarray    # [n]
    rewards: np.ndarray   # [n]
    token_reward_rows: list[np.ndarray] | None


def score_entries(policy, entries: Sequence[LogEntry],
                  need_token_rewards: bool = False) -> ScoredEntries:
    if not entries:
        raise ValueError("empty log")
    token_rows = None
    if need_token_rewards:
        if any(e.token_rewards is None for e in entries):
            raise MissingTokenRewardsError(
                "token-level objective requires token rewards on every entry")
        token_rows = [np.asarray(e.token_rewards) for e in entries]
    batch = make_batch([policy.encode_question(e.question) for e in entries],
                       [policy.encode_query(e.query) for e in entries])
    fw = forward(policy.params, policy.cfg, batch)
    n, ty = batch.tgt_out.shape
    picked = fw.logprobs[np.arange(n)[:, None], np.arange(ty)[None, :], batch.tgt_out]
    token_lp = picked * batch.tgt_mask
    return ScoredEntries(batch, fw, token_lp, token_lp.sum(axis=1),
                         np.asarray([e.seq_reward for e in entries]), token_rows)


def _seq_coeff(sc: ScoredEntries, per_row: np.ndarray) -> np.ndarray:
    return per_row[:, None] * sc.batch.tgt_mask


def _token_coeff(sc: ScoredEntries, scale: float | np.ndarray) -> np.ndarray:
    """Token rewards in coefficient form, EOS position weighted by the
    sequence reward, times scale."""
    coeff = np.zeros_like(sc.batch.tgt_mask)
    for i, rs in enumerate(sc.token_reward_rows):
        coeff[i, :len(rs)] = rs
        coeff[i, len(rs)] = sc.rewards[i]
    return coeff * scale


def dpm_value(policy, entries: Sequence[LogEntry]) -> float:
    sc = score_entries(policy, entries)
    return dpm_value_from(sc.seq_lp, sc.rewards)


def dpm_grad(policy, entries: Sequence[LogEntry],
             sc: ScoredEntries | None = None) -> dict[str, np.ndarray]:
    sc = sc or score_entries(policy, entries)
    per_row = sc.rewards * np.exp(sc.seq_lp) / len(entries)
    return weighted_logprob_grad(policy.params, policy.cfg, sc.batch,
                                 _seq_coeff(sc, per_row), fw=sc.fw)


def dpmr_value(policy, entries: Sequence[LogEntry]) -> float:
    sc = score_entries(policy, entries)
    return dpmr_value_from(sc.seq_lp, sc.rewards)


def dpmr_grad(policy, entries: Sequence[LogEntry],
              sc: ScoredEntries | None = None) -> dict[str, np.ndarray]:
    """Exact gradient of the self-normalized objective; the subtracted term
    uses the full-log mean score weighted by normalized probabilities."""
    sc = sc or score_entries(policy, entries)
    lse = logsumexp(sc.seq_lp)
    if not np.isfinite(lse):
        raise DegenerateLogError("all sequence probabilities underflow to zero")
    weights = np.exp(sc.seq_lp - lse)  # pi-bar / n
    r_hat = float(np.sum(sc.rewards * weights))
    per_row = weights * (sc.rewards - r_hat)
    return weighted_logprob_grad(policy.params, policy.cfg, sc.batch,
                                 _seq_coeff(sc, per_row), fw=sc.fw)


def dpmt_value(policy, entries: Sequence[LogEntry]) -> float:
    sc = score_entries(policy, entries, need_token_rewards=True)
    coeff = _token_coeff(sc, 1.0)
    return float((coeff * sc.token_lp).sum()) / len(entries)


def dpmt_grad(policy, entries: Sequence[LogEntry],
              sc: ScoredEntries | None = None) -> dict[str, np.ndarray]:
    sc = sc or score_entries(policy, entries, need_token_rewards=True)
    coeff = _token_coeff(sc, 1.0 / len(entries))
    return weighted_logprob_grad(policy.params, policy.cfg, sc.batch, coeff, fw=sc.fw)


# ---------------------------------------------------------------------------
# one-step-late reweighting


class OslSchedule(enum.Enum):
    NEVER = "never"
    ONCE = "once"
    EVERY_EPOCH = "every-epoch"
    EVERY_VALIDATION = "every-validation"
    EVERY_MINIBATCH = "every-minibatch"

    @classmethod
    def parse(cls, name: str) -> "OslSchedule":
        try:
            return cls(name.strip().lower())
        except ValueError:
            options = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown OSL schedule {name!r} (expected one of {options})")


@dataclass(frozen=True)
class ReweightState:
    """Snapshot of the full-log probabilities under the one-step-late
    parameters w', kept as log pi_{w'}(y_t|x_t) per entry."""

    log_cache: np.ndarray
    constant: float      # (1/n) sum_t pi_{w'}(y_t|x_t)
    log_constant: float
    step: int
    schedule: OslSchedule

    @classmethod
    def unit(cls, n: int, schedule: OslSchedule, step: int = 0) -> "ReweightState":
        """No-reweighting state: every cached probability is 1."""
        return cls(np.zeros(n), 1.0, 0.0, step, schedule)


def update_reweight_state(policy, entries: Sequence[LogEntry], step: int = 0,
                          schedule: OslSchedule = OslSchedule.EVERY_VALIDATION,
                          batch_size: int = 64) -> ReweightState:
    """Recompute the cache and constant over the whole log with w' := the
    policy's current parameters."""
    if not entries:
        raise ValueError("empty log")
    lps = np.empty(len(entries))
    for idx in iter_minibatches(len(entries), batch_size):
        chunk = [entries[i] for i in idx]
        lps[idx] = policy.sequence_logprobs_batch(
            [e.question for e in chunk], [e.query for e in chunk])
    log_constant = osl_log_constant(lps)
    constant = math.exp(log_constant)
    if not constant > 0.0:
        raise DegenerateLogError("reweighting constant underflowed to zero")
    return ReweightState(lps, constant, log_constant, step, schedule)


def dpm_osl_value(policy, minibatch: Sequence[LogEntry], rw: ReweightState) -> float:
    sc = score_entries(policy, minibatch)
    return dpm_osl_value_from(sc.seq_lp, sc.rewards, rw.log_constant)


def dpm_osl_grad(policy, minibatch: Sequence[LogEntry], rw: ReweightState,
                 sc: ScoredEntries | None = None) -> dict[str, np.ndarray]:
    sc = sc or score_entries(policy, minibatch)
    per_row = sc.rewards * np.exp(sc.seq_lp - rw.log_constant) / len(minibatch)
    return weighted_logprob_grad(policy.params, policy.cfg, sc.batch,
                                 _seq_coeff(sc, per_row), fw=sc.fw)


def dpmt_osl_value(policy, minibatch: Sequence[LogEntry], rw: ReweightState) -> float:
    sc = score_entries(policy, minibatch, need_token_rewards=True)
    coeff = _token_coeff(sc, math.exp(-rw.log_constant))
    return float((coeff * sc.token_lp).sum()) / len(minibatch)


def dpmt_osl_grad(policy, minibatch: Sequence[LogEntry], rw: ReweightState,
                  sc: ScoredEntries | None = None) -> dict[str, np.ndarray]:
    sc = sc or score_entries(policy, minibatch, need_token_rewards=True)
    coeff = _token_coeff(sc, math.exp(-rw.log_constant) / len(minibatch))
    return weighted_logprob_grad(policy.params, policy.cfg, sc.batch, coeff, fw=sc.fw)


# ---------------------------------------------------------------------------
# bandit-to-supervised conversion


def b2s_extract(entries: Sequence[LogEntry]) -> list[SupervisedPair]:
    """Entries whose sequence reward is maximal become supervised pairs."""
    return [SupervisedPair(e.question, LinearQuery.parse(e.query))
            for e in entries if e.seq_reward == MAX_REWARD]


# ---------------------------------------------------------------------------
# training loop


OBJECTIVES = ("dpm", "dpm+osl", "dpm+t", "dpm+t+osl", "b2s")


@dataclass
class CfConfig:
    epochs: int = 10
    batch_size: int = 16
    clip_norm: float = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    seed: int = 0
    validations_per_epoch: int = 4
    progress: Callable[[str], None] | None = None


@dataclass
class CfResult:
    best_params: dict
    best_score: float
    trace: list[TraceRecord] = field(default_factory=list)


def normalize_objective(objective: str) -> str:
    name = objective.strip().lower().replace("_", "+").replace("-", "+")
    name = {"dpmt": "dpm+t", "dpmosl": "dpm+osl", "dpmtosl": "dpm+t+osl",
            "dpm+tosl": "dpm+t+osl", "dpm+t+osl": "dpm+t+osl"}.get(name, name)
    if name not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r} (expected one of {OBJECTIVES})")
    return name


def train_counterfactual(policy, entries: Sequence[LogEntry], objective: str,
                         schedule: OslSchedule | str = OslSchedule.EVERY_VALIDATION,
                         cfg: CfConfig = CfConfig(),
                         validate: Callable[[dict], float] | None = None) -> CfResult:
    """Minibatched gradient ascent on the chosen objective, mutating the
    policy's parameters in place.  Validation (by whatever score ``validate``
    computes, F1 in the full pipeline) drives model selection; the best
    parameters are returned alongside the metrics trace."""
    obj = normalize_objective(objective)
    if isinstance(schedule, str):
        schedule = OslSchedule.parse(schedule)
    if not entries:
        raise ValueError("empty log")
    if obj == "b2s":
        return _train_b2s(policy, entries, cfg, validate)

    token_level = obj in ("dpm+t", "dpm+t+osl")
    uses_osl = obj in ("dpm+osl", "dpm+t+osl")
    if token_level and any(e.token_rewards is None for e in entries):
        raise MissingTokenRewardsError(
            f"objective {obj} requires token rewards on every log entry")

    opt = Adadelta(policy.params, rho=cfg.rho, eps=cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    n = len(entries)
    updates_per_epoch = math.ceil(n / cfg.batch_size)
    validate_every = max(1, updates_per_epoch // max(1, cfg.validations_per_epoch))

    rw: ReweightState | None = None
    if uses_osl:
        if schedule is OslSchedule.NEVER:
            rw = ReweightState.unit(n, schedule)
        else:
            rw = update_reweight_state(policy, entries, step=0, schedule=schedule)

    trace: list[TraceRecord] = []
    best_params = copy_params(policy.params)
    best_score = -np.inf
    step = 0

    def run_validation() -> None:
        nonlocal best_params, best_score, rw
        score = validate(policy.params) if validate is not None else np.nan
        if trace:
            trace[-1] = replace(trace[-1], dev_f1=score)
        if validate is not None and score > best_score:
            best_score = score
            best_params = copy_params(policy.params)
        if cfg.progress is not None:
            cfg.progress(f"{obj} step {step} dev {score:.4f}")
        if uses_osl and schedule is OslSchedule.EVERY_VALIDATION:
            rw = update_reweight_state(policy, entries, step=step, schedule=schedule)

    for epoch in range(1, cfg.epochs + 1):
        if uses_osl and schedule is OslSchedule.EVERY_EPOCH and epoch > 1:
            rw = update_reweight_state(policy, entries, step=step, schedule=schedule)
        for idx in iter_minibatches(n, cfg.batch_size, rng):
            if uses_osl and schedule is OslSchedule.EVERY_MINIBATCH and step > 0:
                rw = update_reweight_state(policy, entries, step=step, schedule=schedule)
            chunk = [entries[i] for i in idx]
            sc = score_entries(policy, chunk, need_token_rewards=token_level)
            if obj == "dpm":
                value = dpm_value_from(sc.seq_lp, sc.rewards)
                grads = dpm_grad(policy, chunk, sc=sc)
            elif obj == "dpm+osl":
                value = dpm_osl_value_from(sc.seq_lp, sc.rewards, rw.log_constant)
                grads = dpm_osl_grad(policy, chunk, rw, sc=sc)
            elif obj == "dpm+t":
                coeff = _token_coeff(sc, 1.0)
                value = float((coeff * sc.token_lp).sum()) / len(chunk)
                grads = dpmt_grad(policy, chunk, sc=sc)
            else:  # dpm+t+osl
                coeff = _token_coeff(sc, math.exp(-rw.log_constant))
                value = float((coeff * sc.token_lp).sum()) / len(chunk)
                grads = dpmt_osl_grad(policy, chunk, rw, sc=sc)
            grads = scale_params(grads, -1.0)  # ascent on the objective
            clip_global_norm(grads, cfg.clip_norm)
            opt.step(policy.params, grads)
            step += 1
            trace.append(TraceRecord(step, np.nan, value,
                                     rw.constant if rw is not None else np.nan))
            if step % validate_every == 0:
                run_validation()
    if not trace or not np.isfinite(trace[-1].dev_f1):
        run_validation()
    if validate is None:
        best_params = copy_params(policy.params)
    policy.params = best_params
    return CfResult(best_params, best_score, trace)


def _train_b2s(policy, entries: Sequence[LogEntry], cfg: CfConfig,
               validate: Callable[[dict], float] | None) -> CfResult:
    from .policy.supervised import TrainConfig, train_supervised

    pairs = b2s_extract(entries)
    if not pairs:
        raise ValueError("B2S found no fully-correct entries in the log")
    src = [policy.encode_question(p.question) for p in pairs]
    tgt = [policy.encode_query(p.query) for p in pairs]
    updates_per_epoch = math.ceil(len(pairs) / cfg.batch_size)
    tc = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                     clip_norm=cfg.clip_norm, rho=cfg.rho, eps=cfg.eps, seed=cfg.seed,
                     validate_every=max(1, updates_per_epoch // max(1, cfg.validations_per_epoch)),
                     progress=cfg.progress)
    result: TrainResult = train_supervised(
        policy.params, policy.cfg, src, tgt,
        validate=validate if validate is not None else None, tc=tc)
    policy.params = result.best_params
    trace = [TraceRecord(h["update"], h["score"] if validate else np.nan,
                         -h["loss"], np.nan) for h in result.history]
    return CfResult(result.best_params, result.best_score, trace)
