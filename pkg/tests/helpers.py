"""Builders shared across the test modules: hand-sized policies, random toy
logs over their vocabularies, a small geographic fixture with hand-checkable
geometry, and finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from banditparse.cflearn import LogEntry
from banditparse.geo import Area, GeoDatabase, GeoObject
from banditparse.policy import Policy
from banditparse.vocab import Vocab


def make_tiny_policy(seed: int = 0, n_src_extra: int = 2, n_tgt_extra: int = 2,
                     emb: int = 2, hidden: int = 2, attn: int = 2,
                     max_len: int = 8) -> Policy:
    """A policy small enough for scalar oracles and finite differences."""
    src_vocab = Vocab([f"q{i}" for i in range(n_src_extra)])
    tgt_vocab = Vocab([f"t{i}" for i in range(n_tgt_extra)])
    return Policy.fresh(src_vocab, tgt_vocab, seed=seed, emb=emb, hidden=hidden,
                        attn=attn, max_len=max_len)


def make_toy_log(policy: Policy, seed: int, n: int, max_query_len: int = 3,
                 binary: bool = False) -> list[LogEntry]:
    """Random log entries over the policy's own vocabularies.  With ``binary``
    the rewards are 0/1 and consistent (sequence reward 1 iff every token
    reward is 1); otherwise rewards are generic values in [0, 1]."""
    rng = np.random.default_rng(seed)
    src_toks = policy.src_vocab.tokens[3:]
    tgt_toks = policy.tgt_vocab.tokens[3:]
    entries = []
    for _ in range(n):
        question = " ".join(str(rng.choice(src_toks))
                            for _ in range(rng.integers(1, 4)))
        query = [str(rng.choice(tgt_toks))
                 for _ in range(rng.integers(1, max_query_len + 1))]
        if binary:
            token_rewards = tuple(float(rng.integers(0, 2)) for _ in query)
            seq_reward = 1.0 if all(r == 1.0 for r in token_rewards) else 0.0
        else:
            token_rewards = tuple(float(r) for r in rng.uniform(size=len(query)))
            seq_reward = float(np.mean(token_rewards))
        entries.append(LogEntry(question, " ".join(query), seq_reward, token_rewards))
    return entries


def make_fixture_db() -> GeoDatabase:
    """Two cities, eight objects.  Paris holds exactly three hotels; one
    restaurant sits a short walk from one cash machine and far from the other."""
    areas = [Area("Paris", 48.8566, 2.3522, 10000.0),
             Area("Lyon", 45.7640, 4.8357, 10000.0)]
    objects = [
        GeoObject(1, 48.8600, 2.3500, {"tourism": "hotel", "name": "Hotel_du_Nord"}),
        GeoObject(2, 48.8500, 2.3400, {"tourism": "hotel", "name": "Le_Meridien"}),
        GeoObject(3, 48.8566, 2.3600, {"tourism": "hotel"}),
        GeoObject(4, 45.7600, 4.8300, {"tourism": "hotel", "name": "Lyon_Palace"}),
        GeoObject(5, 48.8570, 2.3520, {"amenity": "restaurant", "name": "Chez_Paul",
                                       "cuisine": "french"}),
        GeoObject(6, 48.8580, 2.3530, {"amenity": "atm"}),
        GeoObject(7, 48.8000, 2.3000, {"amenity": "atm"}),
        GeoObject(8, 48.8566, 2.3000, {"amenity": "bench"}),
    ]
    return GeoDatabase(objects, areas)


GRAD_OBJECTIVES = ("ce", "dpm", "dpm+r", "dpm+osl", "dpm+t", "dpm+t+osl")


def _gradient_candidate(seed: int, objective: str):
    from banditparse import cflearn
    from banditparse.policy.data import make_batch
    from banditparse.policy.supervised import ce_loss_and_grad

    policy = make_tiny_policy(seed=seed, n_src_extra=1 + seed % 2,
                              n_tgt_extra=1 + (seed + 1) % 2)
    # The uniform init is tiny; widen the weights so every path through the
    # network (attention included) carries signal a finite difference resolves.
    for k in policy.params:
        policy.params[k] *= 5.0
    entries = make_toy_log(policy, seed=seed + 1000, n=2 + seed % 2)

    if objective == "ce":
        batch = make_batch([policy.encode_question(e.question) for e in entries],
                           [policy.encode_query(e.query) for e in entries])
        return (policy,
                lambda: ce_loss_and_grad(policy.params, policy.cfg, batch)[0],
                lambda: ce_loss_and_grad(policy.params, policy.cfg, batch)[1])
    if objective == "dpm":
        return (policy, lambda: cflearn.dpm_value(policy, entries),
                lambda: cflearn.dpm_grad(policy, entries))
    if objective == "dpm+r":
        return (policy, lambda: cflearn.dpmr_value(policy, entries),
                lambda: cflearn.dpmr_grad(policy, entries))
    if objective == "dpm+osl":
        rw = cflearn.update_reweight_state(policy, entries)
        return (policy, lambda: cflearn.dpm_osl_value(policy, entries, rw),
                lambda: cflearn.dpm_osl_grad(policy, entries, rw))
    if objective == "dpm+t":
        return (policy, lambda: cflearn.dpmt_value(policy, entries),
                lambda: cflearn.dpmt_grad(policy, entries))
    if objective == "dpm+t+osl":
        rw = cflearn.update_reweight_state(policy, entries)
        return (policy, lambda: cflearn.dpmt_osl_value(policy, entries, rw),
                lambda: cflearn.dpmt_osl_grad(policy, entries, rw))
    raise ValueError(objective)


def gradient_case(seed: int, objective: str):
    """One random hand-sized instance: (policy, value_fn, grad_fn) for the
    given objective.  For the one-step-late objectives the reweighting state
    is computed once and frozen, so the finite-difference value function sees
    it as a constant, exactly like one training step does.

    Draws whose gradient a finite difference cannot resolve are redrawn: the
    self-normalized objective legitimately has a vanishing gradient whenever a
    single entry dominates the normalization, and a relative comparison
    against numerical noise would be meaningless there."""
    from banditparse.policy.params import global_norm

    for attempt in range(50):
        case = _gradient_candidate(seed + 7919 * attempt, objective)
        policy, value_fn, grad_fn = case
        if global_norm(grad_fn()) > 1e-5 * max(1.0, abs(value_fn())):
            return case
    raise AssertionError(f"no resolvable instance for {objective} at seed {seed}")


def finite_diff(value_fn, params: dict[str, np.ndarray],
                h: float = 1e-4) -> dict[str, np.ndarray]:
    """Central-difference gradient of ``value_fn()`` with respect to every
    parameter entry, perturbing the arrays in place."""
    grads = {}
    for name in sorted(params):
        flat = params[name].ravel()
        grad = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = value_fn()
            flat[i] = orig - h
            down = value_fn()
            flat[i] = orig
            grad[i] = (up - down) / (2.0 * h)
        grads[name] = grad.reshape(params[name].shape)
    return grads


def grad_gap(analytic: dict[str, np.ndarray],
             numeric: dict[str, np.ndarray]) -> float:
    """Relative gap ||a - f|| / max(||a||, ||f||, tiny) over the flattened
    full gradient."""
    a = np.concatenate([analytic[k].ravel() for k in sorted(analytic)])
    f = np.concatenate([numeric[k].ravel() for k in sorted(numeric)])
    return float(np.linalg.norm(a - f)
                 / max(np.linalg.norm(a), np.linalg.norm(f), 1e-12))
