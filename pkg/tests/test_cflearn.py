"""Counterfactual estimators and training loop: hand-evaluated values,
brute-force evaluation through the scalar reference network, the algebraic
identities tying the objectives together, reweighting schedules, and the
log/trace file formats."""

import math

import numpy as np
import pytest

import reference_net
from banditparse import cflearn
from banditparse.cflearn import (CfConfig, LogEntry, OslSchedule, ReweightState,
                                 TraceRecord, b2s_extract, dpm_grad, dpm_osl_grad,
                                 dpm_osl_value_from, dpm_value, dpm_value_from,
                                 dpmr_grad, dpmr_value, dpmr_value_from,
                                 dpmt_grad, dpmt_osl_grad, dpmt_value,
                                 dpmt_value_from, normalize_objective,
                                 osl_log_constant, read_log, read_trace,
                                 train_counterfactual, update_reweight_state,
                                 write_log, write_trace)
from banditparse.errors import (DegenerateLogError, MissingTokenRewardsError,
                                ParseError)
from banditparse.policy.data import make_batch
from banditparse.policy.params import flatten_params, global_norm
from banditparse.policy.supervised import TrainConfig, ce_loss_and_grad, train_supervised

from helpers import grad_gap, make_tiny_policy, make_toy_log

VALID_QUERY = ("query@3 area@1 keyval@2 name@0 Paris@s "
               "nwr@1 keyval@2 tourism@0 hotel@s qtype@1 count@0")


def all_ones_log(policy, seed, n):
    return [LogEntry(e.question, e.query, 1.0, (1.0,) * len(e.query.split()))
            for e in make_toy_log(policy, seed, n)]


# ---------------------------------------------------------------------------
# estimators on raw log-probabilities: hand-evaluated cases


def test_dpm_value_hand_case():
    # two entries with probabilities 0.5 and 0.25, both rewarded 1
    lp = np.log(np.array([0.5, 0.25]))
    assert abs(dpm_value_from(lp, np.array([1.0, 1.0])) - 0.375) < 1e-10


def test_dpmr_value_hand_case():
    # equal probabilities, rewards 0 and 1: self-normalization gives 1/2
    lp = np.log(np.array([0.2, 0.2]))
    assert abs(dpmr_value_from(lp, np.array([0.0, 1.0])) - 0.5) < 1e-10


def test_dpmr_value_constant_rewards_exact():
    rnd = np.random.default_rng(0)
    for c in (0.0, 0.25, 1.0):
        lp = rnd.uniform(-30.0, 0.0, size=17)
        assert dpmr_value_from(lp, np.full(17, c)) == pytest.approx(c, abs=1e-12)


def test_dpmr_value_ratio_invariance():
    rnd = np.random.default_rng(1)
    lp = rnd.uniform(-10.0, 0.0, size=9)
    rewards = rnd.uniform(size=9)
    base = dpmr_value_from(lp, rewards)
    for log_k in (-50.0, -3.0, 2.0, 40.0):
        assert abs(dpmr_value_from(lp + log_k, rewards) - base) < 1e-10


def test_dpmr_value_degenerate_log():
    with pytest.raises(DegenerateLogError):
        dpmr_value_from(np.array([-np.inf, -np.inf]), np.array([1.0, 1.0]))


def test_osl_constant_and_value_hand_case():
    lp = np.log(np.array([0.5, 0.25]))
    log_c = osl_log_constant(lp)
    assert abs(math.exp(log_c) - 0.375) < 1e-12
    # dividing by the constant of the same log maps the DPM value to 1
    assert abs(dpm_osl_value_from(lp, np.array([1.0, 1.0]), log_c) - 1.0) < 1e-10


def test_dpmt_value_hand_case():
    rows_lp = [np.log(np.array([0.5, 0.5])), np.log(np.array([0.25]))]
    rows_r = [np.array([1.0, 0.5]), np.array([0.0])]
    want = (1.5 * math.log(0.5) + 0.0) / 2.0
    assert abs(dpmt_value_from(rows_lp, rows_r) - want) < 1e-12
    with pytest.raises(ValueError):
        dpmt_value_from(rows_lp, [np.array([1.0]), np.array([0.0])])


# ---------------------------------------------------------------------------
# policy-coupled estimators against scalar brute force


def brute_force_seq(policy, entries):
    """Sequence probabilities from the scalar reference network."""
    return [math.exp(reference_net.sequence_logprob(
        policy.params, policy.encode_question(e.question),
        policy.encode_query(e.query))) for e in entries]


@pytest.mark.parametrize("seed", range(3))
def test_dpm_value_matches_brute_force(seed):
    policy = make_tiny_policy(seed=seed, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=seed + 50, n=5)
    pis = brute_force_seq(policy, entries)
    want = math.fsum(e.seq_reward * pi for e, pi in zip(entries, pis)) / len(entries)
    assert abs(dpm_value(policy, entries) - want) < 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_dpmr_value_matches_brute_force(seed):
    policy = make_tiny_policy(seed=seed, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=seed + 60, n=5)
    pis = brute_force_seq(policy, entries)
    want = (math.fsum(e.seq_reward * pi for e, pi in zip(entries, pis))
            / math.fsum(pis))
    assert abs(dpmr_value(policy, entries) - want) < 1e-10


def test_reweight_state_matches_brute_force():
    policy = make_tiny_policy(seed=4, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=70, n=6)
    rw = update_reweight_state(policy, entries)
    pis = brute_force_seq(policy, entries)
    assert abs(rw.constant - math.fsum(pis) / len(pis)) < 1e-10
    assert len(rw.log_cache) == len(entries)
    # the documented invariant: constant equals the mean of the cache
    assert abs(rw.constant - float(np.mean(np.exp(rw.log_cache)))) \
        < 1e-12 * rw.constant


def test_dpmt_value_matches_brute_force():
    policy = make_tiny_policy(seed=5, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=80, n=5)
    total = 0.0
    for e in entries:
        lps = reference_net.token_logprobs(policy.params,
                                           policy.encode_question(e.question),
                                           policy.encode_query(e.query))
        # query-token positions carry their own rewards; the terminating EOS
        # position carries the sequence reward
        total += math.fsum(r * lp for r, lp in zip(e.token_rewards, lps))
        total += e.seq_reward * lps[-1]
    assert abs(dpmt_value(policy, entries) - total / len(entries)) < 1e-10


# ---------------------------------------------------------------------------
# zero-reward and reduction identities


def test_all_zero_rewards_give_zero_value_and_gradient():
    policy = make_tiny_policy(seed=6)
    entries = [LogEntry(e.question, e.query, 0.0, (0.0,) * len(e.query.split()))
               for e in make_toy_log(policy, seed=90, n=4)]
    assert dpm_value(policy, entries) == 0.0
    assert global_norm(dpm_grad(policy, entries)) == 0.0
    assert dpmt_value(policy, entries) == 0.0
    assert global_norm(dpmt_grad(policy, entries)) == 0.0


def test_dpmt_all_ones_equals_negative_ce_gradient():
    policy = make_tiny_policy(seed=7, n_src_extra=3, n_tgt_extra=3)
    entries = all_ones_log(policy, seed=100, n=5)
    batch = make_batch([policy.encode_question(e.question) for e in entries],
                       [policy.encode_query(e.query) for e in entries])
    loss, ce_grads = ce_loss_and_grad(policy.params, policy.cfg, batch)
    grads = dpmt_grad(policy, entries)
    assert abs(dpmt_value(policy, entries) + loss) < 1e-12
    for k in grads:
        assert np.max(np.abs(grads[k] + ce_grads[k])) < 1e-10
        assert np.array_equal(grads[k], -ce_grads[k])  # exact, not just close


def test_dpmt_all_ones_reproduces_ce_training_trajectory():
    entries_seed, init_seed, train_seed = 110, 12, 5
    cf_policy = make_tiny_policy(seed=init_seed, n_src_extra=3, n_tgt_extra=3)
    entries = all_ones_log(cf_policy, entries_seed, n=9)

    sup_policy = make_tiny_policy(seed=init_seed, n_src_extra=3, n_tgt_extra=3)
    src = [sup_policy.encode_question(e.question) for e in entries]
    tgt = [sup_policy.encode_query(e.query) for e in entries]

    train_counterfactual(cf_policy, entries, "dpm+t",
                         cfg=CfConfig(epochs=3, batch_size=4, seed=train_seed))
    train_supervised(sup_policy.params, sup_policy.cfg, src, tgt,
                     tc=TrainConfig(epochs=3, batch_size=4, seed=train_seed))
    assert np.array_equal(flatten_params(cf_policy.params),
                          flatten_params(sup_policy.params))


# ---------------------------------------------------------------------------
# one-step-late algebra


def test_unit_reweight_state_reduces_to_plain_gradients():
    policy = make_tiny_policy(seed=8, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=120, n=4)
    unit = ReweightState.unit(len(entries), OslSchedule.NEVER)
    g_dpm, g_osl = dpm_grad(policy, entries), dpm_osl_grad(policy, entries, unit)
    g_dpmt, g_tosl = dpmt_grad(policy, entries), dpmt_osl_grad(policy, entries, unit)
    for k in g_dpm:
        assert np.array_equal(g_osl[k], g_dpm[k])
        assert np.array_equal(g_tosl[k], g_dpmt[k])


def test_osl_gradient_is_dpm_gradient_over_constant():
    # with w' = w and the minibatch equal to the whole log
    policy = make_tiny_policy(seed=9, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=130, n=5)
    rw = update_reweight_state(policy, entries)
    g_osl = dpm_osl_grad(policy, entries, rw)
    scaled = {k: g / rw.constant for k, g in dpm_grad(policy, entries).items()}
    assert grad_gap(g_osl, scaled) < 1e-12


def test_scaling_the_constant_scales_gradients_inversely():
    policy = make_tiny_policy(seed=10, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=140, n=4)
    rw = update_reweight_state(policy, entries)
    g1 = dpmt_osl_grad(policy, entries, rw)
    for k_factor in (2.0, 10.0):
        scaled = ReweightState(rw.log_cache, rw.constant * k_factor,
                               rw.log_constant + math.log(k_factor),
                               rw.step, rw.schedule)
        g2 = dpmt_osl_grad(policy, entries, scaled)
        assert grad_gap(g2, {k: g / k_factor for k, g in g1.items()}) < 1e-12


def test_dpmr_gradient_decomposes_into_osl_terms():
    # Self-normalized gradient = reweighted numerator gradient minus the mean
    # score r_hat times the same gradient under all-ones rewards, with the
    # reweighting state refreshed at the current parameters.
    policy = make_tiny_policy(seed=11, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=150, n=5)
    rw = update_reweight_state(policy, entries)
    lp = policy.sequence_logprobs_batch([e.question for e in entries],
                                        [e.query for e in entries])
    weights = np.exp(lp - cflearn.logsumexp(lp))
    r_hat = float(np.sum(np.array([e.seq_reward for e in entries]) * weights))

    ones = [LogEntry(e.question, e.query, 1.0, None) for e in entries]
    g_num = dpm_osl_grad(policy, entries, rw)
    g_norm = dpm_osl_grad(policy, ones, rw)
    g_dpmr = dpmr_grad(policy, entries)
    for k in g_dpmr:
        assert np.allclose(g_dpmr[k], g_num[k] - r_hat * g_norm[k],
                           rtol=1e-10, atol=1e-16)


# ---------------------------------------------------------------------------
# training loop: schedules, selection, errors


def trace_constants(policy, entries, objective, schedule, validate=None,
                    epochs=2, batch_size=2):
    result = train_counterfactual(
        policy, entries, objective, schedule=schedule,
        cfg=CfConfig(epochs=epochs, batch_size=batch_size,
                     validations_per_epoch=2, seed=3),
        validate=validate)
    return result, [r.osl_constant for r in result.trace]


def test_schedule_never_keeps_unit_constant():
    policy = make_tiny_policy(seed=13, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=160, n=8)
    _, consts = trace_constants(policy, entries, "dpm+osl", OslSchedule.NEVER)
    assert consts == [1.0] * 8


def test_schedule_once_never_refreshes():
    policy = make_tiny_policy(seed=14, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=170, n=8)
    _, consts = trace_constants(policy, entries, "dpm+osl", OslSchedule.ONCE)
    assert len(set(consts)) == 1
    assert consts[0] != 1.0


def test_schedule_every_epoch_refreshes_at_epoch_starts():
    policy = make_tiny_policy(seed=15, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=180, n=8)
    _, consts = trace_constants(policy, entries, "dpm+t+osl", OslSchedule.EVERY_EPOCH)
    assert len(consts) == 8  # 4 updates per epoch, 2 epochs
    assert len(set(consts[:4])) == 1
    assert len(set(consts[4:])) == 1
    assert consts[0] != consts[4]


def test_schedule_every_validation_refreshes_at_validations():
    policy = make_tiny_policy(seed=16, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=190, n=8)
    # validations land after steps 2, 4, 6, 8; each refresh shows up at the
    # next recorded step
    _, consts = trace_constants(policy, entries, "dpm+osl",
                                OslSchedule.EVERY_VALIDATION)
    assert consts[0] == consts[1]
    assert consts[2] == consts[3]
    assert consts[4] == consts[5]
    assert consts[1] != consts[2]
    assert consts[3] != consts[4]


def test_schedule_every_minibatch_refreshes_each_step():
    policy = make_tiny_policy(seed=17, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=200, n=8)
    _, consts = trace_constants(policy, entries, "dpm+t+osl",
                                OslSchedule.EVERY_MINIBATCH)
    assert len(set(consts)) == len(consts)


def test_sequence_objectives_trace_nan_constant():
    policy = make_tiny_policy(seed=18, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=210, n=4)
    result = train_counterfactual(policy, entries, "dpm",
                                  cfg=CfConfig(epochs=1, batch_size=2))
    assert all(math.isnan(r.osl_constant) for r in result.trace)
    assert all(r.step == i + 1 for i, r in enumerate(result.trace))


def test_validation_scores_recorded_and_best_params_selected():
    policy = make_tiny_policy(seed=19, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=220, n=8)
    snapshots, scores = [], iter((0.7, 0.2, 0.4, 0.1))

    def validate(params):
        snapshots.append(flatten_params(params).copy())
        return next(scores)

    result, _ = trace_constants(policy, entries, "dpm", OslSchedule.NEVER,
                                validate=validate)
    assert result.best_score == 0.7
    assert np.array_equal(flatten_params(policy.params), snapshots[0])
    assert np.array_equal(flatten_params(result.best_params), snapshots[0])
    recorded = [r.dev_f1 for r in result.trace if not math.isnan(r.dev_f1)]
    assert recorded == [0.7, 0.2, 0.4, 0.1]


def test_final_params_win_without_validator():
    policy = make_tiny_policy(seed=20, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=230, n=4)
    result = train_counterfactual(policy, entries, "dpm+t",
                                  cfg=CfConfig(epochs=1, batch_size=2))
    assert np.array_equal(flatten_params(result.best_params),
                          flatten_params(policy.params))


def test_train_counterfactual_rejects_bad_inputs():
    policy = make_tiny_policy(seed=21, n_src_extra=3, n_tgt_extra=3)
    entries = make_toy_log(policy, seed=240, n=4)
    with pytest.raises(ValueError):
        train_counterfactual(policy, [], "dpm")
    with pytest.raises(ValueError):
        train_counterfactual(policy, entries, "dpm+r")  # estimator, not objective
    no_tokens = [LogEntry(e.question, e.query, e.seq_reward, None) for e in entries]
    with pytest.raises(MissingTokenRewardsError):
        train_counterfactual(policy, no_tokens, "dpm+t",
                             cfg=CfConfig(epochs=1, batch_size=2))


# ---------------------------------------------------------------------------
# bandit-to-supervised conversion


def test_b2s_extract_takes_exactly_the_fully_rewarded_entries():
    entries = [LogEntry(f"q {i}", VALID_QUERY, 1.0 if i % 3 == 0 else 0.5)
               for i in range(30)]
    pairs = b2s_extract(entries)
    assert len(pairs) == 10
    assert all(str(p.query) == VALID_QUERY for p in pairs)
    assert [p.question for p in pairs] == [f"q {i}" for i in range(0, 30, 3)]


def test_b2s_extract_human_log_ratio_fixture():
    # a log shaped like the human-feedback collection: 995 judged queries of
    # which 531 were marked fully correct
    entries = [LogEntry(f"q {i}", VALID_QUERY, 1.0 if i < 531 else 0.0)
               for i in range(995)]
    assert len(b2s_extract(entries)) == 531
    assert b2s_extract([]) == []


def test_b2s_training_runs_and_requires_correct_entries():
    tgt_tokens = sorted(set(VALID_QUERY.split()))
    from banditparse.vocab import Vocab
    from banditparse.policy import Policy
    policy = Policy.fresh(Vocab(["where", "hotels"]), Vocab(tgt_tokens),
                          seed=0, emb=2, hidden=2, attn=2, max_len=16)
    entries = [LogEntry("where hotels", VALID_QUERY, 1.0),
               LogEntry("where", VALID_QUERY, 0.0)]
    result = train_counterfactual(policy, entries, "b2s",
                                  cfg=CfConfig(epochs=2, batch_size=2))
    assert result.trace
    with pytest.raises(ValueError):
        train_counterfactual(policy, [entries[1]], "b2s")


# ---------------------------------------------------------------------------
# names, records, files


def test_normalize_objective_aliases():
    for raw, want in (("DPM", "dpm"), ("dpm-t", "dpm+t"), ("dpm_t", "dpm+t"),
                      ("dpmt", "dpm+t"), ("DPM+OSL", "dpm+osl"),
                      ("dpm_t_osl", "dpm+t+osl"), ("dpmtosl", "dpm+t+osl"),
                      ("b2s", "b2s")):
        assert normalize_objective(raw) == want
    with pytest.raises(ValueError):
        normalize_objective("ips")


def test_osl_schedule_parse():
    assert OslSchedule.parse(" Every-Validation ") is OslSchedule.EVERY_VALIDATION
    assert OslSchedule.parse("once") is OslSchedule.ONCE
    with pytest.raises(ValueError, match="every-minibatch"):
        OslSchedule.parse("sometimes")


def test_log_entry_validation():
    with pytest.raises(ValueError):
        LogEntry("q", "a b", 1.5)
    with pytest.raises(ValueError):
        LogEntry("q", "a b", 0.5, (1.0,))  # two tokens, one reward
    with pytest.raises(ValueError):
        LogEntry("q", "a b", 0.5, (1.0, -0.25))


def test_log_round_trip(tmp_path):
    entries = [
        LogEntry("where are hotels", VALID_QUERY, 1 / 3, (1 / 3,) * 11),
        LogEntry("plain entry", "a@0", 1.0),
    ]
    path = tmp_path / "log.tsv"
    write_log(entries, path)
    assert read_log(path) == entries


def test_read_log_rejects_malformed_lines(tmp_path):
    path = tmp_path / "log.tsv"
    path.write_text("q\ta@0\n")  # only two fields
    with pytest.raises(ParseError) as err:
        read_log(path)
    assert err.value.line == 1
    path.write_text("q\ta@0\tnot-a-number\n")
    with pytest.raises(ParseError):
        read_log(path)


def test_read_log_skips_blank_lines(tmp_path):
    path = tmp_path / "log.tsv"
    path.write_text("q\ta@0\t0.5\n\nq2\tb@0\t1\t1\n")
    entries = read_log(path)
    assert len(entries) == 2
    assert entries[1].token_rewards == (1.0,)


def test_trace_round_trip(tmp_path):
    records = [TraceRecord(1, float("nan"), -0.25, 1.0),
               TraceRecord(2, 0.5, -0.125, float("nan"))]
    path = tmp_path / "trace.tsv"
    write_trace(records, path)
    write_trace([TraceRecord(3, 0.75, -0.0625, 2.0)], path, append=True)
    got = read_trace(path)
    assert [r.step for r in got] == [1, 2, 3]
    assert math.isnan(got[0].dev_f1) and got[1].dev_f1 == 0.5
    assert math.isnan(got[1].osl_constant) and got[2].osl_constant == 2.0
