"""Policy network forward pass against an independent scalar oracle."""

import numpy as np
import pytest

import reference_net
from banditparse.policy.data import iter_minibatches, make_batch, pad_ids
from banditparse.policy.forward import forward, log_softmax
from banditparse.policy.params import (NetConfig, clip_global_norm,
                                       flatten_params, global_norm,
                                       init_params, load_checkpoint,
                                       save_checkpoint)
from helpers import make_tiny_policy


def random_instance(seed: int):
    """A tiny policy plus one random (source ids, target ids) pair."""
    rng = np.random.default_rng(seed)
    policy = make_tiny_policy(seed=seed, n_src_extra=1 + seed % 3,
                              n_tgt_extra=1 + (seed + 1) % 3,
                              emb=2 + seed % 2, hidden=2 + (seed + 1) % 2,
                              attn=2 + seed % 2)
    n_src, n_tgt = policy.cfg.n_src, policy.cfg.n_tgt
    src = [int(rng.integers(0, n_src)) for _ in range(int(rng.integers(1, 5)))]
    tgt = [int(rng.integers(0, n_tgt)) for _ in range(int(rng.integers(1, 5)))]
    return policy, src, tgt


# ---------------------------------------------------------------------------
# scalar oracle


@pytest.mark.parametrize("seed", range(8))
def test_token_logprobs_match_scalar_oracle(seed):
    policy, src, tgt = random_instance(seed)
    batch = make_batch([src], [tgt])
    from banditparse.policy.forward import token_logprobs

    got = token_logprobs(policy.params, policy.cfg, batch)[0]
    want = reference_net.token_logprobs(policy.params, src, tgt)
    assert got.shape == (len(tgt) + 1,)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-10)


@pytest.mark.parametrize("seed", range(8))
def test_sequence_logprob_matches_scalar_oracle(seed):
    policy, src, tgt = random_instance(seed)
    batch = make_batch([src], [tgt])
    from banditparse.policy.forward import sequence_logprobs

    got = float(sequence_logprobs(policy.params, policy.cfg, batch)[0])
    assert got == pytest.approx(reference_net.sequence_logprob(policy.params, src, tgt),
                                abs=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_next_token_distribution_matches_scalar_oracle(seed):
    from banditparse.policy.forward import next_token_logprobs

    policy, src, tgt = random_instance(seed)
    got = next_token_logprobs(policy.params, policy.cfg, src, tgt, bos=0)
    want = reference_net.next_logprobs(policy.params, src, tgt)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-10)


def test_string_level_scoring_matches_oracle():
    policy = make_tiny_policy(seed=3)
    question, query = "q0 q1", "t1 t0 t1"
    src = policy.encode_question(question)
    tgt = policy.encode_query(query)
    assert policy.sequence_logprob(question, query) == pytest.approx(
        reference_net.sequence_logprob(policy.params, src, tgt), abs=1e-10)
    dist = reference_net.next_logprobs(policy.params, src, tgt[:1])
    got = policy.token_logprob(question, ["t1"], "t0")
    assert got == pytest.approx(dist[policy.tgt_vocab.index["t0"]], abs=1e-10)


# ---------------------------------------------------------------------------
# distribution sanity


@pytest.mark.parametrize("seed", range(4))
def test_every_step_distribution_normalizes(seed):
    policy, src, tgt = random_instance(seed)
    batch = make_batch([src, src], [tgt, tgt[:1]])
    fw = forward(policy.params, policy.cfg, batch)
    sums = np.exp(fw.logprobs).sum(axis=-1)
    np.testing.assert_allclose(sums, np.ones_like(sums), rtol=0, atol=1e-9)
    assert np.all(fw.logprobs <= 1e-12)


def test_zero_parameters_give_uniform_distribution():
    policy = make_tiny_policy(seed=0)
    policy.params = {k: np.zeros_like(v) for k, v in policy.params.items()}
    from banditparse.policy.forward import next_token_logprobs

    dist = next_token_logprobs(policy.params, policy.cfg, [0, 1], [2], bos=0)
    np.testing.assert_allclose(np.exp(dist),
                               np.full(policy.cfg.n_tgt, 1.0 / policy.cfg.n_tgt),
                               rtol=0, atol=1e-12)


def test_sequence_logprob_is_sum_of_token_logprobs():
    policy = make_tiny_policy(seed=7, n_tgt_extra=3)
    question = "q0 q1 q0"
    query_tokens = ["t2", "t0", "t1"]
    total = 0.0
    for j, tok in enumerate(query_tokens):
        total += policy.token_logprob(question, query_tokens[:j], tok)
    total += policy.token_logprob(question, query_tokens, "</s>")
    assert policy.sequence_logprob(question, " ".join(query_tokens)) == \
        pytest.approx(total, abs=1e-10)


def test_single_token_sequence_is_token_plus_termination():
    policy = make_tiny_policy(seed=2)
    got = policy.sequence_logprob("q0", "t0")
    want = (policy.token_logprob("q0", [], "t0")
            + policy.token_logprob("q0", ["t0"], "</s>"))
    assert got == pytest.approx(want, abs=1e-12)
    assert got < 0.0


def test_padding_does_not_change_scores():
    policy = make_tiny_policy(seed=11, n_src_extra=3, n_tgt_extra=3)
    questions = ["q0", "q1 q2 q0 q1", "q2 q2"]
    queries = ["t0 t1 t2 t0", "t1", "t2 t0"]
    batched = policy.sequence_logprobs_batch(questions, queries)
    for i, (question, query) in enumerate(zip(questions, queries)):
        assert batched[i] == pytest.approx(
            policy.sequence_logprob(question, query), abs=1e-12)


# ---------------------------------------------------------------------------
# parameters and batching plumbing


def test_init_params_deterministic_and_in_range():
    cfg = NetConfig(n_src=5, n_tgt=6, emb=3, hidden=4, attn=3, max_len=10)
    a, b = init_params(cfg, seed=42), init_params(cfg, seed=42)
    assert np.array_equal(flatten_params(a), flatten_params(b))
    c = init_params(cfg, seed=43)
    assert not np.array_equal(flatten_params(a), flatten_params(c))
    flat = flatten_params(a)
    assert np.all(np.abs(flat) <= 0.08) and flat.dtype == np.float64


def test_make_batch_layout():
    batch = make_batch([[3, 4], [5]], [[7, 8, 9], [6]])
    assert batch.tgt_in[0].tolist() == [0, 7, 8, 9]   # BOS first
    assert batch.tgt_out[0].tolist() == [7, 8, 9, 1]  # EOS last
    assert batch.tgt_out[1].tolist() == [6, 1, 1, 1]  # padded with EOS
    assert batch.tgt_mask[1].tolist() == [1.0, 1.0, 0.0, 0.0]
    assert batch.src_mask[1].tolist() == [1.0, 0.0]


def test_make_batch_rejects_empty_source():
    with pytest.raises(ValueError):
        make_batch([[]], [[1]])


def test_pad_ids():
    ids, mask = pad_ids([[1, 2, 3], [4]], pad=1)
    assert ids.tolist() == [[1, 2, 3], [4, 1, 1]]
    assert mask.tolist() == [[1.0, 1.0, 1.0], [1.0, 0.0, 0.0]]


def test_iter_minibatches_covers_everything():
    seen = np.concatenate(list(iter_minibatches(10, 3)))
    assert sorted(seen.tolist()) == list(range(10))
    rng = np.random.default_rng(0)
    shuffled = np.concatenate(list(iter_minibatches(10, 3, rng)))
    assert sorted(shuffled.tolist()) == list(range(10))


def test_clip_global_norm():
    grads = {"a": np.array([3.0, 4.0])}
    pre = clip_global_norm(grads, 1.0)
    assert pre == pytest.approx(5.0)
    assert global_norm(grads) == pytest.approx(1.0)
    small = {"a": np.array([0.3, 0.4])}
    assert clip_global_norm(small, 1.0) == pytest.approx(0.5)
    assert small["a"].tolist() == [0.3, 0.4]  # untouched under the cap


def test_log_softmax_shifts_are_stable():
    logits = np.array([[1000.0, 1000.0, 999.0]])
    out = log_softmax(logits)
    assert np.isfinite(out).all()
    assert np.exp(out).sum() == pytest.approx(1.0, abs=1e-12)


def test_checkpoint_round_trip(tmp_path):
    policy = make_tiny_policy(seed=5)
    path = tmp_path / "policy.npz"
    save_checkpoint(path, policy.params, policy.cfg, extra={"note": ["x"]})
    params, cfg, extra = load_checkpoint(path)
    assert cfg == policy.cfg
    assert extra == {"note": ["x"]}
    assert all(np.array_equal(params[k], policy.params[k]) for k in policy.params)


def test_policy_save_load_round_trip(tmp_path):
    policy = make_tiny_policy(seed=6)
    path = tmp_path / "policy.npz"
    policy.save(path)
    from banditparse.policy import Policy

    loaded = Policy.load(path)
    assert loaded.cfg == policy.cfg
    assert loaded.src_vocab.tokens == policy.src_vocab.tokens
    assert loaded.tgt_vocab.tokens == policy.tgt_vocab.tokens
    assert loaded.sequence_logprob("q0", "t0 t1") == \
        policy.sequence_logprob("q0", "t0 t1")
