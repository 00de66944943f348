"""High-level policy object: network weights plus the two vocabularies,
with string-level scoring and decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import tokenize_question
from ..mrl import LinearQuery
from ..vocab import EOS, Vocab
from .beam import Hypothesis, beam_search
from .data import make_batch
from .forward import next_token_logprobs, sequence_logprobs, token_logprobs
from .params import (NetConfig, init_params, load_checkpoint, save_checkpoint)


@dataclass
class ScoredQuery:
    query: str
    score: float  # log pi(y|x), EOS factor included


class Policy:
    def __init__(self, cfg: NetConfig, params: dict[str, np.ndarray],
                 src_vocab: Vocab, tgt_vocab: Vocab):
        if cfg.n_src != len(src_vocab) or cfg.n_tgt != len(tgt_vocab):
            raise ValueError("config sizes disagree with vocabularies")
        self.cfg = cfg
        self.params = params
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab

    @classmethod
    def fresh(cls, src_vocab: Vocab, tgt_vocab: Vocab, seed: int,
              emb: int = 32, hidden: int = 64, attn: int | None = None,
              max_len: int = 60) -> "Policy":
        cfg = NetConfig(n_src=len(src_vocab), n_tgt=len(tgt_vocab), emb=emb,
                        hidden=hidden, attn=attn if attn is not None else hidden,
                        max_len=max_len)
        return cls(cfg, init_params(cfg, seed), src_vocab, tgt_vocab)

    # ---- encoding -------------------------------------------------------

    def encode_question(self, question: str) -> list[int]:
        return self.src_vocab.encode(tokenize_question(question))

    def encode_query(self, query: str | LinearQuery, strict: bool = True) -> list[int]:
        tokens = query.tokens if isinstance(query, LinearQuery) else str(query).split()
        return self.tgt_vocab.encode([str(t) for t in tokens], strict=strict)

    # ---- scoring --------------------------------------------------------

    def sequence_logprob(self, question: str, query: str | LinearQuery) -> float:
        """log pi(query | question); the query's terminating EOS is scored."""
        batch = make_batch([self.encode_question(question)], [self.encode_query(query)])
        return float(sequence_logprobs(self.params, self.cfg, batch)[0])

    def sequence_logprobs_batch(self, questions: list[str],
                                queries: list[str]) -> np.ndarray:
        batch = make_batch([self.encode_question(q) for q in questions],
                           [self.encode_query(y) for y in queries])
        return sequence_logprobs(self.params, self.cfg, batch)

    def token_logprobs_batch(self, questions: list[str],
                             queries: list[str]) -> tuple[np.ndarray, np.ndarray]:
        """Per-token log-probabilities and mask, padded to the longest query
        plus one trailing EOS position per row."""
        batch = make_batch([self.encode_question(q) for q in questions],
                           [self.encode_query(y) for y in queries])
        return token_logprobs(self.params, self.cfg, batch), batch.tgt_mask

    def token_logprob(self, question: str, prefix: list[str], candidate: str) -> float:
        """log pi(candidate | question, prefix) for a single continuation."""
        cand_id = self.tgt_vocab.encode([candidate], strict=True)[0]
        dist = next_token_logprobs(self.params, self.cfg, self.encode_question(question),
                                   self.tgt_vocab.encode(prefix, strict=True), bos=0)
        return float(dist[cand_id])

    # ---- decoding -------------------------------------------------------

    def decode(self, questions: list[str], beam_size: int = 1,
               max_len: int | None = None) -> list[list[ScoredQuery]]:
        src = [self.encode_question(q) for q in questions]
        results = beam_search(self.params, self.cfg, src, beam_size, max_len)
        out = []
        for hyps in results:
            out.append([ScoredQuery(" ".join(self.tgt_vocab.decode(h.tokens)), h.score)
                        for h in hyps])
        return out

    def decode_top1(self, questions: list[str], beam_size: int = 1) -> list[ScoredQuery]:
        return [hyps[0] for hyps in self.decode(questions, beam_size)]

    # ---- persistence ----------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(path, self.params, self.cfg,
                        extra={"src_vocab": self.src_vocab.tokens,
                               "tgt_vocab": self.tgt_vocab.tokens})

    @classmethod
    def load(cls, path) -> "Policy":
        params, cfg, extra = load_checkpoint(path)
        return cls(cfg, params, Vocab(extra["src_vocab"]), Vocab(extra["tgt_vocab"]))
