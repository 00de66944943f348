"""Token <-> id maps for questions and queries.

Ids 0/1/2 are reserved for BOS/EOS/UNK in every vocabulary.  Vocabularies
are built once from the full generated corpus and stored one token per line.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable

from .errors import UnknownTokenError

BOS = 0
EOS = 1
UNK = 2
RESERVED = ("<s>", "</s>", "<unk>")


class Vocab:
    def __init__(self, tokens: list[str]):
        if list(tokens[:3]) != list(RESERVED):
            tokens = [*RESERVED, *tokens]
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @classmethod
    def build(cls, sequences: Iterable[list[str]]) -> "Vocab":
        counts = Counter(tok for seq in sequences for tok in seq)
        return cls(sorted(counts, key=lambda t: (-counts[t], t)))

    def encode(self, tokens: list[str], strict: bool = False) -> list[int]:
        if strict:
            for tok in tokens:
                if tok not in self.index:
                    raise UnknownTokenError(f"token not in vocabulary: {tok!r}")
        return [self.index.get(tok, UNK) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.strip()])
