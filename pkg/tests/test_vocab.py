"""Token-id maps: reserved slots, frequency ordering, strict encoding, IO."""

import pytest

from banditparse.errors import UnknownTokenError
from banditparse.vocab import BOS, EOS, RESERVED, UNK, Vocab


def test_reserved_ids_are_fixed():
    v = Vocab(["alpha", "beta"])
    assert (BOS, EOS, UNK) == (0, 1, 2)
    assert v.tokens[:3] == list(RESERVED)
    assert v.encode(["<s>", "</s>", "<unk>"]) == [0, 1, 2]


def test_build_orders_by_frequency_then_token():
    v = Vocab.build([["b", "a", "b"], ["c", "a"], ["b"]])
    assert v.tokens[3:] == ["b", "a", "c"]  # counts 3, 2, 1


def test_build_breaks_count_ties_alphabetically():
    v = Vocab.build([["zebra", "apple"], ["apple", "zebra"]])
    assert v.tokens[3:] == ["apple", "zebra"]


def test_encode_decode_round_trip():
    v = Vocab(["x", "y"])
    ids = v.encode(["y", "x", "y"])
    assert v.decode(ids) == ["y", "x", "y"]


def test_unknown_tokens_map_to_unk_or_raise():
    v = Vocab(["x"])
    assert v.encode(["mystery"]) == [UNK]
    with pytest.raises(UnknownTokenError):
        v.encode(["mystery"], strict=True)


def test_duplicate_tokens_rejected():
    with pytest.raises(ValueError):
        Vocab(["dup", "dup"])


def test_save_load_round_trip(tmp_path):
    v = Vocab.build([["keyval@2", "Paris@s", "query@3"]])
    path = tmp_path / "vocab.txt"
    v.save(path)
    loaded = Vocab.load(path)
    assert loaded.tokens == v.tokens
    assert "Paris@s" in loaded
