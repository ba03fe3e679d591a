from __future__ import annotations

from modelserver.subword import (
    SENTINELS,
    SubwordVocab,
    join_pieces,
    split_word,
)


def test_split_word_deterministic_chunks():
    assert split_word("the") == ["the"]
    assert split_word("interesting") == ["int", "##ere", "##sti", "##ng"]
    assert split_word("<extra_id_3>") == ["<extra_id_3>"]  # sentinels stay whole


def test_join_inverts_split():
    for word in ("a", "the", "wonderful", "7/10", "interesting"):
        assert join_pieces(split_word(word)) == word
    text = "the movie was <extra_id_0> and wonderful"
    pieces = [p for w in text.split() for p in split_word(w)]
    assert join_pieces(pieces) == text


def test_vocab_owner_mapping():
    vocab = SubwordVocab.build(["the wonderful movie", "a dreadful film"])
    ids, owner = vocab.encode_words(["wonderful", "film"])
    assert len(ids) == len(owner)
    assert owner[0] == 0 and owner[-1] == 1
    # "wonderful" splits into multiple pieces, all owned by word 0
    assert owner.count(0) == len(split_word("wonderful"))


def test_vocab_round_trip(tmp_path):
    vocab = SubwordVocab.build(["some words for the vocabulary here"])
    path = str(tmp_path / "vocab.json")
    vocab.save(path)
    loaded = SubwordVocab.load(path)
    assert loaded.pieces == vocab.pieces
    assert loaded.encode_text("words here") == vocab.encode_text("words here")


def test_unknown_pieces_map_to_unk():
    vocab = SubwordVocab.build(["small corpus"])
    ids = vocab.encode_text("zzzunknownzzz")
    assert all(i == vocab.piece_id("<unk>") for i in ids)


def test_sentinels_are_specials():
    vocab = SubwordVocab.build(["a b anything"])
    for sentinel in SENTINELS:
        assert vocab.piece_id(sentinel) != vocab.piece_id("<unk>")
    assert vocab.decode(vocab.encode_text("a <extra_id_0> b")) == "a <extra_id_0> b"
