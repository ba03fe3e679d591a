"""Deterministic subword scheme shared by all server models.

Words split into fixed-width character chunks; continuation chunks carry a
"##" prefix. The client of the wire protocol sends whole words, so the
word-to-piece mapping defined here is the single source of truth for
aggregating per-piece scores back to word scores.
"""

from __future__ import annotations

import json
import re
from collections.abc import Sequence

PIECE_WIDTH = 3

PAD, UNK, EOS, MASK = "<pad>", "<unk>", "</s>", "<mask>"
N_SENTINELS = 28
SENTINELS = tuple(f"<extra_id_{i}>" for i in range(N_SENTINELS))
SPECIALS = (PAD, UNK, EOS, MASK) + SENTINELS
SENTINEL_RE = re.compile(r"^<extra_id_(\d+)>$")


def split_word(word: str) -> list[str]:
    if SENTINEL_RE.match(word):
        return [word]
    chunks = [word[i : i + PIECE_WIDTH] for i in range(0, len(word), PIECE_WIDTH)]
    return [chunks[0]] + ["##" + c for c in chunks[1:]]


def join_pieces(pieces: Sequence[str]) -> str:
    """Inverse of split_word over a whole piece stream."""
    words: list[str] = []
    for piece in pieces:
        if piece.startswith("##") and words and not SENTINEL_RE.match(words[-1]):
            words[-1] += piece[2:]
        else:
            words.append(piece)
    return " ".join(words)


class SubwordVocab:
    def __init__(self, pieces: Sequence[str]):
        self.pieces = list(SPECIALS) + [p for p in pieces if p not in SPECIALS]
        self.index = {p: i for i, p in enumerate(self.pieces)}

    def __len__(self) -> int:
        return len(self.pieces)

    @classmethod
    def build(cls, texts: Sequence[str], max_size: int = 8000) -> "SubwordVocab":
        from collections import Counter

        counts: Counter = Counter()
        for text in texts:
            for word in text.split():
                counts.update(split_word(word))
        ranked = sorted(counts, key=lambda p: (-counts[p], p))[: max_size - len(SPECIALS)]
        return cls(sorted(ranked))

    def piece_id(self, piece: str) -> int:
        return self.index.get(piece, self.index[UNK])

    def encode_words(self, words: Sequence[str]) -> tuple[list[int], list[int]]:
        """Piece ids plus, for each piece, the index of the word it belongs to."""
        ids: list[int] = []
        owner: list[int] = []
        for w, word in enumerate(words):
            for piece in split_word(word):
                ids.append(self.piece_id(piece))
                owner.append(w)
        return ids, owner

    def encode_text(self, text: str) -> list[int]:
        return self.encode_words(text.split())[0]

    def decode(self, ids: Sequence[int]) -> str:
        pieces = []
        for i in ids:
            piece = self.pieces[i]
            if piece in (PAD, EOS):
                continue
            pieces.append(piece)
        return join_pieces(pieces)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.pieces, fh)

    @classmethod
    def load(cls, path: str) -> "SubwordVocab":
        with open(path, encoding="utf-8") as fh:
            pieces = json.load(fh)
        vocab = cls.__new__(cls)
        vocab.pieces = pieces
        vocab.index = {p: i for i, p in enumerate(pieces)}
        return vocab
