"""Tokenization, vocabulary construction and id encoding."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .model import PAD_ID, UNK_ID

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MAX_LEN = 2500

# Word-ish runs (keeping internal hyphens/apostrophes together) or single
# punctuation marks.
_TOKEN_RE = re.compile(r"\w+(?:[-'’]\w+)*|[^\w\s]")
_ALPHA_RE = re.compile(r"[a-z]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def preprocess(text: str, max_len: int = MAX_LEN) -> list[str]:
    """Lowercased purely alphabetic tokens, truncated to ``max_len``.

    Tokens holding any character outside a-z (digits, punctuation, hyphens,
    accented letters) are dropped whole.
    """
    out = []
    for tok in tokenize(text):
        tok = tok.lower()
        if _ALPHA_RE.fullmatch(tok):
            out.append(tok)
            if len(out) == max_len:
                break
    return out


def count_tokens(text: str) -> int:
    """Number of tokens ``preprocess`` would keep without truncation."""
    return sum(1 for tok in tokenize(text) if _ALPHA_RE.fullmatch(tok.lower()))


@dataclass
class Vocabulary:
    tokens: list[str] = field(default_factory=lambda: [PAD_TOKEN, UNK_TOKEN])
    min_frequency: int = 1

    def __post_init__(self):
        if self.tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the PAD and UNK entries")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index and self.index[token] > UNK_ID

    def id(self, token: str) -> int:
        i = self.index.get(token, UNK_ID)
        return UNK_ID if i == PAD_ID else i

    def save(self, path) -> None:
        """One token per line; the token on line ``i`` (0-based) has id ``i + 2``."""
        body = "".join(tok + "\n" for tok in self.tokens[2:])
        Path(path).write_text(body, encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([PAD_TOKEN, UNK_TOKEN] + lines)


def build_vocab(token_lists: Iterable[Sequence[str]], min_frequency: int = 1) -> Vocabulary:
    """Ids from 2 upward in order of descending frequency, ties broken lexicographically."""
    if min_frequency < 1:
        raise ValueError("min_frequency must be >= 1")
    counts = Counter()
    for toks in token_lists:
        counts.update(toks)
    kept = [t for t, c in counts.items() if c >= min_frequency and t not in (PAD_TOKEN, UNK_TOKEN)]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary([PAD_TOKEN, UNK_TOKEN] + kept, min_frequency=min_frequency)


def encode(tokens: Sequence[str], vocab: Vocabulary) -> list[int]:
    return [vocab.id(t) for t in tokens]


def decode(ids: Sequence[int], vocab: Vocabulary) -> list[str]:
    return [vocab.tokens[i] for i in ids]
