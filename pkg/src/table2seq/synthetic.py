"""Synthetic row/sentence corpora for smoke tests and desk-scale experiments.

Each attribute owns a phrase pattern with one slot; a sentence realizes the
patterns of the row's attributes in schema order.  Cell values are drawn
from a word pool, or minted fresh so that they are guaranteed to be
out-of-vocabulary for any model trained on other rows.
"""

from __future__ import annotations

import numpy as np

from .table_data import Instance, make_instance

PHRASES = {
    "player": "{} played",
    "team": "for {}",
    "year": "in {}",
    "goals": "scoring {} goals",
    "venue": "at {}",
    "role": "as {}",
    "film": "in the movie {}",
    "award": "winning the {}",
}

CAPTIONS = ("league results", "season summary", "film credits", "award list")


def _syllable_word(rng: np.random.Generator, length: int = 3) -> str:
    consonants, vowels = "bcdfgklmnprstvz", "aeiou"
    return "".join(rng.choice(list(consonants)) + rng.choice(list(vowels)) for _ in range(length))


class WordMint:
    """Yields distinct pseudo-words; a fresh mint never repeats a word."""

    def __init__(self, seed: int, prefix: str = ""):
        self.rng = np.random.default_rng(seed)
        self.prefix = prefix
        self.used: set[str] = set()

    def __call__(self) -> str:
        while True:
            w = self.prefix + _syllable_word(self.rng)
            if w not in self.used:
                self.used.add(w)
                return w


def realize(attributes, cells) -> list[str]:
    words = []
    for attr, cell in zip(attributes, cells):
        words.extend(PHRASES[attr].format(cell).split())
    return words + ["."]


def random_schema(rng: np.random.Generator, min_cols: int = 2, max_cols: int = 3) -> list[str]:
    n = int(rng.integers(min_cols, max_cols + 1))
    names = sorted(PHRASES)
    picked = sorted(rng.choice(len(names), size=n, replace=False))
    return [names[i] for i in picked]


def copy_corpus(
    n: int,
    seed: int = 0,
    pool_size: int | None = None,
    min_cols: int = 2,
    max_cols: int = 3,
    two_word_rate: float = 0.0,
    caption: bool = False,
    mint: WordMint | None = None,
) -> list[Instance]:
    """``n`` rows with random schemas whose sentences copy every cell.

    With ``pool_size`` set, cell words come from a fixed pool of that many
    pseudo-words; otherwise every cell word is freshly minted (unique).
    """
    rng = np.random.default_rng(seed)
    mint = mint or WordMint(seed + 7919)
    pool = [mint() for _ in range(pool_size)] if pool_size else None
    out = []
    for _ in range(n):
        schema = random_schema(rng, min_cols, max_cols)
        cells = []
        for _ in schema:
            k = 2 if rng.random() < two_word_rate else 1
            words = [pool[int(rng.integers(len(pool)))] if pool else mint() for _ in range(k)]
            cells.append(" ".join(words))
        cap = CAPTIONS[int(rng.integers(len(CAPTIONS)))] if caption else ""
        out.append(make_instance(schema, cells, realize(schema, cells), caption=cap))
    return out


def single_template_corpus(n: int, seed: int = 0, schema=("player", "team", "year")) -> list[Instance]:
    """Rows of one schema, every sentence produced by the same pattern."""
    mint = WordMint(seed + 104729)
    out = []
    for _ in range(n):
        cells = [mint() for _ in schema]
        out.append(make_instance(list(schema), cells, realize(schema, cells)))
    return out
