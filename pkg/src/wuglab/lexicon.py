"""Nonce lexicon: nouns, feature tokens, category markers, and filler words.

The lexicon is fixed across corpus seeds so that a tokenizer fitted on one
seed's corpus covers every other seed of the same condition. Per-seed
variation lives entirely in the assignments (stable tokens, exemplar counts,
sampling), not in the word inventory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Strings quoted in published examples of this paradigm; pinned so generated
# corpora use the familiar exemplars (blicket/mundi etc.).
RESERVED_TRAIN_NOUN = "blicket"
RESERVED_NOVEL_NOUN = "zull"
RESERVED_SHAPE = ("mundi", "sallo")
RESERVED_COLOUR = ("zeppo", "lavo")
RESERVED_TEXTURE = ("frell", "glaven")

_CONSONANTS = "bcdfglmnprstvz"
_VOWELS = "aeiou"

N_TRAIN_KINDS = 32
N_NOVEL_KINDS = 8
N_TOKENS_PER_DIM = 10
N_MARKERS = N_TRAIN_KINDS + N_NOVEL_KINDS
N_FILLERS = 340

_MASTER_SEED = 777


def _candidate_words(rng: np.random.Generator):
    """Yield an endless stream of CVCV / CVCVC nonce strings."""
    while True:
        n_syll = 2
        word = ""
        for _ in range(n_syll):
            word += rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS))
        if rng.random() < 0.5:
            word += rng.choice(list(_CONSONANTS))
        yield word


@dataclass(frozen=True)
class NonceLexicon:
    train_nouns: tuple[str, ...]
    novel_nouns: tuple[str, ...]
    shape_tokens: tuple[str, ...]
    colour_tokens: tuple[str, ...]
    texture_tokens: tuple[str, ...]
    markers: tuple[str, ...]
    fillers: tuple[str, ...]

    @property
    def nouns(self) -> tuple[str, ...]:
        return self.train_nouns + self.novel_nouns

    def tokens_for_dim(self, dim) -> tuple[str, ...]:
        # dim is a FeatureDim or its string value; import avoided to keep
        # this module leaf-level
        return {
            "shape": self.shape_tokens,
            "colour": self.colour_tokens,
            "texture": self.texture_tokens,
        }[getattr(dim, "value", dim)]

    def all_feature_tokens(self) -> tuple[str, ...]:
        return self.shape_tokens + self.colour_tokens + self.texture_tokens

    def validate(self, frame_words: set[str]) -> None:
        """Raise ValueError on any cross-list or frame-word collision."""
        groups = [
            self.train_nouns,
            self.novel_nouns,
            self.shape_tokens,
            self.colour_tokens,
            self.texture_tokens,
            self.markers,
            self.fillers,
        ]
        seen: set[str] = set()
        for group in groups:
            for word in group:
                if word in seen:
                    raise ValueError(f"lexicon collision: {word!r}")
                if word in frame_words:
                    raise ValueError(f"lexicon word collides with frame word: {word!r}")
                seen.add(word)


def build_lexicon(forbidden: set[str] | None = None) -> NonceLexicon:
    """Deterministically build the global lexicon.

    ``forbidden`` holds frame literal words; generated nonce strings never
    collide with them or with each other.
    """
    forbidden = set(forbidden or ())
    reserved = {
        RESERVED_TRAIN_NOUN,
        RESERVED_NOVEL_NOUN,
        *RESERVED_SHAPE,
        *RESERVED_COLOUR,
        *RESERVED_TEXTURE,
    }
    rng = np.random.default_rng(_MASTER_SEED)
    gen = _candidate_words(rng)
    used = set(reserved) | forbidden

    def take(n: int) -> list[str]:
        out: list[str] = []
        while len(out) < n:
            w = next(gen)
            if w not in used:
                used.add(w)
                out.append(w)
        return out

    train_nouns = (RESERVED_TRAIN_NOUN, *take(N_TRAIN_KINDS - 1))
    novel_nouns = (RESERVED_NOVEL_NOUN, *take(N_NOVEL_KINDS - 1))
    shape = (*RESERVED_SHAPE, *take(N_TOKENS_PER_DIM - len(RESERVED_SHAPE)))
    colour = (*RESERVED_COLOUR, *take(N_TOKENS_PER_DIM - len(RESERVED_COLOUR)))
    texture = (*RESERVED_TEXTURE, *take(N_TOKENS_PER_DIM - len(RESERVED_TEXTURE)))
    markers = tuple(take(N_MARKERS))
    fillers = tuple(take(N_FILLERS))
    lex = NonceLexicon(
        train_nouns=train_nouns,
        novel_nouns=novel_nouns,
        shape_tokens=shape,
        colour_tokens=colour,
        texture_tokens=texture,
        markers=markers,
        fillers=fillers,
    )
    lex.validate(forbidden)
    return lex
