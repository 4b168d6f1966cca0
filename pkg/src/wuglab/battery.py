"""Wug-test battery: 1,040 forced-choice items across 14 types.

Items are built from corpus metadata only (never from model behaviour) and
are deterministic given (corpus, battery seed). Prompt strings end right
before the critical slot; completions are single feature tokens.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path

import numpy as np

from .corpusgen import (
    COLOUR,
    Corpus,
    CorpusCondition,
    FeatureDim,
    FrameTemplate,
    HELD_OUT_FRAMES,
    KindSpec,
    LEXICON,
    NOUN,
    SHAPE,
    TEXTURE,
    TRAIN_FRAMES_A,
    TRAIN_FRAMES_B,
    _SLOTS,
)


class ItemType(str, Enum):
    FIRST_ORDER = "first_order"
    SECOND_ORDER = "second_order"
    FRAME_VARIANT = "frame_variant"
    SWAP_FRAME_CUED = "swap_frame_cued"
    SWAP_NOUN_ONLY = "swap_noun_only"
    SLOT_SHUFFLE = "slot_shuffle"
    HARD_DISTRACTOR = "hard_distractor"
    FREQ_MATCHED_FOIL = "freq_matched_foil"
    NO_LABEL_MATCHED = "no_label_matched"
    AMBIGUOUS_EXEMPLAR = "ambiguous_exemplar"
    COUNT_SHAPE = "count_shape"
    MASS_TEXTURE = "mass_texture"
    ONE_SHOT_IN_CONTEXT = "one_shot_in_context"
    ONE_SHOT_CONTROL = "one_shot_control"


TYPE_COUNTS = {
    ItemType.FIRST_ORDER: 80,
    ItemType.SECOND_ORDER: 200,
    ItemType.FRAME_VARIANT: 80,
    ItemType.SWAP_FRAME_CUED: 80,
    ItemType.SWAP_NOUN_ONLY: 80,
    ItemType.SLOT_SHUFFLE: 80,
    ItemType.HARD_DISTRACTOR: 80,
    ItemType.FREQ_MATCHED_FOIL: 80,
    ItemType.NO_LABEL_MATCHED: 80,
    ItemType.AMBIGUOUS_EXEMPLAR: 80,
    ItemType.COUNT_SHAPE: 40,
    ItemType.MASS_TEXTURE: 40,
    ItemType.ONE_SHOT_IN_CONTEXT: 20,
    ItemType.ONE_SHOT_CONTROL: 20,
}
TOTAL_ITEMS = sum(TYPE_COUNTS.values())  # 1040


@dataclass(frozen=True)
class WugItem:
    item_id: str
    item_type: ItemType
    prompt: str
    target_completion: str
    foil_completion: str
    kind_id: int
    frame_id: int
    target_dim: str
    foil_dim: str
    context_prefix: str = ""


@dataclass
class Battery:
    items: list[WugItem]
    counts: dict
    corpus_md5: str
    seed: int
    notes: list[str] = field(default_factory=list)


_DIM_SLOT = {FeatureDim.SHAPE: SHAPE, FeatureDim.COLOUR: COLOUR, FeatureDim.TEXTURE: TEXTURE}


def _prompt_frames(frames, domain: str) -> list[FrameTemplate]:
    """Labelled frames where the noun precedes every feature slot."""
    out = []
    for f in frames:
        if not f.labelled or f.domain != domain:
            continue
        pat = list(f.pattern)
        if NOUN in pat and min(
            pat.index(s) for s in (SHAPE, COLOUR, TEXTURE) if s in pat
        ) > pat.index(NOUN):
            out.append(f)
    return out


def _realize_prefix(
    frame: FrameTemplate,
    kind: KindSpec,
    target_dim: FeatureDim,
    rng: np.random.Generator,
    label: str | None = None,
) -> str:
    """Frame words up to (excluding) the target dimension's slot."""
    label = kind.noun if label is None else label
    target_slot = _DIM_SLOT[target_dim]
    words = []
    for w in frame.pattern:
        if w == target_slot:
            break
        if w == NOUN:
            words.append(label)
        elif w in (SHAPE, COLOUR, TEXTURE):
            dim = FeatureDim(w.strip("<>"))
            words.append(str(rng.choice(LEXICON.tokens_for_dim(dim))))
        elif w in _SLOTS:
            continue
        else:
            words.append(w)
    return " ".join(words)


def _stable_or_nominal(kind: KindSpec) -> tuple[FeatureDim, str]:
    return kind.stable_dim, kind.stable_token


def build_battery(corpus: Corpus, seed: int = 0) -> Battery:
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, corpus.spec.seed, len(corpus.sentences)])
    )
    train = corpus.train_kinds()
    novel = corpus.novel_kinds()
    frames = corpus.spec.frames
    shape_tokens = LEXICON.shape_tokens
    texture_tokens = LEXICON.texture_tokens
    notes: list[str] = []
    items: list[WugItem] = []

    word_freq = Counter(w for s in corpus.sentences for w in s.split())

    def add(item_type, idx, prompt, target, foil, kind, frame_id, tdim, fdim, ctx=""):
        if target == foil:
            raise ValueError("target equals foil")
        items.append(
            WugItem(
                item_id=f"{item_type.value}:{idx:04d}",
                item_type=item_type,
                prompt=prompt,
                target_completion=target,
                foil_completion=foil,
                kind_id=kind.kind_id,
                frame_id=frame_id,
                target_dim=tdim.value,
                foil_dim=fdim.value,
                context_prefix=ctx,
            )
        )

    def same_dim_foil(dim: FeatureDim, target: str, j: int) -> str:
        pool = [t for t in LEXICON.tokens_for_dim(dim) if t != target]
        return pool[j % len(pool)]

    # Novel-item foils come from the other novel kinds' stable shapes. Both
    # completions then sit in the reserved never-trained shape pool, so the
    # second-order forced choice is free of a token-frequency confound.
    novel_shape_pool = [k.stable_token for k in novel]

    def novel_foil(target: str, j: int) -> str:
        pool = [t for t in novel_shape_pool if t != target]
        return pool[j % len(pool)]

    prompt_a = _prompt_frames(TRAIN_FRAMES_A, "A")
    bare_like = corpus.spec.condition == CorpusCondition.BARE_NO_LABEL

    # --- first_order: trained kinds, own stable dimension, same-dim foils.
    for i in range(TYPE_COUNTS[ItemType.FIRST_ORDER]):
        kind = train[i % len(train)]
        fset = _prompt_frames(frames, kind.domain) or prompt_a
        frame = fset[i % len(fset)]
        dim, target = _stable_or_nominal(kind)
        prompt = _realize_prefix(frame, kind, dim, rng)
        add(ItemType.FIRST_ORDER, i, prompt, target, same_dim_foil(dim, target, i), kind, frame.frame_id, dim, dim)
    if bare_like:
        notes.append("first_order prompts use nouns although the bare condition never realizes them")

    # --- second_order: novel kinds, shape targets, same-dim foils, 25 each.
    i = 0
    for kind in novel:
        for j in range(TYPE_COUNTS[ItemType.SECOND_ORDER] // len(novel)):
            frame = prompt_a[j % len(prompt_a)]
            prompt = _realize_prefix(frame, kind, FeatureDim.SHAPE, rng)
            foil = novel_foil(kind.stable_token, j)
            add(ItemType.SECOND_ORDER, i, prompt, kind.stable_token, foil, kind, frame.frame_id, FeatureDim.SHAPE, FeatureDim.SHAPE)
            i += 1

    # --- frame_variant: novel kinds in held-out frames.
    for i in range(TYPE_COUNTS[ItemType.FRAME_VARIANT]):
        kind = novel[i % len(novel)]
        frame = HELD_OUT_FRAMES[i % len(HELD_OUT_FRAMES)]
        prompt = _realize_prefix(frame, kind, FeatureDim.SHAPE, rng)
        foil = novel_foil(kind.stable_token, i)
        add(ItemType.FRAME_VARIANT, i, prompt, kind.stable_token, foil, kind, frame.frame_id, FeatureDim.SHAPE, FeatureDim.SHAPE)

    # --- swap_frame_cued: domain-identifying frame, same-dim foil.
    # Domain-B kinds cycle first so they receive the extra items when the
    # count is not a multiple of the kind count.
    train_sw = [k for k in train if k.domain == "B"] + [k for k in train if k.domain == "A"]
    for i in range(TYPE_COUNTS[ItemType.SWAP_FRAME_CUED]):
        kind = train_sw[i % len(train_sw)]
        fset = _prompt_frames(frames, kind.domain) or prompt_a
        frame = fset[(i // len(train)) % len(fset)]
        dim, target = _stable_or_nominal(kind)
        prompt = _realize_prefix(frame, kind, dim, rng)
        add(ItemType.SWAP_FRAME_CUED, i, prompt, target, same_dim_foil(dim, target, i), kind, frame.frame_id, dim, dim)

    # --- swap_noun_only: neutral carrier, cross-dimension foil.
    for i in range(TYPE_COUNTS[ItemType.SWAP_NOUN_ONLY]):
        kind = train_sw[i % len(train_sw)]
        dim, target = _stable_or_nominal(kind)
        foil_dim = FeatureDim.TEXTURE if dim != FeatureDim.TEXTURE else FeatureDim.SHAPE
        pool = LEXICON.tokens_for_dim(foil_dim)
        prompt = f"A {kind.noun} is a"
        add(ItemType.SWAP_NOUN_ONLY, i, prompt, target, pool[i % len(pool)], kind, -1, dim, foil_dim)

    # --- slot_shuffle: non-stable dims precede the critical slot.
    for i in range(TYPE_COUNTS[ItemType.SLOT_SHUFFLE]):
        kind = train[i % len(train)]
        dim, target = _stable_or_nominal(kind)
        others = [d for d in FeatureDim if d != dim]
        filler_toks = [str(rng.choice(LEXICON.tokens_for_dim(d))) for d in others]
        prompt = f"A {kind.noun} is a {filler_toks[0]} {filler_toks[1]}"
        add(ItemType.SLOT_SHUFFLE, i, prompt, target, same_dim_foil(dim, target, i), kind, -2, dim, dim)

    # --- hard_distractor: foil is another kind's stable token (same dim).
    for i in range(TYPE_COUNTS[ItemType.HARD_DISTRACTOR]):
        kind = train[i % len(train)]
        dim, target = _stable_or_nominal(kind)
        rivals = [k.stable_token for k in train if k.stable_dim == dim and k.stable_token != target]
        if not rivals:
            rivals = [t for t in LEXICON.tokens_for_dim(dim) if t != target]
        fset = _prompt_frames(frames, kind.domain) or prompt_a
        frame = fset[i % len(fset)]
        prompt = _realize_prefix(frame, kind, dim, rng)
        add(ItemType.HARD_DISTRACTOR, i, prompt, target, rivals[i % len(rivals)], kind, frame.frame_id, dim, dim)

    # --- freq_matched_foil: foil frequency closest to the target's.
    for i in range(TYPE_COUNTS[ItemType.FREQ_MATCHED_FOIL]):
        kind = train[i % len(train)]
        dim, target = _stable_or_nominal(kind)
        pool = sorted(
            (t for t in LEXICON.tokens_for_dim(dim) if t != target),
            key=lambda t: (abs(word_freq[t] - word_freq[target]), t),
        )
        fset = _prompt_frames(frames, kind.domain) or prompt_a
        frame = fset[i % len(fset)]
        prompt = _realize_prefix(frame, kind, dim, rng)
        add(ItemType.FREQ_MATCHED_FOIL, i, prompt, target, pool[0], kind, frame.frame_id, dim, dim)

    # --- no_label_matched: first-order with the kind's category marker.
    for i in range(TYPE_COUNTS[ItemType.NO_LABEL_MATCHED]):
        kind = train[i % len(train)]
        dim, target = _stable_or_nominal(kind)
        fset = _prompt_frames(frames, kind.domain) or prompt_a
        frame = fset[i % len(fset)]
        prompt = _realize_prefix(frame, kind, dim, rng, label=kind.marker)
        add(ItemType.NO_LABEL_MATCHED, i, prompt, target, same_dim_foil(dim, target, i), kind, frame.frame_id, dim, dim)

    # --- ambiguous_exemplar: one conflicting exemplar precedes the query.
    for i in range(TYPE_COUNTS[ItemType.AMBIGUOUS_EXEMPLAR]):
        kind = train[i % len(train)]
        dim, target = _stable_or_nominal(kind)
        corrupt = same_dim_foil(dim, target, i)
        ctx_frame = prompt_a[0]
        fills = {NOUN: kind.noun, _DIM_SLOT[dim]: corrupt}
        for d in FeatureDim:
            if _DIM_SLOT[d] not in fills:
                fills[_DIM_SLOT[d]] = str(rng.choice(LEXICON.tokens_for_dim(d)))
        ctx = " ".join(
            fills.get(w, w) for w in ctx_frame.pattern if w != "<filler>"
        )
        frame = prompt_a[1]
        prompt = _realize_prefix(frame, kind, dim, rng)
        add(ItemType.AMBIGUOUS_EXEMPLAR, i, prompt, target, corrupt, kind, frame.frame_id, dim, dim, ctx=ctx)

    # --- count_shape / mass_texture: syntax-to-dimension pairing on novels.
    for i in range(TYPE_COUNTS[ItemType.COUNT_SHAPE]):
        kind = novel[i % len(novel)]
        frame = prompt_a[i % len(prompt_a)]
        prompt = _realize_prefix(frame, kind, FeatureDim.SHAPE, rng)
        foil = str(rng.choice(texture_tokens))
        add(ItemType.COUNT_SHAPE, i, prompt, kind.stable_token, foil, kind, frame.frame_id, FeatureDim.SHAPE, FeatureDim.TEXTURE)
    mass_frames = _prompt_frames(TRAIN_FRAMES_B, "B")
    for i in range(TYPE_COUNTS[ItemType.MASS_TEXTURE]):
        kind = novel[i % len(novel)]
        frame = mass_frames[i % len(mass_frames)]
        target = kind.alt_texture_token
        prompt = _realize_prefix(frame, kind, FeatureDim.TEXTURE, rng)
        foil = [t for t in shape_tokens if True][i % len(shape_tokens)]
        add(ItemType.MASS_TEXTURE, i, prompt, target, foil, kind, frame.frame_id, FeatureDim.TEXTURE, FeatureDim.SHAPE)

    # --- one-shot: exemplar sentence in context, rank-based scoring in eval.
    def exemplar_sentence(kind: KindSpec) -> str:
        colour = str(rng.choice(LEXICON.colour_tokens))
        return f"A {kind.noun} is a {kind.stable_token} {colour} {kind.alt_texture_token} thing"

    for i in range(TYPE_COUNTS[ItemType.ONE_SHOT_IN_CONTEXT]):
        kind = novel[i % len(novel)]
        ctx = exemplar_sentence(kind)
        frame = prompt_a[1]
        prompt = _realize_prefix(frame, kind, FeatureDim.SHAPE, rng)
        foil = same_dim_foil(FeatureDim.SHAPE, kind.stable_token, i)
        add(ItemType.ONE_SHOT_IN_CONTEXT, i, prompt, kind.stable_token, foil, kind, frame.frame_id, FeatureDim.SHAPE, FeatureDim.SHAPE, ctx=ctx)
    for i in range(TYPE_COUNTS[ItemType.ONE_SHOT_CONTROL]):
        ctx_kind = novel[i % len(novel)]
        query_kind = novel[(i + 1) % len(novel)]
        ctx = exemplar_sentence(ctx_kind)
        frame = prompt_a[1]
        prompt = _realize_prefix(frame, query_kind, FeatureDim.SHAPE, rng)
        foil = same_dim_foil(FeatureDim.SHAPE, query_kind.stable_token, i)
        add(ItemType.ONE_SHOT_CONTROL, i, prompt, query_kind.stable_token, foil, query_kind, frame.frame_id, FeatureDim.SHAPE, FeatureDim.SHAPE, ctx=ctx)

    counts = Counter(it.item_type.value for it in items)
    return Battery(
        items=items,
        counts=dict(counts),
        corpus_md5=corpus.md5,
        seed=seed,
        notes=notes,
    )


def validate_battery(battery: Battery, corpus: Corpus) -> list[str]:
    """Return an itemized list of invariant violations (empty when clean)."""
    errors: list[str] = []
    counts = Counter(it.item_type for it in battery.items)
    for t, n in TYPE_COUNTS.items():
        if counts.get(t, 0) != n:
            errors.append(f"count mismatch for {t.value}: {counts.get(t, 0)} != {n}")
    if len(battery.items) != TOTAL_ITEMS:
        errors.append(f"total items {len(battery.items)} != {TOTAL_ITEMS}")
    corpus_words = {w for s in corpus.sentences for w in s.split()}
    novel_nouns = {k.noun for k in corpus.novel_kinds()}
    kind_by_id = {k.kind_id: k for k in corpus.spec.kinds}
    for it in battery.items:
        if it.target_completion == it.foil_completion:
            errors.append(f"{it.item_id}: target equals foil")
        kind = kind_by_id.get(it.kind_id)
        if kind is None:
            errors.append(f"{it.item_id}: unknown kind {it.kind_id}")
            continue
        if it.item_type == ItemType.SECOND_ORDER:
            if it.target_completion not in LEXICON.shape_tokens or it.foil_completion not in LEXICON.shape_tokens:
                errors.append(f"{it.item_id}: SO completions must both be shape tokens")
            if it.target_completion != kind.stable_token:
                errors.append(f"{it.item_id}: SO target does not match metadata key")
        if kind.is_novel and kind.noun in corpus_words:
            errors.append(f"{it.item_id}: novel noun {kind.noun!r} leaked into corpus")
        prompt_words = set(it.prompt.split()) | set(it.context_prefix.split())
        for w in prompt_words & novel_nouns:
            if w != kind.noun and it.item_type not in (
                ItemType.ONE_SHOT_CONTROL,
            ):
                errors.append(f"{it.item_id}: foreign novel noun {w!r} in prompt")
    for noun in novel_nouns:
        if noun in corpus_words:
            errors.append(f"novel noun {noun!r} occurs in training sentences")
    return errors


def save_battery(battery: Battery, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "manifest": {
            "counts": battery.counts,
            "total": len(battery.items),
            "corpus_md5": battery.corpus_md5,
            "seed": battery.seed,
            "notes": battery.notes,
        },
        "items": [
            {**asdict(it), "item_type": it.item_type.value} for it in battery.items
        ],
    }
    path.write_text(json.dumps(payload, indent=1))


def load_battery(path: Path) -> Battery:
    payload = json.loads(Path(path).read_text())
    items = [
        WugItem(**{**rec, "item_type": ItemType(rec["item_type"])})
        for rec in payload["items"]
    ]
    man = payload["manifest"]
    return Battery(
        items=items,
        counts=man["counts"],
        corpus_md5=man["corpus_md5"],
        seed=man["seed"],
        notes=man["notes"],
    )
