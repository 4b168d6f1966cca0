"""Deterministic generation of the eight corpus conditions.

Every corpus is a pure function of (condition, seed, fraction). Sentences are
nonce-word template realizations; each kind keeps one stable feature token in
its stable dimension while the other two feature slots vary uniformly.

A trailing filler word (cycled through a fixed filler lexicon) pads the
whitespace vocabulary of full-fraction corpora into the 314-351 band while
leaving the informative prefix of every sentence untouched.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .lexicon import NonceLexicon, build_lexicon

VOCAB_BAND = (314, 351)


class FeatureDim(str, Enum):
    SHAPE = "shape"
    COLOUR = "colour"
    TEXTURE = "texture"


class CorpusCondition(str, Enum):
    REGULAR = "regular"
    SCRAMBLED = "scrambled"
    FEATURE_SWAP = "feature_swap"
    WEAK_LABEL_25 = "weak_label_25"
    PARAPHRASED_NO_LABEL = "paraphrased_no_label"
    BARE_NO_LABEL = "bare_no_label"
    NOISE_INJECTION = "noise_injection"
    FREQUENCY_MATCHED = "frequency_matched"


_COND_INDEX = {c: i for i, c in enumerate(CorpusCondition)}

# Slot alphabet for frame patterns. Anything else in a pattern is a literal.
NOUN, SHAPE, COLOUR, TEXTURE, FILLER = "<noun>", "<shape>", "<colour>", "<texture>", "<filler>"
_SLOTS = {NOUN, SHAPE, COLOUR, TEXTURE, FILLER}


@dataclass(frozen=True)
class FrameTemplate:
    frame_id: int
    pattern: tuple[str, ...]
    labelled: bool
    held_out: bool = False
    domain: str = "A"

    def words(self) -> set[str]:
        return {w for w in self.pattern if w not in _SLOTS}

    def feature_order(self) -> tuple[str, ...]:
        return tuple(w for w in self.pattern if w in (SHAPE, COLOUR, TEXTURE))


def _frame(fid, text, labelled, held_out=False, domain="A"):
    return FrameTemplate(fid, tuple(text.split()), labelled, held_out, domain)


# Domain A (count syntax, shape slot first). Five labelled, three no-label.
TRAIN_FRAMES_A = (
    _frame(0, f"A {NOUN} is a {SHAPE} {COLOUR} {TEXTURE} thing {FILLER}", True),
    _frame(1, f"the {NOUN} looks {SHAPE} {COLOUR} {TEXTURE} today {FILLER}", True),
    _frame(2, f"that {SHAPE} {COLOUR} {TEXTURE} thing is a {NOUN} {FILLER}", True),
    _frame(3, f"every {NOUN} is a {SHAPE} {COLOUR} {TEXTURE} object {FILLER}", True),
    _frame(4, f"one {NOUN} was a {SHAPE} {COLOUR} {TEXTURE} thing {FILLER}", True),
    _frame(5, f"it is a {SHAPE} {COLOUR} {TEXTURE} thing {FILLER}", False),
    _frame(6, f"there was a {SHAPE} {COLOUR} {TEXTURE} object {FILLER}", False),
    _frame(7, f"this thing looks {SHAPE} {COLOUR} {TEXTURE} {FILLER}", False),
)

# Domain B (mass syntax, texture slot first); used only in feature_swap.
TRAIN_FRAMES_B = (
    _frame(100, f"the {NOUN} feels {TEXTURE} {COLOUR} {SHAPE} {FILLER}", True, domain="B"),
    _frame(101, f"some {NOUN} felt {TEXTURE} {COLOUR} {SHAPE} stuff {FILLER}", True, domain="B"),
    _frame(102, f"that {TEXTURE} {COLOUR} {SHAPE} stuff is {NOUN} {FILLER}", True, domain="B"),
    _frame(103, f"all {NOUN} feels {TEXTURE} {COLOUR} {SHAPE} {FILLER}", True, domain="B"),
    _frame(104, f"much {NOUN} felt {TEXTURE} {COLOUR} {SHAPE} stuff {FILLER}", True, domain="B"),
    _frame(105, f"it feels {TEXTURE} {COLOUR} {SHAPE} {FILLER}", False, domain="B"),
    _frame(106, f"some {TEXTURE} {COLOUR} {SHAPE} stuff felt {NOUN} {FILLER}", True, domain="B"),
    _frame(107, f"this stuff feels {TEXTURE} {COLOUR} {SHAPE} {FILLER}", False, domain="B"),
)

# Held out from every training corpus; used by frame-variant items only.
HELD_OUT_FRAMES = (
    _frame(900, f"my {NOUN} is a {SHAPE} {COLOUR} {TEXTURE} thing", True, held_out=True),
    _frame(901, f"the {NOUN} was {SHAPE} {COLOUR} {TEXTURE}", True, held_out=True),
)

ALL_FRAMES = TRAIN_FRAMES_A + TRAIN_FRAMES_B + HELD_OUT_FRAMES
FRAME_WORDS = set().union(*(f.words() for f in ALL_FRAMES))

LEXICON: NonceLexicon = build_lexicon(forbidden=FRAME_WORDS)


@dataclass(frozen=True)
class KindSpec:
    kind_id: int
    noun: str
    marker: str
    stable_dim: FeatureDim
    stable_token: str
    n_exemplars: int
    domain: str
    is_novel: bool
    # Nominal texture assignment for novel kinds; consumed by mass-syntax items.
    alt_texture_token: str = ""


@dataclass(frozen=True)
class CorpusSpec:
    condition: CorpusCondition
    seed: int
    fraction: float = 1.0
    kinds: tuple[KindSpec, ...] = ()
    frames: tuple[FrameTemplate, ...] = ()
    label_rate: float = 1.0
    noise_rate: float = 0.0


@dataclass(frozen=True)
class SentenceProvenance:
    kind_id: int
    frame_id: int
    fills: dict  # slot name -> token (includes filler, noun/marker when present)
    label_kind: str  # "noun" | "marker" | "none"


@dataclass
class Corpus:
    sentences: list[str]
    spec: CorpusSpec
    provenance: list[SentenceProvenance]
    md5: str

    def text(self) -> str:
        return "\n".join(self.sentences) + "\n"

    def kind_by_id(self, kind_id: int) -> KindSpec:
        return next(k for k in self.spec.kinds if k.kind_id == kind_id)

    def train_kinds(self) -> list[KindSpec]:
        return [k for k in self.spec.kinds if not k.is_novel]

    def novel_kinds(self) -> list[KindSpec]:
        return [k for k in self.spec.kinds if k.is_novel]

    def vocab(self) -> set[str]:
        return {w for s in self.sentences for w in s.split()}


@dataclass
class ManipulationCheckReport:
    mi_noun_shape_slot: float | None
    mi_noun_all_slots: float | None
    per_kind_normalized_entropy: dict  # kind_id -> {dim: H/log2(10)}


def _rng(seed: int, condition: CorpusCondition, stream: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, _COND_INDEX[condition], stream])
    )


def _balanced_assignment(tokens, count, rng) -> list[str]:
    """Multiset of `count` tokens with per-token counts differing by <= 1."""
    base = count // len(tokens)
    pool = list(tokens) * base
    extra = count - base * len(tokens)
    pool += list(rng.permutation(list(tokens))[:extra])
    rng.shuffle(pool)
    return pool


def _pin(assignment: list[str], idx: int, wanted: str) -> None:
    """Swap so assignment[idx] == wanted, preserving multiset."""
    if assignment[idx] == wanted:
        return
    if wanted in assignment:
        j = assignment.index(wanted)
        assignment[idx], assignment[j] = assignment[j], assignment[idx]
    else:
        assignment[idx] = wanted


def build_spec(
    condition: CorpusCondition, seed: int, fraction: float = 1.0
) -> CorpusSpec:
    if fraction not in (0.25, 0.5, 1.0):
        raise ValueError(f"fraction must be one of 0.25/0.5/1.0, got {fraction}")
    rng = _rng(seed, condition, 0)
    lex = LEXICON
    n_train, n_novel = len(lex.train_nouns), len(lex.novel_nouns)

    # Stable dimension per train kind.
    if condition == CorpusCondition.SCRAMBLED:
        dims = list(FeatureDim)
        while True:
            stable_dims = [dims[i] for i in rng.integers(0, 3, size=n_train)]
            if len(set(stable_dims)) >= 2:
                break
    elif condition == CorpusCondition.FEATURE_SWAP:
        stable_dims = [FeatureDim.SHAPE] * (n_train // 2) + [FeatureDim.TEXTURE] * (
            n_train - n_train // 2
        )
    else:
        stable_dims = [FeatureDim.SHAPE] * n_train

    # Two shape tokens are reserved for the novel kinds and never serve as
    # trained stable tokens: sallo (the quoted zull pairing) plus one more
    # drawn per seed. Keeping the sets disjoint removes the token-frequency
    # confound from second-order items and means a greedy decoder that
    # reproduces trained slot statistics can only hit a novel target by
    # genuine noun-specific inference.
    sallo = lex.shape_tokens[1]
    mundi = lex.shape_tokens[0]
    extra_pool = [t for t in lex.shape_tokens if t not in (sallo, mundi)]
    novel_shape_pool = (sallo, extra_pool[int(rng.integers(len(extra_pool)))])
    trained_shapes = tuple(t for t in lex.shape_tokens if t not in novel_shape_pool)

    # Balanced stable tokens within each dimension group.
    by_dim: dict[FeatureDim, list[int]] = defaultdict(list)
    for i, d in enumerate(stable_dims):
        by_dim[d].append(i)
    stable_tokens: list[str] = [""] * n_train
    for d, idxs in by_dim.items():
        tokens = trained_shapes if d == FeatureDim.SHAPE else lex.tokens_for_dim(d)
        assignment = _balanced_assignment(tokens, len(idxs), rng)
        for pos, i in enumerate(idxs):
            stable_tokens[i] = assignment[pos]
    if stable_dims[0] == FeatureDim.SHAPE:
        # Pin the quoted exemplar pairing blicket -> mundi.
        shape_idxs = by_dim[FeatureDim.SHAPE]
        sub = [stable_tokens[i] for i in shape_idxs]
        _pin(sub, shape_idxs.index(0), mundi)
        for pos, i in enumerate(shape_idxs):
            stable_tokens[i] = sub[pos]

    n_ex = rng.integers(12, 17, size=n_train)

    kinds = []
    for i in range(n_train):
        domain = "B" if stable_dims[i] == FeatureDim.TEXTURE and condition == CorpusCondition.FEATURE_SWAP else "A"
        kinds.append(
            KindSpec(
                kind_id=i,
                noun=lex.train_nouns[i],
                marker=lex.markers[i],
                stable_dim=stable_dims[i],
                stable_token=stable_tokens[i],
                n_exemplars=int(n_ex[i]),
                domain=domain,
                is_novel=False,
            )
        )

    # Novel kinds: always shape-stable, targets drawn from the reserved
    # (never-trained) shape pool, balanced across its two tokens.
    novel_shapes = _balanced_assignment(novel_shape_pool, n_novel, rng)
    _pin(novel_shapes, 0, sallo)  # zull -> sallo
    novel_textures = list(rng.permutation(list(lex.texture_tokens))[:n_novel])
    _pin(novel_textures, 0, lex.texture_tokens[1])  # zull -> glaven
    for j in range(n_novel):
        kinds.append(
            KindSpec(
                kind_id=n_train + j,
                noun=lex.novel_nouns[j],
                marker=lex.markers[n_train + j],
                stable_dim=FeatureDim.SHAPE,
                stable_token=novel_shapes[j],
                n_exemplars=0,
                domain="A",
                is_novel=True,
                alt_texture_token=novel_textures[j],
            )
        )

    if condition == CorpusCondition.FEATURE_SWAP:
        frames = TRAIN_FRAMES_A + TRAIN_FRAMES_B
    elif condition == CorpusCondition.BARE_NO_LABEL:
        frames = tuple(f for f in TRAIN_FRAMES_A if not f.labelled)
    else:
        frames = TRAIN_FRAMES_A

    label_rate = {
        CorpusCondition.WEAK_LABEL_25: 0.25,
        CorpusCondition.PARAPHRASED_NO_LABEL: 0.0,
        CorpusCondition.BARE_NO_LABEL: 0.0,
    }.get(condition, 1.0)
    noise_rate = 0.20 if condition == CorpusCondition.NOISE_INJECTION else 0.0

    return CorpusSpec(
        condition=condition,
        seed=seed,
        fraction=fraction,
        kinds=tuple(kinds),
        frames=frames,
        label_rate=label_rate,
        noise_rate=noise_rate,
    )


def _vocab_target(condition: CorpusCondition, seed: int) -> int:
    h = hashlib.md5(f"{condition.value}:{seed}".encode()).digest()
    span = VOCAB_BAND[1] - VOCAB_BAND[0]
    return VOCAB_BAND[0] + int.from_bytes(h[:4], "little") % (span + 1)


def generate_corpus(spec: CorpusSpec) -> Corpus:
    """Realize a corpus from its spec. Deterministic; see module docstring."""
    lex = LEXICON
    rng = _rng(spec.seed, spec.condition, 1)
    train_kinds = [k for k in spec.kinds if not k.is_novel]
    if len(train_kinds) != 32 or sum(k.is_novel for k in spec.kinds) != 8:
        raise ValueError("spec must contain 32 train kinds and 8 novel kinds")

    dims = (FeatureDim.SHAPE, FeatureDim.COLOUR, FeatureDim.TEXTURE)
    slot_of = {FeatureDim.SHAPE: SHAPE, FeatureDim.COLOUR: COLOUR, FeatureDim.TEXTURE: TEXTURE}

    # Pass 1: choose (kind, frame) and fill feature slots.
    drafts: list[tuple[KindSpec, FrameTemplate, dict]] = []
    for kind in train_kinds:
        frames = [f for f in spec.frames if f.domain == kind.domain]
        for j in range(kind.n_exemplars):
            frame = frames[j % len(frames)]
            fills: dict[str, str] = {}
            for d in dims:
                if d == kind.stable_dim and spec.condition != CorpusCondition.FREQUENCY_MATCHED:
                    fills[slot_of[d]] = kind.stable_token
                else:
                    fills[slot_of[d]] = str(rng.choice(lex.tokens_for_dim(d)))
            drafts.append((kind, frame, fills))

    if spec.condition == CorpusCondition.FREQUENCY_MATCHED:
        # Refill every feature slot from an exactly balanced multiset per
        # dimension; this removes kind-level structure entirely.
        for d in dims:
            slot = slot_of[d]
            n_slots = sum(1 for _, f, _ in drafts if slot in {w for w in f.pattern})
            tokens = lex.tokens_for_dim(d)
            base, rem = divmod(n_slots, len(tokens))
            pool = []
            for t_i, tok in enumerate(tokens):
                pool.extend([tok] * (base + (1 if t_i < rem else 0)))
            pool = list(rng.permutation(pool))
            it = iter(pool)
            for _, frame, fills in drafts:
                if slot in frame.pattern:
                    fills[slot] = next(it)

    if spec.noise_rate > 0:
        all_tokens = lex.all_feature_tokens()
        for _, frame, fills in drafts:
            for slot in (SHAPE, COLOUR, TEXTURE):
                if slot in fills and rng.random() < spec.noise_rate:
                    fills[slot] = str(rng.choice(all_tokens))

    # Label policy for labelled frames.
    records: list[tuple[KindSpec, FrameTemplate, dict, str]] = []
    for kind, frame, fills in drafts:
        label_kind = "none"
        if NOUN in frame.pattern:
            if spec.condition == CorpusCondition.PARAPHRASED_NO_LABEL:
                label_kind = "marker"
            elif spec.condition == CorpusCondition.WEAK_LABEL_25:
                label_kind = "noun" if rng.random() < spec.label_rate else "marker"
            else:
                label_kind = "noun"
            fills[NOUN] = kind.noun if label_kind == "noun" else kind.marker
        records.append((kind, frame, fills, label_kind))

    # Dose-response subsampling, uniform per kind.
    if spec.fraction < 1.0:
        sub_rng = _rng(spec.seed, spec.condition, 2)
        kept: list = []
        by_kind: dict[int, list] = defaultdict(list)
        for rec in records:
            by_kind[rec[0].kind_id].append(rec)
        for kid in sorted(by_kind):
            group = by_kind[kid]
            n_keep = max(1, round(spec.fraction * len(group)))
            idx = sorted(sub_rng.choice(len(group), size=n_keep, replace=False))
            kept.extend(group[i] for i in idx)
        records = kept

    # Deterministic shuffle of sentence order.
    order = _rng(spec.seed, spec.condition, 3).permutation(len(records))
    records = [records[i] for i in order]

    # Pass 2: fillers pad the vocabulary into the target band.
    base_vocab = set()
    for _, frame, fills, _ in records:
        for w in frame.pattern:
            if w == FILLER:
                continue
            base_vocab.add(fills[w] if w in _SLOTS else w)
    target = _vocab_target(spec.condition, spec.seed)
    n_fill = target - len(base_vocab)
    if n_fill <= 0 or n_fill > len(LEXICON.fillers):
        raise ValueError(
            f"cannot reach vocab target {target} from base vocabulary of "
            f"{len(base_vocab)} words"
        )
    fill_rng = _rng(spec.seed, spec.condition, 4)
    filler_words = [LEXICON.fillers[i] for i in fill_rng.permutation(len(LEXICON.fillers))[:n_fill]]

    sentences: list[str] = []
    provenance: list[SentenceProvenance] = []
    for i, (kind, frame, fills, label_kind) in enumerate(records):
        fills = dict(fills)
        if FILLER in frame.pattern:
            fills[FILLER] = filler_words[i % n_fill]
        words = [fills[w] if w in _SLOTS else w for w in frame.pattern]
        sentences.append(" ".join(words))
        provenance.append(
            SentenceProvenance(
                kind_id=kind.kind_id,
                frame_id=frame.frame_id,
                fills=fills,
                label_kind=label_kind,
            )
        )

    text = "\n".join(sentences) + "\n"
    md5 = hashlib.md5(text.encode("utf-8")).hexdigest()
    corpus = Corpus(sentences=sentences, spec=spec, provenance=provenance, md5=md5)

    if spec.fraction == 1.0:
        vsize = len(corpus.vocab())
        if not (VOCAB_BAND[0] <= vsize <= VOCAB_BAND[1]):
            raise ValueError(f"vocabulary size {vsize} outside {VOCAB_BAND}")
    return corpus


def checksum(corpus: Corpus) -> str:
    """MD5 of the UTF-8 sentence file bytes (LF line endings)."""
    return hashlib.md5(corpus.text().encode("utf-8")).hexdigest()


def _mutual_information(pairs: list[tuple[str, str]]) -> float:
    """MI in bits between the two coordinates of the given samples."""
    n = len(pairs)
    joint = Counter(pairs)
    px = Counter(x for x, _ in pairs)
    py = Counter(y for _, y in pairs)
    mi = 0.0
    for (x, y), c in joint.items():
        p = c / n
        mi += p * math.log2(p * n * n / (px[x] * py[y]))
    return max(mi, 0.0)


def manipulation_check(corpus: Corpus) -> ManipulationCheckReport:
    """MI between noun and shape-slot token, plus per-kind slot entropies."""
    labelled = [
        (p, corpus.kind_by_id(p.kind_id))
        for p in corpus.provenance
        if p.label_kind == "noun" and SHAPE in p.fills
    ]
    if labelled:
        mi_shape = _mutual_information([(k.noun, p.fills[SHAPE]) for p, k in labelled])
        mi_all = _mutual_information(
            [
                (k.noun, "|".join(p.fills.get(s, "-") for s in (SHAPE, COLOUR, TEXTURE)))
                for p, k in labelled
            ]
        )
    else:
        mi_shape = mi_all = None

    by_kind: dict[int, dict[str, Counter]] = defaultdict(lambda: defaultdict(Counter))
    for p in corpus.provenance:
        for slot in (SHAPE, COLOUR, TEXTURE):
            if slot in p.fills:
                by_kind[p.kind_id][slot][p.fills[slot]] += 1
    n_vals = len(LEXICON.shape_tokens)
    entropies: dict[int, dict[str, float]] = {}
    for kid, slots in by_kind.items():
        entropies[kid] = {}
        for slot, counts in slots.items():
            total = sum(counts.values())
            h = -sum((c / total) * math.log2(c / total) for c in counts.values())
            entropies[kid][slot.strip("<>")] = h / math.log2(n_vals)
    return ManipulationCheckReport(
        mi_noun_shape_slot=mi_shape,
        mi_noun_all_slots=mi_all,
        per_kind_normalized_entropy=entropies,
    )


# ---------------------------------------------------------------------------
# Serialization


def save_corpus(corpus: Corpus, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "corpus.txt").write_bytes(corpus.text().encode("utf-8"))
    meta = {
        "condition": corpus.spec.condition.value,
        "seed": corpus.spec.seed,
        "fraction": corpus.spec.fraction,
        "label_rate": corpus.spec.label_rate,
        "noise_rate": corpus.spec.noise_rate,
        "md5": corpus.md5,
        "kinds": [
            {
                "kind_id": k.kind_id,
                "noun": k.noun,
                "marker": k.marker,
                "stable_dim": k.stable_dim.value,
                "stable_token": k.stable_token,
                "n_exemplars": k.n_exemplars,
                "domain": k.domain,
                "is_novel": k.is_novel,
                "alt_texture_token": k.alt_texture_token,
            }
            for k in corpus.spec.kinds
        ],
        "frames": [
            {
                "frame_id": f.frame_id,
                "pattern": list(f.pattern),
                "labelled": f.labelled,
                "held_out": f.held_out,
                "domain": f.domain,
            }
            for f in corpus.spec.frames
        ],
        "provenance": [
            {
                "kind_id": p.kind_id,
                "frame_id": p.frame_id,
                "fills": p.fills,
                "label_kind": p.label_kind,
            }
            for p in corpus.provenance
        ],
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def load_corpus(out_dir: Path) -> Corpus:
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / "metadata.json").read_text())
    sentences = (out_dir / "corpus.txt").read_text().splitlines()
    kinds = tuple(
        KindSpec(
            kind_id=k["kind_id"],
            noun=k["noun"],
            marker=k["marker"],
            stable_dim=FeatureDim(k["stable_dim"]),
            stable_token=k["stable_token"],
            n_exemplars=k["n_exemplars"],
            domain=k["domain"],
            is_novel=k["is_novel"],
            alt_texture_token=k.get("alt_texture_token", ""),
        )
        for k in meta["kinds"]
    )
    frames = tuple(
        FrameTemplate(
            f["frame_id"], tuple(f["pattern"]), f["labelled"], f["held_out"], f["domain"]
        )
        for f in meta["frames"]
    )
    spec = CorpusSpec(
        condition=CorpusCondition(meta["condition"]),
        seed=meta["seed"],
        fraction=meta["fraction"],
        kinds=kinds,
        frames=frames,
        label_rate=meta["label_rate"],
        noise_rate=meta["noise_rate"],
    )
    provenance = [
        SentenceProvenance(p["kind_id"], p["frame_id"], p["fills"], p["label_kind"])
        for p in meta["provenance"]
    ]
    return Corpus(sentences=sentences, spec=spec, provenance=provenance, md5=meta["md5"])
