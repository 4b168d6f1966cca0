"""Byte-pair-encoding tokenizer with byte fallback.

Pretokenization attaches a single leading space to each word (GPT-2 style),
so merges never cross word boundaries and encoding concatenates across word
boundaries: encode(a + " " + b) == encode(a) + encode(" " + b) whenever a
ends at a word boundary. Base vocabulary is the 256 byte values, so encoding
is total over arbitrary UTF-8 input and decode(encode(x)) == x always.
"""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

BOS_ID = 0
EOS_ID = 1
_N_SPECIAL = 2
_BYTE_BASE = _N_SPECIAL  # byte b -> id b + _BYTE_BASE
MERGE_BUDGET = 512

_PRETOKEN_RE = re.compile(r" ?[^\s]+|\s+")


@dataclass
class BpeModel:
    merges: list[tuple[int, int]]  # ordered; merge i creates id 258 + i
    alphabet: set[int] = field(default_factory=set)  # byte values seen at fit

    @property
    def vocab_size(self) -> int:
        return _N_SPECIAL + 256 + len(self.merges)

    def token_bytes(self) -> dict[int, bytes]:
        table = {_BYTE_BASE + b: bytes([b]) for b in range(256)}
        for i, (a, b) in enumerate(self.merges):
            table[_N_SPECIAL + 256 + i] = table[a] + table[b]
        return table

    def token_strings(self) -> dict[str, int]:
        return {
            tb.decode("utf-8", errors="replace"): tid
            for tid, tb in self.token_bytes().items()
        }


def _pretokenize(text: str) -> list[str]:
    return _PRETOKEN_RE.findall(text)


def _word_to_ids(word: str) -> list[int]:
    return [b + _BYTE_BASE for b in word.encode("utf-8")]


def _apply_merges(ids: list[int], merges: list[tuple[int, int]]) -> list[int]:
    for i, (a, b) in enumerate(merges):
        if len(ids) < 2:
            break
        new_id = _N_SPECIAL + 256 + i
        out = []
        j = 0
        while j < len(ids):
            if j + 1 < len(ids) and ids[j] == a and ids[j + 1] == b:
                out.append(new_id)
                j += 2
            else:
                out.append(ids[j])
                j += 1
        ids = out
    return ids


def fit_bpe(text: str, n_merges: int = MERGE_BUDGET) -> BpeModel:
    """Learn merges from whitespace-pretokenized words, greedy by pair count.

    Ties break on the lexicographically smallest pair, so refits are
    bit-identical. If the corpus exhausts before the budget, the model keeps
    the shorter merge list and a warning is emitted.
    """
    word_freq = Counter(t for t in _pretokenize(text) if t.strip())
    words = {w: _word_to_ids(w) for w in word_freq}
    alphabet = set(text.encode("utf-8"))
    merges: list[tuple[int, int]] = []
    for _ in range(n_merges):
        pair_counts: Counter = Counter()
        for w, ids in words.items():
            f = word_freq[w]
            for a, b in zip(ids, ids[1:]):
                pair_counts[(a, b)] += f
        if not pair_counts:
            break
        best = max(pair_counts.items(), key=lambda kv: (kv[1], [-x for x in kv[0]]))[0]
        new_id = _N_SPECIAL + 256 + len(merges)
        merges.append(best)
        for w, ids in words.items():
            if len(ids) < 2:
                continue
            out = []
            j = 0
            while j < len(ids):
                if j + 1 < len(ids) and ids[j] == best[0] and ids[j + 1] == best[1]:
                    out.append(new_id)
                    j += 2
                else:
                    out.append(ids[j])
                    j += 1
            words[w] = out
    if len(merges) < n_merges:
        warnings.warn(
            f"corpus exhausted after {len(merges)} merges (budget {n_merges})"
        )
    return BpeModel(merges=merges, alphabet=alphabet)


# Words in the coverage block repeat about as often as a trained kind's
# noun appears in its exemplar sentences (12-16 times), so the merge search
# absorbs them into single tokens the same way it absorbs trained nouns.
COVERAGE_REPS = 14


def fit_corpus_bpe(corpus, n_merges: int = MERGE_BUDGET) -> BpeModel:
    """Fit on the corpus text plus a coverage block for absent lexicon words.

    Novel kinds contribute no sentences to the training text (and the
    reserved novel shape tokens never fill a slot), but the tokenizer must
    still carry those words as single tokens: a novel noun needs its own
    embedding row -- one that training never strengthens -- for the
    representational analyses and the embedding swap to be about the noun
    rather than about shared subwords, and single-token targets keep the
    rank and greedy diagnostics well-defined.
    """
    present = corpus.vocab()
    words = [k.noun for k in corpus.spec.kinds]
    from .corpusgen import LEXICON  # deferred: avoid import cycle at load

    words += list(LEXICON.all_feature_tokens()) + list(LEXICON.markers)
    absent = [w for w in dict.fromkeys(words) if w not in present]
    cover = "".join(" " + w for w in absent for _ in range(COVERAGE_REPS))
    return fit_bpe(corpus.text() + "\n" + cover, n_merges=n_merges)


def encode(model: BpeModel, text: str) -> list[int]:
    ids: list[int] = []
    for tok in _pretokenize(text):
        ids.extend(_apply_merges(_word_to_ids(tok), model.merges))
    return ids


def decode(model: BpeModel, ids: list[int]) -> str:
    table = model.token_bytes()
    data = b"".join(table[i] for i in ids if i >= _BYTE_BASE)
    return data.decode("utf-8")


def count_fallback_events(model: BpeModel, text: str) -> int:
    """Number of encoded bytes outside the alphabet recorded at fit time."""
    events = 0
    for tok in _pretokenize(text):
        events += sum(1 for b in tok.encode("utf-8") if b not in model.alphabet)
    return events


def save_bpe(model: BpeModel, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vocab = {s: i for s, i in sorted(model.token_strings().items(), key=lambda kv: kv[1])}
    payload = {
        "version": 1,
        "merges": [list(m) for m in model.merges],
        "alphabet": sorted(model.alphabet),
        "vocab": vocab,
        "special": {"bos": BOS_ID, "eos": EOS_ID},
    }
    path.write_text(json.dumps(payload))


def load_bpe(path: Path) -> BpeModel:
    payload = json.loads(Path(path).read_text())
    return BpeModel(
        merges=[tuple(m) for m in payload["merges"]],
        alphabet=set(payload["alphabet"]),
    )
