import warnings

import pytest
from hypothesis import given, settings, strategies as st

from wuglab import bpe as bpelib
from wuglab.bpe import (
    BOS_ID,
    EOS_ID,
    MERGE_BUDGET,
    count_fallback_events,
    decode,
    encode,
    fit_bpe,
    load_bpe,
    save_bpe,
)
from wuglab.corpusgen import CorpusCondition, build_spec, generate_corpus

text_strategy = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=200
)


def test_special_ids_reserved():
    assert BOS_ID == 0 and EOS_ID == 1


def test_merge_budget_on_real_corpus(regular_bpe):
    assert len(regular_bpe.merges) == MERGE_BUDGET
    assert regular_bpe.vocab_size == 2 + 256 + MERGE_BUDGET


def test_refit_is_identical(regular_corpus, regular_bpe):
    again = bpelib.fit_corpus_bpe(regular_corpus)
    assert again.merges == regular_bpe.merges


@settings(max_examples=60, deadline=None)
@given(text=text_strategy)
def test_roundtrip_arbitrary_text(regular_bpe, text):
    assert decode(regular_bpe, encode(regular_bpe, text)) == text


def test_encoding_concatenates_at_word_boundary(regular_bpe, regular_corpus):
    words = regular_corpus.sentences[0].split()
    a, b = " ".join(words[:2]), " ".join(words[2:])
    whole = encode(regular_bpe, a + " " + b)
    parts = encode(regular_bpe, a) + encode(regular_bpe, " " + b)
    assert whole == parts


def test_zero_fallback_across_seeds(regular_bpe):
    for seed in (123, 456):
        other = generate_corpus(build_spec(CorpusCondition.REGULAR, seed))
        assert count_fallback_events(regular_bpe, other.text()) == 0


def test_fallback_counts_unseen_bytes(regular_bpe):
    assert count_fallback_events(regular_bpe, "éclair") > 0


def test_exhausted_corpus_warns():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_bpe("ab ab ab", n_merges=10)
    assert len(model.merges) < 10
    assert any("exhausted" in str(w.message) for w in caught)


def test_tie_break_is_lexicographic():
    # Pairs (' ','c'), ('a','b'), ('c','d') all occur twice; the
    # lexicographically smallest id pair wins, and ' ' has the lowest id.
    model = fit_bpe("ab cd ab cd", n_merges=1)
    assert model.merges[0] == (ord(" ") + 2, ord("c") + 2)


def test_trained_nouns_become_single_tokens(regular_bpe, regular_corpus):
    # High-frequency words are fully absorbed by the merge budget; each
    # trained kind's noun appears in every one of its exemplar sentences.
    for kind in regular_corpus.train_kinds():
        assert len(encode(regular_bpe, " " + kind.noun)) == 1


def test_novel_nouns_single_tokens_but_absent_from_text(regular_bpe, regular_corpus):
    # The coverage block gives each novel noun its own token (and so its own
    # embedding row) even though no training sentence ever contains it.
    text = regular_corpus.text()
    for kind in regular_corpus.novel_kinds():
        assert len(encode(regular_bpe, " " + kind.noun)) == 1
        assert kind.noun not in text


def test_save_load_roundtrip(tmp_path, regular_bpe):
    path = tmp_path / "bpe.json"
    save_bpe(regular_bpe, path)
    loaded = load_bpe(path)
    assert loaded.merges == regular_bpe.merges
    assert loaded.alphabet == regular_bpe.alphabet
    sample = "A blicket is a mundi thing"
    assert encode(loaded, sample) == encode(regular_bpe, sample)


def test_token_strings_invertible(regular_bpe):
    strings = regular_bpe.token_strings()
    assert len(strings) >= 2 + 256  # merged tokens may collide only as strings
