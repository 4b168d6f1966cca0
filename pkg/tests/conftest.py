import pytest
import torch

torch.set_num_threads(1)

from wuglab import bpe as bpelib
from wuglab.battery import build_battery
from wuglab.corpusgen import CorpusCondition, build_spec, generate_corpus
from wuglab.model import ModelConfig, TrainConfig, train


@pytest.fixture(scope="session")
def regular_corpus():
    return generate_corpus(build_spec(CorpusCondition.REGULAR, 42))


@pytest.fixture(scope="session")
def scrambled_corpus():
    return generate_corpus(build_spec(CorpusCondition.SCRAMBLED, 42))


@pytest.fixture(scope="session")
def feature_swap_corpus():
    return generate_corpus(build_spec(CorpusCondition.FEATURE_SWAP, 42))


@pytest.fixture(scope="session")
def regular_bpe(regular_corpus):
    return bpelib.fit_corpus_bpe(regular_corpus)


@pytest.fixture(scope="session")
def regular_battery(regular_corpus):
    return build_battery(regular_corpus, seed=42)


@pytest.fixture(scope="session")
def mini_checkpoint(regular_corpus, regular_bpe):
    """A briefly-trained miniature model over the real vocabulary.

    Big enough to exercise every inference path, far too small/short to be
    accurate; accuracy-bearing assertions live in test_acceptance.
    """
    seqs = [
        [bpelib.BOS_ID] + bpelib.encode(regular_bpe, s) + [bpelib.EOS_ID]
        for s in regular_corpus.sentences[:80]
    ]
    cfg = ModelConfig(
        size_tag="mini",
        n_layers=2,
        n_heads=2,
        d_model=32,
        d_ff=64,
        vocab_size=regular_bpe.vocab_size,
        max_seq_len=32,
    )
    tcfg = TrainConfig(steps=30, seed=7, batch_size=4)
    ckpt, _ = train(seqs, cfg, tcfg)
    return ckpt
