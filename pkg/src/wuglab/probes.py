"""Linear probes over hidden states, plus representation-similarity analyses.

The probe asks whether the stable shape token is linearly decodable from the
hidden state at the critical prediction position of first-order items; the
cosine analyses ask how noun representations cluster at the noun-final
position of a neutral carrier prompt.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bpe as bpelib
from .bpe import BOS_ID, BpeModel
from .corpusgen import Corpus, LEXICON
from .model import Checkpoint, forward, swap_embeddings

PROBE_L2 = 1e-3
PROBE_MAX_ITERS = 5000
PROBE_GRAD_TOL = 1e-6
FOLD_SEED = 7
N_FOLDS = 3
N_SHUFFLES = 100


@dataclass
class ProbeDataset:
    features: np.ndarray  # (n, d) hidden states, one layer
    labels: np.ndarray  # (n,) shape-token index 0-9
    kind_ids: np.ndarray  # (n,)
    folds: np.ndarray  # (n,) fold assignment 0..N_FOLDS-1


@dataclass
class ProbeResult:
    accuracy: float
    fold_accuracies: list[float]
    converged: bool


@dataclass
class PermutationControl:
    true_accuracy: float
    shuffled_accuracies: list[float]
    baseline_mean: float
    gap: float
    p_value: float


@dataclass
class CosineReport:
    within_trained: list[float]  # per layer
    within_novel: list[float]
    cross: list[float]
    n_zero_excluded: int = 0
    flags: list[str] = field(default_factory=list)


def assign_folds(labels: np.ndarray, kind_ids: np.ndarray, seed: int = FOLD_SEED) -> np.ndarray:
    """Stratified folds: kinds sharing a label are spread across folds."""
    rng = np.random.default_rng(seed)
    folds = np.zeros(len(labels), dtype=int)
    # Fold at the kind level so a kind's items never straddle train/test.
    kinds = np.unique(kind_ids)
    kind_label = {k: labels[kind_ids == k][0] for k in kinds}
    for lab in sorted(set(kind_label.values())):
        ks = [k for k in kinds if kind_label[k] == lab]
        ks = list(rng.permutation(ks))
        for i, k in enumerate(ks):
            folds[kind_ids == k] = i % N_FOLDS
    return folds


def make_probe_dataset(
    features: np.ndarray, kind_ids, corpus: Corpus, seed: int = FOLD_SEED
) -> ProbeDataset:
    """Features = one layer's critical-position states for the FO items."""
    shape_idx = {t: i for i, t in enumerate(LEXICON.shape_tokens)}
    kind_by_id = {k.kind_id: k for k in corpus.spec.kinds}
    kind_ids = np.asarray(kind_ids)
    labels = np.array([shape_idx[kind_by_id[int(k)].stable_token] for k in kind_ids])
    return ProbeDataset(
        features=np.asarray(features, dtype=np.float64),
        labels=labels,
        kind_ids=kind_ids,
        folds=assign_folds(labels, kind_ids, seed),
    )


def _fit_softmax(X: np.ndarray, y: np.ndarray, l2: float) -> tuple[np.ndarray, bool]:
    """Full-batch GD on multinomial logistic loss; step from a Lipschitz bound."""
    n, d = X.shape
    k = 10
    W = np.zeros((d + 1, k))
    Xb = np.hstack([X, np.ones((n, 1))])
    # 0.25 * sigma_max^2 / n bounds the softmax Hessian; +l2 for the ridge.
    smax = np.linalg.norm(Xb, 2)
    lr = 1.0 / (0.25 * smax**2 / n + l2)
    Y = np.zeros((n, k))
    Y[np.arange(n), y] = 1.0
    converged = False
    for _ in range(PROBE_MAX_ITERS):
        z = Xb @ W
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        grad = Xb.T @ (p - Y) / n + l2 * W
        if np.linalg.norm(grad) < PROBE_GRAD_TOL:
            converged = True
            break
        W -= lr * grad
    return W, converged


def _predict(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    Xb = np.hstack([X, np.ones((len(X), 1))])
    return np.argmax(Xb @ W, axis=1)


def train_probe(dataset: ProbeDataset, l2: float = PROBE_L2) -> ProbeResult:
    """3-fold CV accuracy; features standardized with train-fold statistics."""
    fold_accs = []
    all_converged = True
    for f in range(N_FOLDS):
        tr = dataset.folds != f
        te = dataset.folds == f
        mu = dataset.features[tr].mean(axis=0)
        sd = dataset.features[tr].std(axis=0)
        sd[sd == 0] = 1.0
        Xtr = (dataset.features[tr] - mu) / sd
        Xte = (dataset.features[te] - mu) / sd
        W, conv = _fit_softmax(Xtr, dataset.labels[tr], l2)
        all_converged &= conv
        pred = _predict(W, Xte)
        fold_accs.append(float((pred == dataset.labels[te]).mean()))
    return ProbeResult(
        accuracy=float(np.mean(fold_accs)),
        fold_accuracies=fold_accs,
        converged=all_converged,
    )


def permutation_test(
    dataset: ProbeDataset,
    n_shuffles: int = N_SHUFFLES,
    l2: float = PROBE_L2,
    seed: int = 0,
) -> PermutationControl:
    """Shuffle the kind->label assignment (not rows); same folds throughout."""
    true_acc = train_probe(dataset, l2).accuracy
    rng = np.random.default_rng(seed)
    kinds = np.unique(dataset.kind_ids)
    kind_label = {int(k): int(dataset.labels[dataset.kind_ids == k][0]) for k in kinds}
    shuffled = []
    for _ in range(n_shuffles):
        perm = rng.permutation(kinds)
        remap = {int(k): kind_label[int(p)] for k, p in zip(kinds, perm)}
        labels = np.array([remap[int(k)] for k in dataset.kind_ids])
        ds = ProbeDataset(dataset.features, labels, dataset.kind_ids, dataset.folds)
        shuffled.append(train_probe(ds, l2).accuracy)
    baseline = float(np.mean(shuffled))
    p = (1 + sum(1 for a in shuffled if a >= true_acc)) / (n_shuffles + 1)
    return PermutationControl(
        true_accuracy=true_acc,
        shuffled_accuracies=shuffled,
        baseline_mean=baseline,
        gap=true_acc - baseline,
        p_value=p,
    )


# ---------------------------------------------------------------------------
# Cosine analyses at the noun-final position


def kind_noun_vectors(
    ckpt: Checkpoint, bm: BpeModel, corpus: Corpus, carrier: str = "A {noun} is a"
) -> dict[int, np.ndarray]:
    """Per kind: (n_layers+1, d_model) states at the noun's last subword."""
    out = {}
    for kind in corpus.spec.kinds:
        prompt = carrier.format(noun=kind.noun)
        ids = [BOS_ID] + bpelib.encode(bm, prompt)
        noun_end = 1 + len(bpelib.encode(bm, "A " + kind.noun)) - 1
        _, hiddens = forward(ckpt, ids)
        out[kind.kind_id] = np.stack([h[noun_end].numpy() for h in hiddens])
    return out


def _mean_pairwise_cos(vecs: list[np.ndarray]) -> tuple[float, int]:
    kept = [v for v in vecs if np.linalg.norm(v) > 0]
    n_excluded = len(vecs) - len(kept)
    if len(kept) < 2:
        return float("nan"), n_excluded
    cs = [
        float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
        for a, b in itertools.combinations(kept, 2)
    ]
    return float(np.mean(cs)), n_excluded


def _mean_cross_cos(va: list[np.ndarray], vb: list[np.ndarray]) -> float:
    cs = []
    for a in va:
        for b in vb:
            na, nb = np.linalg.norm(a), np.linalg.norm(b)
            if na > 0 and nb > 0:
                cs.append(float(np.dot(a, b) / (na * nb)))
    return float(np.mean(cs)) if cs else float("nan")


def cosine_analysis(vectors: dict[int, np.ndarray], corpus: Corpus) -> CosineReport:
    trained_ids = {k.kind_id for k in corpus.train_kinds()}
    novel_ids = {k.kind_id for k in corpus.novel_kinds()}
    n_layers = next(iter(vectors.values())).shape[0]
    wt, wn, cr = [], [], []
    n_zero = 0
    for layer in range(n_layers):
        tv = [vectors[k][layer] for k in sorted(trained_ids)]
        nv = [vectors[k][layer] for k in sorted(novel_ids)]
        c_t, e1 = _mean_pairwise_cos(tv)
        c_n, e2 = _mean_pairwise_cos(nv)
        n_zero += e1 + e2
        wt.append(c_t)
        wn.append(c_n)
        cr.append(_mean_cross_cos(tv, nv))
    flags = [f"{n_zero} zero vectors excluded"] if n_zero else []
    return CosineReport(within_trained=wt, within_novel=wn, cross=cr,
                        n_zero_excluded=n_zero, flags=flags)


def perturbation_experiment(
    ckpt: Checkpoint, bm: BpeModel, corpus: Corpus, seed: int = 0
) -> tuple[CosineReport, CosineReport]:
    """Swap novel-noun embedding rows with random trained-noun rows, re-run.

    Trained nouns are frequent enough that the merge budget absorbs them into
    single tokens; novel nouns are rare and usually split into subwords. The
    row swapped is the noun's *final* subword -- the position the kind vector
    is read at -- so the perturbation lands exactly where the measurement is
    taken while trained-noun vectors stay untouched.
    """
    def final_token(noun: str) -> int:
        return bpelib.encode(bm, " " + noun)[-1]

    before = cosine_analysis(kind_noun_vectors(ckpt, bm, corpus), corpus)
    rng = np.random.default_rng(seed)
    trained = corpus.train_kinds()
    picks = rng.choice(len(trained), size=len(corpus.novel_kinds()), replace=False)
    mapping: dict[int, int] = {}
    for nk, p in zip(corpus.novel_kinds(), picks):
        key = final_token(nk.noun)
        # Two novel nouns sharing a final subword get a single (first) swap.
        if key not in mapping:
            mapping[key] = final_token(trained[int(p)].noun)
    swapped = swap_embeddings(ckpt, mapping)
    after = cosine_analysis(kind_noun_vectors(swapped, bm, corpus), corpus)
    return before, after


def write_probe_csv(rows: list[dict], path: Path) -> None:
    """rows: dicts with condition, size_tag, seed, layer, accuracy, baseline, p."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["condition", "size_tag", "seed", "layer", "accuracy", "baseline", "p_value"]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in cols})


def write_cosine_csv(reports: dict[str, CosineReport], path: Path) -> None:
    """reports keyed by a run label; one row per (run, layer)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "layer", "within_trained", "within_novel", "cross"])
        for run, rep in sorted(reports.items()):
            for layer in range(len(rep.within_trained)):
                w.writerow([
                    run, layer,
                    rep.within_trained[layer],
                    rep.within_novel[layer],
                    rep.cross[layer],
                ])
