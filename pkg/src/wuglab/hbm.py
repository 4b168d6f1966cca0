"""Hierarchical Dirichlet-multinomial ideal observer.

Each kind k draws a feature distribution theta_k ~ Dirichlet(alpha * beta);
exemplar feature values are multinomial draws from theta_k. A small
concentration alpha means every kind is dominated by a single feature value
(a strong overhypothesis); large alpha means per-kind distributions look
like the corpus-wide base rates. We put an Exponential(1) prior on alpha,
integrate numerically on a log grid, and report the posterior mean.

beta is the corpus-wide empirical frequency of each feature value
(maximum-likelihood plug-in), which reduces the integration to 1-D.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln, logsumexp

from .corpusgen import Corpus, SHAPE
from .lexicon import NonceLexicon
from .corpusgen import LEXICON

GRID_POINTS = 200
GRID_LO = 1e-3
GRID_HI = 1e3
KL_EPS = 1e-12


@dataclass(frozen=True)
class AlphaGrid:
    """Log-spaced alpha values with normalized prior weights."""

    alphas: np.ndarray
    prior_weights: np.ndarray

    def __post_init__(self):
        if not math.isclose(float(self.prior_weights.sum()), 1.0, abs_tol=1e-9):
            raise ValueError("prior weights must sum to 1")


@dataclass(frozen=True)
class HbmPosterior:
    grid: AlphaGrid
    weights: np.ndarray  # posterior weight per grid point, sums to 1
    mean_alpha: float
    beta: np.ndarray  # simplex over feature values
    degenerate: bool = False  # all-zero counts: posterior equals prior


def default_grid(
    n: int = GRID_POINTS, lo: float = GRID_LO, hi: float = GRID_HI
) -> AlphaGrid:
    """Exponential(1) prior discretized on a log grid via trapezoid measure."""
    alphas = np.logspace(math.log10(lo), math.log10(hi), n)
    # d(alpha) measure for trapezoid integration on the non-uniform grid.
    dx = np.gradient(alphas)
    w = np.exp(-alphas) * dx
    return AlphaGrid(alphas=alphas, prior_weights=w / w.sum())


def marginal_likelihood(counts: np.ndarray, alpha: float, beta: np.ndarray) -> float:
    """Sum over kinds of log DirichletMultinomial(row | alpha * beta).

    Rows with zero total contribute 0. Computed with log-gamma, so finite
    for any alpha > 0 and beta on the (open) simplex.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    counts = np.asarray(counts, dtype=float)
    if counts.ndim == 1:
        counts = counts[None, :]
    ab = alpha * np.asarray(beta, dtype=float)
    n = counts.sum(axis=1)
    total = (
        gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
        + gammaln(ab.sum()) - gammaln(n + ab.sum())
        + (gammaln(counts + ab) - gammaln(ab)).sum(axis=1)
    )
    return float(total.sum())


def fit_posterior(
    counts: np.ndarray, beta: np.ndarray, grid: AlphaGrid | None = None
) -> HbmPosterior:
    counts = np.asarray(counts, dtype=float)
    grid = grid or default_grid()
    degenerate = counts.sum() == 0
    if degenerate:
        weights = grid.prior_weights.copy()
    else:
        with np.errstate(divide="ignore"):  # zero prior weight -> -inf, fine
            log_post = np.log(grid.prior_weights) + np.array(
                [marginal_likelihood(counts, a, beta) for a in grid.alphas]
            )
        weights = np.exp(log_post - logsumexp(log_post))
        weights /= weights.sum()
    return HbmPosterior(
        grid=grid,
        weights=weights,
        mean_alpha=float(weights @ grid.alphas),
        beta=np.asarray(beta, dtype=float),
        degenerate=bool(degenerate),
    )


def predictive(posterior: HbmPosterior, observed: np.ndarray) -> np.ndarray:
    """E_alpha[(count_i + alpha beta_i) / (n + alpha)] under the posterior."""
    observed = np.asarray(observed, dtype=float)
    n = observed.sum()
    a = posterior.grid.alphas[:, None]
    per_alpha = (observed[None, :] + a * posterior.beta[None, :]) / (n + a)
    return posterior.weights @ per_alpha


# ---------------------------------------------------------------------------
# Corpus-facing count construction


def shape_counts(corpus: Corpus, lexicon: NonceLexicon = LEXICON) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Per-kind shape-slot counts from noun-labelled sentences.

    Returns (counts K x 10, beta, kind_ids). Counts use the shape dimension
    for every kind so that conditions stay comparable on one axis; beta is
    the corpus-wide shape-token frequency.
    """
    tokens = list(lexicon.shape_tokens)
    tok_idx = {t: i for i, t in enumerate(tokens)}
    per_kind: dict[int, Counter] = {}
    total: Counter = Counter()
    for p in corpus.provenance:
        if p.label_kind != "noun" or SHAPE not in p.fills:
            continue
        tok = p.fills[SHAPE]
        if tok not in tok_idx:
            continue
        per_kind.setdefault(p.kind_id, Counter())[tok] += 1
        total[tok] += 1
    kind_ids = sorted(per_kind)
    counts = np.zeros((len(kind_ids), len(tokens)), dtype=int)
    for r, kid in enumerate(kind_ids):
        for tok, c in per_kind[kid].items():
            counts[r, tok_idx[tok]] = c
    beta = np.array([total[t] for t in tokens], dtype=float)
    if beta.sum() == 0:
        beta = np.ones(len(tokens))
    # Keep beta strictly inside the simplex so log-gamma terms stay finite.
    beta = (beta + 0.5) / (beta + 0.5).sum()
    return counts, beta, kind_ids


def fit_corpus(corpus: Corpus, grid: AlphaGrid | None = None) -> HbmPosterior:
    counts, beta, _ = shape_counts(corpus)
    return fit_posterior(counts, beta, grid)


def novel_kind_predictives(
    corpus: Corpus,
    posterior: HbmPosterior,
    n_exemplars: int = 1,
    lexicon: NonceLexicon = LEXICON,
) -> dict[int, np.ndarray]:
    """Predictive shape distribution per novel kind after n observed exemplars."""
    tokens = list(lexicon.shape_tokens)
    out = {}
    for kind in corpus.novel_kinds():
        obs = np.zeros(len(tokens))
        obs[tokens.index(kind.stable_token)] = n_exemplars
        out[kind.kind_id] = predictive(posterior, obs)
    return out


def two_point_kl(p: float, q: float) -> float:
    """KL(Bernoulli(p) || Bernoulli(q)) in nats, with epsilon flooring."""
    q = min(max(q, KL_EPS), 1 - KL_EPS)
    p = min(max(p, KL_EPS), 1 - KL_EPS)
    return p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q))


def hbm_forced_choice_kl(rows, predictives: dict[int, np.ndarray], battery, lexicon: NonceLexicon = LEXICON) -> dict:
    """Mean KL(model || HBM) over second-order items, two-point Bernoullis.

    `rows` are RunResultRow records restricted (here) to second-order items;
    the model Bernoulli renormalizes exp(logp_target) vs exp(logp_foil), the
    HBM Bernoulli renormalizes the predictive mass on the same two tokens.
    """
    tokens = list(lexicon.shape_tokens)
    items = {it.item_id: it for it in battery.items}
    kls = []
    floored = 0
    for r in rows:
        if r.item_type != "second_order":
            continue
        item = items[r.item_id]
        pred = predictives[r.kind_id]
        qt = float(pred[tokens.index(item.target_completion)])
        qf = float(pred[tokens.index(item.foil_completion)])
        if qt + qf <= 0:
            floored += 1
            q = 0.5
        else:
            q = qt / (qt + qf)
            if q in (0.0, 1.0):
                floored += 1
        mt, mf = math.exp(r.logp_target), math.exp(r.logp_foil)
        p = mt / (mt + mf)
        kls.append(two_point_kl(p, q))
    return {
        "n_items": len(kls),
        "mean_kl_nats": float(np.mean(kls)) if kls else float("nan"),
        "n_floored": floored,
    }


# ---------------------------------------------------------------------------
# File interfaces


def write_counts_csv(counts: np.ndarray, kind_ids: list[int], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind_id"] + [f"v{i}" for i in range(counts.shape[1])])
        for kid, row in zip(kind_ids, counts):
            w.writerow([kid] + [int(c) for c in row])


def read_counts_csv(path: Path) -> tuple[np.ndarray, list[int]]:
    with open(path) as f:
        recs = list(csv.reader(f))
    kind_ids = [int(r[0]) for r in recs[1:]]
    counts = np.array([[int(c) for c in r[1:]] for r in recs[1:]], dtype=int)
    return counts, kind_ids


def save_posterior(posterior: HbmPosterior, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "alphas": posterior.grid.alphas.tolist(),
        "prior_weights": posterior.grid.prior_weights.tolist(),
        "weights": posterior.weights.tolist(),
        "mean_alpha": posterior.mean_alpha,
        "beta": posterior.beta.tolist(),
        "degenerate": posterior.degenerate,
    }
    path.write_text(json.dumps(payload))


def load_posterior(path: Path) -> HbmPosterior:
    d = json.loads(Path(path).read_text())
    grid = AlphaGrid(
        alphas=np.array(d["alphas"]), prior_weights=np.array(d["prior_weights"])
    )
    return HbmPosterior(
        grid=grid,
        weights=np.array(d["weights"]),
        mean_alpha=d["mean_alpha"],
        beta=np.array(d["beta"]),
        degenerate=d["degenerate"],
    )
