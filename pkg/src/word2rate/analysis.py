"""Desk-scale empirical checks on trained embeddings.

Covers the step-size stability sweep (mean absolute element value of
accumulated transition products versus sequence length), word and
sentence embedding extraction, cosine nearest neighbors, a minimal
adjacent-swap order probe and a sentence-length probe, plus a seeded
synthetic-grammar corpus generator that the probes train against.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from word2rate.config import TrainConfig, component_dims, hybrid_components, is_hybrid
from word2rate.rate_algebra import (
    compose_cbow,
    compose_cmow,
    compose_fos,
    compose_fop,
    compose_sos,
    random_rate_matrices,
    uniform_distribution,
)
from word2rate.trainer import ParameterBank, _sigmoid

_SALT_STABILITY = 23


@dataclass
class StabilityRecord:
    """One (step size, sequence length, seed) cell of the stability sweep."""

    epsilon: float
    length: int
    seed: int
    mean_abs: float


def stability_curve(
    d: int, epsilons: Sequence[float], max_len: int, seeds: Sequence[int]
) -> list[StabilityRecord]:
    """Mean absolute element value of transition products by length.

    For each (epsilon, seed) pair, draws `max_len` random rate matrices
    exactly as training initialization does, accumulates the product
    (I + eps*Q_L) ... (I + eps*Q_1) and records the mean absolute entry
    after each factor. The same seed reuses the same matrices across
    epsilon values, so curves are directly comparable.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    records = []
    eye = np.eye(d)
    for eps in epsilons:
        for seed in seeds:
            rng = np.random.default_rng(np.random.SeedSequence([_SALT_STABILITY, int(seed)]))
            qs = random_rate_matrices(max_len, d, rng)
            prod = eye
            for length in range(1, max_len + 1):
                prod = (eye + eps * qs[length - 1]) @ prod
                records.append(
                    StabilityRecord(
                        epsilon=float(eps),
                        length=length,
                        seed=int(seed),
                        mean_abs=float(np.mean(np.abs(prod))),
                    )
                )
    return records


def _compose_kind(kind, params, ids, eps, cdim):
    if kind == "cbow":
        return compose_cbow([params[i] for i in ids], dim=cdim)
    if kind == "cmow":
        return compose_cmow([params[i] for i in ids], side=params.shape[1])
    p = uniform_distribution(cdim)
    qs = [params[i] for i in ids]
    if kind == "fos":
        return compose_fos(qs, eps, p)
    if kind == "fop":
        return compose_fop(qs, eps, p)
    if kind == "sos":
        return compose_sos(qs, eps, p)
    raise ValueError(f"unknown composition kind {kind!r}")


def sentence_embedding(
    bank: ParameterBank, config: TrainConfig, ids: Sequence[int]
) -> np.ndarray:
    """Compose a whole sentence exactly as training composes a context."""
    if not len(ids):
        raise ValueError("cannot embed an empty sentence")
    n = bank.n
    for i in ids:
        if not 0 <= i < n:
            raise ValueError(f"unknown word id {i}")
    if is_hybrid(config.mode):
        kinds = hybrid_components(config.mode)
        dims = component_dims(config.dim)
        return np.concatenate(
            [
                _compose_kind(kinds[0], bank.context_a, ids, config.epsilon, dims[0]),
                _compose_kind(kinds[1], bank.context_b, ids, config.epsilon, dims[1]),
            ]
        )
    return _compose_kind(config.mode, bank.context_a, ids, config.epsilon, config.dim)


def word_embedding(bank: ParameterBank, config: TrainConfig, word_id: int) -> np.ndarray:
    """Single-word embedding: the one-word composition of the mode.

    For the rate modes this applies the word's transition factor to the
    uniform distribution; cbow returns the stored vector, cmow the
    unrolled matrix, hybrids the concatenation of their components.
    """
    return sentence_embedding(bank, config, [word_id])


def all_word_embeddings(bank: ParameterBank, config: TrainConfig) -> np.ndarray:
    return np.stack([word_embedding(bank, config, i) for i in range(bank.n)])


def nearest_neighbors(
    bank: ParameterBank, config: TrainConfig, word_id: int, top_k: int
) -> list[tuple[int, float]]:
    """Top-k ids by cosine similarity of word embeddings.

    Excludes the query id; sorted by descending cosine with ties broken
    by ascending id.
    """
    n = bank.n
    if not 0 <= word_id < n:
        raise ValueError(f"unknown word id {word_id}")
    if top_k >= n:
        raise ValueError("top_k must be smaller than the vocabulary size")
    emb = all_word_embeddings(bank, config)
    norms = np.linalg.norm(emb, axis=1)
    norms[norms == 0.0] = 1.0
    query = emb[word_id] / norms[word_id]
    cos = (emb / norms[:, None]) @ query
    order = np.lexsort((np.arange(n), -cos))
    ranked = [int(i) for i in order if i != word_id]
    return [(i, float(cos[i])) for i in ranked[:top_k]]


@dataclass
class ProbeResult:
    probe: str
    accuracy: float
    baseline: float
    seeds: int = 1


def format_probe_line(result: ProbeResult, mode: str) -> str:
    return json.dumps(
        {
            "probe": result.probe,
            "mode": mode,
            "accuracy": result.accuracy,
            "baseline": result.baseline,
            "seeds": result.seeds,
        }
    )


def build_swap_pairs(
    sentences: Sequence[Sequence[int]], rng: np.random.Generator
) -> list[tuple[list[int], list[int]]]:
    """(original, adjacent-swapped) pairs with non-edge swap positions.

    The swap position is drawn uniformly over interior positions whose
    two words differ; sentences with no such position are skipped.
    """
    pairs = []
    for sentence in sentences:
        s = list(sentence)
        if len(s) < 4:
            continue
        options = [i for i in range(1, len(s) - 2) if s[i] != s[i + 1]]
        if not options:
            continue
        i = options[int(rng.integers(0, len(options)))]
        swapped = s.copy()
        swapped[i], swapped[i + 1] = swapped[i + 1], swapped[i]
        pairs.append((s, swapped))
    return pairs


def fit_logistic(
    x: np.ndarray, y: np.ndarray, steps: int = 2000, lr: float = 0.5
) -> tuple[np.ndarray, float]:
    """Plain full-batch gradient descent on the logistic loss, zero init.

    Deliberately minimal and deterministic so probe scores reflect the
    embeddings rather than classifier tuning.
    """
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(steps):
        p = _sigmoid(x @ w + b)
        err = p - y
        w -= lr * (x.T @ err) / len(y)
        b -= lr * float(err.mean())
    return w, b


def _standardize(train_x: np.ndarray, test_x: np.ndarray):
    mu = train_x.mean(axis=0)
    sd = train_x.std(axis=0)
    sd[sd < 1e-12] = 1.0
    return (train_x - mu) / sd, (test_x - mu) / sd


def _probe_accuracy(
    x: np.ndarray,
    y: np.ndarray,
    groups: np.ndarray,
    rng: np.random.Generator,
    train_frac: float = 0.8,
) -> float:
    """Held-out accuracy with group-level splitting (pairs stay together)."""
    unique = np.unique(groups)
    perm = rng.permutation(len(unique))
    n_train = int(round(train_frac * len(unique)))
    train_groups = set(unique[perm[:n_train]].tolist())
    is_train = np.array([g in train_groups for g in groups])
    train_x, test_x = _standardize(x[is_train], x[~is_train])
    w, b = fit_logistic(train_x, y[is_train])
    pred = (test_x @ w + b) > 0.0
    return float(np.mean(pred == (y[~is_train] > 0.5)))


def order_probe(
    bank: ParameterBank,
    config: TrainConfig,
    sentences: Sequence[Sequence[int]],
    rng: np.random.Generator,
) -> ProbeResult:
    """Adjacent-swap detection probe.

    Builds (original, swapped) sentence pairs, embeds both members with
    the mode's sentence composition and trains the minimal logistic
    classifier on an 80/20 pair-level split to label swapped sentences.
    Compositions that are order-invariant give identical features for the
    two classes and score at chance.
    """
    if len(sentences) < 200:
        raise ValueError("order probe needs at least 200 sentences")
    pairs = build_swap_pairs(sentences, rng)
    feats = []
    labels = []
    groups = []
    for g, (original, swapped) in enumerate(pairs):
        feats.append(sentence_embedding(bank, config, original))
        labels.append(0.0)
        groups.append(g)
        feats.append(sentence_embedding(bank, config, swapped))
        labels.append(1.0)
        groups.append(g)
    acc = _probe_accuracy(np.stack(feats), np.array(labels), np.array(groups), rng)
    return ProbeResult(probe="adjacent-swap", accuracy=acc, baseline=0.5)


def length_probe(
    bank: ParameterBank,
    config: TrainConfig,
    sentences: Sequence[Sequence[int]],
    rng: np.random.Generator,
) -> ProbeResult:
    """Median-split sentence-length classification from sentence embeddings."""
    if len(sentences) < 200:
        raise ValueError("length probe needs at least 200 sentences")
    lengths = np.array([len(s) for s in sentences])
    median = float(np.median(lengths))
    feats = np.stack([sentence_embedding(bank, config, s) for s in sentences])
    labels = (lengths > median).astype(np.float64)
    if labels.min() == labels.max():
        raise ValueError("length probe needs variation in sentence length")
    groups = np.arange(len(sentences))
    acc = _probe_accuracy(feats, labels, groups, rng)
    return ProbeResult(probe="sentence-length", accuracy=acc, baseline=0.5)


@dataclass
class GrammarSpec:
    """Template grammar: category word lists plus ordered templates."""

    categories: dict[str, list[str]]
    templates: list[list[str]]
    sentences: int = 10_000
    seed: int = 0


def default_grammar() -> GrammarSpec:
    """Five categories of twenty pseudo-words with rigid templates.

    Template bigrams never include the reversals produced by swapping two
    adjacent words, so order-sensitive compositions can separate swapped
    sentences while order-invariant ones cannot.
    """
    names = ("noun", "verb", "adj", "adv", "prep")
    categories = {name: [f"{name}{i:02d}" for i in range(20)] for name in names}
    templates = [
        ["adj", "noun", "verb", "adv", "prep", "adj", "noun", "verb", "prep", "noun"],
        ["noun", "verb", "adj", "noun", "prep", "noun", "adv", "verb", "adj", "noun", "adv"],
        ["adj", "adj", "noun", "verb", "prep", "noun", "adv", "verb", "prep", "adj", "noun", "adv"],
    ]
    return GrammarSpec(categories=categories, templates=templates)


def generate_synthetic_corpus(spec: GrammarSpec) -> list[str]:
    """Seeded sampling: uniform template choice, uniform word per category."""
    for template in spec.templates:
        for cat in template:
            if cat not in spec.categories:
                raise ValueError(f"template category {cat!r} missing from the grammar")
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.sentences):
        template = spec.templates[int(rng.integers(0, len(spec.templates)))]
        words = [
            spec.categories[cat][int(rng.integers(0, len(spec.categories[cat])))]
            for cat in template
        ]
        out.append(" ".join(words))
    return out


def grammar_from_json(text: str) -> GrammarSpec:
    data = json.loads(text)
    spec = GrammarSpec(
        categories={k: list(v) for k, v in data["categories"].items()},
        templates=[list(t) for t in data["templates"]],
    )
    if "sentences" in data:
        spec.sentences = int(data["sentences"])
    if "seed" in data:
        spec.seed = int(data["seed"])
    return spec
