"""Corpus handling: vocabulary, sentence encoding, context-target examples
and the smoothed unigram table used for negative sampling.

Corpus files are plain UTF-8 text, one sentence per line, whitespace
tokenized after lowercasing. Vocabularies are immutable once built and
serialize to TSV (`token<TAB>id<TAB>count` rows preceded by `#n=<size>`).
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_LEN_BOUNDS = (1, 1_000_000)


def tokenize(line: str) -> list[str]:
    """Lowercased whitespace tokenization."""
    return line.lower().split()


def read_corpus(path: str | Path) -> Iterator[list[str]]:
    """Yield token lists for the non-blank lines of a corpus file."""
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            tokens = tokenize(line)
            if tokens:
                yield tokens


@dataclass
class Vocabulary:
    """Dense token<->id maps plus per-id counts.

    Ids are 0..n-1 assigned by descending count with lexicographic
    tie-breaking, which makes builds deterministic.
    """

    token_to_id: dict[str, int]
    id_to_token: list[str]
    counts: np.ndarray
    total_count: int
    len_bounds: tuple[int, int] = DEFAULT_LEN_BOUNDS

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id


def build_vocabulary(
    sentences: Iterable[Sequence[str]],
    min_count: int = 1,
    len_bounds: tuple[int, int] = DEFAULT_LEN_BOUNDS,
) -> Vocabulary:
    """Count tokens over in-bounds sentences and keep the frequent ones.

    Only sentences whose raw token count lies within `len_bounds` are
    counted. Tokens with corpus frequency >= min_count survive; an empty
    result is an error.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    lo, hi = len_bounds
    if lo > hi:
        raise ValueError("len_bounds must satisfy min <= max")
    tally: Counter[str] = Counter()
    for tokens in sentences:
        if lo <= len(tokens) <= hi:
            tally.update(tokens)
    kept = [(token, count) for token, count in tally.items() if count >= min_count]
    if not kept:
        raise ValueError("empty vocabulary: no token met the frequency threshold")
    kept.sort(key=lambda item: (-item[1], item[0]))
    id_to_token = [token for token, _ in kept]
    counts = np.array([count for _, count in kept], dtype=np.int64)
    return Vocabulary(
        token_to_id={token: i for i, token in enumerate(id_to_token)},
        id_to_token=id_to_token,
        counts=counts,
        total_count=int(counts.sum()),
        len_bounds=(lo, hi),
    )


def encode_sentence(vocab: Vocabulary, tokens: Sequence[str]) -> list[int] | None:
    """Map tokens to ids, dropping out-of-vocabulary tokens.

    Returns None (skip marker) when the post-drop length falls outside
    the vocabulary's length bounds.
    """
    ids = [vocab.token_to_id[t] for t in tokens if t in vocab.token_to_id]
    lo, hi = vocab.len_bounds
    if not lo <= len(ids) <= hi:
        return None
    return ids


@dataclass
class TrainingExample:
    """A (left context, right context, target) triple in sentence order."""

    left: list[int]
    right: list[int]
    target: int


def example_at(sentence: Sequence[int], t: int, m: int) -> TrainingExample | None:
    """The training example for target position t with window m per side.

    Returns None when both context sides are empty.
    """
    left = list(sentence[max(0, t - m) : t])
    right = list(sentence[t + 1 : t + 1 + m])
    if not left and not right:
        return None
    return TrainingExample(left=left, right=right, target=int(sentence[t]))


def generate_examples(
    sentence: Sequence[int],
    m: int,
    rng: np.random.Generator,
    policy: str = "with_replacement",
) -> list[TrainingExample]:
    """Draw target positions for one sentence and build their examples.

    The default policy draws len(sentence) positions uniformly with
    replacement; "without_replacement" visits every position once in a
    random order. Sentences shorter than two words produce nothing.
    """
    if m < 1:
        raise ValueError("window must be >= 1")
    n = len(sentence)
    if n < 2:
        return []
    if policy == "with_replacement":
        positions = rng.integers(0, n, size=n)
    elif policy == "without_replacement":
        positions = rng.permutation(n)
    else:
        raise ValueError(f"unknown target policy {policy!r}")
    examples = []
    for t in positions:
        ex = example_at(sentence, int(t), m)
        if ex is not None:
            examples.append(ex)
    return examples


@dataclass
class NegativeTable:
    """Alias-method sampler over the exponent-smoothed unigram distribution.

    `probs[i]` is count(i)**exponent normalized; `accept`/`alias` are the
    standard Vose tables giving O(1) draws.
    """

    probs: np.ndarray
    exponent: float
    accept: np.ndarray = field(repr=False)
    alias: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.probs)


def build_negative_table(vocab: Vocabulary, exponent: float = 0.75) -> NegativeTable:
    """Build the negative-sampling table with P(i) proportional to count(i)**exponent."""
    if exponent <= 0:
        raise ValueError("exponent must be > 0")
    weights = vocab.counts.astype(np.float64) ** exponent
    probs = weights / weights.sum()
    n = len(probs)
    accept = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    scaled = probs * n
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        accept[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] - (1.0 - scaled[s])
        if scaled[l] < 1.0:
            small.append(l)
        else:
            large.append(l)
    for i in small + large:
        accept[i] = 1.0
    return NegativeTable(probs=probs, exponent=exponent, accept=accept, alias=alias)


def sample_negatives(
    table: NegativeTable, k: int, target: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw k ids from the table, re-drawing any draw that hits `target`."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(table)
    if n == 1 and target == 0:
        raise ValueError("cannot sample negatives: the target is the only word")
    out = np.empty(k, dtype=np.int64)
    filled = 0
    for _ in range(1000):
        need = k - filled
        cells = rng.integers(0, n, size=need)
        keep = rng.random(need) < table.accept[cells]
        draws = np.where(keep, cells, table.alias[cells])
        draws = draws[draws != target]
        out[filled : filled + len(draws)] = draws
        filled += len(draws)
        if filled == k:
            return out
    raise ValueError("cannot sample negatives: resampling failed to avoid the target")


def vocabulary_tsv_bytes(vocab: Vocabulary) -> bytes:
    lines = [f"#n={len(vocab)}"]
    for i, token in enumerate(vocab.id_to_token):
        lines.append(f"{token}\t{i}\t{int(vocab.counts[i])}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def vocabulary_from_tsv_bytes(
    data: bytes, len_bounds: tuple[int, int] = DEFAULT_LEN_BOUNDS
) -> Vocabulary:
    lines = data.decode("utf-8").splitlines()
    if not lines or not lines[0].startswith("#n="):
        raise ValueError("malformed vocabulary: missing #n= header")
    n = int(lines[0][3:])
    id_to_token: list[str] = []
    counts = np.zeros(n, dtype=np.int64)
    for line in lines[1:]:
        if not line:
            continue
        token, ident, count = line.split("\t")
        if int(ident) != len(id_to_token):
            raise ValueError("malformed vocabulary: ids must be dense and sorted")
        id_to_token.append(token)
        counts[int(ident)] = int(count)
    if len(id_to_token) != n:
        raise ValueError("malformed vocabulary: row count disagrees with header")
    return Vocabulary(
        token_to_id={token: i for i, token in enumerate(id_to_token)},
        id_to_token=id_to_token,
        counts=counts,
        total_count=int(counts.sum()),
        len_bounds=len_bounds,
    )


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_bytes(vocabulary_tsv_bytes(vocab))


def load_vocabulary(
    path: str | Path, len_bounds: tuple[int, int] = DEFAULT_LEN_BOUNDS
) -> Vocabulary:
    return vocabulary_from_tsv_bytes(Path(path).read_bytes(), len_bounds)
