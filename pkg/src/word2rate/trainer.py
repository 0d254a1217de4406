"""Negative-sampling training for every composition mode.

The objective for a context embedding v_c, target embedding v_t and k
negative embeddings v_ns is the negated log-likelihood

    loss = -log sigma(v_t . v_c) - sum_i log sigma(-v_ns_i . v_c)

optionally doubled into separate left and right context terms that share
the target and the negative draws. Gradients are analytic for every
mode; the product modes backpropagate through their partial products and
the second-order series through both its linear and bilinear terms.
Every optimizer step is followed by projection of rate-mode context
matrices back onto the rate-matrix constraint set.

Determinism contract: example generation, shuffling and negative draws
are seeded per (run seed, epoch, index), and per-example gradient
contributions are reduced in example order, so the same run configuration
yields bitwise-identical parameters at any worker-thread count.
"""

from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from word2rate.config import (
    TrainConfig,
    cmow_side,
    component_dims,
    hybrid_components,
    is_hybrid,
    is_rate_mode,
)
from word2rate.corpus import (
    NegativeTable,
    TrainingExample,
    Vocabulary,
    build_negative_table,
    build_vocabulary,
    encode_sentence,
    generate_examples,
    sample_negatives,
)
from word2rate.rate_algebra import (
    compose_cbow,
    compose_cmow,
    compose_fos,
    compose_fop,
    compose_sos,
    is_valid_rate_matrix,
    project_rate_matrices,
    random_rate_matrices,
)

# salts for per-purpose seed derivation
_SALT_INIT = 0
_SALT_EXAMPLES = 1
_SALT_SHUFFLE = 2
_SALT_NEGATIVES = 3


class TrainingError(RuntimeError):
    pass


@dataclass
class ParameterBank:
    """Trainable parameters: per-word context structures plus target vectors.

    `context_a` holds rate matrices (n, d, d) for the series modes,
    vectors (n, d) for cbow or square matrices (n, s, s) for cmow.
    Hybrid modes add a second rate-matrix stack in `context_b`.
    `targets` is always (n, dim).
    """

    mode: str
    dim: int
    context_a: np.ndarray
    targets: np.ndarray
    context_b: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.targets.shape[0]

    def param_arrays(self) -> list[np.ndarray]:
        arrays = [self.context_a]
        if self.context_b is not None:
            arrays.append(self.context_b)
        arrays.append(self.targets)
        return arrays

    def copy(self) -> "ParameterBank":
        return ParameterBank(
            mode=self.mode,
            dim=self.dim,
            context_a=self.context_a.copy(),
            targets=self.targets.copy(),
            context_b=None if self.context_b is None else self.context_b.copy(),
        )


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the parameter bank."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, bank: ParameterBank) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in bank.param_arrays()],
            v=[np.zeros_like(a) for a in bank.param_arrays()],
        )


@dataclass
class LossReport:
    epoch_mean_loss: list[float] = field(default_factory=list)
    epoch_examples: list[int] = field(default_factory=list)


@dataclass
class TrainResult:
    bank: ParameterBank
    report: LossReport
    vocab: Vocabulary
    state: "AdamState | None" = None


def _components(config: TrainConfig) -> list[tuple[str, int, int, np.ndarray]]:
    """(kind, slot, component_dim, uniform vector) descriptors of the context side."""
    if is_hybrid(config.mode):
        kinds = hybrid_components(config.mode)
        dims = component_dims(config.dim)
        return [
            (kinds[0], 0, dims[0], np.full(dims[0], 1.0 / dims[0])),
            (kinds[1], 1, dims[1], np.full(dims[1], 1.0 / dims[1])),
        ]
    d = config.dim
    return [(config.mode, 0, d, np.full(d, 1.0 / d))]


def _init_bank(
    config: TrainConfig,
    n: int,
    rng: np.random.Generator,
    vector_scale: float = 0.01,
    cmow_noise: float | None = None,
) -> ParameterBank:
    d = config.dim
    context_b = None
    if config.mode == "cbow":
        context_a = rng.normal(0.0, vector_scale, size=(n, d))
    elif config.mode == "cmow":
        side = cmow_side(d)
        noise = 0.1 / d if cmow_noise is None else cmow_noise
        context_a = np.broadcast_to(np.eye(side), (n, side, side)).copy()
        if noise:
            context_a += rng.normal(0.0, noise, size=(n, side, side))
    elif is_rate_mode(config.mode):
        context_a = random_rate_matrices(n, d, rng)
    else:
        da, db = component_dims(d)
        context_a = random_rate_matrices(n, da, rng)
        context_b = random_rate_matrices(n, db, rng)
    targets = rng.normal(0.0, vector_scale, size=(n, d))
    return ParameterBank(
        mode=config.mode, dim=d, context_a=context_a, targets=targets, context_b=context_b
    )


def init_parameters(
    config: TrainConfig,
    vocab: Vocabulary,
    rng: np.random.Generator,
    vector_scale: float = 0.01,
    cmow_noise: float | None = None,
) -> ParameterBank:
    """Fresh parameters for a vocabulary.

    Rate-mode context matrices start as small random valid rate matrices,
    cmow matrices as identity plus noise, and all vectors as
    Normal(0, vector_scale).
    """
    return _init_bank(config, len(vocab), rng, vector_scale, cmow_noise)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # the clip keeps exp in range; sigma saturates beyond +-60 anyway
    z = np.clip(np.asarray(x, dtype=np.float64), -60.0, 60.0)
    return 1.0 / (1.0 + np.exp(-z))


def _sigmoid_scalar(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-min(x, 700.0)))
    e = math.exp(max(x, -700.0))
    return e / (1.0 + e)


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    # equals -log1p(exp(-x)) for x >= 0 and x - log1p(exp(x)) otherwise
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def _neg_log_sigmoid_scalar(x: float) -> float:
    if x >= 0.0:
        return math.log1p(math.exp(-min(x, 700.0)))
    return -x + math.log1p(math.exp(max(x, -700.0)))


def negative_sampling_loss(
    v_c: np.ndarray, v_t: np.ndarray, negs: Sequence[np.ndarray] | np.ndarray
) -> float:
    """Negated objective value for one (context, target, negatives) triple."""
    negs = np.asarray(negs, dtype=np.float64)
    s_t = float(np.dot(v_t, v_c))
    s_n = negs @ v_c if len(negs) else np.zeros(0)
    return float(-_log_sigmoid(s_t) - _log_sigmoid(-s_n).sum())


def split_loss(
    v_cl: np.ndarray | None,
    v_cr: np.ndarray | None,
    v_t: np.ndarray,
    negs: Sequence[np.ndarray] | np.ndarray,
) -> float:
    """Sum of the per-side losses; an absent side (None) contributes zero."""
    if v_cl is None and v_cr is None:
        raise ValueError("split loss needs at least one context side")
    total = 0.0
    if v_cl is not None:
        total += negative_sampling_loss(v_cl, v_t, negs)
    if v_cr is not None:
        total += negative_sampling_loss(v_cr, v_t, negs)
    return total


def _forward_component(
    kind: str, params: np.ndarray, ids: Sequence[int], eps: float, cdim: int, p: np.ndarray
):
    """Compose one context component; returns (vector, cache for backward)."""
    if kind == "cbow":
        return compose_cbow([params[i] for i in ids], dim=cdim), None
    if kind == "cmow":
        side = params.shape[1]
        prefixes = [np.eye(side)]
        for i in ids:
            prefixes.append(params[i] @ prefixes[-1])
        return prefixes[-1].reshape(-1), prefixes
    qs = [params[i] for i in ids]
    if kind == "fos":
        return compose_fos(qs, eps, p), None
    if kind == "fop":
        partials = [p]
        v = p
        for q in qs:
            v = v + eps * (q @ v)
            partials.append(v)
        return v, partials
    if kind == "sos":
        return compose_sos(qs, eps, p), None
    raise ValueError(f"unknown composition kind {kind!r}")


def _backward_component(
    kind: str,
    params: np.ndarray,
    ids: Sequence[int],
    eps: float,
    cdim: int,
    p: np.ndarray,
    g: np.ndarray,
    cache,
) -> list[tuple[int, np.ndarray]]:
    """Per-word gradients of a scalar loss with upstream gradient g.

    Duplicated ids contribute one entry per occurrence; the caller
    accumulates them into shared parameters.
    """
    if kind == "cbow":
        return [(i, g) for i in ids]
    if kind == "cmow":
        prefixes = cache
        side = params.shape[1]
        gm = g.reshape(side, side)
        suffix = np.eye(side)
        grads: list[tuple[int, np.ndarray]] = [None] * len(ids)  # type: ignore[list-item]
        for j in range(len(ids) - 1, -1, -1):
            grads[j] = (ids[j], suffix.T @ gm @ prefixes[j].T)
            suffix = suffix @ params[ids[j]]
        return grads
    if kind == "fos":
        shared = (eps * g)[:, None] * p
        return [(i, shared) for i in ids]
    if kind == "fop":
        partials = cache
        b = g
        grads = [None] * len(ids)  # type: ignore[list-item]
        for j in range(len(ids) - 1, -1, -1):
            grads[j] = (ids[j], (eps * b)[:, None] * partials[j])
            b = b + eps * (params[ids[j]].T @ b)
        return grads
    if kind == "sos":
        qs = [params[i] for i in ids]
        us = [q @ p for q in qs]
        qtg = [q.T @ g for q in qs]
        e2 = eps * eps
        grads = []
        suffix = np.zeros(cdim)  # sum of Q_i^T g over positions after j
        prefix_us = np.cumsum([np.zeros(cdim)] + us[:-1], axis=0) if us else []
        for j in range(len(ids) - 1, -1, -1):
            left = eps * g + e2 * suffix + (0.5 * e2) * qtg[j]
            right = e2 * prefix_us[j] + (0.5 * e2) * us[j]
            grads.append((ids[j], left[:, None] * p + g[:, None] * right))
            suffix = suffix + qtg[j]
        grads.reverse()
        return grads
    raise ValueError(f"unknown composition kind {kind!r}")


def _compose_ids(bank: ParameterBank, config: TrainConfig, ids: Sequence[int], comps=None):
    """Full context embedding with per-component caches."""
    if comps is None:
        comps = _components(config)
    arrays = bank.param_arrays()
    if len(comps) == 1:
        kind, slot, cdim, p = comps[0]
        v, cache = _forward_component(kind, arrays[slot], ids, config.epsilon, cdim, p)
        return v, [cache]
    parts = []
    caches = []
    for kind, slot, cdim, p in comps:
        v, cache = _forward_component(kind, arrays[slot], ids, config.epsilon, cdim, p)
        parts.append(v)
        caches.append(cache)
    return np.concatenate(parts), caches


def forward(example: TrainingExample, bank: ParameterBank, config: TrainConfig):
    """Context embedding(s) for one example.

    Without the split this is one vector composed from left then right in
    sentence order; with the split it is a (left, right) pair where an
    empty side is None.
    """
    if config.lr_split:
        v_l = _compose_ids(bank, config, example.left)[0] if example.left else None
        v_r = _compose_ids(bank, config, example.right)[0] if example.right else None
        return v_l, v_r
    return _compose_ids(bank, config, example.left + example.right)[0]


def _example_eval(
    bank: ParameterBank,
    config: TrainConfig,
    example: TrainingExample,
    neg_ids: np.ndarray,
    want_grads: bool,
    comps=None,
):
    """Loss and sparse gradient triples (slot, word id, gradient array)."""
    if comps is None:
        comps = _components(config)
    arrays = bank.param_arrays()
    targets_slot = len(arrays) - 1
    eps = config.epsilon
    v_t = bank.targets[example.target]
    negs = bank.targets[neg_ids]
    if config.lr_split:
        sides = [ids for ids in (example.left, example.right) if ids]
    else:
        sides = [example.left + example.right]
    loss = 0.0
    sparse: list[tuple[int, int, np.ndarray]] = []
    for ids in sides:
        v_c, caches = _compose_ids(bank, config, ids, comps)
        s_t = float(v_t @ v_c)
        s_n = negs @ v_c
        loss += _neg_log_sigmoid_scalar(s_t) + float(np.logaddexp(0.0, s_n).sum())
        if not want_grads:
            continue
        a_t = _sigmoid_scalar(s_t) - 1.0
        a_n = _sigmoid(s_n)
        g_c = a_t * v_t + negs.T @ a_n
        offset = 0
        for (kind, slot, cdim, p), cache in zip(comps, caches):
            g_part = g_c[offset : offset + cdim]
            offset += cdim
            for wid, grad in _backward_component(
                kind, arrays[slot], ids, eps, cdim, p, g_part, cache
            ):
                sparse.append((slot, wid, grad))
        sparse.append((targets_slot, example.target, a_t * v_c))
        for j, nid in enumerate(neg_ids):
            sparse.append((targets_slot, int(nid), a_n[j] * v_c))
    return loss, sparse


def example_loss(
    example: TrainingExample,
    neg_ids: np.ndarray,
    bank: ParameterBank,
    config: TrainConfig,
) -> float:
    """Pure loss of one example under fixed negative draws."""
    return _example_eval(bank, config, example, neg_ids, want_grads=False)[0]


def loss_and_gradients(
    batch: Sequence[TrainingExample],
    bank: ParameterBank,
    table: NegativeTable,
    config: TrainConfig,
    rng: np.random.Generator,
    threads: int = 1,
) -> tuple[float, list[np.ndarray]]:
    """Mean loss over a batch and dense gradients of the mean.

    Negative ids are drawn sequentially up front so the draw sequence is
    independent of the worker count; per-example contributions are then
    reduced in example order, keeping the result bitwise deterministic.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    neg_sets = [
        sample_negatives(table, config.negatives, ex.target, rng) for ex in batch
    ]
    comps = _components(config)

    def work(i: int):
        return _example_eval(bank, config, batch[i], neg_sets[i], True, comps)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(batch)), chunksize=64))
    else:
        results = [work(i) for i in range(len(batch))]

    grads = [np.zeros_like(a) for a in bank.param_arrays()]
    losses = []
    for i, (loss, sparse) in enumerate(results):
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at example index {i}")
        losses.append(loss)
        for slot, wid, grad in sparse:
            grads[slot][wid] += grad
    scale = 1.0 / len(batch)
    for g in grads:
        g *= scale
    return math.fsum(losses) * scale, grads


def apply_constraints(bank: ParameterBank, config: TrainConfig) -> ParameterBank:
    """Project rate-mode context matrices; other parameters pass through."""
    if is_rate_mode(config.mode):
        bank.context_a[:] = project_rate_matrices(bank.context_a)
    elif is_hybrid(config.mode):
        bank.context_a[:] = project_rate_matrices(bank.context_a)
        bank.context_b[:] = project_rate_matrices(bank.context_b)
    return bank


def adam_step(
    bank: ParameterBank,
    grads: Sequence[np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[ParameterBank, AdamState]:
    """One bias-corrected Adam update followed by constraint projection."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr = config.learning_rate
    for arr, g, m, v in zip(bank.param_arrays(), grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        arr -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    apply_constraints(bank, config)
    return bank, state


def _rate_contexts_valid(bank: ParameterBank, config: TrainConfig) -> bool:
    if is_rate_mode(config.mode):
        return is_valid_rate_matrix(bank.context_a)
    if is_hybrid(config.mode):
        return is_valid_rate_matrix(bank.context_a) and is_valid_rate_matrix(
            bank.context_b
        )
    return True


def _epoch_examples(
    encoded: Sequence[Sequence[int]], config: TrainConfig, epoch: int
) -> list[TrainingExample]:
    examples: list[TrainingExample] = []
    for idx, sentence in enumerate(encoded):
        rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, _SALT_EXAMPLES, epoch, idx])
        )
        examples.extend(
            generate_examples(sentence, config.window, rng, config.target_policy)
        )
    return examples


def train(
    sentences: Iterable[Sequence[str]],
    config: TrainConfig,
    *,
    threads: int = 1,
    log: bool = True,
) -> TrainResult:
    """Full pipeline: vocabulary, per-epoch example regeneration, Adam.

    Examples are regenerated every epoch with epoch-derived seeds and
    shuffled before batching; every step ends in a constraint projection.
    Emits `epoch=<e> loss=<mean> examples=<count>` lines to stderr.
    """
    sentences = [list(s) for s in sentences]
    vocab = build_vocabulary(sentences, config.min_count, config.len_bounds)
    encoded = [e for e in (encode_sentence(vocab, s) for s in sentences) if e is not None]
    table = build_negative_table(vocab, config.neg_exponent)
    bank = init_parameters(
        config, vocab, np.random.default_rng(np.random.SeedSequence([config.seed, _SALT_INIT]))
    )
    state = AdamState.zeros_like(bank)
    report = LossReport()
    for epoch in range(1, config.epochs + 1):
        examples = _epoch_examples(encoded, config, epoch)
        if not examples:
            raise TrainingError("no training examples: corpus too short for the window")
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed, _SALT_SHUFFLE, epoch])
        ).permutation(len(examples))
        total = 0.0
        for batch_idx, lo in enumerate(range(0, len(examples), config.batch_size)):
            batch = [examples[i] for i in order[lo : lo + config.batch_size]]
            rng = np.random.default_rng(
                np.random.SeedSequence([config.seed, _SALT_NEGATIVES, epoch, batch_idx])
            )
            loss, grads = loss_and_gradients(batch, bank, table, config, rng, threads)
            adam_step(bank, grads, state, config)
            assert _rate_contexts_valid(bank, config)
            total += loss * len(batch)
        mean = total / len(examples)
        report.epoch_mean_loss.append(mean)
        report.epoch_examples.append(len(examples))
        if log:
            print(f"epoch={epoch} loss={mean:.6f} examples={len(examples)}", file=sys.stderr)
    return TrainResult(bank=bank, report=report, vocab=vocab, state=state)


@dataclass
class GradCheckResult:
    mode: str
    objective: str
    max_rel_err: float
    passed: bool


# Central differences at step h resolve gradients down to roughly
# |loss| * 2^-52 / h; disagreements below a few times that resolution
# are round-off, not analytic error, and are treated as agreeing.
FD_STEP = 1e-6
FD_NOISE_SAFETY = 4.0
FD_ABS_FLOOR = 5e-10


def gradient_check(
    config: TrainConfig,
    *,
    instances: int = 20,
    vocab_size: int = 12,
    seed: int = 0,
    rel_tol: float = 1e-4,
) -> GradCheckResult:
    """Compare analytic gradients against central finite differences.

    Randomizes a small bank and one example per instance, fixes the
    negative draws, and perturbs every touched parameter coordinate.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    objective = "split" if config.lr_split else "standard"
    worst = 0.0
    for _ in range(instances):
        # larger-than-training init keeps gradients above the difference
        # quotient's round-off resolution
        bank = _init_bank(config, vocab_size, rng, vector_scale=0.1)
        n_left = int(rng.integers(0, config.window + 1))
        n_right = int(rng.integers(0, config.window + 1))
        if n_left == 0 and n_right == 0:
            n_left = 1
        example = TrainingExample(
            left=[int(i) for i in rng.integers(0, vocab_size, size=n_left)],
            right=[int(i) for i in rng.integers(0, vocab_size, size=n_right)],
            target=int(rng.integers(0, vocab_size)),
        )
        neg_ids = []
        while len(neg_ids) < config.negatives:
            cand = int(rng.integers(0, vocab_size))
            if cand != example.target:
                neg_ids.append(cand)
        neg_ids = np.array(neg_ids)

        _, sparse = _example_eval(bank, config, example, neg_ids, want_grads=True)
        analytic: dict[tuple[int, int], np.ndarray] = {}
        for slot, wid, grad in sparse:
            key = (slot, wid)
            analytic[key] = analytic.get(key, 0.0) + grad

        arrays = bank.param_arrays()
        for (slot, wid), grad in analytic.items():
            param = arrays[slot][wid]
            flat_grad = np.asarray(grad).reshape(-1)
            flat_param = param.reshape(-1)
            for c in range(flat_param.shape[0]):
                orig = flat_param[c]
                flat_param[c] = orig + FD_STEP
                up = example_loss(example, neg_ids, bank, config)
                flat_param[c] = orig - FD_STEP
                down = example_loss(example, neg_ids, bank, config)
                flat_param[c] = orig
                numeric = (up - down) / (2.0 * FD_STEP)
                diff = abs(flat_grad[c] - numeric)
                noise = (abs(up) + abs(down)) * np.finfo(np.float64).eps / (2.0 * FD_STEP)
                if diff <= max(FD_ABS_FLOOR, FD_NOISE_SAFETY * noise):
                    continue
                rel = diff / max(abs(flat_grad[c]), abs(numeric))
                worst = max(worst, rel)
    return GradCheckResult(
        mode=config.mode, objective=objective, max_rel_err=worst, passed=worst < rel_tol
    )
