"""Command-line interface tying the pipeline together.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from word2rate import analysis, persistence
from word2rate.config import MODES, TrainConfig
from word2rate.corpus import build_vocabulary, encode_sentence, read_corpus, save_vocabulary
from word2rate.trainer import gradient_check, train


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; this CLI reserves 2 for
    # runtime errors and reports usage problems with exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_train_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--mode", choices=MODES, default="fos", help="composition mode")
    sub.add_argument("--dim", type=int, default=25, help="embedding dimension")
    sub.add_argument(
        "--epsilon",
        type=float,
        default=None,
        help="series step size (default: per-mode value)",
    )
    sub.add_argument("--window", type=int, default=4, help="context words per side")
    sub.add_argument("--negatives", type=int, default=5, help="negative samples per example")
    sub.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    sub.add_argument("--batch", type=int, default=1000, help="examples per optimizer step")
    sub.add_argument("--epochs", type=int, default=10, help="training epochs")
    sub.add_argument(
        "--lr-split",
        action="store_true",
        help="train left and right contexts as separate objective terms",
    )
    sub.add_argument("--seed", type=int, default=0, help="run seed")
    sub.add_argument(
        "--neg-exponent", type=float, default=0.75, help="unigram smoothing exponent"
    )
    sub.add_argument("--min-count", type=int, default=1, help="vocabulary frequency threshold")
    sub.add_argument("--min-len", type=int, default=1, help="minimum sentence length")
    sub.add_argument("--max-len", type=int, default=1_000_000, help="maximum sentence length")
    sub.add_argument(
        "--target-policy",
        choices=("with_replacement", "without_replacement"),
        default="with_replacement",
        help="how target positions are drawn per sentence",
    )


def _config_from_args(args) -> TrainConfig:
    return TrainConfig(
        mode=args.mode,
        dim=args.dim,
        epsilon=args.epsilon,
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        window=args.window,
        negatives=args.negatives,
        lr_split=args.lr_split,
        seed=args.seed,
        neg_exponent=args.neg_exponent,
        min_count=args.min_count,
        min_len=args.min_len,
        max_len=args.max_len,
        target_policy=args.target_policy,
    )


def _cmd_build_vocab(args) -> int:
    vocab = build_vocabulary(
        read_corpus(args.corpus), args.min_count, (args.min_len, args.max_len)
    )
    save_vocabulary(vocab, args.output)
    print(f"wrote {len(vocab)} tokens to {args.output}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    result = train(read_corpus(args.corpus), config, threads=args.threads)
    state = result.state if args.save_adam else None
    persistence.save_checkpoint(result.bank, state, config, result.vocab, args.output)
    print(f"wrote checkpoint {args.output}", file=sys.stderr)
    return 0


def _cmd_export(args) -> int:
    bank, _state, config, vocab = persistence.load_checkpoint(args.checkpoint)
    persistence.export_text_vectors(bank, config, vocab, args.output, args.which)
    print(f"wrote {len(vocab)} vectors to {args.output}", file=sys.stderr)
    return 0


def _cmd_neighbors(args) -> int:
    bank, _state, config, vocab = persistence.load_checkpoint(args.checkpoint)
    if args.word not in vocab.token_to_id:
        raise ValueError(f"unknown word {args.word!r}")
    hits = analysis.nearest_neighbors(
        bank, config, vocab.token_to_id[args.word], args.top_k
    )
    for word_id, cosine in hits:
        print(f"{vocab.id_to_token[word_id]}\t{cosine:.6f}")
    return 0


def _cmd_stability(args) -> int:
    epsilons = [float(x) for x in args.epsilons.split(",") if x]
    seeds = [args.seed + i for i in range(args.seeds)]
    records = analysis.stability_curve(args.dim, epsilons, args.max_len, seeds)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            persistence.write_stability_csv(records, handle)
    else:
        persistence.write_stability_csv(records, sys.stdout)
    return 0


def _cmd_probe(args) -> int:
    bank, _state, config, vocab = persistence.load_checkpoint(args.checkpoint)
    sentences = [
        encoded
        for encoded in (encode_sentence(vocab, s) for s in read_corpus(args.corpus))
        if encoded
    ]
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 29]))
    if args.probe == "order":
        result = analysis.order_probe(bank, config, sentences, rng)
    else:
        result = analysis.length_probe(bank, config, sentences, rng)
    print(analysis.format_probe_line(result, config.mode))
    return 0


def _cmd_synth(args) -> int:
    if args.grammar:
        spec = analysis.grammar_from_json(Path(args.grammar).read_text(encoding="utf-8"))
    else:
        spec = analysis.default_grammar()
    spec = dataclasses.replace(spec, sentences=args.sentences, seed=args.seed)
    sentences = analysis.generate_synthetic_corpus(spec)
    Path(args.output).write_text("\n".join(sentences) + "\n", encoding="utf-8")
    print(f"wrote {len(sentences)} sentences to {args.output}", file=sys.stderr)
    return 0


def _cmd_gradcheck(args) -> int:
    base = TrainConfig(
        mode=args.mode,
        dim=args.dim,
        window=args.window,
        negatives=args.negatives,
        seed=args.seed,
    )
    all_ok = True
    for split in (False, True):
        config = dataclasses.replace(base, lr_split=split)
        result = gradient_check(config, instances=args.instances, seed=args.seed)
        status = "PASS" if result.passed else "FAIL"
        print(
            f"mode={result.mode} objective={result.objective} "
            f"max_rel_err={result.max_rel_err:.3e} {status}"
        )
        all_ok = all_ok and result.passed
    return 0 if all_ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="word2rate",
        description="Train and analyze rate-matrix word embeddings.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def sub(name, help_text):
        return subs.add_parser(
            name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )

    s = sub("build-vocab", "build a vocabulary TSV from a corpus")
    s.add_argument("corpus", help="plain-text corpus, one sentence per line")
    s.add_argument("--output", default="vocab.tsv", help="vocabulary TSV path")
    s.add_argument("--min-count", type=int, default=1, help="frequency threshold")
    s.add_argument("--min-len", type=int, default=1, help="minimum sentence length")
    s.add_argument("--max-len", type=int, default=1_000_000, help="maximum sentence length")
    s.set_defaults(func=_cmd_build_vocab)

    s = sub("train", "train embeddings and write a checkpoint")
    s.add_argument("corpus", help="plain-text corpus, one sentence per line")
    s.add_argument("--output", default="model.w2rate", help="checkpoint path")
    s.add_argument("--threads", type=int, default=1, help="worker threads (1 = reference)")
    s.add_argument("--save-adam", action="store_true", help="store optimizer state")
    _add_train_flags(s)
    s.set_defaults(func=_cmd_train)

    s = sub("export", "export word vectors in the classic text format")
    s.add_argument("checkpoint")
    s.add_argument("--output", default="vectors.txt", help="text vectors path")
    s.add_argument(
        "--which", choices=("word", "target"), default="word", help="which vectors to export"
    )
    s.set_defaults(func=_cmd_export)

    s = sub("neighbors", "print nearest neighbors of a word by cosine")
    s.add_argument("checkpoint")
    s.add_argument("word")
    s.add_argument("--top-k", type=int, default=10, help="neighbors to print")
    s.set_defaults(func=_cmd_neighbors)

    s = sub("stability", "emit the step-size stability sweep as CSV")
    s.add_argument("--dim", type=int, default=25, help="matrix dimension")
    s.add_argument(
        "--epsilons", default="0.01,0.001,0.0001", help="comma-separated step sizes"
    )
    s.add_argument("--max-len", type=int, default=20, help="longest product length")
    s.add_argument("--seeds", type=int, default=10, help="number of seeds")
    s.add_argument("--seed", type=int, default=0, help="base seed")
    s.add_argument("--output", default=None, help="CSV path (default: stdout)")
    s.set_defaults(func=_cmd_stability)

    s = sub("probe", "run a probe on a checkpoint against a probe corpus")
    s.add_argument("checkpoint")
    s.add_argument("corpus", help="probe corpus, one sentence per line")
    s.add_argument("--probe", choices=("order", "length"), default="order", help="probe kind")
    s.add_argument("--seed", type=int, default=0, help="probe seed")
    s.set_defaults(func=_cmd_probe)

    s = sub("synth", "generate a synthetic-grammar corpus")
    s.add_argument("--output", default="synth.txt", help="corpus path")
    s.add_argument("--sentences", type=int, default=10_000, help="sentences to generate")
    s.add_argument("--seed", type=int, default=0, help="generator seed")
    s.add_argument("--grammar", default=None, help="grammar JSON path (default grammar if omitted)")
    s.set_defaults(func=_cmd_synth)

    s = sub("gradcheck", "verify analytic gradients against finite differences")
    s.add_argument("--mode", choices=MODES, default="fos", help="composition mode")
    s.add_argument("--dim", type=int, default=5, help="embedding dimension")
    s.add_argument("--window", type=int, default=2, help="context words per side")
    s.add_argument("--negatives", type=int, default=3, help="negative samples")
    s.add_argument("--instances", type=int, default=20, help="random instances per objective")
    s.add_argument("--seed", type=int, default=0, help="instance seed")
    s.set_defaults(func=_cmd_gradcheck)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args) or 0)
    except (ValueError, OSError, RuntimeError, persistence.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
