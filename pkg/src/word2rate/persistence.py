"""Checkpoint container, text vector export and CSV emission.

Checkpoint layout (all integers little-endian):

    bytes 0..7   magic b"W2RATE1\\n"
    u32          header length
    header:      u32 version
                 u16 mode length, mode utf-8
                 u32 embedding dimension
                 f64 epsilon
                 u64 vocabulary size
                 u32 flags (bit 0: optimizer state present)
                 u32 config length, config JSON utf-8
    u64          vocabulary block length, then the TSV vocabulary block
    parameter arrays as raw little-endian float64, in bank order
    optimizer state when flagged: u64 step, then first- and
                 second-moment arrays in the same order
    u64          checksum: first 8 bytes of SHA-256 over everything above

Shapes are implied by (mode, dimension, vocabulary size), so any byte
count disagreement is a shape error. The checksum is validated before
anything is parsed.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from word2rate.analysis import StabilityRecord, all_word_embeddings
from word2rate.config import TrainConfig, cmow_side, component_dims, is_hybrid, is_rate_mode
from word2rate.corpus import Vocabulary, vocabulary_from_tsv_bytes, vocabulary_tsv_bytes
from word2rate.trainer import AdamState, ParameterBank

MAGIC = b"W2RATE1\n"
VERSION = 1
_FLAG_ADAM = 1


class CheckpointError(Exception):
    pass


def _checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "little")


def _array_shapes(mode: str, dim: int, n: int) -> list[tuple[int, ...]]:
    if mode == "cbow":
        context: list[tuple[int, ...]] = [(n, dim)]
    elif mode == "cmow":
        side = cmow_side(dim)
        context = [(n, side, side)]
    elif is_rate_mode(mode):
        context = [(n, dim, dim)]
    elif is_hybrid(mode):
        da, db = component_dims(dim)
        context = [(n, da, da), (n, db, db)]
    else:
        raise CheckpointError(f"shape mismatch: unknown mode {mode!r}")
    return context + [(n, dim)]


def _array_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(
    bank: ParameterBank,
    state: AdamState | None,
    config: TrainConfig,
    vocab: Vocabulary,
    path: str | Path,
) -> None:
    """Write a single-file checkpoint; loading it restores the bank bitwise."""
    buf = bytearray()
    buf += MAGIC
    mode_b = bank.mode.encode("utf-8")
    config_b = json.dumps(asdict(config), sort_keys=True).encode("utf-8")
    header = struct.pack("<IH", VERSION, len(mode_b)) + mode_b
    header += struct.pack("<Id", bank.dim, config.epsilon)
    header += struct.pack("<QI", len(vocab), _FLAG_ADAM if state is not None else 0)
    header += struct.pack("<I", len(config_b)) + config_b
    buf += struct.pack("<I", len(header)) + header
    vocab_b = vocabulary_tsv_bytes(vocab)
    buf += struct.pack("<Q", len(vocab_b)) + vocab_b
    for arr in bank.param_arrays():
        buf += _array_bytes(arr)
    if state is not None:
        buf += struct.pack("<Q", state.step)
        for arr in state.m:
            buf += _array_bytes(arr)
        for arr in state.v:
            buf += _array_bytes(arr)
    buf += struct.pack("<Q", _checksum(bytes(buf)))
    try:
        Path(path).write_bytes(bytes(buf))
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.offset = offset

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.data):
            raise CheckpointError("shape mismatch: checkpoint ends early")
        chunk = self.data[self.offset : self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        raw = self.take(count * 8)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def load_checkpoint(
    path: str | Path,
) -> tuple[ParameterBank, AdamState | None, TrainConfig, Vocabulary]:
    """Inverse of save_checkpoint; the checksum is verified up front."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"not a checkpoint: {path}")
    if len(data) < len(MAGIC) + 8:
        raise CheckpointError(f"checksum mismatch: {path}")
    body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
    if _checksum(body) != stored:
        raise CheckpointError(f"checksum mismatch: {path}")

    reader = _Reader(body, len(MAGIC))
    (header_len,) = reader.unpack("<I")
    header_end = reader.offset + header_len
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"version mismatch: file has {version}, expected {VERSION}")
    (mode_len,) = reader.unpack("<H")
    mode = reader.take(mode_len).decode("utf-8")
    dim, _epsilon = reader.unpack("<Id")
    n, flags = reader.unpack("<QI")
    (config_len,) = reader.unpack("<I")
    config = TrainConfig(**json.loads(reader.take(config_len).decode("utf-8")))
    if reader.offset != header_end:
        raise CheckpointError("shape mismatch: header length disagrees with contents")

    (vocab_len,) = reader.unpack("<Q")
    vocab = vocabulary_from_tsv_bytes(reader.take(vocab_len), config.len_bounds)
    if len(vocab) != n:
        raise CheckpointError("shape mismatch: vocabulary size disagrees with header")

    shapes = _array_shapes(mode, int(dim), int(n))
    arrays = [reader.array(shape) for shape in shapes]
    bank = ParameterBank(
        mode=mode,
        dim=int(dim),
        context_a=arrays[0],
        targets=arrays[-1],
        context_b=arrays[1] if len(arrays) == 3 else None,
    )
    state = None
    if flags & _FLAG_ADAM:
        (step,) = reader.unpack("<Q")
        m = [reader.array(shape) for shape in shapes]
        v = [reader.array(shape) for shape in shapes]
        state = AdamState(m=m, v=v, step=int(step))
    if reader.offset != len(body):
        raise CheckpointError("shape mismatch: trailing bytes after parameter arrays")
    return bank, state, config, vocab


def export_text_vectors(
    bank: ParameterBank,
    config: TrainConfig,
    vocab: Vocabulary,
    path: str | Path,
    which: str = "word",
) -> None:
    """Classic text format: `<n> <d>` header then `token v1 .. vd` rows.

    `word` exports the mode's one-word compositions, `target` the target
    vectors. Values are printed with 9 significant digits, ordered by id.
    """
    if which == "word":
        matrix = all_word_embeddings(bank, config)
    elif which == "target":
        matrix = bank.targets
    else:
        raise ValueError(f"unknown export kind {which!r}, expected 'word' or 'target'")
    lines = [f"{bank.n} {matrix.shape[1]}"]
    for i, token in enumerate(vocab.id_to_token):
        values = " ".join(f"{x:.9g}" for x in matrix[i])
        lines.append(f"{token} {values}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_text_vectors(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Parse the text vector format back into (tokens, matrix)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    n, d = (int(x) for x in lines[0].split())
    tokens = []
    matrix = np.zeros((n, d))
    for row, line in enumerate(lines[1 : n + 1]):
        parts = line.split(" ")
        tokens.append(parts[0])
        matrix[row] = [float(x) for x in parts[1:]]
    return tokens, matrix


def write_stability_csv(records: Sequence[StabilityRecord], out: IO[str]) -> None:
    """`epsilon,length,seed,mean_abs` rows with 17-significant-digit floats."""
    out.write("epsilon,length,seed,mean_abs\n")
    for rec in records:
        out.write(f"{rec.epsilon:.17g},{rec.length},{rec.seed},{rec.mean_abs:.17g}\n")
