"""
Binary checkpoint container.

Layout (all integers little-endian)::

    b"DFD1" | u32 version | u64 header length | JSON header | float64 blocks

The header is compact JSON with sorted keys. It declares the endianness,
the vocabulary, the world spec, the config hash, the RNG stream identity,
free-form metadata and a table of named blocks (shape, offset, count).
Blocks are stored as ``<f8`` in name order, so saving a loaded checkpoint
reproduces the file byte for byte.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from core.exceptions import CheckpointError
from core.numerics import FloatArray
from core.rng import RngStream
from learners.classifier import ClassifierModel
from learners.language_models import CountLM, NeuralLM

MAGIC = b"DFD1"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_BLOCK_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    """
    Contents of one checkpoint file.

    Attributes
    ----------
    vocab : tuple[str, ...]
        Token strings by id.
    world : dict[str, Any] | None
        World spec as a dict.
    config_hash : str
        Hash of the resolved experiment config.
    rng : dict[str, Any] | None
        Stream identity the artifact was produced under.
    meta : dict[str, Any]
        Scalars needed to rebuild models (orders, windows, metrics).
    blocks : dict[str, FloatArray]
        Named float64 parameter arrays.
    """

    vocab: tuple[str, ...]
    world: dict[str, Any] | None = None
    config_hash: str = ""
    rng: dict[str, Any] | None = None
    meta: dict[str, Any] = field(default_factory=dict)
    blocks: dict[str, FloatArray] = field(default_factory=dict)

    @property
    def stream(self) -> RngStream | None:
        return RngStream.from_dict(self.rng) if self.rng is not None else None


def _canonical(value: Any) -> bytes:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def dump_checkpoint(checkpoint: Checkpoint) -> bytes:
    """Serialize ``checkpoint`` to bytes."""
    table = []
    payload = []
    offset = 0
    for name in sorted(checkpoint.blocks):
        array = np.ascontiguousarray(checkpoint.blocks[name], dtype=_BLOCK_DTYPE)
        table.append({"count": int(array.size), "name": name, "offset": offset, "shape": list(array.shape)})
        payload.append(array.tobytes())
        offset += array.size
    header = _canonical(
        {
            "blocks": table,
            "config_hash": checkpoint.config_hash,
            "endianness": "little",
            "meta": checkpoint.meta,
            "rng": checkpoint.rng,
            "version": VERSION,
            "vocab": list(checkpoint.vocab),
            "world": checkpoint.world,
        }
    )
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(payload)


def parse_checkpoint(data: bytes) -> Checkpoint:
    """
    Deserialize checkpoint bytes.

    Raises
    ------
    CheckpointError
        On bad magic, unsupported version, or a truncated or malformed file.
    """
    if len(data) < _PREFIX.size:
        raise CheckpointError("checkpoint is truncated")
    magic, version, header_length = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic bytes {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    start = _PREFIX.size
    try:
        header = json.loads(data[start : start + header_length])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("malformed checkpoint header") from exc
    if header.get("endianness") != "little" or header.get("version") != VERSION:
        raise CheckpointError("checkpoint header disagrees with its prefix")
    body = memoryview(data)[start + header_length :]
    blocks: dict[str, FloatArray] = {}
    for entry in header["blocks"]:
        begin = entry["offset"] * _BLOCK_DTYPE.itemsize
        end = begin + entry["count"] * _BLOCK_DTYPE.itemsize
        if end > len(body):
            raise CheckpointError(f"block {entry['name']} is truncated")
        array = np.frombuffer(body[begin:end], dtype=_BLOCK_DTYPE).astype(np.float64)
        blocks[entry["name"]] = array.reshape(entry["shape"])
    return Checkpoint(
        vocab=tuple(header["vocab"]),
        world=header["world"],
        config_hash=header["config_hash"],
        rng=header["rng"],
        meta=header["meta"],
        blocks=blocks,
    )


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_checkpoint(checkpoint))


def load_checkpoint(path: Path) -> Checkpoint:
    """
    Read a checkpoint file.

    Raises
    ------
    CheckpointError
        If the file cannot be read or is not a valid checkpoint.
    """
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_checkpoint(data)


def classifier_blocks(prefix: str, model: ClassifierModel) -> dict[str, FloatArray]:
    return {f"{prefix}.{name}": array for name, array in model.parameters().items()}


def classifier_from_blocks(prefix: str, blocks: dict[str, FloatArray]) -> ClassifierModel:
    try:
        return ClassifierModel(
            embedding=blocks[f"{prefix}.embedding"].copy(),
            bigram=blocks[f"{prefix}.bigram"].copy(),
            output=blocks[f"{prefix}.output"].copy(),
            bias=blocks[f"{prefix}.bias"].copy(),
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint has no classifier {prefix!r}") from exc


def prompter_blocks(prefix: str, model: NeuralLM) -> dict[str, FloatArray]:
    return {f"{prefix}.{name}": array for name, array in model.parameters().items()}


def prompter_from_blocks(prefix: str, blocks: dict[str, FloatArray], window: int) -> NeuralLM:
    try:
        return NeuralLM(
            embedding=blocks[f"{prefix}.embedding"].copy(),
            last_weights=blocks[f"{prefix}.last_weights"].copy(),
            context_weights=blocks[f"{prefix}.context_weights"].copy(),
            bias=blocks[f"{prefix}.bias"].copy(),
            window=window,
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint has no prompter {prefix!r}") from exc


def generator_checkpoint(generator: CountLM, base: Checkpoint) -> Checkpoint:
    """Checkpoint of a count generator, carrying ``base``'s vocab, world and identity."""
    return Checkpoint(
        vocab=base.vocab,
        world=base.world,
        config_hash=base.config_hash,
        rng=base.rng,
        meta={**base.meta, "order": generator.order, "size": generator.size, "smoothing": generator.smoothing},
        blocks={f"generator.{name}": array for name, array in generator.to_blocks().items()},
    )


def generator_from_checkpoint(checkpoint: Checkpoint) -> CountLM:
    try:
        blocks = {name: checkpoint.blocks[f"generator.{name}"] for name in ("histories", "counts")}
        meta = checkpoint.meta
        return CountLM.from_blocks(int(meta["size"]), int(meta["order"]), float(meta["smoothing"]), blocks)
    except KeyError as exc:
        raise CheckpointError("checkpoint has no generator tables") from exc
