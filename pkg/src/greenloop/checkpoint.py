"""Binary checkpoints for model state and the replay buffer.

Model block layout (all integers little-endian):
  magic   4 bytes  b"HAI1"
  u32     version
  u32     architecture tag (0 = logistic, 1 = MLP)
  u32     d_in
  u32     n_classes
  u32     hidden_width (0 for logistic)
  f64[n]  weights, row-major per the flat layout documented in learner.py
  bytes   pathway_mask packed 8 bits per byte, LSB-first, ceil(n/8) bytes

A run checkpoint is the model block followed by a replay-buffer block
(magic b"RBUF"); sample features are little-endian f64. Round-trips are
bit-exact for the float payloads.
"""

from __future__ import annotations

import struct
from io import BytesIO
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import RejectedInputError
from .learner import Architecture, ModelState, weight_count
from .memory import ReplayBuffer, TaskReference
from .samples import LabeledSample

MODEL_MAGIC = b"HAI1"
BUFFER_MAGIC = b"RBUF"
_HEADER = struct.Struct("<IIIII")


def _write_model(fh: BinaryIO, model: ModelState) -> None:
    if model.version > 0xFFFFFFFF:
        raise RejectedInputError("model version exceeds u32 range")
    fh.write(MODEL_MAGIC)
    fh.write(_HEADER.pack(model.version, int(model.architecture), model.d_in,
                          model.n_classes, model.hidden_width))
    fh.write(np.asarray(model.weights, dtype="<f8").tobytes())
    fh.write(np.packbits(model.pathway_mask.astype(np.uint8), bitorder="little").tobytes())


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise RejectedInputError(f"truncated checkpoint while reading {what}")
    return data


def _read_model(fh: BinaryIO) -> ModelState:
    if _read_exact(fh, 4, "magic") != MODEL_MAGIC:
        raise RejectedInputError("bad checkpoint magic, expected HAI1")
    version, arch_tag, d_in, n_classes, hidden = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
    try:
        arch = Architecture(arch_tag)
    except ValueError:
        raise RejectedInputError(f"unknown architecture tag {arch_tag}") from None
    n = weight_count(arch, d_in, n_classes, hidden)
    weights = np.frombuffer(_read_exact(fh, 8 * n, "weights"), dtype="<f8").copy()
    mask_bytes = _read_exact(fh, (n + 7) // 8, "pathway mask")
    mask = np.unpackbits(np.frombuffer(mask_bytes, dtype=np.uint8), bitorder="little")[:n].astype(bool)
    return ModelState(version=version, weights=weights, architecture=arch, d_in=d_in,
                      n_classes=n_classes, hidden_width=hidden, pathway_mask=mask)


def save_model(model: ModelState, path: str | Path) -> None:
    with open(path, "wb") as fh:
        _write_model(fh, model)


def load_model(path: str | Path) -> ModelState:
    with open(path, "rb") as fh:
        return _read_model(fh)


def _write_str(fh: BinaryIO, s: str) -> None:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise RejectedInputError("string field too long for checkpoint")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh: BinaryIO) -> str:
    (n,) = struct.unpack("<H", _read_exact(fh, 2, "string length"))
    return _read_exact(fh, n, "string").decode("utf-8")


def _write_buffer(fh: BinaryIO, buffer: ReplayBuffer, d_in: int) -> None:
    fh.write(BUFFER_MAGIC)
    fh.write(struct.pack("<III", buffer.capacity, len(buffer.slots), d_in))
    for sample, task_id, weight in buffer.slots:
        fh.write(struct.pack("<qIdq", sample.sample_id, sample.label, weight, task_id))
        _write_str(fh, sample.provenance)
        fh.write(np.asarray(sample.features, dtype="<f8").tobytes())
    refs = buffer.per_task_reference
    fh.write(struct.pack("<I", len(refs)))
    for task_id, ref in sorted(refs.items()):
        fh.write(struct.pack("<qd", task_id, ref.reference_loss))
        _write_str(fh, ref.eval_set_id)
    seen = buffer.seen_count
    fh.write(struct.pack("<I", len(seen)))
    for task_id in buffer.task_order:
        fh.write(struct.pack("<qQ", task_id, seen[task_id]))


def _read_buffer(fh: BinaryIO, seed: int) -> ReplayBuffer:
    if _read_exact(fh, 4, "buffer magic") != BUFFER_MAGIC:
        raise RejectedInputError("bad buffer magic, expected RBUF")
    capacity, n_slots, d_in = struct.unpack("<III", _read_exact(fh, 12, "buffer header"))
    buffer = ReplayBuffer(capacity=capacity, seed=seed)
    slots = []
    for _ in range(n_slots):
        sample_id, label, weight, task_id = struct.unpack("<qIdq", _read_exact(fh, 28, "slot"))
        provenance = _read_str(fh)
        features = np.frombuffer(_read_exact(fh, 8 * d_in, "features"), dtype="<f8").copy()
        sample = LabeledSample(sample_id=sample_id, features=features, label=label,
                               weight=weight, provenance=provenance)
        slots.append((sample, task_id, weight))
    (n_refs,) = struct.unpack("<I", _read_exact(fh, 4, "reference count"))
    refs = {}
    for _ in range(n_refs):
        task_id, loss = struct.unpack("<qd", _read_exact(fh, 16, "reference"))
        refs[task_id] = TaskReference(reference_loss=loss, eval_set_id=_read_str(fh))
    (n_seen,) = struct.unpack("<I", _read_exact(fh, 4, "seen count"))
    order, seen = [], {}
    for _ in range(n_seen):
        task_id, count = struct.unpack("<qQ", _read_exact(fh, 16, "seen entry"))
        order.append(task_id)
        seen[task_id] = count
    buffer.restore(slots=slots, references=refs, seen=seen, task_order=order)
    return buffer


def save_run_checkpoint(model: ModelState, buffer: ReplayBuffer, path: str | Path) -> None:
    """Model block plus embedded replay buffer in one container."""
    with open(path, "wb") as fh:
        _write_model(fh, model)
        _write_buffer(fh, buffer, model.d_in)


def load_run_checkpoint(path: str | Path, buffer_seed: int = 0) -> tuple[ModelState, ReplayBuffer]:
    """Restore model and buffer contents.

    The buffer's RNG restarts from ``buffer_seed``; stored contents,
    references, and per-task seen counts round-trip exactly.
    """
    with open(path, "rb") as fh:
        model = _read_model(fh)
        buffer = _read_buffer(fh, buffer_seed)
    return model, buffer


def model_to_bytes(model: ModelState) -> bytes:
    buf = BytesIO()
    _write_model(buf, model)
    return buf.getvalue()


def model_from_bytes(data: bytes) -> ModelState:
    return _read_model(BytesIO(data))
