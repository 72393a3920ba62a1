"""Byte-stable checkpoint files.

Layout: the 8-byte magic ``FTXCKPT1``, a little-endian u64 header length, a
UTF-8 JSON header (sorted keys), then one tensor record per header entry in
header order. Nothing time- or platform-dependent is written, so saving the
same state twice yields identical bytes.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..extractors import weights_digest
from .config import GEOMETRY_KEYS, Config, from_dict
from .model import FaceSwapModel
from .optim import Adam

MAGIC = b"FTXCKPT1"


class CheckpointError(ValueError):
    """Unreadable checkpoint."""


class CheckpointMismatch(CheckpointError):
    """Checkpoint was written under a different model geometry."""


@dataclass
class TrainState:
    config: Config
    model: FaceSwapModel
    opt_g: Adam
    opt_d: Adam
    step: int = 0


def new_state(config: Config) -> TrainState:
    model = FaceSwapModel(config.geometry, config.seed)
    opt_g = Adam(model.generator_side(), config.lr, config.beta1, config.beta2, config.adam_eps)
    opt_d = Adam(model.discriminator, config.lr, config.beta1, config.beta2, config.adam_eps)
    return TrainState(config, model, opt_g, opt_d, 0)


def _entries(state: TrainState) -> dict[str, np.ndarray]:
    out = {}
    for name, t in state.model.pyramid.items():
        out[f"frozen/pyramid/{name}"] = t.data
    for group, params in state.model.groups().items():
        for name, t in params.items():
            out[f"param/{group}/{name}"] = t.data
    for tag, opt in (("adam_g", state.opt_g), ("adam_d", state.opt_d)):
        for name in opt.params:
            out[f"{tag}/m/{name}"] = opt.m[name]
            out[f"{tag}/v/{name}"] = opt.v[name]
    return out


def to_bytes(state: TrainState) -> bytes:
    entries = _entries(state)
    header = {
        "config": state.config.to_dict(),
        "config_hash": state.config.fingerprint(),
        "step": state.step,
        "adam_g_t": state.opt_g.t,
        "adam_d_t": state.opt_d.t,
        "pyramid_digest": weights_digest(state.model.pyramid),
        "entries": list(entries),
    }
    head = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(
        T.tensor_to_bytes(a) for a in entries.values())


def save_checkpoint(state: TrainState, path) -> None:
    """Write atomically: a crash mid-write leaves the previous file intact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(state))
    os.replace(tmp, path)


def load_checkpoint(path, config: Config | None = None, force: bool = False) -> TrainState:
    """Restore a training state.

    With ``config`` given, its geometry fingerprint must match the file's unless
    ``force``, in which case the file's geometry replaces the config's.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if raw[:8] != MAGIC or len(raw) < 16:
        raise CheckpointError(f"{path} is not a checkpoint")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen].decode())
        missing = {"config", "config_hash", "step", "adam_g_t", "adam_d_t", "pyramid_digest",
                   "entries"} - set(header)
        if missing:
            raise ValueError(f"missing keys {sorted(missing)}")
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    saved = from_dict(header["config"])
    if config is not None and config.fingerprint() != header["config_hash"] and not force:
        raise CheckpointMismatch(
            f"checkpoint geometry {header['config_hash']} != config geometry {config.fingerprint()}")
    if config is None:
        config = saved
    elif config.fingerprint() != saved.fingerprint():
        # forced load: the file's geometry wins, everything else comes from ``config``
        config = config.override(**{k: getattr(saved, k) for k in GEOMETRY_KEYS})
    state = new_state(config)
    f = io.BytesIO(raw[16 + hlen:])
    try:
        arrays = {name: T.read_tensor(f) for name in header["entries"]}
    except T.SerializationError as exc:
        raise CheckpointError(f"corrupt checkpoint body: {exc}") from None
    targets = {f"frozen/pyramid/{k}": t for k, t in state.model.pyramid.items()}
    for group, params in state.model.groups().items():
        targets.update({f"param/{group}/{k}": t for k, t in params.items()})
    for name, t in targets.items():
        if name not in arrays or arrays[name].shape != t.data.shape:
            raise CheckpointError(f"checkpoint entry {name} missing or mis-shaped")
        t.data[...] = arrays[name]
    for tag, opt in (("adam_g", state.opt_g), ("adam_d", state.opt_d)):
        for name in opt.params:
            for kind, buf in (("m", opt.m[name]), ("v", opt.v[name])):
                arr = arrays.get(f"{tag}/{kind}/{name}")
                if arr is None or arr.shape != buf.shape:
                    raise CheckpointError(f"optimizer entry {tag}/{kind}/{name} missing or mis-shaped")
                buf[...] = arr
    state.opt_g.t = header["adam_g_t"]
    state.opt_d.t = header["adam_d_t"]
    state.step = header["step"]
    if weights_digest(state.model.pyramid) != header["pyramid_digest"]:
        raise CheckpointError("frozen pyramid digest mismatch")
    return state
