"""Checkpoint container and its on-disk format.

A checkpoint is an immutable value: the full parameter map, optimizer
moments, step/token counters, sampler RNG state and schedule scalars.
The file layout is little-endian throughout:

    magic "XLD1" | u32 version | u64 manifest_len | manifest JSON
    | raw tensor payload | u32 CRC32 trailer

The manifest records the config, counters and an ordered group table
with byte offsets into the payload.  Serialization is deterministic, so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError
from .model import ModelConfig, ParamGroupId, init_params, param_group_ids

MAGIC = b"XLD1"
VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    config: ModelConfig
    step: int
    tokens_seen: int
    params: dict
    opt_state: dict
    rng_state: bytes = b""
    schedule_state: dict = field(default_factory=dict)

    def __post_init__(self):
        if set(self.params) != set(self.opt_state):
            raise InputError("params and opt_state must cover the same parameter groups")

    def replace(self, **kw) -> "Checkpoint":
        d = dict(config=self.config, step=self.step, tokens_seen=self.tokens_seen,
                 params=self.params, opt_state=self.opt_state,
                 rng_state=self.rng_state, schedule_state=self.schedule_state)
        d.update(kw)
        return Checkpoint(**d)


def new_checkpoint(config: ModelConfig, seed: int, dtype=np.float32) -> Checkpoint:
    params = init_params(config, seed, dtype)
    opt = {g: (np.zeros_like(p), np.zeros_like(p)) for g, p in params.items()}
    return Checkpoint(config=config, step=0, tokens_seen=0, params=params, opt_state=opt)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    groups = []
    payload = bytearray()
    for g in param_group_ids(ckpt.config):
        if g not in ckpt.params:
            raise InputError(f"checkpoint missing parameter group {g}")
        p = ckpt.params[g]
        m, v = ckpt.opt_state[g]
        entry = {"id": str(g), "shape": list(p.shape), "param_offset": len(payload)}
        payload.extend(np.ascontiguousarray(p).tobytes())
        entry["m_offset"] = len(payload)
        payload.extend(np.ascontiguousarray(m).tobytes())
        entry["v_offset"] = len(payload)
        payload.extend(np.ascontiguousarray(v).tobytes())
        groups.append(entry)
    manifest = {
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "tokens_seen": ckpt.tokens_seen,
        "dtype": str(next(iter(ckpt.params.values())).dtype),
        "schedule_state": ckpt.schedule_state,
        "rng_state_hex": ckpt.rng_state.hex(),
        "groups": groups,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    head = MAGIC + VERSION.to_bytes(4, "little") + len(blob).to_bytes(8, "little")
    body = head + blob + bytes(payload)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(body)
        f.write(crc.to_bytes(4, "little"))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(MAGIC) + 12 + 4:
        raise FormatError("checkpoint file truncated")
    if data[:4] != MAGIC:
        raise FormatError("bad magic bytes, not a checkpoint file")
    version = int.from_bytes(data[4:8], "little")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    body, trailer = data[:-4], data[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != int.from_bytes(trailer, "little"):
        raise FormatError("checkpoint CRC mismatch (corrupt or truncated file)")
    mlen = int.from_bytes(data[8:16], "little")
    try:
        manifest = json.loads(data[16:16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable checkpoint manifest: {e}") from e
    config = ModelConfig.from_dict(manifest["config"])
    dtype = np.dtype(manifest["dtype"])
    payload = data[16 + mlen:-4]
    params, opt = {}, {}
    expected = set(str(g) for g in param_group_ids(config))
    seen = set()
    for entry in manifest["groups"]:
        g = ParamGroupId.parse(entry["id"])
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) * dtype.itemsize

        def pull(off):
            if off + n > len(payload):
                raise FormatError("checkpoint payload truncated")
            return np.frombuffer(payload[off:off + n], dtype=dtype).reshape(shape).copy()

        params[g] = pull(entry["param_offset"])
        opt[g] = (pull(entry["m_offset"]), pull(entry["v_offset"]))
        seen.add(entry["id"])
    if seen != expected:
        raise FormatError("checkpoint group table does not match its config")
    return Checkpoint(
        config=config,
        step=int(manifest["step"]),
        tokens_seen=int(manifest["tokens_seen"]),
        params=params,
        opt_state=opt,
        rng_state=bytes.fromhex(manifest["rng_state_hex"]),
        schedule_state=manifest["schedule_state"],
    )
