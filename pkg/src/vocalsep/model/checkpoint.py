"""Versioned binary checkpoints.

Layout (all integers little-endian uint32, strings UTF-8 length-prefixed):

    magic b"VSCK" | version | header kv count | {key, value}...
    tensor count | {name, ndim, dims..., float32 data}...

The header carries the network configuration and, when present, the Adam
scalars; tensors cover parameters, batch-norm buffers and Adam moments.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .network import MaskNet, ModelError, NetConfig
from .optim import AdamState

MAGIC = b"VSCK"
VERSION = 1


class CheckpointError(Exception):
    pass


def _w_u32(buf, value: int):
    buf.write(struct.pack("<I", value))


def _w_str(buf, s: str):
    raw = s.encode("utf-8")
    _w_u32(buf, len(raw))
    buf.write(raw)


def _r_u32(buf) -> int:
    raw = buf.read(4)
    if len(raw) != 4:
        raise CheckpointError("truncated checkpoint")
    return struct.unpack("<I", raw)[0]


def _r_str(buf) -> str:
    n = _r_u32(buf)
    raw = buf.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated checkpoint")
    return raw.decode("utf-8")


def _config_kv(cfg: NetConfig) -> dict[str, str]:
    return {
        "input_shape": f"{cfg.input_shape[0]},{cfg.input_shape[1]}",
        "depth": str(cfg.depth),
        "base_channels": str(cfg.base_channels),
        "kernel": str(cfg.kernel),
        "leaky_slope": repr(cfg.leaky_slope),
        "dropout_p": repr(cfg.dropout_p),
        "seed": str(cfg.seed),
        "dtype": cfg.dtype,
    }


def _config_from_kv(kv: dict[str, str]) -> NetConfig:
    try:
        f, t = kv["input_shape"].split(",")
        return NetConfig(
            input_shape=(int(f), int(t)),
            depth=int(kv["depth"]),
            base_channels=int(kv["base_channels"]),
            kernel=int(kv["kernel"]),
            leaky_slope=float(kv["leaky_slope"]),
            dropout_p=float(kv["dropout_p"]),
            seed=int(kv["seed"]),
            dtype=kv["dtype"],
        )
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad checkpoint header: {exc}") from exc


def save_checkpoint(net: MaskNet, path: str | Path,
                    adam: AdamState | None = None,
                    meta: dict[str, str] | None = None) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    _w_u32(buf, VERSION)

    kv = _config_kv(net.config)
    for key, value in (meta or {}).items():
        kv[f"meta.{key}"] = str(value)
    if adam is not None:
        kv.update({
            "adam.lr": repr(adam.lr),
            "adam.beta1": repr(adam.beta1),
            "adam.beta2": repr(adam.beta2),
            "adam.eps": repr(adam.eps),
            "adam.step_count": str(adam.step_count),
        })
    _w_u32(buf, len(kv))
    for key in sorted(kv):
        _w_str(buf, key)
        _w_str(buf, kv[key])

    tensors: dict[str, np.ndarray] = {}
    tensors.update(net.params)
    tensors.update(net.buffers)
    if adam is not None:
        for name, arr in adam.m.items():
            tensors[f"adam.m.{name}"] = arr
        for name, arr in adam.v.items():
            tensors[f"adam.v.{name}"] = arr

    _w_u32(buf, len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        _w_str(buf, name)
        _w_u32(buf, arr.ndim)
        for dim in arr.shape:
            _w_u32(buf, dim)
        buf.write(arr.tobytes())

    Path(path).write_bytes(buf.getvalue())


def read_metadata(path: str | Path) -> dict[str, str]:
    """Header-only read: the `meta.*` keys stored alongside the config."""
    raw = Path(path).read_bytes()
    buf = io.BytesIO(raw)
    if buf.read(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    _r_u32(buf)
    out = {}
    for _ in range(_r_u32(buf)):
        key = _r_str(buf)
        value = _r_str(buf)
        if key.startswith("meta."):
            out[key[5:]] = value
    return out


def load_checkpoint(path: str | Path,
                    expect_config: NetConfig | None = None):
    """Rebuild (net, adam_state_or_None) from a checkpoint file.

    When `expect_config` is given, any mismatch with the stored
    configuration is an error naming both sides.
    """
    raw = Path(path).read_bytes()
    buf = io.BytesIO(raw)
    if buf.read(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = _r_u32(buf)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")

    kv = {}
    for _ in range(_r_u32(buf)):
        key = _r_str(buf)
        kv[key] = _r_str(buf)
    config = _config_from_kv(kv)
    if expect_config is not None and config != expect_config:
        diffs = []
        for name in ("input_shape", "depth", "base_channels", "kernel",
                     "leaky_slope", "dropout_p", "dtype"):
            a, b = getattr(config, name), getattr(expect_config, name)
            if a != b:
                diffs.append(f"{name}: checkpoint {a} vs expected {b}")
        raise CheckpointError(
            f"{path}: configuration mismatch ({'; '.join(diffs) or 'seed only'})"
        )

    tensors = {}
    for _ in range(_r_u32(buf)):
        name = _r_str(buf)
        ndim = _r_u32(buf)
        shape = tuple(_r_u32(buf) for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = buf.read(4 * count)
        if len(data) != 4 * count:
            raise CheckpointError(f"{path}: truncated tensor {name}")
        tensors[name] = np.frombuffer(data, dtype="<f4").reshape(shape)

    net = MaskNet(config)
    try:
        net.load_values(
            {k: v for k, v in tensors.items()
             if not k.startswith("adam.") and k in net.params},
            {k: v for k, v in tensors.items()
             if not k.startswith("adam.") and k in net.buffers},
        )
    except ModelError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    missing = (set(net.params) | set(net.buffers)) - set(tensors)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")

    adam = None
    if "adam.lr" in kv:
        adam = AdamState(
            lr=float(kv["adam.lr"]),
            beta1=float(kv["adam.beta1"]),
            beta2=float(kv["adam.beta2"]),
            eps=float(kv["adam.eps"]),
            step_count=int(kv["adam.step_count"]),
        )
        for name in net.params:
            m = tensors.get(f"adam.m.{name}")
            v = tensors.get(f"adam.v.{name}")
            if m is None or v is None:
                raise CheckpointError(f"{path}: missing optimizer state for {name}")
            adam.m[name] = m.astype(net.config.np_dtype)
            adam.v[name] = v.astype(net.config.np_dtype)
    return net, adam
