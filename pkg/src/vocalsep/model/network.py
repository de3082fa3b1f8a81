"""The trainable mask network: a compact encoder-decoder with skip links.

Encoder stages are strided 5x5 convolutions with batch norm and leaky
ReLU; decoder stages are strided transposed convolutions with batch norm,
ReLU and (early stages) dropout, each concatenated with the matching
encoder activation.  A sigmoid head maps to a per-bin mask in (0, 1).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..dsp import MagWindow
from . import layers as L

SOURCES = ("original_train", "zero_target", "synthetic")


class ModelError(Exception):
    """Configuration or shape problems in the mask network."""


class GradientError(Exception):
    """Non-finite values encountered while training."""


@dataclass(frozen=True)
class NetConfig:
    input_shape: tuple[int, int] = (1024, 512)
    depth: int = 6
    base_channels: int = 16
    kernel: int = 5
    leaky_slope: float = 0.2
    dropout_p: float = 0.5
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.depth < 2:
            raise ModelError(f"depth must be >= 2, got {self.depth}")
        if self.base_channels < 2:
            raise ModelError(f"base_channels must be >= 2, got {self.base_channels}")
        f, t = self.input_shape
        div = 2 ** self.depth
        if f % div or t % div:
            raise ModelError(
                f"input shape {self.input_shape} not divisible by 2^depth = {div}"
            )
        if self.kernel % 2 == 0:
            raise ModelError(f"kernel must be odd, got {self.kernel}")
        if self.dtype not in ("float32", "float64"):
            raise ModelError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class TrainingExample:
    """One (input window, target magnitude) pair with its provenance."""

    x: MagWindow
    y: np.ndarray
    source: str = "original_train"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float32)
        if y.shape != self.x.shape:
            raise ModelError(f"target shape {y.shape} != input shape {self.x.shape}")
        if not np.isfinite(y).all() or (y < 0).any():
            raise ModelError("targets must be finite and non-negative")
        if self.source not in SOURCES:
            raise ModelError(f"unknown example source {self.source!r}")
        self.y = y

    @property
    def song_id(self) -> str:
        return self.x.origin[0]


def _enc_channels(cfg: NetConfig) -> list[int]:
    return [cfg.base_channels * 2 ** i for i in range(cfg.depth)]


class MaskNet:
    """Mask predictor with explicit forward/backward over numpy tensors."""

    def __init__(self, config: NetConfig):
        self.config = config
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._rng = np.random.default_rng(config.seed)
        self._init_params()

    # -- construction -------------------------------------------------------

    def _add_conv(self, name: str, c_in: int, c_out: int, rng, transposed=False):
        k = self.config.kernel
        fan_in = c_in * k * k
        std = np.sqrt(2.0 / fan_in)
        shape = (c_in, c_out, k, k) if transposed else (c_out, c_in, k, k)
        self.params[f"{name}.w"] = rng.normal(0.0, std, shape).astype(self.config.np_dtype)
        self.params[f"{name}.b"] = np.zeros(c_out, dtype=self.config.np_dtype)

    def _add_bn(self, name: str, c: int):
        dt = self.config.np_dtype
        self.params[f"{name}.gamma"] = np.ones(c, dtype=dt)
        self.params[f"{name}.beta"] = np.zeros(c, dtype=dt)
        self.buffers[f"{name}.running_mean"] = np.zeros(c, dtype=dt)
        self.buffers[f"{name}.running_var"] = np.ones(c, dtype=dt)

    def _init_params(self):
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        chans = _enc_channels(cfg)
        c_prev = 1
        for i, c in enumerate(chans, start=1):
            self._add_conv(f"enc{i}.conv", c_prev, c, rng)
            self._add_bn(f"enc{i}.bn", c)
            c_prev = c
        d_in = chans[-1]
        for j in range(1, cfg.depth):
            d_out = chans[cfg.depth - 1 - j]
            self._add_conv(f"dec{j}.deconv", d_in, d_out, rng, transposed=True)
            self._add_bn(f"dec{j}.bn", d_out)
            d_in = 2 * d_out  # after skip concatenation
        self._add_conv("head.deconv", d_in, 1, rng, transposed=True)

    def copy(self) -> "MaskNet":
        return copy.deepcopy(self)

    def reseed(self, seed: int) -> None:
        """Reset the dropout RNG (training determinism hinges on this)."""
        self._rng = np.random.default_rng(seed)

    # -- forward ------------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.config.np_dtype)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[2:] != tuple(self.config.input_shape):
            raise ModelError(
                f"input shape {x.shape[-2:] if x.ndim >= 2 else x.shape} does not "
                f"match configured {tuple(self.config.input_shape)}"
            )
        return x

    def _run(self, x: np.ndarray, train: bool, tape: list | None):
        cfg = self.config
        k, pad = cfg.kernel, cfg.kernel // 2
        p, b = self.params, self.buffers

        def record(kind, name, cache):
            if tape is not None:
                tape.append((kind, name, cache))

        def check(name, h):
            if train and not np.isfinite(h).all():
                raise GradientError(f"non-finite activations after {name}")

        skips = []
        h = x
        for i in range(1, cfg.depth + 1):
            nm = f"enc{i}"
            h, cache = L.conv2d_forward(h, p[f"{nm}.conv.w"], p[f"{nm}.conv.b"], 2, pad)
            record("conv", nm, cache)
            h, cache = L.batchnorm_forward(
                h, p[f"{nm}.bn.gamma"], p[f"{nm}.bn.beta"],
                b[f"{nm}.bn.running_mean"], b[f"{nm}.bn.running_var"], train,
            )
            record("bn", nm, cache)
            h, cache = L.leaky_relu_forward(h, cfg.leaky_slope)
            record("lrelu", nm, cache)
            check(nm, h)
            skips.append(h)

        n_dropout = cfg.depth // 2
        for j in range(1, cfg.depth):
            nm = f"dec{j}"
            h, cache = L.deconv2d_forward(
                h, p[f"{nm}.deconv.w"], p[f"{nm}.deconv.b"], 2, pad, out_pad=1
            )
            record("deconv", nm, cache)
            h, cache = L.batchnorm_forward(
                h, p[f"{nm}.bn.gamma"], p[f"{nm}.bn.beta"],
                b[f"{nm}.bn.running_mean"], b[f"{nm}.bn.running_var"], train,
            )
            record("bn", nm, cache)
            h, cache = L.leaky_relu_forward(h, 0.0)
            record("relu", nm, cache)
            if j <= n_dropout:
                h, cache = L.dropout_forward(
                    h, cfg.dropout_p if train else 0.0, self._rng
                )
                record("dropout", nm, cache)
            skip = skips[cfg.depth - 1 - j]
            record("concat", nm, h.shape[1])
            h = np.concatenate([h, skip], axis=1)
            check(nm, h)

        h, cache = L.deconv2d_forward(
            h, p["head.deconv.w"], p["head.deconv.b"], 2, pad, out_pad=1
        )
        record("deconv", "head", cache)
        mask, cache = L.sigmoid_forward(h)
        record("sigmoid", "head", cache)
        check("head", mask)
        return mask

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode mask prediction; pure, safe to call concurrently."""
        x = self._check_input(x)
        mask = self._run(x, train=False, tape=None)
        return mask[0, 0] if mask.shape[0] == 1 else mask[:, 0]

    def forward_train(self, x: np.ndarray):
        """Train-mode forward; returns (mask batch, tape for backward)."""
        x = self._check_input(x)
        tape: list = []
        mask = self._run(x, train=True, tape=tape)
        return mask, tape

    # -- backward -----------------------------------------------------------

    def backward(self, tape: list, dmask: np.ndarray) -> dict[str, np.ndarray]:
        grads = {name: np.zeros_like(arr) for name, arr in self.params.items()}
        skip_grads: dict[int, np.ndarray] = {}
        cfg = self.config
        d = dmask
        for kind, name, cache in reversed(tape):
            if kind == "sigmoid":
                d = L.sigmoid_backward(d, cache)
            elif kind == "deconv":
                d, dw, db = L.deconv2d_backward(d, cache)
                grads[f"{name}.deconv.w"] += dw
                grads[f"{name}.deconv.b"] += db
            elif kind == "conv":
                d, dw, db = L.conv2d_backward(d, cache)
                grads[f"{name}.conv.w"] += dw
                grads[f"{name}.conv.b"] += db
            elif kind == "bn":
                d, dg, dbta = L.batchnorm_backward(d, cache)
                grads[f"{name}.bn.gamma"] += dg
                grads[f"{name}.bn.beta"] += dbta
            elif kind in ("lrelu", "relu"):
                if kind == "lrelu":
                    # encoder activations double as skip inputs: fold the
                    # gradient from the matching concat in before the
                    # activation backward
                    stage = int(name[3:])
                    if stage in skip_grads:
                        d = d + skip_grads.pop(stage)
                d = L.leaky_relu_backward(d, cache)
            elif kind == "dropout":
                d = L.dropout_backward(d, cache)
            elif kind == "concat":
                own = cache
                j = int(name[3:])
                skip_grads[cfg.depth - j] = d[:, own:]
                d = d[:, :own]
            else:  # pragma: no cover
                raise ModelError(f"unknown tape entry {kind}")
        return grads

    # -- bookkeeping ---------------------------------------------------------

    def named_parameters(self) -> dict[str, np.ndarray]:
        return self.params

    def load_values(self, params: dict[str, np.ndarray],
                    buffers: dict[str, np.ndarray]) -> None:
        for name, arr in params.items():
            if name not in self.params:
                raise ModelError(f"unexpected parameter {name}")
            if self.params[name].shape != arr.shape:
                raise ModelError(
                    f"parameter {name}: checkpoint shape {arr.shape} != "
                    f"model shape {self.params[name].shape}"
                )
            np.copyto(self.params[name], arr)
        for name, arr in buffers.items():
            if name not in self.buffers:
                raise ModelError(f"unexpected buffer {name}")
            np.copyto(self.buffers[name], arr)


def init(config: NetConfig) -> MaskNet:
    """Seeded deterministic construction; equal seeds give equal parameters."""
    return MaskNet(config)


def l1_loss(net: MaskNet, batch: list[TrainingExample]):
    """Mean L1 between masked input and target over a batch.

    Returns (loss, gradients); runs the net in train mode.
    """
    if not batch:
        raise ModelError("empty batch")
    shape = batch[0].x.shape
    for ex in batch:
        if ex.x.shape != shape:
            raise ModelError(f"mixed shapes in batch: {ex.x.shape} vs {shape}")
    dt = net.config.np_dtype
    xs = np.stack([ex.x.values for ex in batch]).astype(dt)[:, None]
    ys = np.stack([ex.y for ex in batch]).astype(dt)[:, None]
    mask, tape = net.forward_train(xs)
    pred = mask * xs
    resid = pred - ys
    loss = float(np.abs(resid).mean())
    dmask = (np.sign(resid) * xs / resid.size).astype(dt)
    grads = net.backward(tape, dmask)
    return loss, grads
