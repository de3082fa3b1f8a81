"""Audio substrate: WAV I/O, resampling, STFT/iSTFT, windowing, masking.

Everything downstream (training, adaptation, evaluation, the service)
moves audio through this module.  Clips carry float64 samples; magnitude
windows handed to the model are float32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

ROLES = ("mixture", "vocals", "accompaniment", "estimate")


class DspError(Exception):
    """Raised for malformed audio data or transform misuse."""


@dataclass(frozen=True)
class AudioClip:
    """A sampled waveform.  `samples` is 1-D (mono) or (n, 2) (stereo)."""

    samples: np.ndarray
    sample_rate: int
    role: str = "mixture"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim not in (1, 2):
            raise DspError(f"samples must be 1-D or (n, 2), got shape {samples.shape}")
        if samples.ndim == 2 and samples.shape[1] != 2:
            raise DspError(f"multi-channel clips must have 2 channels, got {samples.shape[1]}")
        if not np.isfinite(samples).all():
            raise DspError("samples contain non-finite values")
        if self.sample_rate <= 0:
            raise DspError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.role not in ROLES:
            raise DspError(f"unknown role {self.role!r}, expected one of {ROLES}")
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_seconds(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def is_mono(self) -> bool:
        return self.samples.ndim == 1

    def channels(self) -> list["AudioClip"]:
        """Split a stereo clip into (left, right); mono returns [self]."""
        if self.is_mono:
            return [self]
        return [
            AudioClip(self.samples[:, c], self.sample_rate, self.role) for c in (0, 1)
        ]

    def with_role(self, role: str) -> "AudioClip":
        return AudioClip(self.samples, self.sample_rate, role)


@dataclass(frozen=True)
class StftParams:
    n_fft: int = 2048
    hop: int = 512
    window: str = "hann"

    def __post_init__(self):
        if self.n_fft <= 0 or self.n_fft & (self.n_fft - 1) != 0:
            raise DspError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise DspError(f"hop must satisfy 0 < hop <= n_fft, got {self.hop}")
        if self.window != "hann":
            raise DspError(f"unsupported window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@dataclass(frozen=True)
class Spectrogram:
    """Complex STFT frames, shape (n_bins, n_frames)."""

    frames: np.ndarray
    params: StftParams
    source_rate: int
    n_samples: int = 0  # length of the signal that produced the frames

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.complex128)
        if frames.ndim != 2:
            raise DspError(f"frames must be 2-D, got shape {frames.shape}")
        if frames.shape[0] != self.params.n_bins:
            raise DspError(
                f"expected {self.params.n_bins} bins for n_fft={self.params.n_fft}, "
                f"got {frames.shape[0]}"
            )
        if not np.isfinite(frames).all():
            raise DspError("spectrogram contains non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def n_bins(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)


@dataclass(frozen=True)
class MagWindow:
    """One magnitude slice fed to the model: (freq_crop, time_win), >= 0."""

    values: np.ndarray
    origin: tuple[str, int] = ("", 0)  # (song id, start frame index)
    padded: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise DspError(f"window values must be 2-D, got shape {values.shape}")
        if not np.isfinite(values).all() or (values < 0).any():
            raise DspError("window values must be finite and non-negative")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _hann(n_fft: int) -> np.ndarray:
    # Periodic Hann, the overlap-add friendly variant.
    n = np.arange(n_fft)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / n_fft)


def load_wav(path: str | Path) -> AudioClip:
    """Read a 16-bit PCM or 32-bit float WAV into [-1, 1] samples.

    Stereo files keep both channels; run the result through `channels()`
    and `to_mono` to fold them down.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise DspError(f"cannot read {path}: file not found") from None
    except Exception as exc:
        raise DspError(f"cannot read {path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise DspError(
            f"cannot read {path}: unsupported sample encoding {data.dtype}, "
            "expected int16 or float32"
        )
    if samples.ndim == 2 and samples.shape[1] == 1:
        samples = samples[:, 0]
    if samples.ndim == 2 and samples.shape[1] > 2:
        raise DspError(f"cannot read {path}: {samples.shape[1]} channels, expected 1 or 2")
    return AudioClip(samples, int(rate))


def save_wav(clip: AudioClip, path: str | Path, encoding: str = "float32") -> None:
    """Write a clip as WAV; `encoding` is "float32" or "int16"."""
    path = Path(path)
    if encoding == "float32":
        data = clip.samples.astype(np.float32)
    elif encoding == "int16":
        scaled = np.round(clip.samples * 32768.0)
        data = np.clip(scaled, -32768, 32767).astype(np.int16)
    else:
        raise DspError(f"unsupported encoding {encoding!r}")
    wavfile.write(path, clip.sample_rate, data)


def to_mono(left: AudioClip, right: AudioClip) -> AudioClip:
    """Average two channels into one clip."""
    if left.n_samples != right.n_samples:
        raise DspError(
            f"channel length mismatch: {left.n_samples} vs {right.n_samples}"
        )
    if left.sample_rate != right.sample_rate:
        raise DspError(
            f"channel rate mismatch: {left.sample_rate} vs {right.sample_rate}"
        )
    if not (left.is_mono and right.is_mono):
        raise DspError("to_mono expects two mono clips")
    return AudioClip((left.samples + right.samples) / 2.0, left.sample_rate, left.role)


def mixdown(clip: AudioClip) -> AudioClip:
    """Collapse a clip to mono (no-op for mono input)."""
    if clip.is_mono:
        return clip
    left, right = clip.channels()
    return to_mono(left, right)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited (polyphase) resampling to `target_rate`."""
    if target_rate <= 0:
        raise DspError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    if not clip.is_mono:
        parts = [resample(c, target_rate) for c in clip.channels()]
        return AudioClip(np.stack([p.samples for p in parts], axis=1),
                         target_rate, clip.role)
    g = math.gcd(target_rate, clip.sample_rate)
    up, down = target_rate // g, clip.sample_rate // g
    out = resample_poly(clip.samples, up, down)
    return AudioClip(out, target_rate, clip.role)


def stft(clip: AudioClip, params: StftParams) -> Spectrogram:
    """Centered Hann-windowed STFT; n_frames = 1 + floor(len / hop)."""
    if not clip.is_mono:
        raise DspError("stft expects a mono clip")
    if clip.n_samples < 1:
        raise DspError("cannot transform an empty clip")
    x = clip.samples
    n_fft, hop = params.n_fft, params.hop
    pad = n_fft // 2
    xp = np.pad(x, pad, mode="reflect") if len(x) > 1 else np.pad(x, pad, mode="edge")
    n_frames = 1 + len(x) // hop
    win = _hann(n_fft)
    starts = np.arange(n_frames) * hop
    idx = starts[:, None] + np.arange(n_fft)[None, :]
    frames = np.fft.rfft(xp[idx] * win, axis=1).T
    return Spectrogram(frames, params, clip.sample_rate, n_samples=clip.n_samples)


def istft(spec: Spectrogram, out_len: int | None = None, role: str = "estimate") -> AudioClip:
    """Overlap-add inverse with pointwise window-square normalization."""
    n_fft, hop = spec.params.n_fft, spec.params.hop
    if out_len is None:
        out_len = spec.n_samples if spec.n_samples else (spec.n_frames - 1) * hop
    max_len = (spec.n_frames - 1) * hop + n_fft // 2
    if not 0 < out_len <= max_len:
        raise DspError(
            f"out_len {out_len} inconsistent with {spec.n_frames} frames "
            f"(max {max_len})"
        )
    win = _hann(n_fft)
    frames = np.fft.irfft(spec.frames.T, n=n_fft, axis=1) * win
    total = (spec.n_frames - 1) * hop + n_fft
    acc = np.zeros(total)
    norm = np.zeros(total)
    for t in range(spec.n_frames):
        acc[t * hop: t * hop + n_fft] += frames[t]
        norm[t * hop: t * hop + n_fft] += win * win
    pad = n_fft // 2
    acc = acc[pad: pad + out_len]
    norm = norm[pad: pad + out_len]
    degenerate = norm < 1e-10
    if degenerate.any():
        raise DspError(
            f"overlap-add normalization vanishes at {int(degenerate.sum())} "
            f"samples (hop {hop} too large for window {n_fft})"
        )
    return AudioClip(acc / norm, spec.source_rate, role)


def slice_windows(
    spec: Spectrogram,
    shape: tuple[int, int],
    stride: int | None = None,
    mode: str = "tiled",
    seed: int = 0,
    count: int = 0,
    song_id: str = "",
) -> list[MagWindow]:
    """Cut magnitude windows of `shape` (freq_crop, time_win) out of a spectrogram.

    `tiled` walks the time axis at `stride` frames and right-aligns a final
    window so every frame is covered; `random` draws `count` seeded uniform
    start frames.  The frequency axis keeps only the lowest `freq_crop` bins.
    """
    freq_crop, time_win = shape
    if freq_crop > spec.n_bins:
        raise DspError(f"freq_crop {freq_crop} exceeds {spec.n_bins} bins")
    if time_win < 1:
        raise DspError(f"time_win must be >= 1, got {time_win}")
    mag = np.abs(spec.frames[:freq_crop])
    n_frames = spec.n_frames

    if n_frames < time_win:
        padded = np.zeros((freq_crop, time_win))
        padded[:, :n_frames] = mag
        return [MagWindow(padded, origin=(song_id, 0), padded=True)]

    if mode == "tiled":
        stride = stride or time_win
        if not 0 < stride <= time_win:
            raise DspError(
                f"tiled stride must be in [1, time_win], got {stride} "
                f"(windows would miss frames)"
            )
        starts = list(range(0, n_frames - time_win + 1, stride))
        covered_to = starts[-1] + time_win
        if covered_to < n_frames:
            starts.append(n_frames - time_win)
    elif mode == "random":
        rng = np.random.default_rng(seed)
        starts = rng.integers(0, n_frames - time_win + 1, size=count).tolist()
    else:
        raise DspError(f"unknown windowing mode {mode!r}")

    return [
        MagWindow(mag[:, s: s + time_win], origin=(song_id, int(s)))
        for s in starts
    ]


def merge_window_masks(
    masks: list[np.ndarray],
    starts: list[int],
    n_bins: int,
    n_frames: int,
) -> np.ndarray:
    """Paste window-aligned masks into a full (n_bins, n_frames) mask.

    Bins above the window crop stay 0 (the dropped top bin); where tiles
    overlap, the later window wins.
    """
    full = np.zeros((n_bins, n_frames))
    for mask, start in zip(masks, starts):
        f, t = mask.shape
        if f > n_bins or start < 0 or start + t > n_frames:
            raise DspError(
                f"mask of shape {mask.shape} at frame {start} does not fit "
                f"({n_bins} bins, {n_frames} frames)"
            )
        full[:f, start: start + t] = mask
    return full


def apply_mask(
    mixture: Spectrogram,
    mask: np.ndarray,
    start_frame: int = 0,
    out_len: int | None = None,
) -> AudioClip:
    """Estimate vocals as mask * |mixture| with the mixture's phase.

    The mask may cover the full spectrogram or a window of it (then
    `start_frame` places it); uncovered bins and frames contribute silence.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise DspError(f"mask must be 2-D, got shape {mask.shape}")
    if not np.isfinite(mask).all() or (mask < 0).any() or (mask > 1).any():
        raise DspError("mask entries must lie in [0, 1]")
    f, t = mask.shape
    if f > mixture.n_bins or start_frame < 0 or start_frame + t > mixture.n_frames:
        raise DspError(
            f"mask of shape {mask.shape} at frame {start_frame} does not match "
            f"spectrogram ({mixture.n_bins} bins, {mixture.n_frames} frames)"
        )
    full = np.zeros((mixture.n_bins, mixture.n_frames))
    full[:f, start_frame: start_frame + t] = mask
    est = Spectrogram(
        mixture.frames * full,
        mixture.params,
        mixture.source_rate,
        n_samples=mixture.n_samples,
    )
    return istft(est, out_len=out_len)
