"""Glue between audio and the mask network: one place that knows the
sample rate, transform size, and window geometry used for a given model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .dsp import AudioClip, Spectrogram, StftParams
from .model import MaskNet, NetConfig


@dataclass(frozen=True)
class PipelineConfig:
    sample_rate: int = 22050
    stft: StftParams = StftParams(2048, 512)
    window_shape: tuple[int, int] = (1024, 512)

    def __post_init__(self):
        f, _ = self.window_shape
        if f > self.stft.n_bins:
            raise dsp.DspError(
                f"window frequency crop {f} exceeds {self.stft.n_bins} bins"
            )

    @classmethod
    def for_net(cls, net_config: NetConfig, sample_rate: int = 22050,
                hop: int | None = None) -> "PipelineConfig":
        """Derive transform geometry from the model input shape.

        n_fft = 2 * freq_crop, so exactly the top (Nyquist) bin is dropped.
        """
        f, t = net_config.input_shape
        n_fft = 2 * f
        return cls(sample_rate, StftParams(n_fft, hop or n_fft // 4), (f, t))

    def prepare(self, clip: AudioClip) -> AudioClip:
        return dsp.resample(dsp.mixdown(clip), self.sample_rate)

    def spectrogram(self, clip: AudioClip) -> Spectrogram:
        return dsp.stft(self.prepare(clip), self.stft)

    def song_spectrograms(self, entry) -> tuple[Spectrogram, Spectrogram]:
        """(mixture, vocals) spectrograms for a dataset song."""
        return (
            self.spectrogram(entry.load("mixture")),
            self.spectrogram(entry.load("vocals")),
        )

    @property
    def frames_per_second(self) -> float:
        return self.sample_rate / self.stft.hop

    def seconds_to_frame(self, t: float) -> int:
        return int(round(t * self.frames_per_second))


def predict_mask(net: MaskNet, spec: Spectrogram,
                 shape: tuple[int, int]) -> np.ndarray:
    """Full-spectrogram mask from tiled window predictions.

    Tiles at window stride (later tiles win on the right-aligned overlap);
    the cropped top bin keeps mask 0.
    """
    windows = dsp.slice_windows(spec, shape, mode="tiled")
    xs = np.stack([w.values for w in windows])
    chunks = []
    for i in range(0, len(xs), 16):  # bound peak memory on long songs
        m = net.forward(xs[i: i + 16])
        chunks.append(m[None] if m.ndim == 2 else m)
    masks = np.concatenate(chunks)
    starts = [w.origin[1] for w in windows]
    if windows[0].padded:
        # short song: the single window was zero-padded out to shape
        return dsp.merge_window_masks(
            [np.asarray(masks[0])[:, : spec.n_frames]], [0],
            spec.n_bins, spec.n_frames,
        )
    return dsp.merge_window_masks(list(masks), starts, spec.n_bins, spec.n_frames)


def separate_vocals(net: MaskNet, clip: AudioClip,
                    cfg: PipelineConfig) -> AudioClip:
    """mixture -> estimated vocals at the pipeline sample rate."""
    spec = cfg.spectrogram(clip)
    mask = predict_mask(net, spec, cfg.window_shape)
    prepared_len = spec.n_samples
    est = dsp.apply_mask(spec, mask, out_len=prepared_len)
    return est.with_role("estimate")


def unity_estimate(clip: AudioClip, cfg: PipelineConfig) -> AudioClip:
    """The mask = 1 baseline: analysis/resynthesis of the mixture itself."""
    spec = cfg.spectrogram(clip)
    mask = np.ones((spec.n_bins, spec.n_frames))
    return dsp.apply_mask(spec, mask, out_len=spec.n_samples).with_role("estimate")
