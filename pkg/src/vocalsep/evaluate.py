"""Framewise SDR and report emission.

SDR here is the direct energy ratio 10*log10(sum(ref^2) / sum((ref-est)^2))
per non-overlapping time frame, not the full BSS-eval projection machinery:
with a single target and no distortion filters the two coincide, and the
direct form is deterministic and cheap.  Numbers from this module should
not be compared against other toolchains' SDR figures.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetSplit
from .dsp import AudioClip, DspError
from .pipeline import PipelineConfig, separate_vocals, unity_estimate

SILENCE_ENERGY = 1e-10
SDR_CAP_DB = 100.0


class EvalError(Exception):
    pass


@dataclass
class SdrReport:
    song_id: str
    frame_sdr: list[tuple[int, float | None]]  # None marks an excluded frame
    mean_sdr: float
    median_sdr: float
    excluded_frames: int
    frame_s: float

    @property
    def included(self) -> list[float]:
        return [s for _, s in self.frame_sdr if s is not None]


def aggregate(frames: list[float], stat: str = "mean") -> float:
    """Mean, or median with even-count midpoint averaging."""
    if not frames:
        raise EvalError("no included frames to aggregate")
    if stat == "mean":
        return float(np.mean(frames))
    if stat == "median":
        return float(np.median(frames))
    raise EvalError(f"unknown statistic {stat!r}")


def _frame_bounds(n_samples: int, frame_len: int) -> list[tuple[int, int]]:
    bounds = []
    start = 0
    while start + frame_len <= n_samples:
        bounds.append((start, start + frame_len))
        start += frame_len
    leftover = n_samples - start
    if leftover * 2 >= frame_len:  # keep a final partial frame of >= half size
        bounds.append((start, n_samples))
    return bounds


def framewise_sdr(reference: AudioClip, estimate: AudioClip,
                  frame_s: float = 1.0) -> SdrReport:
    """Per-frame SDR; frames whose reference is silent are excluded."""
    if reference.n_samples != estimate.n_samples:
        raise DspError(
            f"length mismatch: reference {reference.n_samples} vs "
            f"estimate {estimate.n_samples}"
        )
    if reference.sample_rate != estimate.sample_rate:
        raise DspError("sample rate mismatch between reference and estimate")
    if reference.n_samples == 0:
        raise DspError("zero-length input")
    frame_len = max(1, int(round(frame_s * reference.sample_rate)))
    ref, est = reference.samples, estimate.samples
    frames: list[tuple[int, float | None]] = []
    excluded = 0
    for i, (a, b) in enumerate(_frame_bounds(reference.n_samples, frame_len)):
        ref_e = float(np.sum(ref[a:b] ** 2))
        if ref_e < SILENCE_ENERGY:
            frames.append((i, None))
            excluded += 1
            continue
        err_e = float(np.sum((ref[a:b] - est[a:b]) ** 2))
        if err_e <= 0.0:
            sdr = SDR_CAP_DB
        else:
            sdr = 10.0 * np.log10(ref_e / err_e)
            sdr = float(np.clip(sdr, -SDR_CAP_DB, SDR_CAP_DB))
        frames.append((i, sdr))
    included = [s for _, s in frames if s is not None]
    return SdrReport(
        song_id="",
        frame_sdr=frames,
        mean_sdr=aggregate(included, "mean"),
        median_sdr=aggregate(included, "median"),
        excluded_frames=excluded,
        frame_s=frame_s,
    )


@dataclass
class SplitReport:
    """Per-song reports plus the across-song aggregates."""

    reports: dict[str, SdrReport]
    mean_sdr: float      # mean of per-song mean SDRs
    median_sdr: float    # median of per-song median SDRs

    def to_dict(self) -> dict:
        return {
            "mean_sdr": self.mean_sdr,
            "median_sdr": self.median_sdr,
            "songs": {
                sid: {
                    "mean_sdr": r.mean_sdr,
                    "median_sdr": r.median_sdr,
                    "excluded_frames": r.excluded_frames,
                    "frame_s": r.frame_s,
                    "frames": [
                        {"frame_index": i, "sdr_db": s}
                        for i, s in r.frame_sdr
                    ],
                }
                for sid, r in self.reports.items()
            },
        }


def evaluate_model(net, split: DatasetSplit, cfg: PipelineConfig,
                   frame_s: float = 1.0, workers: int = 4) -> SplitReport:
    """Separate and score every song of a split; net=None scores the
    mask = 1 baseline.  Songs are processed in a small worker pool and
    merged in song_id order."""
    if len(split) == 0:
        return SplitReport(reports={}, mean_sdr=float("nan"),
                           median_sdr=float("nan"))

    def one(entry):
        if entry.vocals_path is None:
            raise EvalError(f"song {entry.song_id} has no vocal stem to score")
        mixture = entry.load("mixture")
        reference = cfg.prepare(entry.load("vocals"))
        if net is None:
            estimate = unity_estimate(mixture, cfg)
        else:
            estimate = separate_vocals(net, mixture, cfg)
        report = framewise_sdr(reference, estimate, frame_s)
        report.song_id = entry.song_id
        return report

    entries = sorted(split.entries, key=lambda e: e.song_id)
    if workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, entries))
    else:
        reports = [one(e) for e in entries]
    by_id = {r.song_id: r for r in reports}
    return SplitReport(
        reports=by_id,
        mean_sdr=aggregate([r.mean_sdr for r in reports], "mean"),
        median_sdr=aggregate([r.median_sdr for r in reports], "median"),
    )


def emit_csv(reports: dict[str, SdrReport], frames_path: str | Path,
             summary_path: str | Path) -> None:
    """Frame rows: song_id, frame_index, t_start_s, sdr_db, included.
    Summary rows: song_id, mean_sdr, median_sdr."""
    if not reports:
        raise EvalError("no reports to emit")
    with open(frames_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["song_id", "frame_index", "t_start_s", "sdr_db",
                         "included"])
        for sid in sorted(reports):
            r = reports[sid]
            for i, sdr in r.frame_sdr:
                writer.writerow([
                    sid, i, repr(i * r.frame_s),
                    "" if sdr is None else repr(sdr),
                    "true" if sdr is not None else "false",
                ])
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["song_id", "mean_sdr", "median_sdr"])
        for sid in sorted(reports):
            r = reports[sid]
            writer.writerow([sid, repr(r.mean_sdr), repr(r.median_sdr)])
