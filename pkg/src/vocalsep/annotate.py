"""Annotation data model: marked false-positive segments, the 6-second
keep rule, JSON persistence, and a simulated annotator for headless runs.

A segment marks a stretch of the *estimated* vocals that should have been
silence.  Raw marks get clamped, merged and filtered by `normalize`; only
normalized sets feed adaptation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import AudioClip, DspError

MIN_SEGMENT_S = 6.0
MERGE_GAP_S = 0.1


class AnnotationError(Exception):
    pass


@dataclass(frozen=True)
class Segment:
    song_id: str
    start_s: float
    end_s: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class AnnotationSet:
    song_id: str
    segments: tuple[Segment, ...]
    annotator: str = "human"
    created_at: str | None = None

    def __post_init__(self):
        if self.annotator not in ("human", "simulated"):
            raise AnnotationError(f"unknown annotator {self.annotator!r}")
        prev_end = None
        for seg in self.segments:
            if seg.song_id != self.song_id:
                raise AnnotationError(
                    f"segment song_id {seg.song_id!r} != set song_id {self.song_id!r}"
                )
            if not seg.start_s < seg.end_s:
                raise AnnotationError(
                    f"segment ({seg.start_s}, {seg.end_s}) has start >= end"
                )
            if prev_end is not None and seg.start_s < prev_end:
                raise AnnotationError("segments overlap or are unsorted")
            prev_end = seg.end_s


@dataclass
class NormalizeResult:
    """Outcome of normalization, accounting for every submitted mark.

    `dispositions` has one entry per raw segment, in submission order:
    status "kept" or "dropped" (with the merged segment it landed in) or
    "rejected" (with a reason).  kept + dropped + rejected == submitted.
    """

    annotation: AnnotationSet
    kept: list[Segment]
    dropped: list[tuple[Segment, str]]
    dispositions: list[dict]

    @property
    def n_submitted(self) -> int:
        return len(self.dispositions)

    @property
    def rejected(self) -> list[tuple[int, str]]:
        return [(i, d["reason"]) for i, d in enumerate(self.dispositions)
                if d["status"] == "rejected"]


def normalize(
    song_id: str,
    raw: list[tuple[float, float]] | list[Segment],
    song_duration: float,
    annotator: str = "human",
    created_at: str | None = None,
) -> NormalizeResult:
    """Clamp to song bounds, merge near-touching marks, keep >= 6 s only."""
    dispositions: list[dict] = [None] * len(raw)
    pairs = []
    for i, seg in enumerate(raw):
        if isinstance(seg, Segment):
            start, end = seg.start_s, seg.end_s
        else:
            start, end = float(seg[0]), float(seg[1])
        start = min(max(start, 0.0), song_duration)
        end = min(max(end, 0.0), song_duration)
        if start >= end:
            dispositions[i] = {
                "status": "rejected",
                "reason": f"start >= end after clamping to [0, {song_duration:g}]",
            }
            continue
        pairs.append((start, end, i))
    pairs.sort()

    merged: list[tuple[list[float], list[int]]] = []
    for start, end, i in pairs:
        if merged and start < merged[-1][0][1] + MERGE_GAP_S:
            merged[-1][0][1] = max(merged[-1][0][1], end)
            merged[-1][1].append(i)
        else:
            merged.append(([start, end], [i]))

    kept: list[Segment] = []
    dropped: list[tuple[Segment, str]] = []
    for (start, end), members in merged:
        seg = Segment(song_id, start, end)
        if seg.duration_s >= MIN_SEGMENT_S:
            kept.append(seg)
            status, reason = "kept", None
        else:
            reason = (f"below {MIN_SEGMENT_S:g} s minimum "
                      f"({seg.duration_s:.2f} s)")
            dropped.append((seg, reason))
            status = "dropped"
        for i in members:
            dispositions[i] = {
                "status": status,
                "reason": reason,
                "resolved": {"start_s": start, "end_s": end},
            }
    return NormalizeResult(
        annotation=AnnotationSet(song_id, tuple(kept), annotator, created_at),
        kept=kept,
        dropped=dropped,
        dispositions=dispositions,
    )


def save_annotations(annotation: AnnotationSet, path: str | Path) -> None:
    doc = {
        "song_id": annotation.song_id,
        "annotator": annotation.annotator,
        "segments": [
            {"start_s": s.start_s, "end_s": s.end_s} for s in annotation.segments
        ],
    }
    if annotation.created_at is not None:
        doc["created_at"] = annotation.created_at
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_annotations(path: str | Path) -> AnnotationSet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}: malformed JSON ({exc})") from exc
    try:
        song_id = doc["song_id"]
        annotator = doc["annotator"]
        raw_segments = doc["segments"]
    except (KeyError, TypeError) as exc:
        raise AnnotationError(f"{path}: missing field {exc}") from exc
    segments = []
    for i, seg in enumerate(raw_segments):
        try:
            start, end = float(seg["start_s"]), float(seg["end_s"])
        except (KeyError, TypeError) as exc:
            raise AnnotationError(f"{path}: segment {i} malformed ({exc})") from exc
        if not start < end:
            raise AnnotationError(
                f"{path}: segment {i} has end_s <= start_s ({start}, {end})"
            )
        segments.append(Segment(song_id, start, end))
    return AnnotationSet(song_id, tuple(segments), annotator,
                         doc.get("created_at"))


def _frame_rms_db(x: np.ndarray) -> float:
    rms = float(np.sqrt(np.mean(x * x)))
    if rms <= 0.0:
        return -np.inf
    return 20.0 * np.log10(rms)


def simulate_annotator(
    oracle_vocals: AudioClip,
    predicted_vocals: AudioClip,
    silence_db: float = -60.0,
    activity_db: float = -40.0,
    frame_s: float = 0.5,
    song_id: str = "",
) -> AnnotationSet:
    """Stand-in for a human: mark stretches where the prediction is loud
    but the true vocals are silent, then apply the normal 6 s rule."""
    if oracle_vocals.n_samples != predicted_vocals.n_samples:
        raise DspError(
            f"length mismatch: oracle {oracle_vocals.n_samples} vs "
            f"prediction {predicted_vocals.n_samples}"
        )
    if oracle_vocals.sample_rate != predicted_vocals.sample_rate:
        raise DspError("sample rate mismatch between oracle and prediction")
    rate = oracle_vocals.sample_rate
    frame_len = max(1, int(round(frame_s * rate)))
    n_frames = oracle_vocals.n_samples // frame_len
    marked = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        a, b = i * frame_len, (i + 1) * frame_len
        if (_frame_rms_db(oracle_vocals.samples[a:b]) < silence_db
                and _frame_rms_db(predicted_vocals.samples[a:b]) > activity_db):
            marked[i] = True

    raw: list[tuple[float, float]] = []
    run_start = None
    for i, flag in enumerate(marked):
        if flag and run_start is None:
            run_start = i
        elif not flag and run_start is not None:
            raw.append((run_start * frame_s, i * frame_s))
            run_start = None
    if run_start is not None:
        raw.append((run_start * frame_s, n_frames * frame_s))

    duration = oracle_vocals.duration_seconds
    return normalize(song_id, raw, duration, annotator="simulated").annotation
