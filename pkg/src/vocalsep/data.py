"""Dataset layout, split management, exemplar storage, and a procedural
desk-scale dataset generator with ground-truth stems.

Layout on disk:

    <root>/<split>/<song_id>/{mixture,vocals,accompaniment}.wav
    <root>/manifest.json        {"songs": [{"id", "split", "duration_s"}]}

Splits are named train / hitl / test.  Stems are float32 WAVs quantized to
a 2^-15 grid so mixture = vocals + accompaniment holds bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .dsp import AudioClip, DspError, Spectrogram, StftParams, slice_windows
from .model.network import TrainingExample

SPLITS = ("train", "hitl", "test")
ADDITIVITY_TOL = 1e-6


class DataError(Exception):
    pass


@dataclass(frozen=True)
class SongEntry:
    song_id: str
    mixture_path: Path
    vocals_path: Path | None
    accompaniment_path: Path | None
    duration_s: float

    def load(self, kind: str = "mixture") -> AudioClip:
        path = {
            "mixture": self.mixture_path,
            "vocals": self.vocals_path,
            "accompaniment": self.accompaniment_path,
        }[kind]
        if path is None:
            raise DataError(f"song {self.song_id} has no {kind} stem")
        role = kind if kind in dsp.ROLES else "mixture"
        return dsp.mixdown(dsp.load_wav(path)).with_role(role)


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    entries: tuple[SongEntry, ...]

    def __post_init__(self):
        if self.name not in SPLITS:
            raise DataError(f"unknown split name {self.name!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_id(self, song_id: str) -> SongEntry:
        for e in self.entries:
            if e.song_id == song_id:
                return e
        raise DataError(f"no song {song_id!r} in split {self.name}")


def _validate_stems(song_id: str, mixture: AudioClip, vocals: AudioClip,
                    accompaniment: AudioClip) -> None:
    if not (mixture.n_samples == vocals.n_samples == accompaniment.n_samples):
        raise DataError(
            f"song {song_id}: stem length mismatch "
            f"({mixture.n_samples}/{vocals.n_samples}/{accompaniment.n_samples})"
        )
    resid = np.abs(mixture.samples - vocals.samples - accompaniment.samples)
    worst = float(resid.max()) if resid.size else 0.0
    if worst > ADDITIVITY_TOL:
        raise DataError(
            f"song {song_id}: stems do not sum to the mixture "
            f"(max residual {worst:.3g} > {ADDITIVITY_TOL})"
        )


def load_dataset(root: str | Path, validate: bool = True):
    """Scan a dataset root, returning (train, hitl, test) splits."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    seen: dict[str, str] = {}
    splits = []
    for split_name in SPLITS:
        entries = []
        split_dir = root / split_name
        if split_dir.is_dir():
            for song_dir in sorted(split_dir.iterdir()):
                if not song_dir.is_dir():
                    continue
                song_id = song_dir.name
                if song_id in seen:
                    raise DataError(
                        f"duplicate song_id {song_id!r} in splits "
                        f"{seen[song_id]} and {split_name}"
                    )
                seen[song_id] = split_name
                mix = song_dir / "mixture.wav"
                if not mix.is_file():
                    raise DataError(f"song {song_id}: missing mixture.wav")
                voc = song_dir / "vocals.wav"
                acc = song_dir / "accompaniment.wav"
                mixture = dsp.mixdown(dsp.load_wav(mix))
                if validate and voc.is_file() and acc.is_file():
                    _validate_stems(
                        song_id, mixture,
                        dsp.mixdown(dsp.load_wav(voc)),
                        dsp.mixdown(dsp.load_wav(acc)),
                    )
                entries.append(SongEntry(
                    song_id=song_id,
                    mixture_path=mix,
                    vocals_path=voc if voc.is_file() else None,
                    accompaniment_path=acc if acc.is_file() else None,
                    duration_s=mixture.duration_seconds,
                ))
        splits.append(DatasetSplit(split_name, tuple(entries)))
    return tuple(splits)


# -- exemplar storage ---------------------------------------------------------


@dataclass
class ExemplarStore:
    """Replay memory: magnitude windows with oracle-vocal targets."""

    examples: list[TrainingExample]
    fraction: float
    seed: int

    def __len__(self) -> int:
        return len(self.examples)

    def sample(self, rng: np.random.Generator, count: int) -> list[TrainingExample]:
        if not self.examples:
            raise DataError("exemplar store is empty")
        replace = count > len(self.examples)
        idx = rng.choice(len(self.examples), size=count, replace=replace)
        return [self.examples[i] for i in idx]


def paired_windows(
    mix_spec: Spectrogram,
    voc_spec: Spectrogram,
    shape: tuple[int, int],
    count: int,
    rng: np.random.Generator,
    song_id: str,
    source: str = "original_train",
) -> list[TrainingExample]:
    """Draw aligned random (mixture, vocals) magnitude window pairs."""
    xs = slice_windows(mix_spec, shape, mode="random",
                       seed=int(rng.integers(0, 2 ** 31)), count=count,
                       song_id=song_id)
    voc_mag = np.abs(voc_spec.frames[: shape[0]])
    out = []
    for w in xs:
        start = w.origin[1]
        y = voc_mag[:, start: start + shape[1]]
        if y.shape[1] < shape[1]:  # padded window on a short song
            pad = np.zeros(shape, dtype=np.float32)
            pad[:, : y.shape[1]] = y
            y = pad
        out.append(TrainingExample(w, y.astype(np.float32), source=source))
    return out


def build_exemplar_store(
    train: DatasetSplit,
    pipeline,
    fraction: float = 1.0,
    per_song: int = 8,
    seed: int = 0,
) -> ExemplarStore:
    """Keep `fraction` of the train songs (floor), `per_song` windows each."""
    if len(train) == 0:
        raise DataError("cannot build an exemplar store from an empty train split")
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    n_keep = int(fraction * len(train))
    if n_keep == 0:
        raise DataError(
            f"fraction {fraction} of {len(train)} songs selects no songs"
        )
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(train), size=n_keep, replace=False)
    examples: list[TrainingExample] = []
    for i in sorted(picked):
        entry = train.entries[i]
        if entry.vocals_path is None:
            raise DataError(f"song {entry.song_id} has no vocal stem")
        mix_spec, voc_spec = pipeline.song_spectrograms(entry)
        examples.extend(paired_windows(
            mix_spec, voc_spec, pipeline.window_shape, per_song, rng,
            entry.song_id,
        ))
    return ExemplarStore(examples=examples, fraction=fraction, seed=seed)


# -- procedural dataset -------------------------------------------------------

# The melody sits a few octaves above the pad roots so the two stay
# separable even at coarse transform resolutions.
_SCALE_A = (659.3, 740.0, 830.6, 880.0, 987.8, 1046.5)
_ROOTS_A = (82.4, 98.0, 110.0, 130.8)
_ROOTS_B = (116.5, 138.6, 155.6, 185.0)


def _note(f0: float, n: int, rate: int, rng: np.random.Generator) -> np.ndarray:
    """A sung note: harmonic tone with vibrato and tremolo plus a short
    attack/release envelope.  The tremolo pulse is what visibly separates
    voice from the steady lead instrument at coarse resolutions."""
    t = np.arange(n) / rate
    vib = 1.0 + 0.02 * np.sin(2.0 * np.pi * 5.5 * t + rng.uniform(0, 2 * np.pi))
    phase = 2.0 * np.pi * np.cumsum(f0 * vib) / rate
    tone = np.zeros(n)
    for k, amp in ((1, 1.0), (2, 0.5), (3, 0.3)):
        tone += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    trem = 1.0 - 0.3 * 0.5 * (1.0 + np.sin(
        2.0 * np.pi * 5.5 * t + rng.uniform(0, 2 * np.pi)))
    env = np.ones(n)
    a = min(int(0.02 * rate), n // 2)
    r = min(int(0.04 * rate), n // 2)
    env[:a] = np.linspace(0.0, 1.0, a, endpoint=False)
    env[n - r:] = np.linspace(1.0, 0.0, r)
    return tone * trem * env


def _render_vocals(n: int, rate: int, rng: np.random.Generator):
    """Melody line with note gaps, >= 20% fully silent time in runs >= 8 s,
    and one pianissimo passage.

    Returns (signal, silent regions, soft regions) so the accompaniment can
    schedule its lead line over the gaps and quiet stretches.
    """
    length_s = n / rate
    v = np.zeros(n)
    # carve out silent regions first: one 8 s run minimum, more for long songs
    target_silence = max(0.2 * length_s, 8.0)
    regions = []
    cursor = rng.uniform(1.0, max(1.5, length_s * 0.25))
    while target_silence > 0 and cursor + 8.0 < length_s:
        dur = min(rng.uniform(8.0, 11.0), length_s - cursor - 0.5)
        if dur < 8.0:
            break
        regions.append((cursor, cursor + dur))
        target_silence -= dur
        cursor += dur + rng.uniform(6.0, 10.0)
    if not regions:  # fall back to a tail region
        regions = [(length_s - 8.5, length_s - 0.5)]

    def in_silence(t0, t1):
        return any(t0 < e and t1 > s for s, e in regions)

    # one soft (pianissimo) passage outside the silent regions
    soft: list[tuple[float, float]] = []
    for _ in range(24):
        s0 = rng.uniform(0.5, length_s - 6.0)
        s1 = s0 + rng.uniform(4.5, 6.5)
        if not in_silence(s0, s1) and s1 < length_s - 0.3:
            soft.append((s0, min(s1, length_s)))
            break

    def softness(t0, t1):
        return 0.15 if any(t0 < e and t1 > s for s, e in soft) else 1.0

    t = 0.2
    while t < length_s - 0.3:
        dur = rng.uniform(0.35, 0.8)
        if in_silence(t, t + dur):
            # jump past the region we touched
            t = min(e for s, e in regions if t + dur > s and t < e) + 0.05
            continue
        if rng.random() < 0.15:  # breath gap
            t += dur
            continue
        f0 = float(rng.choice(_SCALE_A)) * (1.5 if rng.random() < 0.1 else 1.0)
        i0 = int(t * rate)
        i1 = min(int((t + dur) * rate), n)
        if i1 > i0:
            level = rng.uniform(0.75, 0.95) * softness(t, t + dur)
            v[i0:i1] += level * _note(f0, i1 - i0, rate, rng)
        t += dur
    return v, regions, soft


_LEAD_SCALE_A = (698.5, 784.0, 932.3, 1108.7)
_LEAD_SCALE_B = (622.3, 830.6, 1046.5, 1244.5)


def _lead_note(f0: float, n: int, rate: int, rng: np.random.Generator,
               genre: str, trem_depth: float = 0.2) -> np.ndarray:
    """Vibrato-free tone in the vocal register with a slower pulse than the
    voice: the false-positive bait that separation models confuse with
    singing."""
    t = np.arange(n) / rate
    tone = np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
    if genre == "a":
        tone += 0.4 * np.sin(2 * np.pi * 2 * f0 * t + rng.uniform(0, 2 * np.pi))
    else:
        tone += 0.4 * np.sin(2 * np.pi * 3 * f0 * t + rng.uniform(0, 2 * np.pi))
    trem_rate = 4.2 if genre == "a" else 3.8
    trem = 1.0 - trem_depth * 0.5 * (1.0 + np.sin(
        2.0 * np.pi * trem_rate * t + rng.uniform(0, 2 * np.pi)))
    env = np.ones(n)
    edge = min(int(0.02 * rate), n // 2)
    env[:edge] = np.linspace(0, 1, edge, endpoint=False)
    env[-edge:] = np.linspace(1, 0, edge)
    return tone * trem * env


def _render_accompaniment(n: int, rate: int, rng: np.random.Generator,
                          genre: str,
                          lead_targets=(),
                          lead_avoid=(),
                          lead_gain: float = 0.45) -> np.ndarray:
    length_s = n / rate
    a = np.zeros(n)
    roots = _ROOTS_A if genre == "a" else _ROOTS_B
    # chord pads
    t = 0.0
    while t < length_s:
        dur = 2.0
        i0 = int(t * rate)
        i1 = min(int((t + dur) * rate), n)
        seg_t = np.arange(i1 - i0) / rate
        root = float(rng.choice(roots))
        pad = np.zeros(i1 - i0)
        if genre == "a":
            partials = [(k, 1.0 / k) for k in range(1, 9)]  # saw-like
        else:
            partials = [(k, 1.0 / k) for k in (1, 3, 5, 7, 9)]  # square-like
        for mult in (1.0, 1.5):
            for k, amp in partials:
                f = root * mult * k
                if f > 3800.0:
                    continue
                pad += amp * np.sin(2 * np.pi * f * seg_t + rng.uniform(0, 2 * np.pi))
        env = np.ones(i1 - i0)
        edge = min(int(0.05 * rate), (i1 - i0) // 2)
        env[:edge] = np.linspace(0, 1, edge, endpoint=False)
        env[-edge:] = np.linspace(1, 0, edge)
        a[i0:i1] += 0.35 * pad * env
        t += dur
    # percussion: filtered noise bursts on a 0.5 s grid
    burst_len = int(0.07 * rate)
    decay = np.exp(-np.linspace(0, 6, burst_len))
    for beat in np.arange(0.0, length_s, 0.5):
        i0 = int(beat * rate)
        if i0 + burst_len > n:
            break
        noise = rng.standard_normal(burst_len)
        if genre == "a":  # dull thump: smooth the noise
            kernel = np.ones(8) / 8.0
            noise = np.convolve(noise, kernel, mode="same")
        else:  # bright tick: difference the noise
            noise = np.diff(noise, prepend=noise[0])
        a[i0: i0 + burst_len] += 0.4 * noise * decay
    # lead line: random phrases plus one over every requested target region
    if lead_gain <= 0.0:
        return a
    scale = _LEAD_SCALE_A if genre == "a" else _LEAD_SCALE_B
    phrases = list(lead_targets)

    def blocked(t0, t1):
        return any(t0 < e and t1 > s for s, e in lead_avoid)

    t = rng.uniform(0.0, 4.0)
    while t < length_s - 2.0:
        dur = rng.uniform(5.0, 9.0)
        if rng.random() < 0.45 and not blocked(t, t + dur):
            phrases.append((t, min(t + dur, length_s)))
        t += dur + rng.uniform(1.0, 4.0)
    for p0, p1 in phrases:
        t = p0
        while t < p1 - 0.2:
            dur = min(rng.uniform(0.5, 1.1), p1 - t)
            f0 = float(rng.choice(scale))
            i0 = int(t * rate)
            i1 = min(int((t + dur) * rate), n)
            if i1 > i0:
                a[i0:i1] += lead_gain * rng.uniform(0.8, 1.0) * _lead_note(
                    f0, i1 - i0, rate, rng, genre)
            t += dur
    return a


def _quantize(x: np.ndarray) -> np.ndarray:
    """Snap to a 2^-15 grid so stems stay exactly summable as float32."""
    return np.round(x * 32768.0) / 32768.0


def generate_procedural_dataset(
    out_dir: str | Path,
    seed: int,
    n_train: int,
    n_hitl: int,
    n_test: int,
    song_len_s: float = 30.0,
    sample_rate: int = 22050,
    genre: str = "a",
    vocal_gain: float = 0.16,
    accomp_gain: float = 0.60,
) -> Path:
    """Render a labeled dataset of harmonic "songs" with ground-truth stems.

    Vocals are sparse melodic lines with guaranteed long silent runs;
    accompaniment is denser chord pads plus percussion, deliberately louder
    than the vocals.  Two genres differ in pad timbre and percussion color.

    The hitl and test splits additionally carry a lead instrument in the
    vocal register that the train split lacks: a separation model trained
    here will pass it through as false-positive "vocals", which is the
    failure mode the annotation workflow exists to correct.
    """
    if min(n_train, n_hitl, n_test) < 0:
        raise DataError("song counts must be >= 0")
    if song_len_s < 10:
        raise DataError(f"song_len_s must be >= 10, got {song_len_s}")
    if genre not in ("a", "b"):
        raise DataError(f"genre must be 'a' or 'b', got {genre!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = int(song_len_s * sample_rate)
    manifest = {"songs": []}
    counts = {"train": n_train, "hitl": n_hitl, "test": n_test}
    for split, count in counts.items():
        for i in range(count):
            song_id = f"{split}_{i:03d}_{genre}"
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, SPLITS.index(split), i,
                                        ord(genre)])
            )
            raw_vocals, silence, soft = _render_vocals(n, sample_rate, rng)
            vocals = _quantize(vocal_gain * raw_vocals)
            # The annotation and held-out songs come from a different "mix
            # style" than the training corpus: a lead instrument the train
            # split never contains, and a less accompaniment-heavy balance.
            # On the annotation split the lead shadows the quiet verse (the
            # overlap users most want fixed); held-out songs keep their
            # quiet verse clean, so over-suppression shows up in their
            # scores.
            lead_gain = 0.0 if split == "train" else 0.45
            split_accomp = accomp_gain if split == "train" else accomp_gain * 0.58
            targets, avoid = list(silence), []
            if split == "hitl":
                targets += list(soft)
            else:
                avoid = list(soft)
            accomp = _quantize(
                split_accomp
                * _render_accompaniment(n, sample_rate, rng, genre,
                                        lead_targets=targets,
                                        lead_avoid=avoid,
                                        lead_gain=lead_gain)
            )
            peak = max(np.abs(vocals + accomp).max(), 1e-9)
            if peak > 0.98:  # tame rare hot mixes, preserving the grid
                k = int(peak / 0.98) + 1
                vocals = np.round(vocals * 32768.0 / k) / 32768.0
                accomp = np.round(accomp * 32768.0 / k) / 32768.0
            mixture = vocals + accomp
            song_dir = out_dir / split / song_id
            song_dir.mkdir(parents=True, exist_ok=True)
            dsp.save_wav(AudioClip(vocals, sample_rate, "vocals"),
                         song_dir / "vocals.wav")
            dsp.save_wav(AudioClip(accomp, sample_rate, "accompaniment"),
                         song_dir / "accompaniment.wav")
            dsp.save_wav(AudioClip(mixture, sample_rate, "mixture"),
                         song_dir / "mixture.wav")
            manifest["songs"].append({
                "id": song_id,
                "split": split,
                "duration_s": song_len_s,
            })
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return out_dir
