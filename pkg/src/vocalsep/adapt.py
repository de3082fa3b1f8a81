"""Base-model training and the two replay-based adaptation algorithms.

Both adaptation schemes interleave a trickle of new points (x per batch)
with replayed exemplars from the original training data (y per batch) at a
learning rate ten times below the base rate, which is what keeps the model
from overfitting the new material or forgetting the old.

  zero_target  — windows cut from user-marked false-positive regions with
                 an all-zero target magnitude.
  synthetic    — windows from constructed tracks: the marked regions looped
                 into an artificial accompaniment under real train vocals,
                 so targets carry actual vocal information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import dsp
from .annotate import AnnotationSet, simulate_annotator
from .data import DataError, DatasetSplit, ExemplarStore, SongEntry, paired_windows
from .dsp import AudioClip, MagWindow
from .model import AdamState, MaskNet, NetConfig, TrainingExample, adam_step, l1_loss
from .pipeline import PipelineConfig, separate_vocals

BASE_LR = 1e-4
ADAPT_LR = 1e-5  # ten times lower than the base rate
DEFAULT_CROPS_PER_SONG = 96


class AdaptError(Exception):
    pass


@dataclass(frozen=True)
class AdaptConfig:
    method: str = "zero_target"
    lr: float = ADAPT_LR
    epochs: int = 1
    x: int = 1
    y: int = 15
    z: int = 1
    exemplar_fraction: float | None = None  # None -> per-method default
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("zero_target", "synthetic"):
            raise AdaptError(f"unknown method {self.method!r}")
        if self.x < 1 or self.y < 0 or self.z < 1:
            raise AdaptError(f"need x >= 1, y >= 0, z >= 1; got {self.x}/{self.y}/{self.z}")
        if self.lr <= 0:
            raise AdaptError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise AdaptError(f"epochs must be >= 0, got {self.epochs}")

    @property
    def effective_fraction(self) -> float:
        if self.exemplar_fraction is not None:
            return self.exemplar_fraction
        return 1.0 if self.method == "zero_target" else 0.2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["exemplar_fraction"] = self.effective_fraction
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptConfig":
        known = {k: d[k] for k in
                 ("method", "lr", "epochs", "x", "y", "z",
                  "exemplar_fraction", "seed") if k in d}
        return cls(**known)


@dataclass
class AdaptResult:
    net: MaskNet
    batch_audit: list[list[tuple[str, str]]]  # per batch: (source, song_id)
    losses: list[float]
    warnings: list[str] = field(default_factory=list)


# -- base training ------------------------------------------------------------


def train_base(
    train: DatasetSplit,
    net_config: NetConfig,
    epochs: int,
    seed: int,
    pipeline: PipelineConfig,
    lr: float = BASE_LR,
    batch_size: int = 16,
    crops_per_song: int = DEFAULT_CROPS_PER_SONG,
):
    """Train a fresh mask model on the labeled train split.

    Each epoch draws `crops_per_song` seeded random mixture/vocal window
    pairs per song.  Returns (net, per-epoch mean loss history).
    """
    if len(train) == 0:
        raise DataError("train split is empty")
    net = MaskNet(net_config)
    net.reseed(seed + 1)
    rng = np.random.default_rng(seed)
    state = AdamState.for_net(net, lr=lr)
    history: list[float] = []
    if epochs == 0:
        return net, history

    specs = []
    for entry in sorted(train.entries, key=lambda e: e.song_id):
        if entry.vocals_path is None:
            raise DataError(f"song {entry.song_id} has no vocal stem")
        specs.append((entry.song_id, *pipeline.song_spectrograms(entry)))

    for epoch in range(epochs):
        examples: list[TrainingExample] = []
        for song_id, mix_spec, voc_spec in specs:
            examples.extend(paired_windows(
                mix_spec, voc_spec, pipeline.window_shape, crops_per_song,
                rng, song_id,
            ))
        rng.shuffle(examples)
        epoch_losses = []
        for i in range(0, len(examples), batch_size):
            batch = examples[i: i + batch_size]
            loss, grads = l1_loss(net, batch)
            if not math.isfinite(loss):
                raise AdaptError(
                    f"non-finite loss at epoch {epoch}, batch {i // batch_size}"
                )
            adam_step(net, grads, state)
            epoch_losses.append(loss)
        history.append(float(np.mean(epoch_losses)))
    return net, history


# -- zero-vocal-target adaptation ---------------------------------------------


def build_zero_target_examples(
    entries: list[SongEntry],
    annotations: dict[str, AnnotationSet],
    pipeline: PipelineConfig,
    stride_frames: int | None = None,
) -> list[TrainingExample]:
    """Mixture windows inside marked regions, each with an all-zero target.

    Segments shorter than one window are tiled cyclically to fill one.
    """
    freq_crop, time_win = pipeline.window_shape
    stride = stride_frames or time_win
    out: list[TrainingExample] = []
    for entry in sorted(entries, key=lambda e: e.song_id):
        ann = annotations.get(entry.song_id)
        if ann is None or not ann.segments:
            continue
        spec = pipeline.spectrogram(entry.load("mixture"))
        mag = np.abs(spec.frames[:freq_crop]).astype(np.float32)
        zero = np.zeros((freq_crop, time_win), dtype=np.float32)
        for seg in ann.segments:
            f0 = pipeline.seconds_to_frame(seg.start_s)
            f1 = min(pipeline.seconds_to_frame(seg.end_s), spec.n_frames)
            if f0 < 0 or f0 >= spec.n_frames:
                raise AdaptError(
                    f"segment ({seg.start_s}, {seg.end_s}) outside song "
                    f"{entry.song_id}"
                )
            span = mag[:, f0:f1]
            if span.shape[1] < time_win:
                reps = int(np.ceil(time_win / span.shape[1]))
                tiled = np.tile(span, (1, reps))[:, :time_win]
                out.append(TrainingExample(
                    MagWindow(tiled, origin=(entry.song_id, f0)),
                    zero, source="zero_target",
                ))
                continue
            starts = list(range(0, span.shape[1] - time_win + 1, stride))
            for s in starts:
                out.append(TrainingExample(
                    MagWindow(span[:, s: s + time_win],
                              origin=(entry.song_id, f0 + s)),
                    zero, source="zero_target",
                ))
    return out


def _replay_batches(
    net: MaskNet,
    new_example_groups,
    store: ExemplarStore,
    cfg: AdaptConfig,
    rng: np.random.Generator,
    state: AdamState,
):
    """Shared batch loop: each batch is x new points + y sampled exemplars."""
    audit: list[list[tuple[str, str]]] = []
    losses: list[float] = []
    for group in new_example_groups:
        batch = list(group)
        if cfg.y > 0:
            batch.extend(store.sample(rng, cfg.y))
        loss, grads = l1_loss(net, batch)
        if not math.isfinite(loss):
            raise AdaptError(f"non-finite loss in adaptation batch {len(audit)}")
        adam_step(net, grads, state)
        audit.append([(ex.source, ex.song_id) for ex in batch])
        losses.append(loss)
    return audit, losses


def adapt_zero_target(
    net: MaskNet,
    hitl_examples: list[TrainingExample],
    store: ExemplarStore,
    cfg: AdaptConfig,
) -> AdaptResult:
    """Replay-based finetuning on zero-target windows.

    Returns a new model; the input model is left untouched.
    """
    if cfg.method != "zero_target":
        raise AdaptError(f"config method is {cfg.method!r}, expected zero_target")
    if not hitl_examples:
        return AdaptResult(net=net, batch_audit=[], losses=[],
                           warnings=["no marked regions: adaptation is a no-op"])
    adapted = net.copy()
    adapted.reseed(cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_net(adapted, lr=cfg.lr)
    audit: list[list[tuple[str, str]]] = []
    losses: list[float] = []
    for _ in range(cfg.epochs):
        order = list(hitl_examples)
        rng.shuffle(order)
        groups = [order[i: i + cfg.x] for i in range(0, len(order), cfg.x)]
        a, l = _replay_batches(adapted, groups, store, cfg, rng, state)
        audit.extend(a)
        losses.extend(l)
    return AdaptResult(net=adapted, batch_audit=audit, losses=losses)


# -- synthetic-track adaptation -------------------------------------------------


@dataclass(frozen=True)
class SyntheticTrack:
    mixture: AudioClip
    oracle_vocals: AudioClip
    accompaniment: AudioClip
    provenance: tuple[str, tuple, str]  # (hitl song, segments, train song)

    def __post_init__(self):
        n = self.mixture.n_samples
        if not (self.oracle_vocals.n_samples == n
                and self.accompaniment.n_samples == n):
            raise AdaptError("synthetic track stems have unequal lengths")
        resid = np.abs(
            self.mixture.samples
            - self.oracle_vocals.samples
            - self.accompaniment.samples
        ).max()
        if resid > 1e-9:
            raise AdaptError(f"synthetic track is not additive (residual {resid:g})")


def build_synthetic_track(
    hitl_mixture: AudioClip,
    segments,
    train_vocals: AudioClip,
    seed: int = 0,
    hitl_song_id: str = "",
    train_song_id: str = "",
    fade_s: float = 0.010,
) -> SyntheticTrack:
    """Loop the marked regions into an artificial accompaniment and lay the
    train song's oracle vocals on top.

    The loop gets a linear fade at each seam (length preserved, no clicks);
    no loudness rescaling is applied anywhere.
    """
    if not segments:
        raise AdaptError("cannot build a synthetic track from zero segments")
    if hitl_mixture.sample_rate != train_vocals.sample_rate:
        raise AdaptError(
            f"sample rate mismatch: {hitl_mixture.sample_rate} vs "
            f"{train_vocals.sample_rate}"
        )
    rate = hitl_mixture.sample_rate
    pieces = []
    for seg in sorted(segments, key=lambda s: s.start_s):
        a = int(round(seg.start_s * rate))
        b = min(int(round(seg.end_s * rate)), hitl_mixture.n_samples)
        if b > a:
            pieces.append(hitl_mixture.samples[a:b])
    loop = np.concatenate(pieces) if pieces else np.empty(0)
    if loop.size == 0:
        raise AdaptError("marked regions produced an empty loop")

    fade = min(int(fade_s * rate), loop.size // 2)
    if fade > 0:
        loop = loop.copy()
        ramp = np.linspace(0.0, 1.0, fade, endpoint=False)
        loop[:fade] *= ramp
        loop[-fade:] *= ramp[::-1]

    target = train_vocals.n_samples
    reps = int(np.ceil(target / loop.size))
    accomp = np.tile(loop, reps)[:target]
    vocals = train_vocals.samples
    mixture = accomp + vocals
    return SyntheticTrack(
        mixture=AudioClip(mixture, rate, "mixture"),
        oracle_vocals=AudioClip(vocals, rate, "vocals"),
        accompaniment=AudioClip(accomp, rate, "accompaniment"),
        provenance=(hitl_song_id, tuple((s.start_s, s.end_s) for s in segments),
                    train_song_id),
    )


def adapt_synthetic(
    net: MaskNet,
    hitl_entries: list[SongEntry],
    annotations: dict[str, AnnotationSet],
    train: DatasetSplit,
    store: ExemplarStore,
    cfg: AdaptConfig,
    pipeline: PipelineConfig,
) -> AdaptResult:
    """Per annotated song: build one synthetic track against a randomly
    chosen train song, then z batches of x track windows + y exemplars."""
    if cfg.method != "synthetic":
        raise AdaptError(f"config method is {cfg.method!r}, expected synthetic")
    if len(train) == 0:
        raise DataError("train split is empty")
    annotated = [e for e in sorted(hitl_entries, key=lambda e: e.song_id)
                 if annotations.get(e.song_id) and annotations[e.song_id].segments]
    if not annotated:
        return AdaptResult(net=net, batch_audit=[], losses=[],
                           warnings=["no marked regions: adaptation is a no-op"])
    adapted = net.copy()
    adapted.reseed(cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_net(adapted, lr=cfg.lr)
    train_entries = sorted(train.entries, key=lambda e: e.song_id)
    audit: list[list[tuple[str, str]]] = []
    losses: list[float] = []
    for _ in range(cfg.epochs):
        order = list(annotated)
        rng.shuffle(order)
        for entry in order:
            ann = annotations[entry.song_id]
            donor = train_entries[int(rng.integers(0, len(train_entries)))]
            track = build_synthetic_track(
                pipeline.prepare(entry.load("mixture")),
                ann.segments,
                pipeline.prepare(donor.load("vocals")),
                seed=int(rng.integers(0, 2 ** 31)),
                hitl_song_id=entry.song_id,
                train_song_id=donor.song_id,
            )
            mix_spec = dsp.stft(track.mixture, pipeline.stft)
            voc_spec = dsp.stft(track.oracle_vocals, pipeline.stft)
            groups = []
            for _ in range(cfg.z):
                crops = paired_windows(
                    mix_spec, voc_spec, pipeline.window_shape, cfg.x, rng,
                    entry.song_id, source="synthetic",
                )
                groups.append(crops)
            a, l = _replay_batches(adapted, groups, store, cfg, rng, state)
            audit.extend(a)
            losses.extend(l)
    return AdaptResult(net=adapted, batch_audit=audit, losses=losses)


# -- orchestration --------------------------------------------------------------


def run_adaptation(
    net: MaskNet,
    hitl_entries: list[SongEntry],
    annotations: dict[str, AnnotationSet],
    train: DatasetSplit,
    store: ExemplarStore,
    cfg: AdaptConfig,
    pipeline: PipelineConfig,
    stride_frames: int | None = None,
) -> AdaptResult:
    """Dispatch to the configured adaptation method."""
    if cfg.method == "zero_target":
        examples = build_zero_target_examples(
            hitl_entries, annotations, pipeline, stride_frames,
        )
        return adapt_zero_target(net, examples, store, cfg)
    return adapt_synthetic(net, hitl_entries, annotations, train, store, cfg,
                           pipeline)


def annotate_with_model(
    net: MaskNet,
    entries: list[SongEntry],
    pipeline: PipelineConfig,
    silence_db: float = -60.0,
    activity_db: float = -40.0,
    frame_s: float = 0.5,
) -> dict[str, AnnotationSet]:
    """Run the simulated annotator against the model's own estimates."""
    out = {}
    for entry in sorted(entries, key=lambda e: e.song_id):
        if entry.vocals_path is None:
            raise DataError(f"song {entry.song_id} has no vocal stem to compare")
        estimate = separate_vocals(net, entry.load("mixture"), pipeline)
        oracle = pipeline.prepare(entry.load("vocals"))
        out[entry.song_id] = simulate_annotator(
            oracle, estimate, silence_db=silence_db, activity_db=activity_db,
            frame_s=frame_s, song_id=entry.song_id,
        )
    return out


def iterate_hitl(
    net: MaskNet,
    hitl_batches: list[list[SongEntry]],
    train: DatasetSplit,
    test: DatasetSplit,
    store: ExemplarStore,
    cfg: AdaptConfig,
    pipeline: PipelineConfig,
    frame_s: float = 1.0,
):
    """Repeat the annotate -> adapt -> evaluate loop over disjoint song
    batches, scoring the fixed test split after each round.

    Returns [(model, SplitReport), ...], one entry per batch.
    """
    from .evaluate import evaluate_model  # local import to avoid a cycle

    seen: set[str] = set()
    for batch in hitl_batches:
        ids = {e.song_id for e in batch}
        if ids & seen:
            raise AdaptError(f"batches are not disjoint: {sorted(ids & seen)}")
        seen |= ids

    trajectory = []
    current = net
    for i, batch in enumerate(hitl_batches):
        annotations = annotate_with_model(current, batch, pipeline)
        result = run_adaptation(
            current, batch, annotations, train, store,
            AdaptConfig(**{**cfg.to_dict(), "seed": cfg.seed + i}),
            pipeline,
        )
        current = result.net
        report = evaluate_model(current, test, pipeline, frame_s=frame_s)
        trajectory.append((current, report))
    return trajectory
