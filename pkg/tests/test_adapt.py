import numpy as np
import pytest

from vocalsep import adapt as amod
from vocalsep.adapt import (
    AdaptConfig,
    AdaptError,
    adapt_synthetic,
    adapt_zero_target,
    build_synthetic_track,
    build_zero_target_examples,
    iterate_hitl,
    run_adaptation,
    train_base,
)
from vocalsep.annotate import AnnotationSet, Segment, normalize
from vocalsep.data import DatasetSplit, build_exemplar_store
from vocalsep.dsp import AudioClip
from vocalsep.model import MaskNet
from vocalsep.pipeline import PipelineConfig
from tests.conftest import desk_config, desk_pipeline


def annotation(song_id, pairs, duration=30.0):
    return normalize(song_id, pairs, duration, annotator="simulated").annotation


@pytest.fixture(scope="module")
def store(mini_splits):
    train, _, _ = mini_splits
    return build_exemplar_store(train, desk_pipeline(), fraction=1.0, seed=3)


class TestAdaptConfig:
    def test_defaults_match_canonical_values(self):
        cfg = AdaptConfig()
        assert (cfg.x, cfg.y, cfg.z) == (1, 15, 1)
        assert cfg.lr == 1e-5
        assert cfg.epochs == 1

    def test_method_fraction_defaults(self):
        assert AdaptConfig(method="zero_target").effective_fraction == 1.0
        assert AdaptConfig(method="synthetic").effective_fraction == 0.2
        assert AdaptConfig(method="synthetic",
                           exemplar_fraction=0.5).effective_fraction == 0.5

    def test_validation(self):
        with pytest.raises(AdaptError):
            AdaptConfig(method="magic")
        with pytest.raises(AdaptError):
            AdaptConfig(x=0)
        with pytest.raises(AdaptError):
            AdaptConfig(lr=0)

    def test_dict_roundtrip(self):
        cfg = AdaptConfig(method="synthetic", seed=9, z=4)
        back = AdaptConfig.from_dict(cfg.to_dict())
        assert back.z == 4 and back.effective_fraction == 0.2


class TestTrainBase:
    def test_zero_epochs_returns_fresh_init(self, mini_splits):
        train, _, _ = mini_splits
        cfg = desk_config(seed=8)
        net, history = train_base(train, cfg, epochs=0, seed=8,
                                  pipeline=desk_pipeline(cfg))
        fresh = MaskNet(cfg)
        assert history == []
        assert all(np.array_equal(net.params[k], fresh.params[k])
                   for k in net.params)

    def test_same_seed_same_history(self, mini_splits):
        train, _, _ = mini_splits
        cfg = desk_config(seed=4)
        pipe = desk_pipeline(cfg)
        _, h1 = train_base(train, cfg, epochs=2, seed=4, pipeline=pipe,
                           crops_per_song=16)
        _, h2 = train_base(train, cfg, epochs=2, seed=4, pipeline=pipe,
                           crops_per_song=16)
        assert h1 == h2

    def test_loss_decreases(self, mini_splits):
        train, _, _ = mini_splits
        cfg = desk_config(seed=4)
        _, history = train_base(train, cfg, epochs=3, seed=4,
                                pipeline=desk_pipeline(cfg), crops_per_song=32)
        assert history[-1] < history[0]


class TestZeroTargetExamples:
    def test_paper_scale_window_arithmetic(self, tmp_path):
        # 12 s segment against the full-scale transform: one 512-frame
        # window (512 * 512 / 22050 ~ 11.9 s) fits exactly once
        from vocalsep import data as dmod
        from vocalsep.model import NetConfig

        root = tmp_path / "ds"
        dmod.generate_procedural_dataset(root, seed=2, n_train=0, n_hitl=1,
                                         n_test=0, song_len_s=14.0)
        _, hitl, _ = dmod.load_dataset(root)
        full = PipelineConfig.for_net(
            NetConfig(input_shape=(1024, 512), depth=6, base_channels=16),
            sample_rate=22050,
        )
        assert full.stft.n_fft == 2048 and full.stft.hop == 512
        entry = hitl.entries[0]
        anns = {entry.song_id: annotation(entry.song_id, [(1.0, 13.0)], 14.0)}
        examples = build_zero_target_examples([entry], anns, full)
        assert len(examples) == 1

    def test_empty_annotations(self, mini_splits):
        _, hitl, _ = mini_splits
        assert build_zero_target_examples(list(hitl.entries), {},
                                          desk_pipeline()) == []

    def test_targets_identically_zero(self, mini_splits):
        _, hitl, _ = mini_splits
        entry = hitl.entries[0]
        anns = {entry.song_id: annotation(entry.song_id, [(2.0, 12.0)])}
        examples = build_zero_target_examples([entry], anns, desk_pipeline())
        assert examples
        for ex in examples:
            assert ex.source == "zero_target"
            assert np.abs(ex.y).max() == 0.0
            assert ex.song_id == entry.song_id

    def test_short_segment_tiles_cyclically(self, mini_splits):
        # a segment shorter than one window still yields one full window
        _, hitl, _ = mini_splits
        entry = hitl.entries[0]
        pipe = desk_pipeline()
        short = AnnotationSet(entry.song_id,
                              (Segment(entry.song_id, 2.0, 2.2),), "human")
        examples = build_zero_target_examples([entry], {entry.song_id: short},
                                              pipe)
        assert len(examples) == 1
        assert examples[0].x.shape == pipe.window_shape

    def test_stride_densifies(self, mini_splits):
        _, hitl, _ = mini_splits
        entry = hitl.entries[0]
        anns = {entry.song_id: annotation(entry.song_id, [(2.0, 12.0)])}
        sparse = build_zero_target_examples([entry], anns, desk_pipeline())
        dense = build_zero_target_examples([entry], anns, desk_pipeline(),
                                           stride_frames=8)
        assert len(dense) > 4 * len(sparse)


class TestAdaptZeroTarget:
    def _examples(self, mini_splits, pipe):
        _, hitl, _ = mini_splits
        entries = list(hitl.entries)
        anns = {e.song_id: annotation(e.song_id, [(2.0, 12.0)])
                for e in entries}
        return build_zero_target_examples(entries, anns, pipe)

    def test_batch_composition(self, tiny_trained_net, mini_splits, store):
        net, pipe = tiny_trained_net
        examples = self._examples(mini_splits, pipe)
        result = adapt_zero_target(net, examples, store,
                                   AdaptConfig(method="zero_target", seed=1))
        assert len(result.batch_audit) == len(examples)
        for batch in result.batch_audit:
            sources = [s for s, _ in batch]
            assert len(batch) == 16
            assert sources.count("zero_target") == 1
            assert sources.count("original_train") == 15

    def test_no_replay_degenerate(self, tiny_trained_net, mini_splits, store):
        net, pipe = tiny_trained_net
        examples = self._examples(mini_splits, pipe)
        result = adapt_zero_target(net, examples, store,
                                   AdaptConfig(method="zero_target", y=0, seed=1))
        assert all(len(b) == 1 for b in result.batch_audit)

    def test_empty_examples_noop_with_warning(self, tiny_trained_net, store):
        net, _ = tiny_trained_net
        result = adapt_zero_target(net, [], store,
                                   AdaptConfig(method="zero_target"))
        assert result.net is net
        assert result.warnings and "no-op" in result.warnings[0]

    def test_non_destructive(self, tiny_trained_net, mini_splits, store):
        net, pipe = tiny_trained_net
        before = {k: v.copy() for k, v in net.params.items()}
        examples = self._examples(mini_splits, pipe)
        result = adapt_zero_target(net, examples, store,
                                   AdaptConfig(method="zero_target", seed=1))
        assert result.net is not net
        assert all(np.array_equal(net.params[k], before[k]) for k in before)
        assert any(not np.array_equal(result.net.params[k], before[k])
                   for k in before)

    def test_deterministic(self, tiny_trained_net, mini_splits, store):
        net, pipe = tiny_trained_net
        examples = self._examples(mini_splits, pipe)
        cfg = AdaptConfig(method="zero_target", seed=7)
        a = adapt_zero_target(net, examples, store, cfg)
        b = adapt_zero_target(net, examples, store, cfg)
        assert all(np.array_equal(a.net.params[k], b.net.params[k])
                   for k in a.net.params)

    def test_wrong_method_rejected(self, tiny_trained_net, store):
        net, _ = tiny_trained_net
        with pytest.raises(AdaptError, match="zero_target"):
            adapt_zero_target(net, [], store, AdaptConfig(method="synthetic"))


class TestSyntheticTrack:
    def test_tiling_arithmetic(self):
        rate = 8000
        rng = np.random.default_rng(0)
        mixture = AudioClip(rng.uniform(-0.5, 0.5, 20 * rate), rate)
        vocals = AudioClip(rng.uniform(-0.3, 0.3, 30 * rate), rate, "vocals")
        segs = [Segment("h", 2.0, 10.0)]  # 8 s loop
        track = build_synthetic_track(mixture, segs, vocals, seed=1,
                                      hitl_song_id="h", train_song_id="t")
        assert track.accompaniment.n_samples == 30 * rate
        loop = track.accompaniment.samples[: 8 * rate]
        # 3 full repeats plus a 6 s partial, sample-identical
        assert np.array_equal(track.accompaniment.samples[8 * rate: 16 * rate],
                              loop)
        assert np.array_equal(track.accompaniment.samples[24 * rate:],
                              loop[: 6 * rate])

    def test_additive_and_aligned(self):
        rate = 8000
        rng = np.random.default_rng(1)
        mixture = AudioClip(rng.uniform(-0.5, 0.5, 20 * rate), rate)
        vocals = AudioClip(rng.uniform(-0.3, 0.3, 25 * rate), rate, "vocals")
        track = build_synthetic_track(mixture, [Segment("h", 1.0, 9.0)],
                                      vocals, hitl_song_id="h",
                                      train_song_id="t")
        resid = np.abs(track.mixture.samples - track.oracle_vocals.samples
                       - track.accompaniment.samples)
        assert resid.max() <= 1e-9
        assert track.provenance == ("h", ((1.0, 9.0),), "t")

    def test_seam_fades_to_zero(self):
        rate = 8000
        mixture = AudioClip(np.full(20 * rate, 0.5), rate)
        vocals = AudioClip(np.zeros(30 * rate), rate, "vocals")
        track = build_synthetic_track(mixture, [Segment("h", 0.0, 8.0)], vocals)
        acc = track.accompaniment.samples
        for seam in (8 * rate, 16 * rate, 24 * rate):
            assert abs(acc[seam - 1]) < 0.01  # faded out
            assert abs(acc[seam]) < 0.01      # fading back in

    def test_zero_segments_rejected(self):
        rate = 8000
        clip = AudioClip(np.zeros(rate), rate)
        with pytest.raises(AdaptError, match="zero segments"):
            build_synthetic_track(clip, [], clip)

    def test_rate_mismatch(self):
        a = AudioClip(np.zeros(8000), 8000)
        b = AudioClip(np.zeros(16000), 16000, "vocals")
        with pytest.raises(AdaptError, match="rate"):
            build_synthetic_track(a, [Segment("h", 0.0, 0.5)], b)


class TestAdaptSynthetic:
    def test_batches_per_song(self, tmp_path, tiny_trained_net):
        from vocalsep import data as dmod

        net, pipe = tiny_trained_net
        root = tmp_path / "many"
        dmod.generate_procedural_dataset(root, seed=9, n_train=2, n_hitl=10,
                                         n_test=0, song_len_s=12.0)
        train, hitl, _ = dmod.load_dataset(root)
        store = build_exemplar_store(train, pipe, fraction=1.0, seed=0)
        anns = {e.song_id: annotation(e.song_id, [(1.0, 9.0)], 12.0)
                for e in hitl}
        result = adapt_synthetic(net, list(hitl.entries), anns, train, store,
                                 AdaptConfig(method="synthetic", seed=0), pipe)
        assert len(result.batch_audit) == 10  # z=1 -> one batch per song
        for batch in result.batch_audit:
            sources = [s for s, _ in batch]
            assert len(batch) == 16
            assert sources.count("synthetic") == 1
            assert sources.count("original_train") == 15

    def test_synthetic_targets_match_track_vocals(self, mini_splits,
                                                  tiny_trained_net):
        # provenance check: the emitted Y windows are slices of the track's
        # oracle-vocal magnitudes, recomputed independently
        from vocalsep import dsp

        net, pipe = tiny_trained_net
        train, hitl, _ = mini_splits
        entry = hitl.entries[0]
        ann = annotation(entry.song_id, [(2.0, 12.0)])
        donor = sorted(train.entries, key=lambda e: e.song_id)[0]
        track = build_synthetic_track(
            pipe.prepare(entry.load("mixture")), ann.segments,
            pipe.prepare(donor.load("vocals")),
            hitl_song_id=entry.song_id, train_song_id=donor.song_id,
        )
        voc_mag = np.abs(dsp.stft(track.oracle_vocals, pipe.stft).frames)
        mix_spec = dsp.stft(track.mixture, pipe.stft)
        from vocalsep.data import paired_windows

        rng = np.random.default_rng(0)
        crops = paired_windows(mix_spec, dsp.stft(track.oracle_vocals, pipe.stft),
                               pipe.window_shape, 4, rng, entry.song_id,
                               source="synthetic")
        for ex in crops:
            start = ex.x.origin[1]
            expected = voc_mag[:64, start: start + 64].astype(np.float32)
            assert np.array_equal(ex.y, expected)

    def test_no_annotations_noop(self, tiny_trained_net, mini_splits, store):
        net, pipe = tiny_trained_net
        train, hitl, _ = mini_splits
        result = adapt_synthetic(net, list(hitl.entries), {}, train, store,
                                 AdaptConfig(method="synthetic"), pipe)
        assert result.net is net and result.warnings

    def test_deterministic(self, tiny_trained_net, mini_splits, store):
        net, pipe = tiny_trained_net
        train, hitl, _ = mini_splits
        anns = {e.song_id: annotation(e.song_id, [(2.0, 12.0)])
                for e in hitl}
        cfg = AdaptConfig(method="synthetic", seed=5, z=3)
        a = adapt_synthetic(net, list(hitl.entries), anns, train, store, cfg, pipe)
        b = adapt_synthetic(net, list(hitl.entries), anns, train, store, cfg, pipe)
        assert all(np.array_equal(a.net.params[k], b.net.params[k])
                   for k in a.net.params)


class TestBatchPurity:
    def test_no_test_songs_in_any_batch(self, tiny_trained_net, mini_splits,
                                        store):
        net, pipe = tiny_trained_net
        train, hitl, test = mini_splits
        test_ids = {e.song_id for e in test}
        anns = {e.song_id: annotation(e.song_id, [(2.0, 12.0)])
                for e in hitl}
        for method, kwargs in (("zero_target", {}), ("synthetic", {"z": 4})):
            result = run_adaptation(
                net, list(hitl.entries), anns, train, store,
                AdaptConfig(method=method, seed=2, **kwargs), pipe,
            )
            for batch in result.batch_audit:
                for _, song_id in batch:
                    assert song_id not in test_ids


class TestIterateHitl:
    def test_three_batches_three_reports(self, tiny_trained_net, mini_splits,
                                         store):
        net, pipe = tiny_trained_net
        train, hitl, test = mini_splits
        groups = [[e] for e in hitl.entries]  # two singleton batches
        traj = iterate_hitl(net, groups, train, test, store,
                            AdaptConfig(method="synthetic", seed=0), pipe)
        assert len(traj) == len(groups)
        for model, report in traj:
            assert set(report.reports) == {e.song_id for e in test}

    def test_empty_stream(self, tiny_trained_net, mini_splits, store):
        net, pipe = tiny_trained_net
        train, _, test = mini_splits
        assert iterate_hitl(net, [], train, test, store,
                            AdaptConfig(method="synthetic"), pipe) == []

    def test_overlapping_batches_rejected(self, tiny_trained_net, mini_splits,
                                          store):
        net, pipe = tiny_trained_net
        train, hitl, test = mini_splits
        e = hitl.entries[0]
        with pytest.raises(AdaptError, match="disjoint"):
            iterate_hitl(net, [[e], [e]], train, test, store,
                         AdaptConfig(method="synthetic"), pipe)
