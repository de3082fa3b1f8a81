import numpy as np
import pytest

from vocalsep import data
from vocalsep.model import NetConfig
from vocalsep.pipeline import PipelineConfig

DESK_NET = dict(input_shape=(64, 64), depth=3, base_channels=4, kernel=5,
                dropout_p=0.0)
DESK_RATE = 11025
DESK_HOP = 64


def desk_config(seed=0, **overrides):
    kw = dict(DESK_NET)
    kw.update(overrides)
    return NetConfig(seed=seed, **kw)


def desk_pipeline(cfg=None):
    return PipelineConfig.for_net(cfg or desk_config(), sample_rate=DESK_RATE,
                                  hop=DESK_HOP)


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """Small procedural dataset shared by read-only tests."""
    root = tmp_path_factory.mktemp("mini") / "ds"
    data.generate_procedural_dataset(
        root, seed=11, n_train=4, n_hitl=2, n_test=2, song_len_s=30.0,
    )
    return root


@pytest.fixture(scope="session")
def mini_splits(mini_dataset):
    return data.load_dataset(mini_dataset)


@pytest.fixture(scope="session")
def tiny_trained_net(mini_splits):
    """A briefly trained desk net for tests that need plausible masks."""
    from vocalsep.adapt import train_base

    train, _, _ = mini_splits
    cfg = desk_config(seed=5)
    pipe = desk_pipeline(cfg)
    net, _ = train_base(train, cfg, epochs=2, seed=5, pipeline=pipe,
                        crops_per_song=48)
    return net, pipe


def random_clip(rng, n=30000, rate=22050, role="mixture"):
    from vocalsep.dsp import AudioClip

    return AudioClip(rng.uniform(-0.9, 0.9, n), rate, role)
