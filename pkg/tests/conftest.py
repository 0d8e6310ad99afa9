import numpy as np
import pytest

from motalign.encoders import MotionEncoder, MotionEncoderConfig, TextEncoder, TextEncoderConfig, build_vocab
from motalign.skeleton import toy_skeleton
from motalign.synth import DatasetConfig, generate_dataset
from motalign.trainer import TrainConfig

SMALL_MOTION = dict(width=16, heads=2, spatial_layers=1, temporal_layers=1, dim=8)
SMALL_TEXT = dict(width=16, heads=2, layers=1, dim=8, context_length=12)

# a few minutes at most: used wherever a criterion does not pin the scale
SMALL_TRAIN = dict(
    total_epochs=3, freeze_epochs=2, batch_size=16, width=16, dim=16, heads=2,
    spatial_layers=1, temporal_layers=1, text_layers=1, context_length=16,
)
SMALL_DATA = dict(samples_per_class=12, frames=12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def skeleton():
    return toy_skeleton()


@pytest.fixture
def small_motion_encoder(skeleton):
    def make(seed=0, **overrides):
        cfg = MotionEncoderConfig(**{**SMALL_MOTION, **overrides})
        return MotionEncoder(skeleton, cfg, np.random.default_rng(seed))

    return make


@pytest.fixture
def small_text_encoder():
    def make(captions, seed=0, **overrides):
        cfg = TextEncoderConfig(**{**SMALL_TEXT, **overrides})
        return TextEncoder(build_vocab(captions), cfg, np.random.default_rng(seed))

    return make


@pytest.fixture(scope="session")
def small_data_config():
    def make(**overrides):
        return DatasetConfig(**{**SMALL_DATA, **overrides})

    return make


@pytest.fixture(scope="session")
def small_pairs(small_data_config):
    return generate_dataset(small_data_config())


@pytest.fixture(scope="session")
def small_train_config():
    def make(**overrides):
        return TrainConfig(**{**SMALL_TRAIN, **overrides})

    return make


def pytest_terminal_summary(terminalreporter):
    import sys

    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
