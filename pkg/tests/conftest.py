import numpy as np
import pytest
import torch

from avvad.corpus import ClipSpec, SourceEvent, synth_clip


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_clip():
    spec = ClipSpec(4.0, (
        SourceEvent(0.2, 1.4, "anchor-speech"),
        SourceEvent(1.6, 3.0, "background-speech"),
        SourceEvent(2.0, 3.6, "anchor-singing"),
        SourceEvent(0.0, 4.0, "music"),
    ), seed=11)
    return synth_clip(spec, "small-0000", "test")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
