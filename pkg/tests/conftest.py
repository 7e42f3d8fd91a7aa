import numpy as np
import pytest

from restoplan.degrade import DegradationSpec, degrade, derive_seed, synth_clean_image
from restoplan.tools import default_config


@pytest.fixture(scope="session")
def tool_cfg():
    return default_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def clean64():
    """A fixed procedural clean image, 64x64."""
    return synth_clean_image(64, derive_seed(99, 0, "clean"))


@pytest.fixture(scope="session")
def noisy64(clean64):
    """clean64 plus sigma=0.05 Gaussian noise."""
    spec = DegradationSpec(noise_sigma=0.05, apply_order=("noise",))
    return degrade(clean64, spec, 0)


def make_pairs(n, seed, size=64, src_count=8):
    """Small in-memory paired dataset for strategy/training tests."""
    from restoplan.degrade import sample_spec

    sources = [synth_clean_image(size + 32, derive_seed(seed, i, "src")) for i in range(src_count)]
    offset = 16
    pairs = []
    for i in range(n):
        row_rng = np.random.Generator(np.random.PCG64(derive_seed(seed, i, "spec")))
        src = sources[int(row_rng.integers(len(sources)))]
        clean = src[offset : offset + size, offset : offset + size]
        spec = sample_spec(row_rng)
        degraded = degrade(clean, spec, derive_seed(seed, i, "degrade"))
        pairs.append((degraded, clean))
    return pairs
