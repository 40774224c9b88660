import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from msmitosis import synth  # noqa: E402


def small_spec(**kw) -> synth.SynthSpec:
    """A 256x256 scene that generates in well under a second."""
    base = synth.SynthSpec(
        width=256,
        height=256,
        n_mitoses=4,
        n_distractors=6,
        mitosis_area_range=(300, 700),
        distractor_area_range=(250, 700),
        seed=11,
    )
    return replace(base, **kw)


@pytest.fixture(scope="session")
def small_scene():
    return synth.generate_with_layout(small_spec())


def planted_relevance(seed: int, n: int = 200, n_features: int = 20):
    """Discretized matrix whose class is the parity of the codes of columns 2 and 7.

    Columns 2 and 7 are continuous and fall into 10 bins; every other column is a
    coin flip, so noise-only subsets cannot separate the classes by chance.
    """
    from msmitosis.selection import DiscretizedMatrix, discretize

    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=(n, n_features)).astype(np.float64)
    x[:, 2] = rng.random(n)
    x[:, 7] = rng.random(n)
    d, _ = discretize(x, np.zeros(n, dtype=np.int64))
    labels = (d.codes[:, 2] + d.codes[:, 7]) % 2
    return DiscretizedMatrix(d.codes, labels, d.bin_count)
