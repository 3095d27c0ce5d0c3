import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glupruner import GluVariant, MlpWeights, Tensor2D


def rand_tensor(rng, rows, cols, lo=-2.0, hi=2.0):
    return Tensor2D(rng.uniform(lo, hi, size=(rows, cols)).astype(np.float32))


def rand_mlp(rng, d_hidden, d_int, variant=GluVariant.SWIGLU):
    return MlpWeights(
        gate=rand_tensor(rng, d_hidden, d_int),
        up=rand_tensor(rng, d_hidden, d_int),
        down=rand_tensor(rng, d_int, d_hidden),
        variant=variant,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
