import numpy as np
import pytest
import torch

from texthier.data.synthetic import (
    SynthConfig,
    generate_synthetic,
    two_paragraph_config,
)
from texthier.model import build_model


def make_rng(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@pytest.fixture(scope="session")
def desk_model():
    torch.set_num_threads(2)
    model = build_model("desk", seed=0)
    model.eval()
    return model


@pytest.fixture(scope="session")
def synth_trees():
    """Four deterministic two-paragraph pages."""
    cfg = two_paragraph_config(SynthConfig())
    return generate_synthetic(cfg, 4, seed=11)


@pytest.fixture()
def rng():
    return make_rng(0)


def random_mask(rng: np.random.Generator, h: int, w: int, p: float = 0.5) -> np.ndarray:
    return rng.random((h, w)) < p


def box_mask(h: int, w: int, y0: int, y1: int, x0: int, x1: int) -> np.ndarray:
    m = np.zeros((h, w), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m
