"""Shared fixtures: the bundled toy network and small random instances."""

import pathlib

import numpy as np
import pytest

from lipcert.model import FnnModel, TargetSpec, gen_random, load_input, load_model

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def toy_model() -> FnnModel:
    return load_model(str(FIXTURES / "toy_model.json"))


@pytest.fixture(scope="session")
def toy_w0() -> np.ndarray:
    return load_input(str(FIXTURES / "toy_w0.json"))


@pytest.fixture(scope="session")
def toy_target(toy_w0) -> TargetSpec:
    return TargetSpec(w0=toy_w0, eps=0.1)


def random_instance(seed: int, n_max: int = 30, m_max: int = 10, l_max: int = 5):
    """Deterministic small instance for ensemble tests.

    Sizes are drawn from the seed so the ensemble spans shapes; eps is
    chosen moderate so partitions are usually mixed.
    """
    rng = np.random.default_rng(10_000 + seed)
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(2, m_max + 1))
    l = int(rng.integers(2, l_max + 1))
    model = gen_random(n, m, l, seed=seed)
    w0 = 0.5 * rng.standard_normal(m)
    eps = float(0.05 + 0.3 * rng.uniform())
    return model, TargetSpec(w0=w0, eps=eps)


def eps_for_target_nr(model: FnnModel, w0: np.ndarray, k: int) -> float:
    """eps placed between the k-th and (k+1)-th activation thresholds.

    Neuron i leaves the fixed sets once eps crosses |q0_i| / |row_i|; the
    midpoint between sorted thresholds k-1 and k yields exactly k residual
    neurons (ties aside).
    """
    q0 = model.w_in @ w0 + model.b_in
    norms = np.linalg.norm(model.w_in, axis=1)
    thresholds = np.sort(np.abs(q0) / np.where(norms > 0, norms, 1.0))
    if k <= 0:
        return float(thresholds[0] / 2)
    if k >= len(thresholds):
        return float(thresholds[-1] * 2)
    return float(0.5 * (thresholds[k - 1] + thresholds[k]))
