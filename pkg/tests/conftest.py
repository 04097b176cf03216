import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

# Add src directory to Python path
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from services.synthetic import gen_continuous_instance, gen_discrete_instance  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def discrete_instance():
    """Small well-separated DCCA ground truth"""
    return gen_discrete_instance(M1=6, M2=5, K=2, K1=3, K2=3, c=0.5, c1=0.2, c2=0.2,
                                 Ls=60.0, Ln=20.0, mode="dirichlet", seed=7)


@pytest.fixture
def fixed2d_instance():
    return gen_discrete_instance(M1=2, M2=2, K=1, K1=2, K2=2, c=0.1, c1=0.1, c2=0.1,
                                 Ls=100.0, Ln=100.0, mode="fixed2d")


@pytest.fixture
def continuous_instance():
    return gen_continuous_instance(M1=6, M2=6, K=2, K1=2, K2=2, c=0.1, c1=0.1, c2=0.1,
                                   Ls=100.0, Ln=100.0, seed=3)


def make_mixing(K: int, rng: np.random.Generator, max_condition: float = 10.0) -> np.ndarray:
    """Random K x K matrix with singular values in [1, max_condition]"""
    left, _ = np.linalg.qr(rng.standard_normal((K, K)))
    right, _ = np.linalg.qr(rng.standard_normal((K, K)))
    singular = rng.uniform(1.0, max_condition, size=K)
    singular[0], singular[-1] = 1.0, max_condition
    return (left * singular) @ right.T


@pytest.fixture
def random_mixing():
    return make_mixing


def largest_principal_angle(U1: np.ndarray, U2: np.ndarray) -> float:
    """Largest principal angle between two column spaces"""
    return float(np.max(scipy.linalg.subspace_angles(U1, U2)))


@pytest.fixture
def principal_angle():
    return largest_principal_angle
