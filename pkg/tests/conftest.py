import sys
import os
from pathlib import Path
import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

os.environ.setdefault("LOG_LEVEL", "WARNING")

EXAMPLE_DIR = project_root / "data" / "example"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: million-sample Monte-Carlo comparisons (deselect with -m 'not slow')")


@pytest.fixture(scope="session")
def example_dir():
    return EXAMPLE_DIR


@pytest.fixture(scope="session")
def example_system():
    from src.models.system import LtiSystem
    from src.utils.io import read_json

    return LtiSystem.from_document(read_json(EXAMPLE_DIR / "system.json"))


@pytest.fixture(scope="session")
def table_one():
    """Six-mode measurement-noise mixture of the worked example"""
    from src.models.mixture import Gmm
    from src.utils.io import read_json

    return Gmm.from_document(read_json(EXAMPLE_DIR / "noise_eta.json"))


def make_stable_system(rng: np.random.Generator, n: int, p: int, norm: float = 0.5):
    """F = M + LC with ||M||_2 = norm, so the estimator error dynamics are stable"""
    from src.models.system import LtiSystem

    M = rng.standard_normal((n, n))
    M *= norm / np.linalg.norm(M, 2)
    C = rng.standard_normal((p, n))
    L = 0.3 * rng.standard_normal((n, p))
    return LtiSystem(F=M + L @ C, G=np.zeros((n, 1)), C=C, L=L)


def make_spd(rng: np.random.Generator, d: int, scale: float = 1.0):
    A = rng.standard_normal((d, d))
    return scale * (A @ A.T / d + 0.5 * np.eye(d))


@pytest.fixture
def stable_system_factory():
    return make_stable_system


@pytest.fixture
def spd_factory():
    return make_spd


@pytest.fixture(scope="session")
def example_model(example_system, table_one):
    """Worked-example residual: k* = 10 with the published merge thresholds"""
    from src.models.mixture import ReductionConfig
    from src.services.residual_gmm import steady_state_residual

    return steady_state_residual(
        example_system,
        table_one,
        reduction=ReductionConfig(d_mu=0.0747, d_K=0.0917),
        k_star=10,
    )
