import numpy as np
import pytest

from lgp.dataset import make_dataset


def small_columns(seed=0, n_ind=6, T=5, y=None):
    """Six individuals, three of them cases with onset at age 40."""
    rng = np.random.default_rng(seed)
    ids = np.repeat(np.arange(1, n_ind + 1), T)
    age = np.tile(np.linspace(20, 60, T), n_ind) + rng.normal(0, 1, n_ind * T)
    sex = np.where(ids % 2 == 0, "M", "F")
    onset = np.where(np.arange(1, n_ind + 1) <= n_ind // 2, 40.0, np.nan)
    dis = age - onset[ids - 1]
    if y is None:
        y = rng.normal(size=len(ids))
    return {"id": ids, "age": age, "sex": sex, "diseaseAge": dis, "y": y}


def small_dataset(seed=0, **kw):
    return make_dataset(small_columns(seed, **kw), categorical=["id", "sex"], maskable=["diseaseAge"])


@pytest.fixture
def ds():
    return small_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
