import numpy as np
import pytest

from vitsoh.autodiff import set_nan_checks


@pytest.fixture(autouse=True)
def nan_checks():
    # NaN/Inf must never propagate silently anywhere in the suite
    previous = set_nan_checks(True)
    yield
    set_nan_checks(previous)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gradient of scalar f(x) by central differences, elementwise."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad
