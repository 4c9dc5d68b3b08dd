import numpy as np
import pytest

from szbov import DiscreteLoop


def random_smooth_loop(
    rng,
    n: int,
    twisted: bool = False,
    center: complex = 1.9 + 0.4j,
    scale: float = 0.2,
    bandwidth: int = 3,
) -> DiscreteLoop:
    """Band-limited random loop kept away from the origin and the branch
    points, suitable for identities that assume a resolved collision-free
    curve."""
    k = np.arange(-bandwidth, bandwidth + 1)
    coef = scale * (rng.normal(0, 1, len(k)) + 1j * rng.normal(0, 1, len(k)))
    tau = np.arange(n) / n
    period = 2.0 if twisted else 1.0
    z = center + sum(c * np.exp(2j * np.pi * kk * tau / period) for c, kk in zip(coef, k))
    return DiscreteLoop(samples=z, twisted=twisted)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
