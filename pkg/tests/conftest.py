import numpy as np
import pytest

from ickalman.sampler import SamplerConfig, example_rng, sample_example


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_system(n=4, m=1, N=10, strategy=2, seed=0, sigma_q2=0.025,
                  sigma_r2=0.025, with_control=False):
    """One random (params, trajectory) pair with the stock noise caps."""
    cfg = SamplerConfig(n=n, m=m, strategy=strategy, sigma_q2=sigma_q2,
                        sigma_r2=sigma_r2, context_length=N,
                        with_control=with_control, seed=seed)
    return sample_example(cfg, 0, example_rng(seed, 0))


def random_spd(n, rng, scale=1.0):
    """A random symmetric positive-definite matrix."""
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))
