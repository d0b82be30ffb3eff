import numpy as np
import pytest

from msplidar import (
    BackgroundShape,
    HistogramCube,
    ScaleConfig,
    SimSpec,
    asymmetric_sir,
    gaussian_sir,
    make_scene,
    simulate_cube,
)


@pytest.fixture(scope="session")
def sir_asym():
    return asymmetric_sir(3, 26)


@pytest.fixture(scope="session")
def sir_gauss():
    return gaussian_sir(3.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


def random_cube(rng, rows=5, cols=5, bins=40, wavelengths=1, lam=0.8):
    counts = rng.poisson(lam, (wavelengths, rows, cols, bins)).astype(np.int64)
    return HistogramCube(counts)


@pytest.fixture(scope="session")
def criterion4_setup():
    """The robustness-ordering scene shared by several acceptance criteria.

    64x64 two-plane scene with a four-pixel target-free border (gives the
    background estimator genuinely signal-free pixels to learn the temporal
    profile from, and the detection metrics true-negative pixels), gamma and
    uniform backgrounds at SBR=0.1, PPP=10, seed 1.
    """
    sir = asymmetric_sir(3, 26)
    scene = make_scene("two_plane", 64, 64, 300, 1, depths=(100.0, 200.0), empty_border=4)
    out = {"sir": sir, "scene": scene}
    for name, bg in [("gamma", BackgroundShape("gamma", 2.0, 30.0)), ("uniform", BackgroundShape("uniform"))]:
        spec = SimSpec(scene=scene, sir=sir, bins=300, sbr=0.1, ppp=10.0, background=bg, seed=1)
        out[name] = simulate_cube(spec)
    return out
