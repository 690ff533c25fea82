import numpy as np
import pytest

from vtgrowth.species import Parameters


def inert_params(**overrides) -> Parameters:
    """Parameters with every reaction/transition rate zeroed (pure
    transport/diffusion dynamics); CH and flow constants keep defaults."""
    p = Parameters(
        mitosis_rate=0.0,
        mitosis_rate_hypoxic=0.0,
        apoptosis_rate=0.0,
        apoptosis_rate_hypoxic=0.0,
        prolific_to_hypoxic_rate=0.0,
        hypoxic_to_prolific_rate=0.0,
        hypoxic_to_necrotic_rate=0.0,
        ecm_degradation_rate=0.0,
        ecm_production_rate=0.0,
        mde_decay_rate=0.0,
        mde_production_rate=0.0,
        taf_production_rate=0.0,
        taf_decay_rate=0.0,
        chemotaxis=0.0,
        haptotaxis=0.0,
    )
    return p.replace(**overrides)


def smooth_noise(shape, rng, lo=0.2, hi=0.8, passes=4):
    """Random field smoothed by a few neighbor-averaging sweeps."""
    noise = rng.uniform(size=shape)
    for _ in range(passes):
        acc = noise.copy()
        for ax in range(len(shape)):
            acc = acc + 0.5 * (np.roll(noise, 1, axis=ax) + np.roll(noise, -1, axis=ax))
        noise = acc / (1 + len(shape))
    noise = (noise - noise.min()) / (noise.max() - noise.min())
    return lo + (hi - lo) * noise


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
