import numpy as np
import pytest

from heightlab.synth import RigConfig, SceneSpec, generate_scene

# A reduced rig keeps the per-test cost low while exercising the same code.
SMALL_RIG = RigConfig(width=80, height=48, fx=60.0, fy=60.0, cx=39.5, cy=23.5,
                      rows=60, cols=24, meters_per_pixel=0.5, x_min=-6.0, channels=4)


@pytest.fixture(scope="session")
def small_rig():
    return SMALL_RIG


@pytest.fixture(scope="session")
def grade_scene():
    return generate_scene(SceneSpec("grade", {"grade": 0.05}, seed=1, length=4), SMALL_RIG)


@pytest.fixture(scope="session")
def crest_scene():
    return generate_scene(SceneSpec("crest", {"amplitude": 0.8, "wavelength": 60.0}, seed=2, length=3), SMALL_RIG)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
