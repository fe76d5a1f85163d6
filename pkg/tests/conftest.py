from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from sitpatch import ModelParams

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", parent=settings.get_profile("default"), derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture
def base() -> ModelParams:
    """Aedes albopictus constants with the asymmetric diffusion pair d12=0.06, d21=0.04."""
    return ModelParams()


@pytest.fixture
def fast_diffusion_params() -> ModelParams:
    return ModelParams(d12=1.0, d21=2.0)
