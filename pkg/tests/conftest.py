import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from harvestbot.kinematics import DEFAULT_GEOMETRY, JointState, ManipulatorGeometry

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("repo", deadline=None, max_examples=200, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# a second, deliberately different arm so nothing silently depends on the defaults
COMPACT_GEOMETRY = ManipulatorGeometry(
    d_x1=0.05, d_x2=0.12, d_x3=0.55, d_y1=-0.02, d_y2=0.04, d_z1=0.30, d_z2=0.08,
    phi_limits=(math.radians(-30.0), math.radians(30.0)),
    theta_limits=(math.radians(-20.0), math.radians(28.0)),
    d_limits=(0.0, 0.45),
)

GEOMETRIES = {"default": DEFAULT_GEOMETRY, "compact": COMPACT_GEOMETRY}


@pytest.fixture(params=sorted(GEOMETRIES))
def geometry(request):
    return GEOMETRIES[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_states(geom, rng, n, margin=0.0):
    """``n`` admissible joint states drawn uniformly inside the limits."""
    out = []
    for _ in range(n):
        phi = rng.uniform(geom.phi_limits[0] + margin, geom.phi_limits[1] - margin)
        theta = rng.uniform(geom.theta_limits[0] + margin, geom.theta_limits[1] - margin)
        d = rng.uniform(geom.d_limits[0] + margin, geom.d_limits[1] - margin)
        out.append(JointState(phi, theta, d))
    return out
