"""
Shared pytest fixtures for WaveLab tests.

Profiles, flows and grids are kept small so the dense operators stay cheap.
"""

import os
import sys

import pytest

# Ensure backend/ is on sys.path so `import wavelab.*` works
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from wavelab.models import PhasePoint  # noqa: E402
from wavelab.services.symbol_core import ZERO_FLOW, BackgroundFlow, CoriolisProfile  # noqa: E402
from wavelab.services.weyl_quant import SpatialGrid  # noqa: E402


@pytest.fixture
def betaplane():
    """Equatorial betaplane b(x2) = x2."""
    return CoriolisProfile()


@pytest.fixture
def offset_profile():
    """b(x2) = 3 + x2/4, gapped on every box of half-side below 12."""
    return CoriolisProfile(kind="betaplane", beta=0.25, b0=3.0)


@pytest.fixture
def constant_profile():
    """b = 2 everywhere: every symbol is a Fourier multiplier."""
    return CoriolisProfile(kind="betaplane", beta=0.0, b0=2.0)


@pytest.fixture
def bent_profile():
    return CoriolisProfile(kind="monotone", beta=1.0, alpha=0.3, gamma=2.0)


@pytest.fixture
def zero_flow():
    return ZERO_FLOW


@pytest.fixture
def bump_flow():
    return BackgroundFlow(kind="bump", amplitude=0.5, support_radius=2.0, center=(0.0, 0.0))


@pytest.fixture
def small_grid():
    return SpatialGrid(n1=16, n2=16, L1=4.0, L2=4.0)


@pytest.fixture
def tiny_grid():
    return SpatialGrid(n1=8, n2=8, L1=2.0, L2=2.0)


@pytest.fixture
def generic_point():
    """A point away from the equator, the axes and the frame switch."""
    return PhasePoint.of(0.3, 0.4, 0.7, -0.3)
