"""Shared fixtures for the test suite."""

import pytest

from noisespec import (
    CpmgFilterProvider,
    default_experiment_spectrum,
    lorentzian_dc,
)


@pytest.fixture(scope="session")
def bath():
    """Composite two-component bath used across the suite."""
    return default_experiment_spectrum()


@pytest.fixture(scope="session")
def dc_lorentzian():
    return lorentzian_dc(delta=1e5, sigma=5e4)


@pytest.fixture(scope="session")
def provider():
    # Session-scoped so canonical filter scans are computed once.
    return CpmgFilterProvider()
