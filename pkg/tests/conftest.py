"""Shared fixtures."""

import pytest

from src.config.settings import get_settings
from src.services.grid_fields import make_domain


@pytest.fixture(autouse=True)
def fresh_settings():
    """Reset cached settings around every test."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def unit_square():
    """Unit square with 9 vertices per axis."""
    return make_domain("box", (9, 9), 1.0 / 8)


@pytest.fixture
def unit_cube():
    """Unit cube with 7 vertices per axis."""
    return make_domain("box", (7, 7, 7), 1.0 / 6)


@pytest.fixture
def annulus():
    """Annulus 0.2 < r < 0.45 on a 33×33 grid."""
    return make_domain("annulus", (33, 33), 1.0 / 32, geometry={"radii": (0.2, 0.45)})
