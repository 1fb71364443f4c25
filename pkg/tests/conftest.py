from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import pytest

from msgamma.classes import gamma_class
from msgamma.series import toric_j_coefficients
from msgamma.toric import build_cohomology, load_fan

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "msgamma" / "fixtures"
NAMES = ["p1", "p2", "p1xp1", "blp2", "p3"]


def fan_path(name: str) -> Path:
    return FIXTURES / f"{name}.fan"


@lru_cache(maxsize=None)
def fan(name: str):
    return load_fan(fan_path(name))


@lru_cache(maxsize=None)
def ring(name: str):
    return build_cohomology(fan(name))


@lru_cache(maxsize=None)
def jexp(name: str, N: int):
    return toric_j_coefficients(ring(name), N)


@lru_cache(maxsize=None)
def gamma(name: str):
    return gamma_class(ring(name))


@pytest.fixture(params=NAMES)
def fixture_name(request):
    return request.param
