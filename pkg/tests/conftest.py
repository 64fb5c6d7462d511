import math

import pytest

from surgery_spectra.glue.surgery import GluingSpec, glue
from surgery_spectra.mesh.primitives import flat_disk, flat_torus, icosphere

SHORT_NECK = 1.5 * math.log(2.0)


@pytest.fixture(scope="session")
def sphere():
    return icosphere(2, flat_cap=None)


@pytest.fixture(scope="session")
def capped_sphere():
    """Icosphere with a flat stereographic cap of geodesic radius 1 around vertex 0."""
    return icosphere(2, flat_cap=1.0)


@pytest.fixture(scope="session")
def square_torus():
    return flat_torus(12)


@pytest.fixture(scope="session")
def disk():
    return flat_disk(radius=1.0, rings=6, n=12)


@pytest.fixture(scope="session")
def crosscap_spec():
    return GluingSpec("crosscap", p=0, eps=0.1, L=SHORT_NECK, n=8)


@pytest.fixture(scope="session")
def crosscap(capped_sphere, crosscap_spec):
    return glue(capped_sphere, crosscap_spec)
