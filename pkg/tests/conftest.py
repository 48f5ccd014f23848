import pytest

import ccmabeam as cb


@pytest.fixture(scope="session")
def array_16k():
    """Five-ring layout, 16 kHz sampling: ring counts [1, 14, 29, 43, 58]."""
    return cb.build_geometry(
        cb.ArrayConfig(ring_radii=(0.0, 0.05, 0.10, 0.15, 0.20), sample_rate=16000.0)
    )


@pytest.fixture(scope="session")
def toy_array():
    """Small two-ring layout used by gradient and CLI tests."""
    return cb.build_geometry(cb.ArrayConfig(ring_radii=(0.0, 0.05), sample_rate=16000.0))


@pytest.fixture(scope="session")
def doa45():
    return cb.Direction.from_degrees(45.0, 45.0)
