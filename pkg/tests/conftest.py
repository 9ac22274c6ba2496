import os

import pytest

from efftemp.model import XXZParams, build_lattice, get_or_compute_spectrum


@pytest.fixture(scope="session", autouse=True)
def spectrum_cache(tmp_path_factory):
    """Redirect the spectrum cache into the test session's tmp dir."""
    d = tmp_path_factory.mktemp("spectrum-cache")
    os.environ["EFFTEMP_CACHE_DIR"] = str(d)
    return d


@pytest.fixture(scope="session")
def chain8(spectrum_cache):
    lattice = build_lattice("chain", 8)
    params = XXZParams.uniform(1.0, 1.0, 0.8, 0.0, 8)
    spectrum, _, _ = get_or_compute_spectrum(lattice, params)
    return lattice, params, spectrum


@pytest.fixture(scope="session")
def chain10(spectrum_cache):
    # the desk-scale 1D model used by the training criteria
    lattice = build_lattice("chain", 10)
    params = XXZParams.uniform(1.0, 1.0, 0.8, 0.02, 10)
    spectrum, _, _ = get_or_compute_spectrum(lattice, params)
    return lattice, params, spectrum


@pytest.fixture(scope="session")
def square43(spectrum_cache):
    # 4x3 torus, the largest spectrum exercised here (4096 eigenpairs)
    lattice = build_lattice("square", 4, 3)
    params = XXZParams.uniform(1.0, 1.0, 0.8, 0.0, 12)
    spectrum, _, _ = get_or_compute_spectrum(lattice, params)
    return lattice, params, spectrum
