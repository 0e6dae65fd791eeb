import os
from pathlib import Path

import pytest

from pbfheat.core import MaterialParams
from pbfheat.quadrature import (
    FAMILY_CONTRIBUTION,
    FAMILY_FLUX,
    build_lut,
    load_lut,
    save_lut,
)

# material used throughout the bundled examples: kappa = 8.4495e-6 m^2/s
KAPPA = 8.4495e-6


@pytest.fixture(scope="session")
def material():
    return MaterialParams(rho=1000.0, cp=20.0 / (KAPPA * 1000.0), lam=20.0)


def _workers():
    return max(1, os.cpu_count() or 1)


@pytest.fixture(scope="session")
def default_luts(tmp_path_factory):
    """Default-size look-up tables for the acceptance suite.

    Building them takes several minutes, so the results are cached under
    build/lut-cache between runs; the soundness audit recomputes every
    reference from scratch anyway, so a stale cache cannot hide a
    regression silently.
    """
    cache = Path(__file__).resolve().parent.parent / "build" / "lut-cache"
    cache.mkdir(parents=True, exist_ok=True)
    flux_p = cache / "flux.lut"
    contrib_p = cache / "contribution.lut"
    if not (flux_p.exists() and contrib_p.exists()):
        flux_p.write_bytes(save_lut(build_lut(FAMILY_FLUX, workers=_workers())))
        contrib_p.write_bytes(save_lut(build_lut(FAMILY_CONTRIBUTION, workers=_workers())))
    return load_lut(flux_p.read_bytes()), load_lut(contrib_p.read_bytes()), cache
