"""Shared, session-scoped fixtures for the expensive pipeline objects."""
import pytest

import tanglekit as tk
from tanglekit import manifolds as mf

CLIP_BOX = (-2.5, 2.5, -2.5, 2.5)


@pytest.fixture(scope="session")
def p3():
    return tk.MapParams.from_degree(3)


@pytest.fixture(scope="session")
def series_u(p3):
    return mf.local_series(p3, "unstable", 24)


@pytest.fixture(scope="session")
def series_s(p3):
    return mf.local_series(p3, "stable", 24)


@pytest.fixture(scope="session")
def wu_curve(p3, series_u):
    """Unstable manifold of (0,-1), positive branch, primary extent."""
    return mf.globalize(p3, series_u, steps=2, branch=+1, clip_box=CLIP_BOX)


@pytest.fixture(scope="session")
def ws_curve(p3, series_s):
    """Stable manifold of (0,-1), negative branch, primary extent."""
    return mf.globalize(p3, series_s, steps=4, branch=-1, clip_box=CLIP_BOX)


@pytest.fixture(scope="session")
def tangle(p3):
    """Full homoclinic pipeline output for degree 3 (built once)."""
    from tanglekit import homoclinic as hc

    return hc.TanglePipeline.build(p3)


@pytest.fixture(scope="session")
def horseshoe_cert(p3, tangle):
    from tanglekit import horseshoe as hs

    staged = hs.stage_points(p3, tangle, m_u=1, m_s=1)
    rect = hs.default_rectangle(p3, staged)
    sample = hs.transversal_map(p3, rect, grid=(256, 256))
    cert = hs.conley_moser_check(p3, sample, n_symbols=2)
    return staged, rect, sample, cert
