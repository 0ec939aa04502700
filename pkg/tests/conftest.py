"""Shared fixtures: reference systems, measures, and an exact tail oracle."""
import math

import numpy as np
import pytest

import fracgauss as fg
from fracgauss.ifs import PointMeasure


def imhof_cdf(lams, x: float) -> float:
    """P(sum_k lams[k] * Z_k^2 <= x) for independent standard normals.

    Numeric inversion of the characteristic function prod (1-2i*lam*u)^(-1/2)
    through the Gil-Pelaez formula.  Good to ~1e-8 for x not too deep in the
    lower tail; below P ~ 1e-9 the integrand oscillates too hard to trust.
    """
    from scipy.integrate import quad

    lams = np.asarray(lams, dtype=float)
    lams = lams[lams > 1e-14 * lams.max()]

    def integrand(u):
        if u == 0.0:
            return float(np.sum(lams)) - x
        theta = 0.5 * float(np.sum(np.arctan(2.0 * lams * u))) - 0.5 * x * u * 2.0
        logrho = 0.25 * float(np.sum(np.log1p(4.0 * lams ** 2 * u ** 2)))
        if logrho > 700.0:
            return 0.0
        return math.sin(theta) / (u * math.exp(logrho))

    val, _ = quad(integrand, 0.0, np.inf, limit=800)
    return 0.5 - val / math.pi


def l2_tail(kernel, sites: PointMeasure, eps: float) -> float:
    """Exact P(||X||_{L2(mu_n)} < eps) for the discrete quadrature measure."""
    from fracgauss import fields

    gram = fields.gram(kernel, sites.points)
    root = np.sqrt(sites.masses)
    lams = np.linalg.eigvalsh(root[:, None] * gram * root[None, :])
    return imhof_cdf(lams, eps * eps)


@pytest.fixture(scope="session")
def cantor():
    return fg.load_system("cantor")


@pytest.fixture(scope="session")
def sierpinski():
    return fg.load_system("sierpinski")


@pytest.fixture(scope="session")
def cantor_level11():
    """Middle-third Cantor measure discretized at word level 11.

    2048 atoms at the level-11 cell midpoints, each carrying mass 2^-11,
    anchored to the unit interval so dyadic packings line up.
    """
    level = 11
    idx = np.arange(2 ** level)
    digits = (idx[:, None] >> np.arange(level)[::-1]) & 1
    starts = (digits * 2.0 * (3.0 ** -np.arange(1, level + 1))).sum(axis=1)
    pts = starts + 0.5 * 3.0 ** -level
    masses = np.full(2 ** level, 2.0 ** -level)
    return PointMeasure(pts, masses, box=(np.zeros(1), np.ones(1)))
