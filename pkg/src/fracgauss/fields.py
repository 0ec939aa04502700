"""Gaussian field covariances, exact joint sampling, conditional variances.

Two kernel families: N-parameter fractional Brownian motion
K(s,t) = (|s|^2H + |t|^2H - |s-t|^2H) / 2 and the Brownian sheet
K(s,t) = prod_k min(s_k, t_k) on the positive orthant.  Sampling is exact
(Cholesky of the Gram matrix) with an escalating jitter ladder for nearly
singular point sets.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

_JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
_PINV_RTOL = 1e-10


@dataclass(frozen=True)
class Kernel:
    family: str
    dim: int
    h: float | None = None

    def __post_init__(self):
        if self.family not in ("fbm", "sheet"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.family == "fbm":
            if self.h is None or not (0.0 < self.h < 1.0):
                raise ValueError(f"fbm needs a Hurst index in (0,1), got {self.h}")
        elif self.h is not None:
            raise ValueError("the sheet kernel takes no Hurst index")


def fbm(h: float, dim: int = 1) -> Kernel:
    return Kernel("fbm", dim, float(h))


def brownian_sheet(dim: int) -> Kernel:
    return Kernel("sheet", dim)


def parse_kernel(text: str, dim: int = 1) -> Kernel:
    """CLI kernel syntax: 'fbm:H' or 'sheet'."""
    name, _, arg = text.partition(":")
    if name == "fbm":
        if not arg:
            raise ValueError("fbm kernel needs a Hurst index, e.g. fbm:0.5")
        return fbm(float(arg), dim)
    if name == "sheet":
        if arg:
            raise ValueError("sheet kernel takes no parameter")
        return brownian_sheet(dim)
    raise ValueError(f"unknown kernel {text!r} (use fbm:H or sheet)")


def _sites(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts[None]
    if pts.ndim == 1:
        pts = pts[:, None] if dim == 1 else pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"points must have shape (k, {dim})")
    return pts


def _cross(kernel: Kernel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if kernel.family == "fbm":
        two_h = 2.0 * kernel.h
        na = (np.linalg.norm(a, axis=1) ** two_h)[:, None]
        nb = (np.linalg.norm(b, axis=1) ** two_h)[None, :]
        return 0.5 * (na + nb - cdist(a, b) ** two_h)
    if (a < 0).any() or (b < 0).any():
        raise ValueError("sheet kernel is defined on the positive orthant")
    out = np.ones((a.shape[0], b.shape[0]))
    for k in range(kernel.dim):
        out *= np.minimum(a[:, k][:, None], b[:, k][None, :])
    return out


def gram(kernel: Kernel, points) -> np.ndarray:
    """Covariance matrix of the field at the given sites."""
    pts = _sites(points, kernel.dim)
    g = _cross(kernel, pts, pts)
    return 0.5 * (g + g.T)


def _factor(g: np.ndarray):
    """Cholesky with an escalating diagonal jitter; returns (L, jitter)."""
    scale = float(np.max(np.diag(g))) if g.size else 0.0
    if scale <= 0.0:
        scale = 1.0
    for eta in _JITTER_LADDER:
        try:
            L = np.linalg.cholesky(g + (eta * scale) * np.eye(g.shape[0]))
            return L, eta * scale
        except np.linalg.LinAlgError:
            continue
    raise RuntimeError("gram not PSD within tolerance")


@dataclass
class GaussianSampleBatch:
    """reps x sites matrix of jointly Gaussian field values."""

    points: np.ndarray
    values: np.ndarray
    seed: object
    jitter_used: float


def sample(kernel: Kernel, points, reps: int, seed) -> GaussianSampleBatch:
    """Draw reps independent joint field vectors at the sites."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if seed is None:
        raise ValueError("seed is required")
    pts = _sites(points, kernel.dim)
    L, jitter = _factor(gram(kernel, pts))
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((reps, pts.shape[0])) @ L.T
    return GaussianSampleBatch(pts, values, seed, jitter)


def batch_to_csv(batch: GaussianSampleBatch, fh):
    close = False
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        fh = open(fh, "w")
        close = True
    try:
        fh.write("rep,site_index,value\n")
        reps, sites = batch.values.shape
        for i in range(reps):
            row = batch.values[i]
            for j in range(sites):
                fh.write(f"{i},{j},{format(row[j], '.17g')}\n")
    finally:
        if close:
            fh.close()


def conditional_variance(kernel: Kernel, target, conditioners) -> float:
    """Prediction-error variance of X(target) given X at the conditioners.

    Schur complement K(t,t) - k' K_SS^+ k with a spectral pseudo-inverse
    (eigenvalues below 1e-10 of the largest are dropped, which fractal
    clouds with near-duplicate sites need).  Clamped to [0, K(t,t)].
    """
    t = _sites(target, kernel.dim)
    if t.shape[0] != 1:
        raise ValueError("target must be a single point")
    ktt = float(_cross(kernel, t, t)[0, 0])
    conditioners = np.asarray(conditioners, dtype=float)
    if conditioners.size == 0:
        return ktt
    s = _sites(conditioners, kernel.dim)
    d = np.linalg.norm(s - t[0], axis=1)
    if d.min() <= 1e-12:
        raise ValueError("target must be distinct from the conditioners")
    kss = gram(kernel, s)
    kts = _cross(kernel, t, s)[0]
    w, v = np.linalg.eigh(kss)
    keep = w > _PINV_RTOL * max(float(w[-1]), 0.0)
    if not keep.any():
        return ktt
    y = v.T[keep] @ kts
    cv = ktt - float(np.sum(y * y / w[keep]))
    return min(max(cv, 0.0), ktt)


def _set_distance(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0 or b.size == 0:
        return math.inf
    return float(cdist(a, b).min())


def nondeterminism_profile(kernel: Kernel, cells, masses, q: float,
                           tau=None) -> float:
    """Weighted non-determinism V over an ordered family of cells.

    For cell i let tau_i be its distance to the union of the earlier cells
    (supplied explicitly via tau, or computed; the first cell gets +inf so
    it is scored by its plain standard deviation).  Then

        v_i = min over t in cell i of
              sd(X(t) | all provided points at distance >= tau_i from t)

    and the result is min_i v_i * mass_i^(1/q).  Conditioning on finitely
    many points only, this computes an upper approximation of the true V.
    """
    if not (q >= 1.0):
        raise ValueError(f"q must be in [1, inf], got {q}")
    if len(cells) != len(masses):
        raise ValueError("one mass per cell required")
    arrs = [_sites(c, kernel.dim) if np.asarray(c).size else
            np.empty((0, kernel.dim)) for c in cells]
    if tau is not None and len(tau) != len(arrs):
        raise ValueError("one tau per cell required")
    everything = np.vstack([a for a in arrs if a.shape[0]]) if arrs else None
    if everything is None or everything.shape[0] == 0:
        raise ValueError("all cells are empty")
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    best = math.inf
    for i, cell in enumerate(arrs):
        if cell.shape[0] == 0:
            warnings.warn(f"cell {i} is empty; skipped")
            continue
        if tau is not None:
            tau_i = float(tau[i])
        else:
            earlier = [a for a in arrs[:i] if a.shape[0]]
            tau_i = (_set_distance(cell, np.vstack(earlier))
                     if earlier else math.inf)
        v_cell = math.inf
        for t in cell:
            if math.isinf(tau_i):
                var = float(_cross(kernel, t[None, :], t[None, :])[0, 0])
            elif tau_i <= 1e-12:
                var = 0.0
            else:
                dist = np.linalg.norm(everything - t, axis=1)
                conds = everything[dist >= tau_i]
                var = (conditional_variance(kernel, t, conds)
                       if conds.shape[0] else
                       float(_cross(kernel, t[None, :], t[None, :])[0, 0]))
            v_cell = min(v_cell, math.sqrt(max(var, 0.0)))
        best = min(best, v_cell * float(masses[i]) ** inv_q)
    return best
