"""Monte Carlo small-deviation curves, power-law rate fits, verdicts.

The object of interest is phi(eps) = -log P(||X||_{L_q(mu)} < eps) for a
Gaussian field X over a discretized measure mu.  One shared sample batch
serves the whole eps grid (common random numbers), so the estimated curve
is exactly monotone and replicate blocks merge by integer counting, which
makes runs bitwise reproducible for a fixed seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import fields
from .ifs import PointMeasure, SelfSimilarSystem, gamma_exponent, \
    level_cover_at_least, similarity_dimension, stratified_from_words

_Z95 = 1.959963984540054
_SITE_CAP = 4096


def _as_seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def lq_norm(values, masses, q: float):
    """L_q(mu) norm of field values at weighted sites; q=inf is the sup.

    values may be (sites,) or (reps, sites); the site axis is the last one.
    """
    values = np.asarray(values, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if abs(masses.sum() - 1.0) > 1e-9:
        raise ValueError(f"masses must sum to 1, got {masses.sum()!r}")
    if not (q >= 1.0):
        raise ValueError(f"q must be in [1, inf], got {q}")
    if math.isinf(q):
        return np.abs(values).max(axis=-1)
    return (np.abs(values) ** q @ masses) ** (1.0 / q)


def wilson_interval(count: int, total: int, z: float = _Z95):
    """95% score interval for a binomial proportion; solid near p = 0."""
    p = count / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    # at the boundary counts the bound is exactly 0 or 1; rounding can leave
    # a stray 1e-18, so pin those cases
    lo = 0.0 if count == 0 else max(center - half, 0.0)
    hi = 1.0 if count == total else min(center + half, 1.0)
    return lo, hi


@dataclass
class SmallDevCurve:
    eps: np.ndarray
    p_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    phi: np.ndarray
    flags: list
    reps: int
    quadrature: str
    seed: object
    counts: np.ndarray | None = None

    def to_csv(self, fh):
        close = False
        if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
            fh = open(fh, "w")
            close = True
        try:
            fh.write("eps,p_hat,lo,hi,phi,flag\n")
            for i in range(len(self.eps)):
                fh.write(",".join([
                    _g(self.eps[i]), _g(self.p_hat[i]), _g(self.lo[i]),
                    _g(self.hi[i]), _g(self.phi[i]), self.flags[i]]) + "\n")
        finally:
            if close:
                fh.close()

    def rows(self):
        out = []
        for i in range(len(self.eps)):
            phi = float(self.phi[i])
            out.append([float(self.eps[i]), float(self.p_hat[i]),
                        float(self.lo[i]), float(self.hi[i]),
                        None if math.isnan(phi) else phi, self.flags[i]])
        return out


def _g(x) -> str:
    return format(float(x), ".17g")


def estimate_curve(kernel, sites: PointMeasure, q: float, eps_grid, reps: int,
                   seed, block_size: int = 4096,
                   quadrature: str | None = None) -> SmallDevCurve:
    """Estimate P(||X||_{L_q(mu)} < eps) over the grid from one shared batch.

    Replicates stream through fixed-size blocks with seeds spawned from the
    master seed, and only integer counts cross block boundaries, so the
    result does not depend on scheduling and is reproducible bit for bit.
    """
    if reps < 1000:
        raise ValueError("reps must be >= 1000")
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.shape[0] < 1:
        raise ValueError("eps_grid must be a nonempty 1-D array")
    if (eps <= 0).any():
        raise ValueError("eps values must be positive")
    if (np.diff(eps) >= 0).any():
        raise ValueError("eps_grid must be strictly decreasing")
    k = sites.points.shape[0]
    if k > _SITE_CAP:
        raise ValueError(f"{k} sites exceeds the factorization cap {_SITE_CAP}")
    masses = sites.masses
    if not math.isinf(q) and abs(masses.sum() - 1.0) > 1e-9:
        raise ValueError("site masses must sum to 1")
    L, _ = fields._factor(fields.gram(kernel, sites.points))
    n_blocks = (reps + block_size - 1) // block_size
    children = _as_seedseq(seed).spawn(n_blocks)
    counts = np.zeros(eps.shape[0], dtype=np.int64)
    done = 0
    for child in children:
        b = min(block_size, reps - done)
        rng = np.random.default_rng(child)
        values = rng.standard_normal((b, k)) @ L.T
        if math.isinf(q):
            norms = np.abs(values).max(axis=1)
        else:
            norms = (np.abs(values) ** q @ masses) ** (1.0 / q)
        counts += (norms[:, None] < eps[None, :]).sum(axis=0)
        done += b
    p_hat = counts / reps
    lo = np.empty_like(p_hat)
    hi = np.empty_like(p_hat)
    phi = np.full(eps.shape[0], np.nan)
    flags = []
    for i, c in enumerate(counts):
        lo[i], hi[i] = wilson_interval(int(c), reps)
        if c > 0:
            phi[i] = -math.log(p_hat[i])
            flags.append("ok")
        else:
            flags.append("unresolved")
    if quadrature is None:
        quadrature = f"{k} sites"
    return SmallDevCurve(eps, p_hat, lo, hi, phi, flags, reps, quadrature,
                         seed, counts)


def synth_curve(a: float, beta: float, c: float, eps_grid) -> SmallDevCurve:
    """Noise-free curve phi = c * eps^-a * log(1/eps)^(a*beta), for fit checks."""
    eps = np.asarray(eps_grid, dtype=float)
    if beta != 0.0 and (eps >= 1.0).any():
        raise ValueError("log-corrected curves need eps < 1")
    logs = np.log(1.0 / eps)
    phi = c * eps ** (-a) * (logs ** (a * beta) if beta != 0.0 else 1.0)
    p = np.exp(-phi)
    return SmallDevCurve(eps, p, p.copy(), p.copy(), phi,
                         ["synthetic"] * eps.shape[0], 0, "synthetic", None)


@dataclass
class RateFit:
    a: float
    beta: float
    c: float
    window: tuple
    stderr_a: float
    npoints: int


def fit_rate(curve: SmallDevCurve, fit_beta: bool = False,
             window=None) -> RateFit:
    """Regress log phi on log(1/eps), weighted by the propagated Wilson
    variance of log phi (unit weights for noise-free synthetic curves).

    The slope is the rate exponent a; with fit_beta the extra regressor
    log log(1/eps) estimates the log-correction power beta through a*beta.
    """
    eps = curve.eps
    mask = np.array([f in ("ok", "synthetic") for f in curve.flags])
    mask &= np.isfinite(curve.phi) & (curve.phi > 0)
    if window is not None:
        w_lo, w_hi = min(window), max(window)
        mask &= (eps >= w_lo * (1 - 1e-12)) & (eps <= w_hi * (1 + 1e-12))
    if fit_beta:
        mask &= eps < 1.0
    weighted = curve.reps > 0
    if weighted:
        # need a genuine two-sided interval for the variance of log phi
        mask &= (curve.lo > 0) & (curve.hi < 1)
    idx = np.flatnonzero(mask)
    if idx.shape[0] < 4:
        raise ValueError(
            f"window too narrow: {idx.shape[0]} usable points, need 4")
    e = eps[idx]
    phi = curve.phi[idx]
    y = np.log(phi)
    cols = [np.ones_like(e), np.log(1.0 / e)]
    if fit_beta:
        cols.append(np.log(np.log(1.0 / e)))
    x = np.stack(cols, axis=1)
    if weighted:
        phi_lo = -np.log(curve.hi[idx])
        phi_hi = -np.log(curve.lo[idx])
        se = (np.log(phi_hi) - np.log(phi_lo)) / (2 * _Z95)
        se = np.maximum(se, 1e-12)
        w = 1.0 / se ** 2
    else:
        w = np.ones_like(y)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(x * sw[:, None], y * sw, rcond=None)
    xtwx = x.T @ (x * w[:, None])
    cov = np.linalg.inv(xtwx)
    if not weighted:
        resid = y - x @ coef
        dof = max(idx.shape[0] - x.shape[1], 1)
        cov = cov * float(resid @ resid) / dof
    a = float(coef[1])
    beta = float(coef[2] / a) if fit_beta and a != 0.0 else 0.0
    return RateFit(a, beta, float(math.exp(coef[0])),
                   (float(e.min()), float(e.max())),
                   float(math.sqrt(max(cov[1, 1], 0.0))), int(idx.shape[0]))


@dataclass(frozen=True)
class Prediction:
    a: float
    note: str
    residual: float


def predicted_exponent(kind: str, system: SelfSimilarSystem | None = None,
                       h: float | None = None, q: float | None = None,
                       dim: int | None = None) -> Prediction:
    """Predicted small-deviation exponent for the three measure families."""
    if h is None or not (0.0 < h <= 1.0):
        raise ValueError(f"H must be in (0, 1], got {h}")
    if kind == "selfsimilar":
        if system is None or q is None:
            raise ValueError("selfsimilar prediction needs system and q")
        g = gamma_exponent(system, h, q)
        return Prediction(g.a, f"gamma = {g.gamma!r}, a = gamma*q/(q-gamma)",
                          g.residual)
    if kind == "hausdorff":
        if system is None:
            raise ValueError("hausdorff prediction needs a system")
        d = similarity_dimension(system)
        res = abs(float(np.sum(np.array([s.scale for s in system.maps]) ** d)) - 1.0)
        return Prediction(d / h, f"D = {d!r}, a = D/H", res)
    if kind == "lebesgue":
        if dim is None or dim < 1:
            raise ValueError("lebesgue prediction needs a positive dim")
        return Prediction(dim / h, f"a = N/H with N = {dim}", 0.0)
    raise ValueError(f"unknown prediction kind {kind!r}")


@dataclass
class Budget:
    sites: int = 256
    reps: int = 200_000
    eps_lo: float = 0.25
    eps_hi: float = 0.9
    eps_count: int = 14
    points_per_cell: int = 1
    block_size: int = 4096
    tolerance: float = 0.25

    def eps_grid(self) -> np.ndarray:
        if not (0 < self.eps_lo < self.eps_hi):
            raise ValueError("need 0 < eps_lo < eps_hi")
        return np.geomspace(self.eps_hi, self.eps_lo, self.eps_count)


@dataclass
class Report:
    verdict: str
    a_fit: float
    stderr_a: float
    a_pred: float
    pred_note: str
    pred_residual: float
    rel_error: float
    tolerance: float
    budget: dict
    seed: object
    quadrature: str
    fit: RateFit
    curve: SmallDevCurve

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "a_fit": self.a_fit,
            "stderr_a": self.stderr_a,
            "a_pred": self.a_pred,
            "pred_note": self.pred_note,
            "pred_residual": self.pred_residual,
            "rel_error": self.rel_error,
            "tolerance": self.tolerance,
            "budget": self.budget,
            "seed": self.seed,
            "quadrature": self.quadrature,
            "fit": {"a": self.fit.a, "beta": self.fit.beta, "c": self.fit.c,
                    "window": list(self.fit.window),
                    "stderr_a": self.fit.stderr_a,
                    "npoints": self.fit.npoints},
            "curve_columns": ["eps", "p_hat", "lo", "hi", "phi", "flag"],
            "curve": self.curve.rows(),
        }

    def to_json(self, fh):
        close = False
        if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
            fh = open(fh, "w")
            close = True
        try:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        finally:
            if close:
                fh.close()


def lebesgue_sites(dim: int, target: int) -> PointMeasure:
    """Midpoint grid on [0,1]^dim with about `target` equally weighted sites."""
    if dim == 1:
        k = max(int(target), 1)
        pts = (np.arange(k) + 0.5) / k
        return PointMeasure(pts[:, None], np.full(k, 1.0 / k),
                            box=(np.zeros(1), np.ones(1)))
    if dim == 2:
        g = max(int(round(math.sqrt(target))), 1)
        side = (np.arange(g) + 0.5) / g
        xx, yy = np.meshgrid(side, side, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        return PointMeasure(pts, np.full(g * g, 1.0 / (g * g)),
                            box=(np.zeros(2), np.ones(2)))
    raise ValueError("lebesgue sites support dim 1 and 2")


def _is_hausdorff(system: SelfSimilarSystem) -> bool:
    d = similarity_dimension(system)
    lam = np.array([s.scale for s in system.maps])
    return bool(np.abs(system.weights - lam ** d).max() <= 1e-9)


def verify(kernel, q: float, seed, system: SelfSimilarSystem | None = None,
           lebesgue_dim: int | None = None, h: float | None = None,
           prediction: str = "auto", budget: Budget | None = None) -> Report:
    """Estimate the small-deviation curve, fit the rate, compare to theory.

    Verdict: PASS when the fitted exponent is within `tolerance` (relative)
    of the prediction; otherwise INCONCLUSIVE when the fit's standard error
    exceeds half the tolerance, else FAIL.
    """
    if (system is None) == (lebesgue_dim is None):
        raise ValueError("give exactly one of system or lebesgue_dim")
    if budget is None:
        budget = Budget()
    if h is None:
        if kernel.family == "fbm":
            h = kernel.h
        else:
            raise ValueError("h is required for the sheet kernel")
    master = _as_seedseq(seed)
    site_seed, mc_seed = master.spawn(2)
    if lebesgue_dim is not None:
        sites = lebesgue_sites(lebesgue_dim, budget.sites)
        quadrature = f"{sites.points.shape[0]} grid sites"
        kind = "lebesgue" if prediction == "auto" else prediction
    else:
        words = level_cover_at_least(system, h, q, budget.sites)
        sites = stratified_from_words(system, words, budget.points_per_cell,
                                      site_seed)
        quadrature = (f"{sites.points.shape[0]} sites, {len(words)} cells, "
                      f"{budget.points_per_cell} per cell")
        if prediction == "auto":
            kind = "hausdorff" if _is_hausdorff(system) else "selfsimilar"
        else:
            kind = prediction
    pred = predicted_exponent(kind, system=system, h=h, q=q,
                              dim=lebesgue_dim)
    curve = estimate_curve(kernel, sites, q, budget.eps_grid(), budget.reps,
                           mc_seed, budget.block_size, quadrature)
    fit = fit_rate(curve, fit_beta=False,
                   window=(budget.eps_lo, budget.eps_hi))
    rel = abs(fit.a - pred.a) / abs(pred.a)
    if rel <= budget.tolerance:
        verdict = "PASS"
    elif fit.stderr_a / abs(pred.a) > budget.tolerance / 2:
        verdict = "INCONCLUSIVE"
    else:
        verdict = "FAIL"
    seed_echo = seed if isinstance(seed, int) else str(seed)
    return Report(verdict, fit.a, fit.stderr_a, pred.a, pred.note,
                  pred.residual, rel, budget.tolerance, asdict(budget),
                  seed_echo, quadrature, fit, curve)
