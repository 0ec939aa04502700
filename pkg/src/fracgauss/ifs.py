"""Contractive similarity systems, their invariant measures, and word covers.

A system is a finite family of similarities S_j(x) = scale_j * R_j x + shift_j
together with positive weights rho_j summing to one and an open box Omega
whose images S_j(Omega) stay inside Omega pairwise disjointly.  The invariant
measure mu is the unique fixed point of mu = sum_j rho_j * mu o S_j^{-1}.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import chaos_chain

_MAX_DIM = 16


# ---------------------------------------------------------------------------
# basic types


@dataclass
class Similarity:
    """Affine contraction x -> scale * rotation @ x + shift."""

    scale: float
    rotation: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        self.rotation = np.array(self.rotation, dtype=float)
        self.shift = np.array(self.shift, dtype=float)
        n = self.shift.shape[0]
        if n < 1 or n > _MAX_DIM:
            raise ValueError(f"dimension must be in 1..{_MAX_DIM}, got {n}")
        if self.rotation.shape != (n, n):
            raise ValueError(
                f"rotation shape {self.rotation.shape} does not match dim {n}")
        self.scale = float(self.scale)
        if not (0.0 < self.scale <= 1.0):
            raise ValueError(f"scale must be in (0, 1], got {self.scale}")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(n)).max()
        if err > 1e-12:
            raise ValueError(f"rotation is not orthogonal (deviation {err:.3g})")
        self.rotation.setflags(write=False)
        self.shift.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.shift.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Similarity":
        return cls(1.0, np.eye(dim), np.zeros(dim))

    def apply(self, points):
        """Apply the map to one point (dim,) or a batch (k, dim)."""
        pts = np.asarray(points, dtype=float)
        return self.scale * (pts @ self.rotation.T) + self.shift

    def compose(self, other: "Similarity") -> "Similarity":
        """self after other: compose(self, other)(x) == self(other(x))."""
        return Similarity(self.scale * other.scale,
                          self.rotation @ other.rotation,
                          self.apply(other.shift))


@dataclass(frozen=True)
class Word:
    """A finite composition index alpha = (i1, ..., ip), 1-based letters.

    scale and mass are the products lambda_alpha and rho_alpha; weight is the
    mixed functional Lambda(alpha) = lambda_alpha^h * rho_alpha^(1/q) for the
    exponent pair the word was built under.
    """

    indices: tuple
    scale: float
    mass: float
    weight: float
    h: float
    q: float

    def __len__(self):
        return len(self.indices)


@dataclass
class PointMeasure:
    """A discrete measure: points (k, dim) with nonnegative masses (k,).

    box, when present, is the (lo, hi) pair of the ambient box the measure
    lives in; grid-based routines anchor their cubes to it.
    """

    points: np.ndarray
    masses: np.ndarray
    box: tuple | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.masses = np.asarray(self.masses, dtype=float)
        if self.points.shape[0] != self.masses.shape[0]:
            raise ValueError("points and masses length mismatch")
        if (self.masses < 0).any():
            raise ValueError("masses must be nonnegative")
        if self.box is not None:
            lo = np.asarray(self.box[0], dtype=float)
            hi = np.asarray(self.box[1], dtype=float)
            self.box = (lo, hi)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())


class SelfSimilarSystem:
    """Similarity maps + weights + an open-set-condition box."""

    def __init__(self, maps, weights, omega_lo, omega_hi):
        if not maps:
            raise ValueError("need at least one map")
        self.maps = list(maps)
        self.dim = self.maps[0].dim
        for s in self.maps:
            if s.dim != self.dim:
                raise ValueError("all maps must share one dimension")
            if not (0.0 < s.scale < 1.0):
                raise ValueError(
                    f"system maps must contract: scale {s.scale} not in (0,1)")
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (len(self.maps),):
            raise ValueError("one weight per map required")
        if (self.weights <= 0).any():
            raise ValueError("weights must be positive")
        wsum = self.weights.sum()
        if abs(wsum - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {wsum!r})")
        self.omega_lo = np.asarray(omega_lo, dtype=float)
        self.omega_hi = np.asarray(omega_hi, dtype=float)
        if self.omega_lo.shape != (self.dim,) or self.omega_hi.shape != (self.dim,):
            raise ValueError("omega bounds must match the system dimension")
        if not (self.omega_lo < self.omega_hi).all():
            raise ValueError("omega must have positive side lengths")
        self.scales = np.array([s.scale for s in self.maps])
        vol = float(np.sum(self.scales ** self.dim))
        if vol > 1.0 + 1e-12:
            raise ValueError(
                f"volume condition violated: sum(scale^dim) = {vol!r} > 1")
        self._check_open_set_condition()
        self.weights.setflags(write=False)
        self.scales.setflags(write=False)
        self.omega_lo.setflags(write=False)
        self.omega_hi.setflags(write=False)

    # -- geometry spot checks ------------------------------------------------

    def _corners(self):
        return np.array(list(itertools.product(*zip(self.omega_lo,
                                                    self.omega_hi))))

    def _check_open_set_condition(self):
        """Spot check: corner images inside omega, image boxes disjoint.

        This cannot fully verify the strong open set condition (the user
        asserts it); it catches the common mistakes.
        """
        corners = self._corners()
        tol = 1e-12 * float((self.omega_hi - self.omega_lo).max())
        boxes = []
        for j, s in enumerate(self.maps):
            img = s.apply(corners)
            if (img < self.omega_lo - tol).any() or (img > self.omega_hi + tol).any():
                raise ValueError(
                    f"map {j + 1} sends omega corners outside omega")
            boxes.append((img.min(axis=0), img.max(axis=0)))
        for a in range(len(boxes)):
            for b in range(a + 1, len(boxes)):
                alo, ahi = boxes[a]
                blo, bhi = boxes[b]
                if ((alo < bhi - tol) & (blo < ahi - tol)).all():
                    raise ValueError(
                        f"image boxes of maps {a + 1} and {b + 1} overlap; "
                        "open set condition fails")

    # -- derived geometry ----------------------------------------------------

    @property
    def m(self) -> int:
        return len(self.maps)

    @property
    def omega_center(self) -> np.ndarray:
        return 0.5 * (self.omega_lo + self.omega_hi)

    @property
    def omega_diameter(self) -> float:
        return float(np.linalg.norm(self.omega_hi - self.omega_lo))

    def omega_is_cube(self, rtol=1e-12) -> bool:
        sides = self.omega_hi - self.omega_lo
        return bool(np.allclose(sides, sides[0], rtol=rtol, atol=0.0))

    def __repr__(self):
        return (f"SelfSimilarSystem(m={self.m}, dim={self.dim}, "
                f"scales={np.round(self.scales, 6).tolist()})")


# ---------------------------------------------------------------------------
# word algebra


def make_word(system: SelfSimilarSystem, indices, h: float, q: float) -> Word:
    """Build a Word with its scale, mass and weight under (h, q)."""
    _check_hq(h, q)
    indices = tuple(int(i) for i in indices)
    lam, rho, w = 1.0, 1.0, 1.0
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    for i in indices:
        if not (1 <= i <= system.m):
            raise ValueError(f"letter {i} out of range 1..{system.m}")
        lam *= system.maps[i - 1].scale
        rho *= float(system.weights[i - 1])
        w *= system.maps[i - 1].scale ** h * float(system.weights[i - 1]) ** inv_q
    return Word(indices, lam, rho, w, h, float(q))


def compose(system: SelfSimilarSystem, word) -> Similarity:
    """The composed map S_alpha = S_i1 o ... o S_ip; empty word -> identity."""
    indices = word.indices if isinstance(word, Word) else tuple(word)
    acc = Similarity.identity(system.dim)
    for i in indices:
        if not (1 <= i <= system.m):
            raise ValueError(f"letter {i} out of range 1..{system.m}")
        acc = acc.compose(system.maps[i - 1])
    return acc


def _check_hq(h, q):
    if not (0.0 < h <= 1.0):
        raise ValueError(f"H must be in (0, 1], got {h}")
    if not (q >= 1.0):
        raise ValueError(f"q must be in [1, inf], got {q}")


def _require_nondegenerate(system):
    if system.m < 2:
        raise ValueError("degenerate system: need at least two maps")


# ---------------------------------------------------------------------------
# exponent solvers


def similarity_dimension(system: SelfSimilarSystem) -> float:
    """The root D of sum_j scale_j^D = 1, bracketed in (0, dim]."""
    _require_nondegenerate(system)
    lam = system.scales
    log_lam = np.log(lam)

    def f(d):
        return float(np.sum(np.exp(d * log_lam))) - 1.0

    lo, hi = 0.0, float(system.dim)
    if f(hi) > 0.0:
        # cannot happen when the volume condition holds; defensive only
        raise RuntimeError("dimension solver lost its bracket")
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    d = 0.5 * (lo + hi)
    for _ in range(4):
        val = np.exp(d * log_lam)
        deriv = float(np.sum(val * log_lam))
        if deriv == 0.0:
            break
        step = (float(np.sum(val)) - 1.0) / deriv
        d -= step
    d = min(max(d, 0.0), float(system.dim))
    if abs(f(d)) > 1e-10:
        raise RuntimeError(f"dimension solver residual {f(d):.3g} too large")
    return float(d)


@dataclass(frozen=True)
class GammaResult:
    """Root gamma of sum_j lambda_j^(H*gamma) rho_j^(gamma/q) = 1 and the
    predicted small-deviation exponent a = gamma*q/(q - gamma)."""

    gamma: float
    a: float
    residual: float


def rate_from_gamma(gamma: float, q: float) -> float:
    """a = gamma*q/(q - gamma); for q = inf the limit is gamma itself."""
    if math.isinf(q):
        return float(gamma)
    if gamma >= q - 1e-9:
        raise ValueError("rate exponent undefined: gamma >= q")
    return float(gamma * q / (q - gamma))


def gamma_exponent(system: SelfSimilarSystem, h: float, q: float) -> GammaResult:
    """Solve for the mixed-cover growth exponent under (h, q)."""
    _check_hq(h, q)
    _require_nondegenerate(system)
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    # d_j = -log(lambda_j^h rho_j^(1/q)) > 0 for contractive maps
    d = -(h * np.log(system.scales) + inv_q * np.log(system.weights))
    if (d <= 0).any():
        raise ValueError("weights/scales give a non-contracting functional")

    def g(x):
        return float(np.sum(np.exp(-x * d))) - 1.0

    hi = float(system.dim) / h + 1.0
    if not math.isinf(q):
        hi = min(hi, float(q))
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > 1e8:
            raise RuntimeError("gamma solver lost its bracket")
    lo = 0.0
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    gam = 0.5 * (lo + hi)
    for _ in range(4):
        val = np.exp(-gam * d)
        deriv = float(np.sum(-d * val))
        if deriv == 0.0:
            break
        gam -= (float(np.sum(val)) - 1.0) / deriv
    res = abs(g(gam))
    if res > 1e-10:
        raise RuntimeError(f"gamma solver residual {res:.3g} too large")
    return GammaResult(float(gam), rate_from_gamma(gam, q), res)


# ---------------------------------------------------------------------------
# word covers


def enumerate_level_words(system: SelfSimilarSystem, h: float, q: float,
                          s: float, cap: int = 10_000_000) -> list:
    """All words alpha with Lambda(alpha) <= e^-s < Lambda(parent).

    Depth-first in lexicographic order.  The emitted cells cover the
    attractor and their masses sum to one; the count grows like e^(gamma*s),
    which is estimated up front against cap.
    """
    _check_hq(h, q)
    _require_nondegenerate(system)
    if not (s > 0.0 and math.isfinite(s)):
        raise ValueError(f"level s must be positive and finite, got {s}")
    gam = gamma_exponent(system, h, q).gamma
    if gam * s > math.log(cap) + 1e-9:
        est = math.ceil(math.exp(min(gam * s, 700.0)))
        raise ValueError(
            f"cover too large: estimated ceil(exp(gamma*s)) = {est} words "
            f"exceeds cap = {cap}")
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    scales = [s_.scale for s_ in system.maps]
    rhos = [float(w) for w in system.weights]
    factors = [scales[j] ** h * rhos[j] ** inv_q for j in range(system.m)]
    thresh = math.exp(-s)
    words = []
    stack = [((), 1.0, 1.0, 1.0)]
    while stack:
        idx, lam, rho, w = stack.pop()
        if idx and w <= thresh:
            words.append(Word(idx, lam, rho, w, h, float(q)))
            if len(words) > cap:
                raise ValueError(
                    f"cover too large: more than cap = {cap} words at s = {s}")
            continue
        for j in range(system.m, 0, -1):
            stack.append((idx + (j,), lam * scales[j - 1], rho * rhos[j - 1],
                          w * factors[j - 1]))
    return words


def _split_entry(entry, system, h, q, counter):
    """Children of a heap entry (-weight, tiebreak, idx, lam, rho)."""
    _, _, idx, lam, rho = entry
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    out = []
    for j in range(1, system.m + 1):
        sc = system.maps[j - 1].scale
        ww = float(system.weights[j - 1])
        w_child = (lam * sc) ** h * (rho * ww) ** inv_q
        out.append((-w_child, next(counter), idx + (j,), lam * sc, rho * ww))
    return out


def level_cover_for_budget(system: SelfSimilarSystem, h: float, q: float,
                           n: int) -> list:
    """The largest threshold cover with at most n cells.

    Repeatedly splits the maximal-weight cells (ties split together, so the
    intermediate states are exactly the covers enumerate_level_words would
    produce); stops before the count would exceed n.
    """
    _check_hq(h, q)
    _require_nondegenerate(system)
    if n < system.m:
        raise ValueError(
            f"no word cover with at most {n} cells: need n >= {system.m}")
    counter = itertools.count()
    heap = [(-1.0, next(counter), (), 1.0, 1.0)]
    count = 1
    while True:
        w_max = -heap[0][0]
        group = []
        while heap and -heap[0][0] >= w_max * (1.0 - 1e-12):
            group.append(heapq.heappop(heap))
        if count + len(group) * (system.m - 1) > n:
            for e in group:
                heapq.heappush(heap, e)
            break
        for e in group:
            for child in _split_entry(e, system, h, q, counter):
                heapq.heappush(heap, child)
        count += len(group) * (system.m - 1)
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    out = []
    for negw, _, idx, lam, rho in sorted(heap, key=lambda e: e[2]):
        out.append(Word(idx, lam, rho, -negw, h, float(q)))
    return out


def level_cover_at_least(system: SelfSimilarSystem, h: float, q: float,
                         n: int) -> list:
    """The smallest threshold cover with at least n cells."""
    _check_hq(h, q)
    _require_nondegenerate(system)
    if n < 1:
        raise ValueError("n must be >= 1")
    counter = itertools.count()
    heap = [(-1.0, next(counter), (), 1.0, 1.0)]
    count = 1
    while count < n:
        w_max = -heap[0][0]
        group = []
        while heap and -heap[0][0] >= w_max * (1.0 - 1e-12):
            group.append(heapq.heappop(heap))
        for e in group:
            for child in _split_entry(e, system, h, q, counter):
                heapq.heappush(heap, child)
        count += len(group) * (system.m - 1)
    out = []
    for negw, _, idx, lam, rho in sorted(heap, key=lambda e: e[2]):
        out.append(Word(idx, lam, rho, -negw, h, float(q)))
    return out


# ---------------------------------------------------------------------------
# measure sampling


def _run_chain(system, rng, steps, burn_in, start):
    mats = np.ascontiguousarray(
        np.stack([s.scale * s.rotation for s in system.maps]))
    shifts = np.ascontiguousarray(
        np.stack([s.shift for s in system.maps]))
    # normalized copy: default_rng.choice insists on an exact unit sum
    p = system.weights / system.weights.sum()
    idx = rng.choice(system.m, size=steps + burn_in, p=p).astype(np.int64)
    out = np.empty((steps, system.dim))
    chaos_chain(mats, shifts, idx, np.ascontiguousarray(start, dtype=float),
                burn_in, out)
    return out


def sample_measure(system: SelfSimilarSystem, count: int, seed,
                   burn_in: int = 64) -> PointMeasure:
    """Chaos-game sample of the invariant measure; each point gets mass 1/count.

    Deterministic for a fixed seed.  The chain starts at the center of omega,
    so after burn_in steps every recorded point lies in the closed union of
    depth-burn_in cells.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if burn_in < 1:
        raise ValueError("burn_in must be >= 1")
    if seed is None:
        raise ValueError("seed is required")
    rng = np.random.default_rng(seed)
    pts = _run_chain(system, rng, count, burn_in, system.omega_center)
    return PointMeasure(pts, np.full(count, 1.0 / count),
                        box=(system.omega_lo.copy(), system.omega_hi.copy()))


def stratified_from_words(system: SelfSimilarSystem, words, points_per_cell: int,
                          seed, burn_in: int = 64) -> PointMeasure:
    """One independent chaos-game chain per word cell, mapped into the cell.

    Cell i contributes points_per_cell points of mass rho_alpha_i / ppc, so
    the total mass is sum_i rho_alpha_i regardless of the random draws.
    """
    if points_per_cell < 1:
        raise ValueError("empty stratum: points_per_cell must be >= 1")
    if seed is None:
        raise ValueError("seed is required")
    if not words:
        raise ValueError("need a nonempty word cover")
    ss = (seed if isinstance(seed, np.random.SeedSequence)
          else np.random.SeedSequence(seed))
    children = ss.spawn(len(words))
    blocks, masses = [], []
    for word, child in zip(words, children):
        rng = np.random.default_rng(child)
        base = _run_chain(system, rng, points_per_cell, burn_in,
                          system.omega_center)
        cell_map = compose(system, word)
        blocks.append(cell_map.apply(base))
        masses.append(np.full(points_per_cell, word.mass / points_per_cell))
    return PointMeasure(np.vstack(blocks), np.concatenate(masses),
                        box=(system.omega_lo.copy(), system.omega_hi.copy()))


def stratified_sample(system: SelfSimilarSystem, h: float, q: float, s: float,
                      points_per_cell: int, seed,
                      burn_in: int = 64) -> PointMeasure:
    """Stratified sample over the level-s word cover (see enumerate_level_words)."""
    words = enumerate_level_words(system, h, q, s)
    return stratified_from_words(system, words, points_per_cell, seed,
                                 burn_in=burn_in)


# ---------------------------------------------------------------------------
# system definition files


_BUILTIN_DIR = Path(__file__).parent / "configs"
_BUILTIN_ALIASES = {
    "cantor": "cantor.json",
    "sierpinski": "sierpinski.json",
    "vicsek": "vicsek.json",
    "lebesgue-interval": "lebesgue_interval.json",
    "lebesgue-square": "lebesgue_square.json",
}


def builtin_system_names():
    return sorted(_BUILTIN_ALIASES)


def builtin_system_path(name: str) -> Path:
    try:
        return _BUILTIN_DIR / _BUILTIN_ALIASES[name]
    except KeyError:
        raise ValueError(
            f"unknown builtin system {name!r}; known: "
            f"{', '.join(builtin_system_names())}") from None


def system_from_dict(data: dict) -> SelfSimilarSystem:
    try:
        dim = int(data["dim"])
        raw_maps = data["maps"]
        raw_weights = data["weights"]
        omega = data["omega"]
    except KeyError as exc:
        raise ValueError(f"system definition missing key {exc}") from None
    maps = []
    for entry in raw_maps:
        rot = entry.get("rotation", "identity")
        if isinstance(rot, str):
            if rot != "identity":
                raise ValueError(f"unknown rotation {rot!r}")
            rot_m = np.eye(dim)
        else:
            rot_m = np.asarray(rot, dtype=float)
            if rot_m.ndim == 1:
                if rot_m.size != dim * dim:
                    raise ValueError("row-major rotation needs dim*dim entries")
                rot_m = rot_m.reshape(dim, dim)
        maps.append(Similarity(float(entry["scale"]), rot_m,
                               np.asarray(entry["shift"], dtype=float)))
    if isinstance(raw_weights, str):
        if raw_weights != "hausdorff":
            raise ValueError(f"unknown weights value {raw_weights!r}")
        lam = np.array([s.scale for s in maps])
        d = _dimension_from_scales(lam, dim)
        w = lam ** d
        weights = w / w.sum()
    else:
        weights = np.asarray(raw_weights, dtype=float)
    return SelfSimilarSystem(maps, weights,
                             np.asarray(omega["lo"], dtype=float),
                             np.asarray(omega["hi"], dtype=float))


def _dimension_from_scales(lam, dim):
    lo, hi = 0.0, float(dim)
    log_lam = np.log(lam)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if np.sum(np.exp(mid * log_lam)) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def system_to_dict(system: SelfSimilarSystem) -> dict:
    maps = []
    for s in system.maps:
        rot = ("identity" if np.array_equal(s.rotation, np.eye(system.dim))
               else s.rotation.reshape(-1).tolist())
        maps.append({"scale": s.scale, "rotation": rot,
                     "shift": s.shift.tolist()})
    return {
        "dim": system.dim,
        "maps": maps,
        "weights": system.weights.tolist(),
        "omega": {"lo": system.omega_lo.tolist(),
                  "hi": system.omega_hi.tolist()},
    }


def load_system(path) -> SelfSimilarSystem:
    """Read a system definition from a JSON or TOML file, or a builtin name."""
    p = Path(path)
    if not p.exists():
        if str(path) in _BUILTIN_ALIASES:
            p = builtin_system_path(str(path))
        else:
            raise FileNotFoundError(f"system file not found: {path}")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:  # python < 3.11
            import tomli as tomllib
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    else:
        with open(p) as fh:
            data = json.load(fh)
    return system_from_dict(data)


def save_system(system: SelfSimilarSystem, path):
    """Write a JSON definition; floats round-trip exactly (repr digits)."""
    with open(path, "w") as fh:
        json.dump(system_to_dict(system), fh, indent=2)
        fh.write("\n")
