"""Preference vectors on the probability simplex and the operations built on them."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-9
ZERO_NORM = 1e-12


class SamplingError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


def check_preference(w, tol=SIMPLEX_TOL) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise ValueError(f"preference must be a vector with m >= 2 entries, got shape {w.shape}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > tol:
        raise ValueError(f"not a simplex point: {w}")
    return w


def is_preference(w, tol=SIMPLEX_TOL) -> bool:
    w = np.asarray(w, dtype=float)
    return w.ndim == 1 and w.size >= 2 and bool(np.all(w >= 0)) and abs(w.sum() - 1.0) <= tol


@dataclass(frozen=True)
class PreferenceRegion:
    region_index: int
    region_count: int

    def __post_init__(self):
        if not 0 <= self.region_index < self.region_count:
            raise ValueError(f"region index {self.region_index} outside [0, {self.region_count})")

    @property
    def bounds(self):
        k, K = self.region_index, self.region_count
        return k / K, (k + 1) / K


def sample_preference(rng: np.random.Generator, m: int, region: PreferenceRegion | None = None,
                      max_tries: int = 10_000) -> np.ndarray:
    """Uniform draw from the (m-1)-simplex, optionally restricted to a band of the first weight.

    For m == 2 the band is enforced by rejection. For m > 2 the first weight is drawn
    from its Beta(1, m-1) marginal truncated to the band (inverse CDF), and the rest
    of the mass is split uniformly, which is the exact conditional distribution.
    """
    if m < 2:
        raise ValueError("need m >= 2 objectives")
    if region is None:
        return rng.dirichlet(np.ones(m))
    lo, hi = region.bounds
    if m == 2:
        for _ in range(max_tries):
            w = rng.dirichlet(np.ones(2))
            if lo <= w[0] < hi:
                return w
        raise SamplingError(f"no sample in [{lo}, {hi}) after {max_tries} tries")
    k = m - 1
    cdf = lambda x: 1.0 - (1.0 - x) ** k
    u = rng.uniform(cdf(lo), cdf(hi))
    first = 1.0 - (1.0 - u) ** (1.0 / k)
    first = min(max(first, lo), np.nextafter(hi, lo))
    rest = rng.dirichlet(np.ones(k)) * (1.0 - first)
    return np.concatenate([[first], rest])


def sample_preferences(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    return rng.dirichlet(np.ones(m), size=n)


def scalarize(w, J) -> float:
    w, J = np.asarray(w, dtype=float), np.asarray(J, dtype=float)
    if w.shape[-1] != J.shape[-1]:
        raise ValueError(f"dimension mismatch: {w.shape} vs {J.shape}")
    return float(w @ J)


def cosine_similarity(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < ZERO_NORM or nb < ZERO_NORM:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_rows(w, Q) -> np.ndarray:
    """Cosine between ``w[..., :]`` and ``Q[..., :]`` along the last axis, broadcasting."""
    w, Q = np.asarray(w, dtype=float), np.asarray(Q, dtype=float)
    nw = np.linalg.norm(w, axis=-1)
    nq = np.linalg.norm(Q, axis=-1)
    dot = np.asarray(np.sum(w * Q, axis=-1), dtype=float)
    denom = np.broadcast_to(nw * nq, dot.shape)
    ok = np.broadcast_to((nw >= ZERO_NORM) & (nq >= ZERO_NORM), dot.shape)
    c = np.divide(dot, denom, out=np.zeros_like(dot), where=ok)
    return np.clip(c, -1.0, 1.0)


def directional_angle(w_p, q) -> float:
    """Angle in radians between a preference and a value vector; zero-norm ``q`` gives pi/2."""
    return float(np.arccos(cosine_similarity(w_p, q)))


def angle_rows(w_p, Q) -> np.ndarray:
    return np.arccos(cosine_rows(w_p, Q))


@dataclass
class Interpolator:
    mode: str = "identity"
    anchors: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("identity", "piecewise-linear"):
            raise ConfigError(f"unknown interpolator mode {self.mode!r}")
        self.anchors = [(check_preference(s), check_preference(t)) for s, t in self.anchors]
        if self.mode == "piecewise-linear":
            if len(self.anchors) < 2:
                raise ConfigError("piecewise-linear interpolator needs at least 2 anchors")
            src = np.array([s for s, _ in self.anchors])
            if len({tuple(r) for r in src}) != len(src):
                raise ConfigError("interpolator anchor sources must be distinct")
            self._src = src
            self._tgt = np.array([t for _, t in self.anchors])

    @classmethod
    def from_config(cls, cfg: dict | None):
        if not cfg:
            return cls()
        anchors = [(a["source"], a["target"]) for a in cfg.get("anchors", [])]
        return cls(cfg.get("mode", "identity"), anchors)

    def __call__(self, w):
        return interpolate_preference(self, w)


def interpolate_preference(interp: Interpolator, w) -> np.ndarray:
    """Map a preference (or a batch of them) through the interpolator."""
    w = np.asarray(w, dtype=float)
    if interp.mode == "identity":
        return w
    if w.ndim == 2:
        return np.array([interpolate_preference(interp, row) for row in w])
    dist = np.linalg.norm(interp._src - w, axis=1)
    i, j = np.argsort(dist, kind="stable")[:2]
    di, dj = dist[i], dist[j]
    if di + dj == 0.0:
        out = interp._tgt[i].copy()
    else:
        out = (dj * interp._tgt[i] + di * interp._tgt[j]) / (di + dj)
    out = np.clip(out, 0.0, None)
    return out / out.sum()


def simplex_lattice(m: int, resolution: int) -> np.ndarray:
    """All points with coordinates in {0, 1/H, ..., 1} summing to 1 (H = resolution)."""
    pts = []
    for bars in itertools.combinations(range(resolution + m - 1), m - 1):
        prev, counts = -1, []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(resolution + m - 1 - prev - 1)
        pts.append(counts)
    return np.array(pts, dtype=float)[::-1] / resolution


def evaluation_grid(m: int, n: int | None = None, seed: int = 0) -> np.ndarray:
    """Fixed test preferences.

    m == 2: ``n`` (default 11) evenly spaced points. Otherwise: the m vertices plus
    ``n - m`` (default total 66) Dirichlet draws from a fixed seed.
    """
    if m == 2:
        n = 11 if n is None else n
        if n == 1:
            return np.array([[0.5, 0.5]])
        w = np.linspace(1.0, 0.0, n)
        return np.stack([w, 1.0 - w], axis=1)
    n = 66 if n is None else n
    vertices = np.eye(m)
    if n <= m:
        return vertices[:n]
    rng = np.random.default_rng(seed)
    return np.vstack([vertices, rng.dirichlet(np.ones(m), size=n - m)])
