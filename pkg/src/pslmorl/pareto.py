"""Dominance, nondominated filtering, the running Pareto archive, hypervolume and sparsity.

All objectives are maximized.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np


class Dominance(enum.Enum):
    STRICT = "strict"
    WEAK = "weak"
    NONE = "none"


def dominates(a, b) -> Dominance:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if not np.all(a >= b):
        return Dominance.NONE
    return Dominance.STRICT if np.any(a > b) else Dominance.WEAK


def nondominated_indices(points) -> list[int]:
    """Indices of the first occurrence of every nondominated distinct point, input order kept.

    Candidates are visited in descending lexicographic order; a point can only be
    strictly dominated by one that precedes it in that order, so each candidate is
    compared against the front accepted so far.
    """
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return []
    P = P.reshape(len(P), -1)
    order = np.lexsort(P.T[::-1])[::-1]
    # stable among equal rows: keep the earliest input index
    keep: list[int] = []
    front = np.empty((0, P.shape[1]))
    i = 0
    n = len(order)
    while i < n:
        j = i
        # group identical rows
        while j + 1 < n and np.array_equal(P[order[j + 1]], P[order[i]]):
            j += 1
        idx = int(min(order[i:j + 1]))
        p = P[idx]
        if not (len(front) and np.any(np.all(front >= p, axis=1))):
            keep.append(idx)
            front = np.vstack([front, p])
        i = j + 1
    return sorted(keep)


def pareto_filter(points) -> np.ndarray:
    """Nondominated subset; duplicates collapse to one."""
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return P.reshape(0, P.shape[-1] if P.ndim > 1 else 0)
    P = P.reshape(len(P), -1)
    return P[nondominated_indices(P)]


@dataclass
class ObjectivePoint:
    values: np.ndarray
    tag: dict | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"objective point must be finite: {self.values}")


@dataclass
class ParetoArchive:
    points: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    @property
    def values(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 0))
        return np.array([p.values for p in self.points])

    def insert(self, p: ObjectivePoint) -> bool:
        return archive_insert(self, p)

    def hypervolume(self, ref) -> float:
        return hypervolume(self.values, ref) if self.points else 0.0

    def sparsity(self):
        return sparsity(self.values) if self.points else None


def archive_insert(archive: ParetoArchive, p) -> bool:
    """Insert unless some resident weakly dominates ``p`` (equal counts, so duplicates
    collapse); evict residents that ``p`` strictly dominates. Returns whether ``p`` entered."""
    if not isinstance(p, ObjectivePoint):
        p = ObjectivePoint(p)
    v = p.values
    if archive.points:
        R = archive.values
        if np.any(np.all(R >= v, axis=1)):
            return False
        beaten = np.all(v >= R, axis=1) & np.any(v > R, axis=1)
        archive.points = [q for q, b in zip(archive.points, beaten) if not b]
    archive.points.append(p)
    return True


# -- hypervolume --------------------------------------------------------------

def _clip_to_ref(points, ref):
    P = np.asarray(points, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if P.size == 0:
        return np.empty((0, ref.size)), ref
    P = P.reshape(len(P), -1)
    if P.shape[1] != ref.size:
        raise ValueError(f"points have {P.shape[1]} objectives, reference has {ref.size}")
    if ref.size < 2:
        raise ValueError("hypervolume needs m >= 2 objectives")
    return P[np.all(P > ref, axis=1)], ref


def _sweep2d(P, ref) -> float:
    P = P[np.lexsort((-P[:, 1], -P[:, 0]))]
    total, best_y = 0.0, ref[1]
    for x, y in P:
        if y > best_y:
            total += (x - ref[0]) * (y - best_y)
            best_y = y
    return total


def _nd_max(P):
    """Nondominated rows (weak dominance removes duplicates too)."""
    if len(P) <= 1:
        return P
    keep = np.ones(len(P), dtype=bool)
    for i in range(len(P)):
        if not keep[i]:
            continue
        dominated = np.all(P[i] >= P, axis=1)
        dominated[i] = False
        keep &= ~dominated
    return P[keep]


def _wfg(P, ref, sweep_base: bool) -> float:
    n = len(P)
    if n == 0:
        return 0.0
    if n == 1:
        return float(np.prod(P[0] - ref))
    if sweep_base and P.shape[1] == 2:
        return _sweep2d(P, ref)
    # descending on the last objective keeps the limited sets small
    P = P[np.argsort(-P[:, -1], kind="stable")]
    total = 0.0
    for i in range(n):
        p = P[i]
        incl = float(np.prod(p - ref))
        rest = P[i + 1:]
        if len(rest):
            limited = _nd_max(np.minimum(rest, p))
            limited = limited[np.all(limited > ref, axis=1)]
            incl -= _wfg(limited, ref, sweep_base)
        total += incl
    return total


def hypervolume(points, ref) -> float:
    """Exact dominated volume between ``ref`` and the points (coordinates <= ref contribute nothing)."""
    P, ref = _clip_to_ref(points, ref)
    if len(P) == 0:
        return 0.0
    P = _nd_max(P[np.lexsort(P.T[::-1])])
    if P.shape[1] == 2:
        return _sweep2d(P, ref)
    return _wfg(P, ref, sweep_base=True)


def hypervolume_wfg(points, ref) -> float:
    """Pure recursive (inclusion-exclusion over limited sets) computation, any m >= 2."""
    P, ref = _clip_to_ref(points, ref)
    if len(P) == 0:
        return 0.0
    return _wfg(_nd_max(P[np.lexsort(P.T[::-1])]), ref, sweep_base=False)


def sparsity(points):
    """Mean squared gap between consecutive per-objective sorted values; None when M == 1."""
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        raise ValueError("sparsity of an empty front")
    P = P.reshape(len(P), -1)
    M = len(P)
    if M == 1:
        return None
    total = 0.0
    for k in range(P.shape[1]):
        col = np.sort(P[:, k])[::-1]
        total += float(np.sum(np.diff(col) ** 2))
    return total / (M - 1)


def format_sparsity(sp) -> str | float:
    return "N/A" if sp is None else sp


# -- CSV ------------------------------------------------------------------------

def write_front_csv(path, values, prefs=None):
    values = np.asarray(values, dtype=float)
    m = values.shape[1]
    if prefs is None:
        prefs = np.full_like(values, np.nan)
    prefs = np.asarray(prefs, dtype=float)
    header = [f"obj_{i + 1}" for i in range(m)] + [f"pref_{i + 1}" for i in range(prefs.shape[1])]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for v, p in zip(values, prefs):
            w.writerow([repr(float(x)) for x in v] + [repr(float(x)) for x in p])


def read_front_csv(path):
    """Returns ``(values, prefs)``; prefs is None when the file has no pref columns."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError(f"{path}: empty front file")
    header = rows[0]
    obj_cols = [i for i, h in enumerate(header) if h.startswith("obj_")]
    pref_cols = [i for i, h in enumerate(header) if h.startswith("pref_")]
    if not obj_cols:
        raise ValueError(f"{path}: no obj_* columns in header")
    body = rows[1:]
    values = np.array([[float(r[i]) for i in obj_cols] for r in body]).reshape(len(body), len(obj_cols))
    prefs = None
    if pref_cols:
        prefs = np.array([[float(r[i]) for i in pref_cols] for r in body]).reshape(len(body), len(pref_cols))
    return values, prefs


def archive_to_arrays(archive: ParetoArchive):
    """Archive points in a canonical (lexicographically sorted) order with their preference tags."""
    if not archive.points:
        return np.empty((0, 0)), np.empty((0, 0))
    vals = archive.values
    prefs = np.array([
        (p.tag or {}).get("preference", np.full(vals.shape[1], np.nan)) for p in archive.points
    ], dtype=float)
    order = np.lexsort(np.hstack([vals, prefs]).T[::-1])
    return vals[order], prefs[order]
