"""Discrete base measures, cone measures, and the cone-to-base projection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DimensionMismatch, EmptyMeasure

# atoms lighter than this fraction of the total are dropped on construction
MASS_FLOOR = 1e-15
# coordinate quantum used to decide that two base points coincide
MERGE_QUANTUM = 1e-12


def _as_points(points, dim=None) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        if dim is None or dim == 1:
            pts = pts.reshape(-1, 1)
        else:
            pts = pts.reshape(-1, dim)
    if pts.ndim != 2:
        raise DimensionMismatch(f"points must be (n, d), got shape {pts.shape}")
    if dim is not None and pts.shape[0] and pts.shape[1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {pts.shape[1]}")
    return pts


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted atom cloud on R^d.

    Masses must be nonnegative; atoms lighter than ``MASS_FLOOR`` times the
    total are removed, so every stored mass is strictly positive.
    """

    points: np.ndarray
    masses: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        dim = self.dim or None
        pts = _as_points(self.points, dim)
        if pts.shape[0] != masses.shape[0]:
            raise DimensionMismatch(
                f"{pts.shape[0]} points but {masses.shape[0]} masses")
        if np.any(~np.isfinite(masses)) or np.any(masses < 0):
            raise ValueError("masses must be finite and nonnegative")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        total = masses.sum()
        keep = masses > MASS_FLOOR * total
        if not keep.all():
            pts, masses = pts[keep], masses[keep]
        if dim is None:
            dim = pts.shape[1] if pts.shape[0] else 1
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        masses = np.ascontiguousarray(masses)
        masses.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "dim", int(dim))

    def __len__(self) -> int:
        return self.masses.shape[0]

    @classmethod
    def empty(cls, dim: int = 1) -> "DiscreteMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0), dim)


@dataclass(frozen=True)
class ConePoint:
    """Point (x, r) of the cone; arrays may carry leading batch axes."""

    x: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        r = np.asarray(self.r, dtype=float)
        if np.any(r < 0):
            raise ValueError("radial coordinate must be nonnegative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "r", r)

    @property
    def dim(self) -> int:
        return self.x.shape[-1]


@dataclass(frozen=True)
class ConeMeasure:
    """Weighted atom cloud on the cone, one radius per atom."""

    points: np.ndarray
    radii: np.ndarray
    masses: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        dim = self.dim or None
        pts = _as_points(self.points, dim)
        radii = np.asarray(self.radii, dtype=float).reshape(-1)
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if not (pts.shape[0] == radii.shape[0] == masses.shape[0]):
            raise DimensionMismatch("points, radii and masses differ in length")
        if np.any(masses <= 0) or np.any(~np.isfinite(masses)):
            raise ValueError("cone masses must be finite and positive")
        if np.any(radii < 0) or np.any(~np.isfinite(radii)):
            raise ValueError("radii must be finite and nonnegative")
        if dim is None:
            dim = pts.shape[1] if pts.shape[0] else 1
        for name, arr in (("points", pts), ("radii", radii), ("masses", masses)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "dim", int(dim))

    def __len__(self) -> int:
        return self.masses.shape[0]

    def atom(self, i: int) -> ConePoint:
        return ConePoint(self.points[i], self.radii[i])

    def deterministic_radial(self, tol: float = MERGE_QUANTUM) -> bool:
        """True when no two atoms share a base point with different radii."""
        if len(self) < 2:
            return True
        _, inverse = _quantized_groups(self.points)
        rmax = np.full(inverse.max() + 1, -np.inf)
        rmin = np.full(inverse.max() + 1, np.inf)
        np.maximum.at(rmax, inverse, self.radii)
        np.minimum.at(rmin, inverse, self.radii)
        return bool(np.all(rmax - rmin <= tol))


def _quantized_groups(points: np.ndarray):
    """Group rows of ``points`` that agree after quantizing to MERGE_QUANTUM.

    Returns the index of the first member of each group and the group id of
    every row; groups are ordered by first appearance.
    """
    keys = np.round(points / MERGE_QUANTUM).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True,
                                  return_inverse=True)
    inverse = inverse.reshape(-1)
    # relabel so group ids follow first appearance, which keeps atom order stable
    order = np.argsort(first, kind="stable")
    relabel = np.empty_like(order)
    relabel[order] = np.arange(order.size)
    return first[order], relabel[inverse]


def merge_atoms(points: np.ndarray, masses: np.ndarray, dim: int | None = None):
    """Sum the masses of coincident atoms. Returns (measure, group id per input row)."""
    points = _as_points(points, dim)
    if points.shape[0] == 0:
        return DiscreteMeasure.empty(dim or 1), np.zeros(0, dtype=int)
    first, inverse = _quantized_groups(points)
    merged = np.bincount(inverse, weights=masses, minlength=first.size)
    return DiscreteMeasure(points[first], merged, points.shape[1]), inverse


def total_mass(m: DiscreteMeasure) -> float:
    return float(np.sum(m.masses)) if len(m) else 0.0


def support_diameter(m: DiscreteMeasure) -> float:
    if len(m) == 0:
        raise EmptyMeasure("diameter of an empty measure")
    return _diameter(m.points)


def _diameter(points: np.ndarray) -> float:
    if points.shape[0] < 2:
        return 0.0
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    return float(pdist(points).max())


def rescale_to_diameter(m: DiscreteMeasure, target: float, expand: bool = True):
    """Scale points about the mass-weighted centroid so the diameter equals ``target``.

    With ``expand=False`` a measure already within the target is returned as is.
    Returns ``(measure, scale)``.
    """
    if len(m) == 0:
        raise EmptyMeasure("cannot rescale an empty measure")
    if target <= 0:
        raise ValueError("target diameter must be positive")
    diam = support_diameter(m)
    if diam == 0.0 or (not expand and diam <= target):
        return m, 1.0
    scale = target / diam
    centroid = m.masses @ m.points / m.masses.sum()
    pts = centroid + scale * (m.points - centroid)
    return DiscreteMeasure(pts, m.masses.copy(), m.dim), scale


def project_measure(lam: ConeMeasure) -> DiscreteMeasure:
    """Base measure with mass w r^2 at x; apex atoms vanish, shared x merge."""
    base_mass = lam.masses * lam.radii**2
    keep = lam.radii > 0
    measure, _ = merge_atoms(lam.points[keep], base_mass[keep], lam.dim)
    return measure


def unmerged_base(lam: ConeMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom base masses w r^2 without merging, aligned with ``lam`` atoms."""
    return lam.points, lam.masses * lam.radii**2


# ---------------------------------------------------------------- CSV formats

def _header(prefix: str, d: int) -> list[str]:
    return [f"{prefix}{k + 1}" for k in range(d)]


def _read_table(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [row for row in reader if row and any(c.strip() for c in row)]
    try:
        data = np.array([[float(c) for c in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    if data.size == 0:
        data = np.zeros((0, len(header)))
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return header, data


def _write_table(path, header: list[str], data: np.ndarray) -> None:
    """Write a CSV table to a path, or to an open text stream such as stdout."""
    if hasattr(path, "write"):
        _write_rows(path, header, data)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        _write_rows(fh, header, data)


def _write_rows(fh, header, data):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in np.atleast_2d(data).reshape(-1, len(header)):
        writer.writerow([repr(float(v)) for v in row])


def _spatial_columns(header: list[str], prefix: str) -> int:
    d = 0
    while f"{prefix}{d + 1}" in header:
        d += 1
    if d == 0 or header[:d] != _header(prefix, d):
        raise ValueError(f"header must start with {prefix}1..{prefix}d, got {header}")
    return d


def load_measure_csv(path) -> DiscreteMeasure:
    header, data = _read_table(path)
    d = _spatial_columns(header, "x")
    if "mass" not in header:
        raise ValueError(f"{path}: missing 'mass' column")
    masses = data[:, header.index("mass")]
    if np.any(masses <= 0):
        raise ValueError(f"{path}: masses must be positive")
    return DiscreteMeasure(data[:, :d], masses, d)


def save_measure_csv(path, m: DiscreteMeasure) -> None:
    _write_table(path, _header("x", m.dim) + ["mass"],
                 np.column_stack([m.points, m.masses]))


def load_cone_csv(path) -> ConeMeasure:
    header, data = _read_table(path)
    d = _spatial_columns(header, "x")
    if header[d:d + 2] != ["r", "mass"]:
        raise ValueError(f"{path}: expected columns x1..xd,r,mass")
    return ConeMeasure(data[:, :d], data[:, d], data[:, d + 1], d)


def save_cone_csv(path, lam: ConeMeasure) -> None:
    _write_table(path, _header("x", lam.dim) + ["r", "mass"],
                 np.column_stack([lam.points, lam.radii, lam.masses]))
