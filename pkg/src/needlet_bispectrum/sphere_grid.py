"""Points on the sphere, Gauss-Legendre cubature grids and level associations.

A level-``j`` grid integrates every spherical polynomial of degree
``lmax = floor(3 B^(j+1))`` exactly.  Points are stored ring by ring
(colatitude ascending) and, inside a ring, by longitude.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .errors import CapacityError, InvalidArgumentError

MAX_GRID_LMAX = 1536
"""Largest exactness degree accepted by :func:`build_grid` (about 1.2M points)."""

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class SphericalPoint:
    """A point given by colatitude ``theta`` and longitude ``phi`` (radians)."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi):
            raise InvalidArgumentError(f"theta={self.theta} outside [0, pi]")
        if not (0.0 <= self.phi < 2 * math.pi):
            raise InvalidArgumentError(f"phi={self.phi} outside [0, 2pi)")

    @classmethod
    def wrap(cls, theta, phi):
        """Build a point, reducing ``phi`` modulo 2 pi."""
        phi = float(phi) % (2 * math.pi)
        if phi >= 2 * math.pi:
            phi = 0.0
        return cls(float(theta), phi)

    def unit_vector(self):
        return to_unit_vectors(self.theta, self.phi)


def to_unit_vectors(theta, phi):
    """Cartesian unit vectors, shape ``(..., 3)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def angle_between(u, v):
    """Angle between unit vectors along the last axis.

    Uses ``atan2(|u x v|, u . v)``, accurate near 0 and near pi where
    ``arccos`` loses half the digits.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.arctan2(cross, dot)


def geodesic_distance(p: SphericalPoint, q: SphericalPoint) -> float:
    """Great-circle distance between two points, in ``[0, pi]``."""
    return float(angle_between(p.unit_vector(), q.unit_vector()))


@dataclass(frozen=True, eq=False)
class CubatureGrid:
    """Cubature points ``xi_jk`` and weights ``lambda_jk`` at one level.

    Attributes
    ----------
    B, j, lmax : band ratio, level and exactness degree.
    theta, phi, weights : flat arrays of length ``N``.
    n_theta, n_phi : ring layout (``N = n_theta * n_phi``).
    """

    B: float
    j: int
    lmax: int
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    n_theta: int = 0
    n_phi: int = 0

    @property
    def N(self) -> int:
        return int(self.weights.shape[0])

    @property
    def points(self):
        return [SphericalPoint(float(t), float(p)) for t, p in zip(self.theta, self.phi)]

    def point(self, k: int) -> SphericalPoint:
        if not 0 <= k < self.N:
            raise InvalidArgumentError(f"index {k} outside grid of size {self.N}")
        return SphericalPoint(float(self.theta[k]), float(self.phi[k]))

    def unit_vectors(self):
        return to_unit_vectors(self.theta, self.phi)

    def descriptor(self) -> dict:
        return {"B": self.B, "j": self.j, "lmax": self.lmax,
                "n_theta": self.n_theta, "n_phi": self.n_phi}

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)

    @staticmethod
    def from_descriptor(desc) -> "CubatureGrid":
        if isinstance(desc, str):
            desc = json.loads(desc)
        g = build_grid(desc["B"], desc["j"])
        for key in ("lmax", "n_theta", "n_phi"):
            if key in desc and desc[key] != getattr(g, key):
                raise InvalidArgumentError(
                    f"descriptor {key}={desc[key]} disagrees with rebuilt grid ({getattr(g, key)})")
        return g

    # the ring layout lets transforms work per ring
    def ring_cos(self):
        return np.cos(self.theta[:: self.n_phi])

    def ring_weights(self):
        """Gauss-Legendre weights per ring (sum to 2)."""
        return self.weights[:: self.n_phi] * self.n_phi / (2 * np.pi)


def grid_lmax(B: float, j: int) -> int:
    # small epsilon guards cases such as 3 * 2**3 that are integers in exact arithmetic
    return int(math.floor(3.0 * B ** (j + 1) + 1e-9))


def gl_grid(lmax: int, B: float = float("nan"), j: int = -1) -> CubatureGrid:
    """Gauss-Legendre x equiangular grid exact up to degree ``lmax``."""
    if lmax < 0:
        raise InvalidArgumentError("lmax must be >= 0")
    if lmax > MAX_GRID_LMAX:
        raise CapacityError(f"lmax={lmax} exceeds supported maximum {MAX_GRID_LMAX}")
    n_theta = (lmax + 2) // 2  # ceil((lmax + 1) / 2)
    n_phi = lmax + 1
    x, w = np.polynomial.legendre.leggauss(n_theta)
    order = np.argsort(-x)  # north to south
    x, w = x[order], w[order]
    ring_theta = np.arccos(x)
    ring_phi = 2 * np.pi * np.arange(n_phi) / n_phi
    theta = np.repeat(ring_theta, n_phi)
    phi = np.tile(ring_phi, n_theta)
    weights = np.repeat(w * (2 * np.pi / n_phi), n_phi)
    for arr in (theta, phi, weights):
        arr.setflags(write=False)
    return CubatureGrid(B=B, j=j, lmax=lmax, theta=theta, phi=phi, weights=weights,
                        n_theta=n_theta, n_phi=n_phi)


@lru_cache(maxsize=64)
def _cached_grid(B: float, j: int) -> CubatureGrid:
    return gl_grid(grid_lmax(B, j), B=B, j=j)


def build_grid(B: float, j: int) -> CubatureGrid:
    """Level-``j`` cubature grid exact on polynomials of degree ``floor(3 B^(j+1))``.

    Grids are immutable and cached per ``(B, j)``.  The supported degree is
    capped at :data:`MAX_GRID_LMAX`.
    """
    if not (np.isfinite(B) and B > 1):
        raise InvalidArgumentError(f"B must be > 1, got {B}")
    if int(j) != j or j < 0:
        raise InvalidArgumentError(f"level j must be a non-negative integer, got {j}")
    if 3.0 * float(B) ** (int(j) + 1) > MAX_GRID_LMAX + 1:
        raise CapacityError(f"grid for B={B}, j={j} exceeds lmax limit {MAX_GRID_LMAX}")
    return _cached_grid(float(B), int(j))


@dataclass(frozen=True, eq=False)
class AssociationMap:
    """Nearest-point parent of every fine cubature point at a coarser level."""

    j_fine: int
    j_coarse: int
    parent: np.ndarray = field(repr=False)
    child_count: np.ndarray = field(repr=False)


def _nearest_parent(fine_vec, coarse_vec):
    tree = cKDTree(coarse_vec)
    kq = min(4, coarse_vec.shape[0])
    dist, idx = tree.query(fine_vec, k=kq)
    if kq == 1:
        return np.asarray(idx, dtype=np.int64)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    # among candidates within the tie tolerance of the best, keep the smallest index
    near = dist <= dist[:, :1] + _TIE_TOL
    cand = np.where(near, idx, np.iinfo(np.int64).max)
    return cand.min(axis=1).astype(np.int64)


@lru_cache(maxsize=64)
def _cached_association(B: float, j_fine: int, j_coarse: int) -> AssociationMap:
    fine = build_grid(B, j_fine)
    coarse = build_grid(B, j_coarse)
    parent = _nearest_parent(fine.unit_vectors(), coarse.unit_vectors())
    counts = np.bincount(parent, minlength=coarse.N)
    parent.setflags(write=False)
    counts.setflags(write=False)
    return AssociationMap(j_fine, j_coarse, parent, counts)


def associate_levels(fine: CubatureGrid, coarse: CubatureGrid) -> AssociationMap:
    """Assign each fine point to the nearest coarse point (ties: smallest index)."""
    if fine.j <= coarse.j:
        raise InvalidArgumentError(
            f"fine level {fine.j} must exceed coarse level {coarse.j}")
    if fine.B != coarse.B:
        raise InvalidArgumentError("grids use different B")
    if fine is build_grid(fine.B, fine.j) and coarse is build_grid(coarse.B, coarse.j):
        return _cached_association(float(fine.B), fine.j, coarse.j)
    parent = _nearest_parent(fine.unit_vectors(), coarse.unit_vectors())
    return AssociationMap(fine.j, coarse.j, parent, np.bincount(parent, minlength=coarse.N))


def grid_diagnostics(grid: CubatureGrid, test_lmax: int | None = None) -> dict:
    """Covering radius, separation and ``kappa = mesh_norm * B^j``.

    The covering radius is estimated on a denser Gauss-Legendre test set
    (degree ``2 * lmax + 1`` by default) together with both poles.
    """
    if grid.N == 0:
        raise InvalidArgumentError("empty grid")
    vec = grid.unit_vectors()
    tree = cKDTree(vec)
    if test_lmax is None:
        test_lmax = min(2 * max(grid.lmax, 8) + 1, MAX_GRID_LMAX)
    probe = gl_grid(test_lmax).unit_vectors()
    probe = np.vstack([probe, [[0, 0, 1.0], [0, 0, -1.0]]])
    chord, _ = tree.query(probe)
    mesh = float(np.max(2 * np.arcsin(np.clip(chord / 2, 0, 1))))
    if grid.N == 1:
        sep = math.pi
    else:
        chord2, _ = tree.query(vec, k=2)
        sep = float(np.min(2 * np.arcsin(np.clip(chord2[:, 1] / 2, 0, 1))))
    kappa = mesh * grid.B ** grid.j if np.isfinite(grid.B) else float("nan")
    return {"mesh_norm": mesh, "separation": sep, "kappa_estimate": kappa}


def decay_sum(grid: CubatureGrid, k: int, M: float = 3.0) -> float:
    """``sum_k' (1 + B^j d(xi_k, xi_k'))^-M`` for a fixed point ``k``."""
    vec = grid.unit_vectors()
    d = angle_between(vec, vec[k])
    return float(np.sum((1 + grid.B ** grid.j * d) ** (-M)))


def double_decay_sum(grid: CubatureGrid, k1: int, k2: int, M: float = 3.0) -> float:
    """``sum_k (1 + B^j d(k, k1))^-M (1 + B^j d(k, k2))^-M``."""
    vec = grid.unit_vectors()
    s = grid.B ** grid.j
    d1 = angle_between(vec, vec[k1])
    d2 = angle_between(vec, vec[k2])
    return float(np.sum((1 + s * d1) ** (-M) * (1 + s * d2) ** (-M)))
