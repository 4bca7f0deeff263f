"""Diagrams (perfect matchings) on tables and Gaussian moments of Hermite products.

Two evaluation modes are offered:

``"hermite"``
    each row ``j`` is one standard Gaussian ``z_j`` raised through ``H_{l_j}``;
    edges inside a row pair a variable with itself and are excluded, and a
    between-row edge contributes ``cov[row_a, row_b]``.
``"nodes"``
    every node is its own Gaussian variable and a row is the plain product of
    its nodes; all matchings count and each edge contributes
    ``cov[node_a, node_b]`` (flat edges carry genuine covariances).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import CapacityError, InvalidArgumentError

MAX_NODES = 16


@dataclass(frozen=True)
class DiagramTable:
    """Rows of sizes ``l_1..l_p``; nodes are numbered row by row from 0."""

    row_sizes: tuple

    def __post_init__(self):
        rs = tuple(int(v) for v in self.row_sizes)
        if not rs or any(v < 1 for v in rs):
            raise InvalidArgumentError("need at least one row, each of size >= 1")
        object.__setattr__(self, "row_sizes", rs)

    @property
    def p(self) -> int:
        return len(self.row_sizes)

    @property
    def n_nodes(self) -> int:
        return sum(self.row_sizes)

    @property
    def row_of(self):
        return tuple(r for r, size in enumerate(self.row_sizes) for _ in range(size))


@dataclass(frozen=True)
class Diagram:
    """A perfect matching given as sorted node pairs."""

    edges: tuple

    def row_edges(self, t: DiagramTable):
        rows = t.row_of
        return [(rows[a], rows[b]) for a, b in self.edges]


def _matchings(nodes):
    if not nodes:
        yield ()
        return
    first, rest = nodes[0], nodes[1:]
    for i, other in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for tail in _matchings(remaining):
            yield ((first, other),) + tail


def _guard(t: DiagramTable):
    if t.n_nodes > MAX_NODES:
        raise CapacityError(f"{t.n_nodes} nodes exceeds the enumeration limit of {MAX_NODES}")


def enumerate_diagrams(t: DiagramTable):
    """All perfect matchings of the table's nodes ((n-1)!! of them)."""
    _guard(t)
    if t.n_nodes % 2:
        return []
    return [Diagram(m) for m in _matchings(tuple(range(t.n_nodes)))]


def _row_components(p, row_edges):
    parent = list(range(p))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in row_edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return len({find(i) for i in range(p)})


def classify(d: Diagram, t: DiagramTable) -> dict:
    """Flags ``has_flat``, ``connected`` and ``paired`` of a diagram.

    ``paired`` means no flat edge and every row sends all of its edges to a
    single partner row, so the rows split into coupled pairs.
    """
    re = d.row_edges(t)
    flat = any(a == b for a, b in re)
    connected = _row_components(t.p, re) == 1
    partner = {}
    paired = not flat
    if paired:
        for a, b in re:
            for x, y in ((a, b), (b, a)):
                if partner.setdefault(x, y) != y:
                    paired = False
    return {"has_flat": flat, "connected": connected, "paired": paired}


def hermite(q: int, u):
    """Probabilists' Hermite polynomial ``H_q(u)`` (``H_2 = u^2 - 1``)."""
    if q < 0 or int(q) != q:
        raise InvalidArgumentError("q must be a non-negative integer")
    u = np.asarray(u, dtype=float)
    h_prev, h = np.ones_like(u), u.copy()
    if q == 0:
        return h_prev if u.ndim else float(h_prev)
    for k in range(1, q):
        h_prev, h = h, u * h - k * h_prev
    return h if u.ndim else float(h)


def _check_cov(cov, size, unit_diag):
    c = np.asarray(cov, dtype=float)
    if c.shape != (size, size):
        raise InvalidArgumentError(f"covariance must be {size}x{size}, got {c.shape}")
    if not np.allclose(c, c.T, atol=1e-12):
        raise InvalidArgumentError("covariance must be symmetric")
    if unit_diag and not np.allclose(np.diag(c), 1.0, atol=1e-12):
        raise InvalidArgumentError("variables must have unit variance")
    if size and np.linalg.eigvalsh(c).min() < -1e-10:
        raise InvalidArgumentError("covariance is not positive semidefinite")
    return c


def _diagram_sum(t: DiagramTable, cov, mode: str, connected_only: bool) -> float:
    if mode not in ("hermite", "nodes"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    _guard(t)
    hermite_mode = mode == "hermite"
    c = _check_cov(cov, t.p if hermite_mode else t.n_nodes, hermite_mode)
    if t.n_nodes % 2:
        return 0.0
    rows = t.row_of
    total = 0.0
    for m in _matchings(tuple(range(t.n_nodes))):
        re = [(rows[a], rows[b]) for a, b in m]
        if hermite_mode and any(a == b for a, b in re):
            continue
        if connected_only and _row_components(t.p, re) != 1:
            continue
        if hermite_mode:
            total += prod(c[a, b] for a, b in re)
        else:
            total += prod(c[a, b] for a, b in m)
    return float(total)


def hermite_product_moment(t: DiagramTable, cov, mode: str = "hermite") -> float:
    """``E[prod_j H_{l_j}(z_j)]`` (``mode="hermite"``) or ``E[prod nodes]`` (``mode="nodes"``)."""
    return _diagram_sum(t, cov, mode, connected_only=False)


def hermite_product_cumulant(t: DiagramTable, cov, mode: str = "hermite") -> float:
    """Joint cumulant of the row variables: the connected part of the diagram sum."""
    return _diagram_sum(t, cov, mode, connected_only=True)


def class_counts(t: DiagramTable) -> dict:
    """Number of diagrams in each classification cell."""
    out = {"total": 0, "flat": 0, "non_flat": 0, "connected": 0, "connected_non_flat": 0,
           "paired": 0}
    for d in enumerate_diagrams(t):
        c = classify(d, t)
        out["total"] += 1
        out["flat" if c["has_flat"] else "non_flat"] += 1
        out["connected"] += c["connected"]
        out["connected_non_flat"] += c["connected"] and not c["has_flat"]
        out["paired"] += c["paired"]
    return out
