"""Utilities on the probability simplex: lattices, projection, sampling."""
from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np


def lattice_size(n_states: int, resolution: int) -> int:
    """Number of beliefs whose entries are multiples of ``1/resolution``."""
    return comb(resolution + n_states - 1, n_states - 1)


def lattice(n_states: int, resolution: int, max_points: int | None = 5_000_000) -> np.ndarray:
    """All beliefs on the uniform lattice of step ``1/resolution``.

    Points are produced by placing ``n_states - 1`` bars among
    ``resolution + n_states - 1`` slots (stars and bars) and reading off
    the gap lengths.  Rows come out in lexicographic order of the bar
    positions, which is the tie-breaking order used by the grid solvers.

    >>> lattice(3, 4).shape
    (15, 3)
    """
    if n_states < 1 or resolution < 1:
        raise ValueError("need n_states >= 1 and resolution >= 1")
    size = lattice_size(n_states, resolution)
    if max_points is not None and size > max_points:
        raise ValueError(f"lattice has {size} points, above the limit of {max_points}")
    if n_states == 1:
        return np.ones((1, 1))
    slots = resolution + n_states - 1
    bars = np.fromiter(
        (i for combo in combinations(range(slots), n_states - 1) for i in combo),
        dtype=np.int64, count=size * (n_states - 1),
    ).reshape(size, n_states - 1)
    edges = np.hstack([np.full((size, 1), -1), bars, np.full((size, 1), slots)])
    counts = np.diff(edges, axis=1) - 1
    return counts / resolution


def project_to_simplex(y) -> np.ndarray:
    """Euclidean projection of ``y`` onto the probability simplex.

    Sort-and-threshold method: find the largest ``k`` with
    ``y_(k) - (sum_{j<=k} y_(j) - 1) / k > 0`` and shift by that threshold.
    """
    y = np.asarray(y, dtype=np.float64)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, y.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    theta = css[rho] / (rho + 1)
    x = np.maximum(y - theta, 0.0)
    return x / x.sum()


def sample_l1_ball(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the ``n``-dimensional l1 ball of given radius.

    Normalized exponentials give a uniform point on the positive face of
    the unit sphere; random signs spread it over all orthants and the
    radial factor ``U**(1/n)`` fills the interior.
    """
    e = rng.exponential(size=n)
    direction = e / e.sum() * rng.choice([-1.0, 1.0], size=n)
    return radius * rng.random() ** (1.0 / n) * direction


def sample_simplex(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the probability simplex."""
    return rng.dirichlet(np.ones(n), size=size)
