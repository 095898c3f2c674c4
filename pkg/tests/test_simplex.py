from itertools import product
from math import comb

import numpy as np
import pytest

from framecraft.simplex import lattice, lattice_size, project_to_simplex, sample_l1_ball, sample_simplex


@pytest.mark.parametrize("n,r", [(1, 5), (2, 1), (2, 7), (3, 4), (4, 6), (5, 3)])
def test_lattice_matches_brute_force(n, r):
    pts = lattice(n, r)
    ref = sorted(tuple(c) for c in product(range(r + 1), repeat=n) if sum(c) == r)
    assert pts.shape == (lattice_size(n, r), n) == (len(ref), n)
    assert sorted(tuple(int(round(x * r)) for x in row) for row in pts) == ref
    assert np.allclose(pts.sum(axis=1), 1.0)


def test_lattice_order_and_size():
    assert lattice_size(4, 60) == comb(63, 3) == 39711
    pts = lattice(3, 4)
    assert pts.shape == (15, 3)
    # first point puts all mass on the last state, last point on the first
    assert pts[0].tolist() == [0.0, 0.0, 1.0]
    assert pts[-1].tolist() == [1.0, 0.0, 0.0]


def test_lattice_guards():
    with pytest.raises(ValueError):
        lattice(0, 3)
    with pytest.raises(ValueError, match="limit"):
        lattice(6, 100, max_points=1000)


def test_projection_satisfies_optimality_conditions():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(1, 8))
        y = rng.normal(scale=2, size=n)
        x = project_to_simplex(y)
        assert x.min() >= 0 and x.sum() == pytest.approx(1.0)
        # KKT: y - x equals a common threshold on the support and is below it elsewhere
        tau = (y - x)[x > 0]
        assert np.ptp(tau) < 1e-9
        assert np.all((y - x)[x == 0] <= tau[0] + 1e-9)


def test_projection_fixes_simplex_points():
    b = np.array([0.2, 0.3, 0.5])
    assert np.allclose(project_to_simplex(b), b)


def test_l1_ball_samples_stay_inside_and_fill_it():
    rng = np.random.default_rng(1)
    s = np.array([sample_l1_ball(3, 0.5, rng) for _ in range(20000)])
    norms = np.abs(s).sum(axis=1)
    assert norms.max() <= 0.5 + 1e-12
    # uniform in a 3-d ball: P(|x|_1 <= r/2) = 1/8
    assert np.mean(norms <= 0.25) == pytest.approx(1 / 8, abs=0.01)
    # all orthants are visited
    assert len({tuple(np.sign(r)) for r in s}) == 8


def test_sample_simplex():
    rng = np.random.default_rng(2)
    s = sample_simplex(4, rng, size=10)
    assert s.shape == (10, 4) and np.allclose(s.sum(axis=1), 1)
