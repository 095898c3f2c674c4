import numpy as np
import pytest

from framecraft.bsg import (
    BSGInstance,
    check_hard_family,
    drop_null_signals,
    reduce_bsg_to_framing,
    reduce_framing_to_bsg,
    solve_bsg_exact,
    solve_bsg_grid,
    solve_framing_exact_small,
)
from framecraft.core import Instance, SignalingScheme, ValidationError
from framecraft.framing_only import fixed_scheme_utility
from framecraft.presets import get_preset
from helpers import random_instance, random_scheme


def random_bsg(rng, n_l=2, n_f=2, n_t=2):
    return BSGInstance([f"l{i}" for i in range(n_l)], [f"f{i}" for i in range(n_f)], [f"t{i}" for i in range(n_t)],
                       rng.dirichlet(np.ones(n_t)), rng.uniform(size=(n_t, n_l, n_f)),
                       rng.uniform(size=(n_t, n_l, n_f)))


def hard_bsg(rng, n_l=2, n_t=2):
    """Follower action 0 pays 1; action 1 pays between 0 and n_l; leader payoff is 0/1 by type."""
    fu = np.empty((n_t, n_l, 2))
    fu[:, :, 0] = 1.0
    fu[:, :, 1] = rng.uniform(0, n_l, size=(n_t, n_l))
    lead = rng.integers(0, 2, size=(n_t, 1, 2)).astype(float)
    lead[0, 0] = [0.0, 1.0]  # keep the game non-trivial
    lu = np.repeat(lead, n_l, axis=1)
    return BSGInstance([f"l{i}" for i in range(n_l)], ["stay", "go"], [f"t{i}" for i in range(n_t)],
                       rng.dirichlet(np.ones(n_t)), lu, fu)


class TestSolvers:
    def test_exact_matches_grid(self):
        rng = np.random.default_rng(31)
        for _ in range(15):
            g = random_bsg(rng, 2, int(rng.integers(2, 4)), int(rng.integers(1, 4)))
            x, val = solve_bsg_exact(g)
            _, gval = solve_bsg_grid(g, 2000)
            assert val >= gval - 1e-9
            assert val == pytest.approx(gval, abs=2e-3)
            assert g.leader_value(x) == pytest.approx(val, abs=1e-7)

    def test_commitment_textbook_game(self):
        # One follower type. Leader row payoffs (2,4) / (1,3); follower prefers
        # column 0 iff the leader plays row 0 with probability above 1/2.
        lu = np.array([[[2.0, 4.0], [1.0, 3.0]]])
        fu = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        g = BSGInstance(["u", "d"], ["l", "r"], ["t"], [1.0], lu, fu)
        x, val = solve_bsg_exact(g)
        assert x == pytest.approx([0.5, 0.5])
        assert val == pytest.approx(3.5)

    def test_floor(self):
        g = BSGInstance(["u", "d"], ["l"], ["t"], [1.0], [[[1.0], [0.0]]], [[[0.0], [0.0]]])
        x, val = solve_bsg_exact(g, floor=0.1)
        assert x == pytest.approx([0.9, 0.1]) and val == pytest.approx(0.9)
        with pytest.raises(ValidationError):
            solve_bsg_exact(g, floor=0.6)

    def test_shapes_checked(self):
        with pytest.raises(ValidationError):
            BSGInstance(["u"], ["l"], ["t"], [1.0], np.zeros((1, 2, 1)), np.zeros((1, 1, 1)))

    def test_framing_brute_force_limits(self):
        inst = Instance([f"w{i}" for i in range(7)], ["a", "b"], np.full(7, 1 / 7), np.zeros((2, 7)),
                        np.eye(2, 7))
        with pytest.raises(ValidationError, match="limited"):
            solve_framing_exact_small(inst, SignalingScheme.uninformative(7))
        p = get_preset("henry")
        with pytest.raises(ValidationError, match="max_points"):
            solve_framing_exact_small(p.instance, SignalingScheme.uninformative(4), resolution=400)


class TestFramingToGame:
    def test_random_round_trip(self):
        rng = np.random.default_rng(32)
        for _ in range(10):
            n_w = int(rng.integers(2, 4))
            inst = random_instance(rng, n_w, int(rng.integers(2, 4)))
            sch = random_scheme(rng, n_w, 2)
            _, fval = solve_framing_exact_small(inst, sch, 2000 if n_w == 2 else 300)
            _, gval = solve_bsg_exact(reduce_framing_to_bsg(inst, sch))
            assert fval == pytest.approx(gval, abs=1e-6)

    def test_leader_value_equals_framing_value(self):
        rng = np.random.default_rng(33)
        inst = random_instance(rng, 3, 3)
        sch = random_scheme(rng, 3, 3)
        g = reduce_framing_to_bsg(inst, sch)
        for _ in range(20):
            mu = rng.dirichlet(np.ones(3))
            assert g.leader_value(mu) == pytest.approx(fixed_scheme_utility(inst, sch, mu), abs=1e-12)

    def test_prosecutor_types_and_interior_agreement(self):
        p = get_preset("prosecutor")
        g = reduce_framing_to_bsg(p.instance, p.scheme)
        assert g.types == ("acquit", "convict") and g.type_dist == pytest.approx([0.335, 0.665])
        _, fval = solve_framing_exact_small(p.instance, p.scheme, 3000)
        _, gval = solve_bsg_exact(g, floor=1e-6)
        assert fval == pytest.approx(0.665) and gval == pytest.approx(0.665, abs=1e-5)
        # At the point mass on "guilty" the acquit type is indifferent and the
        # game hands the tie to the leader, unlike the framing model.
        _, boundary = solve_bsg_exact(g)
        assert boundary == pytest.approx(1.0)

    def test_null_signals(self):
        inst = Instance(("w1", "w2"), ("a", "b"), [1.0, 0.0], [[0, 1], [1, 0]], [[1, 0], [0, 1]])
        sch = SignalingScheme(["x", "y"], [[1.0, 0.0], [0.5, 0.5]])
        with pytest.raises(ValidationError, match="zero probability"):
            reduce_framing_to_bsg(inst, sch)
        with pytest.raises(ValidationError, match="outside"):
            drop_null_signals(inst, sch)
        sch2 = SignalingScheme(["x", "y"], [[1.0, 0.0], [1.0, 0.0]])
        assert drop_null_signals(inst, sch2).signals == ("x",)


class TestGameToFraming:
    def test_round_trip_on_hard_family(self):
        rng = np.random.default_rng(34)
        for n_l, n_t in [(2, 1), (2, 2), (3, 2)]:
            g = hard_bsg(rng, n_l, n_t)
            red = reduce_bsg_to_framing(g, 0.1)
            inst, sch = red
            assert inst.n_states == n_l + n_t + 1
            _, gval = solve_bsg_exact(g)
            res = {4: 120, 5: 50, 6: 26}[inst.n_states]
            _, fval = solve_framing_exact_small(inst, sch, res)
            assert red.game_value(fval) == pytest.approx(gval, abs=1e-6)

    def test_thin_optimal_region_found_off_lattice(self):
        # The leader's best commitment here needs a belief with about 1e-4
        # mass on the dummy state, far below any affordable lattice step.
        g = BSGInstance(["l0", "l1", "l2"], ["stay", "go"], ["t0", "t1"], [0.97283264, 0.02716736],
                        np.repeat(np.array([[[0.0, 1.0]], [[1.0, 0.0]]]), 3, axis=1),
                        np.stack([np.column_stack([np.ones(3), [1.05014559, 2.53630026, 1.65995957]]),
                                  np.column_stack([np.ones(3), [0.03566125, 2.85592627, 0.98412785]])]))
        _, gval = solve_bsg_exact(g)
        assert gval == pytest.approx(1.0)
        red = reduce_bsg_to_framing(g, 0.1)
        mu, fval = solve_framing_exact_small(red.instance, red.scheme, 4)
        assert red.game_value(fval) == pytest.approx(1.0, abs=1e-9)
        assert fixed_scheme_utility(red.instance, red.scheme, mu) == fval

    def test_constants(self):
        rng = np.random.default_rng(35)
        g = hard_bsg(rng, 2, 2)
        red = reduce_bsg_to_framing(g, 0.2)
        P_min = g.type_dist.min()
        assert red.L == pytest.approx(2 / 0.2 + 1)
        assert red.N == red.K == pytest.approx(1 / (0.8 * P_min) + 1)
        assert red.M == pytest.approx(g.follower_utility.max() * (1 + red.K))
        assert red.instance.prior[-1] == pytest.approx(0.8)
        assert red.instance.actions[-2:] == ("deter_1", "deter_2")

    def test_family_check(self):
        rng = np.random.default_rng(36)
        with pytest.raises(ValidationError, match="exactly two"):
            check_hard_family(random_bsg(rng, 2, 3, 2))
        with pytest.raises(ValidationError, match="first action"):
            check_hard_family(random_bsg(rng, 2, 2, 2))
        with pytest.raises(ValidationError):
            reduce_bsg_to_framing(hard_bsg(rng), 1.0)
