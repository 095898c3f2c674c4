"""Choosing the framing and the signaling scheme together.

For a fixed receiver belief ``mu`` the best direct scheme solves a small LP
(maximize expected sender utility under the sender prior subject to the
receiver obeying every recommendation at ``mu``); its value is written
``U*(mu)`` below.  The outer problem of choosing ``mu`` inside a convex set
of inducible beliefs is bilinear, so this module offers lattice search
(exhaustive and the quasi-polynomial lattice with its epsilon-obedience
guarantee), two closed-form constructions, a robustification that keeps
recommendations persuasive when the belief is slightly off, and probes of
the continuity of ``U*``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log

import numpy as np
from scipy.optimize import linprog

from . import lp
from .core import (
    TOL,
    EpsilonObedience,
    FramecraftError,
    Instance,
    SignalingScheme,
    ValidationError,
    _eps,
    as_belief,
    best_response_index,
    inducibility_margin,
)
from .simplex import lattice, lattice_size


class EmptyBeliefSet(FramecraftError):
    """No candidate belief satisfies the belief-set constraints."""


# --------------------------------------------------------------------------
# Belief sets and solutions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConvexBeliefSet:
    """Polytope ``{mu in simplex : coeffs @ mu <= bounds}``.

    With no half-spaces this is the whole simplex.  Construction fails if
    the polytope is empty.
    """

    n_states: int
    coeffs: np.ndarray | None = None
    bounds: np.ndarray | None = None

    def __post_init__(self):
        n = int(self.n_states)
        if n < 1:
            raise ValidationError("n_states must be positive")
        if self.coeffs is None or len(self.coeffs) == 0:
            C, b = np.zeros((0, n)), np.zeros(0)
        else:
            C = np.atleast_2d(np.asarray(self.coeffs, dtype=np.float64))
            b = np.asarray(self.bounds, dtype=np.float64).ravel()
            if C.shape[1] != n or C.shape[0] != b.shape[0]:
                raise ValidationError("half-space dimensions do not match")
            res = linprog(np.zeros(n), A_ub=C, b_ub=b + TOL, A_eq=np.ones((1, n)), b_eq=[1.0],
                          bounds=[(0, None)] * n, method="highs")
            if res.status != 0:
                raise EmptyBeliefSet("the half-spaces do not intersect the simplex")
        C.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "n_states", n)
        object.__setattr__(self, "coeffs", C)
        object.__setattr__(self, "bounds", b)

    @classmethod
    def full(cls, n_states: int) -> "ConvexBeliefSet":
        return cls(n_states)

    @classmethod
    def singleton(cls, mu) -> "ConvexBeliefSet":
        """The one-point set ``{mu}``, written as pairs of opposite half-spaces."""
        mu = as_belief(mu)
        eye = np.eye(mu.size)
        return cls(mu.size, np.vstack([eye, -eye]), np.concatenate([mu, -mu]))

    @property
    def is_full(self) -> bool:
        return self.coeffs.shape[0] == 0

    def mask(self, points, tol: float = TOL) -> np.ndarray:
        P = np.atleast_2d(points)
        if self.is_full:
            return np.ones(P.shape[0], dtype=bool)
        return np.all(P @ self.coeffs.T <= self.bounds + tol, axis=1)

    def contains(self, mu, tol: float = TOL) -> bool:
        return bool(self.mask(np.asarray(mu, dtype=np.float64), tol)[0])


@dataclass(frozen=True, eq=False)
class JointSolution:
    """A receiver belief, a direct scheme, and what they are worth.

    ``obedience_slack`` is the smallest obedience left-hand side at
    ``belief``; it is at least ``-epsilon`` for an epsilon-obedient scheme.
    ``evaluated`` counts the beliefs examined to find this one.
    """

    belief: np.ndarray
    scheme: SignalingScheme
    sender_value: float
    obedience_slack: float
    evaluated: int = 1
    resolution: int | None = None

    def raw_value(self, instance: Instance) -> float:
        return float(instance.normalization.sender_to_raw(self.sender_value))


def _u_v(instance: Instance):
    return instance.prior, instance.sender_utility, instance.receiver_utility, instance.allowed


def _solution_from_pi(instance, mu, pi, evaluated=1, resolution=None) -> JointSolution:
    scheme = SignalingScheme(instance.actions, pi)
    value = float(np.sum(instance.prior[:, None] * scheme.probs * instance.sender_utility.T))
    slack = lp.min_obedience_slack(mu, scheme.probs, instance.receiver_utility)
    return JointSolution(mu, scheme, value, slack, evaluated, resolution)


def solve_optimal_scheme(instance: Instance, receiver_belief, eps=0.0) -> JointSolution:
    """Best direct scheme when the receiver's belief is ``receiver_belief``.

    Parameters
    ----------
    eps : float or EpsilonObedience
        Each obedience constraint may be violated by at most this much.
    """
    mu = as_belief(receiver_belief, instance.n_states)
    e = _eps(eps)
    prior, u, v, allowed = _u_v(instance)
    status, _, pi, _ = lp.obedience_lp(mu, prior, u, v, e, allowed)
    if status != lp.OPTIMAL:
        raise FramecraftError(f"obedience LP is {lp.STATUS_TEXT[status]} at belief {mu.tolist()}"
                              " (only possible with forbidden action/state pairs)")
    return _solution_from_pi(instance, mu, pi)


def optimal_values(instance: Instance, beliefs, eps=0.0):
    """``U*`` at each row of ``beliefs``; returns ``(values, slacks)``.

    Beliefs where the LP is infeasible get ``-inf``.
    """
    prior, u, v, allowed = _u_v(instance)
    _, values, slacks = lp.obedience_values(np.asarray(beliefs, dtype=np.float64), prior, u, v,
                                            _eps(eps), allowed)
    return values, slacks


def _best_of(instance: Instance, points: np.ndarray, eps: float, resolution=None) -> JointSolution:
    values, _ = optimal_values(instance, points, eps)
    top = values.max()
    if not np.isfinite(top):
        raise FramecraftError("obedience LP infeasible at every candidate belief")
    k = int(np.flatnonzero(values >= top - TOL)[0])
    sol = solve_optimal_scheme(instance, points[k], eps)
    return JointSolution(sol.belief, sol.scheme, sol.sender_value, sol.obedience_slack,
                         points.shape[0], resolution)


def _lattice_in(B: ConvexBeliefSet, n_states: int, resolution: int) -> np.ndarray:
    if B.n_states != n_states:
        raise ValidationError("belief set and instance disagree on the number of states")
    pts = lattice(n_states, resolution)
    return pts[B.mask(pts)]


def joint_optimize_grid(instance: Instance, B: ConvexBeliefSet | None = None, resolution: int = 100,
                        eps=0.0) -> JointSolution:
    """Best ``U*`` over lattice beliefs with step ``1/resolution`` inside ``B``.

    Ties go to the earliest lattice point.
    """
    if resolution < 1:
        raise ValidationError("resolution must be at least 1")
    B = B or ConvexBeliefSet.full(instance.n_states)
    pts = _lattice_in(B, instance.n_states, resolution)
    if pts.shape[0] == 0:
        raise EmptyBeliefSet(f"no lattice point at resolution {resolution} lies in the belief set;"
                             " refine the lattice or check the half-spaces")
    return _best_of(instance, pts, _eps(eps), resolution)


def qptas_resolution(n_actions: int, eps: float) -> int:
    """Lattice resolution ``ceil(ln|A| / eps^2)``, at least 1."""
    return max(1, ceil(log(n_actions) / eps ** 2))


def qptas(instance: Instance, B: ConvexBeliefSet | None = None, eps: float = 0.1) -> JointSolution:
    """Lattice search with epsilon-obedience.

    Every belief with entries in multiples of ``1/n``, ``n = ceil(ln|A| /
    eps^2)``, that lies in ``B`` is paired with its best eps-obedient
    scheme.  The winner is meant to match or beat the best exactly
    obedient solution over all of ``B``.
    """
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    B = B or ConvexBeliefSet.full(instance.n_states)
    n = qptas_resolution(instance.n_actions, eps)
    pts = _lattice_in(B, instance.n_states, n)
    if pts.shape[0] == 0:
        raise EmptyBeliefSet(f"no {n}-uniform belief lies in the belief set (lattice has "
                             f"{lattice_size(instance.n_states, n)} points); use a smaller eps")
    return _best_of(instance, pts, eps, n)


def _pick(instance: Instance, w: int, scores: np.ndarray, secondary: np.ndarray | None = None) -> int:
    ok = instance.allowed[:, w]
    s = np.where(ok, scores, -np.inf)
    cand = np.flatnonzero(s >= s.max() - TOL)
    if secondary is not None and cand.size > 1:
        sec = secondary[cand]
        cand = cand[sec >= sec.max() - TOL]
    return int(cand[0])


def bi_criteria_unconstrained(instance: Instance, eps: float) -> JointSolution:
    """Closed-form solution that is nearly optimal and nearly obedient.

    Every state except the one contributing least to the sender's
    first-best payoff recommends the sender's favourite action.  That one
    state recommends the receiver's favourite action, and the belief puts
    mass ``1 - eps`` on it.  The value is at least ``(1 - 1/|states|)`` of
    the first-best payoff and every obedience constraint holds up to
    ``eps``.
    """
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    n = instance.n_states
    u, v = instance.sender_utility, instance.receiver_utility
    if n == 1:
        return solve_optimal_scheme(instance, [1.0], 0.0)
    a_u = np.array([_pick(instance, w, u[:, w], v[:, w]) for w in range(n)])
    contrib = instance.prior * u[a_u, np.arange(n)]
    w_min = int(np.argmin(contrib))
    a_v = _pick(instance, w_min, v[:, w_min], u[:, w_min])
    mu = np.full(n, eps / (n - 1))
    mu[w_min] = 1.0 - eps
    pi = np.zeros((n, instance.n_actions))
    pi[np.arange(n), a_u] = 1.0
    pi[w_min] = 0.0
    pi[w_min, a_v] = 1.0
    return _solution_from_pi(instance, mu, pi)


def first_best_value(instance: Instance) -> float:
    """``sum_w prior(w) max_a u(a, w)`` over permitted actions."""
    u = np.where(instance.allowed, instance.sender_utility, -np.inf)
    return float(instance.prior @ u.max(axis=0))


def state_independent_optimal(instance: Instance) -> JointSolution:
    """Exact joint optimum when sender utility does not depend on the state.

    The sender then only cares which action is taken.  The best action that
    some belief makes (weakly) optimal for the receiver is recommended
    unconditionally, and the belief making it optimal is chosen as close
    to the sender prior as possible in l1 distance.

    Optimality relies on every action being a best response at some
    belief (see :func:`~framecraft.core.validate_instance`).  If the
    sender's favourite action never is, the best action that is gets
    recommended instead.
    """
    u, v = instance.sender_utility, instance.receiver_utility
    if np.any(np.ptp(u, axis=1) > TOL):
        raise ValidationError("sender utility depends on the state; use qptas for this instance")
    if instance.has_forbidden:
        raise ValidationError("state-independent construction does not handle forbidden pairs; use qptas")
    n, m = instance.n_states, instance.n_actions
    order = sorted(range(m), key=lambda a: (-u[a, 0], a))
    for a in order:
        others = [b for b in range(m) if b != a]
        # variables: mu (n), t (n) with t >= |mu - prior|
        c = np.concatenate([np.zeros(n), np.ones(n)])
        rows, rhs = [], []
        for b in others:
            rows.append(np.concatenate([-(v[a] - v[b]), np.zeros(n)]))
            rhs.append(0.0)
        eye = np.eye(n)
        rows.extend(np.hstack([eye, -eye]))
        rhs.extend(instance.prior)
        rows.extend(np.hstack([-eye, -eye]))
        rhs.extend(-instance.prior)
        A_eq = np.concatenate([np.ones(n), np.zeros(n)])[None, :]
        res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), A_eq=A_eq, b_eq=[1.0],
                      bounds=[(0, None)] * (2 * n), method="highs")
        if res.status != 0:
            continue
        mu = np.clip(res.x[:n], 0.0, None)
        mu /= mu.sum()
        if best_response_index(mu, instance) != a:
            # LP round-off left a tie unresolved; step toward the inducing belief.
            eta = inducibility_margin(instance)[1][instance.actions[a]]
            for lam in (1e-12, 1e-10, 1e-8, 1e-6):
                cand = (1 - lam) * mu + lam * eta
                if best_response_index(cand, instance) == a:
                    mu = cand
                    break
        pi = np.zeros((n, m))
        pi[:, a] = 1.0
        return _solution_from_pi(instance, mu, pi)
    raise FramecraftError("no action is a receiver best response at any belief")  # pragma: no cover


# --------------------------------------------------------------------------
# Robustification
# --------------------------------------------------------------------------

REVEAL_PREFIX = "reveal:"


@dataclass(frozen=True, eq=False)
class RobustScheme:
    """Output of :func:`robustify_scheme` with the quantities it used."""

    scheme: SignalingScheme
    p0: float
    margin: float
    delta: float
    y: float
    chi: np.ndarray
    eps: float

    @property
    def loss_bound(self) -> float:
        return 2 * self.delta / self.p0 if self.p0 > 0 else float("inf")


def _as_direct_matrix(instance: Instance, scheme: SignalingScheme) -> np.ndarray:
    if not scheme.is_direct_for(instance):
        raise ValidationError("robustification needs a direct scheme (signals must be action labels)")
    pi = np.zeros((instance.n_states, instance.n_actions))
    for k, s in enumerate(scheme.signals):
        pi[:, instance.action_index(s)] = scheme.probs[:, k]
    return pi


def recommendation_value(instance: Instance, scheme: SignalingScheme) -> float:
    """Sender utility collected on action-labelled signals only.

    Signals that are not action labels (for instance the state-revealing
    signals added by :func:`robustify_scheme`) count as zero.
    """
    total = 0.0
    for k, s in enumerate(scheme.signals):
        if s in instance.actions:
            a = instance.action_index(s)
            total += float(np.sum(instance.prior * scheme.probs[:, k] * instance.sender_utility[a]))
    return total


def recommendation_slack(instance: Instance, mu, scheme: SignalingScheme) -> float:
    """Smallest obedience left-hand side over action-labelled signals at ``mu``."""
    mu = np.asarray(mu, dtype=np.float64)
    v = instance.receiver_utility
    worst = np.inf
    for k, s in enumerate(scheme.signals):
        if s not in instance.actions:
            continue
        a = instance.action_index(s)
        w = mu * scheme.probs[:, k]
        for b in range(instance.n_actions):
            if b != a:
                worst = min(worst, float(w @ (v[a] - v[b])))
    return 0.0 if worst == np.inf else worst


def robustify_scheme(instance: Instance, mu, scheme: SignalingScheme, eps: float) -> RobustScheme:
    """Make an obedient direct scheme robust to belief errors up to ``eps``.

    Each posterior is pulled a fraction ``delta = 2 eps / (p0 D)`` toward
    the belief where its action is most strictly preferred (``p0`` is half
    the smallest entry of ``mu``, ``D`` the inducibility margin).  The mass
    the pulled posteriors can no longer cover is routed through extra
    signals that reveal the state.  The result is exactly obedient for
    every receiver belief within l1 distance ``eps`` of ``mu``.

    Raises
    ------
    ValidationError
        If the scheme is not direct or not obedient at ``mu``, if ``D`` is
        not positive, or if ``eps`` is not below ``min(p0, p0**2 D / 2)``.
    """
    mu = as_belief(mu, instance.n_states)
    if eps < 0:
        raise ValidationError("eps must be nonnegative")
    pi = _as_direct_matrix(instance, scheme)
    v = instance.receiver_utility
    p0 = float(mu.min() / 2)
    D, etas = inducibility_margin(instance)
    if lp.min_obedience_slack(mu, pi, v) < -TOL:
        raise ValidationError("scheme is not obedient at the given belief")
    labels = list(instance.actions)
    reveal = []
    for w in instance.states:
        lab = REVEAL_PREFIX + w
        while lab in labels or lab in reveal:
            lab += "'"
        reveal.append(lab)
    n, m = instance.n_states, instance.n_actions

    if eps == 0:
        probs = np.hstack([pi, np.zeros((n, n))])
        return RobustScheme(SignalingScheme(labels + reveal, probs), p0, D, 0.0, 0.0, mu.copy(), 0.0)
    if not p0 > 0:
        raise ValidationError("belief must have full support to robustify")
    if not D > 0:
        raise ValidationError(f"inducibility margin is {D:.3g}; some action is not strictly inducible")
    limit = min(p0, p0 * p0 * D / 2)
    if eps >= limit:
        raise ValidationError(f"eps = {eps} is too large; it must be below min(p0, p0^2 D / 2) = {limit:.6g}"
                              f" (p0 = {p0:.6g}, D = {D:.6g})")
    delta = 2 * eps / (p0 * D)
    eta = np.array([etas[a] for a in instance.actions])

    mass = mu @ pi  # unconditional probability of each recommendation
    xi_a = np.zeros((m, n))
    for a in range(m):
        if mass[a] > 0:
            post = mu * pi[:, a] / mass[a]
            xi_a[a] = (1 - delta) * post + delta * eta[a]
    xi = mass @ xi_a
    pos = xi > 0
    y = float(max(0.0, np.max(1.0 - mu[pos] / xi[pos])))
    if y > 0:
        chi = np.clip((mu - (1 - y) * xi) / y, 0.0, None)
        chi /= chi.sum()
    else:
        chi = mu.copy()
    if y > delta / p0 + 1e-9:  # pragma: no cover - excluded by the eps bound
        raise FramecraftError(f"decomposition weight y = {y} exceeds delta / p0 = {delta / p0}")

    new = np.zeros((n, m + n))
    new[:, :m] = (1 - y) * (xi_a * mass[:, None]).T / mu[:, None]
    new[np.arange(n), m + np.arange(n)] = y * chi / mu
    new = np.clip(new, 0.0, None)
    new /= new.sum(axis=1, keepdims=True)
    return RobustScheme(SignalingScheme(labels + reveal, new), p0, D, delta, y, chi, float(eps))


# --------------------------------------------------------------------------
# Continuity probes and sweeps
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProbeReport:
    """Pairs of nearby beliefs and how much ``U*`` moved between them.

    ``bound`` is the Lipschitz constant ``4 / (p0**2 D)``.
    """

    mus: np.ndarray
    mus_prime: np.ndarray
    values: np.ndarray
    values_prime: np.ndarray
    distances: np.ndarray
    ratios: np.ndarray
    bound: float
    p0: float
    margin: float

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max()) if self.ratios.size else 0.0

    @property
    def violations(self) -> int:
        diff = np.abs(self.values - self.values_prime)
        return int(np.sum(diff > self.bound * self.distances + 1e-9))


def _random_direction(n, rng):
    d = rng.standard_normal(n)
    d -= d.mean()
    s = np.abs(d).sum()
    return d / s if s > 0 else d


def _max_step(mu, d, floor):
    neg = d < 0
    if not neg.any():
        return np.inf
    return float(np.min((mu[neg] - floor) / -d[neg]))


def continuity_probe(instance: Instance, sample_count: int, p0: float, seed: int = 0,
                     around=None, radius: float = 0.1) -> ProbeReport:
    """Sample nearby belief pairs and compare ``U*`` against its Lipschitz bound.

    All sampled beliefs keep every entry at least ``2 p0``.  Without
    ``around`` the first belief of each pair is uniform on that region and
    the second sits at a log-uniform l1 distance in ``[1e-4, radius]``.
    With ``around`` the two beliefs are placed on opposite sides of it along
    a random direction, each within ``radius``.
    """
    if not p0 > 0:
        raise ValidationError("p0 must be positive")
    n = instance.n_states
    floor = 2 * p0
    if floor * n > 1 + TOL:
        raise ValidationError(f"no belief has every entry >= 2 p0 = {floor} on {n} states")
    D, _ = inducibility_margin(instance)
    bound = 4.0 / (p0 * p0 * D) if D > 0 else float("inf")
    rng = np.random.default_rng(seed)
    mus = np.empty((sample_count, n))
    mps = np.empty((sample_count, n))
    if around is not None:
        c = as_belief(around, n)
        if c.min() < floor - TOL:
            raise ValidationError("'around' belief is outside the sampling region")
    for k in range(sample_count):
        d = _random_direction(n, rng)
        if around is None:
            mu = floor + (1 - floor * n) * rng.dirichlet(np.ones(n))
            r = 10 ** rng.uniform(-4, np.log10(radius))
            mp = mu + min(r, _max_step(mu, d, floor)) * d
        else:
            r1, r2 = rng.uniform(0, radius, size=2)
            mu = c + min(r1, _max_step(c, d, floor)) * d
            mp = c - min(r2, _max_step(c, -d, floor)) * d
        mus[k], mps[k] = mu, mp
    vals, _ = optimal_values(instance, mus)
    vals_p, _ = optimal_values(instance, mps)
    dist = np.abs(mus - mps).sum(axis=1)
    diff = np.abs(vals - vals_p)
    ratios = np.divide(diff, dist, out=np.zeros_like(diff), where=dist > 0)
    return ProbeReport(mus, mps, vals, vals_p, dist, ratios, bound, float(p0), D)


@dataclass(frozen=True, eq=False)
class Sweep:
    ts: np.ndarray
    beliefs: np.ndarray
    values: np.ndarray
    slacks: np.ndarray

    def to_rows(self, states) -> list[list]:
        rows = [["t", *[f"belief_{s}" for s in states], "value", "slack"]]
        for t, b, val, sl in zip(self.ts, self.beliefs, self.values, self.slacks):
            rows.append([repr(float(t)), *[repr(float(x)) for x in b], repr(float(val)), repr(float(sl))])
        return rows


def sweep_utility(instance: Instance, segment, steps: int = 101, eps=0.0) -> Sweep:
    """``U*`` along the segment from ``segment[0]`` (t = 0) to ``segment[1]``."""
    if steps < 2:
        raise ValidationError("steps must be at least 2")
    b0 = as_belief(segment[0], instance.n_states)
    b1 = as_belief(segment[1], instance.n_states)
    ts = np.linspace(0.0, 1.0, steps)
    beliefs = (1 - ts)[:, None] * b0 + ts[:, None] * b1
    values, slacks = optimal_values(instance, beliefs, eps)
    return Sweep(ts, beliefs, values, slacks)


@dataclass(frozen=True)
class ShapeWitnesses:
    """Index triples certifying that a sampled curve is neither convex nor concave.

    ``dip`` is ``(i, j, k)`` with ``i < j < k`` and ``f[j] < min(f[i], f[k])``.
    That rules out quasi-concavity and hence concavity.  ``bump`` is
    ``(i, j, k)`` with ``j`` the midpoint of ``i`` and ``k`` and ``f[j]``
    strictly above the chord, which rules out convexity.
    """

    dip: tuple | None
    bump: tuple | None
    dip_depth: float = 0.0
    bump_height: float = 0.0


def shape_witnesses(values, tol: float = 1e-9) -> ShapeWitnesses:
    f = np.asarray(values, dtype=np.float64)
    N = f.size
    dip, depth = None, 0.0
    for j in range(1, N - 1):
        i = int(np.argmax(f[:j]))
        k = j + 1 + int(np.argmax(f[j + 1:]))
        gap = min(f[i], f[k]) - f[j]
        if gap > tol and gap > depth:
            dip, depth = (i, j, k), float(gap)
    bump, height = None, 0.0
    for i in range(N):
        for k in range(i + 2, N, 2):
            j = (i + k) // 2
            h = f[j] - 0.5 * (f[i] + f[k])
            if h > tol and h > height:
                bump, height = (i, j, k), float(h)
    return ShapeWitnesses(dip, bump, depth, height)


__all__ = [
    "ConvexBeliefSet", "EmptyBeliefSet", "EpsilonObedience", "JointSolution", "ProbeReport",
    "RobustScheme", "ShapeWitnesses", "Sweep", "bi_criteria_unconstrained", "continuity_probe",
    "first_best_value", "joint_optimize_grid", "optimal_values", "qptas", "qptas_resolution",
    "recommendation_slack", "recommendation_value", "robustify_scheme", "shape_witnesses",
    "solve_optimal_scheme", "state_independent_optimal", "sweep_utility",
]
