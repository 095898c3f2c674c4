"""Bayesian Stackelberg games and their correspondence with framing.

A fixed-scheme framing problem is a Bayesian Stackelberg game in disguise:
the sender's choice of receiver belief plays the leader's mixed strategy
over states, and each signal is a follower type.  Conversely a family of
binary-action games embeds into framing problems.  Both constructions are
here, together with brute-force solvers for checking that the values
agree on small cases.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import linprog

from .core import TOL, FramecraftError, Instance, SignalingScheme, ValidationError, as_belief
from .framing_only import fixed_scheme_utility_batch
from .simplex import lattice, lattice_size

MAX_PROFILES = 1_000_000


@dataclass(frozen=True, eq=False)
class BSGInstance:
    """Leader commits to a mix over ``leader_actions``; each follower type best-responds.

    Utility tensors are indexed ``[type, leader_action, follower_action]``.
    """

    leader_actions: tuple
    follower_actions: tuple
    types: tuple
    type_dist: np.ndarray
    leader_utility: np.ndarray
    follower_utility: np.ndarray

    def __post_init__(self):
        la = tuple(str(x) for x in self.leader_actions)
        fa = tuple(str(x) for x in self.follower_actions)
        ty = tuple(str(x) for x in self.types)
        if not la or not fa or not ty:
            raise ValidationError("BSG needs leader actions, follower actions and types")
        shape = (len(ty), len(la), len(fa))
        P = as_belief(self.type_dist, len(ty))
        lu = np.array(self.leader_utility, dtype=np.float64)
        fu = np.array(self.follower_utility, dtype=np.float64)
        for name, t in (("leader", lu), ("follower", fu)):
            if t.shape != shape:
                raise ValidationError(f"{name} utility has shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)):
                raise ValidationError(f"{name} utility has non-finite entries")
        for arr in (P, lu, fu):
            arr.setflags(write=False)
        object.__setattr__(self, "leader_actions", la)
        object.__setattr__(self, "follower_actions", fa)
        object.__setattr__(self, "types", ty)
        object.__setattr__(self, "type_dist", P)
        object.__setattr__(self, "leader_utility", lu)
        object.__setattr__(self, "follower_utility", fu)

    def leader_value(self, x) -> float:
        """Leader payoff of mixed strategy ``x`` with leader-favoured follower ties."""
        return float(_grid_values(self, np.atleast_2d(as_belief(x, len(self.leader_actions))))[0])


# --------------------------------------------------------------------------
# Solvers
# --------------------------------------------------------------------------

def solve_bsg_exact(bsg: BSGInstance, floor: float = 0.0):
    """Optimal leader commitment by one LP per follower response profile.

    For each assignment of a follower action to every type, maximize the
    leader's payoff over mixed strategies under which each type weakly
    prefers its assigned action.  Weak preference means ties resolve in the
    leader's favour.

    ``floor`` puts a lower bound on every leader probability.  Games coming
    from a framing problem need it when some signal is never sent in some
    state: at the simplex boundary such a type is indifferent between all
    actions, which the game resolves for the leader while the framing
    model applies its zero-probability convention instead.

    Returns
    -------
    x : ndarray
        Leader mixed strategy.
    value : float
    """
    n_t, n_l, n_f = bsg.leader_utility.shape
    n_prof = n_f ** n_t
    if n_prof > MAX_PROFILES:
        raise ValidationError(f"{n_prof} response profiles exceed the limit of {MAX_PROFILES}")
    P, lu, fu = bsg.type_dist, bsg.leader_utility, bsg.follower_utility
    if not 0 <= floor * n_l <= 1:
        raise ValidationError("floor is too large for the number of leader actions")
    best_x, best_val = None, -np.inf
    for prof in product(range(n_f), repeat=n_t):
        c = -sum(P[t] * lu[t, :, prof[t]] for t in range(n_t))
        rows = [fu[t, :, b] - fu[t, :, prof[t]] for t in range(n_t) for b in range(n_f) if b != prof[t]]
        res = linprog(c, A_ub=np.array(rows) if rows else None, b_ub=np.zeros(len(rows)) if rows else None,
                      A_eq=np.ones((1, n_l)), b_eq=[1.0], bounds=[(floor, None)] * n_l, method="highs")
        if res.status != 0:
            continue
        val = -res.fun
        if val > best_val + 1e-12:
            x = np.clip(res.x, 0, None)
            best_x, best_val = x / x.sum(), float(val)
    if best_x is None:  # pragma: no cover - some profile is always feasible
        raise FramecraftError("no follower response profile is feasible")
    return best_x, best_val


def _grid_values(bsg: BSGInstance, X: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[0])
    for t in range(len(bsg.types)):
        f = X @ bsg.follower_utility[t]
        lead = X @ bsg.leader_utility[t]
        lead = np.where(f >= f.max(axis=1, keepdims=True) - TOL, lead, -np.inf)
        out += bsg.type_dist[t] * lead.max(axis=1)
    return out


def solve_bsg_grid(bsg: BSGInstance, resolution: int = 200):
    """Best lattice leader strategy, as a cross-check for :func:`solve_bsg_exact`."""
    X = lattice(len(bsg.leader_actions), resolution)
    vals = _grid_values(bsg, X)
    k = int(np.flatnonzero(vals >= vals.max() - TOL)[0])
    return X[k], float(vals[k])


MAX_SMALL_STATES = 6


def _profile_beliefs(instance: Instance, scheme: SignalingScheme):
    """One candidate belief per action profile (an action for every signal).

    Each candidate maximizes the smallest margin by which the profile's
    actions beat their alternatives.  A positive margin means every signal
    is sent and answered by its assigned action with a strict preference.
    Profiles that cannot be made even weakly optimal are skipped.
    """
    n, n_s, n_a = instance.n_states, len(scheme.signals), instance.n_actions
    v, pi = instance.receiver_utility, scheme.probs
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_eq = np.ones((1, n + 1))
    A_eq[0, -1] = 0.0
    bounds = [(0, None)] * n + [(0, 1)]
    for prof in product(range(n_a), repeat=n_s):
        rows = []
        for s, a in enumerate(prof):
            for b in range(n_a):
                if b != a:
                    rows.append(np.append(-pi[:, s] * (v[a] - v[b]), 1.0))
        res = linprog(c, A_ub=np.array(rows) if rows else None, b_ub=np.zeros(len(rows)) if rows else None,
                      A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
        if res.status == 0:
            mu = np.clip(res.x[:n], 0, None)
            yield mu / mu.sum()


def solve_framing_exact_small(instance: Instance, scheme: SignalingScheme, resolution: int = 100,
                              max_points: int = 2_000_000):
    """Maximize the fixed-scheme utility over receiver beliefs by exhaustion.

    The utility is piecewise constant: it only changes when some signal's
    best response changes.  So one candidate belief per action profile
    (found by an LP that pushes the profile's margins up) covers every
    region, however thin, and the lattice with step ``1/resolution`` adds
    boundary points where ties and unsent signals matter.  Every candidate
    is scored with the actual utility function, so tie-breaking and the
    zero-probability fallback are honoured.  Lattice points come first and
    win ties.  Only meant for a handful of states.

    Returns
    -------
    belief : ndarray
    value : float
    """
    if instance.n_states > MAX_SMALL_STATES:
        raise ValidationError(f"brute force is limited to {MAX_SMALL_STATES} states")
    n_prof = instance.n_actions ** len(scheme.signals)
    if n_prof > MAX_PROFILES:
        raise ValidationError(f"{n_prof} action profiles exceed the limit of {MAX_PROFILES}")
    size = lattice_size(instance.n_states, resolution)
    if size > max_points:
        raise ValidationError(f"lattice of {size} points exceeds max_points={max_points}; lower the resolution")
    pts = lattice(instance.n_states, resolution, None)
    extra = list(_profile_beliefs(instance, scheme))
    if extra:
        pts = np.vstack([pts, np.array(extra)])
    vals = np.empty(pts.shape[0])
    step = 200_000
    for s in range(0, pts.shape[0], step):
        vals[s:s + step] = fixed_scheme_utility_batch(instance, scheme, pts[s:s + step])
    k = int(np.flatnonzero(vals >= vals.max() - TOL)[0])
    return pts[k], float(vals[k])


# --------------------------------------------------------------------------
# Reductions
# --------------------------------------------------------------------------

def signal_probabilities(instance: Instance, scheme: SignalingScheme) -> np.ndarray:
    return instance.prior @ scheme.probs


def drop_null_signals(instance: Instance, scheme: SignalingScheme) -> SignalingScheme:
    """Remove signals the prior never produces.

    Only possible when those signals are also never sent in states outside
    the prior's support; otherwise the rows would stop summing to one.
    """
    keep = signal_probabilities(instance, scheme) > 0
    if keep.all():
        return scheme
    dropped = scheme.probs[:, ~keep]
    if dropped.sum() > 0:
        raise ValidationError("zero-probability signals are used in states outside the prior's support")
    return SignalingScheme([s for s, k in zip(scheme.signals, keep) if k], scheme.probs[:, keep])


def reduce_framing_to_bsg(instance: Instance, scheme: SignalingScheme) -> BSGInstance:
    """Game whose leader picks the receiver belief and whose types are signals.

    The leader's payoff for follower action ``a`` against type ``s`` is the
    sender's expected utility from ``a`` given ``s`` under the sender's
    prior; it does not depend on the leader's own action.  Type ``s``
    follower payoff at leader action ``w`` is ``pi(s|w) v(a, w)``.
    """
    if scheme.n_states != instance.n_states:
        raise ValidationError("scheme and instance disagree on the number of states")
    Ps = signal_probabilities(instance, scheme)
    if np.any(Ps <= 0):
        bad = [s for s, p in zip(scheme.signals, Ps) if p <= 0]
        raise ValidationError(f"signals {bad} have zero probability under the prior; drop them first")
    n_s, n_w, n_a = len(scheme.signals), instance.n_states, instance.n_actions
    u, v = instance.sender_utility, instance.receiver_utility
    lead = np.empty((n_s, n_w, n_a))
    foll = np.empty((n_s, n_w, n_a))
    for k in range(n_s):
        col = scheme.probs[:, k]
        lead[k] = (u @ (instance.prior * col) / Ps[k])[None, :]
        foll[k] = (col[:, None] * v.T)
    return BSGInstance(instance.states, instance.actions, scheme.signals, Ps, lead, foll)


@dataclass(frozen=True, eq=False)
class HardFamilyReduction:
    """Framing instance built from a binary-follower game.

    ``instance`` carries sender utilities multiplied by ``1 / (1 - eps)``
    before normalization, so the de-normalized framing optimum coincides
    with the game's optimal leader value.  Use :meth:`game_value` for that
    conversion.
    """

    instance: Instance
    scheme: SignalingScheme
    eps: float
    L: float
    N: float
    K: float
    M: float

    def __iter__(self):
        yield self.instance
        yield self.scheme

    def game_value(self, normalized_value: float) -> float:
        """Leader value in the original game for a framing value on the normalized scale.

        De-normalizing gives the value on the scaled raw scale.  The dummy
        state carries prior mass ``1 - eps`` and the sender utilities were
        multiplied by ``1 / (1 - eps)``, so the two factors cancel and the
        de-normalized number is the leader value itself.
        """
        return float(self.instance.normalization.sender_to_raw(normalized_value))


def check_hard_family(bsg: BSGInstance) -> None:
    """Raise ValidationError unless ``bsg`` has the structure the embedding needs."""
    lu, fu = bsg.leader_utility, bsg.follower_utility
    n_l = len(bsg.leader_actions)
    problems = []
    if len(bsg.follower_actions) != 2:
        problems.append("follower must have exactly two actions")
    else:
        if not np.allclose(fu[:, :, 0], 1.0, atol=TOL):
            problems.append("follower utility of the first action must be 1 everywhere")
        if fu.min() < -TOL or fu.max() > n_l + TOL:
            problems.append(f"follower utilities must lie in [0, {n_l}]")
    if not np.all(np.isclose(lu, 0.0, atol=TOL) | np.isclose(lu, 1.0, atol=TOL)):
        problems.append("leader utility must be 0/1")
    if np.ptp(lu, axis=1).max() > TOL:
        problems.append("leader utility must not depend on the leader's action")
    if bsg.type_dist.min() <= 0:
        problems.append("every type needs positive probability")
    if problems:
        raise ValidationError("BSG is outside the supported family: " + "; ".join(problems))


def reduce_bsg_to_framing(bsg: BSGInstance, eps: float) -> HardFamilyReduction:
    """Embed a binary-follower game into a fixed-scheme framing problem.

    States are one per leader action, one per type, and a dummy state;
    actions are a (type, follower action) pair for each type plus two
    deterrent actions; there is one signal per type.  The prior puts
    ``1 - eps`` on the dummy state, ``eps / |types|`` on each type state
    and nothing on leader-action states.  Penalty constants take the
    smallest values that are strictly above their required bounds.
    Action labels list the per-type actions first so that index
    tie-breaking favours them over the deterrents.
    """
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    check_hard_family(bsg)
    n_t, n_l = len(bsg.types), len(bsg.leader_actions)
    P = bsg.type_dist
    P_min = float(P.min())
    v_max = float(bsg.follower_utility.max())
    L = n_t / eps + 1
    N = K = 1 / ((1 - eps) * P_min) + 1
    M = v_max * (1 + K)

    states = [f"leader:{a}" for a in bsg.leader_actions] + [f"type:{t}" for t in bsg.types] + ["dummy"]
    actions = [f"{t}:{f}" for t in bsg.types for f in bsg.follower_actions] + ["deter_1", "deter_2"]
    n_w, n_a = len(states), len(actions)
    W_L = range(n_l)
    W_T = range(n_l, n_l + n_t)
    W_D = n_l + n_t
    A1, A2 = 2 * n_t, 2 * n_t + 1

    prior = np.zeros(n_w)
    prior[list(W_T)] = eps / n_t
    prior[W_D] = 1 - eps

    pi = np.zeros((n_w, n_t))
    pi[W_D] = P
    for t in range(n_t):
        pi[n_l + t, t] = 1.0
    pi[list(W_L)] = 1.0 / n_t

    u = np.zeros((n_a, n_w))
    v = np.zeros((n_a, n_w))
    lead = bsg.leader_utility[:, 0, :]  # [type, follower action]
    for t in range(n_t):
        for f in range(2):
            a = 2 * t + f
            u[a, list(W_L)] = lead[t, f]
            u[a, W_D] = lead[t, f]
            for t2 in range(n_t):
                u[a, n_l + t2] = 0.0 if t2 == t else -L
                v[a, n_l + t2] = 0.0 if t2 == t else -M
            v[a, list(W_L)] = bsg.follower_utility[t, :, f]
            v[a, W_D] = 0.0
    u[A1, :] = -N
    u[A2, :] = -K
    v[A1, :] = -M - 1
    v[A1, W_D] = N
    v[A2, list(W_L)] = 0.0
    v[A2, list(W_T)] = K
    v[A2, W_D] = 0.0
    u = u / (1 - eps)

    inst = Instance.from_raw(states, actions, prior, u, v)
    scheme = SignalingScheme([f"s:{t}" for t in bsg.types], pi)
    return HardFamilyReduction(inst, scheme, float(eps), L, N, K, M)
