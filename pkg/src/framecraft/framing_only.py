"""Choosing a framing when the signaling scheme is fixed.

Here the sender cannot touch the scheme; the only lever is the receiver's
starting belief.  The objective ``U_pi(mu)`` is piecewise constant in
``mu`` with jumps wherever a posterior crosses an indifference boundary,
which is what :func:`find_discontinuity` hunts for.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import (
    FramecraftError,
    Instance,
    SignalingScheme,
    ValidationError,
    as_belief,
    best_response_batch,
    best_response_index,
    sender_ex_ante_utility,
)
from .oracle import Framing, query_belief


class FramingEnumerationError(FramecraftError):
    """The oracle failed on one of the framings being enumerated."""

    def __init__(self, framing_id: str, cause: BaseException):
        super().__init__(f"oracle failed on framing {framing_id!r}: {cause}")
        self.framing_id = framing_id


def fixed_scheme_utility(instance: Instance, scheme: SignalingScheme, receiver_belief) -> float:
    """Sender utility of ``scheme`` when the receiver starts at ``receiver_belief``."""
    return sender_ex_ante_utility(instance, receiver_belief, scheme)


def fixed_scheme_utility_batch(instance: Instance, scheme: SignalingScheme, beliefs) -> np.ndarray:
    """:func:`fixed_scheme_utility` for every row of ``beliefs``.

    Applies the same tie-breaking and zero-probability conventions as the
    scalar version.
    """
    B = np.atleast_2d(np.asarray(beliefs, dtype=np.float64))
    if B.shape[1] != instance.n_states or scheme.n_states != instance.n_states:
        raise ValidationError("belief/scheme dimensions do not match the instance")
    direct = scheme.is_direct_for(instance)
    fallback_prior = None
    etas = instance._margin[1] if direct else None
    out = np.zeros(B.shape[0])
    for k, s in enumerate(scheme.signals):
        col = scheme.probs[:, k]
        weight = instance.prior * col
        if not weight.any():
            continue
        acts = best_response_batch(B * col, instance)
        dead = acts < 0
        if dead.any():
            if direct:
                acts[dead] = best_response_index(etas[instance.action_index(s)], instance)
            else:
                if fallback_prior is None:
                    fallback_prior = best_response_batch(B, instance)
                acts[dead] = fallback_prior[dead]
        out += instance.sender_utility[acts] @ weight
    return out


# --------------------------------------------------------------------------
# Discrete framing spaces
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteFramingSpace:
    """A finite list of framings together with the oracle that scores them."""

    framings: tuple
    oracle: object

    def __post_init__(self):
        framings = tuple(self.framings)
        ids = [f.id for f in framings]
        if not framings:
            raise ValidationError("framing space is empty")
        if len(set(ids)) != len(ids):
            raise ValidationError("framing ids must be unique")
        object.__setattr__(self, "framings", framings)

    def __len__(self):
        return len(self.framings)


@dataclass(frozen=True)
class EnumerationRow:
    framing: Framing
    belief: np.ndarray
    utility: float


@dataclass(frozen=True)
class EnumerationResult:
    best: Framing
    utility: float
    table: tuple = field(default_factory=tuple)

    def to_rows(self, states) -> list[list]:
        header = ["framing_id", *[f"belief_{s}" for s in states], "utility"]
        rows = [header]
        for r in self.table:
            rows.append([r.framing.id, *[repr(float(x)) for x in r.belief], repr(float(r.utility))])
        return rows


def enumerate_framings(space: DiscreteFramingSpace, instance: Instance, scheme: SignalingScheme,
                       context: str = "", jobs: int = 4) -> EnumerationResult:
    """Query every framing and keep the one with the highest sender utility.

    Oracle calls run on up to ``jobs`` threads; the result does not depend
    on scheduling since rows are kept in space order and ties go to the
    earliest framing.
    """
    def one(f: Framing):
        try:
            resp = query_belief(space.oracle, f, context)
            belief = as_belief(resp.belief, instance.n_states)
        except Exception as exc:  # reported with the framing attached
            raise FramingEnumerationError(f.id, exc) from exc
        return EnumerationRow(f, belief, fixed_scheme_utility(instance, scheme, belief))

    if jobs <= 1 or len(space) == 1:
        rows = [one(f) for f in space.framings]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, space.framings))
    best = rows[0]
    for r in rows[1:]:
        if r.utility > best.utility:
            best = r
    return EnumerationResult(best.framing, best.utility, tuple(rows))


# --------------------------------------------------------------------------
# Discontinuities
# --------------------------------------------------------------------------

EPS_LADDER = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class DiscontinuityReport:
    """A jump of the fixed-scheme objective along a two-state segment.

    ``plus_belief`` and ``minus_belief`` are ``indifference_belief`` moved
    by ``epsilon`` toward ``states[0]`` and ``states[1]`` respectively.
    """

    indifference_belief: np.ndarray
    plus_belief: np.ndarray
    minus_belief: np.ndarray
    epsilon: float
    gap: float
    utility_plus: float
    utility_minus: float
    signal: str
    actions: tuple
    states: tuple
    ladder: tuple = ()


def _segment(n, i, j, t):
    mu = np.zeros(n)
    mu[i] = t
    mu[j] = 1.0 - t
    return mu


def find_discontinuity(instance: Instance, scheme: SignalingScheme, tol: float = 1e-10):
    """Search two-state segments for a jump in the fixed-scheme utility.

    Needs a signal sent with positive probability in every state; without
    one the search is skipped.  For each such signal, each pair of actions
    and each pair of states on which the receiver's preference between the
    two actions flips, the indifference point is located by bisection.  The
    utility is then compared just on either side of it over a shrinking
    ladder of offsets.  A gap counts when it stays within 10% across the
    two smallest offsets and the action taken after the signal differs on
    the two sides.

    Returns
    -------
    DiscontinuityReport or None
        The largest stable gap found, or ``None``.
    """
    n = instance.n_states
    v = instance.receiver_utility
    full = [k for k in range(len(scheme.signals)) if np.all(scheme.probs[:, k] > 0)]
    best = None
    for k in full:
        col = scheme.probs[:, k]
        for a1, a2 in combinations(range(instance.n_actions), 2):
            diff = v[a1] - v[a2]
            for i, j in combinations(range(n), 2):
                if not diff[i] * diff[j] < 0:
                    continue

                def g(t):
                    return t * col[i] * diff[i] + (1 - t) * col[j] * diff[j]

                lo, hi = 0.0, 1.0  # sign(g(lo)) == sign(diff[j])
                while hi - lo > tol:
                    mid = 0.5 * (lo + hi)
                    if np.sign(g(mid)) == np.sign(diff[j]):
                        lo = mid
                    else:
                        hi = mid
                t = 0.5 * (lo + hi)
                ladder = []
                for eps in EPS_LADDER:
                    if not eps < min(t, 1 - t):
                        continue
                    plus = _segment(n, i, j, t + eps)
                    minus = _segment(n, i, j, t - eps)
                    up = fixed_scheme_utility(instance, scheme, plus)
                    um = fixed_scheme_utility(instance, scheme, minus)
                    ladder.append((eps, abs(up - um), plus, minus, up, um))
                if len(ladder) < 2:
                    continue
                (e1, g1, *_), (e2, g2, plus, minus, up, um) = ladder[-2], ladder[-1]
                if g2 <= 1e-9 or abs(g1 - g2) >= 0.1 * max(g1, g2):
                    continue
                br_p = best_response_index(plus * col / (plus @ col), instance)
                br_m = best_response_index(minus * col / (minus @ col), instance)
                if br_p == br_m:
                    continue
                if best is None or g2 > best.gap:
                    best = DiscontinuityReport(
                        indifference_belief=_segment(n, i, j, t),
                        plus_belief=plus, minus_belief=minus, epsilon=e2, gap=g2,
                        utility_plus=up, utility_minus=um,
                        signal=scheme.signals[k],
                        actions=(instance.actions[a1], instance.actions[a2]),
                        states=(instance.states[i], instance.states[j]),
                        ladder=tuple((e, gp) for e, gp, *_ in ladder),
                    )
    return best
