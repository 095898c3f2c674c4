"""Instances, beliefs, signaling schemes and the receiver's decision rule.

Conventions
-----------
* Utility matrices are indexed ``[action, state]``.
* Scheme matrices are indexed ``[state, signal]`` (each row is a
  distribution over signals).
* Beliefs are plain 1-D float arrays over states.

All containers are frozen and hold read-only arrays, so they can be shared
between threads without copying.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

TOL = 1e-9


class FramecraftError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(FramecraftError, ValueError):
    """Malformed instance, belief, scheme or parameter."""


class ZeroProbabilitySignal(FramecraftError, ValueError):
    """A posterior was requested for a signal the belief deems impossible."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def as_belief(probs, n_states: int | None = None, *, tol: float = TOL) -> np.ndarray:
    """Validate ``probs`` as a probability vector and return a float copy.

    Entries within ``tol`` below zero are clipped; the result is rescaled to
    sum exactly to one.
    """
    b = np.asarray(probs, dtype=np.float64).ravel()
    if n_states is not None and b.shape[0] != n_states:
        raise ValidationError(f"belief has {b.shape[0]} entries, expected {n_states}")
    if b.size == 0 or not np.all(np.isfinite(b)):
        raise ValidationError("belief must be a nonempty finite vector")
    if b.min() < -tol:
        raise ValidationError(f"belief has a negative entry {b.min():.3g}")
    if abs(b.sum() - 1.0) > tol:
        raise ValidationError(f"belief sums to {b.sum():.12g}, not 1")
    b = np.clip(b, 0.0, None)
    return b / b.sum()


# --------------------------------------------------------------------------
# Normalization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationRecord:
    """Affine maps taking raw utilities to the unit interval.

    ``normalized = (raw - offset) / scale`` for each side.
    """

    sender_offset: float = 0.0
    sender_scale: float = 1.0
    receiver_offset: float = 0.0
    receiver_scale: float = 1.0

    def __post_init__(self):
        if not (self.sender_scale > 0 and self.receiver_scale > 0):
            raise ValidationError("normalization scales must be positive")

    def sender_to_raw(self, x):
        return np.asarray(x) * self.sender_scale + self.sender_offset

    def sender_from_raw(self, x):
        return (np.asarray(x) - self.sender_offset) / self.sender_scale

    def receiver_to_raw(self, x):
        return np.asarray(x) * self.receiver_scale + self.receiver_offset

    def receiver_from_raw(self, x):
        return (np.asarray(x) - self.receiver_offset) / self.receiver_scale

    def as_dict(self) -> dict:
        return {
            "sender_offset": self.sender_offset,
            "sender_scale": self.sender_scale,
            "receiver_offset": self.receiver_offset,
            "receiver_scale": self.receiver_scale,
        }


def _minmax(m: np.ndarray):
    lo, hi = float(m.min()), float(m.max())
    if hi - lo <= 0.0:
        # Constant matrix: everything sits at 0.5, scale kept at 1.
        return np.full_like(m, 0.5), lo - 0.5, 1.0
    return (m - lo) / (hi - lo), lo, hi - lo


def normalize_utilities(raw_sender, raw_receiver):
    """Min-max normalize each utility matrix to [0, 1].

    Returns
    -------
    sender, receiver : ndarray
        Normalized copies.
    record : NormalizationRecord
        Offsets and scales so that ``raw = normalized * scale + offset``.

    Examples
    --------
    >>> s, r, rec = normalize_utilities([[-0.5, 0.0], [0.75, 1.0]], [[0, 1], [1, 0]])
    >>> float(s[0, 1])  # doctest: +ELLIPSIS
    0.333...
    """
    s = np.array(raw_sender, dtype=np.float64)
    r = np.array(raw_receiver, dtype=np.float64)
    for name, m in (("sender", s), ("receiver", r)):
        if m.ndim != 2 or m.size == 0:
            raise ValidationError(f"{name} utility must be a nonempty matrix")
        if not np.all(np.isfinite(m)):
            raise ValidationError(f"{name} utility has non-finite entries")
    s_n, s_off, s_sc = _minmax(s)
    r_n, r_off, r_sc = _minmax(r)
    return s_n, r_n, NormalizationRecord(s_off, s_sc, r_off, r_sc)


# --------------------------------------------------------------------------
# Containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonObedience:
    """Allowed violation of each obedience constraint."""

    epsilon: float = 0.0

    def __post_init__(self):
        if not (0.0 <= float(self.epsilon) <= 1.0):
            raise ValidationError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    def __float__(self):
        return float(self.epsilon)


def _eps(eps) -> float:
    if isinstance(eps, EpsilonObedience):
        return eps.epsilon
    return EpsilonObedience(float(eps)).epsilon


@dataclass(frozen=True, eq=False)
class SignalingScheme:
    """Row-stochastic map from states to labelled signals.

    Parameters
    ----------
    signals : sequence of str
    probs : array_like, shape (n_states, n_signals)
        ``probs[w, s]`` is the probability of sending signal ``s`` in state
        ``w``.
    """

    signals: tuple
    probs: np.ndarray

    def __post_init__(self):
        signals = tuple(str(s) for s in self.signals)
        if len(set(signals)) != len(signals):
            raise ValidationError("signal labels must be unique")
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != len(signals) or p.shape[0] == 0:
            raise ValidationError(f"scheme matrix shape {p.shape} does not match {len(signals)} signals")
        if not np.all(np.isfinite(p)) or p.min() < -TOL:
            raise ValidationError("scheme entries must be finite and nonnegative")
        sums = p.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValidationError(f"scheme row {bad} sums to {sums[bad]:.12g}")
        p = np.clip(p, 0.0, None)
        p /= p.sum(axis=1, keepdims=True)
        object.__setattr__(self, "signals", signals)
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    def index(self, signal: str) -> int:
        try:
            return self.signals.index(signal)
        except ValueError:
            raise ValidationError(f"unknown signal {signal!r}") from None

    def column(self, signal: str) -> np.ndarray:
        return self.probs[:, self.index(signal)]

    def is_direct_for(self, instance: "Instance") -> bool:
        """True when every signal is an action label of ``instance``."""
        return set(self.signals) <= set(instance.actions)

    @classmethod
    def uninformative(cls, n_states: int, signal: str = "none") -> "SignalingScheme":
        return cls((signal,), np.ones((n_states, 1)))

    @classmethod
    def fully_revealing(cls, states: Sequence[str]) -> "SignalingScheme":
        return cls(tuple(states), np.eye(len(states)))


@dataclass(frozen=True, eq=False)
class Instance:
    """A persuasion instance with utilities already on the unit interval.

    Most callers should build instances with :meth:`from_raw`, which
    normalizes raw utilities and keeps the map in ``normalization``.
    ``allowed`` optionally marks (action, state) pairs that a scheme may
    use; ``False`` entries are forced to zero probability by the joint
    solvers.
    """

    states: tuple
    actions: tuple
    prior: np.ndarray
    sender_utility: np.ndarray
    receiver_utility: np.ndarray
    normalization: NormalizationRecord = field(default_factory=NormalizationRecord)
    allowed: np.ndarray | None = None

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        actions = tuple(str(a) for a in self.actions)
        if not states or not actions:
            raise ValidationError("need at least one state and one action")
        if len(set(states)) != len(states) or len(set(actions)) != len(actions):
            raise ValidationError("state and action labels must be unique")
        shape = (len(actions), len(states))
        u = np.array(self.sender_utility, dtype=np.float64)
        v = np.array(self.receiver_utility, dtype=np.float64)
        for name, m in (("sender", u), ("receiver", v)):
            if m.shape != shape:
                raise ValidationError(f"{name} utility has shape {m.shape}, expected {shape}")
            if not np.all(np.isfinite(m)):
                raise ValidationError(f"{name} utility has non-finite entries")
            if m.min() < -TOL or m.max() > 1 + TOL:
                raise ValidationError(f"{name} utility is not normalized to [0, 1]")
        prior = as_belief(self.prior, len(states))
        allowed = np.ones(shape, dtype=bool) if self.allowed is None else np.array(self.allowed, dtype=bool)
        if allowed.shape != shape:
            raise ValidationError("allowed mask must match the utility shape")
        if not allowed.any(axis=0).all():
            raise ValidationError("every state needs at least one permitted action")
        allowed.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "prior", _frozen(prior))
        object.__setattr__(self, "sender_utility", _frozen(np.clip(u, 0, 1)))
        object.__setattr__(self, "receiver_utility", _frozen(np.clip(v, 0, 1)))
        object.__setattr__(self, "allowed", allowed)

    @classmethod
    def from_raw(cls, states, actions, prior, sender_utility, receiver_utility,
                 forbidden_pairs: Iterable[tuple[str, str]] = ()) -> "Instance":
        """Build an instance from raw-scale utilities.

        ``forbidden_pairs`` lists (action, state) labels that no scheme may
        use.  Entries given as ``None`` in either matrix must be forbidden;
        they are filled with that matrix's minimum before normalization.
        """
        states, actions = tuple(states), tuple(actions)
        allowed = np.ones((len(actions), len(states)), dtype=bool)
        for a, w in forbidden_pairs:
            try:
                allowed[actions.index(a), states.index(w)] = False
            except ValueError:
                raise ValidationError(f"forbidden pair ({a!r}, {w!r}) names an unknown label") from None
        mats = []
        for name, m in (("sender", sender_utility), ("receiver", receiver_utility)):
            arr = np.array([[np.nan if x is None else x for x in row] for row in m], dtype=np.float64)
            holes = np.isnan(arr)
            if holes.any():
                if np.any(holes & allowed):
                    raise ValidationError(f"{name} utility has missing entries outside forbidden pairs")
                arr[holes] = np.nanmin(arr)
            mats.append(arr)
        u, v, rec = normalize_utilities(*mats)
        return cls(states, actions, prior, u, v, rec, allowed)

    # -- convenience ---------------------------------------------------
    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def has_forbidden(self) -> bool:
        return not bool(self.allowed.all())

    def raw_sender_utility(self) -> np.ndarray:
        return self.normalization.sender_to_raw(self.sender_utility)

    def raw_receiver_utility(self) -> np.ndarray:
        return self.normalization.receiver_to_raw(self.receiver_utility)

    def with_prior(self, prior) -> "Instance":
        return Instance(self.states, self.actions, prior, self.sender_utility,
                        self.receiver_utility, self.normalization, self.allowed)

    def action_index(self, action: str) -> int:
        try:
            return self.actions.index(action)
        except ValueError:
            raise ValidationError(f"unknown action {action!r}") from None

    @cached_property
    def _margin(self):
        return _margin_lp(self.receiver_utility)


# --------------------------------------------------------------------------
# Bayes and best responses
# --------------------------------------------------------------------------

def posterior(mu, scheme: SignalingScheme, signal: str) -> np.ndarray:
    """Bayes update of belief ``mu`` after observing ``signal``.

    Raises
    ------
    ZeroProbabilitySignal
        If ``signal`` has probability zero under ``mu``.
    """
    mu = as_belief(mu, scheme.n_states)
    w = mu * scheme.column(signal)
    total = w.sum()
    if not total > 0.0:
        raise ZeroProbabilitySignal(f"signal {signal!r} has zero probability under this belief")
    return w / total


def best_response_index(belief, instance: Instance) -> int:
    """Index of the receiver's best action with sender-favoured tie-breaking.

    Receiver-optimal actions (within ``TOL``) are kept; among those, the one
    with the highest sender expected utility under the same belief wins,
    and remaining ties go to the lowest action index.
    """
    b = np.asarray(belief, dtype=np.float64)
    ev = instance.receiver_utility @ b
    cand = np.flatnonzero(ev >= ev.max() - TOL)
    if cand.size == 1:
        return int(cand[0])
    eu = instance.sender_utility[cand] @ b
    return int(cand[np.flatnonzero(eu >= eu.max() - TOL)[0]])


def best_response(posterior_belief, instance: Instance) -> str:
    """Label of the receiver's best action at ``posterior_belief``."""
    return instance.actions[best_response_index(as_belief(posterior_belief, instance.n_states), instance)]


def best_response_batch(weights: np.ndarray, instance: Instance) -> np.ndarray:
    """Vectorised best responses for unnormalized posteriors.

    ``weights`` has shape ``(N, n_states)``; each row is normalized before
    comparison.  Rows summing to zero get ``-1``.
    """
    W = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    tot = W.sum(axis=1)
    ok = tot > 0
    post = np.zeros_like(W)
    post[ok] = W[ok] / tot[ok, None]
    ev = post @ instance.receiver_utility.T
    eu = post @ instance.sender_utility.T
    tied = ev >= ev.max(axis=1, keepdims=True) - TOL
    eu = np.where(tied, eu, -np.inf)
    tied &= eu >= eu.max(axis=1, keepdims=True) - TOL
    out = np.argmax(tied, axis=1)
    out[~ok] = -1
    return out


def _signal_actions(instance: Instance, receiver_belief: np.ndarray, scheme: SignalingScheme) -> np.ndarray:
    """Action index taken after each signal, including the fallback rule."""
    direct = scheme.is_direct_for(instance)
    out = np.empty(len(scheme.signals), dtype=np.int64)
    etas = None
    for k, s in enumerate(scheme.signals):
        w = receiver_belief * scheme.probs[:, k]
        if w.sum() > 0.0:
            out[k] = best_response_index(w / w.sum(), instance)
        elif direct:
            if etas is None:
                etas = instance._margin[1]
            out[k] = best_response_index(etas[instance.action_index(s)], instance)
        else:
            out[k] = best_response_index(receiver_belief, instance)
    return out


def sender_ex_ante_utility(instance: Instance, receiver_belief, scheme: SignalingScheme) -> float:
    """Sender's expected utility when the receiver starts from ``receiver_belief``.

    States are drawn from the instance prior, signals from ``scheme``, and
    the receiver best-responds to the posterior computed from
    ``receiver_belief``.  A signal the receiver considers impossible (but
    that the prior can produce) is met with the best response to the
    inducing belief of the recommended action when the scheme is direct,
    and to ``receiver_belief`` otherwise.
    """
    if scheme.n_states != instance.n_states:
        raise ValidationError("scheme and instance disagree on the number of states")
    mu = as_belief(receiver_belief, instance.n_states)
    acts = _signal_actions(instance, mu, scheme)
    # sum_w prior(w) sum_s pi(s|w) u(a_s, w)
    gains = instance.sender_utility[acts, :].T  # (states, signals)
    return float(np.sum(instance.prior[:, None] * scheme.probs * gains))


def direct_scheme(scheme: SignalingScheme, receiver_belief, instance: Instance) -> SignalingScheme:
    """Merge signals by the action they induce.

    The result recommends actions directly.  Sender utility at
    ``receiver_belief`` is unchanged.
    """
    mu = as_belief(receiver_belief, instance.n_states)
    acts = _signal_actions(instance, mu, scheme)
    out = np.zeros((instance.n_states, instance.n_actions))
    for k, a in enumerate(acts):
        out[:, a] += scheme.probs[:, k]
    return SignalingScheme(instance.actions, out)


# --------------------------------------------------------------------------
# Inducibility margin
# --------------------------------------------------------------------------

def _margin_lp(v: np.ndarray):
    n_a, n_w = v.shape
    if n_a == 1:
        return float("inf"), np.full((1, n_w), 1.0 / n_w), np.array([np.inf])
    margins = np.empty(n_a)
    etas = np.empty((n_a, n_w))
    c = np.zeros(n_w + 1)
    c[-1] = -1.0
    A_eq = np.ones((1, n_w + 1))
    A_eq[0, -1] = 0.0
    bounds = [(0.0, None)] * n_w + [(None, None)]
    for a in range(n_a):
        others = [b for b in range(n_a) if b != a]
        # delta - eta.(v_a - v_b) <= 0 for every b != a
        A_ub = np.hstack([-(v[a] - v[others]), np.ones((len(others), 1))])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(others)), A_eq=A_eq, b_eq=[1.0],
                      bounds=bounds, method="highs")
        if res.status != 0:  # pragma: no cover - the simplex is never empty
            raise FramecraftError(f"margin LP failed for action {a}: {res.message}")
        eta = np.clip(res.x[:n_w], 0.0, None)
        etas[a] = eta / eta.sum()
        margins[a] = float(np.min(etas[a] @ (v[a] - v[others]).T))
    margins.setflags(write=False)
    etas.setflags(write=False)
    return float(margins.min()), etas, margins


def inducibility_margin(instance: Instance):
    """Smallest strict best-response margin over actions.

    Returns
    -------
    D : float
        ``min_a max_eta min_{a' != a} eta.(v_a - v_a')``.  Positive exactly
        when every action is the unique best response somewhere.  A
        single-action instance has ``D = inf``.
    etas : dict
        Maps each action label to its maximizing belief.
    """
    out = instance._margin
    return out[0], {a: out[1][i] for i, a in enumerate(instance.actions)}


def action_margins(instance: Instance) -> dict:
    """Per-action optimum of the margin program."""
    return {a: float(m) for a, m in zip(instance.actions, instance._margin[2])}


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f": {c.detail}" if c.detail else "")
                for c in self.checks]


def validate_instance(instance: Instance, scheme: SignalingScheme | None = None) -> ValidationReport:
    """Check the regularity conditions the solvers rely on.

    Never raises; each failed condition is reported with the offending
    states or actions.
    """
    checks = []
    zero = [instance.states[i] for i in np.flatnonzero(instance.prior <= 0.0)]
    checks.append(Check("full_support", not zero, f"zero prior on {zero}" if zero else ""))

    lo = min(instance.sender_utility.min(), instance.receiver_utility.min())
    hi = max(instance.sender_utility.max(), instance.receiver_utility.max())
    in_range = lo >= -TOL and hi <= 1 + TOL
    checks.append(Check("utility_range", in_range, "" if in_range else f"entries span [{lo}, {hi}]"))

    margins = action_margins(instance)
    weak = {a: m for a, m in margins.items() if not m > TOL}
    D = min(margins.values())
    checks.append(Check(
        "strict_inducibility", not weak,
        ", ".join(f"{a} (margin {m:.3g})" for a, m in weak.items()) if weak else f"D = {D:.6g}",
    ))

    if scheme is not None:
        if scheme.n_states != instance.n_states:
            checks.append(Check("scheme_compatible", False,
                                f"scheme has {scheme.n_states} rows, instance has {instance.n_states} states"))
        else:
            checks.append(Check("scheme_compatible", True))
    return ValidationReport(tuple(checks))
