"""Bundled instances.

Each preset carries raw-scale utilities; :class:`~framecraft.core.Instance`
normalizes them on construction.  Persona descriptions for the case
studies are not bundled; the optimizer context is assembled from the state
and action labels unless a context file is supplied.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .core import Instance, SignalingScheme, validate_instance


@dataclass(frozen=True)
class Preset:
    name: str
    instance: Instance
    scheme: SignalingScheme | None = None
    oracle_table: dict | None = None
    framings: dict | None = None
    note: str = ""
    raw: dict = field(default_factory=dict)


def _make(name, states, actions, prior, u, v, forbidden=(), **extra) -> Preset:
    inst = Instance.from_raw(states, actions, prior, u, v, forbidden)
    raw = {"states": list(states), "actions": list(actions), "prior": list(prior),
           "sender_utility": u, "receiver_utility": v}
    if forbidden:
        raw["forbidden_pairs"] = [list(p) for p in forbidden]
    return Preset(name, inst, raw=raw, **extra)


def prosecutor() -> Preset:
    states = ("innocent", "guilty")
    actions = ("acquit", "convict")
    # Guilty defendants are always recommended for conviction; innocent
    # ones half the time.
    scheme = SignalingScheme(actions, [[0.5, 0.5], [0.0, 1.0]])
    return _make(
        "prosecutor", states, actions, [0.67, 0.33],
        [[0, 0], [1, 1]], [[1, 0], [0, 1]],
        scheme=scheme,
        oracle_table={"f1": [0.67, 0.33], "f2": [2 / 3, 1 / 3]},
        framings={"f1": "Most defendants who come to trial are innocent.",
                  "f2": "Two out of three defendants are innocent."},
        note="Judge wants the verdict to match the truth; prosecutor always wants a conviction.",
    )


def example1() -> Preset:
    return _make(
        "example1", ("w1", "w2"), ("a1", "a2", "a3"), [1 / 3, 2 / 3],
        [[0, 1], [1, 0], [0.2, 0.2]],
        [[0.65, 0.15], [0.60, 0.30], [0.10, 0.50]],
        note="Two-state, three-action instance whose optimal value is a non-convex, non-concave function of the belief.",
    )


_HOUSE_STATES = ("good_cheap", "good_expensive", "bad_cheap", "bad_expensive")
_HOUSE_U = [[0, 0, 0, 0], [-0.25, 1, -0.5, 0.75]]
_HOUSE_V = [[-1, 0, 0, 0], [0.75, -0.25, 0.25, -3]]


def henry() -> Preset:
    return _make("henry", _HOUSE_STATES, ("not_buy", "buy"), [0.1, 0.35, 0.3, 0.25], _HOUSE_U, _HOUSE_V,
                 note="Realtor and a first buyer; state is (neighbourhood, price).")


def lilly() -> Preset:
    return _make("lilly", _HOUSE_STATES, ("not_buy", "buy"), [0.2, 0.4, 0.1, 0.3], _HOUSE_U, _HOUSE_V,
                 note="Realtor and a second buyer with a different prior.")


def advertising() -> Preset:
    states = ("trendy_durable", "trendy_fragile", "plain_durable", "plain_fragile")
    actions = ("buy_on_sale", "buy_regular", "not_buy")
    return _make(
        "advertising", states, actions, [0.225, 0.125, 0.5, 0.15],
        [[None, 1, 0.3, 0.8], [2.5, 2, 1.0, 0.5], [0, 0, 0, 0]],
        [[None, 1, 0, -0.5], [1, 0.6, -1, -1], [0, 0, 0, 0]],
        forbidden=(("buy_on_sale", "trendy_durable"),),
        note="Brand and customer; trendy durable products are never discounted.",
    )


PRESETS = {
    "prosecutor": prosecutor,
    "example1": example1,
    "henry": henry,
    "lilly": lilly,
    "advertising": advertising,
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def check_presets() -> dict:
    """Validation report for every bundled instance."""
    return {name: validate_instance(f().instance) for name, f in PRESETS.items()}
