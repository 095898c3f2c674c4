"""File formats used by the command line.

Instances, schemes, games and oracle tables are JSON documents.  Belief
sets are plain text, one half-space per line.  Tabular results go out as
CSV with ``\\n`` line endings so that repeated runs produce identical
bytes.
"""
from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bsg import BSGInstance
from .core import Instance, SignalingScheme, ValidationError
from .joint_design import ConvexBeliefSet, JointSolution
from .oracle import Framing


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _need(d: dict, keys, what: str):
    missing = [k for k in keys if k not in d]
    if missing:
        raise ValidationError(f"{what} is missing fields {missing}")


# -- instances and schemes ---------------------------------------------

def instance_from_dict(d: dict) -> Instance:
    """Build an :class:`Instance` from raw-scale JSON data.

    Expected keys: ``states``, ``actions``, ``prior``, ``sender_utility``
    and ``receiver_utility`` (rows are actions, columns states), plus an
    optional ``forbidden_pairs`` list of ``[action, state]``.
    """
    _need(d, ("states", "actions", "prior", "sender_utility", "receiver_utility"), "instance")
    pairs = [tuple(p) for p in d.get("forbidden_pairs", [])]
    return Instance.from_raw(d["states"], d["actions"], d["prior"], d["sender_utility"],
                             d["receiver_utility"], pairs)


def instance_to_dict(instance: Instance) -> dict:
    u = instance.raw_sender_utility().tolist()
    v = instance.raw_receiver_utility().tolist()
    forbidden = []
    for a, w in zip(*np.nonzero(~instance.allowed)):
        u[a][w] = v[a][w] = None
        forbidden.append([instance.actions[a], instance.states[w]])
    d = {"states": list(instance.states), "actions": list(instance.actions),
         "prior": instance.prior.tolist(), "sender_utility": u, "receiver_utility": v}
    if forbidden:
        d["forbidden_pairs"] = forbidden
    return d


def load_instance(path) -> Instance:
    return instance_from_dict(read_json(path))


def scheme_from_dict(d: dict) -> SignalingScheme:
    """``{"signals": [...], "probs": [[...], ...]}`` with one row per state."""
    _need(d, ("signals", "probs"), "scheme")
    return SignalingScheme(d["signals"], d["probs"])


def scheme_to_dict(scheme: SignalingScheme) -> dict:
    return {"signals": list(scheme.signals), "probs": scheme.probs.tolist()}


def load_scheme(path) -> SignalingScheme:
    return scheme_from_dict(read_json(path))


def bsg_from_dict(d: dict) -> BSGInstance:
    keys = ("leader_actions", "follower_actions", "types", "type_dist", "leader_utility", "follower_utility")
    _need(d, keys, "game")
    return BSGInstance(*(d[k] for k in keys))


def bsg_to_dict(g: BSGInstance) -> dict:
    return {"leader_actions": list(g.leader_actions), "follower_actions": list(g.follower_actions),
            "types": list(g.types), "type_dist": g.type_dist.tolist(),
            "leader_utility": g.leader_utility.tolist(), "follower_utility": g.follower_utility.tolist()}


def load_bsg(path) -> BSGInstance:
    return bsg_from_dict(read_json(path))


def load_framings(path) -> list[Framing]:
    """Framings as a JSON list of ``{"id", "text"}`` objects or an id-to-text map."""
    data = read_json(path)
    if isinstance(data, dict):
        return [Framing(str(k), str(v)) for k, v in data.items()]
    if isinstance(data, list):
        out = []
        for item in data:
            if not isinstance(item, dict):
                raise ValidationError("framing list entries must be objects with 'id' and 'text'")
            _need(item, ("id", "text"), "framing")
            out.append(Framing(str(item["id"]), str(item["text"])))
        return out
    raise ValidationError("framings file must hold a list or an object")


def load_oracle_config(path) -> dict:
    """Oracle configuration; a bare id-to-belief map is read as a table oracle."""
    data = read_json(path)
    if not isinstance(data, dict):
        raise ValidationError("oracle file must hold a JSON object")
    if "kind" not in data:
        return {"kind": "table", "table": data}
    return data


# -- beliefs and belief sets ----------------------------------------------

def parse_number(text: str) -> float:
    """Decimal or fraction (``2/3``)."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"cannot read {text!r} as a number") from None


def parse_vector(text: str) -> np.ndarray:
    """Comma- or space-separated numbers, e.g. ``"2/3,1/3"``."""
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise ValidationError("empty vector")
    return np.array([parse_number(p) for p in parts])


def parse_half_spaces(text: str, n_states: int) -> ConvexBeliefSet:
    """Belief set from lines ``c_1 ... c_n <= b``.

    The ``<=`` token may be omitted, in which case the last number is the
    bound.  ``>=`` flips the row.  Blank lines and ``#`` comments are
    skipped; no rows at all means the whole simplex.
    """
    rows, bounds = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sign = 1.0
        if ">=" in line:
            lhs, rhs = line.split(">=")
            sign = -1.0
        elif "<=" in line:
            lhs, rhs = line.split("<=")
        else:
            tok = line.replace(",", " ").split()
            lhs, rhs = " ".join(tok[:-1]), tok[-1] if tok else ""
        c = parse_vector(lhs) if lhs.strip() else np.zeros(0)
        if c.size != n_states:
            raise ValidationError(f"half-space line {lineno}: expected {n_states} coefficients, got {c.size}")
        rows.append(sign * c)
        bounds.append(sign * parse_number(rhs))
    if not rows:
        return ConvexBeliefSet.full(n_states)
    return ConvexBeliefSet(n_states, np.array(rows), np.array(bounds))


def load_half_spaces(path, n_states: int) -> ConvexBeliefSet:
    return parse_half_spaces(Path(path).read_text(encoding="utf-8"), n_states)


# -- output ----------------------------------------------------------------

def csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def write_csv(path, rows) -> None:
    Path(path).write_text(csv_text(rows), encoding="utf-8", newline="")


def solution_to_dict(instance: Instance, sol: JointSolution) -> dict:
    return {
        "belief": dict(zip(instance.states, sol.belief.tolist())),
        "value": sol.sender_value,
        "value_raw": sol.raw_value(instance),
        "obedience_slack": sol.obedience_slack,
        "evaluated": sol.evaluated,
        "resolution": sol.resolution,
        "scheme": scheme_to_dict(sol.scheme),
    }
