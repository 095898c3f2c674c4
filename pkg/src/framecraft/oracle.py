"""Belief oracles, soundness scorers and framing generators.

An oracle maps a :class:`Framing` to the belief a receiver would hold
after reading it.  Three kinds are provided:

``TableOracle``
    Fixed lookup by framing id.  Useful for replaying recorded data.
``NoisyOracle``
    Wraps another oracle and moves its answer by at most ``epsilon`` in
    l1 distance, reproducibly per (seed, framing id).
``LLMOracle``
    Renders a prompt template, asks a chat-completion endpoint, and parses
    a probability object out of the reply.

Scorers and generators follow the same pattern with a scripted variant for
tests and an LLM-backed one for live runs.  Every object here is safe to
share between threads.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .core import FramecraftError, ValidationError, as_belief
from .simplex import project_to_simplex, sample_l1_ball

SUM_BAND = (0.98, 1.02)


class OracleError(FramecraftError):
    """Base class for oracle, scorer and generator failures."""


class OracleLookupError(OracleError, KeyError):
    """A table oracle has no entry for the framing."""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing table entry"


class OracleEndpointError(OracleError):
    """The chat endpoint could not be reached or kept failing."""


class OracleParseError(OracleError, ValueError):
    """A model reply could not be turned into the expected structure."""


class GeneratorExhausted(OracleError):
    """A scripted generator ran out of framings."""


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Framing:
    id: str
    text: str

    def __post_init__(self):
        if not str(self.id):
            raise ValidationError("framing id must be non-empty")
        if not str(self.text).strip():
            raise ValidationError(f"framing {self.id!r} has empty text")


@dataclass(frozen=True, eq=False)
class OracleResponse:
    belief: np.ndarray
    reasoning: str = ""
    source: str = "table"

    def __post_init__(self):
        b = as_belief(self.belief)
        b.setflags(write=False)
        object.__setattr__(self, "belief", b)
        if self.source not in ("table", "llm", "noisy"):
            raise ValidationError(f"unknown oracle source {self.source!r}")


# --------------------------------------------------------------------------
# Parsing helpers
# --------------------------------------------------------------------------

_FENCE = re.compile(r"```[A-Za-z0-9_-]*")


def extract_json_object(raw: str) -> Any:
    """Parse ``raw`` as JSON, with one repair attempt.

    The repair drops markdown code fences and keeps the text between the
    first ``{`` and the last ``}``.
    """
    try:
        return json.loads(raw)
    except (json.JSONDecodeError, TypeError):
        pass
    text = _FENCE.sub("", str(raw))
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise OracleParseError("no JSON object found in reply")
    try:
        return json.loads(text[start:end + 1])
    except json.JSONDecodeError as exc:
        raise OracleParseError(f"reply is not valid JSON after repair: {exc}") from None


def parse_probability_vector(raw: str, expected_keys: Sequence[str]) -> np.ndarray:
    """Read a probability vector keyed by ``expected_keys`` from a reply.

    The object may sit at the top level or under a ``"probabilities"`` key.
    Sums inside ``[0.98, 1.02]`` are rescaled to one; anything else, a
    missing key, or a negative entry raises :class:`OracleParseError`.
    """
    obj = extract_json_object(raw)
    if isinstance(obj, Mapping) and isinstance(obj.get("probabilities"), Mapping):
        obj = obj["probabilities"]
    if not isinstance(obj, Mapping):
        raise OracleParseError("reply does not contain a JSON object")
    missing = [k for k in expected_keys if k not in obj]
    if missing:
        raise OracleParseError(f"reply lacks keys {missing}")
    vals = []
    for k in expected_keys:
        try:
            x = float(obj[k])
        except (TypeError, ValueError):
            raise OracleParseError(f"value for {k!r} is not a number: {obj[k]!r}") from None
        if not np.isfinite(x):
            raise OracleParseError(f"value for {k!r} is not finite")
        if x < 0:
            raise OracleParseError(f"negative probability {x} for {k!r}")
        vals.append(x)
    p = np.array(vals)
    total = p.sum()
    if not SUM_BAND[0] <= total <= SUM_BAND[1]:
        raise OracleParseError(f"probabilities sum to {total:.4g}, outside {SUM_BAND}")
    return p / total


def _reasoning_of(raw: str) -> str:
    try:
        obj = extract_json_object(raw)
    except OracleParseError:
        return ""
    if isinstance(obj, Mapping):
        r = obj.get("reasoning", obj.get("reason", ""))
        return r if isinstance(r, str) else json.dumps(r)
    return ""


_SCORE_RE = re.compile(r'correctness_score"?\s*[:=]\s*"?([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)')


def parse_soundness(raw: str) -> float:
    """Extract ``correctness_score`` from a scorer reply and range-check it."""
    score = None
    try:
        obj = extract_json_object(raw)
        if isinstance(obj, Mapping) and "correctness_score" in obj:
            score = float(obj["correctness_score"])
    except (OracleParseError, TypeError, ValueError):
        pass
    if score is None:
        m = _SCORE_RE.search(str(raw))
        if not m:
            raise OracleParseError("reply has no correctness_score")
        score = float(m.group(1))
    if not 0.0 <= score <= 1.0:
        raise OracleParseError(f"correctness_score {score} is outside [0, 1]")
    return score


def render_template(template: str, **values) -> str:
    """Fill ``{name}`` placeholders, leaving every other brace untouched.

    Prompt templates contain literal JSON examples, so :meth:`str.format`
    cannot be used directly.
    """
    def sub(m):
        key = m.group(1)
        return str(values[key]) if key in values else m.group(0)
    return re.sub(r"\{([A-Za-z_][A-Za-z0-9_]*)\}", sub, template)


BUILTIN_TEMPLATES = (
    "belief_realtor", "belief_advertising", "soundness",
    "generate_realtor", "generate_advertising",
)


def load_template(name_or_path: str) -> str:
    """Return template text from a file path or a bundled template name."""
    p = Path(name_or_path)
    if p.is_file():
        return p.read_text(encoding="utf-8")
    if name_or_path in BUILTIN_TEMPLATES:
        return resources.files("framecraft").joinpath("templates", f"{name_or_path}.txt").read_text(encoding="utf-8")
    raise ValidationError(f"template {name_or_path!r} is neither a file nor one of {BUILTIN_TEMPLATES}")


# --------------------------------------------------------------------------
# Perturbation
# --------------------------------------------------------------------------

def perturb_belief(belief, epsilon: float, seed: int) -> np.ndarray:
    """Move ``belief`` by a random amount of at most ``epsilon`` in l1.

    A point drawn uniformly from the l1 ball is added, the sum is projected
    back onto the simplex, and the step is shortened if the projection
    pushed it past ``epsilon``.  Same inputs, same output.
    """
    if epsilon < 0:
        raise ValidationError("epsilon must be nonnegative")
    b = as_belief(belief)
    if epsilon == 0:
        return b
    rng = np.random.default_rng(seed)
    out = project_to_simplex(b + sample_l1_ball(b.size, epsilon, rng))
    dist = np.abs(out - b).sum()
    if dist > epsilon:
        out = b + (out - b) * (epsilon / dist)
        out = np.clip(out, 0.0, None)
        out /= out.sum()
    return out


def derived_seed(seed: int, key: str) -> int:
    digest = hashlib.sha256(f"{seed}\x00{key}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------

class TableOracle:
    """Lookup of beliefs by framing id."""

    kind = "table"

    def __init__(self, table: Mapping[str, Sequence[float]]):
        self.table = {str(k): as_belief(v) for k, v in table.items()}

    def query(self, framing: Framing, context: str = "") -> OracleResponse:
        try:
            b = self.table[framing.id]
        except KeyError:
            raise OracleLookupError(f"no table entry for framing {framing.id!r}") from None
        return OracleResponse(b, "", "table")


class NoisyOracle:
    """An inner oracle whose answers are perturbed by at most ``epsilon``."""

    kind = "noisy"

    def __init__(self, inner, epsilon: float, seed: int = 0):
        if epsilon < 0:
            raise ValidationError("epsilon must be nonnegative")
        self.inner = inner
        self.epsilon = float(epsilon)
        self.seed = int(seed)

    def query(self, framing: Framing, context: str = "") -> OracleResponse:
        base = self.inner.query(framing, context)
        b = perturb_belief(base.belief, self.epsilon, derived_seed(self.seed, framing.id))
        return OracleResponse(b, base.reasoning, "noisy")


class LLMOracle:
    """Belief elicitation through a chat-completion endpoint.

    Parameters
    ----------
    client : ChatClient
    template : str
        Prompt text with ``{context}``, ``{framing}`` and ``{state_keys}``
        placeholders.
    state_keys : sequence of str
        Keys the reply must contain, in instance state order.
    repeats : int
        Number of draws averaged per query.
    """

    kind = "llm"

    def __init__(self, client, template: str, state_keys: Sequence[str], repeats: int = 1):
        if repeats < 1:
            raise ValidationError("repeats must be at least 1")
        self.client = client
        self.template = template
        self.state_keys = list(state_keys)
        self.repeats = int(repeats)

    def prompt(self, framing: Framing, context: str) -> str:
        return render_template(self.template, context=context, framing=framing.text,
                               state_keys=", ".join(self.state_keys))

    def query(self, framing: Framing, context: str = "") -> OracleResponse:
        messages = [{"role": "user", "content": self.prompt(framing, context)}]
        beliefs, notes = [], []
        for k in range(self.repeats):
            raw = self.client.complete(messages, draw=k if self.repeats > 1 else 0)
            beliefs.append(parse_probability_vector(raw, self.state_keys))
            notes.append(_reasoning_of(raw))
        mean = np.mean(beliefs, axis=0)
        return OracleResponse(mean / mean.sum(), notes[0] if len(notes) == 1 else "\n---\n".join(notes), "llm")


def query_belief(oracle, framing: Framing, context: str = "") -> OracleResponse:
    """Ask ``oracle`` for the belief induced by ``framing``."""
    return oracle.query(framing, context)


# --------------------------------------------------------------------------
# Soundness scorers
# --------------------------------------------------------------------------

class ScriptedScorer:
    """Substring rules: the lowest score among matching rules, else 1.

    Matching is case-insensitive.
    """

    def __init__(self, rules: Sequence[tuple[str, float]] = ()):
        self.rules = [(str(s), float(v)) for s, v in rules]
        for s, v in self.rules:
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"rule score for {s!r} outside [0, 1]")

    def score(self, framing: Framing, context: str = "") -> float:
        text = framing.text.lower()
        hits = [v for s, v in self.rules if s.lower() in text]
        return min(hits) if hits else 1.0


class LLMScorer:
    """Soundness check through a chat-completion endpoint."""

    def __init__(self, client, template: str):
        self.client = client
        self.template = template

    def score(self, framing: Framing, context: str = "") -> float:
        prompt = render_template(self.template, context=context, framing=framing.text)
        return parse_soundness(self.client.complete([{"role": "user", "content": prompt}]))


def score_soundness(scorer, framing: Framing, context: str = "") -> float:
    """Score in [0, 1] for how faithful ``framing`` is to ``context``."""
    s = float(scorer.score(framing, context))
    if not 0.0 <= s <= 1.0:
        raise OracleParseError(f"scorer returned {s}, outside [0, 1]")
    return s


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------

class ScriptedGenerator:
    """Hands out a fixed list of texts in order."""

    def __init__(self, texts: Sequence[str], prefix: str = "g"):
        self.texts = list(texts)
        self.prefix = prefix

    def generate(self, context: str, history: Sequence) -> Framing:
        k = len(history)
        if k >= len(self.texts):
            raise GeneratorExhausted(f"scripted generator has only {len(self.texts)} framings")
        return Framing(f"{self.prefix}{k + 1}", self.texts[k])


class LLMGenerator:
    """Framing proposals from a chat model that sees all earlier feedback.

    The conversation starts with the rendered template; each earlier
    iteration adds the proposed text as an assistant turn followed by its
    feedback as a user turn.
    """

    def __init__(self, client, template: str, response_keys: Sequence[str] = ("framing",), prefix: str = "gen"):
        self.client = client
        self.template = template
        self.response_keys = list(response_keys)
        self.prefix = prefix

    def messages(self, context: str, history: Sequence) -> list[dict]:
        msgs = [{"role": "user", "content": render_template(self.template, context=context)}]
        for rec in history:
            msgs.append({"role": "assistant", "content": rec.framing.text})
            msgs.append({"role": "user", "content": rec.feedback})
        return msgs

    def generate(self, context: str, history: Sequence) -> Framing:
        raw = self.client.complete(self.messages(context, history))
        text = None
        try:
            obj = extract_json_object(raw)
            if isinstance(obj, Mapping):
                parts = [str(obj[k]) for k in self.response_keys if k in obj]
                if parts:
                    text = "\n".join(parts)
        except OracleParseError:
            pass
        if text is None:
            text = str(raw).strip()
        if not text:
            raise OracleParseError("generator returned an empty framing")
        return Framing(f"{self.prefix}{len(history) + 1}", text)


def generate_framing(generator, context: str, history: Sequence) -> Framing:
    """Next framing proposal given everything tried so far."""
    return generator.generate(context, history)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass
class OracleConfig:
    """Declarative description of an oracle, usually read from JSON.

    ``kind`` selects which other fields are needed: ``table`` for the
    table kind; ``endpoint``, ``model`` and ``template`` for llm; ``epsilon``
    and ``inner`` for noisy.
    """

    kind: str
    table: dict | None = None
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.7
    timeout: float = 60.0
    retries: int = 3
    template: str | None = None
    state_keys: list | None = None
    repeats: int = 1
    epsilon: float = 0.0
    seed: int = 0
    inner: "OracleConfig | None" = None

    def __post_init__(self):
        if self.kind not in ("table", "llm", "noisy"):
            raise ValidationError(f"unknown oracle kind {self.kind!r}")
        if self.kind == "table" and self.table is None:
            raise ValidationError("table oracle needs a 'table' mapping")
        if self.kind == "llm":
            missing = [k for k in ("endpoint", "model", "template") if getattr(self, k) is None]
            if missing:
                raise ValidationError(f"llm oracle config lacks {missing}")
        if self.kind == "noisy":
            if self.inner is None:
                raise ValidationError("noisy oracle needs an 'inner' oracle")
            if self.epsilon < 0:
                raise ValidationError("epsilon must be nonnegative")

    @classmethod
    def from_dict(cls, d: Mapping) -> "OracleConfig":
        d = dict(d)
        if isinstance(d.get("inner"), Mapping):
            d["inner"] = cls.from_dict(d["inner"])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown oracle config fields {sorted(extra)}")
        return cls(**d)


def _client_from(cfg: Mapping | OracleConfig, transport=None):
    from .llm import ChatClient

    get = cfg.get if isinstance(cfg, Mapping) else (lambda k, default=None: getattr(cfg, k, default))
    return ChatClient(get("endpoint"), get("model"), temperature=get("temperature", 0.7),
                      timeout=get("timeout", 60.0), retries=get("retries", 3), transport=transport)


def make_oracle(config: OracleConfig | Mapping, state_keys: Sequence[str] | None = None, transport=None):
    """Instantiate an oracle from its configuration."""
    cfg = config if isinstance(config, OracleConfig) else OracleConfig.from_dict(config)
    if cfg.kind == "table":
        return TableOracle(cfg.table)
    if cfg.kind == "noisy":
        return NoisyOracle(make_oracle(cfg.inner, state_keys, transport), cfg.epsilon, cfg.seed)
    keys = cfg.state_keys or state_keys
    if not keys:
        raise ValidationError("llm oracle needs state_keys (config or instance states)")
    return LLMOracle(_client_from(cfg, transport), load_template(cfg.template), keys, cfg.repeats)


def make_scorer(config: Mapping, transport=None):
    kind = config.get("kind")
    if kind == "scripted":
        return ScriptedScorer([tuple(r) for r in config.get("rules", [])])
    if kind == "llm":
        return LLMScorer(_client_from(config, transport), load_template(config.get("template", "soundness")))
    raise ValidationError(f"unknown scorer kind {kind!r}")


def make_generator(config: Mapping, transport=None):
    kind = config.get("kind")
    if kind == "scripted":
        return ScriptedGenerator(config["framings"])
    if kind == "llm":
        return LLMGenerator(_client_from(config, transport), load_template(config["template"]),
                            config.get("response_keys", ["framing"]))
    raise ValidationError(f"unknown generator kind {kind!r}")
