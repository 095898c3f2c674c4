"""Hill-climbing search over textual framings.

Each iteration asks a generator for a new framing, scores its soundness,
asks the oracle which belief it induces, evaluates the sender's value at
that belief, and feeds all of it back to the generator.  The value is
either ``U*`` (scheme chosen jointly with the framing) or ``U_pi`` for a
fixed scheme.  The iterate with the highest ``utility * soundness`` wins;
later iterates do not replace it unless they are strictly better.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import FramecraftError, Instance, NormalizationRecord, SignalingScheme, ValidationError
from .framing_only import fixed_scheme_utility
from .joint_design import solve_optimal_scheme
from .oracle import Framing, generate_framing, query_belief, score_soundness

MODES = ("joint", "framing_only")
_MODE_ALIASES = {"fixed": "framing_only", "framing-only": "framing_only"}


class OptimizerError(FramecraftError):
    """A generator, oracle or scorer failed mid-run.

    ``trace`` holds every iteration completed before the failure and
    ``__cause__`` the original exception.
    """

    def __init__(self, message: str, trace: "FramingTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class IterationRecord:
    iteration: int
    framing: Framing
    belief: np.ndarray
    reasoning: str
    soundness: float
    utility: float
    final_score: float
    feedback: str = ""
    scheme: SignalingScheme | None = None

    def __post_init__(self):
        if abs(self.final_score - self.utility * self.soundness) > 1e-12:
            raise ValidationError("final_score must equal utility * soundness")


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of :func:`hill_climb`.

    ``plateau_window`` stops the run once that many consecutive iterations
    fail to beat the best final score; ``None`` runs the full budget.
    ``seed`` is not consumed by the loop itself (randomness lives in the
    oracle configuration); it is carried into the trace so that runs can
    be labelled.
    """

    max_iterations: int = 10
    mode: str = "joint"
    eps_obedience: float = 0.0
    plateau_window: int | None = None
    seed: int = 0

    def __post_init__(self):
        mode = _MODE_ALIASES.get(self.mode, self.mode)
        if mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if self.plateau_window is not None and self.plateau_window < 1:
            raise ValidationError("plateau_window must be positive")
        if self.eps_obedience < 0:
            raise ValidationError("eps_obedience must be nonnegative")


@dataclass
class FramingTrace:
    """All iteration records of one run, plus the end-of-run re-check.

    ``verified_belief`` and ``verified_utility`` come from querying the
    oracle once more with the winning framing.  With a deterministic
    oracle they equal the recorded values.
    """

    states: tuple
    normalization: NormalizationRecord | None = None
    records: list = field(default_factory=list)
    best_index: int | None = None
    verified_belief: np.ndarray | None = None
    verified_utility: float | None = None
    seed: int = 0
    stopped: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def best(self) -> IterationRecord | None:
        return None if self.best_index is None else self.records[self.best_index]

    def csv_rows(self) -> list[list]:
        rows = [["iteration", "soundness", "utility", "final_score"]]
        rows += [[r.iteration, repr(r.soundness), repr(r.utility), repr(r.final_score)] for r in self.records]
        return rows

    def to_dict(self) -> dict:
        def raw(x):
            if self.normalization is None or x is None:
                return None
            return float(self.normalization.sender_to_raw(x))

        recs = []
        for r in self.records:
            recs.append({
                "iteration": r.iteration,
                "framing_id": r.framing.id,
                "framing": r.framing.text,
                "belief": dict(zip(self.states, r.belief.tolist())),
                "reasoning": r.reasoning,
                "soundness": r.soundness,
                "utility": r.utility,
                "utility_raw": raw(r.utility),
                "final_score": r.final_score,
                "feedback": r.feedback,
                "scheme": None if r.scheme is None else {
                    "signals": list(r.scheme.signals), "probs": r.scheme.probs.tolist()},
            })
        return {
            "seed": self.seed,
            "stopped": self.stopped,
            "best_iteration": None if self.best is None else self.best.iteration,
            "verified_belief": None if self.verified_belief is None else self.verified_belief.tolist(),
            "verified_utility": self.verified_utility,
            "verified_utility_raw": raw(self.verified_utility),
            "normalization": None if self.normalization is None else self.normalization.as_dict(),
            "records": recs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


def build_feedback(record: IterationRecord, states: Sequence[str] | None = None) -> str:
    """Text returned to the generator after an iteration.

    Numbers are written with ``repr`` so that equal records give equal
    strings.  The oracle's reasoning is copied unchanged between marker
    lines, newlines included.
    """
    keys = list(states) if states is not None else [f"state_{i}" for i in range(len(record.belief))]
    belief = ", ".join(f"{k}: {float(p)!r}" for k, p in zip(keys, record.belief))
    return "\n".join([
        f"iteration: {record.iteration}",
        f"correctness_score: {record.soundness!r}",
        f"prior_generated: {{{belief}}}",
        "reasoning:",
        "<<<",
        record.reasoning,
        ">>>",
        f"utility: {record.utility!r}",
        f"final_score: {record.final_score!r}",
    ])


def _evaluate(instance: Instance, belief, config: OptimizerConfig, scheme: SignalingScheme | None):
    if config.mode == "joint":
        sol = solve_optimal_scheme(instance, belief, config.eps_obedience)
        return sol.sender_value, sol.scheme
    return fixed_scheme_utility(instance, scheme, belief), scheme


def hill_climb(instance: Instance, oracle, scorer, generator, config: OptimizerConfig | None = None,
               scheme: SignalingScheme | None = None, context: str = ""):
    """Run the generate, score, estimate, solve loop.

    Parameters
    ----------
    instance : Instance
    oracle, scorer, generator
        Objects from :mod:`framecraft.oracle` (or anything with the same
        ``query`` / ``score`` / ``generate`` methods).
    config : OptimizerConfig, optional
    scheme : SignalingScheme, optional
        Required in ``framing_only`` mode and rejected in ``joint`` mode.
    context : str
        Passed to every oracle, scorer and generator call.

    Returns
    -------
    best : IterationRecord
        Highest final score; the earliest one if several tie.
    trace : FramingTrace

    Raises
    ------
    OptimizerError
        If any collaborator fails.  The partial trace is attached.
    """
    config = config or OptimizerConfig()
    if config.mode == "joint" and scheme is not None:
        raise ValidationError("joint mode chooses the scheme itself; do not pass one")
    if config.mode == "framing_only":
        if scheme is None:
            raise ValidationError("framing_only mode needs a fixed scheme")
        if scheme.n_states != instance.n_states:
            raise ValidationError("scheme and instance disagree on the number of states")

    trace = FramingTrace(instance.states, instance.normalization, seed=config.seed)
    best_score = -np.inf
    since_best = 0
    for it in range(1, config.max_iterations + 1):
        stage = "generator"
        try:
            framing = generate_framing(generator, context, trace.records)
            stage = "scorer"
            soundness = score_soundness(scorer, framing, context)
            stage = "oracle"
            resp = query_belief(oracle, framing, context)
            stage = "solver"
            utility, used = _evaluate(instance, resp.belief, config, scheme)
        except Exception as exc:
            trace.stopped = f"{stage} failed at iteration {it}"
            raise OptimizerError(f"{stage} failed at iteration {it}: {exc}", trace) from exc
        utility = float(utility)
        rec = IterationRecord(it, framing, resp.belief, resp.reasoning, soundness, utility,
                              utility * soundness, scheme=used)
        rec = replace(rec, feedback=build_feedback(rec, instance.states))
        trace.records.append(rec)
        if rec.final_score > best_score:
            best_score = rec.final_score
            trace.best_index = len(trace.records) - 1
            since_best = 0
        else:
            since_best += 1
            if config.plateau_window is not None and since_best >= config.plateau_window:
                trace.stopped = f"plateau after iteration {it}"
                break
    else:
        trace.stopped = "iteration budget used"

    best = trace.best
    try:
        again = query_belief(oracle, best.framing, context)
        trace.verified_belief = again.belief
        trace.verified_utility = float(_evaluate(instance, again.belief, config, scheme)[0])
    except Exception as exc:
        raise OptimizerError(f"re-verification of the best framing failed: {exc}", trace) from exc
    return best, trace
