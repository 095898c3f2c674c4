import csv
import io

import numpy as np
import pytest

from framecraft.core import ValidationError
from framecraft.joint_design import solve_optimal_scheme
from framecraft.framing_only import fixed_scheme_utility
from framecraft.optimizer import (
    IterationRecord,
    OptimizerConfig,
    OptimizerError,
    build_feedback,
    hill_climb,
)
from framecraft.oracle import Framing, OracleResponse, ScriptedGenerator, ScriptedScorer, TableOracle
from framecraft.presets import get_preset


@pytest.fixture
def prosecutor():
    return get_preset("prosecutor")


def run(preset, beliefs, rules=(), mode="joint", **cfg):
    texts = [f"framing number {i}" for i in range(1, len(beliefs) + 1)]
    table = {f"g{i}": b for i, b in enumerate(beliefs, 1)}
    scheme = preset.scheme if mode == "framing_only" else None
    config = OptimizerConfig(max_iterations=cfg.pop("max_iterations", len(beliefs)), mode=mode, **cfg)
    return hill_climb(preset.instance, TableOracle(table), ScriptedScorer(rules), ScriptedGenerator(texts),
                      config, scheme, context="ctx")


def test_monotone_run_picks_last(prosecutor):
    best, trace = run(prosecutor, [[0.9, 0.1], [0.7, 0.3], [0.5, 0.5]])
    assert len(trace) == 3
    scores = [r.final_score for r in trace.records]
    assert scores == sorted(scores) and scores[0] < scores[-1]
    assert best.iteration == 3


def test_best_so_far_not_last(prosecutor):
    best, trace = run(prosecutor, [[0.9, 0.1], [0.5, 0.5], [0.8, 0.2], [0.95, 0.05]])
    assert best.iteration == 2
    assert best.final_score == max(r.final_score for r in trace.records)
    assert trace.records[-1].final_score < best.final_score


def test_ties_keep_earliest(prosecutor):
    best, _ = run(prosecutor, [[0.5, 0.5], [0.4, 0.6], [0.5, 0.5]])
    assert best.iteration == 1


def test_soundness_gates_utility(prosecutor):
    best, trace = run(prosecutor, [[0.5, 0.5], [0.4, 0.6]], rules=[("framing", 0.0)])
    assert all(r.final_score == 0.0 for r in trace.records)
    assert all(r.utility > 0 for r in trace.records)
    assert best.final_score == 0.0 and best.iteration == 1


def test_final_score_is_product(prosecutor):
    _, trace = run(prosecutor, [[0.6, 0.4], [0.5, 0.5]], rules=[("number 2", 0.5)])
    for r in trace.records:
        assert r.final_score == r.utility * r.soundness
    assert trace.records[1].soundness == 0.5


def test_record_invariant():
    with pytest.raises(ValidationError):
        IterationRecord(1, Framing("f", "t"), np.array([1.0]), "", 0.5, 0.5, 0.5)


def test_joint_mode_utilities_reverify(prosecutor):
    _, trace = run(prosecutor, [[0.9, 0.1], [0.6, 0.4], [0.5, 0.5]], eps_obedience=0.0)
    for r in trace.records:
        assert r.utility == solve_optimal_scheme(prosecutor.instance, r.belief).sender_value
        assert r.scheme.signals == prosecutor.instance.actions


def test_framing_only_mode_keeps_scheme(prosecutor):
    best, trace = run(prosecutor, [[0.67, 0.33], [2 / 3, 1 / 3]], mode="framing_only")
    for r in trace.records:
        assert r.scheme is prosecutor.scheme
        assert r.utility == fixed_scheme_utility(prosecutor.instance, prosecutor.scheme, r.belief)
    assert best.iteration == 2 and best.utility == pytest.approx(0.665)


def test_mode_preconditions(prosecutor):
    args = (prosecutor.instance, TableOracle({}), ScriptedScorer(), ScriptedGenerator(["x"]))
    with pytest.raises(ValidationError, match="fixed scheme"):
        hill_climb(*args, OptimizerConfig(mode="framing_only"))
    with pytest.raises(ValidationError, match="joint"):
        hill_climb(*args, OptimizerConfig(mode="joint"), prosecutor.scheme)
    assert OptimizerConfig(mode="fixed").mode == "framing_only"
    with pytest.raises(ValidationError):
        OptimizerConfig(max_iterations=0)


def test_failure_keeps_partial_trace(prosecutor):
    # the generator runs dry at iteration 3
    with pytest.raises(OptimizerError, match="generator") as info:
        run(prosecutor, [[0.5, 0.5], [0.6, 0.4]], max_iterations=5)
    assert len(info.value.trace) == 2
    assert "iteration 3" in info.value.trace.stopped


def test_oracle_failure(prosecutor):
    config = OptimizerConfig(max_iterations=2)
    with pytest.raises(OptimizerError, match="oracle") as info:
        hill_climb(prosecutor.instance, TableOracle({"g1": [0.5, 0.5]}), ScriptedScorer(),
                   ScriptedGenerator(["a", "b"]), config)
    assert len(info.value.trace) == 1
    assert isinstance(info.value.__cause__, KeyError)


def test_plateau_stops_early(prosecutor):
    best, trace = run(prosecutor, [[0.5, 0.5], [0.9, 0.1], [0.9, 0.1], [0.4, 0.6]], plateau_window=2)
    assert len(trace) == 3 and trace.stopped.startswith("plateau")
    assert best.iteration == 1


def test_feedback_contents(prosecutor):
    rec = IterationRecord(4, Framing("g4", "text"), np.array([0.25, 0.75]), "line one\nline two",
                          1.0, 0.4, 0.4)
    fb = build_feedback(rec, prosecutor.instance.states)
    lines = fb.splitlines()
    assert "final_score: 0.4" in lines
    assert "correctness_score: 1.0" in lines and "utility: 0.4" in lines
    assert "prior_generated: {innocent: 0.25, guilty: 0.75}" in lines
    assert "<<<\nline one\nline two\n>>>" in fb
    assert fb == build_feedback(rec, prosecutor.instance.states)


def test_feedback_stored_and_passed_on(prosecutor):
    _, trace = run(prosecutor, [[0.5, 0.5], [0.6, 0.4]])
    for r in trace.records:
        assert r.feedback == build_feedback(r, prosecutor.instance.states)


def test_trace_is_bit_identical_across_runs(prosecutor):
    beliefs = [[0.9, 0.1], [0.55, 0.45], [0.5, 0.5], [0.7, 0.3]]
    a = run(prosecutor, beliefs, rules=[("number 3", 0.5)])[1]
    b = run(prosecutor, beliefs, rules=[("number 3", 0.5)])[1]
    assert a.to_json() == b.to_json()
    assert a.csv_rows() == b.csv_rows()


def test_trace_exports(prosecutor):
    best, trace = run(prosecutor, [[0.9, 0.1], [0.5, 0.5]])
    rows = trace.csv_rows()
    assert rows[0] == ["iteration", "soundness", "utility", "final_score"]
    assert len(rows) == 3
    d = trace.to_dict()
    assert d["best_iteration"] == best.iteration
    assert d["verified_utility"] == best.utility
    assert d["records"][1]["belief"] == {"innocent": 0.5, "guilty": 0.5}
    assert d["normalization"]["sender_scale"] == 1.0


class DriftingOracle:
    """Belief moves a little on every call, like a sampled model."""

    def __init__(self):
        self.calls = 0

    def query(self, framing, context=""):
        self.calls += 1
        g = min(0.45 + 0.1 * self.calls, 1.0)
        return OracleResponse([1 - g, g], "drift")


def test_reverification_reports_second_draw(prosecutor):
    oracle = DriftingOracle()
    best, trace = hill_climb(prosecutor.instance, oracle, ScriptedScorer(), ScriptedGenerator(["a", "b"]),
                             OptimizerConfig(max_iterations=1))
    assert oracle.calls == 2
    assert trace.verified_belief.tolist() != best.belief.tolist()
    assert trace.verified_utility is not None
