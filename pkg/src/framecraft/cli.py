"""``framecraft`` command line.

Every subcommand reads its inputs, calls one library function and prints
the result.  Instances may be given as a JSON path or as the name of a
bundled preset.  Sender values are printed on both the normalized scale
used internally and the raw scale of the input file, together with the
normalization record that links them.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bsg import (
    drop_null_signals,
    reduce_bsg_to_framing,
    reduce_framing_to_bsg,
    solve_bsg_exact,
)
from .core import FramecraftError, Instance, validate_instance
from .fileio import (
    bsg_to_dict,
    csv_text,
    instance_to_dict,
    load_bsg,
    load_framings,
    load_half_spaces,
    load_instance,
    load_oracle_config,
    load_scheme,
    parse_vector,
    read_json,
    scheme_to_dict,
    solution_to_dict,
    write_csv,
    write_json,
)
from .framing_only import DiscreteFramingSpace, enumerate_framings, find_discontinuity
from .joint_design import (
    bi_criteria_unconstrained,
    continuity_probe,
    joint_optimize_grid,
    qptas,
    recommendation_value,
    robustify_scheme,
    solve_optimal_scheme,
    state_independent_optimal,
    sweep_utility,
)
from .optimizer import OptimizerConfig, hill_climb
from .oracle import make_generator, make_oracle, make_scorer
from .presets import PRESETS, get_preset


# -- input helpers -----------------------------------------------------------

def _instance(arg: str) -> Instance:
    p = Path(arg)
    if p.is_file():
        return load_instance(p)
    if arg in PRESETS:
        return get_preset(arg).instance
    raise FramecraftError(f"{arg!r} is neither an instance file nor a preset ({', '.join(PRESETS)})")


def _scheme(arg: str | None, instance_arg: str | None = None):
    if arg is None:
        if instance_arg in PRESETS and get_preset(instance_arg).scheme is not None:
            return get_preset(instance_arg).scheme
        raise FramecraftError("a scheme file is required")
    if not Path(arg).is_file() and arg in PRESETS and get_preset(arg).scheme is not None:
        return get_preset(arg).scheme
    return load_scheme(arg)


def _belief_set(args, instance: Instance):
    return load_half_spaces(args.belief_set, instance.n_states) if args.belief_set else None


def _vector(text: str):
    return parse_vector(text)


# -- output helpers ------------------------------------------------------

def _scales(instance: Instance, normalized: float) -> dict:
    return {"normalized": normalized, "raw": float(instance.normalization.sender_to_raw(normalized))}


def _base(instance: Instance) -> dict:
    return {"normalization": instance.normalization.as_dict()}


def _solution(instance: Instance, sol) -> dict:
    d = solution_to_dict(instance, sol)
    d["value"] = _scales(instance, sol.sender_value)
    d.pop("value_raw")
    return d


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], (dict, list, tuple)):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    elif isinstance(obj, (list, tuple)):
        yield prefix, " ".join(repr(float(x)) if isinstance(x, float) else str(x) for x in obj)
    else:
        yield prefix, obj


def _emit(args, payload: dict) -> None:
    if args.format == "csv":
        sys.stdout.write(csv_text([["key", "value"], *_flatten(payload)]))
    else:
        sys.stdout.write(json.dumps(payload, indent=2, ensure_ascii=False, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")



# -- subcommands -----------------------------------------------------------

def cmd_validate(args):
    inst = _instance(args.instance)
    scheme = load_scheme(args.scheme) if args.scheme else None
    rep = validate_instance(inst, scheme)
    payload = _base(inst)
    payload["ok"] = rep.ok
    payload["checks"] = {c.name: {"passed": c.passed, "detail": c.detail} for c in rep.checks}
    _emit(args, payload)
    return 0 if rep.ok else 1


def cmd_solve(args):
    inst = _instance(args.instance)
    sol = solve_optimal_scheme(inst, _vector(args.belief), args.eps)
    _emit(args, {**_base(inst), **_solution(inst, sol)})
    return 0


def cmd_grid(args):
    inst = _instance(args.instance)
    sol = joint_optimize_grid(inst, _belief_set(args, inst), args.resolution, args.eps)
    _emit(args, {**_base(inst), **_solution(inst, sol)})
    return 0


def cmd_qptas(args):
    inst = _instance(args.instance)
    sol = qptas(inst, _belief_set(args, inst), args.eps)
    _emit(args, {**_base(inst), **_solution(inst, sol)})
    return 0


def cmd_bicriteria(args):
    inst = _instance(args.instance)
    sol = bi_criteria_unconstrained(inst, args.eps)
    _emit(args, {**_base(inst), **_solution(inst, sol)})
    return 0


def cmd_state_independent(args):
    inst = _instance(args.instance)
    sol = state_independent_optimal(inst)
    _emit(args, {**_base(inst), **_solution(inst, sol)})
    return 0


def cmd_sweep(args):
    inst = _instance(args.instance)
    sw = sweep_utility(inst, (_vector(args.start), _vector(args.end)), args.steps, args.eps)
    rows = sw.to_rows(inst.states)
    rows[0].append("value_raw")
    for r, v in zip(rows[1:], sw.values):
        r.append(repr(float(inst.normalization.sender_to_raw(v))))
    if args.out:
        write_csv(args.out, rows)
        _emit(args, {**_base(inst), "rows": len(rows) - 1, "out": str(args.out)})
    else:
        sys.stdout.write(csv_text(rows))
    return 0


def cmd_discontinuity(args):
    inst = _instance(args.instance)
    scheme = _scheme(args.scheme, args.instance)
    rep = find_discontinuity(inst, scheme)
    payload = _base(inst)
    if rep is None:
        payload["found"] = False
    else:
        payload.update({
            "found": True,
            "indifference_belief": dict(zip(inst.states, rep.indifference_belief.tolist())),
            "plus_belief": rep.plus_belief.tolist(),
            "minus_belief": rep.minus_belief.tolist(),
            "epsilon": rep.epsilon,
            "gap": {"normalized": rep.gap,
                    "raw": rep.gap * inst.normalization.sender_scale},
            "utility_plus": _scales(inst, rep.utility_plus),
            "utility_minus": _scales(inst, rep.utility_minus),
            "signal": rep.signal,
            "actions": list(rep.actions),
            "states": list(rep.states),
        })
    _emit(args, payload)
    return 0


def cmd_robustify(args):
    inst = _instance(args.instance)
    mu = _vector(args.belief)
    if args.scheme:
        scheme = load_scheme(args.scheme)
    else:
        scheme = solve_optimal_scheme(inst, mu).scheme
    rob = robustify_scheme(inst, mu, scheme, args.eps)
    before, after = recommendation_value(inst, scheme), recommendation_value(inst, rob.scheme)
    payload = {**_base(inst),
               "scheme": scheme_to_dict(rob.scheme),
               "p0": rob.p0, "margin": rob.margin, "delta": rob.delta, "y": rob.y,
               "chi": rob.chi.tolist(), "eps": rob.eps,
               "value_before": _scales(inst, before), "value_after": _scales(inst, after),
               "loss_bound": rob.loss_bound}
    if args.out:
        write_json(args.out, scheme_to_dict(rob.scheme))
    _emit(args, payload)
    return 0


def cmd_reduce(args):
    if args.direction == "to-bsg":
        inst = _instance(args.source)
        scheme = drop_null_signals(inst, _scheme(args.scheme, args.source))
        game = reduce_framing_to_bsg(inst, scheme)
        payload = {**_base(inst), "game": bsg_to_dict(game)}
        if args.solve:
            x, val = solve_bsg_exact(game, args.floor)
            payload["leader_strategy"] = x.tolist()
            payload["value"] = _scales(inst, val)
        if args.out:
            write_json(args.out, bsg_to_dict(game))
        _emit(args, payload)
        return 0
    game = load_bsg(args.source)
    red = reduce_bsg_to_framing(game, args.eps)
    payload = {**_base(red.instance), "instance": instance_to_dict(red.instance),
               "scheme": scheme_to_dict(red.scheme),
               "constants": {"L": red.L, "N": red.N, "K": red.K, "M": red.M, "eps": red.eps}}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "instance.json", instance_to_dict(red.instance))
        write_json(out / "scheme.json", scheme_to_dict(red.scheme))
    _emit(args, payload)
    return 0


def cmd_enumerate(args):
    inst = _instance(args.instance)
    scheme = _scheme(args.scheme, args.instance)
    oracle = make_oracle(load_oracle_config(args.oracle), inst.states)
    space = DiscreteFramingSpace(load_framings(args.space), oracle)
    res = enumerate_framings(space, inst, scheme, _context(args, inst), args.jobs)
    rows = res.to_rows(inst.states)
    if args.out:
        write_csv(args.out, rows)
    if args.format == "csv" and not args.out:
        sys.stdout.write(csv_text(rows))
    else:
        _emit(args, {**_base(inst), "best": res.best.id, "utility": _scales(inst, res.utility),
                     "evaluated": len(res.table)})
    return 0


def _context(args, inst: Instance) -> str:
    if getattr(args, "context", None):
        return Path(args.context).read_text(encoding="utf-8")
    return (f"Possible states: {', '.join(inst.states)}.\n"
            f"Possible actions: {', '.join(inst.actions)}.")


def cmd_optimize(args):
    inst = _instance(args.instance)
    mode = "joint" if args.mode == "joint" else "framing_only"
    scheme = _scheme(args.scheme, args.instance) if mode == "framing_only" else None
    oracle = make_oracle(load_oracle_config(args.oracle), inst.states)
    config = OptimizerConfig(max_iterations=args.iters, mode=mode, eps_obedience=args.eps,
                             plateau_window=args.plateau, seed=args.seed)
    best, trace = hill_climb(inst, oracle, make_scorer(read_json(args.scorer)),
                             make_generator(read_json(args.generator)), config, scheme, _context(args, inst))
    if args.out:
        write_csv(args.out, trace.csv_rows())
    if args.trace:
        Path(args.trace).write_text(trace.to_json() + "\n", encoding="utf-8")
    payload = {**_base(inst), "best_iteration": best.iteration, "best_framing": best.framing.text,
               "belief": dict(zip(inst.states, best.belief.tolist())), "soundness": best.soundness,
               "utility": _scales(inst, best.utility), "final_score": best.final_score,
               "verified_utility": _scales(inst, trace.verified_utility), "iterations": len(trace),
               "stopped": trace.stopped}
    if trace.verified_utility != best.utility:
        payload["note"] = "re-querying the oracle gave a different utility for the best framing"
    _emit(args, payload)
    return 0


def cmd_preset(args):
    pre = get_preset(args.name)
    out = Path(args.dir)
    out.mkdir(parents=True, exist_ok=True)
    written = ["instance.json"]
    write_json(out / "instance.json", pre.raw)
    if pre.scheme is not None:
        write_json(out / "scheme.json", scheme_to_dict(pre.scheme))
        written.append("scheme.json")
    if pre.oracle_table is not None:
        write_json(out / "oracle.json", {"kind": "table", "table": pre.oracle_table})
        written.append("oracle.json")
    if pre.framings is not None:
        write_json(out / "framings.json", [{"id": k, "text": v} for k, v in pre.framings.items()])
        written.append("framings.json")
    _emit(args, {**_base(pre.instance), "preset": pre.name, "note": pre.note,
                 "files": [str(out / f) for f in written]})
    return 0


def cmd_probe(args):
    inst = _instance(args.instance)
    around = _vector(args.around) if args.around else None
    rep = continuity_probe(inst, args.samples, args.p0, args.seed, around, args.radius)
    _emit(args, {**_base(inst), "pairs": int(rep.ratios.size), "bound": rep.bound, "max_ratio": rep.max_ratio,
                 "violations": rep.violations, "p0": rep.p0, "margin": rep.margin})
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def options(suppress):
        # Subcommands accept the same options but must not reset values
        # given before the subcommand name, hence SUPPRESS there.
        g = argparse.ArgumentParser(add_help=False)
        dflt = (lambda x: argparse.SUPPRESS) if suppress else (lambda x: x)
        g.add_argument("--format", choices=("structured-text", "csv"), default=dflt("structured-text"),
                       help="output format (default: structured-text, i.e. JSON)")
        g.add_argument("--seed", type=int, default=dflt(0), help="seed for randomized commands (default 0)")
        g.add_argument("--jobs", type=int, default=dflt(4), help="worker threads where supported (default 4)")
        return g

    common = options(True)
    p = argparse.ArgumentParser(prog="framecraft", description="Information design with framing.",
                                parents=[options(False)])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    inst_help = "instance JSON file or preset name"

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.set_defaults(func=func)
        return sp

    sp = add("validate", cmd_validate, "check regularity conditions")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("--scheme")

    sp = add("solve", cmd_solve, "optimal scheme at one receiver belief")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("--belief", required=True, help="e.g. 0.5,0.5 or 2/3,1/3")
    sp.add_argument("--eps", type=float, default=0.0)

    sp = add("grid", cmd_grid, "best belief on a lattice")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("--resolution", type=int, default=100)
    sp.add_argument("--belief-set", help="half-space text file")
    sp.add_argument("--eps", type=float, default=0.0)

    sp = add("qptas", cmd_qptas, "lattice search with relaxed obedience")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--belief-set", help="half-space text file")

    sp = add("bicriteria", cmd_bicriteria, "closed-form near-optimal, near-obedient solution")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("--eps", type=float, required=True)

    sp = add("state-independent", cmd_state_independent, "exact optimum for state-independent sender utility")
    sp.add_argument("instance", help=inst_help)

    sp = add("sweep", cmd_sweep, "optimal value along a belief segment")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("--from", dest="start", required=True)
    sp.add_argument("--to", dest="end", required=True)
    sp.add_argument("--steps", type=int, default=101)
    sp.add_argument("--eps", type=float, default=0.0)
    sp.add_argument("--out")

    sp = add("discontinuity", cmd_discontinuity, "locate a jump of the fixed-scheme utility")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("scheme", nargs="?", help="scheme JSON (defaults to the preset's scheme)")

    sp = add("robustify", cmd_robustify, "make a direct scheme robust to belief errors")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("--belief", required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--scheme", help="direct scheme JSON; default is the optimal scheme at --belief")
    sp.add_argument("--out")

    sp = add("reduce", cmd_reduce, "convert between framing problems and Bayesian Stackelberg games")
    sp.add_argument("direction", choices=("to-bsg", "from-bsg"))
    sp.add_argument("source", help="instance (to-bsg) or game JSON (from-bsg)")
    sp.add_argument("scheme", nargs="?", help="scheme JSON for to-bsg")
    sp.add_argument("--eps", type=float, default=0.1, help="dummy-state weight for from-bsg")
    sp.add_argument("--solve", action="store_true", help="also solve the game (to-bsg)")
    sp.add_argument("--floor", type=float, default=0.0, help="lower bound on leader probabilities")
    sp.add_argument("--out", help="game file (to-bsg) or output directory (from-bsg)")

    sp = add("enumerate", cmd_enumerate, "evaluate a finite list of framings")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("scheme", nargs="?")
    sp.add_argument("--space", required=True, help="framings JSON")
    sp.add_argument("--oracle", required=True, help="oracle config JSON")
    sp.add_argument("--context", help="text file passed to the oracle")
    sp.add_argument("--out")

    sp = add("optimize", cmd_optimize, "hill-climbing framing search")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("--mode", choices=("joint", "fixed"), default="joint")
    sp.add_argument("--scheme", help="fixed scheme JSON (mode fixed)")
    sp.add_argument("--oracle", required=True)
    sp.add_argument("--generator", required=True)
    sp.add_argument("--scorer", required=True)
    sp.add_argument("--iters", type=int, default=10)
    sp.add_argument("--plateau", type=int, default=None)
    sp.add_argument("--eps", type=float, default=0.0, help="obedience slack")
    sp.add_argument("--context", help="text file describing the setting")
    sp.add_argument("--out", help="CSV trace")
    sp.add_argument("--trace", help="JSON trace with full records")

    sp = add("preset", cmd_preset, "write a bundled instance and its companion files")
    sp.add_argument("name", choices=sorted(PRESETS))
    sp.add_argument("--dir", default=".")

    sp = add("probe", cmd_probe, "compare nearby optimal values against the Lipschitz bound")
    sp.add_argument("instance", help=inst_help)
    sp.add_argument("--samples", type=int, default=500)
    sp.add_argument("--p0", type=float, default=0.05)
    sp.add_argument("--around")
    sp.add_argument("--radius", type=float, default=0.1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FramecraftError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"framecraft {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
