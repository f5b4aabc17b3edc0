"""Pipeline command line: every stage is a subcommand with file handoffs.

Exit codes: 0 success, 1 round-trip failure, 2 property violations found,
3 replay divergence, 64 usage errors.  All outputs are deterministic given
the same inputs and seeds; reports embed seeds for reproducibility.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .automata import parse_dot, emit_dot
from .cpm import (parse_cpm, annotate, expand_tau, emit_annotated_dot,
                  parse_annotated_dot)
from .actorgen import MutationConfig, build_ir, emit_rebeca, apply_timeout_mutation
from .statespace import (explore, collapse, verify_roundtrip, emit_lts_dot,
                         parse_lts_dot, emit_collapsed_dot)
from .ltl import (check, kripke_from_annotated, property_library,
                  parse_property_file, vacuity, propositions, substitute,
                  format_formula, HOLDS)
from .learning import (FIXTURE_SULS, lstar_learn, exact_oracle,
                       random_walk_oracle, build_uds_sul)
from .testkit import TestCase, concretize, replay, read_tests, write_tests

EXIT_OK = 0
EXIT_ROUNDTRIP = 1
EXIT_VIOLATED = 2
EXIT_DIVERGED = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(path: str, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def _resolve_sul(selector: str):
    """Fixture name ('emrtd', 'uds', 'uds-patched') or 'module:callable'.

    Returns (sul, hidden machine or None); factories may return either a
    bare system or a (system, machine) pair.
    """
    if selector in FIXTURE_SULS:
        return FIXTURE_SULS[selector]()
    if selector == "uds-patched":
        return build_uds_sul(reject_wrong_key=True)
    if ":" in selector:
        module_name, attr = selector.split(":", 1)
        import importlib

        produced = getattr(importlib.import_module(module_name), attr)()
        if isinstance(produced, tuple):
            return produced
        return produced, None
    _usage_error(f"unknown system-under-learning {selector!r}; use emrtd, uds, "
                 "uds-patched or module:callable")
    raise SystemExit(EXIT_USAGE)


def _usage_error(message: str) -> bool:
    print(f"protocheck: error: {message}", file=sys.stderr)
    return True


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_learn(args) -> int:
    sul, hidden = _resolve_sul(args.sul)
    if hidden is None:
        _usage_error("learning needs a fixture (or factory) exposing its input alphabet")
        return EXIT_USAGE
    alphabet = hidden.inputs
    if args.oracle == "exact":
        oracle = lambda hyp: exact_oracle(hidden, hyp)  # noqa: E731
    else:
        oracle = lambda hyp: random_walk_oracle(  # noqa: E731
            sul, hyp, args.min_len, args.max_len, args.num_tests, args.seed)
    result = lstar_learn(sul, alphabet, oracle)
    _write(args.out, emit_dot(result.machine))
    stats = {
        "states": len(result.machine.states),
        "inputs": len(result.machine.inputs),
        "rounds": result.rounds,
        "membership_queries": result.membership_queries,
        "equivalence_queries": result.equivalence_queries,
        "proven": result.proven,
        "algorithm": args.algorithm,
        "oracle": args.oracle,
        "seed": args.seed,
    }
    print(json.dumps(stats, sort_keys=True))
    if args.stats:
        _write(args.stats, json.dumps(stats, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_annotate(args) -> int:
    machine = parse_dot(_read(args.model), complete_missing=args.complete)
    cpm = parse_cpm(_read(args.cpm))
    annotated = annotate(machine, cpm)
    for line in annotated.diagnostics:
        print(f"note: {line}", file=sys.stderr)
    _write(args.out, emit_annotated_dot(annotated))
    return EXIT_OK


def cmd_expand(args) -> int:
    annotated = parse_annotated_dot(_read(args.annotated))
    cpm = parse_cpm(_read(args.cpm))
    _write(args.out, emit_annotated_dot(expand_tau(annotated, cpm)))
    return EXIT_OK


def _mutation(args) -> MutationConfig | None:
    if args.timeout_mutation is None:
        return None
    return MutationConfig(True, args.timeout_mutation)


def cmd_gen_rebeca(args) -> int:
    annotated = parse_annotated_dot(_read(args.annotated))
    cpm = parse_cpm(_read(args.cpm))
    ir = build_ir(annotated, cpm)
    mutation = _mutation(args)
    if mutation is not None:
        ir = apply_timeout_mutation(ir, mutation)
    _write(args.out, emit_rebeca(ir))
    if args.properties_out:
        from .ltl import emit_property_file

        instantiated = {name: inst.formula
                        for name, inst in property_library(cpm).items()}
        _write(args.properties_out, emit_property_file(
            instantiated, header="generic security properties, instantiated"))
    return EXIT_OK


def cmd_explore(args) -> int:
    annotated = parse_annotated_dot(_read(args.annotated))
    cpm = parse_cpm(_read(args.cpm))
    ir = build_ir(annotated, cpm)
    mutation = _mutation(args)
    if mutation is not None:
        ir = apply_timeout_mutation(ir, mutation)
    lts = explore(ir, args.max_nodes)
    _write(args.out, emit_lts_dot(lts))
    print(f"{len(lts.nodes)} nodes, {len(lts.edges)} edges", file=sys.stderr)
    return EXIT_OK


def cmd_collapse(args) -> int:
    lts = parse_lts_dot(_read(args.lts))
    model = collapse(lts)
    if model.is_deterministic():
        _write(args.out, emit_annotated_dot(model.to_annotated()))
    else:
        _write(args.out, emit_collapsed_dot(model))
        print("note: nondeterministic outcomes kept as parallel edges", file=sys.stderr)
    return EXIT_OK


def cmd_verify_roundtrip(args) -> int:
    machine = parse_dot(_read(args.model), complete_missing=args.complete)
    cpm = parse_cpm(_read(args.cpm))
    report = verify_roundtrip(annotate(machine, cpm), cpm, args.max_nodes)
    print(f"round-trip: {report.message} ({report.node_count} nodes explored)")
    return EXIT_OK if report.passed else EXIT_ROUNDTRIP


def _load_properties(args, cpm):
    """Property set: the builtin library instantiated against the map, or a
    property file (still subject to undeclared-to-false instantiation)."""
    if args.properties in (None, "builtin"):
        return {
            name: (inst.formula, inst.substituted_false, inst.source)
            for name, inst in property_library(cpm).items()
        }
    declared = cpm.declared_props
    out = {}
    for name, formula in parse_property_file(_read(args.properties)).items():
        undeclared = tuple(sorted(propositions(formula) - declared))
        out[name] = (substitute(formula, {p: False for p in undeclared}),
                     undeclared, format_formula(formula))
    return out


def cmd_check(args) -> int:
    annotated = parse_annotated_dot(_read(args.expanded))
    cpm = parse_cpm(_read(args.cpm))
    kripke = kripke_from_annotated(annotated, declared=cpm.declared_props)
    properties = _load_properties(args, cpm)

    entries = []
    violations = 0
    for name in sorted(properties):
        formula, substituted, source = properties[name]
        result = check(kripke, formula, args.max_nodes)
        vac = vacuity(kripke, formula)
        entry = {
            "name": name,
            "formula": format_formula(formula),
            "source": source,
            "verdict": result.verdict,
            "substituted_false": list(substituted) + list(result.substituted_false),
            "warnings": list(result.warnings),
            "vacuity": None if vac is None else {
                "antecedent": vac.antecedent,
                "antecedent_reachable": vac.antecedent_reachable,
                "risk_reachable": vac.risk_reachable,
                "note": vac.note,
            },
            "lasso": None,
            "test": None,
        }
        if result.verdict != HOLDS:
            violations += 1
            entry["lasso"] = {"stem": list(result.lasso.stem),
                              "loop": list(result.lasso.loop)}
            test = concretize(result.lasso, kripke, annotated, name, args.unroll)
            entry["test"] = {
                "property": name,
                "inputs": list(test.inputs),
                "expected": list(test.expected),
                "provenance": {"stem": list(test.stem), "loop": list(test.loop),
                               "unroll": test.unroll},
            }
        entries.append(entry)
        line = f"{name}: {result.verdict}"
        if vac is not None and not vac.risk_reachable:
            line += f"  [{vac.note}]"
        print(line)

    report = {
        "expanded_model": args.expanded,
        "cpm": args.cpm,
        "properties": entries,
        "violations": violations,
    }
    if args.report:
        _write(args.report, json.dumps(report, sort_keys=True, indent=2) + "\n")
    if getattr(args, "jsonl", None):
        lines = [json.dumps({
            "name": e["name"], "verdict": e["verdict"],
            "lasso": e["lasso"], "substituted_false": e["substituted_false"],
        }, sort_keys=True) for e in entries]
        _write(args.jsonl, "\n".join(lines) + "\n")
    return EXIT_OK if violations == 0 else EXIT_VIOLATED


def cmd_emit_test(args) -> int:
    report = json.loads(_read(args.report))
    tests = []
    for entry in report.get("properties", []):
        data = entry.get("test")
        if data:
            prov = data.get("provenance", {})
            tests.append(TestCase(
                inputs=tuple(data["inputs"]),
                expected=tuple(data["expected"]),
                property_name=data.get("property", entry["name"]),
                stem=tuple(prov.get("stem", ())),
                loop=tuple(prov.get("loop", ())),
                unroll=prov.get("unroll", 1),
            ))
    write_tests(tests, args.out)
    print(f"{len(tests)} test case(s) written")
    return EXIT_OK


def cmd_replay(args) -> int:
    sul, _ = _resolve_sul(args.sul)
    tests = read_tests(args.tests)
    diverged = 0
    results = []
    for test in tests:
        result = replay(test, sul)
        results.append({
            "property": test.property_name,
            "verdict": result.verdict,
            "observed": list(result.observed),
            "first_divergence": result.first_divergence,
        })
        print(f"{test.property_name or '(unnamed)'}: {result.verdict}")
        if not result.confirmed:
            diverged += 1
    if args.report:
        _write(args.report, json.dumps({"replays": results, "diverged": diverged},
                                       sort_keys=True, indent=2) + "\n")
    return EXIT_OK if diverged == 0 else EXIT_DIVERGED


def cmd_pipeline(args) -> int:
    config_text = _read(args.config)
    config = json.loads(config_text)
    out_dir = Path(config.get("out_dir", "pipeline-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = config.get("seed", 0)
    learner_cfg = config.get("learner", {})
    algorithm = learner_cfg.get("algorithm", "lstar")
    if algorithm != "lstar":
        _usage_error(f"unknown learning algorithm {algorithm!r}")
        return EXIT_USAGE
    mutation_cfg = config.get("mutation", {})
    ceiling = config.get("state_ceiling", 10 ** 6)

    stages = {}

    # stage: model (learn or load)
    if "sul" in config:
        sul, hidden = _resolve_sul(config["sul"])
        kind = learner_cfg.get("oracle", "exact")
        if kind == "exact":
            oracle = lambda hyp: exact_oracle(hidden, hyp)  # noqa: E731
        else:
            oracle = lambda hyp: random_walk_oracle(  # noqa: E731
                sul, hyp,
                learner_cfg.get("min_len", 20), learner_cfg.get("max_len", 50),
                learner_cfg.get("num_tests", 50), seed)
        learned = lstar_learn(sul, hidden.inputs, oracle)
        machine = learned.machine
        stages["learn"] = {
            "membership_queries": learned.membership_queries,
            "equivalence_queries": learned.equivalence_queries,
            "rounds": learned.rounds,
            "proven": learned.proven,
        }
        (out_dir / "model.dot").write_text(emit_dot(machine), encoding="utf-8")
    else:
        machine = parse_dot(_read(config["model"]))
        (out_dir / "model.dot").write_text(emit_dot(machine), encoding="utf-8")
        stages["learn"] = {"skipped": True}

    cpm = parse_cpm(_read(config["cpm"]))

    annotated = annotate(machine, cpm)
    (out_dir / "annotated.dot").write_text(emit_annotated_dot(annotated), encoding="utf-8")
    stages["annotate"] = {"diagnostics": list(annotated.diagnostics)}

    expanded = expand_tau(annotated, cpm)
    (out_dir / "expanded.dot").write_text(emit_annotated_dot(expanded), encoding="utf-8")
    stages["expand"] = {"internal_states": len(expanded.tau_states)}

    ir = build_ir(annotated, cpm)
    if mutation_cfg.get("enabled"):
        ir = apply_timeout_mutation(
            ir, MutationConfig(True, mutation_cfg.get("probability", 0.1)))
    (out_dir / "model.rebeca").write_text(emit_rebeca(ir), encoding="utf-8")
    from .ltl import emit_property_file

    (out_dir / "model.property").write_text(
        emit_property_file({name: inst.formula
                            for name, inst in property_library(cpm).items()},
                           header="generic security properties, instantiated"),
        encoding="utf-8")
    stages["gen-rebeca"] = {"mutated": bool(mutation_cfg.get("enabled"))}

    lts = explore(ir, ceiling)
    (out_dir / "lts.dot").write_text(emit_lts_dot(lts), encoding="utf-8")
    collapsed = collapse(lts)
    if collapsed.is_deterministic():
        (out_dir / "collapsed.dot").write_text(
            emit_annotated_dot(collapsed.to_annotated()), encoding="utf-8")
    else:
        (out_dir / "collapsed.dot").write_text(
            emit_collapsed_dot(collapsed), encoding="utf-8")
    stages["explore"] = {"nodes": len(lts.nodes), "edges": len(lts.edges)}

    roundtrip = verify_roundtrip(annotated, cpm, ceiling)
    stages["verify-roundtrip"] = {"passed": roundtrip.passed, "message": roundtrip.message}
    if not roundtrip.passed:
        _write_manifest(out_dir, config_text, seed, stages)
        print("round-trip FAILED", file=sys.stderr)
        return EXIT_ROUNDTRIP

    check_args = argparse.Namespace(
        expanded=str(out_dir / "expanded.dot"), cpm=config["cpm"],
        properties=config.get("properties"), report=str(out_dir / "report.json"),
        max_nodes=ceiling, unroll=config.get("unroll", 1))
    cmd_check(check_args)   # violations are a result, not a pipeline failure
    report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
    stages["check"] = {"violations": report["violations"]}

    emit_args = argparse.Namespace(report=str(out_dir / "report.json"),
                                   out=str(out_dir / "tests.jsonl"))
    cmd_emit_test(emit_args)
    stages["emit-test"] = {"tests": report["violations"]}

    if "sul" in config and report["violations"]:
        replay_args = argparse.Namespace(
            sul=config["sul"], tests=str(out_dir / "tests.jsonl"),
            report=str(out_dir / "replay.json"))
        replay_exit = cmd_replay(replay_args)
        stages["replay"] = {"diverged": replay_exit == EXIT_DIVERGED}
    else:
        stages["replay"] = {"skipped": True}

    _write_manifest(out_dir, config_text, seed, stages)
    return EXIT_OK


def _write_manifest(out_dir: Path, config_text: str, seed, stages):
    manifest = {
        "tool_version": __version__,
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "seed": seed,
        "stages": stages,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="protocheck",
                     description="learn, annotate, model-check and test protocol state machines")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="infer a model from a system under learning")
    p.add_argument("--sul", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--algorithm", choices=["lstar"], default="lstar",
                   help="learning algorithm (seam for future additions)")
    p.add_argument("--oracle", choices=["exact", "random-walk"], default="exact")
    p.add_argument("--min-len", type=int, default=20)
    p.add_argument("--max-len", type=int, default=50)
    p.add_argument("--num-tests", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("annotate", help="label states via a proposition map")
    p.add_argument("--model", required=True)
    p.add_argument("--cpm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--complete", action="store_true",
                   help="fill missing inputs with no_response self-loops")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("expand", help="split temporary-proposition transitions")
    p.add_argument("--annotated", required=True)
    p.add_argument("--cpm", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("gen-rebeca", help="emit the two-actor model source")
    p.add_argument("--annotated", required=True)
    p.add_argument("--cpm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--properties-out",
                   help="also write the instantiated property file")
    p.add_argument("--timeout-mutation", type=float, default=None, metavar="P")
    p.set_defaults(func=cmd_gen_rebeca)

    p = sub.add_parser("explore", help="generate the full actor state space")
    p.add_argument("--annotated", required=True)
    p.add_argument("--cpm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timeout-mutation", type=float, default=None, metavar="P")
    p.add_argument("--max-nodes", type=int, default=10 ** 6)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("collapse", help="cut a state space back into a machine")
    p.add_argument("--lts", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collapse)

    p = sub.add_parser("verify-roundtrip",
                       help="check that explore+collapse reproduces the model")
    p.add_argument("--model", required=True)
    p.add_argument("--cpm", required=True)
    p.add_argument("--complete", action="store_true")
    p.add_argument("--max-nodes", type=int, default=10 ** 6)
    p.set_defaults(func=cmd_verify_roundtrip)

    p = sub.add_parser("check", help="model-check properties on the expanded model")
    p.add_argument("--expanded", required=True)
    p.add_argument("--cpm", required=True)
    p.add_argument("--properties", default=None,
                   help="property file, or 'builtin' for the generic library")
    p.add_argument("--report")
    p.add_argument("--jsonl", help="also write one JSON object per property")
    p.add_argument("--max-nodes", type=int, default=10 ** 6)
    p.add_argument("--unroll", type=int, default=1)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("emit-test", help="extract replayable tests from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_emit_test)

    p = sub.add_parser("replay", help="replay test cases against a system")
    p.add_argument("--tests", required=True)
    p.add_argument("--sul", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("pipeline", help="run every stage from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; remap to the documented code
        code = exc.code
        if code in (2,):
            raise SystemExit(EXIT_USAGE) from exc
        raise
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"protocheck: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"protocheck: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
