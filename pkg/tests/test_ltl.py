"""Temporal logic: parser, normal form, automata, checking, oracle, library."""

import random
from collections import deque

import pytest

from protocheck import (annotate, expand_tau, build_uds_machine,
                        build_emrtd_machine)
from protocheck.ltl import (And, Always, BOUNDED_HOLDS, Eventually,
                            FALSE, HOLDS, Implies, KripkeStructure,
                            LtlError, Not, Or, Prop, Release, TRUE,
                            Until, VIOLATED, bounded_oracle, check,
                            evaluate_on_lasso, format_formula,
                            kripke_from_annotated, lasso_valuations,
                            ltl_to_buchi, parse_ltl, parse_property_file,
                            propositions, property_library, to_nnf, vacuity,
                            PROPERTY_TEMPLATES)
from helpers import random_kripke, random_formula
from protocheck.fixtures import fixture_text


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def test_parse_auth_property_shape():
    f = parse_ltl("G(!( !AUTH && PROT ) || !ACCESSOK)")
    assert f == Always(Or(Not(And(Not(Prop("AUTH")), Prop("PROT"))),
                          Not(Prop("ACCESSOK"))))


def test_parse_constants():
    assert parse_ltl("true") == TRUE
    assert parse_ltl("false") == FALSE


def test_parse_until_property_shape():
    f = parse_ltl("((!SREADOK) U SSELEFOK) || G(!SREADOK)")
    assert f == Or(Until(Not(Prop("SREADOK")), Prop("SSELEFOK")),
                   Always(Not(Prop("SREADOK"))))


def test_parse_precedence():
    # unary > U > && > || > ->
    assert parse_ltl("a U b || c") == Or(Until(Prop("a"), Prop("b")), Prop("c"))
    assert parse_ltl("!a U b") == Until(Not(Prop("a")), Prop("b"))
    assert parse_ltl("a && b U c") == And(Prop("a"), Until(Prop("b"), Prop("c")))
    assert parse_ltl("a -> b -> c") == Implies(Prop("a"), Implies(Prop("b"), Prop("c")))
    assert parse_ltl("G a -> b") == Implies(Always(Prop("a")), Prop("b"))


@pytest.mark.parametrize("text", ["G (", "p &&", "(p", "p 5q", "U p", "p !q"])
def test_parse_errors_carry_position(text):
    with pytest.raises(LtlError, match="position"):
        parse_ltl(text)


def test_format_round_trip():
    for text in PROPERTY_TEMPLATES.values():
        f = parse_ltl(text)
        assert parse_ltl(format_formula(f)) == f


# ---------------------------------------------------------------------------
# negation normal form
# ---------------------------------------------------------------------------

def test_nnf_not_always_becomes_until():
    assert to_nnf(Not(Always(Prop("p")))) == Until(TRUE, Not(Prop("p")))


def test_nnf_not_until_becomes_release():
    f = to_nnf(Not(Until(Prop("p"), Prop("q"))))
    assert f == Release(Not(Prop("p")), Not(Prop("q")))


def test_nnf_double_negation():
    assert to_nnf(Not(Not(Prop("p")))) == Prop("p")


def test_nnf_eliminates_sugar():
    f = to_nnf(Implies(Prop("a"), Eventually(Prop("b"))))
    assert f == Or(Not(Prop("a")), Until(TRUE, Prop("b")))


# ---------------------------------------------------------------------------
# automaton construction
# ---------------------------------------------------------------------------

def test_buchi_always_p_is_canonical_single_state():
    auto = ltl_to_buchi(to_nnf(parse_ltl("G p")))
    assert len(auto.states) == 1
    (state,) = auto.states
    assert auto.initial == frozenset({state})
    assert auto.accepting == frozenset({state})
    assert auto.successors[state] == (state,)
    assert auto.required[state] == frozenset({"p"})
    assert auto.forbidden[state] == frozenset()


def test_buchi_eventually_p_accepts_exactly_eventual_p():
    # language check through the product: p reachable vs not
    k_yes = KripkeStructure(("a", "b"), ("a",), {"a": ("b",), "b": ("b",)},
                            {"a": frozenset(), "b": frozenset({"p"})},
                            frozenset({"p"}))
    k_no = KripkeStructure(("a",), ("a",), {"a": ("a",)},
                           {"a": frozenset()}, frozenset({"p"}))
    f = parse_ltl("F p")
    assert check(k_yes, f).verdict == HOLDS
    assert check(k_no, f).verdict == VIOLATED
    assert len(ltl_to_buchi(to_nnf(f)).states) <= 3


# ---------------------------------------------------------------------------
# direct semantics on lasso words
# ---------------------------------------------------------------------------

def val(*names):
    return frozenset(names)


def test_lasso_semantics_next():
    # word: {} {p} ({p})^w   hand-computed expectations
    assert evaluate_on_lasso(parse_ltl("X p"), [val()], [val("p")])
    assert not evaluate_on_lasso(parse_ltl("p"), [val()], [val("p")])


def test_lasso_semantics_until():
    # q holds at position 2; p holds up to there
    stem = [val("p"), val("p")]
    loop = [val("q")]
    assert evaluate_on_lasso(parse_ltl("p U q"), stem, loop)
    # p gap before q arrives
    assert not evaluate_on_lasso(parse_ltl("p U q"), [val("p"), val()], [val("q")])


def test_lasso_semantics_globally_on_loop():
    assert evaluate_on_lasso(parse_ltl("G p"), [], [val("p"), val("p")])
    assert not evaluate_on_lasso(parse_ltl("G p"), [val("p")], [val("p"), val()])


def test_lasso_semantics_release():
    # false R p is G p
    f = Release(FALSE, Prop("p"))
    assert evaluate_on_lasso(f, [], [val("p")])
    assert not evaluate_on_lasso(f, [], [val("p"), val()])


# ---------------------------------------------------------------------------
# checking
# ---------------------------------------------------------------------------

def test_check_true_always_holds():
    k = random_kripke(random.Random(1))
    assert check(k, TRUE).verdict == HOLDS


def test_check_returns_valid_falsifying_lasso():
    k = KripkeStructure(("a", "b"), ("a",), {"a": ("b",), "b": ("a",)},
                        {"a": frozenset({"p"}), "b": frozenset()},
                        frozenset({"p"}))
    result = check(k, parse_ltl("G p"))
    assert result.verdict == VIOLATED
    stem_vals, loop_vals = lasso_valuations(k, result.lasso)
    assert not evaluate_on_lasso(parse_ltl("G p"), stem_vals, loop_vals)
    # the loop genuinely cycles
    last, first = result.lasso.loop[-1], result.lasso.loop[0]
    assert first in k.successors[last]


def test_check_undeclared_resolved_false_with_warning():
    k = KripkeStructure(("a",), ("a",), {"a": ("a",)}, {"a": frozenset()},
                        frozenset())
    result = check(k, parse_ltl("G(!GHOST)"))
    assert result.verdict == HOLDS
    assert result.substituted_false == ("GHOST",)
    assert any("GHOST" in w for w in result.warnings)


def test_check_emrtd_auth_property_holds(emrtd_cpm):
    machine, _ = build_emrtd_machine()
    expanded = expand_tau(annotate(machine, emrtd_cpm), emrtd_cpm)
    k = kripke_from_annotated(expanded, declared=emrtd_cpm.declared_props)
    f = property_library(emrtd_cpm)["auth_before_access"].formula
    assert check(k, f).verdict == HOLDS


def shortest_invkeyok_state(k):
    """BFS oracle: nearest reachable state labeled INVKEYOK."""
    frontier = deque([(s, (s,)) for s in k.initial])
    seen = set(k.initial)
    while frontier:
        state, path = frontier.popleft()
        if "INVKEYOK" in k.label(state):
            return path
        for succ in k.successors[state]:
            if succ not in seen:
                seen.add(succ)
                frontier.append((succ, path + (succ,)))
    return None


def test_check_uds_key_validity_violated(uds_cpm):
    machine, _ = build_uds_machine()
    expanded = expand_tau(annotate(machine, uds_cpm), uds_cpm)
    k = kripke_from_annotated(expanded, declared=uds_cpm.declared_props)
    f = property_library(uds_cpm)["no_invalid_key"].formula
    result = check(k, f)
    assert result.verdict == VIOLATED
    # witness visits an INVKEYOK split state, as the BFS oracle proves exists
    oracle_path = shortest_invkeyok_state(k)
    assert oracle_path is not None
    witness_states = result.lasso.states()
    bad = [s for s in witness_states if "INVKEYOK" in k.label(s)]
    assert bad
    # the split state is entered by the wrong-key input from an unlocked state
    tau = bad[0]
    ((src, sym),) = [(q, s) for (q, s), (d, _) in expanded.machine.transitions.items()
                     if d == tau]
    assert sym == "SAwWrongKey"
    assert "AUTH" in expanded.label(src)
    _, out = expanded.machine.transitions[(tau, "__eps")]
    assert out == "67"


def test_check_agrees_with_bounded_oracle_on_random_pairs():
    rng = random.Random(24601)
    for _ in range(80):
        k = random_kripke(rng)
        f = random_formula(rng)
        result = check(k, f)
        if result.verdict == VIOLATED:
            bounds = (max(6, len(result.lasso.stem)), max(6, len(result.lasso.loop)))
        else:
            bounds = (6, 6)
        oracle = bounded_oracle(k, f, *bounds)
        assert (result.verdict == HOLDS) == (oracle.verdict == BOUNDED_HOLDS), \
            format_formula(f)


def test_check_duality_on_single_path_structures():
    # on lasso-shaped structures the unique trace decides every formula
    rng = random.Random(31)
    for _ in range(20):
        n = rng.randint(1, 5)
        states = tuple(f"s{i}" for i in range(n))
        successors = {states[i]: (states[i + 1],) for i in range(n - 1)}
        successors[states[-1]] = (states[rng.randrange(n)],)
        labels = {s: frozenset(p for p in ("p", "q") if rng.random() < 0.5)
                  for s in states}
        k = KripkeStructure(states, (states[0],), successors, labels,
                            frozenset(("p", "q")))
        f = random_formula(rng, depth=2, temporal_budget=3)
        forward, negated = check(k, f), check(k, Not(f))
        assert forward.holds != negated.holds


# ---------------------------------------------------------------------------
# bounded oracle specifics
# ---------------------------------------------------------------------------

def test_bounded_oracle_trivial_cases():
    all_p = KripkeStructure(("a", "b"), ("a",), {"a": ("b",), "b": ("a",)},
                            {"a": frozenset({"p"}), "b": frozenset({"p"})},
                            frozenset({"p"}))
    assert bounded_oracle(all_p, parse_ltl("G p"), 4, 4).verdict == BOUNDED_HOLDS
    p_free = KripkeStructure(("a",), ("a",), {"a": ("a",)},
                             {"a": frozenset()}, frozenset({"p"}))
    assert bounded_oracle(p_free, parse_ltl("F p"), 4, 4).verdict == VIOLATED


def test_bounded_oracle_budget_guard():
    from protocheck.ltl import OracleBudgetError
    rng = random.Random(8)
    k = random_kripke(rng, max_states=6, max_degree=2)
    with pytest.raises(OracleBudgetError):
        bounded_oracle(k, parse_ltl("G(p U q)"), 10, 10, max_lassos=3)


# ---------------------------------------------------------------------------
# Kripke views
# ---------------------------------------------------------------------------

def test_kripke_from_expanded_two_state(two_state_annotated, two_state_cpm):
    expanded = expand_tau(two_state_annotated, two_state_cpm)
    k = kripke_from_annotated(expanded)
    assert len(k.states) == 3
    (tau,) = expanded.tau_states
    assert k.label(tau) == frozenset({"p", "omega2set"})
    assert k.initial == ("q1",)


def test_kripke_plain_unlabeled(two_state_machine):
    from protocheck.cpm import Cpm
    k = kripke_from_annotated(annotate(two_state_machine, Cpm()))
    assert k.label("q1") == frozenset()
    assert set(k.successors["q1"]) == {"q2"}


def test_kripke_deadlock_gets_self_loop():
    from protocheck import MealyMachine
    from protocheck.cpm import AnnotatedMachine
    m = MealyMachine(("lonely",), ("a",), ("o",), "lonely", {},
                     require_complete=False)
    k = kripke_from_annotated(AnnotatedMachine(m, {}))
    assert k.successors["lonely"] == ("lonely",)


# ---------------------------------------------------------------------------
# property library and files
# ---------------------------------------------------------------------------

def test_property_library_empty_map_goes_vacuous():
    from protocheck.cpm import Cpm
    lib = property_library(Cpm())
    f = lib["no_invalid_key"].formula
    assert "INVKEYOK" in lib["no_invalid_key"].substituted_false
    k = random_kripke(random.Random(3))
    assert check(k, f).verdict == HOLDS   # G(!false) is universally true


def test_property_library_emrtd_keeps_declared_hypothetical(emrtd_cpm):
    lib = property_library(emrtd_cpm)
    inst = lib["privilege_gates_critical"]
    # the privileged proposition is declared (hypothetically) so it survives
    assert "PRIV" not in inst.substituted_false
    assert "PRIV" in propositions(inst.formula)


def test_property_library_uds_confidentiality_vacuous(uds_cpm):
    machine, _ = build_uds_machine()
    expanded = expand_tau(annotate(machine, uds_cpm), uds_cpm)
    k = kripke_from_annotated(expanded, declared=uds_cpm.declared_props)
    inst = property_library(uds_cpm)["no_plain_read_of_protected"]
    assert check(k, inst.formula).verdict == HOLDS
    report = vacuity(k, inst.formula)
    assert report is not None
    assert not report.risk_reachable
    assert "PROT" in report.note and "UREADOK" in report.note
    assert "never co-occur" in report.note
    # cross-checked by the independent oracle (bounds kept exhaustive-feasible
    # for the fixture's branching factor)
    assert bounded_oracle(k, inst.formula, 4, 2).verdict == BOUNDED_HOLDS


def test_parse_property_file_matches_builtin():
    parsed = parse_property_file(fixture_text("generic.properties"))
    assert set(parsed) == set(PROPERTY_TEMPLATES)
    for name, text in PROPERTY_TEMPLATES.items():
        assert parsed[name] == parse_ltl(text)


def test_parse_property_file_errors():
    with pytest.raises(LtlError, match="name: formula"):
        parse_property_file("just some text\n")
    with pytest.raises(LtlError, match="duplicate"):
        parse_property_file("a: G p\na: F p\n")


def test_vacuity_antecedent_never_true(uds_cpm):
    machine, _ = build_uds_machine()
    expanded = expand_tau(annotate(machine, uds_cpm), uds_cpm)
    k = kripke_from_annotated(expanded, declared=uds_cpm.declared_props)
    inst = property_library(uds_cpm)["auth_before_access"]
    report = vacuity(k, inst.formula)
    assert report is not None and not report.antecedent_reachable


def test_dual_route_verdicts_agree(emrtd_cpm, uds_cpm):
    from protocheck import build_ir, explore, collapse
    from protocheck.statespace import kripke_from_collapsed
    for build, cpm in ((build_emrtd_machine, emrtd_cpm), (build_uds_machine, uds_cpm)):
        machine, _ = build()
        a = annotate(machine, cpm)
        k1 = kripke_from_annotated(expand_tau(a, cpm), declared=cpm.declared_props)
        k2 = kripke_from_collapsed(collapse(explore(build_ir(a, cpm))),
                                   declared=cpm.declared_props)
        for name, inst in property_library(cpm).items():
            assert check(k1, inst.formula).verdict == check(k2, inst.formula).verdict, name


# ---------------------------------------------------------------------------
# verdict rendering
# ---------------------------------------------------------------------------

def test_verdict_report_text_and_jsonl(uds_cpm):
    import json as jsonlib
    from protocheck.ltl import verdict_text, verdict_jsonl

    machine, _ = build_uds_machine()
    expanded = expand_tau(annotate(machine, uds_cpm), uds_cpm)
    k = kripke_from_annotated(expanded, declared=uds_cpm.declared_props)
    results = {name: check(k, inst.formula)
               for name, inst in property_library(uds_cpm).items()}
    text = verdict_text("no_invalid_key", results["no_invalid_key"])
    assert text.startswith("no_invalid_key: VIOLATED")
    assert "witness" in text
    lines = verdict_jsonl(results).splitlines()
    assert len(lines) == len(results)
    decoded = [jsonlib.loads(line) for line in lines]
    by_name = {d["name"]: d for d in decoded}
    assert by_name["no_invalid_key"]["verdict"] == "VIOLATED"
    assert by_name["no_invalid_key"]["lasso"]["loop"]
    assert by_name["auth_before_access"]["verdict"] == "HOLDS"
    assert by_name["auth_before_access"]["lasso"] is None


def test_property_file_emit_parse_round_trip(emrtd_cpm):
    from protocheck.ltl import emit_property_file

    instantiated = {name: inst.formula
                    for name, inst in property_library(emrtd_cpm).items()}
    text = emit_property_file(instantiated, header="note")
    assert text.startswith("# note")
    assert parse_property_file(text) == instantiated
