"""Turning model-checking witnesses into replayable tests.

A violation lasso over the Kripke view maps back to the input word that
drives the machine along it (internal split states contribute their
originating input once, empty-input bridges contribute nothing).  Replaying
the word against a live system either confirms the violation or yields a
divergence, which feeds back into the learner as a counterexample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .automata import EPSILON, TAU, Word
from .cpm import AnnotatedMachine
from .ltl import KripkeStructure, Lasso
from .learning import SulInterface


class TestKitError(RuntimeError):
    """Raised for irreproducible witnesses and contract misuse."""

    __test__ = False  # not a pytest collectable despite the name


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest collectable despite the name

    inputs: Word
    expected: Word
    property_name: str
    stem: tuple[str, ...]
    loop: tuple[str, ...]
    unroll: int = 1

    def __post_init__(self):
        if len(self.inputs) != len(self.expected):
            raise TestKitError("inputs and expected outputs must have equal length")


def _tau_maps(a: AnnotatedMachine):
    tau_in: dict[str, tuple[str, str]] = {}
    tau_out: dict[str, tuple[str, str]] = {}
    for (q, sym), (dst, out) in a.machine.transitions.items():
        if dst in a.tau_states and out == TAU:
            tau_in[dst] = (q, sym)
        if q in a.tau_states and sym == EPSILON:
            tau_out[q] = (dst, out)
    return tau_in, tau_out


def concretize(lasso: Lasso, k: KripkeStructure, a: AnnotatedMachine,
               property_name: str = "", unroll: int = 1) -> TestCase:
    """Input/output word driving the machine along the witness path, with
    the loop repeated ``unroll`` times."""
    if unroll < 1:
        raise TestKitError("unroll must be at least 1")
    for state in lasso.states():
        if state not in set(k.states):
            raise TestKitError(f"witness state {state!r} is not a state of the structure")
    tau_in, tau_out = _tau_maps(a)
    path = list(lasso.stem) + list(lasso.loop) * unroll
    inputs: list[str] = []
    expected: list[str] = []
    for x, y in zip(path, path[1:]):
        if y in a.tau_states:
            src, sym = tau_in[y]
            if src != x:
                raise TestKitError(
                    f"witness step {x!r} -> {y!r} does not match the split origin {src!r}")
            dst, out = tau_out[y]
            inputs.append(sym)
            expected.append(out)
        elif x in a.tau_states:
            dst, _ = tau_out[x]
            if dst != y:
                raise TestKitError(
                    f"witness step {x!r} -> {y!r} does not match the split target {dst!r}")
        else:
            for sym in a.machine.inputs:
                entry = a.machine.transitions.get((x, sym))
                if entry is not None and entry[0] == y:
                    inputs.append(sym)
                    expected.append(entry[1])
                    break
            else:
                raise TestKitError(f"no transition reproduces witness step {x!r} -> {y!r}")
    return TestCase(tuple(inputs), tuple(expected), property_name,
                    lasso.stem, lasso.loop, unroll)


CONFIRMED = "CONFIRMED"
DIVERGED = "DIVERGED"


@dataclass(frozen=True)
class ReplayResult:
    verdict: str
    observed: Word
    first_divergence: int | None = None
    failure: str | None = None

    @property
    def confirmed(self) -> bool:
        return self.verdict == CONFIRMED


def replay(test: TestCase, sul: SulInterface) -> ReplayResult:
    """Drive the system with the test word: CONFIRMED when every output
    matches the expectation, DIVERGED with the full observed word otherwise."""
    sul.reset()
    observed: list[str] = []
    for position, symbol in enumerate(test.inputs):
        try:
            observed.append(sul.step(symbol))
        except Exception as exc:  # noqa: BLE001 - surfaced with position
            return ReplayResult(DIVERGED, tuple(observed), position,
                                f"system failure at position {position}: {exc}")
    divergence = next(
        (i for i, (got, want) in enumerate(zip(observed, test.expected)) if got != want),
        None,
    )
    if divergence is None:
        return ReplayResult(CONFIRMED, tuple(observed))
    return ReplayResult(DIVERGED, tuple(observed), divergence)


def feedback(result: ReplayResult, test: TestCase) -> Word:
    """Package a divergence as an equivalence counterexample: the input
    prefix up to and including the first diverging position."""
    if result.confirmed:
        raise TestKitError("feedback requires a diverged replay")
    position = result.first_divergence
    if position is None:
        position = len(result.observed)
    return test.inputs[:position + 1]


# ---------------------------------------------------------------------------
# Test-case files (JSON lines)
# ---------------------------------------------------------------------------

def test_to_json(test: TestCase) -> str:
    return json.dumps({
        "property": test.property_name,
        "inputs": list(test.inputs),
        "expected": list(test.expected),
        "provenance": {
            "stem": list(test.stem),
            "loop": list(test.loop),
            "unroll": test.unroll,
        },
    }, sort_keys=True)


def test_from_json(line: str) -> TestCase:
    data = json.loads(line)
    prov = data.get("provenance", {})
    return TestCase(
        inputs=tuple(data["inputs"]),
        expected=tuple(data["expected"]),
        property_name=data.get("property", ""),
        stem=tuple(prov.get("stem", ())),
        loop=tuple(prov.get("loop", ())),
        unroll=prov.get("unroll", 1),
    )


def write_tests(tests, path):
    with open(path, "w", encoding="utf-8") as handle:
        for test in tests:
            handle.write(test_to_json(test) + "\n")


def read_tests(path) -> list[TestCase]:
    out = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                out.append(test_from_json(line))
    return out
