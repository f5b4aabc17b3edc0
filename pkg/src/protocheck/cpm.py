"""Context-based proposition maps and state annotation.

A proposition map declares, per (input, output) pattern pair, which
propositions a transition's target state gains, which propositions the
transition refuses to carry over, and which temporary propositions hold for
exactly the internal step following the transition.  Applying a map to a
Mealy machine yields an annotated machine whose states carry proposition
sets, i.e. a Kripke-structure view layered over the transducer.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field

from .automata import (EPSILON, TAU, MachineError, MealyMachine, _escape,
                       _quote, _strip_token, _parse_attrs, _split_label,
                       _EDGE_RE, _NODE_RE, START_NODE, EquivalenceResult,
                       dot_statements)

_PROP_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


class CpmError(ValueError):
    """Raised for malformed proposition-map files."""


@dataclass(frozen=True)
class Condition:
    """One rule row: propositions plus input/output glob pattern sets."""

    props: frozenset[str]
    input_patterns: tuple[str, ...]
    output_patterns: tuple[str, ...]

    def matches_pair(self, symbol: str, output: str) -> bool:
        return matches(self.input_patterns, symbol) and matches(self.output_patterns, output)


@dataclass(frozen=True)
class Cpm:
    gains: tuple[Condition, ...] = ()
    loses: tuple[Condition, ...] = ()
    taus: tuple[Condition, ...] = ()

    @property
    def state_props(self) -> tuple[str, ...]:
        names = set()
        for c in self.gains + self.loses:
            names |= c.props
        return tuple(sorted(names))

    @property
    def temp_props(self) -> tuple[str, ...]:
        names = set()
        for c in self.taus:
            names |= c.props
        return tuple(sorted(names))

    @property
    def declared_props(self) -> frozenset[str]:
        return frozenset(self.state_props) | frozenset(self.temp_props)


def matches(patterns, symbol: str) -> bool:
    """True iff any glob pattern matches the whole symbol.

    ``*`` is the only wildcard and matches any (possibly empty) character
    run; matching is case-sensitive over the full symbol.
    """
    for pattern in patterns:
        regex = ".*".join(re.escape(part) for part in pattern.split("*"))
        if re.fullmatch(regex, symbol):
            return True
    return False


_SECTIONS = {"[GAINS]": "gains", "[LOSES]": "loses", "[TAUS]": "taus"}


def parse_cpm(text: str) -> Cpm:
    """Parse the line-oriented proposition-map format.

    Section headers are ``[GAINS]``, ``[LOSES]``, ``[TAUS]``; each row is
    ``props | input-patterns | output-patterns`` with comma-separated cells;
    ``#`` starts a comment.
    """
    rows: dict[str, list[Condition]] = {"gains": [], "loses": [], "taus": []}
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        upper = line.upper()
        if upper in _SECTIONS:
            section = _SECTIONS[upper]
            continue
        if section is None:
            raise CpmError(f"line {lineno}: row before any section header")
        cells = [cell.strip() for cell in line.split("|")]
        if len(cells) != 3:
            raise CpmError(f"line {lineno}: expected 3 cells separated by '|', got {len(cells)}")
        parts = []
        for cell in cells:
            entries = tuple(e.strip() for e in cell.split(",") if e.strip())
            if not entries:
                raise CpmError(f"line {lineno}: empty cell")
            parts.append(entries)
        props, in_pats, out_pats = parts
        for p in props:
            if not _PROP_RE.match(p):
                raise CpmError(f"line {lineno}: invalid proposition name {p!r}")
        rows[section].append(Condition(frozenset(props), in_pats, out_pats))

    cpm = Cpm(tuple(rows["gains"]), tuple(rows["loses"]), tuple(rows["taus"]))
    overlap = set(cpm.state_props) & set(cpm.temp_props)
    if overlap:
        raise CpmError(
            "temporary propositions collide with state propositions: "
            + ", ".join(sorted(overlap))
        )
    return cpm


def emit_cpm(cpm: Cpm) -> str:
    lines = []
    for header, conditions in (("[GAINS]", cpm.gains), ("[LOSES]", cpm.loses),
                               ("[TAUS]", cpm.taus)):
        lines.append(header)
        for c in conditions:
            lines.append(
                f"{', '.join(sorted(c.props))} | {', '.join(c.input_patterns)}"
                f" | {', '.join(c.output_patterns)}"
            )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AnnotatedMachine:
    """Mealy machine whose states carry proposition sets.

    ``tau_states`` marks internal states produced by transition splitting;
    each of those has exactly one incoming transition (ending in the
    reserved tau output) and one outgoing transition on the reserved empty
    input.  ``temp_labels`` holds their temporary propositions.
    """

    machine: MealyMachine
    labels: dict[str, frozenset[str]]
    tau_states: frozenset[str] = frozenset()
    temp_labels: dict[str, frozenset[str]] = field(default_factory=dict)
    diagnostics: tuple[str, ...] = ()

    def label(self, state: str) -> frozenset[str]:
        return self.labels.get(state, frozenset())

    def temps(self, state: str) -> frozenset[str]:
        return self.temp_labels.get(state, frozenset())


def annotate(m: MealyMachine, cpm: Cpm) -> AnnotatedMachine:
    """Label every state of ``m`` per the proposition map.

    Three phases: seed target states of transitions matched by gain rows;
    build the per-proposition inheritance map (a transition carries p unless
    a lose rule for p matches it); propagate to a fixpoint.  Gains win over
    lose-blocking on the same transition: the seed is applied regardless.
    The initial state starts unlabeled and only acquires labels through
    incoming transitions.
    """
    transitions = [
        (q, sym, dst, out)
        for q in m.states for sym in m.inputs
        for dst, out in [m.transitions[(q, sym)]]
    ]

    fired: set[tuple[str, int]] = set()
    labels: dict[str, set[str]] = {q: set() for q in m.states}
    grants: dict[tuple[str, str], set[str]] = {}
    for q, sym, dst, out in transitions:
        granted = set()
        for i, c in enumerate(cpm.gains):
            if c.matches_pair(sym, out):
                granted |= c.props
                fired.add(("gains", i))
        labels[dst] |= granted
        grants[(q, sym)] = granted

    # carries[(q, sym)] = set of propositions blocked on that transition
    blocked: dict[tuple[str, str], set[str]] = {}
    for q, sym, dst, out in transitions:
        blocked_here = set()
        for i, c in enumerate(cpm.loses):
            if c.matches_pair(sym, out):
                blocked_here |= c.props
                fired.add(("loses", i))
        blocked[(q, sym)] = blocked_here

    # monotone fixpoint: every pass adds at least one label or stops, so the
    # iteration count is bounded by |Q| * |P| (asserted)
    prop_count = len({p for c in cpm.gains for p in c.props})
    max_passes = len(m.states) * prop_count + 1
    passes = 0
    changed = True
    while changed:
        changed = False
        passes += 1
        assert passes <= max_passes, "annotation fixpoint failed to converge"
        for q, sym, dst, out in transitions:
            carried = labels[q] - blocked[(q, sym)]
            new = carried - labels[dst]
            if new:
                labels[dst] |= new
                changed = True

    diagnostics = []
    for kind, conditions in (("gains", cpm.gains), ("loses", cpm.loses),
                             ("taus", cpm.taus)):
        for i, c in enumerate(conditions):
            if kind == "taus":
                hit = any(c.matches_pair(sym, out) for _, sym, _, out in transitions)
                if not hit:
                    diagnostics.append(
                        f"unused {kind} condition {sorted(c.props)}: matched no transition"
                    )
            elif (kind, i) not in fired:
                diagnostics.append(
                    f"unused {kind} condition {sorted(c.props)}: matched no transition"
                )
    # union semantics: flag states whose incoming transitions disagree on a
    # proposition (some grant or carry it, others do not)
    incoming: dict[str, list[tuple[str, str]]] = {q: [] for q in m.states}
    for q, sym, dst, out in transitions:
        incoming[dst].append((q, sym))
    for dst in m.states:
        if not incoming[dst]:
            continue
        for p in sorted(labels[dst]):
            supplying = [
                (q, sym) for q, sym in incoming[dst]
                if p in grants[(q, sym)]
                or p in labels[q] - blocked[(q, sym)]
            ]
            if supplying and len(supplying) != len(incoming[dst]):
                diagnostics.append(
                    f"state {dst!r}: incoming transitions disagree on {p!r} "
                    f"({len(supplying)}/{len(incoming[dst])} supply it; union applied)"
                )

    return AnnotatedMachine(
        machine=m,
        labels={q: frozenset(v) for q, v in labels.items()},
        diagnostics=tuple(diagnostics),
    )


def expand_tau(a: AnnotatedMachine, cpm: Cpm) -> AnnotatedMachine:
    """Split every transition matched by a temporary rule through a fresh
    internal state.

    The internal state keeps the source state's labels, carries the union of
    temporary propositions of all matching rules, and is bridged by
    ``input/tau`` then ``epsilon/output`` transitions.  Nothing propagates
    into or out of temporary labels.
    """
    if a.tau_states:
        raise CpmError("machine already contains internal states; expand once only")
    m = a.machine
    transitions: dict[tuple[str, str], tuple[str, str]] = {}
    states = list(m.states)
    labels = dict(a.labels)
    tau_states: set[str] = set()
    temp_labels: dict[str, frozenset[str]] = {}
    counter = 0
    outputs = list(m.outputs)

    for q in m.states:
        for sym in m.inputs:
            entry = m.transitions.get((q, sym))
            if entry is None:
                continue
            dst, out = entry
            temps = frozenset().union(
                *[c.props for c in cpm.taus if c.matches_pair(sym, out)]
            )
            if temps:
                name = f"tau{counter}"
                counter += 1
                while name in m.states:
                    name = f"tau{counter}"
                    counter += 1
                states.append(name)
                tau_states.add(name)
                labels[name] = a.label(q)
                temp_labels[name] = temps
                transitions[(q, sym)] = (name, TAU)
                transitions[(name, EPSILON)] = (dst, out)
            else:
                transitions[(q, sym)] = (dst, out)

    if tau_states and TAU not in outputs:
        outputs.append(TAU)
    machine = MealyMachine(tuple(states), m.inputs, tuple(outputs), m.initial,
                           transitions, require_complete=False)
    return AnnotatedMachine(machine, labels, frozenset(tau_states), temp_labels,
                            a.diagnostics)


def strip_tau(a: AnnotatedMachine) -> AnnotatedMachine:
    """Merge every ``input/tau`` + ``epsilon/output`` split back into one
    transition, undoing :func:`expand_tau` structurally."""
    if not a.tau_states:
        return a
    m = a.machine
    transitions: dict[tuple[str, str], tuple[str, str]] = {}
    for (q, sym), (dst, out) in m.transitions.items():
        if q in a.tau_states:
            continue
        if dst in a.tau_states:
            bridge = m.transitions.get((dst, EPSILON))
            if bridge is None:
                raise MachineError(f"internal state {dst!r} lacks its epsilon transition")
            transitions[(q, sym)] = bridge
        else:
            transitions[(q, sym)] = (dst, out)
    states = tuple(q for q in m.states if q not in a.tau_states)
    used_outputs = {out for (_, out) in transitions.values()}
    outputs = tuple(o for o in m.outputs if o in used_outputs)
    machine = MealyMachine(states, m.inputs, outputs, m.initial, transitions)
    labels = {q: a.label(q) for q in states}
    return AnnotatedMachine(machine, labels, diagnostics=a.diagnostics)


def annotated_equal(a: AnnotatedMachine, b: AnnotatedMachine) -> EquivalenceResult:
    """Trace equivalence that also requires identical labels along the way.

    Returns INEQUIVALENT with the shortest input word leading to a pair of
    states that differ in outputs or in their proposition sets.
    """
    if a.label(a.machine.initial) != b.label(b.machine.initial):
        return EquivalenceResult(False, ())
    seen = {(a.machine.initial, b.machine.initial)}
    frontier = deque([((a.machine.initial, b.machine.initial), ())])
    alphabet = a.machine.inputs
    if set(alphabet) != set(b.machine.inputs):
        raise MachineError("input alphabets differ")
    while frontier:
        (qa, qb), prefix = frontier.popleft()
        for sym in alphabet:
            na, oa = a.machine.transitions[(qa, sym)]
            nb, ob = b.machine.transitions[(qb, sym)]
            word = prefix + (sym,)
            if oa != ob or a.label(na) != b.label(nb):
                return EquivalenceResult(False, word, a.machine.run(word), b.machine.run(word))
            if (na, nb) not in seen:
                seen.add((na, nb))
                frontier.append(((na, nb), word))
    return EquivalenceResult(True)


# ---------------------------------------------------------------------------
# DOT rendering of annotated machines
# ---------------------------------------------------------------------------
#
# Node labels carry 'state {P1,P2}', internal states 'state {P1 | T1}' and a
# diamond shape; parse_annotated_dot reverses the encoding.

def _node_label(a: AnnotatedMachine, q: str) -> str:
    props = ",".join(sorted(a.label(q)))
    if q in a.tau_states:
        temps = ",".join(sorted(a.temps(q)))
        return f"{q} {{{props} | {temps}}}"
    return f"{q} {{{props}}}"


def emit_annotated_dot(a: AnnotatedMachine, name: str = "annotated") -> str:
    m = a.machine
    lines = [f"digraph {name} {{"]
    lines.append(f'  {START_NODE} [shape=none, label=""];')
    lines.append(f"  {START_NODE} -> {_quote(m.initial)};")
    for q in m.states:
        shape = "diamond" if q in a.tau_states else "circle"
        lines.append(f'  {_quote(q)} [shape={shape}, label="{_escape(_node_label(a, q))}"];')
    for q in m.states:
        symbols = m.inputs if q not in a.tau_states else (EPSILON,)
        for sym in symbols:
            entry = m.transitions.get((q, sym))
            if entry is None:
                continue
            dst, out = entry
            label = f"{_escape(sym)} / {_escape(out)}"
            lines.append(f'  {_quote(q)} -> {_quote(dst)} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


_NODE_LABEL_RE = re.compile(r"^(?P<id>.*?)\s*\{(?P<props>[^|{}]*)(?:\|(?P<temps>[^{}]*))?\}$")


def parse_annotated_dot(text: str) -> AnnotatedMachine:
    initial: str | None = None
    labels: dict[str, frozenset[str]] = {}
    temp_labels: dict[str, frozenset[str]] = {}
    tau_states: set[str] = set()
    node_order: list[str] = []
    edges = []

    for lineno, line in dot_statements(text):
        m = _EDGE_RE.match(line)
        if m:
            src, dst = _strip_token(m.group(1)), _strip_token(m.group(2))
            attrs = _parse_attrs(m.group(3))
            if src == START_NODE:
                initial = dst
                continue
            label = attrs.get("label")
            if label is None:
                raise MachineError(f"line {lineno}: unlabeled edge")
            sym, out = _split_label(label, lineno)
            edges.append((src, dst, sym, out, lineno))
            continue
        m = _NODE_RE.match(line)
        if m:
            name = _strip_token(m.group(1))
            if name == START_NODE:
                continue
            attrs = _parse_attrs(m.group(2))
            node_order.append(name)
            lm = _NODE_LABEL_RE.match(attrs.get("label", ""))
            if lm:
                props = frozenset(p.strip() for p in lm.group("props").split(",") if p.strip())
                labels[name] = props
                if lm.group("temps") is not None:
                    tau_states.add(name)
                    temp_labels[name] = frozenset(
                        t.strip() for t in lm.group("temps").split(",") if t.strip()
                    )
            continue
        raise MachineError(f"line {lineno}: cannot parse statement {line!r}")

    if initial is None:
        raise MachineError("no initial state marker")
    transitions = {}
    inputs, outputs = [], []
    for src, dst, sym, out, lineno in edges:
        if (src, sym) in transitions:
            raise MachineError(f"line {lineno}: nondeterminism at {src!r} on {sym!r}")
        transitions[(src, sym)] = (dst, out)
        if sym not in inputs and sym != EPSILON:
            inputs.append(sym)
        if out not in outputs:
            outputs.append(out)
    machine = MealyMachine(tuple(node_order), tuple(inputs), tuple(outputs),
                           initial, transitions, require_complete=False)
    return AnnotatedMachine(machine, labels, frozenset(tau_states), temp_labels)
