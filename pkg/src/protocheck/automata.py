"""Deterministic Mealy machines: representation, DOT serialization, equivalence.

A machine is a finite-state transducer (states, inputs, outputs, transition
map, initial state) where every (state, input) pair has exactly one
(next state, output) entry.  Machines are treated as immutable after
construction; all operations here are pure functions.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field

# Input symbol reserved for the empty input on internal (tau) states.
EPSILON = "__eps"
# Output symbol reserved for the first half of a split internal transition.
TAU = "__tau"
# Pseudo-node marking the initial state in DOT files.
START_NODE = "__start"

Word = tuple[str, ...]


class MachineError(ValueError):
    """Raised for structurally invalid machines or unparsable DOT input."""


@dataclass(frozen=True)
class MealyMachine:
    """Deterministic, input-complete Mealy machine.

    ``transitions`` maps (state, input) to (next state, output) and houses
    both the transition and the output function.  ``states``, ``inputs`` and
    ``outputs`` are ordered: their order fixes serialization and code
    generation order everywhere downstream.
    """

    states: tuple[str, ...]
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    initial: str
    transitions: dict[tuple[str, str], tuple[str, str]]
    require_complete: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.states)) != len(self.states):
            raise MachineError("duplicate state identifiers")
        if len(set(self.inputs)) != len(self.inputs):
            raise MachineError("duplicate input symbols")
        if self.initial not in self.states:
            raise MachineError(f"initial state {self.initial!r} not among states")
        state_set = set(self.states)
        output_set = set(self.outputs)
        for (src, sym), (dst, out) in self.transitions.items():
            if src not in state_set:
                raise MachineError(f"transition from unknown state {src!r}")
            if dst not in state_set:
                raise MachineError(f"transition into unknown state {dst!r}")
            if sym not in self.inputs and sym != EPSILON:
                raise MachineError(f"transition on unknown input {sym!r}")
            if out not in output_set:
                raise MachineError(f"transition with unknown output {out!r}")
        if EPSILON in self.inputs:
            raise MachineError(f"{EPSILON!r} is reserved and may not appear in the input alphabet")
        if self.require_complete:
            missing = [
                (q, a) for q in self.states for a in self.inputs
                if (q, a) not in self.transitions
            ]
            if missing:
                q, a = missing[0]
                raise MachineError(
                    f"machine is not input-complete: no transition for state {q!r} "
                    f"on input {a!r} ({len(missing)} missing in total)"
                )

    def step(self, state: str, symbol: str) -> tuple[str, str]:
        return self.transitions[(state, symbol)]

    def run(self, word: Word, start: str | None = None) -> Word:
        """Output word produced by feeding ``word`` from ``start`` (default q0)."""
        state = self.initial if start is None else start
        outputs = []
        for symbol in word:
            state, out = self.transitions[(state, symbol)]
            outputs.append(out)
        return tuple(outputs)

    def successors(self, state: str):
        for sym in self.inputs:
            entry = self.transitions.get((state, sym))
            if entry is not None:
                yield sym, entry[0], entry[1]


def complete(m: MealyMachine, no_response: str = "no_response") -> MealyMachine:
    """Fill missing (state, input) pairs with self-loops emitting ``no_response``.

    This is the downgrade path for hand-edited fixtures; learned models are
    total already.
    """
    transitions = dict(m.transitions)
    added = False
    for q in m.states:
        for a in m.inputs:
            if (q, a) not in transitions:
                transitions[(q, a)] = (q, no_response)
                added = True
    outputs = m.outputs
    if added and no_response not in outputs:
        outputs = outputs + (no_response,)
    return MealyMachine(m.states, m.inputs, outputs, m.initial, transitions)


def reachable(m: MealyMachine) -> MealyMachine:
    """Restriction of ``m`` to the states reachable from its initial state."""
    seen = {m.initial}
    frontier = deque([m.initial])
    while frontier:
        q = frontier.popleft()
        for _, dst, _ in m.successors(q):
            if dst not in seen:
                seen.add(dst)
                frontier.append(dst)
    states = tuple(q for q in m.states if q in seen)
    transitions = {
        (q, a): v for (q, a), v in m.transitions.items() if q in seen
    }
    used_outputs = {out for (_, out) in transitions.values()}
    outputs = tuple(o for o in m.outputs if o in used_outputs)
    return MealyMachine(states, m.inputs, outputs, m.initial, transitions,
                        require_complete=m.require_complete)


@dataclass(frozen=True)
class EquivalenceResult:
    equivalent: bool
    witness: Word | None = None
    left_outputs: Word | None = None
    right_outputs: Word | None = None

    def __bool__(self):
        return self.equivalent


def bisimilar(a: MealyMachine, b: MealyMachine,
              restrict_to_shared: bool = False) -> EquivalenceResult:
    """Check output-trace equivalence of two deterministic machines.

    For deterministic input-complete Mealy machines bisimilarity coincides
    with trace equivalence, so a breadth-first product search suffices; it
    returns a shortest distinguishing input word when the machines differ.
    """
    if set(a.inputs) != set(b.inputs):
        if not restrict_to_shared:
            only_a = sorted(set(a.inputs) - set(b.inputs))
            only_b = sorted(set(b.inputs) - set(a.inputs))
            raise MachineError(
                "input alphabets differ "
                f"(left-only: {only_a}, right-only: {only_b}); "
                "pass restrict_to_shared=True to compare on the intersection"
            )
        alphabet = tuple(s for s in a.inputs if s in set(b.inputs))
    else:
        alphabet = a.inputs
    start = (a.initial, b.initial)
    seen = {start}
    frontier = deque([(start, ())])
    while frontier:
        (qa, qb), prefix = frontier.popleft()
        for sym in alphabet:
            na, oa = a.transitions[(qa, sym)]
            nb, ob = b.transitions[(qb, sym)]
            word = prefix + (sym,)
            if oa != ob:
                return EquivalenceResult(False, word, a.run(word), b.run(word))
            pair = (na, nb)
            if pair not in seen:
                seen.add(pair)
                frontier.append((pair, word))
    return EquivalenceResult(True)


# ---------------------------------------------------------------------------
# DOT serialization
# ---------------------------------------------------------------------------
#
# Symbols are opaque tokens, so they are escaped on emit (backslash, quote,
# and the label separator '/') and unescaped on parse; this keeps symbols
# like '10_01' or ones containing '/' stable across round-trips.

_PLAIN_ID = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$|^[0-9]+$")


def _escape(symbol: str) -> str:
    return symbol.replace("\\", "\\\\").replace('"', '\\"').replace("/", "\\/")


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _quote(symbol: str) -> str:
    escaped = _escape(symbol)
    if _PLAIN_ID.match(symbol) and symbol == escaped:
        return symbol
    return f'"{escaped}"'


def _split_label(label: str, lineno: int) -> tuple[str, str]:
    """Split an edge label 'input / output' on the first unescaped '/'."""
    depth_escape = False
    for i, ch in enumerate(label):
        if depth_escape:
            depth_escape = False
            continue
        if ch == "\\":
            depth_escape = True
            continue
        if ch == "/":
            return _unescape(label[:i].strip()), _unescape(label[i + 1:].strip())
    raise MachineError(f"line {lineno}: edge label {label!r} lacks 'input / output' separator")


_TOKEN = r'(?:"(?:\\.|[^"\\])*"|[A-Za-z0-9_.+-]+)'
_EDGE_RE = re.compile(rf"^({_TOKEN})\s*->\s*({_TOKEN})\s*(?:\[(.*)\])?\s*;?$")
_NODE_RE = re.compile(rf"^({_TOKEN})\s*(?:\[(.*)\])?\s*;?$")
_ATTR_RE = re.compile(rf'(\w+)\s*=\s*({_TOKEN})')

# statement prefixes that carry no machine content
_SKIP_PREFIXES = ("digraph", "graph", "strict", "rankdir", "node ", "node[",
                  "edge ", "edge[", "subgraph")


def _strip_token(token: str) -> str:
    if token.startswith('"'):
        return _unescape(token[1:-1])
    return token


def _parse_attrs(attr_text: str | None) -> dict[str, str]:
    """Attribute map with values kept raw (quotes stripped, escapes intact);
    escape resolution happens exactly once at the point of use."""
    if not attr_text:
        return {}
    out = {}
    for key, value in _ATTR_RE.findall(attr_text):
        out[key] = value[1:-1] if value.startswith('"') else value
    return out


def dot_statements(text: str):
    """Split a DOT document into (line number, statement) pairs.

    Statements are separated by ';', newlines and braces outside quoted
    strings, so single-line documents and multi-statement lines both work.
    Comment lines ('#', '//') and structural headers are dropped.
    """
    buf: list[str] = []
    line = 1
    start_line = 1
    in_quote = False
    escape = False

    def flush():
        statement = "".join(buf).strip()
        buf.clear()
        if not statement or statement.startswith(("#", "//")):
            return None
        lowered = statement.lower()
        if any(lowered.startswith(p) for p in _SKIP_PREFIXES):
            return None
        return statement

    out = []
    for ch in text:
        if in_quote:
            buf.append(ch)
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_quote = False
            if ch == "\n":
                line += 1
            continue
        if ch == '"':
            in_quote = True
            buf.append(ch)
            continue
        if ch in (";", "\n", "{", "}"):
            statement = flush()
            if statement is not None:
                out.append((start_line, statement))
            if ch == "\n":
                line += 1
            start_line = line
            continue
        if not buf and ch.isspace():
            start_line = line
            continue
        buf.append(ch)
    statement = flush()
    if statement is not None:
        out.append((start_line, statement))
    return out


def parse_dot(text: str, complete_missing: bool = False,
              no_response: str = "no_response") -> MealyMachine:
    """Parse a GraphViz DOT document into a validated Mealy machine.

    Edges must be labeled ``input / output``.  The initial state is marked
    either by an edge from the pseudo-node ``__start`` or by a node attribute
    ``initial=true``.  Alphabets are inferred from the symbols seen.
    """
    edges: list[tuple[str, str, str, str, int]] = []
    initial: str | None = None
    node_order: list[str] = []
    seen_nodes: set[str] = set()

    def note_node(name: str):
        if name not in seen_nodes:
            seen_nodes.add(name)
            node_order.append(name)

    for lineno, line in dot_statements(text):
        m = _EDGE_RE.match(line)
        if m:
            src, dst = _strip_token(m.group(1)), _strip_token(m.group(2))
            attrs = _parse_attrs(m.group(3))
            if src == START_NODE:
                if initial is not None and initial != dst:
                    raise MachineError(f"line {lineno}: multiple initial states ({initial!r}, {dst!r})")
                initial = dst
                note_node(dst)
                continue
            label = attrs.get("label")
            if label is None:
                raise MachineError(f"line {lineno}: edge {src!r} -> {dst!r} has no label")
            sym, out = _split_label(label, lineno)
            note_node(src)
            note_node(dst)
            edges.append((src, dst, sym, out, lineno))
            continue
        m = _NODE_RE.match(line)
        if m:
            name = _strip_token(m.group(1))
            attrs = _parse_attrs(m.group(2))
            if name == START_NODE:
                continue
            note_node(name)
            if attrs.get("initial", "").lower() == "true":
                if initial is not None and initial != name:
                    raise MachineError(f"line {lineno}: multiple initial states ({initial!r}, {name!r})")
                initial = name
            continue
        raise MachineError(f"line {lineno}: cannot parse statement {line!r}")

    if initial is None:
        raise MachineError("no initial state: add a '__start -> q' edge or an initial=true attribute")
    if not node_order:
        raise MachineError("document contains no states")

    transitions: dict[tuple[str, str], tuple[str, str]] = {}
    inputs: list[str] = []
    outputs: list[str] = []
    for src, dst, sym, out, lineno in edges:
        key = (src, sym)
        if key in transitions and transitions[key] != (dst, out):
            raise MachineError(
                f"line {lineno}: nondeterminism at state {src!r} on input {sym!r}"
            )
        transitions[key] = (dst, out)
        if sym not in inputs:
            inputs.append(sym)
        if out not in outputs:
            outputs.append(out)

    machine = MealyMachine(tuple(node_order), tuple(inputs), tuple(outputs),
                           initial, transitions,
                           require_complete=not complete_missing)
    if complete_missing:
        machine = complete(machine, no_response)
    return machine


def emit_dot(m: MealyMachine, name: str = "mealy") -> str:
    """Canonical DOT text for ``m``; ``parse_dot`` round-trips it exactly."""
    lines = [f"digraph {name} {{"]
    lines.append(f'  {START_NODE} [shape=none, label=""];')
    lines.append(f"  {START_NODE} -> {_quote(m.initial)};")
    for q in m.states:
        lines.append(f"  {_quote(q)};")
    for q in m.states:
        for sym in m.inputs:
            entry = m.transitions.get((q, sym))
            if entry is None:
                continue
            dst, out = entry
            label = f"{_escape(sym)} / {_escape(out)}"
            lines.append(f'  {_quote(q)} -> {_quote(dst)} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def isomorphic(a: MealyMachine, b: MealyMachine) -> bool:
    """Graph isomorphism respecting labels and the initial state.

    Deterministic machines admit a canonical reachability-order matching, so
    one synchronized traversal decides isomorphism of their reachable parts.
    """
    if set(a.inputs) != set(b.inputs):
        return False
    mapping = {a.initial: b.initial}
    frontier = deque([a.initial])
    while frontier:
        qa = frontier.popleft()
        qb = mapping[qa]
        for sym in a.inputs:
            ea, eb = a.transitions.get((qa, sym)), b.transitions.get((qb, sym))
            if (ea is None) != (eb is None):
                return False
            if ea is None:
                continue
            (na, oa), (nb, ob) = ea, eb
            if oa != ob:
                return False
            if na in mapping:
                if mapping[na] != nb:
                    return False
            else:
                mapping[na] = nb
                frontier.append(na)
    return len(set(mapping.values())) == len(mapping)
