"""State-space interpretation of the two-actor model.

Explores the actor semantics message by message into a labeled transition
system, collapses that system back into an (annotated) machine by cutting at
request boundaries, and verifies the round trip: collapse(explore(build(a)))
must be trace-equivalent to ``a`` with identical state labels.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .automata import (EPSILON, TAU, START_NODE, MachineError, MealyMachine,
                       _escape, _quote, _strip_token, _parse_attrs,
                       _EDGE_RE, _NODE_RE, bisimilar, EquivalenceResult,
                       dot_statements, _unescape)
from .cpm import AnnotatedMachine, Cpm, annotated_equal
from .actorgen import (ActorModelIR, MutationConfig, TIMEOUT_PROP, build_ir,
                       apply_timeout_mutation)
from .ltl import KripkeStructure

REQ_LABEL = "req"
TIMEOUT_LABEL = "timeout"


class StateSpaceError(RuntimeError):
    """Raised on exploration ceilings and ill-formed transition systems."""


@dataclass(frozen=True)
class LtsNode:
    index: int
    q: str
    props: frozenset[str]
    temps: frozenset[str]
    phase: str                      # "req" | "ready" | "out" | "timeout"
    pending: tuple | None = None    # ("out", output, case) for out nodes


@dataclass(frozen=True)
class Lts:
    nodes: tuple[LtsNode, ...]
    edges: tuple[tuple[int, str, int], ...]
    initial: int

    def successors(self, index: int):
        for src, label, dst in self.edges:
            if src == index:
                yield label, dst


def explore(ir: ActorModelIR, max_nodes: int = 10 ** 6) -> Lts:
    """Exhaustive breadth-first expansion of the actor semantics.

    One macro step is request (temporaries reset), a nondeterministic input
    choice, the system branch effects, then the output handler effects; each
    delivered message is one edge.  With the timeout mutation every input
    additionally branches to a reset-and-timeout path.
    """
    m = ir.machine
    reserved = {REQ_LABEL, TIMEOUT_LABEL}
    clash = (set(m.inputs) | set(m.outputs)) & reserved
    if clash:
        raise StateSpaceError(f"alphabet symbols collide with reserved message names: {sorted(clash)}")

    temps_for = {
        (case, out): temps
        for out, cases in ir.output_cases.items()
        for case, temps in cases
    }
    branch_by_state = {
        (sym, b.state): b for sym, branches in ir.handlers.items() for b in branches
    }
    mutated = ir.mutation is not None and ir.mutation.timeout_enabled

    nodes: list[LtsNode] = []
    index_of: dict[tuple, int] = {}
    edges: list[tuple[int, str, int]] = []

    def intern(q, props, temps, phase, pending=None) -> int:
        key = (q, props, temps, phase, pending)
        found = index_of.get(key)
        if found is not None:
            return found
        idx = len(nodes)
        if idx >= max_nodes:
            raise StateSpaceError(f"state ceiling exceeded ({max_nodes} nodes)")
        index_of[key] = idx
        nodes.append(LtsNode(idx, q, props, temps, phase, pending))
        return idx

    initial = intern(m.initial, ir.initial_props, frozenset(), "req")
    frontier = deque([initial])
    expanded = set()
    while frontier:
        idx = frontier.popleft()
        if idx in expanded:
            continue
        expanded.add(idx)
        node = nodes[idx]
        targets = []
        if node.phase == "req":
            dst = intern(node.q, node.props, frozenset(), "ready")
            targets.append((REQ_LABEL, dst))
        elif node.phase == "ready":
            for case, sym in enumerate(m.inputs):
                branch = branch_by_state[(sym, node.q)]
                props = set(node.props)
                for p, value in branch.prop_updates:
                    (props.add if value else props.discard)(p)
                dst = intern(branch.target, frozenset(props), frozenset(),
                             "out", ("out", branch.output, case))
                targets.append((sym, dst))
                if mutated:
                    t = intern(m.initial, ir.initial_props, frozenset(), "timeout")
                    targets.append((sym, t))
        elif node.phase == "out":
            _, out, case = node.pending
            temps = temps_for[(case, out)]
            dst = intern(node.q, node.props, temps, "req")
            targets.append((out, dst))
        elif node.phase == "timeout":
            dst = intern(node.q, node.props, frozenset([TIMEOUT_PROP]), "req")
            targets.append((TIMEOUT_LABEL, dst))
        for label, dst in targets:
            edges.append((idx, label, dst))
            if dst not in expanded:
                frontier.append(dst)

    n_temps = len(ir.temp_props)
    bound = (len(m.inputs) + 2) * len(m.states) * (2 ** n_temps)
    assert len(nodes) <= bound, f"node count {len(nodes)} exceeds bound {bound}"
    return Lts(tuple(nodes), tuple(edges), initial)


# ---------------------------------------------------------------------------
# Collapse
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CollapsedModel:
    """Machine recovered from an LTS by cutting at request boundaries.

    ``transitions`` maps (state, input) to the set of observed outcomes;
    deterministic models have exactly one outcome each, the timeout mutation
    yields two.  ``temps`` inside an outcome are the temporaries raised
    between that input and the following reset.
    """

    states: tuple[str, ...]
    inputs: tuple[str, ...]
    initial: str
    transitions: dict[tuple[str, str], tuple[tuple[str, str, frozenset[str]], ...]]
    labels: dict[str, frozenset[str]]

    def is_deterministic(self) -> bool:
        return all(len(v) == 1 for v in self.transitions.values())

    def to_annotated(self) -> AnnotatedMachine:
        """Deterministic collapse as an annotated machine, temporaries
        rendered as internal split states (source-label inheritance)."""
        if not self.is_deterministic():
            raise StateSpaceError("model is nondeterministic; no single machine view")
        transitions: dict[tuple[str, str], tuple[str, str]] = {}
        states = list(self.states)
        labels = {q: self.labels.get(q, frozenset()) for q in self.states}
        tau_states: set[str] = set()
        temp_labels: dict[str, frozenset[str]] = {}
        outputs: list[str] = []
        counter = 0
        for q in self.states:
            for sym in self.inputs:
                if (q, sym) not in self.transitions:
                    raise StateSpaceError(
                        f"collapsed model is partial: no outcome for ({q!r}, {sym!r})")
                (target, out, temps), = self.transitions[(q, sym)]
                if out not in outputs:
                    outputs.append(out)
                if temps:
                    name = f"tau{counter}"
                    counter += 1
                    states.append(name)
                    tau_states.add(name)
                    labels[name] = self.labels.get(q, frozenset())
                    temp_labels[name] = temps
                    transitions[(q, sym)] = (name, TAU)
                    transitions[(name, EPSILON)] = (target, out)
                else:
                    transitions[(q, sym)] = (target, out)
        if tau_states:
            outputs.append(TAU)
        machine = MealyMachine(tuple(states), self.inputs, tuple(outputs),
                               self.initial, transitions, require_complete=False)
        return AnnotatedMachine(machine, labels, frozenset(tau_states), temp_labels)


def _infer_phases(lts: Lts) -> dict[int, str]:
    """Classify nodes by walking the request/input/output message shape from
    the initial node; raises on anything that does not fit the template."""
    phases: dict[int, str] = {}
    out_edges: dict[int, list[tuple[str, int]]] = {n.index: [] for n in lts.nodes}
    for src, label, dst in lts.edges:
        out_edges[src].append((label, dst))

    def assign(idx: int, phase: str):
        if phases.get(idx, phase) != phase:
            raise StateSpaceError(
                f"ill-formed transition system: node {idx} is both "
                f"{phases[idx]} and {phase}")
        phases[idx] = phase

    assign(lts.initial, "req")
    frontier = deque([lts.initial])
    seen = {lts.initial}
    while frontier:
        idx = frontier.popleft()
        phase = phases[idx]
        succ = out_edges[idx]
        if phase == "req":
            if not succ or any(label != REQ_LABEL for label, _ in succ):
                raise StateSpaceError(
                    f"ill-formed transition system: node {idx} should only issue requests")
            for _, dst in succ:
                assign(dst, "ready")
        elif phase == "ready":
            for label, dst in succ:
                if label in (REQ_LABEL,):
                    raise StateSpaceError(
                        f"ill-formed transition system: request out of a ready node {idx}")
                kind = "timeout" if any(l == TIMEOUT_LABEL for l, _ in out_edges[dst]) else "out"
                assign(dst, kind)
        elif phase in ("out", "timeout"):
            if len(succ) != 1:
                raise StateSpaceError(
                    f"ill-formed transition system: pending node {idx} must deliver exactly "
                    f"one message, has {len(succ)}")
            for _, dst in succ:
                assign(dst, "req")
        for _, dst in succ:
            if dst not in seen:
                seen.add(dst)
                frontier.append(dst)
    return phases


def collapse(lts: Lts) -> CollapsedModel:
    """Cut the transition system at request boundaries: nodes observed right
    after a completed reset become machine states and every request ->
    input -> output micro path becomes one (input/output) transition."""
    phases = _infer_phases(lts)
    out_edges: dict[int, list[tuple[str, int]]] = {n.index: [] for n in lts.nodes}
    for src, label, dst in lts.edges:
        out_edges[src].append((label, dst))
    by_index = {n.index: n for n in lts.nodes}

    ready_nodes = [idx for idx in sorted(phases) if phases[idx] == "ready"]
    # name macro states after the underlying machine state when unique
    q_counts: dict[str, int] = {}
    for idx in ready_nodes:
        q_counts[by_index[idx].q] = q_counts.get(by_index[idx].q, 0) + 1
    names: dict[int, str] = {}
    for idx in ready_nodes:
        q = by_index[idx].q
        names[idx] = q if q_counts[q] == 1 else f"{q}__{idx}"

    initial_targets = [dst for _, dst in out_edges[lts.initial]]
    if len(initial_targets) != 1:
        raise StateSpaceError(
            "ill-formed transition system: the initial request must reach "
            f"exactly one node, reaches {len(initial_targets)}")
    (initial_ready,) = initial_targets

    transitions: dict[tuple[str, str], set] = {}
    inputs: list[str] = []
    for ready in ready_nodes:
        for sym, pending in out_edges[ready]:
            if sym not in inputs:
                inputs.append(sym)
            ((out_label, post),) = out_edges[pending]   # arity enforced above
            if phases[post] != "req":
                raise StateSpaceError("ill-formed transition system: output skips the reset")
            req_targets = out_edges[post]
            if len(req_targets) != 1:
                raise StateSpaceError(
                    "ill-formed transition system: a reset must reach exactly "
                    f"one node, node {post} reaches {len(req_targets)}")
            ((_, next_ready),) = req_targets
            temps = by_index[post].temps
            transitions.setdefault((names[ready], sym), set()).add(
                (names[next_ready], out_label, temps))

    states = tuple(names[idx] for idx in ready_nodes)
    labels = {names[idx]: by_index[idx].props for idx in ready_nodes}
    ordered = {
        key: tuple(sorted(vals, key=lambda o: (o[0], o[1], sorted(o[2]))))
        for key, vals in transitions.items()
    }
    return CollapsedModel(states, tuple(inputs), names[initial_ready], ordered, labels)


def kripke_from_collapsed(cm: CollapsedModel,
                          declared: frozenset[str] | None = None) -> KripkeStructure:
    """Kripke view of a collapsed model, nondeterministic outcomes included.

    Outcomes that raised temporaries become internal states labeled with the
    source state's propositions plus those temporaries, mirroring the
    expanded-machine view.
    """
    states = list(cm.states)
    successors: dict[str, list[str]] = {q: [] for q in cm.states}
    labels: dict[str, frozenset[str]] = {q: cm.labels.get(q, frozenset()) for q in cm.states}
    counter = 0
    for (q, sym), outcomes in sorted(cm.transitions.items()):
        for target, out, temps in outcomes:
            if temps:
                name = f"tau{counter}"
                counter += 1
                states.append(name)
                successors[name] = [target]
                labels[name] = labels[q] | temps
                successors[q].append(name)
            else:
                if target not in successors[q]:
                    successors[q].append(target)
    for q in states:
        if not successors[q]:
            successors[q].append(q)
    used = frozenset().union(*labels.values()) if labels else frozenset()
    return KripkeStructure(
        states=tuple(states),
        initial=(cm.initial,),
        successors={q: tuple(v) for q, v in successors.items()},
        labels=labels,
        atomic_props=declared if declared is not None else used,
    )


# ---------------------------------------------------------------------------
# Round trip
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoundtripReport:
    passed: bool
    message: str
    node_count: int
    bisimulation: EquivalenceResult | None = None
    label_check: EquivalenceResult | None = None


def verify_roundtrip(a: AnnotatedMachine, cpm: Cpm,
                     max_nodes: int = 10 ** 6) -> RoundtripReport:
    """Build the actor model, explore it, collapse the state space back and
    compare with the original: trace equivalence plus identical labels."""
    from .cpm import strip_tau

    ir = build_ir(a, cpm)
    lts = explore(ir, max_nodes)
    collapsed = collapse(lts)
    if not collapsed.is_deterministic():
        return RoundtripReport(False, "collapsed model is nondeterministic",
                               len(lts.nodes))
    recovered = strip_tau(collapsed.to_annotated())
    bisim = bisimilar(a.machine, recovered.machine)
    if not bisim.equivalent:
        return RoundtripReport(
            False,
            f"behavior differs on input word {list(bisim.witness)}",
            len(lts.nodes), bisim)
    labels = annotated_equal(a, recovered)
    if not labels.equivalent:
        return RoundtripReport(
            False,
            f"labels differ after input word {list(labels.witness)}",
            len(lts.nodes), bisim, labels)
    return RoundtripReport(True, "PASS", len(lts.nodes), bisim, labels)


def roundtrip_pipeline(m: MealyMachine, cpm: Cpm,
                       mutation: MutationConfig | None = None):
    """Convenience: annotate, build, optionally mutate, explore, collapse."""
    from .cpm import annotate

    a = annotate(m, cpm)
    ir = build_ir(a, cpm)
    if mutation is not None:
        ir = apply_timeout_mutation(ir, mutation)
    lts = explore(ir)
    return a, ir, lts, collapse(lts)


def emit_collapsed_dot(cm: CollapsedModel, name: str = "collapsed") -> str:
    """DOT text for a collapsed model, tolerating nondeterministic outcomes
    (one edge per outcome; temporaries appended to the edge label)."""
    lines = [f"digraph {name} {{"]
    lines.append(f'  {START_NODE} [shape=none, label=""];')
    lines.append(f"  {START_NODE} -> {_quote(cm.initial)};")
    for q in cm.states:
        props = ",".join(sorted(cm.labels.get(q, frozenset())))
        lines.append(f'  {_quote(q)} [label="{_escape(q)} {{{props}}}"];')
    for (q, sym), outcomes in sorted(cm.transitions.items()):
        for target, out, temps in outcomes:
            label = f"{_escape(sym)} / {_escape(out)}"
            if temps:
                label += " [" + ",".join(sorted(temps)) + "]"
            lines.append(f'  {_quote(q)} -> {_quote(target)} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# LTS DOT serialization
# ---------------------------------------------------------------------------

def emit_lts_dot(lts: Lts, name: str = "statespace") -> str:
    lines = [f"digraph {name} {{"]
    lines.append(f'  {START_NODE} [shape=none, label=""];')
    lines.append(f"  {START_NODE} -> n{lts.initial};")
    for node in lts.nodes:
        label = (f"q={_escape(node.q)}; props={','.join(sorted(node.props))}; "
                 f"temps={','.join(sorted(node.temps))}")
        lines.append(f'  n{node.index} [label="{label}"];')
    for src, label, dst in lts.edges:
        lines.append(f'  n{src} -> n{dst} [label="{_escape(label)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def parse_lts_dot(text: str) -> Lts:
    """Parse a transition system exported by :func:`emit_lts_dot` or by an
    external tool using the same conventions; phases are re-derived from the
    message shape when the result is collapsed."""
    initial_name: str | None = None
    raw_nodes: dict[str, tuple[str, frozenset[str], frozenset[str]]] = {}
    order: list[str] = []
    raw_edges: list[tuple[str, str, str]] = []
    for lineno, line in dot_statements(text):
        m = _EDGE_RE.match(line)
        if m:
            src, dst = _strip_token(m.group(1)), _strip_token(m.group(2))
            attrs = _parse_attrs(m.group(3))
            if src == START_NODE:
                initial_name = dst
                continue
            label = attrs.get("label")
            if label is None:
                raise MachineError(f"line {lineno}: unlabeled edge")
            raw_edges.append((src, _unescape(label), dst))
            continue
        m = _NODE_RE.match(line)
        if m:
            name = _strip_token(m.group(1))
            if name == START_NODE:
                continue
            attrs = _parse_attrs(m.group(2))
            label = attrs.get("label", "")
            fields = dict(
                part.strip().split("=", 1)
                for part in label.split(";") if "=" in part
            )
            q = _unescape(fields.get("q", name))
            props = frozenset(p for p in fields.get("props", "").split(",") if p)
            temps = frozenset(t for t in fields.get("temps", "").split(",") if t)
            if name not in raw_nodes:
                order.append(name)
            raw_nodes[name] = (q, props, temps)
            continue
        raise MachineError(f"line {lineno}: cannot parse statement {line!r}")
    if initial_name is None:
        raise MachineError("no initial node marker")
    for src, _, dst in raw_edges:
        for name in (src, dst):
            if name not in raw_nodes:
                order.append(name)
                raw_nodes[name] = (name, frozenset(), frozenset())
    indices = {name: i for i, name in enumerate(order)}
    nodes = tuple(
        LtsNode(indices[name], *raw_nodes[name], phase="", pending=None)
        for name in order
    )
    edges = tuple((indices[s], label, indices[d]) for s, label, d in raw_edges)
    return Lts(nodes, edges, indices[initial_name])
