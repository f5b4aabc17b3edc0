"""Two-actor model construction and Rebeca source emission.

An annotated machine becomes a pair of actors: a system actor owning the
state variable plus one boolean per state proposition, and an environment
actor that nondeterministically picks inputs, collects outputs, and owns one
boolean per temporary proposition.  The environment's request handler resets
all temporaries and fires the next input; each output handler sets the
temporaries matched by the proposition map for the provoking input (passed
as a case index) and calls request again.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .automata import MealyMachine
from .cpm import AnnotatedMachine, Cpm

TIMEOUT_PROP = "TIMEOUT"
QUEUE_CAPACITY = 3


class ActorGenError(ValueError):
    """Raised for machines or maps the template cannot express."""


@dataclass(frozen=True)
class MutationConfig:
    """Timeout fault injection: model checking treats the timeout branch as
    pure nondeterminism; the probability only parameterizes simulation."""

    timeout_enabled: bool = False
    timeout_probability: float = 0.1

    def __post_init__(self):
        if self.timeout_enabled and not (0.0 < self.timeout_probability < 1.0):
            raise ActorGenError("timeout probability must lie strictly between 0 and 1")


@dataclass(frozen=True)
class SystemBranch:
    """One guard arm of an input handler: at ``state``, jump to ``target``,
    flip the listed propositions, and call the output handler with the
    provoking input's case index."""

    state: str
    target: str
    prop_updates: tuple[tuple[str, bool], ...]
    output: str
    case_index: int


@dataclass(frozen=True)
class ActorModelIR:
    machine: MealyMachine
    state_props: tuple[str, ...]
    temp_props: tuple[str, ...]
    # input symbol -> one branch per state, in state order
    handlers: dict[str, tuple[SystemBranch, ...]]
    # output symbol -> (case index, temp props set there), occurring cases only
    output_cases: dict[str, tuple[tuple[int, frozenset[str]], ...]]
    initial_props: frozenset[str]
    queue_capacity: int = QUEUE_CAPACITY
    mutation: MutationConfig | None = None

    @property
    def state_index(self) -> dict[str, int]:
        return {q: i for i, q in enumerate(self.machine.states)}

    @property
    def case_index(self) -> dict[str, int]:
        return {sym: i for i, sym in enumerate(self.machine.inputs)}


def build_ir(a: AnnotatedMachine, cpm: Cpm) -> ActorModelIR:
    """Instantiate the template from an unexpanded annotated machine.

    Temporary-proposition information is drawn from the map's temporary
    rules, so the machine must be the plain annotated one (internal states
    are a view for checking, not an input here).
    """
    if a.tau_states:
        raise ActorGenError("build the actor model from the unexpanded machine")
    m = a.machine
    missing = [(q, s) for q in m.states for s in m.inputs if (q, s) not in m.transitions]
    if missing:
        raise ActorGenError(f"machine is not input-complete: missing {missing[:3]}")

    state_props = tuple(sorted(cpm.state_props))
    temp_props = tuple(sorted(cpm.temp_props))

    handlers: dict[str, tuple[SystemBranch, ...]] = {}
    for case, sym in enumerate(m.inputs):
        branches = []
        for q in m.states:
            dst, out = m.transitions[(q, sym)]
            src_labels, dst_labels = a.label(q), a.label(dst)
            updates = tuple(
                (p, p in dst_labels)
                for p in state_props
                if (p in dst_labels) != (p in src_labels)
            )
            branches.append(SystemBranch(q, dst, updates, out, case))
        handlers[sym] = tuple(branches)

    output_cases: dict[str, list[tuple[int, frozenset[str]]]] = {}
    seen_pairs = set()
    for q in m.states:
        for case, sym in enumerate(m.inputs):
            dst, out = m.transitions[(q, sym)]
            if (case, out) in seen_pairs:
                continue
            seen_pairs.add((case, out))
            temps = frozenset().union(
                *[c.props for c in cpm.taus if c.matches_pair(sym, out)])
            output_cases.setdefault(out, []).append((case, temps))

    return ActorModelIR(
        machine=m,
        state_props=state_props,
        temp_props=temp_props,
        handlers=handlers,
        output_cases={out: tuple(sorted(v)) for out, v in output_cases.items()},
        initial_props=a.label(m.initial),
    )


def apply_timeout_mutation(ir: ActorModelIR, cfg: MutationConfig) -> ActorModelIR:
    """Give every input handler a nondeterministic alternative that resets
    the system to its initial state (propositions included) and calls a new
    environment timeout handler, which raises the reserved timeout temporary."""
    if not cfg.timeout_enabled:
        return ir
    if TIMEOUT_PROP in ir.state_props or TIMEOUT_PROP in ir.temp_props:
        raise ActorGenError(
            f"proposition {TIMEOUT_PROP!r} already declared; cannot add timeout mutation")
    return replace(
        ir,
        temp_props=tuple(sorted(ir.temp_props + (TIMEOUT_PROP,))),
        mutation=cfg,
    )


# ---------------------------------------------------------------------------
# Identifier mapping
# ---------------------------------------------------------------------------
#
# Symbols that are already lower-case identifiers pass through; anything
# else is lower-cased and sanitized behind a fixed prefix (protocol-port
# style for inputs, request style for outputs).  Proposition variables are
# the lower-cased proposition names.

_LOWER_ID = re.compile(r"^[a-z][a-z0-9_]*$")
_RESERVED = {"state", "data", "to", "req", "timeout", "self", "main",
             "system", "environment", "switch", "case", "if", "else",
             "boolean", "int", "true", "false", "msgsrv", "statevars",
             "knownrebecs", "reactiveclass", "break", "default"}


def _sanitize(symbol: str) -> str:
    # always used behind a pp_/req_ prefix, so a digit start is fine
    return re.sub(r"[^A-Za-z0-9_]", "_", symbol).lower() or "sym"


def input_msgsrv_name(symbol: str) -> str:
    if _LOWER_ID.match(symbol) and symbol not in _RESERVED:
        return symbol
    return "pp_" + _sanitize(symbol)


def output_msgsrv_name(symbol: str) -> str:
    if _LOWER_ID.match(symbol) and symbol not in _RESERVED:
        return symbol
    return "req_" + _sanitize(symbol)


def prop_var_name(prop: str) -> str:
    return prop.lower()


def _name_table(symbols, namer, kind: str) -> dict[str, str]:
    table: dict[str, str] = {}
    used: dict[str, str] = {}
    for sym in symbols:
        name = namer(sym)
        if name in used:
            raise ActorGenError(
                f"{kind} symbols {used[name]!r} and {sym!r} map to the same "
                f"identifier {name!r}")
        used[name] = sym
        table[sym] = name
    return table


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

_IND = "   "


def emit_rebeca(ir: ActorModelIR) -> str:
    """Deterministic Rebeca source for the two-actor model.

    Formatting is fixed (alphabet order, sorted proposition names, stable
    indentation) so equal IRs yield byte-identical text.
    """
    m = ir.machine
    in_names = _name_table(m.inputs, input_msgsrv_name, "input")
    out_names = _name_table(ir.output_cases.keys(), output_msgsrv_name, "output")
    prop_vars = _name_table(ir.state_props + ir.temp_props, prop_var_name, "proposition")
    for var in list(prop_vars.values()) + ["state"]:
        if var in set(in_names.values()) | set(out_names.values()):
            raise ActorGenError(f"identifier collision on {var!r}")
    state_index = ir.state_index
    mutated = ir.mutation is not None and ir.mutation.timeout_enabled
    temp_vars = [prop_vars[p] for p in ir.temp_props]

    lines: list[str] = []
    emit = lines.append

    emit(f"reactiveclass Environment({ir.queue_capacity}) {{")
    emit(f"{_IND}statevars {{")
    for var in temp_vars:
        emit(f"{_IND}{_IND}boolean {var};")
    emit(f"{_IND}}}")
    emit(f"{_IND}knownrebecs {{")
    emit(f"{_IND}{_IND}System system;")
    emit(f"{_IND}}}")
    emit(f"{_IND}Environment() {{")
    emit(f"{_IND}{_IND}self.req();")
    emit(f"{_IND}}}")

    emit(f"{_IND}msgsrv req() {{")
    for var in temp_vars:
        emit(f"{_IND}{_IND}{var}=false;")
    if len(m.inputs) == 1:
        emit(f"{_IND}{_IND}int data = 0;")
    else:
        choice = ",".join(str(i) for i in range(len(m.inputs)))
        emit(f"{_IND}{_IND}int data = ?({choice});")
    emit(f"{_IND}{_IND}switch(data) {{")
    for i, sym in enumerate(m.inputs):
        emit(f"{_IND}{_IND}{_IND}case {i}: system.{in_names[sym]}(); break;")
    emit(f"{_IND}{_IND}}}")
    emit(f"{_IND}}}")

    for out in sorted(ir.output_cases, key=lambda o: out_names[o]):
        cases = ir.output_cases[out]
        emit(f"{_IND}msgsrv {out_names[out]}(int data) {{")
        temp_sets = {temps for _, temps in cases}
        if temp_sets == {frozenset()}:
            pass
        elif len(temp_sets) == 1:
            for p in sorted(next(iter(temp_sets))):
                emit(f"{_IND}{_IND}{prop_vars[p]}=true;")
        else:
            emit(f"{_IND}{_IND}switch(data) {{")
            for case, temps in cases:
                setters = "".join(f"{prop_vars[p]}=true;" for p in sorted(temps))
                body = f"{setters}break;" if setters else "break;"
                emit(f"{_IND}{_IND}{_IND}case {case}: {body}")
            emit(f"{_IND}{_IND}}}")
        emit(f"{_IND}{_IND}self.req();")
        emit(f"{_IND}}}")

    if mutated:
        emit(f"{_IND}msgsrv timeout() {{")
        emit(f"{_IND}{_IND}{prop_vars[TIMEOUT_PROP]}=true;")
        emit(f"{_IND}{_IND}self.req();")
        emit(f"{_IND}}}")

    emit("}")

    emit(f"reactiveclass System({ir.queue_capacity}) {{")
    emit(f"{_IND}statevars {{")
    emit(f"{_IND}{_IND}int state;")
    for p in ir.state_props:
        emit(f"{_IND}{_IND}boolean {prop_vars[p]};")
    emit(f"{_IND}}}")
    emit(f"{_IND}knownrebecs {{")
    emit(f"{_IND}{_IND}Environment environment;")
    emit(f"{_IND}}}")
    if ir.initial_props:
        emit(f"{_IND}System() {{")
        for p in sorted(ir.initial_props):
            emit(f"{_IND}{_IND}{prop_vars[p]}=true;")
        emit(f"{_IND}}}")

    for sym in m.inputs:
        emit(f"{_IND}msgsrv {in_names[sym]}() {{")
        indent_body = f"{_IND}{_IND}"
        close = f"{_IND}}}"
        if mutated:
            emit(f"{_IND}{_IND}int to = ?(0,1);")
            emit(f"{_IND}{_IND}if(to==1) {{")
            emit(f"{_IND}{_IND}{_IND}state={state_index[m.initial]};")
            for p in ir.state_props:
                value = "true" if p in ir.initial_props else "false"
                emit(f"{_IND}{_IND}{_IND}{prop_vars[p]}={value};")
            emit(f"{_IND}{_IND}{_IND}environment.timeout();")
            emit(f"{_IND}{_IND}}} else")
        branches = ir.handlers[sym]
        for i, branch in enumerate(branches):
            emit(f"{indent_body}if(state=={state_index[branch.state]}) {{")
            emit(f"{indent_body}{_IND}state={state_index[branch.target]};")
            for p, value in branch.prop_updates:
                emit(f"{indent_body}{_IND}{prop_vars[p]}={'true' if value else 'false'};")
            emit(f"{indent_body}{_IND}environment.{out_names[branch.output]}({branch.case_index});")
            emit(f"{indent_body}}} else" if i < len(branches) - 1 else f"{indent_body}}}")
        emit(close)

    emit("}")
    emit("main {")
    emit(f"{_IND}Environment environment(system):();")
    emit(f"{_IND}System system(environment):();")
    emit("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# IR co-simulation (used by tests and the replay tooling)
# ---------------------------------------------------------------------------

@dataclass
class IrSimulator:
    """Step-level interpreter of the IR's system actor: tracks the state
    variable and proposition booleans exactly as the generated code would."""

    ir: ActorModelIR
    state: str = field(init=False)
    props: set[str] = field(init=False)

    def __post_init__(self):
        self.reset()

    def reset(self):
        self.state = self.ir.machine.initial
        self.props = set(self.ir.initial_props)

    def step(self, symbol: str) -> str:
        branch = next(b for b in self.ir.handlers[symbol] if b.state == self.state)
        self.state = branch.target
        for p, value in branch.prop_updates:
            if value:
                self.props.add(p)
            else:
                self.props.discard(p)
        return branch.output
