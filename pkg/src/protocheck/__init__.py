"""Learn, annotate, model-check and test black-box protocol state machines.

The pipeline: infer a Mealy machine from a live system, attach security
propositions to its states with a context-based proposition map, translate
the annotated machine into a two-actor model (emitting actor-language
source), check generic temporal security properties against its state
space, and concretize any violation into a replayable test.
"""

from .automata import (MealyMachine, MachineError, EquivalenceResult,
                       bisimilar, reachable, complete, parse_dot, emit_dot,
                       isomorphic, EPSILON, TAU)
from .cpm import (Condition, Cpm, CpmError, AnnotatedMachine, parse_cpm,
                  emit_cpm, matches, annotate, expand_tau, strip_tau,
                  annotated_equal, emit_annotated_dot, parse_annotated_dot)
from .actorgen import (ActorModelIR, MutationConfig, ActorGenError,
                       build_ir, emit_rebeca, apply_timeout_mutation,
                       IrSimulator, TIMEOUT_PROP)
from .statespace import (Lts, CollapsedModel, StateSpaceError, explore,
                         collapse, verify_roundtrip, kripke_from_collapsed,
                         emit_lts_dot, parse_lts_dot, RoundtripReport)
from .ltl import (Formula, LtlError, parse_ltl, to_nnf, ltl_to_buchi,
                  BuchiAutomaton, KripkeStructure, kripke_from_annotated,
                  Lasso, check, bounded_oracle, evaluate_on_lasso,
                  property_library, parse_property_file, vacuity,
                  CheckResult, HOLDS, VIOLATED, BOUNDED_HOLDS,
                  PROPERTY_TEMPLATES, verdict_text, verdict_jsonl,
                  emit_property_file)
from .learning import (SulInterface, MachineSul, Mapper, MappedSul,
                       ObservationTable, LearnResult, lstar_learn,
                       exact_oracle, random_walk_oracle,
                       canonicalize_nonce_mapper, FreshNonceSul,
                       build_emrtd_sul, build_uds_sul, build_emrtd_machine,
                       build_uds_machine, EMRTD_INPUTS, UDS_INPUTS,
                       LearnError, SulNondeterminismError)
from .testkit import (TestCase, ReplayResult, TestKitError, concretize,
                      replay, feedback, write_tests, read_tests,
                      CONFIRMED, DIVERGED)

__version__ = "0.1.0"
