"""Seeded random generators shared by the property and acceptance tests."""

from __future__ import annotations

import random

from protocheck import MealyMachine, reachable
from protocheck.cpm import Condition, Cpm
from protocheck.ltl import (And, Eventually, Always, Implies, KripkeStructure,
                            Next, Not, Or, Prop, Until)

PROPS = ("p", "q", "r")


def random_machine(rng: random.Random, max_states=8, max_inputs=5,
                   max_outputs=4, symbol_pool=None) -> MealyMachine:
    n = rng.randint(1, max_states)
    k = rng.randint(1, max_inputs)
    if symbol_pool is None:
        states = tuple(f"q{i}" for i in range(n))
        inputs = tuple(f"i{j}" for j in range(k))
        out_pool = [f"o{j}" for j in range(rng.randint(1, max_outputs))]
    else:
        pool = list(symbol_pool)
        states = tuple(rng.sample(pool, n))
        rest = [s for s in pool if s not in states] or pool
        inputs = tuple(rng.sample(rest, min(k, len(rest))))
        out_pool = rng.sample(pool, min(max_outputs, len(pool)))
    transitions = {}
    outputs = []
    for q in states:
        for a in inputs:
            out = rng.choice(out_pool)
            transitions[(q, a)] = (rng.choice(states), out)
            if out not in outputs:
                outputs.append(out)
    machine = MealyMachine(states, inputs, tuple(outputs), states[0], transitions)
    return reachable(machine)


def random_cpm(rng: random.Random, machine: MealyMachine,
               max_props=3, max_temps=2) -> Cpm:
    props = ["A", "B", "C"][: rng.randint(1, max_props)]
    temps = ["T1", "T2"][: rng.randint(0, max_temps)]

    def pattern():
        roll = rng.random()
        if roll < 0.3:
            return "*"
        symbol = rng.choice(machine.inputs + machine.outputs)
        if roll < 0.65 or len(symbol) < 2:
            return symbol
        return symbol[:1] + "*"

    def conditions(names, count):
        made = []
        for _ in range(rng.randint(0, count)):
            chosen = rng.sample(names, rng.randint(1, len(names)))
            made.append(Condition(frozenset(chosen), (pattern(),), (pattern(),)))
        return tuple(made)

    gains = conditions(props, 3)
    loses = conditions(props, 2)
    taus = conditions(temps, 2) if temps else ()
    return Cpm(gains, loses, taus)


def random_kripke(rng: random.Random, max_states=6, max_degree=2) -> KripkeStructure:
    n = rng.randint(1, max_states)
    states = tuple(f"k{i}" for i in range(n))
    successors = {
        s: tuple(rng.choice(states) for _ in range(rng.randint(1, max_degree)))
        for s in states
    }
    labels = {s: frozenset(p for p in PROPS if rng.random() < 0.4) for s in states}
    return KripkeStructure(states, (states[0],), successors, labels, frozenset(PROPS))


def random_formula(rng: random.Random, depth=3, temporal_budget=4):
    budget = [temporal_budget]

    def go(d):
        kinds = ["prop", "not", "and", "or", "implies"]
        if budget[0] > 0:
            kinds += ["G", "F", "X", "U"] * 2
        if d <= 0:
            kinds = ["prop"]
        kind = rng.choice(kinds)
        if kind == "prop":
            return Prop(rng.choice(PROPS))
        if kind in ("G", "F", "X", "U"):
            budget[0] -= 1
        if kind == "not":
            return Not(go(d - 1))
        if kind == "and":
            return And(go(d - 1), go(d - 1))
        if kind == "or":
            return Or(go(d - 1), go(d - 1))
        if kind == "implies":
            return Implies(go(d - 1), go(d - 1))
        if kind == "G":
            return Always(go(d - 1))
        if kind == "F":
            return Eventually(go(d - 1))
        if kind == "X":
            return Next(go(d - 1))
        return Until(go(d - 1), go(d - 1))

    return go(depth)
