"""Shared random-model builders for property and acceptance tests."""

from __future__ import annotations

import itertools
import random

from epik.errors import UnsatisfiableInitError
from epik.frontend import FAnd, FAtom, FKnows, FNot, parse_system
from epik.graph import Dag
from epik.valuation import Relation


def random_dag(rng: random.Random, n: int, p: float = 0.35) -> Dag:
    names = [f"v{i}" for i in range(n)]
    edges = []
    for j in range(n):
        for i in range(j):
            if rng.random() < p:
                edges.append((names[i], names[j]))
    return Dag(names, edges)


def random_structured(rng: random.Random, n: int):
    """Random boolean structured model: a dag plus one relation per node
    whose projection onto the parents is complete."""
    g = random_dag(rng, n)
    rels = {}
    for v in g.vertices:
        pa = sorted(g.parents(v))
        names = pa + [v]
        rows = []
        for assign in itertools.product(*[(0, 1)] * len(pa)):
            choices = rng.choice([(0,), (1,), (0, 1)])
            for val in choices:
                rows.append(tuple(list(assign) + [val]))
        rels[v] = Relation(names, [2] * len(names), rows)
    return g, rels


def _random_expr(rng: random.Random, names: list[str], depth: int) -> str:
    if depth == 0 or rng.random() < 0.4:
        if rng.random() < 0.15:
            return rng.choice(["0", "1"])
        return rng.choice(names)
    if rng.random() < 0.25:
        return f"!{_random_expr(rng, names, depth - 1)}"
    op = rng.choice(["&", "|", "^"])
    return f"({_random_expr(rng, names, depth - 1)} {op} {_random_expr(rng, names, depth - 1)})"


def random_system(rng: random.Random, max_vars: int = 4, max_horizon: int = 3):
    """Parsed random system (retries until the initial condition is
    satisfiable).  Small enough for the enumeration baseline."""
    while True:
        n = rng.randint(2, max_vars)
        names = [f"v{i}" for i in range(n)]
        horizon = rng.randint(1, max_horizon)
        blocks = [f"vars {', '.join(names)};"]
        for a in range(rng.randint(1, 2)):
            obs = rng.sample(names, rng.randint(1, n))
            actions = []
            for _ in range(horizon):
                roll = rng.random()
                if roll < 0.2:
                    actions.append("skip")
                elif roll < 0.5:
                    actions.append(f"rand({rng.choice(names)})")
                else:
                    actions.append(f"{rng.choice(names)} := {_random_expr(rng, names, 2)}")
            blocks.append(
                f"agent A{a} {{ observes: {', '.join(obs)}; protocol: {'; '.join(actions)}; }}"
            )
        if rng.random() < 0.3:
            blocks.append(f"env {{ {rng.choice(names)} := {_random_expr(rng, names, 1)}; }}")
        roll = rng.random()
        if roll < 0.4:
            init = "1"
        elif roll < 0.7:
            lits = [f"{'!' if rng.random() < 0.5 else ''}{v}"
                    for v in rng.sample(names, rng.randint(1, 2))]
            init = " & ".join(lits)
        else:
            init = _random_expr(rng, names, 2)
        blocks.append(f"init: {init};")
        blocks.append(f"horizon: {horizon};")
        text = "\n".join(blocks)
        spec = parse_system(text, "<random>")
        try:
            from epik.model import init_components

            init_components(spec.init)
        except UnsatisfiableInitError:
            continue
        return spec


def random_formula(rng: random.Random, spec, max_k: int = 2):
    """Random stamped formula over a system, knowledge nesting bounded."""
    agents = spec.agent_names()

    def go(depth: int, kbudget: int):
        roll = rng.random()
        if depth == 0 or roll < 0.3:
            return FAtom(rng.choice(spec.variables), rng.randint(0, spec.horizon))
        if roll < 0.5:
            return FNot(go(depth - 1, kbudget))
        if roll < 0.75 or kbudget == 0:
            return FAnd(go(depth - 1, kbudget), go(depth - 1, kbudget))
        return FKnows(rng.choice(agents), go(depth - 1, kbudget - 1))

    return go(3, max_k)
