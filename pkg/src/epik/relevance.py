"""Relevance analysis: which variables does a query actually need?

The relevance set of a formula is computed bottom-up over the structured
model's dependency graph.  Atoms contribute themselves, the propositional
connectives pass sets through, and each knowledge operator adds the
smallest observation subset that graphically separates the operand's
relevance set from the rest of the agent's observations.  Marginalizing
the model to any superset of the result preserves the truth value of the
formula at every world.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import CheckError
from .frontend import FAnd, FAtom, FKnows, FNot, Formula
from .graph import d_separated, minimal_observation_set
from .model import StructuredModel


@dataclass
class RelevanceResult:
    """Per-subformula relevance sets plus the derived model restriction."""

    final: frozenset[str]
    model_vars: frozenset[str]
    subformulas: list[tuple[str, frozenset[str]]] = field(default_factory=list)
    separators: list[tuple[str, frozenset[str]]] = field(default_factory=list)

    def separator_sizes(self) -> list[int]:
        return [len(u) for _, u in self.separators]


def kappa(formula: Formula, sm: StructuredModel) -> RelevanceResult:
    """Relevance of a resolved formula (vertex-id atoms) over a model.

    `final` is the marginalization target; `model_vars` additionally
    closes it under ancestors, i.e. the vertex set of the reduced model
    the optimized pipeline actually computes with.
    """
    result = RelevanceResult(frozenset(), frozenset())

    def walk(f: Formula) -> frozenset[str]:
        if isinstance(f, FAtom):
            if f.time is not None:
                raise CheckError("kappa expects resolved atoms (vertex ids)")
            if f.name not in sm.dag:
                raise CheckError(f"atom {f.name!r} is not a vertex of the model")
            out = frozenset({f.name})
        elif isinstance(f, FNot):
            out = walk(f.arg)
        elif isinstance(f, FAnd):
            out = walk(f.left) | walk(f.right)
        else:
            inner = walk(f.arg)
            obs = sm.obs.get(f.agent)
            if obs is None:
                raise CheckError(f"unknown agent {f.agent!r}")
            u = minimal_observation_set(sm.dag, inner, obs)
            assert u <= obs, "separator must stay inside the observation set"
            assert inner & obs <= u
            assert d_separated(sm.dag, inner - u, obs - u, u)
            result.separators.append((f.agent, u))
            out = u | inner
        result.subformulas.append((_label(f), out))
        return out

    final = walk(formula)
    result.final = final
    result.model_vars = sm.dag.ancestors(final)
    return result


def _label(f: Formula) -> str:
    if isinstance(f, FAtom):
        return f.name
    if isinstance(f, FNot):
        return "not"
    if isinstance(f, FAnd):
        return "and"
    return f"knows:{f.agent}"
