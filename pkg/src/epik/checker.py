"""Formula evaluation on epistemic structures and the checking pipeline.

Knowledge is evaluated with a satisfaction-vector sweep: the worlds
satisfying the operand are computed bottom-up as a boolean vector, worlds
are grouped by their projection onto the agent's observable variables,
and a knowledge atom holds exactly on the groups where the operand holds
everywhere.  `check_system` drives the three pipeline levels:

  level 0  explicit enumeration of all runs (the ground-truth baseline),
  level 1  unfold and merge, then restrict to the formula variables plus
           every observation set an operator mentions,
  level 2  the full optimization: unfold, merge, relevance analysis,
           leaf elimination, and marginalization to the relevance set.

All levels agree on the verdict; they differ in how much model they build.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckError
from .frontend import (
    FAnd,
    FAtom,
    FKnows,
    FNot,
    Formula,
    SystemSpec,
    formula_agents,
    formula_atoms,
)
from .model import (
    EpistemicStructure,
    epistemic_marginalize,
    equality_merge,
    resolve_formula,
    timed,
    unfold,
)
from .relevance import kappa
from .semantics import DEFAULT_WORLD_CAP, enumerate_structure


@dataclass(frozen=True)
class Verdict:
    outcome: str  # "valid" | "fails"
    counterexample: dict[str, int] | None = None

    @property
    def is_valid(self) -> bool:
        return self.outcome == "valid"


@dataclass
class PipelineStats:
    level: int
    vars_raw: int | None = None
    vars_merged: int | None = None
    vars_kappa: int | None = None
    worlds_final: int = 0
    max_intermediate_tuples: int = 0
    elim_len: int = 0
    stage_ms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "vars_raw": self.vars_raw,
            "vars_merged": self.vars_merged,
            "vars_kappa": self.vars_kappa,
            "worlds_final": self.worlds_final,
            "max_intermediate_tuples": self.max_intermediate_tuples,
            "elim_len": self.elim_len,
            "stage_ms": {k: round(v, 3) for k, v in self.stage_ms.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# -- evaluation ---------------------------------------------------------------


def _check_resolved(m: EpistemicStructure, f: Formula) -> None:
    have = set(m.vars)
    for name, t in formula_atoms(f):
        if t is not None:
            raise CheckError(f"atom {name!r} still carries a time stamp; resolve it first")
        if name not in have:
            raise CheckError(f"atom {name!r} is not a variable of the structure")
    for agent in formula_agents(f):
        if agent not in m.obs:
            raise CheckError(f"unknown agent {agent!r}")


def _group_inverse(rows: np.ndarray, cols: list[int], sizes: list[int]) -> tuple[np.ndarray, int]:
    if not cols:
        return np.zeros(rows.shape[0], dtype=np.int64), 1
    from .valuation import _group_ids

    inv = _group_ids(np.ascontiguousarray(rows[:, cols]), sizes)
    return inv, int(inv.max()) + 1 if inv.size else 0


def compute_sat(m: EpistemicStructure, f: Formula) -> np.ndarray:
    """Boolean vector over the structure's worlds (internal row order)."""
    _check_resolved(m, f)
    rows = m.worlds._rows
    pos = {v: j for j, v in enumerate(m.vars)}
    group_cache: dict[str, tuple[np.ndarray, int]] = {}

    def walk(g: Formula) -> np.ndarray:
        if isinstance(g, FAtom):
            return rows[:, pos[g.name]] == 1
        if isinstance(g, FNot):
            return ~walk(g.arg)
        if isinstance(g, FAnd):
            return walk(g.left) & walk(g.right)
        inner = walk(g.arg)
        if g.agent not in group_cache:
            cols = sorted(pos[v] for v in m.obs[g.agent] if v in pos)
            sizes = [m.worlds.frames[j] for j in cols]
            group_cache[g.agent] = _group_inverse(rows, cols, sizes)
        inv, ngroups = group_cache[g.agent]
        everywhere = np.ones(ngroups, dtype=bool)
        np.logical_and.at(everywhere, inv, inner)
        return everywhere[inv]

    return walk(f)


def holds(m: EpistemicStructure, world: dict[str, int], f: Formula) -> bool:
    """Truth of a resolved formula at one world of the structure."""
    if set(world) != set(m.vars):
        raise CheckError("world does not assign exactly the structure's variables")
    row = np.array([world[v] for v in m.vars], dtype=np.uint8)
    hits = np.nonzero((m.worlds._rows == row).all(axis=1))[0]
    if hits.size == 0:
        raise CheckError("world is not a member of the structure")
    return bool(compute_sat(m, f)[hits[0]])


def holds_naive(m: EpistemicStructure, world: dict[str, int], f: Formula) -> bool:
    """Direct per-world recursion; the independent cross-check for the
    satisfaction-vector evaluation."""
    _check_resolved(m, f)

    def at(w: dict[str, int], g: Formula) -> bool:
        if isinstance(g, FAtom):
            return w[g.name] == 1
        if isinstance(g, FNot):
            return not at(w, g.arg)
        if isinstance(g, FAnd):
            return at(w, g.left) and at(w, g.right)
        obs = m.obs[g.agent] & set(m.vars)
        view = {v: w[v] for v in obs}
        for other in m.worlds.assignments():
            if all(other[v] == view[v] for v in obs) and not at(other, g.arg):
                return False
        return True

    if not any(np.array_equal(np.array([world[v] for v in m.vars], dtype=np.uint8), r)
               for r in m.worlds._rows):
        raise CheckError("world is not a member of the structure")
    return at(world, f)


def check_valid(m: EpistemicStructure, f: Formula) -> Verdict:
    """Valid iff the formula holds at every world; otherwise the
    lexicographically least failing world is the counterexample."""
    sat = compute_sat(m, f)
    if bool(sat.all()):
        return Verdict("valid")
    failing = m.worlds._rows[~sat]
    if failing.shape[1]:
        least = failing[np.lexsort(failing.T[::-1])[0]]
    else:
        least = failing[0]
    world = {v: int(x) for v, x in zip(m.vars, least)}
    return Verdict("fails", world)


# -- pipeline ------------------------------------------------------------------


def check_system(
    spec: SystemSpec,
    formula: Formula | None = None,
    level: int = 2,
    cap: int = DEFAULT_WORLD_CAP,
    eval_time: int | None = None,
    horizon: int | None = None,
) -> tuple[Verdict, PipelineStats]:
    """Check that the formula holds at every world of the system."""
    if level not in (0, 1, 2):
        raise CheckError(f"unknown pipeline level {level}")
    h = spec.horizon if horizon is None else horizon
    f = spec.stamped_formula(eval_time) if formula is None else formula
    stats = PipelineStats(level=level)

    def clock(stage):
        class _Timer:
            def __enter__(self_inner):
                self_inner.t0 = time.perf_counter()

            def __exit__(self_inner, *exc):
                stats.stage_ms[stage] = (time.perf_counter() - self_inner.t0) * 1000.0

        return _Timer()

    if level == 0:
        with clock("enumerate"):
            m = enumerate_structure(spec, horizon=h, cap=cap)
        stats.vars_raw = len(m.vars)
        rf = resolve_formula(f)
        with clock("check"):
            verdict = check_valid(m, rf)
        stats.worlds_final = len(m.worlds)
        stats.max_intermediate_tuples = len(m.worlds)
        return verdict, stats

    with clock("unfold"):
        sm = unfold(spec, h)
    stats.vars_raw = sm.count("program")
    with clock("merge"):
        sm, alias = equality_merge(sm)
    stats.vars_merged = sm.count("program")
    rf = resolve_formula(f, alias)

    mstats: dict = {}
    if level == 1:
        atoms = {name for name, _ in formula_atoms(rf)}
        target = set(atoms)
        for agent in formula_agents(rf):
            target |= sm.obs[agent]
        with clock("marginalize"):
            m = epistemic_marginalize(sm, target, stats=mstats)
    else:
        with clock("kappa"):
            rel = kappa(rf, sm)
        stats.vars_kappa = len(rel.model_vars)
        with clock("marginalize"):
            m = epistemic_marginalize(sm, rel.final, stats=mstats)
    stats.worlds_final = len(m.worlds)
    stats.max_intermediate_tuples = mstats.get("max_intermediate_tuples", 0)
    stats.elim_len = mstats.get("elim_len", 0)
    with clock("check"):
        verdict = check_valid(m, rf)
    return verdict, stats


def expand_witness(
    spec: SystemSpec,
    partial: dict[str, int],
    formula: Formula | None = None,
    cap: int = DEFAULT_WORLD_CAP,
    eval_time: int | None = None,
) -> list[dict[str, int]]:
    """Full-length counterexample run consistent with a marginal world.

    Re-enumerates the system (so only feasible at oracle scale), picks the
    least failing world matching the marginal counterexample, and returns
    it as one state dict per tick.
    """
    f = spec.stamped_formula(eval_time) if formula is None else formula
    sm, alias = equality_merge(unfold(spec))
    preimage: dict[str, list[str]] = {}
    for removed, survivor in alias.items():
        preimage.setdefault(survivor, []).append(removed)

    def raw_name(name: str) -> str:
        if "." not in name.split("@")[-1]:
            return name
        for cand in sorted(preimage.get(name, ())):
            if "." not in cand.split("@")[-1]:
                return cand
        raise CheckError(f"cannot map {name!r} back to a program variable")

    m = enumerate_structure(spec, cap=cap)
    rf = resolve_formula(f)
    sat = compute_sat(m, rf)
    rows = m.worlds._rows
    mask = ~sat
    pos = {v: j for j, v in enumerate(m.vars)}
    for name, value in partial.items():
        mask &= rows[:, pos[raw_name(name)]] == value
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        raise CheckError("no full-length run matches the marginal counterexample")
    world = {v: int(rows[idx[0], j]) for v, j in pos.items()}
    run = []
    for t in range(spec.horizon + 1):
        run.append({v: world[timed(v, t)] for v in spec.variables})
    return run
