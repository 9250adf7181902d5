"""Concrete operational semantics and the explicit run-enumeration oracle.

A tick composes the next atomic action of every agent (declaration order)
with the environment code and runs the result to termination in zero
time; `rand` statements branch on both values.  The oracle enumerates all
runs up to the horizon and packages them as an epistemic structure over
timed variables; it is meant for desk-scale ground truth, so it refuses
to enumerate past a configurable world cap instead of grinding on.

Run enumeration is vectorized: per tick the distinct reachable states are
held as a numpy matrix, the tick code is applied to whole columns (each
`rand` doubling the matrix), and runs are stored as index vectors into
the per-tick state tables.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .errors import StateSpaceOverflowError, UnsatisfiableInitError
from .frontend import AAtomic, Action, SAssign, SRand, SystemSpec, eval_expr, expr_vars
from .model import EpistemicStructure, init_components, timed
from .valuation import Relation

Run = tuple  # tuple[dict[str, int], ...]

DEFAULT_WORLD_CAP = 2**24


# -- small-step semantics on single states -----------------------------------------


def zero_step_closure(state: Mapping[str, int], code: Sequence) -> list[dict[str, int]]:
    """Terminal states of running code from state in zero time.

    Deterministic statements update in place; every `rand` forks on 0 and 1.
    The result is deduplicated and sorted for reproducibility.
    """
    frontier = [dict(state)]
    for stmt in code:
        if isinstance(stmt, SRand):
            nxt = []
            for s in frontier:
                for value in (0, 1):
                    forked = dict(s)
                    forked[stmt.var] = value
                    nxt.append(forked)
            frontier = nxt
        else:
            for s in frontier:
                s[stmt.var] = int(eval_expr(stmt.expr, s))
    unique = {tuple(sorted(s.items())): s for s in frontier}
    return [dict(items) for items in sorted(unique)]


def tick_step(
    state: Mapping[str, int], pending: Sequence[Action], env: Sequence
) -> list[dict[str, int]]:
    """One clock tick: agents' next atomic actions then the environment,
    composed in order and run to termination in zero time."""
    code: list = []
    for action in pending:
        if isinstance(action, AAtomic):
            code.extend(action.code)
    code.extend(env)
    return zero_step_closure(state, code)


def enumerate_runs(spec: SystemSpec, horizon: int | None = None, limit: int = 100_000) -> list[Run]:
    """All runs as tuples of per-tick states (small instances only)."""
    h = spec.horizon if horizon is None else horizon
    components = init_components(spec.init)
    constrained = {v for names, _ in components for v in names}
    free = [v for v in spec.variables if v not in constrained]
    initial: list[dict[str, int]] = [{}]
    for names, sat in components:
        initial = [
            dict(s, **dict(zip(names, (int(x) for x in row))))
            for s in initial
            for row in sat
        ]
    for v in free:
        initial = [dict(s, **{v: b}) for s in initial for b in (0, 1)]
    runs: list[list[dict[str, int]]] = [[s] for s in initial]
    for t in range(1, h + 1):
        pending = [
            a.actions[t - 1] if t <= len(a.actions) else None for a in spec.agents
        ]
        pending = [p for p in pending if p is not None]
        nxt = []
        for run in runs:
            for succ in tick_step(run[-1], pending, spec.env):
                nxt.append(run + [succ])
                if len(nxt) > limit:
                    raise StateSpaceOverflowError(f"more than {limit} runs")
        runs = nxt
    return [tuple(r) for r in runs]


def format_run(run: Run) -> str:
    """Debug trace: one `t: var=bit,...` line per tick."""
    lines = []
    for t, state in enumerate(run):
        inner = ",".join(f"{v}={state[v]}" for v in sorted(state))
        lines.append(f"{t}: {inner}")
    return "\n".join(lines)


# -- vectorized enumeration ------------------------------------------------------------


def _apply_code_matrix(states: np.ndarray, var_pos: dict[str, int], code: Sequence):
    """Run tick code over a state matrix; returns (matrix, source-index)."""
    mat = states.copy()
    src = np.arange(mat.shape[0], dtype=np.int64)
    for stmt in code:
        j = var_pos[stmt.var]
        if isinstance(stmt, SRand):
            low = mat.copy()
            low[:, j] = 0
            mat[:, j] = 1
            mat = np.vstack([low, mat])
            src = np.concatenate([src, src])
        else:
            env = {v: mat[:, var_pos[v]].astype(np.int64) for v in expr_vars(stmt.expr)}
            value = np.asarray(eval_expr(stmt.expr, env), dtype=np.int64)
            if value.ndim == 0:
                mat[:, j] = int(value)
            else:
                mat[:, j] = value.astype(np.uint8)
    return mat, src


def _final_write_rands(spec: SystemSpec, t: int) -> int:
    """Choices at tick t that survive to the end of the tick (a lower bound
    on the branching factor of the tick)."""
    code: list = []
    for agent in spec.agents:
        action = agent.actions[t - 1] if t <= len(agent.actions) else None
        if isinstance(action, AAtomic):
            code.extend(action.code)
    code.extend(spec.env)
    last_write: dict[str, int] = {}
    for i, stmt in enumerate(code):
        last_write[stmt.var] = i
    return sum(
        1 for i, stmt in enumerate(code) if isinstance(stmt, SRand) and last_write[stmt.var] == i
    )


def enumerate_structure(
    spec: SystemSpec, horizon: int | None = None, cap: int = DEFAULT_WORLD_CAP
) -> EpistemicStructure:
    """Ground-truth epistemic structure: one world per run, assigning every
    timed variable its value along the run; observables are all timed
    instances of each agent's observed variables."""
    h = spec.horizon if horizon is None else horizon
    names = list(spec.variables)
    var_pos = {v: j for j, v in enumerate(names)}

    components = init_components(spec.init)
    constrained = {v for comp_names, _ in components for v in comp_names}
    free = [v for v in names if v not in constrained]

    # cheap lower bound on the world count before materializing anything
    bound = 2 ** len(free)
    for _, sat in components:
        bound *= sat.shape[0]
    for t in range(1, h + 1):
        bound *= 2 ** _final_write_rands(spec, t)
    if bound > cap:
        raise StateSpaceOverflowError(
            f"at least {bound} worlds, above the cap of {cap}; "
            "raise the cap or use the optimized pipeline"
        )

    blocks: list[tuple[list[str], np.ndarray]] = list(components)
    if free:
        grid = np.indices([2] * len(free)).reshape(len(free), -1).T.astype(np.uint8)
        blocks.append((free, grid))
    n0 = 1
    for _, rows in blocks:
        n0 *= rows.shape[0]
    states0 = np.zeros((n0, len(names)), dtype=np.uint8)
    repeat = n0
    for comp_names, rows in blocks:
        repeat //= rows.shape[0]
        tile = n0 // (rows.shape[0] * repeat)
        for j, v in enumerate(comp_names):
            states0[:, var_pos[v]] = np.tile(np.repeat(rows[:, j], repeat), tile)
    states0 = np.unique(states0, axis=0)

    state_tables = [states0]
    runs = np.arange(states0.shape[0], dtype=np.int64).reshape(-1, 1)

    for t in range(1, h + 1):
        code: list = []
        for agent in spec.agents:
            action = agent.actions[t - 1] if t <= len(agent.actions) else None
            if isinstance(action, AAtomic):
                code.extend(action.code)
        code.extend(spec.env)
        out, src = _apply_code_matrix(state_tables[-1], var_pos, code)
        next_states, dst = np.unique(out, axis=0, return_inverse=True)
        dst = dst.astype(np.int64).ravel()
        pairs = np.unique(np.stack([src, dst], axis=1), axis=0)
        order = np.argsort(pairs[:, 0], kind="stable")
        pairs = pairs[order]
        srcs = pairs[:, 0]
        counts = np.bincount(srcs, minlength=state_tables[-1].shape[0])
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

        last = runs[:, -1]
        per_run = counts[last]
        total = int(per_run.sum())
        if total > cap:
            raise StateSpaceOverflowError(
                f"{total} runs at tick {t}, above the cap of {cap}"
            )
        expanded = np.repeat(runs, per_run, axis=0)
        offs = np.repeat(starts[last], per_run) + (
            np.arange(total, dtype=np.int64)
            - np.repeat(np.cumsum(per_run) - per_run, per_run)
        )
        new_col = pairs[offs, 1].reshape(-1, 1)
        runs = np.hstack([expanded, new_col])
        state_tables.append(next_states)

    timed_names = [timed(v, t) for t in range(h + 1) for v in names]
    world_rows = np.empty((runs.shape[0], len(timed_names)), dtype=np.uint8)
    for t in range(h + 1):
        world_rows[:, t * len(names):(t + 1) * len(names)] = state_tables[t][runs[:, t]]
    order = sorted(range(len(timed_names)), key=lambda i: timed_names[i])
    world_rows = np.ascontiguousarray(world_rows[:, order])
    vars_sorted = tuple(timed_names[i] for i in order)
    worlds = Relation._wrap(vars_sorted, (2,) * len(vars_sorted), world_rows, False)

    obs = {
        a.agent: frozenset(timed(q, t) for q in a.observes for t in range(h + 1))
        for a in spec.agents
    }
    return EpistemicStructure(worlds, obs)
