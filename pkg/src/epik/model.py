"""Structured relational models over timed variables.

`unfold` symbolically executes a system tick by tick, producing a DAG with
one relation per timed variable: assignments become deterministic nodes
(the graph of the written expression over the tick-start instances),
untouched variables become copy nodes over their previous instance, and
each surviving nondeterministic choice becomes a free root.  The initial
condition is encoded as a multi-valued selector root whose children are
the time-0 instances of the variables it mentions; unconstrained
variables start as free roots.

The transforms on structured models preserve the combined world set:
`equality_merge` collapses copy nodes into their source (recording an
alias map so formula atoms stay resolvable), `drop_leaves` removes leaf
vertices outside a target set, and `epistemic_marginalize` materializes
the world relation restricted to a target set.  Marginalization joins the
node relations along a topological order and projects eliminated
variables out as soon as no later relation mentions them; on the
program-shaped models produced by `unfold` this keeps every intermediate
no larger than the full join, which variable-order-driven fusion does not
guarantee here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CheckError, EmptyModelError, GraphError, UnsatisfiableInitError
from .frontend import (
    AAtomic,
    ASkip,
    EBin,
    EVar,
    Expr,
    FAnd,
    FAtom,
    FKnows,
    FNot,
    Formula,
    SRand,
    SystemSpec,
    eval_expr,
    expr_vars,
    substitute,
)
from .graph import Dag
from .valuation import Relation, VarInfo, VarTable, _radix_keys, combine, marginalize

SELECTOR = "$init"


def timed(base: str, t: int) -> str:
    return f"{base}@{t}"


def temp_name(base: str, t: int, k: int) -> str:
    return f"{base}@{t}.r{k}"


@dataclass(frozen=True)
class NodeMeta:
    kind: str  # "program" | "selector" | "temp"
    base: str | None = None
    time: int | None = None


@dataclass
class StructuredModel:
    dag: Dag
    nodes: dict[str, Relation]
    obs: dict[str, frozenset[str]]
    table: VarTable
    meta: dict[str, NodeMeta]
    horizon: int

    @property
    def vertices(self) -> tuple[str, ...]:
        return self.dag.vertices

    def program_vars(self) -> list[str]:
        return [v for v in self.vertices if self.meta[v].kind == "program"]

    def count(self, kind: str) -> int:
        return sum(1 for v in self.vertices if self.meta[v].kind == kind)


@dataclass(frozen=True)
class EpistemicStructure:
    """Worlds as a relation plus one observable variable set per agent."""

    worlds: Relation
    obs: dict[str, frozenset[str]] = field(default_factory=dict)

    @property
    def vars(self) -> tuple[str, ...]:
        return self.worlds.vars


# -- helpers -------------------------------------------------------------------


_MAX_INIT_COMPONENT = 20  # grid enumeration guard: 2**20 assignments


def satisfying_assignments(init: Expr, names: list[str]) -> np.ndarray:
    """All rows over names (sorted) on which init evaluates to 1."""
    names = sorted(names)
    if len(names) > _MAX_INIT_COMPONENT:
        raise CheckError(
            f"initial-condition component over {len(names)} variables is too wide to enumerate"
        )
    if not names:
        value = eval_expr(init, {})
        return np.zeros((1, 0), dtype=np.uint8) if value else np.zeros((0, 0), dtype=np.uint8)
    grid = np.indices([2] * len(names)).reshape(len(names), -1).T.astype(np.uint8)
    env = {n: grid[:, j].astype(np.int64) for j, n in enumerate(names)}
    mask = np.asarray(eval_expr(init, env), dtype=np.int64)
    if mask.ndim == 0:
        mask = np.full(grid.shape[0], int(mask))
    return grid[mask == 1]


def _flatten_and(e: Expr) -> list[Expr]:
    if isinstance(e, EBin) and e.op == "and":
        return _flatten_and(e.left) + _flatten_and(e.right)
    return [e]


def init_components(init: Expr) -> list[tuple[list[str], np.ndarray]]:
    """Initial condition split into connected conjunction components.

    Clauses sharing variables land in the same component; each component
    is enumerated separately, so pinning many independent variables stays
    cheap.  Raises when any component (hence the whole condition) is
    unsatisfiable.
    """
    clauses = _flatten_and(init)
    groups: dict[str, set[str]] = {}

    def find(v: str) -> str:
        while groups.get(v, v) != v:
            groups[v] = groups.get(groups[v], groups[v])
            v = groups[v]
        return v

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            groups[ra] = rb

    clause_vars = []
    for c in clauses:
        vs = sorted(expr_vars(c))
        clause_vars.append(vs)
        if not vs:
            if not eval_expr(c, {}):
                raise UnsatisfiableInitError("initial condition is unsatisfiable")
            continue
        groups.setdefault(vs[0], vs[0])
        for v in vs[1:]:
            groups.setdefault(v, v)
            union(vs[0], v)

    members: dict[str, list[int]] = {}
    for i, vs in enumerate(clause_vars):
        if vs:
            members.setdefault(find(vs[0]), []).append(i)

    components = []
    for root in sorted(members):
        idxs = members[root]
        names = sorted({v for i in idxs for v in clause_vars[i]})
        conj = clauses[idxs[0]]
        for i in idxs[1:]:
            conj = EBin("and", conj, clauses[i])
        sat = satisfying_assignments(conj, names)
        if sat.shape[0] == 0:
            raise UnsatisfiableInitError("initial condition is unsatisfiable")
        components.append((names, sat))
    return components


def function_node(table: VarTable, node: str, expr: Expr) -> tuple[Relation, list[str]]:
    """Relation pairing every parent assignment with the expression value."""
    parents = sorted(expr_vars(expr))
    sizes = [table.size(p) for p in parents]
    if parents:
        grid = np.indices(sizes).reshape(len(parents), -1).T.astype(np.uint8)
    else:
        grid = np.zeros((1, 0), dtype=np.uint8)
    env = {p: grid[:, j].astype(np.int64) for j, p in enumerate(parents)}
    vals = np.asarray(eval_expr(expr, env), dtype=np.int64)
    if vals.ndim == 0:
        vals = np.full(grid.shape[0], int(vals))
    rows = np.column_stack([grid, vals.astype(np.uint8)])
    rel = Relation(parents + [node], sizes + [table.size(node)], rows)
    return rel, parents


# -- unfolding -----------------------------------------------------------------


def unfold(spec: SystemSpec, horizon: int | None = None) -> StructuredModel:
    """Unfold a system into a structured model over timed variables."""
    h = spec.horizon if horizon is None else horizon
    longest = max((len(a.actions) for a in spec.agents), default=0)
    if h < longest:
        raise CheckError(f"horizon {h} is shorter than the longest protocol ({longest})")

    table = VarTable()
    nodes: dict[str, Relation] = {}
    meta: dict[str, NodeMeta] = {}
    edges: list[tuple[str, str]] = []
    order: list[str] = []

    def add_node(name: str, rel: Relation, kind: NodeMeta, parents: list[str]):
        nodes[name] = rel
        meta[name] = kind
        order.append(name)
        for p in parents:
            edges.append((p, name))

    # time 0: one selector per nontrivial init component, constants for the
    # pinned components, free roots elsewhere
    components = init_components(spec.init)
    pinned: dict[str, int] = {}
    selector_of: dict[str, tuple[str, int, np.ndarray]] = {}
    sel_count = 0
    for names, sat in components:
        if sat.shape[0] == 1:
            for j, v in enumerate(names):
                pinned[v] = int(sat[0, j])
            continue
        sel = SELECTOR if sel_count == 0 else f"{SELECTOR}.{sel_count}"
        sel_count += 1
        values = tuple(tuple(int(x) for x in row) for row in sat)
        table.register(VarInfo(sel, values))
        add_node(sel, table.identity([sel]), NodeMeta("selector"), [])
        for j, v in enumerate(names):
            selector_of[v] = (sel, sat.shape[0], sat[:, j])
    for v in spec.variables:
        name = timed(v, 0)
        table.register(VarInfo(name))
        if v in pinned:
            rel = Relation([name], [2], [(pinned[v],)])
            add_node(name, rel, NodeMeta("program", v, 0), [])
        elif v in selector_of:
            sel, size, column = selector_of[v]
            rows = [(k, int(column[k])) for k in range(size)]
            rel = Relation([sel, name], [size, 2], rows)
            add_node(name, rel, NodeMeta("program", v, 0), [sel])
        else:
            add_node(name, table.identity([name]), NodeMeta("program", v, 0), [])

    current = {v: timed(v, 0) for v in spec.variables}

    for t in range(1, h + 1):
        code: list = []
        for agent in spec.agents:
            action = agent.actions[t - 1] if t <= len(agent.actions) else ASkip()
            if isinstance(action, AAtomic):
                code.extend(action.code)
        code.extend(spec.env)

        sym: dict[str, Expr] = {}
        temp_counter: dict[str, int] = {}
        temp_ids: list[str] = []
        for stmt in code:
            if isinstance(stmt, SRand):
                k = temp_counter.get(stmt.var, 0)
                temp_counter[stmt.var] = k + 1
                tid = temp_name(stmt.var, t, k)
                sym[stmt.var] = EVar(tid)
                temp_ids.append(tid)
            else:
                env = {
                    b: sym.get(b, EVar(current[b]))
                    for b in expr_vars(stmt.expr)
                }
                sym[stmt.var] = substitute(stmt.expr, env)

        # a nondeterministic choice that survives as exactly one variable's
        # whole end-of-tick value makes that variable a root, no extra vertex
        uses: dict[str, int] = {tid: 0 for tid in temp_ids}
        whole: dict[str, list[str]] = {tid: [] for tid in temp_ids}
        for v, e in sym.items():
            for name in expr_vars(e):
                if name in uses:
                    uses[name] += 1
        for v, e in sym.items():
            if isinstance(e, EVar) and e.name in uses:
                whole[e.name].append(v)
        promote: dict[str, str] = {}
        for tid in temp_ids:
            if uses[tid] == 1 and len(whole[tid]) == 1:
                promote[tid] = timed(whole[tid][0], t)
        for tid in temp_ids:
            if uses[tid] == 0:
                continue  # overwritten before any read: the branch is dead
            if tid not in promote:
                table.register(VarInfo(tid))
                add_node(tid, table.identity([tid]), NodeMeta("temp", tid.split("@")[0], t), [])

        for v in spec.variables:
            name = timed(v, t)
            table.register(VarInfo(name))
            if v not in sym:
                prev = current[v]
                rel = Relation([prev, name], [2, 2], [(0, 0), (1, 1)])
                add_node(name, rel, NodeMeta("program", v, t), [prev])
            else:
                e = sym[v]
                if isinstance(e, EVar) and promote.get(e.name) == name:
                    add_node(name, table.identity([name]), NodeMeta("program", v, t), [])
                else:
                    e = substitute(e, {tid: EVar(target) for tid, target in promote.items()})
                    rel, parents = function_node(table, name, e)
                    add_node(name, rel, NodeMeta("program", v, t), parents)
            current[v] = name

    obs = {
        a.agent: frozenset(timed(q, t) for q in a.observes for t in range(h + 1))
        for a in spec.agents
    }
    dag = Dag(order, edges)
    return StructuredModel(dag, nodes, obs, table, meta, h)


# -- validation -----------------------------------------------------------------


def validate(sm: StructuredModel) -> list[str]:
    """Check the structured-model conditions; empty result means ok."""
    problems = []
    for v in sm.vertices:
        rel = sm.nodes[v]
        expected = frozenset(sm.dag.parents(v)) | {v}
        if rel.dom() != expected:
            problems.append(f"{v}: relation domain {sorted(rel.dom())} != node+parents")
            continue
        pa = sorted(sm.dag.parents(v))
        proj = marginalize(rel, pa)
        full = sm.table.identity(pa)
        if proj != full:
            problems.append(f"{v}: relation constrains its parents")
        m = sm.meta[v]
        if m.kind == "program":
            for p in sm.dag.parents(v):
                pm = sm.meta[p]
                pt = -1 if pm.kind == "selector" else pm.time
                if pt is not None and m.time is not None and pt > m.time:
                    problems.append(f"{v}: parent {p} lies in the future")
    return problems


# -- equality merge ----------------------------------------------------------------


def _is_copy(rel: Relation) -> bool:
    if rel.arity() != 2 or rel.frames[0] != rel.frames[1]:
        return False
    size = rel.frames[0]
    if len(rel) != size:
        return False
    rows = rel.rows
    return bool(np.all(rows[:, 0] == rows[:, 1]))


def equality_merge(
    sm: StructuredModel, protect: frozenset[str] = frozenset()
) -> tuple[StructuredModel, dict[str, str]]:
    """Collapse copy nodes into their sole parent until none remain.

    Returns the reduced model and an alias map from removed vertices to
    their surviving representative.  The earlier vertex survives, except
    that a surviving program vertex is preferred over a choice temporary;
    protected vertices are never removed.
    """
    parents = {v: set(sm.dag.parents(v)) for v in sm.vertices}
    children = {v: set(sm.dag.children(v)) for v in sm.vertices}
    nodes = dict(sm.nodes)
    meta = dict(sm.meta)
    alias: dict[str, str] = {}
    alive = set(sm.vertices)

    def try_merge(y: str) -> bool:
        if y not in alive or len(parents[y]) != 1:
            return False
        x = next(iter(parents[y]))
        if not _is_copy(nodes[y]):
            return False
        # program vertices survive over selectors and choice temporaries
        remove_parent = meta[x].kind != "program" and meta[y].kind == "program"
        if y in protect and not remove_parent:
            if x in protect:
                return False
            remove_parent = True
        if remove_parent and x in protect:
            return False
        if remove_parent:
            removed, survivor = x, y
            nodes[y] = nodes[x].rename({x: y})
            parents[y] = set(parents[x])
            for p in parents[x]:
                children[p].discard(x)
                children[p].add(y)
        else:
            removed, survivor = y, x
            del_parents = parents[y]
            for p in del_parents:
                children[p].discard(y)
        nodes.pop(removed, None)
        for c in list(children.get(removed, ())):
            if c == survivor:
                continue
            nodes[c] = nodes[c].rename({removed: survivor})
            parents[c].discard(removed)
            parents[c].add(survivor)
            children[survivor].add(c)
        children[removed] = set()
        parents.pop(removed, None)
        alive.discard(removed)
        alias[removed] = survivor
        meta.pop(removed, None)
        return True

    changed = True
    while changed:
        changed = False
        for y in sorted(alive):
            if try_merge(y):
                changed = True

    # compress alias chains onto final survivors
    def resolve(name: str) -> str:
        seen = []
        while name in alias:
            seen.append(name)
            name = alias[name]
        for s in seen:
            alias[s] = name
        return name

    for name in list(alias):
        resolve(name)

    obs = {
        agent: frozenset(resolve(v) if v in alias else v for v in names)
        for agent, names in sm.obs.items()
    }
    order = [v for v in sm.vertices if v in alive]
    edges = [(p, v) for v in order for p in sorted(parents[v])]
    dag = Dag(order, edges)
    out = StructuredModel(dag, nodes, obs, sm.table, meta, sm.horizon)
    return out, alias


def resolve_alias(alias: dict[str, str], name: str) -> str:
    return alias.get(name, name)


def rename_formula(f: Formula, alias: dict[str, str]) -> Formula:
    """Rewrite resolved atoms (vertex-id atoms, time None) through an alias map."""
    if isinstance(f, FAtom):
        if f.time is not None:
            raise CheckError("rename_formula expects resolved atoms")
        return FAtom(alias.get(f.name, f.name), None)
    if isinstance(f, FNot):
        return FNot(rename_formula(f.arg, alias))
    if isinstance(f, FAnd):
        return FAnd(rename_formula(f.left, alias), rename_formula(f.right, alias))
    return FKnows(f.agent, rename_formula(f.arg, alias))


def resolve_formula(f: Formula, alias: dict[str, str] | None = None) -> Formula:
    """Turn timed atoms into vertex-id atoms, optionally through an alias map."""
    if isinstance(f, FAtom):
        if f.time is None:
            raise CheckError(f"atom {f.name!r} has no time stamp")
        name = timed(f.name, f.time)
        if alias:
            name = alias.get(name, name)
        return FAtom(name, None)
    if isinstance(f, FNot):
        return FNot(resolve_formula(f.arg, alias))
    if isinstance(f, FAnd):
        return FAnd(resolve_formula(f.left, alias), resolve_formula(f.right, alias))
    return FKnows(f.agent, resolve_formula(f.arg, alias))


# -- leaf elimination and marginalization ---------------------------------------------


def drop_leaves(sm: StructuredModel, keep) -> StructuredModel:
    """Remove leaf vertices outside keep until every leaf is in keep."""
    keep = set(keep)
    missing = keep - set(sm.vertices)
    if missing:
        raise GraphError(f"target variables {sorted(missing)!r} are not vertices")
    children = {v: set(sm.dag.children(v)) for v in sm.vertices}
    parents = {v: set(sm.dag.parents(v)) for v in sm.vertices}
    alive = set(sm.vertices)
    queue = [v for v in alive if not children[v] and v not in keep]
    while queue:
        v = queue.pop()
        if v not in alive:
            continue
        alive.discard(v)
        for p in parents[v]:
            children[p].discard(v)
            if p in alive and not children[p] and p not in keep:
                queue.append(p)
    order = [v for v in sm.vertices if v in alive]
    edges = [(p, c) for p in order for c in sorted(children[p]) if c in alive]
    dag = Dag(order, edges)
    nodes = {v: sm.nodes[v] for v in order}
    meta = {v: sm.meta[v] for v in order}
    obs = {a: frozenset(n for n in names if n in alive) for a, names in sm.obs.items()}
    return StructuredModel(dag, nodes, obs, sm.table, meta, sm.horizon)


def _sweep_order(sm: StructuredModel) -> list[str]:
    """Topological order preferring earlier ticks: choices stay close to
    the relations that consume them, which keeps the join sweep narrow."""
    import heapq

    def key(v: str) -> tuple:
        m = sm.meta[v]
        t = -1 if m.kind == "selector" else (m.time if m.time is not None else 0)
        return (t, v)

    indeg = {v: len(sm.dag.parents(v)) for v in sm.vertices}
    heap = [key(v) for v in sm.vertices if indeg[v] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        _, v = heapq.heappop(heap)
        out.append(v)
        for c in sm.dag.children(v):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, key(c))
    return out


def _extend(world: Relation, node: str, rel: Relation) -> Relation:
    """world joined with a node relation, specialized for the two shapes
    unfolding produces: root relations extend by cartesian product, and
    relations that are functions of parents already present append one
    computed column.  Anything else falls back to the general join."""
    if rel.vars == (node,):
        values = rel._rows[:, 0]
        n, k = len(world), len(values)
        out_vars = tuple(sorted(world.vars + (node,)))
        at = out_vars.index(node)
        rows = np.empty((n * k, len(out_vars)), dtype=np.uint8)
        base = np.repeat(world._rows, k, axis=0)
        rows[:, :at] = base[:, :at]
        rows[:, at + 1:] = base[:, at:]
        rows[:, at] = np.tile(values, n)
        frames = tuple(
            rel.frames[0] if v == node else world.frames[world.vars.index(v)]
            for v in out_vars
        )
        return Relation._wrap(out_vars, frames, rows, False)

    parents = [v for v in rel.vars if v != node]
    if all(p in world.vars for p in parents):
        sizes = [rel.frame_of(p) for p in parents]
        total = 1
        for s in sizes:
            total *= s
        if len(rel) == total:  # exactly one node value per parent assignment
            pcols_rel = [rel.vars.index(p) for p in parents]
            keys_rel = _radix_keys(rel._rows[:, pcols_rel], sizes)
            pcols_w = [world.vars.index(p) for p in parents]
            keys_w = _radix_keys(np.ascontiguousarray(world._rows[:, pcols_w]), sizes)
            if keys_rel is not None and keys_w is not None:
                lut = np.zeros(total, dtype=np.uint8)
                lut[keys_rel] = rel._rows[:, rel.vars.index(node)]
                out_vars = tuple(sorted(world.vars + (node,)))
                at = out_vars.index(node)
                rows = np.empty((len(world), len(out_vars)), dtype=np.uint8)
                rows[:, :at] = world._rows[:, :at]
                rows[:, at + 1:] = world._rows[:, at:]
                rows[:, at] = lut[keys_w]
                frames = tuple(
                    rel.frame_of(node) if v == node else world.frames[world.vars.index(v)]
                    for v in out_vars
                )
                return Relation._wrap(out_vars, frames, rows, False)
    return combine(world, rel)


def epistemic_marginalize(
    sm: StructuredModel, keep, stats: dict | None = None
) -> EpistemicStructure:
    """World relation of the model restricted to keep, with observables cut
    down to keep.  Equals the combination of all node relations projected
    onto keep; leaf elimination runs first."""
    keep = set(keep)
    sm = drop_leaves(sm, keep)
    order = _sweep_order(sm)
    position = {v: i for i, v in enumerate(order)}
    last_use: dict[str, int] = {}
    for v in order:
        i = position[v]
        last_use[v] = max(last_use.get(v, i), i)
        for c in sm.dag.children(v):
            last_use[v] = max(last_use[v], position[c])

    world = sm.table.identity([])
    max_rows = 1
    for i, v in enumerate(order):
        world = _extend(world, v, sm.nodes[v])
        max_rows = max(max_rows, len(world))
        done = [u for u in world.vars if last_use.get(u, -1) <= i and u not in keep]
        if done:
            world = marginalize(world, set(world.vars) - set(done))
    world = marginalize(world, keep)
    max_rows = max(max_rows, len(world))
    if stats is not None:
        stats["max_intermediate_tuples"] = max_rows
        stats["elim_len"] = len(set(order) - keep)
    if world.is_empty():
        raise EmptyModelError("model combined to an empty world relation")
    obs = {a: frozenset(n for n in names if n in keep) for a, names in sm.obs.items()}
    return EpistemicStructure(world, obs)
