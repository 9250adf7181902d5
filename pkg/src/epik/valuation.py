"""Relational valuation algebra: combination, marginalization, fusion.

Values are relations, i.e. finite sets of tuples over a domain of
finite-frame variables.  Combination is the natural join, marginalization
is projection, and variable elimination composes the two.  The fusion
algorithm computes the marginal of a combination one eliminated variable
at a time, joining only the relations that mention the variable; a greedy
min-fill heuristic produces the elimination order.

Relations are stored as numpy row matrices (one uint8 column per
variable) with the domain held in ascending variable-id order.  Rows are
always deduplicated; the lexicographic row order that makes storage fully
canonical is established lazily so bulk pipeline operations stay cheap.
An empty relation (no rows) is distinct from the identity over the empty
domain (one empty tuple): the former denotes a contradiction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import FrameMismatchError, FusionOrderError, GraphError, RegistryError

_MAX_FRAME = 256  # values are stored in uint8 columns


@dataclass(frozen=True)
class VarInfo:
    """A variable id together with its finite, ordered frame of values."""

    name: str
    values: tuple = (0, 1)

    def __post_init__(self):
        if len(self.values) == 0:
            raise RegistryError(f"variable {self.name!r} has an empty frame")
        if len(self.values) > _MAX_FRAME:
            raise RegistryError(
                f"variable {self.name!r} has a frame of size {len(self.values)}; "
                f"at most {_MAX_FRAME} values are supported"
            )

    @property
    def size(self) -> int:
        return len(self.values)


class VarTable:
    """Registry of declared variables with their frames."""

    def __init__(self, infos: Iterable[VarInfo] = ()):
        self._infos: dict[str, VarInfo] = {}
        for info in infos:
            self.register(info)

    def register(self, info: VarInfo) -> VarInfo:
        old = self._infos.get(info.name)
        if old is not None and old.values != info.values:
            raise RegistryError(f"variable {info.name!r} registered twice with different frames")
        self._infos[info.name] = info
        return info

    def boolean(self, *names: str) -> None:
        for name in names:
            self.register(VarInfo(name))

    def __contains__(self, name: str) -> bool:
        return name in self._infos

    def __getitem__(self, name: str) -> VarInfo:
        try:
            return self._infos[name]
        except KeyError:
            raise RegistryError(f"variable {name!r} is not registered") from None

    def names(self) -> list[str]:
        return sorted(self._infos)

    def size(self, name: str) -> int:
        return self[name].size

    def identity(self, names: Iterable[str]) -> Relation:
        """The neutral relation e_X: every assignment over X.

        identity(()) is the relation holding just the empty tuple.
        """
        order = sorted(set(names))
        sizes = [self.size(n) for n in order]
        if not order:
            return Relation._wrap((), (), np.zeros((1, 0), dtype=np.uint8), True)
        rows = np.indices(sizes).reshape(len(order), -1).T.astype(np.uint8)
        return Relation._wrap(tuple(order), tuple(sizes), np.ascontiguousarray(rows), True)


def _lexsort_rows(rows: np.ndarray) -> np.ndarray:
    if rows.shape[0] <= 1 or rows.shape[1] == 0:
        return rows
    order = np.lexsort(rows.T[::-1])
    return np.ascontiguousarray(rows[order])


class Relation:
    """An immutable relation over a sorted tuple of variable ids."""

    __slots__ = ("vars", "frames", "_rows", "_sorted", "_tuples")

    def __init__(self, variables: Sequence[str], frames: Sequence[int], rows: Iterable = ()):
        variables = tuple(variables)
        frames = tuple(int(f) for f in frames)
        if len(variables) != len(frames):
            raise RegistryError("variables and frames must have equal length")
        if len(set(variables)) != len(variables):
            raise RegistryError(f"duplicate variable in domain {variables!r}")
        order = sorted(range(len(variables)), key=lambda i: variables[i])
        mat = np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows, dtype=np.uint8)
        if mat.size == 0:
            mat = mat.reshape(0, len(variables))
        if mat.ndim != 2 or mat.shape[1] != len(variables):
            raise RegistryError(f"rows must have arity {len(variables)}")
        mat = np.ascontiguousarray(mat[:, order])
        variables = tuple(variables[i] for i in order)
        frames = tuple(frames[i] for i in order)
        for j, size in enumerate(frames):
            if size < 1 or size > _MAX_FRAME:
                raise RegistryError(f"frame size {size} for {variables[j]!r} out of range")
            if mat.shape[0] and int(mat[:, j].max()) >= size:
                raise RegistryError(f"value out of frame for variable {variables[j]!r}")
        if mat.shape[0] > 1:
            mat = np.unique(mat, axis=0)
        self.vars = variables
        self.frames = frames
        self._rows = mat
        self._rows.flags.writeable = False
        self._sorted = True  # np.unique output is sorted; small inputs trivially so
        self._tuples = None

    @classmethod
    def _wrap(cls, variables: tuple, frames: tuple, rows: np.ndarray, sorted_: bool) -> Relation:
        """Internal constructor: rows must already be unique, domain-sorted."""
        rel = cls.__new__(cls)
        rel.vars = variables
        rel.frames = frames
        rel._rows = rows
        rel._rows.flags.writeable = False
        rel._sorted = sorted_
        rel._tuples = None
        return rel

    # -- inspection ---------------------------------------------------------

    @property
    def rows(self) -> np.ndarray:
        """Row matrix in canonical (lexicographically sorted) order."""
        self._canonicalize()
        return self._rows

    def _canonicalize(self) -> None:
        if not self._sorted:
            rows = _lexsort_rows(self._rows)
            rows.flags.writeable = False
            self._rows = rows
            self._sorted = True

    def __len__(self) -> int:
        return self._rows.shape[0]

    def arity(self) -> int:
        return len(self.vars)

    def dom(self) -> frozenset[str]:
        return frozenset(self.vars)

    def frame_of(self, name: str) -> int:
        return self.frames[self.vars.index(name)]

    def is_empty(self) -> bool:
        return self._rows.shape[0] == 0

    def tuples(self) -> list[tuple[int, ...]]:
        if self._tuples is None:
            self._canonicalize()
            self._tuples = [tuple(int(v) for v in row) for row in self._rows]
        return self._tuples

    def assignments(self) -> list[dict[str, int]]:
        return [dict(zip(self.vars, row)) for row in self.tuples()]

    def to_csv(self) -> str:
        """Debug dump: header line plus one sorted row per tuple."""
        lines = [",".join(self.vars)]
        lines += [",".join(str(v) for v in row) for row in self.tuples()]
        return "\n".join(lines)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        if self.vars != other.vars or self.frames != other.frames:
            return False
        if len(self) != len(other):
            return False
        return bool(np.array_equal(self.rows, other.rows))

    def __hash__(self) -> int:
        return hash((self.vars, self.frames, self.rows.tobytes()))

    def __repr__(self) -> str:
        return f"Relation(vars={list(self.vars)}, rows={len(self)})"

    def rename(self, mapping: dict[str, str]) -> Relation:
        """Rename variables; merging a name onto an existing variable keeps
        only the rows where both columns agree (the two are identified)."""
        new_names = [mapping.get(v, v) for v in self.vars]
        if len(set(new_names)) == len(new_names):
            return Relation(new_names, self.frames, self._rows)
        # collapse pairs of columns that were renamed onto each other
        keep: dict[str, int] = {}
        mask = np.ones(len(self._rows), dtype=bool)
        cols: list[int] = []
        for j, name in enumerate(new_names):
            if name in keep:
                if self.frames[j] != self.frames[keep[name]]:
                    raise FrameMismatchError(f"cannot merge {name!r}: frames differ")
                mask &= self._rows[:, j] == self._rows[:, keep[name]]
            else:
                keep[name] = j
                cols.append(j)
        rows = self._rows[mask][:, cols]
        return Relation([new_names[j] for j in cols], [self.frames[j] for j in cols], rows)


# -- key packing and join machinery ------------------------------------------


def _expand_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenate arange(s, s+c) for each start/count pair, vectorized."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    out = np.repeat(starts, counts)
    cum = np.cumsum(counts)
    out += np.arange(total, dtype=np.int64) - np.repeat(cum - counts, counts)
    return out


def _radix_keys(mat: np.ndarray, sizes: Sequence[int]) -> np.ndarray | None:
    """Mixed-radix int64 keys for rows of mat, or None if they overflow."""
    cap = 1
    for s in sizes:
        cap *= int(s)
        if cap > 2**62:
            return None
    keys = np.zeros(mat.shape[0], dtype=np.int64)
    weight = 1
    for j in range(mat.shape[1] - 1, -1, -1):
        keys += mat[:, j].astype(np.int64) * weight
        weight *= int(sizes[j])
    return keys


def _joint_keys(a: np.ndarray, b: np.ndarray, sizes: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Comparable group keys for two matrices over the same columns."""
    ka = _radix_keys(a, sizes)
    if ka is not None:
        return ka, _radix_keys(b, sizes)
    stacked = np.vstack([a, b])
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    inv = inv.astype(np.int64).ravel()
    return inv[: a.shape[0]], inv[a.shape[0]:]


def _chunked_keys(mat: np.ndarray, sizes: Sequence[int]) -> np.ndarray:
    """Rows packed into as few int64 key columns as the radix allows."""
    cols: list[np.ndarray] = []
    start = 0
    while start < len(sizes):
        end = start
        cap = 1
        while end < len(sizes) and cap * int(sizes[end]) <= 2**62:
            cap *= int(sizes[end])
            end += 1
        cols.append(_radix_keys(np.ascontiguousarray(mat[:, start:end]), sizes[start:end]))
        start = end
    return np.stack(cols, axis=1)


def _group_ids(mat: np.ndarray, sizes: Sequence[int]) -> np.ndarray:
    """Dense group ids: equal rows share an id, ids follow row order of keys."""
    if mat.shape[1] == 0:
        return np.zeros(mat.shape[0], dtype=np.int64)
    keys = _radix_keys(mat, sizes)
    if keys is None:
        _, inv = np.unique(_chunked_keys(mat, sizes), axis=0, return_inverse=True)
        return inv.astype(np.int64).ravel()
    _, inv = np.unique(keys, return_inverse=True)
    return inv.astype(np.int64).ravel()


def combine(s: Relation, t: Relation) -> Relation:
    """Natural join: domain is the union, a row belongs to the result iff
    its restrictions to dom(s) and dom(t) belong to s and t."""
    common = [v for v in s.vars if v in t.vars]
    for v in common:
        if s.frame_of(v) != t.frame_of(v):
            raise FrameMismatchError(f"shared variable {v!r} has mismatched frames")
    out_vars = tuple(sorted(set(s.vars) | set(t.vars)))
    frame_map = dict(zip(s.vars, s.frames)) | dict(zip(t.vars, t.frames))
    out_frames = tuple(frame_map[v] for v in out_vars)
    ns, nt = len(s), len(t)
    if ns == 0 or nt == 0:
        return Relation._wrap(out_vars, out_frames, np.zeros((0, len(out_vars)), dtype=np.uint8), True)

    if not common:
        s_idx = np.repeat(np.arange(ns, dtype=np.int64), nt)
        t_idx = np.tile(np.arange(nt, dtype=np.int64), ns)
    else:
        sc = [s.vars.index(v) for v in common]
        tc = [t.vars.index(v) for v in common]
        sizes = [s.frames[j] for j in sc]
        ks, kt = _joint_keys(s._rows[:, sc], t._rows[:, tc], sizes)
        order = np.argsort(ks, kind="stable")
        ks_sorted = ks[order]
        left = np.searchsorted(ks_sorted, kt, side="left")
        right = np.searchsorted(ks_sorted, kt, side="right")
        counts = right - left
        hit = counts > 0
        t_idx = np.repeat(np.arange(nt, dtype=np.int64)[hit], counts[hit])
        s_idx = order[_expand_ranges(left[hit], counts[hit])]

    out = np.empty((len(s_idx), len(out_vars)), dtype=np.uint8)
    s_pos = {v: j for j, v in enumerate(s.vars)}
    t_pos = {v: j for j, v in enumerate(t.vars)}
    for j, v in enumerate(out_vars):
        if v in s_pos:
            out[:, j] = s._rows[s_idx, s_pos[v]]
        else:
            out[:, j] = t._rows[t_idx, t_pos[v]]
    # each (s row, t row) pair yields a distinct union row, so rows are unique
    return Relation._wrap(out_vars, out_frames, out, False)


def _unique_rows(rows: np.ndarray, sizes: Sequence[int]) -> np.ndarray:
    """Deduplicated rows in lexicographic order (radix keys when they fit)."""
    if rows.shape[0] <= 1 or rows.shape[1] == 0:
        return rows
    keys = _radix_keys(rows, sizes)
    if keys is None:
        return np.unique(rows, axis=0)
    # key order equals lexicographic row order, so this is canonical
    _, index = np.unique(keys, return_index=True)
    return rows[index]


def marginalize(s: Relation, names: Iterable[str]) -> Relation:
    """Projection onto names; the result domain is names ∩ dom(s)."""
    target = set(names)
    cols = [j for j, v in enumerate(s.vars) if v in target]
    out_vars = tuple(s.vars[j] for j in cols)
    out_frames = tuple(s.frames[j] for j in cols)
    if len(cols) == len(s.vars):
        return s
    if len(s) == 0:
        return Relation._wrap(out_vars, out_frames, np.zeros((0, len(cols)), dtype=np.uint8), True)
    if not cols:
        return Relation._wrap((), (), np.zeros((1, 0), dtype=np.uint8), True)
    rows = _unique_rows(np.ascontiguousarray(s._rows[:, cols]), out_frames)
    return Relation._wrap(out_vars, out_frames, np.ascontiguousarray(rows), True)


def eliminate(s: Relation, name: str) -> Relation:
    """Project the variable away: s restricted to dom(s) minus {name}."""
    return marginalize(s, set(s.vars) - {name})


def dom_union(rels: Iterable[Relation]) -> frozenset[str]:
    out: set[str] = set()
    for r in rels:
        out |= set(r.vars)
    return frozenset(out)


def fuse_step(rels: Sequence[Relation], name: str) -> list[Relation]:
    """One fusion step: join every relation whose domain contains name,
    eliminate name from the join, keep the rest untouched."""
    plus = [r for r in rels if name in r.vars]
    minus = [r for r in rels if name not in r.vars]
    if not plus:
        return list(rels)
    joined = plus[0]
    for r in plus[1:]:
        joined = combine(joined, r)
    return [eliminate(joined, name)] + minus


def fuse_all(rels: Sequence[Relation], names: Iterable[str], order: Sequence[str]) -> Relation:
    """Fusion algorithm: eliminate order-listed variables step by step and
    combine what remains.  Equals the join of all relations projected onto
    names, for every valid order."""
    target = set(names)
    eliminable = set(dom_union(rels)) - target
    if set(order) != eliminable or len(order) != len(eliminable):
        raise FusionOrderError(
            f"order {list(order)!r} is not a permutation of the eliminable variables "
            f"{sorted(eliminable)!r}"
        )
    work = list(rels)
    for name in order:
        work = fuse_step(work, name)
    result = Relation._wrap((), (), np.zeros((1, 0), dtype=np.uint8), True)
    for r in work:
        result = combine(result, r)
    return result


def elimination_order(rels: Sequence[Relation], names: Iterable[str]) -> list[str]:
    """Greedy min-fill order over the interaction graph of the relation
    domains; ties break on the lexicographically smallest variable id."""
    target = set(names)
    adj: dict[str, set[str]] = {}
    for r in rels:
        for v in r.vars:
            adj.setdefault(v, set())
        for i, v in enumerate(r.vars):
            for w in r.vars[i + 1:]:
                adj[v].add(w)
                adj[w].add(v)
    candidates = sorted(v for v in adj if v not in target)
    order: list[str] = []
    while candidates:
        best = None
        best_fill = None
        for v in candidates:
            nbrs = [w for w in adj[v]]
            fill = 0
            for i, a in enumerate(nbrs):
                for b in nbrs[i + 1:]:
                    if b not in adj[a]:
                        fill += 1
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
        nbrs = list(adj[best])
        for i, a in enumerate(nbrs):
            for b in nbrs[i + 1:]:
                adj[a].add(b)
                adj[b].add(a)
        for w in nbrs:
            adj[w].discard(best)
        del adj[best]
        candidates.remove(best)
        order.append(best)
    return order


def conditional_independent(rel: Relation, x: Iterable[str], y: Iterable[str], z: Iterable[str]) -> bool:
    """Relational conditional independence of x and y given z.

    Holds iff for every pair of rows agreeing on z there is a row matching
    the first on x ∪ z and the second on y ∪ z.  Equivalently, within each
    z-class the projected (x, y) pairs form a full product.
    """
    xs, ys, zs = frozenset(x), frozenset(y), frozenset(z)
    if xs & ys or xs & zs or ys & zs:
        raise GraphError("x, y, z must be pairwise disjoint")
    missing = (xs | ys | zs) - rel.dom()
    if missing:
        raise GraphError(f"variables {sorted(missing)!r} not in the relation domain")
    if not xs or not ys or len(rel) == 0:
        return True

    if len(rel) <= 4096:
        pos = {v: j for j, v in enumerate(rel.vars)}
        xi = sorted(pos[v] for v in xs)
        yi = sorted(pos[v] for v in ys)
        zi = sorted(pos[v] for v in zs)
        groups: dict[tuple, tuple[set, set, set]] = {}
        for row in rel.tuples():
            zk = tuple(row[j] for j in zi)
            xk = tuple(row[j] for j in xi)
            yk = tuple(row[j] for j in yi)
            gx, gy, gxy = groups.setdefault(zk, (set(), set(), set()))
            gx.add(xk)
            gy.add(yk)
            gxy.add((xk, yk))
        return all(len(gxy) == len(gx) * len(gy) for gx, gy, gxy in groups.values())

    rows = rel._rows
    pos = {v: j for j, v in enumerate(rel.vars)}
    xi = sorted(pos[v] for v in xs)
    yi = sorted(pos[v] for v in ys)
    zi = sorted(pos[v] for v in zs)
    gz = _group_ids(rows[:, zi], [rel.frames[j] for j in zi])
    gx = _group_ids(rows[:, xi], [rel.frames[j] for j in xi])
    gy = _group_ids(rows[:, yi], [rel.frames[j] for j in yi])
    zx = np.unique(np.stack([gz, gx], axis=1), axis=0)
    zy = np.unique(np.stack([gz, gy], axis=1), axis=0)
    zxy = np.unique(np.stack([gz, gx, gy], axis=1), axis=0)
    _, cx = np.unique(zx[:, 0], return_counts=True)
    _, cy = np.unique(zy[:, 0], return_counts=True)
    _, cxy = np.unique(zxy[:, 0], return_counts=True)
    return bool(np.all(cxy == cx * cy))
