"""Ising minimisation instances, spin states and energy evaluation.

Energies follow ``E(s) = sum_i h_i s_i + sum_(i,j) J_ij s_i s_j`` with spins
in {-1, +1}. Non-functional (masked) variables stay in the index space with
zero field, zero couplings and a frozen +1 spin.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from qaga import _kernels

_DEBUG = os.environ.get("QAGA_DEBUG", "") not in ("", "0")


def set_debug(enabled: bool) -> None:
    """Turn cache revalidation on or off for the whole process."""
    global _DEBUG
    _DEBUG = bool(enabled)


def debug_enabled() -> bool:
    return _DEBUG


class CacheMismatch(AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class SpinGraph:
    """Undirected simple graph with an optional Chimera tiling.

    ``edges`` holds every edge of the topology (including dead couplers);
    ``edge_mask`` selects the functional ones and only those appear in the
    CSR adjacency (``indptr``/``nbr``/``adj_edge``).
    """

    num_vars: int
    edges: np.ndarray
    node_mask: np.ndarray
    edge_mask: np.ndarray
    indptr: np.ndarray = field(repr=False)
    nbr: np.ndarray = field(repr=False)
    adj_edge: np.ndarray = field(repr=False)
    tile: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_edges(
        cls,
        num_vars: int,
        edges: Iterable[Sequence[int]],
        node_mask: Sequence[bool] | None = None,
        edge_mask: Sequence[bool] | None = None,
        tile: Sequence[int] | None = None,
        meta: dict | None = None,
    ) -> "SpinGraph":
        e = np.array([sorted((int(i), int(j))) for i, j in edges], dtype=np.int64).reshape(-1, 2)
        if num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        if len(e):
            if (e[:, 0] == e[:, 1]).any():
                raise ValueError("self-loops are not allowed")
            if e.min() < 0 or e.max() >= num_vars:
                raise ValueError("edge endpoint out of range")
            keys = e[:, 0] * num_vars + e[:, 1]
            if len(np.unique(keys)) != len(keys):
                raise ValueError("duplicate edges")
        nmask = np.ones(num_vars, bool) if node_mask is None else np.asarray(node_mask, bool).copy()
        emask = np.ones(len(e), bool) if edge_mask is None else np.asarray(edge_mask, bool).copy()
        if nmask.shape != (num_vars,) or emask.shape != (len(e),):
            raise ValueError("mask shape mismatch")
        if len(e):
            # an edge touching a dead node is dead
            emask &= nmask[e[:, 0]] & nmask[e[:, 1]]

        live = np.flatnonzero(emask)
        deg = np.zeros(num_vars, np.int64)
        np.add.at(deg, e[live, 0], 1)
        np.add.at(deg, e[live, 1], 1)
        indptr = np.zeros(num_vars + 1, np.int64)
        np.cumsum(deg, out=indptr[1:])
        nbr = np.empty(indptr[-1], np.int64)
        adj_edge = np.empty(indptr[-1], np.int64)
        fill = indptr[:-1].copy()
        for k in live:
            i, j = e[k]
            nbr[fill[i]], adj_edge[fill[i]] = j, k
            fill[i] += 1
            nbr[fill[j]], adj_edge[fill[j]] = i, k
            fill[j] += 1

        t = None if tile is None else np.asarray(tile, np.int64)
        for arr in (e, nmask, emask, indptr, nbr, adj_edge) + ((t,) if t is not None else ()):
            arr.setflags(write=False)
        return cls(num_vars, e, nmask, emask, indptr, nbr, adj_edge, t, dict(meta or {}))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def active(self) -> np.ndarray:
        """Indices of functional variables, ascending."""
        return np.flatnonzero(self.node_mask)

    @property
    def num_active(self) -> int:
        return int(self.node_mask.sum())

    @property
    def num_active_edges(self) -> int:
        return int(self.edge_mask.sum())

    def degree(self, i: int) -> int:
        return int(self.indptr[i + 1] - self.indptr[i])

    def neighbors(self, i: int) -> np.ndarray:
        return self.nbr[self.indptr[i]:self.indptr[i + 1]]

    def with_masks(self, dead_nodes=(), dead_edges=()) -> "SpinGraph":
        nmask = self.node_mask.copy()
        nmask[list(dead_nodes)] = False
        emask = self.edge_mask.copy()
        if len(dead_edges):
            index = {(int(i), int(j)): k for k, (i, j) in enumerate(self.edges)}
            for i, j in dead_edges:
                key = (min(i, j), max(i, j))
                if key not in index:
                    raise ValueError(f"edge {key} is not in the graph")
                emask[index[key]] = False
        return SpinGraph.from_edges(self.num_vars, self.edges, nmask, emask, self.tile, self.meta)


@dataclass(frozen=True, eq=False)
class IsingModel:
    graph: SpinGraph
    h: np.ndarray
    J: np.ndarray
    meta: dict = field(default_factory=dict)
    wts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = self.graph
        h = np.array(self.h, dtype=np.float64).reshape(-1)
        J = np.array(self.J, dtype=np.float64).reshape(-1)
        if h.shape != (g.num_vars,):
            raise ValueError(f"expected {g.num_vars} fields, got {h.size}")
        if J.shape != (g.num_edges,):
            raise ValueError(f"expected {g.num_edges} couplings, got {J.size}")
        h[~g.node_mask] = 0.0
        J[~g.edge_mask] = 0.0
        wts = J[g.adj_edge]
        for arr in (h, J, wts):
            arr.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "wts", wts)

    @property
    def num_vars(self) -> int:
        return self.graph.num_vars

    @property
    def has_fields(self) -> bool:
        return bool(np.any(self.h != 0))

    def csr(self):
        g = self.graph
        return g.indptr, g.nbr, self.wts, self.h

    def scale(self) -> float:
        """Absolute energy scale, used for float tolerances."""
        return float(np.abs(self.h).sum() + np.abs(self.J).sum()) or 1.0


class SpinState:
    """Mutable ±1 assignment with an optional cached energy."""

    __slots__ = ("spins", "cached_energy")

    def __init__(self, spins, cached_energy: float | None = None):
        s = np.array(spins, dtype=np.int8).reshape(-1)
        if not np.all((s == 1) | (s == -1)):
            raise ValueError("spins must be -1 or +1")
        self.spins = s
        self.cached_energy = None if cached_energy is None else float(cached_energy)

    def __len__(self) -> int:
        return len(self.spins)

    def __repr__(self) -> str:
        return f"SpinState(n={len(self.spins)}, energy={self.cached_energy})"

    def copy(self) -> "SpinState":
        new = SpinState.__new__(SpinState)
        new.spins = self.spins.copy()
        new.cached_energy = self.cached_energy
        return new

    def __neg__(self) -> "SpinState":
        return SpinState(-self.spins)


def random_state(model: IsingModel, rng: np.random.Generator) -> SpinState:
    """Uniform random state over the functional variables; dead ones are +1."""
    s = np.ones(model.num_vars, np.int8)
    act = model.graph.active
    s[act] = rng.integers(0, 2, size=len(act), dtype=np.int8) * 2 - 1
    st = SpinState.__new__(SpinState)
    st.spins = s
    st.cached_energy = energy(model, st)
    return st


def _check_dims(model: IsingModel, state: SpinState) -> None:
    if len(state.spins) != model.num_vars:
        raise ValueError(f"state has {len(state.spins)} spins, model has {model.num_vars}")


def energy_of(model: IsingModel, spins: np.ndarray) -> float:
    s = spins.astype(np.float64)
    e = model.graph.edges
    field_part = float(np.dot(model.h, s))
    if len(e) == 0:
        return field_part
    return field_part + float(np.dot(model.J, s[e[:, 0]] * s[e[:, 1]]))


def energy(model: IsingModel, state: SpinState) -> float:
    """Full energy evaluation (fields first, then edges in edge-list order)."""
    _check_dims(model, state)
    return energy_of(model, state.spins)


def energy_delta(model: IsingModel, state: SpinState, var: int) -> float:
    """``E(flip(s, var)) - E(s)`` in O(degree) time."""
    _check_dims(model, state)
    if not 0 <= var < model.num_vars:
        raise IndexError(f"variable {var} out of range")
    if not model.graph.node_mask[var]:
        raise ValueError(f"variable {var} is not functional")
    indptr, nbr, wts, h = model.csr()
    return float(-2.0 * state.spins[var] * _kernels.local_field(state.spins, var, indptr, nbr, wts, h))


def ensure_energy(model: IsingModel, state: SpinState) -> float:
    if state.cached_energy is None:
        state.cached_energy = energy(model, state)
    elif _DEBUG:
        validate_cache(model, state)
    return state.cached_energy


def validate_cache(model: IsingModel, state: SpinState) -> None:
    if state.cached_energy is None:
        return
    exact = energy(model, state)
    if abs(exact - state.cached_energy) > 1e-9 * model.scale():
        raise CacheMismatch(f"cached energy {state.cached_energy} != {exact}")


def flip(model: IsingModel, state: SpinState, var: int) -> SpinState:
    """Flip one spin in place, keeping the energy cache in step."""
    de = energy_delta(model, state, var)
    state.spins[var] = -state.spins[var]
    if state.cached_energy is not None:
        state.cached_energy += de
        if _DEBUG:
            validate_cache(model, state)
    return state


# ---------------------------------------------------------------- file format

def model_to_dict(model: IsingModel) -> dict[str, Any]:
    g = model.graph
    live = np.flatnonzero(g.edge_mask)
    order = live[np.lexsort((g.edges[live, 1], g.edges[live, 0]))]
    edges = [[int(g.edges[k, 0]), int(g.edges[k, 1]), _num(model.J[k])] for k in order]
    fields = [[int(i), _num(model.h[i])] for i in np.flatnonzero(model.h)]
    meta = dict(model.meta)
    meta.setdefault("class", None)
    meta.setdefault("seed", None)
    graph_meta = dict(g.meta)
    if "dead_qubits" not in graph_meta and not g.node_mask.all():
        graph_meta["dead_qubits"] = [int(i) for i in np.flatnonzero(~g.node_mask)]
    if "dead_couplers" not in graph_meta:
        dead_e = np.flatnonzero(~g.edge_mask & g.node_mask[g.edges[:, 0]] & g.node_mask[g.edges[:, 1]]) if len(g.edges) else []
        if len(dead_e):
            graph_meta["dead_couplers"] = [[int(g.edges[k, 0]), int(g.edges[k, 1])] for k in dead_e]
    meta["graph"] = graph_meta
    return {"num_vars": g.num_vars, "edges": edges, "fields": fields, "metadata": meta}


def _num(x: float):
    x = float(x)
    return int(x) if x.is_integer() else x


def model_from_dict(data: dict[str, Any]) -> IsingModel:
    num_vars = int(data["num_vars"])
    meta = dict(data.get("metadata") or {})
    graph_meta = dict(meta.get("graph") or {})
    listed = [(int(i), int(j), float(v)) for i, j, v in data.get("edges", [])]

    if graph_meta.get("topology") == "chimera":
        from qaga.generators import ChimeraSpec, chimera

        spec = ChimeraSpec(
            int(graph_meta["rows"]), int(graph_meta["cols"]), int(graph_meta.get("shore", 4)),
            dead_qubits=frozenset(graph_meta.get("dead_qubits", ())),
            dead_couplers=frozenset(tuple(sorted(c)) for c in graph_meta.get("dead_couplers", ())),
        )
        graph = chimera(spec)
        if graph.num_vars != num_vars:
            raise ValueError("num_vars does not match the chimera dimensions")
    else:
        dead = set(int(i) for i in graph_meta.get("dead_qubits", ()))
        nmask = np.ones(num_vars, bool)
        nmask[list(dead)] = False
        graph = SpinGraph.from_edges(num_vars, [(i, j) for i, j, _ in listed], node_mask=nmask, meta=graph_meta)

    index = {(int(i), int(j)): k for k, (i, j) in enumerate(graph.edges)}
    J = np.zeros(graph.num_edges)
    for i, j, v in listed:
        key = (min(i, j), max(i, j))
        if key not in index:
            raise ValueError(f"edge {key} is not part of the graph")
        J[index[key]] = v
    h = np.zeros(num_vars)
    for i, v in data.get("fields", []):
        h[int(i)] = float(v)
    meta.pop("graph", None)
    return IsingModel(graph, h, J, meta)


def dumps_model(model: IsingModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model: IsingModel, path: str | os.PathLike) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path: str | os.PathLike) -> IsingModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
