"""Chimera topologies and random input classes (RAN1, AC3, DCL)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from qaga.ising import IsingModel, SpinGraph


@dataclass(frozen=True)
class ChimeraSpec:
    rows: int
    cols: int
    shore: int = 4
    dead_qubits: frozenset = field(default_factory=frozenset)
    dead_couplers: frozenset = field(default_factory=frozenset)

    @classmethod
    def parse(cls, text: str) -> "ChimeraSpec":
        """Parse ``"MxNxL"`` or ``"MxN"``."""
        parts = [int(p) for p in text.lower().split("x")]
        if len(parts) == 2:
            parts.append(4)
        if len(parts) != 3:
            raise ValueError(f"bad chimera spec {text!r}, expected MxNxL")
        return cls(*parts)

    def with_mask_file(self, path) -> "ChimeraSpec":
        with open(path) as fh:
            data = json.load(fh)
        return ChimeraSpec(
            self.rows, self.cols, self.shore,
            dead_qubits=frozenset(int(q) for q in data.get("dead_qubits", ())),
            dead_couplers=frozenset(tuple(sorted(int(x) for x in c)) for c in data.get("dead_couplers", ())),
        )


def chimera_counts(rows: int, cols: int, shore: int = 4) -> tuple[int, int]:
    """Closed-form (nodes, edges) of the full C(rows, cols, shore) graph."""
    nodes = 2 * rows * cols * shore
    edges = rows * cols * shore**2 + shore * (cols * (rows - 1) + rows * (cols - 1))
    return nodes, edges


def chimera_index(row: int, col: int, u: int, k: int, cols: int, shore: int) -> int:
    """Linear qubit index; ``u = 0`` is the vertical shore, ``u = 1`` horizontal."""
    return ((row * cols + col) * 2 + u) * shore + k


def chimera(spec: ChimeraSpec) -> SpinGraph:
    M, N, L = spec.rows, spec.cols, spec.shore
    if min(M, N, L) < 1:
        raise ValueError("chimera dimensions must be >= 1")
    edges = []
    for r in range(M):
        for c in range(N):
            for kv in range(L):
                for kh in range(L):
                    edges.append((chimera_index(r, c, 0, kv, N, L), chimera_index(r, c, 1, kh, N, L)))
    for r in range(M):
        for c in range(N):
            for k in range(L):
                if r + 1 < M:
                    edges.append((chimera_index(r, c, 0, k, N, L), chimera_index(r + 1, c, 0, k, N, L)))
                if c + 1 < N:
                    edges.append((chimera_index(r, c, 1, k, N, L), chimera_index(r, c + 1, 1, k, N, L)))
    n = 2 * M * N * L
    tile = np.arange(n) // (2 * L)
    nmask = np.ones(n, bool)
    for q in spec.dead_qubits:
        if not 0 <= q < n:
            raise ValueError(f"dead qubit {q} out of range")
        nmask[q] = False
    meta = {"topology": "chimera", "rows": M, "cols": N, "shore": L}
    if spec.dead_qubits:
        meta["dead_qubits"] = sorted(int(q) for q in spec.dead_qubits)
    if spec.dead_couplers:
        meta["dead_couplers"] = sorted([int(i), int(j)] for i, j in spec.dead_couplers)
    g = SpinGraph.from_edges(n, edges, node_mask=nmask, tile=tile, meta=meta)
    if spec.dead_couplers:
        g = g.with_masks(dead_edges=spec.dead_couplers)
    return g


def _require_tiles(graph: SpinGraph) -> np.ndarray:
    if graph.tile is None:
        raise ValueError("graph carries no chimera tile metadata")
    return graph.tile


def inter_tile_edges(graph: SpinGraph) -> np.ndarray:
    t = _require_tiles(graph)
    return t[graph.edges[:, 0]] != t[graph.edges[:, 1]]


def gen_ran1(graph: SpinGraph, rng: np.random.Generator) -> IsingModel:
    """Bimodal ±1 couplings on every edge, zero fields.

    One sign is drawn per topology edge (dead ones included, then zeroed) so
    the draw does not depend on the mask.
    """
    J = rng.choice(np.array([-1.0, 1.0]), size=graph.num_edges)
    return IsingModel(graph, np.zeros(graph.num_vars), J, {"class": "RAN1"})


def gen_ac3(graph: SpinGraph, rng: np.random.Generator) -> IsingModel:
    """RAN1 draw with inter-tile couplers tripled."""
    inter = inter_tile_edges(graph)
    base = gen_ran1(graph, rng)
    J = np.where(inter, 3.0 * base.J, base.J)
    return IsingModel(graph, base.h, J, {"class": "AC3"})


# ---------------------------------------------------------------- DCL

@dataclass(frozen=True)
class DclParams:
    alpha: float = 0.75
    R: float = 4.0
    lam: float = 4.0
    max_loop_attempts: int = 1000
    min_loop_length: int = 4

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.R >= 1:
            raise ValueError("R must be >= 1")
        if not self.lam > 0:
            raise ValueError("lambda must be > 0")


def _logical_lattice(rows: int, cols: int) -> dict[int, list[int]]:
    adj = {v: [] for v in range(rows * cols)}
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if r + 1 < rows:
                adj[v].append(v + cols)
                adj[v + cols].append(v)
            if c + 1 < cols:
                adj[v].append(v + 1)
                adj[v + 1].append(v)
    return adj


def random_loop(adj: dict[int, list[int]], rng: np.random.Generator, min_length: int = 4,
                max_tries: int = 10_000) -> list[int]:
    """Closed non-backtracking random walk, loop-erased at the first revisit.

    Returns the cycle as a node list (consecutive nodes adjacent, last
    adjacent to first).
    """
    nodes = sorted(adj)
    for _ in range(max_tries):
        start = nodes[int(rng.integers(len(nodes)))]
        path = [start]
        pos = {start: 0}
        prev = None
        while True:
            here = path[-1]
            options = [v for v in adj[here] if v != prev]
            if not options:
                break
            nxt = options[int(rng.integers(len(options)))]
            if nxt in pos:
                loop = path[pos[nxt]:]
                if len(loop) >= min_length:
                    return loop
                break
            pos[nxt] = len(path)
            path.append(nxt)
            prev = here
    raise ValueError("logical lattice has no usable cycles")


def gen_dcl(graph: SpinGraph, params: DclParams, rng: np.random.Generator) -> IsingModel:
    """Deceptive-cluster-loop input built from frustrated loops over tiles.

    Each tile is one logical variable. Intra-tile couplers are ferromagnetic
    with magnitude ``lam``. ``round(alpha * tiles)`` frustrated loops (all
    bonds -1 except one +1) are accumulated on the logical lattice; a loop
    that would push any logical coupling above ``R`` in magnitude is redrawn.
    Every physical coupler between two tiles carries their logical coupling.
    """
    tile = _require_tiles(graph)
    M, N = int(graph.meta["rows"]), int(graph.meta["cols"])
    adj = _logical_lattice(M, N)
    num_logical = M * N
    num_loops = int(round(params.alpha * num_logical))

    logical: dict[tuple[int, int], float] = {}
    lengths = []
    for _ in range(num_loops):
        for _attempt in range(params.max_loop_attempts):
            loop = random_loop(adj, rng, params.min_loop_length)
            bonds = [tuple(sorted((loop[k], loop[(k + 1) % len(loop)]))) for k in range(len(loop))]
            frustrated = int(rng.integers(len(bonds)))
            trial = dict(logical)
            for k, b in enumerate(bonds):
                trial[b] = trial.get(b, 0.0) + (1.0 if k == frustrated else -1.0)
            if all(abs(trial[b]) <= params.R for b in bonds):
                logical = trial
                lengths.append(len(loop))
                break
        else:
            raise RuntimeError("could not place a loop within the coupling cap R")

    e = graph.edges
    ta, tb = tile[e[:, 0]], tile[e[:, 1]]
    J = np.empty(graph.num_edges)
    for k in range(graph.num_edges):
        if ta[k] == tb[k]:
            J[k] = -params.lam
        else:
            J[k] = logical.get((min(ta[k], tb[k]), max(ta[k], tb[k])), 0.0)
    meta = {
        "class": "DCL",
        "alpha": params.alpha, "R": params.R, "lambda": params.lam,
        "loop_lengths": lengths,
    }
    model = IsingModel(graph, np.zeros(graph.num_vars), J, meta)
    planted = float(model.J.sum())
    model.meta["planted_energy"] = int(planted) if planted.is_integer() else planted
    return model


GENERATORS = ("ran1", "ac3", "dcl")


def generate(kind: str, graph: SpinGraph, seed: int, params: DclParams | None = None) -> IsingModel:
    """Seeded front end used by the CLI and harness."""
    rng = np.random.default_rng(seed)
    kind = kind.lower()
    if kind == "ran1":
        model = gen_ran1(graph, rng)
    elif kind == "ac3":
        model = gen_ac3(graph, rng)
    elif kind == "dcl":
        model = gen_dcl(graph, params or DclParams(), rng)
    else:
        raise ValueError(f"unknown instance class {kind!r}")
    model.meta["seed"] = seed
    return model
