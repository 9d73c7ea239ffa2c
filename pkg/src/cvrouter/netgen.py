"""Graph topologies for CV graph states and their split between two providers.

Vertices are integers ``0..n-1``. Provider membership is stored as a boolean
mask (``True`` = provider A). Every generator is deterministic in its seed.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Sequence

import networkx as nx
import numpy as np

KINDS = ("grid", "complete", "barabasi_albert", "internet_as", "duplication_divergence", "explicit")
STOCHASTIC_KINDS = ("barabasi_albert", "internet_as", "duplication_divergence")
ALIASES = {"ba": "barabasi_albert", "as": "internet_as", "dd": "duplication_divergence", "pp": "duplication_divergence"}

MAX_RETRIES = 100
DEFAULT_BA_M = 2
DEFAULT_DD_P = 0.4


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted graph with an optional two-provider split.

    Attributes:
        adjacency: symmetric 0/1 matrix with zero diagonal.
        partition: boolean mask, ``True`` for provider A vertices, or ``None``
            if the graph has not been bipartitioned yet.
        retries: number of reseeds needed to obtain a connected sample.
    """

    adjacency: np.ndarray
    partition: np.ndarray | None = None
    retries: int = 0

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise GraphError("adjacency must be a non-empty square matrix")
        if not np.array_equal(a, a.T):
            raise GraphError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0) or not np.all((a == 0) | (a == 1)):
            raise GraphError("adjacency must be 0/1 with zero diagonal")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        if self.partition is not None:
            p = np.asarray(self.partition, dtype=bool)
            if p.shape != (a.shape[0],):
                raise GraphError("partition mask length must equal n")
            if a.shape[0] >= 2 and (p.all() or not p.any()):
                raise GraphError("both providers need at least one vertex")
            p.setflags(write=False)
            object.__setattr__(self, "partition", p)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency))
        return sorted(zip(i.tolist(), j.tolist()))

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum() // 2)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def side_a(self) -> list[int]:
        self._require_partition()
        return np.flatnonzero(self.partition).tolist()

    @property
    def side_b(self) -> list[int]:
        self._require_partition()
        return np.flatnonzero(~self.partition).tolist()

    def _require_partition(self):
        if self.partition is None:
            raise GraphError("graph has no provider partition")

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        same_part = (self.partition is None and other.partition is None) or (
            self.partition is not None
            and other.partition is not None
            and np.array_equal(self.partition, other.partition)
        )
        return np.array_equal(self.adjacency, other.adjacency) and same_part

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"n": self.n, "edges": [list(e) for e in self.edges]}
        doc["partition_a"] = self.side_a if self.partition is not None else []
        return doc

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> Graph:
        g = from_edges(int(doc["n"]), doc["edges"])
        part = doc.get("partition_a")
        if part:
            g = bipartition(g, part)
        return g

    def dumps(self) -> str:
        return json.dumps(self.to_json()) + "\n"

    @classmethod
    def loads(cls, text: str) -> Graph:
        return cls.from_json(json.loads(text))


@dataclass(frozen=True)
class TopologySpec:
    """Recipe for a graph: model kind, size, model parameters and seed.

    ``model_params`` keys by kind: ``grid`` takes ``rows``/``cols`` (default
    ``n/2`` rows by 2 columns), ``barabasi_albert`` takes ``m``,
    ``duplication_divergence`` takes ``p``, ``explicit`` takes ``edges``.
    """

    kind: str
    n: int
    model_params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise GraphError(f"unknown topology kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.n < 2:
            raise GraphError("topologies need n >= 2")
        if self.seed < 0:
            raise GraphError("seed must be unsigned")

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "n": self.n, "model_params": dict(self.model_params), "seed": self.seed}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> TopologySpec:
        return cls(doc["kind"], int(doc["n"]), dict(doc.get("model_params", {})), int(doc.get("seed", 0)))


def from_edges(n: int, edges: Sequence[Sequence[int]]) -> Graph:
    a = np.zeros((n, n))
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise GraphError(f"invalid edge ({i}, {j}) for n={n}")
        a[i, j] = a[j, i] = 1
    return Graph(a)


def grid_dims(n: int, rows: int | None = None, cols: int | None = None) -> tuple[int, int]:
    if rows is None and cols is None:
        cols = 2
    if cols is None:
        cols = n // rows if rows else 0
    if rows is None:
        rows = n // cols if cols else 0
    if rows < 1 or cols < 2 or rows * cols != n or cols % 2:
        raise GraphError(f"grid of {n} vertices needs rows*cols == n with an even column count; got {rows}x{cols}")
    return rows, cols


def grid(rows: int, cols: int) -> Graph:
    """Open-boundary ``rows x cols`` lattice, vertices numbered column by column.

    With column-major numbering the first ``n/2`` vertices are the left half,
    so ``half_by_index`` splits the lattice into left and right halves.
    """
    n = rows * cols
    a = np.zeros((n, n))
    for c in range(cols):
        for r in range(rows):
            v = c * rows + r
            if r + 1 < rows:
                a[v, v + 1] = a[v + 1, v] = 1
            if c + 1 < cols:
                a[v, v + rows] = a[v + rows, v] = 1
    return Graph(a)


def complete(n: int) -> Graph:
    return Graph(np.ones((n, n)) - np.eye(n))


def barabasi_albert(n: int, m: int, rng: np.random.Generator) -> Graph:
    """Preferential attachment grown from a complete seed graph on ``m`` vertices.

    Each new vertex attaches to ``m`` distinct existing vertices drawn with
    probability proportional to degree, giving ``m(m-1)/2 + m(n-m)`` edges.
    """
    if not 1 <= m < n:
        raise GraphError(f"barabasi_albert needs 1 <= m < n, got m={m}, n={n}")
    a = np.zeros((n, n))
    a[:m, :m] = 1 - np.eye(m)
    # each vertex appears once per incident edge end
    stubs = [v for v in range(m) for _ in range(m - 1)]
    for v in range(m, n):
        targets: set[int] = set()
        while len(targets) < m:
            if stubs:
                targets.add(stubs[rng.integers(len(stubs))])
            else:
                targets.add(int(rng.integers(v)))
        for u in sorted(targets):
            a[u, v] = a[v, u] = 1
            stubs.extend((u, v))
    return Graph(a)


def _nx_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**32))


def _sample(spec: TopologySpec, rng: np.random.Generator) -> Graph:
    p = spec.model_params
    if spec.kind == "barabasi_albert":
        return barabasi_albert(spec.n, int(p.get("m", DEFAULT_BA_M)), rng)
    if spec.kind == "internet_as":
        g = nx.random_internet_as_graph(spec.n, seed=_nx_seed(rng))
        return Graph(nx.to_numpy_array(g, nodelist=range(spec.n)))
    prob = float(p.get("p", DEFAULT_DD_P))
    if not 0 < prob <= 1:
        raise GraphError("duplication_divergence needs 0 < p <= 1")
    g = nx.duplication_divergence_graph(spec.n, prob, seed=_nx_seed(rng))
    return Graph(nx.to_numpy_array(g, nodelist=range(spec.n)))


def is_connected(g: Graph) -> bool:
    return len(bfs_distances(g, 0)) == g.n


def bfs_distances(g: Graph, source: int) -> dict[int, int]:
    nbrs = [np.flatnonzero(row) for row in g.adjacency]
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            w = int(w)
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def generate(spec: TopologySpec) -> Graph:
    """Build the graph described by ``spec``.

    Stochastic models are resampled from sub-seeds ``(seed, retry)`` until the
    sample is connected; the retry count is stored on the returned graph.

    Raises:
        GraphError: invalid grid size, bad model parameters, or no connected
            sample within ``MAX_RETRIES`` attempts.
    """
    p = spec.model_params
    if spec.kind == "grid":
        rows, cols = grid_dims(spec.n, p.get("rows"), p.get("cols"))
        return grid(rows, cols)
    if spec.kind == "complete":
        return complete(spec.n)
    if spec.kind == "explicit":
        return from_edges(spec.n, p.get("edges", []))
    for retry in range(MAX_RETRIES + 1):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, retry]))
        g = _sample(spec, rng)
        if is_connected(g):
            return Graph(g.adjacency, retries=retry)
    raise GraphError(f"no connected {spec.kind} sample after {MAX_RETRIES} retries; check model_params")


def bipartition(g: Graph, policy: str | Sequence[int] = "half_by_index") -> Graph:
    """Assign vertices to providers.

    ``"half_by_index"`` gives vertices ``0..ceil(n/2)-1`` to A. A sequence is
    taken as the explicit list of provider-A vertices.
    """
    n = g.n
    mask = np.zeros(n, dtype=bool)
    if isinstance(policy, str):
        if policy != "half_by_index":
            raise GraphError(f"unknown partition policy {policy!r}")
        mask[: math.ceil(n / 2)] = True
    else:
        chosen = [int(v) for v in policy]
        if len(set(chosen)) != len(chosen) or any(not 0 <= v < n for v in chosen):
            raise GraphError("explicit provider list must hold distinct in-range vertices")
        if n >= 2 and not 0 < len(chosen) < n:
            raise GraphError("explicit provider list must leave both sides non-empty")
        mask[chosen] = True
    return Graph(g.adjacency, mask, g.retries)


def select_scenario_pair(g: Graph, scenario: str) -> tuple[int, int]:
    """Pick (Alice, Bob) across the partition for routing scenario I, II or III.

    I: highest-degree A vertex, lowest-degree B vertex. II: the A/B pair at
    maximum graph distance. III: lowest-degree vertex on each side. Ties go
    to the lowest vertex index.
    """
    side_a, side_b = g.side_a, g.side_b
    deg = g.degrees
    scenario = scenario.upper()
    if scenario == "I":
        return min(side_a, key=lambda v: (-deg[v], v)), min(side_b, key=lambda v: (deg[v], v))
    if scenario == "III":
        return min(side_a, key=lambda v: (deg[v], v)), min(side_b, key=lambda v: (deg[v], v))
    if scenario == "II":
        best = None
        for a in side_a:
            dist = bfs_distances(g, a)
            if len(dist) != g.n:
                raise GraphError("scenario II needs a connected graph")
            for b in side_b:
                key = (-dist[b], a, b)
                if best is None or key < best:
                    best = key
        return best[1], best[2]
    raise GraphError(f"unknown scenario {scenario!r}")
