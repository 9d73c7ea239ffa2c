"""No-go criteria from local symplectic spectra, constructive routing, and the square-network oracle.

A provider can hold one half of a target pair only if its local Williamson
spectrum contains ``lam = cosh(2r)``; two clients of the same provider need
two pure local modes (symplectic eigenvalue 1 twice). When the condition
holds, :func:`constructive_route` builds the passive unitaries explicitly
from the Bloch-Messiah factors of the Williamson symplectic.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import gaussian as ga
from .netgen import Graph, TopologySpec, bipartition, generate
from .unitaries import beam_splitter_unitary

log = logging.getLogger(__name__)

SPECTRUM_RTOL = 1e-9
ENSEMBLE_ATOL = 1e-6
FRAME_RTOL = 1e-7


class PreconditionError(ValueError):
    pass


@dataclass
class SpectrumReport:
    eigenvalues_a: np.ndarray
    eigenvalues_b: np.ndarray
    lam: float
    count_one: int
    contains_lambda: bool
    near_lambda_count: int
    verdict_bipartite: str
    verdict_internal: str
    marginal_internal: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "eigenvalues_a": self.eigenvalues_a.tolist(),
            "eigenvalues_b": self.eigenvalues_b.tolist(),
            "lambda": self.lam,
            "count_one": self.count_one,
            "contains_lambda": self.contains_lambda,
            "near_lambda_count": self.near_lambda_count,
            "verdict_bipartite": self.verdict_bipartite,
            "verdict_internal": self.verdict_internal,
            "marginal_internal": self.marginal_internal,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> SpectrumReport:
        return cls(
            np.array(doc["eigenvalues_a"]),
            np.array(doc["eigenvalues_b"]),
            doc["lambda"],
            doc["count_one"],
            doc["contains_lambda"],
            doc["near_lambda_count"],
            doc["verdict_bipartite"],
            doc["verdict_internal"],
            doc.get("marginal_internal", False),
        )


def provider_blocks(g: Graph, sq: ga.Squeezing | float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cov = ga.build_cluster(g, sq)
    return cov, ga.reduce(cov, g.side_a), ga.reduce(cov, g.side_b)


def count_near(values: np.ndarray, target: float, rtol: float = SPECTRUM_RTOL) -> int:
    return int(np.sum(np.abs(values - target) <= rtol * target))


def spectrum_report(g: Graph, sq: ga.Squeezing | float) -> SpectrumReport:
    """Williamson spectra of both provider blocks and the two routing verdicts.

    Counts use the provider-A block. ``marginal_internal`` marks the case of
    exactly two pure modes, where the necessary condition is met with no slack.
    """
    sq = sq if isinstance(sq, ga.Squeezing) else ga.Squeezing(float(sq))
    _, cov_a, cov_b = provider_blocks(g, sq)
    nu_a = ga.symplectic_eigenvalues(cov_a)
    nu_b = ga.symplectic_eigenvalues(cov_b)
    ones = count_near(nu_a, 1.0)
    has_lam = count_near(nu_a, sq.lam) > 0
    return SpectrumReport(
        eigenvalues_a=nu_a,
        eigenvalues_b=nu_b,
        lam=sq.lam,
        count_one=ones,
        contains_lambda=has_lam,
        near_lambda_count=int(np.sum(nu_a >= 0.99 * sq.lam)),
        verdict_bipartite="possible" if has_lam else "impossible",
        verdict_internal="possible" if ones >= 2 else "impossible",
        marginal_internal=ones == 2,
    )


def check_bipartite(g: Graph, sq: ga.Squeezing | float) -> SpectrumReport:
    """Ideal routing between the providers is excluded when ``lam`` is missing from the spectrum."""
    return spectrum_report(g, sq)


def check_internal(g: Graph, sq: ga.Squeezing | float) -> SpectrumReport:
    """Ideal routing inside one provider needs the eigenvalue 1 at least twice."""
    return spectrum_report(g, sq)


# ----------------------------------------------------------------------------
# constructive routing


@dataclass
class ConstructiveRoute:
    u_a: np.ndarray
    u_b: np.ndarray
    routed: np.ndarray
    pair: tuple[int, int]
    ambiguous: bool = False
    symplectic: np.ndarray = field(default=None, repr=False)


def _local_frame(cov_local: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Passive frame ``O1`` from Bloch-Messiah of the Williamson symplectic.

    Returns ``O1`` and the frame covariance ``O1^T cov O1``, which is diagonal.
    """
    will = ga.williamson(cov_local)
    o1 = ga.bloch_messiah(will.symplectic).first
    return o1, o1.T @ cov_local @ o1


def _frame_modes(frame_cov: np.ndarray, var_q: float, var_p: float) -> list[int]:
    k = frame_cov.shape[0] // 2
    dq, dp = np.diag(frame_cov)[:k], np.diag(frame_cov)[k:]
    return [
        j
        for j in range(k)
        if abs(dq[j] - var_q) <= FRAME_RTOL * var_q and abs(dp[j] - var_p) <= FRAME_RTOL * max(var_p, 1.0)
    ]


def _unitary_with_column(col: np.ndarray, pos: int) -> np.ndarray:
    """Unitary whose column ``pos`` is the unit vector ``col``."""
    k = col.size
    basis = np.column_stack([col, np.eye(k, dtype=complex)])
    q, _ = np.linalg.qr(basis)
    q = q[:, :k] * (np.vdot(q[:, 0], col))  # undo the phase chosen by QR on the first column
    order = list(range(1, k))
    order.insert(pos, 0)
    return q[:, order]


def _selection_unitary(modes: Sequence[int], positions: Sequence[int], k: int) -> np.ndarray:
    """Permutation unitary sending frame mode ``modes[i]`` to local slot ``positions[i]`` (apply directly)."""
    rest_src = [j for j in range(k) if j not in modes]
    rest_dst = [j for j in range(k) if j not in positions]
    perm = np.zeros((k, k))
    for src, dst in zip(list(modes) + rest_src, list(positions) + rest_dst):
        perm[dst, src] = 1
    return perm.astype(complex)


def constructive_route(g: Graph, sq: ga.Squeezing | float, pair: tuple[int, int]) -> ConstructiveRoute:
    """Route the target pair onto ``pair`` with passive optics built from the local spectra.

    Each provider first applies the transpose of the passive Bloch-Messiah
    factor of its Williamson symplectic, which leaves every local mode
    decoupled from its neighbours. For a cross-provider pair the mode holding
    a thermal ``lam`` state is moved to the client slot on side A; its
    partner on side B is the normalized cross-covariance vector, rotated so
    that ``Cov(Q_A, P_B) = mu`` and ``Cov(Q_A, Q_B) = 0``. For a same-provider
    pair two pure squeezed modes are moved to the client slots and joined by
    the two-node cluster interferometer.

    Raises:
        PreconditionError: when the relevant spectrum condition fails.
    """
    sq = sq if isinstance(sq, ga.Squeezing) else ga.Squeezing(float(sq))
    m_a, m_b = pair
    if g.partition is None:
        raise PreconditionError("graph has no provider partition")
    cov, cov_a, cov_b = provider_blocks(g, sq)
    side_a, side_b = g.side_a, g.side_b
    part = g.partition
    if part[m_a] == part[m_b]:
        return _route_internal(g, sq, cov, (m_a, m_b))
    if not part[m_a]:
        m_a, m_b = m_b, m_a
    lam, mu = sq.lam, sq.mu

    o_a, frame_a = _local_frame(cov_a)
    lam_modes = _frame_modes(frame_a, lam, lam)
    if not lam_modes:
        raise PreconditionError(f"lambda={lam:.6g} is not in the provider-A symplectic spectrum")
    ambiguous = len(lam_modes) > 1
    if ambiguous:
        log.warning("%d local modes carry lambda; using frame mode %d", len(lam_modes), lam_modes[0])
    k_a, k_b = len(side_a), len(side_b)
    sel_a = _selection_unitary([lam_modes[0]], [side_a.index(m_a)], k_a)
    u_a = sel_a @ ga.passive_unitary(o_a).conj().T

    o_b, _ = _local_frame(cov_b)
    # Cov(Q_A, .) over the B frame quadratures
    s_a = ga.passive_symplectic(u_a)
    q_a_vec = s_a[side_a.index(m_a)]
    idx_a = side_a + [v + g.n for v in side_a]
    idx_b = side_b + [v + g.n for v in side_b]
    cross = q_a_vec @ cov[np.ix_(idx_a, idx_b)] @ o_b
    norm = np.linalg.norm(cross)
    if not math.isclose(norm, mu, rel_tol=1e-6):
        raise PreconditionError(f"provider-B partner has weight {norm:.6g}, expected mu={mu:.6g}")
    w = cross / norm
    # P_B along w and Q_B along -J w; as a complex mode vector that is w_p - i w_q
    col = w[k_b:] - 1j * w[:k_b]
    v_b = _unitary_with_column(col, side_b.index(m_b))
    u_b = v_b.conj().T @ ga.passive_unitary(o_b).conj().T
    return _finish(g, sq, cov, u_a, u_b, (pair[0], pair[1]), ambiguous)


def _route_internal(g: Graph, sq: ga.Squeezing, cov: np.ndarray, pair: tuple[int, int]) -> ConstructiveRoute:
    m_1, m_2 = pair
    on_a = bool(g.partition[m_1])
    side = g.side_a if on_a else g.side_b
    local = ga.reduce(cov, side)
    o_loc, frame = _local_frame(local)
    pure = _frame_modes(frame, sq.s, 1 / sq.s)
    if len(pure) < 2:
        raise PreconditionError(f"internal routing needs two pure local modes, found {len(pure)}")
    k = len(side)
    slots = [side.index(m_1), side.index(m_2)]
    sel = _selection_unitary(pure[:2], slots, k)
    join = np.eye(k, dtype=complex)
    two_node = ga.passive_unitary(ga.cluster_symplectic(Graph(np.array([[0.0, 1.0], [1.0, 0.0]]))))
    join[np.ix_(slots, slots)] = two_node
    u_loc = join @ sel @ ga.passive_unitary(o_loc).conj().T
    other = np.eye(g.n - k, dtype=complex)
    u_a, u_b = (u_loc, other) if on_a else (other, u_loc)
    return _finish(g, sq, cov, u_a, u_b, pair, len(pure) > 2)


def _finish(g, sq, cov, u_a, u_b, pair, ambiguous) -> ConstructiveRoute:
    from .unitaries import embed_local

    s_mat = embed_local(u_a, u_b, g.partition)
    out = s_mat @ cov @ s_mat.T
    routed = ga.reduce(out, list(pair))
    return ConstructiveRoute(u_a, u_b, routed, tuple(pair), ambiguous, s_mat)


# ----------------------------------------------------------------------------
# ensemble histograms


@dataclass
class SpectralHistogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int
    lam: float
    value_one: int
    value_lambda: int
    ge_99_lambda: int
    graphs: int

    @property
    def value_one_pct(self) -> float:
        return 100 * self.value_one / self.total

    @property
    def value_lambda_pct(self) -> float:
        return 100 * self.value_lambda / self.total

    @property
    def ge_99_lambda_pct(self) -> float:
        return 100 * self.ge_99_lambda / self.total

    def summary(self) -> dict[str, Any]:
        return {
            "graphs": self.graphs,
            "eigenvalues": self.total,
            "lambda": self.lam,
            "value_one_pct": self.value_one_pct,
            "value_lambda_pct": self.value_lambda_pct,
            "ge_99_lambda_pct": self.ge_99_lambda_pct,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            out.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        return buf.getvalue()

    @staticmethod
    def read_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["bin_low", "bin_high", "count"]:
            raise ValueError(f"unexpected histogram header {rows[0]}")
        lo = [float(r[0]) for r in rows[1:]]
        edges = np.array(lo + [float(rows[-1][1])])
        return edges, np.array([int(r[2]) for r in rows[1:]])


def ensemble_eigenvalues(
    spec: TopologySpec, graphs: int, sq: ga.Squeezing | float, policy="half_by_index", threads: int = 1
) -> list[np.ndarray]:
    """Provider-A symplectic spectra of ``graphs`` samples with seeds ``spec.seed + i``."""

    def member(i: int) -> np.ndarray:
        member_spec = TopologySpec(spec.kind, spec.n, spec.model_params, spec.seed + i)
        g = bipartition(generate(member_spec), policy)
        return ga.symplectic_eigenvalues(ga.reduce(ga.build_cluster(g, sq), g.side_a))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(member, range(graphs)))
    return [member(i) for i in range(graphs)]


def histogram_from_eigenvalues(
    spectra: Sequence[np.ndarray], sq: ga.Squeezing | float, bins: int = 200
) -> SpectralHistogram:
    sq = sq if isinstance(sq, ga.Squeezing) else ga.Squeezing(float(sq))
    values = np.concatenate(list(spectra))
    lam = sq.lam
    # pure global states keep every local symplectic eigenvalue in [1, lam]
    hi = max(lam, float(values.max()))
    edges = np.linspace(1.0, hi, bins + 1) if hi > 1 else np.linspace(1.0, 2.0, bins + 1)
    counts, _ = np.histogram(np.clip(values, 1.0, None), bins=edges)
    return SpectralHistogram(
        edges=edges,
        counts=counts,
        total=values.size,
        lam=lam,
        value_one=int(np.sum(np.abs(values - 1) <= ENSEMBLE_ATOL)),
        value_lambda=int(np.sum(np.abs(values - lam) <= ENSEMBLE_ATOL)),
        ge_99_lambda=int(np.sum(values >= 0.99 * lam)),
        graphs=len(spectra),
    )


def spectral_histogram(
    spec: TopologySpec,
    graphs: int,
    sq: ga.Squeezing | float,
    bins: int = 200,
    policy="half_by_index",
    threads: int = 1,
) -> SpectralHistogram:
    """Pool the provider-A symplectic eigenvalues of an ensemble and bin them.

    "Value 1" and "value lam" are counted with absolute tolerance 1e-6.
    """
    return histogram_from_eigenvalues(ensemble_eigenvalues(spec, graphs, sq, policy, threads), sq, bins)


# ----------------------------------------------------------------------------
# square network

# (X_A1, X_A2, P_A1, P_A2, X_B3, X_B4, P_B3, P_B4) -> global (Q1..Q4, P1..P4)
SQUARE_ORDER = [0, 1, 4, 5, 2, 3, 6, 7]

_ALPHA = math.atan(2) / 2
SQUARE_HAND_SOLUTION = {
    "theta_a": math.pi / 4,
    "phi1_a": 0.0,
    "phi2_a": 3 * math.pi / 2 + _ALPHA,
    "phi3_a": 0.0,
    "theta_b": math.pi / 4,
    "phi1_b": 0.0,
    "phi2_b": math.pi / 2 + _ALPHA,
    "phi3_b": 0.0,
}


def square_covariance(s: float) -> np.ndarray:
    """Closed-form covariance of the squeezed square cluster, provider-interleaved order."""
    a = 3 * s / 5 + 2 / (5 * s)
    b = (s * s - 1) / (5 * s)
    c = 2 * (s * s - 1) / (5 * s)
    d = 2 * s / 5 + 3 / (5 * s)
    return np.array(
        [
            [a, 0, 0, b, 0, -c, b, 0],
            [0, a, b, 0, -c, 0, 0, b],
            [0, b, d, 0, b, 0, 0, c],
            [b, 0, 0, d, 0, b, c, 0],
            [0, -c, b, 0, a, 0, 0, b],
            [-c, 0, 0, b, 0, a, b, 0],
            [b, 0, 0, c, 0, b, d, 0],
            [0, b, c, 0, b, 0, 0, d],
        ]
    )


def square_oracle(
    sq: ga.Squeezing | float,
    theta_a: float,
    phi1_a: float,
    phi2_a: float,
    phi3_a: float,
    theta_b: float,
    phi1_b: float,
    phi2_b: float,
    phi3_b: float,
) -> np.ndarray:
    """Square-cluster covariance after one general beam splitter per provider.

    Input and output use the provider-interleaved order of
    :func:`square_covariance`.
    """
    sq = sq if isinstance(sq, ga.Squeezing) else ga.Squeezing(float(sq))
    s_a = ga.passive_symplectic(beam_splitter_unitary(theta_a, phi1_a, phi2_a, phi3_a))
    s_b = ga.passive_symplectic(beam_splitter_unitary(theta_b, phi1_b, phi2_b, phi3_b))
    s_mat = np.zeros((8, 8))
    s_mat[:4, :4] = s_a
    s_mat[4:, 4:] = s_b
    return s_mat @ square_covariance(sq.s) @ s_mat.T


def square_pair_block(gen: np.ndarray, a_mode: int = 0, b_mode: int = 0) -> np.ndarray:
    """``(X_A, X_B, P_A, P_B)`` block for output mode ``a_mode`` of A and ``b_mode`` of B."""
    idx = [a_mode, 4 + b_mode, 2 + a_mode, 6 + b_mode]
    return gen[np.ix_(idx, idx)]


def decoupling_theta(phi1: float | np.ndarray) -> float | np.ndarray:
    """Beam-splitter angle cancelling Cov(X1, X2): ``0.5 * arccot(-sin(phi1) / 2)``, arccot in (0, pi).

    The angle assumes phases ``exp(-i phi)``; :func:`square_residuals` applies it that way.
    """
    return 0.5 * (np.pi / 2 - np.arctan(-np.sin(phi1) / 2))


def square_residuals(sq: ga.Squeezing | float, phi1: float, phi2: float) -> tuple[float, float]:
    """``(Var(X1) - lam, Cov(X1, P1))`` of A's first output mode at the decoupling angle."""
    sq = sq if isinstance(sq, ga.Squeezing) else ga.Squeezing(float(sq))
    local = _scan_local(sq.s, decoupling_theta(phi1), phi1, phi2)
    return local[0, 0] - sq.lam, local[0, 2]


def _scan_local(s: float, theta: float, phi1: float, phi2: float) -> np.ndarray:
    # the decoupling angle is written for the conjugate phase convention, so the phases enter negated
    s_a = ga.passive_symplectic(beam_splitter_unitary(theta, -phi1, -phi2, 0.0))
    return s_a @ square_covariance(s)[:4, :4] @ s_a.T


@dataclass
class SquareScan:
    phi1: np.ndarray
    phi2: np.ndarray
    var_residual: np.ndarray
    cov_residual: np.ndarray

    @property
    def min_max_residual(self) -> float:
        return float(np.min(np.maximum(np.abs(self.var_residual), np.abs(self.cov_residual))))

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["phi1_a", "phi2_a", "var_x1_minus_lambda", "cov_x1_p1"])
        for i, p1 in enumerate(self.phi1):
            for j, p2 in enumerate(self.phi2):
                out.writerow([repr(float(p1)), repr(float(p2)), repr(float(self.var_residual[i, j])), repr(float(self.cov_residual[i, j]))])
        return buf.getvalue()


def square_scan(sq: ga.Squeezing | float, points: int = 200) -> SquareScan:
    """Evaluate :func:`square_residuals` on a ``points x points`` grid over ``[0, 2pi]^2``."""
    grid = np.linspace(0, 2 * np.pi, points)
    var_r = np.empty((points, points))
    cov_r = np.empty((points, points))
    for i, p1 in enumerate(grid):
        for j, p2 in enumerate(grid):
            var_r[i, j], cov_r[i, j] = square_residuals(sq, p1, p2)
    return SquareScan(grid, grid.copy(), var_r, cov_r)
