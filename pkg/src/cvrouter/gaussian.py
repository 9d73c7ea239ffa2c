r"""Covariance matrices of Gaussian graph states and symplectic linear algebra.

Conventions used everywhere in the package:

* quadratures are ordered :math:`(Q_1..Q_n, P_1..P_n)`;
* vacuum variance is 1 (:math:`\hbar = 2`);
* the symplectic form is :math:`\Omega = [[0, I], [-I, 0]]`.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import polar

from .netgen import Graph

SYMMETRY_RTOL = 1e-12
SYMPLECTIC_TOL = 1e-10


class PhysicalityError(ValueError):
    pass


def omega(n: int) -> np.ndarray:
    """Symplectic form for ``n`` modes."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def passive_symplectic(u: np.ndarray) -> np.ndarray:
    """Orthogonal symplectic matrix ``[[Re U, -Im U], [Im U, Re U]]`` of a unitary."""
    x, y = u.real, u.imag
    return np.block([[x, -y], [y, x]])


def passive_unitary(o: np.ndarray) -> np.ndarray:
    """Inverse of :func:`passive_symplectic`."""
    n = o.shape[0] // 2
    return o[:n, :n] + 1j * o[n:, :n]


def is_symplectic(s: np.ndarray, tol: float = SYMPLECTIC_TOL) -> bool:
    n = s.shape[0] // 2
    om = omega(n)
    return s.shape == (2 * n, 2 * n) and np.linalg.norm(s.T @ om @ s - om) <= tol * max(1.0, np.linalg.norm(s) ** 2)


def check_covariance(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
        raise PhysicalityError("covariance matrix must be square with even dimension")
    if np.linalg.norm(cov - cov.T) > SYMMETRY_RTOL * max(1.0, np.linalg.norm(cov)):
        raise PhysicalityError("covariance matrix is not symmetric")
    return cov


@dataclass(frozen=True)
class Squeezing:
    """Equal squeezing of every input mode, given as ``s = exp(2r)``.

    ``lam`` and ``mu`` are the diagonal and cross entries of the target pair,
    ``cosh(2r)`` and ``sinh(2r)``.
    """

    s: float

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ValueError(f"squeezing factor must be positive, got {self.s}")

    @classmethod
    def from_r(cls, r: float) -> Squeezing:
        return cls(math.exp(2 * r))

    @property
    def r(self) -> float:
        return math.log(self.s) / 2

    @property
    def lam(self) -> float:
        return (self.s + 1 / self.s) / 2

    @property
    def mu(self) -> float:
        return (self.s - 1 / self.s) / 2


def _as_squeezing(sq: Squeezing | float) -> Squeezing:
    return sq if isinstance(sq, Squeezing) else Squeezing(float(sq))


def cluster_symplectic(g: Graph) -> np.ndarray:
    """Passive symplectic that turns momentum-squeezed vacua into the graph state of ``g``.

    ``X = (I + A^2)^{-1/2}`` and ``Y = A X``, with the free orthogonal factor
    set to the identity.
    """
    a = g.adjacency
    w, v = np.linalg.eigh(a)
    x = (v / np.sqrt(1 + w**2)) @ v.T
    y = a @ x
    return np.block([[x, -y], [y, x]])


def squeezed_vacuum(n: int, sq: Squeezing | float) -> np.ndarray:
    sq = _as_squeezing(sq)
    return np.diag([sq.s] * n + [1 / sq.s] * n)


def build_cluster(g: Graph, sq: Squeezing | float) -> np.ndarray:
    """Covariance matrix of the finitely squeezed graph state of ``g``."""
    s_mat = cluster_symplectic(g)
    cov = s_mat @ squeezed_vacuum(g.n, sq) @ s_mat.T
    return (cov + cov.T) / 2


def target_pair_covariance(sq: Squeezing | float) -> np.ndarray:
    """The two-mode cluster ``[[lam,0,0,mu],[0,lam,mu,0],[0,mu,lam,0],[mu,0,0,lam]]``."""
    sq = _as_squeezing(sq)
    lam, mu = sq.lam, sq.mu
    return np.array([[lam, 0, 0, mu], [0, lam, mu, 0], [0, mu, lam, 0], [mu, 0, 0, lam]])


def _mode_indices(n: int, modes: Sequence[int]) -> list[int]:
    modes = [int(m) for m in modes]
    if len(set(modes)) != len(modes):
        raise IndexError(f"duplicate modes in {modes}")
    for m in modes:
        if not 0 <= m < n:
            raise IndexError(f"mode {m} out of range for {n} modes")
    return modes + [m + n for m in modes]


def reduce(cov: np.ndarray, modes: Sequence[int]) -> np.ndarray:
    """Reduced covariance of ``modes`` (partial trace), kept in Q..P order."""
    idx = _mode_indices(cov.shape[0] // 2, modes)
    return cov[np.ix_(idx, idx)]


def routing_rows(cov: np.ndarray, m_a: int, m_b: int) -> np.ndarray:
    """Rows ``(m_a, m_b, m_a+n, m_b+n)`` of ``cov`` over all ``2n`` columns."""
    idx = _mode_indices(cov.shape[0] // 2, [m_a, m_b])
    return cov[idx, :]


def ideal_rows(n: int, m_a: int, m_b: int, sq: Squeezing | float) -> np.ndarray:
    """The ``4 x 2n`` rows of a state holding the target pair on ``(m_a, m_b)``, decoupled from the rest."""
    idx = _mode_indices(n, [m_a, m_b])
    rows = np.zeros((4, 2 * n))
    rows[:, idx] = target_pair_covariance(sq)
    return rows


def _entropy_term(x: float) -> float:
    if x <= 0:
        return 0.0
    return (x + 1) * math.log2(x + 1) - x * math.log2(x)


def von_neumann_entropy(cov: np.ndarray, eigenvalues: np.ndarray | None = None) -> float:
    """Entropy in bits, summed over the symplectic eigenvalues."""
    nu = symplectic_eigenvalues(cov) if eigenvalues is None else np.asarray(eigenvalues)
    if np.any(nu < 1 - 1e-6):
        raise PhysicalityError(f"symplectic eigenvalue {nu.min():.6g} < 1: matrix is unphysical")
    return float(sum(_entropy_term((v - 1) / 2) for v in nu))


def purity(cov: np.ndarray) -> float:
    """``1/sqrt(det cov)``; equal to 1 for pure states."""
    det = np.linalg.det(cov)
    if not det > 0:
        raise PhysicalityError(f"non-positive determinant {det}")
    return float(det**-0.5)


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues in descending order (moduli of eigenvalues of ``i Omega cov``)."""
    cov = check_covariance(cov)
    n = cov.shape[0] // 2
    # i * (Omega cov) has the same spectrum as i * cov^{1/2} Omega cov^{1/2}, which is Hermitian
    root = _sqrtm_psd(cov)
    herm = 1j * (root @ omega(n) @ root)
    w = np.linalg.eigvalsh(herm)
    return np.sort(w[n:])[::-1]


def _sqrtm_psd(cov: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(cov)
    if w[0] <= 0:
        raise PhysicalityError("covariance matrix is not positive definite")
    return (v * np.sqrt(w)) @ v.T


class WilliamsonResult(NamedTuple):
    eigenvalues: np.ndarray
    symplectic: np.ndarray

    def diagonal(self) -> np.ndarray:
        return np.diag(np.concatenate([self.eigenvalues, self.eigenvalues]))

    def reconstruct(self) -> np.ndarray:
        return self.symplectic @ self.diagonal() @ self.symplectic.T


def williamson(cov: np.ndarray) -> WilliamsonResult:
    r"""Williamson normal form ``cov = S diag(nu, nu) S^T`` with ``S`` symplectic.

    Works on the Hermitian matrix :math:`i\,\Gamma^{1/2}\Omega\Gamma^{1/2}`,
    whose positive eigenvalues are the symplectic eigenvalues. A Hermitian
    eigensolver returns an orthonormal basis inside degenerate clusters, so
    repeated eigenvalues (e.g. many pure modes) need no special pairing.
    """
    cov = check_covariance(cov)
    n = cov.shape[0] // 2
    root = _sqrtm_psd(cov)
    w, vecs = np.linalg.eigh(1j * (root @ omega(n) @ root))
    order = np.argsort(w)[::-1][:n]
    nu = w[order]
    if nu[-1] <= 0:
        raise PhysicalityError("could not pair symplectic eigenvalues")
    u = vecs[:, order] * math.sqrt(2)
    # root Omega root maps Re u -> nu Im u and Im u -> -nu Re u
    basis = np.hstack([u.imag, u.real])
    scale = np.concatenate([nu, nu]) ** -0.5
    s_mat = (root @ basis) * scale
    return WilliamsonResult(nu, s_mat)


class BlochMessiah(NamedTuple):
    first: np.ndarray
    squeezing: np.ndarray
    second: np.ndarray

    @property
    def factors(self) -> np.ndarray:
        n = self.squeezing.shape[0] // 2
        return np.diag(self.squeezing)[:n]


def _complex_structure_basis(space: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal vectors ``v_k`` of ``space`` such that ``{v_k, J v_k}`` span it."""
    n = space.shape[0] // 2
    j = -omega(n)
    picked: list[np.ndarray] = []
    remaining = space.copy()
    while remaining.shape[1]:
        norms = np.linalg.norm(remaining, axis=0)
        k = int(np.argmax(norms))
        if norms[k] < tol:
            break
        v = remaining[:, k] / norms[k]
        picked.append(v)
        pair = np.column_stack([v, j @ v])
        remaining = remaining - pair @ (pair.T @ remaining)
    return np.column_stack(picked) if picked else np.zeros((2 * n, 0))


def bloch_messiah(s_mat: np.ndarray, tol: float = 1e-9) -> BlochMessiah:
    """Factor a symplectic matrix as ``first @ squeezing @ second``.

    ``first`` and ``second`` are orthogonal symplectic (passive) and
    ``squeezing = diag(d, 1/d)`` with ``d`` descending and ``d >= 1``.

    Raises:
        ValueError: if ``s_mat`` is not symplectic.
    """
    s_mat = np.asarray(s_mat, dtype=float)
    if not is_symplectic(s_mat, 1e-8):
        raise ValueError("input matrix is not symplectic")
    n = s_mat.shape[0] // 2
    u, p = polar(s_mat, side="right")
    p = (p + p.T) / 2
    w, v = np.linalg.eigh(p)
    logw = np.log(w)
    j = -omega(n)
    big = np.flatnonzero(logw > tol)
    big = big[np.argsort(-w[big])]
    unit = np.flatnonzero(np.abs(logw) <= tol)
    cols = [v[:, big]]
    if unit.size:
        cols.append(_complex_structure_basis(v[:, unit]))
    x = np.hstack(cols)
    if x.shape[1] != n:
        raise ValueError("squeezing spectrum does not pair up; matrix is not symplectic to tolerance")
    o = np.hstack([x, j @ x])
    d = np.ones(n)
    d[: big.size] = w[big]
    squeeze = np.diag(np.concatenate([d, 1 / d]))
    return BlochMessiah(u @ o, squeeze, o.T)


def covariance_to_csv(cov: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(f"# modes={cov.shape[0] // 2} ordering=QP\n")
    np.savetxt(buf, cov, delimiter=",", fmt="%.17g")
    return buf.getvalue()


def covariance_from_csv(text: str) -> np.ndarray:
    lines = text.splitlines()
    header = lines[0].strip()
    if not header.startswith("# modes=") or "ordering=QP" not in header:
        raise ValueError(f"unexpected covariance header {header!r}")
    n = int(header.split()[1].split("=")[1])
    cov = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    if cov.shape != (2 * n, 2 * n):
        raise ValueError(f"expected {2 * n}x{2 * n} matrix, got {cov.shape}")
    return cov
