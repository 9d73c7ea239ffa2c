"""Provider-local passive unitaries.

Unitaries are generated as ``exp(i H)`` with ``H`` expanded in the
generalized Gell-Mann basis plus the identity, so ``n**2`` real parameters
cover all of U(n).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Sequence

import numpy as np

from .gaussian import passive_symplectic


@lru_cache(maxsize=None)
def gell_mann_basis(n: int, include_identity: bool = True) -> np.ndarray:
    """Generalized Gell-Mann matrices stacked as an ``(n**2, n, n)`` array.

    Order: symmetric ``(j<k)`` lexicographic, antisymmetric in the same order,
    diagonal ``l = 1..n-1``, then the identity when ``include_identity``.
    """
    if n < 1:
        raise ValueError("basis size must be positive")
    sym, anti, diag = [], [], []
    for j in range(n):
        for k in range(j + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[j, k] = e[k, j] = 1
            sym.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[j, k], e[k, j] = -1j, 1j
            anti.append(e)
    for l in range(1, n):
        d = np.zeros(n)
        d[:l] = 1
        d[l] = -l
        diag.append(np.diag(d * np.sqrt(2 / (l * (l + 1)))).astype(complex))
    mats = sym + anti + diag
    if include_identity:
        mats.append(np.eye(n, dtype=complex))
    basis = np.array(mats).reshape(len(mats), n, n)
    basis.setflags(write=False)
    return basis


def hermitian(eps: Sequence[float], n: int) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (n * n,):
        raise ValueError(f"expected {n * n} parameters for a {n}x{n} unitary, got {eps.size}")
    return np.tensordot(eps, gell_mann_basis(n), axes=1)


def to_unitary(eps: Sequence[float], n: int) -> np.ndarray:
    """``exp(i H(eps))`` via the eigendecomposition of the Hermitian generator."""
    w, v = np.linalg.eigh(hermitian(eps, n))
    return (v * np.exp(1j * w)) @ v.conj().T


def embed_local(u_a: np.ndarray, u_b: np.ndarray, partition: np.ndarray) -> np.ndarray:
    """Global symplectic of two provider-local passive unitaries.

    ``u_a`` acts on the provider-A vertices in increasing index order, ``u_b``
    on the provider-B vertices; all cross-provider blocks are zero.
    """
    part = np.asarray(partition, dtype=bool)
    side_a, side_b = np.flatnonzero(part), np.flatnonzero(~part)
    if u_a.shape != (side_a.size, side_a.size) or u_b.shape != (side_b.size, side_b.size):
        raise ValueError(
            f"unitary shapes {u_a.shape}, {u_b.shape} do not match provider sizes {side_a.size}, {side_b.size}"
        )
    u = np.zeros((part.size, part.size), dtype=complex)
    u[np.ix_(side_a, side_a)] = u_a
    u[np.ix_(side_b, side_b)] = u_b
    return passive_symplectic(u)


def beam_splitter_unitary(theta: float, phi1: float, phi2: float, phi3: float) -> np.ndarray:
    """General two-mode passive unitary: a rotation by ``theta`` dressed with three phases."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [np.exp(1j * phi2) * c, -np.exp(1j * (phi1 + phi2)) * s],
            [np.exp(1j * phi3) * s, np.exp(1j * (phi1 + phi3)) * c],
        ]
    )


@dataclass
class UnitaryParams:
    eps_a: np.ndarray
    eps_b: np.ndarray

    def __post_init__(self):
        self.eps_a = np.asarray(self.eps_a, dtype=float)
        self.eps_b = np.asarray(self.eps_b, dtype=float)
        for name, v in (("eps_a", self.eps_a), ("eps_b", self.eps_b)):
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite vector")
            if round(np.sqrt(v.size)) ** 2 != v.size:
                raise ValueError(f"{name} length {v.size} is not a square")

    @classmethod
    def zeros(cls, n_a: int, n_b: int) -> UnitaryParams:
        return cls(np.zeros(n_a * n_a), np.zeros(n_b * n_b))

    @classmethod
    def split(cls, x: np.ndarray, n_a: int) -> UnitaryParams:
        return cls(x[: n_a * n_a], x[n_a * n_a :])

    @property
    def n_a(self) -> int:
        return round(np.sqrt(self.eps_a.size))

    @property
    def n_b(self) -> int:
        return round(np.sqrt(self.eps_b.size))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.eps_a, self.eps_b])

    def unitaries(self) -> tuple[np.ndarray, np.ndarray]:
        return to_unitary(self.eps_a, self.n_a), to_unitary(self.eps_b, self.n_b)

    def symplectic(self, partition: np.ndarray) -> np.ndarray:
        return embed_local(*self.unitaries(), partition)

    def to_json(self) -> dict[str, Any]:
        # json writes floats with repr, which round-trips doubles exactly
        return {"eps_a": self.eps_a.tolist(), "eps_b": self.eps_b.tolist()}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> UnitaryParams:
        return cls(doc["eps_a"], doc["eps_b"])

    def dumps(self) -> str:
        return json.dumps(self.to_json()) + "\n"

    def __eq__(self, other):
        if not isinstance(other, UnitaryParams):
            return NotImplemented
        return np.array_equal(self.eps_a, other.eps_a) and np.array_equal(self.eps_b, other.eps_b)
