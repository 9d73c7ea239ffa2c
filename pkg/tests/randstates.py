"""Random physical states built without the decompositions under test."""

import numpy as np
from scipy.stats import unitary_group

from cvrouter import gaussian as ga


def random_symplectic(n: int, rng: np.random.Generator, max_log: float = 1.5) -> np.ndarray:
    o1 = ga.passive_symplectic(unitary_group.rvs(n, random_state=rng)) if n > 1 else _phase(rng)
    o2 = ga.passive_symplectic(unitary_group.rvs(n, random_state=rng)) if n > 1 else _phase(rng)
    d = np.exp(rng.uniform(0, max_log, n))
    return o1 @ np.diag(np.concatenate([d, 1 / d])) @ o2


def _phase(rng):
    return ga.passive_symplectic(np.array([[np.exp(1j * rng.uniform(0, 2 * np.pi))]]))


def random_covariance(n: int, rng: np.random.Generator, nu: np.ndarray | None = None):
    """Return ``(cov, nu, S)`` with ``cov = S diag(nu, nu) S^T``."""
    if nu is None:
        nu = 1 + rng.exponential(1.0, n) * (rng.random(n) < 0.7)
    s = random_symplectic(n, rng)
    return s @ np.diag(np.concatenate([nu, nu])) @ s.T, np.sort(nu)[::-1], s


def random_graph(n: int, rng: np.random.Generator, p: float = 0.4) -> np.ndarray:
    a = np.triu((rng.random((n, n)) < p).astype(float), 1)
    return a + a.T
