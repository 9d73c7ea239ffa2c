"""Derandomized (mu, lambda) CMA-ES and its use for entanglement routing.

The evolution strategy follows the classic Hansen-Ostermeier update with
rank-one and rank-mu covariance terms and cumulative step-size control.
Routing minimizes

    f = ||ideal rows - routed rows||_F + (1 - purity(routed pair)) / 2

over the Gell-Mann coordinates of the two provider unitaries.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from . import gaussian as ga
from .netgen import Graph
from .unitaries import UnitaryParams

IDEAL_THRESHOLD = 1e-5
PURITY_THRESHOLD = 1 - 1e-3


class DivergenceError(RuntimeError):
    pass


def default_offspring(dim: int) -> int:
    return max(4, round(4 + math.log(dim)))


def recombination_weights(mu: int) -> np.ndarray:
    w = np.log((mu + 1) / np.arange(1, mu + 1))
    return w / w.sum()


@dataclass(frozen=True)
class CmaConfig:
    """Strategy parameters; the learning rates are derived from ``dim``."""

    dim: int
    lambda_off: int | None = None
    mu_par: int | None = None
    max_generations: int = 20000
    f_target: float = 1e-8
    sigma0: float = 0.5
    seed: int = 0
    stagnation_generations: int = 2000
    stagnation_tol: float = 1e-12
    eigen_refresh: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        lam = self.lambda_off if self.lambda_off is not None else default_offspring(self.dim)
        mu = self.mu_par if self.mu_par is not None else lam // 2
        if not 1 <= mu <= lam:
            raise ValueError(f"need 1 <= mu_par <= lambda_off, got {mu}, {lam}")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        object.__setattr__(self, "lambda_off", lam)
        object.__setattr__(self, "mu_par", mu)

    @property
    def weights(self) -> np.ndarray:
        return recombination_weights(self.mu_par)

    @property
    def mu_eff(self) -> float:
        return float(1 / np.sum(self.weights**2))

    @property
    def c_c(self) -> float:
        return 4 / (self.dim + 4)

    @property
    def c_cov(self) -> float:
        return 2 / (self.dim + math.sqrt(2)) ** 2

    @property
    def c_sigma(self) -> float:
        return (self.mu_eff + 2) / (self.dim + self.mu_eff + 3)

    @property
    def d_sigma(self) -> float:
        return 1 + self.c_sigma

    @property
    def chi_n(self) -> float:
        d = self.dim
        return math.sqrt(d) * (1 - 1 / (4 * d) + 1 / (21 * d * d))

    def to_json(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "lambda_off": self.lambda_off,
            "mu_par": self.mu_par,
            "max_generations": self.max_generations,
            "f_target": self.f_target,
            "sigma0": self.sigma0,
            "seed": self.seed,
            "stagnation_generations": self.stagnation_generations,
            "stagnation_tol": self.stagnation_tol,
            "eigen_refresh": self.eigen_refresh,
            "threads": self.threads,
        }


@dataclass
class OptimizerState:
    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    p_c: np.ndarray
    p_sigma: np.ndarray
    basis: np.ndarray
    eigvals: np.ndarray
    rng: np.random.Generator
    generation: int = 0
    best_x: np.ndarray | None = None
    best_f: float = math.inf
    last_f: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def initial(cls, cfg: CmaConfig, x0: Sequence[float] | None = None) -> OptimizerState:
        d = cfg.dim
        mean = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
        if mean.shape != (d,):
            raise ValueError(f"start point has shape {mean.shape}, expected ({d},)")
        return cls(
            mean=mean,
            sigma=cfg.sigma0,
            cov=np.eye(d),
            p_c=np.zeros(d),
            p_sigma=np.zeros(d),
            basis=np.eye(d),
            eigvals=np.ones(d),
            rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, 1])),
        )


def _evaluate(f: Callable[[np.ndarray], float], xs: np.ndarray, threads: int) -> np.ndarray:
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return np.array(list(pool.map(f, xs)), dtype=float)
    return np.array([f(x) for x in xs], dtype=float)


def step(state: OptimizerState, cfg: CmaConfig, f: Callable[[np.ndarray], float]) -> OptimizerState:
    """Run one generation and return the updated state.

    The random generator inside ``state`` is advanced in place; everything
    else in the returned state is freshly allocated.

    Raises:
        DivergenceError: if the search distribution stops being finite.
    """
    lam, mu, w = cfg.lambda_off, cfg.mu_par, cfg.weights
    mu_eff = cfg.mu_eff
    scaled = state.basis * np.sqrt(state.eigvals)  # B Lambda^{1/2}

    z = state.rng.standard_normal((lam, cfg.dim))
    xs = state.mean + state.sigma * z @ scaled.T
    fs = _evaluate(f, xs, cfg.threads)
    if np.any(np.isnan(fs)):
        raise DivergenceError(f"objective returned NaN at generation {state.generation}")
    order = np.argsort(fs, kind="stable")[:mu]
    z_sel = z[order]
    z_mean = w @ z_sel

    mean = w @ xs[order]
    c_c, c_cov, c_s = cfg.c_c, cfg.c_cov, cfg.c_sigma
    p_c = (1 - c_c) * state.p_c + math.sqrt(c_c * (2 - c_c) * mu_eff) * scaled @ z_mean
    y_sel = z_sel @ scaled.T
    rank_mu = (y_sel.T * w) @ y_sel
    cov = (1 - c_cov) * state.cov + (c_cov / mu_eff) * np.outer(p_c, p_c) + c_cov * (1 - 1 / mu_eff) * rank_mu
    cov = (cov + cov.T) / 2
    p_sigma = (1 - c_s) * state.p_sigma + math.sqrt(c_s * (2 - c_s) * mu_eff) * state.basis @ z_mean
    sigma = state.sigma * math.exp((c_s / cfg.d_sigma) * (np.linalg.norm(p_sigma) / cfg.chi_n - 1))

    if not (np.all(np.isfinite(cov)) and np.all(np.isfinite(mean)) and math.isfinite(sigma) and sigma > 0):
        raise DivergenceError(
            f"search distribution diverged at generation {state.generation}: sigma={sigma}, "
            f"max|C|={np.nanmax(np.abs(cov))}"
        )

    generation = state.generation + 1
    basis, eigvals = state.basis, state.eigvals
    if generation % max(1, cfg.eigen_refresh) == 0:
        eigvals, basis = np.linalg.eigh(cov)
        eigvals = np.maximum(eigvals, 1e-300)

    best_k = order[0]
    best_x, best_f = state.best_x, state.best_f
    if fs[best_k] < best_f:
        best_x, best_f = xs[best_k].copy(), float(fs[best_k])

    return replace(
        state,
        mean=mean,
        sigma=sigma,
        cov=cov,
        p_c=p_c,
        p_sigma=p_sigma,
        basis=basis,
        eigvals=eigvals,
        generation=generation,
        best_x=best_x,
        best_f=best_f,
        last_f=fs,
    )


@dataclass
class MinimizeResult:
    x: np.ndarray
    f: float
    generations: int
    history: list[tuple[int, float, float]]
    stop_reason: str
    state: OptimizerState


def minimize(
    f: Callable[[np.ndarray], float],
    cfg: CmaConfig,
    x0: Sequence[float] | None = None,
    callback: Callable[[OptimizerState], None] | None = None,
) -> MinimizeResult:
    """Iterate :func:`step` until the target, the generation budget, or stagnation."""
    state = OptimizerState.initial(cfg, x0)
    # the start point counts as generation 0 so a search never reports worse than where it began
    state.best_x, state.best_f = state.mean.copy(), float(f(state.mean))
    history: list[tuple[int, float, float]] = []
    last_improvement, ref_f = 0, state.best_f
    reason = "max_generations"
    while state.generation < cfg.max_generations:
        state = step(state, cfg, f)
        history.append((state.generation, state.best_f, state.sigma))
        if callback is not None:
            callback(state)
        if state.best_f <= cfg.f_target:
            reason = "f_target"
            break
        if ref_f - state.best_f > cfg.stagnation_tol:
            ref_f, last_improvement = state.best_f, state.generation
        elif state.generation - last_improvement >= cfg.stagnation_generations:
            reason = "stagnation"
            break
    return MinimizeResult(state.best_x, state.best_f, state.generation, history, reason, state)


# ----------------------------------------------------------------------------
# routing


@dataclass(eq=False)
class RoutingProblem:
    graph: Graph
    squeezing: ga.Squeezing
    m_a: int
    m_b: int
    initial: np.ndarray = field(init=False, repr=False)
    ideal: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = self.graph
        if g.partition is None:
            raise ValueError("routing needs a bipartitioned graph")
        if self.m_a == self.m_b or not (0 <= self.m_a < g.n and 0 <= self.m_b < g.n):
            raise IndexError(f"invalid routing pair ({self.m_a}, {self.m_b}) for n={g.n}")
        if not isinstance(self.squeezing, ga.Squeezing):
            self.squeezing = ga.Squeezing(float(self.squeezing))
        self.initial = ga.build_cluster(g, self.squeezing)
        self.ideal = ga.ideal_rows(g.n, self.m_a, self.m_b, self.squeezing)

    @property
    def n_a(self) -> int:
        return int(self.graph.partition.sum())

    @property
    def n_b(self) -> int:
        return self.graph.n - self.n_a

    @property
    def dim(self) -> int:
        return self.n_a**2 + self.n_b**2

    @property
    def internal(self) -> bool:
        part = self.graph.partition
        return bool(part[self.m_a] == part[self.m_b])

    def transformed(self, params: UnitaryParams) -> np.ndarray:
        s_mat = params.symplectic(self.graph.partition)
        return s_mat @ self.initial @ s_mat.T

    def evaluate(self, params: UnitaryParams) -> tuple[float, float, float]:
        return objective(self, params)

    def __call__(self, x: np.ndarray) -> float:
        return objective(self, UnitaryParams.split(x, self.n_a))[0]


def objective(problem: RoutingProblem, params: UnitaryParams) -> tuple[float, float, float]:
    """Return ``(f_opt, purity, frobenius)`` for one parameter vector."""
    if params.n_a != problem.n_a or params.n_b != problem.n_b:
        raise ValueError(
            f"parameter sizes ({params.n_a}, {params.n_b}) do not match providers ({problem.n_a}, {problem.n_b})"
        )
    n = problem.graph.n
    s_mat = params.symplectic(problem.graph.partition)
    idx = [problem.m_a, problem.m_b, problem.m_a + n, problem.m_b + n]
    rows = s_mat[idx] @ problem.initial @ s_mat.T
    frob = float(np.linalg.norm(problem.ideal - rows))
    gamma = ga.purity(rows[:, idx])
    return frob + 0.5 * (1 - gamma), gamma, frob


@dataclass
class RoutingOutcome:
    best_params: UnitaryParams
    f_opt: float
    purity: float
    frobenius: float
    routed: np.ndarray
    history: list[tuple[int, float, float]]
    classification: str
    generations: int
    stop_reason: str
    pair: tuple[int, int]

    def to_json(self) -> dict[str, Any]:
        return {
            "params": self.best_params.to_json(),
            "f_opt": self.f_opt,
            "purity": self.purity,
            "frobenius": self.frobenius,
            "routed": self.routed.tolist(),
            "classification": self.classification,
            "generations": self.generations,
            "stop_reason": self.stop_reason,
            "pair": list(self.pair),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any], history: list[tuple[int, float, float]] | None = None) -> RoutingOutcome:
        return cls(
            best_params=UnitaryParams.from_json(doc["params"]),
            f_opt=doc["f_opt"],
            purity=doc["purity"],
            frobenius=doc["frobenius"],
            routed=np.array(doc["routed"]),
            history=history or [],
            classification=doc["classification"],
            generations=doc["generations"],
            stop_reason=doc["stop_reason"],
            pair=tuple(doc["pair"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    def history_csv(self) -> str:
        return history_to_csv(self.history)


def history_to_csv(history: Sequence[tuple[int, float, float]]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["generation", "best_f", "sigma_g"])
    for gen, best, sigma in history:
        out.writerow([gen, repr(float(best)), repr(float(sigma))])
    return buf.getvalue()


def history_from_csv(text: str) -> list[tuple[int, float, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != ["generation", "best_f", "sigma_g"]:
        raise ValueError(f"unexpected history header {rows[0]}")
    return [(int(g), float(b), float(s)) for g, b, s in rows[1:]]


def classify(f_opt: float, gamma: float) -> str:
    if f_opt <= IDEAL_THRESHOLD:
        return "ideal"
    if gamma >= PURITY_THRESHOLD:
        return "imperfect"
    return "failed"


def route(
    problem: RoutingProblem,
    cfg: CmaConfig | None = None,
    callback: Callable[[OptimizerState], None] | None = None,
) -> RoutingOutcome:
    """Search provider unitaries that put the target pair on ``(m_a, m_b)``.

    The search starts from identity unitaries. ``cfg.dim`` must equal the
    problem's parameter count; pass ``None`` for defaults.
    """
    if cfg is None:
        cfg = CmaConfig(problem.dim)
    if cfg.dim != problem.dim:
        raise ValueError(f"config dimension {cfg.dim} does not match problem dimension {problem.dim}")
    result = minimize(problem, cfg, callback=callback)
    params = UnitaryParams.split(result.x, problem.n_a)
    f_opt, gamma, frob = objective(problem, params)
    routed = ga.reduce(problem.transformed(params), [problem.m_a, problem.m_b])
    return RoutingOutcome(
        best_params=params,
        f_opt=f_opt,
        purity=gamma,
        frobenius=frob,
        routed=routed,
        history=result.history,
        classification=classify(f_opt, gamma),
        generations=result.generations,
        stop_reason=result.stop_reason,
        pair=(problem.m_a, problem.m_b),
    )
