"""Derivative-free minimisation over a box by Bayesian optimisation.

The surrogate is a zero-mean GP with a Matérn 5/2 kernel on the
box-normalised search space, fit to standardised objective values. Its
length-scale is chosen each iteration by maximising the marginal likelihood
(signal variance profiled out) over a fixed grid.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import ndtr
from scipy.stats import qmc

from covgp.kernel import MaternParams

__all__ = [
    "SearchSpace",
    "BayesOptConfig",
    "BayesOptResult",
    "BayesOptError",
    "bayes_opt_minimize",
]

ACQUISITIONS = ("ei", "ucb")

_LENGTH_GRID = np.geomspace(0.02, 5.0, 16)
_SURROGATE_NUGGET = 1e-6
_N_CANDIDATES = 1024
_N_POLISH = 8
_DUPLICATE_TOL = 1e-8


class BayesOptError(RuntimeError):
    """Every objective evaluation failed."""


@dataclass(frozen=True)
class SearchSpace:
    """Box over the searched hyperparameters plus fixed values for the rest.

    Parameters
    ----------
    bounds : dict
        ``name -> (lower, upper)`` for each searched parameter.
    fixed : dict
        Values of parameters that are not searched.
    log_scale : frozenset
        Names searched uniformly in log space.
    """

    bounds: dict
    fixed: dict = field(default_factory=dict)
    log_scale: frozenset = frozenset({"rho", "gamma2"})

    def __post_init__(self):
        if not 1 <= len(self.bounds) <= 3:
            raise ValueError(f"between 1 and 3 searched dimensions, got {len(self.bounds)}")
        for name, (lo, hi) in self.bounds.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid bounds for {name}: [{lo}, {hi}]")
            if name in self.log_scale and lo <= 0:
                raise ValueError(f"log-scaled {name} needs a positive lower bound")
        overlap = set(self.bounds) & set(self.fixed)
        if overlap:
            raise ValueError(f"parameters both searched and fixed: {sorted(overlap)}")
        object.__setattr__(self, "bounds", {k: (float(a), float(b)) for k, (a, b) in self.bounds.items()})
        object.__setattr__(self, "fixed", {k: float(v) for k, v in self.fixed.items()})
        object.__setattr__(self, "log_scale", frozenset(self.log_scale))

    @classmethod
    def matern(cls, *, nu=(0.05, 2.5), rho=(0.01, 5.0), gamma2=1.0, tau2=1e-10):
        """Default Matérn search: ``nu`` and ``rho`` searched, ``gamma2`` fixed
        unless given as a ``(lower, upper)`` pair."""
        bounds = {"nu": tuple(nu), "rho": tuple(rho)}
        fixed = {"tau2": tau2}
        if isinstance(gamma2, (tuple, list)):
            bounds["gamma2"] = tuple(gamma2)
        else:
            fixed["gamma2"] = gamma2
        return cls(bounds, fixed)

    @property
    def names(self):
        return tuple(self.bounds)

    @property
    def dim(self):
        return len(self.bounds)

    def _edges(self, name):
        lo, hi = self.bounds[name]
        if name in self.log_scale:
            return math.log(lo), math.log(hi)
        return lo, hi

    def from_unit(self, u):
        """Map a point of the unit cube to the full parameter dict."""
        out = {}
        for ui, name in zip(np.asarray(u, dtype=float), self.names):
            a, b = self._edges(name)
            v = a + float(ui) * (b - a)
            if name in self.log_scale:
                v = math.exp(v)
            lo, hi = self.bounds[name]
            out[name] = min(max(v, lo), hi)
        out.update(self.fixed)
        return out

    def to_unit(self, values):
        u = np.empty(self.dim)
        for j, name in enumerate(self.names):
            a, b = self._edges(name)
            v = values[name]
            if name in self.log_scale:
                v = math.log(v)
            u[j] = (v - a) / (b - a)
        return np.clip(u, 0.0, 1.0)

    def contains(self, values):
        return all(lo <= values[n] <= hi for n, (lo, hi) in self.bounds.items())

    def params(self, values):
        return MaternParams(**{k: values[k] for k in ("nu", "rho", "gamma2", "tau2") if k in values})

    def as_dict(self):
        return {
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "fixed": dict(self.fixed),
            "log_scale": sorted(self.log_scale),
        }


@dataclass(frozen=True)
class BayesOptConfig:
    """Budget and acquisition settings.

    ``exploration`` is xi for expected improvement and kappa for the
    (lower) confidence bound.
    """

    n_initial: int = 5
    n_iterations: int = 30
    acquisition: str = "ei"
    exploration: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_initial < 1:
            raise ValueError(f"n_initial must be >= 1, got {self.n_initial}")
        if self.n_iterations < 0:
            raise ValueError(f"n_iterations must be >= 0, got {self.n_iterations}")
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(f"acquisition must be one of {ACQUISITIONS}, got {self.acquisition!r}")
        if not math.isfinite(self.exploration) or self.exploration < 0:
            raise ValueError(f"exploration must be finite and >= 0, got {self.exploration}")

    @property
    def budget(self):
        return self.n_initial + self.n_iterations


@dataclass(frozen=True)
class BayesOptResult:
    x: dict
    value: float
    history: tuple
    failures: tuple

    @property
    def n_evaluations(self):
        return len(self.history)


def _matern52(r):
    s = math.sqrt(5.0) * r
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def _dist(A, B):
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


class _Surrogate:
    def __init__(self, U, y):
        finite = np.isfinite(y)
        y = np.where(finite, y, np.max(y[finite]))
        self.shift = float(np.mean(y))
        spread = float(np.std(y))
        self.scale = spread if spread > 0 else 1.0
        z = (y - self.shift) / self.scale
        self.best = float(np.min(z))
        self.U = U
        D = _dist(U, U)
        n = len(U)
        best = None
        for ell in _LENGTH_GRID:
            C = _matern52(D / ell) + _SURROGATE_NUGGET * np.eye(n)
            try:
                L = scipy.linalg.cholesky(C, lower=True)
            except np.linalg.LinAlgError:
                continue
            a = scipy.linalg.cho_solve((L, True), z)
            amp = max(float(z @ a) / n, 1e-12)
            lml = -0.5 * n * math.log(amp) - float(np.sum(np.log(np.diag(L))))
            if best is None or lml > best[0]:
                best = (lml, ell, L, a, amp)
        if best is None:
            raise np.linalg.LinAlgError("surrogate covariance is singular for every length-scale")
        _, self.ell, self.L, self.alpha, self.amp = best

    def predict(self, Uq):
        Kq = _matern52(_dist(Uq, self.U) / self.ell)
        mean = Kq @ self.alpha
        V = scipy.linalg.solve_triangular(self.L, Kq.T, lower=True)
        var = self.amp * np.maximum(1.0 - np.einsum("ij,ij->j", V, V), 1e-12)
        return mean, np.sqrt(var)

    def acquisition(self, Uq, kind, exploration):
        mean, sd = self.predict(Uq)
        if kind == "ei":
            imp = self.best - mean - exploration
            z = imp / sd
            return imp * ndtr(z) + sd * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        return -(mean - exploration * sd)


def _next_point(surrogate, U, cfg, rng, dim):
    cand = rng.random((_N_CANDIDATES, dim))
    acq = surrogate.acquisition(cand, cfg.acquisition, cfg.exploration)
    starts = cand[np.argsort(-acq, kind="stable")[:_N_POLISH]]
    best_u, best_a = None, -np.inf

    def neg(u):
        return -float(surrogate.acquisition(u[None, :], cfg.acquisition, cfg.exploration)[0])

    for u0 in starts:
        res = scipy.optimize.minimize(neg, u0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * dim)
        u = np.clip(res.x, 0.0, 1.0)
        a = -neg(u)
        if a > best_a and np.min(_dist(u[None, :], U)) > _DUPLICATE_TOL:
            best_u, best_a = u, a
    if best_u is None:
        # every polished optimum duplicates a sampled point; fall back to the raw candidates
        fresh = np.min(_dist(cand, U), axis=1) > _DUPLICATE_TOL
        pick = np.flatnonzero(fresh)
        best_u = cand[pick[np.argmax(acq[pick])]] if pick.size else cand[0]
    return best_u


def bayes_opt_minimize(f, space, cfg, initial=()):
    """Minimise ``f`` over ``space`` with ``cfg.budget`` evaluations.

    Parameters
    ----------
    f : callable
        Maps a full parameter dict (searched and fixed values) to a float.
        Exceptions and non-finite values count as failures, scored +inf.
    space : SearchSpace
    cfg : BayesOptConfig
    initial : sequence of dict
        Points to include in the initial design (warm starts); they use up
        initial-design slots, remaining slots are Latin-hypercube samples.

    Returns
    -------
    BayesOptResult
        Best point, its value, the full evaluation history and failures.
    """
    rng = np.random.default_rng(cfg.seed)
    dim = space.dim
    warm = [space.to_unit(p) for p in list(initial)[: cfg.n_initial]]
    n_lhs = cfg.n_initial - len(warm)
    design = list(warm)
    if n_lhs:
        lhs = qmc.LatinHypercube(d=dim, seed=int(rng.integers(2**32)))
        design.extend(lhs.random(n_lhs))

    U, y, history, failures = [], [], [], []

    def run(u):
        x = space.from_unit(u)
        try:
            val = float(f(x))
            if not math.isfinite(val):
                raise ArithmeticError(f"objective returned {val}")
        except Exception as exc:  # noqa: BLE001 - objective failures become penalties
            failures.append((x, f"{type(exc).__name__}: {exc}"))
            val = math.inf
        U.append(np.asarray(u, dtype=float))
        y.append(val)
        history.append((x, val))

    for u in design:
        run(u)
    for _ in range(cfg.n_iterations):
        Ua = np.asarray(U)
        ya = np.asarray(y)
        if np.any(np.isfinite(ya)):
            surrogate = _Surrogate(Ua, ya)
            u = _next_point(surrogate, Ua, cfg, rng, dim)
        else:
            u = rng.random(dim)
        run(u)

    ya = np.asarray(y)
    if not np.any(np.isfinite(ya)):
        kinds = sorted({msg.split(":")[0] for _, msg in failures})
        raise BayesOptError(
            f"all {len(ya)} objective evaluations failed ({', '.join(kinds)}); "
            f"first: {failures[0][1]}"
        )
    best = int(np.argmin(ya))
    return BayesOptResult(history[best][0], float(ya[best]), tuple(history), tuple(failures))
