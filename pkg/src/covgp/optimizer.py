"""Hyperparameter training: batch-loss minimisation and coverage-constrained
training by the method of multipliers.

Each training run fixes one batch and its leave-one-out neighborhoods, then
searches the hyperparameters with :func:`covgp.bayesopt.bayes_opt_minimize`.
The constrained trainer wraps that search in an outer loop that updates the
multipliers with the coverage residual and grows the penalty geometrically.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from covgp.bayesopt import BayesOptConfig, BayesOptError, bayes_opt_minimize
from covgp.kriging import BatchTensors
from covgp.objective import (
    BatchEvaluation,
    ConfidenceLevels,
    LagrangeState,
    augmented_lagrangian,
    constraint_residual,
    lool_loss,
    mse_loss,
)

__all__ = [
    "PAPER_LEVELS",
    "MultipliersConfig",
    "OuterStep",
    "TrainResult",
    "TrainingError",
    "sample_batch",
    "train_unconstrained",
    "train_constrained",
]

PAPER_LEVELS = (0.90, 0.925, 0.95, 0.975, 0.99)

LOSSES = {"mse": mse_loss, "lool": lool_loss}


class TrainingError(RuntimeError):
    """Training aborted; ``trace`` holds the outer steps completed before the failure."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


@dataclass(frozen=True)
class MultipliersConfig:
    """Outer-loop settings for coverage-constrained training."""

    levels: ConfidenceLevels = field(default_factory=lambda: ConfidenceLevels(PAPER_LEVELS))
    lambda0: tuple = None
    beta0: float = 1.0
    r: float = 2.0
    n_outer: int = 5
    inner: BayesOptConfig = BayesOptConfig(n_initial=3, n_iterations=10)
    warm_start: bool = True

    def __post_init__(self):
        lam = np.zeros(len(self.levels)) if self.lambda0 is None else self.lambda0
        lam = tuple(float(v) for v in np.asarray(lam, dtype=float).reshape(-1))
        object.__setattr__(self, "lambda0", lam)
        # validates lengths, beta0 and r
        LagrangeState(np.asarray(lam), self.beta0, self.r, self.levels)
        if self.n_outer < 1:
            raise ValueError(f"n_outer must be >= 1, got {self.n_outer}")


@dataclass(frozen=True)
class OuterStep:
    """One outer iteration: the multipliers/penalty used by the inner solve,
    its minimiser and the updated multipliers/penalty."""

    theta: object
    lam_used: np.ndarray
    beta_used: float
    lam_next: np.ndarray
    beta_next: float
    q: float
    residual: np.ndarray
    value: float
    evaluations: int

    def as_dict(self):
        return {
            "theta": self.theta.as_dict(),
            "lambda_used": [float(v) for v in self.lam_used],
            "beta_used": self.beta_used,
            "lambda_next": [float(v) for v in self.lam_next],
            "beta_next": self.beta_next,
            "q": self.q,
            "residual": [float(v) for v in self.residual],
            "value": self.value,
            "evaluations": self.evaluations,
        }


@dataclass(frozen=True)
class TrainResult:
    theta: object
    loss: str
    trace: tuple
    objective_evaluations: int
    failures: tuple = ()

    def as_dict(self):
        return {
            "theta": self.theta.as_dict(),
            "loss": self.loss,
            "trace": [s.as_dict() for s in self.trace],
            "objective_evaluations": self.objective_evaluations,
            "failed_evaluations": len(self.failures),
        }


def sample_batch(n, b, seed):
    """``b`` distinct training ids drawn uniformly without replacement."""
    if not 1 <= b <= n:
        raise ValueError(f"batch size must be in [1, {n}], got {b}")
    return np.random.default_rng(seed).choice(n, size=b, replace=False)


def _evaluate(tensors, params):
    m = tensors.moments(params)
    return BatchEvaluation(m.mean, m.variance, tensors.truths, tensors.batch)


def _inner_seed(seed, n):
    return int(np.random.SeedSequence([seed, n]).generate_state(1)[0])


def train_unconstrained(train, index, batch, loss, space, k, cfg, levels=None):
    """Minimise the MSE or LOOL batch loss over ``space``.

    The returned trace has a single step; if ``levels`` is given its
    residual records the batch coverage error at the optimum.
    """
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {sorted(LOSSES)}, got {loss!r}")
    loss_fn = LOSSES[loss]
    tensors = BatchTensors(train, index, batch, k)
    cache = {}

    def objective(x):
        ev = _evaluate(tensors, space.params(x))
        q = loss_fn(ev)
        cache[tuple(sorted(x.items()))] = ev
        return q

    try:
        res = bayes_opt_minimize(objective, space, cfg)
    except BayesOptError as exc:
        raise TrainingError(f"{loss} training failed: {exc}") from None
    theta = space.params(res.x)
    ev = cache[tuple(sorted(res.x.items()))]
    residual = np.empty(0) if levels is None else constraint_residual(ev, levels)
    step = OuterStep(
        theta=theta,
        lam_used=np.empty(0),
        beta_used=0.0,
        lam_next=np.empty(0),
        beta_next=0.0,
        q=res.value,
        residual=residual,
        value=res.value,
        evaluations=res.n_evaluations,
    )
    return TrainResult(theta, loss, (step,), res.n_evaluations, res.failures)


def train_constrained(train, index, batch, space, k, cfg, theta0=None):
    """Coverage-constrained LOOL training by the method of multipliers.

    Outer iteration ``n`` minimises the augmented Lagrangian at
    ``(lambda_{n-1}, beta_{n-1})``, then sets
    ``lambda_n = lambda_{n-1} + beta_{n-1} * (C(theta_n) - alpha)`` and
    ``beta_n = r * beta_{n-1}``. Returns the last minimiser.
    """
    tensors = BatchTensors(train, index, batch, k)
    levels = cfg.levels
    lam = np.asarray(cfg.lambda0, dtype=float)
    beta = float(cfg.beta0)
    trace = []
    failures = []
    total = 0
    prev = None if theta0 is None else _as_values(theta0, space)

    for n in range(1, cfg.n_outer + 1):
        state = LagrangeState(lam, beta, cfg.r, levels)
        cache = {}

        def objective(x, state=state, cache=cache):
            ev = _evaluate(tensors, space.params(x))
            q = lool_loss(ev)
            res = constraint_residual(ev, levels)
            cache[tuple(sorted(x.items()))] = (q, res)
            return augmented_lagrangian(q, res, state)

        inner = replace(cfg.inner, seed=_inner_seed(cfg.inner.seed, n))
        warm = [prev] if (prev is not None and cfg.warm_start) else []
        try:
            res = bayes_opt_minimize(objective, space, inner, initial=warm)
        except BayesOptError as exc:
            raise TrainingError(f"outer iteration {n}: {exc}", trace) from None
        q, residual = cache[tuple(sorted(res.x.items()))]
        lam_next = lam + beta * residual
        beta_next = cfg.r * beta
        trace.append(
            OuterStep(
                theta=space.params(res.x),
                lam_used=lam,
                beta_used=beta,
                lam_next=lam_next,
                beta_next=beta_next,
                q=q,
                residual=residual,
                value=res.value,
                evaluations=res.n_evaluations,
            )
        )
        total += res.n_evaluations
        failures.extend(res.failures)
        lam, beta, prev = lam_next, beta_next, res.x

    return TrainResult(trace[-1].theta, "mm", tuple(trace), total, tuple(failures))


def _as_values(theta, space):
    if isinstance(theta, dict):
        values = dict(theta)
    else:
        values = theta.as_dict()
    values = {k: float(values[k]) for k in space.names}
    if not space.contains(values):
        raise ValueError(f"initial guess {values} outside the search space")
    values.update(space.fixed)
    return values
