"""Single-pass stochastic approximation algorithms over a data stream.

All algorithms maintain the running average of their iterates alongside the
last iterate; which of the two run_stream reports depends on the algorithm
(averaged variants report the mean, the rest the final iterate).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import DataPoint, ModelKind, _grad_xy, _mean_response
from .statutil import IllConditionedError, RngStream

__all__ = [
    "ALGORITHM_NAMES",
    "AlgorithmKind",
    "ConstantStep",
    "OptimizerState",
    "PolynomialStep",
    "StepSchedule",
    "WARM_START_STEP",
    "advance",
    "gradient_truncate",
    "init_state",
    "run_stream",
    "step_size",
    "warm_start",
]

# Fixed step size of the SGD burn-in used to initialize every algorithm.
WARM_START_STEP = 0.001

ALGORITHM_NAMES = (
    "sgd",
    "asgd",
    "implicit-last",
    "implicit-avg",
    "root",
    "truncated",
    "noisy-truncated",
)


@dataclass(frozen=True)
class ConstantStep:
    eta: float

    def __post_init__(self) -> None:
        if self.eta <= 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")


@dataclass(frozen=True)
class PolynomialStep:
    """Step size c * t**(-gamma); gamma in (1/2, 1) for root-T averaging."""

    c: float
    gamma: float = 0.505

    def __post_init__(self) -> None:
        if self.c <= 0.0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not 0.5 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0.5, 1), got {self.gamma}")


StepSchedule = ConstantStep | PolynomialStep


def step_size(sched: StepSchedule, t: int) -> float:
    """Step size at step t (1-based)."""
    if t < 1:
        raise ValueError(f"t must be at least 1, got {t}")
    if isinstance(sched, ConstantStep):
        return sched.eta
    if isinstance(sched, PolynomialStep):
        return sched.c * float(t) ** (-sched.gamma)
    raise TypeError(f"unsupported schedule: {sched!r}")


@dataclass(frozen=True)
class AlgorithmKind:
    """Algorithm tag plus the hyperparameters of the truncated variants.

    eps2 is the squared truncation level: the truncation drops at most an
    eps2 fraction of the squared gradient norm. sigma scales the injected
    Gaussian noise and beta its decay exponent (step ~ eta^(1/2 + beta)).
    """

    name: str
    eps2: float = 0.64
    sigma: float = 1.0
    beta: float = 0.25

    def __post_init__(self) -> None:
        if self.name not in ALGORITHM_NAMES:
            raise ValueError(f"unknown algorithm {self.name!r}; expected one of {ALGORITHM_NAMES}")
        if not 0.0 < self.eps2 <= 1.0:
            raise ValueError(f"eps2 must lie in (0, 1], got {self.eps2}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.beta <= 0.5:
            raise ValueError(f"beta must lie in (0, 0.5], got {self.beta}")

    @property
    def averaged(self) -> bool:
        """Whether run_stream reports the running average of iterates."""
        return self.name in ("asgd", "implicit-avg")


@dataclass
class OptimizerState:
    """Mutable state of one single-pass run; single-threaded by design."""

    kind: AlgorithmKind
    t: int
    theta: np.ndarray
    avg: np.ndarray
    prev_theta: np.ndarray
    v: Optional[np.ndarray]
    rng: Optional[RngStream]


def init_state(kind: AlgorithmKind, theta0: np.ndarray, *, rng: Optional[RngStream] = None) -> OptimizerState:
    theta0 = np.asarray(theta0, dtype=float).copy()
    if kind.name == "noisy-truncated":
        if rng is None:
            raise ValueError("noisy-truncated requires an rng for its injected noise")
    elif rng is not None:
        raise ValueError(f"rng is only consumed by noisy-truncated, not {kind.name!r}")
    return OptimizerState(
        kind=kind,
        t=0,
        theta=theta0,
        avg=np.zeros_like(theta0),
        prev_theta=theta0.copy(),
        v=None,
        rng=rng,
    )


def gradient_truncate(g: np.ndarray, eps2: float) -> tuple[float, np.ndarray]:
    """Keep the largest-magnitude coordinates carrying >= (1 - eps2) of ||g||^2.

    Scans squared magnitudes in descending order and tests the cumulative sum
    against (1 - eps2) * ||g||^2 before adding each term; the threshold kappa
    is the magnitude at the first index where the test passes, and every
    coordinate with |g_i| < kappa (strictly) is zeroed. If the test never
    passes (the smallest square alone exceeds eps2 * ||g||^2), kappa is the
    smallest magnitude and every coordinate survives. A zero gradient yields
    kappa = 0.
    """
    if not 0.0 < eps2 <= 1.0:
        raise ValueError(f"eps2 must lie in (0, 1], got {eps2}")
    g = np.asarray(g, dtype=float)
    sq = g * g
    total = float(sq.sum())
    if total == 0.0:
        return 0.0, g.copy()
    order = np.argsort(-sq, kind="stable")
    target = (1.0 - eps2) * total
    kappa = abs(float(g[order[-1]]))
    cum = 0.0
    for idx in order:
        if cum >= target:
            kappa = abs(float(g[idx]))
            break
        cum += float(sq[idx])
    return kappa, np.where(np.abs(g) < kappa, 0.0, g)


def _root_weight(t: int) -> float:
    """Weight on the carried-over gradient correction at step t."""
    return (t - 1.0) / t


def _implicit_update(
    model_kind: ModelKind,
    theta: np.ndarray,
    x: np.ndarray,
    y: float,
    eta: float,
    *,
    max_iter: int = 200,
    tol: float = 1.0e-13,
) -> np.ndarray:
    """Solve theta_new = theta - eta * grad(theta_new) for GLM-type losses.

    The gradient is (psi(x'theta) - y) x, so theta_new = theta - s*x with s
    solving the scalar fixed point s = eta * (psi(x'theta - s*||x||^2) - y).
    f(s) = s - eta*(...) is strictly increasing with a sign change on
    [min(0, s0), max(0, s0)] where s0 = eta*(psi(x'theta) - y), so bisection
    is safe; failure to bracket down to tolerance raises.
    """
    a = float(x @ theta)
    s0 = eta * (_mean_response(model_kind, a) - y)
    nx2 = float(x @ x)
    if s0 == 0.0 or nx2 == 0.0:
        return theta - s0 * x
    lo, hi = (0.0, s0) if s0 > 0.0 else (s0, 0.0)
    width_tol = tol * max(1.0, abs(s0))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid - eta * (_mean_response(model_kind, a - mid * nx2) - y) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= width_tol:
            break
    else:
        raise IllConditionedError("implicit update bisection did not converge")
    return theta - (0.5 * (lo + hi)) * x


def advance(state: OptimizerState, sched: StepSchedule, model_kind: ModelKind, p: DataPoint) -> OptimizerState:
    """Apply exactly one update of state.kind for observation p, in place."""
    t = state.t + 1
    eta = step_size(sched, t)
    x, y = p.x, p.y
    theta = state.theta
    name = state.kind.name

    if name in ("sgd", "asgd"):
        theta_new = theta - eta * _grad_xy(model_kind, theta, x, y)
    elif name in ("implicit-last", "implicit-avg"):
        theta_new = _implicit_update(model_kind, theta, x, y, eta)
    elif name == "root":
        g = _grad_xy(model_kind, theta, x, y)
        if t == 1:
            v = g
        else:
            v = g + _root_weight(t) * (state.v - _grad_xy(model_kind, state.prev_theta, x, y))
        state.v = v
        state.prev_theta = theta
        theta_new = theta - eta * v
    elif name == "truncated":
        _, g_trunc = gradient_truncate(_grad_xy(model_kind, theta, x, y), state.kind.eps2)
        theta_new = theta - eta * g_trunc
    elif name == "noisy-truncated":
        _, g_trunc = gradient_truncate(_grad_xy(model_kind, theta, x, y), state.kind.eps2)
        noise = state.rng.standard_normal(theta.shape[0])
        theta_new = theta - eta * g_trunc + (state.kind.sigma * eta ** (0.5 + state.kind.beta)) * noise
    else:
        raise ValueError(f"unknown algorithm {name!r}")

    state.t = t
    state.theta = theta_new
    state.avg = (1.0 - 1.0 / t) * state.avg + theta_new / t
    return state


def warm_start(model_kind: ModelKind, d: int, stream) -> np.ndarray:
    """Fixed-step SGD burn-in from the origin; an empty stream returns zeros."""
    theta = np.zeros(d)
    for p in stream:
        theta = theta - WARM_START_STEP * _grad_xy(model_kind, theta, p.x, p.y)
    return theta


def run_stream(
    kind: AlgorithmKind,
    sched: StepSchedule,
    model_kind: ModelKind,
    theta0: np.ndarray,
    stream,
    *,
    rng: Optional[RngStream] = None,
) -> np.ndarray:
    """Run one single-pass algorithm over the stream and report its estimate."""
    if len(stream) == 0:
        raise ValueError("stream must be non-empty")
    state = init_state(kind, theta0, rng=rng)
    for p in stream:
        advance(state, sched, model_kind, p)
    return state.avg.copy() if kind.averaged else state.theta.copy()
