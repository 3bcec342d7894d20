"""Step-size schedules, the averaged SGD engine and the model-oracle interface.

Every concrete model implements :class:`ModelOracle`.  The engine keeps the
Polyak-Ruppert average online, including the initial point, so that after
``n`` steps ``theta_bar`` is the mean of ``theta_0, ..., theta_n``.
"""

from __future__ import annotations

import abc
import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class StepSchedule:
    """Robbins-Monro schedule ``gamma_n = C * n**(-alpha)``.

    ``alpha`` must lie in (0.5, 1).  With ``strict=False`` an out-of-range
    exponent only warns, which is handy for experimentation.
    """

    C: float
    alpha: float
    strict: bool = True

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"step scale C must be positive, got {self.C}")
        if not 0.5 < self.alpha < 1.0:
            msg = f"step exponent alpha={self.alpha} outside (0.5, 1)"
            if self.strict:
                raise ValueError(msg)
            warnings.warn(msg, stacklevel=3)

    def __call__(self, n: int) -> float:
        return step_size(self, n)

    def gammas(self, N: int) -> np.ndarray:
        """Vector ``(gamma_1, ..., gamma_N)``."""
        n = np.arange(1, N + 1, dtype=float)
        return self.C * n ** (-self.alpha)


def step_size(schedule: StepSchedule, n: int) -> float:
    if n < 1:
        raise ValueError(f"step index must be >= 1, got {n}")
    return schedule.C * float(n) ** (-schedule.alpha)


@dataclass(frozen=True)
class MiniBatch:
    """``m`` samples stacked along the first axis.

    A sample is whatever the model's :meth:`ModelOracle.sample` returns:
    a data vector for streaming models, an integer index for fixed designs.
    """

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim == 0 or samples.shape[0] < 1:
            raise ValueError("mini-batch must hold at least one sample")
        object.__setattr__(self, "samples", samples)

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    def __len__(self):
        return self.m

    def __iter__(self):
        return iter(self.samples)


class ModelOracle(abc.ABC):
    """Per-sample stochastic gradient oracle.

    Subclasses must set ``d`` and implement :meth:`gradient` and
    :meth:`sample`.  :meth:`objective` is optional but, when given, its
    gradient must equal :meth:`gradient`.  :meth:`stacked_gradient` may be
    overridden with a vectorised version; it is what the ensemble engine
    calls on the main path and all replicas at once.
    """

    d: int

    @abc.abstractmethod
    def gradient(self, theta: np.ndarray, sample) -> np.ndarray:
        ...

    def objective(self, theta: np.ndarray, sample) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no per-sample objective")

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator):
        """Draw one data point (or index)."""

    def sample_batch(self, rng: np.random.Generator, m: int) -> MiniBatch:
        if m < 1:
            raise ValueError(f"batch size must be >= 1, got {m}")
        return MiniBatch(np.stack([np.asarray(self.sample(rng)) for _ in range(m)]))

    def minibatch_gradient(self, theta: np.ndarray, batch: MiniBatch) -> np.ndarray:
        grads = [self.gradient(theta, s) for s in batch]
        return np.sum(grads, axis=0) / len(grads)

    def stacked_gradient(self, thetas: np.ndarray, batch: MiniBatch) -> np.ndarray:
        """Mini-batch gradient for each row of ``thetas`` (shape ``(K, d)``)."""
        return np.stack([self.minibatch_gradient(t, batch) for t in thetas])


def minibatch_gradient(model: ModelOracle, theta, batch: MiniBatch) -> np.ndarray:
    """Arithmetic mean of the per-sample gradients over ``batch``."""
    if not isinstance(batch, MiniBatch):
        batch = MiniBatch(batch)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.d,):
        raise ValueError(f"theta has shape {theta.shape}, model expects ({model.d},)")
    return model.minibatch_gradient(theta, batch)


@dataclass(frozen=True)
class SgdState:
    """Iterate ``theta_n`` and the running mean of ``theta_0..theta_n``."""

    n: int
    theta: np.ndarray
    theta_bar: np.ndarray = field(default=None)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        if self.theta_bar is None:
            if self.n != 0:
                raise ValueError("theta_bar is required once n > 0")
            object.__setattr__(self, "theta_bar", theta.copy())
        else:
            object.__setattr__(self, "theta_bar", np.array(self.theta_bar, dtype=float))

    @classmethod
    def initial(cls, theta0) -> "SgdState":
        return cls(0, theta0)

    @property
    def d(self) -> int:
        return self.theta.shape[0]


def sgd_step(state: SgdState, gradient, gamma: float) -> SgdState:
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != state.theta.shape:
        raise ValueError(
            f"gradient shape {gradient.shape} does not match theta {state.theta.shape}"
        )
    n = state.n
    theta = state.theta - gamma * gradient
    # mean over n + 2 points: theta_0 .. theta_{n+1}
    theta_bar = state.theta_bar + (theta - state.theta_bar) / (n + 2)
    return SgdState(n + 1, theta, theta_bar)


def run_sgd(
    model: ModelOracle,
    schedule: StepSchedule,
    N: int,
    m: int,
    rng: np.random.Generator,
    theta0,
) -> SgdState:
    """Plain averaged SGD, one fresh mini-batch per iteration."""
    if N < 1:
        raise ValueError(f"need at least one iteration, got N={N}")
    state = SgdState.initial(theta0)
    for n in range(N):
        batch = model.sample_batch(rng, m)
        g = minibatch_gradient(model, state.theta, batch)
        state = sgd_step(state, g, step_size(schedule, n + 1))
    return state
