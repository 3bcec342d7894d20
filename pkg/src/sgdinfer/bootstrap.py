"""Multiplier-bootstrap replica ensembles.

Each replica re-runs SGD on the main path's data with every mini-batch
gradient scaled by an i.i.d. weight of mean 1 and variance 1.  Replicas keep
only O(d) state in the default ``exact`` covariance mode: the running sum
``S_n = sum_{k=1..n} (theta_k^(b) - theta_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sgd_core import MiniBatch, ModelOracle, SgdState, sgd_step

SQRT3 = np.sqrt(3.0)
COV_MODES = ("exact", "paper")


@dataclass(frozen=True)
class MultiplierDistribution:
    """Weight law for the multiplier bootstrap.

    ``uniform`` is uniform on ``[1 - sqrt(3), 1 + sqrt(3)]`` and ``exp`` is
    exponential with rate 1; both have mean 1 and variance 1.  ``constant``
    always returns ``value`` and exists for tests (``value=1`` collapses every
    replica onto the main path).
    """

    variant: str = "uniform"
    value: float = 1.0

    def __post_init__(self):
        if self.variant not in ("uniform", "exp", "constant"):
            raise ValueError(f"unknown multiplier distribution {self.variant!r}")

    @classmethod
    def degenerate(cls, value=1.0):
        return cls("constant", value)

    def sample_n(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.variant == "uniform":
            return rng.uniform(1.0 - SQRT3, 1.0 + SQRT3, size=size)
        if self.variant == "exp":
            return rng.exponential(1.0, size=size)
        return np.full(size, float(self.value))


def sample_multiplier(dist: MultiplierDistribution, rng: np.random.Generator) -> float:
    return float(dist.sample_n(rng, 1)[0])


@dataclass
class ReplicaState:
    """Snapshot of one replica (a view into the ensemble arrays)."""

    theta_b: np.ndarray
    theta_bar_b: np.ndarray
    diff_sum: np.ndarray
    sigma_hat: np.ndarray | None = None


class ReplicaEnsemble:
    """``B`` coupled replicas stored as stacked arrays.

    ``thetas``, ``theta_bars`` and ``diff_sums`` have shape ``(B, d)``;
    ``sigma_hats`` (only with ``track_sigma``) has shape ``(B, d, d)`` and
    follows the printed online recursion started from the identity.
    ``rngs`` holds one weight stream per replica; it may be ``None`` when the
    ensemble was produced by a kernel from pre-drawn weights.
    """

    def __init__(self, theta0, B, dist=None, rngs=None, track_sigma=False):
        theta0 = np.asarray(theta0, dtype=float)
        if B < 1:
            raise ValueError(f"need at least one replica, got B={B}")
        if rngs is not None and len(rngs) != B:
            raise ValueError(f"got {len(rngs)} weight streams for {B} replicas")
        d = theta0.shape[0]
        self.n = 0
        self.dist = dist if dist is not None else MultiplierDistribution()
        self.rngs = rngs
        self.thetas = np.tile(theta0, (B, 1))
        self.theta_bars = self.thetas.copy()
        self.diff_sums = np.zeros((B, d))
        self.sigma_hats = np.tile(np.eye(d), (B, 1, 1)) if track_sigma else None

    @classmethod
    def from_arrays(cls, n, thetas, theta_bars, diff_sums, sigma_hats=None, dist=None):
        ens = cls.__new__(cls)
        ens.n = n
        ens.dist = dist if dist is not None else MultiplierDistribution()
        ens.rngs = None
        ens.thetas = np.asarray(thetas, dtype=float)
        ens.theta_bars = np.asarray(theta_bars, dtype=float)
        ens.diff_sums = np.asarray(diff_sums, dtype=float)
        ens.sigma_hats = sigma_hats
        return ens

    @property
    def B(self) -> int:
        return self.thetas.shape[0]

    @property
    def d(self) -> int:
        return self.thetas.shape[1]

    @property
    def track_sigma(self) -> bool:
        return self.sigma_hats is not None

    def replica(self, b: int) -> ReplicaState:
        sigma = None if self.sigma_hats is None else self.sigma_hats[b]
        return ReplicaState(self.thetas[b], self.theta_bars[b], self.diff_sums[b], sigma)

    @property
    def replicas(self):
        return [self.replica(b) for b in range(self.B)]

    def draw_weights(self) -> np.ndarray:
        if self.rngs is None:
            raise ValueError("ensemble has no weight streams attached")
        return np.array([sample_multiplier(self.dist, rng) for rng in self.rngs])


def advance_replicas(ens: ReplicaEnsemble, gradients, weights, gamma, main_prev, main_next):
    """Apply one update given precomputed replica gradients (shape ``(B, d)``)."""
    n = ens.n
    theta_new = ens.thetas - gamma * weights[:, None] * gradients
    delta = theta_new - main_next.theta
    if ens.sigma_hats is not None:
        dbar = ens.theta_bars - main_prev.theta_bar
        cross = dbar[:, :, None] * delta[:, None, :]
        ens.sigma_hats = (n / (n + 1)) * (
            ens.sigma_hats + cross + np.swapaxes(cross, 1, 2)
        ) + (delta[:, :, None] * delta[:, None, :]) / (n + 1)
    ens.thetas = theta_new
    ens.theta_bars = ens.theta_bars + (theta_new - ens.theta_bars) / (n + 2)
    ens.diff_sums = ens.diff_sums + delta
    ens.n = n + 1
    return ens


def ensemble_step(
    ens: ReplicaEnsemble,
    main_state: SgdState,
    model: ModelOracle,
    batch: MiniBatch,
    gamma: float,
    main_next: SgdState | None = None,
    weights=None,
) -> ReplicaEnsemble:
    """Advance every replica one step on the main path's batch.

    ``main_state`` is the main path *before* this iteration; ``main_next``
    (computed here when omitted) is the state after it.  ``weights``
    overrides the per-replica draws.
    """
    if ens.n != main_state.n:
        raise ValueError(f"ensemble at step {ens.n} but main path at step {main_state.n}")
    if main_next is None:
        main_next = sgd_step(main_state, model.minibatch_gradient(main_state.theta, batch), gamma)
    if weights is None:
        weights = ens.draw_weights()
    weights = np.asarray(weights, dtype=float)
    grads = model.stacked_gradient(ens.thetas, batch)
    return advance_replicas(ens, grads, weights, gamma, main_state, main_next)


def replica_covariance(replica: ReplicaState, N: int, mode: str = "exact") -> np.ndarray:
    """``S_N S_N^T / N`` (``exact``) or the recursively maintained matrix (``paper``)."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if mode == "exact":
        s = replica.diff_sum
        return np.outer(s, s) / N
    if mode == "paper":
        if replica.sigma_hat is None:
            raise ValueError("replica was run without the recursive covariance tracker")
        return replica.sigma_hat.copy()
    raise ValueError(f"unknown covariance mode {mode!r}")


def accepted_mask(ens: ReplicaEnsemble, main_state: SgdState, r_0: float) -> np.ndarray:
    return np.linalg.norm(ens.thetas - main_state.theta, axis=1) <= r_0


def aggregate_covariance(ens, main_state, N, r_0=1.0, mode="exact"):
    """Mean replica covariance over replicas whose last iterate is within ``r_0``.

    Returns ``(matrix, accepted_count)``; with no accepted replica the matrix
    is the identity and the count is 0.
    """
    mask = accepted_mask(ens, main_state, r_0)
    c = int(mask.sum())
    if c == 0:
        return np.eye(ens.d), 0
    if mode == "exact":
        S = ens.diff_sums[mask]
        mats = S[:, :, None] * S[:, None, :] / N
    elif mode == "paper":
        if ens.sigma_hats is None:
            raise ValueError("ensemble was run without the recursive covariance tracker")
        mats = ens.sigma_hats[mask]
    else:
        raise ValueError(f"unknown covariance mode {mode!r}")
    return mats.mean(axis=0), c


def collect_projections(ens, main_state, a, N, r_0=1.0) -> np.ndarray:
    """``sqrt(N) a^T (theta_bar^(b) - theta_bar)`` for accepted replicas, in order."""
    a = np.asarray(a, dtype=float)
    if a.shape != (ens.d,):
        raise ValueError(f"functional has shape {a.shape}, expected ({ens.d},)")
    mask = accepted_mask(ens, main_state, r_0)
    return np.sqrt(N) * ((ens.theta_bars[mask] - main_state.theta_bar) @ a)
