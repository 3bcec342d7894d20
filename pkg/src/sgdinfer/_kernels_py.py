"""Pure-numpy coupled trajectory (fallback for the compiled kernels).

Row 0 of the stacked iterate array is the main path, rows ``1..B`` are the
replicas, so one :meth:`ModelOracle.stacked_gradient` call per iteration
serves every path.  Works for any model.
"""

import numpy as np

from .sgd_core import MiniBatch


def coupled_run(model, theta0, batches, weights, gammas, track_sigma=False):
    theta0 = np.asarray(theta0, dtype=float)
    N, B = weights.shape
    d = theta0.shape[0]
    T = np.tile(theta0, (B + 1, 1))
    Tbar = T.copy()
    S = np.zeros((B, d))
    sig = np.tile(np.eye(d), (B, 1, 1)) if track_sigma else None
    for n in range(N):
        g = gammas[n]
        G = model.stacked_gradient(T, MiniBatch(batches[n]))
        T_new = np.empty_like(T)
        T_new[0] = T[0] - g * G[0]
        T_new[1:] = T[1:] - g * weights[n][:, None] * G[1:]
        delta = T_new[1:] - T_new[0]
        if sig is not None:
            dbar = Tbar[1:] - Tbar[0]
            cross = dbar[:, :, None] * delta[:, None, :]
            sig = (n / (n + 1)) * (sig + cross + np.swapaxes(cross, 1, 2)) + (
                delta[:, :, None] * delta[:, None, :]
            ) / (n + 1)
        Tbar += (T_new - Tbar) / (n + 2)
        S += delta
        T = T_new
    return T, Tbar, S, sig
