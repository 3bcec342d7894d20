"""Backend selection for the coupled main + replica trajectory.

The compiled extension ``_ckernels`` is used for models that advertise a
``kernel_spec()`` it understands; everything else, and every model when
``SGDINFER_PURE_PYTHON`` is set or the extension failed to build, goes
through the numpy implementation in ``_kernels_py``.
"""

import os

import numpy as np

from . import _kernels_py
from .bootstrap import ReplicaEnsemble
from .sgd_core import SgdState

try:
    if os.environ.get("SGDINFER_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _ckernels
except ImportError:
    _ckernels = None

HAVE_COMPILED = _ckernels is not None
BACKENDS = ("auto", "compiled", "python")


def _compiled_run(kind, params, theta0, batches, weights, gammas, track_sigma):
    N, B = weights.shape
    d = theta0.shape[0]
    T = np.tile(theta0, (B + 1, 1))
    Tbar = T.copy()
    S = np.zeros((B, d))
    sig = np.tile(np.eye(d), (B, 1, 1)) if track_sigma else np.zeros((1, 1, 1))
    G = np.empty((B + 1, d))
    delta = np.empty(d)
    dbar = np.empty(d)
    weights = np.ascontiguousarray(weights, dtype=float)
    gammas = np.ascontiguousarray(gammas, dtype=float)
    if kind == "gmm":
        _ckernels.coupled_gmm(
            np.ascontiguousarray(batches, dtype=float), weights, gammas, params["sigma2"],
            T, Tbar, S, sig, track_sigma, G, delta, dbar,
        )
    elif kind == "logistic":
        _ckernels.coupled_logistic(
            np.ascontiguousarray(batches, dtype=np.int64), weights, gammas,
            params["X"], params["y"], params["lam"],
            T, Tbar, S, sig, track_sigma, G, delta, dbar,
        )
    else:
        raise ValueError(f"no compiled kernel for model kind {kind!r}")
    return T, Tbar, S, sig if track_sigma else None


def resolve_backend(model, backend="auto"):
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    spec = getattr(model, "kernel_spec", None)
    spec = spec() if spec is not None else None
    compiled_ok = HAVE_COMPILED and spec is not None and spec[0] in ("gmm", "logistic")
    if backend == "compiled" and not compiled_ok:
        raise RuntimeError(f"compiled backend unavailable for {type(model).__name__}")
    if backend == "python" or not compiled_ok:
        return "python", None
    return "compiled", spec


def run_coupled(model, theta0, batches, weights, gammas, track_sigma=False, backend="auto", dist=None):
    """Run the main path and ``B`` replicas for ``N`` iterations.

    ``batches`` has ``N`` mini-batches along axis 0, ``weights`` is ``(N, B)``
    (column ``b`` is replica ``b``'s weight stream) and ``gammas`` holds
    ``gamma_1..gamma_N``.  Returns ``(SgdState, ReplicaEnsemble)`` at step N.
    """
    theta0 = np.asarray(theta0, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 2:
        raise ValueError("weights must have shape (N, B)")
    N = weights.shape[0]
    if len(batches) != N or len(gammas) != N:
        raise ValueError("batches, weights and gammas disagree on N")
    which, spec = resolve_backend(model, backend)
    if which == "compiled":
        T, Tbar, S, sig = _compiled_run(spec[0], spec[1], theta0, batches, weights, gammas, track_sigma)
    else:
        T, Tbar, S, sig = _kernels_py.coupled_run(model, theta0, batches, weights, gammas, track_sigma)
    main = SgdState(N, T[0].copy(), Tbar[0].copy())
    ens = ReplicaEnsemble.from_arrays(N, T[1:].copy(), Tbar[1:].copy(), S, sig, dist)
    return main, ens
