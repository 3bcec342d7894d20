# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled coupled-trajectory kernels for the mixture and logistic models.

Same layout and update order as ``_kernels_py.coupled_run``: row 0 of the
iterate arrays is the main path, rows 1..B are replicas.  Outputs are
written into caller-allocated arrays.
"""

from libc.math cimport tanh, exp


cdef inline void _grad_gmm(const double* theta, const double[:, ::1] z, Py_ssize_t d,
                           double sigma2, double* out) noexcept nogil:
    # mean_i [(theta - tanh(<y_i, theta>/s2) y_i)/s2 + xi_i]
    cdef Py_ssize_t m = z.shape[0], i, j
    cdef double t, c, inv = 1.0 / sigma2
    for j in range(d):
        out[j] = 0.0
    for i in range(m):
        t = 0.0
        for j in range(d):
            t += z[i, j] * theta[j]
        c = tanh(t * inv)
        for j in range(d):
            out[j] += z[i, d + j] - c * z[i, j] * inv
    for j in range(d):
        out[j] = out[j] / m + theta[j] * inv


cdef inline double _expit(double t) noexcept nogil:
    cdef double e
    if t >= 0:
        return 1.0 / (1.0 + exp(-t))
    e = exp(t)
    return e / (1.0 + e)


cdef inline void _grad_logistic(const double* theta, const double[:, ::1] X, const double[::1] y,
                                const long long[::1] idx, double lam, Py_ssize_t d,
                                double* out) noexcept nogil:
    cdef Py_ssize_t m = idx.shape[0], i, j, r
    cdef double t, c, q
    for j in range(d):
        out[j] = 0.0
    for i in range(m):
        r = idx[i]
        t = 0.0
        for j in range(d):
            t += X[r, j] * theta[j]
        c = -y[r] * _expit(-y[r] * t)
        for j in range(d):
            out[j] += c * X[r, j]
    for j in range(d):
        q = 1.0 + theta[j] * theta[j]
        out[j] = out[j] / m + 2.0 * lam * theta[j] / (q * q)


cdef void _advance(Py_ssize_t n, double gamma, const double[::1] w,
                   double[:, ::1] T, double[:, ::1] Tbar, double[:, ::1] G,
                   double[:, ::1] S, double[:, :, ::1] sig, bint track,
                   double[::1] delta, double[::1] dbar) noexcept nogil:
    cdef Py_ssize_t P = T.shape[0], d = T.shape[1], p, j, k
    cdef double gw, a = n / (n + 1.0), inv = 1.0 / (n + 1.0)
    for j in range(d):
        T[0, j] = T[0, j] - gamma * G[0, j]
    for p in range(1, P):
        gw = gamma * w[p - 1]
        for j in range(d):
            T[p, j] = T[p, j] - gw * G[p, j]
    for p in range(1, P):
        for j in range(d):
            delta[j] = T[p, j] - T[0, j]
            S[p - 1, j] += delta[j]
        if track:
            for j in range(d):
                dbar[j] = Tbar[p, j] - Tbar[0, j]
            for j in range(d):
                for k in range(d):
                    sig[p - 1, j, k] = a * (sig[p - 1, j, k] + dbar[j] * delta[k] + delta[j] * dbar[k]) \
                        + delta[j] * delta[k] * inv
    for p in range(P):
        for j in range(d):
            Tbar[p, j] += (T[p, j] - Tbar[p, j]) / (n + 2)


def coupled_gmm(const double[:, :, ::1] batches, const double[:, ::1] weights,
                const double[::1] gammas, double sigma2,
                double[:, ::1] T, double[:, ::1] Tbar, double[:, ::1] S,
                double[:, :, ::1] sig, bint track,
                double[:, ::1] G, double[::1] delta, double[::1] dbar):
    cdef Py_ssize_t N = batches.shape[0], P = T.shape[0], d = T.shape[1], n, p
    with nogil:
        for n in range(N):
            for p in range(P):
                _grad_gmm(&T[p, 0], batches[n], d, sigma2, &G[p, 0])
            _advance(n, gammas[n], weights[n], T, Tbar, G, S, sig, track, delta, dbar)


def coupled_logistic(const long long[:, ::1] batches, const double[:, ::1] weights,
                     const double[::1] gammas, const double[:, ::1] X, const double[::1] y,
                     double lam,
                     double[:, ::1] T, double[:, ::1] Tbar, double[:, ::1] S,
                     double[:, :, ::1] sig, bint track,
                     double[:, ::1] G, double[::1] delta, double[::1] dbar):
    cdef Py_ssize_t N = batches.shape[0], P = T.shape[0], d = T.shape[1], n, p
    with nogil:
        for n in range(N):
            for p in range(P):
                _grad_logistic(&T[p, 0], X, y, batches[n], lam, d, &G[p, 0])
            _advance(n, gammas[n], weights[n], T, Tbar, G, S, sig, track, delta, dbar)
