# cython: language_level=3
"""Compiled RK4 propagator for the five-level master equation.

Complex entries are handled as interleaved (re, im) doubles so the inner
loops stay free of C99 complex helpers.
"""
import numpy as np

cdef enum:
    N = 5
    NN = 25
    NN2 = 50

BACKEND = "cython"


cdef inline void _derivative(const double* H, const double* rho,
                             double gb, double gs, double* out) noexcept nogil:
    cdef int i, j, k
    cdef double ar, ai, hr, hi, pr, pi
    cdef double hgb = 0.5 * gb
    cdef double hgs = 0.5 * gs
    cdef double hpr = 0.5 * (gb + gs)
    cdef double ppr, ppi, rrr, rri
    for i in range(N):
        for j in range(N):
            ar = 0.0
            ai = 0.0
            for k in range(N):
                # H[i,k] * rho[k,j]
                hr = H[2 * (i * N + k)]
                hi = H[2 * (i * N + k) + 1]
                pr = rho[2 * (k * N + j)]
                pi = rho[2 * (k * N + j) + 1]
                ar += hr * pr - hi * pi
                ai += hr * pi + hi * pr
                # - rho[i,k] * H[k,j]
                pr = rho[2 * (i * N + k)]
                pi = rho[2 * (i * N + k) + 1]
                hr = H[2 * (k * N + j)]
                hi = H[2 * (k * N + j) + 1]
                ar -= pr * hr - pi * hi
                ai -= pr * hi + pi * hr
            # -i * (a_r + i a_i) = a_i - i a_r
            out[2 * (i * N + j)] = ai
            out[2 * (i * N + j) + 1] = -ar

    ppr = rho[2 * 18]
    ppi = rho[2 * 18 + 1]
    rrr = rho[2 * 24]
    rri = rho[2 * 24 + 1]
    # repopulation of the ground states from |p>
    out[0] += hgb * ppr
    out[1] += hgb * ppi
    out[2 * 6] += (gb / 6.0) * ppr
    out[2 * 6 + 1] += (gb / 6.0) * ppi
    out[2 * 12] += (gb / 3.0) * ppr
    out[2 * 12 + 1] += (gb / 3.0) * ppi
    out[2 * 18] += gs * rrr - gb * ppr
    out[2 * 18 + 1] += gs * rri - gb * ppi
    out[2 * 24] -= gs * rrr
    out[2 * 24 + 1] -= gs * rri
    for i in range(3):
        for k in range(2):
            out[2 * (i * N + 3) + k] -= hgb * rho[2 * (i * N + 3) + k]
            out[2 * (3 * N + i) + k] -= hgb * rho[2 * (3 * N + i) + k]
            out[2 * (i * N + 4) + k] -= hgs * rho[2 * (i * N + 4) + k]
            out[2 * (4 * N + i) + k] -= hgs * rho[2 * (4 * N + i) + k]
    for k in range(2):
        out[2 * 19 + k] -= hpr * rho[2 * 19 + k]
        out[2 * 23 + k] -= hpr * rho[2 * 23 + k]


cdef inline void _hamiltonian(const double* h0, const double* hred, double e,
                              double* H) noexcept nogil:
    cdef int m
    for m in range(NN2):
        H[m] = h0[m] + e * hred[m]


cdef void _propagate_one(double* rho, const double* h0, const double* hred,
                         double gb, double gs, const double* env,
                         const double* dts, Py_ssize_t n_steps,
                         const long long* sample_idx, Py_ssize_t n_samples,
                         double* out) noexcept nogil:
    cdef double H[NN2]
    cdef double k1[NN2]
    cdef double k2[NN2]
    cdef double k3[NN2]
    cdef double k4[NN2]
    cdef double y[NN2]
    cdef Py_ssize_t step, s = 0
    cdef int m, i, j
    cdef double h, a, b
    for step in range(n_steps + 1):
        while s < n_samples and sample_idx[s] == step:
            for m in range(NN2):
                out[s * NN2 + m] = rho[m]
            s += 1
        if step == n_steps:
            break
        h = dts[step]
        _hamiltonian(h0, hred, env[2 * step], H)
        _derivative(H, rho, gb, gs, k1)
        for m in range(NN2):
            y[m] = rho[m] + (0.5 * h) * k1[m]
        _hamiltonian(h0, hred, env[2 * step + 1], H)
        _derivative(H, y, gb, gs, k2)
        for m in range(NN2):
            y[m] = rho[m] + (0.5 * h) * k2[m]
        _derivative(H, y, gb, gs, k3)
        for m in range(NN2):
            y[m] = rho[m] + h * k3[m]
        _hamiltonian(h0, hred, env[2 * step + 2], H)
        _derivative(H, y, gb, gs, k4)
        for m in range(NN2):
            rho[m] = rho[m] + (h / 6.0) * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m])
        # rho <- (rho + rho^dagger) / 2
        for i in range(N):
            for j in range(i, N):
                a = 0.5 * (rho[2 * (i * N + j)] + rho[2 * (j * N + i)])
                b = 0.5 * (rho[2 * (i * N + j) + 1] - rho[2 * (j * N + i) + 1])
                rho[2 * (i * N + j)] = a
                rho[2 * (i * N + j) + 1] = b
                rho[2 * (j * N + i)] = a
                rho[2 * (j * N + i) + 1] = -b


def propagate(rho0, h0, hred, gamma_big, gamma_small, env, dts, sample_idx):
    """Integrate a batch of density matrices over a shared time grid.

    Parameters
    ----------
    rho0, h0, hred : complex128 arrays, shape (B, 5, 5)
        Initial states, static Hamiltonian and the red-coupling part that
        is scaled by the envelope. Angular units (rad/us).
    gamma_big, gamma_small : float64 arrays, shape (B,)
        Decay rates of |p> and |r> in 1/us.
    env : float64 array, shape (2 * n_steps + 1,)
        Envelope sampled at every half step.
    dts : float64 array, shape (n_steps,)
    sample_idx : int64 array, shape (S,)
        Non-decreasing step indices at which the state is recorded.

    Returns
    -------
    complex128 array, shape (B, S, 5, 5)
    """
    cdef Py_ssize_t B = rho0.shape[0]
    cdef Py_ssize_t n_steps = dts.shape[0]
    if env.shape[0] != 2 * n_steps + 1:
        raise ValueError("env must hold 2 * n_steps + 1 samples")
    idx = np.ascontiguousarray(sample_idx, dtype=np.int64)
    if idx.size and (idx[0] < 0 or idx[-1] > n_steps or np.any(np.diff(idx) < 0)):
        raise ValueError("sample_idx must be sorted within [0, n_steps]")
    cdef Py_ssize_t S = idx.shape[0]

    work = np.ascontiguousarray(rho0, dtype=np.complex128).reshape(B, NN).copy()
    out = np.zeros((B, S, N, N), dtype=np.complex128)

    cdef double[:, ::1] rho_v = work.view(np.float64)
    cdef double[:, ::1] h0_v = np.ascontiguousarray(h0, dtype=np.complex128).reshape(B, NN).view(np.float64)
    cdef double[:, ::1] hr_v = np.ascontiguousarray(hred, dtype=np.complex128).reshape(B, NN).view(np.float64)
    cdef double[::1] gb_v = np.ascontiguousarray(gamma_big, dtype=np.float64)
    cdef double[::1] gs_v = np.ascontiguousarray(gamma_small, dtype=np.float64)
    cdef double[::1] env_v = np.ascontiguousarray(env, dtype=np.float64)
    cdef double[::1] dts_v = np.ascontiguousarray(dts, dtype=np.float64)
    cdef long long[::1] idx_v = idx
    cdef double[:, ::1] out_v = out.reshape(B, S * NN).view(np.float64)

    cdef Py_ssize_t b
    cdef const double* env_p = &env_v[0]
    cdef const double* dts_p = &dts_v[0] if n_steps > 0 else NULL
    cdef const long long* idx_p = &idx_v[0] if S > 0 else NULL
    with nogil:
        for b in range(B):
            _propagate_one(&rho_v[b, 0], &h0_v[b, 0], &hr_v[b, 0],
                           gb_v[b], gs_v[b], env_p, dts_p, n_steps,
                           idx_p, S, &out_v[b, 0] if S > 0 else NULL)
    return out
