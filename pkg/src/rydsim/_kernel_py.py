"""Pure numpy RK4 propagator, used when the compiled kernel is unavailable.

Same contract as ``rydsim._kernel.propagate``. Only elementwise
operations are used, so the result for one trajectory does not depend on
how the batch is split between threads.
"""
import numpy as np

BACKEND = "numpy"

DOWN, G, UP, P, R = range(5)


def _matmul(a, b):
    acc = a[:, :, 0, None] * b[:, None, 0, :]
    for k in range(1, 5):
        acc = acc + a[:, :, k, None] * b[:, None, k, :]
    return acc


def dissipator(rho, gamma_big, gamma_small):
    """Decay term for a batch ``rho`` of shape (B, 5, 5)."""
    gb = np.asarray(gamma_big, dtype=np.float64)[:, None]
    gs = np.asarray(gamma_small, dtype=np.float64)[:, None]
    out = np.zeros_like(rho)
    pp = rho[:, P, P]
    rr = rho[:, R, R]
    out[:, DOWN, DOWN] = gb[:, 0] / 2 * pp
    out[:, G, G] = gb[:, 0] / 6 * pp
    out[:, UP, UP] = gb[:, 0] / 3 * pp
    out[:, P, P] = gs[:, 0] * rr - gb[:, 0] * pp
    out[:, R, R] = -gs[:, 0] * rr
    out[:, :3, P] = -(gb / 2) * rho[:, :3, P]
    out[:, P, :3] = -(gb / 2) * rho[:, P, :3]
    out[:, :3, R] = -(gs / 2) * rho[:, :3, R]
    out[:, R, :3] = -(gs / 2) * rho[:, R, :3]
    out[:, P, R] = -((gb[:, 0] + gs[:, 0]) / 2) * rho[:, P, R]
    out[:, R, P] = -((gb[:, 0] + gs[:, 0]) / 2) * rho[:, R, P]
    return out


def derivative(H, rho, gamma_big, gamma_small):
    comm = _matmul(H, rho) - _matmul(rho, H)
    return -1j * comm + dissipator(rho, gamma_big, gamma_small)


def propagate(rho0, h0, hred, gamma_big, gamma_small, env, dts, sample_idx):
    rho = np.array(rho0, dtype=np.complex128, copy=True)
    h0 = np.asarray(h0, dtype=np.complex128)
    hred = np.asarray(hred, dtype=np.complex128)
    env = np.asarray(env, dtype=np.float64)
    dts = np.asarray(dts, dtype=np.float64)
    idx = np.asarray(sample_idx, dtype=np.int64)
    n_steps = dts.shape[0]
    if env.shape[0] != 2 * n_steps + 1:
        raise ValueError("env must hold 2 * n_steps + 1 samples")
    if idx.size and (idx[0] < 0 or idx[-1] > n_steps or np.any(np.diff(idx) < 0)):
        raise ValueError("sample_idx must be sorted within [0, n_steps]")

    out = np.zeros((rho.shape[0], idx.size, 5, 5), dtype=np.complex128)
    s = 0
    for step in range(n_steps + 1):
        while s < idx.size and idx[s] == step:
            out[:, s] = rho
            s += 1
        if step == n_steps:
            break
        h = dts[step]
        H0 = h0 + env[2 * step] * hred
        Hm = h0 + env[2 * step + 1] * hred
        H1 = h0 + env[2 * step + 2] * hred
        k1 = derivative(H0, rho, gamma_big, gamma_small)
        k2 = derivative(Hm, rho + (0.5 * h) * k1, gamma_big, gamma_small)
        k3 = derivative(Hm, rho + (0.5 * h) * k2, gamma_big, gamma_small)
        k4 = derivative(H1, rho + h * k3, gamma_big, gamma_small)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + np.conj(np.swapaxes(rho, 1, 2)))
    return out
