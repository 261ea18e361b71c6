"""Five-level master equation for two-photon Rydberg excitation.

Basis order is ``DOWN, G, UP, P, R``::

    DOWN  |F=1, m_F=1>            (5s1/2)
    G     |F=2, m_F=1>            (5s1/2)
    UP    |F=2, m_F=2>            (5s1/2, optically pumped)
    P     |5p1/2, F=2, m_F=2>     (intermediate)
    R     Rydberg level

All spectroscopic quantities are stored as ordinary frequencies (MHz,
i.e. omega / 2 pi) and times in microseconds. The conversion to angular
units happens once, in :func:`build_hamiltonian` and :func:`decay_rates`.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernel_py
from .errors import InvariantViolation, NonConvergence

if os.environ.get("RYDSIM_PURE_PYTHON"):
    from . import _kernel_py as _kernel
else:
    try:
        from . import _kernel
    except ImportError:  # extension not built
        from . import _kernel_py as _kernel

BACKEND = _kernel.BACKEND

TWO_PI = 2.0 * math.pi
DIM = 5

#: default RK4 step is 1 / (SAMPLES_PER_PERIOD * f_max)
SAMPLES_PER_PERIOD = 40
MAX_STEP_US = 1e-4
AUTO_TOL = 1e-8
AUTO_MAX_HALVINGS = 12
TRACE_DRIFT_LIMIT = 1e-6


class Level(enum.IntEnum):
    DOWN = 0
    G = 1
    UP = 2
    P = 3
    R = 4


@dataclass(frozen=True)
class SystemParams:
    """Hamiltonian and decay parameters, all in MHz (omega / 2 pi).

    Defaults are the first parameter set of the Rabi measurements
    (255, 24, 400) MHz with resonant two-photon detuning left at zero.
    """

    omega_R: float = 255.0
    omega_B: float = 24.0
    delta_big: float = 400.0
    delta_small: float = 0.0
    gamma_big: float = 5.75
    gamma_small: float = 0.0048
    omega_HF: float = 6834.0

    def __post_init__(self):
        for name in ("omega_R", "omega_B", "gamma_big", "gamma_small"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        for name in ("delta_big", "delta_small", "omega_HF"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class PulseShape:
    """Red (795 nm) pulse; the blue laser stays on for the whole window.

    ``duration`` and ``rise_time`` are in microseconds.
    """

    duration: float
    rise_time: float = 0.0
    kind: str = "rectangle"

    def __post_init__(self):
        if self.kind not in ("rectangle", "trapezoid"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if not self.duration >= 0:
            raise ValueError("pulse duration must be >= 0")
        if self.rise_time < 0:
            raise ValueError("rise_time must be >= 0")
        if self.kind == "trapezoid" and self.rise_time > self.duration / 2:
            raise ValueError("rise_time must not exceed duration / 2")

    def envelope(self, t):
        """Envelope value(s) in [0, 1] at time(s) ``t`` (us)."""
        t = np.asarray(t, dtype=np.float64)
        inside = (t >= 0) & (t <= self.duration)
        if self.kind == "rectangle" or self.rise_time == 0:
            return np.where(inside, 1.0, 0.0)
        tr = self.rise_time
        ramp = np.minimum(np.minimum(t / tr, (self.duration - t) / tr), 1.0)
        return np.where(inside, np.clip(ramp, 0.0, 1.0), 0.0)


def build_hamiltonian(params: SystemParams, envelope_value: float = 1.0) -> np.ndarray:
    """H / hbar in rad/us for the given red-envelope value."""
    if not 0.0 <= envelope_value <= 1.0:
        raise ValueError("envelope_value must lie in [0, 1]")
    h0, hred = _hamiltonian_parts(params)
    return h0 + envelope_value * hred


def _hamiltonian_parts(params):
    h0 = np.zeros((DIM, DIM), dtype=np.complex128)
    h0[Level.DOWN, Level.DOWN] = -TWO_PI * params.omega_HF
    h0[Level.P, Level.P] = -TWO_PI * params.delta_big
    h0[Level.R, Level.R] = -TWO_PI * params.delta_small
    h0[Level.P, Level.R] = h0[Level.R, Level.P] = TWO_PI * params.omega_B / 2
    hred = np.zeros((DIM, DIM), dtype=np.complex128)
    hred[Level.UP, Level.P] = hred[Level.P, Level.UP] = TWO_PI * params.omega_R / 2
    return h0, hred


def decay_rates(params: SystemParams) -> tuple[float, float]:
    """(Gamma, gamma) in 1/us."""
    return TWO_PI * params.gamma_big, TWO_PI * params.gamma_small


def lindblad_term(rho: np.ndarray, params: SystemParams) -> np.ndarray:
    """Dissipative part of d(rho)/dt in 1/us.

    Spontaneous emission from ``P`` repopulates ``DOWN``, ``G`` and ``UP``
    with branching ratios 1/2, 1/6 and 1/3; ``R`` decays into ``P``.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    gb, gs = decay_rates(params)
    return _kernel_py.dissipator(rho[None], np.array([gb]), np.array([gs]))[0]


def pure_state(level: Level) -> np.ndarray:
    rho = np.zeros((DIM, DIM), dtype=np.complex128)
    rho[level, level] = 1.0
    return rho


def check_density_matrix(rho, trace_tol=1e-9, herm_tol=1e-12, eig_tol=1e-8):
    """Raise ``InvariantViolation`` unless ``rho`` is a valid state."""
    rho = np.asarray(rho)
    if rho.shape != (DIM, DIM):
        raise InvariantViolation(f"expected a 5x5 matrix, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise InvariantViolation(f"not Hermitian (max deviation {herm:.3g})")
    drift = abs(np.trace(rho) - 1.0)
    if drift > trace_tol:
        raise InvariantViolation(f"trace drifted by {drift:.3g}")
    lam = np.linalg.eigvalsh(rho).min()
    if lam < -eig_tol:
        raise InvariantViolation(f"negative eigenvalue {lam:.3g}")


def max_frequency(params: SystemParams, rho0=None) -> float:
    """Fastest relevant frequency (MHz) for step selection.

    The hyperfine splitting only matters when ``rho0`` carries coherences
    with ``DOWN``; decay never creates them.
    """
    f = max(
        abs(params.delta_big),
        params.omega_R,
        params.omega_B,
        abs(params.delta_small),
        params.gamma_big,
    )
    if rho0 is not None and has_down_coherence(rho0):
        f = max(f, abs(params.omega_HF))
    return f


def has_down_coherence(rho0) -> bool:
    row = np.asarray(rho0)[Level.DOWN]
    col = np.asarray(rho0)[:, Level.DOWN]
    mask = np.arange(DIM) != Level.DOWN
    return bool(np.any(row[mask] != 0) or np.any(col[mask] != 0))


def default_step(params: SystemParams, rho0=None) -> float:
    f = max_frequency(params, rho0)
    if f <= 0:
        return MAX_STEP_US
    return min(1.0 / (SAMPLES_PER_PERIOD * f), MAX_STEP_US)


def time_grid(times, step):
    """Split [0, max(times)] into RK4 steps no longer than ``step``.

    Every sample time falls exactly on a grid point: each interval between
    consecutive sample times gets ``ceil(length / step)`` equal steps.
    Returns ``(dts, sample_idx, t_nodes)``.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("sample times must be a non-decreasing sequence >= 0")
    dts = []
    idx = np.empty(times.size, dtype=np.int64)
    prev = 0.0
    count = 0
    for k, t in enumerate(times):
        span = t - prev
        if span > 0:
            n = max(1, math.ceil(span / step * (1 - 1e-12)))
            dts.extend([span / n] * n)
            count += n
        idx[k] = count
        prev = t
    dts = np.asarray(dts, dtype=np.float64)
    nodes = np.concatenate([[0.0], np.cumsum(dts)])
    # pin nodes that coincide with sample times to the exact values
    nodes[idx] = times
    return dts, idx, nodes


def half_step_envelope(pulse: PulseShape, dts, nodes):
    mids = nodes[:-1] + 0.5 * dts
    t = np.empty(2 * dts.size + 1)
    t[0::2] = nodes
    t[1::2] = mids
    return pulse.envelope(t)


def propagate_batch(rho0, params_list, pulse, times, step, threads=1):
    """Integrate many parameter sets on one shared time grid.

    Returns ``(B, len(times), 5, 5)``. ``threads`` splits the batch; the
    per-member arithmetic is the same either way.
    """
    dts, idx, nodes = time_grid(times, step)
    env = half_step_envelope(pulse, dts, nodes)
    B = len(params_list)
    rho0 = np.broadcast_to(np.asarray(rho0, dtype=np.complex128), (B, DIM, DIM))
    h0 = np.empty((B, DIM, DIM), dtype=np.complex128)
    hred = np.empty((B, DIM, DIM), dtype=np.complex128)
    gb = np.empty(B)
    gs = np.empty(B)
    for b, p in enumerate(params_list):
        h0[b], hred[b] = _hamiltonian_parts(p)
        gb[b], gs[b] = decay_rates(p)

    threads = resolve_threads(threads)
    if threads <= 1 or B <= 1:
        return _kernel.propagate(rho0, h0, hred, gb, gs, env, dts, idx)
    bounds = np.linspace(0, B, min(threads, B) + 1).astype(int)
    chunks = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(
            pool.map(
                lambda s: _kernel.propagate(
                    rho0[s], h0[s], hred[s], gb[s], gs[s], env, dts, idx
                ),
                chunks,
            )
        )
    return np.concatenate(parts, axis=0)


def resolve_threads(threads) -> int:
    if threads is None:
        return 1
    threads = int(threads)
    if threads < 0:
        raise ValueError("threads must be >= 0")
    if threads == 0:
        return os.cpu_count() or 1
    return threads


def _check_trace(samples):
    drift = np.max(np.abs(np.trace(samples, axis1=-2, axis2=-1) - 1.0))
    if drift > TRACE_DRIFT_LIMIT:
        raise InvariantViolation(
            f"trace drifted by {drift:.3g}; the integration step is far too coarse"
        )


def evolve_samples(rho0, params: SystemParams, pulse: PulseShape, times, step=None):
    """Density matrices at each of ``times`` (us) under ``pulse``.

    ``step`` is a fixed RK4 step in us, ``None`` for the default, or
    ``"auto"`` to halve the default until the final Rydberg population
    changes by less than 1e-8.
    """
    rho0 = np.asarray(rho0, dtype=np.complex128)
    times = np.asarray(times, dtype=np.float64)
    if step == "auto":
        h = default_step(params, rho0)
        prev = None
        for _ in range(AUTO_MAX_HALVINGS + 1):
            out = propagate_batch(rho0, [params], pulse, times, h)[0]
            _check_trace(out)
            r = out[-1, Level.R, Level.R].real if out.shape[0] else 0.0
            if prev is not None and abs(r - prev) < AUTO_TOL:
                return out
            prev = r
            h /= 2
        raise NonConvergence(
            f"final rho_rr still changing after {AUTO_MAX_HALVINGS} halvings"
        )
    h = default_step(params, rho0) if step is None else float(step)
    if not h > 0:
        raise ValueError("step must be > 0")
    out = propagate_batch(rho0, [params], pulse, times, h)[0]
    _check_trace(out)
    return out


def evolve(rho0, params: SystemParams, pulse: PulseShape, step=None) -> np.ndarray:
    """Density matrix at the end of ``pulse``. ``T == 0`` returns ``rho0``."""
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if pulse.duration == 0:
        return rho0.copy()
    return evolve_samples(rho0, params, pulse, [pulse.duration], step)[-1]
