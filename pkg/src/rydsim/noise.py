"""Monte Carlo averaging over laser noise and imperfect optical pumping.

Each trajectory draws one quasi-static set of laser parameters from its
own counter-based (Philox) stream keyed by ``(seed, trajectory index)``,
so results do not depend on execution order or thread count.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    DIM,
    Level,
    PulseShape,
    SystemParams,
    default_step,
    propagate_batch,
)
from .errors import InvariantViolation

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def fwhm_to_sigma(fwhm: float) -> float:
    return fwhm / FWHM_PER_SIGMA


@dataclass(frozen=True)
class FluctuationSpec:
    """Gaussian laser noise (FWHM) and state-preparation imperfections.

    Power FWHMs are relative (0.025 = 2.5 %); ``detuning_fwhm`` is the
    two-photon detuning jitter in MHz.
    """

    red_power_fwhm: float = 0.025
    blue_power_fwhm: float = 0.05
    detuning_fwhm: float = 6.0
    pumping_efficiency: float = 0.95
    recapture_factor: float = 0.98
    n_trajectories: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("red_power_fwhm", "blue_power_fwhm", "detuning_fwhm"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("pumping_efficiency", "recapture_factor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if int(self.n_trajectories) != self.n_trajectories or self.n_trajectories < 1:
            raise ValueError("n_trajectories must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def quiet(self) -> "FluctuationSpec":
        """Same spec with every laser fluctuation switched off."""
        return replace(self, red_power_fwhm=0.0, blue_power_fwhm=0.0, detuning_fwhm=0.0)


@dataclass(frozen=True)
class TrajectoryParams:
    omega_R: float
    omega_B: float
    delta_small: float

    def apply(self, base: SystemParams) -> SystemParams:
        return replace(
            base, omega_R=self.omega_R, omega_B=self.omega_B, delta_small=self.delta_small
        )


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_trajectory(
    base: SystemParams, spec: FluctuationSpec, rng: np.random.Generator
) -> TrajectoryParams:
    """One quasi-static draw of the laser parameters.

    Relative powers are Gaussian around 1 and Rabi frequencies follow the
    square root of power. Three normals are always consumed, in the order
    red, blue, detuning, so the stream layout is fixed.
    """
    z = rng.standard_normal(3)
    p_red = 1.0 + fwhm_to_sigma(spec.red_power_fwhm) * z[0]
    p_blue = 1.0 + fwhm_to_sigma(spec.blue_power_fwhm) * z[1]
    delta = base.delta_small + fwhm_to_sigma(spec.detuning_fwhm) * z[2]
    if spec.red_power_fwhm == 0:
        p_red = 1.0
    if spec.blue_power_fwhm == 0:
        p_blue = 1.0
    if spec.detuning_fwhm == 0:
        delta = base.delta_small
    return TrajectoryParams(
        omega_R=base.omega_R * math.sqrt(max(p_red, 0.0)),
        omega_B=base.omega_B * math.sqrt(max(p_blue, 0.0)),
        delta_small=delta,
    )


def initial_state(spec: FluctuationSpec) -> np.ndarray:
    """Pumped state: ``UP`` with the pumping efficiency, the rest in ``G``."""
    rho = np.zeros((DIM, DIM), dtype=np.complex128)
    rho[Level.UP, Level.UP] = spec.pumping_efficiency
    rho[Level.G, Level.G] = 1.0 - spec.pumping_efficiency
    return rho


def recapture_probability(rho_final, spec: FluctuationSpec):
    """Probability that the atom is still trapped after the sequence.

    Rydberg atoms are lost with certainty; everything else is recaptured
    with ``spec.recapture_factor``. Accepts a single matrix or any stack.
    """
    rho_final = np.asarray(rho_final)
    rr = np.real(rho_final[..., Level.R, Level.R])
    return spec.recapture_factor * (1.0 - rr)


@dataclass(frozen=True)
class EnsembleResult:
    mean: float
    stderr: float
    values: np.ndarray


def mean_and_stderr(values) -> tuple[float, float]:
    """Order-independent mean and standard error of the mean.

    Sums are exact (``math.fsum``) and taken relative to the first value,
    so identical inputs give exactly that value back.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    x0 = float(values[0])
    mean = x0 + math.fsum(values - x0) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def draw_ensemble(base: SystemParams, spec: FluctuationSpec) -> list[SystemParams]:
    return [
        sample_trajectory(base, spec, trajectory_rng(spec.seed, i)).apply(base)
        for i in range(spec.n_trajectories)
    ]


def ensemble_samples(
    base: SystemParams,
    pulse: PulseShape,
    spec: FluctuationSpec,
    times,
    step=None,
    threads=1,
) -> np.ndarray:
    """Recapture probability per trajectory at each sample time.

    Returns an array of shape ``(n_trajectories, len(times))``.
    """
    return ensemble_grid([base], pulse, spec, times, step, threads)[0]


def ensemble_grid(bases, pulse, spec, times, step=None, threads=1) -> np.ndarray:
    """Like :func:`ensemble_samples` for several base parameter sets at once.

    Every base reuses the same trajectory streams. Members whose default
    step coincides share one kernel call. Shape ``(len(bases), n, len(times))``.
    """
    members = [(b, i, p) for b, base in enumerate(bases)
               for i, p in enumerate(draw_ensemble(base, spec))]
    rho0 = initial_state(spec)
    groups = defaultdict(list)
    for m, (_, _, p) in enumerate(members):
        h = default_step(p, rho0) if step is None else float(step)
        groups[h].append(m)
    out = np.empty((len(bases), spec.n_trajectories, len(times)))
    for h in sorted(groups):
        chosen = groups[h]
        rhos = propagate_batch(rho0, [members[m][2] for m in chosen], pulse, times, h, threads)
        traces = np.trace(rhos, axis1=-2, axis2=-1)
        bad = np.flatnonzero(np.max(np.abs(traces - 1.0), axis=1) > 1e-6)
        if bad.size:
            raise InvariantViolation(
                "trace drifted beyond 1e-6; the integration step is far too coarse",
                trajectory=members[chosen[bad[0]]][1],
            )
        values = recapture_probability(rhos, spec)
        for row, m in enumerate(chosen):
            b, i, _ = members[m]
            out[b, i] = values[row]
    return out


def run_ensemble(
    base: SystemParams,
    pulse: PulseShape,
    spec: FluctuationSpec,
    step=None,
    threads=1,
) -> EnsembleResult:
    """Mean recapture probability at the end of ``pulse`` and its standard error."""
    if pulse.duration == 0:
        values = np.full(spec.n_trajectories, float(recapture_probability(initial_state(spec), spec)))
    else:
        values = ensemble_samples(base, pulse, spec, [pulse.duration], step, threads)[:, -1]
    mean, err = mean_and_stderr(values)
    return EnsembleResult(mean, err, values)
