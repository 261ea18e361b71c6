"""Virtual Rabi and spectroscopy experiments built on the Monte Carlo layer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .calculators import effective_two_photon, resonance_estimate
from .core import Level, PulseShape, SystemParams, default_step, pure_state, propagate_batch
from .errors import FitError, NoResonance
from .fitting import fit_gaussian_dips
from .noise import FluctuationSpec, ensemble_grid, ensemble_samples, mean_and_stderr

RABI_GRID = (0.0, 0.6, 61)  # us
SPECTRUM_GRID = (-40.0, 40.0, 81)  # MHz around the resonance
SPECTRUM_DURATION = 0.06  # us
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MAX_PROBE = 20.0  # us; a slower pi pulse cannot resolve a line against Rydberg decay


@dataclass(frozen=True)
class ScanSpec:
    """One scan: ``variable`` is ``"T"`` (pulse length, us) or ``"delta"``.

    For ``"delta"`` the range is an offset (MHz) from the reference
    detuning; the pulse duration stays fixed. The reference detuning is the
    light-shifted resonance when ``lock_to_resonance`` is set, otherwise
    ``system.delta_small``.
    """

    variable: str
    lo: float
    hi: float
    points: int
    system: SystemParams = field(default_factory=SystemParams)
    pulse: PulseShape = field(default_factory=lambda: PulseShape(SPECTRUM_DURATION))
    fluctuations: FluctuationSpec = field(default_factory=FluctuationSpec)
    lock_to_resonance: bool = True

    def __post_init__(self):
        if self.variable not in ("T", "delta"):
            raise ValueError(f"unknown scan variable {self.variable!r}")
        if not self.lo < self.hi:
            raise ValueError("scan range needs lo < hi")
        if int(self.points) != self.points or self.points < 2:
            raise ValueError("a scan needs at least 2 points")
        if self.variable == "T" and self.lo < 0:
            raise ValueError("pulse durations must be >= 0")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, int(self.points))


@dataclass
class ScanResult:
    """Scan output: ``x`` is T (us) or the absolute two-photon detuning (MHz)."""

    variable: str
    x: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    reference_detuning: float
    spec: ScanSpec

    @property
    def seed(self) -> int:
        return self.spec.fluctuations.seed

    @property
    def max_excitation(self) -> float:
        """1 - lowest mean recapture probability along the scan."""
        return 1.0 - float(np.min(self.mean))


def reference_detuning(spec: ScanSpec, threads=1) -> float:
    if spec.lock_to_resonance:
        return find_resonance(spec.system, spec.pulse, threads=threads)
    return spec.system.delta_small


def _pulse_of_length(pulse: PulseShape, T: float) -> PulseShape:
    return replace(pulse, duration=T, rise_time=min(pulse.rise_time, T / 2))


def rabi_scan(spec: ScanSpec, threads=1) -> ScanResult:
    """Recapture probability versus red-pulse duration.

    Every duration uses the same trajectory streams. With a rectangular
    pulse the state at time T of a long pulse equals the final state of a
    pulse of length T, so each trajectory is integrated once and sampled
    along the way.
    """
    if spec.variable != "T":
        raise ValueError("rabi_scan needs a pulse-duration scan")
    ref = reference_detuning(spec, threads)
    base = replace(spec.system, delta_small=ref)
    grid = spec.grid
    fl = spec.fluctuations
    if spec.pulse.kind == "rectangle" or spec.pulse.rise_time == 0:
        long_pulse = PulseShape(float(grid[-1]))
        values = ensemble_samples(base, long_pulse, fl, grid, threads=threads)
    else:
        values = np.empty((fl.n_trajectories, grid.size))
        for k, T in enumerate(grid):
            if T == 0:
                values[:, k] = ensemble_samples(base, PulseShape(0.0), fl, [0.0])[:, 0]
                continue
            pulse = _pulse_of_length(spec.pulse, float(T))
            values[:, k] = ensemble_samples(base, pulse, fl, [T], threads=threads)[:, 0]
    mean, err = _reduce(values)
    return ScanResult("T", grid, mean, err, ref, spec)


def spectrum_scan(spec: ScanSpec, threads=1) -> ScanResult:
    """Recapture probability versus two-photon detuning at fixed pulse length."""
    if spec.variable != "delta":
        raise ValueError("spectrum_scan needs a detuning scan")
    ref = reference_detuning(spec, threads)
    deltas = ref + spec.grid
    bases = [replace(spec.system, delta_small=float(d)) for d in deltas]
    T = spec.pulse.duration
    values = ensemble_grid(bases, spec.pulse, spec.fluctuations, [T], threads=threads)
    mean, err = _reduce(values[:, :, 0].T)
    return ScanResult("delta", deltas, mean, err, ref, spec)


def _reduce(values):
    """Column-wise mean and standard error over trajectories (rows)."""
    stats = [mean_and_stderr(values[:, k]) for k in range(values.shape[1])]
    return np.array([s[0] for s in stats]), np.array([s[1] for s in stats])


def _rydberg_population(base, pulse, deltas, threads=1):
    params = [replace(base, delta_small=float(d)) for d in deltas]
    step = min(default_step(p) for p in params)
    rho = propagate_batch(pure_state(Level.UP), params, pulse, [pulse.duration], step, threads)
    return rho[:, -1, Level.R, Level.R].real


def find_resonance(base: SystemParams, pulse: PulseShape | None = None, threads=1,
                   points=41, tol=1e-6) -> float:
    """Two-photon detuning (MHz) at which a pi pulse transfers the most.

    A noise-free coarse scan around the light-shift estimate is fitted with
    a Gaussian dip, then refined by golden-section search on the Rydberg
    population after an effective pi pulse (decay rates as in ``base``,
    perfect pumping). ``pulse`` only contributes its envelope shape.
    """
    if base.omega_R <= 0 or base.omega_B <= 0:
        raise NoResonance("both lasers must be on")
    if base.delta_big == 0:
        raise NoResonance("resonant intermediate level: no two-photon line")
    omega_eff = abs(effective_two_photon(base.omega_R, base.omega_B, base.delta_big)[0])
    guess = resonance_estimate(base.omega_R, base.omega_B, base.delta_big)
    t_pi = 0.5 / omega_eff
    if t_pi > MAX_PROBE:
        raise NoResonance(f"two-photon coupling too weak: a pi pulse would last {t_pi:.3g} us")
    probe = PulseShape(t_pi) if pulse is None else _pulse_of_length(pulse, t_pi)

    half = 3.0 * omega_eff + 0.3 * abs(guess) + 1.0
    grid = guess + np.linspace(-half, half, points)
    rr = _rydberg_population(base, probe, grid, threads)

    edge = max(2, points // 8)
    floor = max(1e-6, float(np.std(np.concatenate([rr[:edge], rr[-edge:]]))))
    depth = float(rr.max() - np.median(rr))
    if depth < 3.0 * floor:
        raise NoResonance(f"deepest dip {depth:.3g} is below 3x the floor {floor:.3g}")

    candidates = np.flatnonzero(rr == rr.max())
    if candidates.size > 1:
        padded = np.pad(rr, 1, mode="edge")
        curvature = np.abs(padded[:-2] - 2 * rr + padded[2:])
        best = int(candidates[np.argmax(curvature[candidates])])
    else:
        best = int(candidates[0])
    spacing = grid[1] - grid[0]
    try:
        fit = fit_gaussian_dips(grid, 1.0 - rr, n_dips=1)
        centre, width = fit["nu1"], fit["s1"]
        if not grid[0] < centre < grid[-1]:
            raise FitError("dip centre outside the scan")
    except FitError:
        centre, width = float(grid[best]), 2 * spacing
    width = min(max(width, spacing), half)

    def loss(d):
        return -_rydberg_population(base, probe, [d], threads)[0]

    a, b = centre - width, centre + width
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = loss(c), loss(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = loss(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = loss(d)
    return 0.5 * (a + b)
