"""Scan results shared between test modules (computed once per session)."""
from dataclasses import replace
from functools import lru_cache

from rydsim.core import PulseShape, SystemParams
from rydsim.experiments import RABI_GRID, SPECTRUM_DURATION, SPECTRUM_GRID, ScanSpec
from rydsim.experiments import rabi_scan, spectrum_scan
from rydsim.noise import FluctuationSpec

# laser sets of the three Rabi measurements: (omega_R, omega_B, Delta, detuning jitter FWHM)
SETS = {
    "a": (255.0, 24.0, 400.0, 6.0),
    "b": (250.0, 28.0, 600.0, 4.5),
    "c": (80.0, 70.0, 600.0, 4.0),
}


def system(name):
    o_r, o_b, d, _ = SETS[name]
    return SystemParams(omega_R=o_r, omega_B=o_b, delta_big=d)


def fluctuations(name, quiet=False, jitter=None):
    fl = FluctuationSpec(detuning_fwhm=SETS[name][3] if jitter is None else jitter)
    return fl.quiet() if quiet else fl


@lru_cache(maxsize=None)
def rabi(name, quiet=False, jitter=None):
    spec = ScanSpec("T", *RABI_GRID, system=system(name), pulse=PulseShape(RABI_GRID[1]),
                    fluctuations=fluctuations(name, quiet, jitter))
    return rabi_scan(spec)


@lru_cache(maxsize=None)
def spectrum(name="a", quiet=False):
    spec = ScanSpec("delta", *SPECTRUM_GRID, system=system(name),
                    pulse=PulseShape(SPECTRUM_DURATION),
                    fluctuations=fluctuations(name, quiet))
    return spectrum_scan(spec)


def first_minimum(values):
    """Index of the first local minimum of a sampled trace."""
    for k in range(1, len(values) - 1):
        if values[k] < values[k - 1] and values[k] <= values[k + 1]:
            return k
    return len(values) - 1
