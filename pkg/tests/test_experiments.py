import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

import oracles
import scans
from rydsim import experiments, fitting
from rydsim.calculators import resonance_estimate
from rydsim.core import PulseShape, SystemParams
from rydsim.errors import NoResonance
from rydsim.experiments import ScanSpec, find_resonance, rabi_scan, spectrum_scan
from rydsim.noise import FWHM_PER_SIGMA, FluctuationSpec, run_ensemble

QUIET = FluctuationSpec().quiet()


def test_scan_spec_validation():
    with pytest.raises(ValueError):
        ScanSpec("T", 0.1, 0.1, 10)
    with pytest.raises(ValueError):
        ScanSpec("delta", -1, 1, 1)
    with pytest.raises(ValueError):
        ScanSpec("omega", 0, 1, 10)
    with pytest.raises(ValueError):
        ScanSpec("T", -0.1, 0.5, 10)


def test_red_off_gives_flat_trace():
    spec = ScanSpec("T", 0, 0.3, 16, system=SystemParams(omega_R=0.0), pulse=PulseShape(0.3),
                    fluctuations=FluctuationSpec(n_trajectories=10), lock_to_resonance=False)
    res = rabi_scan(spec)
    assert np.all(res.mean == 0.98) and np.all(res.stderr == 0)


def test_blue_off_gives_flat_spectrum():
    spec = ScanSpec("delta", -20, 20, 9, system=SystemParams(omega_B=0.0),
                    fluctuations=FluctuationSpec(n_trajectories=10), lock_to_resonance=False)
    res = spectrum_scan(spec)
    assert np.all(res.mean == 0.98)


def test_results_are_ordered_and_bounded():
    for res in (scans.rabi("a"), scans.spectrum("a")):
        assert np.all(np.diff(res.x) > 0)
        assert np.all((res.mean >= 0) & (res.mean <= 0.98))
        assert res.seed == 0


def test_rabi_scan_starts_at_recapture_factor():
    res = scans.rabi("a")
    assert res.x[0] == 0 and res.mean[0] == 0.98 and res.stderr[0] == 0


def test_rabi_fast_path_matches_separate_runs():
    res = scans.rabi("a")
    base = replace(scans.system("a"), delta_small=res.reference_detuning)
    fl = scans.fluctuations("a")
    for k in (7, 30):
        single = run_ensemble(base, PulseShape(float(res.x[k])), fl)
        assert single.mean == pytest.approx(res.mean[k], abs=1e-6)


def test_trapezoid_rabi_scan_runs_per_duration():
    fl = FluctuationSpec(n_trajectories=5)
    rect = ScanSpec("T", 0, 0.1, 6, pulse=PulseShape(0.1), fluctuations=fl)
    ramp = replace(rect, pulse=PulseShape(0.1, 0.01, "trapezoid"))
    a, b = rabi_scan(rect), rabi_scan(ramp)
    assert a.mean[0] == b.mean[0] == 0.98
    assert np.all(b.mean[1:3] > a.mean[1:3])  # soft edges transfer less at short times


def test_set_b_rabi_example():
    res = scans.rabi("b")
    fit = fitting.fit_damped_cosine(res.x, res.mean)
    assert fit["omega"] == pytest.approx(5.8, rel=0.10)
    assert abs(res.mean.min() - 0.20) <= 0.07


def test_set_c_rabi_example():
    res = scans.rabi("c")
    fit = fitting.fit_damped_cosine(res.x, res.mean)
    assert fit["omega"] == pytest.approx(4.9, rel=0.10)
    assert 0.640 <= fit["tau"] <= 1.180


def test_spectrum_single_dip_widths():
    noisy = fitting.fit_gaussian_dips(scans.spectrum("a").x, scans.spectrum("a").mean, 1)
    quiet_res = scans.spectrum("a", quiet=True)
    quiet = fitting.fit_gaussian_dips(quiet_res.x, quiet_res.mean, 1)
    assert 13 <= noisy.derived["fwhm1"] <= 19
    assert 12 <= quiet.derived["fwhm1"] <= 15
    assert quiet.derived["fwhm1"] < noisy.derived["fwhm1"]


def test_spectrum_centre_stable_when_trajectories_double():
    centres = []
    for n in (40, 80):
        spec = ScanSpec("delta", -40, 40, 41, system=scans.system("a"),
                        pulse=PulseShape(0.06), fluctuations=FluctuationSpec(n_trajectories=n, seed=1))
        res = spectrum_scan(spec)
        centres.append(fitting.fit_gaussian_dips(res.x, res.mean, 1)["nu1"])
    # all points share the trajectory draws, so the centre moves with the mean
    # detuning draw: its Monte Carlo spread is sigma_jitter / sqrt(n)
    bound = 3 * 6.0 / FWHM_PER_SIGMA / math.sqrt(40)
    assert abs(centres[0] - centres[1]) <= bound


# -- resonance finder -------------------------------------------------------------


def oracle_resonance(o_r, o_b, big):
    """Detuning maximising the Rydberg population after a pi pulse, from eigenvectors."""
    t_pi = 0.5 / (o_r * o_b / (2 * abs(big)))
    guess = resonance_estimate(o_r, o_b, big)
    span = 0.3 * abs(guess) + 3.0
    res = minimize_scalar(lambda d: -oracles.rydberg_trace([t_pi], o_r, o_b, big, d)[0],
                          bounds=(guess - span, guess + span), method="bounded",
                          options={"xatol": 1e-6})
    return res.x


@pytest.mark.parametrize("o_r,o_b,big", [(255, 24, 400), (80, 70, 600), (60, 30, -400)])
def test_resonance_matches_oracle(o_r, o_b, big):
    p = SystemParams(o_r, o_b, big, gamma_big=0, gamma_small=0)
    assert find_resonance(p) == pytest.approx(oracle_resonance(o_r, o_b, big), abs=0.05)


def test_resonance_light_shift_estimates():
    # the Rydberg level sits at -delta, so the line is at shift_r - shift_up
    d_a = find_resonance(SystemParams(255, 24, 400))
    assert d_a == pytest.approx(-(255**2 - 24**2) / (4 * 400), rel=0.20)
    d_c = find_resonance(SystemParams(80, 70, 600))
    assert abs(d_c - (-(80**2 - 70**2) / (4 * 600))) <= 0.5


def test_equal_couplings_cancel_light_shifts():
    d = find_resonance(SystemParams(100, 100, 600, gamma_big=0, gamma_small=0))
    assert abs(d) <= 0.5


def test_adiabatic_regime_agrees_with_estimate():
    rng = np.random.default_rng(4)
    for _ in range(3):
        o_r, o_b = rng.uniform(30, 120, 2)
        big = 6 * max(o_r, o_b)
        est = resonance_estimate(o_r, o_b, big)
        assert find_resonance(SystemParams(o_r, o_b, big)) == pytest.approx(est, rel=0.2, abs=0.3)


def test_no_resonance_without_lasers():
    with pytest.raises(NoResonance):
        find_resonance(SystemParams(omega_B=0.0))
    with pytest.raises(NoResonance):
        find_resonance(SystemParams(255, 1e-4, 400))


def test_no_resonance_for_flat_response(monkeypatch):
    monkeypatch.setattr(experiments, "_rydberg_population",
                        lambda base, probe, deltas, threads=1: np.full(len(deltas), 0.1))
    with pytest.raises(NoResonance):
        find_resonance(SystemParams())


def test_near_complete_transfer_without_loss():
    system = SystemParams(80, 70, 600, gamma_big=0, gamma_small=0)
    fl = replace(QUIET, pumping_efficiency=1.0)
    spec = ScanSpec("T", 0, 0.3, 61, system=system, pulse=PulseShape(0.3), fluctuations=fl)
    res = rabi_scan(spec)
    assert res.mean.min() <= 0.02 * fl.recapture_factor


def test_sudden_pulse_transfer_for_set_a_matches_oracle():
    system = SystemParams(255, 24, 400, gamma_big=0, gamma_small=0)
    fl = replace(QUIET, pumping_efficiency=1.0)
    spec = ScanSpec("T", 0, 0.3, 301, system=system, pulse=PulseShape(0.3), fluctuations=fl)
    res = rabi_scan(spec)
    rr = oracles.rydberg_trace(res.x, 255, 24, 400, res.reference_detuning)
    assert np.max(np.abs(res.mean - 0.98 * (1 - rr))) < 1e-4
