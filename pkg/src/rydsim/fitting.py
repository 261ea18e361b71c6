"""Levenberg-Marquardt least squares and the models used on scan data.

Models
------
damped cosine     y = A - B exp(-T/tau) cos(2 pi f T)           (T in us, f in MHz)
gaussian dips     y = A - sum_i B_i exp(-(x - nu_i)^2 / (2 s_i^2))
exponential decay y = y_bg + A exp(-t/tau)
beam profile      y = rate0 exp(-2 (x - x0)^2 / w^2)

Strictly positive scales (tau, s_i, w) are fitted through their logarithm
and transformed back, standard errors included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoOscillation, SingularJacobian

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

JAC_REL_STEP = 1e-6
XTOL = 1e-10
GTOL = 1e-12
MAX_ITER = 500
RCOND = 1e-10


@dataclass
class FitResult:
    names: tuple
    values: np.ndarray
    errors: np.ndarray
    rss: float
    iterations: int
    converged: bool
    grad_norm: float = 0.0
    derived: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def error(self, name):
        return float(self.errors[self.names.index(name)])

    def as_dict(self):
        out = {}
        for n, v, e in zip(self.names, self.values, self.errors):
            out[n] = float(v)
            out[f"{n}_err"] = float(e)
        out.update(self.derived)
        return out


def _jacobian(fun, p, f0_shape):
    J = np.empty(f0_shape + (p.size,))
    for j in range(p.size):
        h = JAC_REL_STEP * max(abs(p[j]), 1.0)
        up = p.copy()
        dn = p.copy()
        up[j] += h
        dn[j] -= h
        J[:, j] = (fun(up) - fun(dn)) / (up[j] - dn[j])
    return J


def _check_rank(J):
    sv = np.linalg.svd(J, compute_uv=False)
    if sv.size == 0 or sv[0] == 0 or sv[-1] <= RCOND * sv[0]:
        cond = math.inf if sv.size == 0 or sv[-1] == 0 else sv[0] / sv[-1]
        raise SingularJacobian(f"Jacobian is rank deficient (condition number {cond:.3g})")


def _polish(resid, pred, p, r, cost, shape, steps=3):
    """Undamped Gauss-Newton steps at the end of a converged run.

    Near the minimum the cost is flat to rounding, so damped steps stall a
    little short of the stationary point; a full Gauss-Newton step reaches
    it. A step is kept unless it raises the cost beyond rounding.
    """
    slack = 1 + 64 * np.finfo(np.float64).eps
    for _ in range(steps):
        J = _jacobian(pred, p, shape)
        dp = np.linalg.lstsq(J, r, rcond=None)[0]
        r_new = resid(p + dp)
        cost_new = float(r_new @ r_new)
        if not (np.isfinite(cost_new) and cost_new <= cost * slack):
            break
        p, r, cost = p + dp, r_new, cost_new
        if np.linalg.norm(dp) <= XTOL * XTOL * (np.linalg.norm(p) + 1.0):
            break
    return p, r, cost


def least_squares(model, x, y, p0, sigma=None, names=None, max_iter=MAX_ITER) -> FitResult:
    """Fit ``model(params, x)`` to ``y``.

    With ``sigma`` the residuals are weighted by ``1/sigma`` and the
    covariance is taken as absolute; without it the covariance is scaled by
    the reduced chi-square. If ``max_iter`` is exhausted the best point so
    far is returned with ``converged=False``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = np.array(p0, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must have the same length")
    if y.size < p.size:
        raise ValueError("need at least as many points as parameters")
    if not np.all(np.isfinite(p)):
        raise ValueError("initial parameters must be finite")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=np.float64)
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(p.size))

    def resid(q):
        return (y - model(q, x)) * w

    def pred(q):
        return model(q, x) * w

    r = resid(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        J = _jacobian(pred, p, y.shape)
        _check_rank(J)
        g = J.T @ r
        gnorm = float(np.linalg.norm(g))
        if gnorm < GTOL or cost == 0.0:
            converged = True
            break
        A = J.T @ J
        diag = np.diag(A).copy()
        accepted = False
        while lam < 1e16:
            try:
                dp = np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            p_new = p + dp
            r_new = resid(p_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no downhill step at any damping: stationary to working precision
            converged = True
            break
        small = np.linalg.norm(dp) <= XTOL * (np.linalg.norm(p) + XTOL)
        p, r, cost = p_new, r_new, cost_new
        lam = max(lam / 10, 1e-15)
        if small:
            converged = True
            break

    if converged:
        p, r, cost = _polish(resid, pred, p, r, cost, y.shape)
    J = _jacobian(pred, p, y.shape)
    _check_rank(J)
    gnorm = float(np.linalg.norm(J.T @ r))
    cov = np.linalg.inv(J.T @ J)
    dof = y.size - p.size
    if sigma is None:
        cov = cov * (cost / dof if dof > 0 else 0.0)
    errors = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(names, p, errors, cost, it, converged, gnorm)


def _exp_back(result: FitResult, log_names: dict) -> FitResult:
    """Map log-parameters back to their positive originals."""
    names = list(result.names)
    values = result.values.copy()
    errors = result.errors.copy()
    for log_name, name in log_names.items():
        i = names.index(log_name)
        values[i] = math.exp(values[i])
        errors[i] = values[i] * errors[i]
        names[i] = name
    return FitResult(
        tuple(names), values, errors, result.rss, result.iterations,
        result.converged, result.grad_norm,
    )


# -- damped cosine ------------------------------------------------------------


def damped_cosine(T, A, B, tau, freq):
    """A - B exp(-T/tau) cos(2 pi freq T); T in us, freq in MHz."""
    T = np.asarray(T, dtype=np.float64)
    return A - B * np.exp(-T / tau) * np.cos(2 * math.pi * freq * T)


def _dft_scan(x, y, fmin=0.5, fmax=30.0, n=600):
    freqs = np.linspace(fmin, fmax, n)
    yc = y - y.mean()
    phase = np.exp(-2j * math.pi * np.outer(freqs, x))
    return freqs, np.abs(phase @ yc)


def fit_damped_cosine(x, y, sigma=None) -> FitResult:
    """Fit a damped Rabi oscillation; reports ``omega`` as Omega / 2 pi in MHz."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 8:
        raise ValueError("need at least 8 points")
    span = float(x.max() - x.min())
    freqs, mag = _dft_scan(x, y)
    k = int(np.argmax(mag))
    floor = float(np.median(mag))
    scale = max(1.0, float(np.abs(y).max())) * y.size
    if mag[k] <= 1e-12 * scale or mag[k] < 3.0 * floor:
        raise NoOscillation(
            f"spectral peak {mag[k]:.3g} is below 3x the noise floor {floor:.3g}"
        )
    A0 = float(y.mean())
    B0 = (float(y.max()) - float(y.min())) / 2
    # recapture traces start high: the cosine enters with negative amplitude
    if y[np.argmin(x)] > A0:
        B0 = -B0
    p0 = [A0, B0, math.log(span / 2), freqs[k]]

    def model(p, t):
        return damped_cosine(t, p[0], p[1], math.exp(p[2]), p[3])

    fit = least_squares(model, x, y, p0, sigma, names=("A", "B", "log_tau", "omega"))
    fit = _exp_back(fit, {"log_tau": "tau"})
    if fit["omega"] < 0:
        fit.values[fit.names.index("omega")] *= -1
    return fit


# -- gaussian dips ------------------------------------------------------------


def gaussian_dips(x, A, dips):
    """A - sum B_i exp(-(x - nu_i)^2 / (2 s_i^2)); ``dips`` is [(B, nu, s), ...]."""
    x = np.asarray(x, dtype=np.float64)
    out = np.full_like(x, A)
    for B, nu, s in dips:
        out = out - B * np.exp(-((x - nu) ** 2) / (2 * s * s))
    return out


def _dip_guess(x, y, base):
    depth = base - y
    i = int(np.argmax(depth))
    B = float(depth[i])
    half = depth >= B / 2
    # contiguous run around the minimum
    lo = i
    while lo > 0 and half[lo - 1]:
        lo -= 1
    hi = i
    while hi < x.size - 1 and half[hi + 1]:
        hi += 1
    width = max(float(x[hi] - x[lo]), float(np.min(np.diff(np.sort(x)))))
    return B, float(x[i]), width / FWHM_PER_SIGMA


def fit_gaussian_dips(x, y, n_dips=1, sigma=None) -> FitResult:
    """Fit one or two Gaussian dips on a flat background.

    Derived quantities: ``fwhm_i`` for each dip and, with two dips,
    ``separation`` between the centres. Widths are independent.
    """
    if n_dips not in (1, 2):
        raise ValueError("n_dips must be 1 or 2")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 5 * n_dips + 1:
        raise ValueError(f"need at least {5 * n_dips + 1} points")
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    edge = max(1, xs.size // 10)
    A0 = float(np.median(np.concatenate([ys[:edge], ys[-edge:]])))
    guesses = [_dip_guess(xs, ys, A0)]
    if n_dips == 2:
        B1, nu1, s1 = guesses[0]
        rest = ys + B1 * np.exp(-((xs - nu1) ** 2) / (2 * s1 * s1))
        guesses.append(_dip_guess(xs, np.minimum(rest, A0), A0))
        guesses.sort(key=lambda g: g[1])

    p0 = [A0]
    names = ["A"]
    logs = {}
    for i, (B, nu, s) in enumerate(guesses, start=1):
        p0 += [B, nu, math.log(s)]
        names += [f"B{i}", f"nu{i}", f"log_s{i}"]
        logs[f"log_s{i}"] = f"s{i}"

    def model(p, xx):
        dips = [(p[1 + 3 * i], p[2 + 3 * i], math.exp(p[3 + 3 * i])) for i in range(n_dips)]
        return gaussian_dips(xx, p[0], dips)

    fit = _exp_back(least_squares(model, x, y, p0, sigma, names=names), logs)
    for i in range(1, n_dips + 1):
        fit.derived[f"fwhm{i}"] = FWHM_PER_SIGMA * fit[f"s{i}"]
        fit.derived[f"fwhm{i}_err"] = FWHM_PER_SIGMA * fit.error(f"s{i}")
    if n_dips == 2:
        fit.derived["separation"] = abs(fit["nu1"] - fit["nu2"])
        fit.derived["separation_err"] = math.hypot(fit.error("nu1"), fit.error("nu2"))
    return fit


# -- exponential decay ---------------------------------------------------------


def exp_decay(t, y_bg, A, tau):
    return y_bg + A * np.exp(-np.asarray(t, dtype=np.float64) / tau)


def fit_exp_decay(t, y, sigma=None) -> FitResult:
    """Fit ``y_bg + A exp(-t/tau)``, with t measured from illumination start."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.size < 4:
        raise ValueError("need at least 4 points")
    order = np.argsort(t)
    ts, ys = t[order], y[order]
    tail = max(1, ts.size // 8)
    y_bg = float(np.mean(ys[-tail:]))
    A0 = float(ys[0] - y_bg)
    span = float(ts[-1] - ts[0])
    tau0 = span / 3
    if A0 != 0:
        target = y_bg + A0 / math.e
        crossed = np.flatnonzero((ys - target) * np.sign(A0) <= 0)
        if crossed.size and ts[crossed[0]] > ts[0]:
            tau0 = float(ts[crossed[0]] - ts[0])

    def model(p, tt):
        return exp_decay(tt, p[0], p[1], math.exp(p[2]))

    fit = least_squares(model, t, y, [y_bg, A0, math.log(tau0)], sigma,
                        names=("y_bg", "A", "log_tau"))
    return _exp_back(fit, {"log_tau": "tau"})


# -- gaussian beam profile ----------------------------------------------------


def beam_profile(x, rate0, x0, w):
    x = np.asarray(x, dtype=np.float64)
    return rate0 * np.exp(-2.0 * (x - x0) ** 2 / (w * w))


def fit_beam_waist(position, rate, sigma=None) -> FitResult:
    """Fit a Gaussian intensity profile; ``w`` is the 1/e^2 radius."""
    x = np.asarray(position, dtype=np.float64)
    y = np.asarray(rate, dtype=np.float64)
    if x.size < 5:
        raise ValueError("need at least 5 positions")
    i = int(np.argmax(y))
    rate0 = float(y[i])
    wts = np.clip(y - y.min(), 0.0, None)
    if wts.sum() > 0:
        x0 = float(np.sum(wts * x) / wts.sum())
        var = float(np.sum(wts * (x - x0) ** 2) / wts.sum())
        w0 = 2.0 * math.sqrt(var) if var > 0 else float(np.ptp(x)) / 2
    else:
        x0 = float(x[i])
        w0 = float(np.ptp(x)) / 2
    w0 = max(w0, float(np.ptp(x)) / (4 * x.size))

    def model(p, xx):
        return beam_profile(xx, p[0], p[1], math.exp(p[2]))

    fit = least_squares(model, x, y, [rate0, x0, math.log(w0)], sigma,
                        names=("rate0", "x0", "log_w"))
    return _exp_back(fit, {"log_w": "w"})
