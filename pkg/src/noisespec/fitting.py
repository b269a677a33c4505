"""Least-squares estimation: noise-model parameters from a coherence curve,
stretched-exponential envelopes, revival combs, and Gaussian peak fits on
reconstructed spectra.

The noise-model fit wraps the forward dephasing model; the other fits are
nonlinear least squares on closed-form shapes.  All fits are deterministic
given identical inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.signal import find_peaks

from .errors import NumericError, ValidationError
from .filters import FilterFunction, cpmg_ff, dysco_ff
from .forward import AbscissaKind, CoherenceCurve
from .noise import NoiseSpectrum, composite
from .reconstruct import ReconstructedSpectrum

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FitResult:
    parameters: dict[str, float]
    units: dict[str, str]
    residual_norm: float
    covariance_diag: dict[str, float] | None
    converged: bool
    iterations: int
    metadata: dict = field(default_factory=dict, compare=False)

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]


def _ls_covariance(res, n_obs: int, names: tuple[str, ...]) -> dict[str, float] | None:
    n_par = res.x.size
    if n_obs <= n_par:
        return None
    try:
        jtj_inv = np.linalg.inv(res.jac.T @ res.jac)
    except np.linalg.LinAlgError:
        return None
    s2 = 2.0 * res.cost / (n_obs - n_par)
    return {k: float(max(v, 0.0))
            for k, v in zip(names, np.diag(jtj_inv) * s2)}


# ---------------------------------------------------------------------------
# noise-model parameters from a coherence curve
# ---------------------------------------------------------------------------

_NOISE_PARAM_ORDER = ("gauss_delta", "gauss_sigma", "gauss_center",
                      "lorentz_delta", "lorentz_sigma")

# default box around the initial guess, per parameter (lo factor, hi factor);
# the line center stays near its guess because the coherence objective is
# quasi-periodic in it and distant centers alias onto other comb teeth
_DEFAULT_BOUND_FACTORS = {
    "gauss_delta": (0.05, 20.0),
    "gauss_sigma": (0.1, 5.0),
    "gauss_center": (1.0 / 3.0, 1.3),
    "lorentz_delta": (0.05, 20.0),
    "lorentz_sigma": (0.05, 20.0),
}


def _spectrum_from(params: np.ndarray) -> NoiseSpectrum:
    gd, gs, gc, ld, ls = params
    return composite(gauss_delta=gd, gauss_sigma=gs, gauss_center=gc,
                     lorentz_delta=ld, lorentz_sigma=ls)


class _ChiTable:
    """Fixed quadrature grids, one per curve point.

    Every point's grid is the union of its filter's default grid, a linear
    section fine enough to resolve the filter oscillation across the window
    where the spectral line can sit, and a short geometric tail.  The grids
    are concatenated so one model evaluation is a single vectorized spectrum
    call followed by segmented dot products.
    """

    def __init__(self, curve: CoherenceCurve, template_n: int,
                 window: tuple[float, float]) -> None:
        grids = []
        for t in curve.xs:
            ff = self._ff_for(curve, template_n, float(t))
            grid = self._grid_for(ff, float(t), window)
            vals = ff.evaluate(grid)
            w = np.empty_like(grid)
            w[1:-1] = 0.5 * (grid[2:] - grid[:-2])
            w[0] = 0.5 * (grid[1] - grid[0])
            w[-1] = 0.5 * (grid[-1] - grid[-2])
            grids.append((grid, vals * w * 0.5 * float(t)))
        self.omegas = np.concatenate([g for g, _ in grids])
        self.weights = np.concatenate([w for _, w in grids])
        self.offsets = np.concatenate(
            [[0], np.cumsum([g.size for g, _ in grids])[:-1]])
        self.data = np.asarray(curve.coherences, dtype=float)

    @staticmethod
    def _ff_for(curve: CoherenceCurve, n: int, t: float) -> FilterFunction:
        spec = curve.sequence
        if spec.family.pulsed:
            return cpmg_ff(n, t)
        return dysco_ff(replace(spec, duration=t) if spec.duration != t else spec)

    @staticmethod
    def _grid_for(ff: FilterFunction, t: float,
                  window: tuple[float, float]) -> np.ndarray:
        lo, hi = window
        # 16 samples per filter oscillation: trapezoid error then largely
        # cancels across periods under the slow spectral envelope
        step = math.pi / (8.0 * t)
        count = int((hi - lo) / step) + 2
        parts = [ff.omegas,
                 np.linspace(lo, hi, min(max(count, 32), 60_000)),
                 np.geomspace(hi, 6.0 * hi, 33)]
        grid = np.unique(np.concatenate(parts))
        return grid[grid > 0.0]

    def model_chis(self, params: np.ndarray) -> np.ndarray:
        integrand = self.weights * _spectrum_from(params)(self.omegas)
        return np.add.reduceat(integrand, self.offsets)

    def model_coherences(self, params: np.ndarray) -> np.ndarray:
        return np.exp(-self.model_chis(params))


def _noise_window(initial: np.ndarray,
                  bounds: dict[str, tuple[float, float]]) -> tuple[float, float]:
    c_lo, c_hi = bounds["gauss_center"]
    s_hi = bounds["gauss_sigma"][1]
    return max(0.25 * c_lo - 2.0 * s_hi, 1e-6 * initial[2]), c_hi + 8.0 * s_hi


def fit_noise_params(curve: CoherenceCurve, template_n: int | None = None,
                     initial: dict[str, float] | None = None,
                     bounds: dict[str, tuple[float, float]] | None = None,
                     max_iterations: int = 2000,
                     rel_tol: float = 1e-8) -> FitResult:
    """Fit the two-component noise model to one pulse-train curve.

    Minimizes the sum of squared coherence mismatches over gauss_delta,
    gauss_sigma, gauss_center, lorentz_delta, lorentz_sigma (rad/s) with a
    bounded Nelder-Mead search, restarted on stall.  Because the objective
    is quasi-periodic in the line center, the center is first located by a
    one-dimensional scan over its bounded range before the joint search.

    ``bounds`` maps parameter names to (lo, hi); missing entries get a
    default box around the initial guess.
    """
    if curve.abscissa_kind is not AbscissaKind.TIME:
        raise ValidationError("noise-model fit expects a TIME curve")
    if initial is None:
        raise ValidationError("noise-model fit needs an initial guess")
    missing = [k for k in _NOISE_PARAM_ORDER if k not in initial]
    if missing:
        raise ValidationError(f"initial guess missing {missing}")
    if template_n is None:
        if not curve.sequence.family.pulsed:
            raise ValidationError("noise-model fit expects a pulse-train curve")
        template_n = curve.sequence.n_pulses
    x0 = np.array([float(initial[k]) for k in _NOISE_PARAM_ORDER])
    if np.any(x0 <= 0.0):
        raise ValidationError("initial noise parameters must be positive")
    box: dict[str, tuple[float, float]] = {}
    for i, name in enumerate(_NOISE_PARAM_ORDER):
        lo_f, hi_f = _DEFAULT_BOUND_FACTORS[name]
        lo, hi = (bounds or {}).get(name, (lo_f * x0[i], hi_f * x0[i]))
        if not lo <= x0[i] <= hi:
            raise ValidationError(f"initial {name} outside its bounds")
        box[name] = (float(lo), float(hi))

    table = _ChiTable(curve, int(template_n), _noise_window(x0, box))
    evals = 0

    def cost(scaled: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        r = table.model_coherences(scaled * x0) - table.data
        return float(r @ r)

    # comb-alignment scan over the line center.  The dephasing exponent is
    # linear in the squared couplings, so for each candidate center one
    # global power rescale alpha is optimized on the cached exponents; this
    # keeps an amplitude-biased guess from masking the alignment signal.
    c_lo, c_hi = box["gauss_center"]
    centers = np.linspace(c_lo, c_hi, 49)
    centers = np.sort(np.append(centers, x0[2]))
    log_alphas = np.linspace(math.log(1e-2), math.log(1e2), 81)
    alphas = np.exp(log_alphas)
    best_center, best_alpha, best_scan = x0[2], 1.0, math.inf
    params = x0.copy()
    for c in centers:
        params[2] = c
        chis = table.model_chis(params)
        evals += 1
        r = np.exp(-alphas[:, None] * chis[None, :]) - table.data[None, :]
        costs = np.einsum("ij,ij->i", r, r)
        j = int(np.argmin(costs))
        if costs[j] < best_scan:
            best_scan, best_center, best_alpha = float(costs[j]), c, alphas[j]

    scaled_bounds = [(box[k][0] / x0[i], box[k][1] / x0[i])
                     for i, k in enumerate(_NOISE_PARAM_ORDER)]
    root = math.sqrt(best_alpha)
    start = np.array([root, 1.0, best_center / x0[2], root, 1.0])
    start = np.clip(start, [b[0] for b in scaled_bounds],
                    [b[1] for b in scaled_bounds])
    best, best_cost = start, cost(start)
    iterations = 0
    converged = False
    for _attempt in range(3):
        res = minimize(cost, best, method="Nelder-Mead", bounds=scaled_bounds,
                       options={"maxiter": max_iterations,
                                "xatol": rel_tol,
                                "fatol": rel_tol * max(best_cost, 1e-30),
                                "adaptive": True})
        iterations += res.nit
        stalled = res.fun >= best_cost * (1.0 - 1e-12)
        if res.fun < best_cost:
            best, best_cost = res.x, res.fun
        if res.success:
            converged = True
            break
        if stalled:
            break
    params = best * x0

    def residuals(scaled: np.ndarray) -> np.ndarray:
        return table.model_coherences(scaled * x0) - table.data

    cov = _fd_covariance(residuals, best, x0, table.data.size)
    return FitResult(
        parameters=dict(zip(_NOISE_PARAM_ORDER, params.tolist())),
        units={k: "rad/s" for k in _NOISE_PARAM_ORDER},
        residual_norm=math.sqrt(best_cost),
        covariance_diag=cov, converged=converged, iterations=iterations,
        metadata={"n_points": table.data.size, "n_evaluations": evals,
                  "scanned_center": best_center,
                  "scanned_power_scale": best_alpha})


def _fd_covariance(residuals, x: np.ndarray, scale: np.ndarray,
                   n_obs: int) -> dict[str, float] | None:
    n_par = x.size
    if n_obs <= n_par:
        return None
    r0 = residuals(x)
    jac = np.empty((r0.size, n_par))
    h = 1e-6
    for j in range(n_par):
        xp = x.copy()
        xp[j] += h
        jac[:, j] = (residuals(xp) - r0) / h
    try:
        jtj_inv = np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return None
    dof = n_obs - n_par
    s2 = float(r0 @ r0) / dof
    diag = np.diag(jtj_inv) * s2 * scale ** 2
    return {k: float(max(v, 0.0)) for k, v in zip(_NOISE_PARAM_ORDER, diag)}


# ---------------------------------------------------------------------------
# stretched-exponential envelope
# ---------------------------------------------------------------------------

def fit_envelope(times: np.ndarray, coherences: np.ndarray,
                 initial_t2: float | None = None,
                 initial_power: float = 1.5,
                 fix_power: float | None = None) -> FitResult:
    """Fit C(t) = exp(-(t/T2)^p), with p in (0, 4].

    ``fix_power`` freezes the exponent and fits T2 alone.
    """
    times = np.asarray(times, dtype=float)
    cs = np.asarray(coherences, dtype=float)
    if times.size != cs.size or times.size < 4:
        raise ValidationError("envelope fit needs >= 4 matched points")
    if np.any(times <= 0.0):
        raise ValidationError("envelope fit needs positive times")
    if np.any(cs <= 0.0) or np.any(cs > 1.0 + 1e-12):
        raise ValidationError("envelope fit expects coherences in (0, 1]")
    degenerate = bool(np.ptp(cs) < 1e-6)
    if initial_t2 is None:
        below = times[cs < math.exp(-1.0)]
        initial_t2 = float(below[0]) if below.size else float(times[-1])

    if fix_power is not None:
        if not 0.0 < fix_power <= 4.0:
            raise ValidationError("fix_power must lie in (0, 4]")

        def model1(x):
            return np.exp(-np.power(times / x[0], fix_power))

        res = least_squares(lambda x: model1(x) - cs, x0=[initial_t2],
                            bounds=([1e-12], [np.inf]))
        t2, p = float(res.x[0]), float(fix_power)
        cov = None if degenerate else _ls_covariance(res, cs.size, ("t2",))
    else:
        def model2(x):
            return np.exp(-np.power(times / x[0], x[1]))

        res = least_squares(lambda x: model2(x) - cs,
                            x0=[initial_t2, initial_power],
                            bounds=([1e-12, 1e-3], [np.inf, 4.0]))
        t2, p = float(res.x[0]), float(res.x[1])
        cov = None if degenerate else _ls_covariance(res, cs.size, ("t2", "power"))
    return FitResult(parameters={"t2": t2, "power": p},
                     units={"t2": "s", "power": "1"},
                     residual_norm=float(np.linalg.norm(res.fun)),
                     covariance_diag=cov, converged=bool(res.success),
                     iterations=int(res.nfev),
                     metadata={"degenerate": degenerate,
                               "power_fixed": fix_power is not None})


# ---------------------------------------------------------------------------
# revival comb
# ---------------------------------------------------------------------------

def fit_revival_comb(times: np.ndarray, coherences: np.ndarray,
                     n_revivals: int = 7) -> FitResult:
    """Fit an envelope-damped comb of Gaussian revivals.

    C(t) = exp(-(t * r)^p) * sum_{i=0}^{n-1} exp(-(t - i * t_rev)^2 / 2 w^2)

    The envelope is parameterized by the rate r = 1/T2 so that r = 0 (no
    decay) is an ordinary boundary point rather than an infinite parameter.
    """
    times = np.asarray(times, dtype=float)
    cs = np.asarray(coherences, dtype=float)
    if times.size != cs.size or times.size < 8:
        raise ValidationError("comb fit needs >= 8 matched points")
    peaks, _ = find_peaks(cs, height=0.02 * float(np.max(cs)))
    # t = 0 is a comb tooth but never a local max of the sampled curve
    if times[0] < 0.1 * (times[1] - times[0]) or cs[0] >= np.max(cs) * 0.5:
        peaks = np.unique(np.concatenate([[0], peaks]))
    if peaks.size < 3:
        raise ValidationError("need at least three visible revivals to fit "
                              "the comb spacing")
    t_peaks = times[peaks]
    spacing0 = float(np.median(np.diff(t_peaks)))
    width0 = 0.2 * spacing0
    rate0 = 1.0 / float(times[-1])

    idx = np.arange(n_revivals)

    def model(x):
        rate, p, t_rev, w = x
        centers = idx * t_rev
        comb = np.exp(-(times[:, None] - centers[None, :]) ** 2
                      / (2.0 * w ** 2)).sum(axis=1)
        return np.exp(-np.power(times * rate, p)) * comb

    res = least_squares(
        lambda x: model(x) - cs,
        x0=[rate0, 1.5, spacing0, width0],
        bounds=([0.0, 0.1, 0.25 * spacing0, 1e-12],
                [np.inf, 6.0, 4.0 * spacing0, spacing0]))
    if not res.success:
        raise NumericError("revival-comb fit did not converge")
    rate, p, t_rev, w = res.x
    t2 = 1.0 / rate if rate > 0.0 else math.inf
    names = ("rate", "power", "revival_time", "revival_width")
    cov = _ls_covariance(res, cs.size, names)
    return FitResult(
        parameters={"t2": float(t2), "power": float(p),
                    "revival_time": float(t_rev), "revival_width": float(w)},
        units={"t2": "s", "power": "1", "revival_time": "s",
               "revival_width": "s"},
        residual_norm=float(np.linalg.norm(res.fun)),
        covariance_diag=cov,
        converged=True, iterations=int(res.nfev),
        metadata={"n_peaks_found": int(peaks.size)})


# ---------------------------------------------------------------------------
# Gaussian peak on a reconstructed spectrum
# ---------------------------------------------------------------------------

def fit_gaussian_peak(spectrum: ReconstructedSpectrum,
                      window: tuple[float, float] | None = None) -> FitResult:
    """Fit amp * exp(-(w - center)^2 / 2 width^2) + offset inside ``window``.

    ``window`` is (lo, hi) in Hz; the whole band by default.  Results are in
    Hz with the width reported as the Gaussian 1 sigma.  The fit runs in
    coordinates centered on the observed maximum, so translating the input
    frequency axis translates the fitted center by exactly the same amount.
    """
    keep = spectrum.valid & np.isfinite(spectrum.values)
    w_all = spectrum.omegas[keep]
    v_all = spectrum.values[keep]
    u_all = spectrum.uncertainties[keep]
    if window is not None:
        lo, hi = window
        sel = (w_all >= lo * _TWO_PI) & (w_all <= hi * _TWO_PI)
        w_all, v_all, u_all = w_all[sel], v_all[sel], u_all[sel]
    if w_all.size < 5:
        raise ValidationError("peak fit needs >= 5 valid points in the window")
    i0 = int(np.argmax(v_all))
    if i0 == 0 or i0 == w_all.size - 1:
        raise ValidationError("no interior peak in the fit window")
    pivot = w_all[i0]
    x = w_all - pivot
    amp0 = float(v_all[i0] - np.min(v_all))
    off0 = float(np.min(v_all))
    span = float(w_all[-1] - w_all[0])
    width0 = 0.1 * span

    def model(p):
        amp, center, width, off = p
        return amp * np.exp(-((x - center) ** 2) / (2.0 * width ** 2)) + off

    finite_u = u_all[np.isfinite(u_all) & (u_all > 0.0)]
    weights = None
    if finite_u.size == u_all.size and finite_u.size:
        floor = max(float(np.max(u_all)) * 1e-3, 1e-30)
        weights = 1.0 / np.maximum(u_all, floor)

    def resid(p):
        r = model(p) - v_all
        return r if weights is None else r * weights

    res = least_squares(resid, x0=[amp0, 0.0, width0, off0],
                        bounds=([0.0, -span, 1e-30, -np.inf],
                                [np.inf, span, span, np.inf]))
    amp, center, width, off = res.x
    names = ("amplitude", "center_hz", "width_hz", "offset")
    cov = _ls_covariance(res, v_all.size, names)
    if cov is not None:
        for key in ("center_hz", "width_hz"):
            cov[key] = cov[key] / _TWO_PI ** 2
    return FitResult(
        parameters={"amplitude": float(amp),
                    "center_hz": float((pivot + center) / _TWO_PI),
                    "width_hz": float(abs(width) / _TWO_PI),
                    "offset": float(off)},
        units={"amplitude": "rad/s", "center_hz": "Hz", "width_hz": "Hz",
               "offset": "rad/s"},
        residual_norm=float(np.linalg.norm(res.fun)),
        covariance_diag=cov, converged=bool(res.success),
        iterations=int(res.nfev), metadata={"pivot_hz": pivot / _TWO_PI})
