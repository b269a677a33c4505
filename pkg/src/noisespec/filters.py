"""Frequency-domain filter functions of sensitivity traces.

The normalized filter function used throughout is

    FF(omega) = |F_t[s]|^2 / (pi * t),   F_t[s] = integral_0^t s(t') e^{i omega t'} dt'

so that integral_0^inf FF(omega) d omega equals the mean square of s(t)
(Parseval); a full-contrast pulsed train therefore integrates to 1.  The
dephasing exponent is chi = (t/2) * integral S(omega) FF(omega) d omega.

Closed forms exist for the pulsed train (even/odd pulse counts differ only in
one trig factor, and the removable cos singularities are evaluated by a tiny
relative nudge of the abscissa) and for the continuous carriers (squared-sinc
and Gaussian line shapes).  :func:`numeric_ff` recomputes FF from a sampled
trace, which is the cross-check path the analytic forms are tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import ValidationError
from .sequences import Family, SensitivityTrace, SequenceSpec

_POLE_NUDGE = 1e-9  # relative abscissa shift at removable singularities
_TWO_PI = 2.0 * math.pi


class FFSource(str, Enum):
    ANALYTIC_CPMG = "analytic_cpmg"
    ANALYTIC_DYSCO = "analytic_dysco"
    ANALYTIC_GDYSCO = "analytic_gdysco"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class FilterFunction:
    """Tabulated FF(omega) with an optional exact evaluator.

    ``omegas`` are angular frequencies (rad/s, strictly increasing, > 0);
    ``values`` carry units of seconds.  Analytic families attach a vectorized
    evaluator used for off-grid queries; numeric tables fall back to linear
    interpolation (zero outside the grid).  ``tail_coefficient`` scales the
    1/omega^2 envelope used for coverage estimates past the grid.
    """

    omegas: np.ndarray
    values: np.ndarray
    duration: float
    source: FFSource
    evaluator: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, repr=False, compare=False)
    tail_coefficient: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.omegas.ndim != 1 or self.omegas.shape != self.values.shape:
            raise ValidationError("omegas and values must be 1-d arrays of equal length")
        if self.omegas.size < 8:
            raise ValidationError("filter-function grid needs at least 8 points")
        if self.omegas[0] <= 0.0 or np.any(np.diff(self.omegas) <= 0.0):
            raise ValidationError("omegas must be strictly increasing and positive")
        if np.any(self.values < 0.0) or not np.all(np.isfinite(self.values)):
            raise ValidationError("FF values must be finite and non-negative")

    def evaluate(self, omega: np.ndarray | float) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        if self.evaluator is not None:
            return self.evaluator(w)
        return np.interp(w, self.omegas, self.values, left=0.0, right=0.0)

    def tail_envelope(self, omega: np.ndarray) -> np.ndarray:
        """Upper estimate of FF beyond the tabulated grid (1/omega^2 decay)."""
        w = np.asarray(omega, dtype=float)
        if self.source is FFSource.ANALYTIC_GDYSCO:
            return self.evaluate(w)
        return self.tail_coefficient / np.maximum(w, 1e-300) ** 2

    def total_area(self) -> float:
        return float(np.trapezoid(self.values, self.omegas))


# ---------------------------------------------------------------------------
# pulsed (CPMG / Hahn) closed form
# ---------------------------------------------------------------------------

def _cpmg_values(omega: np.ndarray, n: int, t: float) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    z = w * t
    den = np.cos(z / (2.0 * n))
    bad = np.abs(den) < 1e-7
    if np.any(bad):
        z = np.where(bad, z * (1.0 + _POLE_NUDGE) + _POLE_NUDGE, z)
        den = np.cos(z / (2.0 * n))
    if n % 2 == 0:
        num = np.sin(z / 2.0)
    else:
        num = np.cos(z / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (16.0 / (math.pi * t)) * np.sin(z / (4.0 * n)) ** 4 \
            * (num / den) ** 2 / np.maximum(w, 1e-300) ** 2
    return np.where(w > 0.0, out, 0.0)


def default_cpmg_omegas(n_pulses: int, duration: float,
                        z_max: float | None = None) -> np.ndarray:
    """Default angular-frequency grid for an n-pulse filter of length t.

    Linear spacing pi/8 in z = omega*t resolves every comb lobe out to
    ``z_max`` (default 40*n); an 8x denser window around the principal lobe
    keeps >= 50 samples inside its FWHM for peak statistics.
    """
    if z_max is None:
        z_max = 40.0 * n_pulses
    base = np.arange(0.05, z_max, math.pi / 8.0)
    lo = max(0.05, (n_pulses - 3.5) * math.pi)
    hi = min(z_max, (n_pulses + 3.5) * math.pi)
    fine = np.arange(lo, hi, math.pi / 64.0)
    head = np.geomspace(0.01, 0.05, 8, endpoint=False)
    z = np.unique(np.concatenate([head, base, fine]))
    return z / duration


def cpmg_ff(n_pulses: int, duration: float,
            omegas: np.ndarray | None = None) -> FilterFunction:
    """Closed-form filter function of an n-pulse train of total length t.

    Parameters
    ----------
    n_pulses : int
        Number of pi pulses (1 reproduces the single-echo filter).
    duration : float
        Total evolution time t = 2 * n_pulses * tau_free, seconds.
    omegas : array, optional
        Evaluation grid (rad/s); a comb-resolving default is built otherwise.
    """
    if n_pulses < 1 or int(n_pulses) != n_pulses:
        raise ValidationError("n_pulses must be a positive integer")
    if duration <= 0.0:
        raise ValidationError("duration must be positive")
    n, t = int(n_pulses), float(duration)
    if omegas is None:
        omegas = default_cpmg_omegas(n, t)
    omegas = np.asarray(omegas, dtype=float)
    values = _cpmg_values(omegas, n, t)
    # comb lobes average ~0.4*omega0/w^2 of area density; keep a 2x cushion
    tail = 1.0 * (math.pi * n / t)
    return FilterFunction(omegas, values, t, FFSource.ANALYTIC_CPMG,
                          evaluator=lambda w: _cpmg_values(w, n, t),
                          tail_coefficient=tail)


# ---------------------------------------------------------------------------
# continuous carriers
# ---------------------------------------------------------------------------

def _sinc_sq(x: np.ndarray) -> np.ndarray:
    return np.sinc(x / math.pi) ** 2


def _dysco_values(omega: np.ndarray, w0: float, t: float, amp: float) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    return (amp * amp * t / (4.0 * math.pi)) * _sinc_sq((w - w0) * t / 2.0)


def _gdysco_values(omega: np.ndarray, w0: float, t: float, sigma: float,
                   amp: float) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    scale = amp * amp * sigma * sigma * math.erf(t / (2.0 * sigma)) / (2.0 * t)
    return scale * np.exp(-(sigma * (w - w0)) ** 2)


def default_continuous_omegas(spec: SequenceSpec, span: float = 20.0,
                              points: int = 2000) -> np.ndarray:
    """Linear grid of ``points`` samples across f0 +/- span/duration."""
    w0 = _TWO_PI * spec.mod_frequency
    half = _TWO_PI * span / spec.duration
    lo = max(w0 - half, 1e-6 * w0)
    return np.linspace(lo, w0 + half, points)


def dysco_ff(spec: SequenceSpec, omegas: np.ndarray | None = None) -> FilterFunction:
    """Analytic filter function of a continuous carrier sweep point.

    DYSCO gives a squared sinc centered on the modulation frequency with
    nulls spaced 1/duration; GDYSCO gives a Gaussian line whose width is set
    by the envelope.  Both are scaled so the total area equals the trace mean
    square (0.5 resp. ~0.147 at unit amplitude).
    """
    if spec.family.pulsed:
        raise ValidationError("dysco_ff needs a continuous-family spec")
    t = spec.duration
    w0 = _TWO_PI * spec.mod_frequency
    if omegas is None:
        omegas = default_continuous_omegas(spec)
    omegas = np.asarray(omegas, dtype=float)
    if spec.family is Family.GDYSCO:
        sig, amp = spec.envelope_sigma, spec.amplitude
        ev = lambda w: _gdysco_values(w, w0, t, sig, amp)  # noqa: E731
        src = FFSource.ANALYTIC_GDYSCO
        tail = 0.0
    else:
        amp = spec.amplitude
        ev = lambda w: _dysco_values(w, w0, t, amp)  # noqa: E731
        src = FFSource.ANALYTIC_DYSCO
        # sinc^2(x) <= 1/x^2, evaluated a few lobes past the grid edge
        tail = amp * amp / (math.pi * t)
    return FilterFunction(omegas, ev(omegas), t, src, evaluator=ev,
                          tail_coefficient=tail)


# ---------------------------------------------------------------------------
# numeric transform of a sampled trace
# ---------------------------------------------------------------------------

def _segment_transform(edges: np.ndarray, seg_values: np.ndarray,
                       omegas: np.ndarray) -> np.ndarray:
    # F(w) = sum_j v_j (e^{i w e_{j+1}} - e^{i w e_j}) / (i w), exact for steps
    coeff = np.empty(edges.size, dtype=float)
    coeff[0] = -seg_values[0]
    coeff[-1] = seg_values[-1]
    coeff[1:-1] = seg_values[:-1] - seg_values[1:]
    phase = np.exp(1j * np.outer(omegas, edges))
    return (phase @ coeff) / (1j * omegas)


def numeric_ff(trace: SensitivityTrace, omegas: np.ndarray) -> FilterFunction:
    """Filter function computed directly from a sampled trace.

    Piecewise-constant traces (pulsed trains, quantized carriers) are
    transformed exactly from their step boundaries; smooth traces use the
    midpoint-rule transform of the samples.  The grid must stay below the
    sampling Nyquist limit.
    """
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1 or omegas.size < 8:
        raise ValidationError("numeric_ff needs a 1-d grid of >= 8 frequencies")
    if np.any(omegas <= 0.0) or np.any(np.diff(omegas) <= 0.0):
        raise ValidationError("omegas must be strictly increasing and positive")
    nyquist = math.pi / trace.dt
    if omegas[-1] > nyquist:
        raise ValidationError(
            f"grid extends past the sampling Nyquist limit {nyquist:.6g} rad/s")
    t = trace.duration
    if trace.step_edges is not None:
        edges, seg = trace.step_edges
        ft = _segment_transform(edges, seg, omegas)
    else:
        ft = np.empty(omegas.size, dtype=complex)
        dt = trace.dt
        for start in range(0, omegas.size, 256):
            block = omegas[start:start + 256]
            kernel = np.exp(1j * np.outer(block, trace.times))
            ft[start:start + 256] = dt * (kernel @ trace.values)
    values = np.abs(ft) ** 2 / (math.pi * t)
    tail = float(np.mean(values[-8:] * omegas[-8:] ** 2)) * 4.0
    return FilterFunction(omegas, values, t, FFSource.NUMERIC,
                          tail_coefficient=tail)


# ---------------------------------------------------------------------------
# peak statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeakStats:
    """Shape summary of a filter function's principal peak.

    ``f0`` and ``fwhm`` are in Hz; ``gain`` is the FF area inside the FWHM
    window around the peak, ``main_lobe_area`` the area between the flanking
    minima, ``total_area`` the area over the whole grid (all dimensionless).
    ``harmonic_frequencies`` lists local maxima outside the main lobe rising
    above 5% of the peak, ascending, in Hz.
    """

    f0: float
    fwhm: float
    gain: float
    main_lobe_area: float
    total_area: float
    harmonic_frequencies: tuple[float, ...]


def _integrate_between(x: np.ndarray, y: np.ndarray, a: float, b: float) -> float:
    a = max(a, float(x[0]))
    b = min(b, float(x[-1]))
    if b <= a:
        return 0.0
    inner = x[(x > a) & (x < b)]
    xs = np.concatenate(([a], inner, [b]))
    ys = np.interp(xs, x, y)
    return float(np.trapezoid(ys, xs))


def _parabolic_peak(x: np.ndarray, y: np.ndarray, i: int) -> tuple[float, float]:
    x0, x1, x2 = x[i - 1], x[i], x[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    if denom == 0.0:
        return float(x1), float(y1)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    if a >= 0.0:
        return float(x1), float(y1)
    xv = -b / (2.0 * a)
    if not (x0 < xv < x2):
        return float(x1), float(y1)
    c = y1 - a * x1 * x1 - b * x1
    return float(xv), float(a * xv * xv + b * xv + c)


def _halfmax_crossing(x: np.ndarray, y: np.ndarray, i_peak: int, half: float,
                      direction: int) -> float:
    i = i_peak
    while 0 < i < x.size - 1:
        j = i + direction
        if y[j] < half <= y[i]:
            frac = (y[i] - half) / (y[i] - y[j])
            return float(x[i] + frac * (x[j] - x[i]))
        i = j
    raise ValidationError("half-maximum crossing not bracketed by the grid")


def _flanking_minimum(y: np.ndarray, i_peak: int, direction: int,
                      floor: float) -> int:
    i = i_peak + direction
    last = y.size - 2 if direction > 0 else 1
    while (i - last) * direction <= 0:
        if y[i] <= y[i - 1] and y[i] <= y[i + 1] and y[i] < floor:
            return i
        i += direction
    return y.size - 1 if direction > 0 else 0


def peak_stats(ff: FilterFunction) -> PeakStats:
    """Locate the principal peak of ``ff`` and summarize its shape.

    The peak position is the grid argmax refined by a local parabola; the
    FWHM comes from linear interpolation of the half-maximum crossings; areas
    are trapezoidal on the tabulated grid.  Requires the peak to be interior
    to the grid.
    """
    w, v = ff.omegas, ff.values
    i_peak = int(np.argmax(v))
    if i_peak in (0, v.size - 1):
        raise ValidationError("principal peak sits at the grid edge; widen the grid")
    w0, v0 = _parabolic_peak(w, v, i_peak)
    half = v0 / 2.0
    left = _halfmax_crossing(w, v, i_peak, half, -1)
    right = _halfmax_crossing(w, v, i_peak, half, +1)
    fwhm_w = right - left
    gain = _integrate_between(w, v, w0 - fwhm_w / 2.0, w0 + fwhm_w / 2.0)
    floor = 0.05 * v0
    i_lo = _flanking_minimum(v, i_peak, -1, floor)
    i_hi = _flanking_minimum(v, i_peak, +1, floor)
    main = _integrate_between(w, v, float(w[i_lo]), float(w[i_hi]))
    total = ff.total_area()
    harmonics = []
    interior = np.arange(1, v.size - 1)
    is_max = (v[interior] > v[interior - 1]) & (v[interior] >= v[interior + 1])
    for i in interior[is_max]:
        if i_lo < i < i_hi:
            continue
        if v[i] >= floor:
            wc, _ = _parabolic_peak(w, v, int(i))
            harmonics.append(wc / _TWO_PI)
    return PeakStats(
        f0=w0 / _TWO_PI,
        fwhm=fwhm_w / _TWO_PI,
        gain=gain,
        main_lobe_area=main,
        total_area=total,
        harmonic_frequencies=tuple(sorted(harmonics)),
    )
