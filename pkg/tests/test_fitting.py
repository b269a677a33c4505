"""Least-squares fits: noise model, envelope, revival comb, Gaussian peak."""

import math

import numpy as np
import pytest

from noisespec import (
    FLAG_CLIPPED,
    Method,
    NumericError,
    ReconstructedSpectrum,
    SequenceSpec,
    ValidationError,
    fit_envelope,
    fit_gaussian_peak,
    fit_noise_params,
    fit_revival_comb,
    synth_cpmg_family,
    synth_dysco_sweep,
)

TRUTH = {"gauss_delta": 500e3, "gauss_sigma": 25e3, "gauss_center": 392e3,
         "lorentz_delta": 40e3, "lorentz_sigma": 50e3}


# --------------------------------------------------------------------------
# Stretched-exponential envelope


def _envelope(times, t2, power):
    return np.exp(-np.power(times / t2, power))


def test_envelope_fit_recovers_model_exactly():
    times = np.linspace(5e-5, 3e-3, 40)
    result = fit_envelope(times, _envelope(times, 1e-3, 1.5))
    assert result["t2"] == pytest.approx(1e-3, rel=1e-6)
    assert result["power"] == pytest.approx(1.5, rel=1e-6)
    assert result.residual_norm < 1e-9
    assert result.converged
    assert set(result.covariance_diag) == {"t2", "power"}


def test_envelope_fit_with_fixed_power():
    times = np.linspace(5e-5, 3e-3, 40)
    result = fit_envelope(times, _envelope(times, 1e-3, 1.0), fix_power=1.0)
    assert result["t2"] == pytest.approx(1e-3, rel=1e-9)
    assert result["power"] == 1.0
    assert result.metadata["power_fixed"] is True


def test_envelope_fit_flags_degenerate_data():
    times = np.linspace(1e-5, 1e-4, 10)
    result = fit_envelope(times, np.full(10, 0.5))
    assert result.metadata["degenerate"] is True
    assert result.covariance_diag is None


def test_envelope_fit_validation():
    times = np.linspace(1e-5, 1e-4, 10)
    with pytest.raises(ValidationError):
        fit_envelope(times[:3], np.full(3, 0.5))
    with pytest.raises(ValidationError):
        fit_envelope(times, np.full(10, 1.2))
    with pytest.raises(ValidationError):
        fit_envelope(times, np.zeros(10))


# --------------------------------------------------------------------------
# Revival comb


def _comb(times, rate, power, t_rev, width, teeth=7):
    centers = np.arange(teeth) * t_rev
    comb = np.exp(-(times[:, None] - centers[None, :]) ** 2
                  / (2.0 * width ** 2)).sum(axis=1)
    return np.exp(-np.power(times * rate, power)) * comb


def test_comb_fit_recovers_spacing_exactly():
    times = np.linspace(1e-7, 1.05e-4, 400)
    cs = _comb(times, rate=1.0 / 8e-5, power=1.3, t_rev=1.6e-5, width=2.4e-6)
    result = fit_revival_comb(times, cs)
    assert result["revival_time"] == pytest.approx(1.6e-5, rel=1e-6)
    assert result["revival_width"] == pytest.approx(2.4e-6, rel=1e-3)
    assert result["t2"] == pytest.approx(8e-5, rel=1e-3)
    assert result["power"] == pytest.approx(1.3, rel=1e-2)
    assert result.residual_norm < 1e-6
    assert result.metadata["n_peaks_found"] >= 3


def test_comb_fit_without_envelope_decay():
    times = np.linspace(1e-7, 1.05e-4, 400)
    cs = _comb(times, rate=1e-6, power=1.3, t_rev=1.6e-5, width=2.4e-6)
    result = fit_revival_comb(times, cs)
    assert result["revival_time"] == pytest.approx(1.6e-5, rel=1e-6)
    assert result.residual_norm < 1e-6


def test_comb_fit_needs_three_peaks():
    times = np.linspace(1e-7, 1.05e-4, 200)
    with pytest.raises(ValidationError):
        fit_revival_comb(times, _envelope(times, 4e-5, 1.5))


def test_comb_fit_needs_enough_points():
    times = np.linspace(1e-7, 1e-4, 6)
    with pytest.raises(ValidationError):
        fit_revival_comb(times, np.full(6, 0.5))


# --------------------------------------------------------------------------
# Gaussian peak on a reconstructed spectrum


def _peak_spectrum(center=3.9e5, amp=4e6, width=2.6e4, offset=1e3):
    w = np.linspace(3e5, 5e5, 60)
    v = amp * np.exp(-((w - center) ** 2) / (2.0 * width ** 2)) + offset
    return ReconstructedSpectrum(
        omegas=w, values=v, uncertainties=np.zeros(60),
        flags=np.zeros(60, dtype=int), method=Method.CPMG_SD)


def test_peak_fit_recovers_parameters_exactly():
    result = fit_gaussian_peak(_peak_spectrum())
    assert result["center_hz"] == pytest.approx(3.9e5 / (2 * math.pi), rel=1e-9)
    assert result["width_hz"] == pytest.approx(2.6e4 / (2 * math.pi), rel=1e-6)
    assert result["amplitude"] == pytest.approx(4e6, rel=1e-6)
    assert result["offset"] == pytest.approx(1e3, rel=1e-3)
    assert result.residual_norm < 1e-6


def test_peak_fit_is_translation_equivariant():
    base = fit_gaussian_peak(_peak_spectrum())
    shift = 1e4
    moved = fit_gaussian_peak(_peak_spectrum().shifted(shift))
    expected = base["center_hz"] + shift / (2 * math.pi)
    assert moved["center_hz"] == pytest.approx(expected, abs=1e-6)
    assert moved["width_hz"] == pytest.approx(base["width_hz"], rel=1e-9)


def test_peak_fit_window_selects_points():
    lo_hz = 3.2e5 / (2 * math.pi)
    hi_hz = 4.8e5 / (2 * math.pi)
    result = fit_gaussian_peak(_peak_spectrum(), window=(lo_hz, hi_hz))
    assert result["center_hz"] == pytest.approx(3.9e5 / (2 * math.pi), rel=1e-6)


def test_peak_fit_rejects_edge_maximum():
    w = np.linspace(3e5, 5e5, 30)
    rising = ReconstructedSpectrum(
        omegas=w, values=np.linspace(1.0, 2.0, 30),
        uncertainties=np.zeros(30), flags=np.zeros(30, dtype=int),
        method=Method.CPMG_SD)
    with pytest.raises(ValidationError):
        fit_gaussian_peak(rising)


def test_peak_fit_needs_valid_points():
    spec = _peak_spectrum()
    clipped = ReconstructedSpectrum(
        omegas=spec.omegas, values=spec.values,
        uncertainties=spec.uncertainties,
        flags=np.full(60, FLAG_CLIPPED, dtype=int), method=spec.method)
    with pytest.raises(ValidationError):
        fit_gaussian_peak(clipped)


# --------------------------------------------------------------------------
# Noise-model fit


def _bath_curve(bath, points=24):
    grids = {8: np.geomspace(3e-5, 1.2e-3, points)}
    (curve,) = synth_cpmg_family(bath, [8], time_grid_per_n=grids)
    return curve


def test_noise_fit_fixed_point_at_truth(bath):
    # Started at the generating parameters the fit must stay there up to the
    # quadrature-grid mismatch between synthesis and the fit's cached grids.
    curve = _bath_curve(bath)
    result = fit_noise_params(curve, initial=dict(TRUTH),
                              max_iterations=1500)
    assert result.converged
    assert result.residual_norm < 1e-3
    for name, truth in TRUTH.items():
        assert result[name] == pytest.approx(truth, rel=0.03), name
    assert result.metadata["n_points"] == 24


def test_noise_fit_is_deterministic(bath):
    curve = _bath_curve(bath, points=12)
    a = fit_noise_params(curve, initial=dict(TRUTH), max_iterations=400)
    b = fit_noise_params(curve, initial=dict(TRUTH), max_iterations=400)
    assert a.parameters == b.parameters
    assert a.residual_norm == b.residual_norm


def test_noise_fit_validation(bath):
    curve = _bath_curve(bath, points=12)
    sweep = synth_dysco_sweep(
        bath, SequenceSpec.dysco(duration=2e-4, mod_frequency=1e5),
        [5e4, 1e5])
    with pytest.raises(ValidationError):
        fit_noise_params(sweep, initial=dict(TRUTH))
    with pytest.raises(ValidationError):
        fit_noise_params(curve, initial=None)
    partial = dict(TRUTH)
    del partial["lorentz_sigma"]
    with pytest.raises(ValidationError):
        fit_noise_params(curve, initial=partial)
    negative = dict(TRUTH, gauss_delta=-1.0)
    with pytest.raises(ValidationError):
        fit_noise_params(curve, initial=negative)
    with pytest.raises(ValidationError):
        fit_noise_params(curve, initial=dict(TRUTH),
                         bounds={"gauss_center": (500e3, 600e3)})


def test_fit_result_getitem():
    times = np.linspace(5e-5, 3e-3, 40)
    result = fit_envelope(times, _envelope(times, 1e-3, 1.5))
    assert result["t2"] == result.parameters["t2"]
    with pytest.raises(KeyError):
        result["no_such_parameter"]
