"""Monte Carlo dephasing oracle, independent of the filter-function path.

Each realization synthesizes classical frequency noise as a sum of cosine
modes with random phases,

    beta(t) = sum_k A_k cos(omega_k t + theta_k),  A_k = sqrt(2 S(omega_k) d_omega / pi),

accumulates the phase phi = integral beta(t) s(t) dt by the midpoint rule
on the trace's sample grid, and averages cos(phi).  For Gaussian phases the
coherence is exp(-<phi^2>/2), so both the direct average and the
second-moment estimator are reported.  The quadrature sum is evaluated as
two matrix products (weights x mode kernels, then kernels x random phases),
which reorders but does not change the per-realization estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .noise import NoiseSpectrum
from .sequences import SensitivityTrace

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo controls.

    ``omega_max`` defaults to the spectrum extent; the trace must resolve it
    by at least the ``oversample`` margin.  ``budget`` caps realizations x
    time steps to keep accidental huge runs from stalling a session.
    """

    n_realizations: int = 10_000
    seed: int = 0
    spectral_components: int = 1024
    omega_max: float | None = None
    oversample: float = 10.0
    budget: int = 2_000_000_000

    def __post_init__(self) -> None:
        if self.n_realizations < 100:
            raise ValidationError("need at least 100 realizations")
        if self.spectral_components < 8:
            raise ValidationError("need at least 8 spectral components")
        if self.oversample < 10.0:
            raise ValidationError("oversample margin must be >= 10")
        if self.omega_max is not None and self.omega_max <= 0.0:
            raise ValidationError("omega_max must be positive")


@dataclass(frozen=True)
class McResult:
    coherence: float
    stderr: float
    chi_estimate: float
    chi_stderr: float
    chi_expected: float            # exact second moment of the mode ensemble
    n_realizations: int
    seed: int
    n_modes: int
    omega_max: float

    def to_dict(self) -> dict:
        return {
            "coherence": self.coherence,
            "stderr": self.stderr,
            "chi_estimate": self.chi_estimate,
            "chi_stderr": self.chi_stderr,
            "chi_expected": self.chi_expected,
            "n_realizations": self.n_realizations,
            "seed": self.seed,
            "n_modes": self.n_modes,
            "omega_max": self.omega_max,
        }


def _mode_integrals(trace: SensitivityTrace, omegas: np.ndarray):
    # midpoint rule: traces sample interval centers, so uniform weights are
    # exact on each constant segment (end-halving would drop half a sample)
    w = np.full(trace.times.size, trace.dt)
    ws = w * trace.values
    ic = np.empty(omegas.size)
    is_ = np.empty(omegas.size)
    for start in range(0, omegas.size, 128):
        block = omegas[start:start + 128]
        arg = np.outer(block, trace.times)
        ic[start:start + 128] = np.cos(arg) @ ws
        is_[start:start + 128] = np.sin(arg) @ ws
    return ic, is_


def mc_coherence(spectrum: NoiseSpectrum, trace: SensitivityTrace,
                 cfg: McConfig = McConfig()) -> McResult:
    """Monte Carlo coherence of ``trace`` under ``spectrum``.

    Deterministic per (seed, realization index): each realization's phases
    come from an independent counter-derived stream, so chunked or serial
    evaluation gives identical results.
    """
    omega_max = cfg.omega_max if cfg.omega_max is not None else spectrum.extent()
    if omega_max <= 0.0:
        raise ValidationError("spectrum extent is zero; give omega_max explicitly")
    dt = trace.dt
    if dt * omega_max > _TWO_PI / cfg.oversample:
        raise ValidationError(
            f"trace spacing {dt:.3e} s cannot resolve omega_max {omega_max:.3e} "
            f"rad/s with a {cfg.oversample:g}x margin")
    if cfg.n_realizations * trace.times.size > cfg.budget:
        raise ValidationError("realizations x steps exceeds the configured budget")

    k = cfg.spectral_components
    d_omega = omega_max / k
    omegas = (np.arange(k) + 0.5) * d_omega
    amps = np.sqrt(2.0 * spectrum.eval(omegas) * d_omega / math.pi)
    ic, is_ = _mode_integrals(trace, omegas)
    u = amps * ic
    v = amps * is_

    n = cfg.n_realizations
    phis = np.empty(n)
    for i in range(n):
        theta = np.random.default_rng([int(cfg.seed), i]).uniform(0.0, _TWO_PI, k)
        phis[i] = u @ np.cos(theta) - v @ np.sin(theta)

    cos_phi = np.cos(phis)
    phi_sq = phis * phis
    chi_expected = 0.25 * float(amps @ (amps * (ic * ic + is_ * is_)))
    return McResult(
        coherence=float(np.mean(cos_phi)),
        stderr=float(np.std(cos_phi, ddof=1) / math.sqrt(n)),
        chi_estimate=float(np.mean(phi_sq) / 2.0),
        chi_stderr=float(np.std(phi_sq, ddof=1) / (2.0 * math.sqrt(n))),
        chi_expected=chi_expected,
        n_realizations=n,
        seed=int(cfg.seed),
        n_modes=k,
        omega_max=float(omega_max),
    )
