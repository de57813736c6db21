"""Closed-form frequency-domain response of the driven, linearized device.

Phases follow the engineering convention exp(+jωt): the bare cavity is
``T = 1 - κex / (κ + 2j(ωp - ωc))``. Transmission is normalized so that
T -> 1 far from resonance.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .device_model import (
    TWO_PI,
    DeviceParams,
    drive_photon_number,
    pumped_coupling,
)


@dataclass(frozen=True)
class DriveConfig:
    """Pump tone at ``omega_d`` with exactly one coupling specification.

    The coupling is given as the linearized rate ``g`` (rad/s), the
    intracavity photon number ``n_d`` or the input power ``p_in`` (W). The
    other two are derived against a :class:`DeviceParams`.
    """

    omega_d: float
    g: float | None = None
    n_d: float | None = None
    p_in: float | None = None

    def __post_init__(self):
        given = [k for k in ("g", "n_d", "p_in") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one of g, n_d, p_in must be given, got {given}")
        value = getattr(self, given[0])
        if not (np.isfinite(value) and value >= 0):
            raise ValueError(f"{given[0]} must be non-negative, got {value!r}")
        if not (np.isfinite(self.omega_d) and self.omega_d > 0):
            raise ValueError("omega_d must be positive")

    @classmethod
    def at_delta(cls, params, delta, **coupling):
        """Drive whose upper mechanical sideband sits ``delta`` above ωc."""
        return cls(omega_d=params.omega_c - params.Omega_m + delta, **coupling)

    def detuning(self, params):
        """Δ = ωd - ωc."""
        return self.omega_d - params.omega_c

    def delta(self, params):
        """δ = (ωd + Ωm) - ωc."""
        return self.detuning(params) + params.Omega_m

    def photon_number(self, params):
        if self.n_d is not None:
            return self.n_d
        if self.p_in is not None:
            return drive_photon_number(self.p_in, self.omega_d, self.detuning(params),
                                       params.kappa, params.kappa_ex)
        return (self.g / params.g0) ** 2

    def coupling(self, params):
        if self.g is not None:
            return self.g
        return float(pumped_coupling(params.g0, self.photon_number(params)))

    def in_validated_regime(self, params):
        """True when the drive sits within one linewidth of the red sideband."""
        return abs(self.delta(params)) <= params.kappa

    def describe(self, params):
        return {
            "drive_freq_hz": self.omega_d / TWO_PI,
            "detuning_hz": self.detuning(params) / TWO_PI,
            "delta_hz": self.delta(params) / TWO_PI,
            "n_d": self.photon_number(params),
            "g_over_2pi_hz": self.coupling(params) / TWO_PI,
        }


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    """Complex transmission sampled on a strictly increasing probe grid (rad/s)."""

    probe_frequencies: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.probe_frequencies, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if f.ndim != 1 or f.shape != v.shape:
            raise ValueError("frequencies and values must be 1-D arrays of equal length")
        if f.size > 1 and not np.all(np.diff(f) > 0):
            raise ValueError("probe frequencies must be strictly increasing")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(v))):
            raise ValueError("spectrum contains non-finite entries")
        object.__setattr__(self, "probe_frequencies", f)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def frequencies_hz(self):
        return self.probe_frequencies / TWO_PI

    @property
    def magnitude_db(self):
        """20 log10 |T| (amplitude transmission); -inf where T = 0."""
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.values))

    @property
    def phase(self):
        return np.angle(self.values)

    def with_values(self, values, **meta):
        return ComplexSpectrum(self.probe_frequencies, values, {**self.metadata, **meta})


@dataclass(frozen=True)
class NormalModes:
    """Amplitude-decay eigenvalues of the coupled cavity/mechanics pair."""

    lambda_plus: complex
    lambda_minus: complex

    @property
    def splitting(self):
        return abs(self.lambda_plus.imag - self.lambda_minus.imag)

    @property
    def linewidths(self):
        """Intensity decay rates (twice the amplitude rates)."""
        return (-2.0 * self.lambda_plus.real, -2.0 * self.lambda_minus.real)

    @property
    def slowest_amplitude_rate(self):
        return min(-self.lambda_plus.real, -self.lambda_minus.real)


def probe_grid(params, n_linewidths=10.0, points=2001, center=None):
    """Linear probe grid centered on ωc (or ``center``) spanning ±n·κ."""
    center = params.omega_c if center is None else center
    half = n_linewidths * params.kappa
    return center + np.linspace(-half, half, points)


def _transmission(eps, ratio, chi_=0.0, detuning=0.0):
    # eps, detuning in units of kappa; ratio = kappa_ex / kappa
    return 1.0 - ratio * (1.0 - 1j * chi_) / (1.0 + 2j * eps + 4.0 * chi_ * detuning)


def _susceptibility(w, detuning, g2, kappa, Omega_m, Gamma_m):
    """χ with all frequency differences formed first; ``w`` = ωp - ωd."""
    idler = 1.0 + 2j * (w - detuning) / kappa
    mech = ((Omega_m - w) * (Omega_m + w) + 1j * w * Gamma_m) / Omega_m**2
    return (4.0 * g2 / (kappa * Omega_m)) / (idler * mech)


def bare_transmission(omega_p, params: DeviceParams):
    """Undriven cavity transmission ``1 - κex / (κ + 2j(ωp - ωc))``."""
    eps = (np.asarray(omega_p, dtype=float) - params.omega_c) / params.kappa
    # a complex zero χ keeps the arithmetic identical to the dressed path
    return _transmission(eps, params.kappa_ex / params.kappa, np.zeros_like(eps, dtype=complex))


def chi(omega_p, omega_d, g, params: DeviceParams):
    """Susceptibility χ entering the dressed transmission."""
    if g < 0:
        raise ValueError("g must be non-negative")
    w = np.asarray(omega_p, dtype=float) - omega_d
    return _susceptibility(w, omega_d - params.omega_c, g * g, params.kappa,
                           params.Omega_m, params.Gamma_m)


def dressed_from_g2(omega_p, omega_d, g2, params):
    """Dressed transmission parameterized by g² (negative values allowed for fitting)."""
    omega_p = np.asarray(omega_p, dtype=float)
    detuning = omega_d - params.omega_c
    w = omega_p - omega_d
    x = _susceptibility(w, detuning, g2, params.kappa, params.Omega_m, params.Gamma_m)
    eps = (omega_p - params.omega_c) / params.kappa
    return _transmission(eps, params.kappa_ex / params.kappa, x, detuning / params.kappa)


def dressed_transmission(omega_p, drive: DriveConfig, params: DeviceParams):
    """Two-tone probe transmission in the presence of the pump.

    ``T = 1 - κex(1 - jχ) / [κ + 2j(ωp - ωc) + 4χ(ωd - ωc)]``, evaluated in
    units of κ. With g = 0 it is bit-identical to :func:`bare_transmission`.
    """
    g = drive.coupling(params)
    return dressed_from_g2(omega_p, drive.omega_d, g * g, params)


def backaction(delta, g, params: DeviceParams):
    """Optical-spring frequency and damping of the mechanics (resolved sidebands).

    Returns ``(Omega_m_eff, Gamma_m_eff)`` for relative detuning ``delta``.
    """
    if params.sideband_ratio < 10:
        warnings.warn(
            f"Omega_m/kappa = {params.sideband_ratio:.3g} < 10: backaction formulas "
            "assume resolved sidebands", RuntimeWarning, stacklevel=2)
    delta = np.asarray(delta, dtype=float)
    k = params.kappa
    lorentz = 4.0 * g * g / (k * k + 4.0 * delta * delta)
    Omega = params.Omega_m + lorentz * delta
    Gamma = params.Gamma_m + lorentz * k
    if Omega.ndim == 0:
        return float(Omega), float(Gamma)
    return Omega, Gamma


def normal_modes(drive: DriveConfig, params: DeviceParams) -> NormalModes:
    """Eigenvalues of the beam-splitter coupled-mode matrix.

    ``[[jΔ - κ/2, jg], [jg, -jΩm - Γm/2]]`` in the drive frame. This is the
    rotating-wave picture near Δ ≈ -Ωm, used for splitting and linewidth
    diagnostics only.
    """
    g = drive.coupling(params)
    a = 1j * drive.detuning(params) - params.kappa / 2.0
    d = -1j * params.Omega_m - params.Gamma_m / 2.0
    mean = 0.5 * (a + d)
    root = cmath.sqrt((0.5 * (a - d)) ** 2 - g * g)
    return NormalModes(complex(mean + root), complex(mean - root))


def thermal_sideband(omega, Omega_m_eff, Gamma_m_eff, n_mech, scale=1.0, sideband=1):
    """Thermal motional sideband versus offset ``omega`` from the drive (rad/s).

    A Lorentzian at ``sideband * Omega_m_eff`` with FWHM ``Gamma_m_eff``
    whose area over ω equals ``n_mech * scale``.
    """
    if not Gamma_m_eff > 0:
        raise ValueError("Gamma_m_eff must be positive")
    if sideband not in (1, -1):
        raise ValueError("sideband must be +1 (upper) or -1 (lower)")
    x = np.asarray(omega, dtype=float) - sideband * Omega_m_eff
    half = 0.5 * Gamma_m_eff
    return n_mech * scale * (half / math.pi) / (x * x + half * half)
