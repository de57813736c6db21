"""Static device description and closed-form derived quantities.

All frequencies and rates are angular (rad/s). The ``*_hz`` helpers are the
only place where the ordinary-frequency convention (value / 2π) appears.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import constants as _c

HBAR = _c.hbar
KB = _c.k
EPS0 = _c.epsilon_0
TWO_PI = 2.0 * math.pi


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


def zero_point_motion(mass, Omega_m):
    """Ground-state position spread sqrt(hbar / (2 m Omega_m)) in metres."""
    _positive("mass", mass)
    _positive("Omega_m", Omega_m)
    return math.sqrt(HBAR / (2.0 * mass * Omega_m))


def parallel_plate_pull(omega_c, gap, eta=1.0):
    """Signed frequency pull dωc/dx of a parallel-plate capacitor.

    A plate contributing a fraction ``eta`` of the total capacitance shifts
    the LC resonance by ``-eta * omega_c / (2 * gap)`` per metre of motion
    (valid for displacements much smaller than the gap).
    """
    _positive("omega_c", omega_c)
    _positive("gap", gap)
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta!r}")
    return -eta * omega_c / (2.0 * gap)


def lc_resonance(inductance, capacitance):
    _positive("inductance", inductance)
    _positive("capacitance", capacitance)
    return 1.0 / math.sqrt(inductance * capacitance)


def single_photon_coupling(cavity_pull, x_zp):
    """Vacuum coupling rate |G| x_zp (rad/s); the sign of G is dropped."""
    if not (np.isfinite(x_zp) and x_zp >= 0):
        raise ValueError(f"x_zp must be non-negative, got {x_zp!r}")
    return abs(cavity_pull) * x_zp


def pumped_coupling(g0, n_d):
    """Linearized coupling g0 * sqrt(n_d) enhanced by the intracavity drive."""
    if np.any(np.asarray(n_d) < 0):
        raise ValueError("drive photon number must be non-negative")
    return g0 * np.sqrt(n_d)


def drive_photon_number(p_in, omega_d, detuning, kappa, kappa_ex):
    """Intracavity drive photons for input power ``p_in`` (W) at detuning ωd − ωc."""
    _positive("omega_d", omega_d)
    if np.any(np.asarray(p_in) < 0):
        raise ValueError("p_in must be non-negative")
    detuning = np.asarray(detuning, dtype=float)
    n = 2.0 * p_in * kappa_ex / (HBAR * omega_d * (kappa**2 + 4.0 * detuning**2))
    return float(n) if n.ndim == 0 else n


def thermal_occupancy(omega, temperature):
    """Bose-Einstein occupancy of a mode at angular frequency ``omega``."""
    _positive("omega", omega)
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        return 0.0
    x = HBAR * omega / (KB * temperature)
    if x > 700.0:
        return math.exp(-x)
    return 1.0 / math.expm1(x)


@dataclass(frozen=True)
class DeviceParams:
    """Every static device quantity, validated on construction.

    Rates are intensity (energy) decay rates. ``cavity_pull`` is G = dωc/dx
    and keeps its sign; when omitted it is taken from the parallel-plate
    model using ``gap`` and ``eta``.
    """

    omega_c: float
    kappa: float
    kappa_ex: float
    kappa_0: float
    Omega_m: float
    Gamma_m: float
    mass: float
    gap: float
    inductance: float
    capacitance: float
    eta: float = 1.0
    temperature: float = 0.04
    cavity_pull: float | None = field(default=None)

    def __post_init__(self):
        for name in ("omega_c", "kappa", "kappa_ex", "Omega_m", "Gamma_m",
                     "mass", "gap", "inductance", "capacitance", "temperature"):
            _positive(name, getattr(self, name))
        # kappa_0 = 0 is the critically overcoupled limit and is allowed
        if not (np.isfinite(self.kappa_0) and self.kappa_0 >= 0):
            raise ValueError(f"kappa_0 must be non-negative, got {self.kappa_0!r}")
        if abs(self.kappa - (self.kappa_ex + self.kappa_0)) > 1e-12 * self.kappa:
            raise ValueError(
                f"kappa ({self.kappa!r}) != kappa_ex + kappa_0 "
                f"({self.kappa_ex!r} + {self.kappa_0!r})")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta!r}")
        if self.cavity_pull is None:
            object.__setattr__(self, "cavity_pull",
                               parallel_plate_pull(self.omega_c, self.gap, self.eta))
        elif not np.isfinite(self.cavity_pull):
            raise ValueError("cavity_pull must be finite")

    @property
    def x_zp(self):
        return zero_point_motion(self.mass, self.Omega_m)

    @property
    def g0(self):
        return single_photon_coupling(self.cavity_pull, self.x_zp)

    @property
    def sideband_ratio(self):
        return self.Omega_m / self.kappa

    @property
    def resolved_sideband(self):
        return self.sideband_ratio > 1.0

    @property
    def cooperativity_per_g2(self):
        """Cooperativity 4g²/(κΓm) divided by g²."""
        return 4.0 / (self.kappa * self.Gamma_m)

    @classmethod
    def from_hz(cls, *, f_cavity, kappa, kappa_ext, kappa_int, f_mech, gamma_m,
                mass, gap, inductance, capacitance, eta=1.0, temperature=0.04,
                cavity_pull_per_m=None):
        """Build from ordinary-frequency values (Hz, Hz/m)."""
        return cls(
            omega_c=TWO_PI * f_cavity,
            kappa=TWO_PI * kappa,
            kappa_ex=TWO_PI * kappa_ext,
            kappa_0=TWO_PI * kappa_int,
            Omega_m=TWO_PI * f_mech,
            Gamma_m=TWO_PI * gamma_m,
            mass=mass,
            gap=gap,
            inductance=inductance,
            capacitance=capacitance,
            eta=eta,
            temperature=temperature,
            cavity_pull=None if cavity_pull_per_m is None else TWO_PI * cavity_pull_per_m,
        )

    def to_hz(self):
        """Parameter-file mapping (ordinary frequency) for this device."""
        return {
            "f_cavity_hz": self.omega_c / TWO_PI,
            "kappa_hz": self.kappa / TWO_PI,
            "kappa_ext_hz": self.kappa_ex / TWO_PI,
            "kappa_int_hz": self.kappa_0 / TWO_PI,
            "f_mech_hz": self.Omega_m / TWO_PI,
            "gamma_m_hz": self.Gamma_m / TWO_PI,
            "mass_kg": self.mass,
            "gap_m": self.gap,
            "inductance_h": self.inductance,
            "capacitance_f": self.capacitance,
            "eta": self.eta,
            "temperature_k": self.temperature,
            "cavity_pull_hz_per_m": self.cavity_pull / TWO_PI,
        }

    def as_dict(self):
        return asdict(self)


# The published device in parameter-file form (ordinary frequency).
# G is the value fitted from the backaction sweep, not the parallel-plate estimate.
PUBLISHED_PARAMETERS_HZ = {
    "f_cavity_hz": 7.47e9,
    "kappa_hz": 170e3,
    "kappa_ext_hz": 130e3,
    "kappa_int_hz": 40e3,
    "f_mech_hz": 10.69e6,
    "gamma_m_hz": 30.0,
    "mass_kg": 50e-15,
    "gap_m": 50e-9,
    "inductance_h": 12e-9,
    "capacitance_f": 38e-15,
    "eta": 1.0,
    "temperature_k": 0.040,
    "cavity_pull_hz_per_m": -56e6 / 1e-9,
}


def params_from_hz_mapping(raw):
    """DeviceParams from a parameter-file mapping (keys as in ``to_hz``)."""
    pull = raw.get("cavity_pull_hz_per_m")
    return DeviceParams.from_hz(
        f_cavity=raw["f_cavity_hz"],
        kappa=raw["kappa_hz"],
        kappa_ext=raw["kappa_ext_hz"],
        kappa_int=raw["kappa_int_hz"],
        f_mech=raw["f_mech_hz"],
        gamma_m=raw["gamma_m_hz"],
        mass=raw["mass_kg"],
        gap=raw["gap_m"],
        inductance=raw["inductance_h"],
        capacitance=raw["capacitance_f"],
        eta=raw.get("eta", 1.0),
        temperature=raw.get("temperature_k", 0.04),
        cavity_pull_per_m=pull,
    )


def published_parameters():
    """The published device: 7.47 GHz cavity coupled to a 10.69 MHz drum."""
    return params_from_hz_mapping(PUBLISHED_PARAMETERS_HZ)


@dataclass(frozen=True)
class FiguresOfMerit:
    q_mechanical: float
    sideband_ratio: float
    cooling_factor: float
    n_cavity: float
    n_mech: float
    gamma_th: float
    group_delay: float
    storage_time: float
    x_zp: float
    g0: float
    lc_frequency: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            # a zero-temperature bath gives an infinite storage time
            ok_inf = name == "storage_time" and value == math.inf
            if not ((np.isfinite(value) or ok_inf) and value >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {value!r}")

    def report(self):
        """Human-oriented values: rates as ordinary frequency, times in seconds."""
        return {
            "q_mechanical": self.q_mechanical,
            "sideband_ratio": self.sideband_ratio,
            "cooling_factor": self.cooling_factor,
            "n_cavity": self.n_cavity,
            "n_mech": self.n_mech,
            "gamma_th_hz": self.gamma_th / TWO_PI,
            "group_delay_s": self.group_delay,
            "storage_time_s": self.storage_time,
            "x_zp_m": self.x_zp,
            "g0_over_2pi_hz": self.g0 / TWO_PI,
            "g0_over_pi_hz": self.g0 / math.pi,
            "lc_frequency_hz": self.lc_frequency / TWO_PI,
        }


def figures_of_merit(params: DeviceParams) -> FiguresOfMerit:
    n_mech = thermal_occupancy(params.Omega_m, params.temperature)
    gamma_th = n_mech * params.Gamma_m
    return FiguresOfMerit(
        q_mechanical=params.Omega_m / params.Gamma_m,
        sideband_ratio=params.Omega_m / params.kappa,
        cooling_factor=params.kappa / params.Gamma_m,
        n_cavity=thermal_occupancy(params.omega_c, params.temperature),
        n_mech=n_mech,
        gamma_th=gamma_th,
        group_delay=1.0 / params.Gamma_m,
        storage_time=1.0 / gamma_th if gamma_th > 0 else math.inf,
        x_zp=params.x_zp,
        g0=params.g0,
        lc_frequency=lc_resonance(params.inductance, params.capacitance),
    )
