"""Independent solutions of the linearized equations of motion.

Nothing here calls the closed-form transmission in :mod:`electromech.response`.
The equations are written in the physics convention exp(-iωt) in the frame
rotating with the drive, for H_I = -ħg(a + a†)(b + b†):

    da/dt = (iΔ - κ/2) a + i g (b + b†) + s/2
    db/dt = -iΩm b - (Γm/2)(b - b†) + i g (a + a†)

The mechanical damping acts on momentum only (velocity damping), so
x = b + b† obeys x'' + Γm x' + Ωm² x = force. The probe enters as s/2 and the
transmission is ``1 - κex a / s``. Results are conjugated at the end to match
the exp(+jωt) convention used by the closed-form model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from .response import DriveConfig, normal_modes


class SingularSystemError(ArithmeticError):
    pass


class SteadyStateError(RuntimeError):
    """The time-domain response did not settle to a steady state."""


@dataclass(frozen=True)
class SidebandBasis:
    """Response amplitudes (physics convention) driven by a unit probe.

    ``probe`` is the cavity field at ωp, ``idler`` the cavity field at
    2ωd - ωp and ``mechanical`` the position amplitude at ωp - ωd.
    ``residual`` is the relative residual of the solved linear system.
    """

    probe: complex
    idler: complex
    mechanical: complex
    residual: float


@dataclass(frozen=True)
class TimeTrace:
    dt: float
    duration: float
    cavity: np.ndarray
    mechanical: np.ndarray
    stride: int = 1

    def __post_init__(self):
        if np.isnan(self.cavity).any() or np.isnan(self.mechanical).any():
            raise SteadyStateError("integration produced NaN samples")

    @property
    def times(self):
        return np.arange(self.cavity.size) * self.dt * self.stride


def _sideband_matrix(w, detuning, g, params, idler=True):
    """Rows: a, a†, b, b† equations at exp(-iwt); w = ωp - ωd."""
    k, gm, Om = params.kappa, params.Gamma_m, params.Omega_m
    iw = 1j * w
    M = np.array([
        [iw + 1j * detuning - k / 2, 0.0, 1j * g, 1j * g],
        [0.0, iw - 1j * detuning - k / 2, -1j * g, -1j * g],
        [1j * g, 1j * g, iw - 1j * Om - gm / 2, gm / 2],
        [-1j * g, -1j * g, gm / 2, iw + 1j * Om - gm / 2],
    ], dtype=complex)
    if not idler:
        M[1, :] = 0.0
        M[:, 1] = 0.0
        M[1, 1] = 1.0
    return M


def sideband_amplitudes(omega_p, drive: DriveConfig, params, idler=True) -> SidebandBasis:
    """Steady-state response to a unit probe by direct linear solve.

    ``idler=False`` drops the 2ωd - ωp cavity amplitude (two-mode truncation).
    """
    g = drive.coupling(params)
    if g < 0:
        raise ValueError("g must be non-negative")
    if params.Gamma_m == 0 or params.kappa == 0:
        raise SingularSystemError("undamped system has no steady state")
    w = omega_p - drive.omega_d
    M = _sideband_matrix(w, drive.detuning(params), g, params, idler)
    rhs = np.array([-0.5, 0.0, 0.0, 0.0], dtype=complex)
    # rows scaled by kappa keep the system balanced
    A = M / params.kappa
    b = rhs / params.kappa
    try:
        u = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    residual = np.linalg.norm(A @ u - b) / np.linalg.norm(b)
    return SidebandBasis(
        probe=complex(u[0]),
        idler=complex(np.conj(u[1])) if idler else 0j,
        mechanical=complex(u[2] + u[3]),
        residual=float(residual),
    )


def sideband_linear_solve(omega_p, drive: DriveConfig, params, idler=True):
    """Transmission from the harmonic-balance solve (exp(+jωt) convention)."""
    scalar = np.ndim(omega_p) == 0
    out = np.empty(np.size(omega_p), dtype=complex)
    for i, wp in enumerate(np.atleast_1d(np.asarray(omega_p, dtype=float))):
        amp = sideband_amplitudes(wp, drive, params, idler)
        out[i] = np.conj(1.0 - params.kappa_ex * amp.probe)
    return complex(out[0]) if scalar else out


# --- time domain -----------------------------------------------------------

def quadrature_matrix(detuning, g, params):
    """Real generator for z = (Xc, Pc, x, p), a = (Xc + iPc)/√2, x = b + b†."""
    k, gm, Om = params.kappa, params.Gamma_m, params.Omega_m
    r2 = math.sqrt(2.0)
    return np.array([
        [-k / 2, -detuning, 0.0, 0.0],
        [detuning, -k / 2, r2 * g, 0.0],
        [0.0, 0.0, 0.0, Om],
        [2.0 * r2 * g, 0.0, -Om, -gm],
    ])


@numba.njit(cache=True)
def _rk4(M, z0, h, n_steps, w, amp, t0, stride, out):
    """Fixed-step RK4 for z' = M z + amp*(cos wt, -sin wt, 0, 0)."""
    z = z0.copy()
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    j = 0
    for n in range(n_steps):
        t = t0 + n * h
        if n % stride == 0:
            out[j, :] = z
            j += 1
        for s in range(4):
            if s == 0:
                ts = t
                for i in range(4):
                    tmp[i] = z[i]
            elif s == 1 or s == 2:
                ts = t + 0.5 * h
                prev = k1 if s == 1 else k2
                for i in range(4):
                    tmp[i] = z[i] + 0.5 * h * prev[i]
            else:
                ts = t + h
                for i in range(4):
                    tmp[i] = z[i] + h * k3[i]
            kk = k1 if s == 0 else (k2 if s == 1 else (k3 if s == 2 else k4))
            for i in range(4):
                acc = 0.0
                for m in range(4):
                    acc += M[i, m] * tmp[m]
                kk[i] = acc
            kk[0] += amp * math.cos(w * ts)
            kk[1] -= amp * math.sin(w * ts)
        for i in range(4):
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    if n_steps % stride == 0:
        out[j, :] = z
    return z


def max_step(params, detuning, w):
    """Step bound: 1/50 of the period of the fastest rotating-frame frequency."""
    omega_max = 2.0 * max(params.Omega_m, abs(detuning), abs(w))
    return 2.0 * math.pi / omega_max / 50.0


def integrate(params, drive, z0, duration, w=0.0, amp=0.0, stride=1, max_steps=10_000_000):
    """Integrate the quadrature equations from ``z0`` for ``duration`` seconds."""
    detuning = drive.detuning(params)
    g = drive.coupling(params)
    h = max_step(params, detuning, w)
    n = int(math.ceil(duration / h))
    if n > max_steps:
        raise ValueError(f"{n} steps exceed the limit of {max_steps}; rescale parameters")
    h = duration / n
    out = np.empty((n // stride + 1, 4))
    M = quadrature_matrix(detuning, g, params)
    _rk4(M, np.asarray(z0, dtype=float), h, n, w, amp, 0.0, stride, out)
    cavity = (out[:, 0] + 1j * out[:, 1]) / math.sqrt(2.0)
    mech = 0.5 * (out[:, 2] + 1j * out[:, 3])
    return TimeTrace(dt=h, duration=duration, cavity=cavity, mechanical=mech, stride=stride)


def time_domain_transmission(omega_p, drive: DriveConfig, params, cycles=20,
                             settle_decays=12.0, tol=1e-4, max_steps=10_000_000):
    """Probe transmission measured by integrating and demodulating.

    Starts from rest, waits ``settle_decays`` amplitude-decay times of the
    slowest hybrid mode, then demodulates the cavity field at ωp over two
    consecutive windows of ``cycles`` beat periods each. Raises
    :class:`SteadyStateError` when the two windows differ by more than ``tol``.
    """
    detuning = drive.detuning(params)
    g = drive.coupling(params)
    w = omega_p - drive.omega_d
    modes = normal_modes(drive, params)
    settle = settle_decays / modes.slowest_amplitude_rate

    h_max = max_step(params, detuning, w)
    if w != 0.0:
        period = 2.0 * math.pi / abs(w)
        per_period = int(math.ceil(period / h_max))
        h = period / per_period
        window = cycles * per_period
    else:
        h = h_max
        window = int(math.ceil(cycles * 2.0 * math.pi / params.Omega_m / h))
    n_settle = int(math.ceil(settle / h))
    total = n_settle + 2 * window
    if total > max_steps:
        raise ValueError(f"{total} steps exceed the limit of {max_steps}; rescale parameters")

    M = quadrature_matrix(detuning, g, params)
    amp = math.sqrt(2.0) / 2.0  # probe s = exp(-iwt) enters as s/2 on a
    z = np.zeros(4)
    scratch = np.empty((1, 4))
    z = _rk4(M, z, h, n_settle, w, amp, 0.0, n_settle + 1, scratch)

    estimates = []
    t = n_settle * h
    for _ in range(2):
        out = np.empty((window + 1, 4))
        z = _rk4(M, z, h, window, w, amp, t, 1, out)
        samples = out[:window]
        times = t + h * np.arange(window)
        a = (samples[:, 0] + 1j * samples[:, 1]) / math.sqrt(2.0)
        estimates.append(np.mean(a * np.exp(1j * w * times)))
        t += window * h
    drift = abs(estimates[1] - estimates[0]) / max(abs(estimates[1]), 1e-300)
    if drift > tol:
        raise SteadyStateError(f"relative drift {drift:.3g} between windows exceeds {tol}")
    return complex(np.conj(1.0 - params.kappa_ex * estimates[1]))


def desk_scaled(params, gamma_ratio=1e-2):
    """Copy with Γm raised to ``gamma_ratio * κ`` so transients are short.

    Ωm/κ and κex/κ are unchanged.
    """
    return replace(params, Gamma_m=gamma_ratio * params.kappa)


def fit_decay_rate(times, energy):
    """Exponential decay rate from a log-linear least-squares fit."""
    slope, _ = np.polyfit(times, np.log(energy), 1)
    return -slope


# --- equivalence check -----------------------------------------------------

# factorial grid, in units of kappa where dimensionful; None keeps the device value
FACTORIAL_GRID = {
    "g_over_kappa": (0.0, 0.1, 1.0, 3.0),
    "delta_over_kappa": (-1.0, 0.0, 1.0),
    "sideband_ratio": (None,),
    "coupling_ratio": (None,),
}


@dataclass(frozen=True)
class EquivalenceReport:
    """``max_deviation`` is relative to max(|T_oracle|, 1e-6); ``max_abs_deviation`` is absolute."""

    max_deviation: float
    max_abs_deviation: float
    worst_case: dict
    cases: int
    points: int


def _grid_variant(params, sideband_ratio, coupling_ratio):
    k = params.kappa
    kw = {}
    if sideband_ratio is not None:
        kw["Omega_m"] = sideband_ratio * k
    if coupling_ratio is not None:
        kw["kappa_ex"] = coupling_ratio * k
        kw["kappa_0"] = k - coupling_ratio * k
    return replace(params, **kw)


def equivalence_report(params, transmission, probe_points=2001, grid=None):
    """Maximum deviation of ``transmission`` from the linear solve over the factorial grid.

    ``transmission(omega_p, drive, params)`` is the closed form under test.
    Each case uses ``probe_points`` probes spanning ±10κ around ωc.
    """
    grid = {**FACTORIAL_GRID, **(grid or {})}
    worst, worst_abs, worst_case, cases, points = 0.0, 0.0, {}, 0, 0
    for sr in grid["sideband_ratio"]:
        for cr in grid["coupling_ratio"]:
            p = _grid_variant(params, sr, cr)
            k = p.kappa
            wp = p.omega_c + np.linspace(-10 * k, 10 * k, probe_points)
            for gk in grid["g_over_kappa"]:
                for dk in grid["delta_over_kappa"]:
                    drive = DriveConfig.at_delta(p, dk * k, g=gk * k)
                    ref = sideband_linear_solve(wp, drive, p)
                    diff = np.abs(transmission(wp, drive, p) - ref)
                    worst_abs = max(worst_abs, float(diff.max()))
                    dev = diff / np.maximum(np.abs(ref), 1e-6)
                    i = int(np.argmax(dev))
                    cases += 1
                    points += wp.size
                    if dev[i] > worst:
                        worst = float(dev[i])
                        worst_case = {"sideband_ratio": p.sideband_ratio,
                                      "coupling_ratio": p.kappa_ex / k,
                                      "g_over_kappa": gk, "delta_over_kappa": dk,
                                      "probe_offset_over_kappa": float((wp[i] - p.omega_c) / k)}
    return EquivalenceReport(worst, worst_abs, worst_case, cases, points)
