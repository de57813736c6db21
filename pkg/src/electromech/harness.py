"""Synthetic versions of the measurements: probe sweeps, power and detuning
sweeps, two-tone maps, seeded noise and synthesize-then-fit pipelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fit as _fit
from .device_model import TWO_PI, DeviceParams, drive_photon_number, pumped_coupling
from .response import (
    ComplexSpectrum,
    DriveConfig,
    backaction,
    bare_transmission,
    dressed_transmission,
)

# figure-like default extents (ordinary frequency)
PROBE_SPAN_HZ = 2.5e6
DELTA_SPAN_HZ = 600e3
MAP_DRIVE_SPAN_HZ = 300e3
MAP_PROBE_SPAN_HZ = 2e6


@dataclass(frozen=True)
class NoiseModel:
    """Additive complex white noise with E|n|² = sigma²."""

    sigma: float
    seed: int = 0
    kind: str = "complex_white"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.kind != "complex_white":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass
class SweepResult:
    """Family of spectra and/or derived scalars with full provenance.

    ``axes`` holds the swept grids (rad/s or dimensionless), ``scalars`` the
    per-point derived values keyed by name, ``spectra`` the per-point
    spectra when kept.
    """

    kind: str
    axes: dict
    units: dict
    scalars: dict = field(default_factory=dict)
    spectra: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def complex_noise(seed, start, count, sigma):
    """Noise for point indices ``start .. start+count-1``.

    Each point index owns one Philox block, so any sub-range reproduces the
    same values as the full grid regardless of evaluation order.
    """
    if count == 0:
        return np.zeros(0, dtype=complex)
    bg = np.random.Philox(key=int(seed))
    bg.advance(int(start))
    raw = bg.random_raw(4 * count).reshape(count, 4)
    u = ((raw[:, :2] >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    # Box-Muller, two normals per point
    rad = np.sqrt(-2.0 * np.log(u[:, 0]))
    z = rad * np.exp(2j * math.pi * u[:, 1])
    return sigma / math.sqrt(2.0) * z


def inject_noise(spectrum: ComplexSpectrum, model: NoiseModel | None) -> ComplexSpectrum:
    if model is None or model.sigma == 0:
        return spectrum
    noise = complex_noise(model.seed, 0, len(spectrum), model.sigma)
    return spectrum.with_values(spectrum.values + noise,
                                noise={"sigma": model.sigma, "seed": int(model.seed)})


def figure_probe_grid(params, points=2001, span_hz=PROBE_SPAN_HZ):
    return params.omega_c + TWO_PI * np.linspace(-span_hz, span_hz, points)


def probe_sweep(params: DeviceParams, drive: DriveConfig, grid=None, noise=None):
    """Dressed probe spectrum on ``grid`` (default ±2.5 MHz around ωc)."""
    grid = figure_probe_grid(params) if grid is None else np.asarray(grid, dtype=float)
    values = dressed_transmission(grid, drive, params)
    spectrum = ComplexSpectrum(grid, values, {
        "params": params, "drive": drive, **drive.describe(params)})
    return inject_noise(spectrum, noise)


def local_minima(y):
    """Indices of strict interior local minima."""
    y = np.asarray(y)
    return np.flatnonzero((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])) + 1


def _refine_extremum(x, y, i):
    """Parabolic refinement of a sampled extremum at index ``i``."""
    if i <= 0 or i >= len(y) - 1:
        return float(x[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom == 0:
        return float(x[i])
    return float(x[i] + 0.5 * (y0 - y2) / denom * (x[i + 1] - x[i]))


def split_minima(spectrum: ComplexSpectrum):
    """Positions of the two deepest local minima of |T| (sorted), or None."""
    mag = np.abs(spectrum.values)
    idx = local_minima(mag)
    if idx.size < 2:
        return None
    two = idx[np.argsort(mag[idx])[:2]]
    pos = sorted(_refine_extremum(spectrum.probe_frequencies, mag, i) for i in two)
    return pos[0], pos[1]


def resolved_splitting(spectrum: ComplexSpectrum, params: DeviceParams):
    """Separation of the two |T| minima when it exceeds the bare linewidth κ.

    Below that the minima sit inside the bare cavity dip (a transparency
    window rather than resolved normal modes) and None is returned.
    """
    pair = split_minima(spectrum)
    if pair is None:
        return None
    sep = pair[1] - pair[0]
    return sep if sep > params.kappa else None


def crossover_photon_number(params: DeviceParams, lo=1e3, hi=1e7, rel_tol=1e-3,
                            points=4001, span=None):
    """Smallest n_d (at Δ = -Ωm) whose spectrum shows resolved normal modes.

    Bisects in log n_d; the resolved criterion is monotone in n_d.
    """
    span = 6.0 * params.kappa if span is None else span
    grid = params.omega_c + np.linspace(-span, span, points)

    def resolved(n):
        drive = DriveConfig.at_delta(params, 0.0, n_d=n)
        return resolved_splitting(probe_sweep(params, drive, grid), params) is not None

    if resolved(lo) or not resolved(hi):
        raise ValueError("crossover not bracketed by [lo, hi]")
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        if resolved(mid):
            hi = mid
        else:
            lo = mid
    return hi


def omit_feature(spectrum: ComplexSpectrum, params: DeviceParams):
    """Center (ωp - ωd) and FWHM of the narrow interference feature.

    The feature is isolated as |T - T_bare|², whose peak is a Lorentzian of
    width Γ'm at ωd + Ω'm when g is small compared with κ.
    """
    drive = spectrum.metadata["drive"]
    w = spectrum.probe_frequencies
    d2 = np.abs(spectrum.values - bare_transmission(w, params)) ** 2
    i = int(np.argmax(d2))
    center = _refine_extremum(w, d2, i)
    width = _fit._half_width(w, -d2, i, -0.5 * d2[i])
    return center - drive.omega_d, width


def power_sweep(params: DeviceParams, n_d_list, grid=None, noise=None, detuning=None,
                background=False, keep_spectra=True):
    """Probe spectra at each drive photon number plus the fitted g per point.

    Fit failures are recorded per point; the sweep continues. The final
    sqrt-law fit lands in ``extra["sqrt_law"]`` (or ``extra["sqrt_law_error"]``).
    """
    n_d_list = np.asarray(n_d_list, dtype=float)
    if n_d_list.size == 0:
        raise ValueError("n_d_list must not be empty")
    detuning = -params.Omega_m if detuning is None else detuning
    grid = figure_probe_grid(params) if grid is None else np.asarray(grid, dtype=float)
    omega_d = params.omega_c + detuning
    g_true, g_fit, g_err, ok, msgs, spectra = [], [], [], [], [], []
    for i, n in enumerate(n_d_list):
        drive = DriveConfig(omega_d=omega_d, n_d=float(n))
        point_noise = None
        if noise is not None:
            # one independent stream per sweep point
            point_noise = NoiseModel(noise.sigma, _child_seed(noise.seed, i))
        spec = probe_sweep(params, drive, grid, point_noise)
        if keep_spectra:
            spectra.append(spec)
        g_true.append(drive.coupling(params))
        try:
            res = _fit.fit_coupling(spec, params, drive, background=background)
            g_fit.append(res.estimates["g"])
            g_err.append((res.std_errors or {}).get("g", math.nan))
            ok.append(res.converged)
            msgs.append(res.message)
        except (ValueError, ArithmeticError) as exc:
            g_fit.append(math.nan)
            g_err.append(math.nan)
            ok.append(False)
            msgs.append(str(exc))
    result = SweepResult(
        kind="power",
        axes={"n_d": n_d_list, "probe": grid},
        units={"n_d": "1", "probe": "rad/s", "g": "rad/s"},
        scalars={"n_d": n_d_list, "g_true": np.array(g_true), "g_fit": np.array(g_fit),
                 "g_err": np.array(g_err), "converged": np.array(ok)},
        spectra=spectra,
        provenance=_provenance(params, noise, grid=grid, detuning=detuning),
        extra={"messages": msgs},
    )
    good = np.isfinite(result.scalars["g_fit"])
    try:
        pts = np.column_stack([n_d_list[good], result.scalars["g_fit"][good]])
        err = result.scalars["g_err"][good]
        # weight by the per-point errors when noise makes them meaningful
        sigma = err if noise is not None and np.all(np.isfinite(err) & (err > 0)) else None
        result.extra["sqrt_law"] = _fit.fit_sqrt_law(pts, sigma=sigma)
    except _fit.FitError as exc:
        result.extra["sqrt_law_error"] = str(exc)
    return result


def default_delta_grid(points=121, span_hz=DELTA_SPAN_HZ):
    return TWO_PI * np.linspace(-span_hz, span_hz, points)


def detuning_sweep(params: DeviceParams, p_in, delta_grid=None, cross_check=False,
                   probe_points=4001):
    """Backaction versus relative detuning at constant input power.

    Per δ: Δ = δ - Ωm, n_d from the input power, g = g0·sqrt(n_d), then the
    optical-spring frequency and damping. ``cross_check`` additionally reads
    both off dressed spectra via :func:`omit_feature`.
    """
    delta = default_delta_grid() if delta_grid is None else np.asarray(delta_grid, dtype=float)
    if np.any(np.abs(delta) > params.Omega_m / 2):
        raise ValueError("delta grid must stay within ±Omega_m/2")
    omega_d = params.omega_c - params.Omega_m + delta
    n_d = np.array([drive_photon_number(p_in, wd, d - params.Omega_m, params.kappa,
                                        params.kappa_ex) for wd, d in zip(omega_d, delta)])
    g = pumped_coupling(params.g0, n_d)
    Om, Gm = backaction(delta, g, params)
    scalars = {"delta": delta, "n_d": n_d, "g": g, "Omega_m_eff": Om, "Gamma_m_eff": Gm}
    if cross_check:
        c_out, w_out = [], []
        for wd, gi, O, G in zip(omega_d, g, Om, Gm):
            drive = DriveConfig(omega_d=wd, g=float(gi))
            span = 40.0 * G
            grid = wd + O + np.linspace(-span, span, probe_points)
            c, wdt = omit_feature(probe_sweep(params, drive, grid), params)
            c_out.append(c)
            w_out.append(math.nan if wdt is None else wdt)
        scalars["Omega_m_eff_spectral"] = np.array(c_out)
        scalars["Gamma_m_eff_spectral"] = np.array(w_out)
    return SweepResult(
        kind="detuning",
        axes={"delta": delta},
        units={"delta": "rad/s", "Omega_m_eff": "rad/s", "Gamma_m_eff": "rad/s", "g": "rad/s"},
        scalars=scalars,
        provenance=_provenance(params, None, p_in=p_in, delta_grid=delta),
    )


def _coupled_drive(params, omega_d, coupling):
    (key, value), = coupling.items()
    if key not in ("g", "n_d", "p_in"):
        raise ValueError(f"unknown coupling key {key!r}")
    return DriveConfig(omega_d=float(omega_d), **{key: float(value)})


def default_map_grids(params, drive_points=61, probe_points=2001,
                      drive_span_hz=MAP_DRIVE_SPAN_HZ, probe_span_hz=MAP_PROBE_SPAN_HZ):
    wd = params.omega_c - params.Omega_m + TWO_PI * np.linspace(-drive_span_hz, drive_span_hz,
                                                                drive_points)
    wp = params.omega_c + TWO_PI * np.linspace(-probe_span_hz, probe_span_hz, probe_points)
    return wd, wp


def two_tone_map(params: DeviceParams, omega_d_grid=None, omega_p_grid=None,
                 coupling=None, noise=None):
    """|T| in dB over a drive × probe grid.

    ``coupling`` is a one-entry mapping such as ``{"n_d": 1e4}``, ``{"g": ...}``
    or ``{"p_in": ...}`` (constant power makes n_d vary with ωd). Noise rows
    use one child seed per drive index.
    """
    coupling = {"n_d": 0.0} if coupling is None else dict(coupling)
    wd_def, wp_def = default_map_grids(params)
    wd = wd_def if omega_d_grid is None else np.asarray(omega_d_grid, dtype=float)
    wp = wp_def if omega_p_grid is None else np.asarray(omega_p_grid, dtype=float)
    for grid in (wd, wp):
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("grids must be strictly increasing")
    mag = np.empty((wd.size, wp.size))
    g_rows = np.empty(wd.size)
    for i, omega_d in enumerate(wd):
        drive = _coupled_drive(params, omega_d, coupling)
        g_rows[i] = drive.coupling(params)
        t = dressed_transmission(wp, drive, params)
        if noise is not None and noise.sigma > 0:
            t = t + complex_noise(_child_seed(noise.seed, i), 0, wp.size, noise.sigma)
        mag[i] = 20.0 * np.log10(np.abs(t))
    return SweepResult(
        kind="map",
        axes={"omega_d": wd, "omega_p": wp},
        units={"omega_d": "rad/s", "omega_p": "rad/s", "mag_db": "dB"},
        scalars={"mag_db": mag, "g": g_rows},
        provenance=_provenance(params, noise, coupling=coupling),
    )


def map_mode_separation(result: SweepResult):
    """Per drive row, separation of the two deepest |T| minima (NaN if absent)."""
    wp = result.axes["omega_p"]
    out = np.full(result.axes["omega_d"].size, math.nan)
    for i, row in enumerate(result.scalars["mag_db"]):
        idx = local_minima(row)
        if idx.size >= 2:
            two = idx[np.argsort(row[idx])[:2]]
            a, b = sorted(_refine_extremum(wp, row, j) for j in two)
            out[i] = b - a
    return out


def _child_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def _provenance(params, noise, **extra):
    prov = {"params": params.to_hz()}
    if noise is not None:
        prov["noise"] = {"sigma": noise.sigma, "seed": int(noise.seed)}
    for k, v in extra.items():
        prov[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return prov


def roundtrip(params: DeviceParams, sigma=0.0, seed=0, n_d_list=None, p_in=10e-12,
              points=2001, cavity_span=None):
    """Synthesize each figure's data, fit it, and compare with the truth.

    Returns rows ``(name, truth, estimate, std_error)`` in rad/s (G in rad/s/m).
    """
    rows = []
    noise = NoiseModel(sigma, seed) if sigma > 0 else None
    span = 10 * params.kappa if cavity_span is None else cavity_span
    cav_grid = params.omega_c + np.linspace(-span, span, points)
    bare = probe_sweep(params, DriveConfig.at_delta(params, 0.0, n_d=0.0), cav_grid, noise)
    res = _fit.fit_cavity(bare)
    std = res.std_errors or {}
    for k in ("omega_c", "kappa", "kappa_ex"):
        rows.append((k, getattr(params, k), res.estimates[k], std.get(k, math.nan)))

    n_d_list = [1e2, 1e4, 1e6] if n_d_list is None else n_d_list
    sweep = power_sweep(params, n_d_list, noise=noise, keep_spectra=False)
    for n, gt, gf, ge in zip(n_d_list, sweep.scalars["g_true"], sweep.scalars["g_fit"],
                             sweep.scalars["g_err"]):
        rows.append((f"g@n_d={n:g}", gt, gf, ge))
    if "sqrt_law" in sweep.extra:
        law = sweep.extra["sqrt_law"]
        rows.append(("g0", params.g0, law.estimates["g0"],
                     (law.std_errors or {}).get("g0", math.nan)))

    det = detuning_sweep(params, p_in)
    ba = _fit.fit_backaction(det.scalars, params, det.scalars["n_d"])
    rows.append(("G", abs(params.cavity_pull), ba.estimates["G"],
                 (ba.std_errors or {}).get("G", math.nan)))
    return rows
