"""Parameter estimation for every extraction the analysis needs.

:func:`least_squares` is a small Levenberg-Marquardt solver working in
internally scaled coordinates; the ``fit_*`` functions wrap it with the
device models and their initial-guess heuristics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .device_model import TWO_PI, DeviceParams
from .response import ComplexSpectrum, DriveConfig, _transmission, dressed_from_g2

FD_STEP = 1e-6
MAX_ITER = 200
FTOL = 1e-10
GTOL = 1e-8
MAX_COND = 1e12


class FitError(ValueError):
    """Input data cannot support the requested fit."""


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-D and of equal length")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.x.shape:
                raise ValueError("weights must match x")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self):
        return self.x.size


@dataclass
class FitResult:
    estimates: dict
    std_errors: dict | None
    residual_norm: float
    iterations: int
    converged: bool
    model_id: str
    grad_norm: float = 0.0
    message: str = ""
    covariance: np.ndarray | None = field(default=None, repr=False)
    dof: int = 0

    @property
    def reduced_chi2_unit(self):
        """Residual sum of squares per degree of freedom (unit-σ residuals)."""
        return self.residual_norm**2 / self.dof if self.dof > 0 else math.nan

    def report(self, hz_keys=()):
        """Plain mapping; keys in ``hz_keys`` are converted from rad/s to Hz."""
        def conv(k, v):
            return None if v is None else (v / TWO_PI if k in hz_keys else v)
        std = self.std_errors or {}
        return {
            "model_id": self.model_id,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "grad_norm": self.grad_norm,
            "message": self.message,
            "estimates": {k + ("_hz" if k in hz_keys else ""): conv(k, v)
                          for k, v in self.estimates.items()},
            "std_errors": {k + ("_hz" if k in hz_keys else ""): conv(k, v)
                           for k, v in std.items()} if self.std_errors is not None else None,
        }


def _residuals(model, data, p, magnitude):
    y_model = model(data.x, p)
    if magnitude:
        r = np.abs(data.y) - np.abs(y_model)
    else:
        r = data.y - y_model
    if data.weights is not None:
        r = r * data.weights
    if np.iscomplexobj(r):
        r = np.concatenate([r.real, r.imag])
    return np.asarray(r, dtype=float)


def least_squares(model, data: Dataset, init, *, scale=None, names=None,
                  magnitude=False, max_iter=MAX_ITER, ftol=FTOL, gtol=GTOL,
                  model_id="custom") -> FitResult:
    """Minimize the squared residuals of ``model(x, p)`` against ``data``.

    Iterates u with p = init + scale * u. Each iteration first tries the
    undamped Gauss-Newton step; damping grows tenfold on each rejected step
    and shrinks tenfold on success. Complex residuals are stacked as real and
    imaginary parts (``magnitude=True`` compares |y| instead).

    Ten consecutive rejected steps end the fit with ``converged=False``.
    """
    p0 = np.asarray(init, dtype=float)
    if not np.all(np.isfinite(p0)):
        raise FitError("initial parameters must be finite")
    n = p0.size
    s = np.ones(n) if scale is None else np.asarray(scale, dtype=float)
    if np.any(s <= 0) or s.shape != p0.shape:
        raise FitError("scale must be positive and match init")
    names = list(names) if names is not None else [f"p{i}" for i in range(n)]

    def res(u):
        return _residuals(model, data, p0 + s * u, magnitude)

    def jac(u):
        cols = []
        for i in range(n):
            du = np.zeros(n)
            du[i] = FD_STEP
            cols.append((res(u + du) - res(u - du)) / (2 * FD_STEP))
        return np.column_stack(cols)

    u = np.zeros(n)
    r = res(u)
    m = r.size
    cost = 0.5 * r @ r
    scale_r = max(np.linalg.norm(np.asarray(data.y).ravel()), 1e-300)
    J = jac(u)
    lam = 0.0
    iterations = 0
    failures = 0
    converged = False
    message = ""

    def grad_measure(J, r):
        rn = np.linalg.norm(r)
        if rn <= 1e-14 * scale_r:
            return 0.0
        cn = np.linalg.norm(J, axis=0)
        cn[cn == 0] = 1.0
        return float(np.max(np.abs(J.T @ r) / (cn * rn)))

    gnorm = grad_measure(J, r)
    if gnorm < gtol:
        converged, message = True, "gradient below tolerance at start"

    while not converged and iterations < max_iter:
        A = J.T @ J
        grad = J.T @ r
        if lam == 0.0:
            step = -np.linalg.lstsq(J, r, rcond=None)[0]
        else:
            D = np.maximum(np.diag(A), 1e-300 + 1e-12 * np.max(np.diag(A)))
            try:
                step = -np.linalg.solve(A + lam * np.diag(D), grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(A + lam * np.diag(D), grad, rcond=None)[0]
        u_new = u + step
        r_new = res(u_new)
        cost_new = 0.5 * r_new @ r_new
        if np.isfinite(cost_new) and cost_new < cost:
            rel = (cost - cost_new) / cost if cost > 0 else 0.0
            u, r, cost = u_new, r_new, cost_new
            iterations += 1
            failures = 0
            lam = 0.0 if lam < 1e-8 else lam / 10.0
            J = jac(u)
            gnorm = grad_measure(J, r)
            if gnorm < gtol:
                converged, message = True, "gradient below tolerance"
            elif rel < ftol:
                converged, message = True, "relative residual change below tolerance"
        else:
            failures += 1
            r_lin = r + J @ step
            predicted = cost - 0.5 * r_lin @ r_lin
            if cost == 0.0 or predicted <= ftol * cost:
                # no model step can reduce the cost by more than ftol: at the floor
                converged, message = True, "relative residual change below tolerance"
                break
            if failures >= 10:
                message = "diverged: 10 consecutive rejected steps"
                break
            lam = 1e-3 if lam == 0.0 else lam * 10.0
    else:
        if not converged:
            message = "maximum iterations reached"

    p = p0 + s * u
    dof = m - n
    cov = None
    std = None
    A = J.T @ J
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(A) if A.size else math.inf
    if dof > 0 and np.isfinite(cond) and cond < MAX_COND:
        cov_u = np.linalg.inv(A) * (2.0 * cost / dof)
        cov = cov_u * np.outer(s, s)
        std = dict(zip(names, np.sqrt(np.abs(np.diag(cov)))))
    return FitResult(
        estimates=dict(zip(names, p.tolist())),
        std_errors=std,
        residual_norm=float(math.sqrt(2.0 * cost)),
        iterations=iterations,
        converged=converged,
        model_id=model_id,
        grad_norm=gnorm,
        message=message,
        covariance=cov,
        dof=dof,
    )


# --- guesses ----------------------------------------------------------------

def _noise_floor(y):
    """Robust per-point noise estimate from first differences."""
    d = np.diff(np.asarray(y))
    if d.size == 0:
        return 0.0
    return float(1.4826 * np.median(np.abs(d)) / math.sqrt(2.0))


def _half_width(x, y, i_ext, level):
    """Width between the crossings of ``level`` on either side of index ``i_ext``.

    ``y`` must be above ``level`` far away and below it at ``i_ext``.
    """
    left = i_ext
    while left > 0 and y[left] < level:
        left -= 1
    right = i_ext
    while right < y.size - 1 and y[right] < level:
        right += 1
    if y[left] < level or y[right] < level:
        return None

    def cross(i, j):
        # linear interpolation between i (above) and j (below)
        return x[i] + (level - y[i]) * (x[j] - x[i]) / (y[j] - y[i])

    return cross(right, right - 1) - cross(left, left + 1)


def guess_cavity(spectrum: ComplexSpectrum):
    """Initial cavity parameters from the dip in |T|².

    ωc is the minimum location, κ the full width at half depth of 1 - |T|²,
    and κex follows from the dip depth |T(ωc)| = κ0/κ. The off-resonant level
    is taken from the spectrum edges.
    """
    w = spectrum.probe_frequencies
    mag = np.abs(spectrum.values)
    if mag.size < 5:
        raise FitError("insufficient points")
    edge = max(2, mag.size // 20)
    baseline = float(np.median(np.concatenate([mag[:edge], mag[-edge:]])))
    i0 = int(np.argmin(mag))
    depth = baseline - mag[i0]
    noise = _noise_floor(mag)
    if depth <= 3.0 * noise or depth <= 1e-12 * baseline:
        raise FitError("no resolvable dip")
    power = (mag / baseline) ** 2
    pmin = power[i0]
    width = _half_width(w, power, i0, 0.5 * (1.0 + pmin))
    if width is None or width <= 0:
        raise FitError("dip is not contained in the spectrum")
    kappa = width
    if w[-1] - w[0] < 3.0 * kappa:
        raise FitError("spectrum must span at least 3 linewidths")
    kappa_ex = kappa * (1.0 - min(mag[i0] / baseline, 1.0))
    return {"omega_c": float(w[i0]), "kappa": float(kappa),
            "kappa_ex": float(kappa_ex), "amplitude": baseline, "noise": noise}


def guess_peak(data: Dataset):
    """Center, FWHM and area of a single Lorentzian peak."""
    x, y = data.x, np.real(data.y).astype(float)
    if x.size < 4:
        raise FitError("insufficient points")
    i0 = int(np.argmax(y))
    floor = float(np.min(y))
    height = y[i0] - floor
    if height <= 3.0 * _noise_floor(y) or height <= 0:
        raise FitError("no resolvable peak")
    width = _half_width(x, -(y - floor), i0, -0.5 * height)
    if width is None or width <= 0:
        # peak narrower than the grid; fall back to two grid spacings
        width = 2.0 * float(np.median(np.diff(x)))
    area = height * math.pi * width / 2.0
    return {"center": float(x[i0]), "width": float(width), "area": float(area)}


def guess_coupling(spectrum: ComplexSpectrum, params: DeviceParams, drive: DriveConfig,
                   n_grid=121):
    """Coarse log-spaced scan of g (plus g = 0), returning the lowest-cost g."""
    w = spectrum.probe_frequencies
    candidates = np.concatenate([[0.0], np.logspace(-4, 1.5, n_grid) * params.kappa])
    costs = []
    for g in candidates:
        t = dressed_from_g2(w, drive.omega_d, g * g, params)
        costs.append(float(np.sum(np.abs(spectrum.values - t) ** 2)))
    return float(candidates[int(np.argmin(costs))])


# --- model fits ---------------------------------------------------------------

def fit_cavity(spectrum: ComplexSpectrum, background=False) -> FitResult:
    """Fit the bare cavity model to a complex spectrum.

    Estimates ``omega_c``, ``kappa`` and ``kappa_ex`` (rad/s); with
    ``background`` a complex factor (``amplitude``, ``phase``) multiplies T.
    """
    guess = guess_cavity(spectrum)
    w_ref = guess["omega_c"]
    k0 = guess["kappa"]
    offsets = spectrum.probe_frequencies - w_ref

    def model(x, p):
        t = _transmission((x - p[0]) / p[1], p[2] / p[1])
        if background:
            t = t * p[3] * np.exp(1j * p[4])
        return t

    init = [0.0, k0, guess["kappa_ex"]]
    scale = [k0, k0, k0]
    names = ["omega_c_offset", "kappa", "kappa_ex"]
    if background:
        init += [guess["amplitude"], 0.0]
        scale += [1.0, 1.0]
        names += ["amplitude", "phase"]
    data = Dataset(offsets, spectrum.values)
    res = least_squares(model, data, init, scale=scale, names=names, model_id="cavity")
    est = res.estimates
    est["omega_c"] = w_ref + est.pop("omega_c_offset")
    if res.std_errors is not None:
        res.std_errors["omega_c"] = res.std_errors.pop("omega_c_offset")
    res.estimates = {"omega_c": est.pop("omega_c"), **est}
    return res


def fit_mechanical(noise_spectrum: Dataset, background=False) -> FitResult:
    """Lorentzian fit of a motional sideband power spectrum.

    Estimates ``Omega_m_eff`` (peak position on the abscissa), the FWHM
    ``Gamma_m_eff`` and the integrated ``area``.
    """
    if len(noise_spectrum) < 4:
        raise FitError("insufficient points")
    guess = guess_peak(noise_spectrum)
    c0, w0 = guess["center"], guess["width"]
    x = noise_spectrum.x - c0

    def model(xx, p):
        half = 0.5 * p[1]
        y = p[2] * (half / math.pi) / ((xx - p[0]) ** 2 + half * half)
        if background:
            y = y + p[3]
        return y

    init = [0.0, w0, guess["area"]]
    scale = [w0, w0, abs(guess["area"])]
    names = ["center_offset", "Gamma_m_eff", "area"]
    if background:
        floor = float(np.min(np.real(noise_spectrum.y)))
        init.append(floor)
        scale.append(max(abs(floor), 1e-3 * guess["area"] / w0))
        names.append("background")
    data = Dataset(x, np.real(noise_spectrum.y).astype(float), noise_spectrum.weights)
    res = least_squares(model, data, init, scale=scale, names=names, model_id="mechanical")
    est = res.estimates
    est["Omega_m_eff"] = c0 + est.pop("center_offset")
    if res.std_errors is not None:
        res.std_errors["Omega_m_eff"] = res.std_errors.pop("center_offset")
    res.estimates = {"Omega_m_eff": est.pop("Omega_m_eff"), **est}
    return res


def fit_coupling(spectrum: ComplexSpectrum, params: DeviceParams, drive: DriveConfig,
                 background=False, magnitude=False) -> FitResult:
    """Fit the linearized coupling g with the cavity parameters held fixed.

    The fitted coordinate is g² (allowed to go negative), which keeps the
    problem well conditioned at g = 0. Estimates: ``g_squared``, ``g``
    (= sqrt(max(g², 0))) and, with ``background``, ``amplitude``/``phase``.
    """
    g_init = guess_coupling(spectrum, params, drive)
    # scale of g²: the guess, but never below the g at which cooperativity is ~1
    g2_scale = max(g_init**2, 0.25 * params.kappa * params.Gamma_m)
    w = spectrum.probe_frequencies

    def model(x, p):
        t = dressed_from_g2(x, drive.omega_d, p[0], params)
        if background:
            t = t * p[1] * np.exp(1j * p[2])
        return t

    init = [g_init**2]
    scale = [g2_scale]
    names = ["g_squared"]
    if background:
        edge = max(2, len(spectrum) // 20)
        ends = np.concatenate([spectrum.values[:edge], spectrum.values[-edge:]])
        init += [float(np.median(np.abs(ends))), float(np.angle(np.mean(ends)))]
        scale += [1.0, 1.0]
        names += ["amplitude", "phase"]
    res = least_squares(model, Dataset(w, spectrum.values), init, scale=scale,
                        names=names, magnitude=magnitude, model_id="coupling")
    g2 = res.estimates["g_squared"]
    g = math.sqrt(max(g2, 0.0))
    res.estimates = {"g": g, **res.estimates}
    if res.std_errors is not None:
        s2 = res.std_errors["g_squared"]
        res.std_errors = {"g": s2 / (2.0 * g) if g > 0 else math.inf, **res.std_errors}
    return res


def fit_sqrt_law(points, relative=False, sigma=None) -> FitResult:
    """Closed-form fit of g = g0·sqrt(n_d) to ``(n_d, g)`` pairs.

    The default assumes equal absolute scatter on g. ``relative=True``
    weights each point by 1/n_d, which suits scatter proportional to g;
    points with n_d = 0 then carry no information and are dropped.
    ``sigma`` gives per-point standard errors on g; the fit is then
    inverse-variance weighted and the error on g0 is propagated from them.
    """
    arr = np.asarray(list(points), dtype=float).reshape(-1, 2)
    n_d, g = arr[:, 0], arr[:, 1]
    if arr.shape[0] == 0 or not np.any(n_d > 0):
        raise FitError("sqrt-law fit needs at least one point with n_d > 0")
    if np.any(n_d < 0):
        raise FitError("n_d must be non-negative")
    dof = n_d.size - 1
    std = None
    if sigma is not None:
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), n_d.shape)
        if not np.all(np.isfinite(sig) & (sig > 0)):
            raise FitError("sigma must be positive and finite")
        w = 1.0 / sig**2
        root = np.sqrt(n_d)
        info = w @ n_d
        g0 = float((w * root) @ g / info)
        r = (g - g0 * root) / sig
        std = {"g0": float(math.sqrt(1.0 / info))}
    elif relative:
        keep = n_d > 0
        n_d, g = n_d[keep], g[keep]
        dof = n_d.size - 1
        ratio = g / np.sqrt(n_d)
        g0 = float(ratio.mean())
        r = ratio - g0
        if dof > 0:
            std = {"g0": float(math.sqrt((r @ r) / dof / n_d.size))}
    else:
        root = np.sqrt(n_d)
        g0 = float(root @ g / (n_d.sum()))
        r = g - g0 * root
        if dof > 0:
            std = {"g0": float(math.sqrt((r @ r) / dof / n_d.sum()))}
    return FitResult(estimates={"g0": g0}, std_errors=std,
                     residual_norm=float(np.linalg.norm(r)), iterations=0,
                     converged=True, model_id="sqrt_law", message="closed form", dof=dof)


def fit_backaction(sweep, params: DeviceParams, n_d, use="both") -> FitResult:
    """Shared-coupling fit of the optical spring and damping versus δ.

    ``sweep`` maps ``delta``, ``Omega_m_eff`` and ``Gamma_m_eff`` to arrays.
    ``n_d`` is a scalar or one value per point (constant input power gives a
    δ-dependent photon number). The fitted quantity is g0 with g = g0·sqrt(n_d);
    the frequency pull follows as G = g0 / x_zp. ``use`` selects ``"both"``,
    ``"shift"`` or ``"damping"`` residuals.
    """
    delta = np.asarray(sweep["delta"], dtype=float)
    Om = np.asarray(sweep["Omega_m_eff"], dtype=float)
    Gm = np.asarray(sweep["Gamma_m_eff"], dtype=float)
    if use not in ("both", "shift", "damping"):
        raise ValueError("use must be 'both', 'shift' or 'damping'")
    if delta.min() > -2 * params.kappa or delta.max() < 2 * params.kappa:
        raise FitError("sweep must span at least ±2κ in delta")
    n_arr = np.broadcast_to(np.asarray(n_d, dtype=float), delta.shape)
    k = params.kappa
    lor = 4.0 * n_arr / (k * k + 4.0 * delta * delta)

    blocks_x = []
    blocks_y = []
    if use in ("both", "shift"):
        blocks_x.append(lor * delta)
        blocks_y.append(Om - params.Omega_m)
    if use in ("both", "damping"):
        blocks_x.append(lor * k)
        blocks_y.append(Gm - params.Gamma_m)
    design = np.concatenate(blocks_x)
    target = np.concatenate(blocks_y)

    # model is linear in g0²: y = g0² * design
    q_guess = float(design @ target / (design @ design)) if design @ design > 0 else 0.0
    q_scale = max(abs(q_guess), (1e-3 * params.g0) ** 2)
    data = Dataset(np.arange(design.size, dtype=float), target)
    res = least_squares(lambda x, p: p[0] * design, data, [q_guess], scale=[q_scale],
                        names=["g0_squared"], model_id=f"backaction_{use}")
    q = res.estimates["g0_squared"]
    g0 = math.sqrt(max(q, 0.0))
    x_zp = params.x_zp
    est = {"g0": g0, "G": g0 / x_zp}
    std = None
    if res.std_errors is not None:
        sq = res.std_errors["g0_squared"]
        sg0 = sq / (2.0 * g0) if g0 > 0 else math.inf
        std = {"g0": sg0, "G": sg0 / x_zp, "g0_squared": sq}
    if np.ndim(n_d) == 0:
        est["g"] = g0 * math.sqrt(float(n_d))
        if std is not None:
            std["g"] = std["g0"] * math.sqrt(float(n_d))
    est["g0_squared"] = q
    res.estimates = est
    res.std_errors = std
    return res
