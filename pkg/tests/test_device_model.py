import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from electromech import (
    TWO_PI,
    DeviceParams,
    drive_photon_number,
    figures_of_merit,
    lc_resonance,
    parallel_plate_pull,
    pumped_coupling,
    single_photon_coupling,
    thermal_occupancy,
    zero_point_motion,
)
from electromech.device_model import HBAR, KB, PUBLISHED_PARAMETERS_HZ

positive = st.floats(min_value=1e-30, max_value=1e30, allow_nan=False, allow_infinity=False)


# --- frozen values for the published device ----------------------------------

def test_published_frozen_values(device):
    assert device.x_zp == pytest.approx(3.962414e-15, rel=1e-6)
    assert device.g0 / TWO_PI == pytest.approx(221.8949, rel=1e-6)
    assert device.cavity_pull / TWO_PI == pytest.approx(-56e15, rel=1e-15)
    fom = figures_of_merit(device)
    assert fom.n_mech == pytest.approx(77.4678, rel=1e-5)
    assert fom.n_cavity == pytest.approx(1.28131e-4, rel=1e-5)
    assert fom.q_mechanical == pytest.approx(356333.33, rel=1e-7)
    assert fom.sideband_ratio == pytest.approx(62.882353, rel=1e-7)
    assert fom.cooling_factor == pytest.approx(5666.6667, rel=1e-7)
    assert fom.group_delay == pytest.approx(5.305165e-3, rel=1e-6)
    assert fom.storage_time == pytest.approx(6.84822e-5, rel=1e-5)
    assert fom.lc_frequency / TWO_PI == pytest.approx(7.45311e9, rel=1e-5)
    assert fom.gamma_th == pytest.approx(fom.n_mech * device.Gamma_m, rel=1e-15)


def test_published_drive_photon_number(device):
    n = drive_photon_number(10e-12, device.omega_c - device.Omega_m, -device.Omega_m,
                            device.kappa, device.kappa_ex)
    assert n == pytest.approx(183.1, rel=1e-3)
    assert n <= 800


# --- zero_point_motion ------------------------------------------------------

def test_zero_point_motion_examples():
    assert zero_point_motion(1.0, 1.0) == pytest.approx(math.sqrt(HBAR / 2), rel=1e-15)
    assert zero_point_motion(1.0, 1.0) == pytest.approx(7.26e-18, rel=1e-3)
    x = zero_point_motion(50e-15, TWO_PI * 10.69e6)
    assert abs(x / 4.1e-15 - 1) < 0.05
    assert zero_point_motion(200e-15, 1e6) == pytest.approx(zero_point_motion(50e-15, 1e6) / 2)


@pytest.mark.parametrize("m, w", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, math.nan)])
def test_zero_point_motion_domain(m, w):
    with pytest.raises(ValueError):
        zero_point_motion(m, w)


@given(st.floats(1e-20, 1e3), st.floats(1e-3, 1e12))
def test_zero_point_motion_identity(m, w):
    x = zero_point_motion(m, w)
    assert x * x * 2 * m * w == pytest.approx(HBAR, rel=1e-12)


# --- coupling chain -----------------------------------------------------------

def test_parallel_plate_examples():
    G = parallel_plate_pull(TWO_PI * 10e9, 50e-9, 1.0)
    assert G < 0
    assert abs(G) / TWO_PI * 1e-9 == pytest.approx(100e6, rel=1e-12)
    assert abs(parallel_plate_pull(TWO_PI * 10e9, 50e-9, 1e-3)) / TWO_PI * 1e-9 == \
        pytest.approx(100e3, rel=1e-12)
    assert abs(parallel_plate_pull(1e10, 1e-7, 1e-300)) < 1e-280
    with pytest.raises(ValueError):
        parallel_plate_pull(1e10, 0.0)
    with pytest.raises(ValueError):
        parallel_plate_pull(1e10, 1e-7, 0.0)
    with pytest.raises(ValueError):
        parallel_plate_pull(1e10, 1e-7, 1.5)


def test_lc_resonance_examples():
    assert lc_resonance(1.0, 1.0) == 1.0
    assert lc_resonance(4.0, 1.0) == 0.5
    assert lc_resonance(12e-9, 38e-15) / TWO_PI == pytest.approx(7.45e9, rel=1e-3)
    with pytest.raises(ValueError):
        lc_resonance(0.0, 1.0)


def test_single_photon_coupling_examples():
    G = TWO_PI * 56e15
    assert single_photon_coupling(G, 4.1e-15) / TWO_PI == pytest.approx(229.6, rel=1e-3)
    assert single_photon_coupling(-G, 4.1e-15) == single_photon_coupling(G, 4.1e-15)
    assert single_photon_coupling(G, 0.0) == 0.0
    assert single_photon_coupling(2 * G, 1e-15) == 2 * single_photon_coupling(G, 1e-15)
    with pytest.raises(ValueError):
        single_photon_coupling(G, -1.0)


@given(st.floats(1e8, 1e11), st.floats(1e-9, 1e-5), st.floats(1e-6, 1.0),
       st.floats(1e-18, 1e-9), st.floats(1e3, 1e9))
def test_coupling_chain_identity(wc, d, eta, m, Om):
    x = zero_point_motion(m, Om)
    g0 = single_photon_coupling(parallel_plate_pull(wc, d, eta), x)
    assert g0 == eta * wc / (2.0 * d) * x


def test_pumped_coupling():
    g0 = TWO_PI * 230
    assert pumped_coupling(g0, 5e6) / TWO_PI == pytest.approx(514e3, rel=2e-3)
    assert pumped_coupling(g0, 1.0) == g0
    assert pumped_coupling(g0, 0.0) == 0.0
    with pytest.raises(ValueError):
        pumped_coupling(g0, -1.0)


def test_drive_photon_number_examples(device):
    wd = device.omega_c
    assert drive_photon_number(0.0, wd, 0.0, device.kappa, device.kappa_ex) == 0.0
    on = drive_photon_number(1e-12, wd, 0.0, device.kappa, device.kappa_ex)
    assert on == pytest.approx(2e-12 * device.kappa_ex / (HBAR * wd * device.kappa**2), rel=1e-15)
    off = drive_photon_number(1e-12, wd, device.kappa, device.kappa, device.kappa_ex)
    assert off == pytest.approx(on / 5, rel=1e-14)
    with pytest.raises(ValueError):
        drive_photon_number(1e-12, 0.0, 0.0, device.kappa, device.kappa_ex)
    with pytest.raises(ValueError):
        drive_photon_number(-1e-12, wd, 0.0, device.kappa, device.kappa_ex)


# --- thermal_occupancy --------------------------------------------------------

def test_thermal_occupancy_examples():
    assert thermal_occupancy(TWO_PI * 10.69e6, 0.04) == pytest.approx(77.47, rel=1e-3)
    assert thermal_occupancy(TWO_PI * 7.47e9, 0.04) == pytest.approx(1.28e-4, rel=1e-2)
    assert thermal_occupancy(1e9, 0.0) == 0.0
    assert 0.0 <= thermal_occupancy(1e15, 1e-3) < 1e-300
    with pytest.raises(ValueError):
        thermal_occupancy(0.0, 1.0)
    with pytest.raises(ValueError):
        thermal_occupancy(1e9, -1.0)


@given(st.floats(1e3, 1e12), st.floats(1e-3, 1e2), st.floats(1.01, 10.0))
def test_thermal_occupancy_monotone(w, T, factor):
    assert thermal_occupancy(w, T * factor) >= thermal_occupancy(w, T)
    assert thermal_occupancy(w * factor, T) <= thermal_occupancy(w, T)


@given(st.floats(1e-8, 1e-3))
def test_thermal_occupancy_classical_limit(x):
    T = 1.0
    w = x * KB * T / HBAR
    assert thermal_occupancy(w, T) == pytest.approx(KB * T / (HBAR * w), rel=0.01)


# --- DeviceParams -------------------------------------------------------------

def test_params_reject_inconsistent_kappa(device):
    with pytest.raises(ValueError, match="kappa_ex"):
        replace(device, kappa_0=device.kappa_0 * (1 + 1e-6))
    # within the 1e-12 tolerance is accepted
    replace(device, kappa_0=device.kappa_0 * (1 + 1e-14))


@pytest.mark.parametrize("field, value", [
    ("kappa", -1.0), ("Omega_m", 0.0), ("Gamma_m", math.inf), ("mass", 0.0),
    ("gap", -1e-9), ("temperature", 0.0), ("eta", 0.0), ("eta", 1.01),
    ("kappa_0", -1.0), ("cavity_pull", math.nan),
])
def test_params_reject_invalid(device, field, value):
    with pytest.raises(ValueError):
        replace(device, **{field: value})


def test_params_allow_overcoupled(device):
    p = replace(device, kappa_ex=device.kappa, kappa_0=0.0)
    assert p.kappa_0 == 0.0


def test_params_default_pull_from_geometry(device):
    p = replace(device, cavity_pull=None)
    assert p.cavity_pull == parallel_plate_pull(device.omega_c, device.gap, device.eta)
    assert p.cavity_pull < 0


def test_params_predicates(device):
    assert device.resolved_sideband
    assert not replace(device, Omega_m=0.5 * device.kappa).resolved_sideband
    assert device.cooperativity_per_g2 * device.kappa * device.Gamma_m == pytest.approx(4.0)


def test_hz_round_trip(device):
    raw = device.to_hz()
    for key, value in PUBLISHED_PARAMETERS_HZ.items():
        assert raw[key] == pytest.approx(value, rel=1e-15)
    again = DeviceParams.from_hz(
        f_cavity=raw["f_cavity_hz"], kappa=raw["kappa_hz"], kappa_ext=raw["kappa_ext_hz"],
        kappa_int=raw["kappa_int_hz"], f_mech=raw["f_mech_hz"], gamma_m=raw["gamma_m_hz"],
        mass=raw["mass_kg"], gap=raw["gap_m"], inductance=raw["inductance_h"],
        capacitance=raw["capacitance_f"], eta=raw["eta"], temperature=raw["temperature_k"],
        cavity_pull_per_m=raw["cavity_pull_hz_per_m"])
    for key, value in again.as_dict().items():
        assert value == pytest.approx(getattr(device, key), rel=1e-15)


# --- FiguresOfMerit -----------------------------------------------------------

def test_figures_scale_with_gamma(device):
    a = figures_of_merit(device)
    b = figures_of_merit(replace(device, Gamma_m=2 * device.Gamma_m))
    for name in ("q_mechanical", "cooling_factor", "group_delay"):
        assert getattr(b, name) == pytest.approx(getattr(a, name) / 2, rel=1e-15)


def test_figures_report_units(device):
    fom = figures_of_merit(device)
    rep = fom.report()
    assert rep["g0_over_pi_hz"] == pytest.approx(2 * rep["g0_over_2pi_hz"], rel=1e-15)
    assert rep["gamma_th_hz"] == pytest.approx(fom.gamma_th / TWO_PI)
    assert all(np.isfinite(v) and v >= 0 for v in rep.values())
