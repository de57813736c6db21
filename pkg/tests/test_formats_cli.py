import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from electromech import TWO_PI, ComplexSpectrum, DriveConfig, cli, formats, harness
from electromech.device_model import PUBLISHED_PARAMETERS_HZ
from electromech.formats import InputError


def kv_text(mapping, drop=()):
    return "".join(f"{k} = {v!r}\n" for k, v in mapping.items() if k not in drop)


# --- parameter files -----------------------------------------------------------

def test_params_json_and_kv_agree(device):
    a = formats.parse_params(json.dumps(PUBLISHED_PARAMETERS_HZ))
    b = formats.parse_params("# published device\n" + kv_text(PUBLISHED_PARAMETERS_HZ))
    assert a == b
    assert a.as_dict() == pytest.approx(device.as_dict(), rel=1e-15)


def test_params_dump_round_trip(device, tmp_path):
    path = tmp_path / "p.json"
    formats.write_params(device, path)
    assert formats.read_params(path) == device


def test_params_missing_key():
    with pytest.raises(InputError, match="mass_kg"):
        formats.parse_params(kv_text(PUBLISHED_PARAMETERS_HZ, drop=("mass_kg",)))
    # the geometric pull is optional
    formats.parse_params(kv_text(PUBLISHED_PARAMETERS_HZ, drop=("cavity_pull_hz_per_m",)))


@pytest.mark.parametrize("text, pattern", [
    ("f_cavity_hz 7e9\n", r"<params>:1: expected"),
    ("f_cavity_hz = fast\n", r"<params>:1: key 'f_cavity_hz' has non-numeric"),
    ('{"f_cavity_hz": 7e9,}', r"<params>:1:"),
    ("[1, 2]", r"expected"),
    ("bogus = 1\n", r"unknown key\(s\): bogus"),
])
def test_params_diagnostics(text, pattern):
    with pytest.raises(InputError, match=pattern):
        formats.parse_params(text)


def test_params_physical_validation():
    bad = dict(PUBLISHED_PARAMETERS_HZ, kappa_hz=-1.0)
    with pytest.raises(InputError):
        formats.parse_params(json.dumps(bad))
    with pytest.raises(InputError, match="must be a number"):
        formats.parse_params(json.dumps(dict(PUBLISHED_PARAMETERS_HZ, eta="1")))


def test_read_params_missing_file(tmp_path):
    with pytest.raises(InputError):
        formats.read_params(tmp_path / "nope.json")


# --- CSV round trips -----------------------------------------------------------

def test_spectrum_csv_round_trip(device):
    drive = DriveConfig.at_delta(device, 0.0, n_d=1e5)
    spec = harness.probe_sweep(device, drive, noise=harness.NoiseModel(0.01, 1))
    text = formats.spectrum_to_csv(spec)
    back = formats.csv_to_spectrum(text)
    assert np.array_equal(back.values, spec.values)
    ulp = np.spacing(spec.probe_frequencies)
    assert np.all(np.abs(back.probe_frequencies - spec.probe_frequencies) <= ulp)
    assert formats.spectrum_to_csv(back) == text
    assert text.splitlines()[0] == ",".join(formats.SPECTRUM_COLUMNS)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(1e3, 1e11), st.floats(-2, 2), st.floats(-2, 2)),
                min_size=1, max_size=20, unique_by=lambda t: t[0]))
def test_spectrum_csv_idempotent(rows):
    rows = sorted(rows)
    f, re_, im_ = (np.array(c) for c in zip(*rows))
    spec = ComplexSpectrum(TWO_PI * f, re_ + 1j * im_)
    text = formats.spectrum_to_csv(spec)
    back = formats.csv_to_spectrum(text)
    assert np.array_equal(back.values, spec.values)
    assert formats.spectrum_to_csv(back) == text


@pytest.mark.parametrize("text, pattern", [
    ("", "header"),
    ("a,b\n1,2\n", "header"),
    ("probe_freq_hz,re_t,im_t,mag_db,phase_rad\n1,2,3\n", ":2: expected 5"),
    ("probe_freq_hz,re_t,im_t,mag_db,phase_rad\n1,x,3,4,5\n", ":2: non-numeric"),
])
def test_spectrum_csv_errors(text, pattern):
    with pytest.raises(InputError, match=pattern):
        formats.csv_to_spectrum(text)


def test_map_csv_round_trip(device):
    wd, wp = harness.default_map_grids(device, drive_points=5, probe_points=51)
    res = harness.two_tone_map(device, wd, wp, coupling={"n_d": 1e4})
    text = formats.map_to_csv(res)
    drive, probe, mag = formats.csv_to_map(text)
    assert np.array_equal(mag, res.scalars["mag_db"])
    assert np.allclose(drive * TWO_PI, wd, rtol=1e-15)
    assert len(text.splitlines()) == 1 + 5 * 51
    with pytest.raises(InputError, match="product grid"):
        formats.csv_to_map("\n".join(text.splitlines()[:-1]))


def test_table_and_json():
    text = formats.table_to_csv(["a", "b", "c"], [(0.1, "x", True), (2, "y", False)])
    back = formats.csv_to_table(text)
    assert back["a"] == [0.1, 2.0] and back["b"] == ["x", "y"] and back["c"] == ["True", "False"]
    out = formats.to_json({"b": np.float64(math.nan), "a": np.arange(2)})
    assert out == '{\n  "a": [\n    0,\n    1\n  ],\n  "b": null\n}\n'


# --- CLI -----------------------------------------------------------------------

def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_figures_human_and_json(capsys):
    code, human, _ = run(["figures"], capsys)
    assert code == 0
    table = {k: float(v) for k, v in (line.split() for line in human.splitlines())}
    assert table["q_mechanical"] == pytest.approx(360_000, rel=0.02)
    assert table["sideband_ratio"] == pytest.approx(63, rel=0.01)
    assert table["n_mech"] == pytest.approx(80, rel=0.05)
    code, text, _ = run(["figures", "--json"], capsys)
    structured = json.loads(text)
    assert structured.keys() == table.keys()
    for key, value in table.items():
        assert float(f"{structured[key]:.6g}") == value


def test_figures_missing_key(tmp_path, capsys):
    path = tmp_path / "p.txt"
    path.write_text(kv_text(PUBLISHED_PARAMETERS_HZ, drop=("mass_kg",)))
    code, _, err = run(["figures", str(path)], capsys)
    assert code == 2 and "mass_kg" in err


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["map", "--help"])
    assert exc.value.code == 0
    assert "--drive-points" in capsys.readouterr().out


@pytest.mark.parametrize("args", [
    [],
    ["spectrum"],
    ["spectrum", "--nd", "-1"],
    ["spectrum", "--nd", "1e4", "--points", "1"],
    ["sweep-power", "--nd-list", "1e3,abc"],
    ["fit", "missing.csv", "--model", "cavity"],
    ["bogus"],
])
def test_usage_errors_exit_two(args, tmp_path, capsys):
    code, _, err = run(args + (["--out", str(tmp_path)] if args[:1] != ["bogus"] and args else []),
                       capsys)
    assert code == 2 and err


def test_spectrum_normal_mode_splitting(tmp_path, capsys):
    code, out, _ = run(["spectrum", "--nd", "5e6", "--delta", "0", "--out", str(tmp_path)], capsys)
    assert code == 0 and str(tmp_path / "spectrum.csv") in out
    spec = formats.read_spectrum(tmp_path / "spectrum.csv")
    lo, hi = harness.split_minima(spec)
    assert (hi - lo) / TWO_PI / 1e6 == pytest.approx(1.0, rel=0.05)


def test_fit_cavity_on_own_output(tmp_path, capsys):
    assert cli.main(["spectrum", "--nd", "0", "--out", str(tmp_path)]) == 0
    code, _, _ = run(["fit", str(tmp_path / "spectrum.csv"), "--model", "cavity",
                      "--out", str(tmp_path / "fit")], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "fit" / "fit_result.json").read_text())
    est = rep["estimates"]
    assert est["kappa_hz"] == pytest.approx(170e3, rel=1e-6)
    assert est["kappa_ex_hz"] == pytest.approx(130e3, rel=1e-6)
    assert est["omega_c_hz"] == pytest.approx(PUBLISHED_PARAMETERS_HZ["f_cavity_hz"], rel=1e-6)
    manifest = formats.read_manifest(tmp_path / "fit" / "manifest.json")
    assert manifest["subcommand"] == "fit"


def test_fit_coupling_on_own_output(tmp_path, capsys, device):
    assert cli.main(["spectrum", "--nd", "1e5", "--delta", "0", "--out", str(tmp_path)]) == 0
    code, _, _ = run(["fit", str(tmp_path / "spectrum.csv"), "--model", "coupling",
                      "--delta", "0", "--out", str(tmp_path)], capsys)
    assert code == 0
    est = json.loads((tmp_path / "fit_result.json").read_text())["estimates"]
    g_true = DriveConfig.at_delta(device, 0.0, n_d=1e5).coupling(device)
    assert est["g_hz"] == pytest.approx(g_true / TWO_PI, rel=1e-6)
    assert est["g_squared_hz2"] == pytest.approx(est["g_hz"] ** 2, rel=1e-6)


def test_fit_mechanical_cli(tmp_path, capsys, device):
    x = np.arange(-1200.0, 1200.0, 2.0)
    y = 1.0 / (1 + (x / 15.0) ** 2)
    path = tmp_path / "noise.csv"
    path.write_text(formats.table_to_csv(["offset_freq_hz", "power"], zip(x, y)))
    code, _, _ = run(["fit", str(path), "--model", "mechanical", "--out", str(tmp_path)], capsys)
    assert code == 0
    est = json.loads((tmp_path / "fit_result.json").read_text())["estimates"]
    assert est["Gamma_m_eff_hz"] == pytest.approx(30.0, rel=1e-6)


def test_fit_failure_exits_one(tmp_path, capsys):
    grid = TWO_PI * (7.47e9 + np.linspace(-2e6, 2e6, 201))
    path = tmp_path / "flat.csv"
    formats.write_spectrum(ComplexSpectrum(grid, np.ones(grid.size, dtype=complex)), path)
    code, _, err = run(["fit", str(path), "--model", "cavity", "--out", str(tmp_path)], capsys)
    assert code == 1 and "no resolvable dip" in err


def test_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    code, _, _ = run(["spectrum", "--nd", "1e3", "--points", "101"], capsys)
    assert code == 0 and (tmp_path / "env" / "spectrum.csv").exists()


def test_sweep_power_outputs(tmp_path, capsys):
    code, _, _ = run(["sweep-power", "--nd-list", "1e3,1e5", "--points", "501",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    table = formats.csv_to_table((tmp_path / "power_sweep.csv").read_text())
    assert table["n_d"] == [1e3, 1e5]
    assert np.allclose(table["g_fit_hz"], table["g_true_hz"], rtol=1e-6)
    assert (tmp_path / "spectrum_001.csv").exists()


def test_sweep_detuning_fit(tmp_path, capsys):
    assert cli.main(["sweep-detuning", "--fit", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "backaction_fit.json").read_text())
    assert rep["G_hz_per_nm"] == pytest.approx(56e6, rel=0.01)
    table = formats.csv_to_table((tmp_path / "detuning_sweep.csv").read_text())
    assert len(next(iter(table.values()))) == 121


def test_roundtrip_table(tmp_path, capsys):
    code, _, _ = run(["roundtrip", "--out", str(tmp_path)], capsys)
    assert code == 0
    table = formats.csv_to_table((tmp_path / "roundtrip.csv").read_text())
    assert set(table["result"]) == {"PASS"}
    g_row = table["quantity"].index("G")
    assert table["truth"][g_row] == pytest.approx(56e15, rel=1e-12)


def test_replay_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["map", "--nd", "1e4", "--noise", "0.02", "--seed", "5", "--points", "101",
                     "--drive-points", "7", "--out", str(a)]) == 0
    assert cli.main(["replay", str(a / "manifest.json"), "--out", str(b)]) == 0
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()
    manifest = formats.read_manifest(a / "manifest.json")
    assert manifest["seed"] == 5 and manifest["parameters"] == PUBLISHED_PARAMETERS_HZ


def test_replay_rejects_bad_manifest(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"subcommand": "spectrum"}))
    code, _, err = run(["replay", str(path)], capsys)
    assert code == 2 and "manifest" in err
