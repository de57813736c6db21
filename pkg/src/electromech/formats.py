"""File formats: parameter files, spectrum and map CSVs, run manifests.

Files carry ordinary frequency (Hz); conversion to rad/s happens here.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .device_model import TWO_PI, DeviceParams, params_from_hz_mapping
from .response import ComplexSpectrum

PARAM_KEYS = (
    "f_cavity_hz", "kappa_hz", "kappa_ext_hz", "kappa_int_hz", "f_mech_hz",
    "gamma_m_hz", "mass_kg", "gap_m", "inductance_h", "capacitance_f", "eta",
    "temperature_k", "cavity_pull_hz_per_m",
)
OPTIONAL_KEYS = {"cavity_pull_hz_per_m"}

SPECTRUM_COLUMNS = ["probe_freq_hz", "re_t", "im_t", "mag_db", "phase_rad"]
MAP_COLUMNS = ["drive_freq_hz", "probe_freq_hz", "mag_db"]


class InputError(ValueError):
    """Malformed input file; the message names the offending line or key."""


def fmt(x):
    return format(float(x), ".17g")


def _parse_kv_lines(text, source):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = (s.strip().strip('"') for s in line.split(sep, 1))
                break
        else:
            raise InputError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        try:
            out[key] = float(value.rstrip(","))
        except ValueError:
            raise InputError(f"{source}:{lineno}: key {key!r} has non-numeric value "
                             f"{value!r}") from None
    return out


def parse_param_mapping(text, source="<params>"):
    """Validated parameter-file mapping (Hz units) from JSON or ``key = value`` text."""
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise InputError(f"{source}: expected a JSON object")
    else:
        raw = _parse_kv_lines(text, source)
    unknown = sorted(set(raw) - set(PARAM_KEYS))
    if unknown:
        raise InputError(f"{source}: unknown key(s): {', '.join(unknown)}")
    missing = [k for k in PARAM_KEYS if k not in OPTIONAL_KEYS and k not in raw]
    if missing:
        raise InputError(f"{source}: missing required key(s): {', '.join(missing)}")
    for key, value in raw.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InputError(f"{source}: key {key!r} must be a number, got {value!r}")
    mapping = {k: float(raw[k]) for k in PARAM_KEYS if k in raw}
    params_from_mapping(mapping, source)
    return mapping


def params_from_mapping(mapping, source="<params>"):
    try:
        return params_from_hz_mapping(mapping)
    except ValueError as exc:
        raise InputError(f"{source}: {exc}") from None


def parse_params(text, source="<params>"):
    """DeviceParams from JSON or ``key = value`` text."""
    return params_from_mapping(parse_param_mapping(text, source), source)


def read_param_mapping(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    return parse_param_mapping(text, str(path))


def read_params(path):
    return params_from_mapping(read_param_mapping(path), str(path))


def dump_params(params: DeviceParams):
    return json.dumps(params.to_hz(), indent=2) + "\n"


def write_params(params, path):
    Path(path).write_text(dump_params(params))


def spectrum_to_csv(spectrum: ComplexSpectrum):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SPECTRUM_COLUMNS)
    for f, t, db, ph in zip(spectrum.frequencies_hz, spectrum.values,
                            spectrum.magnitude_db, spectrum.phase):
        w.writerow([fmt(f), fmt(t.real), fmt(t.imag), fmt(db), fmt(ph)])
    return buf.getvalue()


def csv_to_spectrum(text, source="<spectrum>"):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != SPECTRUM_COLUMNS:
        raise InputError(f"{source}:1: header must be {','.join(SPECTRUM_COLUMNS)}")
    f, re_, im_ = [], [], []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(SPECTRUM_COLUMNS):
            raise InputError(f"{source}:{lineno}: expected {len(SPECTRUM_COLUMNS)} columns")
        try:
            f.append(float(row[0]))
            re_.append(float(row[1]))
            im_.append(float(row[2]))
        except ValueError:
            raise InputError(f"{source}:{lineno}: non-numeric entry") from None
    try:
        return ComplexSpectrum(TWO_PI * np.array(f), np.array(re_) + 1j * np.array(im_))
    except ValueError as exc:
        raise InputError(f"{source}: {exc}") from None


def write_spectrum(spectrum, path):
    Path(path).write_text(spectrum_to_csv(spectrum))


def read_spectrum(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    return csv_to_spectrum(text, str(path))


def map_to_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MAP_COLUMNS)
    fd = result.axes["omega_d"] / TWO_PI
    fp = result.axes["omega_p"] / TWO_PI
    mag = result.scalars["mag_db"]
    for i, d in enumerate(fd):
        for j, p in enumerate(fp):
            w.writerow([fmt(d), fmt(p), fmt(mag[i, j])])
    return buf.getvalue()


def csv_to_map(text, source="<map>"):
    """Returns (drive_hz, probe_hz, mag_db[drive, probe])."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != MAP_COLUMNS:
        raise InputError(f"{source}:1: header must be {','.join(MAP_COLUMNS)}")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r])
    drive = np.unique(data[:, 0])
    probe = np.unique(data[:, 1])
    if data.shape[0] != drive.size * probe.size:
        raise InputError(f"{source}: map is not a complete product grid")
    return drive, probe, data[:, 2].reshape(drive.size, probe.size)


def table_to_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating, int, np.integer))
                    and not isinstance(v, (bool, np.bool_)) else v for v in row])
    return buf.getvalue()


def csv_to_table(text):
    rows = list(csv.reader(io.StringIO(text)))
    cols = rows[0]
    out = {c: [] for c in cols}
    for r in rows[1:]:
        for c, v in zip(cols, r):
            try:
                out[c].append(float(v))
            except ValueError:
                out[c].append(v)
    return out


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def to_json(obj):
    """Deterministic JSON; non-finite floats become null."""
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, np.ndarray):
            return clean(o.tolist())
        if isinstance(o, (float, np.floating)) and not math.isfinite(o):
            return None
        return o
    return json.dumps(clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


def write_manifest(path, manifest):
    Path(path).write_text(to_json(manifest))


def read_manifest(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: cannot read manifest: {exc}") from None
