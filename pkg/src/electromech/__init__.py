"""Linearized cavity electromechanics: dressed spectra, backaction and fitting.

Everything inside the package works in angular frequency (rad/s). Conversion
to and from ordinary frequency (Hz) happens only at the file and CLI boundary.
"""

from .device_model import (
    TWO_PI,
    DeviceParams,
    FiguresOfMerit,
    drive_photon_number,
    figures_of_merit,
    lc_resonance,
    published_parameters,
    parallel_plate_pull,
    pumped_coupling,
    single_photon_coupling,
    thermal_occupancy,
    zero_point_motion,
)
from .response import (
    ComplexSpectrum,
    DriveConfig,
    NormalModes,
    backaction,
    bare_transmission,
    chi,
    dressed_transmission,
    normal_modes,
    probe_grid,
    thermal_sideband,
)

__version__ = "0.1.0"

__all__ = [
    "TWO_PI",
    "ComplexSpectrum",
    "DeviceParams",
    "DriveConfig",
    "FiguresOfMerit",
    "NormalModes",
    "backaction",
    "bare_transmission",
    "chi",
    "dressed_transmission",
    "drive_photon_number",
    "figures_of_merit",
    "lc_resonance",
    "normal_modes",
    "published_parameters",
    "parallel_plate_pull",
    "probe_grid",
    "pumped_coupling",
    "single_photon_coupling",
    "thermal_occupancy",
    "thermal_sideband",
    "zero_point_motion",
]
