"""Volumetric multifractal analysis of turbulent velocity fields.

The pipeline runs generators -> ensemble -> scaling -> volumetrics ->
mfr/concentration, with the spectrum module tying second-order statistics
to shell energy spectra. See the README for the CLI surface.
"""

from .ensemble import (
    IncrementEnsemble,
    MomentTable,
    effective_domain,
    increments,
    moments,
)
from .gridfield import Direction, GridField, direction_set
from .scaling import ScalingProfile, classify_endpoints, holder_range, ratio_bounds_check, zeta
from .volumetrics import (
    VolumetricReport,
    active_volume,
    build_report,
    dimension,
    dimension_p,
    intermittency_correction,
    reconstruct_Dqp,
    reconstruct_zeta,
    restore_threshold,
    threshold,
    threshold_p,
    volume_factor,
)

__version__ = "0.1.0"

__all__ = [
    "Direction",
    "GridField",
    "IncrementEnsemble",
    "MomentTable",
    "ScalingProfile",
    "VolumetricReport",
    "active_volume",
    "build_report",
    "classify_endpoints",
    "dimension",
    "dimension_p",
    "direction_set",
    "effective_domain",
    "holder_range",
    "increments",
    "intermittency_correction",
    "moments",
    "ratio_bounds_check",
    "reconstruct_Dqp",
    "reconstruct_zeta",
    "restore_threshold",
    "threshold",
    "threshold_p",
    "volume_factor",
    "zeta",
]
