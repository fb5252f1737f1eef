"""Spectral geometry of tubular layers: Fermi metrics, Dirichlet forms and
quadratic-form Weyl certification of the essential spectrum."""

__version__ = "0.1.0"

from .cross_section import CrossSectionDomain, CrossSectionModes, dirichlet_modes  # noqa: E402
from .discretization import (DiscreteForms, LayerGrid, assemble_forms,  # noqa: E402
                             assemble_unperturbed)
from .exceptions import LayerlabError  # noqa: E402
from .geometry import (FermiMetricField, ImmersedBase, build_normal_frames,  # noqa: E402
                       deformation_tensors, fermi_metric, reduced_metric_tilde,
                       second_fundamental_form)
from .spectral import count_below, smallest_eigenpairs, solve_spd  # noqa: E402
from .weyl import (ScanReport, ScanThresholds, build_singular_family,  # noqa: E402
                   certify_scan, dual_norm, matrix_weyl_bound, weyl_quotient)

__all__ = [
    "CrossSectionDomain", "CrossSectionModes", "dirichlet_modes",
    "DiscreteForms", "LayerGrid", "assemble_forms", "assemble_unperturbed",
    "LayerlabError",
    "FermiMetricField", "ImmersedBase", "build_normal_frames", "deformation_tensors",
    "fermi_metric", "reduced_metric_tilde", "second_fundamental_form",
    "count_below", "smallest_eigenpairs", "solve_spd",
    "ScanReport", "ScanThresholds", "build_singular_family", "certify_scan",
    "dual_norm", "matrix_weyl_bound", "weyl_quotient",
]
