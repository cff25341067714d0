"""Effective orbifolds with linear charts: stratification, equivariant
transport diffeomorphisms, and area displaceability on spindles."""

from __future__ import annotations

from ._backend import backend_name
from .area import AreaForm, DisplaceVerdict, SpindleCurve, apply_rotation, displaceability, monte_carlo_areas, region_areas, winding
from .errors import *  # noqa: F401,F403
from .fields import AveragedField, TubeBumpField, average_field, check_equivariance, flow
from .groups import FiniteMatrixGroup, build_group, cyclic, dihedral, fixed_subspace, isotropy, mirror, subgroups
from .orbifold import Orbifold, OrbifoldPoint, component_of, quotient, round_sphere, same_component, sdim, spindle, stratify
from .transitivity import (
    OrbifoldDiffeo,
    evaluate,
    extract_theta,
    invert,
    local_transport,
    n_transport,
    verify_sdim_preservation,
)

__version__ = "0.1.0"
