"""Electromagnetic scattering by homogeneous dielectric bodies.

The main solver replaces each body by its differential surface admittance,
so the final system carries one electric unknown per RWG function.  The
classical two-current system, its magnetic-current Schur reduction and the
analytic sphere series are included as references.
"""

from .admittance import AdmittanceSet, FormulationError, admittance_set, compute_admittance, compute_Ys
from .config import ConfigError, RunConfig, load_config, parse_config
from .excitation import ExcitationVectors, PlaneWave, assemble_excitation, incident_fields
from .mesh import MeshError, MeshParseError, MeshTopologyError, RwgBasis, SurfaceMesh, build_rwg, load_mesh, merge_meshes
from .mie import MieSolution, mie_far_field
from .operators import (AssemblyOptions, ExteriorBlocks, OperatorBlocks, assemble_exterior_blocks,
                        assemble_interior_blocks, gram_matrix, mixed_gram_matrix)
from .postprocess import FarFieldPattern, cut_angles, pattern_difference, radiate, rcs_deviation_db
from .quadrature import MediumParams
from .shapes import sphere, sphere_array
from .solver import (FREE_SPACE, Material, OperatorCache, Scatterer, Scene, SolveResult, recover_fields,
                     solve_pmchwt, solve_schur, solve_single_source)

__version__ = "0.1.0"
