"""Time-periodic water waves and their Floquet stability."""
from .dno import DirichletNeumann, DNOError, apply_dno, assemble_kernels, SurfaceGeometry
from .dynamics import Evaluator, crest_acceleration, energy, rhs_linearized, rhs_nonlinear, wave_height
from .floquet import (
    FloquetRecord,
    MonodromyBlock,
    assemble_monodromy,
    eigen_spectrum,
    run_algorithm1,
    stability_verdict,
    unit_one_cluster,
    zero_amplitude_reference,
)
from .matching import SpectrumColumn, apply_swaps, assign, cost_matrix, track_family
from .shooting import (
    STANDING,
    TRAVELING,
    AmplitudeConstraint,
    LMSettings,
    ParamVector,
    ShootingSetup,
    continue_family,
    minimize,
    residual_standing,
    residual_traveling,
)
from .spectral import IDENTITY_MAP, MeshMap, MeshSchedule, Segment
from .state import PhysParams, SurfaceState
from .timestep import BlowUpError, evolve, evolve_tangents, integrate

__version__ = "0.1.0"
