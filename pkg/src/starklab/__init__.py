"""starklab: a numerical laboratory for quantum scattering in a uniform field.

Spectral propagators for the field-dressed free dynamics, modified wave and
scattering operators with adaptive horizons, high-velocity commutator
functionals, Radon-type inversion of the resulting line data, and a
decay-rate/exponent audit suite.
"""

__version__ = "0.1.0"

from .grids import (
    Grid,
    PacketProfile,
    State,
    apply_momentum,
    apply_multiplier,
    boost,
    inner,
    make_grid,
    make_packet,
)
from .potentials import (
    AnisotropicPowerForm,
    GaussianForm,
    IsotropicPowerForm,
    OscillatoryPowerForm,
    PotentialPart,
    PotentialSpec,
    SumForm,
    check_thresholds,
    eval_deriv,
    eval_part,
    validate_decay,
)
from .propagators import (
    ModifierPhase,
    apply_modifier,
    dollard_phase,
    free_schrodinger,
    free_stark,
    full_propagate,
    graf_phase,
)
from .scattering import (
    HorizonPolicy,
    SMatrixSample,
    commutator_functional,
    smatrix_apply,
    wave_operator_apply,
)
from .reconstruction import (
    ExperimentPlan,
    RadonSample,
    ReconstructionGrid,
    collect_samples,
    invert,
    make_angle_set,
    rhs_direct,
)
from .exponents import (
    ExponentProblem,
    TrajectoryBound,
    interpolated_bound,
    optimize_exponent,
    remainder_exponent,
    trajectory_lower_bound,
)
from .ratelab import LemmaTarget, RateFit, lemma_integral, rate_sweep
