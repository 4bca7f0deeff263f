"""Needlet bispectrum of isotropic random fields on the sphere."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateCellError,
    DegenerateVarianceError,
    InvalidArgumentError,
    NeedletError,
)
from .sphere_grid import (
    AssociationMap,
    CubatureGrid,
    SphericalPoint,
    associate_levels,
    build_grid,
    geodesic_distance,
    grid_diagnostics,
)
from .harmonics import (
    HarmonicCoefficients,
    gaunt,
    legendre_p,
    sht_analyze,
    sht_synthesize,
    sph_harm,
    wigner3j,
)
from .needlet_frame import (
    NeedletCoefficients,
    NeedletWindow,
    build_window,
    coefficient_correlation,
    needlet_analyze,
    needlet_eval,
    sigma_j,
)
from .field_model import (
    NonGaussianSpec,
    PowerSpectrum,
    expected_needlet_bispectrum,
    make_power_spectrum,
    reduced_bispectrum_sw,
    sample_gaussian_alm,
    sample_local_ng,
)
from .bispectrum import (
    BispectrumConfig,
    BispectrumValue,
    estimate_sigma,
    h_weight,
    make_config,
    needlet_bispectrum,
    partial_sum_J1,
    partial_sum_J2,
    studentized_bispectrum,
    theoretical_variance,
)
from .diagrams import (
    Diagram,
    DiagramTable,
    classify,
    enumerate_diagrams,
    hermite,
    hermite_product_cumulant,
    hermite_product_moment,
)
from .experiments import (
    MCConfig,
    MCResult,
    calibrate_fnl,
    run_correlation_decay,
    run_null_clt,
    run_partial_sums,
    run_power,
    run_studentized,
    simulate,
)
