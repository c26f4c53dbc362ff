"""Numerical laboratory for BMO spaces, Carleson measures and balayages
associated to Schrodinger operators -Delta + V."""

__version__ = "0.1.0"

from .grid import (
    CarlesonBox,
    DyadicCube,
    Grid,
    GridFunction,
    HalfSpacePoint,
    carleson_box,
    cube_average,
    default_t_lattice,
    make_dyadic_tree,
    root_cube,
)
from .potential import (
    CriticalRadiusField,
    Potential,
    check_rho_comparability,
    constant_potential,
    critical_radius,
    critical_radius_field,
    quadratic_potential,
    reverse_holder_constant,
    well_potential,
    zero_potential,
)
from .spectral import (
    ExtensionTable,
    HeatSemigroup,
    KernelMatrix,
    PoissonSemigroup,
    SpectralDecomposition,
    SquaredHeatSemigroup,
    assemble_operator,
    gradient_kernels,
    green_identity_residual,
    harmonic_extension,
    heat_kernel,
    poisson_kernel_spectral,
    poisson_kernel_subordination,
    reproducing_formula_residual,
)
from .bounds import BoundReport, verify_aoi_axioms, verify_kernel_bounds, verify_V_integrals
from .bmo import (
    BmoContext,
    BmoReport,
    CubeFamily,
    bmo_A_norm,
    bmo_classical_norm,
    bmo_L_norm,
    build_cube_family,
    check_smoothed_oscillation,
    check_average_growth,
    compare_bmoL_bmoP,
)
from .carleson import (
    AtomicMeasure,
    CarlesonReport,
    balayage,
    balayage_bmo_ratio,
    carleson_norm,
    heat_balayage_transform,
    smeared_dirac_measure,
)
from .decomposition import (
    DecompositionConfig,
    DecompositionResult,
    StoppingForest,
    build_generations,
    choose_threshold,
    decompose,
    packing_ratio,
    reconstruction_residual,
    sawtooth_regions,
    sigma_measure_carleson,
    tile_boundary,
)
from .hardy import (
    MaximalReport,
    carleson_embedding_check,
    duality_pairing_check,
    hardy_norm,
    nontangential_maximal,
)
