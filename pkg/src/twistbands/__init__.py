"""twistbands: momentum-space models of twisted bilayers.

Layer geometry and moire lattices, tight-binding models with closed-form or
tabulated interlayer kernels, truncated plane-wave Hamiltonians, their
(m, n, tau) Taylor/continuum approximations, band structures, density of
states, and convergence diagnostics.
"""

__version__ = "0.1.0"

from .convergence import (
    SweepResult,
    expansion_error_sweep,
    taylor_norm_gap,
    truncation_error,
    truncation_error_curve,
)
from .errors import (
    CapabilityError,
    ContractError,
    DomainError,
    FormatError,
    ParameterError,
    ResourceError,
    TwistbandsError,
)
from .geometry import (
    SUBLATTICES,
    VALLEY_K,
    VALLEY_KPRIME,
    LayerGeometry,
    MoireGeometry,
    build_layer_geometry,
    build_moire_geometry,
    hopping_shells,
    map_from_moire,
    map_to_moire,
    rotation,
    valley_k_points,
)
from .model import (
    DEFAULT_A,
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_SCALE,
    DEFAULT_T,
    DEFAULT_Z,
    ClosedFormInterlayer,
    Hopping,
    HoppingDerivative,
    TableInterlayer,
    TBModel,
    derivative_table,
    hopping_derivative,
    interlayer_fourier,
    interlayer_fourier_many,
    intralayer_bloch,
    intralayer_bloch_many,
    load_wannier_model,
    simplified_model,
    write_model,
)
from .momentum import (
    Basis,
    MomentumHamiltonian,
    assemble_hamiltonian,
    build_basis,
    coupling_strength_eta,
    moire_shell_magnitudes,
)
from .spectral import (
    BandData,
    BandPath,
    DosCurve,
    HamiltonianFamily,
    band_structure,
    bz_path,
    continuum_family,
    density_of_states,
    eigenvalues,
    exact_family,
    expanded_family,
    flat_band_stats,
    write_band_csv,
    write_dos_csv,
)
from .taylor import (
    ContinuumModel,
    MoireBasis,
    PolynomialMatrix,
    assemble_expanded_hamiltonian,
    build_moire_basis,
    continuum_bloch_matrix,
    derive_continuum_model,
    expand_interlayer,
    expand_intralayer,
    load_continuum_model,
    taylor_remainder_bound,
    write_continuum_model,
)

__all__ = [name for name in dir() if not name.startswith("_")]
