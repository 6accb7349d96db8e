//! Linear (in)stability of magnetic Rayleigh–Taylor and Parker equilibria.
//!
//! The crate works mode by mode on a horizontally periodic slab `(−l, l)` in the
//! vertical direction, plus a bounded 2D rectangle with no-slip walls:
//!
//! * [`profiles`]: equilibrium densities and the compressible magnetic equilibrium.
//! * [`grid1d`]: vertical discretizations (uniform second order, Chebyshev).
//! * [`modeforms`]: the quadratic forms of one horizontal Fourier mode.
//! * [`eigcore`]: dense generalized symmetric eigen-solves.
//! * [`dispersion`]: critical magnetic numbers, growth rates, growing modes.
//! * [`evolve`]: linearized time evolution with energy-identity diagnostics.
//! * [`bounded2d`]: streamfunction formulation on a rectangle.

pub mod bounded2d;
mod cheb;
pub mod dispersion;
pub mod eigcore;
pub mod evolve;
pub mod grid1d;
pub mod modeforms;
pub mod profiles;

pub use nalgebra::{DMatrix, DVector};

pub use bounded2d::{assemble_2d_growth, assemble_2d_quotient, critical_2d, growth_rate_2d, Rect2D};
pub use dispersion::{
    alpha_of_s, build_growing_mode, compute_cr, critical_M, critical_m_sweep, solve_growth_rate, test_sequence_values,
    CriticalKind, CriticalReport, DispersionError, DispersionResult, GrowingMode, GrowthOptions, GrowthPencil,
    ModeContext, ModeField, ModeValue, Stability,
};
pub use eigcore::{max_rayleigh, psd_ratio_sup, solve_gsym, EigError, ExtReal, GEigResult, RatioOptions};
pub use evolve::{
    envelope_check, growing_mode_data, init_state, initial_norms, random_smooth, run_trajectory, step, EnvelopeReport,
    EvolveError, EvolveState, EvolveSystem, GrowthFit, InitialNorms, StabilityLedger, StepScheme, Stepper,
    TrajectoryRecord,
};
pub use grid1d::{build_grid, clamped_basis, Bc, Grid1D, GridError, Scheme, SubspaceOps};
pub use modeforms::{
    assemble_compressible, assemble_cr_forms, assemble_incompressible, assemble_quotient, Block, Field, FieldDir,
    FormKind, ModeError, ModeForms, ModeSpec,
};
pub use profiles::{
    build_compressible_equilibrium, make_affine_profile, make_table_profile, make_tanh_profile, validate_rt_conditions,
    CompressibleEquilibrium, DensityProfile, PhysicalParams, ProfileError, ValidationReport,
};
