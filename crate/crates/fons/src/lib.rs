//! Fractal singular sets and rough velocity fields on the periodic torus,
//! with the measurements that decide whether a field sits in the
//! energy-conserving regime: Minkowski dimensions, Besov increment
//! statistics, structure functions, and mollified energy flux.

pub mod error;
pub mod numeric;
pub mod grid;
pub mod io;
pub mod fit;
pub mod sets;
pub mod besov;
pub mod synthesis;
pub mod flux;
pub mod harness;

pub use error::{Error, Result};
pub use fit::{fit_exponent, ScalingFit};
pub use flux::{energy_flux, flux_scaling, mollify, Mollifier};
pub use grid::{
    gradient, integrate, kinetic_energy, shift, Field, LatticeVector, PeriodicGrid, TimeField,
};
pub use harness::{
    gamma_threshold, run_experiment, threshold_sweep, ExperimentConfig, ExperimentReport,
    Integrability, RegimeVerdict,
};
pub use sets::{
    make_axis_product, make_cantor, make_empty, make_full, make_hyperplane, make_point_cloud,
    minkowski_dimension, neighborhood_volume, set_for_gamma_target, uniform_minkowski_dimension,
    AxisKind, DistanceField, GeneratorTag, SingularSet, SingularSetFamily,
};
pub use synthesis::{singular_field, verify_hypotheses, SynthesisSpec};
