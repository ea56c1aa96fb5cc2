//! Driven random walks on the ring `Z_N`.
//!
//! A walker hops between neighbouring sites of a ring with rates set by an
//! energy landscape `u`, a temperature `T` and a driving `eps`. The crate
//! computes, exactly:
//!
//! * the stationary distribution from spanning-tree weights
//!   ([`forest::kirchhoff_stationary`]),
//! * the pseudo-potential `V` solving `L V = f`, `<V> = 0`, from rooted
//!   spanning-forest weights ([`forest::forest_pseudopotential`]),
//! * the nonequilibrium heat capacity built on `V` ([`thermo`]).
//!
//! Everything is cross-checked by independent routes: dense Drazin and group
//! inverses ([`pseudo_inverse`]), the resolvent limit, the time integral of
//! the semigroup, Gillespie simulation ([`mc`]) and the continuum diffusion
//! limit ([`diffusion`]).
//!
//! ```
//! use ringwalk::{forest_pseudopotential, stationary, Centering, EnergyLandscape, RateFamily, RingModel};
//!
//! let model = RingModel::from_landscape(8, 1.0, 2.0, RateFamily::Unbounded1, &EnergyLandscape::default())?;
//! let rho = stationary(&model)?;
//! let f = rho.center(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])?;
//! let v = forest_pseudopotential(&model, &f, Centering::Require)?;
//! assert!(v.residual < 1e-12);
//! # Ok::<(), ringwalk::Error>(())
//! ```

pub mod error;
pub mod forest;
pub mod model;
pub mod pseudo_inverse;
pub mod thermo;
pub mod diffusion;
pub mod mc;
pub mod cli;

pub use error::{Error, Result};
pub use forest::{forest_pseudopotential, kirchhoff_stationary, Centering, ForestCode, PseudoPotential};
pub use model::{
    build_generator, Direction, EnergyLandscape, GeneratorMatrix, ModelConfig, RateFamily, RingModel, RingRates,
    StationaryDistribution, TransitionRates,
};
pub use thermo::{heat_capacity, stationary};
