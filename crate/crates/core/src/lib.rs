//! Exact slice sampling for hierarchical Dirichlet process mixtures.
//!
//! The model is written in its fully factorized form: dish sticks `beta'`,
//! per-group table sticks `gamma'_j`, a dish for every table `k_jt`, a table
//! for every customer `t_ji`, and atoms `phi_k`. Slice variables on
//! customers and tables truncate every infinite categorical to a finite,
//! random support, and the tracked number of tables and dishes grows only
//! when the untracked stick mass could still be admissible.
//!
//! ```
//! use hdp_slice::{generator, Hyperparams, MultinomialKernel, Sampler};
//! use rand::SeedableRng;
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let kernel = MultinomialKernel::symmetric(5).unwrap();
//! let truth = generator::generate_labels(3.0, 1.0, &[20, 20], &mut rng).unwrap();
//! let (_, data) = generator::generate_observations(&truth, &kernel, &mut rng).unwrap();
//! let hp = Hyperparams { seed: 7, ..Default::default() };
//! let mut sampler = Sampler::new(&kernel, &data, hp).unwrap();
//! let trace = sampler.run(5).unwrap();
//! assert_eq!(trace.len(), 5);
//! ```

pub mod error;
pub mod exec;
pub mod generator;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod state;
pub mod stick;

pub use error::{Error, Result};
pub use exec::Workers;
pub use kernels::{EmissionKernel, GaussianAtom, GaussianKernel, KernelSpec, MultinomialAtom, MultinomialKernel};
pub use sampler::{run, Sampler, SweepReport, TraceRecord};
pub use state::{ChainState, GroupState, GroupedDataset, Hyperparams};
pub use stick::StickVector;
