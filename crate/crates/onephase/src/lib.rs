//! Numerical minimization of one-phase free boundary energies
//! `int G(X, grad u) + f(X) (u+)^m + Q(X) chi_{u > 0}` with Dirichlet data,
//! plus the measurement toolkit for the quantitative geometry of computed
//! minimizers: gradient bounds, nondegeneracy, density and perimeter
//! estimates, the interface measure, blow-up profiles, the free boundary
//! slope condition and the improvement-of-flatness cascade.

// validation uses `!(x > 0.0)` on purpose: it rejects NaN along with the
// out-of-range values, unlike the suggested `x <= 0.0`
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// node loops usually drive several parallel arrays plus geometry lookups;
// the index form stays clearer than zipped iterators here
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod exec;
pub mod flatness;
pub mod geom;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod minimizer;
pub mod oracle;
pub mod report;

pub use error::{Error, Result};
