//! Exact symbolic engine for the deformed `w_{1+infinity}` algebra that
//! organizes the soft currents of celestial CFT.
//!
//! Everything is exact rational arithmetic: no floating point appears
//! anywhere in the crate. The layers are
//!
//! - [`arith`]: arbitrary-precision rationals, half-integers, and the
//!   Pochhammer/binomial combinatorics all structure constants are built
//!   from;
//! - [`structure`]: generator labels, coupling registries, the structure
//!   constant `N(q1,q2,m,n,p)` in two representations, mode brackets and
//!   Jacobi/constraint sweeps;
//! - [`ope`]: canonical operator product expansions, the OPE templates for
//!   the deformed currents, Leibniz normalization and mode extraction via
//!   formal contour residues;
//! - [`freefield`]: bc/beta-gamma ghost towers, Wick contraction of
//!   normal-ordered bilinear currents, and linear solvers for realization
//!   coefficients;
//! - [`supertwist`]: the fermionic sector, the BRST operator, topological
//!   generators and the rescaling limit back to `w_{1+infinity}`;
//! - [`cli`]: the `walg` command-line front end.

pub mod arith;
pub mod cli;
pub mod freefield;
pub mod latex;
pub mod ope;
pub mod poly;
pub mod structure;
pub mod supertwist;

pub use arith::{HalfInt, Rational};
pub use structure::{
    CouplingKey, CouplingRegistry, Family, GeneratorLabel, GeneratorMode, ModeCombination,
};
