//! Exponential coordinates of the second kind for solvable matrix groups,
//! invariant-operator pullbacks with exp-trig-polynomial coefficients, weight
//! functions and strip-entire multipliers, and bounded convolution
//! factorization of representation orbits on the line and on the group.

pub mod cli;
pub mod coords;
pub mod entireq;
pub mod exec;
pub mod factor1d;
pub mod factorgroup;
pub mod exptrig;
pub mod fixtures;
pub mod liealg;
pub mod numeric;
pub mod poly;
pub mod rational;
pub mod repmodel;
pub mod weights;
