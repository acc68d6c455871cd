//! Dense N-way tensor recovery by iterative hard thresholding.
//!
//! The crate solves the minimum n-rank approximation problem: find a tensor
//! whose mode unfoldings satisfy per-mode rank bounds and whose linear
//! measurements match an observed vector. The main entry points are
//! [`solver::solve_fixed_rank`] (rank bounds known) and
//! [`solver::solve_heuristic_rank`] (rank bounds predicted on the fly).
//! [`problems`] generates reproducible synthetic completion instances and
//! image-inpainting inputs; [`operators`] provides the sampling measurement
//! map and its adjoint; [`linalg`] supplies exact and randomized truncated
//! SVD backends.

pub mod linalg;
pub mod operators;
pub mod problems;
pub mod solver;
pub mod tensor;
