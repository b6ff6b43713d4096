//! Nontermination certificates for first-order term rewriting.
//!
//! A rewrite system is translated into axioms of a small second-order type
//! system with a fixed-point former; a closed inhabitant of `forall p x. p t`
//! certifies that `t` starts an infinite reduction. The crate provides the
//! translation, a resolution-based certificate search, an independent proof
//! checker, and an evaluator that unfolds a certificate back into the
//! concrete infinite reduction.

pub mod checker;
pub mod dynamics;
pub mod kernel;
pub mod leibniz;
pub mod matching;
pub mod pipeline;
pub mod resolution;
pub mod surface;
