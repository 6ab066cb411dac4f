//! Reverse-mode differentiation of block-tensor programs.
//!
//! Adjoints follow `x̄ = ∂L/∂Re(x) + i ∂L/∂Im(x)`, so for a real loss the
//! first-order change is `δL = Re⟨x̄, δx⟩`.

pub mod rules;
mod tape;

pub use rules::{contract_pullback, inverse_perm, svd_pullback, trace_pullback, SVD_BROADENING};
pub use tape::{Gradients, Pullback, Tape, Var};

use serde::{Deserialize, Serialize};

/// Counters collected during a backward sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Pairs of singular values closer than the broadening.
    pub degenerate_svd_events: usize,
    pub max_adjoint_norm: f64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.degenerate_svd_events += other.degenerate_svd_events;
        self.max_adjoint_norm = self.max_adjoint_norm.max(other.max_adjoint_norm);
    }
}
