use crate::measures::{CostMatrix, DivergenceKind, Measure};

/// A-priori bound on the UOT value obtained from the product plan `a bᵀ`:
///
/// `M m_a m_b + τ m_a φ(m_b) + τ m_b φ(m_a)`, with `M = max C`.
///
/// Holds for every ε ≥ 0 since `KL(abᵀ | a⊗b) = 0`.
pub fn bound_constant(a: &Measure, b: &Measure, c: &CostMatrix, tau: f64, divergence: DivergenceKind) -> f64 {
    let (ma, mb) = (a.mass(), b.mass());
    c.max_entry() * ma * mb + penalty(tau, ma, mb, divergence)
}

/// Bound for the unbalanced Sinkhorn divergence:
///
/// `2 M m_a m_b + τ(m_a φ(m_b) + m_b φ(m_a) + m_a φ(m_a) + m_b φ(m_b)) + ε/2 (m_a − m_b)²`.
pub fn divergence_bound_constant(
    a: &Measure,
    b: &Measure,
    c: &CostMatrix,
    tau: f64,
    epsilon: f64,
    divergence: DivergenceKind,
) -> f64 {
    let (ma, mb) = (a.mass(), b.mass());
    2.0 * c.max_entry() * ma * mb
        + penalty(tau, ma, mb, divergence)
        + term(tau, ma * divergence.phi(ma))
        + term(tau, mb * divergence.phi(mb))
        + 0.5 * epsilon * (ma - mb) * (ma - mb)
}

fn penalty(tau: f64, ma: f64, mb: f64, divergence: DivergenceKind) -> f64 {
    term(tau, ma * divergence.phi(mb)) + term(tau, mb * divergence.phi(ma))
}

// τ·x with 0·∞ = 0, so balanced (τ = ∞) inputs of equal unit mass stay finite
fn term(tau: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        tau * x
    }
}
