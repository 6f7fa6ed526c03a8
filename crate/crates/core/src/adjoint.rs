//! Backward adjoint problem `M Ψ' = Gᵀ Ψ + L(t)`, `Ψ(T) = Ψ_T`, and the
//! discrete duality pairing with the forward problem.
//!
//! Drift divergences are never formed: the transposed drift matrix `Nᵀ`
//! realizes `div(ψB)` and `div_Γ(ψ_Γ b)` in the weak sense.

use crate::assembly::BlockOperator;
use crate::error::{check_len, Error, Result};
use crate::forward::{
    check_loads, check_theta, theta_march, CheckedSolver, Scheme, TimeGrid, Trajectory,
};
use crate::sparse::{dot, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardMode {
    /// θ-method in reversed time `s = T − t` on the transposed form.
    Weak,
    /// Algebraic transpose of the implicit Euler forward step.
    ExactTranspose,
}

fn check_inputs(
    m: &BlockOperator,
    k_q: &BlockOperator,
    n: &BlockOperator,
    loads: &[Vec<f64>],
    psi_t: &[f64],
    grid: &TimeGrid,
) -> Result<CsrMatrix> {
    let dim = m.dim();
    check_len(dim, k_q.dim())?;
    check_len(dim, n.dim())?;
    check_len(dim, psi_t.len())?;
    check_loads(loads, grid, dim)?;
    Ok(CsrMatrix::linear_combination(&[
        (1.0, &k_q.matrix),
        (1.0, &n.matrix),
    ]))
}

/// Reversed-time θ-scheme
/// `(M + θτGᵀ)Φ^{k+1} = (M − (1−θ)τGᵀ)Φ^k − τ(θL(T−s_{k+1}) + (1−θ)L(T−s_k))`
/// with `Φ^k = Ψ^{N−k}`; the returned trajectory is indexed forward in `t`.
pub fn solve_backward_weak(
    m: &BlockOperator,
    k_q: &BlockOperator,
    n: &BlockOperator,
    loads: &[Vec<f64>],
    psi_t: &[f64],
    grid: &TimeGrid,
    theta: f64,
) -> Result<Trajectory> {
    check_theta(theta)?;
    let g = check_inputs(m, k_q, n, loads, psi_t, grid)?;
    let gt = g.transpose();
    let reversed: Vec<Vec<f64>> = loads
        .iter()
        .rev()
        .map(|l| l.iter().map(|v| -v).collect())
        .collect();
    let n_steps = grid.n_steps();
    let mut states = theta_march(&m.matrix, &gt, &reversed, psi_t, grid, theta, |k| {
        n_steps - k
    })?;
    states.reverse();
    Ok(Trajectory {
        states,
        grid: *grid,
        theta,
        scheme: Scheme::BackwardWeak,
    })
}

/// `(M + τG)ᵀ Ψ^{n−1} = M Ψ^n − τ L^n`, `Ψ^N = Ψ_T`: the exact adjoint of
/// the implicit Euler forward map, so the duality identity holds to
/// round-off. Only `theta = 1` is accepted.
pub fn solve_backward_exact_transpose(
    m: &BlockOperator,
    k_q: &BlockOperator,
    n: &BlockOperator,
    loads: &[Vec<f64>],
    psi_t: &[f64],
    grid: &TimeGrid,
    theta: f64,
) -> Result<Trajectory> {
    if theta != 1.0 {
        return Err(Error::param(
            "theta",
            format!("the exact transpose backward solve requires theta = 1, got {theta}"),
        ));
    }
    let g = check_inputs(m, k_q, n, loads, psi_t, grid)?;
    let tau = grid.tau();
    // factor Aᵀ directly so the checked solve measures the residual of the
    // system actually being solved
    let at = CsrMatrix::linear_combination(&[(1.0, &m.matrix), (tau, &g)]).transpose();
    let solver = CheckedSolver::new(at)?;
    let n_steps = grid.n_steps();
    let mut states = vec![Vec::new(); n_steps + 1];
    states[n_steps] = psi_t.to_vec();
    for k in (1..=n_steps).rev() {
        let mut rhs = m.apply(&states[k]);
        if !loads.is_empty() {
            rhs.iter_mut()
                .zip(&loads[k])
                .for_each(|(r, l)| *r -= tau * l);
        }
        states[k - 1] = solver.solve(&rhs, k - 1)?;
    }
    Ok(Trajectory {
        states,
        grid: *grid,
        theta,
        scheme: Scheme::BackwardTranspose,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn solve_backward(
    mode: BackwardMode,
    m: &BlockOperator,
    k_q: &BlockOperator,
    n: &BlockOperator,
    loads: &[Vec<f64>],
    psi_t: &[f64],
    grid: &TimeGrid,
    theta: f64,
) -> Result<Trajectory> {
    match mode {
        BackwardMode::Weak => solve_backward_weak(m, k_q, n, loads, psi_t, grid, theta),
        BackwardMode::ExactTranspose => {
            solve_backward_exact_transpose(m, k_q, n, loads, psi_t, grid, theta)
        }
    }
}

/// Terms of the discrete duality identity
/// `Σ τ⟨Q^n, Ψ^{n−1}⟩ − ⟨Y^N, Ψ_T⟩_M + Σ τ⟨F^n, Y^n⟩ = 0` (sums over
/// `n = 1..N`), which pairs an implicit Euler forward solve from `Y^0 = 0`
/// with a backward solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    pub source_term: f64,
    pub final_term: f64,
    pub dual_term: f64,
    pub residual: f64,
    /// `residual / (|source| + |final| + |dual|)`, zero when all terms vanish.
    pub relative: f64,
}

pub fn duality_residual(
    m: &BlockOperator,
    forward: &Trajectory,
    forward_loads: &[Vec<f64>],
    backward: &Trajectory,
    backward_loads: &[Vec<f64>],
) -> Result<DualityReport> {
    if forward.grid != backward.grid {
        return Err(Error::param("grid", "forward and backward grids differ"));
    }
    let grid = forward.grid;
    let dim = m.dim();
    check_len(dim, forward.dim())?;
    check_len(dim, backward.dim())?;
    check_loads(forward_loads, &grid, dim)?;
    check_loads(backward_loads, &grid, dim)?;
    if forward.first().iter().any(|&v| v != 0.0) {
        return Err(Error::param("forward", "initial state must be zero"));
    }
    let tau = grid.tau();
    let n_steps = grid.n_steps();
    let source_term: f64 = if forward_loads.is_empty() {
        0.0
    } else {
        (1..=n_steps)
            .map(|n| tau * dot(&forward_loads[n], &backward.states[n - 1]))
            .sum()
    };
    let final_term = dot(forward.last(), &m.apply(backward.last()));
    let dual_term: f64 = if backward_loads.is_empty() {
        0.0
    } else {
        (1..=n_steps)
            .map(|n| tau * dot(&backward_loads[n], &forward.states[n]))
            .sum()
    };
    let residual = source_term - final_term + dual_term;
    let scale = source_term.abs() + final_term.abs() + dual_term.abs();
    Ok(DualityReport {
        source_term,
        final_term,
        dual_term,
        residual,
        relative: if scale > 0.0 {
            residual.abs() / scale
        } else {
            0.0
        },
    })
}
