//! Galerkin approximation in the eigenbasis of the principal form.
//!
//! The modes `W_k` solve `K_a W_k = λ_k M W_k`; they are orthonormal in 𝕃²
//! and orthogonal in ℍ¹. Projecting `M Y' + G Y = L` onto the first `n`
//! modes gives the dense system `d' + E d = F` with `E = WᵀGW`, `F = WᵀL`.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{BlockOperator, RieszMap};
use crate::coefficients::ConstantLedger;
use crate::error::{check_len, Error, Result};
use crate::forward::{check_loads, check_theta, Scheme, TimeGrid, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    /// Ascending generalized eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Mode `k` is column `k`.
    pub modes: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.modes.nrows()
    }

    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.modes.column(k).iter().copied().collect()
    }

    /// The first `n` modes; bases obtained this way are nested.
    pub fn truncate(&self, n: usize) -> Result<SpectralBasis> {
        if n == 0 || n > self.n_modes() {
            return Err(Error::param(
                "n_modes",
                format!("must lie in 1..={}, got {n}", self.n_modes()),
            ));
        }
        Ok(SpectralBasis {
            eigenvalues: self.eigenvalues[..n].to_vec(),
            modes: self.modes.columns(0, n).into_owned(),
        })
    }

    /// Coefficients `Wᵀ M u` of the 𝕃²-orthogonal projection.
    pub fn project(&self, m: &BlockOperator, u: &[f64]) -> Result<DVector<f64>> {
        check_len(self.dim(), u.len())?;
        let mu = DVector::from_vec(m.apply(u));
        Ok(self.modes.tr_mul(&mu))
    }

    /// `Σ d_k W_k`.
    pub fn expand(&self, coeffs: &DVector<f64>) -> Vec<f64> {
        (&self.modes * coeffs).iter().copied().collect()
    }
}

/// Generalized symmetric eigenpairs of `(K_a, M)` by Cholesky reduction.
pub fn compute_basis(
    k_a: &BlockOperator,
    m: &BlockOperator,
    n_modes: usize,
) -> Result<SpectralBasis> {
    let dim = m.dim();
    check_len(dim, k_a.dim())?;
    if n_modes == 0 || n_modes > dim {
        return Err(Error::param(
            "n_modes",
            format!("must lie in 1..={dim}, got {n_modes}"),
        ));
    }
    let chol = m
        .matrix
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::Eigen("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ K_a L⁻ᵀ
    let mut c = k_a.matrix.to_dense();
    if !l.solve_lower_triangular_mut(&mut c) {
        return Err(Error::Eigen("singular Cholesky factor".into()));
    }
    let mut c = c.transpose();
    if !l.solve_lower_triangular_mut(&mut c) {
        return Err(Error::Eigen("singular Cholesky factor".into()));
    }
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let order = &order[..n_modes];
    let mut v = DMatrix::zeros(dim, n_modes);
    for (j, &k) in order.iter().enumerate() {
        v.set_column(j, &eig.eigenvectors.column(k));
    }
    // W = L⁻ᵀ V
    let lt = l.transpose();
    if !lt.solve_upper_triangular_mut(&mut v) {
        return Err(Error::Eigen("singular Cholesky factor".into()));
    }
    for j in 0..n_modes {
        let mut col = v.column_mut(j);
        let pivot = if j == 0 {
            col.sum()
        } else {
            col.iter()
                .copied()
                .fold(0.0, |a: f64, x| if x.abs() > a.abs() { x } else { a })
        };
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    Ok(SpectralBasis {
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        modes: v,
    })
}

/// The projected system `d' + E d = F(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    /// `E[k][l] = W_kᵀ G W_l`.
    pub e: DMatrix<f64>,
    /// `F_k(t_n) = W_kᵀ L^n` at every time node; empty for zero forcing.
    pub loads: Vec<DVector<f64>>,
}

impl ReducedSystem {
    /// The system for the first `n` modes of the same basis.
    pub fn truncate(&self, n: usize) -> Result<ReducedSystem> {
        if n == 0 || n > self.e.nrows() {
            return Err(Error::param(
                "n_modes",
                format!("must lie in 1..={}, got {n}", self.e.nrows()),
            ));
        }
        Ok(ReducedSystem {
            e: self.e.view((0, 0), (n, n)).into_owned(),
            loads: self
                .loads
                .iter()
                .map(|f| f.rows(0, n).into_owned())
                .collect(),
        })
    }
}

pub fn assemble_reduced(
    basis: &SpectralBasis,
    g: &BlockOperator,
    loads: &[Vec<f64>],
) -> Result<ReducedSystem> {
    check_len(basis.dim(), g.dim())?;
    let n = basis.n_modes();
    let mut gw = DMatrix::zeros(basis.dim(), n);
    for k in 0..n {
        let col = g.apply(&basis.mode(k));
        gw.set_column(k, &DVector::from_vec(col));
    }
    let e = basis.modes.tr_mul(&gw);
    let loads = loads
        .iter()
        .map(|l| {
            check_len(basis.dim(), l.len())?;
            Ok(basis.modes.tr_mul(&DVector::from_column_slice(l)))
        })
        .collect::<Result<_>>()?;
    Ok(ReducedSystem { e, loads })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub coeffs: Vec<DVector<f64>>,
    pub grid: TimeGrid,
    pub theta: f64,
}

fn check_reduced(sys: &ReducedSystem, d0: &DVector<f64>, grid: &TimeGrid) -> Result<usize> {
    let n = sys.e.nrows();
    check_len(n, sys.e.ncols())?;
    check_len(n, d0.len())?;
    if !sys.loads.is_empty() {
        check_len(grid.n_steps() + 1, sys.loads.len())?;
        sys.loads.iter().try_for_each(|f| check_len(n, f.len()))?;
    }
    Ok(n)
}

fn reduced_theta_load(sys: &ReducedSystem, k: usize, theta: f64) -> Option<DVector<f64>> {
    (!sys.loads.is_empty()).then(|| &sys.loads[k + 1] * theta + &sys.loads[k] * (1.0 - theta))
}

/// θ-method `(I + θτE) d^{n+1} = (I − (1−θ)τE) d^n + τ F^{n+θ}`.
pub fn integrate_reduced(
    sys: &ReducedSystem,
    d0: &DVector<f64>,
    grid: &TimeGrid,
    theta: f64,
) -> Result<ReducedTrajectory> {
    check_theta(theta)?;
    let n = check_reduced(sys, d0, grid)?;
    let tau = grid.tau();
    let id = DMatrix::<f64>::identity(n, n);
    let lhs = &id + &sys.e * (theta * tau);
    let rhs_op = &id - &sys.e * ((1.0 - theta) * tau);
    let lu = lhs.lu();
    let mut coeffs = Vec::with_capacity(grid.n_steps() + 1);
    coeffs.push(d0.clone());
    for k in 0..grid.n_steps() {
        let mut rhs = &rhs_op * &coeffs[k];
        if let Some(f) = reduced_theta_load(sys, k, theta) {
            rhs += f * tau;
        }
        let next = lu.solve(&rhs).ok_or_else(|| Error::Step {
            step: k + 1,
            reason: "singular reduced system".into(),
        })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Step {
                step: k + 1,
                reason: "reduced solution contains NaN or infinity".into(),
            });
        }
        coeffs.push(next);
    }
    Ok(ReducedTrajectory {
        coeffs,
        grid: *grid,
        theta,
    })
}

/// Largest system handled by [`integrate_reduced_exact`].
pub const EXACT_MAX_MODES: usize = 50;

/// Exact solution of `d' + E d = F(t)` with `F` interpolated linearly between
/// time nodes, via the exponential of an augmented matrix per step.
pub fn integrate_reduced_exact(
    sys: &ReducedSystem,
    d0: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<ReducedTrajectory> {
    let n = check_reduced(sys, d0, grid)?;
    if n > EXACT_MAX_MODES {
        return Err(Error::param(
            "n_modes",
            format!("exact reference path supports at most {EXACT_MAX_MODES} modes, got {n}"),
        ));
    }
    let tau = grid.tau();
    // state (d, s, 1) with s' = 1
    let mut coeffs = Vec::with_capacity(grid.n_steps() + 1);
    coeffs.push(d0.clone());
    let mut base = DMatrix::<f64>::zeros(n + 2, n + 2);
    base.view_mut((0, 0), (n, n)).copy_from(&(-&sys.e));
    base[(n, n + 1)] = 1.0;
    let homogeneous = sys.loads.is_empty();
    let step_free = homogeneous.then(|| (&base * tau).exp());
    for k in 0..grid.n_steps() {
        let propagator = match &step_free {
            Some(p) => p.clone(),
            None => {
                let mut a = base.clone();
                let slope = (&sys.loads[k + 1] - &sys.loads[k]) / tau;
                a.view_mut((0, n), (n, 1)).copy_from(&slope);
                a.view_mut((0, n + 1), (n, 1)).copy_from(&sys.loads[k]);
                (a * tau).exp()
            }
        };
        let mut z = DVector::zeros(n + 2);
        z.rows_mut(0, n).copy_from(&coeffs[k]);
        z[n + 1] = 1.0;
        let z = propagator * z;
        coeffs.push(z.rows(0, n).into_owned());
    }
    Ok(ReducedTrajectory {
        coeffs,
        grid: *grid,
        theta: f64::NAN,
    })
}

pub fn reconstruct(basis: &SpectralBasis, reduced: &ReducedTrajectory) -> Result<Trajectory> {
    let states = reduced
        .coeffs
        .iter()
        .map(|d| {
            check_len(basis.n_modes(), d.len())?;
            Ok(basis.expand(d))
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory {
        states,
        grid: reduced.grid,
        theta: reduced.theta,
        scheme: Scheme::Spectral,
    })
}

/// Energy bookkeeping for one Galerkin run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCertificate {
    pub n_modes: usize,
    /// `max_n ‖U_n(t_n)‖²_𝕃²`
    pub max_m_norm_sq: f64,
    /// `Σ τ ‖U_n^{θ}‖²_ℍ¹` at the θ-points of each step.
    pub l2_h1_sq: f64,
    /// `Σ τ ‖(U^{n+1} − U^n)/τ‖²_ℍ⁻¹`
    pub l2_hm1_sq: f64,
    /// `Σ τ ‖L^{n+θ}‖²_ℍ⁻¹ + ‖U_0‖²_𝕃²`
    pub data_norm_sq: f64,
    /// Sum of the three left-hand terms over `data_norm_sq`, 0 for zero data.
    pub ratio: f64,
    /// Gronwall bound at the final time.
    pub gronwall_bound: f64,
    /// `‖U_n(t_n)‖²` at each node.
    pub node_norms_sq: Vec<f64>,
    /// `e^{C₁t_n}(‖U_n(0)‖² + C₂ Σ_{k<n} τ‖L^{k+θ}‖²_ℍ⁻¹)` at each node.
    pub node_bounds: Vec<f64>,
    pub violated: bool,
}

/// Upper bound for [`EnergyCertificate::ratio`] implied by the ledger
/// constants, the continuity constant `max(d,δ) + M + m` and the horizon.
pub fn certificate_ratio_bound(
    ledger: &ConstantLedger,
    d: f64,
    delta: f64,
    final_time: f64,
) -> f64 {
    let c1 = 2.0 * ledger.omega;
    let c2 = 1.0 / (2.0 * ledger.lambda);
    let max_term = (c1 * final_time).exp() * c2.max(1.0);
    let lam = ledger.lambda;
    let h1 = (1.0 / lam) * ((1.0 / lam).max(1.0) + 2.0 * ledger.omega * final_time * max_term);
    let cont = d.max(delta) + ledger.m_drift + ledger.m_reaction;
    max_term + h1 + 2.0 + 2.0 * cont * cont * h1
}

/// Evaluates the three energy terms of a reduced trajectory and checks the
/// Gronwall bound with `C₁ = 2ω`, `C₂ = 1/(2λ)` at every node.
///
/// `loads` are the full-space loads used to build the reduced system and
/// `riesz` factorizes the ℍ¹ Gram matrix.
pub fn energy_certificate(
    basis: &SpectralBasis,
    reduced: &ReducedTrajectory,
    loads: &[Vec<f64>],
    riesz: &RieszMap,
    initial_norm_sq: f64,
    ledger: &ConstantLedger,
) -> Result<EnergyCertificate> {
    let grid = reduced.grid;
    check_loads(loads, &grid, basis.dim())?;
    check_len(grid.n_steps() + 1, reduced.coeffs.len())?;
    let theta = reduced.theta;
    if !(0.5..=1.0).contains(&theta) {
        return Err(Error::param(
            "theta",
            "certificate needs a θ-method trajectory",
        ));
    }
    let tau = grid.tau();
    let lam = &basis.eigenvalues;
    let node_norms_sq: Vec<f64> = reduced.coeffs.iter().map(|d| d.norm_squared()).collect();
    let mut l2_h1_sq = 0.0;
    let mut l2_hm1_sq = 0.0;
    let mut load_sq = Vec::with_capacity(grid.n_steps());
    for k in 0..grid.n_steps() {
        let (a, b) = (&reduced.coeffs[k], &reduced.coeffs[k + 1]);
        let mid = b * theta + a * (1.0 - theta);
        l2_h1_sq += tau * mid.iter().zip(lam).map(|(x, l)| l * x * x).sum::<f64>();
        let rate = (b - a) / tau;
        l2_hm1_sq += tau * rate.iter().zip(lam).map(|(x, l)| x * x / l).sum::<f64>();
        load_sq.push(match loads.is_empty() {
            true => 0.0,
            false => {
                let l: Vec<f64> = loads[k + 1]
                    .iter()
                    .zip(&loads[k])
                    .map(|(x, y)| theta * x + (1.0 - theta) * y)
                    .collect();
                riesz.dual_norm_sq(&l)?
            }
        });
    }
    let forcing_sq: f64 = load_sq.iter().map(|v| tau * v).sum();
    let data_norm_sq = forcing_sq + initial_norm_sq;
    let max_m_norm_sq = node_norms_sq.iter().copied().fold(0.0, f64::max);
    let lhs = max_m_norm_sq + l2_h1_sq + l2_hm1_sq;
    let ratio = if data_norm_sq > 0.0 {
        lhs / data_norm_sq
    } else {
        0.0
    };

    let c1 = 2.0 * ledger.omega;
    let c2 = 1.0 / (2.0 * ledger.lambda);
    let start = node_norms_sq[0];
    let mut acc = 0.0;
    let mut node_bounds = Vec::with_capacity(node_norms_sq.len());
    for n in 0..=grid.n_steps() {
        if n > 0 {
            acc += tau * load_sq[n - 1];
        }
        node_bounds.push((c1 * grid.time(n)).exp() * (start + c2 * acc));
    }
    let violated = node_norms_sq
        .iter()
        .zip(&node_bounds)
        .any(|(v, b)| *v > b * (1.0 + 1e-12) + 1e-300);
    Ok(EnergyCertificate {
        n_modes: basis.n_modes(),
        max_m_norm_sq,
        l2_h1_sq,
        l2_hm1_sq,
        data_norm_sq,
        ratio,
        gronwall_bound: *node_bounds.last().expect("grid has nodes"),
        node_norms_sq,
        node_bounds,
        violated,
    })
}
