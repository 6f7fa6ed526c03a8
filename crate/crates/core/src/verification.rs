//! Invariant checks and convergence studies.
//!
//! Every routine takes an explicit seed; random fields have independent
//! entries uniform in `[-1, 1]` drawn from a ChaCha8 stream.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjoint::{
    duality_residual, solve_backward_exact_transpose, solve_backward_weak, DualityReport,
};
use crate::assembly::{assemble_load_l2, BulkField, Discretization, SurfaceField};
use crate::coefficients::{CoefficientSpec, EpsilonPolicy};
use crate::error::{check_len, Error, Result};
use crate::forward::{mass_functional, solve_forward, TimeGrid, Trajectory};
use crate::geometry::{generate_mesh, Shape};
use crate::problem::Problem;
use crate::sparse::{dot, norm_inf, CsrMatrix, SparseLu};
use crate::spectral::{
    assemble_reduced, compute_basis, energy_certificate, integrate_reduced, reconstruct,
    EnergyCertificate, SpectralBasis,
};

/// Pass/fail thresholds; every field can be overridden from a run config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub form_margin: f64,
    pub duality: f64,
    pub conservation: f64,
    pub basis: f64,
    pub spectral_fem: f64,
    pub spatial_order: (f64, f64),
    pub temporal_order_euler: (f64, f64),
    pub temporal_order_midpoint: (f64, f64),
    pub backward_ratio_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            form_margin: 1e-10,
            duality: 1e-10,
            conservation: 1e-12,
            basis: 1e-10,
            spectral_fem: 1e-8,
            spatial_order: (1.8, 2.2),
            temporal_order_euler: (0.8, 1.2),
            temporal_order_midpoint: (1.8, 2.2),
            backward_ratio_factor: 2.0,
        }
    }
}

/// The coarse disk used by the default verification run: a 32-gon refined
/// twice, 321 degrees of freedom.
pub const COARSE_DISK: Shape = Shape::Disk {
    radius: 1.0,
    n_segments: 32,
};
pub const COARSE_DISK_REFINEMENT: usize = 2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// One line of a report: a named criterion with its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

pub fn summary_text(checks: &[Check]) -> String {
    let mut s: String = checks.iter().map(|c| c.line() + "\n").collect();
    let failed = checks.iter().filter(|c| !c.pass).count();
    s.push_str(&format!(
        "{} of {} checks passed\n",
        checks.len() - failed,
        checks.len()
    ));
    s
}

fn relative_margin(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

/// Both sides of the form bound and of the coercivity inequality for one field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormSample {
    /// `|UᵀNU|`
    pub bound_lhs: f64,
    /// `α UᵀK_aU + β UᵀMU`
    pub bound_rhs: f64,
    /// `λ UᵀK_h1U`
    pub coercive_lhs: f64,
    /// `Uᵀ(K_q+N)U + ω UᵀMU`
    pub coercive_rhs: f64,
}

impl FormSample {
    pub fn bound_margin(&self) -> f64 {
        relative_margin(self.bound_lhs, self.bound_rhs)
    }

    pub fn coercive_margin(&self) -> f64 {
        relative_margin(self.coercive_lhs, self.coercive_rhs)
    }
}

pub fn check_form_sample(p: &Problem, u: &[f64]) -> Result<FormSample> {
    check_len(p.n_dofs(), u.len())?;
    let l = &p.ledger;
    let mass = p.m_norm_sq(u);
    let a = p.h1_norm_sq(u);
    let nuu = dot(u, &p.n.apply(u));
    let guu = dot(u, &p.g.apply(u));
    Ok(FormSample {
        bound_lhs: nuu.abs(),
        bound_rhs: l.alpha * a + l.beta * mass,
        coercive_lhs: l.lambda * a,
        coercive_rhs: guu + l.omega * mass,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormReport {
    pub samples: Vec<FormSample>,
    pub min_bound_margin: f64,
    pub min_coercive_margin: f64,
    pub alpha: f64,
    pub pass: bool,
}

pub fn run_form_checks(
    p: &Problem,
    n_samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<FormReport> {
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    let mut r = rng(seed);
    let samples = (0..n_samples)
        .map(|_| check_form_sample(p, &random_field(&mut r, p.n_dofs())))
        .collect::<Result<Vec<_>>>()?;
    let min_bound_margin = samples
        .iter()
        .map(FormSample::bound_margin)
        .fold(f64::INFINITY, f64::min);
    let min_coercive_margin = samples
        .iter()
        .map(FormSample::coercive_margin)
        .fold(f64::INFINITY, f64::min);
    Ok(FormReport {
        pass: p.ledger.alpha < 1.0
            && min_bound_margin >= -tol.form_margin
            && min_coercive_margin >= -tol.form_margin,
        samples,
        min_bound_margin,
        min_coercive_margin,
        alpha: p.ledger.alpha,
    })
}

fn random_loads(r: &mut ChaCha8Rng, grid: &TimeGrid, dim: usize) -> Vec<Vec<f64>> {
    (0..=grid.n_steps()).map(|_| random_field(r, dim)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualitySuiteReport {
    pub trials: Vec<DualityReport>,
    pub max_relative: f64,
    pub pass: bool,
}

/// Random `(Q, F, Ψ_T)` trials pairing implicit Euler forward solves from
/// zero with exact-transpose backward solves.
pub fn run_duality_suite(
    p: &Problem,
    grid: &TimeGrid,
    n_trials: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<DualitySuiteReport> {
    if n_trials == 0 {
        return Err(Error::param("n_trials", "must be at least 1"));
    }
    let mut r = rng(seed);
    let dim = p.n_dofs();
    let zero = vec![0.0; dim];
    let mut trials = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let q = random_loads(&mut r, grid, dim);
        let f = random_loads(&mut r, grid, dim);
        let psi_t = random_field(&mut r, dim);
        let y = solve_forward(&p.m, &p.k_q, &p.n, &q, &zero, grid, 1.0)?;
        let psi = solve_backward_exact_transpose(&p.m, &p.k_q, &p.n, &f, &psi_t, grid, 1.0)?;
        trials.push(duality_residual(&p.m, &y, &q, &psi, &f)?);
    }
    let max_relative = trials.iter().map(|t| t.relative).fold(0.0, f64::max);
    Ok(DualitySuiteReport {
        trials,
        max_relative,
        pass: max_relative <= tol.duality,
    })
}

/// Duality residual with the weak backward scheme on time-smooth data
/// `Q(t) = cos(t) Q̂`, `F(t) = e^{t} F̂`.
pub fn weak_duality_residual(p: &Problem, grid: &TimeGrid, seed: u64) -> Result<DualityReport> {
    let mut r = rng(seed);
    let dim = p.n_dofs();
    let qh = random_field(&mut r, dim);
    let fh = random_field(&mut r, dim);
    let psi_t = random_field(&mut r, dim);
    let scaled = |v: &[f64], s: f64| v.iter().map(|x| s * x).collect::<Vec<_>>();
    let q: Vec<Vec<f64>> = grid.times().iter().map(|t| scaled(&qh, t.cos())).collect();
    let f: Vec<Vec<f64>> = grid.times().iter().map(|t| scaled(&fh, t.exp())).collect();
    let y = solve_forward(&p.m, &p.k_q, &p.n, &q, &vec![0.0; dim], grid, 1.0)?;
    let psi = solve_backward_weak(&p.m, &p.k_q, &p.n, &f, &psi_t, grid, 1.0)?;
    duality_residual(&p.m, &y, &q, &psi, &f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    pub masses: Vec<f64>,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Total mass `∫_Ω y + ∫_Γ y_Γ` along a source-free run; the deviation is
/// measured relative to `max(1, |initial mass|)`.
pub fn run_conservation_check(
    p: &Problem,
    y0: &[f64],
    grid: &TimeGrid,
    theta: f64,
    tol: &Tolerances,
) -> Result<ConservationReport> {
    let traj = solve_forward(&p.m, &p.k_q, &p.n, &[], y0, grid, theta)?;
    let masses = traj
        .states
        .iter()
        .map(|y| mass_functional(&p.m_omega, &p.m_gamma, y).map(|(a, b)| a + b))
        .collect::<Result<Vec<_>>>()?;
    let scale = masses[0].abs().max(1.0);
    let max_deviation = masses
        .iter()
        .map(|m| (m - masses[0]).abs() / scale)
        .fold(0.0, f64::max);
    Ok(ConservationReport {
        masses,
        max_deviation,
        pass: max_deviation <= tol.conservation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisReport {
    /// `max |WᵀMW − I|`
    pub orthonormality: f64,
    /// Largest off-diagonal entry of `WᵀK_aW`.
    pub h1_offdiagonal: f64,
    pub lambda1_error: f64,
    /// Spread of the first mode's entries.
    pub constant_mode_spread: f64,
    pub min_eigenvalue: f64,
    pub pass: bool,
}

pub fn check_basis(p: &Problem, basis: &SpectralBasis, tol: &Tolerances) -> BasisReport {
    let w = &basis.modes;
    let gram = w.tr_mul(&(p.m.matrix.to_dense() * w));
    let stiff = w.tr_mul(&(p.k_a.matrix.to_dense() * w));
    let n = basis.n_modes();
    let mut orthonormality = 0.0f64;
    let mut h1_offdiagonal = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            orthonormality = orthonormality.max((gram[(i, j)] - id).abs());
            if i != j {
                h1_offdiagonal = h1_offdiagonal.max(stiff[(i, j)].abs());
            }
        }
    }
    let first = basis.mode(0);
    let (lo, hi) = first
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let lambda1_error = (basis.eigenvalues[0] - 1.0).abs();
    let min_eigenvalue = basis
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    BasisReport {
        pass: orthonormality <= tol.basis
            && h1_offdiagonal <= tol.basis
            && lambda1_error <= tol.basis
            && hi - lo <= tol.basis
            && min_eigenvalue >= 1.0 - tol.basis,
        orthonormality,
        h1_offdiagonal,
        lambda1_error,
        constant_mode_spread: hi - lo,
        min_eigenvalue,
    }
}

/// `max_n ‖a^n − b^n‖_M`.
pub fn max_m_distance(p: &Problem, a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_len(a.len(), b.len())?;
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            check_len(x.len(), y.len())?;
            let d: Vec<f64> = x.iter().zip(y).map(|(u, v)| u - v).collect();
            Ok(p.m_norm_sq(&d).max(0.0).sqrt())
        })
        .try_fold(0.0f64, |m, e: Result<f64>| Ok(m.max(e?)))
}

/// Distance between the Galerkin reconstruction with `n` modes and the full
/// finite-element solve, for each `n` in `sweep`.
#[allow(clippy::too_many_arguments)]
pub fn spectral_vs_fem(
    p: &Problem,
    basis: &SpectralBasis,
    y0: &[f64],
    loads: &[Vec<f64>],
    grid: &TimeGrid,
    theta: f64,
    sweep: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let fem = solve_forward(&p.m, &p.k_q, &p.n, loads, y0, grid, theta)?;
    let full = assemble_reduced(basis, &p.g, loads)?;
    let d0 = basis.project(&p.m, y0)?;
    sweep
        .iter()
        .map(|&n| {
            let sub = basis.truncate(n)?;
            let sys = full.truncate(n)?;
            let r = integrate_reduced(&sys, &d0.rows(0, n).into_owned(), grid, theta)?;
            Ok((n, max_m_distance(p, &fem, &reconstruct(&sub, &r)?)?))
        })
        .collect()
}

/// Energy certificates of the Galerkin runs with `n` modes for each `n`.
#[allow(clippy::too_many_arguments)]
pub fn certificate_sweep(
    p: &Problem,
    basis: &SpectralBasis,
    y0: &[f64],
    loads: &[Vec<f64>],
    grid: &TimeGrid,
    theta: f64,
    sweep: &[usize],
) -> Result<Vec<EnergyCertificate>> {
    let full = assemble_reduced(basis, &p.g, loads)?;
    let d0 = basis.project(&p.m, y0)?;
    let initial = p.m_norm_sq(y0);
    sweep
        .iter()
        .map(|&n| {
            let sub = basis.truncate(n)?;
            let r =
                integrate_reduced(&full.truncate(n)?, &d0.rows(0, n).into_owned(), grid, theta)?;
            energy_certificate(&sub, &r, loads, &p.riesz, initial, &p.ledger)
        })
        .collect()
}

/// `1, 2, 4, …` up to and including `dim`.
pub fn doubling_sweep(dim: usize) -> Vec<usize> {
    let mut v: Vec<usize> = std::iter::successors(Some(1usize), |&n| Some(n * 2))
        .take_while(|&n| n < dim)
        .collect();
    v.push(dim);
    v
}

/// Energy quantities of a backward solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardEnergy {
    pub max_m_norm_sq: f64,
    pub l2_h1_sq: f64,
    pub l2_hm1_sq: f64,
    pub data_norm_sq: f64,
    pub ratio: f64,
}

/// `[max‖Ψ‖²_M + Στ‖Ψ^θ‖²_ℍ¹ + Στ‖M(Ψ^{n+1}−Ψ^n)/τ‖²_ℍ⁻¹] / [Στ‖L^θ‖²_ℍ⁻¹ + ‖Ψ_T‖²_M]`
/// with θ-points taken in the reversed time direction of the scheme.
pub fn backward_energy(
    p: &Problem,
    traj: &Trajectory,
    loads: &[Vec<f64>],
) -> Result<BackwardEnergy> {
    let grid = traj.grid;
    let tau = grid.tau();
    let th = traj.theta;
    let dim = p.n_dofs();
    check_len(dim, traj.dim())?;
    let blend = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| th * x + (1.0 - th) * y)
            .collect()
    };
    let max_m_norm_sq = traj
        .states
        .iter()
        .map(|s| p.m_norm_sq(s))
        .fold(0.0, f64::max);
    let mut l2_h1_sq = 0.0;
    let mut l2_hm1_sq = 0.0;
    let mut forcing = 0.0;
    for n in 0..grid.n_steps() {
        let (a, b) = (&traj.states[n], &traj.states[n + 1]);
        l2_h1_sq += tau * p.h1_norm_sq(&blend(a, b));
        let rate: Vec<f64> = b.iter().zip(a).map(|(x, y)| (x - y) / tau).collect();
        l2_hm1_sq += tau * p.riesz.dual_norm_sq(&p.m.apply(&rate))?;
        if !loads.is_empty() {
            forcing += tau * p.riesz.dual_norm_sq(&blend(&loads[n], &loads[n + 1]))?;
        }
    }
    let data_norm_sq = forcing + p.m_norm_sq(traj.last());
    let lhs = max_m_norm_sq + l2_h1_sq + l2_hm1_sq;
    Ok(BackwardEnergy {
        max_m_norm_sq,
        l2_h1_sq,
        l2_hm1_sq,
        data_norm_sq,
        ratio: if data_norm_sq > 0.0 {
            lhs / data_norm_sq
        } else {
            0.0
        },
    })
}

/// Manufactured solution `y = e^{−t}(x² + y²)` on the unit disk. On the unit
/// circle `∂_ν y = 2e^{−t}` and `Δ_Γ y = 0`, which gives the sources below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured;

impl Manufactured {
    pub fn exact(t: f64, x: f64, y: f64) -> f64 {
        (-t).exp() * (x * x + y * y)
    }

    /// Loads at `t = 0`; the load at time `t` is `e^{−t}` times this vector.
    pub fn load_profile(p: &Problem) -> Result<Vec<f64>> {
        let d = p.coeffs.d();
        let bulk_drift = p.coeffs.bulk_drift();
        let c = p.coeffs.bulk_reaction();
        let ell = p.coeffs.surface_reaction();
        let f = BulkField::from_fn(&p.disc, |x, y, k| {
            let r2 = x * x + y * y;
            -r2 - 4.0 * d + 2.0 * (bulk_drift[k][0] * x + bulk_drift[k][1] * y) + c[k] * r2
        });
        let g = SurfaceField::from_fn(&p.disc, |_, _, k| -1.0 + 2.0 * d + ell[k]);
        assemble_load_l2(&p.disc, &f, &g)
    }

    pub fn loads(p: &Problem, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
        let profile = Self::load_profile(p)?;
        Ok(grid
            .times()
            .iter()
            .map(|t| profile.iter().map(|v| (-t).exp() * v).collect())
            .collect())
    }

    /// Discrete profile `ŷ` with `(G − M) ŷ = L̂`. Started from `ŷ`, the
    /// spatially discrete system is solved exactly by `e^{−t} ŷ`, so no stiff
    /// transient is excited.
    pub fn discrete_profile(p: &Problem) -> Result<Vec<f64>> {
        let shifted = CsrMatrix::linear_combination(&[(1.0, &p.g.matrix), (-1.0, &p.m.matrix)]);
        SparseLu::new(&shifted)?.solve(&Self::load_profile(p)?)
    }

    pub fn interpolant(disc: &Discretization, t: f64) -> Vec<f64> {
        disc.interpolate(|x, y| Self::exact(t, x, y))
    }

    /// `max_n ‖Y^n − I_h y(t_n)‖_M`.
    pub fn error(p: &Problem, traj: &Trajectory) -> f64 {
        traj.states
            .iter()
            .enumerate()
            .map(|(n, s)| {
                let e: Vec<f64> = s
                    .iter()
                    .zip(Self::interpolant(&p.disc, traj.grid.time(n)))
                    .map(|(a, b)| a - b)
                    .collect();
                p.m_norm_sq(&e).max(0.0).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Exact solution of the spatially discrete system `M Y' + G Y = e^{rt} L̂`
/// at the nodes of `grid`, via the exponential of an augmented dense matrix.
pub fn semidiscrete_reference(
    p: &Problem,
    y0: &[f64],
    profile: &[f64],
    rate: f64,
    grid: &TimeGrid,
) -> Result<Vec<Vec<f64>>> {
    let n = p.n_dofs();
    check_len(n, y0.len())?;
    check_len(n, profile.len())?;
    let lu = p.m.matrix.to_dense().lu();
    let minv_g = lu
        .solve(&p.g.matrix.to_dense())
        .ok_or_else(|| Error::Solver("singular mass matrix".into()))?;
    let minv_l = lu
        .solve(&DVector::from_column_slice(profile))
        .ok_or_else(|| Error::Solver("singular mass matrix".into()))?;
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(&(-minv_g));
    a.view_mut((0, n), (n, 1)).copy_from(&minv_l);
    a[(n, n)] = rate;
    let step = (a * grid.tau()).exp();
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from_slice(y0);
    z[n] = 1.0;
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    out.push(y0.to_vec());
    for _ in 0..grid.n_steps() {
        z = &step * z;
        out.push(z.rows(0, n).iter().copied().collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub n_dofs: usize,
    pub n_steps: usize,
    pub tau: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub label: String,
    pub rows: Vec<ConvergenceRow>,
    /// Order between consecutive rows.
    pub rates: Vec<f64>,
    /// False when some refinement failed to reduce the error.
    pub monotone: bool,
}

impl RateTable {
    fn new(
        label: String,
        rows: Vec<ConvergenceRow>,
        refine: impl Fn(&ConvergenceRow, &ConvergenceRow) -> f64,
    ) -> Self {
        let rates = rows
            .windows(2)
            .map(|w| (w[0].error / w[1].error).ln() / refine(&w[0], &w[1]).ln())
            .collect();
        let monotone = rows.windows(2).all(|w| w[1].error < w[0].error);
        Self {
            label,
            rows,
            rates,
            monotone,
        }
    }

    pub fn within(&self, range: (f64, f64)) -> bool {
        self.monotone
            && !self.rates.is_empty()
            && self.rates.iter().all(|r| (range.0..=range.1).contains(r))
    }
}

/// Spatial study of the manufactured disk problem: implicit Euler with
/// `τ ∝ h²` (four times more steps per uniform refinement).
pub fn spatial_study(
    n_segments: usize,
    levels: &[usize],
    coeffs: &CoefficientSpec,
    final_time: f64,
    base_steps: usize,
) -> Result<RateTable> {
    if levels.len() < 3 {
        return Err(Error::param(
            "levels",
            "a convergence study needs at least 3 levels",
        ));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for (i, &level) in levels.iter().enumerate() {
        let mesh = generate_mesh(
            Shape::Disk {
                radius: 1.0,
                n_segments,
            },
            level,
        )?;
        let disc = Discretization::new(mesh)?;
        let resolved = coeffs.resolve(&disc.mesh, &disc.bmesh)?;
        let p = Problem::new(disc, resolved, EpsilonPolicy::Auto)?;
        let n_steps = base_steps * 4usize.pow(i as u32);
        let grid = TimeGrid::new(final_time, n_steps)?;
        let loads = Manufactured::loads(&p, &grid)?;
        let y0 = Manufactured::interpolant(&p.disc, 0.0);
        let traj = solve_forward(&p.m, &p.k_q, &p.n, &loads, &y0, &grid, 1.0)?;
        rows.push(ConvergenceRow {
            level,
            h: p.disc.mesh.mesh_size(),
            n_dofs: p.n_dofs(),
            n_steps,
            tau: grid.tau(),
            error: Manufactured::error(&p, &traj),
        });
    }
    // uniform quadrisection halves the mesh size
    Ok(RateTable::new("space".into(), rows, |_, _| 2.0))
}

/// Temporal study on a fixed mesh: errors of the θ-scheme against the exact
/// semi-discrete solution, so the spatial error does not mask the rate. The
/// run starts from [`Manufactured::discrete_profile`]; from the nodal
/// interpolant the stiff modes decay like `(−1)^n` under θ = 1/2 and hide
/// the second order.
pub fn temporal_study(
    p: &Problem,
    final_time: f64,
    steps: &[usize],
    theta: f64,
) -> Result<RateTable> {
    if steps.len() < 3 {
        return Err(Error::param(
            "levels",
            "a convergence study needs at least 3 levels",
        ));
    }
    let profile = Manufactured::load_profile(p)?;
    let y0 = Manufactured::discrete_profile(p)?;
    let mut rows = Vec::with_capacity(steps.len());
    for (level, &n_steps) in steps.iter().enumerate() {
        let grid = TimeGrid::new(final_time, n_steps)?;
        let loads = Manufactured::loads(p, &grid)?;
        let traj = solve_forward(&p.m, &p.k_q, &p.n, &loads, &y0, &grid, theta)?;
        let reference = Trajectory {
            states: semidiscrete_reference(p, &y0, &profile, -1.0, &grid)?,
            grid,
            theta,
            scheme: traj.scheme,
        };
        rows.push(ConvergenceRow {
            level,
            h: p.disc.mesh.mesh_size(),
            n_dofs: p.n_dofs(),
            n_steps,
            tau: grid.tau(),
            error: max_m_distance(p, &traj, &reference)?,
        });
    }
    Ok(RateTable::new(
        format!("time theta={theta}"),
        rows,
        |a, b| a.tau / b.tau,
    ))
}

/// Largest absolute entry of a trajectory difference.
pub fn max_abs_difference(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            let d: Vec<f64> = x.iter().zip(y).map(|(u, v)| u - v).collect();
            norm_inf(&d)
        })
        .fold(0.0, f64::max)
}

/// Builds the problem and basis used by the Galerkin checks.
pub fn full_basis(p: &Problem) -> Result<SpectralBasis> {
    compute_basis(&p.k_a, &p.m, p.n_dofs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse(drift: [f64; 2], c: f64) -> Problem {
        Problem::uniform(
            Shape::Disk {
                radius: 1.0,
                n_segments: 16,
            },
            1,
            1.0,
            1.0,
            drift,
            [0.0; 2],
            c,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn drift_free_form_checks_pass_trivially() {
        let p = coarse([0.0; 2], 0.0);
        let r = run_form_checks(&p, 50, 1, &Tolerances::default()).unwrap();
        assert!(r.pass);
        assert!(r
            .samples
            .iter()
            .all(|s| s.bound_lhs < 1e-12 && s.bound_rhs == 0.0));
    }

    #[test]
    fn unit_drift_form_checks_pass() {
        let p = coarse([1.0, 0.0], 0.0);
        let r = run_form_checks(&p, 200, 7, &Tolerances::default()).unwrap();
        assert!(r.pass, "{} {}", r.min_bound_margin, r.min_coercive_margin);
        assert_eq!(r.alpha, 0.5);
    }

    #[test]
    fn top_eigenmode_keeps_margins() {
        let p = coarse([1.0, 0.0], 0.0);
        let b = full_basis(&p).unwrap();
        let top = b.mode(b.n_modes() - 1);
        let s = check_form_sample(&p, &top).unwrap();
        assert!(s.bound_margin() >= 0.0 && s.coercive_margin() >= 0.0);
    }

    #[test]
    fn form_reports_are_deterministic() {
        let p = coarse([0.3, 0.4], 1.0);
        let a = run_form_checks(&p, 20, 99, &Tolerances::default()).unwrap();
        let b = run_form_checks(&p, 20, 99, &Tolerances::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duality_suite_passes() {
        let p = coarse([0.7, -0.2], 0.5);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let r = run_duality_suite(&p, &grid, 3, 5, &Tolerances::default()).unwrap();
        assert!(r.pass, "{}", r.max_relative);
    }

    #[test]
    fn weak_duality_is_first_order() {
        let p = coarse([0.7, -0.2], 0.5);
        let r1 = weak_duality_residual(&p, &TimeGrid::new(1.0, 16).unwrap(), 2).unwrap();
        let r2 = weak_duality_residual(&p, &TimeGrid::new(1.0, 32).unwrap(), 2).unwrap();
        let ratio = r2.residual.abs() / r1.residual.abs();
        assert!((0.4..=0.6).contains(&ratio), "{ratio}");
    }

    #[test]
    fn conservation_without_drift() {
        let p = coarse([0.0; 2], 0.0);
        let y0 = p.disc.interpolate(|x, y| 2.0 + x * y);
        let r = run_conservation_check(
            &p,
            &y0,
            &TimeGrid::new(1.0, 10).unwrap(),
            1.0,
            &Tolerances::default(),
        )
        .unwrap();
        assert!(r.pass, "{}", r.max_deviation);
    }

    #[test]
    fn reaction_drains_mass() {
        let p = coarse([0.0; 2], 1.0);
        let y0 = vec![1.0; p.n_dofs()];
        let r = run_conservation_check(
            &p,
            &y0,
            &TimeGrid::new(1.0, 10).unwrap(),
            1.0,
            &Tolerances::default(),
        )
        .unwrap();
        assert!(r.masses.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn doubling_sweep_ends_at_dim() {
        assert_eq!(doubling_sweep(5), vec![1, 2, 4, 5]);
        assert_eq!(doubling_sweep(4), vec![1, 2, 4]);
        assert_eq!(doubling_sweep(1), vec![1]);
    }

    #[test]
    fn spectral_sweep_converges_to_fem() {
        let p = coarse([0.5, 0.0], 0.2);
        let b = full_basis(&p).unwrap();
        let grid = TimeGrid::new(0.5, 8).unwrap();
        let y0 = p.disc.interpolate(|x, y| 1.0 + x - y * y);
        let sweep = doubling_sweep(p.n_dofs());
        let errs = spectral_vs_fem(&p, &b, &y0, &[], &grid, 1.0, &sweep).unwrap();
        assert!(errs.last().unwrap().1 <= 1e-8);
    }

    #[test]
    fn constant_data_needs_one_mode() {
        let p = coarse([0.0; 2], 0.0);
        let b = full_basis(&p).unwrap();
        let grid = TimeGrid::new(0.5, 4).unwrap();
        let y0 = vec![3.0; p.n_dofs()];
        let errs = spectral_vs_fem(&p, &b, &y0, &[], &grid, 1.0, &[1]).unwrap();
        assert!(errs[0].1 <= 1e-10);
    }

    #[test]
    fn manufactured_solution_converges_in_space() {
        let coeffs = CoefficientSpec::diffusion(1.0, 1.0);
        let t = spatial_study(8, &[1, 2, 3], &coeffs, 0.5, 2).unwrap();
        assert!(t.monotone, "{t:?}");
    }

    #[test]
    fn semidiscrete_reference_is_exact_for_steady_state() {
        let p = coarse([0.0; 2], 0.0);
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let one = vec![1.0; p.n_dofs()];
        let r = semidiscrete_reference(&p, &one, &vec![0.0; p.n_dofs()], 0.0, &grid).unwrap();
        assert!(r.iter().flatten().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn discrete_profile_decays_exponentially() {
        let p = coarse([0.5, 0.0], 1.0);
        let y0 = Manufactured::discrete_profile(&p).unwrap();
        let grid = TimeGrid::new(0.5, 4).unwrap();
        let r = semidiscrete_reference(
            &p,
            &y0,
            &Manufactured::load_profile(&p).unwrap(),
            -1.0,
            &grid,
        )
        .unwrap();
        for (n, state) in r.iter().enumerate() {
            let decay = (-grid.time(n)).exp();
            let err = state
                .iter()
                .zip(&y0)
                .map(|(a, b)| (a - decay * b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "step {n}: {err}");
        }
        let interp = Manufactured::interpolant(&p.disc, 0.0);
        let gap: Vec<f64> = y0.iter().zip(&interp).map(|(a, b)| a - b).collect();
        assert!(p.m_norm_sq(&gap).sqrt() < 0.1);
    }

    #[test]
    fn midpoint_is_second_order_in_time() {
        let p = coarse([0.5, 0.0], 1.0);
        let t = temporal_study(&p, 0.5, &[4, 8, 16], 0.5).unwrap();
        assert!(t.within((1.8, 2.2)), "{:?}", t.rates);
    }

    #[test]
    fn summary_lines() {
        let text = summary_text(&[Check::new("a", true, "ok"), Check::new("b", false, "bad")]);
        assert!(text.contains("PASS a: ok"));
        assert!(text.contains("FAIL b: bad"));
        assert!(text.ends_with("1 of 2 checks passed\n"));
    }
}
