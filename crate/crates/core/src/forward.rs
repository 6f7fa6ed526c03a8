//! θ-method time stepping of `M Y' + G Y = L(t)` with `G = K_q + N`.

use crate::assembly::BlockOperator;
use crate::error::{check_len, Error, Result};
use crate::sparse::{dot, norm_inf, CsrMatrix, SparseLu};

/// Uniform grid `t_n = n·τ`, `τ = T / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    final_time: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, n_steps: usize) -> Result<Self> {
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::param(
                "final_time",
                format!("must be positive, got {final_time}"),
            ));
        }
        if n_steps == 0 {
            return Err(Error::param("n_steps", "must be at least 1"));
        }
        Ok(Self {
            final_time,
            n_steps,
        })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn tau(&self) -> f64 {
        self.final_time / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.final_time
        } else {
            n as f64 * self.tau()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| self.time(n)).collect()
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self {
            final_time: self.final_time,
            n_steps: self.n_steps * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Forward,
    BackwardWeak,
    BackwardTranspose,
    Spectral,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Forward => "forward",
            Scheme::BackwardWeak => "backward-weak",
            Scheme::BackwardTranspose => "backward-transpose",
            Scheme::Spectral => "spectral",
        }
    }
}

/// States at every time node `t_0, …, t_N`, indexed forward in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub grid: TimeGrid,
    pub theta: f64,
    pub scheme: Scheme,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn last(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if (0.5..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::param(
            "theta",
            format!("must lie in [0.5, 1], got {theta}"),
        ))
    }
}

/// Loads at every time node, or an empty slice for zero forcing.
pub(crate) fn check_loads(loads: &[Vec<f64>], grid: &TimeGrid, dim: usize) -> Result<()> {
    if loads.is_empty() {
        return Ok(());
    }
    check_len(grid.n_steps() + 1, loads.len())?;
    loads.iter().try_for_each(|l| check_len(dim, l.len()))
}

/// `θ L^{n+1} + (1−θ) L^n`, or `None` for zero forcing.
pub(crate) fn theta_load(loads: &[Vec<f64>], n: usize, theta: f64) -> Option<Vec<f64>> {
    if loads.is_empty() {
        return None;
    }
    Some(
        loads[n + 1]
            .iter()
            .zip(&loads[n])
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect(),
    )
}

fn row_sum_norm(a: &CsrMatrix) -> f64 {
    let mut sums = vec![0.0; a.nrows()];
    for (r, _, v) in a.iter() {
        sums[r] += v.abs();
    }
    norm_inf(&sums)
}

/// A factorized system matrix solved to a relative residual of `1e-12`,
/// with one step of iterative refinement when the first solve falls short.
pub(crate) struct CheckedSolver {
    matrix: CsrMatrix,
    lu: SparseLu,
    norm: f64,
}

const RESIDUAL_TOL: f64 = 1e-12;

impl CheckedSolver {
    pub(crate) fn new(matrix: CsrMatrix) -> Result<Self> {
        let lu = SparseLu::new(&matrix)?;
        let norm = row_sum_norm(&matrix);
        Ok(Self { matrix, lu, norm })
    }

    pub(crate) fn solve(&self, rhs: &[f64], step: usize) -> Result<Vec<f64>> {
        let mut x = self.lu.solve(rhs)?;
        for attempt in 0..2 {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Step {
                    step,
                    reason: "solution contains NaN or infinity".into(),
                });
            }
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let scale = self.norm * norm_inf(&x) + norm_inf(rhs);
            if norm_inf(&r) <= RESIDUAL_TOL * scale {
                return Ok(x);
            }
            if attempt == 0 {
                let dx = self.lu.solve(&r)?;
                x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            }
        }
        Err(Error::Step {
            step,
            reason: "linear solve did not reach relative residual 1e-12".into(),
        })
    }
}

/// Marches `(M + θτG) Y^{n+1} = (M − (1−θ)τG) Y^n + τ L^{n+θ}`, solved for
/// the increment `Y^{n+1} − Y^n` so that steady states are kept to the last
/// bit. `step_of` maps the internal step counter to the index reported in
/// errors.
pub(crate) fn theta_march(
    m: &CsrMatrix,
    g: &CsrMatrix,
    loads: &[Vec<f64>],
    y0: &[f64],
    grid: &TimeGrid,
    theta: f64,
    step_of: impl Fn(usize) -> usize,
) -> Result<Vec<Vec<f64>>> {
    let tau = grid.tau();
    let lhs = CsrMatrix::linear_combination(&[(1.0, m), (theta * tau, g)]);
    let solver = CheckedSolver::new(lhs)?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Step {
            step: step_of(0),
            reason: "initial state contains NaN or infinity".into(),
        });
    }
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(y0.to_vec());
    for n in 0..grid.n_steps() {
        let mut rhs: Vec<f64> = g.mul_vec(&states[n]).iter().map(|v| -tau * v).collect();
        if let Some(l) = theta_load(loads, n, theta) {
            rhs.iter_mut().zip(&l).for_each(|(r, v)| *r += tau * v);
        }
        let dy = solver.solve(&rhs, step_of(n + 1))?;
        let y: Vec<f64> = states[n].iter().zip(&dy).map(|(a, b)| a + b).collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Step {
                step: step_of(n + 1),
                reason: "solution contains NaN or infinity".into(),
            });
        }
        states.push(y);
    }
    Ok(states)
}

/// Forward θ-method for `⟨Y', V⟩ + 𝔮(Y, V) + 𝔟(Y, V) = ⟨F, V⟩`.
///
/// `loads` holds the assembled right-hand side at each of the
/// `n_steps + 1` time nodes (or is empty for zero forcing).
pub fn solve_forward(
    m: &BlockOperator,
    k_q: &BlockOperator,
    n: &BlockOperator,
    loads: &[Vec<f64>],
    y0: &[f64],
    grid: &TimeGrid,
    theta: f64,
) -> Result<Trajectory> {
    check_theta(theta)?;
    let dim = m.dim();
    check_len(dim, k_q.dim())?;
    check_len(dim, n.dim())?;
    check_len(dim, y0.len())?;
    check_loads(loads, grid, dim)?;
    let g = CsrMatrix::linear_combination(&[(1.0, &k_q.matrix), (1.0, &n.matrix)]);
    let states = theta_march(&m.matrix, &g, loads, y0, grid, theta, |s| s)?;
    Ok(Trajectory {
        states,
        grid: *grid,
        theta,
        scheme: Scheme::Forward,
    })
}

/// Masses `(1ᵀM_Ω Y, 1ᵀM_Γ Y)`; their sum is the total mass.
pub fn mass_functional(
    m_omega: &BlockOperator,
    m_gamma: &BlockOperator,
    y: &[f64],
) -> Result<(f64, f64)> {
    check_len(m_omega.dim(), y.len())?;
    check_len(m_gamma.dim(), y.len())?;
    let ones = vec![1.0; y.len()];
    Ok((dot(&ones, &m_omega.apply(y)), dot(&ones, &m_gamma.apply(y))))
}

/// Per-step defect of the discrete energy identity
/// `(‖Y^{n+1}‖²_M − ‖Y^n‖²_M)/τ = 2⟨L^{n+θ} − G Y^{n,θ}, Y^{n,θ}⟩` with
/// `Y^{n,θ} = θY^{n+1} + (1−θ)Y^n`.
///
/// For θ = 1/2 the identity is exact; for θ = 1 the defect equals
/// `−‖Y^{n+1} − Y^n‖²_M / τ`.
pub fn energy_identity_residual(
    traj: &Trajectory,
    m: &BlockOperator,
    g: &BlockOperator,
    loads: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_loads(loads, &traj.grid, m.dim())?;
    let tau = traj.grid.tau();
    let theta = traj.theta;
    let norm_sq = |y: &[f64]| dot(y, &m.apply(y));
    let mut out = Vec::with_capacity(traj.len().saturating_sub(1));
    for n in 0..traj.len() - 1 {
        let (y0, y1) = (&traj.states[n], &traj.states[n + 1]);
        let ymid: Vec<f64> = y1
            .iter()
            .zip(y0)
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect();
        let mut drive: Vec<f64> = g.apply(&ymid).iter().map(|v| -v).collect();
        if let Some(l) = theta_load(loads, n, theta) {
            drive.iter_mut().zip(&l).for_each(|(a, b)| *a += b);
        }
        out.push((norm_sq(y1) - norm_sq(y0)) / tau - 2.0 * dot(&drive, &ymid));
    }
    Ok(out)
}
