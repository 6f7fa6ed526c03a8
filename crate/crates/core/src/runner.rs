//! Builds a problem from a [`RunConfig`], runs the requested mode and writes
//! its artifacts.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::adjoint::solve_backward;
use crate::assembly::{
    assemble_load_dual, assemble_load_l2, BulkField, Discretization, DualSource, SurfaceField,
};
use crate::coefficients::{CoefficientSpec, EpsilonPolicy};
use crate::config::{DataSpec, GeometrySpec, Mode, OutputFormat, RunConfig, StateSpec};
use crate::error::Result;
use crate::expr::Expr;
use crate::format::fmt17;
use crate::forward::{solve_forward, TimeGrid, Trajectory};
use crate::geometry::{generate_mesh, Mesh2D, Shape};
use crate::output::{
    certificate_csv, mass_csv, rates_csv, trajectory_csv, write_text, write_trajectory_vtk,
};
use crate::problem::Problem;
use crate::sparse::SparseLu;
use crate::spectral::{certificate_ratio_bound, compute_basis, EnergyCertificate};
use crate::verification::{
    backward_energy, certificate_sweep, check_basis, doubling_sweep, run_conservation_check,
    run_duality_suite, run_form_checks, spatial_study, spectral_vs_fem, summary_text,
    temporal_study, Check, RateTable,
};

/// Result of one run: overall status, the text printed to the terminal and
/// every file written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub success: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Largest basis the spectral mode computes when `n_modes` is not set.
const DEFAULT_MAX_MODES: usize = 64;

pub fn build_mesh(geometry: &GeometrySpec) -> Result<Mesh2D> {
    match geometry {
        GeometrySpec::Generated { shape, refinement } => generate_mesh(*shape, *refinement),
        GeometrySpec::File(path) => Mesh2D::from_text(&crate::output::read_text(path)?),
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    problem_from_spec(build_mesh(&cfg.geometry)?, &cfg.coefficients)
}

fn problem_from_spec(mesh: Mesh2D, spec: &CoefficientSpec) -> Result<Problem> {
    let disc = Discretization::new(mesh)?;
    let coeffs = spec.resolve(&disc.mesh, &disc.bmesh)?;
    Problem::new(disc, coeffs, EpsilonPolicy::Auto)
}

fn bulk_at(disc: &Discretization, e: &Expr, t: f64) -> BulkField {
    if e.is_zero() {
        BulkField::Zero
    } else {
        BulkField::from_fn(disc, |x, y, _| e.eval(t, x, y))
    }
}

fn surface_at(disc: &Discretization, e: &Expr, t: f64) -> SurfaceField {
    if e.is_zero() {
        SurfaceField::Zero
    } else {
        SurfaceField::from_fn(disc, |x, y, _| e.eval(t, x, y))
    }
}

/// Nodal interpolant of the bulk expression, or the 𝕃² projection of the
/// pair when the surface carries its own expression.
pub fn state_from_spec(p: &Problem, spec: &StateSpec, t: f64) -> Result<Vec<f64>> {
    match &spec.surface {
        None => Ok(p.disc.interpolate(|x, y| spec.bulk.eval(t, x, y))),
        Some(surface) => {
            let rhs = assemble_load_l2(
                &p.disc,
                &bulk_at(&p.disc, &spec.bulk, t),
                &surface_at(&p.disc, surface, t),
            )?;
            SparseLu::new(&p.m.matrix)?.solve(&rhs)
        }
    }
}

/// Assembled loads at every time node; empty when all data vanish.
pub fn loads_from_data(p: &Problem, data: &DataSpec, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    if data.f.is_zero() && data.g.is_zero() && data.f1.is_none() && data.g1.is_none() {
        return Ok(Vec::new());
    }
    let disc = &p.disc;
    let f1 = data.f1.as_ref().map(|pw| {
        (0..disc.n_cells())
            .map(|k| pw.at(disc.mesh.centroid(k)))
            .collect::<Vec<_>>()
    });
    let g1 = data.g1.as_ref().map(|pw| {
        (0..disc.n_edges())
            .map(|k| pw.at(disc.bmesh.edge_midpoint(&disc.mesh, k)))
            .collect::<Vec<_>>()
    });
    grid.times()
        .into_iter()
        .map(|t| {
            let source = DualSource {
                f0: bulk_at(disc, &data.f, t),
                f1: f1.clone(),
                g0: surface_at(disc, &data.g, t),
                g1: g1.clone(),
            };
            assemble_load_dual(disc, &source)
        })
        .collect()
}

/// Runs the configured mode. Numerical failures are returned as errors;
/// failed checks give `success == false`.
pub fn dispatch(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.mode {
        Mode::Forward => run_forward(cfg),
        Mode::Adjoint => run_adjoint(cfg),
        Mode::Spectral => run_spectral(cfg),
        Mode::Verify => run_verify(cfg),
        Mode::Converge => run_converge(cfg),
    }
}

fn write_trajectory(
    cfg: &RunConfig,
    p: &Problem,
    stem: &str,
    traj: &Trajectory,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    match cfg.output_format {
        OutputFormat::Csv => {
            let path = cfg.output_dir.join(format!("{stem}.csv"));
            write_text(&path, &trajectory_csv(traj))?;
            files.push(path);
        }
        OutputFormat::Vtk => {
            files.extend(write_trajectory_vtk(&cfg.output_dir, stem, &p.disc, traj)?)
        }
    }
    Ok(())
}

fn finish(
    cfg: &RunConfig,
    success: bool,
    summary: String,
    mut files: Vec<PathBuf>,
) -> Result<Outcome> {
    let path = cfg.output_dir.join("summary.txt");
    write_text(&path, &summary)?;
    files.push(path);
    Ok(Outcome {
        success,
        summary,
        files,
    })
}

fn header(cfg: &RunConfig, p: &Problem) -> String {
    let l = &p.ledger;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "dofs {}  cells {}  boundary edges {}  h {}",
        p.n_dofs(),
        p.disc.n_cells(),
        p.disc.n_edges(),
        fmt17(p.disc.mesh.mesh_size())
    );
    let _ = writeln!(
        s,
        "T {}  steps {}  theta {}",
        fmt17(cfg.grid.final_time()),
        cfg.grid.n_steps(),
        cfg.theta
    );
    let _ = writeln!(
        s,
        "epsilon {}  alpha {}  beta {}  lambda {}  omega {}",
        fmt17(l.epsilon),
        fmt17(l.alpha),
        fmt17(l.beta),
        fmt17(l.lambda),
        fmt17(l.omega)
    );
    s
}

fn run_forward(cfg: &RunConfig) -> Result<Outcome> {
    let p = build_problem(cfg)?;
    let y0 = state_from_spec(&p, &cfg.data.initial, 0.0)?;
    let loads = loads_from_data(&p, &cfg.data, &cfg.grid)?;
    let traj = solve_forward(&p.m, &p.k_q, &p.n, &loads, &y0, &cfg.grid, cfg.theta)?;
    let mut files = Vec::new();
    write_trajectory(cfg, &p, "forward", &traj, &mut files)?;
    let mass_path = cfg.output_dir.join("mass.csv");
    write_text(&mass_path, &mass_csv(&traj, &p.m_omega, &p.m_gamma)?)?;
    files.push(mass_path);
    let mut summary = header(cfg, &p);
    let _ = writeln!(
        summary,
        "forward solve finished: final squared M-norm {}",
        fmt17(p.m_norm_sq(traj.last()))
    );
    finish(cfg, true, summary, files)
}

fn run_adjoint(cfg: &RunConfig) -> Result<Outcome> {
    let p = build_problem(cfg)?;
    let psi_t = state_from_spec(&p, &cfg.data.final_state, cfg.grid.final_time())?;
    let loads = loads_from_data(&p, &cfg.data, &cfg.grid)?;
    let traj = solve_backward(
        cfg.backward_mode,
        &p.m,
        &p.k_q,
        &p.n,
        &loads,
        &psi_t,
        &cfg.grid,
        cfg.theta,
    )?;
    let mut files = Vec::new();
    write_trajectory(cfg, &p, "adjoint", &traj, &mut files)?;
    let energy = backward_energy(&p, &traj, &loads)?;
    let mut summary = header(cfg, &p);
    let _ = writeln!(
        summary,
        "{} solve finished: energy ratio {}",
        traj.scheme.name(),
        fmt17(energy.ratio)
    );
    finish(cfg, true, summary, files)
}

fn certificate_checks(p: &Problem, cfg: &RunConfig, certs: &[EnergyCertificate]) -> Check {
    let bound = certificate_ratio_bound(
        &p.ledger,
        p.coeffs.d(),
        p.coeffs.delta(),
        cfg.grid.final_time(),
    );
    let violations = certs.iter().filter(|c| c.violated).count();
    let max_ratio = certs.iter().map(|c| c.ratio).fold(0.0, f64::max);
    Check {
        name: "energy certificate".into(),
        pass: violations == 0 && max_ratio <= bound,
        detail: format!(
            "{} basis sizes, {violations} violations, max ratio {} (bound {})",
            certs.len(),
            fmt17(max_ratio),
            fmt17(bound)
        ),
    }
}

fn run_spectral(cfg: &RunConfig) -> Result<Outcome> {
    let p = build_problem(cfg)?;
    let n_modes = cfg.n_modes.unwrap_or(DEFAULT_MAX_MODES).min(p.n_dofs());
    let basis = compute_basis(&p.k_a, &p.m, n_modes)?;
    let y0 = state_from_spec(&p, &cfg.data.initial, 0.0)?;
    let loads = loads_from_data(&p, &cfg.data, &cfg.grid)?;
    let certs = certificate_sweep(
        &p,
        &basis,
        &y0,
        &loads,
        &cfg.grid,
        cfg.theta,
        &doubling_sweep(n_modes),
    )?;
    let path = cfg.output_dir.join("certificate.csv");
    write_text(&path, &certificate_csv(&certs))?;
    let check = certificate_checks(&p, cfg, &certs);
    let mut summary = header(cfg, &p);
    summary.push_str(&summary_text(std::slice::from_ref(&check)));
    finish(cfg, check.pass, summary, vec![path])
}

fn run_verify(cfg: &RunConfig) -> Result<Outcome> {
    let p = build_problem(cfg)?;
    let tol = &cfg.tolerances;
    let mut checks = Vec::new();

    let forms = run_form_checks(&p, cfg.verify.form_samples, cfg.seed, tol)?;
    checks.push(Check {
        name: "form bound".into(),
        pass: forms.alpha < 1.0 && forms.min_bound_margin >= -tol.form_margin,
        detail: format!(
            "{} samples, alpha {}, min relative margin {}",
            forms.samples.len(),
            fmt17(forms.alpha),
            fmt17(forms.min_bound_margin)
        ),
    });
    checks.push(Check {
        name: "coercivity".into(),
        pass: forms.min_coercive_margin >= -tol.form_margin,
        detail: format!("min relative margin {}", fmt17(forms.min_coercive_margin)),
    });

    let duality = run_duality_suite(
        &p,
        &cfg.grid,
        cfg.verify.duality_trials,
        cfg.seed.wrapping_add(1),
        tol,
    )?;
    checks.push(Check {
        name: "duality".into(),
        pass: duality.pass,
        detail: format!(
            "{} trials, max relative residual {}",
            duality.trials.len(),
            fmt17(duality.max_relative)
        ),
    });

    let diffusion = CoefficientSpec::diffusion(cfg.coefficients.d, cfg.coefficients.delta);
    let pure = problem_from_spec(p.disc.mesh.clone(), &diffusion)?;
    let y0 = state_from_spec(&pure, &cfg.data.initial, 0.0)?;
    let conservation = run_conservation_check(&pure, &y0, &cfg.grid, cfg.theta, tol)?;
    checks.push(Check {
        name: "mass conservation".into(),
        pass: conservation.pass,
        detail: format!("max relative drift {}", fmt17(conservation.max_deviation)),
    });

    let basis = compute_basis(&p.k_a, &p.m, p.n_dofs())?;
    let b = check_basis(&p, &basis, tol);
    checks.push(Check {
        name: "spectral basis".into(),
        pass: b.pass,
        detail: format!(
            "orthonormality {}, H1 off-diagonal {}, lambda_1 error {}",
            fmt17(b.orthonormality),
            fmt17(b.h1_offdiagonal),
            fmt17(b.lambda1_error)
        ),
    });

    let y0 = state_from_spec(&p, &cfg.data.initial, 0.0)?;
    let loads = loads_from_data(&p, &cfg.data, &cfg.grid)?;
    let full = spectral_vs_fem(&p, &basis, &y0, &loads, &cfg.grid, cfg.theta, &[p.n_dofs()])?;
    checks.push(Check {
        name: "full spectral basis matches FEM".into(),
        pass: full[0].1 <= tol.spectral_fem,
        detail: format!("max M-norm distance {}", fmt17(full[0].1)),
    });

    let certs = certificate_sweep(
        &p,
        &basis,
        &y0,
        &loads,
        &cfg.grid,
        cfg.theta,
        &doubling_sweep(p.n_dofs()),
    )?;
    checks.push(certificate_checks(&p, cfg, &certs));

    let mut files = Vec::new();
    let path = cfg.output_dir.join("certificate.csv");
    write_text(&path, &certificate_csv(&certs))?;
    files.push(path);
    let mut table = String::from("check,pass,detail\n");
    for c in &checks {
        let _ = writeln!(table, "{},{},\"{}\"", c.name, c.pass, c.detail);
    }
    let path = cfg.output_dir.join("checks.csv");
    write_text(&path, &table)?;
    files.push(path);

    let success = checks.iter().all(|c| c.pass);
    let mut summary = header(cfg, &p);
    summary.push_str(&summary_text(&checks));
    finish(cfg, success, summary, files)
}

fn rate_check(table: &RateTable, range: (f64, f64)) -> Check {
    let rates: Vec<String> = table.rates.iter().map(|r| format!("{r:.3}")).collect();
    Check {
        name: format!("{} convergence", table.label),
        pass: table.within(range),
        detail: format!(
            "rates [{}], expected [{}, {}]",
            rates.join(", "),
            range.0,
            range.1
        ),
    }
}

fn run_converge(cfg: &RunConfig) -> Result<Outcome> {
    let cv = &cfg.converge;
    let tol = &cfg.tolerances;
    let space = spatial_study(
        cv.n_segments,
        &cv.levels,
        &cfg.coefficients,
        cv.final_time,
        cv.base_steps,
    )?;
    let mesh = generate_mesh(
        Shape::Disk {
            radius: 1.0,
            n_segments: cv.n_segments,
        },
        cv.time_mesh_level,
    )?;
    let p = problem_from_spec(mesh, &cfg.coefficients)?;
    let mut euler = temporal_study(&p, cv.final_time, &cv.time_steps, 1.0)?;
    euler.label = "time (theta = 1)".into();
    let mut midpoint = temporal_study(&p, cv.final_time, &cv.time_steps, 0.5)?;
    midpoint.label = "time (theta = 1/2)".into();

    let checks = [
        rate_check(&space, tol.spatial_order),
        rate_check(&euler, tol.temporal_order_euler),
        rate_check(&midpoint, tol.temporal_order_midpoint),
    ];
    let tables = [space, euler, midpoint];
    let path = cfg.output_dir.join("rates.csv");
    write_text(&path, &rates_csv(&tables))?;
    let success = checks.iter().all(|c| c.pass);
    finish(cfg, success, summary_text(&checks), vec![path])
}
