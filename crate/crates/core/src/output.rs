//! Text artifacts: trajectory CSV and legacy VTK, mass and certificate
//! tables, rate tables, and readers used to check them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::assembly::{BlockOperator, Discretization};
use crate::error::{Error, Result};
use crate::format::fmt17;
use crate::forward::{mass_functional, Trajectory};
use crate::spectral::EnergyCertificate;
use crate::verification::RateTable;

pub const TRAJECTORY_HEADER: &str = "step,time,dof,value";
pub const CERTIFICATE_HEADER: &str =
    "n,max_M_norm_sq,l2_h1_sq,l2_hm1_sq,data_norm_sq,ratio,gronwall_bound,violated";

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::with_capacity(traj.len() * traj.dim() * 48);
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for (n, state) in traj.states.iter().enumerate() {
        let t = fmt17(traj.grid.time(n));
        for (i, v) in state.iter().enumerate() {
            let _ = writeln!(s, "{n},{t},{i},{}", fmt17(*v));
        }
    }
    s
}

/// States and node times recovered from a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

pub fn read_trajectory_csv(text: &str) -> Result<CsvTrajectory> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRAJECTORY_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{TRAJECTORY_HEADER}`"),
            })
        }
    }
    let mut out = CsvTrajectory {
        times: Vec::new(),
        states: Vec::new(),
    };
    for (ln, line) in lines {
        let bad = |message: String| Error::Parse {
            line: ln + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let step: usize = fields[0].parse().map_err(|_| bad("bad step".into()))?;
        let time: f64 = fields[1].parse().map_err(|_| bad("bad time".into()))?;
        let dof: usize = fields[2].parse().map_err(|_| bad("bad dof".into()))?;
        let value: f64 = fields[3].parse().map_err(|_| bad("bad value".into()))?;
        if step == out.states.len() && dof == 0 {
            out.states.push(Vec::new());
            out.times.push(time);
        }
        let state = match out.states.last_mut() {
            Some(s) if step + 1 == out.times.len() && dof == s.len() => s,
            _ => return Err(bad(format!("row (step {step}, dof {dof}) out of order"))),
        };
        state.push(value);
    }
    if let Some(first) = out.states.first() {
        if out.states.iter().any(|s| s.len() != first.len()) {
            return Err(Error::Parse {
                line: text.lines().count(),
                message: "steps have different numbers of dofs".into(),
            });
        }
    }
    Ok(out)
}

/// Legacy ASCII unstructured grid holding one state: triangles (type 5)
/// followed by the boundary segments (type 3). `u_gamma` carries the
/// surface component on boundary points and 0 in the interior.
pub fn vtk_state(disc: &Discretization, state: &[f64], time: f64) -> String {
    let mesh = &disc.mesh;
    let tris = mesh.triangles();
    let edges = &disc.bmesh.edges;
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "coupled bulk-surface state t={}", fmt17(time));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.n_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(s, "{} {} 0", fmt17(p[0]), fmt17(p[1]));
    }
    let n_cells = tris.len() + edges.len();
    let _ = writeln!(s, "CELLS {} {}", n_cells, 4 * tris.len() + 3 * edges.len());
    for t in tris {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    for e in edges {
        let _ = writeln!(s, "2 {} {}", e[0], e[1]);
    }
    let _ = writeln!(s, "CELL_TYPES {n_cells}");
    for _ in tris {
        s.push_str("5\n");
    }
    for _ in edges {
        s.push_str("3\n");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.n_nodes());
    s.push_str("SCALARS u double 1\nLOOKUP_TABLE default\n");
    for v in state {
        let _ = writeln!(s, "{}", fmt17(*v));
    }
    s.push_str("SCALARS u_gamma double 1\nLOOKUP_TABLE default\n");
    for (i, v) in state.iter().enumerate() {
        let g = if disc.dofs.boundary_flags[i] { *v } else { 0.0 };
        let _ = writeln!(s, "{}", fmt17(g));
    }
    s
}

/// Writes `<stem>_<step>.vtk` for every state and returns the paths.
pub fn write_trajectory_vtk(
    dir: &Path,
    stem: &str,
    disc: &Discretization,
    traj: &Trajectory,
) -> Result<Vec<PathBuf>> {
    let width = traj.len().saturating_sub(1).to_string().len();
    traj.states
        .iter()
        .enumerate()
        .map(|(n, state)| {
            let path = dir.join(format!("{stem}_{n:0width$}.vtk"));
            write_text(&path, &vtk_state(disc, state, traj.grid.time(n)))?;
            Ok(path)
        })
        .collect()
}

/// Contents of a legacy VTK file as seen by [`parse_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkSummary {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

/// Structural parser for the subset of legacy VTK this module writes. Checks
/// section counts, connectivity bounds and that each cell's vertex count
/// matches its type.
pub fn parse_vtk(text: &str) -> Result<VtkSummary> {
    let lines: Vec<&str> = text.lines().collect();
    let bad = |line: usize, message: String| Error::Parse {
        line: line + 1,
        message,
    };
    let expect = |i: usize, want: &str| -> Result<()> {
        match lines.get(i) {
            Some(l) if l.trim() == want => Ok(()),
            _ => Err(bad(i, format!("expected `{want}`"))),
        }
    };
    if !lines
        .first()
        .is_some_and(|l| l.starts_with("# vtk DataFile Version"))
    {
        return Err(bad(0, "missing vtk signature".into()));
    }
    expect(2, "ASCII")?;
    expect(3, "DATASET UNSTRUCTURED_GRID")?;

    let header = |i: usize, key: &str, n_args: usize| -> Result<Vec<String>> {
        let parts: Vec<&str> = lines
            .get(i)
            .ok_or_else(|| bad(i, format!("missing {key} section")))?
            .split_whitespace()
            .collect();
        if parts.first() != Some(&key) || parts.len() != n_args + 1 {
            return Err(bad(i, format!("expected {key} header")));
        }
        Ok(parts[1..].iter().map(|s| s.to_string()).collect())
    };
    let count = |i: usize, s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(i, format!("bad count `{s}`")))
    };
    let float = |i: usize, s: &str| {
        s.parse::<f64>()
            .map_err(|_| bad(i, format!("bad number `{s}`")))
    };

    let mut i = 4;
    let h = header(i, "POINTS", 2)?;
    let n_points = count(i, &h[0])?;
    i += 1;
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let l = lines
            .get(i)
            .ok_or_else(|| bad(i, "truncated POINTS".into()))?;
        let xs: Vec<f64> = l
            .split_whitespace()
            .map(|s| float(i, s))
            .collect::<Result<_>>()?;
        if xs.len() != 3 {
            return Err(bad(i, "point needs 3 coordinates".into()));
        }
        points.push([xs[0], xs[1], xs[2]]);
        i += 1;
    }

    let h = header(i, "CELLS", 2)?;
    let n_cells = count(i, &h[0])?;
    let size = count(i, &h[1])?;
    i += 1;
    let mut cells = Vec::with_capacity(n_cells);
    let mut seen = 0;
    for _ in 0..n_cells {
        let l = lines
            .get(i)
            .ok_or_else(|| bad(i, "truncated CELLS".into()))?;
        let ids: Vec<usize> = l
            .split_whitespace()
            .map(|s| count(i, s))
            .collect::<Result<_>>()?;
        if ids.is_empty() || ids[0] + 1 != ids.len() {
            return Err(bad(i, "cell length prefix mismatch".into()));
        }
        if ids[1..].iter().any(|&v| v >= n_points) {
            return Err(bad(i, "cell references a missing point".into()));
        }
        seen += ids.len();
        cells.push(ids[1..].to_vec());
        i += 1;
    }
    if seen != size {
        return Err(bad(i - 1, format!("CELLS size {size} but {seen} entries")));
    }

    let h = header(i, "CELL_TYPES", 1)?;
    if count(i, &h[0])? != n_cells {
        return Err(bad(i, "CELL_TYPES count differs from CELLS".into()));
    }
    i += 1;
    let mut cell_types = Vec::with_capacity(n_cells);
    for cell in &cells {
        let l = lines
            .get(i)
            .ok_or_else(|| bad(i, "truncated CELL_TYPES".into()))?;
        let ty: u8 = l
            .trim()
            .parse()
            .map_err(|_| bad(i, "bad cell type".into()))?;
        let want = match ty {
            3 => 2,
            5 => 3,
            _ => return Err(bad(i, format!("unsupported cell type {ty}"))),
        };
        if cell.len() != want {
            return Err(bad(i, format!("cell type {ty} needs {want} points")));
        }
        cell_types.push(ty);
        i += 1;
    }

    let h = header(i, "POINT_DATA", 1)?;
    if count(i, &h[0])? != n_points {
        return Err(bad(i, "POINT_DATA count differs from POINTS".into()));
    }
    i += 1;
    let mut scalars = Vec::new();
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let h = header(i, "SCALARS", 3)?;
        i += 1;
        expect(i, "LOOKUP_TABLE default")?;
        i += 1;
        let mut values = Vec::with_capacity(n_points);
        for _ in 0..n_points {
            let l = lines
                .get(i)
                .ok_or_else(|| bad(i, "truncated SCALARS".into()))?;
            values.push(float(i, l.trim())?);
            i += 1;
        }
        scalars.push((h[0].clone(), values));
    }
    Ok(VtkSummary {
        points,
        cells,
        cell_types,
        scalars,
    })
}

/// Bulk and surface mass `∫_Ω y` and `∫_Γ y` per step.
pub fn mass_csv(
    traj: &Trajectory,
    m_omega: &BlockOperator,
    m_gamma: &BlockOperator,
) -> Result<String> {
    let mut s = String::from("step,time,bulk_mass,surface_mass,total_mass\n");
    for (n, y) in traj.states.iter().enumerate() {
        let (b, g) = mass_functional(m_omega, m_gamma, y)?;
        let _ = writeln!(
            s,
            "{n},{},{},{},{}",
            fmt17(traj.grid.time(n)),
            fmt17(b),
            fmt17(g),
            fmt17(b + g)
        );
    }
    Ok(s)
}

pub fn certificate_csv(certs: &[EnergyCertificate]) -> String {
    let mut s = String::from(CERTIFICATE_HEADER);
    s.push('\n');
    for c in certs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            c.n_modes,
            fmt17(c.max_m_norm_sq),
            fmt17(c.l2_h1_sq),
            fmt17(c.l2_hm1_sq),
            fmt17(c.data_norm_sq),
            fmt17(c.ratio),
            fmt17(c.gronwall_bound),
            c.violated
        );
    }
    s
}

/// One parsed row of a certificate CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateRow {
    pub n_modes: usize,
    pub values: [f64; 6],
    pub violated: bool,
}

pub fn read_certificate_csv(text: &str) -> Result<Vec<CertificateRow>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h) != Some(CERTIFICATE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{CERTIFICATE_HEADER}`"),
        });
    }
    lines
        .map(|(ln, line)| {
            let bad = |message: &str| Error::Parse {
                line: ln + 1,
                message: message.to_string(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad("expected 8 fields"));
            }
            let mut values = [0.0; 6];
            for (slot, s) in values.iter_mut().zip(&f[1..7]) {
                *slot = s.parse().map_err(|_| bad("bad number"))?;
            }
            Ok(CertificateRow {
                n_modes: f[0].parse().map_err(|_| bad("bad mode count"))?,
                values,
                violated: f[7].parse().map_err(|_| bad("bad violated flag"))?,
            })
        })
        .collect()
}

pub fn rates_csv(tables: &[RateTable]) -> String {
    let mut s = String::from("study,level,h,n_dofs,n_steps,tau,error,rate\n");
    for t in tables {
        for (k, r) in t.rows.iter().enumerate() {
            let rate = if k == 0 {
                String::new()
            } else {
                fmt17(t.rates[k - 1])
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                t.label,
                r.level,
                fmt17(r.h),
                r.n_dofs,
                r.n_steps,
                fmt17(r.tau),
                fmt17(r.error),
                rate
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{solve_forward, TimeGrid};
    use crate::geometry::Shape;
    use crate::problem::Problem;

    fn square() -> Problem {
        Problem::uniform(
            Shape::Square { side: 1.0 },
            1,
            1.0,
            1.0,
            [0.0; 2],
            [0.0; 2],
            0.0,
            0.0,
        )
        .unwrap()
    }

    fn constant_run(p: &Problem, steps: usize) -> Trajectory {
        let y0 = vec![1.0; p.n_dofs()];
        let grid = TimeGrid::new(1.0, steps).unwrap();
        solve_forward(&p.m, &p.k_q, &p.n, &[], &y0, &grid, 1.0).unwrap()
    }

    #[test]
    fn constant_run_prints_exact_ones() {
        let p = square();
        let csv = trajectory_csv(&constant_run(&p, 2));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3 * p.n_dofs());
        for r in rows {
            assert_eq!(r.rsplit(',').next(), Some("1.0000000000000000"), "{r}");
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let p = Problem::uniform(
            Shape::Square { side: 1.0 },
            1,
            0.7,
            1.3,
            [0.4, -0.2],
            [0.3, 0.0],
            0.5,
            -0.1,
        )
        .unwrap();
        let y0 = p.disc.interpolate(|x, y| (3.0 * x).sin() + y / 7.0);
        let grid = TimeGrid::new(0.3, 5).unwrap();
        let traj = solve_forward(&p.m, &p.k_q, &p.n, &[], &y0, &grid, 0.5).unwrap();
        let back = read_trajectory_csv(&trajectory_csv(&traj)).unwrap();
        assert_eq!(back.states.len(), traj.len());
        for (a, b) in traj.states.iter().zip(&back.states) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        for (n, t) in back.times.iter().enumerate() {
            assert_eq!(t.to_bits(), grid.time(n).to_bits());
        }
    }

    #[test]
    fn csv_reader_rejects_malformed_rows() {
        assert!(read_trajectory_csv("a,b\n").is_err());
        let text = format!("{TRAJECTORY_HEADER}\n0,0.0,1,2.0\n");
        assert!(matches!(
            read_trajectory_csv(&text),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn vtk_self_parses() {
        let p = square();
        let y: Vec<f64> = (0..p.n_dofs()).map(|i| i as f64 * 0.25).collect();
        let v = parse_vtk(&vtk_state(&p.disc, &y, 0.5)).unwrap();
        assert_eq!(v.points.len(), p.n_dofs());
        let n_tri = p.disc.n_cells();
        let n_seg = p.disc.n_edges();
        assert_eq!(v.cells.len(), n_tri + n_seg);
        assert_eq!(v.cell_types.iter().filter(|&&t| t == 5).count(), n_tri);
        assert_eq!(v.cell_types.iter().filter(|&&t| t == 3).count(), n_seg);
        let names: Vec<&str> = v.scalars.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["u", "u_gamma"]);
        assert_eq!(v.scalars[0].1, y);
        for (i, g) in v.scalars[1].1.iter().enumerate() {
            let want = if p.disc.dofs.boundary_flags[i] {
                y[i]
            } else {
                0.0
            };
            assert_eq!(*g, want);
        }
    }

    #[test]
    fn vtk_parser_catches_corruption() {
        let p = square();
        let good = vtk_state(&p.disc, &vec![0.0; p.n_dofs()], 0.0);
        let bad_index = good.replacen("3 0 ", "3 9999 ", 1);
        assert!(parse_vtk(&bad_index).is_err());
        let wrong_type = good.replacen("\n5\n", "\n3\n", 1);
        assert!(parse_vtk(&wrong_type).is_err());
        let truncated: String = good
            .lines()
            .take(good.lines().count() - 2)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(parse_vtk(&truncated).is_err());
    }

    #[test]
    fn io_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let target = blocker.join("inner.csv");
        match write_text(&target, "data") {
            Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_text(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn vtk_files_per_step() {
        let p = square();
        let traj = constant_run(&p, 3);
        let dir = tempfile::tempdir().unwrap();
        let paths = write_trajectory_vtk(dir.path(), "state", &p.disc, &traj).unwrap();
        assert_eq!(paths.len(), 4);
        for path in paths {
            parse_vtk(&read_text(&path).unwrap()).unwrap();
        }
    }

    #[test]
    fn mass_table_sums_parts() {
        let p = square();
        let text = mass_csv(&constant_run(&p, 1), &p.m_omega, &p.m_gamma).unwrap();
        let row: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert!((row[2] - 1.0).abs() < 1e-14);
        assert!((row[3] - 4.0).abs() < 1e-14);
        assert!((row[4] - 5.0).abs() < 1e-14);
    }
}
