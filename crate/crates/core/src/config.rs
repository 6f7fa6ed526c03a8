//! Run configuration read from TOML. Unknown keys are rejected.
//!
//! ```toml
//! mode = "forward"
//! theta = 1.0
//!
//! [geometry]
//! shape = "square"
//! side = 1.0
//!
//! [coefficients]
//! d = 1.0
//! delta = 1.0
//! B = [0.5, 0.0]
//!
//! [time]
//! final_time = 1.0
//! n_steps = 16
//!
//! [data]
//! initial = 1.0
//! f = { poly = "x^2 + y^2", rate = -1.0 }
//! ```

use std::path::PathBuf;

use serde::Deserialize;

use crate::adjoint::BackwardMode;
use crate::coefficients::{CoefficientSpec, Piecewise, Region};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forward::TimeGrid;
use crate::geometry::Shape;
use crate::verification::{Tolerances, COARSE_DISK, COARSE_DISK_REFINEMENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Forward,
    Adjoint,
    Spectral,
    Verify,
    Converge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Vtk,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    Generated { shape: Shape, refinement: usize },
    File(PathBuf),
}

/// Initial or final state: nodal interpolation of `bulk`, or, when a
/// separate surface expression is given, the 𝕃² projection of the pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpec {
    pub bulk: Expr,
    pub surface: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub initial: StateSpec,
    pub final_state: StateSpec,
    pub f: Expr,
    pub g: Expr,
    pub f1: Option<Piecewise<[f64; 2]>>,
    pub g1: Option<Piecewise<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeSpec {
    pub n_segments: usize,
    pub levels: Vec<usize>,
    pub base_steps: usize,
    pub final_time: f64,
    /// Refinement level of the fixed mesh used for the temporal study.
    pub time_mesh_level: usize,
    pub time_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySpec {
    pub form_samples: usize,
    pub duality_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub theta: f64,
    pub output_dir: PathBuf,
    pub output_format: OutputFormat,
    pub backward_mode: BackwardMode,
    pub geometry: GeometrySpec,
    pub coefficients: CoefficientSpec,
    pub grid: TimeGrid,
    pub data: DataSpec,
    pub tolerances: Tolerances,
    pub n_modes: Option<usize>,
    pub converge: ConvergeSpec,
    pub verify: VerifySpec,
}

impl Default for RunConfig {
    /// Coarse disk with a unit bulk drift and smooth data.
    fn default() -> Self {
        let poly = |s: &str| Expr::parse_poly(s).expect("valid default expression");
        Self {
            mode: Mode::Verify,
            seed: 20240601,
            theta: 1.0,
            output_dir: PathBuf::from("out"),
            output_format: OutputFormat::Csv,
            backward_mode: BackwardMode::Weak,
            geometry: GeometrySpec::Generated {
                shape: COARSE_DISK,
                refinement: COARSE_DISK_REFINEMENT,
            },
            coefficients: CoefficientSpec {
                d: 1.0,
                delta: 1.0,
                bulk_drift: [0.6, 0.8].into(),
                surface_drift: [0.5, 0.0].into(),
                bulk_reaction: 1.0.into(),
                surface_reaction: 0.5.into(),
            },
            grid: TimeGrid::new(1.0, 32).expect("valid default grid"),
            data: DataSpec {
                initial: StateSpec {
                    bulk: poly("1 + x - 0.5*y^2"),
                    surface: None,
                },
                final_state: StateSpec {
                    bulk: poly("1 + x*y"),
                    surface: None,
                },
                f: poly("x^2 + y^2").with_rate(-1.0),
                g: poly("1"),
                f1: None,
                g1: None,
            },
            tolerances: Tolerances::default(),
            n_modes: None,
            converge: ConvergeSpec {
                n_segments: 16,
                levels: vec![1, 2, 3],
                base_steps: 4,
                final_time: 0.5,
                time_mesh_level: 2,
                time_steps: vec![8, 16, 32],
            },
            verify: VerifySpec {
                form_samples: 1000,
                duality_trials: 20,
            },
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<String>,
    seed: Option<u64>,
    theta: Option<f64>,
    output_dir: Option<PathBuf>,
    output_format: Option<String>,
    adjoint_mode: Option<String>,
    geometry: Option<RawGeometry>,
    coefficients: Option<RawCoefficients>,
    time: Option<RawTime>,
    data: Option<RawData>,
    tolerances: Option<RawTolerances>,
    spectral: Option<RawSpectral>,
    converge: Option<RawConverge>,
    verify: Option<RawVerify>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    shape: Option<String>,
    radius: Option<f64>,
    n_segments: Option<usize>,
    side: Option<f64>,
    refinement: Option<usize>,
    mesh_file: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    d: Option<f64>,
    delta: Option<f64>,
    #[serde(rename = "B")]
    bulk_drift: Option<RawValue<[f64; 2]>>,
    b: Option<RawValue<[f64; 2]>>,
    c: Option<RawValue<f64>>,
    ell: Option<RawValue<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawValue<T> {
    Plain(T),
    Regions(RawRegions<T>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegions<T> {
    default: T,
    #[serde(default = "Vec::new")]
    regions: Vec<RawRegion<T>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion<T> {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    value: T,
}

impl<T: Copy> RawValue<T> {
    fn into_piecewise(self) -> Piecewise<T> {
        match self {
            RawValue::Plain(v) => Piecewise::uniform(v),
            RawValue::Regions(r) => Piecewise {
                default: r.default,
                regions: r
                    .regions
                    .into_iter()
                    .map(|g| {
                        (
                            Region {
                                x_min: g.x_min,
                                x_max: g.x_max,
                                y_min: g.y_min,
                                y_max: g.y_max,
                            },
                            g.value,
                        )
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    final_time: Option<f64>,
    n_steps: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawExpr {
    Number(f64),
    Poly(String),
    Full(RawExprTable),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExprTable {
    poly: String,
    #[serde(default)]
    rate: f64,
}

impl RawExpr {
    fn resolve(self, key: &str) -> Result<Expr> {
        let named = |e: Error| Error::param(key, e.to_string());
        match self {
            RawExpr::Number(v) => Ok(Expr::constant(v)),
            RawExpr::Poly(s) => Expr::parse_poly(&s).map_err(named),
            RawExpr::Full(t) => Ok(Expr::parse_poly(&t.poly).map_err(named)?.with_rate(t.rate)),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    initial: Option<RawExpr>,
    initial_surface: Option<RawExpr>,
    #[serde(rename = "final")]
    final_state: Option<RawExpr>,
    final_surface: Option<RawExpr>,
    f: Option<RawExpr>,
    g: Option<RawExpr>,
    #[serde(rename = "F1")]
    f1: Option<RawValue<[f64; 2]>>,
    #[serde(rename = "G1")]
    g1: Option<RawValue<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    form_margin: Option<f64>,
    duality: Option<f64>,
    conservation: Option<f64>,
    basis: Option<f64>,
    spectral_fem: Option<f64>,
    spatial_order: Option<[f64; 2]>,
    temporal_order_euler: Option<[f64; 2]>,
    temporal_order_midpoint: Option<[f64; 2]>,
    backward_ratio_factor: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectral {
    n_modes: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConverge {
    n_segments: Option<usize>,
    levels: Option<Vec<usize>>,
    base_steps: Option<usize>,
    final_time: Option<f64>,
    time_mesh_level: Option<usize>,
    time_steps: Option<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    form_samples: Option<usize>,
    duality_trials: Option<usize>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_mode(s: &str) -> Result<Mode> {
    Ok(match s {
        "forward" => Mode::Forward,
        "adjoint" => Mode::Adjoint,
        "spectral" => Mode::Spectral,
        "verify" => Mode::Verify,
        "converge" => Mode::Converge,
        other => {
            return Err(Error::param(
                "mode",
                format!("expected forward, adjoint, spectral, verify or converge, got `{other}`"),
            ))
        }
    })
}

pub fn parse_backward_mode(s: &str) -> Result<BackwardMode> {
    match s {
        "weak" => Ok(BackwardMode::Weak),
        "transpose" => Ok(BackwardMode::ExactTranspose),
        other => Err(Error::param(
            "adjoint_mode",
            format!("expected weak or transpose, got `{other}`"),
        )),
    }
}

fn order_range(key: &str, v: [f64; 2]) -> Result<(f64, f64)> {
    if v[0] <= v[1] {
        Ok((v[0], v[1]))
    } else {
        Err(Error::param(key, "lower bound exceeds upper bound"))
    }
}

fn positive_tol(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::param(key, format!("must be positive, got {v}")))
    }
}

/// Parses and validates a TOML run configuration. Missing keys take the
/// values of [`RunConfig::default`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let mut cfg = RunConfig::default();

    if let Some(m) = raw.mode {
        cfg.mode = parse_mode(&m)?;
    }
    if let Some(s) = raw.seed {
        cfg.seed = s;
    }
    if let Some(t) = raw.theta {
        if !(0.5..=1.0).contains(&t) {
            return Err(Error::param(
                "theta",
                format!("must lie in [0.5, 1], got {t}"),
            ));
        }
        cfg.theta = t;
    }
    if let Some(d) = raw.output_dir {
        cfg.output_dir = d;
    }
    if let Some(f) = raw.output_format {
        cfg.output_format = match f.as_str() {
            "csv" => OutputFormat::Csv,
            "vtk" => OutputFormat::Vtk,
            other => {
                return Err(Error::param(
                    "output_format",
                    format!("expected csv or vtk, got `{other}`"),
                ))
            }
        };
    }
    if let Some(a) = raw.adjoint_mode {
        cfg.backward_mode = parse_backward_mode(&a)?;
    }

    if let Some(g) = raw.geometry {
        cfg.geometry = resolve_geometry(g)?;
    }

    if let Some(c) = raw.coefficients {
        let co = &mut cfg.coefficients;
        if let Some(d) = c.d {
            co.d = positive_tol("d", d)?;
        }
        if let Some(d) = c.delta {
            co.delta = positive_tol("delta", d)?;
        }
        if let Some(v) = c.bulk_drift {
            co.bulk_drift = v.into_piecewise();
        }
        if let Some(v) = c.b {
            co.surface_drift = v.into_piecewise();
        }
        if let Some(v) = c.c {
            co.bulk_reaction = v.into_piecewise();
        }
        if let Some(v) = c.ell {
            co.surface_reaction = v.into_piecewise();
        }
    }

    if let Some(t) = raw.time {
        let final_time = t.final_time.unwrap_or(cfg.grid.final_time());
        let n_steps = t.n_steps.unwrap_or(cfg.grid.n_steps());
        cfg.grid = TimeGrid::new(final_time, n_steps)?;
    }

    if let Some(d) = raw.data {
        let data = &mut cfg.data;
        if let Some(e) = d.initial {
            data.initial.bulk = e.resolve("data.initial")?;
        }
        if let Some(e) = d.initial_surface {
            data.initial.surface = Some(e.resolve("data.initial_surface")?);
        }
        if let Some(e) = d.final_state {
            data.final_state.bulk = e.resolve("data.final")?;
        }
        if let Some(e) = d.final_surface {
            data.final_state.surface = Some(e.resolve("data.final_surface")?);
        }
        if let Some(e) = d.f {
            data.f = e.resolve("data.f")?;
        }
        if let Some(e) = d.g {
            data.g = e.resolve("data.g")?;
        }
        data.f1 = d.f1.map(RawValue::into_piecewise);
        data.g1 = d.g1.map(RawValue::into_piecewise);
    }

    if let Some(t) = raw.tolerances {
        let tol = &mut cfg.tolerances;
        let set = |slot: &mut f64, key: &str, v: Option<f64>| -> Result<()> {
            if let Some(v) = v {
                *slot = positive_tol(key, v)?;
            }
            Ok(())
        };
        set(
            &mut tol.form_margin,
            "tolerances.form_margin",
            t.form_margin,
        )?;
        set(&mut tol.duality, "tolerances.duality", t.duality)?;
        set(
            &mut tol.conservation,
            "tolerances.conservation",
            t.conservation,
        )?;
        set(&mut tol.basis, "tolerances.basis", t.basis)?;
        set(
            &mut tol.spectral_fem,
            "tolerances.spectral_fem",
            t.spectral_fem,
        )?;
        set(
            &mut tol.backward_ratio_factor,
            "tolerances.backward_ratio_factor",
            t.backward_ratio_factor,
        )?;
        if let Some(v) = t.spatial_order {
            tol.spatial_order = order_range("tolerances.spatial_order", v)?;
        }
        if let Some(v) = t.temporal_order_euler {
            tol.temporal_order_euler = order_range("tolerances.temporal_order_euler", v)?;
        }
        if let Some(v) = t.temporal_order_midpoint {
            tol.temporal_order_midpoint = order_range("tolerances.temporal_order_midpoint", v)?;
        }
    }

    if let Some(s) = raw.spectral {
        if s.n_modes == Some(0) {
            return Err(Error::param("spectral.n_modes", "must be at least 1"));
        }
        cfg.n_modes = s.n_modes;
    }

    if let Some(c) = raw.converge {
        let cv = &mut cfg.converge;
        if let Some(n) = c.n_segments {
            if n < 8 {
                return Err(Error::param("converge.n_segments", "must be at least 8"));
            }
            cv.n_segments = n;
        }
        if let Some(l) = c.levels {
            if l.len() < 3 {
                return Err(Error::param("converge.levels", "needs at least 3 levels"));
            }
            cv.levels = l;
        }
        if let Some(b) = c.base_steps {
            if b == 0 {
                return Err(Error::param("converge.base_steps", "must be at least 1"));
            }
            cv.base_steps = b;
        }
        if let Some(t) = c.final_time {
            cv.final_time = positive_tol("converge.final_time", t)?;
        }
        if let Some(l) = c.time_mesh_level {
            cv.time_mesh_level = l;
        }
        if let Some(s) = c.time_steps {
            if s.len() < 3 || s.contains(&0) {
                return Err(Error::param(
                    "converge.time_steps",
                    "needs at least 3 positive step counts",
                ));
            }
            cv.time_steps = s;
        }
    }

    if let Some(v) = raw.verify {
        if let Some(n) = v.form_samples {
            if n == 0 {
                return Err(Error::param("verify.form_samples", "must be at least 1"));
            }
            cfg.verify.form_samples = n;
        }
        if let Some(n) = v.duality_trials {
            if n == 0 {
                return Err(Error::param("verify.duality_trials", "must be at least 1"));
            }
            cfg.verify.duality_trials = n;
        }
    }
    Ok(cfg)
}

fn resolve_geometry(g: RawGeometry) -> Result<GeometrySpec> {
    if let Some(path) = g.mesh_file {
        if g.shape.is_some() {
            return Err(Error::param(
                "geometry.mesh_file",
                "cannot be combined with geometry.shape",
            ));
        }
        return Ok(GeometrySpec::File(path));
    }
    let refinement = g.refinement.unwrap_or(0);
    let shape = match g.shape.as_deref().unwrap_or("disk") {
        "disk" => {
            if g.side.is_some() {
                return Err(Error::param("geometry.side", "only applies to the square"));
            }
            Shape::Disk {
                radius: g.radius.unwrap_or(1.0),
                n_segments: g.n_segments.unwrap_or(16),
            }
        }
        "square" => {
            if g.radius.is_some() || g.n_segments.is_some() {
                return Err(Error::param(
                    "geometry.radius",
                    "radius and n_segments only apply to the disk",
                ));
            }
            Shape::Square {
                side: g.side.unwrap_or(1.0),
            }
        }
        other => {
            return Err(Error::param(
                "geometry.shape",
                format!("expected disk or square, got `{other}`"),
            ))
        }
    };
    // surface parameter errors early, naming the key
    crate::geometry::generate_mesh(shape, 0).map_err(|e| match e {
        Error::Parameter { name, reason } => Error::Parameter {
            name: format!("geometry.{name}"),
            reason,
        },
        other => other,
    })?;
    Ok(GeometrySpec::Generated { shape, refinement })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
mode = "forward"

[geometry]
shape = "square"
side = 1.0

[coefficients]
d = 1.0
delta = 1.0
B = [0.0, 0.0]
b = [0.0, 0.0]
c = 0.0
ell = 0.0

[time]
final_time = 1.0
n_steps = 16

[data]
initial = 1.0
f = 0.0
g = 0.0
"#;

    #[test]
    fn minimal_forward_config() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Forward);
        assert_eq!(c.grid.n_steps(), 16);
        assert_eq!(
            c.geometry,
            GeometrySpec::Generated {
                shape: Shape::Square { side: 1.0 },
                refinement: 0
            }
        );
        assert_eq!(c.data.initial.bulk.eval(0.3, 0.1, 0.2), 1.0);
        assert!(c.data.f.is_zero());
    }

    #[test]
    fn theta_outside_range_names_key() {
        let err = parse_config("theta = 0.2\n").unwrap_err();
        assert!(
            matches!(&err, Error::Parameter { name, .. } if name == "theta"),
            "{err}"
        );
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err = parse_config("mode = \"verify\"\ngamma = 3\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("gamma"), "{message}");
            }
            other => panic!("{other}"),
        }
        assert!(parse_config("[geometry]\nshape = \"disk\"\nwidth = 2\n").is_err());
    }

    #[test]
    fn region_maps_and_expressions() {
        let c = parse_config(
            r#"
[coefficients]
c = { default = 1.0, regions = [{ x_min = 0.0, x_max = 1.0, y_min = -1.0, y_max = 1.0, value = 3.0 }] }
B = { default = [1.0, 0.0] }

[data]
f = { poly = "x^2 + y^2", rate = -1.0 }
initial = "1 + x"
F1 = [0.5, 0.0]
"#,
        )
        .unwrap();
        assert_eq!(c.coefficients.bulk_reaction.at([0.5, 0.0]), 3.0);
        assert_eq!(c.coefficients.bulk_reaction.at([-0.5, 0.0]), 1.0);
        assert!((c.data.f.eval(1.0, 1.0, 0.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(c.data.initial.bulk.eval(0.0, 2.0, 0.0), 3.0);
        assert_eq!(c.data.f1.unwrap().at([0.0, 0.0]), [0.5, 0.0]);
    }

    #[test]
    fn bad_values_name_their_keys() {
        let cases = [
            ("[coefficients]\ndelta = 0.0\n", "delta"),
            (
                "[geometry]\nshape = \"disk\"\nn_segments = 4\n",
                "geometry.n_segments",
            ),
            ("[geometry]\nshape = \"hexagon\"\n", "geometry.shape"),
            ("[data]\nf = \"x^7\"\n", "data.f"),
            ("[time]\nn_steps = 0\n", "n_steps"),
            ("mode = \"dance\"\n", "mode"),
        ];
        for (text, key) in cases {
            match parse_config(text) {
                Err(Error::Parameter { name, .. }) => assert_eq!(name, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn empty_config_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }
}
