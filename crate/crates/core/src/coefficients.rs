//! Problem coefficients (d, δ, B, b, c, ℓ) and the constants that control
//! form-boundedness and coercivity of the drift-perturbed form.

use crate::error::{check_len, Error, Result};
use crate::geometry::{BoundaryMesh, Mesh2D, Point};

/// Axis-aligned rectangle used to select mesh pieces by their centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        (self.x_min..=self.x_max).contains(&p[0]) && (self.y_min..=self.y_max).contains(&p[1])
    }
}

/// A value that is constant except inside listed regions. The first region
/// containing a point wins.
#[derive(Debug, Clone, PartialEq)]
pub struct Piecewise<T> {
    pub default: T,
    pub regions: Vec<(Region, T)>,
}

impl<T: Copy> Piecewise<T> {
    pub fn uniform(value: T) -> Self {
        Self {
            default: value,
            regions: Vec::new(),
        }
    }

    pub fn at(&self, p: Point) -> T {
        self.regions
            .iter()
            .find(|(r, _)| r.contains(p))
            .map_or(self.default, |(_, v)| *v)
    }
}

impl<T: Copy> From<T> for Piecewise<T> {
    fn from(value: T) -> Self {
        Self::uniform(value)
    }
}

/// Mesh-independent description of the coefficients; [`resolve`] samples it
/// at triangle centroids and boundary edge midpoints.
///
/// [`resolve`]: CoefficientSpec::resolve
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSpec {
    pub d: f64,
    pub delta: f64,
    pub bulk_drift: Piecewise<[f64; 2]>,
    pub surface_drift: Piecewise<[f64; 2]>,
    pub bulk_reaction: Piecewise<f64>,
    pub surface_reaction: Piecewise<f64>,
}

impl CoefficientSpec {
    /// Pure diffusion with the given bulk and surface diffusivities.
    pub fn diffusion(d: f64, delta: f64) -> Self {
        Self {
            d,
            delta,
            bulk_drift: [0.0; 2].into(),
            surface_drift: [0.0; 2].into(),
            bulk_reaction: 0.0.into(),
            surface_reaction: 0.0.into(),
        }
    }

    pub fn resolve(&self, mesh: &Mesh2D, bmesh: &BoundaryMesh) -> Result<CoefficientSet> {
        let cells: Vec<Point> = (0..mesh.triangles().len())
            .map(|t| mesh.centroid(t))
            .collect();
        let edges: Vec<Point> = (0..bmesh.n_edges())
            .map(|k| bmesh.edge_midpoint(mesh, k))
            .collect();
        CoefficientSet::new(
            self.d,
            self.delta,
            cells.iter().map(|&p| self.bulk_drift.at(p)).collect(),
            edges.iter().map(|&p| self.surface_drift.at(p)).collect(),
            cells.iter().map(|&p| self.bulk_reaction.at(p)).collect(),
            edges.iter().map(|&p| self.surface_reaction.at(p)).collect(),
        )
    }
}

/// Coefficients resolved on a mesh: one value per triangle (bulk) or per
/// boundary edge (surface).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    d: f64,
    delta: f64,
    bulk_drift: Vec<[f64; 2]>,
    surface_drift: Vec<[f64; 2]>,
    bulk_reaction: Vec<f64>,
    surface_reaction: Vec<f64>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn finite<'a>(name: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::param(name, "contains non-finite entries"))
    }
}

impl CoefficientSet {
    pub fn new(
        d: f64,
        delta: f64,
        bulk_drift: Vec<[f64; 2]>,
        surface_drift: Vec<[f64; 2]>,
        bulk_reaction: Vec<f64>,
        surface_reaction: Vec<f64>,
    ) -> Result<Self> {
        positive("d", d)?;
        positive("delta", delta)?;
        check_len(bulk_drift.len(), bulk_reaction.len())?;
        check_len(surface_drift.len(), surface_reaction.len())?;
        finite("B", bulk_drift.iter().flatten())?;
        finite("b", surface_drift.iter().flatten())?;
        finite("c", &bulk_reaction)?;
        finite("ell", &surface_reaction)?;
        Ok(Self {
            d,
            delta,
            bulk_drift,
            surface_drift,
            bulk_reaction,
            surface_reaction,
        })
    }

    /// Spatially constant coefficients on a mesh with `n_cells` triangles and
    /// `n_edges` boundary edges.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        n_cells: usize,
        n_edges: usize,
        d: f64,
        delta: f64,
        bulk_drift: [f64; 2],
        surface_drift: [f64; 2],
        c: f64,
        ell: f64,
    ) -> Result<Self> {
        Self::new(
            d,
            delta,
            vec![bulk_drift; n_cells],
            vec![surface_drift; n_edges],
            vec![c; n_cells],
            vec![ell; n_edges],
        )
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bulk_drift(&self) -> &[[f64; 2]] {
        &self.bulk_drift
    }

    pub fn surface_drift(&self) -> &[[f64; 2]] {
        &self.surface_drift
    }

    pub fn bulk_reaction(&self) -> &[f64] {
        &self.bulk_reaction
    }

    pub fn surface_reaction(&self) -> &[f64] {
        &self.surface_reaction
    }

    pub fn n_cells(&self) -> usize {
        self.bulk_reaction.len()
    }

    pub fn n_edges(&self) -> usize {
        self.surface_reaction.len()
    }

    /// `‖B‖∞`, the largest Euclidean length over triangles.
    pub fn bulk_drift_sup(&self) -> f64 {
        self.bulk_drift
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    /// `‖b‖∞`, the largest Euclidean length over boundary edges.
    pub fn surface_drift_sup(&self) -> f64 {
        self.surface_drift
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    pub fn bulk_reaction_sup(&self) -> f64 {
        self.bulk_reaction.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn surface_reaction_sup(&self) -> f64 {
        self.surface_reaction
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when every drift and reaction piece vanishes.
    pub fn is_pure_diffusion(&self) -> bool {
        self.bulk_drift_sup() == 0.0
            && self.surface_drift_sup() == 0.0
            && self.bulk_reaction_sup() == 0.0
            && self.surface_reaction_sup() == 0.0
    }

    /// Multiplies both drift fields by `s`.
    pub fn scale_drift(&self, s: f64) -> Result<Self> {
        let scale = |v: &[[f64; 2]]| v.iter().map(|p| [s * p[0], s * p[1]]).collect();
        Self::new(
            self.d,
            self.delta,
            scale(&self.bulk_drift),
            scale(&self.surface_drift),
            self.bulk_reaction.clone(),
            self.surface_reaction.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonPolicy {
    /// `ε = min(1, 1/(2M₁(d+δ)))`, so that `α ≤ 1/2`.
    Auto,
    Explicit(f64),
}

/// Constants in `|𝔟(U,U)| ≤ α𝔞(U,U) + β‖U‖²` and
/// `𝔠(U,U) + ω‖U‖² ≥ λ‖U‖²_{ℍ¹}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLedger {
    pub m1: f64,
    pub m2: f64,
    /// `‖B‖∞ + ‖b‖∞`
    pub m_drift: f64,
    /// `‖c‖∞ + ‖ℓ‖∞`
    pub m_reaction: f64,
    pub alpha_tilde: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Young's-inequality parameter of the coercivity estimate.
    pub epsilon_c: f64,
    pub omega: f64,
}

pub fn derive_constants(coeffs: &CoefficientSet, policy: EpsilonPolicy) -> Result<ConstantLedger> {
    let (d, delta) = (coeffs.d, coeffs.delta);
    let (nb, ns) = (coeffs.bulk_drift_sup(), coeffs.surface_drift_sup());
    let m1 = (nb / d).max(ns / delta);
    let m2 = coeffs.bulk_reaction_sup() + coeffs.surface_reaction_sup();
    let m_drift = nb + ns;
    let m_reaction = m2;
    let alpha_tilde = d.min(delta);

    let epsilon = match policy {
        EpsilonPolicy::Auto if m1 > 0.0 => (1.0f64).min(1.0 / (2.0 * m1 * (d + delta))),
        EpsilonPolicy::Auto => 1.0,
        EpsilonPolicy::Explicit(e) => {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::param(
                    "epsilon",
                    format!("must be positive, got {e}"),
                ));
            }
            if e * m1 * (d + delta) >= 1.0 {
                return Err(Error::param(
                    "epsilon",
                    format!(
                        "gives alpha = {} which is not below 1",
                        e * m1 * (d + delta)
                    ),
                ));
            }
            e
        }
    };
    let alpha = epsilon * m1 * (d + delta);
    let beta = (d + delta) * m1 / (4.0 * epsilon) + m2;

    let lambda = alpha_tilde / 2.0;
    let epsilon_c = if m_drift > 0.0 {
        alpha_tilde / (2.0 * m_drift)
    } else {
        1.0
    };
    let omega = alpha_tilde / 2.0 + m_drift / (4.0 * epsilon_c) + m_reaction;

    Ok(ConstantLedger {
        m1,
        m2,
        m_drift,
        m_reaction,
        alpha_tilde,
        epsilon,
        alpha,
        beta,
        lambda,
        epsilon_c,
        omega,
    })
}
