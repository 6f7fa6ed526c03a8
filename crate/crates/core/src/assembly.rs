//! P1 finite-element operators on the coupled bulk–surface space.
//!
//! There is one unknown per mesh node. Boundary nodes carry both the bulk
//! value and the surface value, so the trace constraint `u|_Γ = u_Γ` holds
//! identically and surface integrals simply add into the boundary rows.

use crate::coefficients::CoefficientSet;
use crate::error::{check_len, Error, Result};
use crate::format::fmt17;
use crate::geometry::{extract_boundary, BoundaryMesh, Mesh2D, TraceMap};
use crate::sparse::{dot, CsrMatrix, SparseLu, TripletBuilder};

/// Coefficient vector of a coupled field; entry `i` is the value at mesh node
/// `i`, and the surface part is the restriction to boundary nodes.
pub type ProductField = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDofMap {
    pub n_total: usize,
    pub boundary_flags: Vec<bool>,
}

impl CoupledDofMap {
    pub fn n_boundary(&self) -> usize {
        self.boundary_flags.iter().filter(|&&b| b).count()
    }
}

/// Mesh, boundary polyline and DOF bookkeeping bundled together.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh2D,
    pub bmesh: BoundaryMesh,
    pub trace: TraceMap,
    pub dofs: CoupledDofMap,
}

impl Discretization {
    pub fn new(mesh: Mesh2D) -> Result<Self> {
        let (bmesh, trace) = extract_boundary(&mesh)?;
        let mut boundary_flags = vec![false; mesh.n_nodes()];
        for &i in &bmesh.node_ids {
            boundary_flags[i] = true;
        }
        let dofs = CoupledDofMap {
            n_total: mesh.n_nodes(),
            boundary_flags,
        };
        Ok(Self {
            mesh,
            bmesh,
            trace,
            dofs,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_total
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.triangles().len()
    }

    pub fn n_edges(&self) -> usize {
        self.bmesh.n_edges()
    }

    /// Nodal interpolation of a function of position.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> ProductField {
        self.mesh.nodes().iter().map(|p| f(p[0], p[1])).collect()
    }

    /// Splits a coupled field into its bulk and surface parts.
    pub fn split(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (u.to_vec(), self.trace.trace(u))
    }

    fn gradients(&self, t: usize) -> (f64, [[f64; 2]; 3]) {
        let [p0, p1, p2] = self.mesh.triangle_points(t);
        let area = self.mesh.triangle_area(t);
        let s = 0.5 / area;
        // ∇φ_a = perp(opposite edge) / (2A)
        let g = [
            [(p1[1] - p2[1]) * s, (p2[0] - p1[0]) * s],
            [(p2[1] - p0[1]) * s, (p0[0] - p2[0]) * s],
            [(p0[1] - p1[1]) * s, (p1[0] - p0[0]) * s],
        ];
        (area, g)
    }
}

/// An assembled operator on the coupled DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    pub matrix: CsrMatrix,
    pub symmetric: bool,
}

impl BlockOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }

    pub fn transpose(&self) -> BlockOperator {
        BlockOperator {
            matrix: self.matrix.transpose(),
            symmetric: self.symmetric,
        }
    }

    /// `Σ wᵢ Aᵢ`; symmetric when every term is.
    pub fn combine(terms: &[(f64, &BlockOperator)]) -> BlockOperator {
        let mats: Vec<(f64, &CsrMatrix)> = terms.iter().map(|(w, a)| (*w, &a.matrix)).collect();
        BlockOperator {
            matrix: CsrMatrix::linear_combination(&mats),
            symmetric: terms.iter().all(|(_, a)| a.symmetric),
        }
    }

    /// Coordinate text export, one `i j value` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for (i, j, v) in self.matrix.iter() {
            s.push_str(&format!("{i} {j} {}\n", fmt17(v)));
        }
        s
    }
}

/// `Vᵀ A U`, i.e. the form with trial field `U` and test field `V`.
pub fn apply_form(a: &BlockOperator, u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(a.dim(), u.len())?;
    check_len(a.dim(), v.len())?;
    Ok(dot(v, &a.apply(u)))
}

const ELEMENT_MASS: [[f64; 3]; 3] = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];

fn push_bulk_mass(t: &mut TripletBuilder, disc: &Discretization, weights: Option<&[f64]>) {
    for (k, tri) in disc.mesh.triangles().iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[k]);
        let s = w * disc.mesh.triangle_area(k) / 12.0;
        for a in 0..3 {
            for b in 0..3 {
                t.push(tri[a], tri[b], s * ELEMENT_MASS[a][b]);
            }
        }
    }
}

fn push_surface_mass(t: &mut TripletBuilder, disc: &Discretization, weights: Option<&[f64]>) {
    for (k, e) in disc.bmesh.edges.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[k]);
        let s = w * disc.bmesh.edge_lengths[k] / 6.0;
        for a in 0..2 {
            for b in 0..2 {
                t.push(e[a], e[b], s * if a == b { 2.0 } else { 1.0 });
            }
        }
    }
}

fn push_bulk_stiffness(t: &mut TripletBuilder, disc: &Discretization, d: f64) {
    for (k, tri) in disc.mesh.triangles().iter().enumerate() {
        let (area, g) = disc.gradients(k);
        for a in 0..3 {
            for b in 0..3 {
                let v = d * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                t.push(tri[a], tri[b], v);
            }
        }
    }
}

fn push_surface_stiffness(t: &mut TripletBuilder, disc: &Discretization, delta: f64) {
    for (k, e) in disc.bmesh.edges.iter().enumerate() {
        let s = delta / disc.bmesh.edge_lengths[k];
        for a in 0..2 {
            for b in 0..2 {
                t.push(e[a], e[b], if a == b { s } else { -s });
            }
        }
    }
}

fn builder(disc: &Discretization) -> TripletBuilder {
    let n = disc.n_dofs();
    TripletBuilder::with_capacity(n, n, 9 * disc.n_cells() + 4 * disc.n_edges())
}

/// Bulk and surface parts of the 𝕃² Gram matrix, `(M_Ω, M_Γ)`.
pub fn assemble_mass_parts(disc: &Discretization) -> (BlockOperator, BlockOperator) {
    let mut tb = builder(disc);
    push_bulk_mass(&mut tb, disc, None);
    let mut ts = builder(disc);
    push_surface_mass(&mut ts, disc, None);
    let wrap = |t: TripletBuilder| BlockOperator {
        matrix: t.build(),
        symmetric: true,
    };
    (wrap(tb), wrap(ts))
}

/// 𝕃² Gram matrix `M = M_Ω + M_Γ` with exact (consistent) P1 mass.
pub fn assemble_mass(disc: &Discretization) -> BlockOperator {
    let mut t = builder(disc);
    push_bulk_mass(&mut t, disc, None);
    push_surface_mass(&mut t, disc, None);
    BlockOperator {
        matrix: t.build(),
        symmetric: true,
    }
}

fn assemble_q_raw(disc: &Discretization, d: f64, delta: f64) -> BlockOperator {
    let mut t = builder(disc);
    push_bulk_stiffness(&mut t, disc, d);
    push_surface_stiffness(&mut t, disc, delta);
    BlockOperator {
        matrix: t.build(),
        symmetric: true,
    }
}

/// Diffusion form `d∫∇u·∇v + δ∫_Γ ∂_s u ∂_s v`.
pub fn assemble_q(disc: &Discretization, coeffs: &CoefficientSet) -> Result<BlockOperator> {
    check_coefficients(disc, coeffs)?;
    Ok(assemble_q_raw(disc, coeffs.d(), coeffs.delta()))
}

/// The principal form with unit diffusivities plus the 𝕃² pairing; this is
/// also the Gram matrix of the ℍ¹ inner product.
pub fn assemble_a(disc: &Discretization) -> BlockOperator {
    let mut t = builder(disc);
    push_bulk_stiffness(&mut t, disc, 1.0);
    push_surface_stiffness(&mut t, disc, 1.0);
    push_bulk_mass(&mut t, disc, None);
    push_surface_mass(&mut t, disc, None);
    BlockOperator {
        matrix: t.build(),
        symmetric: true,
    }
}

/// Drift and reaction form; entry `(i, j)` is the form evaluated with trial
/// function `φ_j` and test function `φ_i`.
pub fn assemble_drift(disc: &Discretization, coeffs: &CoefficientSet) -> Result<BlockOperator> {
    check_coefficients(disc, coeffs)?;
    let mut t = builder(disc);
    for (k, tri) in disc.mesh.triangles().iter().enumerate() {
        let (area, g) = disc.gradients(k);
        let bv = coeffs.bulk_drift()[k];
        for a in 0..3 {
            for b in 0..3 {
                // ∫ φ_a B·∇φ_b = (A/3) B·∇φ_b
                t.push(
                    tri[a],
                    tri[b],
                    area / 3.0 * (bv[0] * g[b][0] + bv[1] * g[b][1]),
                );
            }
        }
    }
    for (k, e) in disc.bmesh.edges.iter().enumerate() {
        let tau = disc.bmesh.tangents[k];
        let bv = coeffs.surface_drift()[k];
        let bt = 0.5 * (bv[0] * tau[0] + bv[1] * tau[1]);
        for &row in e {
            t.push(row, e[0], -bt);
            t.push(row, e[1], bt);
        }
    }
    push_bulk_mass(&mut t, disc, Some(coeffs.bulk_reaction()));
    push_surface_mass(&mut t, disc, Some(coeffs.surface_reaction()));
    Ok(BlockOperator {
        matrix: t.build(),
        symmetric: coeffs.bulk_drift_sup() == 0.0 && coeffs.surface_drift_sup() == 0.0,
    })
}

fn check_coefficients(disc: &Discretization, coeffs: &CoefficientSet) -> Result<()> {
    check_len(disc.n_cells(), coeffs.n_cells())?;
    check_len(disc.n_edges(), coeffs.n_edges())
}

/// Bulk data that is linear on each triangle.
#[derive(Debug, Clone, PartialEq)]
pub enum BulkField {
    Zero,
    /// One value per mesh node.
    Nodal(Vec<f64>),
    /// One constant per triangle.
    PerCell(Vec<f64>),
    /// Values at the three vertices of each triangle, allowing jumps across
    /// element edges.
    PerCellVertex(Vec<[f64; 3]>),
}

/// Surface data that is linear on each boundary edge.
#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceField {
    Zero,
    /// One value per surface vertex, in boundary cycle order.
    Nodal(Vec<f64>),
    PerEdge(Vec<f64>),
    /// Values at the start and end vertex of each edge.
    PerEdgeVertex(Vec<[f64; 2]>),
}

impl BulkField {
    /// Samples `f(x, y, cell)` at the vertices of every triangle.
    pub fn from_fn(disc: &Discretization, f: impl Fn(f64, f64, usize) -> f64) -> Self {
        BulkField::PerCellVertex(
            (0..disc.n_cells())
                .map(|k| disc.mesh.triangle_points(k).map(|p| f(p[0], p[1], k)))
                .collect(),
        )
    }

    fn vertex_values(&self, disc: &Discretization, k: usize) -> Result<Option<[f64; 3]>> {
        let n = disc.n_cells();
        Ok(match self {
            BulkField::Zero => None,
            BulkField::Nodal(v) => {
                check_len(disc.n_dofs(), v.len())?;
                Some(disc.mesh.triangles()[k].map(|i| v[i]))
            }
            BulkField::PerCell(v) => {
                check_len(n, v.len())?;
                Some([v[k]; 3])
            }
            BulkField::PerCellVertex(v) => {
                check_len(n, v.len())?;
                Some(v[k])
            }
        })
    }
}

impl SurfaceField {
    /// Samples `g(x, y, edge)` at the endpoints of every boundary edge.
    pub fn from_fn(disc: &Discretization, g: impl Fn(f64, f64, usize) -> f64) -> Self {
        let nodes = disc.mesh.nodes();
        SurfaceField::PerEdgeVertex(
            disc.bmesh
                .edges
                .iter()
                .enumerate()
                .map(|(k, e)| e.map(|i| g(nodes[i][0], nodes[i][1], k)))
                .collect(),
        )
    }

    fn vertex_values(&self, disc: &Discretization, k: usize) -> Result<Option<[f64; 2]>> {
        let n = disc.n_edges();
        Ok(match self {
            SurfaceField::Zero => None,
            SurfaceField::Nodal(v) => {
                check_len(disc.bmesh.n_vertices(), v.len())?;
                Some([v[k], v[(k + 1) % v.len()]])
            }
            SurfaceField::PerEdge(v) => {
                check_len(n, v.len())?;
                Some([v[k]; 2])
            }
            SurfaceField::PerEdgeVertex(v) => {
                check_len(n, v.len())?;
                Some(v[k])
            }
        })
    }
}

/// `L[i] = ∫_Ω f φ_i + ∫_Γ g φ_i`, exact for data linear per element.
pub fn assemble_load_l2(
    disc: &Discretization,
    f: &BulkField,
    g: &SurfaceField,
) -> Result<Vec<f64>> {
    let mut load = vec![0.0; disc.n_dofs()];
    for (k, tri) in disc.mesh.triangles().iter().enumerate() {
        if let Some(fv) = f.vertex_values(disc, k)? {
            let s = disc.mesh.triangle_area(k) / 12.0;
            for a in 0..3 {
                let row: f64 = (0..3).map(|b| ELEMENT_MASS[a][b] * fv[b]).sum();
                load[tri[a]] += s * row;
            }
        }
    }
    for (k, e) in disc.bmesh.edges.iter().enumerate() {
        if let Some(gv) = g.vertex_values(disc, k)? {
            let s = disc.bmesh.edge_lengths[k] / 6.0;
            load[e[0]] += s * (2.0 * gv[0] + gv[1]);
            load[e[1]] += s * (gv[0] + 2.0 * gv[1]);
        }
    }
    Ok(load)
}

/// Representation `(f₀, F₁, g₀, G₁)` of an ℍ⁻¹ functional
/// `V ↦ ⟨f₀,v⟩ + ⟨F₁,∇v⟩ + ⟨g₀,v_Γ⟩ + ⟨G₁,∇_Γ v_Γ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSource {
    pub f0: BulkField,
    /// Constant vector per triangle.
    pub f1: Option<Vec<[f64; 2]>>,
    pub g0: SurfaceField,
    /// Constant vector per boundary edge; only its tangential part acts.
    pub g1: Option<Vec<[f64; 2]>>,
}

impl DualSource {
    pub fn l2(f0: BulkField, g0: SurfaceField) -> Self {
        Self {
            f0,
            f1: None,
            g0,
            g1: None,
        }
    }
}

pub fn assemble_load_dual(disc: &Discretization, ds: &DualSource) -> Result<Vec<f64>> {
    let mut load = assemble_load_l2(disc, &ds.f0, &ds.g0)?;
    if let Some(f1) = &ds.f1 {
        check_len(disc.n_cells(), f1.len())?;
        if f1.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("F1", "contains non-finite entries"));
        }
        for (k, tri) in disc.mesh.triangles().iter().enumerate() {
            let (area, g) = disc.gradients(k);
            for a in 0..3 {
                load[tri[a]] += area * (f1[k][0] * g[a][0] + f1[k][1] * g[a][1]);
            }
        }
    }
    if let Some(g1) = &ds.g1 {
        check_len(disc.n_edges(), g1.len())?;
        if g1.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("G1", "contains non-finite entries"));
        }
        for (k, e) in disc.bmesh.edges.iter().enumerate() {
            let tau = disc.bmesh.tangents[k];
            // ∫_edge G₁·τ ∂_s φ = ∓ G₁·τ
            let gt = g1[k][0] * tau[0] + g1[k][1] * tau[1];
            load[e[0]] -= gt;
            load[e[1]] += gt;
        }
    }
    Ok(load)
}

/// Factorized ℍ¹ Gram matrix for Riesz representers and dual norms.
#[derive(Debug)]
pub struct RieszMap {
    lu: SparseLu,
}

impl RieszMap {
    pub fn new(k_h1: &BlockOperator) -> Result<Self> {
        Ok(Self {
            lu: SparseLu::new(&k_h1.matrix)?,
        })
    }

    /// The field `U` with `K_h1 U = L`.
    pub fn representer(&self, load: &[f64]) -> Result<Vec<f64>> {
        self.lu.solve(load)
    }

    /// `sqrt(Lᵀ K_h1⁻¹ L)`.
    pub fn dual_norm(&self, load: &[f64]) -> Result<f64> {
        Ok(self.dual_norm_sq(load)?.sqrt())
    }

    pub fn dual_norm_sq(&self, load: &[f64]) -> Result<f64> {
        let u = self.representer(load)?;
        Ok(dot(load, &u).max(0.0))
    }
}

/// One-shot dual norm; use [`RieszMap`] when evaluating many loads.
pub fn dual_norm(load: &[f64], k_h1: &BlockOperator) -> Result<f64> {
    RieszMap::new(k_h1)?.dual_norm(load)
}
