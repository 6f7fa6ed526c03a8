//! Triangulated planar domains, their boundary polyline, and the trace map
//! that identifies surface degrees of freedom with bulk boundary nodes.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::format::fmt17;

pub type Point = [f64; 2];

const DUPLICATE_TOL: f64 = 1e-12;

/// A conforming triangulation with counterclockwise triangles.
///
/// `boundary_edges` is the single closed boundary cycle, traversed
/// counterclockwise so that the domain lies to the left of each edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
}

/// Domain presets understood by [`generate_mesh`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Fan triangulation of a regular polygon inscribed in a circle.
    Disk { radius: f64, n_segments: usize },
    /// Axis-aligned square `[0, side]²` split along its diagonal.
    Square { side: f64 },
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh2D {
    /// Validates a triangulation and extracts its boundary cycle.
    pub fn new(nodes: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::Mesh("no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&i) = tri.iter().find(|&&i| i >= nodes.len()) {
                return Err(Error::Mesh(format!(
                    "triangle {t} references node {i}, only {} nodes",
                    nodes.len()
                )));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area.is_nan() || area <= 0.0 {
                return Err(Error::Mesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
        }
        check_duplicates(&nodes)?;
        let boundary_edges = boundary_cycle(&triangles)?;
        Ok(Self {
            nodes,
            triangles,
            boundary_edges,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|&[a, b]| dist(self.nodes[a], self.nodes[b]))
            .sum()
    }

    /// Longest edge of the triangulation.
    pub fn mesh_size(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| dist(self.nodes[i], self.nodes[j]))
            .fold(0.0, f64::max)
    }

    /// Uniform quadrisection: every triangle is split into four through its
    /// edge midpoints.
    pub fn refine(&self) -> Mesh2D {
        self.refine_with(|p| p)
    }

    /// Quadrisection where midpoints of boundary edges are passed through
    /// `place_boundary` (used to keep curved boundaries on the curve).
    pub fn refine_with(&self, place_boundary: impl Fn(Point) -> Point) -> Mesh2D {
        let boundary: std::collections::HashSet<(usize, usize)> = self
            .boundary_edges
            .iter()
            .map(|&[a, b]| (a.min(b), a.max(b)))
            .collect();
        let mut nodes = self.nodes.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |i: usize, j: usize, nodes: &mut Vec<Point>| -> usize {
            let key = (i.min(j), i.max(j));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (nodes[i], nodes[j]);
                let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                if boundary.contains(&key) {
                    m = place_boundary(m);
                }
                nodes.push(m);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        Mesh2D::new(nodes, triangles).expect("quadrisection of a valid mesh is valid")
    }

    /// Writes the plain-text format: a header `nodes N triangles T`, then one
    /// `x y` line per node and one `i j k` line per triangle (0-based).
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "nodes {} triangles {}\n",
            self.nodes.len(),
            self.triangles.len()
        );
        for p in &self.nodes {
            s.push_str(&format!("{} {}\n", fmt17(p[0]), fmt17(p[1])));
        }
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty mesh file".into(),
        })?;
        let bad_header = || Error::Parse {
            line: hline,
            message: "expected header `nodes <N> triangles <T>`".into(),
        };
        let words: Vec<&str> = header.split_whitespace().collect();
        if words.len() != 4 || words[0] != "nodes" || words[2] != "triangles" {
            return Err(bad_header());
        }
        let n: usize = words[1].parse().map_err(|_| bad_header())?;
        let t: usize = words[3].parse().map_err(|_| bad_header())?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, l) = lines.next().ok_or(Error::Parse {
                line: hline,
                message: format!("expected {n} node lines"),
            })?;
            let v = parse_fields::<f64>(l, 2, line)?;
            nodes.push([v[0], v[1]]);
        }
        let mut triangles = Vec::with_capacity(t);
        for _ in 0..t {
            let (line, l) = lines.next().ok_or(Error::Parse {
                line: hline,
                message: format!("expected {t} triangle lines"),
            })?;
            let v = parse_fields::<usize>(l, 3, line)?;
            triangles.push([v[0], v[1], v[2]]);
        }
        if let Some((line, _)) = lines.next() {
            return Err(Error::Parse {
                line,
                message: "trailing content after triangles".into(),
            });
        }
        Mesh2D::new(nodes, triangles)
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, count: usize, lineno: usize) -> Result<Vec<T>> {
    let v: Vec<T> = line
        .split_whitespace()
        .map(|w| w.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line: lineno,
            message: format!("cannot parse `{line}`"),
        })?;
    if v.len() != count {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected {count} fields, found {}", v.len()),
        });
    }
    Ok(v)
}

fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

fn check_duplicates(nodes: &[Point]) -> Result<()> {
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&i, &j| nodes[i][0].total_cmp(&nodes[j][0]));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if nodes[j][0] - nodes[i][0] > DUPLICATE_TOL {
                break;
            }
            if dist(nodes[i], nodes[j]) <= DUPLICATE_TOL {
                return Err(Error::Mesh(format!("nodes {i} and {j} coincide")));
            }
        }
    }
    Ok(())
}

/// Edges used by exactly one triangle, chained into one counterclockwise cycle.
fn boundary_cycle(triangles: &[[usize; 3]]) -> Result<Vec<[usize; 2]>> {
    let mut uses: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
    for &[a, b, c] in triangles {
        for [i, j] in [[a, b], [b, c], [c, a]] {
            let e = uses.entry((i.min(j), i.max(j))).or_insert((0, [i, j]));
            e.0 += 1;
        }
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    for (&(i, j), &(count, dir)) in &uses {
        match count {
            1 => {
                if next.insert(dir[0], dir[1]).is_some() {
                    return Err(Error::Mesh(format!(
                        "non-manifold boundary at node {}",
                        dir[0]
                    )));
                }
            }
            2 => {}
            _ => {
                return Err(Error::Mesh(format!(
                    "edge ({i}, {j}) shared by {count} triangles"
                )))
            }
        }
    }
    let start = *next
        .keys()
        .min()
        .ok_or_else(|| Error::Mesh("mesh has no boundary".into()))?;
    let mut cycle = Vec::with_capacity(next.len());
    let mut cur = start;
    loop {
        let nxt = next[&cur];
        cycle.push([cur, nxt]);
        cur = nxt;
        if cur == start {
            break;
        }
        if cycle.len() > next.len() || !next.contains_key(&cur) {
            return Err(Error::Mesh("boundary does not close".into()));
        }
    }
    if cycle.len() != next.len() {
        return Err(Error::Mesh(format!(
            "boundary is disconnected: cycle of {} edges out of {}",
            cycle.len(),
            next.len()
        )));
    }
    Ok(cycle)
}

/// Builds a preset domain and applies `refinement` levels of quadrisection.
/// Disk boundary midpoints are pushed back onto the circle at every level.
pub fn generate_mesh(shape: Shape, refinement: usize) -> Result<Mesh2D> {
    match shape {
        Shape::Square { side } => {
            if !(side > 0.0 && side.is_finite()) {
                return Err(Error::param(
                    "side",
                    format!("must be positive, got {side}"),
                ));
            }
            let nodes = vec![[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]];
            let mut mesh = Mesh2D::new(nodes, vec![[0, 1, 2], [0, 2, 3]])?;
            for _ in 0..refinement {
                mesh = mesh.refine();
            }
            Ok(mesh)
        }
        Shape::Disk { radius, n_segments } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::param(
                    "radius",
                    format!("must be positive, got {radius}"),
                ));
            }
            if n_segments < 8 {
                return Err(Error::param(
                    "n_segments",
                    format!("must be at least 8, got {n_segments}"),
                ));
            }
            let mut nodes = vec![[0.0, 0.0]];
            nodes.extend((0..n_segments).map(|i| {
                let phi = 2.0 * PI * i as f64 / n_segments as f64;
                [radius * phi.cos(), radius * phi.sin()]
            }));
            let triangles = (0..n_segments)
                .map(|i| [0, 1 + i, 1 + (i + 1) % n_segments])
                .collect();
            let mut mesh = Mesh2D::new(nodes, triangles)?;
            let onto_circle = |p: Point| {
                let r = p[0].hypot(p[1]);
                [radius * p[0] / r, radius * p[1] / r]
            };
            for _ in 0..refinement {
                mesh = mesh.refine_with(onto_circle);
            }
            Ok(mesh)
        }
    }
}

/// The boundary polyline Γ_h as a one-dimensional manifold mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMesh {
    /// Bulk node index of each surface vertex, in cycle order.
    pub node_ids: Vec<usize>,
    /// Bulk node indices of each edge; edge `k` runs from surface vertex `k`
    /// to surface vertex `k + 1` (cyclically).
    pub edges: Vec<[usize; 2]>,
    pub edge_lengths: Vec<f64>,
    pub tangents: Vec<Point>,
    /// Outward unit normals.
    pub normals: Vec<Point>,
}

impl BoundaryMesh {
    pub fn n_vertices(&self) -> usize {
        self.node_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_lengths.iter().sum()
    }

    pub fn edge_midpoint(&self, mesh: &Mesh2D, k: usize) -> Point {
        let [a, b] = self.edges[k];
        let (p, q) = (mesh.nodes()[a], mesh.nodes()[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }
}

/// Identification of surface degrees of freedom with bulk boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMap {
    pub surface_to_bulk: Vec<usize>,
    bulk_to_surface: Vec<Option<usize>>,
}

impl TraceMap {
    pub fn bulk_to_surface(&self, bulk: usize) -> Option<usize> {
        self.bulk_to_surface.get(bulk).copied().flatten()
    }

    /// Restriction of a bulk nodal field to Γ_h.
    pub fn trace(&self, bulk: &[f64]) -> Vec<f64> {
        self.surface_to_bulk.iter().map(|&i| bulk[i]).collect()
    }
}

pub fn extract_boundary(mesh: &Mesh2D) -> Result<(BoundaryMesh, TraceMap)> {
    let edges = mesh.boundary_edges().to_vec();
    let node_ids: Vec<usize> = edges.iter().map(|e| e[0]).collect();
    let mut edge_lengths = Vec::with_capacity(edges.len());
    let mut tangents = Vec::with_capacity(edges.len());
    let mut normals = Vec::with_capacity(edges.len());
    for &[a, b] in &edges {
        let (p, q) = (mesh.nodes()[a], mesh.nodes()[b]);
        let len = dist(p, q);
        if len.is_nan() || len <= 0.0 {
            return Err(Error::DegenerateGeometry(format!(
                "boundary edge ({a}, {b}) has zero length"
            )));
        }
        let t = [(q[0] - p[0]) / len, (q[1] - p[1]) / len];
        edge_lengths.push(len);
        tangents.push(t);
        // counterclockwise traversal: domain on the left, outward on the right
        normals.push([t[1], -t[0]]);
    }
    let mut bulk_to_surface = vec![None; mesh.n_nodes()];
    for (k, &i) in node_ids.iter().enumerate() {
        if bulk_to_surface[i].replace(k).is_some() {
            return Err(Error::Mesh(format!("boundary visits node {i} twice")));
        }
    }
    let trace = TraceMap {
        surface_to_bulk: node_ids.clone(),
        bulk_to_surface,
    };
    Ok((
        BoundaryMesh {
            node_ids,
            edges,
            edge_lengths,
            tangents,
            normals,
        },
        trace,
    ))
}

/// Arclength derivatives of the two hat functions on each boundary edge,
/// `(-1/L, +1/L)` for an edge of length `L`.
pub fn tangential_derivative_stencil(bmesh: &BoundaryMesh) -> Result<Vec<[f64; 2]>> {
    bmesh
        .edge_lengths
        .iter()
        .enumerate()
        .map(|(k, &len)| {
            if len > 0.0 {
                Ok([-1.0 / len, 1.0 / len])
            } else {
                Err(Error::DegenerateGeometry(format!(
                    "boundary edge {k} has zero length"
                )))
            }
        })
        .collect()
}

/// Piecewise-constant tangential derivative of a surface field (one value per
/// surface vertex) on each edge.
pub fn tangential_derivative(bmesh: &BoundaryMesh, surface: &[f64]) -> Result<Vec<f64>> {
    crate::error::check_len(bmesh.n_vertices(), surface.len())?;
    let stencil = tangential_derivative_stencil(bmesh)?;
    let n = surface.len();
    Ok(stencil
        .iter()
        .enumerate()
        .map(|(k, s)| s[0] * surface[k] + s[1] * surface[(k + 1) % n])
        .collect())
}
