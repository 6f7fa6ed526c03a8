//! Every operator of one problem instance, assembled once.

use crate::assembly::{
    assemble_a, assemble_drift, assemble_mass, assemble_mass_parts, assemble_q, BlockOperator,
    Discretization, RieszMap,
};
use crate::coefficients::{derive_constants, CoefficientSet, ConstantLedger, EpsilonPolicy};
use crate::error::Result;
use crate::geometry::{generate_mesh, Shape};

#[derive(Debug)]
pub struct Problem {
    pub disc: Discretization,
    pub coeffs: CoefficientSet,
    pub ledger: ConstantLedger,
    pub m: BlockOperator,
    pub m_omega: BlockOperator,
    pub m_gamma: BlockOperator,
    pub k_q: BlockOperator,
    /// Principal form with unit coefficients, which is also the ℍ¹ Gram matrix.
    pub k_a: BlockOperator,
    pub n: BlockOperator,
    /// `K_q + N`
    pub g: BlockOperator,
    pub riesz: RieszMap,
}

impl Problem {
    pub fn new(
        disc: Discretization,
        coeffs: CoefficientSet,
        policy: EpsilonPolicy,
    ) -> Result<Self> {
        let ledger = derive_constants(&coeffs, policy)?;
        let m = assemble_mass(&disc);
        let (m_omega, m_gamma) = assemble_mass_parts(&disc);
        let k_q = assemble_q(&disc, &coeffs)?;
        let k_a = assemble_a(&disc);
        let n = assemble_drift(&disc, &coeffs)?;
        let g = BlockOperator::combine(&[(1.0, &k_q), (1.0, &n)]);
        let riesz = RieszMap::new(&k_a)?;
        Ok(Self {
            disc,
            coeffs,
            ledger,
            m,
            m_omega,
            m_gamma,
            k_q,
            k_a,
            n,
            g,
            riesz,
        })
    }

    /// Uniform coefficients on a generated mesh.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        shape: Shape,
        refinement: usize,
        d: f64,
        delta: f64,
        bulk_drift: [f64; 2],
        surface_drift: [f64; 2],
        c: f64,
        ell: f64,
    ) -> Result<Self> {
        let disc = Discretization::new(generate_mesh(shape, refinement)?)?;
        let coeffs = CoefficientSet::uniform(
            disc.n_cells(),
            disc.n_edges(),
            d,
            delta,
            bulk_drift,
            surface_drift,
            c,
            ell,
        )?;
        Self::new(disc, coeffs, EpsilonPolicy::Auto)
    }

    pub fn n_dofs(&self) -> usize {
        self.disc.n_dofs()
    }

    pub fn m_norm_sq(&self, u: &[f64]) -> f64 {
        crate::sparse::dot(u, &self.m.apply(u))
    }

    pub fn h1_norm_sq(&self, u: &[f64]) -> f64 {
        crate::sparse::dot(u, &self.k_a.apply(u))
    }
}
