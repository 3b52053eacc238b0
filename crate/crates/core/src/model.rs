use nalgebra::DMatrix;

use crate::design::{build_h, DesignSet, ProjectionPair, TrendBasis};
use crate::error::Result;
use crate::kernel::{corr_matrix, corr_matrix_with_grads, CorrelationLengths};

/// A design, its trend space and the derived projection bases. Everything
/// here is independent of the hyperparameters and the observations.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    design: DesignSet,
    basis: TrendBasis,
    h: DMatrix<f64>,
    projection: ProjectionPair,
    jitter: f64,
}

impl KrigingModel {
    pub fn new(design: DesignSet, basis: TrendBasis) -> Result<Self> {
        let h = build_h(&design, basis)?;
        let projection = ProjectionPair::new(&h)?;
        Ok(Self {
            design,
            basis,
            h,
            projection,
            jitter: 0.0,
        })
    }

    /// Adds `jitter` to the diagonal of every correlation matrix. Zero by
    /// default; ill-conditioning is otherwise reported as an error.
    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter.max(0.0);
        self
    }

    /// Replaces the null-space basis (for gauge checks).
    pub fn with_projection(mut self, projection: ProjectionPair) -> Self {
        self.projection = projection;
        self
    }

    pub fn design(&self) -> &DesignSet {
        &self.design
    }

    pub fn basis(&self) -> TrendBasis {
        self.basis
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn projection(&self) -> &ProjectionPair {
        &self.projection
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn r(&self) -> usize {
        self.design.r()
    }

    pub fn p(&self) -> usize {
        self.h.ncols()
    }

    pub fn correlation(&self, theta: &CorrelationLengths) -> Result<DMatrix<f64>> {
        let mut sigma = corr_matrix(&self.design, theta)?;
        self.add_jitter(&mut sigma);
        Ok(sigma)
    }

    pub(crate) fn correlation_with_grads(
        &self,
        theta: &CorrelationLengths,
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let (mut sigma, grads) = corr_matrix_with_grads(&self.design, theta)?;
        self.add_jitter(&mut sigma);
        Ok((sigma, grads))
    }

    fn add_jitter(&self, sigma: &mut DMatrix<f64>) {
        if self.jitter > 0.0 {
            for i in 0..sigma.nrows() {
                sigma[(i, i)] += self.jitter;
            }
        }
    }
}
