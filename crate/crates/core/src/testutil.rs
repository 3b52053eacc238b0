use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::design::DesignSet;

pub(crate) fn random_design<R: Rng>(n: usize, r: usize, rng: &mut R) -> DesignSet {
    DesignSet::new(
        (0..n)
            .map(|_| (0..r).map(|_| rng.gen()).collect())
            .collect(),
    )
    .unwrap()
}

pub(crate) fn random_orthogonal<R: Rng>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}
