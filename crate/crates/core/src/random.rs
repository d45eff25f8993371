//! Seeded random inputs shared by tests and experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dyadic::GridSpec;
use crate::funcspace::{lp_norm, OperatorField};
use crate::matalg::{MatElem, C64};

/// Independent stream for ensemble member `member` of run `seed`; draws do
/// not depend on the order in which members are evaluated.
pub fn member_rng(seed: u64, member: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    rng
}

/// `d x d` matrix with independent standard complex Gaussian entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> MatElem {
    let e: Vec<C64> = (0..d * d)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();
    MatElem::from_row_major(d, &e).expect("square by construction")
}

/// Finest-level field of Gaussian matrices, or of `g* g` when `positive`.
pub fn random_field<R: Rng + ?Sized>(g: &GridSpec, rng: &mut R, positive: bool) -> OperatorField {
    let values = (0..g.n_finest())
        .map(|_| {
            let m = gaussian_matrix(g.d, rng);
            if positive {
                crate::matalg::hermitize(&(&m.adjoint() * &m))
            } else {
                m
            }
        })
        .collect();
    OperatorField::new(g, g.depth, values).expect("shape by construction")
}

/// Positive field `g* g` normalized to `||f||_1 = 1`.
pub fn random_positive_unit<R: Rng + ?Sized>(g: &GridSpec, rng: &mut R) -> OperatorField {
    let f = random_field(g, rng, true);
    let l1 = lp_norm(&f, 1.0).expect("p = 1 is admissible");
    f.scale(1.0 / l1)
}

/// Positive field `g* g` with `g = sum_k G_k`, one independent Gaussian step
/// field per level `0..=K`, normalized to `||f||_1 = 1`. Fluctuations appear
/// at every scale, so stopping happens at coarse levels too.
pub fn random_multiscale_unit<R: Rng + ?Sized>(g: &GridSpec, rng: &mut R) -> OperatorField {
    let kk = g.depth;
    let mut acc = OperatorField::zeros(g, kk);
    for k in 0..=kk {
        let values = (0..g.n_cells(k)).map(|_| gaussian_matrix(g.d, rng)).collect();
        let lvl = OperatorField::new(g, k, values).expect("shape by construction");
        acc = acc.add(&lvl.refine(kk).expect("finer level")).expect("same grid");
    }
    let f = acc.map(|m| crate::matalg::hermitize(&(&m.adjoint() * m)));
    let l1 = lp_norm(&f, 1.0).expect("p = 1 is admissible");
    f.scale(1.0 / l1)
}
