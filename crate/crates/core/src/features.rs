//! Linear feature maps `V_theta(s) = theta^T phi(s)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Smallest-to-largest singular value ratio below which the feature matrix
/// is treated as rank deficient.
pub const RANK_RTOL: f64 = 1e-8;
const ROW_NORM_TOL: f64 = 1e-12;
const MAX_RANDOM_ATTEMPTS: usize = 100;

/// An `n x K` feature matrix with full column rank and rows of norm at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
    // Row-major copy so that phi(s) is a contiguous slice in the TD hot loop.
    rows: Vec<f64>,
}

impl FeatureMap {
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        let (n, k) = phi.shape();
        if n == 0 || k == 0 || k > n {
            return Err(Error::DimensionMismatch(format!("feature matrix must satisfy 1 <= K <= n, got {n}x{k}")));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("feature matrix has non-finite entries".into()));
        }
        for (s, row) in phi.row_iter().enumerate() {
            let norm_sq = row.norm_squared();
            if norm_sq > 1.0 + ROW_NORM_TOL {
                return Err(Error::FeatureNormExceeded { state: s, norm_sq });
            }
        }
        let sv = phi.clone().singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if !(smax > 0.0 && smin >= RANK_RTOL * smax) {
            return Err(Error::RankDeficient(format!("singular values range [{smin:e}, {smax:e}]")));
        }
        let rows = phi.transpose().as_slice().to_vec();
        Ok(Self { phi, rows })
    }

    /// `Phi = I_n`, which reduces linear TD(0) to the tabular method.
    pub fn tabular(n: usize) -> Self {
        let phi = DMatrix::identity(n, n);
        let rows = phi.as_slice().to_vec();
        Self { phi, rows }
    }

    /// Entries uniform on `[-1, 1]`, then scaled by the largest row norm.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::DimensionMismatch(format!("need 1 <= K <= n, got K={k}, n={n}")));
        }
        let mut last = None;
        for _ in 0..MAX_RANDOM_ATTEMPTS {
            let mut phi = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..=1.0));
            let max_norm = phi.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
            if max_norm == 0.0 {
                continue;
            }
            phi /= max_norm;
            match Self::new(phi) {
                Ok(fm) => return Ok(fm),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::RankDeficient(format!("no full-rank draw in {MAX_RANDOM_ATTEMPTS} attempts"))))
    }

    pub fn n_states(&self) -> usize {
        self.phi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// `phi(s)` as a contiguous slice.
    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        let k = self.dim();
        &self.rows[s * k..(s + 1) * k]
    }

    /// `Phi theta`.
    pub fn value_of(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.phi * theta
    }

    /// `V_theta(s)` for a single state.
    #[inline]
    pub fn value_at(&self, s: usize, theta: &[f64]) -> f64 {
        self.row(s).iter().zip(theta).map(|(p, t)| p * t).sum()
    }

    /// Smallest and largest singular values of `Phi`.
    pub fn singular_value_range(&self) -> (f64, f64) {
        let sv = self.phi.clone().singular_values();
        (sv.min(), sv.max())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn tabular_is_identity() {
        let fm = FeatureMap::tabular(3);
        assert_eq!(fm.matrix(), &DMatrix::identity(3, 3));
        for s in 0..3 {
            assert_eq!(fm.row(s).iter().map(|x| x * x).sum::<f64>(), 1.0);
        }
        assert!(FeatureMap::new(fm.matrix().clone()).is_ok());
        let theta = DVector::from_vec(vec![0.3, -1.0, 7.0]);
        assert_eq!(fm.value_of(&theta), theta);
    }

    #[test]
    fn random_single_feature_is_unit() {
        let fm = FeatureMap::random(1, 1, &mut rng::stream(4)).unwrap();
        assert!((fm.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_features_satisfy_assumptions() {
        let mut r = rng::stream(5);
        for &(n, k) in &[(10, 3), (20, 20), (50, 7)] {
            let fm = FeatureMap::random(n, k, &mut r).unwrap();
            let max_sq = (0..n).map(|s| fm.row(s).iter().map(|x| x * x).sum::<f64>()).fold(0.0, f64::max);
            assert!(max_sq <= 1.0 + 1e-12);
            assert!((max_sq - 1.0).abs() < 1e-12);
            let (smin, _) = fm.singular_value_range();
            assert!(smin > 0.0);
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        let dup = DMatrix::from_row_slice(3, 2, &[0.5, 0.5, 0.5, 0.5, 0.1, 0.1]);
        assert!(matches!(FeatureMap::new(dup), Err(Error::RankDeficient(_))));
        let big = DMatrix::from_row_slice(2, 1, &[1.5, 0.1]);
        assert!(matches!(FeatureMap::new(big), Err(Error::FeatureNormExceeded { state: 0, .. })));
        let wide = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        assert!(FeatureMap::new(wide).is_err());
    }

    #[test]
    fn zero_theta_gives_zero_values() {
        let fm = FeatureMap::random(6, 3, &mut rng::stream(6)).unwrap();
        assert_eq!(fm.value_of(&DVector::zeros(3)), DVector::zeros(6));
    }

    proptest! {
        #[test]
        fn value_of_is_linear(
            seed in any::<u64>(),
            t1 in proptest::collection::vec(-5.0f64..5.0, 4),
            t2 in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let fm = FeatureMap::random(9, 4, &mut rng::stream(seed)).unwrap();
            let (t1, t2) = (DVector::from_vec(t1), DVector::from_vec(t2));
            let lhs = fm.value_of(&(&t1 + &t2));
            let rhs = fm.value_of(&t1) + fm.value_of(&t2);
            prop_assert!((lhs - rhs).amax() <= 1e-12);
            for s in 0..9 {
                prop_assert!((fm.value_at(s, t1.as_slice()) - fm.value_of(&t1)[s]).abs() <= 1e-12);
            }
        }
    }
}
