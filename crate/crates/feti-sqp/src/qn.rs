//! Limited-memory BFGS over a factored exact base.
//!
//! Between Hessian recomputations the inverse approximation is kept as the
//! base factorization plus a deque of secant pairs, applied with the two-loop
//! recursion. Pairs failing the curvature safeguard are skipped, so the
//! operator stays symmetric positive definite whenever the base is.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::kkt::InverseOperator;

/// One accepted secant pair: step `d`, gradient difference `y`.
#[derive(Debug, Clone)]
struct SecantPair {
    d: DVector<f64>,
    y: DVector<f64>,
    /// 1 / (y . d), positive by the acceptance test.
    rho: f64,
}

/// Inverse quasi-Newton operator: base solve wrapped in BFGS updates.
#[derive(Debug)]
pub struct QnState<B> {
    base: B,
    pairs: VecDeque<SecantPair>,
    m_max: usize,
    curvature_tol: f64,
}

pub const DEFAULT_MEMORY: usize = 50;
pub const DEFAULT_CURVATURE_TOL: f64 = 1e-8;

impl<B: InverseOperator> QnState<B> {
    /// Starts with an empty pair list: `apply_inverse` is the base solve.
    pub fn new(base: B) -> Self {
        Self::with_memory(base, DEFAULT_MEMORY, DEFAULT_CURVATURE_TOL)
    }

    pub fn with_memory(base: B, m_max: usize, curvature_tol: f64) -> Self {
        assert!(m_max >= 1, "memory limit must be positive");
        assert!(curvature_tol > 0.0, "curvature safeguard must be positive");
        Self { base, pairs: VecDeque::with_capacity(m_max), m_max, curvature_tol }
    }

    pub fn base(&self) -> &B {
        &self.base
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Offers a secant pair. Accepted iff `y.d > tol * |y| |d|`; the
    /// comparison is written so that NaN in either vector rejects the pair.
    pub fn update(&mut self, d: DVector<f64>, y: DVector<f64>) -> bool {
        assert_eq!(d.len(), self.base.dim());
        assert_eq!(y.len(), self.base.dim());
        let yd = y.dot(&d);
        if !(yd > self.curvature_tol * y.norm() * d.norm()) {
            return false;
        }
        if self.pairs.len() == self.m_max {
            self.pairs.pop_front();
        }
        self.pairs.push_back(SecantPair { d, y, rho: 1.0 / yd });
        true
    }

    /// Drops all pairs and replaces the base factorization.
    pub fn restart(&mut self, new_base: B) {
        self.base = new_base;
        self.pairs.clear();
    }
}

impl<B: InverseOperator> InverseOperator for QnState<B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Two-loop recursion: newest-to-oldest alpha sweep, base solve, then
    /// oldest-to-newest correction.
    fn apply_inverse(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut q = rhs.clone();
        let mut alpha = vec![0.0; self.pairs.len()];
        for (j, pair) in self.pairs.iter().enumerate().rev() {
            alpha[j] = pair.rho * pair.d.dot(&q);
            q.axpy(-alpha[j], &pair.y, 1.0);
        }
        let mut r = self.base.apply_inverse(&q);
        for (j, pair) in self.pairs.iter().enumerate() {
            let beta = pair.rho * pair.y.dot(&r);
            r.axpy(alpha[j] - beta, &pair.d, 1.0);
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Cholesky, DMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * n as f64
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Dense inverse-BFGS recursion over the retained pairs, for comparison.
    fn dense_inverse(
        base: &DMatrix<f64>,
        pairs: &[(DVector<f64>, DVector<f64>)],
    ) -> DMatrix<f64> {
        let n = base.nrows();
        let mut hinv = base.clone().try_inverse().unwrap();
        let eye = DMatrix::<f64>::identity(n, n);
        for (d, y) in pairs {
            let rho = 1.0 / y.dot(d);
            let left = &eye - d * y.transpose() * rho;
            let right = &eye - y * d.transpose() * rho;
            hinv = &left * hinv * &right + d * d.transpose() * rho;
        }
        hinv
    }

    #[test]
    fn empty_state_is_the_base_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd(5, &mut rng);
        let v = random_vec(5, &mut rng);
        let state = QnState::new(Cholesky::new(a.clone()).unwrap());
        assert_eq!(state.n_pairs(), 0);
        let expect = a.lu().solve(&v).unwrap();
        assert_relative_eq!((state.apply_inverse(&v) - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_base_without_pairs_is_identity() {
        let state = QnState::new(Cholesky::new(DMatrix::identity(3, 3)).unwrap());
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(state.apply_inverse(&v), v);
    }

    #[test]
    fn curvature_safeguard_accepts_and_rejects() {
        let mut state = QnState::new(Cholesky::new(DMatrix::identity(4, 4)).unwrap());
        let d = DVector::from_vec(vec![1.0, 0.0, 2.0, 0.0]);
        assert!(!state.update(d.clone(), -&d), "negative curvature must be skipped");
        assert_eq!(state.n_pairs(), 0);
        assert!(state.update(d.clone(), d.clone()), "unit curvature must be accepted");
        assert_eq!(state.n_pairs(), 1);
        // NaN curvature is a skip, not a poisoned state.
        let bad = DVector::from_vec(vec![f64::NAN, 0.0, 0.0, 0.0]);
        assert!(!state.update(d, bad));
        assert_eq!(state.n_pairs(), 1);
    }

    #[test]
    fn inverse_secant_equation_holds_after_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_spd(6, &mut rng);
        let mut state = QnState::new(Cholesky::new(a).unwrap());
        let d = random_vec(6, &mut rng);
        let y = &d * 0.5 + random_vec(6, &mut rng) * 0.1;
        assert!(y.dot(&d) > 0.0, "test pair must be curvature-valid");
        assert!(state.update(d.clone(), y.clone()));
        let hd = state.apply_inverse(&y);
        assert_relative_eq!((hd - &d).norm() / d.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_dense_bfgs_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..10 {
            let n = rng.gen_range(3..=12);
            let a = random_spd(n, &mut rng);
            let mut state = QnState::new(Cholesky::new(a.clone()).unwrap());
            let mut kept = Vec::new();
            while kept.len() < 4 {
                let d = random_vec(n, &mut rng);
                let y = random_vec(n, &mut rng);
                if state.update(d.clone(), y.clone()) {
                    kept.push((d, y));
                }
            }
            let hinv = dense_inverse(&a, &kept);
            let v = random_vec(n, &mut rng);
            let got = state.apply_inverse(&v);
            let expect = &hinv * &v;
            assert!(
                (got - &expect).norm() <= 1e-10 * expect.norm().max(1.0),
                "trial {trial}: two-loop result drifted from the dense recursion"
            );
        }
    }

    #[test]
    fn operator_is_symmetric_and_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 7;
        let a = random_spd(n, &mut rng);
        let mut state = QnState::new(Cholesky::new(a).unwrap());
        let mut accepted = 0;
        while accepted < 3 {
            if state.update(random_vec(n, &mut rng), random_vec(n, &mut rng)) {
                accepted += 1;
            }
        }
        for _ in 0..5 {
            let u = random_vec(n, &mut rng);
            let v = random_vec(n, &mut rng);
            let uhv = u.dot(&state.apply_inverse(&v));
            let vhu = v.dot(&state.apply_inverse(&u));
            assert_relative_eq!(uhv, vhu, epsilon = 1e-12 * uhv.abs().max(1.0));
            assert!(v.dot(&state.apply_inverse(&v)) > 0.0);
        }
    }

    #[test]
    fn memory_bound_evicts_oldest_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let a = random_spd(n, &mut rng);
        let mut state =
            QnState::with_memory(Cholesky::new(a.clone()).unwrap(), 2, DEFAULT_CURVATURE_TOL);
        let mut kept = Vec::new();
        while kept.len() < 3 {
            let d = random_vec(n, &mut rng);
            let y = random_vec(n, &mut rng);
            if state.update(d.clone(), y.clone()) {
                kept.push((d, y));
            }
        }
        assert_eq!(state.n_pairs(), 2);
        let hinv = dense_inverse(&a, &kept[1..]);
        let v = random_vec(n, &mut rng);
        let expect = &hinv * &v;
        assert_relative_eq!(
            (state.apply_inverse(&v) - &expect).norm(),
            0.0,
            epsilon = 1e-10 * expect.norm()
        );
    }

    #[test]
    fn restart_clears_pairs_and_swaps_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 4;
        let a = random_spd(n, &mut rng);
        let b = random_spd(n, &mut rng);
        let mut state = QnState::new(Cholesky::new(a).unwrap());
        while !state.update(random_vec(n, &mut rng), random_vec(n, &mut rng)) {}
        assert_eq!(state.n_pairs(), 1);
        state.restart(Cholesky::new(b.clone()).unwrap());
        assert_eq!(state.n_pairs(), 0);
        let v = random_vec(n, &mut rng);
        let expect = b.clone().lu().solve(&v).unwrap();
        assert_relative_eq!((state.apply_inverse(&v) - expect).norm(), 0.0, epsilon = 1e-12);
        // A fresh pair then satisfies the inverse secant against the new base.
        let d = random_vec(n, &mut rng);
        let y = &b * &d;
        assert!(state.update(d.clone(), y.clone()));
        assert_relative_eq!((state.apply_inverse(&y) - &d).norm(), 0.0, epsilon = 1e-10);
    }

    proptest::proptest! {
        #[test]
        fn two_loop_matches_dense_recursion(seed in 0u64..256, n in 2usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_spd(n, &mut rng);
            let mut state = QnState::new(Cholesky::new(a.clone()).unwrap());
            let mut kept = Vec::new();
            for _ in 0..6 {
                let d = random_vec(n, &mut rng);
                let y = random_vec(n, &mut rng);
                if state.update(d.clone(), y.clone()) {
                    kept.push((d, y));
                }
            }
            let hinv = dense_inverse(&a, &kept);
            let v = random_vec(n, &mut rng);
            let expect = &hinv * &v;
            let got = state.apply_inverse(&v);
            proptest::prop_assert!((got - &expect).norm() <= 1e-10 * expect.norm().max(1.0));
        }
    }
}
