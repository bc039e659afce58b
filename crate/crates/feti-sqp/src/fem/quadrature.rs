//! Gauss-Legendre quadrature on the reference interval and square.

/// One point of a 2D rule on `[-1, 1]^2`.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub xi: f64,
    pub eta: f64,
    pub weight: f64,
}

/// Tensor-product Gauss-Legendre rule on the reference square.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub points: Vec<QuadPoint>,
}

/// Nodes and weights of the n-point Gauss-Legendre rule on `[-1, 1]`,
/// exact for polynomials of degree `2n - 1`. Supports `n <= 5`.
pub fn gauss_legendre_1d(n: usize) -> Vec<(f64, f64)> {
    match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3.0_f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = 0.6_f64.sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        4 => {
            let a = 0.339_981_043_584_856_3;
            let b = 0.861_136_311_594_052_6;
            let wa = 0.652_145_154_862_546_1;
            let wb = 0.347_854_845_137_453_9;
            vec![(-b, wb), (-a, wa), (a, wa), (b, wb)]
        }
        5 => {
            let a = 0.538_469_310_105_683_1;
            let b = 0.906_179_845_938_664_0;
            let wa = 0.478_628_670_499_366_5;
            let wb = 0.236_926_885_056_189_1;
            let w0 = 0.568_888_888_888_888_9;
            vec![(-b, wb), (-a, wa), (0.0, w0), (a, wa), (b, wb)]
        }
        _ => panic!("Gauss-Legendre rule with {n} points is not tabulated"),
    }
}

impl Quadrature {
    /// `n x n` tensor rule on the square.
    pub fn gauss(n: usize) -> Self {
        let rule = gauss_legendre_1d(n);
        let mut points = Vec::with_capacity(n * n);
        for &(xi, wx) in &rule {
            for &(eta, wy) in &rule {
                points.push(QuadPoint { xi, eta, weight: wx * wy });
            }
        }
        Self { points }
    }

    /// Default rule for a tensor Lagrange element of polynomial order `p`:
    /// `(p + 1)^2` points.
    pub fn for_element_order(p: usize) -> Self {
        Self::gauss(p + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Integral of x^k over [-1, 1].
    fn monomial_integral(k: u32) -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            2.0 / (k as f64 + 1.0)
        }
    }

    #[test]
    fn rules_are_exact_to_design_order() {
        for n in 1..=5 {
            let rule = gauss_legendre_1d(n);
            for k in 0..=(2 * n as u32 - 1) {
                let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
                assert_relative_eq!(got, monomial_integral(k), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn tensor_weights_sum_to_square_area() {
        for n in 1..=5 {
            let q = Quadrature::gauss(n);
            assert_eq!(q.points.len(), n * n);
            let total: f64 = q.points.iter().map(|p| p.weight).sum();
            assert_relative_eq!(total, 4.0, epsilon = 1e-13);
        }
    }
}
