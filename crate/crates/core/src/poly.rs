//! Real polynomials (ascending coefficients) and their complex roots.

use nalgebra::DMatrix;

use crate::linalg::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn zero() -> Self {
        Poly(vec![0.0])
    }

    /// `a + b x`
    pub fn linear(a: f64, b: f64) -> Self {
        Poly(vec![a, b])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn trimmed(mut self) -> Self {
        let d = self.degree();
        self.0.truncate(d + 1);
        self
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let len = self.0.len().max(other.0.len());
        let mut out = vec![0.0; len];
        for (i, c) in self.0.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.0.iter().enumerate() {
            out[i] += c;
        }
        Poly(out)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.0
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::zero();
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * k as f64)
                .collect(),
        )
    }

    /// All complex roots via eigenvalues of a scaled, balanced companion
    /// matrix, each refined by a few Newton steps on the polynomial itself.
    pub fn roots(&self) -> Vec<C64> {
        let p = self.clone().trimmed();
        let deg = p.degree();
        if deg == 0 {
            return Vec::new();
        }
        // Factor out roots at zero exactly.
        let zeros = p.0.iter().position(|&c| c != 0.0).unwrap_or(0);
        let core = Poly(p.0[zeros..].to_vec());
        let d = core.degree();
        let mut roots = vec![C64::new(0.0, 0.0); zeros];
        if d == 0 {
            return roots;
        }
        // Rescale x = s y so that the extreme coefficients have equal size.
        let lead = core.0[d];
        let s = (core.0[0] / lead).abs().powf(1.0 / d as f64);
        let s = if s.is_finite() && s > 0.0 { s } else { 1.0 };
        let scaled: Vec<f64> = core
            .0
            .iter()
            .enumerate()
            .map(|(k, c)| c * s.powi(k as i32) / (lead * s.powi(d as i32)))
            .collect();
        let mut comp = DMatrix::<f64>::zeros(d, d);
        for i in 1..d {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..d {
            comp[(i, d - 1)] = -scaled[i];
        }
        balance(&mut comp);
        let eig = comp.complex_eigenvalues();
        let dp = core.derivative();
        for ev in eig.iter() {
            let mut z = ev * s;
            for _ in 0..4 {
                let f = core.eval(z);
                let fp = dp.eval(z);
                if fp.norm() == 0.0 {
                    break;
                }
                let step = f / fp;
                if !step.re.is_finite() || step.norm() > 1e-3 * (1.0 + z.norm()) {
                    break;
                }
                z -= step;
            }
            roots.push(z);
        }
        roots
    }
}

/// Parlett–Reinsch diagonal similarity balancing (powers of two).
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix = 2.0f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix * radix;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix * radix;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(mut r: Vec<C64>) -> Vec<C64> {
        r.sort_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        });
        r
    }

    #[test]
    fn roots_of_product_of_linear_factors() {
        // (x-1)(x+2)(x-0.5)
        let p = Poly::linear(-1.0, 1.0)
            .mul(&Poly::linear(2.0, 1.0))
            .mul(&Poly::linear(-0.5, 1.0));
        let r = sorted_re(p.roots());
        let expect = [-2.0, 0.5, 1.0];
        for (z, e) in r.iter().zip(expect) {
            assert!((z - C64::new(e, 0.0)).norm() < 1e-13, "{z} vs {e}");
        }
    }

    #[test]
    fn complex_pair_and_zero_root() {
        // x (x^2 + 1)
        let p = Poly(vec![0.0, 1.0, 0.0, 1.0]);
        let r = p.roots();
        assert_eq!(r.len(), 3);
        assert!(r.iter().any(|z| z.norm() == 0.0));
        assert!(r.iter().any(|z| (z - C64::new(0.0, 1.0)).norm() < 1e-13));
        assert!(r.iter().any(|z| (z - C64::new(0.0, -1.0)).norm() < 1e-13));
    }

    #[test]
    fn badly_scaled_quadratic() {
        // 2x^2 + 0.5x - 0.5: root (-0.5 + sqrt(4.25))/4
        let p = Poly(vec![-0.5, 0.5, 2.0]);
        let phi = (-0.5 + 4.25f64.sqrt()) / 4.0;
        assert!(p
            .roots()
            .iter()
            .any(|z| (z.re - phi).abs() < 1e-15 && z.im == 0.0));
        let big = Poly(vec![1e6, -1e3 - 1e3, 1.0]).roots();
        assert!(big.iter().all(|z| (z.re - 1e3).abs() < 1e-6));
    }

    #[test]
    fn derivative_and_eval() {
        let p = Poly(vec![1.0, -3.0, 0.0, 2.0]);
        assert_eq!(p.derivative(), Poly(vec![-3.0, 0.0, 6.0]));
        assert_eq!(p.eval(C64::new(2.0, 0.0)), C64::new(11.0, 0.0));
    }
}
