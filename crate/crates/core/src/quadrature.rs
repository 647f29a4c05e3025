//! Gauss–Hermite rules for expectations over a standard normal variable.

use std::sync::OnceLock;

/// Nodes and weights for `E[f(z)]`, `z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// `n`-point rule. The physicists' nodes `t` are found by Newton's method
    /// on the normalized Hermite recurrence, then mapped to `z = √2 t` with
    /// weights divided by `√π`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut t = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * t[0],
                3 => 1.91 * z - 0.91 * t[1],
                _ => 2.0 * z - t[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            t[i] = z;
            t[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let sqrt2 = std::f64::consts::SQRT_2;
        GaussHermite {
            nodes: t.iter().map(|x| sqrt2 * x).collect(),
            weights: w.iter().map(|x| x / sqrt_pi).collect(),
        }
    }

    /// The shared 61-node rule.
    pub fn standard() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(61))
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }
}

/// `E_z[f(z)]` with the 61-node rule.
pub fn gauss_expect<F: Fn(f64) -> f64>(f: F) -> f64 {
    GaussHermite::standard().expect(f)
}

/// `E_z[f(z)]` by the trapezoidal rule with step 0.05 on `[-14, 14]`.
///
/// For integrands analytic in a strip around the real axis the error decays
/// like `exp(-2πd/h)`. This holds up for `tanh(a + √a z)` with large `a`,
/// where the 61-node Gauss–Hermite rule loses accuracy (~1e-7 at `a ≈ 1.6`).
pub fn smooth_expect<F: Fn(f64) -> f64>(f: F) -> f64 {
    const H: f64 = 0.05;
    const HALF: i32 = 280;
    let norm = H / (2.0 * std::f64::consts::PI).sqrt();
    (-HALF..=HALF)
        .map(|k| {
            let z = k as f64 * H;
            (-0.5 * z * z).exp() * f(z)
        })
        .sum::<f64>()
        * norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments_are_exact() {
        let g = GaussHermite::standard();
        assert!((g.expect(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(g.expect(|z| z).abs() < 1e-13);
        assert!((g.expect(|z| z * z) - 1.0).abs() < 1e-12);
        assert!((g.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
        assert!((g.expect(|z| z.powi(6)) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn small_rule_nodes() {
        let g = GaussHermite::new(3);
        let mut n = g.nodes.clone();
        n.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((n[2] - 3f64.sqrt()).abs() < 1e-13);
        assert!(n[1].abs() < 1e-13);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_moment() {
        // E[e^{a z}] = e^{a^2/2}
        let v = gauss_expect(|z| (0.7 * z).exp());
        assert!((v - (0.49f64 / 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn smooth_rule_nishimori_identity() {
        // E tanh(a + √a z) = E tanh²(a + √a z)
        for a in [0.1f64, 1.6, 3.0, 8.0, 30.0] {
            let t1 = smooth_expect(|z| (a + a.sqrt() * z).tanh());
            let t2 = smooth_expect(|z| (a + a.sqrt() * z).tanh().powi(2));
            assert!((t1 - t2).abs() < 1e-13, "a = {a}: {}", t1 - t2);
        }
        assert!((smooth_expect(|z| z * z) - 1.0).abs() < 1e-13);
    }
}
