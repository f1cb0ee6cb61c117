//! Truncated Taylor arithmetic used to evaluate exact derivatives of the
//! bump and multiplier shapes up to a fixed order.

use std::ops::{Add, Mul, Neg, Sub};

/// Taylor coefficients `c[k] = f^{(k)}(x) / k!` truncated at a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    c: Vec<f64>,
}

impl Jet {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = value;
        Jet { c }
    }

    /// The identity function evaluated at `x`.
    pub fn variable(x: f64, order: usize) -> Self {
        let mut j = Jet::constant(x, order);
        if order > 0 {
            j.c[1] = 1.0;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative.
    pub fn derivative(&self, k: usize) -> f64 {
        if k > self.order() {
            return 0.0;
        }
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.c[k] * fact
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn offset(&self, s: f64) -> Jet {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }

    pub fn exp(&self) -> Jet {
        // y' = y x'  =>  k y_k = sum_{m=1}^k m x_m y_{k-m}
        let n = self.c.len();
        let mut y = vec![0.0; n];
        y[0] = self.c[0].exp();
        for k in 1..n {
            let mut s = 0.0;
            for m in 1..=k {
                s += m as f64 * self.c[m] * y[k - m];
            }
            y[k] = s / k as f64;
        }
        Jet { c: y }
    }

    pub fn recip(&self) -> Jet {
        let n = self.c.len();
        let mut y = vec![0.0; n];
        y[0] = 1.0 / self.c[0];
        for k in 1..n {
            let mut s = 0.0;
            for m in 1..=k {
                s += self.c[m] * y[k - m];
            }
            y[k] = -s / self.c[0];
        }
        Jet { c: y }
    }

    pub fn powi(&self, p: u32) -> Jet {
        let mut out = Jet::constant(1.0, self.order());
        for _ in 0..p {
            out = &out * self;
        }
        out
    }

    pub fn tanh(&self) -> Jet {
        // tanh x = 1 - 2 / (exp(2x) + 1)
        let e = self.scale(2.0).exp().offset(1.0);
        e.recip().scale(-2.0).offset(1.0)
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        Jet {
            c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        Jet {
            c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        let mut c = vec![0.0; n];
        for (i, a) in self.c.iter().enumerate().take(n) {
            for (j, b) in o.c.iter().enumerate().take(n - i) {
                c[i + j] += a * b;
            }
        }
        Jet { c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_derivatives_match_closed_form() {
        let x = Jet::variable(0.3, 5).scale(2.0);
        let e = x.exp();
        for k in 0..=5 {
            let expect = 2f64.powi(k as i32) * (0.6f64).exp();
            assert!((e.derivative(k) - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn recip_and_tanh() {
        let x = Jet::variable(0.7, 3);
        let r = x.recip();
        assert!((r.derivative(1) + 1.0 / 0.49).abs() < 1e-12);
        assert!((r.derivative(2) - 2.0 / 0.343).abs() < 1e-10);
        let t = x.tanh();
        let sech2 = 1.0 - 0.7f64.tanh().powi(2);
        assert!((t.value() - 0.7f64.tanh()).abs() < 1e-14);
        assert!((t.derivative(1) - sech2).abs() < 1e-13);
    }

    #[test]
    fn polynomial_product() {
        let x = Jet::variable(2.0, 4);
        let p = x.powi(3);
        assert_eq!(p.derivative(0), 8.0);
        assert_eq!(p.derivative(1), 12.0);
        assert_eq!(p.derivative(2), 12.0);
        assert_eq!(p.derivative(3), 6.0);
        assert_eq!(p.derivative(4), 0.0);
    }
}
