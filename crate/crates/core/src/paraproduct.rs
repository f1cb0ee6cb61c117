//! Quadratic paraproduct on periodic grids.
//!
//! Band index `m` is the integer annulus `2^{m-1} < |ξ| <= 2^m` (`m = 0` is
//! `|ξ| = 1`). The paraproduct and its telescoping expansion use scale
//! `k = top - m`, so scale 0 is the band of `2^top` and larger `k` are lower
//! frequencies: `PP(f, g) = Σ_k Q_{2k} f · P_k g` with `Q_k = band(top - k)`.

use rayon::prelude::*;

use crate::bilinear::{Applied, BilinearOperator};
use crate::error::{invalid, Result};
use crate::grid::{GridFunction, GridSpec, C64};

/// Largest band index with a representable frequency.
pub fn max_band(spec: &GridSpec) -> i64 {
    (spec.n / 2).ilog2() as i64
}

fn in_band(xi: i64, m: i64) -> bool {
    let a = xi.unsigned_abs();
    if m < 0 || a == 0 {
        return false;
    }
    let hi = 1u64 << m.min(62);
    a <= hi && 2 * a > hi
}

/// Sharp projection onto `2^{m-1} < |ξ| <= 2^m`.
pub fn qk(f: &GridFunction, m: i64) -> GridFunction {
    f.apply_multiplier(|xi| if in_band(xi, m) { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

/// Sharp projection onto `|ξ| <= 2^m` (only the zero mode for `m < 0`).
pub fn pk(f: &GridFunction, m: i64) -> GridFunction {
    f.apply_multiplier(|xi| {
        let keep = xi == 0 || (m >= 0 && xi.unsigned_abs() <= 1u64 << m.min(62));
        C64::new(keep as u8 as f64, 0.0)
    })
}

pub fn zero_mode(f: &GridFunction) -> GridFunction {
    f.apply_multiplier(|xi| C64::new((xi == 0) as u8 as f64, 0.0))
}

/// All band pieces `Q_0 f, ..., Q_max f`.
fn bands(f: &GridFunction) -> Vec<GridFunction> {
    (0..=max_band(f.spec())).into_par_iter().map(|m| qk(f, m)).collect()
}

fn zero_like(spec: GridSpec) -> GridFunction {
    GridFunction::zeros(spec)
}

/// Band pieces addressed by scale `k` relative to `top`.
struct Scales {
    top: i64,
    pieces: Vec<GridFunction>,
    zero: GridFunction,
}

impl Scales {
    fn new(f: &GridFunction, top: i64) -> Self {
        Scales {
            top,
            pieces: bands(f),
            zero: zero_like(*f.spec()),
        }
    }

    fn q(&self, k: i64) -> &GridFunction {
        let m = self.top - k;
        if m < 0 || m as usize >= self.pieces.len() {
            &self.zero
        } else {
            &self.pieces[m as usize]
        }
    }

    /// Scales with a possibly nonzero piece, lowest frequency last.
    fn range(&self) -> std::ops::RangeInclusive<i64> {
        (self.top - self.pieces.len() as i64 + 1)..=self.top
    }
}

fn check_top(spec: &GridSpec, top: i64) -> Result<()> {
    if top < 1 || top > max_band(spec) {
        return Err(invalid("top", format!("top scale {top} outside 1..={}", max_band(spec))));
    }
    Ok(())
}

/// Default top scale: the unit band sits a factor 4 below Nyquist, so that
/// `f` at `|ξ| <= 2^{top-1}` times `g` at `|ξ| <= 2^top` stays representable.
pub fn default_top(spec: &GridSpec) -> i64 {
    (max_band(spec) - 1).max(1)
}

/// `Σ_k Q_{2k} f · P_k g` over scales `k >= 0` with a nonempty `Q_{2k}`.
pub fn pp_apply(f: &GridFunction, g: &GridFunction, top: i64) -> Result<GridFunction> {
    check_top(f.spec(), top)?;
    let fs = Scales::new(f, top);
    let mut acc = zero_like(*f.spec());
    for k in 0..=top {
        let q = fs.q(2 * k);
        if q.max_abs() == 0.0 {
            continue;
        }
        acc = acc.add(&q.mul(&pk(g, top - k))?)?;
    }
    Ok(acc)
}

/// The six integrals of the telescoping expansion of `∫ PP(f, g) h`.
#[derive(Clone, Debug, PartialEq)]
pub struct Telescoping {
    pub pairing: C64,
    /// `∫ Σ_k Q_{2k} f P_k g P_{k-1} h`.
    pub localized: C64,
    pub terms: [(&'static str, C64); 6],
    /// Set when `f` had energy above `2^{top-1}`, where the expansion fails.
    pub truncated: bool,
}

impl Telescoping {
    pub fn sum(&self) -> C64 {
        self.terms.iter().map(|t| t.1).sum()
    }

    pub fn residual(&self) -> f64 {
        (self.pairing - self.sum()).norm()
    }
}

/// Index offsets of the diagonal terms: `Q_l g Q_{l+d} h Σ_{k > l + e} Q_{2k} f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagonalRanges {
    /// Ranges forced by the expansion of `P_k g P_{k-1} h`.
    Exact,
    /// `k > l` on the same-band term and `k > l + 1` above it.
    Literal,
}

/// Telescoping expansion of `∫ PP(f, g) h`. `f` must live in
/// `|ξ| <= 2^{top-1}`; higher modes are dropped and flagged.
pub fn telescoping_decompose(
    f: &GridFunction,
    g: &GridFunction,
    h: &GridFunction,
    top: i64,
    ranges: DiagonalRanges,
) -> Result<Telescoping> {
    let spec = *f.spec();
    check_top(&spec, top)?;
    let fl = pk(f, top - 1);
    let truncated = fl.sub(f)?.max_abs() > 1e-14 * f.max_abs().max(1.0);
    let f = &fl;
    let (fs, gs, hs) = (Scales::new(f, top), Scales::new(g, top), Scales::new(h, top));
    let lo = *fs.range().start();
    let zero = zero_like(spec);

    // F_>(l) = Σ_{k > l} Q_{2k} f, for every l in range
    let tail = |l: i64| -> Result<GridFunction> {
        let mut acc = zero.clone();
        for k in (l + 1)..=top {
            acc = acc.add(fs.q(2 * k))?;
        }
        Ok(acc)
    };
    let lowsum = |s: &Scales, below: i64| -> Result<GridFunction> {
        let mut acc = zero.clone();
        for l in lo..below {
            acc = acc.add(s.q(l))?;
        }
        Ok(acc)
    };

    let pairing = pp_apply(f, g, top)?.pair(h)?;
    let mut localized = C64::new(0.0, 0.0);
    let (mut t1, mut t2, mut t3) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for k in 0..=top {
        let q = fs.q(2 * k);
        if q.max_abs() == 0.0 {
            continue;
        }
        localized += q.mul(&pk(g, top - k))?.pair(&pk(h, top - k + 1))?;
        t1 += q.mul(g)?.pair(h)?;
        t2 -= q.mul(&lowsum(&gs, k)?)?.pair(h)?;
        t3 -= q.mul(&lowsum(&hs, k - 1)?)?.pair(g)?;
    }
    let (e4, e6) = match ranges {
        DiagonalRanges::Exact => (1, 2),
        DiagonalRanges::Literal => (0, 1),
    };
    let (mut t4, mut t5, mut t6) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for l in lo..=top {
        let ql = gs.q(l);
        if ql.max_abs() == 0.0 {
            continue;
        }
        t4 += ql.mul(hs.q(l))?.pair(&tail(l + e4)?)?;
        t5 += ql.mul(hs.q(l - 1))?.pair(&tail(l)?)?;
        t6 += ql.mul(hs.q(l + 1))?.pair(&tail(l + e6)?)?;
    }
    Ok(Telescoping {
        pairing,
        localized,
        terms: [
            ("fgh", t1),
            ("f_low_g_h", t2),
            ("f_low_h_g", t3),
            ("diag_same", t4),
            ("diag_below", t5),
            ("diag_above", t6),
        ],
        truncated,
    })
}

/// Both sides of `∫ h Σ_l Q_l g Σ_{k>l} Q_{2k} f = ∫ Σ_l Q_l g Σ_{k>l} Q_{2k} f (Q_{l-1} + Q_l + Q_{l+1}) h`.
pub fn diagonal_step(f: &GridFunction, g: &GridFunction, h: &GridFunction, top: i64) -> Result<(C64, C64)> {
    check_top(f.spec(), top)?;
    let f = pk(f, top - 1);
    let (fs, gs, hs) = (Scales::new(&f, top), Scales::new(g, top), Scales::new(h, top));
    let (mut lhs, mut rhs) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for l in fs.range() {
        let mut tail = GridFunction::zeros(*f.spec());
        for k in (l + 1)..=top {
            tail = tail.add(fs.q(2 * k))?;
        }
        let a = gs.q(l).mul(&tail)?;
        lhs += a.pair(h)?;
        let near = hs.q(l - 1).add(hs.q(l))?.add(hs.q(l + 1))?;
        rhs += a.pair(&near)?;
    }
    Ok((lhs, rhs))
}

/// `(Σ_m |Q_m ψ|²)^{1/2}` pointwise.
pub fn square_function(psi: &GridFunction) -> GridFunction {
    let pieces = bands(psi);
    let n = psi.len();
    let v: Vec<C64> = (0..n)
        .map(|i| C64::new(pieces.iter().map(|p| p.samples()[i].norm_sqr()).sum::<f64>().sqrt(), 0.0))
        .collect();
    GridFunction::new(*psi.spec(), v).expect("same grid")
}

/// `sup_l |Σ_{m > l} a_m Q_m ψ|` pointwise, `l` from `-1` up to the top band;
/// `a[m]` weights band `m` (missing entries count as 0).
pub fn max_martingale(a: &[f64], psi: &GridFunction) -> Result<GridFunction> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(invalid("a", "coefficients must be finite"));
    }
    let pieces = bands(psi);
    let n = psi.len();
    let mut best = vec![0.0f64; n];
    let mut partial = vec![C64::new(0.0, 0.0); n];
    // l runs downwards, so the partial sums pick up bands from the top
    for m in (0..pieces.len()).rev() {
        let w = a.get(m).copied().unwrap_or(0.0);
        for i in 0..n {
            partial[i] += pieces[m].samples()[i] * w;
            best[i] = best[i].max(partial[i].norm());
        }
    }
    GridFunction::new(*psi.spec(), best.into_iter().map(|x| C64::new(x, 0.0)).collect())
}

/// `PP` as a registry operator; `top = None` picks [`default_top`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Paraproduct {
    pub top: Option<i64>,
}

impl BilinearOperator for Paraproduct {
    fn name(&self) -> String {
        "paraproduct".into()
    }
    fn apply(&self, f: &GridFunction, g: &GridFunction) -> Result<Applied> {
        let top = self.top.unwrap_or_else(|| default_top(f.spec()));
        Ok(Applied {
            function: pp_apply(f, g, top)?,
            aliased: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilinear::relative_l2;
    use crate::grid::{lp_norm, Ensemble};
    use proptest::prelude::*;

    fn band(seed: u64, n: usize, b: i64) -> GridFunction {
        Ensemble::BandLimited { band: b }.draw(seed, GridSpec::unit(n).unwrap()).unwrap().function
    }

    #[test]
    fn band_membership() {
        let spec = GridSpec::unit(64).unwrap();
        let f = GridFunction::mode(spec, 3);
        assert!(relative_l2(&qk(&f, 2), &f).unwrap() < 1e-14);
        assert!(qk(&f, 1).max_abs() < 1e-14);
        assert!(qk(&f, 3).max_abs() < 1e-14);
        let one = GridFunction::mode(spec, -1);
        assert!(relative_l2(&qk(&one, 0), &one).unwrap() < 1e-14);
    }

    #[test]
    fn projection_algebra() {
        let f = band(3, 128, 63);
        let mut acc = zero_mode(&f);
        for m in 0..=max_band(f.spec()) {
            acc = acc.add(&qk(&f, m)).unwrap();
            assert!(relative_l2(&acc, &pk(&f, m)).unwrap() < 1e-12);
            assert!(relative_l2(&qk(&qk(&f, m), m), &qk(&f, m)).unwrap() < 1e-12 || qk(&f, m).max_abs() == 0.0);
            assert!(qk(&qk(&f, m), m + 1).max_abs() < 1e-13);
            assert!(relative_l2(&pk(&qk(&f, m), m + 2), &qk(&f, m)).unwrap() < 1e-12 || qk(&f, m).max_abs() == 0.0);
            assert!(pk(&qk(&f, m), m - 1).max_abs() < 1e-13);
        }
        let e: f64 = (0..=max_band(f.spec())).map(|m| lp_norm(&qk(&f, m), 2.0).unwrap().powi(2)).sum::<f64>()
            + lp_norm(&zero_mode(&f), 2.0).unwrap().powi(2);
        assert!((e - lp_norm(&f, 2.0).unwrap().powi(2)).abs() < 1e-10);
    }

    #[test]
    fn self_adjoint() {
        let (f, g) = (band(1, 64, 31), band(2, 64, 31));
        for m in 0..5 {
            let a = qk(&f, m).inner(&g).unwrap();
            let b = f.inner(&qk(&g, m)).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_and_single_term_examples() {
        let spec = GridSpec::unit(256).unwrap();
        let top = 6;
        let f = band(5, 256, 31);
        let c = C64::new(2.5, 0.0);
        let g = GridFunction::from_fn(spec, |_| c);
        let lhs = pp_apply(&f, &g, top).unwrap();
        let mut rhs = GridFunction::zeros(spec);
        for k in 0..=top {
            rhs = rhs.add(&qk(&f, top - 2 * k)).unwrap();
        }
        assert!(relative_l2(&lhs, &rhs.scale(c)).unwrap() < 1e-12);

        // Q_{2k} picks band top-2k = 2 at k = 2; P_k then keeps |ξ| <= 4
        let (fm, gm) = (GridFunction::mode(spec, 3), GridFunction::mode(spec, -4));
        let out = pp_apply(&fm, &gm, top).unwrap();
        assert!(relative_l2(&out, &fm.mul(&gm).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn telescoping_is_exact() {
        let top = 6;
        for seed in 0..10 {
            let f = band(seed, 256, 32);
            let g = band(seed + 50, 256, 64);
            let h = band(seed + 90, 256, 64);
            let t = telescoping_decompose(&f, &g, &h, top, DiagonalRanges::Exact).unwrap();
            let scale = [&f, &g, &h].iter().map(|x| lp_norm(x, 2.0).unwrap()).product::<f64>();
            assert!(!t.truncated);
            assert!(t.residual() <= 1e-10 * scale, "{}", t.residual());
            assert!((t.pairing - t.localized).norm() <= 1e-10 * scale);
            let (l, r) = diagonal_step(&f, &g, &h, top).unwrap();
            assert!((l - r).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn literal_diagonal_ranges_miss_terms() {
        let top = 6;
        let (f, g, h) = (band(1, 256, 32), band(2, 256, 64), band(3, 256, 64));
        let t = telescoping_decompose(&f, &g, &h, top, DiagonalRanges::Literal).unwrap();
        assert!(t.residual() > 1e-6 * t.pairing.norm().max(1.0));
    }

    #[test]
    fn zero_input_gives_zero_terms() {
        let spec = GridSpec::unit(128).unwrap();
        let t = telescoping_decompose(&GridFunction::zeros(spec), &band(1, 128, 20), &band(2, 128, 20), 5, DiagonalRanges::Exact).unwrap();
        assert!(t.terms.iter().all(|x| x.1.norm() == 0.0));
        assert!(telescoping_decompose(&band(1, 128, 60), &band(1, 128, 20), &band(2, 128, 20), 5, DiagonalRanges::Exact)
            .unwrap()
            .truncated);
    }

    #[test]
    fn square_function_of_a_mode() {
        let spec = GridSpec::unit(64).unwrap();
        let f = GridFunction::mode(spec, 5).scale(C64::new(0.0, 2.0));
        let s = square_function(&f);
        assert!(relative_l2(&s, &f.abs()).unwrap() < 1e-12);
    }

    #[test]
    fn unit_martingale_is_the_high_pass_maximum() {
        let f = band(9, 128, 60);
        let a = vec![1.0; 10];
        let mm = max_martingale(&a, &f).unwrap();
        let mut best = vec![0.0f64; 128];
        for l in -1..=max_band(f.spec()) {
            let hp = f.sub(&pk(&f, l)).unwrap();
            for (b, v) in best.iter_mut().zip(hp.samples()) {
                *b = b.max(v.norm());
            }
        }
        for (x, b) in mm.samples().iter().zip(&best) {
            assert!((x.re - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn martingale_bounded_by_sup_times_total(seed in 0u64..50, w in 0.1f64..3.0) {
            let f = band(seed, 64, 31);
            let a: Vec<f64> = (0..6).map(|m| if m % 2 == 0 { w } else { -w }).collect();
            let mm = max_martingale(&a, &f).unwrap();
            let bound: f64 = (0..6).map(|m| qk(&f, m).max_abs()).sum::<f64>() * w;
            prop_assert!(mm.max_abs() <= bound + 1e-12);
        }
    }
}
