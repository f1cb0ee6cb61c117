//! Bilinear Fourier multipliers on periodic grids: generic symbol
//! application, bilinear Hilbert transforms, the lacunary polygon operator,
//! the trilinear forms along lines, and empirical norm scans.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::{LacCover, LacPolygon, RectCollection, RectKind, WhitneyParams};
use crate::grid::{lp_norm, modulate, smooth_restrict, AdaptedBump, Ensemble, GridFunction, GridSpec, C64};
use crate::interval::Interval;

/// What a symbol represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolKind {
    Indicator,
    Table,
    ClosedForm,
}

/// A multiplier `m(ξ, η)` on integer frequency pairs.
#[derive(Clone)]
pub struct Symbol2D {
    pub kind: SymbolKind,
    pub label: String,
    /// Known bound on `|m|`.
    pub sup: f64,
    eval: Arc<dyn Fn(i64, i64) -> C64 + Send + Sync>,
}

impl std::fmt::Debug for Symbol2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Symbol2D({}, {:?}, sup {})", self.label, self.kind, self.sup)
    }
}

impl Symbol2D {
    pub fn new(
        kind: SymbolKind,
        label: impl Into<String>,
        sup: f64,
        eval: impl Fn(i64, i64) -> C64 + Send + Sync + 'static,
    ) -> Self {
        Symbol2D {
            kind,
            label: label.into(),
            sup,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(c: C64) -> Self {
        Symbol2D::new(SymbolKind::ClosedForm, "constant", c.norm(), move |_, _| c)
    }

    /// `iπ sgn(s ξ - η)` with `sgn(0) = 0`.
    pub fn hilbert(s: f64) -> Self {
        Symbol2D::new(SymbolKind::ClosedForm, format!("hilbert(s={s})"), PI, move |a, b| {
            C64::new(0.0, PI * sgn(s * a as f64 - b as f64))
        })
    }

    /// `iπ sgn(s ξ - η + offset)`: the half-plane symbol of a general line.
    pub fn hilbert_line(s: f64, offset: f64) -> Self {
        Symbol2D::new(SymbolKind::ClosedForm, format!("hilbert(s={s},b={offset})"), PI, move |a, b| {
            C64::new(0.0, PI * sgn(s * a as f64 - b as f64 + offset))
        })
    }

    /// Indicator of the polygon scaled so radius 1 spans `radius` bins.
    pub fn lacunary(polygon: LacPolygon, radius: f64) -> Self {
        Symbol2D::new(SymbolKind::Indicator, format!("lacunary(mu_max={},r={radius})", polygon.mu_max()), 1.0, move |a, b| {
            let inside = polygon.contains([a as f64 / radius, b as f64 / radius]);
            C64::new(if inside { 1.0 } else { 0.0 }, 0.0)
        })
    }

    pub fn eval(&self, xi: i64, eta: i64) -> C64 {
        (self.eval)(xi, eta)
    }

    /// Sampled on all slot pairs of `spec` (row = ξ slot, column = η slot).
    pub fn table(&self, spec: &GridSpec) -> SymbolTable {
        let n = spec.n;
        let data: Vec<C64> = (0..n * n)
            .into_par_iter()
            .map(|k| self.eval(spec.freq_of_slot(k / n), spec.freq_of_slot(k % n)))
            .collect();
        SymbolTable { n, data }
    }
}

/// `sgn` with `sgn(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Dense symbol samples for one grid size.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    n: usize,
    data: Vec<C64>,
}

impl SymbolTable {
    fn at(&self, a: usize, b: usize) -> C64 {
        self.data[a * self.n + b]
    }
}

/// Output of a bilinear application.
#[derive(Clone, Debug)]
pub struct Applied {
    pub function: GridFunction,
    /// Some nonzero contribution had `ξ + η` outside the representable band.
    pub aliased: bool,
}

fn apply_with(f: &GridFunction, g: &GridFunction, m: &(dyn Fn(usize, usize) -> C64 + Sync)) -> Result<Applied> {
    if !f.spec().same_as(g.spec()) {
        return Err(Error::GridMismatch("bilinear inputs on different grids".into()));
    }
    let spec = *f.spec();
    let n = spec.n;
    let (fs, gs) = (f.spectrum(), g.spectrum());
    let active: Vec<usize> = (0..n).filter(|&a| fs[a] != C64::new(0.0, 0.0)).collect();
    let fmax = fs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let gmax = gs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    // wrapped terms below roundoff of the coefficient scale are ignored
    let floor = 1e-12 * fmax * gmax;
    let results: Vec<(C64, bool)> = (0..n)
        .into_par_iter()
        .map(|t| {
            let theta = spec.freq_of_slot(t);
            let mut acc = C64::new(0.0, 0.0);
            let mut wrapped = false;
            for &a in &active {
                let b = (t + n - a) % n;
                let gb = gs[b];
                if gb == C64::new(0.0, 0.0) {
                    continue;
                }
                let term = fs[a] * gb * m(a, b);
                if term.norm() > floor && spec.freq_of_slot(a) + spec.freq_of_slot(b) != theta {
                    wrapped = true;
                }
                acc += term;
            }
            (acc, wrapped)
        })
        .collect();
    let aliased = results.iter().any(|r| r.1);
    let coeffs = results.into_iter().map(|r| r.0).collect();
    Ok(Applied {
        function: GridFunction::from_spectrum(spec, coeffs)?,
        aliased,
    })
}

/// `ĥ(θ) = Σ_ξ f̂(ξ) ĝ(θ - ξ) m(ξ, θ - ξ)`, with `θ` taken modulo the grid.
pub fn bilinear_apply(m: &Symbol2D, f: &GridFunction, g: &GridFunction) -> Result<Applied> {
    let spec = *f.spec();
    apply_with(f, g, &|a, b| m.eval(spec.freq_of_slot(a), spec.freq_of_slot(b)))
}

/// As [`bilinear_apply`] with a precomputed table.
pub fn bilinear_apply_table(table: &SymbolTable, f: &GridFunction, g: &GridFunction) -> Result<Applied> {
    if table.n != f.spec().n {
        return Err(Error::GridMismatch("symbol table size".into()));
    }
    apply_with(f, g, &|a, b| table.at(a, b))
}

pub fn hs_apply(s: f64, f: &GridFunction, g: &GridFunction) -> Result<Applied> {
    if !(s > 0.0) {
        return Err(invalid("s", format!("slope must be positive, got {s}")));
    }
    bilinear_apply(&Symbol2D::hilbert(s), f, g)
}

pub fn lac_apply(polygon: &LacPolygon, radius: f64, f: &GridFunction, g: &GridFunction) -> Result<Applied> {
    bilinear_apply(&Symbol2D::lacunary(polygon.clone(), radius), f, g)
}

/// `L Σ_{ξ+η+θ=0} f̂(ξ) ĝ(η) ĥ(θ) m(ξ, η)`, the frequency-side form of `∫ T_m(f, g) h`.
pub fn triple_sum(m: &Symbol2D, f: &GridFunction, g: &GridFunction, h: &GridFunction) -> C64 {
    let spec = *f.spec();
    let half = (spec.n / 2) as i64;
    let mut acc = C64::new(0.0, 0.0);
    for a in -half..half {
        let fa = f.coeff(a);
        if fa == C64::new(0.0, 0.0) {
            continue;
        }
        for b in -half..half {
            let theta = -a - b;
            if theta < -half || theta >= half {
                continue;
            }
            acc += fa * g.coeff(b) * h.coeff(theta) * m.eval(a, b);
        }
    }
    acc * spec.length
}

/// Trigonometric interpolant of `f` at an arbitrary point.
pub fn eval_at(f: &GridFunction, x: f64) -> C64 {
    let spec = f.spec();
    f.spectrum()
        .iter()
        .enumerate()
        .map(|(s, c)| {
            let k = spec.freq_of_slot(s) as f64;
            c * C64::from_polar(1.0, 2.0 * PI * k * (x - spec.origin) / spec.length)
        })
        .sum()
}

fn derivative(f: &GridFunction) -> GridFunction {
    let spec = *f.spec();
    f.apply_multiplier(|k| C64::new(0.0, 2.0 * PI * k as f64 / spec.length))
}

/// Principal-value quadrature of `∫ f(x + s t) g(x - t) dt / t` on the
/// periodic domain.
///
/// The integral over the line is folded onto one period by summing the
/// translates of `1/t`: with `images = None` the sum is taken in closed form
/// (`(π/L) cot(π t / L)`), otherwise truncated symmetrically at `|k| <= images`.
/// The trapezoid rule excises `t = 0` symmetrically, replacing the node by
/// its limit. Integer `s` evaluates on grid nodes; other slopes use the
/// trigonometric interpolant.
pub fn hs_quadrature(s: f64, f: &GridFunction, g: &GridFunction, images: Option<usize>) -> Result<GridFunction> {
    if !(s > 0.0) {
        return Err(invalid("s", format!("slope must be positive, got {s}")));
    }
    if !f.spec().same_as(g.spec()) {
        return Err(Error::GridMismatch("quadrature inputs".into()));
    }
    let spec = *f.spec();
    let (n, l, h) = (spec.n, spec.length, spec.step());
    let kernel = |t: f64| match images {
        None => PI / l / (PI * t / l).tan(),
        Some(k) => {
            let mut acc = 1.0 / t;
            for j in 1..=k {
                let jl = j as f64 * l;
                acc += 2.0 * t / (t * t - jl * jl);
            }
            acc
        }
    };
    let weights: Vec<f64> = (1..n / 2).map(|j| kernel(j as f64 * h)).collect();
    let (df, dg) = (derivative(f), derivative(g));
    let integer = (s - s.round()).abs() < 1e-12;
    let si = s.round() as i64;
    let out: Vec<C64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = spec.x(i);
            let fx = |t: f64, j: i64| {
                if integer {
                    f.samples()[(i as i64 + si * j).rem_euclid(n as i64) as usize]
                } else {
                    eval_at(f, x + s * t)
                }
            };
            let gx = |j: i64| g.samples()[(i as i64 - j).rem_euclid(n as i64) as usize];
            // limit of [F(t) - F(-t)] K(t) / 2 at t = 0 is F'(0)
            let f0 = f.samples()[i];
            let g0 = g.samples()[i];
            let mut acc = (df.samples()[i] * s) * g0 - f0 * dg.samples()[i];
            for (jj, w) in weights.iter().enumerate() {
                let j = jj as i64 + 1;
                let t = j as f64 * h;
                let plus = fx(t, j) * gx(j);
                let minus = fx(-t, -j) * gx(-j);
                acc += (plus - minus) * *w;
            }
            // node at t = -L/2 (kernel vanishes for the closed form)
            if images.is_some() {
                let j = -((n / 2) as i64);
                acc += fx(-0.5 * l, j) * gx(j) * kernel(-0.5 * l) * 0.5;
                acc += fx(0.5 * l, -j) * gx(-j) * kernel(0.5 * l) * 0.5;
            }
            acc * h
        })
        .collect();
    GridFunction::new(spec, out)
}

/// Relative `L²` distance `‖a - b‖ / ‖b‖`.
pub fn relative_l2(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    let d = lp_norm(&a.sub(b)?, 2.0)?;
    let nb = lp_norm(b, 2.0)?;
    Ok(if nb == 0.0 { d } else { d / nb })
}

/// One chord's line data in frequency bins.
#[derive(Clone, Debug, PartialEq)]
pub struct LineData {
    pub mu: u32,
    pub slope: f64,
    /// Integer base point `(ξ, η, θ)` on the line, `θ = -ξ - η`.
    pub base: [i64; 3],
    pub intervals: [Interval; 3],
}

impl LineData {
    /// Line of slope `slope` through the integer base point `(xi, eta)`.
    pub fn new(mu: u32, slope: f64, xi: i64, eta: i64, i1: Interval, i2: Interval) -> Result<Self> {
        if !(slope > 0.0) {
            return Err(invalid("slope", "must be positive"));
        }
        Ok(LineData {
            mu,
            slope,
            base: [xi, eta, -xi - eta],
            intervals: [i1, i2, i1.sum(&i2).neg()],
        })
    }

    /// Line data of chord `mu`, rescaled so the unit circle has `radius` bins.
    /// The line passes through the lattice point of `I^1 × I^2 × I^3` closest
    /// to the chord line, or the one nearest to the scaled `v_mu` if the box
    /// holds none.
    pub fn from_polygon(poly: &LacPolygon, mu: u32, radius: f64, params: &WhitneyParams, slope_floor: f64) -> Result<Self> {
        let slope = poly.edge_slope(mu)?;
        if slope < slope_floor {
            return Err(invalid("slope", format!("s_{mu} = {slope} below the floor {slope_floor}")));
        }
        let ch = crate::geometry::chord_intervals(poly, mu, params)?;
        let v = poly.vertex(mu)?;
        let scale = |iv: Interval| Interval::new(iv.lo * radius, iv.hi * radius);
        let (i1, i2) = (scale(ch.i[0]), scale(ch.i[1]));
        let i3 = i1.sum(&i2).neg();
        let b = (v[1] - slope * v[0]) * radius;
        let inside = |x: f64, iv: &Interval| iv.lo < x && x < iv.hi;
        let mut best: Option<(f64, i64, i64)> = None;
        for xi in i1.lo.ceil() as i64..=i1.hi.floor() as i64 {
            let eta = (slope * xi as f64 + b).round() as i64;
            let err = (eta as f64 - slope * xi as f64 - b).abs();
            let ok = inside(xi as f64, &i1) && inside(eta as f64, &i2) && inside(-(xi + eta) as f64, &i3);
            if ok && best.is_none_or(|(e, _, _)| err < e) {
                best = Some((err, xi, eta));
            }
        }
        let (xi, eta) = match best {
            Some((_, xi, eta)) => (xi, eta),
            None => ((v[0] * radius).round() as i64, (v[1] * radius).round() as i64),
        };
        LineData::new(mu, slope, xi, eta, i1, i2)
    }

    /// Offset `b` with the line `η = s ξ + b` through the base point.
    pub fn offset(&self) -> f64 {
        self.base[1] as f64 - self.slope * self.base[0] as f64
    }

    /// Move the base point by `d` along the line (needs `s d` integral).
    pub fn shifted(&self, d: i64) -> Result<Self> {
        let dy = self.slope * d as f64;
        if (dy - dy.round()).abs() > 1e-9 {
            return Err(invalid("d", "shift leaves the integer lattice"));
        }
        let (xi, eta) = (self.base[0] + d, self.base[1] + dy.round() as i64);
        Ok(LineData {
            base: [xi, eta, -xi - eta],
            ..self.clone()
        })
    }

    /// Smooth restriction bumps `φ^i` on the three intervals.
    pub fn bumps(&self) -> [AdaptedBump; 3] {
        self.intervals.map(AdaptedBump::on)
    }

    /// Whether the line meets `I^1 × I^2`.
    pub fn meets_box(&self) -> bool {
        let (i1, i2) = (self.intervals[0], self.intervals[1]);
        let b = self.offset();
        let (y0, y1) = (self.slope * i1.lo + b, self.slope * i1.hi + b);
        y0.max(y1) >= i2.lo && y0.min(y1) <= i2.hi
    }
}

/// `Λ(f¹, f², f³) = ∫ H_s(M_ξ f¹, M_η f²) M_θ f³` with smooth restrictions.
pub fn trilinear_lambda(ld: &LineData, f1: &GridFunction, f2: &GridFunction, f3: &GridFunction) -> Result<C64> {
    let bumps = ld.bumps();
    let g1 = modulate(&smooth_restrict(f1, &bumps[0]), ld.base[0])?;
    let g2 = modulate(&smooth_restrict(f2, &bumps[1]), ld.base[1])?;
    let g3 = modulate(&smooth_restrict(f3, &bumps[2]), ld.base[2])?;
    let h = hs_apply(ld.slope, &g1, &g2)?;
    if h.aliased {
        return Err(Error::BandOverflow("trilinear form output wrapped".into()));
    }
    h.function.pair(&g3)
}

/// `∫ f¹_μ f²_μ f³_μ` with the same smooth restrictions.
pub fn restricted_triple_integral(ld: &LineData, f1: &GridFunction, f2: &GridFunction, f3: &GridFunction) -> Result<C64> {
    let b = ld.bumps();
    let p = smooth_restrict(f1, &b[0]).mul(&smooth_restrict(f2, &b[1]))?;
    p.pair(&smooth_restrict(f3, &b[2]))
}

/// A bilinear operator selectable by name.
pub trait BilinearOperator: Send + Sync {
    fn name(&self) -> String;
    fn apply(&self, f: &GridFunction, g: &GridFunction) -> Result<Applied>;
}

pub struct Pointwise;

impl BilinearOperator for Pointwise {
    fn name(&self) -> String {
        "pointwise".into()
    }
    fn apply(&self, f: &GridFunction, g: &GridFunction) -> Result<Applied> {
        Ok(Applied {
            function: f.mul(g)?,
            aliased: false,
        })
    }
}

pub struct Hilbert {
    pub s: f64,
}

impl BilinearOperator for Hilbert {
    fn name(&self) -> String {
        format!("hilbert(s={})", self.s)
    }
    fn apply(&self, f: &GridFunction, g: &GridFunction) -> Result<Applied> {
        hs_apply(self.s, f, g)
    }
}

/// Symbol operator with per-grid-size table caching.
pub struct TabulatedOperator {
    symbol: Symbol2D,
    cache: std::sync::Mutex<BTreeMap<usize, Arc<SymbolTable>>>,
}

impl TabulatedOperator {
    pub fn new(symbol: Symbol2D) -> Self {
        TabulatedOperator {
            symbol,
            cache: std::sync::Mutex::new(BTreeMap::new()),
        }
    }

    fn table(&self, spec: &GridSpec) -> Arc<SymbolTable> {
        let mut c = self.cache.lock().expect("symbol cache");
        c.entry(spec.n).or_insert_with(|| Arc::new(self.symbol.table(spec))).clone()
    }
}

impl BilinearOperator for TabulatedOperator {
    fn name(&self) -> String {
        self.symbol.label.clone()
    }
    fn apply(&self, f: &GridFunction, g: &GridFunction) -> Result<Applied> {
        let t = self.table(f.spec());
        bilinear_apply_table(&t, f, g)
    }
}

/// Operator parameters shared by the registry constructors.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorParams {
    pub s: f64,
    pub mu_max: u32,
    /// Polygon radius in bins.
    pub radius: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        OperatorParams {
            s: 1.0,
            mu_max: 8,
            radius: 128.0,
        }
    }
}

type OperatorCtor = fn(&OperatorParams) -> Result<Box<dyn BilinearOperator>>;

/// Named bilinear operators.
pub fn operator_registry() -> BTreeMap<&'static str, OperatorCtor> {
    let mut r: BTreeMap<&'static str, OperatorCtor> = BTreeMap::new();
    r.insert("pointwise", |_| Ok(Box::new(Pointwise)));
    r.insert("hilbert", |p| {
        if !(p.s > 0.0) {
            return Err(invalid("s", "slope must be positive"));
        }
        Ok(Box::new(Hilbert { s: p.s }))
    });
    r.insert("lacunary", |p| {
        let poly = LacPolygon::new(p.mu_max)?;
        Ok(Box::new(TabulatedOperator::new(Symbol2D::lacunary(poly, p.radius))))
    });
    r.insert("paraproduct", |_| Ok(Box::new(crate::paraproduct::Paraproduct::default())));
    r
}

pub fn make_operator(name: &str, params: &OperatorParams) -> Result<Box<dyn BilinearOperator>> {
    let reg = operator_registry();
    let ctor = reg.get(name).ok_or_else(|| Error::Unknown {
        kind: "operator",
        name: name.into(),
    })?;
    ctor(params)
}

/// Exponent triple with `1/p1 + 1/p2 + 1/p3 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderTriple {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl HolderTriple {
    pub fn new(p1: f64, p2: f64, p3: f64) -> Result<Self> {
        for (name, p) in [("p1", p1), ("p2", p2), ("p3", p3)] {
            if !(p >= 1.0) {
                return Err(invalid(name, format!("exponent must be >= 1, got {p}")));
            }
        }
        let s = 1.0 / p1 + 1.0 / p2 + 1.0 / p3;
        if (s - 1.0).abs() > 1e-9 {
            return Err(invalid("triple", format!("1/p1 + 1/p2 + 1/p3 = {s}, expected 1")));
        }
        Ok(HolderTriple { p1, p2, p3 })
    }

    /// Dual exponent `p3' = p3 / (p3 - 1)`.
    pub fn p3_dual(&self) -> f64 {
        if self.p3.is_infinite() {
            1.0
        } else if self.p3 == 1.0 {
            f64::INFINITY
        } else {
            self.p3 / (self.p3 - 1.0)
        }
    }
}

/// One trial of a norm scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub seed: u64,
    pub triple: HolderTriple,
    pub n: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanStats {
    pub operator: String,
    pub rows: Vec<ScanRow>,
    pub skipped: usize,
    pub aliased: usize,
}

impl ScanStats {
    pub fn max(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    /// Empirical quantile `q ∈ [0, 1]` (nearest rank).
    pub fn quantile(&self, q: f64) -> f64 {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.ratio).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
        v[k]
    }

    /// `seed,p1,p2,p3,N,ratio` table.
    pub fn to_table(&self) -> String {
        let mut s = String::from("seed,p1,p2,p3,N,ratio\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{:?}", r.seed, r.triple.p1, r.triple.p2, r.triple.p3, r.n, r.ratio);
        }
        s
    }
}

/// Empirical ratios `‖T(f, g)‖_{p3'} / (‖f‖_{p1} ‖g‖_{p2})` over seeded draws;
/// `f` uses seed `2k`, `g` seed `2k + 1` offset by `seed0`.
pub fn norm_scan(
    op: &dyn BilinearOperator,
    triples: &[HolderTriple],
    ensemble: Ensemble,
    spec: GridSpec,
    trials: usize,
    seed0: u64,
) -> Result<ScanStats> {
    let per: Vec<Result<(u64, Option<(Vec<f64>, bool)>)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = seed0 + t;
            let f = ensemble.draw(seed.wrapping_mul(2), spec)?.function;
            let g = ensemble.draw(seed.wrapping_mul(2) + 1, spec)?.function;
            let out = op.apply(&f, &g)?;
            let mut ratios = Vec::with_capacity(triples.len());
            for tr in triples {
                let den = lp_norm(&f, tr.p1)? * lp_norm(&g, tr.p2)?;
                if den == 0.0 {
                    return Ok((seed, None));
                }
                ratios.push(lp_norm(&out.function, tr.p3_dual())? / den);
            }
            Ok((seed, Some((ratios, out.aliased))))
        })
        .collect();
    let mut stats = ScanStats {
        operator: op.name(),
        rows: Vec::new(),
        skipped: 0,
        aliased: 0,
    };
    for r in per {
        let (seed, v) = r?;
        match v {
            None => stats.skipped += 1,
            Some((ratios, aliased)) => {
                stats.aliased += aliased as usize;
                for (tr, ratio) in triples.iter().zip(ratios) {
                    stats.rows.push(ScanRow {
                        seed,
                        triple: *tr,
                        n: spec.n,
                        ratio,
                    });
                }
            }
        }
    }
    Ok(stats)
}

/// Partition pieces as symbols: central, Whitney and paraproduct parts of
/// `Σ ψ_R`, evaluated at `(ξ, η) / radius`.
pub fn partition_symbols(cover: Arc<LacCover>, radius: f64) -> [Symbol2D; 3] {
    [RectKind::Central, RectKind::Whitney, RectKind::Paraproduct].map(|kind| {
        let c = cover.clone();
        Symbol2D::new(SymbolKind::Table, format!("partition({})", kind.name()), 1.0, move |a, b| {
            let p = [a as f64 / radius, b as f64 / radius];
            let members = c.containing(p, 1.0);
            let alpha = c.alpha();
            let etas: Vec<f64> = members.iter().map(|m| m.rect.bump(alpha, p)).collect();
            let total: f64 = etas.iter().sum();
            if total == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let part: f64 = members.iter().zip(&etas).filter(|(m, _)| m.kind == kind).map(|(_, e)| e).sum();
            C64::new(part / total, 0.0)
        })
    })
}
