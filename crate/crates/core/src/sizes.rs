//! Sizes of trees, exceptional-set layers, grid multi-tile collections,
//! the model sum and single-tree audits.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num_complex::Complex64 as C64;

use crate::bilinear::LineData;
use crate::error::{invalid, Error, Result};
use crate::grid::{maximal_1, modulate, smooth_restrict, AdaptedBump, CutoffKernel, GridFunction, GridSpec, XiKernel};
use crate::interval::{Interval, IntervalUnion};
use crate::jet::Jet;
use crate::timefreq::{
    build_multitiles, candidate_tops, maximal_tree, sheared_box, DyInterval, Forest, MultiTile, TopData, Tree,
    WhitneyCube3,
};

/// `P(Bin(2K+1, t) >= K+1)`: polynomial step with `K` vanishing derivatives at both ends.
pub fn smoothstep(k: u32, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let n = 2 * k + 1;
    let mut binom = 1.0f64;
    let mut total = 0.0;
    for r in 0..=n {
        if r > k {
            total += binom * t.powi(r as i32) * (1.0 - t).powi((n - r) as i32);
        }
        binom = binom * (n - r) as f64 / (r + 1) as f64;
    }
    total
}

fn smoothstep_jet(k: u32, t: &Jet) -> Jet {
    let order = t.order();
    let v = t.value();
    if v <= 0.0 {
        return Jet::constant(0.0, order);
    }
    if v >= 1.0 {
        return Jet::constant(1.0, order);
    }
    let n = 2 * k + 1;
    let one_minus = t.scale(-1.0).offset(1.0);
    let mut binom = 1.0f64;
    let mut total = Jet::constant(0.0, order);
    for r in 0..=n {
        if r > k {
            let term = &t.powi(r) * &one_minus.powi(n - r);
            total = &total + &term.scale(binom);
        }
        binom = binom * (n - r) as f64 / (r + 1) as f64;
    }
    total
}

const EDGE: f64 = 4.5;
const PLATEAU: f64 = 1.0;

/// Plateau profile in units of `|ω|`: 1 on `|u| <= flat`, 0 beyond `|u| = 4.5`.
fn plateau(k: u32, flat: f64, u: f64) -> f64 {
    smoothstep(k, (EDGE - u.abs()) / (EDGE - flat))
}

fn plateau_jet(k: u32, flat: f64, u: &Jet) -> Jet {
    let t = if u.value() >= 0.0 {
        u.scale(-1.0).offset(EDGE)
    } else {
        u.offset(EDGE)
    };
    smoothstep_jet(k, &t.scale(1.0 / (EDGE - flat)))
}

/// Finite family of multipliers adapted to `10 ω` and vanishing at a point:
/// `a · b((ξ - c(ω))/|ω| - δ) · tanh((ξ - ξ_i)/|ω|)` with `δ ∈ {0, -1/2, 1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeFamily {
    /// Spatial parameter `N`; transitions have `N² + 1` vanishing derivatives.
    pub spatial_n: u32,
    /// Highest derivative order whose bound is enforced.
    pub order: usize,
    pub members: usize,
    /// Half-width of the plateau in units of `|ω|`.
    pub flat: f64,
    pub amplitude: f64,
}

impl SizeFamily {
    pub fn new(spatial_n: u32, order: usize, members: usize) -> Result<Self> {
        Self::with_plateau(spatial_n, order, members, PLATEAU)
    }

    pub fn with_plateau(spatial_n: u32, order: usize, members: usize, flat: f64) -> Result<Self> {
        if !(0.0..EDGE).contains(&flat) {
            return Err(invalid("flat", format!("plateau half-width must lie in [0, {EDGE}), got {flat}")));
        }
        if spatial_n == 0 || spatial_n > 8 {
            return Err(invalid("spatial_n", format!("must be in 1..=8, got {spatial_n}")));
        }
        if !(1..=3).contains(&members) {
            return Err(invalid("members", format!("must be in 1..=3, got {members}")));
        }
        if order == 0 || order > 12 {
            return Err(invalid("order", format!("must be in 1..=12, got {order}")));
        }
        let mut fam = SizeFamily {
            spatial_n,
            order,
            members,
            flat,
            amplitude: 1.0,
        };
        let bound = fam.unnormalized_bound(4000);
        fam.amplitude = 1.0 / bound.max(1.0);
        Ok(fam)
    }

    pub fn transition_order(&self) -> u32 {
        self.spatial_n * self.spatial_n + 1
    }

    fn effective_order(&self) -> usize {
        self.order.min((self.spatial_n * self.spatial_n) as usize)
    }

    /// Bound on `sup |d^k (b · tanh(· - w))/du^k|` for `1 <= k <= order`,
    /// uniform in the offset `w`, from sampled derivative sups of both factors.
    fn unnormalized_bound(&self, samples: usize) -> f64 {
        let m = self.effective_order();
        let k = self.transition_order();
        let mut b = vec![0.0f64; m + 1];
        let mut th = vec![0.0f64; m + 1];
        for s in 0..=samples {
            let u = -EDGE + 2.0 * EDGE * s as f64 / samples as f64;
            let jb = plateau_jet(k, self.flat, &Jet::variable(u, m));
            let x = -12.0 + 24.0 * s as f64 / samples as f64;
            let jt = Jet::variable(x, m).tanh();
            for r in 0..=m {
                b[r] = b[r].max(jb.derivative(r).abs());
                th[r] = th[r].max(jt.derivative(r).abs());
            }
        }
        th[0] = 1.0;
        let mut worst: f64 = 0.0;
        for order in 1..=m {
            let mut binom = 1.0;
            let mut acc = 0.0;
            for r in 0..=order {
                acc += binom * b[r] * th[order - r];
                binom = binom * (order - r) as f64 / (r + 1) as f64;
            }
            worst = worst.max(acc);
        }
        worst
    }

    fn shift(member: usize) -> f64 {
        [0.0, -0.5, 0.5][member]
    }

    /// Member `member` for the interval `omega` and vanishing point `xi`.
    pub fn value(&self, member: usize, omega: &Interval, xi: f64, x: f64) -> f64 {
        let w = omega.len();
        let u = (x - omega.center()) / w - Self::shift(member);
        if u.abs() >= EDGE {
            return 0.0;
        }
        self.amplitude * plateau(self.transition_order(), self.flat, u) * ((x - xi) / w).tanh()
    }

    /// Largest `|m^{(k)}| |ω|^k` (k = 1..order) and `|m| |ω| / |ξ - ξ_i|` over a dense sample.
    pub fn verify(&self, member: usize, omega: &Interval, xi: f64, samples: usize) -> (f64, f64) {
        let m = self.effective_order();
        let w = omega.len();
        let (mut deriv, mut vanish) = (0.0f64, 0.0f64);
        let lo = omega.center() - 5.0 * w;
        for s in 0..=samples {
            let x = lo + 10.0 * w * s as f64 / samples as f64;
            let u = (x - omega.center()) / w - Self::shift(member);
            if u.abs() >= EDGE {
                continue;
            }
            let ju = Jet::variable(u, m);
            let jw = Jet::variable((x - xi) / w, m);
            let prod = &plateau_jet(self.transition_order(), self.flat, &ju) * &jw.tanh();
            for k in 1..=m {
                deriv = deriv.max(self.amplitude * prod.derivative(k).abs());
            }
            let d = (x - xi).abs() / w;
            if d > 0.0 {
                vanish = vanish.max(self.amplitude * prod.value().abs() / d);
            }
        }
        (deriv, vanish)
    }

    pub fn id(&self) -> String {
        format!("plateau-tanh(N={},M={},members={},flat={})", self.spatial_n, self.order, self.members, self.flat)
    }
}

/// `‖χ̃_I^{10} g‖₂` with the periodic distance to the center of `I`.
pub fn weighted_norm(g: &GridFunction, iv: &Interval) -> f64 {
    let spec = g.spec();
    let (c, len, period) = (iv.center(), iv.len(), spec.length);
    let s: f64 = g
        .samples()
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let mut d = (spec.x(k) - c).rem_euclid(period);
            d = d.min(period - d);
            let w = (1.0 + d / len).powi(-10);
            (w * z.norm()).powi(2)
        })
        .sum();
    (s * spec.step()).sqrt()
}

fn apply_member(f: &GridFunction, fam: &SizeFamily, member: usize, omega: &Interval, xi: f64) -> GridFunction {
    let spec = *f.spec();
    f.apply_multiplier(|k| C64::new(fam.value(member, omega, xi, spec.physical(k)), 0.0))
}

/// `max_m ‖χ̃_I^{10} π_m f‖₂` over the family.
pub fn tile_seminorm(f: &GridFunction, iv: &Interval, omega: &Interval, xi: f64, fam: &SizeFamily) -> f64 {
    (0..fam.members)
        .map(|m| weighted_norm(&apply_member(f, fam, m, omega, xi), iv))
        .fold(0.0, f64::max)
}

/// `L_μ` direction `(1, s, -1 - s)`.
pub fn direction(s: f64) -> [f64; 3] {
    [1.0, s, -1.0 - s]
}

/// Cached size evaluation of one component against one function.
pub struct SizeOracle<'a> {
    tiles: &'a [MultiTile],
    f: &'a GridFunction,
    component: usize,
    slope: f64,
    family: SizeFamily,
    by_cube: HashMap<usize, Vec<usize>>,
    tile_cache: RefCell<HashMap<(usize, u64), f64>>,
    top_cache: RefCell<HashMap<(u64, DyInterval), f64>>,
}

impl<'a> SizeOracle<'a> {
    pub fn new(tiles: &'a [MultiTile], f: &'a GridFunction, component: usize, slope: f64, family: SizeFamily) -> Result<Self> {
        if component > 2 {
            return Err(invalid("component", "must be 0, 1 or 2"));
        }
        let mut by_cube: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, t) in tiles.iter().enumerate() {
            by_cube.entry(t.cube).or_default().push(k);
        }
        Ok(SizeOracle {
            tiles,
            f,
            component,
            slope,
            family,
            by_cube,
            tile_cache: RefCell::new(HashMap::new()),
            top_cache: RefCell::new(HashMap::new()),
        })
    }

    pub fn family(&self) -> &SizeFamily {
        &self.family
    }

    fn xi(&self, t: f64) -> f64 {
        direction(self.slope)[self.component] * t
    }

    /// `‖f‖_{P_i, (ξ_T)_i}` for the tile `p` and diagonal coordinate `t`.
    pub fn seminorm(&self, p: usize, t: f64) -> f64 {
        if let Some(v) = self.tile_cache.borrow().get(&(p, t.to_bits())) {
            return *v;
        }
        let tile = &self.tiles[p];
        let omega = tile.omega[self.component];
        let xi = self.xi(t);
        let group = &self.by_cube[&tile.cube];
        let mut best = vec![0.0f64; group.len()];
        for m in 0..self.family.members {
            let g = apply_member(self.f, &self.family, m, &omega, xi);
            for (b, &q) in best.iter_mut().zip(group) {
                *b = b.max(weighted_norm(&g, &self.tiles[q].interval.interval()));
            }
        }
        let mut cache = self.tile_cache.borrow_mut();
        for (&q, v) in group.iter().zip(&best) {
            cache.insert((q, t.to_bits()), *v);
        }
        cache[&(p, t.to_bits())]
    }

    /// Second summand: `|I_T|^{-1/2} max_m ‖χ̃_{I_T}^{10} π_m f‖₂` on `10 ω_{i,T}`.
    pub fn top_term(&self, top: &TopData) -> f64 {
        let key = (top.t.to_bits(), top.interval);
        if let Some(v) = self.top_cache.borrow().get(&key) {
            return *v;
        }
        let omega = top.omegas(self.slope)[self.component];
        let iv = top.interval.interval();
        let v = tile_seminorm(self.f, &iv, &omega, self.xi(top.t), &self.family) / iv.len().sqrt();
        self.top_cache.borrow_mut().insert(key, v);
        v
    }

    /// Both summands of the tree size.
    pub fn tree_size_parts(&self, top: &TopData, members: &[usize]) -> (f64, f64) {
        let s: f64 = members.iter().map(|&p| self.seminorm(p, top.t).powi(2)).sum();
        ((s / top.interval.len()).sqrt(), self.top_term(top))
    }

    pub fn tree_size(&self, top: &TopData, members: &[usize]) -> f64 {
        let (a, b) = self.tree_size_parts(top, members);
        a + b
    }
}

/// Maximal size over the candidate top-data grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeReport {
    pub component: usize,
    pub size: f64,
    /// Summands at the achieving top data.
    pub parts: (f64, f64),
    pub top: Option<TopData>,
    pub tree_len: usize,
    pub evaluated: usize,
    pub family: String,
}

impl SizeReport {
    pub fn to_text(&self, collection: &str, n: usize) -> String {
        let top = match &self.top {
            Some(t) => format!("{:?},{},{}", t.t, t.interval.e, t.interval.k),
            None => "-,-,-".into(),
        };
        format!("{collection},{},{:?},{top},{},{n}", self.component + 1, self.size, self.family)
    }
}

pub fn max_size(oracle: &SizeOracle<'_>, members: &[usize], dilation: f64) -> SizeReport {
    let mut rep = SizeReport {
        component: oracle.component,
        size: 0.0,
        parts: (0.0, 0.0),
        top: None,
        tree_len: 0,
        evaluated: 0,
        family: oracle.family.id(),
    };
    for top in candidate_tops(oracle.tiles, members) {
        let tree = maximal_tree(oracle.tiles, members.iter().copied(), &top, dilation);
        if tree.is_empty() {
            continue;
        }
        rep.evaluated += 1;
        let parts = oracle.tree_size_parts(&top, &tree);
        if parts.0 + parts.1 > rep.size {
            rep.size = parts.0 + parts.1;
            rep.parts = parts;
            rep.top = Some(top);
            rep.tree_len = tree.len();
        }
    }
    rep
}

/// `sup_{p} inf_{x ∈ I_p} M_1 f(x)`.
pub fn maximal_bound(tiles: &[MultiTile], members: &[usize], f: &GridFunction) -> f64 {
    let m = maximal_1(f);
    let spec = f.spec();
    members
        .iter()
        .map(|&p| {
            let iv = tiles[p].interval;
            (0..spec.n)
                .filter(|&k| {
                    let x = spec.x(k);
                    x >= iv.lo() && x < iv.hi()
                })
                .map(|k| m.samples()[k].re)
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
}

/// Both formulations of the abstract maximal size of coefficients on dyadic
/// intervals, over every interval `J` with endpoints on the finest grid.
pub fn abstract_sizes(coeffs: &[(DyInterval, f64)]) -> (f64, f64) {
    let Some(fine) = coeffs.iter().map(|c| c.0.e).max() else {
        return (0.0, 0.0);
    };
    let lo = coeffs.iter().map(|c| c.0.k << (fine - c.0.e)).min().unwrap();
    let hi = coeffs.iter().map(|c| (c.0.k + 1) << (fine - c.0.e)).max().unwrap();
    let cell = 2f64.powi(-fine);
    let mut l2: f64 = 0.0;
    let mut weak: f64 = 0.0;
    for a in lo..hi {
        for b in a + 1..=hi {
            let inside: Vec<&(DyInterval, f64)> = coeffs
                .iter()
                .filter(|c| {
                    let s = fine - c.0.e;
                    c.0.k << s >= a && (c.0.k + 1) << s <= b
                })
                .collect();
            let jl = (b - a) as f64 * cell;
            let energy: f64 = inside.iter().map(|c| c.1 * c.1).sum();
            l2 = l2.max((energy / jl).sqrt());
            // square function on the fine cells of J
            let mut vals: Vec<f64> = (a..b)
                .map(|x| {
                    inside
                        .iter()
                        .filter(|c| {
                            let s = fine - c.0.e;
                            x >> s == c.0.k
                        })
                        .map(|c| c.1 * c.1 / c.0.len())
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            vals.sort_by(|x, y| y.total_cmp(x));
            for (r, v) in vals.iter().enumerate() {
                weak = weak.max(v * (r + 1) as f64 * cell / jl);
            }
        }
    }
    (l2, weak)
}

/// `{x : M_1(1_E)(x) > factor |E|}` as a union of grid cells.
pub fn exceptional_set(e: &IntervalUnion, spec: &GridSpec, factor: f64) -> IntervalUnion {
    let ind = crate::grid::indicator(spec, e);
    let m = maximal_1(&ind);
    let thr = factor * e.measure();
    let h = spec.step();
    IntervalUnion::new(
        (0..spec.n)
            .filter(|&k| m.samples()[k].re > thr)
            .map(|k| Interval::new(spec.x(k), spec.x(k) + h))
            .collect(),
    )
}

/// Whether the closed interval lies in `Ω` on the circle of the given period.
fn circle_covers(omega: &IntervalUnion, iv: &Interval, origin: f64, period: f64) -> bool {
    if iv.len() >= period {
        return omega.measure() >= period;
    }
    let lo = origin + (iv.lo - origin).rem_euclid(period);
    let hi = lo + iv.len();
    let end = origin + period;
    if hi <= end {
        omega.covers(&Interval::new(lo, hi))
    } else {
        omega.covers(&Interval::new(lo, end)) && omega.covers(&Interval::new(origin, hi - period))
    }
}

/// Layers `P_{1,l}` relative to an exceptional set.
#[derive(Clone, Debug, PartialEq)]
pub struct ExceptionalLayers {
    pub omega: IntervalUnion,
    /// `layers[l]` lists member tiles of layer `l`.
    pub layers: Vec<Vec<usize>>,
}

impl ExceptionalLayers {
    pub fn layer_of(&self, p: usize) -> Option<usize> {
        self.layers.iter().position(|l| l.contains(&p))
    }
}

/// Layer 0: `I ⊄ Ω`; layer `l >= 1`: `4^{l-1} I ⊆ Ω` and `4^l I ⊄ Ω`.
pub fn exceptional_layers(omega: &IntervalUnion, tiles: &[MultiTile], members: &[usize], spec: &GridSpec) -> ExceptionalLayers {
    let mut layers: Vec<Vec<usize>> = vec![Vec::new()];
    for &p in members {
        let iv = tiles[p].interval.interval();
        let mut l = 0usize;
        let mut grown = iv;
        while circle_covers(omega, &grown, spec.origin, spec.length) {
            l += 1;
            grown = iv.dilate(4f64.powi(l as i32));
        }
        if layers.len() <= l {
            layers.resize(l + 1, Vec::new());
        }
        layers[l].push(p);
    }
    ExceptionalLayers {
        omega: omega.clone(),
        layers,
    }
}

/// Outcome of the frequency filter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterReport {
    pub kept: Vec<usize>,
    pub oversized: usize,
    pub disjoint: usize,
}

/// Keep tiles with `|ω_{P_i}| <= c |J^i|` and `ω_{P_i} ∩ J^i ≠ ∅` for every `i`.
pub fn frequency_filter(tiles: &[MultiTile], windows: &[Interval; 3], c: f64) -> FilterReport {
    let mut rep = FilterReport::default();
    for (k, t) in tiles.iter().enumerate() {
        if (0..3).any(|i| t.omega[i].len() > c * windows[i].len()) {
            rep.oversized += 1;
        } else if (0..3).any(|i| !t.omega[i].intersects(&windows[i])) {
            rep.disjoint += 1;
        } else {
            rep.kept.push(k);
        }
    }
    rep
}

/// Relative difference between `π_ω(M_ξ f_μ)` and `π_ω π_μ (M_ξ f)` for the
/// first component, `π_μ` having multiplier `φ_μ(· + ξ_μ)`.
pub fn composition_residual(f: &GridFunction, line: &LineData, omega: &Interval) -> Result<f64> {
    let spec = *f.spec();
    let phi = line.bumps()[0];
    let proj = AdaptedBump::on(*omega);
    let xi = line.base[0];
    let lhs = smooth_restrict(&modulate(&smooth_restrict(f, &phi), xi)?, &proj);
    let shifted = modulate(f, xi)?.apply_multiplier(|k| C64::new(phi.value(spec.physical(k) + xi as f64), 0.0));
    let rhs = smooth_restrict(&shifted, &proj);
    let den = lhs.inner(&lhs)?.re.sqrt().max(1e-300);
    let diff = lhs.sub(&rhs)?;
    Ok(diff.inner(&diff)?.re.sqrt() / den)
}

/// Construction constants for grid collections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridTileParams {
    pub c0: f64,
    /// `|ω_{P_i}| <= filter · |J^i|`.
    pub filter: f64,
    pub dilation: f64,
    /// Number of sparse classes kept, each a separate collection.
    pub classes: usize,
    /// Smallest admissible `|I|` in grid steps.
    pub min_samples: usize,
}

impl Default for GridTileParams {
    fn default() -> Self {
        GridTileParams {
            c0: 2.0,
            filter: 1.0,
            dilation: 4.0,
            classes: 1,
            min_samples: 8,
        }
    }
}

/// Multi-tiles of one parameter μ and one sparse class on the unit grid.
#[derive(Clone, Debug)]
pub struct GridCollection {
    pub mu: u32,
    pub class: usize,
    pub slope: f64,
    /// `J^i = I^i - base_i`.
    pub windows: [Interval; 3],
    pub cubes: Vec<WhitneyCube3>,
    pub tiles: Vec<MultiTile>,
    pub dilation: f64,
}

impl GridCollection {
    pub fn all(&self) -> Vec<usize> {
        (0..self.tiles.len()).collect()
    }
}

/// First greedy sparse classes, in `(j, u)` order.
pub fn sparse_classes(cubes: &[WhitneyCube3], j_gap: u32, count: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..cubes.len()).collect();
    order.sort_by_key(|&i| cubes[i]);
    let mut out = Vec::new();
    for _ in 0..count {
        let mut class: Vec<usize> = Vec::new();
        let mut rest = Vec::new();
        for &i in &order {
            if class.iter().all(|&k| crate::timefreq::sparse_violation(cubes, &[i, k], j_gap).is_none()) {
                class.push(i);
            } else {
                rest.push(i);
            }
        }
        if class.is_empty() {
            break;
        }
        out.push(class);
        order = rest;
    }
    out
}

/// Grid collections of `μ`: Whitney cubes (scale gap 1) whose sheared boxes
/// pass the frequency filter against `J^i`, split into sparse classes, with
/// every dyadic spatial interval of the matching length.
pub fn grid_collections(line: &LineData, spec: &GridSpec, p: &GridTileParams) -> Result<Vec<GridCollection>> {
    if spec.origin != 0.0 || spec.length != 1.0 {
        return Err(Error::GridMismatch("grid collections live on [0, 1)".into()));
    }
    let s = line.slope;
    let v = direction(s);
    let windows: [Interval; 3] = std::array::from_fn(|i| line.intervals[i].shift(-(line.base[i] as f64)));
    for (i, w) in windows.iter().enumerate() {
        if !w.contains(0.0) {
            return Err(Error::Contract(format!("window {i} {w} misses the origin")));
        }
    }
    let rescaled: [Interval; 3] = std::array::from_fn(|i| windows[i].scaled(1.0 / v[i]));
    let mut cubes = Vec::new();
    let mut j = 0i32;
    loop {
        let side = 2f64.powi(j);
        if side > p.filter * windows[0].len() || (spec.n as f64 / side) < p.min_samples as f64 {
            break;
        }
        let tilde: [Interval; 3] = std::array::from_fn(|i| Interval::new(rescaled[i].lo - side, rescaled[i].hi + side));
        for q in crate::timefreq::whitney_cubes3(p.c0, &[j], 0, tilde) {
            let b = sheared_box(&q, s);
            if (0..3).all(|i| b[i].intersects(&windows[i]) && b[i].len() <= p.filter * windows[i].len()) {
                cubes.push(q);
            }
        }
        j += 1;
    }
    let mut out = Vec::new();
    for (c, class) in sparse_classes(&cubes, 1, p.classes).into_iter().enumerate() {
        let chosen: Vec<WhitneyCube3> = class.iter().map(|&i| cubes[i]).collect();
        let bars: Vec<[Interval; 3]> = chosen.iter().map(|q| std::array::from_fn(|i| q.omega(i).dilate(p.dilation))).collect();
        let all: Vec<usize> = (0..chosen.len()).collect();
        let tiles = build_multitiles(line.mu, s, &chosen, &all, &bars, Interval::new(0.0, 1.0), 1)?;
        out.push(GridCollection {
            mu: line.mu,
            class: c,
            slope: s,
            windows,
            cubes: chosen,
            tiles,
            dilation: p.dilation,
        });
    }
    Ok(out)
}

/// Tiles of one sparse class of Whitney cubes at the given scales whose
/// centers lie within `reach` of the origin along the diagonal, every
/// dyadic spatial interval of the matching length on `[0, 1)`.
pub fn diagonal_collection(slope: f64, scales: &[i32], reach: f64, p: &GridTileParams) -> Result<GridCollection> {
    if !(reach > 0.0) {
        return Err(invalid("reach", "must be positive"));
    }
    let window = [Interval::new(-reach, reach); 3];
    let cubes = crate::timefreq::whitney_cubes3(p.c0, scales, 0, window);
    let class = sparse_classes(&cubes, 1, 1).into_iter().next().unwrap_or_default();
    let chosen: Vec<WhitneyCube3> = class.iter().map(|&i| cubes[i]).collect();
    let bars: Vec<[Interval; 3]> = chosen.iter().map(|q| std::array::from_fn(|i| q.omega(i).dilate(p.dilation))).collect();
    let all: Vec<usize> = (0..chosen.len()).collect();
    let tiles = build_multitiles(1, slope, &chosen, &all, &bars, Interval::new(0.0, 1.0), 1)?;
    let v = direction(slope);
    Ok(GridCollection {
        mu: 1,
        class: 0,
        slope,
        windows: std::array::from_fn(|i| window[i].scaled(v[i])),
        cubes: chosen,
        tiles,
        dilation: p.dilation,
    })
}

/// `size*_3` of each exceptional layer `l = 1..=layers` and the fitted decay rate.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub spatial_n: u32,
    /// `(l, tiles in layer, size*_3)`.
    pub layers: Vec<(usize, usize, f64)>,
    pub rate: Option<f64>,
    /// Pairs of distinct-scale tiles with nested intervals inside a layer `l >= 1`.
    pub nested_pairs: usize,
    /// Greedy trees with more than one tile in layers `l >= 1`.
    pub multi_tile_trees: usize,
}

pub fn layer_decay(col: &GridCollection, omega: &IntervalUnion, f3: &GridFunction, family: &SizeFamily, layers: usize) -> Result<DecayReport> {
    let spec = *f3.spec();
    let all = col.all();
    let split = exceptional_layers(omega, &col.tiles, &all, &spec);
    let oracle = SizeOracle::new(&col.tiles, f3, 2, col.slope, family.clone())?;
    let floor = 1e-12 * f3.max_abs().max(1e-300);
    let mut rep = DecayReport {
        spatial_n: family.spatial_n,
        layers: Vec::new(),
        rate: None,
        nested_pairs: 0,
        multi_tile_trees: 0,
    };
    for l in 1..=layers {
        let members = split.layers.get(l).cloned().unwrap_or_default();
        let size = if members.is_empty() {
            0.0
        } else {
            max_size(&oracle, &members, col.dilation).size
        };
        if distinct_scales_disjoint(&col.tiles, &members).is_some() {
            rep.nested_pairs += 1;
        }
        if !members.is_empty() {
            let trees = crate::timefreq::greedy_select(&col.tiles, &members, col.dilation)?;
            rep.multi_tile_trees += trees.iter().filter(|t| t.members.len() > 1).count();
        }
        rep.layers.push((l, members.len(), size));
    }
    let pts: Vec<(usize, f64)> = rep.layers.iter().filter(|x| x.2 > floor).map(|x| (x.0, x.2)).collect();
    rep.rate = fit_decay(&pts);
    Ok(rep)
}

/// `χ_{I,j}` smoothing kernels per spatial scale.
pub struct CutoffBank {
    spec: GridSpec,
    spatial_n: u32,
    bandwidth: f64,
    kernels: RefCell<BTreeMap<i32, CutoffKernel>>,
}

impl CutoffBank {
    /// `Ξ` with spectrum in `[-2^{-2J}, 2^{-2J}]` and decay `N²`, dilated to `|I|`.
    pub fn new(spec: GridSpec, spatial_n: u32, j_gap: u32) -> Self {
        CutoffBank {
            spec,
            spatial_n,
            bandwidth: 2f64.powi(-2 * j_gap as i32),
            kernels: RefCell::new(BTreeMap::new()),
        }
    }

    fn smooth(&self, e: i32, g: &GridFunction) -> Result<GridFunction> {
        let mut map = self.kernels.borrow_mut();
        if !map.contains_key(&e) {
            let kernel = XiKernel::for_spatial_parameter(self.spatial_n, self.bandwidth);
            map.insert(e, CutoffKernel::new(self.spec, kernel, 2f64.powi(-e))?);
        }
        map[&e].smooth(g)
    }

    /// Sampled `χ_{I,j}`.
    pub fn cutoff(&self, iv: &DyInterval) -> Result<GridFunction> {
        let ind = crate::grid::indicator(&self.spec, &IntervalUnion::single(iv.interval()));
        self.smooth(iv.e, &ind)
    }
}

/// `∫ χ_{I_p, j_p} Π_i π_{ω_{P_i}} g_i` for every member, with `π_ω` the
/// adapted bump on `ω`; tiles of one box share the frequency projections.
pub fn tile_integrals(tiles: &[MultiTile], members: &[usize], g: [&GridFunction; 3], bank: &CutoffBank) -> Result<Vec<C64>> {
    let spec = *g[0].spec();
    let mut by_cube: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &p) in members.iter().enumerate() {
        by_cube.entry(tiles[p].cube).or_default().push(k);
    }
    let mut out = vec![C64::new(0.0, 0.0); members.len()];
    for ks in by_cube.values() {
        let t0 = &tiles[members[ks[0]]];
        let mut prod = smooth_restrict(g[0], &AdaptedBump::on(t0.omega[0]));
        for i in 1..3 {
            prod = prod.mul(&smooth_restrict(g[i], &AdaptedBump::on(t0.omega[i])))?;
        }
        let smoothed = bank.smooth(t0.interval.e, &prod)?;
        for &k in ks {
            let iv = tiles[members[k]].interval;
            let s: C64 = (0..spec.n)
                .filter(|&x| {
                    let x = spec.x(x);
                    x >= iv.lo() && x < iv.hi()
                })
                .map(|x| smoothed.samples()[x])
                .sum();
            out[k] = s * spec.step();
        }
    }
    Ok(out)
}

/// The three functions `M_{ξ_μ} f^i_μ`.
pub fn localized_inputs(line: &LineData, f: [&GridFunction; 3]) -> Result<[GridFunction; 3]> {
    let bumps = line.bumps();
    let mut out = Vec::with_capacity(3);
    for i in 0..3 {
        out.push(modulate(&smooth_restrict(f[i], &bumps[i]), line.base[i])?);
    }
    Ok(out.try_into().expect("three"))
}

/// Per-μ model-sum values `|Σ_p ∫ ...|` and their total.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSum {
    pub per_collection: Vec<(u32, usize, f64)>,
    pub total: f64,
}

pub fn model_sum(lines: &[LineData], collections: &[Vec<GridCollection>], f: [&GridFunction; 3], bank: &CutoffBank) -> Result<ModelSum> {
    if lines.len() != collections.len() {
        return Err(invalid("collections", "one entry per line"));
    }
    let mut out = ModelSum {
        per_collection: Vec::new(),
        total: 0.0,
    };
    for (line, cols) in lines.iter().zip(collections) {
        if cols.iter().all(|c| c.tiles.is_empty()) {
            continue;
        }
        let g = localized_inputs(line, f)?;
        for c in cols {
            let v: C64 = tile_integrals(&c.tiles, &c.all(), [&g[0], &g[1], &g[2]], bank)?.into_iter().sum();
            out.per_collection.push((c.mu, c.class, v.norm()));
            out.total += v.norm();
        }
    }
    Ok(out)
}

/// Single-tree comparison `|Σ_T ∫ ...|` against `|I_T| Π size*_i(T)^{θ_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeAudit {
    pub lhs: f64,
    pub sizes: [f64; 3],
    pub rhs: f64,
    pub ratio: f64,
}

pub fn single_tree_audit(
    tiles: &[MultiTile],
    tree: &Tree,
    g: [&GridFunction; 3],
    slope: f64,
    family: &SizeFamily,
    theta: [f64; 3],
    dilation: f64,
    bank: &CutoffBank,
) -> Result<TreeAudit> {
    if theta[0] != 1.0 || !(0.0..1.0).contains(&theta[1]) || !(0.0..1.0).contains(&theta[2]) || theta[1] == 0.0 || theta[2] == 0.0 {
        return Err(invalid("theta", "need theta1 = 1 and 0 < theta2, theta3 < 1"));
    }
    for (i, f) in g.iter().enumerate() {
        if f.max_abs() > 1.0 + 1e-9 {
            return Err(invalid("f", format!("input {} exceeds 1 in sup norm", i + 1)));
        }
    }
    let lhs = tile_integrals(tiles, &tree.members, g, bank)?.into_iter().sum::<C64>().norm();
    let mut sizes = [0.0; 3];
    for i in 0..3 {
        let oracle = SizeOracle::new(tiles, g[i], i, slope, family.clone())?;
        sizes[i] = max_size(&oracle, &tree.members, dilation).size;
    }
    let rhs = tree.top.interval.len() * (0..3).map(|i| sizes[i].powf(theta[i])).product::<f64>();
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(TreeAudit { lhs, sizes, rhs, ratio })
}

/// `T̃ = T ∩ S ∩ S'` audited against the sizes of `T`.
pub fn subtree_audit(
    tiles: &[MultiTile],
    tree: &Tree,
    runs: [&[usize]; 2],
    g: [&GridFunction; 3],
    slope: f64,
    family: &SizeFamily,
    theta: [f64; 3],
    dilation: f64,
    bank: &CutoffBank,
) -> Result<(usize, TreeAudit)> {
    let sub: Vec<usize> = tree
        .members
        .iter()
        .copied()
        .filter(|p| runs[0].contains(p) && runs[1].contains(p))
        .collect();
    let mut audit = single_tree_audit(tiles, tree, g, slope, family, theta, dilation, bank)?;
    audit.lhs = tile_integrals(tiles, &sub, g, bank)?.into_iter().sum::<C64>().norm();
    audit.ratio = if audit.rhs > 0.0 {
        audit.lhs / audit.rhs
    } else if audit.lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok((sub.len(), audit))
}

/// Mean-zero packet `|I|^{-1/2} e^{2πiξx} φ((x - c(I))/|I|)`, `φ(u) ∝ u e^{-πu²}`, periodized.
pub fn packet(spec: &GridSpec, iv: &Interval, xi: f64) -> GridFunction {
    let norm = 2f64.powf(0.75) * (2.0 * std::f64::consts::PI).sqrt();
    let (c, len) = (iv.center(), iv.len());
    GridFunction::from_fn(*spec, |x| {
        let mut d = (x - c).rem_euclid(spec.length);
        if d > spec.length / 2.0 {
            d -= spec.length;
        }
        let u = d / len;
        C64::from_polar(norm * u * (-std::f64::consts::PI * u * u).exp() / len.sqrt(), 2.0 * std::f64::consts::PI * xi * x)
    })
}

/// Both sides of the first-component wave-packet bound for one tree:
/// `size_1(T)` and `(Σ_T |⟨f, ψ_p⟩|² / |I_T|)^{1/2} + inf_{I_T} M_1 f`.
pub fn wave_packet_bound(oracle: &SizeOracle<'_>, top: &TopData, members: &[usize]) -> Result<(f64, f64)> {
    if oracle.component != 0 {
        return Err(invalid("component", "the packet bound concerns the first component"));
    }
    let spec = *oracle.f.spec();
    let xi = oracle.xi(top.t);
    let mut energy = 0.0;
    for &p in members {
        let psi = packet(&spec, &oracle.tiles[p].interval.interval(), xi);
        energy += oracle.f.inner(&psi)?.norm_sqr();
    }
    let m = maximal_1(oracle.f);
    let iv = top.interval;
    let inf = (0..spec.n)
        .filter(|&k| {
            let x = spec.x(k);
            x >= iv.lo() && x < iv.hi()
        })
        .map(|k| m.samples()[k].re)
        .fold(f64::INFINITY, f64::min);
    let inf = if inf.is_finite() { inf } else { 0.0 };
    Ok((oracle.tree_size(top, members), (energy / iv.len()).sqrt() + inf))
}

/// Whether the spatial intervals of tiles with distinct scales are pairwise disjoint.
pub fn distinct_scales_disjoint(tiles: &[MultiTile], members: &[usize]) -> Option<(usize, usize)> {
    for (a, &p) in members.iter().enumerate() {
        for &q in &members[a + 1..] {
            let (ip, iq) = (tiles[p].interval, tiles[q].interval);
            if ip.e != iq.e && (ip.contains(&iq) || iq.contains(&ip)) {
                return Some((p, q));
            }
        }
    }
    None
}

/// Bessel sums of one forest decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct BesselLevel {
    pub n: i32,
    pub trees: usize,
    pub top_length: f64,
}

pub fn bessel_levels(forest: &Forest) -> Vec<BesselLevel> {
    forest
        .levels
        .iter()
        .map(|l| BesselLevel {
            n: l.n,
            trees: l.trees.len(),
            top_length: l.top_length,
        })
        .collect()
}

/// Forest decomposition of a collection against the size of one component,
/// thresholds from just above the maximal size down `depth` halvings.
pub fn size_forest(col: &GridCollection, f: &GridFunction, component: usize, family: &SizeFamily, depth: i32) -> Result<Forest> {
    let all = col.all();
    let oracle = SizeOracle::new(&col.tiles, f, component, col.slope, family.clone())?;
    let top = max_size(&oracle, &all, col.dilation).size;
    if top <= 0.0 {
        return Ok(Forest {
            levels: Vec::new(),
            leftover: all,
        });
    }
    let n0 = (-top.log2()).floor() as i32;
    let size = |t: &TopData, m: &[usize]| oracle.tree_size(t, m);
    crate::timefreq::forest_decompose(&col.tiles, &all, col.dilation, &size, n0..=n0 + depth)
}

/// Least-squares slope of `-log2(value)` against `l`, over positive values.
pub fn fit_decay(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|&(l, v)| (l as f64, -v.log2())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// One line per level: `n trees top_length`.
pub fn write_bessel(levels: &[BesselLevel]) -> String {
    let mut s = String::from("n,trees,top_length\n");
    for l in levels {
        let _ = writeln!(s, "{},{},{:?}", l.n, l.trees, l.top_length);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LacPolygon, WhitneyParams};
    use crate::grid::Ensemble;
    use crate::timefreq::greedy_select;
    use approx::assert_relative_eq;

    fn unit(n: usize) -> GridSpec {
        GridSpec::unit(n).unwrap()
    }

    #[test]
    fn smoothstep_matches_closed_forms() {
        for t in [0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            let k1 = 3.0 * t * t - 2.0 * t * t * t;
            assert_relative_eq!(smoothstep(1, t), k1, epsilon = 1e-14);
        }
        assert_relative_eq!(smoothstep(7, 0.5), 0.5, epsilon = 1e-14);
        let j = smoothstep_jet(2, &Jet::variable(0.3, 3));
        let h = 1e-5;
        let fd = (smoothstep(2, 0.3 + h) - smoothstep(2, 0.3 - h)) / (2.0 * h);
        assert_relative_eq!(j.derivative(1), fd, epsilon = 1e-7);
    }

    #[test]
    fn family_satisfies_constraints() {
        for n in [2, 4, 6] {
            let fam = SizeFamily::new(n, 4, 3).unwrap();
            let omega = Interval::new(10.0, 14.0);
            for m in 0..3 {
                for xi in [12.0, 9.0, 30.0] {
                    let (d, v) = fam.verify(m, &omega, xi, 4000);
                    assert!(d <= 1.0 + 1e-9, "N={n} member {m}: derivative ratio {d}");
                    assert!(v <= 1.0 + 1e-12, "vanishing ratio {v}");
                }
                assert_eq!(fam.value(m, &omega, 12.0, 12.0 + 20.5), 0.0);
                assert_eq!(fam.value(m, &omega, 12.0, 12.0 - 20.5), 0.0);
            }
        }
    }

    #[test]
    fn seminorm_examples() {
        let spec = unit(512);
        let fam = SizeFamily::new(2, 4, 3).unwrap();
        let iv = Interval::new(0.25, 0.5);
        let omega = Interval::centered(40.0, 4.0);
        assert_eq!(tile_seminorm(&GridFunction::zeros(spec), &iv, &omega, 40.0, &fam), 0.0);
        // wave packet at 44 within 10ω, away from ξ_i
        let packet = GridFunction::from_fn(spec, |x| {
            let d = (x - 0.375) / 0.05;
            C64::from_polar((-d * d).exp(), 2.0 * std::f64::consts::PI * 44.0 * x)
        });
        let norm = packet.inner(&packet).unwrap().re.sqrt();
        let v = tile_seminorm(&packet, &iv, &omega, 40.0, &fam);
        assert!(v > 0.0 && v <= norm, "{v} {norm}");
        let one = SizeFamily { members: 1, ..fam.clone() };
        assert!(tile_seminorm(&packet, &iv, &omega, 40.0, &one) <= v);
        let far = GridFunction::mode(spec, 100);
        assert!(tile_seminorm(&far, &iv, &omega, 40.0, &fam) < 1e-12);
    }

    fn poly_line(mu: u32) -> LineData {
        let poly = LacPolygon::new(8).unwrap();
        LineData::from_polygon(&poly, mu, 128.0, &WhitneyParams::default(), 1.0).unwrap()
    }

    fn collection(mu: u32) -> GridCollection {
        grid_collections(&poly_line(mu), &unit(512), &GridTileParams::default()).unwrap().remove(0)
    }

    #[test]
    fn grid_collection_shape() {
        let c = collection(2);
        assert!(!c.tiles.is_empty());
        assert!(crate::timefreq::sparse_violation(&c.cubes, &(0..c.cubes.len()).collect::<Vec<_>>(), 1).is_none());
        for t in &c.tiles {
            assert!((t.interval.len() * t.omega[0].len() - 1.0).abs() < 1e-12);
        }
        let rep = frequency_filter(&c.tiles, &c.windows, 1.0);
        assert_eq!(rep.kept.len(), c.tiles.len());
        let all = c.all();
        assert_eq!(crate::timefreq::is_regular(&c.tiles, &all).unwrap(), None);
    }

    #[test]
    fn filter_removes_disjoint_and_oversized() {
        let c = collection(2);
        let mut t = c.tiles[0].clone();
        t.omega[0] = t.omega[0].shift(1000.0);
        let mut big = c.tiles[0].clone();
        big.omega[1] = big.omega[1].dilate(1000.0);
        let rep = frequency_filter(&[t, big], &c.windows, 1.0);
        assert_eq!((rep.kept.len(), rep.disjoint, rep.oversized), (0, 1, 1));
    }

    #[test]
    fn composition_identity() {
        let spec = unit(1024);
        let line = poly_line(3);
        let f = Ensemble::BandLimited { band: 300 }.draw(4, spec).unwrap().function;
        let c = collection(3);
        for t in c.tiles.iter().take(5) {
            assert!(composition_residual(&f, &line, &t.omega[0]).unwrap() < 1e-12);
        }
    }

    #[test]
    fn single_tile_integral_matches_direct() {
        let spec = unit(512);
        let c = collection(2);
        let bank = CutoffBank::new(spec, 2, 1);
        let p = c.tiles.len() / 2;
        // boxes holding a zero-sum frequency triple
        let mut tiles = c.tiles.clone();
        tiles[p].omega = [Interval::new(-30.0, -26.0), Interval::new(-50.0, -46.0), Interval::new(74.0, 78.0)];
        let t = &tiles[p];
        let g: Vec<GridFunction> = [-28, -48, 76]
            .iter()
            .map(|&k| GridFunction::mode(spec, k).add(&GridFunction::mode(spec, k + 1)).unwrap())
            .collect();
        let got = tile_integrals(&tiles, &[p], [&g[0], &g[1], &g[2]], &bank).unwrap()[0];
        let chi = bank.cutoff(&t.interval).unwrap();
        let mut prod = chi;
        for i in 0..3 {
            prod = prod.mul(&smooth_restrict(&g[i], &AdaptedBump::on(t.omega[i]))).unwrap();
        }
        let want = prod.integral();
        assert!(want.norm() > 1e-3, "{want}");
        assert!((got - want).norm() <= 1e-12 * (1.0 + want.norm()), "{got} {want}");
        let z = GridFunction::zeros(spec);
        assert_eq!(tile_integrals(&tiles, &[p], [&z, &g[1], &g[2]], &bank).unwrap()[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn cutoffs_partition_unity() {
        let spec = unit(256);
        let bank = CutoffBank::new(spec, 2, 1);
        let mut sum = GridFunction::zeros(spec);
        for k in 0..8 {
            sum = sum.add(&bank.cutoff(&DyInterval { e: 3, k }).unwrap()).unwrap();
        }
        for z in sum.samples() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn layers_partition_and_sum_is_linear() {
        let spec = unit(512);
        let c = collection(2);
        let all = c.all();
        let omega = IntervalUnion::single(Interval::new(0.25, 0.75));
        let layers = exceptional_layers(&omega, &c.tiles, &all, &spec);
        assert_eq!(layers.layers.iter().map(|l| l.len()).sum::<usize>(), all.len());
        for &p in &all {
            let l = layers.layer_of(p).unwrap();
            let iv = c.tiles[p].interval.interval();
            if l == 0 {
                assert!(!omega.covers(&iv));
            } else {
                assert!(omega.covers(&iv.dilate(4f64.powi(l as i32 - 1))));
            }
        }
        assert!(layers.layers.len() >= 2);
        let ens = Ensemble::RestrictedType { max_intervals: 3, cells: 64 };
        let f: Vec<GridFunction> = (0..3).map(|k| ens.draw(k, spec).unwrap().function).collect();
        let line = poly_line(2);
        let g = localized_inputs(&line, [&f[0], &f[1], &f[2]]).unwrap();
        let bank = CutoffBank::new(spec, 2, 1);
        let whole: C64 = tile_integrals(&c.tiles, &all, [&g[0], &g[1], &g[2]], &bank).unwrap().into_iter().sum();
        let mut parts = C64::new(0.0, 0.0);
        for l in &layers.layers {
            parts += tile_integrals(&c.tiles, l, [&g[0], &g[1], &g[2]], &bank).unwrap().into_iter().sum::<C64>();
        }
        assert!((whole - parts).norm() <= 1e-12 * (1.0 + whole.norm()));
    }

    #[test]
    fn exceptional_set_examples() {
        let spec = unit(512);
        let big = IntervalUnion::single(Interval::new(0.0, 0.05));
        assert!(exceptional_set(&big, &spec, 100.0).is_empty());
        let small = IntervalUnion::single(Interval::new(0.5, 0.5 + 1.0 / 512.0));
        let om = exceptional_set(&small, &spec, 100.0);
        assert!(om.contains(0.5) && om.measure() < 0.05);
    }

    #[test]
    fn size_monotone_in_collection_and_bounded_by_maximal_function() {
        let spec = unit(512);
        let c = collection(2);
        let all = c.all();
        let fam = SizeFamily::new(2, 4, 3).unwrap();
        let f = Ensemble::RestrictedType { max_intervals: 3, cells: 64 }.draw(9, spec).unwrap().function;
        let oracle = SizeOracle::new(&c.tiles, &f, 0, c.slope, fam.clone()).unwrap();
        let whole = max_size(&oracle, &all, c.dilation);
        let half: Vec<usize> = all.iter().copied().step_by(2).collect();
        let part = max_size(&oracle, &half, c.dilation);
        assert!(part.size <= whole.size + 1e-15);
        assert!(whole.size > 0.0);
        let bound = maximal_bound(&c.tiles, &all, &f);
        assert!(whole.size / bound < 50.0, "{} {}", whole.size, bound);
        assert!(whole.size / f.max_abs() < 50.0);
        let zero = GridFunction::zeros(spec);
        let o0 = SizeOracle::new(&c.tiles, &zero, 0, c.slope, fam).unwrap();
        assert_eq!(max_size(&o0, &all, c.dilation).size, 0.0);
    }

    #[test]
    fn abstract_size_formulations_comparable() {
        let coeffs = vec![
            (DyInterval { e: 2, k: 0 }, 1.0),
            (DyInterval { e: 3, k: 1 }, 0.5),
            (DyInterval { e: 3, k: 4 }, 2.0),
            (DyInterval { e: 1, k: 1 }, 0.3),
        ];
        let (l2, weak) = abstract_sizes(&coeffs);
        assert!(l2 > 0.0 && weak > 0.0);
        let r = l2 / weak;
        assert!((0.1..10.0).contains(&r), "{r}");
        assert_relative_eq!(abstract_sizes(&coeffs[2..3]).0, 2.0 / (0.125f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn forest_and_audit_run() {
        let spec = unit(512);
        let c = collection(2);
        let fam = SizeFamily::new(2, 4, 3).unwrap();
        let ens = Ensemble::RestrictedType { max_intervals: 3, cells: 64 };
        let f: Vec<GridFunction> = (0..3).map(|k| ens.draw(20 + k, spec).unwrap().function).collect();
        let forest = size_forest(&c, &f[0], 0, &fam, 6).unwrap();
        let picked: usize = forest.levels.iter().flat_map(|l| &l.trees).map(|t| t.members.len()).sum();
        assert_eq!(picked + forest.leftover.len(), c.tiles.len());
        assert!(forest.levels.iter().any(|l| !l.trees.is_empty()));
        let zero = GridFunction::zeros(spec);
        let empty = size_forest(&c, &zero, 0, &fam, 3).unwrap();
        assert!(empty.levels.is_empty());
        let trees = greedy_select(&c.tiles, &c.all(), c.dilation).unwrap();
        let bank = CutoffBank::new(spec, 2, 1);
        let audit = single_tree_audit(&c.tiles, &trees[0], [&f[0], &f[1], &f[2]], c.slope, &fam, [1.0, 0.7, 0.7], c.dilation, &bank).unwrap();
        assert!(audit.ratio.is_finite());
        assert!(single_tree_audit(&c.tiles, &trees[0], [&f[0], &f[1], &f[2]], c.slope, &fam, [0.5, 0.7, 0.7], c.dilation, &bank).is_err());
    }

    #[test]
    fn packets_are_normalized_and_mean_zero() {
        let spec = unit(1024);
        let iv = Interval::new(0.25, 0.375);
        let p = packet(&spec, &iv, 0.0);
        assert_relative_eq!(p.inner(&p).unwrap().re, 1.0, epsilon = 1e-9);
        assert!(p.integral().norm() < 1e-12);
        let m = packet(&spec, &iv, 40.0);
        assert_relative_eq!(m.inner(&m).unwrap().re, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn wave_packet_bound_finite() {
        let spec = unit(512);
        let c = collection(2);
        let fam = SizeFamily::new(2, 4, 3).unwrap();
        let f = Ensemble::RestrictedType { max_intervals: 3, cells: 64 }.draw(5, spec).unwrap().function;
        let o = SizeOracle::new(&c.tiles, &f, 0, c.slope, fam.clone()).unwrap();
        let rep = max_size(&o, &c.all(), c.dilation);
        let top = rep.top.unwrap();
        let tree = maximal_tree(&c.tiles, c.all(), &top, c.dilation);
        let (size, rhs) = wave_packet_bound(&o, &top, &tree).unwrap();
        assert!(rhs > 0.0 && size / rhs < 100.0, "{size} {rhs}");
        let o3 = SizeOracle::new(&c.tiles, &f, 2, c.slope, fam).unwrap();
        assert!(wave_packet_bound(&o3, &top, &tree).is_err());
    }

    #[test]
    fn subtree_of_whole_runs_is_the_tree() {
        let spec = unit(512);
        let c = collection(2);
        let fam = SizeFamily::new(2, 4, 3).unwrap();
        let ens = Ensemble::RestrictedType { max_intervals: 3, cells: 64 };
        let f: Vec<GridFunction> = (0..3).map(|k| ens.draw(40 + k, spec).unwrap().function).collect();
        let trees = greedy_select(&c.tiles, &c.all(), c.dilation).unwrap();
        let bank = CutoffBank::new(spec, 2, 1);
        let all = c.all();
        let g = [&f[0], &f[1], &f[2]];
        let full = single_tree_audit(&c.tiles, &trees[0], g, c.slope, &fam, [1.0, 0.7, 0.7], c.dilation, &bank).unwrap();
        let (k, sub) = subtree_audit(&c.tiles, &trees[0], [&all, &all], g, c.slope, &fam, [1.0, 0.7, 0.7], c.dilation, &bank).unwrap();
        assert_eq!(k, trees[0].members.len());
        assert_eq!(sub, full);
        let (k0, empty) = subtree_audit(&c.tiles, &trees[0], [&[], &all], g, c.slope, &fam, [1.0, 0.7, 0.7], c.dilation, &bank).unwrap();
        assert_eq!((k0, empty.lhs), (0, 0.0));
    }

    #[test]
    fn strong_disjointness_detector() {
        let c = collection(2);
        let mut a = c.tiles[0].clone();
        a.interval = DyInterval { e: 2, k: 1 };
        let mut b = a.clone();
        b.interval = DyInterval { e: 3, k: 2 };
        let mut d = a.clone();
        d.interval = DyInterval { e: 3, k: 6 };
        let tiles = vec![a, b, d];
        assert_eq!(distinct_scales_disjoint(&tiles, &[0, 1]), Some((0, 1)));
        assert_eq!(distinct_scales_disjoint(&tiles, &[0, 2]), None);
    }

    #[test]
    fn layered_sizes_decay() {
        let spec = unit(2048);
        let p = GridTileParams::default();
        let col = diagonal_collection(1.0, &[4, 5], 192.0, &p).unwrap();
        assert!(col.tiles.len() > 50, "{}", col.tiles.len());
        let omega = IntervalUnion::single(Interval::new(0.125, 0.875));
        let f3 = GridFunction::from_fn(spec, |x| if omega.contains(x) { C64::new(0.0, 0.0) } else { C64::from_polar(1.0, 7.0 * x) });
        let fam = SizeFamily::new(4, 4, 3).unwrap();
        let rep = layer_decay(&col, &omega, &f3, &fam, 3).unwrap();
        assert!(rep.layers.iter().all(|l| l.1 > 0), "{rep:?}");
        assert!(rep.layers.windows(2).all(|w| w[1].2 < w[0].2), "{rep:?}");
        assert!(rep.rate.unwrap() > 0.0);
    }

    #[test]
    fn decay_fit() {
        let pts: Vec<(usize, f64)> = (0..4).map(|l| (l, 3.0 * 2f64.powi(-5 * l as i32))).collect();
        assert_relative_eq!(fit_decay(&pts).unwrap(), 5.0, epsilon = 1e-12);
        assert!(fit_decay(&pts[..1]).is_none());
    }
}
