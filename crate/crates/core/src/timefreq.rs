//! Three-dimensional Whitney cubes around the diagonal, sparse subfamilies,
//! enlarged frequency intervals, multi-tiles, their order relations, trees,
//! greedy selection and forest decompositions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::interval::Interval;

/// Constants of the tile construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileParams {
    /// Whitney constant: `C0·Q̃` misses the diagonal, `10·C0·Q̃` meets it.
    pub c0: f64,
    /// Scale gap `J`: cube sides and spatial lengths are powers of `2^J`.
    pub j_gap: u32,
    /// Centers lie on `2^{j - shift} Z^3`.
    pub shift: u32,
    /// `ω̄ ⊇ dilation · ω`.
    pub dilation: f64,
    /// Nesting dilation applied to the smaller cube.
    pub nest: f64,
    /// Relative freedom of each `ω̄` endpoint.
    pub slack: f64,
}

impl Default for TileParams {
    fn default() -> Self {
        TileParams {
            c0: 4.0,
            j_gap: 16,
            shift: 10,
            dilation: 1000.0,
            nest: 10.0,
            slack: 0.01,
        }
    }
}

impl TileParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 >= 1.0) {
            return Err(invalid("c0", format!("must be >= 1, got {}", self.c0)));
        }
        if self.j_gap == 0 || self.j_gap > 24 {
            return Err(invalid("j_gap", format!("must be in 1..=24, got {}", self.j_gap)));
        }
        if self.shift > 20 {
            return Err(invalid("shift", "at most 20"));
        }
        if !(self.dilation >= 1.0) || !(self.nest >= 1.0) || !(self.slack >= 0.0 && self.slack < 0.5) {
            return Err(invalid("dilation", "need dilation >= 1, nest >= 1, 0 <= slack < 0.5"));
        }
        Ok(())
    }
}

fn pow2(e: i64) -> f64 {
    2f64.powi(e as i32)
}

/// Cube of side `2^j` centered at `u · 2^{j - shift}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WhitneyCube3 {
    pub j: i32,
    pub u: [i64; 3],
    pub shift: u32,
}

impl WhitneyCube3 {
    pub fn side(&self) -> f64 {
        pow2(self.j as i64)
    }

    pub fn step(&self) -> f64 {
        pow2(self.j as i64 - self.shift as i64)
    }

    pub fn center(&self) -> [f64; 3] {
        self.u.map(|x| x as f64 * self.step())
    }

    pub fn omega(&self, i: usize) -> Interval {
        Interval::centered(self.center()[i], self.side())
    }

    /// Euclidean distance from the center to the diagonal.
    pub fn diagonal_distance(&self) -> f64 {
        let c = self.center();
        let m = (c[0] + c[1] + c[2]) / 3.0;
        c.iter().map(|x| (x - m).powi(2)).sum::<f64>().sqrt()
    }

    /// Whether the `factor`-dilate meets the diagonal: some `t` lies within
    /// half the dilated side of every coordinate.
    pub fn dilate_meets_diagonal(&self, factor: f64) -> bool {
        spread(&self.u) as f64 * self.step() <= factor * self.side()
    }

    pub fn is_whitney(&self, c0: f64) -> bool {
        !self.dilate_meets_diagonal(c0) && self.dilate_meets_diagonal(10.0 * c0)
    }
}

fn spread(u: &[i64; 3]) -> i64 {
    u.iter().max().unwrap() - u.iter().min().unwrap()
}

/// All lattice cubes at the given scales with centers inside `window` and
/// passing both Whitney conditions.
pub fn whitney_cubes3(c0: f64, scales: &[i32], shift: u32, window: [Interval; 3]) -> Vec<WhitneyCube3> {
    let mut out = Vec::new();
    let reach = (10.0 * c0 * pow2(shift as i64)).floor() as i64;
    for &j in scales {
        let step = pow2(j as i64 - shift as i64);
        let range = |w: &Interval| ((w.lo / step).ceil() as i64, (w.hi / step).floor() as i64);
        let (a0, a1) = range(&window[0]);
        let (b0, b1) = range(&window[1]);
        let (c0r, c1r) = range(&window[2]);
        for u0 in a0..=a1 {
            for u1 in b0.max(u0 - reach)..=b1.min(u0 + reach) {
                for u2 in c0r.max(u0 - reach)..=c1r.min(u0 + reach) {
                    let q = WhitneyCube3 { j, u: [u0, u1, u2], shift };
                    if q.is_whitney(c0) {
                        out.push(q);
                    }
                }
            }
        }
    }
    out
}

/// Whether two cubes may share a sparse class.
fn compatible(a: &WhitneyCube3, b: &WhitneyCube3, j_gap: u32) -> bool {
    if a.j != b.j {
        return (a.j - b.j).unsigned_abs() >= j_gap;
    }
    if a == b {
        return true;
    }
    // same side: every coordinate interval must be at distance >= 2^J side
    let sep = ((1i64 << j_gap) + 1) << a.shift;
    (0..3).all(|i| (a.u[i] - b.u[i]).abs() >= sep)
}

/// Partition into sparse classes by greedy coloring in `(j, u)` order.
pub fn sparsify(cubes: &[WhitneyCube3], j_gap: u32) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..cubes.len()).collect();
    order.sort_by_key(|&i| cubes[i]);
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in order {
        let slot = classes.iter().position(|cl| cl.iter().all(|&k| compatible(&cubes[i], &cubes[k], j_gap)));
        match slot {
            Some(c) => classes[c].push(i),
            None => classes.push(vec![i]),
        }
    }
    classes
}

/// First pair violating sparseness inside `class`.
pub fn sparse_violation(cubes: &[WhitneyCube3], class: &[usize], j_gap: u32) -> Option<(usize, usize)> {
    for (x, &a) in class.iter().enumerate() {
        for &b in &class[x + 1..] {
            if !compatible(&cubes[a], &cubes[b], j_gap) {
                return Some((a, b));
            }
        }
    }
    None
}

/// Enlarged intervals `ω̄_i ⊇ dilation·ω_i` with the nesting property
/// between cubes of different sizes.
///
/// Cubes are processed from small to large; each endpoint of a larger cube
/// moves outward to the nearest point not strictly inside the hull of the
/// `nest`-dilates of an already fixed smaller cube.
pub fn enlarge_omegas(cubes: &[WhitneyCube3], params: &TileParams) -> Result<Vec<[Interval; 3]>> {
    params.validate()?;
    let mut order: Vec<usize> = (0..cubes.len()).collect();
    order.sort_by(|&a, &b| cubes[a].j.cmp(&cubes[b].j));
    let mut bars: Vec<Option<[Interval; 3]>> = vec![None; cubes.len()];
    let mut hulls: Vec<(i32, Interval)> = Vec::new();
    for &q in &order {
        let cube = &cubes[q];
        let obstacles: Vec<Interval> = hulls.iter().filter(|h| h.0 < cube.j).map(|h| h.1).collect();
        let mut out = [Interval::new(0.0, 0.0); 3];
        for (i, slot) in out.iter_mut().enumerate() {
            let base = cube.omega(i).dilate(params.dilation);
            let room = params.slack * base.len();
            let mut lo = base.lo;
            loop {
                match obstacles.iter().find(|h| h.lo < lo && lo <= h.hi) {
                    Some(h) => lo = h.lo,
                    None => break,
                }
            }
            let mut hi = base.hi;
            loop {
                match obstacles.iter().find(|h| h.lo <= hi && hi < h.hi) {
                    Some(h) => hi = h.hi,
                    None => break,
                }
            }
            if lo < base.lo - room || hi > base.hi + room {
                return Err(Error::Enlargement {
                    attempts: 1,
                    witness: format!("cube {q} component {i}: no admissible endpoint within {room}"),
                });
            }
            *slot = Interval::new(lo, hi);
        }
        let hull = out.iter().map(|w| w.dilate(params.nest)).reduce(|a, b| a.hull(&b)).unwrap();
        hulls.push((cube.j, hull));
        bars[q] = Some(out);
    }
    let bars: Vec<[Interval; 3]> = bars.into_iter().map(|b| b.expect("every cube processed")).collect();
    if let Some((a, b, i, j)) = nesting_violation(cubes, &bars, params.nest) {
        return Err(Error::Enlargement {
            attempts: 1,
            witness: format!("cubes {a} and {b}: {}·ω̄_{i} meets ω̄'_{j} without nesting", params.nest),
        });
    }
    Ok(bars)
}

/// Exhaustive check of the nesting property; returns `(small, large, i, j)`.
pub fn nesting_violation(cubes: &[WhitneyCube3], bars: &[[Interval; 3]], nest: f64) -> Option<(usize, usize, usize, usize)> {
    for a in 0..cubes.len() {
        let grown = bars[a].map(|w| w.dilate(nest));
        for b in 0..cubes.len() {
            if cubes[a].j >= cubes[b].j {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    if grown[i].intersects(&bars[b][j]) && !grown.iter().all(|g| bars[b][j].contains_interval(g)) {
                        return Some((a, b, i, j));
                    }
                }
            }
        }
    }
    None
}

/// Dyadic interval `[k 2^{-e}, (k+1) 2^{-e})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyInterval {
    pub e: i32,
    pub k: i64,
}

impl DyInterval {
    pub fn len(&self) -> f64 {
        pow2(-(self.e as i64))
    }

    pub fn lo(&self) -> f64 {
        self.k as f64 * self.len()
    }

    pub fn hi(&self) -> f64 {
        (self.k + 1) as f64 * self.len()
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.lo(), self.hi())
    }

    pub fn containing(x: f64, e: i32) -> Self {
        DyInterval {
            e,
            k: (x * pow2(e as i64)).floor() as i64,
        }
    }

    /// Ancestor at the coarser scale `e <= self.e`.
    pub fn ancestor(&self, e: i32) -> Self {
        debug_assert!(e <= self.e);
        DyInterval {
            e,
            k: self.k >> (self.e - e),
        }
    }

    pub fn contains(&self, other: &DyInterval) -> bool {
        other.e >= self.e && other.ancestor(self.e) == *self
    }
}

/// A multi-tile: spatial interval and sheared frequency box of one cube.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTile {
    pub mu: u32,
    /// Index of the generating cube; equal boxes share it.
    pub cube: usize,
    /// Cube scale; `|ω_1| = 2^j` and `|I| = 2^{-j}`.
    pub j: i32,
    pub interval: DyInterval,
    pub omega: [Interval; 3],
    pub omega_bar: [Interval; 3],
}

impl MultiTile {
    /// `j_P` with `2^{-J j_P} = |I|`.
    pub fn scale_index(&self, j_gap: u32) -> i32 {
        self.j / j_gap as i32
    }
}

/// `L_μ` applied to the coordinate intervals of a cube.
pub fn sheared_box(cube: &WhitneyCube3, s: f64) -> [Interval; 3] {
    [cube.omega(0), cube.omega(1).scaled(s), cube.omega(2).scaled(-1.0 - s)]
}

/// All multi-tiles of the cubes in `class`, with spatial intervals inside
/// `window`. Cubes whose scale is not a multiple of `J` are skipped.
pub fn build_multitiles(
    mu: u32,
    s: f64,
    cubes: &[WhitneyCube3],
    class: &[usize],
    bars: &[[Interval; 3]],
    window: Interval,
    j_gap: u32,
) -> Result<Vec<MultiTile>> {
    if !(s > 0.0) {
        return Err(invalid("s", format!("slope must be positive, got {s}")));
    }
    let mut out = Vec::new();
    for &c in class {
        let cube = &cubes[c];
        if cube.j.rem_euclid(j_gap as i32) != 0 {
            continue;
        }
        let e = cube.j;
        let scale = pow2(e as i64);
        let (k0, k1) = ((window.lo * scale).ceil() as i64, (window.hi * scale).floor() as i64);
        for k in k0..k1 {
            out.push(MultiTile {
                mu,
                cube: c,
                j: cube.j,
                interval: DyInterval { e, k },
                omega: sheared_box(cube, s),
                omega_bar: bars[c],
            });
        }
    }
    Ok(out)
}

fn same_mu(a: &MultiTile, b: &MultiTile) -> Result<()> {
    if a.mu != b.mu {
        return Err(Error::Contract(format!("comparing multi-tiles of mu {} and {}", a.mu, b.mu)));
    }
    Ok(())
}

/// `P_i ≤ P'_i`: `I ⊆ I'` and `ω̄ ⊇ ω̄'` for component `i`.
pub fn tile_leq(a: &MultiTile, b: &MultiTile, i: usize) -> bool {
    b.interval.contains(&a.interval) && a.omega_bar[i].contains_interval(&b.omega_bar[i])
}

pub fn order_leq(a: &MultiTile, b: &MultiTile) -> Result<bool> {
    same_mu(a, b)?;
    Ok((0..3).any(|i| tile_leq(a, b, i)))
}

pub fn order_lessdot(a: &MultiTile, b: &MultiTile) -> Result<bool> {
    same_mu(a, b)?;
    Ok((0..3).any(|i| a.omega_bar[i].contains_interval(&b.omega_bar[i])))
}

fn check_single_mu(tiles: &[MultiTile], members: &[usize]) -> Result<()> {
    if let Some(&first) = members.first() {
        if let Some(&bad) = members.iter().find(|&&m| tiles[m].mu != tiles[first].mu) {
            return Err(Error::Contract(format!("tiles {first} and {bad} have different mu")));
        }
    }
    Ok(())
}

/// Supports grouped by box: cube id -> sorted spatial indices.
fn supports(tiles: &[MultiTile], members: &[usize]) -> BTreeMap<usize, (i32, Vec<i64>, usize)> {
    let mut m: BTreeMap<usize, (i32, Vec<i64>, usize)> = BTreeMap::new();
    for &p in members {
        let t = &tiles[p];
        let entry = m.entry(t.cube).or_insert((t.interval.e, Vec::new(), p));
        entry.1.push(t.interval.k);
    }
    for v in m.values_mut() {
        v.1.sort_unstable();
        v.1.dedup();
    }
    m
}

/// Whether the union of `b` (scale `eb`) covers every interval of `a` (scale `ea`).
fn union_covers(ea: i32, a: &[i64], eb: i32, b: &[i64]) -> Option<i64> {
    for &k in a {
        let ok = if eb <= ea {
            b.binary_search(&(k >> (ea - eb))).is_ok()
        } else {
            let d = eb - ea;
            if d >= 62 {
                false
            } else {
                let (lo, hi) = (k << d, (k + 1) << d);
                let start = b.partition_point(|&x| x < lo);
                let end = b.partition_point(|&x| x < hi);
                (end - start) as i64 == hi - lo
            }
        };
        if !ok {
            return Some(k);
        }
    }
    None
}

/// Regularity: `E_{p} ⊆ E_{p'}` whenever `p ⋖ p'`. Returns a witness pair
/// `(p, p')` of member indices on failure.
pub fn is_regular(tiles: &[MultiTile], members: &[usize]) -> Result<Option<(usize, usize)>> {
    check_single_mu(tiles, members)?;
    let sup = supports(tiles, members);
    for (ca, (ea, ka, ra)) in &sup {
        for (cb, (eb, kb, rb)) in &sup {
            if ca == cb {
                continue;
            }
            if !order_lessdot(&tiles[*ra], &tiles[*rb])? {
                continue;
            }
            if let Some(k) = union_covers(*ea, ka, *eb, kb) {
                let p = members
                    .iter()
                    .copied()
                    .find(|&m| tiles[m].cube == *ca && tiles[m].interval.k == k)
                    .unwrap_or(*ra);
                return Ok(Some((p, *rb)));
            }
        }
    }
    Ok(None)
}

/// Top data: a point `L_μ(t, t, t)` of the sheared diagonal and a dyadic interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopData {
    pub t: f64,
    pub interval: DyInterval,
}

impl TopData {
    pub fn xi(&self, s: f64) -> [f64; 3] {
        [self.t, s * self.t, (-1.0 - s) * self.t]
    }

    /// `ω_{i,ξ,I}` of lengths `(1, s, 1 + s) / |I|`.
    pub fn omegas(&self, s: f64) -> [Interval; 3] {
        let xi = self.xi(s);
        let inv = 1.0 / self.interval.len();
        [
            Interval::centered(xi[0], inv),
            Interval::centered(xi[1], s * inv),
            Interval::centered(xi[2], (1.0 + s) * inv),
        ]
    }

    /// `ω̄_{ξ,I} = [t - (dilation/2)/|I|, t + (dilation/2)/|I|]`.
    pub fn omega_bar(&self, dilation: f64) -> Interval {
        Interval::centered(self.t, dilation / self.interval.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub top: TopData,
    pub members: Vec<usize>,
}

/// Members `p` of `pool` with `I_p ⊆ I` and `ω̄_{ξ,I} ⊆ ω̄_{P_i}` for some `i`.
pub fn maximal_tree(tiles: &[MultiTile], pool: impl IntoIterator<Item = usize>, top: &TopData, dilation: f64) -> Vec<usize> {
    let bar = top.omega_bar(dilation);
    // endpoints of a recentered interval may drift by an ulp
    let tol = 1e-12 * (bar.len() + bar.lo.abs().max(bar.hi.abs()));
    pool.into_iter()
        .filter(|&p| {
            let t = &tiles[p];
            top.interval.contains(&t.interval) && t.omega_bar.iter().any(|w| w.lo <= bar.lo + tol && bar.hi <= w.hi + tol)
        })
        .collect()
}

/// Candidate top data in ranking order: coarse intervals first, then `t`,
/// then interval position. Every member contributes the centers of its three
/// `ω̄` and every ancestor of its interval at a tile scale.
pub fn candidate_tops(tiles: &[MultiTile], members: &[usize]) -> Vec<TopData> {
    let mut scales: Vec<i32> = members.iter().map(|&p| tiles[p].interval.e).collect();
    scales.sort_unstable();
    scales.dedup();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &p in members {
        let t = &tiles[p];
        for w in &t.omega_bar {
            for &e in scales.iter().filter(|&&e| e <= t.interval.e) {
                let top = TopData {
                    t: w.center(),
                    interval: t.interval.ancestor(e),
                };
                if seen.insert((top.t.to_bits(), top.interval)) {
                    out.push(top);
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.interval
            .e
            .cmp(&b.interval.e)
            .then(a.t.total_cmp(&b.t))
            .then(a.interval.k.cmp(&b.interval.k))
    });
    out
}

/// Greedy selection: each candidate in ranking order takes the maximal tree
/// of the tiles still unselected.
pub fn greedy_select(tiles: &[MultiTile], members: &[usize], dilation: f64) -> Result<Vec<Tree>> {
    check_single_mu(tiles, members)?;
    let mut alive: Vec<usize> = members.to_vec();
    let mut trees = Vec::new();
    for top in candidate_tops(tiles, members) {
        if alive.is_empty() {
            break;
        }
        let t = maximal_tree(tiles, alive.iter().copied(), &top, dilation);
        if !t.is_empty() {
            let taken: HashSet<usize> = t.iter().copied().collect();
            alive.retain(|p| !taken.contains(p));
            trees.push(Tree { top, members: t });
        }
    }
    if !alive.is_empty() {
        return Err(Error::Contract(format!("{} tiles left unselected", alive.len())));
    }
    Ok(trees)
}

/// Triples `(p', p'', p)` with `p' ≤ p'' ≤ p`, strictly increasing `|I|`,
/// `p, p'` in a union `S` of consecutive selected trees and `p''` outside it.
///
/// For a triple this happens for some consecutive range iff the selection
/// index of `p''` lies outside the closed range spanned by those of `p'` and `p`.
pub fn consecutive_union_violations(tiles: &[MultiTile], universe: &[usize], trees: &[Tree]) -> Result<Vec<(usize, usize, usize)>> {
    check_single_mu(tiles, universe)?;
    let mut sigma: HashMap<usize, usize> = HashMap::new();
    for (k, t) in trees.iter().enumerate() {
        for &p in &t.members {
            sigma.insert(p, k);
        }
    }
    let n = universe.len();
    let mut leq = vec![false; n * n];
    for a in 0..n {
        for b in 0..n {
            leq[a * n + b] = a != b && order_leq(&tiles[universe[a]], &tiles[universe[b]])?;
        }
    }
    let len = |x: usize| tiles[universe[x]].interval.len();
    let mut out = Vec::new();
    for mid in 0..n {
        for lo in 0..n {
            if !leq[lo * n + mid] || len(lo) >= len(mid) {
                continue;
            }
            for hi in 0..n {
                if !leq[mid * n + hi] || len(mid) >= len(hi) {
                    continue;
                }
                let (Some(&a), Some(&b)) = (sigma.get(&universe[lo]), sigma.get(&universe[hi])) else {
                    continue;
                };
                let inside = sigma.get(&universe[mid]).is_some_and(|&c| a.min(b) <= c && c <= a.max(b));
                if !inside {
                    out.push((universe[lo], universe[mid], universe[hi]));
                }
            }
        }
    }
    Ok(out)
}

/// Parts of `T ∩ S ∩ S'` under its `≤`-maximal tiles.
#[derive(Clone, Debug, PartialEq)]
pub struct SubtreePartition {
    pub maximal: Vec<usize>,
    pub parts: Vec<Vec<usize>>,
    /// Tiles lying below more than one maximal tile.
    pub shared: usize,
    pub top_length_sum: f64,
}

pub fn subtree_regular_partition(tiles: &[MultiTile], tree: &Tree, s1: &HashSet<usize>, s2: &HashSet<usize>) -> Result<SubtreePartition> {
    let sub: Vec<usize> = tree.members.iter().copied().filter(|p| s1.contains(p) && s2.contains(p)).collect();
    check_single_mu(tiles, &sub)?;
    let mut maximal = Vec::new();
    for &p in &sub {
        let mut top = true;
        for &q in &sub {
            if q != p && order_leq(&tiles[p], &tiles[q])? {
                top = false;
                break;
            }
        }
        if top {
            maximal.push(p);
        }
    }
    let mut parts = vec![Vec::new(); maximal.len()];
    let mut shared = 0;
    for &p in &sub {
        let mut hits = 0;
        for (k, &m) in maximal.iter().enumerate() {
            if p == m || order_leq(&tiles[p], &tiles[m])? {
                if hits == 0 {
                    parts[k].push(p);
                }
                hits += 1;
            }
        }
        if hits > 1 {
            shared += 1;
        }
    }
    let top_length_sum = maximal.iter().map(|&m| tiles[m].interval.len()).fold(0.0, |a, b| a + b);
    Ok(SubtreePartition {
        maximal,
        parts,
        shared,
        top_length_sum,
    })
}

/// Trees selected at threshold `2^{-n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestLevel {
    pub n: i32,
    pub trees: Vec<Tree>,
    /// `Σ_T |I_T|`.
    pub top_length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub levels: Vec<ForestLevel>,
    /// Tiles never selected (every maximal tree below the last threshold).
    pub leftover: Vec<usize>,
}

/// Size-threshold selection: at each `n`, while the first candidate in
/// ranking order whose maximal tree exceeds `2^{-n}` exists, select it.
/// Sizes may only shrink as tiles are removed, so stale values below the
/// threshold are skipped without re-evaluation.
pub fn forest_decompose(
    tiles: &[MultiTile],
    members: &[usize],
    dilation: f64,
    size: &dyn Fn(&TopData, &[usize]) -> f64,
    levels: std::ops::RangeInclusive<i32>,
) -> Result<Forest> {
    if let Some((a, b)) = is_regular(tiles, members)? {
        return Err(Error::NotRegular(format!("tiles {a} and {b} violate support nesting")));
    }
    let tops = candidate_tops(tiles, members);
    let mut cached: Vec<f64> = vec![f64::INFINITY; tops.len()];
    let mut alive: HashSet<usize> = members.iter().copied().collect();
    let mut out = Vec::new();
    for n in levels {
        let thr = pow2(-(n as i64));
        let mut trees = Vec::new();
        let mut c = 0;
        while c < tops.len() {
            if cached[c] <= thr {
                c += 1;
                continue;
            }
            let mut pool: Vec<usize> = alive.iter().copied().collect();
            pool.sort_unstable();
            let t = maximal_tree(tiles, pool, &tops[c], dilation);
            let v = if t.is_empty() { 0.0 } else { size(&tops[c], &t) };
            cached[c] = v;
            if v > thr {
                for p in &t {
                    alive.remove(p);
                }
                trees.push(Tree { top: tops[c], members: t });
            } else {
                c += 1;
            }
        }
        let top_length = trees.iter().map(|t| t.top.interval.len()).fold(0.0, |a, b| a + b);
        out.push(ForestLevel { n, trees, top_length });
    }
    let mut leftover: Vec<usize> = alive.into_iter().collect();
    leftover.sort_unstable();
    Ok(Forest { levels: out, leftover })
}

/// One line per tile: `mu cube j e k` then `ω` and `ω̄` endpoints.
pub fn write_tiles(tiles: &[MultiTile]) -> String {
    let mut s = String::new();
    for t in tiles {
        let _ = write!(s, "{} {} {} {} {}", t.mu, t.cube, t.j, t.interval.e, t.interval.k);
        for w in t.omega.iter().chain(&t.omega_bar) {
            let _ = write!(s, " {:?} {:?}", w.lo, w.hi);
        }
        s.push('\n');
    }
    s
}

pub fn read_tiles(text: &str) -> Result<Vec<MultiTile>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |reason: String| Error::Parse { line: ln + 1, reason };
        if f.len() != 17 {
            return Err(bad(format!("expected 17 fields, found {}", f.len())));
        }
        let int = |i: usize| f[i].parse::<i64>().map_err(|e| bad(format!("field {i}: {e}")));
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| bad(format!("field {i}: {e}")));
        let mut w = [Interval::new(0.0, 0.0); 6];
        for (k, slot) in w.iter_mut().enumerate() {
            let (lo, hi) = (num(5 + 2 * k)?, num(6 + 2 * k)?);
            if !(lo <= hi) {
                return Err(bad(format!("interval {k} is empty")));
            }
            *slot = Interval::new(lo, hi);
        }
        out.push(MultiTile {
            mu: int(0)? as u32,
            cube: int(1)? as usize,
            j: int(2)? as i32,
            interval: DyInterval { e: int(3)? as i32, k: int(4)? },
            omega: [w[0], w[1], w[2]],
            omega_bar: [w[3], w[4], w[5]],
        });
    }
    Ok(out)
}

/// One line per tree: `t e k` then member indices.
pub fn write_forest(forest: &Forest) -> String {
    let mut s = String::new();
    for lvl in &forest.levels {
        let _ = writeln!(s, "level {} {:?}", lvl.n, lvl.top_length);
        for t in &lvl.trees {
            let _ = write!(s, "tree {:?} {} {}", t.top.t, t.top.interval.e, t.top.interval.k);
            for m in &t.members {
                let _ = write!(s, " {m}");
            }
            s.push('\n');
        }
    }
    s
}

/// Settings for seeded random regular collections.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomCollection {
    pub params: TileParams,
    /// Cube scales in units of `J`.
    pub levels: u32,
    pub freq_anchors: usize,
    pub cubes_per_anchor: usize,
    pub spatial_anchors: usize,
    pub max_tiles: usize,
    pub s: f64,
}

impl Default for RandomCollection {
    fn default() -> Self {
        RandomCollection {
            params: TileParams { shift: 0, ..TileParams::default() },
            levels: 3,
            freq_anchors: 8,
            cubes_per_anchor: 2,
            spatial_anchors: 5,
            max_tiles: 200,
            s: 2.0,
        }
    }
}

/// A seeded regular collection of at most `max_tiles` multi-tiles.
///
/// Cubes cluster around a few diagonal frequencies at every scale so that
/// orders between scales occur; spatial intervals are the dyadic intervals
/// containing a few random points. Missing coarse intervals are added until
/// the collection is regular.
pub fn random_regular_collection(seed: u64, cfg: &RandomCollection) -> Result<(Vec<MultiTile>, Vec<WhitneyCube3>)> {
    let p = cfg.params;
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = p.j_gap as i32;
    let top_j = gap * (cfg.levels as i32 - 1);
    // room for same-scale cubes of different anchors to be far apart
    let width = 4.0 * pow2(p.j_gap as i64 + top_j as i64) * cfg.freq_anchors as f64;
    let unit = pow2(p.shift as i64);
    let lo_r = (p.c0 * unit).floor() as i64 + 1;
    let hi_r = (10.0 * p.c0 * unit).floor() as i64;
    let anchors: Vec<f64> = (0..cfg.freq_anchors).map(|_| rng.gen_range(0.0..width)).collect();
    let mut cubes = Vec::new();
    for &t in &anchors {
        for lvl in 0..cfg.levels as i32 {
            let j = lvl * gap;
            let step = pow2(j as i64 - p.shift as i64);
            for _ in 0..cfg.cubes_per_anchor {
                let base = (t / step).round() as i64 + rng.gen_range(-hi_r..=hi_r);
                let r = rng.gen_range(lo_r..=hi_r);
                let mid = rng.gen_range(0..=r);
                let mut u = [base, base + mid, base + r];
                // random coordinate order
                for i in (1..3).rev() {
                    let k = rng.gen_range(0..=i);
                    u.swap(i, k);
                }
                let q = WhitneyCube3 { j, u, shift: p.shift };
                debug_assert!(q.is_whitney(p.c0));
                cubes.push(q);
            }
        }
    }
    cubes.sort();
    cubes.dedup();
    let classes = sparsify(&cubes, p.j_gap);
    let class = classes.into_iter().max_by_key(|c| c.len()).unwrap_or_default();
    let mut chosen: Vec<WhitneyCube3> = class.iter().map(|&i| cubes[i]).collect();
    chosen.truncate((cfg.max_tiles / cfg.spatial_anchors.max(1)).max(1));
    let bars = enlarge_omegas(&chosen, &p)?;
    let points: Vec<f64> = (0..cfg.spatial_anchors).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut set: BTreeMap<(usize, DyInterval), ()> = BTreeMap::new();
    for (c, q) in chosen.iter().enumerate() {
        for &x in &points {
            if rng.gen_bool(0.7) {
                set.insert((c, DyInterval::containing(x, q.j)), ());
            }
        }
    }
    let make = |set: &BTreeMap<(usize, DyInterval), ()>| -> Vec<MultiTile> {
        set.keys()
            .map(|&(c, iv)| MultiTile {
                mu: 1,
                cube: c,
                j: chosen[c].j,
                interval: iv,
                omega: sheared_box(&chosen[c], cfg.s),
                omega_bar: bars[c],
            })
            .collect()
    };
    loop {
        let tiles = make(&set);
        let all: Vec<usize> = (0..tiles.len()).collect();
        match is_regular(&tiles, &all)? {
            None => return Ok((tiles, chosen)),
            Some((a, b)) => {
                let (ta, tb) = (&tiles[a], &tiles[b]);
                if tb.interval.e > ta.interval.e {
                    return Err(Error::Contract("support closure would need finer intervals".into()));
                }
                set.insert((tb.cube, ta.interval.ancestor(tb.interval.e)), ());
            }
        }
    }
}
