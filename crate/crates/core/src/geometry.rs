//! Lacunary polygon geometry: vertices, trapezoids, Whitney rectangles, the
//! interval families they induce, and the smooth partition of unity.
//!
//! The polygon is stored through its second-quadrant piece, the convex hull of
//! the origin, `v_1 = (0, 1)`, ..., `v_{mu_max+1}` and the closing point
//! `(-1, 0)`. The other quadrants are reflections.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::plateau_jet;
use crate::interval::{Interval, IntervalUnion};
use crate::jet::Jet;

pub type Point = [f64; 2];

const EPS: f64 = 1e-12;

/// Cross product of `b - a` and `p - a`.
fn cross(a: Point, b: Point, p: Point) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Membership in a counterclockwise convex polygon, boundary included.
fn convex_contains(poly: &[Point], p: Point, tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= -tol)
}

/// Closed separating-axis test for two convex polygons.
pub fn convex_intersect(a: &[Point], b: &[Point]) -> bool {
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            let axis = [q[1] - p[1], p[0] - q[0]];
            let proj = |pts: &[Point]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    let d = axis[0] * v[0] + axis[1] * v[1];
                    (lo.min(d), hi.max(d))
                })
            };
            let (alo, ahi) = proj(a);
            let (blo, bhi) = proj(b);
            if ahi < blo || bhi < alo {
                return false;
            }
        }
    }
    true
}

/// Shoelace area of a simple polygon (positive when counterclockwise).
pub fn shoelace(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

/// The four quadrant images of the second-quadrant construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quadrant {
    First,
    Second,
    Third,
    Fourth,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::First, Quadrant::Second, Quadrant::Third, Quadrant::Fourth];

    pub fn index(self) -> u8 {
        match self {
            Quadrant::First => 1,
            Quadrant::Second => 2,
            Quadrant::Third => 3,
            Quadrant::Fourth => 4,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Quadrant::ALL.get(i.wrapping_sub(1) as usize).copied()
    }

    fn signs(self) -> (f64, f64) {
        match self {
            Quadrant::Second => (1.0, 1.0),
            Quadrant::First => (-1.0, 1.0),
            Quadrant::Third => (1.0, -1.0),
            Quadrant::Fourth => (-1.0, -1.0),
        }
    }

    /// Reflection taking the second quadrant to this one (an involution).
    pub fn reflect(self, p: Point) -> Point {
        let (sx, sy) = self.signs();
        [sx * p[0], sy * p[1]]
    }
}

/// Truncated lacunary polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct LacPolygon {
    mu_max: u32,
    /// `v_1, ..., v_{mu_max+1}` in the second quadrant.
    vertices: Vec<Point>,
    /// Counterclockwise boundary of the second-quadrant piece.
    piece: Vec<Point>,
}

/// `v_μ = (cos(π - π 2^{-μ}), sin(π - π 2^{-μ}))`.
pub fn vertex(mu: u32) -> Point {
    let a = PI - PI * 2f64.powi(-(mu as i32));
    [a.cos(), a.sin()]
}

impl LacPolygon {
    pub fn new(mu_max: u32) -> Result<Self> {
        if mu_max < 1 {
            return Err(invalid("mu_max", "must be at least 1"));
        }
        let vertices: Vec<Point> = (1..=mu_max + 1).map(vertex).collect();
        // counterclockwise: origin, v_1, ..., v_{mu_max+1}, (-1,0)
        let mut piece = vec![[0.0, 0.0]];
        piece.extend(vertices.iter().copied());
        piece.push([-1.0, 0.0]);
        Ok(LacPolygon {
            mu_max,
            vertices,
            piece,
        })
    }

    pub fn mu_max(&self) -> u32 {
        self.mu_max
    }

    /// `v_mu`, `1 <= mu <= mu_max + 1`.
    pub fn vertex(&self, mu: u32) -> Result<Point> {
        self.check_vertex(mu)?;
        Ok(self.vertices[mu as usize - 1])
    }

    fn check_vertex(&self, mu: u32) -> Result<()> {
        if mu < 1 || mu > self.mu_max + 1 {
            return Err(invalid("mu", format!("vertex index {mu} outside 1..={}", self.mu_max + 1)));
        }
        Ok(())
    }

    fn check_edge(&self, mu: u32) -> Result<()> {
        if mu < 1 || mu > self.mu_max {
            return Err(invalid("mu", format!("edge index {mu} outside 1..={}", self.mu_max)));
        }
        Ok(())
    }

    /// Vertices of one quadrant image, in the order `v_1, ..., v_{mu_max+1}`.
    pub fn quadrant_vertices(&self, q: Quadrant) -> Vec<Point> {
        self.vertices.iter().map(|&v| q.reflect(v)).collect()
    }

    /// The closing segment from `v_{mu_max+1}` to the axis.
    pub fn closing_edge(&self) -> (Point, Point) {
        (*self.vertices.last().expect("nonempty"), [-1.0, 0.0])
    }

    /// Slope of the chord `l_mu` from `v_mu` to `v_{mu+1}`.
    pub fn edge_slope(&self, mu: u32) -> Result<f64> {
        self.check_edge(mu)?;
        Ok(edge_slope(mu))
    }

    /// Closed membership.
    pub fn contains(&self, p: Point) -> bool {
        convex_contains(&self.piece, [-p[0].abs(), p[1].abs()], EPS)
    }

    /// Points past the ray to `v_{mu_max+1}` that the truncated covers leave
    /// out (their reflection into the second quadrant lies left of the last
    /// staircase box and below that ray).
    pub fn in_truncation(&self, p: Point) -> bool {
        let q = [-p[0].abs(), p[1].abs()];
        let v = *self.vertices.last().expect("nonempty");
        let c = 1.0 - 4f64.powi(-(self.mu_max as i32));
        cross([0.0, 0.0], v, q) >= 0.0 && q[0] < c * v[0]
    }

    pub fn trapezoid(&self, mu: u32) -> Result<Trapezoid> {
        self.check_edge(mu)?;
        Ok(Trapezoid::new(mu))
    }
}

/// Exact chord slope `s_mu = cot(3π 2^{-mu-2})`.
pub fn edge_slope(mu: u32) -> f64 {
    1.0 / (3.0 * PI * 2f64.powi(-(mu as i32) - 2)).tan()
}

/// `T_mu`: the part of the triangle `(0, v_mu, v_{mu+1})` between
/// `(1 - 4^{-mu}) P` and `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trapezoid {
    pub mu: u32,
    /// Counterclockwise: `v_mu`, `v_{mu+1}`, `c v_{mu+1}`, `c v_mu`.
    pub vertices: [Point; 4],
}

impl Trapezoid {
    fn new(mu: u32) -> Self {
        let c = 1.0 - 4f64.powi(-(mu as i32));
        let (a, b) = (vertex(mu), vertex(mu + 1));
        Trapezoid {
            mu,
            vertices: [a, b, [c * b[0], c * b[1]], [c * a[0], c * a[1]]],
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        convex_contains(&self.vertices, p, EPS)
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    /// Distance from `p` to the chord `l_mu` (the outer edge).
    pub fn distance_to_chord(&self, p: Point) -> f64 {
        let (a, b) = (self.vertices[0], self.vertices[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        cross(b, a, p).abs() / len
    }

    /// Whether `p` lies on one of the four bounding segments.
    pub fn on_boundary(&self, p: Point, tol: f64) -> bool {
        (0..4).any(|i| {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % 4]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len);
            (-tol..=1.0 + tol).contains(&t) && cross(a, b, p).abs() / len <= tol
        })
    }
}

/// Closed axis-parallel rectangle `I × J`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect2 {
    pub i: Interval,
    pub j: Interval,
}

impl Rect2 {
    pub fn new(i: Interval, j: Interval) -> Self {
        Rect2 { i, j }
    }

    pub fn centered(c: Point, half: [f64; 2]) -> Self {
        Rect2 {
            i: Interval::new(c[0] - half[0], c[0] + half[0]),
            j: Interval::new(c[1] - half[1], c[1] + half[1]),
        }
    }

    pub fn center(&self) -> Point {
        [self.i.center(), self.j.center()]
    }

    /// Dilation about the center.
    pub fn dilate(&self, factor: f64) -> Self {
        Rect2 {
            i: self.i.dilate(factor),
            j: self.j.dilate(factor),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.i.contains(p[0]) && self.j.contains(p[1])
    }

    /// Counterclockwise corners starting bottom-left.
    pub fn corners(&self) -> [Point; 4] {
        [
            [self.i.lo, self.j.lo],
            [self.i.hi, self.j.lo],
            [self.i.hi, self.j.hi],
            [self.i.lo, self.j.hi],
        ]
    }

    pub fn intersects(&self, other: &Rect2) -> bool {
        self.i.intersects(&other.i) && self.j.intersects(&other.j)
    }

    pub fn reflect(&self, q: Quadrant) -> Self {
        let (sx, sy) = q.signs();
        let flip = |iv: Interval, s: f64| if s < 0.0 { iv.neg() } else { iv };
        Rect2 {
            i: flip(self.i, sx),
            j: flip(self.j, sy),
        }
    }

    /// Canonical bump: tensor product of plateau profiles, 1 on `alpha R`
    /// and vanishing on the boundary of `R`.
    pub fn bump(&self, alpha: f64, p: Point) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        let t = |iv: &Interval, x: f64| (x - iv.center()) / (0.5 * iv.len());
        let f = |u: f64| plateau_jet(&Jet::variable(u, 0), alpha).value();
        f(t(&self.i, p[0])) * f(t(&self.j, p[1]))
    }
}

/// Dyadic square of side `2^j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WhitneySquare2 {
    pub center: Point,
    pub j: i32,
}

impl WhitneySquare2 {
    pub fn side(&self) -> f64 {
        2f64.powi(self.j)
    }

    pub fn rect(&self) -> Rect2 {
        let h = 0.5 * self.side();
        Rect2::centered(self.center, [h, h])
    }

    /// `λS` meets the diagonal iff the center spread is at most `λ` times the side.
    pub fn dilate_meets_diagonal(&self, lambda: f64) -> bool {
        (self.center[0] - self.center[1]).abs() <= lambda * self.side()
    }

    /// `C0 S` misses the diagonal and `4 C0 S` meets it.
    pub fn is_whitney(&self, c0: f64) -> bool {
        !self.dilate_meets_diagonal(c0) && self.dilate_meets_diagonal(4.0 * c0)
    }
}

/// Parameters of the Whitney cover.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WhitneyParams {
    pub c0: f64,
    pub alpha: f64,
    /// Centers lie on `2^{j - shift} Z^2`.
    pub shift: i32,
    /// Scales enumerated below the coarsest admissible one.
    pub depth: u32,
}

impl Default for WhitneyParams {
    fn default() -> Self {
        WhitneyParams {
            c0: 4.0,
            alpha: 0.99,
            shift: 1,
            depth: 6,
        }
    }
}

impl WhitneyParams {
    pub fn validate(&self) -> Result<()> {
        if !(2.0..=16.0).contains(&self.c0) {
            return Err(invalid("c0", format!("must lie in [2, 16], got {}", self.c0)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !(0..=12).contains(&self.shift) {
            return Err(invalid("shift", "lattice shift must lie in 0..=12"));
        }
        Ok(())
    }
}

/// Whitney rectangle `R_{S,mu} = v_mu + L(S)` with `L(a, b) = (-a, -s_mu b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WhitneyRect {
    pub mu: u32,
    pub square: WhitneySquare2,
    pub rect: Rect2,
}

/// Square coordinates for the chord `l_mu`: the chord maps onto the diagonal
/// segment from `(0, 0)` to `(d, d)`.
#[derive(Clone, Debug)]
struct ChordFrame {
    mu: u32,
    base: Point,
    slope: f64,
    trap_q: [Point; 4],
}

impl ChordFrame {
    fn new(mu: u32) -> Self {
        let base = vertex(mu);
        let slope = edge_slope(mu);
        let t = Trapezoid::new(mu);
        let to_q = |p: Point| [base[0] - p[0], (base[1] - p[1]) / slope];
        let trap_q = t.vertices.map(to_q);
        ChordFrame {
            mu,
            base,
            slope,
            trap_q,
        }
    }

    fn to_q(&self, p: Point) -> Point {
        [self.base[0] - p[0], (self.base[1] - p[1]) / self.slope]
    }

    fn rect_of(&self, sq: &WhitneySquare2) -> Rect2 {
        let h = 0.5 * sq.side();
        let (a, b) = (sq.center[0], sq.center[1]);
        Rect2::new(
            Interval::new(self.base[0] - a - h, self.base[0] - a + h),
            Interval::new(self.base[1] - self.slope * (b + h), self.base[1] - self.slope * (b - h)),
        )
    }

    /// Whether `alpha R_{S,mu}` meets `T_mu` (tested in square coordinates).
    fn admits(&self, sq: &WhitneySquare2, alpha: f64) -> bool {
        let corners = sq.rect().dilate(alpha).corners();
        convex_intersect(&corners, &self.trap_q)
    }

    fn make(&self, sq: WhitneySquare2) -> WhitneyRect {
        WhitneyRect {
            mu: self.mu,
            square: sq,
            rect: self.rect_of(&sq),
        }
    }

    /// All admitted rectangles whose `scale`-dilate contains `p`.
    fn containing(&self, p: Point, params: &WhitneyParams, scale: f64) -> Vec<WhitneyRect> {
        let q = self.to_q(p);
        let d = (q[0] - q[1]).abs();
        if d == 0.0 {
            return Vec::new();
        }
        let c0 = params.c0;
        let jlo = (d / (4.0 * c0 + 2.0)).log2().floor() as i32 - 1;
        let jhi = (d / (c0 - 1.0)).log2().ceil() as i32 + 1;
        let mut out = Vec::new();
        for j in jlo..=jhi {
            let side = 2f64.powi(j);
            let step = 2f64.powi(j - params.shift);
            let h = 0.5 * side * scale;
            let range = |x: f64| ((x - h) / step).floor() as i64..=((x + h) / step).ceil() as i64;
            for ia in range(q[0]) {
                for ib in range(q[1]) {
                    let center = [ia as f64 * step, ib as f64 * step];
                    if (q[0] - center[0]).abs() > h || (q[1] - center[1]).abs() > h {
                        continue;
                    }
                    let sq = WhitneySquare2 { center, j };
                    if sq.is_whitney(c0) && self.admits(&sq, params.alpha) {
                        out.push(self.make(sq));
                    }
                }
            }
        }
        out
    }

    /// Finite enumeration over `depth + 1` scales ending at the coarsest
    /// admissible one.
    fn enumerate(&self, params: &WhitneyParams) -> Vec<WhitneyRect> {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        let mut spread: f64 = 0.0;
        for v in &self.trap_q {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
            spread = spread.max((v[0] - v[1]).abs());
        }
        let jtop = (spread / (params.c0 - 1.0)).log2().ceil() as i32 + 1;
        let jbot = jtop - params.depth as i32 - 2;
        let mut out = Vec::new();
        for j in jbot..=jtop {
            let side = 2f64.powi(j);
            let step = 2f64.powi(j - params.shift);
            let (a0, a1) = (((lo[0] - side) / step).floor() as i64, ((hi[0] + side) / step).ceil() as i64);
            let (b0, b1) = (((lo[1] - side) / step).floor() as i64, ((hi[1] + side) / step).ceil() as i64);
            for ia in a0..=a1 {
                for ib in b0..=b1 {
                    let sq = WhitneySquare2 {
                        center: [ia as f64 * step, ib as f64 * step],
                        j,
                    };
                    if sq.is_whitney(params.c0) && self.admits(&sq, params.alpha) {
                        out.push(self.make(sq));
                    }
                }
            }
        }
        out
    }
}

/// Whitney rectangles of the second-quadrant family `mu` over a finite scale range.
pub fn whitney_rectangles(poly: &LacPolygon, mu: u32, params: &WhitneyParams) -> Result<Vec<WhitneyRect>> {
    poly.check_edge(mu)?;
    params.validate()?;
    Ok(ChordFrame::new(mu).enumerate(params))
}

/// Admitted Whitney rectangles of family `mu` whose `scale`-dilate contains `p`
/// (all scales, no truncation).
pub fn whitney_rectangles_at(
    poly: &LacPolygon,
    mu: u32,
    params: &WhitneyParams,
    p: Point,
    scale: f64,
) -> Result<Vec<WhitneyRect>> {
    poly.check_edge(mu)?;
    params.validate()?;
    Ok(ChordFrame::new(mu).containing(p, params, scale))
}

/// Rectangle `R_mu` exactly as the closed-form formula prints it
/// (second quadrant). Its upper corners fall outside the polygon.
pub fn paraproduct_rectangle_literal(mu: u32) -> Result<Rect2> {
    if mu < 2 {
        return Err(invalid("mu", "paraproduct rectangles start at mu = 2"));
    }
    let top = (1.0 - 4f64.powi(-(mu as i32))) * (PI * 2f64.powi(-(mu as i32))).sin();
    Ok(Rect2::new(paraproduct_range(mu), Interval::new(0.0, top)))
}

/// Inner envelope of the trapezoids: the polyline through
/// `c_1 v_1, c_1 v_2, c_2 v_2, c_2 v_3, ...` with `c_mu = 1 - 4^{-mu}`.
fn envelope(mu_max: u32) -> Vec<Point> {
    let mut pts = Vec::new();
    for mu in 1..=mu_max {
        let c = 1.0 - 4f64.powi(-(mu as i32));
        let (a, b) = (vertex(mu), vertex(mu + 1));
        pts.push([c * a[0], c * a[1]]);
        pts.push([c * b[0], c * b[1]]);
    }
    pts
}

fn envelope_max(env: &[Point], a: f64, b: f64) -> f64 {
    let height = |x: f64| {
        for w in env.windows(2) {
            let (p, q) = (w[0], w[1]);
            let (lo, hi) = (p[0].min(q[0]), p[0].max(q[0]));
            if x >= lo && x <= hi {
                if hi == lo {
                    return p[1].min(q[1]);
                }
                let t = (x - p[0]) / (q[0] - p[0]);
                return p[1] + t * (q[1] - p[1]);
            }
        }
        0.0
    };
    let mut m = height(a).max(height(b));
    for v in env {
        if v[0] > a && v[0] < b {
            m = m.max(v[1]);
        }
    }
    m
}

/// Abscissa range `[-(1-4^{-mu}) cos(π 2^{-mu-1}), -(1-4^{1-mu}) cos(π 2^{-mu})]`
/// of the paraproduct region of chord `mu` (defined for `mu >= 1`).
pub fn paraproduct_range(mu: u32) -> Interval {
    let m = mu as i32;
    let lo = -(1.0 - 4f64.powi(-m)) * (PI * 2f64.powi(-m - 1)).cos();
    let hi = -(1.0 - 4f64.powi(1 - m)) * (PI * 2f64.powi(-m)).cos();
    Interval::new(lo, hi)
}

/// Staircase replacement for `R_mu`: the abscissa range split into `steps`
/// boxes, each reaching the highest point of the inner trapezoid envelope
/// over its step, so the boxes contain everything below the envelope.
/// Returns the boxes themselves; the collection member is their
/// `1/alpha`-dilate, so that its `alpha`-dilate is the box.
pub fn paraproduct_boxes(poly: &LacPolygon, mu: u32, steps: usize) -> Result<Vec<Rect2>> {
    poly.check_edge(mu)?;
    if steps == 0 {
        return Err(invalid("steps", "need at least one step"));
    }
    let env = envelope(poly.mu_max);
    let range = paraproduct_range(mu);
    let (lo, hi) = (range.lo, range.hi);
    Ok((0..steps)
        .map(|k| {
            let a = lo + (hi - lo) * k as f64 / steps as f64;
            let b = lo + (hi - lo) * (k + 1) as f64 / steps as f64;
            Rect2::new(Interval::new(a, b), Interval::new(0.0, envelope_max(&env, a, b)))
        })
        .collect())
}

/// Kind of member of the polygon cover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RectKind {
    Central,
    Whitney,
    Paraproduct,
}

impl RectKind {
    pub fn name(self) -> &'static str {
        match self {
            RectKind::Central => "central",
            RectKind::Whitney => "whitney",
            RectKind::Paraproduct => "paraproduct",
        }
    }
}

/// A member of a rectangle collection together with its provenance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Member {
    pub kind: RectKind,
    pub quadrant: Quadrant,
    pub mu: u32,
    pub rect: Rect2,
}

/// A (possibly infinite) collection of closed rectangles over a domain.
pub trait RectCollection: Sync {
    /// Members whose `scale`-dilate contains `p`.
    fn containing(&self, p: Point, scale: f64) -> Vec<Member>;
    /// Membership in the open set being partitioned.
    fn in_domain(&self, p: Point) -> bool;
    /// Points excluded from checks (e.g. truncated regions).
    fn excluded(&self, _p: Point) -> bool {
        false
    }
    fn alpha(&self) -> f64;
}

/// A finite collection over a domain given as a union of closed rectangles
/// (by default the members themselves).
#[derive(Clone, Debug)]
pub struct FiniteCollection {
    pub members: Vec<Member>,
    pub alpha: f64,
    pub domain: Vec<Rect2>,
}

impl FiniteCollection {
    pub fn from_rects(rects: &[Rect2], alpha: f64) -> Self {
        FiniteCollection {
            members: rects
                .iter()
                .map(|&rect| Member {
                    kind: RectKind::Whitney,
                    quadrant: Quadrant::Second,
                    mu: 0,
                    rect,
                })
                .collect(),
            alpha,
            domain: rects.to_vec(),
        }
    }
}

impl RectCollection for FiniteCollection {
    fn containing(&self, p: Point, scale: f64) -> Vec<Member> {
        self.members
            .iter()
            .filter(|m| m.rect.dilate(scale).contains(p))
            .copied()
            .collect()
    }

    fn in_domain(&self, p: Point) -> bool {
        self.domain.iter().any(|r| r.contains(p))
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Shape of the polygon cover beyond the Whitney parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverParams {
    pub whitney: WhitneyParams,
    /// Boxes per staircase.
    pub para_steps: usize,
    /// First chord carrying a staircase.
    pub para_first_mu: u32,
    /// The central square is `central_scale * [-√2/2, √2/2]^2`.
    pub central_scale: f64,
}

impl Default for CoverParams {
    fn default() -> Self {
        CoverParams {
            whitney: WhitneyParams::default(),
            para_steps: 16,
            para_first_mu: 1,
            central_scale: 15.0 / 16.0,
        }
    }
}

impl CoverParams {
    /// The collection exactly as written: full central square, staircases from `mu = 2`.
    pub fn literal_central() -> Self {
        CoverParams {
            para_first_mu: 2,
            central_scale: 1.0,
            ..Default::default()
        }
    }
}

/// The polygon cover: central square, Whitney rectangles of every chord and
/// staircase paraproduct boxes, in all four quadrants.
#[derive(Clone, Debug)]
pub struct LacCover {
    pub polygon: LacPolygon,
    pub params: CoverParams,
    frames: Vec<ChordFrame>,
    /// Second-quadrant collection members (already `1/alpha`-dilated).
    para: Vec<(u32, Rect2)>,
    central: Rect2,
}

impl LacCover {
    pub fn new(polygon: LacPolygon, params: CoverParams) -> Result<Self> {
        params.whitney.validate()?;
        if !(params.central_scale > 0.0 && params.central_scale <= 1.0) {
            return Err(invalid("central_scale", "must lie in (0, 1]"));
        }
        if params.para_first_mu < 1 {
            return Err(invalid("para_first_mu", "must be at least 1"));
        }
        let frames = (1..=polygon.mu_max).map(ChordFrame::new).collect();
        let mut para = Vec::new();
        for mu in params.para_first_mu..=polygon.mu_max {
            for b in paraproduct_boxes(&polygon, mu, params.para_steps)? {
                para.push((mu, b.dilate(1.0 / params.whitney.alpha)));
            }
        }
        let h = params.central_scale * 0.5f64.sqrt();
        Ok(LacCover {
            polygon,
            params,
            frames,
            para,
            central: Rect2::centered([0.0, 0.0], [h, h]),
        })
    }

    /// Second-quadrant paraproduct members.
    pub fn paraproduct_members(&self) -> &[(u32, Rect2)] {
        &self.para
    }

    pub fn central(&self) -> Rect2 {
        self.central
    }
}

impl RectCollection for LacCover {
    fn containing(&self, p: Point, scale: f64) -> Vec<Member> {
        let mut out = Vec::new();
        if self.central.dilate(scale).contains(p) {
            out.push(Member {
                kind: RectKind::Central,
                quadrant: Quadrant::Second,
                mu: 0,
                rect: self.central,
            });
        }
        for quadrant in Quadrant::ALL {
            let pq = quadrant.reflect(p);
            for &(mu, r) in &self.para {
                if r.dilate(scale).contains(pq) {
                    out.push(Member {
                        kind: RectKind::Paraproduct,
                        quadrant,
                        mu,
                        rect: r.reflect(quadrant),
                    });
                }
            }
            for frame in &self.frames {
                for w in frame.containing(pq, &self.params.whitney, scale) {
                    out.push(Member {
                        kind: RectKind::Whitney,
                        quadrant,
                        mu: w.mu,
                        rect: w.rect.reflect(quadrant),
                    });
                }
            }
        }
        out
    }

    fn in_domain(&self, p: Point) -> bool {
        self.polygon.contains(p)
    }

    fn excluded(&self, p: Point) -> bool {
        self.polygon.in_truncation(p)
    }

    fn alpha(&self) -> f64 {
        self.params.whitney.alpha
    }
}

/// Measured hypotheses of the partition-of-unity principle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HypothesisReport {
    pub samples: usize,
    pub excluded: usize,
    /// (1) member corners outside the domain.
    pub containment_failures: usize,
    /// (2) domain samples not in any `alpha R`.
    pub uncovered: usize,
    /// (3) measured maximal overlap.
    pub m1: usize,
    /// (4) measured maximal side ratio among members sharing a sample.
    pub m2: f64,
    pub m1_limit: usize,
    pub m2_limit: f64,
    pub max_residual: f64,
    pub first_witness: Option<(u8, String)>,
    pub kind_counts: [usize; 3],
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.first_witness.is_none()
    }

    fn flag(&mut self, hypothesis: u8, witness: String) {
        if self.first_witness.is_none() {
            self.first_witness = Some((hypothesis, witness));
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples {}", self.samples);
        let _ = writeln!(s, "excluded {}", self.excluded);
        let _ = writeln!(s, "containment_failures {}", self.containment_failures);
        let _ = writeln!(s, "uncovered {}", self.uncovered);
        let _ = writeln!(s, "m1 {} (limit {})", self.m1, self.m1_limit);
        let _ = writeln!(s, "m2 {:.6} (limit {})", self.m2, self.m2_limit);
        let _ = writeln!(s, "max_residual {:e}", self.max_residual);
        let _ = writeln!(
            s,
            "covering_kinds central={} whitney={} paraproduct={}",
            self.kind_counts[0], self.kind_counts[1], self.kind_counts[2]
        );
        if let Some((h, w)) = &self.first_witness {
            let _ = writeln!(s, "violation hypothesis={h} witness={w}");
        }
        s
    }
}

/// Sampled partition functions `psi_R = eta_R / Σ eta`.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    pub alpha: f64,
    pub points: Vec<Point>,
    /// Per point: the members containing it and their `psi` values.
    pub values: Vec<Vec<(Member, f64)>>,
    pub report: HypothesisReport,
}

/// Normalize bump values into partition weights.
pub fn normalize(etas: &[f64]) -> Vec<f64> {
    let s: f64 = etas.iter().sum();
    etas.iter().map(|e| if s > 0.0 { e / s } else { 0.0 }).collect()
}

#[derive(Default)]
struct PointStats {
    excluded: bool,
    containment: usize,
    uncovered: bool,
    overlap: usize,
    ratio: f64,
    residual: f64,
    kind: Option<RectKind>,
    witness: Option<(u8, String)>,
    psi: Vec<(Member, f64)>,
}

fn analyze_point(c: &dyn RectCollection, p: Point) -> PointStats {
    let mut st = PointStats::default();
    if c.excluded(p) {
        st.excluded = true;
        return st;
    }
    let alpha = c.alpha();
    let members = c.containing(p, 1.0);
    st.overlap = members.len();
    for m in &members {
        if let Some(bad) = m.rect.corners().iter().find(|&&k| !c.in_domain(k)) {
            st.containment += 1;
            st.witness.get_or_insert((
                1,
                format!("{} q{} mu={} corner ({:.6}, {:.6})", m.kind.name(), m.quadrant.index(), m.mu, bad[0], bad[1]),
            ));
        }
    }
    let inner = members.iter().find(|m| m.rect.dilate(alpha).contains(p));
    match inner {
        Some(m) => st.kind = Some(m.kind),
        None => {
            st.uncovered = true;
            st.witness
                .get_or_insert((2, format!("({:.9}, {:.9}) in no alpha-dilate", p[0], p[1])));
        }
    }
    for (a, m) in members.iter().enumerate() {
        for n in &members[a + 1..] {
            let ri = m.rect.i.len() / n.rect.i.len();
            let rj = m.rect.j.len() / n.rect.j.len();
            st.ratio = st.ratio.max(ri).max(1.0 / ri).max(rj).max(1.0 / rj);
        }
    }
    let etas: Vec<f64> = members.iter().map(|m| m.rect.bump(alpha, p)).collect();
    let psi = normalize(&etas);
    let total: f64 = psi.iter().sum();
    st.residual = (total - 1.0).abs();
    st.psi = members.into_iter().zip(psi).collect();
    st
}

/// Check the four hypotheses at `points` and sample `psi_R` there.
///
/// Fails with [`Error::Hypothesis`] naming the first violated hypothesis.
pub fn partition_of_unity(
    c: &dyn RectCollection,
    points: &[Point],
    m1_limit: usize,
    m2_limit: f64,
) -> Result<PartitionOfUnity> {
    let pou = sample_partition(c, points, m1_limit, m2_limit);
    match &pou.report.first_witness {
        None => Ok(pou),
        Some((h, w)) => Err(Error::Hypothesis {
            hypothesis: *h,
            witness: w.clone(),
        }),
    }
}

/// As [`partition_of_unity`] but always returns the sampled data and report.
pub fn sample_partition(c: &dyn RectCollection, points: &[Point], m1_limit: usize, m2_limit: f64) -> PartitionOfUnity {
    let stats: Vec<PointStats> = points.par_iter().map(|&p| analyze_point(c, p)).collect();
    let mut report = HypothesisReport {
        m1_limit,
        m2_limit,
        ..Default::default()
    };
    let mut values = Vec::with_capacity(points.len());
    for (st, p) in stats.into_iter().zip(points) {
        if st.excluded {
            report.excluded += 1;
            values.push(Vec::new());
            continue;
        }
        report.samples += 1;
        report.containment_failures += st.containment;
        report.uncovered += st.uncovered as usize;
        report.m1 = report.m1.max(st.overlap);
        report.m2 = report.m2.max(st.ratio);
        if st.uncovered {
            report.max_residual = report.max_residual.max(1.0);
        } else {
            report.max_residual = report.max_residual.max(st.residual);
        }
        if let Some(k) = st.kind {
            report.kind_counts[k as usize] += 1;
        }
        if let Some((h, w)) = st.witness {
            report.flag(h, w);
        }
        if st.overlap > m1_limit {
            report.flag(3, format!("({:.9}, {:.9}) lies in {} rectangles", p[0], p[1], st.overlap));
        }
        if st.ratio >= m2_limit {
            report.flag(4, format!("({:.9}, {:.9}) side ratio {:.3}", p[0], p[1], st.ratio));
        }
        values.push(st.psi);
    }
    PartitionOfUnity {
        alpha: c.alpha(),
        points: points.to_vec(),
        values,
        report,
    }
}

/// Seeded uniform samples from the polygon, avoiding the truncation region.
pub fn sample_interior(poly: &LacPolygon, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if poly.contains(p) && !poly.in_truncation(p) {
            out.push(p);
        }
    }
    out
}

/// The interval families of one chord.
#[derive(Clone, Debug, PartialEq)]
pub struct ChordIntervals {
    pub mu: u32,
    /// `J^1, J^2, J^3` as unions of projections.
    pub j: [IntervalUnion; 3],
    /// `I^i = (1/alpha) hull(J^i)`.
    pub i: [Interval; 3],
    pub rectangles: usize,
}

/// Interval families for a range of chords, with measured overlap counts.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalFamily {
    pub alpha: f64,
    pub chords: Vec<ChordIntervals>,
    /// Maximal number of `I_mu^i` sharing a point, per `i`.
    pub overlap: [usize; 3],
}

fn hull(u: &IntervalUnion) -> Interval {
    let p = u.pieces();
    Interval::new(p.first().map_or(0.0, |i| i.lo), p.last().map_or(0.0, |i| i.hi))
}

/// Maximal number of closed intervals sharing a point (endpoint sweep).
pub fn max_overlap(intervals: &[Interval]) -> usize {
    let mut events: Vec<(f64, i32)> = intervals
        .iter()
        .flat_map(|iv| [(iv.lo, 0), (iv.hi, 1)])
        .collect();
    // opens before closes at equal coordinates: closed intervals
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut cur, mut best) = (0i64, 0i64);
    for (_, kind) in events {
        if kind == 0 {
            cur += 1;
            best = best.max(cur);
        } else {
            cur -= 1;
        }
    }
    best as usize
}

pub fn chord_intervals(poly: &LacPolygon, mu: u32, params: &WhitneyParams) -> Result<ChordIntervals> {
    let rects = whitney_rectangles(poly, mu, params)?;
    let j1 = IntervalUnion::new(rects.iter().map(|r| r.rect.i).collect());
    let j2 = IntervalUnion::new(rects.iter().map(|r| r.rect.j).collect());
    let j3 = IntervalUnion::new(rects.iter().map(|r| r.rect.i.sum(&r.rect.j).neg()).collect());
    let dil = |u: &IntervalUnion| hull(u).dilate(1.0 / params.alpha);
    Ok(ChordIntervals {
        mu,
        i: [dil(&j1), dil(&j2), dil(&j3)],
        j: [j1, j2, j3],
        rectangles: rects.len(),
    })
}

pub fn interval_families(poly: &LacPolygon, mus: std::ops::RangeInclusive<u32>, params: &WhitneyParams) -> Result<IntervalFamily> {
    let chords: Vec<ChordIntervals> = mus
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&mu| chord_intervals(poly, mu, params))
        .collect::<Result<_>>()?;
    let mut overlap = [0; 3];
    for (k, o) in overlap.iter_mut().enumerate() {
        let ivs: Vec<Interval> = chords.iter().map(|c| c.i[k]).collect();
        *o = max_overlap(&ivs);
    }
    Ok(IntervalFamily {
        alpha: params.alpha,
        chords,
        overlap,
    })
}

/// One rectangle per line: `kind quadrant mu I.lo I.hi J.lo J.hi`.
pub fn write_rect_records(members: &[Member]) -> String {
    let mut s = String::new();
    for m in members {
        let _ = writeln!(
            s,
            "{} {} {} {:?} {:?} {:?} {:?}",
            m.kind.name(),
            m.quadrant.index(),
            m.mu,
            m.rect.i.lo,
            m.rect.i.hi,
            m.rect.j.lo,
            m.rect.j.hi
        );
    }
    s
}

pub fn read_rect_records(text: &str) -> Result<Vec<Member>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |r: &str| Error::Parse {
            line: n + 1,
            reason: r.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(perr("expected 7 fields"));
        }
        let kind = match f[0] {
            "central" => RectKind::Central,
            "whitney" => RectKind::Whitney,
            "paraproduct" => RectKind::Paraproduct,
            _ => return Err(perr("unknown kind")),
        };
        let quadrant = f[1]
            .parse::<u8>()
            .ok()
            .and_then(Quadrant::from_index)
            .ok_or_else(|| perr("bad quadrant"))?;
        let mu = f[2].parse().map_err(|_| perr("bad mu"))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| perr("bad endpoint"));
        out.push(Member {
            kind,
            quadrant,
            mu,
            rect: Rect2::new(Interval::new(num(f[3])?, num(f[4])?), Interval::new(num(f[5])?, num(f[6])?)),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn vertices_match_closed_forms() {
        let p = LacPolygon::new(4).unwrap();
        let v1 = p.vertex(1).unwrap();
        assert!(v1[0].abs() < 1e-15 && (v1[1] - 1.0).abs() < 1e-15);
        let v3 = p.vertex(3).unwrap();
        assert_relative_eq!(v3[0], -0.9238795325112867, epsilon = 1e-15);
        assert_relative_eq!(v3[1], 0.3826834323650898, epsilon = 1e-15);
        for q in Quadrant::ALL {
            for v in p.quadrant_vertices(q) {
                assert!((v[0] * v[0] + v[1] * v[1] - 1.0).abs() < 1e-12);
            }
        }
        assert!(LacPolygon::new(0).is_err());
        let v2 = vertex(2);
        assert_eq!(p.quadrant_vertices(Quadrant::Fourth)[1], [-v2[0], -v2[1]]);
        assert_eq!(p.quadrant_vertices(Quadrant::First)[1], [-v2[0], v2[1]]);
    }

    #[test]
    fn slopes_agree_with_vertex_differences() {
        let p = LacPolygon::new(20).unwrap();
        assert_relative_eq!(p.edge_slope(1).unwrap(), 2f64.sqrt() - 1.0, epsilon = 1e-14);
        let (a, b) = (vertex(3), vertex(4));
        let fd = (a[1] - b[1]) / (a[0] - b[0]);
        assert_relative_eq!(p.edge_slope(3).unwrap(), fd, epsilon = 1e-12);
        assert!((p.edge_slope(3).unwrap() - 3.2966).abs() < 1e-4);
        let ratios: Vec<f64> = (1..=20).map(|m| p.edge_slope(m).unwrap() / 2f64.powi(m as i32)).collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(lo > 0.2 && hi < 0.43, "ratio band [{lo}, {hi}]");
        assert!(p.edge_slope(0).is_err() && p.edge_slope(21).is_err());
    }

    #[test]
    fn containment_examples() {
        let p = LacPolygon::new(6).unwrap();
        assert!(p.contains([0.0, 0.0]));
        assert!(!p.contains([2.0, 0.0]));
        let (a, b) = (vertex(3), vertex(4));
        let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        assert!(p.contains(m));
        assert!(!p.contains([m[0] * 1.001, m[1] * 1.001]));
        assert!(p.contains([-m[0], -m[1]]));
    }

    #[test]
    fn trapezoid_examples() {
        let p = LacPolygon::new(8).unwrap();
        for mu in 1..=8 {
            let t = p.trapezoid(mu).unwrap();
            let (a, b) = (vertex(mu), vertex(mu + 1));
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            assert!(t.on_boundary(mid, 1e-14));
            let c = 1.0 - 4f64.powi(-(mu as i32));
            assert!(t.vertices.contains(&[c * a[0], c * a[1]]));
        }
        // area by exact slice quadrature against shoelace
        let t = p.trapezoid(2).unwrap();
        let mut ys: Vec<f64> = t.vertices.iter().map(|v| v[1]).collect();
        ys.sort_by(f64::total_cmp);
        let width = |y: f64| {
            let mut xs = Vec::new();
            for i in 0..4 {
                let (a, b) = (t.vertices[i], t.vertices[(i + 1) % 4]);
                if (a[1] - y) * (b[1] - y) <= 0.0 && a[1] != b[1] {
                    xs.push(a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
                }
            }
            xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let (nodes, weights) = ([-0.5773502691896257, 0.5773502691896257], [1.0, 1.0]);
        let mut area = 0.0;
        for w in ys.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            for (x, wt) in nodes.iter().zip(weights) {
                area += wt * 0.5 * (hi - lo) * width(0.5 * (hi + lo) + 0.5 * (hi - lo) * x);
            }
        }
        assert_relative_eq!(area, t.area(), epsilon = 1e-10);
    }

    #[test]
    fn whitney_square_conditions() {
        let c0 = 4.0;
        // spread 5 with side 1: C0 S misses (4 < 5), 4 C0 S meets (16 >= 5)
        let s = WhitneySquare2 { center: [5.0, 0.0], j: 0 };
        assert!(s.is_whitney(c0));
        assert!(!WhitneySquare2 { center: [1.0, 1.0], j: 0 }.is_whitney(c0));
        assert!(!WhitneySquare2 { center: [40.0, 0.0], j: 0 }.is_whitney(c0));
    }

    #[test]
    fn whitney_rectangles_cover_and_stay_inside() {
        let poly = LacPolygon::new(8).unwrap();
        let params = WhitneyParams::default();
        let rects = whitney_rectangles(&poly, 2, &params).unwrap();
        assert!(!rects.is_empty());
        for r in &rects {
            for c in r.rect.corners() {
                assert!(poly.contains(c), "corner {c:?} of {:?}", r.square);
            }
        }
        let t = poly.trapezoid(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        while checked < 500 {
            let s: f64 = rng.gen();
            let u: f64 = rng.gen();
            let (a, b) = (vertex(2), vertex(3));
            let c = 1.0 - 1.0 / 16.0;
            let outer = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let p = [outer[0] * (c + (1.0 - c) * u), outer[1] * (c + (1.0 - c) * u)];
            if t.distance_to_chord(p) < 1e-12 {
                continue;
            }
            checked += 1;
            let hits = whitney_rectangles_at(&poly, 2, &params, p, params.alpha).unwrap();
            assert!(!hits.is_empty(), "uncovered {p:?}");
        }
    }

    #[test]
    fn literal_paraproduct_rectangle_formula() {
        let r = paraproduct_rectangle_literal(2).unwrap();
        assert_relative_eq!(r.i.lo, -(15.0 / 16.0) * (PI / 8.0).cos(), epsilon = 1e-15);
        assert_relative_eq!(r.i.hi, -(3.0 / 4.0) * (PI / 4.0).cos(), epsilon = 1e-15);
        assert_relative_eq!(r.j.hi, (15.0 / 16.0) * (PI / 4.0).sin(), epsilon = 1e-15);
        for mu in 2..10 {
            let (a, b) = (paraproduct_rectangle_literal(mu).unwrap(), paraproduct_rectangle_literal(mu + 1).unwrap());
            assert_relative_eq!(a.i.lo, b.i.hi, epsilon = 1e-15);
        }
        assert!(paraproduct_rectangle_literal(1).is_err());
        // the printed height overshoots the polygon
        let poly = LacPolygon::new(8).unwrap();
        assert!(!poly.contains([r.i.lo, r.j.hi]));
    }

    #[test]
    fn staircase_boxes_lie_inside() {
        let poly = LacPolygon::new(8).unwrap();
        for mu in 1..=8 {
            for b in paraproduct_boxes(&poly, mu, 16).unwrap() {
                for c in b.dilate(1.0 / 0.99).corners() {
                    assert!(poly.contains(c));
                }
            }
        }
    }

    #[test]
    fn singleton_and_pair_normalization() {
        let r = Rect2::new(Interval::new(0.0, 1.0), Interval::new(0.0, 2.0));
        let c = FiniteCollection::from_rects(&[r], 0.9);
        let pts = [[0.5, 1.0], [0.1, 0.2], [0.94, 1.8]];
        let pou = partition_of_unity(&c, &pts, 4, 10.0).unwrap();
        for v in &pou.values {
            assert_eq!(v.len(), 1);
            assert_relative_eq!(v[0].1, 1.0, epsilon = 1e-15);
        }
        let w = normalize(&[0.5, 0.25]);
        assert_relative_eq!(w[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(w[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn failed_hypothesis_names_witness() {
        let r = Rect2::new(Interval::new(0.0, 1.0), Interval::new(0.0, 1.0));
        let tiny = Rect2::new(Interval::new(0.4, 0.401), Interval::new(0.4, 0.401));
        let c = FiniteCollection::from_rects(&[r, tiny], 0.9);
        match partition_of_unity(&c, &[[0.4005, 0.4005]], 8, 100.0) {
            Err(Error::Hypothesis { hypothesis: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_cover_partition_small() {
        let poly = LacPolygon::new(6).unwrap();
        let cover = LacCover::new(poly.clone(), CoverParams::default()).unwrap();
        let pts = sample_interior(&poly, 1500, 11);
        let pou = sample_partition(&cover, &pts, 64, 1e6);
        let r = &pou.report;
        assert_eq!(r.uncovered, 0, "{}", r.to_text());
        assert_eq!(r.containment_failures, 0, "{}", r.to_text());
        assert!(r.max_residual < 1e-12);
        for v in &pou.values {
            assert!(v.iter().all(|(_, psi)| (0.0..=1.0).contains(psi)));
        }
        // outside the polygon nothing is supported
        let out = cover.containing([0.99, 0.5], 1.0);
        assert!(out.is_empty());
    }

    #[test]
    fn overlap_sweep() {
        let ivs = [Interval::new(0.0, 1.0), Interval::new(1.0, 2.0), Interval::new(0.5, 0.7)];
        assert_eq!(max_overlap(&ivs), 2);
        assert_eq!(max_overlap(&[Interval::new(0.0, 1.0)]), 1);
    }

    #[test]
    fn interval_family_single_rectangle_identity() {
        let poly = LacPolygon::new(4).unwrap();
        let params = WhitneyParams::default();
        let fam = interval_families(&poly, 1..=4, &params).unwrap();
        for ch in &fam.chords {
            for k in 0..3 {
                let h = hull(&ch.j[k]);
                assert!(ch.i[k].contains_interval(&h));
                assert_relative_eq!(ch.i[k].len(), h.len() / params.alpha, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rect_records_round_trip() {
        let m = Member {
            kind: RectKind::Paraproduct,
            quadrant: Quadrant::Third,
            mu: 3,
            rect: Rect2::new(Interval::new(-0.9, -0.8), Interval::new(-0.1, 0.2)),
        };
        let back = read_rect_records(&write_rect_records(&[m])).unwrap();
        assert_eq!(back, vec![m]);
        assert!(read_rect_records("whitney 9 1 0 1 0 1").is_err());
    }

    proptest! {
        #[test]
        fn whitney_acceptance_invariant_under_diagonal_shift(ia in -40i64..40, ib in -40i64..40, j in -3i32..3, t in -20i64..20) {
            let step = 2f64.powi(j - 1);
            let a = WhitneySquare2 { center: [ia as f64 * step, ib as f64 * step], j };
            let b = WhitneySquare2 { center: [(ia + t) as f64 * step, (ib + t) as f64 * step], j };
            prop_assert_eq!(a.is_whitney(4.0), b.is_whitney(4.0));
        }

        #[test]
        fn reflections_preserve_membership(x in -1.2f64..1.2, y in -1.2f64..1.2) {
            let p = LacPolygon::new(5).unwrap();
            for q in Quadrant::ALL {
                prop_assert_eq!(p.contains([x, y]), p.contains(q.reflect([x, y])));
            }
        }
    }
}
