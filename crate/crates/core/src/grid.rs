//! Periodic grid functions and the numerical substrate shared by every
//! other module: discrete spectra, `L^p` norms, Hardy–Littlewood maximal
//! functions, modulations, smooth frequency restrictions, adapted bumps and
//! smoothed spatial cutoffs.
//!
//! Conventions: a grid covers `[origin, origin + length)` with `n` samples
//! at spacing `h = length / n`. Spectral coefficients `c_k` are indexed by
//! integer frequencies `k ∈ [-n/2, n/2)` with
//! `f(x) = Σ_k c_k exp(2πi k (x - origin) / length)`, so the physical
//! frequency of bin `k` is `k / length`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::interval::{Interval, IntervalUnion};
use crate::jet::Jet;

pub type C64 = Complex64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Sample positions of a periodic grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub origin: f64,
    pub length: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(origin: f64, length: f64, n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(invalid("n", format!("grid size must be even and >= 2, got {n}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(invalid("length", format!("must be positive, got {length}")));
        }
        Ok(GridSpec { origin, length, n })
    }

    /// Unit-length grid `[0, 1)`.
    pub fn unit(n: usize) -> Result<Self> {
        GridSpec::new(0.0, 1.0, n)
    }

    pub fn step(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn x(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.step()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.x(k))
    }

    /// Integer frequency of FFT slot `k`.
    pub fn freq_of_slot(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// FFT slot of integer frequency `f`, if representable.
    pub fn slot_of_freq(&self, f: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if f >= -half && f < half {
            Some(f.rem_euclid(self.n as i64) as usize)
        } else {
            None
        }
    }

    /// Physical frequency of integer bin `f`.
    pub fn physical(&self, f: i64) -> f64 {
        f as f64 / self.length
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.n == other.n
            && (self.origin - other.origin).abs() < 1e-12
            && (self.length - other.length).abs() < 1e-12
    }
}

/// Complex samples on a periodic grid with a lazily computed spectrum.
#[derive(Clone, Debug)]
pub struct GridFunction {
    spec: GridSpec,
    samples: Vec<C64>,
    spectrum: OnceLock<Vec<C64>>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, samples: Vec<C64>) -> Result<Self> {
        if samples.len() != spec.n {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of size {}",
                samples.len(),
                spec.n
            )));
        }
        Ok(GridFunction {
            spec,
            samples,
            spectrum: OnceLock::new(),
        })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        GridFunction::new(spec, vec![C64::new(0.0, 0.0); spec.n]).expect("sized")
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64) -> C64) -> Self {
        let samples = spec.points().map(f).collect();
        GridFunction::new(spec, samples).expect("sized")
    }

    pub fn from_real_fn(spec: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        GridFunction::from_fn(spec, |x| C64::new(f(x), 0.0))
    }

    /// Build from spectral coefficients in FFT slot order.
    pub fn from_spectrum(spec: GridSpec, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != spec.n {
            return Err(Error::GridMismatch("spectrum length".into()));
        }
        let mut buf = coeffs.clone();
        plan(spec.n, true).process(&mut buf);
        let g = GridFunction::new(spec, buf)?;
        let _ = g.spectrum.set(coeffs);
        Ok(g)
    }

    /// A single Fourier mode `exp(2πi k (x - origin)/length)`.
    pub fn mode(spec: GridSpec, k: i64) -> Self {
        GridFunction::from_fn(spec, |x| {
            C64::from_polar(1.0, 2.0 * PI * k as f64 * (x - spec.origin) / spec.length)
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    /// Spectrum in FFT slot order.
    pub fn spectrum(&self) -> &[C64] {
        self.spectrum.get_or_init(|| {
            let mut buf = self.samples.clone();
            plan(self.spec.n, false).process(&mut buf);
            let scale = 1.0 / self.spec.n as f64;
            buf.iter_mut().for_each(|c| *c *= scale);
            buf
        })
    }

    /// Coefficient of integer frequency `k` (zero if not representable).
    pub fn coeff(&self, k: i64) -> C64 {
        self.spec
            .slot_of_freq(k)
            .map(|s| self.spectrum()[s])
            .unwrap_or_default()
    }

    fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.spec.same_as(&other.spec) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.spec, other.spec)))
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> GridFunction {
        GridFunction::new(self.spec, self.samples.iter().map(|&z| f(z)).collect()).expect("sized")
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(C64, C64) -> C64) -> Result<GridFunction> {
        self.check_same(other)?;
        let s = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| f(a, b))
            .collect();
        GridFunction::new(self.spec, s)
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: C64) -> GridFunction {
        self.map(|z| z * s)
    }

    pub fn conj(&self) -> GridFunction {
        self.map(|z| z.conj())
    }

    pub fn abs(&self) -> GridFunction {
        self.map(|z| C64::new(z.norm(), 0.0))
    }

    /// Riemann-sum integral `Σ f(x_k) h`.
    pub fn integral(&self) -> C64 {
        self.samples.iter().sum::<C64>() * self.spec.step()
    }

    /// Bilinear pairing `∫ f g` (no conjugation).
    pub fn pair(&self, other: &GridFunction) -> Result<C64> {
        self.check_same(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b)
            .sum::<C64>()
            * self.spec.step())
    }

    /// Hermitian inner product `∫ f conj(g)`.
    pub fn inner(&self, other: &GridFunction) -> Result<C64> {
        self.check_same(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b.conj())
            .sum::<C64>()
            * self.spec.step())
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Multiply the spectrum by `m(k)` at each integer frequency `k`.
    pub fn apply_multiplier(&self, m: impl Fn(i64) -> C64) -> GridFunction {
        let spec = self.spec;
        let coeffs = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(s, &c)| c * m(spec.freq_of_slot(s)))
            .collect();
        GridFunction::from_spectrum(spec, coeffs).expect("sized")
    }

    /// Whether every non-negligible coefficient has `|k| <= band`.
    pub fn support_in(&self, band: i64) -> bool {
        let tol = 1e-12 * self.spectrum().iter().map(|c| c.norm()).fold(0.0, f64::max);
        self.spectrum()
            .iter()
            .enumerate()
            .all(|(s, c)| self.spec.freq_of_slot(s).abs() <= band || c.norm() <= tol)
    }
}

/// Discrete `L^p` norm `(Σ |f(x_k)|^p h)^{1/p}`; `p = ∞` gives the max.
pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(invalid("p", format!("exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let h = f.spec().step();
    let s: f64 = f.samples().iter().map(|z| z.norm().powf(p)).sum();
    Ok((s * h).powf(1.0 / p))
}

/// Uncentered Hardy–Littlewood maximal function of `|f|`.
///
/// Samples are treated as cell values on `[x_k, x_k + h)`; the supremum runs
/// over every interval `[x_a, x_b]` (`a < b`, grid endpoints inside the
/// domain) whose closure contains the sample point. Exact in `O(n²)`.
pub fn maximal_1(f: &GridFunction) -> GridFunction {
    let n = f.len();
    let vals: Vec<f64> = f.samples().iter().map(|z| z.norm()).collect();
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] + vals[k];
    }
    let mut best = vec![0.0f64; n];
    let mut suffix = vec![0.0f64; n + 2];
    for a in 0..n {
        // suffix[k] = max_{b >= max(k, a+1)} avg(a, b)
        suffix[n + 1] = f64::NEG_INFINITY;
        for b in (a + 1..=n).rev() {
            let avg = (prefix[b] - prefix[a]) / (b - a) as f64;
            suffix[b] = suffix[b + 1].max(avg);
        }
        // point k in [a, n-1]: intervals [a, b] with b >= k, b > a
        for (k, out) in best.iter_mut().enumerate().skip(a) {
            let lo = k.max(a + 1);
            let v = suffix[lo];
            if v > *out {
                *out = v;
            }
        }
    }
    GridFunction::new(*f.spec(), best.into_iter().map(|v| C64::new(v, 0.0)).collect())
        .expect("sized")
}

/// `M_p f = (M_1 |f|^p)^{1/p}`.
pub fn maximal_fn(f: &GridFunction, p: f64) -> Result<GridFunction> {
    if p.is_nan() || p < 1.0 || p.is_infinite() {
        return Err(invalid("p", format!("maximal exponent must be finite and >= 1, got {p}")));
    }
    let powered = f.map(|z| C64::new(z.norm().powf(p), 0.0));
    Ok(maximal_1(&powered).map(|z| C64::new(z.re.powf(1.0 / p), 0.0)))
}

/// Modulation `M_a` with `\widehat{M_a f}(k) = \hat f(k + a)`, i.e.
/// multiplication by `exp(-2πi a (x - origin)/length)`.
pub fn modulate(f: &GridFunction, a: i64) -> Result<GridFunction> {
    if a == 0 {
        return Ok(f.clone());
    }
    let spec = *f.spec();
    let src = f.spectrum();
    let peak = src.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = 1e-13 * peak;
    let mut out = vec![C64::new(0.0, 0.0); spec.n];
    for (s, &c) in src.iter().enumerate() {
        let m = spec.freq_of_slot(s);
        match spec.slot_of_freq(m - a) {
            Some(t) => out[t] = c,
            None if c.norm() > tol => {
                return Err(Error::BandOverflow(format!(
                    "mode {m} shifted by {a} leaves the band [-{}, {})",
                    spec.n / 2,
                    spec.n / 2
                )))
            }
            None => {}
        }
    }
    GridFunction::from_spectrum(spec, out)
}

/// Smooth frequency restriction: spectrum multiplied by the bump, which is
/// evaluated at physical frequencies `k / length`.
pub fn smooth_restrict(f: &GridFunction, bump: &AdaptedBump) -> GridFunction {
    let spec = *f.spec();
    f.apply_multiplier(|k| C64::new(bump.value(spec.physical(k)), 0.0))
}

/// `C^∞` transition `S(u)`: 0 for `u <= 0`, 1 for `u >= 1`.
pub fn smooth_step_jet(u: &Jet) -> Jet {
    let order = u.order();
    let v = u.value();
    if v <= 1e-3 {
        return Jet::constant(0.0, order);
    }
    if v >= 1.0 - 1e-3 {
        return Jet::constant(1.0, order);
    }
    let a = u.recip().scale(-1.0).exp();
    let one_minus = u.scale(-1.0).offset(1.0);
    let b = one_minus.recip().scale(-1.0).exp();
    let denom = &a + &b;
    &a * &denom.recip()
}

/// Plateau profile on `[-1, 1]`: 1 on `|t| <= plateau`, smooth decay to 0 at `|t| = 1`.
pub fn plateau_jet(t: &Jet, plateau: f64) -> Jet {
    let order = t.order();
    let tv = t.value();
    if tv.abs() <= plateau {
        return Jet::constant(1.0, order);
    }
    if tv.abs() >= 1.0 {
        return Jet::constant(0.0, order);
    }
    let u = if tv > 0.0 {
        t.scale(-1.0).offset(1.0)
    } else {
        t.offset(1.0)
    };
    smooth_step_jet(&u.scale(1.0 / (1.0 - plateau)))
}

/// Smooth bump supported on `[center - width/2, center + width/2]`,
/// `L^p`-normalized by `width^{-1/p}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptedBump {
    pub center: f64,
    pub width: f64,
    pub p: f64,
    pub order: usize,
    pub plateau: f64,
}

impl AdaptedBump {
    /// `L^∞`-normalized bump on `support` with the default plateau fraction.
    pub fn on(support: Interval) -> Self {
        AdaptedBump {
            center: support.center(),
            width: support.len(),
            p: f64::INFINITY,
            order: 4,
            plateau: 0.5,
        }
    }

    pub fn support(&self) -> Interval {
        Interval::centered(self.center, self.width)
    }

    fn normalization(&self) -> f64 {
        if self.p.is_infinite() {
            1.0
        } else {
            self.width.powf(-1.0 / self.p)
        }
    }

    pub fn jet(&self, x: f64, order: usize) -> Jet {
        let half = 0.5 * self.width;
        let t = Jet::variable(x, order).offset(-self.center).scale(1.0 / half);
        plateau_jet(&t, self.plateau).scale(self.normalization())
    }

    pub fn value(&self, x: f64) -> f64 {
        self.jet(x, 0).value()
    }

    pub fn derivative(&self, x: f64, k: usize) -> f64 {
        self.jet(x, k).derivative(k)
    }

    /// Smallest `C` with `|∂^k φ(x)| <= C |I|^{-1/p-k} χ̃_I(x)^M` for all
    /// `k <= order` over `samples` points spread across `3·support`.
    pub fn measured_constant(&self, samples: usize) -> f64 {
        let wide = self.support().dilate(3.0);
        let inv_p = if self.p.is_infinite() { 0.0 } else { 1.0 / self.p };
        let mut c: f64 = 0.0;
        for s in 0..=samples {
            let x = wide.lo + wide.len() * s as f64 / samples as f64;
            let jet = self.jet(x, self.order);
            let chi = 1.0 / (1.0 + (x - self.center).abs() / self.width);
            for k in 0..=self.order {
                let bound = self.width.powf(-inv_p - k as f64) * chi.powi(self.order as i32);
                c = c.max(jet.derivative(k).abs() / bound);
            }
        }
        c
    }
}

/// Positive kernel `Ξ` with compactly supported spectrum: the normalized sum
/// of `sinc^{2m}` at two incommensurate dilations (ratio √2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XiKernel {
    /// Half-power `m`; decay is `(1 + |x|)^{-2m}`.
    pub half_power: u32,
    /// Spectral support is `[-bandwidth, bandwidth]`.
    pub bandwidth: f64,
}

impl XiKernel {
    /// Kernel with decay exponent at least `spatial_n²`.
    pub fn for_spatial_parameter(spatial_n: u32, bandwidth: f64) -> Self {
        let m = (spatial_n * spatial_n).div_ceil(2).max(1);
        XiKernel {
            half_power: m,
            bandwidth,
        }
    }

    pub fn decay_exponent(&self) -> i32 {
        2 * self.half_power as i32
    }

    fn base_rate(&self) -> f64 {
        self.bandwidth / (2f64.sqrt() * self.half_power as f64)
    }

    fn sinc(x: f64) -> f64 {
        if x.abs() < 1e-12 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        }
    }

    /// Unnormalized profile.
    pub fn profile(&self, x: f64) -> f64 {
        let a = self.base_rate();
        let m = 2 * self.half_power as i32;
        Self::sinc(a * x).powi(m) + Self::sinc(2f64.sqrt() * a * x).powi(m)
    }

    /// `∫ profile` by quadrature of `sinc^{2m}`.
    pub fn profile_mass(&self) -> f64 {
        let m = 2 * self.half_power as i32;
        let (lim, steps) = (400.0, 800_000usize);
        let h = 2.0 * lim / steps as f64;
        let s: f64 = (0..=steps)
            .map(|k| {
                let u = -lim + k as f64 * h;
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                w * Self::sinc(u).powi(m)
            })
            .sum::<f64>()
            * h;
        s * (1.0 + 1.0 / 2f64.sqrt()) / self.base_rate()
    }

    /// Smallest `C` with `C^{-1}(1+|x|)^{-2m} <= Ξ(x) <= C(1+|x|)^{-2m}` on `[-radius, radius]`.
    pub fn two_sided_constant(&self, radius: f64, samples: usize) -> f64 {
        let mass = self.profile_mass();
        let e = self.decay_exponent();
        let mut c: f64 = 1.0;
        for s in 0..=samples {
            let x = -radius + 2.0 * radius * s as f64 / samples as f64;
            let xi = self.profile(x) / mass;
            let w = (1.0 + x.abs()).powi(-e);
            c = c.max(xi / w).max(w / xi);
        }
        c
    }
}

/// Convolution with `Ξ_w(x) = w^{-1} Ξ(x / w)` on a periodic grid, with the
/// kernel's discrete mass normalized to one.
#[derive(Clone, Debug)]
pub struct CutoffKernel {
    spec: GridSpec,
    width: f64,
    kernel: XiKernel,
    spectrum: Vec<C64>,
}

impl CutoffKernel {
    pub fn new(spec: GridSpec, kernel: XiKernel, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid("width", "cutoff width must be positive"));
        }
        let h = spec.step();
        let mut samples = vec![C64::new(0.0, 0.0); spec.n];
        // sum periodic images until the tail is negligible
        let images = ((60.0 * width / spec.length).ceil() as i64).clamp(2, 4096);
        for (k, s) in samples.iter_mut().enumerate() {
            let d = k as f64 * h;
            let mut acc = 0.0;
            for j in -images..=images {
                acc += kernel.profile((d + j as f64 * spec.length) / width);
            }
            *s = C64::new(acc, 0.0);
        }
        // the truncated image sum is not symmetric; mirror it
        for k in 1..spec.n.div_ceil(2) {
            samples[spec.n - k] = samples[k];
        }
        let mass: f64 = samples.iter().map(|z| z.re).sum();
        samples.iter_mut().for_each(|z| *z /= mass);
        // circular convolution: (f * k)_j = Σ_i f_i k_{j-i}; spectrum of k times n
        let mut buf = samples;
        plan(spec.n, false).process(&mut buf);
        Ok(CutoffKernel {
            spec,
            width,
            kernel,
            spectrum: buf,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn kernel(&self) -> &XiKernel {
        &self.kernel
    }

    /// Circular convolution `f * Ξ_w`.
    pub fn smooth(&self, f: &GridFunction) -> Result<GridFunction> {
        if !f.spec().same_as(&self.spec) {
            return Err(Error::GridMismatch("cutoff kernel grid".into()));
        }
        let coeffs = f
            .spectrum()
            .iter()
            .zip(&self.spectrum)
            .map(|(a, b)| a * b)
            .collect();
        GridFunction::from_spectrum(self.spec, coeffs)
    }

    pub fn cutoff(&self, set: &IntervalUnion) -> Result<SmoothedCutoff> {
        let chi = indicator(&self.spec, set);
        let values = self.smooth(&chi)?.samples().iter().map(|z| z.re).collect();
        Ok(SmoothedCutoff {
            set: set.clone(),
            width: self.width,
            values,
        })
    }
}

/// Sampled `χ_E * Ξ_w`.
#[derive(Clone, Debug)]
pub struct SmoothedCutoff {
    pub set: IntervalUnion,
    pub width: f64,
    pub values: Vec<f64>,
}

impl SmoothedCutoff {
    pub fn as_function(&self, spec: GridSpec) -> GridFunction {
        GridFunction::new(spec, self.values.iter().map(|&v| C64::new(v, 0.0)).collect())
            .expect("sized")
    }
}

/// `χ_E * Ξ_w` sampled on `spec`.
pub fn smoothed_cutoff(
    set: &IntervalUnion,
    width: f64,
    kernel: XiKernel,
    spec: GridSpec,
) -> Result<SmoothedCutoff> {
    CutoffKernel::new(spec, kernel, width)?.cutoff(set)
}

/// Samples of `χ_E` (half-open membership).
pub fn indicator(spec: &GridSpec, set: &IntervalUnion) -> GridFunction {
    GridFunction::from_real_fn(*spec, |x| if set.contains(x) { 1.0 } else { 0.0 })
}

/// Seeded random test-function ensembles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ensemble {
    /// `|f| = χ_E` for a random finite union `E` of intervals with endpoints
    /// on `cells` equal cells, times a random unimodular phase per cell.
    RestrictedType { max_intervals: usize, cells: usize },
    /// Gaussian spectral coefficients on `|k| <= band`.
    BandLimited { band: i64 },
}

/// A drawn test function together with its defining set (restricted type only).
#[derive(Clone, Debug)]
pub struct Sample {
    pub function: GridFunction,
    pub set: Option<IntervalUnion>,
}

impl Ensemble {
    /// Draw one function. The draw depends only on `(seed, spec.origin,
    /// spec.length)`, so refining `spec.n` samples the same function.
    pub fn draw(&self, seed: u64, spec: GridSpec) -> Result<Sample> {
        self.draw_with(seed, spec, false)
    }

    /// Like [`Ensemble::draw`], but a restricted-type function is replaced by
    /// its exact Fourier projection onto the representable frequencies, so
    /// band-limited pieces of it agree across resolutions.
    pub fn draw_projected(&self, seed: u64, spec: GridSpec) -> Result<Sample> {
        self.draw_with(seed, spec, true)
    }

    fn draw_with(&self, seed: u64, spec: GridSpec, projected: bool) -> Result<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            Ensemble::RestrictedType {
                max_intervals,
                cells,
            } => {
                if max_intervals == 0 || cells < 2 {
                    return Err(invalid("ensemble", "need >= 1 interval and >= 2 cells"));
                }
                let count = rng.gen_range(1..=max_intervals);
                let cell = spec.length / cells as f64;
                let mut pieces = Vec::with_capacity(count);
                for _ in 0..count {
                    let a = rng.gen_range(0..cells);
                    let len = rng.gen_range(1..=(cells / 4).max(1));
                    let b = (a + len).min(cells);
                    pieces.push(Interval::new(
                        spec.origin + a as f64 * cell,
                        spec.origin + b as f64 * cell,
                    ));
                }
                let set = IntervalUnion::new(pieces);
                let phases: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
                if projected {
                    let mut coeffs = vec![C64::new(0.0, 0.0); spec.n];
                    for (slot, c) in coeffs.iter_mut().enumerate() {
                        let k = spec.freq_of_slot(slot) as f64;
                        for (j, ph) in phases.iter().enumerate() {
                            let mid = spec.origin + (j as f64 + 0.5) * cell;
                            if !set.contains(mid) {
                                continue;
                            }
                            // (1/L) ∫ over cell j of e^{-2πik(x - origin)/L}
                            let (a, b) = (j as f64 / cells as f64, (j + 1) as f64 / cells as f64);
                            let v = if k == 0.0 {
                                C64::new(b - a, 0.0)
                            } else {
                                let w = -2.0 * PI * k;
                                (C64::from_polar(1.0, w * b) - C64::from_polar(1.0, w * a)) / C64::new(0.0, w)
                            };
                            *c += C64::from_polar(1.0, *ph) * v;
                        }
                    }
                    return Ok(Sample {
                        function: GridFunction::from_spectrum(spec, coeffs)?,
                        set: Some(set),
                    });
                }
                let function = GridFunction::from_fn(spec, |x| {
                    if set.contains(x) {
                        let c = (((x - spec.origin) / cell).floor() as usize).min(cells - 1);
                        C64::from_polar(1.0, phases[c])
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
                Ok(Sample {
                    function,
                    set: Some(set),
                })
            }
            Ensemble::BandLimited { band } => {
                if band < 0 || band >= (spec.n / 2) as i64 {
                    return Err(Error::BandOverflow(format!(
                        "band {band} not representable on n = {}",
                        spec.n
                    )));
                }
                let mut coeffs = vec![C64::new(0.0, 0.0); spec.n];
                for k in -band..=band {
                    let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
                    let r = (-2.0 * u1.ln()).sqrt();
                    let z = C64::from_polar(r, 2.0 * PI * u2) * std::f64::consts::FRAC_1_SQRT_2;
                    coeffs[spec.slot_of_freq(k).expect("in band")] = z;
                }
                Ok(Sample {
                    function: GridFunction::from_spectrum(spec, coeffs)?,
                    set: None,
                })
            }
        }
    }
}

/// Structured text: header lines `N`, `L`, `origin`, optional `seed`, then
/// `index real imag` triples.
pub fn write_grid_function(f: &GridFunction, seed: Option<u64>) -> String {
    let spec = f.spec();
    let mut out = String::new();
    let _ = writeln!(out, "N {}", spec.n);
    let _ = writeln!(out, "L {:?}", spec.length);
    let _ = writeln!(out, "origin {:?}", spec.origin);
    if let Some(s) = seed {
        let _ = writeln!(out, "seed {s}");
    }
    for (k, z) in f.samples().iter().enumerate() {
        let _ = writeln!(out, "{k} {:?} {:?}", z.re, z.im);
    }
    out
}

/// Inverse of [`write_grid_function`]; returns the function and seed.
pub fn read_grid_function(text: &str) -> Result<(GridFunction, Option<u64>)> {
    let mut n = None;
    let mut length = None;
    let mut origin = 0.0;
    let mut seed = None;
    let mut samples = Vec::new();
    let perr = |line: usize, reason: &str| Error::Parse {
        line,
        reason: reason.to_string(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["N", v] => n = Some(v.parse::<usize>().map_err(|_| perr(i + 1, "bad N"))?),
            ["L", v] => length = Some(v.parse::<f64>().map_err(|_| perr(i + 1, "bad L"))?),
            ["origin", v] => origin = v.parse::<f64>().map_err(|_| perr(i + 1, "bad origin"))?,
            ["seed", v] => seed = Some(v.parse::<u64>().map_err(|_| perr(i + 1, "bad seed"))?),
            [k, re, im] => {
                let k: usize = k.parse().map_err(|_| perr(i + 1, "bad index"))?;
                if k != samples.len() {
                    return Err(perr(i + 1, "indices must be consecutive"));
                }
                let re: f64 = re.parse().map_err(|_| perr(i + 1, "bad real part"))?;
                let im: f64 = im.parse().map_err(|_| perr(i + 1, "bad imaginary part"))?;
                samples.push(C64::new(re, im));
            }
            _ => return Err(perr(i + 1, "unrecognized line")),
        }
    }
    let n = n.ok_or_else(|| perr(0, "missing N"))?;
    let length = length.ok_or_else(|| perr(0, "missing L"))?;
    let spec = GridSpec::new(origin, length, n)?;
    Ok((GridFunction::new(spec, samples)?, seed))
}
