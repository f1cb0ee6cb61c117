//! Declarative experiment configuration (TOML), validation and hashing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bilinear::{HolderTriple, OperatorParams};
use crate::error::{Error, Result};
use crate::geometry::{CoverParams, WhitneyParams};
use crate::grid::{Ensemble, GridSpec};
use crate::sizes::GridTileParams;
use crate::timefreq::{RandomCollection, TileParams};

/// Environment variable overriding `grid.n`.
pub const GRID_N_ENV: &str = "LACUNARY_GRID_N";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    pub seed: u64,
    pub trials: usize,
    pub grid: GridSection,
    pub geometry: GeometrySection,
    pub operator: OperatorSection,
    pub paraproduct: ParaproductSection,
    pub tiles: TilesSection,
    pub sizes: SizesSection,
    pub scan: ScanSection,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub mu_max: u32,
    pub c0: f64,
    pub alpha: f64,
    pub shift: i32,
    pub depth: u32,
    pub para_steps: usize,
    pub para_first_mu: u32,
    pub central_scale: f64,
    pub samples: usize,
    pub m1_limit: usize,
    pub m2_limit: f64,
    /// Overlap is compared between `1..=overlap_base` and `1..=overlap_max`.
    pub overlap_base: u32,
    pub overlap_max: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSection {
    pub name: String,
    pub s: f64,
    /// Polygon radius in frequency bins.
    pub radius: f64,
    pub s_values: Vec<f64>,
    pub band: i64,
    pub pairs: usize,
    /// `None` sums the periodic images in closed form.
    pub images: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParaproductSection {
    /// Integer band of paper frequency 1; defaults to `log2(N/2) - 1`.
    pub k0: Option<i64>,
    pub f_band: i64,
    pub gh_band: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilesSection {
    pub c0: f64,
    pub j_gap: u32,
    pub shift: u32,
    pub dilation: f64,
    pub nest: f64,
    pub slack: f64,
    pub levels: u32,
    pub freq_anchors: usize,
    pub cubes_per_anchor: usize,
    pub spatial_anchors: usize,
    pub max_tiles: usize,
    pub s: f64,
    pub collections: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizesSection {
    /// Spatial decay parameter of the size family and of the cutoffs.
    pub spatial_n: u32,
    pub order: usize,
    pub members: usize,
    /// Plateau half-width of the size family in units of `|ω|`.
    pub flat: f64,
    pub c0: f64,
    pub j_gap: u32,
    pub filter: f64,
    pub dilation: f64,
    pub classes: usize,
    pub min_samples: usize,
    pub slope_floor: f64,
    pub mus: Vec<u32>,
    pub forest_depth: i32,
    pub decay_n: Vec<u32>,
    pub decay_slope: f64,
    pub decay_scales: Vec<i32>,
    pub decay_reach: f64,
    pub decay_layers: usize,
    pub decay_omega: [f64; 2],
    pub decay_cells: usize,
    pub exceptional_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub triples: Vec<[f64; 3]>,
    /// `restricted` or `band-limited`.
    pub ensemble: String,
    pub max_intervals: usize,
    pub cells: usize,
    pub band: i64,
    pub trees: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Diagnostics {
    pub theta: [f64; 3],
    /// Midpoint of the admissible range when absent.
    pub gamma2: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: "partition".into(),
            seed: 0,
            trials: 50,
            grid: GridSection::default(),
            geometry: GeometrySection::default(),
            operator: OperatorSection::default(),
            paraproduct: ParaproductSection::default(),
            tiles: TilesSection::default(),
            sizes: SizesSection::default(),
            scan: ScanSection::default(),
            diagnostics: Diagnostics::default(),
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 512, length: 1.0 }
    }
}

impl Default for GeometrySection {
    fn default() -> Self {
        let w = WhitneyParams::default();
        let c = CoverParams::default();
        GeometrySection {
            mu_max: 8,
            c0: w.c0,
            alpha: w.alpha,
            shift: w.shift,
            depth: w.depth,
            para_steps: c.para_steps,
            para_first_mu: c.para_first_mu,
            central_scale: c.central_scale,
            samples: 10_000,
            m1_limit: 64,
            m2_limit: 1000.0,
            overlap_base: 10,
            overlap_max: 20,
        }
    }
}

impl Default for OperatorSection {
    fn default() -> Self {
        let o = OperatorParams::default();
        OperatorSection {
            name: "lacunary".into(),
            s: o.s,
            radius: o.radius,
            s_values: vec![1.0, 2.0, 5.0],
            band: 16,
            pairs: 20,
            images: None,
        }
    }
}

impl Default for ParaproductSection {
    fn default() -> Self {
        ParaproductSection {
            k0: None,
            f_band: 32,
            gh_band: 64,
        }
    }
}

impl Default for TilesSection {
    fn default() -> Self {
        let r = RandomCollection::default();
        TilesSection {
            c0: r.params.c0,
            j_gap: r.params.j_gap,
            shift: r.params.shift,
            dilation: r.params.dilation,
            nest: r.params.nest,
            slack: r.params.slack,
            levels: r.levels,
            freq_anchors: r.freq_anchors,
            cubes_per_anchor: r.cubes_per_anchor,
            spatial_anchors: r.spatial_anchors,
            max_tiles: r.max_tiles,
            s: r.s,
            collections: 100,
        }
    }
}

impl Default for SizesSection {
    fn default() -> Self {
        let g = GridTileParams::default();
        SizesSection {
            spatial_n: 2,
            order: 4,
            members: 3,
            flat: 1.0,
            c0: g.c0,
            j_gap: 1,
            filter: g.filter,
            dilation: g.dilation,
            classes: g.classes,
            min_samples: g.min_samples,
            slope_floor: 1.0,
            mus: vec![2, 3, 4],
            forest_depth: 6,
            decay_n: vec![2, 4, 6],
            decay_slope: 1.0,
            decay_scales: vec![4, 5],
            decay_reach: 192.0,
            decay_layers: 3,
            decay_omega: [0.125, 0.875],
            decay_cells: 64,
            exceptional_c: 16.0,
        }
    }
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            triples: vec![[1.5, 4.0, 12.0], [5.0 / 3.0, 4.0, 20.0 / 3.0]],
            ensemble: "restricted".into(),
            max_intervals: 3,
            cells: 64,
            band: 16,
            trees: 50,
        }
    }
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            theta: [1.0, 0.7, 0.7],
            gamma2: None,
        }
    }
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Config(reason.into())
}

/// Open interval of admissible `γ2` for a triple and `θ`:
/// `0 < γ2, γ3 < 1/2`, `γ2 + γ3 = 1/p1`, `γ2 > 1/p2`, `2γ_i < θ_i`.
pub fn gamma_range(t: &HolderTriple, theta: [f64; 3]) -> Option<(f64, f64)> {
    let r1 = 1.0 / t.p1;
    let lo = [0.0, 1.0 / t.p2, r1 - 0.5, r1 - theta[2] / 2.0].into_iter().fold(f64::MIN, f64::max);
    let hi = [0.5, theta[1] / 2.0, r1].into_iter().fold(f64::MAX, f64::min);
    (lo < hi).then_some((lo, hi))
}

/// Chosen `(γ2, γ3)` for one triple.
pub fn gammas(t: &HolderTriple, d: &Diagnostics) -> Result<(f64, f64)> {
    let (lo, hi) = gamma_range(t, d.theta)
        .ok_or_else(|| bad(format!("no admissible gamma2 for triple ({}, {}, {}) and theta {:?}", t.p1, t.p2, t.p3, d.theta)))?;
    let g2 = d.gamma2.unwrap_or((lo + hi) / 2.0);
    if !(g2 > lo && g2 < hi) {
        return Err(bad(format!("gamma2 = {g2} outside the admissible range ({lo}, {hi})")));
    }
    Ok((g2, 1.0 / t.p1 - g2))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the config with `seed` and `grid.n` cleared, so runs
    /// differing only in seed or resolution share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.grid.n = 0;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(0.0, self.grid.length, self.grid.n)
    }

    pub fn triples(&self) -> Result<Vec<HolderTriple>> {
        self.scan
            .triples
            .iter()
            .map(|t| {
                HolderTriple::new(t[0], t[1], t[2]).map_err(|_| {
                    bad(format!(
                        "triple ({}, {}, {}): 1/p1 + 1/p2 + 1/p3 = {} must equal 1 with every p >= 1",
                        t[0],
                        t[1],
                        t[2],
                        1.0 / t[0] + 1.0 / t[1] + 1.0 / t[2]
                    ))
                })
            })
            .collect()
    }

    pub fn ensemble(&self) -> Result<Ensemble> {
        match self.scan.ensemble.as_str() {
            "restricted" => Ok(Ensemble::RestrictedType {
                max_intervals: self.scan.max_intervals,
                cells: self.scan.cells,
            }),
            "band-limited" => Ok(Ensemble::BandLimited { band: self.scan.band }),
            other => Err(bad(format!("scan.ensemble must be `restricted` or `band-limited`, got `{other}`"))),
        }
    }

    pub fn whitney(&self) -> WhitneyParams {
        WhitneyParams {
            c0: self.geometry.c0,
            alpha: self.geometry.alpha,
            shift: self.geometry.shift,
            depth: self.geometry.depth,
        }
    }

    pub fn cover(&self) -> CoverParams {
        CoverParams {
            whitney: self.whitney(),
            para_steps: self.geometry.para_steps,
            para_first_mu: self.geometry.para_first_mu,
            central_scale: self.geometry.central_scale,
        }
    }

    pub fn operator_params(&self) -> OperatorParams {
        OperatorParams {
            s: self.operator.s,
            mu_max: self.geometry.mu_max,
            radius: self.operator.radius,
        }
    }

    pub fn random_collection(&self) -> RandomCollection {
        let t = &self.tiles;
        RandomCollection {
            params: TileParams {
                c0: t.c0,
                j_gap: t.j_gap,
                shift: t.shift,
                dilation: t.dilation,
                nest: t.nest,
                slack: t.slack,
            },
            levels: t.levels,
            freq_anchors: t.freq_anchors,
            cubes_per_anchor: t.cubes_per_anchor,
            spatial_anchors: t.spatial_anchors,
            max_tiles: t.max_tiles,
            s: t.s,
        }
    }

    pub fn grid_tiles(&self) -> GridTileParams {
        let s = &self.sizes;
        GridTileParams {
            c0: s.c0,
            filter: s.filter,
            dilation: s.dilation,
            classes: s.classes,
            min_samples: s.min_samples,
        }
    }

    /// Checks every cross-field constraint; the error names the first violated one.
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n;
        if n < 16 || !n.is_power_of_two() {
            return Err(bad(format!("grid.n must be a power of two >= 16, got {n}")));
        }
        if !(self.grid.length > 0.0) {
            return Err(bad("grid.length must be positive"));
        }
        if self.trials == 0 {
            return Err(bad("trials must be positive"));
        }
        let g = &self.geometry;
        if g.mu_max < 2 {
            return Err(bad("geometry.mu_max must be at least 2"));
        }
        if !(g.alpha > 0.0 && g.alpha < 1.0) {
            return Err(bad(format!("geometry.alpha must lie in (0, 1), got {}", g.alpha)));
        }
        if g.overlap_base < 1 || g.overlap_base > g.overlap_max {
            return Err(bad("need 1 <= geometry.overlap_base <= geometry.overlap_max"));
        }
        if self.operator.s_values.iter().any(|s| !(*s > 0.0)) || !(self.operator.s > 0.0) {
            return Err(bad("operator slopes must be positive"));
        }
        if self.operator.band < 1 || self.operator.band >= (n / 4) as i64 {
            return Err(bad(format!("operator.band must lie in [1, N/4), got {}", self.operator.band)));
        }
        if self.paraproduct.f_band < 0 || self.paraproduct.gh_band < 0 {
            return Err(bad("paraproduct bands must be non-negative"));
        }
        let s = &self.sizes;
        if !(s.decay_omega[0] < s.decay_omega[1]) {
            return Err(bad("sizes.decay_omega must be an increasing pair"));
        }
        if s.decay_n.is_empty() || s.mus.is_empty() {
            return Err(bad("sizes.decay_n and sizes.mus must be non-empty"));
        }
        if s.mus.iter().any(|&m| m < 1 || m > g.mu_max) {
            return Err(bad(format!("sizes.mus must lie in 1..={}", g.mu_max)));
        }
        if !(s.exceptional_c > 0.0) {
            return Err(bad("sizes.exceptional_c must be positive"));
        }
        self.ensemble()?;
        let d = &self.diagnostics;
        if d.theta[0] != 1.0 {
            return Err(bad(format!("diagnostics.theta[0] must be 1, got {}", d.theta[0])));
        }
        for (i, t) in self.triples()?.iter().enumerate() {
            if !(t.p1 > 1.0 && t.p2 > 1.0 && t.p3 > 1.0) || t.p1.is_infinite() || t.p2.is_infinite() || t.p3.is_infinite() {
                return Err(bad(format!("triple {i}: every exponent must lie in (1, inf)")));
            }
            gammas(t, d)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml("kind = \"tiles\"\n[grid]\nn = 1024\n").unwrap();
        assert_eq!(c.kind, "tiles");
        assert_eq!(c.grid.n, 1024);
        assert_eq!(c.grid.length, 1.0);
        assert_eq!(c.sizes, SizesSection::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("kind = \"tiles\"\nfoo = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[grid]\nN = 4\n").is_err());
    }

    #[test]
    fn malformed_triple_rejected() {
        let mut c = ExperimentConfig::default();
        c.scan.triples = vec![[2.0, 2.0, 2.0]];
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("must equal 1"), "{e}");
    }

    #[test]
    fn grid_constraints() {
        let mut c = ExperimentConfig::default();
        c.grid.n = 500;
        assert!(c.validate().unwrap_err().to_string().contains("grid.n"));
    }

    #[test]
    fn gamma_ranges() {
        assert!(HolderTriple::new(1.5, 4.0, 4.0).is_err());
        let t = HolderTriple::new(1.5, 4.0, 12.0).unwrap();
        let (lo, hi) = gamma_range(&t, [1.0, 0.7, 0.7]).unwrap();
        assert_relative_eq!(lo, 2.0 / 3.0 - 0.35, epsilon = 1e-12);
        assert_relative_eq!(hi, 0.35, epsilon = 1e-12);
        let t = HolderTriple::new(5.0 / 3.0, 4.0, 20.0 / 3.0).unwrap();
        let (lo, hi) = gamma_range(&t, [1.0, 0.7, 0.7]).unwrap();
        assert_relative_eq!(lo, 0.25, epsilon = 1e-12);
        assert_relative_eq!(hi, 0.35, epsilon = 1e-12);
        let (g2, g3) = gammas(&t, &Diagnostics::default()).unwrap();
        assert_relative_eq!(g2 + g3, 0.6, epsilon = 1e-12);
        assert!(g2 > 0.25 && 2.0 * g3 < 0.7);
        // small θ leaves nothing
        assert!(gamma_range(&t, [1.0, 0.4, 0.4]).is_none());
        let d = Diagnostics {
            theta: [1.0, 0.7, 0.7],
            gamma2: Some(0.2),
        };
        assert!(gammas(&t, &d).is_err());
    }

    #[test]
    fn hash_ignores_seed_and_resolution() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 9;
        b.grid.n = 2048;
        assert_eq!(a.hash(), b.hash());
        b.trials = 3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    proptest! {
        #[test]
        fn chosen_gammas_meet_every_constraint(r1 in 0.51f64..0.99, r2 in 0.01f64..0.49, t2 in 0.05f64..0.99, t3 in 0.05f64..0.99) {
            prop_assume!(r1 + r2 < 0.99 && 1.0 - r1 - r2 < 0.5);
            let t = HolderTriple::new(1.0 / r1, 1.0 / r2, 1.0 / (1.0 - r1 - r2)).unwrap();
            let d = Diagnostics { theta: [1.0, t2, t3], gamma2: None };
            if let Ok((g2, g3)) = gammas(&t, &d) {
                prop_assert!(g2 > 0.0 && g2 < 0.5 && g3 > 0.0 && g3 < 0.5);
                prop_assert!((g2 + g3 - r1).abs() < 1e-12);
                prop_assert!(g2 > r2);
                prop_assert!(2.0 * g2 < t2 && 2.0 * g3 < t3);
            } else {
                prop_assert!(gamma_range(&t, d.theta).is_none());
            }
        }
    }
}
