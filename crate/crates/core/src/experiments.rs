//! Named experiments. Each one reads an [`ExperimentConfig`] and returns
//! metrics, pass/fail checks and CSV tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::bilinear::{bilinear_apply, hs_apply, hs_quadrature, make_operator, norm_scan, relative_l2, LineData, Symbol2D};
use crate::config::{gammas, ExperimentConfig};
use crate::error::{Error, Result};
use crate::geometry::{interval_families, sample_interior, sample_partition, LacCover, LacPolygon};
use crate::grid::{indicator, lp_norm, C64, Ensemble, GridFunction, GridSpec};
use crate::interval::{Interval, IntervalUnion};
use crate::paraproduct::{default_top, telescoping_decompose, DiagonalRanges};
use crate::sizes::{
    abstract_sizes, bessel_levels, exceptional_set, grid_collections, layer_decay, localized_inputs, max_size, maximal_bound,
    model_sum, single_tree_audit, size_forest, subtree_audit, wave_packet_bound, write_bessel, CutoffBank, GridCollection,
    SizeFamily, SizeOracle,
};
use crate::timefreq::{consecutive_union_violations, greedy_select, is_regular, random_regular_collection, Tree};

/// A named pass/fail condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Result of one experiment run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    /// Named scalars in emission order.
    pub metrics: Vec<(String, f64)>,
    pub checks: Vec<Check>,
    /// `(name, csv)` with a header line.
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.0 == name).map(|m| m.1)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, v: f64) {
        self.metrics.push((name.into(), v));
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome>;
}

pub fn registry() -> BTreeMap<&'static str, Box<dyn Experiment>> {
    let all: Vec<Box<dyn Experiment>> = vec![
        Box::new(Partition),
        Box::new(PolygonScan),
        Box::new(HsOracle),
        Box::new(ParaproductIdentity),
        Box::new(Tiles),
        Box::new(ForestBessel),
        Box::new(ModelSumScan),
        Box::new(SizeDecay),
    ];
    all.into_iter().map(|e| (e.name(), e)).collect()
}

pub fn lookup(kind: &str) -> Result<Box<dyn Experiment>> {
    registry().remove(kind).ok_or_else(|| Error::Unknown {
        kind: "experiment",
        name: kind.into(),
    })
}

pub struct Partition;

impl Experiment for Partition {
    fn name(&self) -> &'static str {
        "partition"
    }

    fn describe(&self) -> &'static str {
        "sum of the polygon partition functions at random interior points, with the cover hypotheses"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let g = &cfg.geometry;
        let poly = LacPolygon::new(g.mu_max)?;
        let cover = LacCover::new(poly.clone(), cfg.cover())?;
        let pts = sample_interior(&poly, g.samples, cfg.seed);
        let pu = sample_partition(&cover, &pts, g.m1_limit, g.m2_limit);
        let r = &pu.report;
        let mut out = Outcome::default();
        out.push("max_residual", r.max_residual);
        out.push("samples", r.samples as f64);
        out.push("containment_failures", r.containment_failures as f64);
        out.push("uncovered", r.uncovered as f64);
        out.push("m1", r.m1 as f64);
        out.push("m2", r.m2);
        out.check("residual", r.max_residual <= 1e-9, format!("max |Σψ - 1| = {:e} (tolerance 1e-9)", r.max_residual));
        let witness = r.first_witness.as_ref().map_or("none".to_string(), |(h, w)| format!("hypothesis {h}: {w}"));
        out.check("hypotheses", r.passed(), witness);
        let mut t = String::from("field,value\n");
        for line in r.to_text().lines() {
            if let Some((k, v)) = line.split_once(' ') {
                let _ = writeln!(t, "{k},\"{v}\"");
            }
        }
        out.tables.push(("hypotheses".into(), t));
        Ok(out)
    }
}

pub struct PolygonScan;

impl Experiment for PolygonScan {
    fn name(&self) -> &'static str {
        "polygon-scan"
    }

    fn describe(&self) -> &'static str {
        "overlap of the interval families for growing polygon depth"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let g = &cfg.geometry;
        let w = cfg.whitney();
        let poly = LacPolygon::new(g.overlap_max.max(2))?;
        let base = interval_families(&poly, 1..=g.overlap_base, &w)?;
        let full = interval_families(&poly, 1..=g.overlap_max, &w)?;
        let mut out = Outcome::default();
        for i in 0..3 {
            out.push(format!("overlap_{}_base", i + 1), base.overlap[i] as f64);
            out.push(format!("overlap_{}_max", i + 1), full.overlap[i] as f64);
        }
        out.check(
            "overlap_stable",
            base.overlap == full.overlap,
            format!("mu <= {}: {:?}, mu <= {}: {:?}", g.overlap_base, base.overlap, g.overlap_max, full.overlap),
        );
        let mut t = String::from("mu,i1_lo,i1_hi,i2_lo,i2_hi,i3_lo,i3_hi,rectangles\n");
        for c in &full.chords {
            let _ = writeln!(
                t,
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                c.mu, c.i[0].lo, c.i[0].hi, c.i[1].lo, c.i[1].hi, c.i[2].lo, c.i[2].hi, c.rectangles
            );
        }
        out.tables.push(("intervals".into(), t));
        Ok(out)
    }
}

pub struct HsOracle;

impl Experiment for HsOracle {
    fn name(&self) -> &'static str {
        "hs-oracle"
    }

    fn describe(&self) -> &'static str {
        "spectral H_s against its principal-value quadrature, and the m = 1 product identity"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let spec = cfg.spec()?;
        let ens = Ensemble::BandLimited { band: cfg.operator.band };
        let pairs = cfg.operator.pairs;
        let one = Symbol2D::constant(C64::new(1.0, 0.0));
        let mut t = String::from("s,seed,relative_error\n");
        let mut out = Outcome::default();
        let mut worst: f64 = 0.0;
        for &s in &cfg.operator.s_values {
            let errs: Vec<Result<f64>> = (0..pairs as u64)
                .into_par_iter()
                .map(|k| {
                    let seed = cfg.seed + k;
                    let f = ens.draw(2 * seed, spec)?.function;
                    let g = ens.draw(2 * seed + 1, spec)?.function;
                    let a = hs_apply(s, &f, &g)?.function;
                    let b = hs_quadrature(s, &f, &g, cfg.operator.images)?;
                    relative_l2(&a, &b)
                })
                .collect();
            let mut m: f64 = 0.0;
            for (k, e) in errs.into_iter().enumerate() {
                let e = e?;
                m = m.max(e);
                let _ = writeln!(t, "{s},{},{e:e}", cfg.seed + k as u64);
            }
            out.push(format!("hs_max_error_s{s}"), m);
            worst = worst.max(m);
        }
        out.push("hs_max_error", worst);
        out.check("hs_quadrature", worst <= 1e-3, format!("max relative L2 error {worst:e} (tolerance 1e-3)"));
        let mut prod: f64 = 0.0;
        for k in 0..pairs as u64 {
            let seed = cfg.seed + k;
            let f = ens.draw(2 * seed, spec)?.function;
            let g = ens.draw(2 * seed + 1, spec)?.function;
            let a = bilinear_apply(&one, &f, &g)?.function;
            prod = prod.max(relative_l2(&a, &f.mul(&g)?)?);
        }
        out.push("pointwise_max_error", prod);
        out.check("pointwise_identity", prod <= 1e-12, format!("max relative L2 error {prod:e} (tolerance 1e-12)"));
        out.tables.push(("hs_errors".into(), t));
        Ok(out)
    }
}

pub struct ParaproductIdentity;

impl Experiment for ParaproductIdentity {
    fn name(&self) -> &'static str {
        "paraproduct"
    }

    fn describe(&self) -> &'static str {
        "six-term telescoping identity of the quadratic paraproduct on band-limited triples"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let spec = cfg.spec()?;
        let top = cfg.paraproduct.k0.unwrap_or_else(|| default_top(&spec));
        let ef = Ensemble::BandLimited { band: cfg.paraproduct.f_band };
        let eg = Ensemble::BandLimited { band: cfg.paraproduct.gh_band };
        let rows: Vec<Result<(u64, f64, f64, bool)>> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|k| {
                let seed = cfg.seed + k;
                let f = ef.draw(3 * seed, spec)?.function;
                let g = eg.draw(3 * seed + 1, spec)?.function;
                let h = eg.draw(3 * seed + 2, spec)?.function;
                let scale = lp_norm(&f, 2.0)? * lp_norm(&g, 2.0)? * lp_norm(&h, 2.0)?;
                let exact = telescoping_decompose(&f, &g, &h, top, DiagonalRanges::Exact)?;
                let literal = telescoping_decompose(&f, &g, &h, top, DiagonalRanges::Literal)?;
                Ok((seed, exact.residual() / scale, literal.residual() / scale, exact.truncated))
            })
            .collect();
        let mut t = String::from("seed,relative_residual,literal_ranges_residual,truncated\n");
        let (mut worst, mut literal, mut truncated) = (0.0f64, 0.0f64, 0usize);
        for r in rows {
            let (seed, e, l, tr) = r?;
            worst = worst.max(e);
            literal = literal.max(l);
            truncated += tr as usize;
            let _ = writeln!(t, "{seed},{e:e},{l:e},{tr}");
        }
        let mut out = Outcome::default();
        out.push("top", top as f64);
        out.push("max_relative_residual", worst);
        out.push("literal_ranges_max_residual", literal);
        out.push("truncated", truncated as f64);
        out.check("telescoping", worst <= 1e-10, format!("max relative residual {worst:e} (tolerance 1e-10)"));
        out.check("frequency_support", truncated == 0, format!("{truncated} triples truncated above 2^(top-1)"));
        out.tables.push(("telescoping".into(), t));
        Ok(out)
    }
}

pub struct Tiles;

impl Experiment for Tiles {
    fn name(&self) -> &'static str {
        "tiles"
    }

    fn describe(&self) -> &'static str {
        "greedy tree selection on random regular collections: regularity and consecutive unions"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let rc = cfg.random_collection();
        let rows: Vec<Result<(u64, usize, usize, usize, usize)>> = (0..cfg.tiles.collections as u64)
            .into_par_iter()
            .map(|k| {
                let seed = cfg.seed + k;
                let (tiles, _) = random_regular_collection(seed, &rc)?;
                let all: Vec<usize> = (0..tiles.len()).collect();
                let trees = greedy_select(&tiles, &all, rc.params.dilation)?;
                let mut irregular = 0;
                for t in &trees {
                    irregular += is_regular(&tiles, &t.members)?.is_some() as usize;
                }
                let v = consecutive_union_violations(&tiles, &all, &trees)?.len();
                Ok((seed, tiles.len(), trees.len(), irregular, v))
            })
            .collect();
        let mut t = String::from("seed,tiles,trees,irregular_trees,union_violations\n");
        let (mut trees, mut irregular, mut viol, mut biggest) = (0, 0, 0, 0);
        for r in rows {
            let (seed, n, k, i, v) = r?;
            trees += k;
            irregular += i;
            viol += v;
            biggest = biggest.max(n);
            let _ = writeln!(t, "{seed},{n},{k},{i},{v}");
        }
        let mut out = Outcome::default();
        out.push("collections", cfg.tiles.collections as f64);
        out.push("max_tiles", biggest as f64);
        out.push("trees", trees as f64);
        out.push("irregular_trees", irregular as f64);
        out.push("union_violations", viol as f64);
        out.check("collection_size", biggest <= cfg.tiles.max_tiles, format!("largest collection {biggest}"));
        out.check("trees_regular", irregular == 0, format!("{irregular} of {trees} trees irregular"));
        out.check("consecutive_unions", viol == 0, format!("{viol} violating triples"));
        out.tables.push(("collections".into(), t));
        Ok(out)
    }
}

/// Lines and grid collections for the configured chords.
fn chord_collections(cfg: &ExperimentConfig, spec: &GridSpec) -> Result<(Vec<LineData>, Vec<Vec<GridCollection>>)> {
    let poly = LacPolygon::new(cfg.geometry.mu_max)?;
    let w = cfg.whitney();
    let p = cfg.grid_tiles();
    let mut lines = Vec::new();
    let mut cols = Vec::new();
    for &mu in &cfg.sizes.mus {
        let line = LineData::from_polygon(&poly, mu, cfg.operator.radius, &w, cfg.sizes.slope_floor)?;
        cols.push(grid_collections(&line, spec, &p)?);
        lines.push(line);
    }
    Ok((lines, cols))
}

fn family(cfg: &ExperimentConfig, spatial_n: u32) -> Result<SizeFamily> {
    SizeFamily::with_plateau(spatial_n, cfg.sizes.order, cfg.sizes.members, cfg.sizes.flat)
}

fn restricted(cfg: &ExperimentConfig) -> Ensemble {
    Ensemble::RestrictedType {
        max_intervals: cfg.scan.max_intervals,
        cells: cfg.scan.cells,
    }
}

fn stability_note(name: &str, v: f64) -> String {
    format!("{name} = {v:.6e}; compare against a run at doubled N")
}

pub struct ForestBessel;

impl Experiment for ForestBessel {
    fn name(&self) -> &'static str {
        "forest-bessel"
    }

    fn describe(&self) -> &'static str {
        "size-threshold forests on restricted-type inputs: local and global Bessel ratios"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let spec = cfg.spec()?;
        let (lines, cols) = chord_collections(cfg, &spec)?;
        let fam = family(cfg, cfg.sizes.spatial_n)?;
        let ens = restricted(cfg);
        let rows: Vec<Result<Vec<(u64, u32, i32, usize, f64, f64, f64)>>> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|k| {
                let seed = cfg.seed + k;
                let sample = ens.draw_projected(seed, spec)?;
                let e = sample.set.as_ref().map_or(0.0, |s| s.measure());
                let f = &sample.function;
                let mut rows = Vec::new();
                for (line, cs) in lines.iter().zip(&cols) {
                    let g = localized_inputs(line, [f, f, f])?;
                    let energy = lp_norm(&g[0], 2.0)?.powi(2);
                    for c in cs {
                        let forest = size_forest(c, &g[0], 0, &fam, cfg.sizes.forest_depth)?;
                        for l in bessel_levels(&forest) {
                            rows.push((seed, c.mu, l.n, l.trees, l.top_length, energy, e));
                        }
                    }
                }
                Ok(rows)
            })
            .collect();
        let mut t = String::from("seed,mu,n,trees,top_length,local_ratio\n");
        let mut local: f64 = 0.0;
        // (seed, n) -> Σ_μ top length, |E|
        let mut global: BTreeMap<(u64, i32), (f64, f64)> = BTreeMap::new();
        let mut selected = 0usize;
        for r in rows {
            for (seed, mu, n, trees, len, energy, e) in r? {
                let scale = 4f64.powi(n);
                let ratio = if energy > 0.0 { len / (scale * energy) } else { 0.0 };
                local = local.max(ratio);
                selected += trees;
                let slot = global.entry((seed, n)).or_insert((0.0, e));
                slot.0 += len;
                let _ = writeln!(t, "{seed},{mu},{n},{trees},{len:?},{ratio:e}");
            }
        }
        let glob = global
            .iter()
            .filter(|(_, v)| v.1 > 0.0)
            .map(|((_, n), v)| v.0 / (4f64.powi(*n) * v.1))
            .fold(0.0, f64::max);
        let mut out = Outcome::default();
        out.push("bessel_local_max", local);
        out.push("bessel_global_max", glob);
        out.push("trees_selected", selected as f64);
        out.check("bessel_finite", local.is_finite() && glob.is_finite() && selected > 0, stability_note("bessel_local_max", local));
        out.tables.push(("bessel".into(), t));
        if let Some(c) = cols.iter().flatten().next() {
            let f = ens.draw_projected(cfg.seed, spec)?.function;
            let g = localized_inputs(&lines[0], [&f, &f, &f])?;
            let forest = size_forest(c, &g[0], 0, &fam, cfg.sizes.forest_depth)?;
            out.tables.push(("bessel_levels".into(), write_bessel(&bessel_levels(&forest))));
        }
        Ok(out)
    }
}

/// Consecutive greedy trees `S_a ∪ ... ∪ S_b`.
fn consecutive_run(trees: &[Tree], a: usize, b: usize) -> Vec<usize> {
    trees[a..=b].iter().flat_map(|t| t.members.iter().copied()).collect()
}

pub struct ModelSumScan;

impl Experiment for ModelSumScan {
    fn name(&self) -> &'static str {
        "model-sum"
    }

    fn describe(&self) -> &'static str {
        "restricted-type norm scans of H_lac and of the tile model sum, plus single-tree audits"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let spec = cfg.spec()?;
        let triples = cfg.triples()?;
        let ens = cfg.ensemble()?;
        let mut out = Outcome::default();
        for (k, t) in triples.iter().enumerate() {
            let (g2, g3) = gammas(t, &cfg.diagnostics)?;
            out.push(format!("gamma2_t{k}"), g2);
            out.push(format!("gamma3_t{k}"), g3);
        }

        let op = make_operator(&cfg.operator.name, &cfg.operator_params())?;
        let scan = norm_scan(op.as_ref(), &triples, ens, spec, cfg.trials, cfg.seed)?;
        for (k, t) in triples.iter().enumerate() {
            let m = scan.rows.iter().filter(|r| r.triple == *t).map(|r| r.ratio).fold(0.0, f64::max);
            out.push(format!("operator_max_t{k}"), m);
        }
        out.push("operator_aliased", scan.aliased as f64);
        out.tables.push(("operator_scan".into(), scan.to_table()));

        let (lines, cols) = chord_collections(cfg, &spec)?;
        let bank_n = cfg.sizes.spatial_n;
        let rows: Vec<Result<(u64, f64, Vec<f64>)>> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|k| {
                let seed = cfg.seed + k;
                let bank = CutoffBank::new(spec, bank_n, cfg.sizes.j_gap);
                let f: Vec<GridFunction> = (0..3).map(|i| ens.draw(3 * seed + i, spec).map(|s| s.function)).collect::<Result<_>>()?;
                let ms = model_sum(&lines, &cols, [&f[0], &f[1], &f[2]], &bank)?;
                let mut ratios = Vec::new();
                for t in &triples {
                    let den = lp_norm(&f[0], t.p1)? * lp_norm(&f[1], t.p2)? * lp_norm(&f[2], t.p3)?;
                    ratios.push(if den > 0.0 { ms.total / den } else { 0.0 });
                }
                Ok((seed, ms.total, ratios))
            })
            .collect();
        let mut t = String::from("seed,p1,p2,p3,N,model_sum,ratio\n");
        let mut maxes = vec![0.0f64; triples.len()];
        for r in rows {
            let (seed, total, ratios) = r?;
            for (k, (tr, ratio)) in triples.iter().zip(ratios).enumerate() {
                maxes[k] = maxes[k].max(ratio);
                let _ = writeln!(t, "{seed},{},{},{},{},{total:e},{ratio:e}", tr.p1, tr.p2, tr.p3, spec.n);
            }
        }
        for (k, m) in maxes.iter().enumerate() {
            out.push(format!("model_max_t{k}"), *m);
        }
        out.tables.push(("model_scan".into(), t));
        let finite = maxes.iter().all(|m| m.is_finite() && *m > 0.0);
        out.check("model_sum_finite", finite, format!("max ratios {maxes:?}"));

        self.audit(cfg, &spec, &lines, &cols, &mut out)?;
        Ok(out)
    }
}

impl ModelSumScan {
    fn audit(&self, cfg: &ExperimentConfig, spec: &GridSpec, lines: &[LineData], cols: &[Vec<GridCollection>], out: &mut Outcome) -> Result<()> {
        let fam = family(cfg, cfg.sizes.spatial_n)?;
        let theta = cfg.diagnostics.theta;
        let ens = restricted(cfg);
        // (line index, collection, trees)
        let mut pool = Vec::new();
        for (li, cs) in cols.iter().enumerate() {
            for c in cs {
                if c.tiles.is_empty() {
                    continue;
                }
                let trees = greedy_select(&c.tiles, &c.all(), c.dilation)?;
                for (ti, tr) in trees.iter().enumerate() {
                    if is_regular(&c.tiles, &tr.members)?.is_some() {
                        return Err(Error::NotRegular(format!("greedy tree {ti} of mu = {}", c.mu)));
                    }
                }
                pool.push((li, c, trees));
            }
        }
        let jobs: Vec<(usize, usize, u64)> = {
            let flat: Vec<(usize, usize)> = pool.iter().enumerate().flat_map(|(pi, p)| (0..p.2.len()).map(move |ti| (pi, ti))).collect();
            if flat.is_empty() {
                Vec::new()
            } else {
                (0..cfg.scan.trees).map(|k| (flat[k % flat.len()].0, flat[k % flat.len()].1, cfg.seed + (k / flat.len()) as u64)).collect()
            }
        };
        let rows: Vec<Result<(usize, usize, u64, f64, f64, usize)>> = jobs
            .par_iter()
            .map(|&(pi, ti, seed)| {
                let (li, c, trees) = &pool[pi];
                let bank = CutoffBank::new(*spec, cfg.sizes.spatial_n, cfg.sizes.j_gap);
                let f: Vec<GridFunction> = (0..3).map(|i| ens.draw(3 * seed + i, *spec).map(|s| s.function)).collect::<Result<_>>()?;
                // the estimate assumes |g_i| <= 1
                let g = localized_inputs(&lines[*li], [&f[0], &f[1], &f[2]])?.map(|x| {
                    let m = x.max_abs().max(1.0);
                    x.scale(C64::new(1.0 / m, 0.0))
                });
                let gr = [&g[0], &g[1], &g[2]];
                let a = single_tree_audit(&c.tiles, &trees[ti], gr, c.slope, &fam, theta, c.dilation, &bank)?;
                // S = trees up to this one, S' = this one onwards
                let s1 = consecutive_run(trees, 0, ti);
                let s2 = consecutive_run(trees, ti, trees.len() - 1);
                let (kept, sub) = subtree_audit(&c.tiles, &trees[ti], [&s1, &s2], gr, c.slope, &fam, theta, c.dilation, &bank)?;
                Ok((pi, ti, seed, a.ratio, sub.ratio, kept))
            })
            .collect();
        let mut t = String::from("mu,tree,seed,ratio,subtree_ratio,subtree_tiles\n");
        let (mut worst, mut worst_sub, mut count) = (0.0f64, 0.0f64, 0usize);
        for r in rows {
            let (pi, ti, seed, ratio, sub, kept) = r?;
            worst = worst.max(ratio);
            worst_sub = worst_sub.max(sub);
            count += 1;
            let _ = writeln!(t, "{},{ti},{seed},{ratio:e},{sub:e},{kept}", pool[pi].1.mu);
        }
        out.push("audit_trees", count as f64);
        out.push("audit_max_ratio", worst);
        out.push("subtree_max_ratio", worst_sub);
        out.check(
            "tree_audit_finite",
            count == cfg.scan.trees && worst.is_finite() && worst_sub.is_finite(),
            format!("{count} trees, {}", stability_note("audit_max_ratio", worst)),
        );
        out.tables.push(("tree_audit".into(), t));
        Ok(())
    }
}

pub struct SizeDecay;

impl Experiment for SizeDecay {
    fn name(&self) -> &'static str {
        "size-decay"
    }

    fn describe(&self) -> &'static str {
        "layered decay of size*_3 away from the exceptional set, and size diagnostics"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let spec = cfg.spec()?;
        let s = &cfg.sizes;
        let mut out = Outcome::default();
        let col = crate::sizes::diagonal_collection(s.decay_slope, &s.decay_scales, s.decay_reach, &cfg.grid_tiles())?;
        let omega = IntervalUnion::single(Interval::new(s.decay_omega[0], s.decay_omega[1]));
        let f3 = outside_input(&spec, &omega, s.decay_cells, cfg.seed);
        let mut t = String::from("spatial_n,layer,tiles,size\n");
        let mut rates = Vec::new();
        for &n in &s.decay_n {
            let rep = layer_decay(&col, &omega, &f3, &family(cfg, n)?, s.decay_layers)?;
            for (l, k, v) in &rep.layers {
                let _ = writeln!(t, "{n},{l},{k},{v:e}");
            }
            let rate = rep.rate.unwrap_or(f64::NAN);
            out.push(format!("decay_rate_n{n}"), rate);
            out.push(format!("nested_pairs_n{n}"), rep.nested_pairs as f64);
            out.push(format!("multi_tile_trees_n{n}"), rep.multi_tile_trees as f64);
            rates.push((n, rate));
        }
        let positive = rates.iter().all(|r| r.1 > 0.0);
        let monotone = rates.windows(2).all(|w| w[1].1 >= w[0].1);
        out.check("decay_positive_nondecreasing", positive && monotone, format!("rates {rates:?}"));
        out.tables.push(("layers".into(), t));

        self.diagnostics(cfg, &spec, &mut out)?;
        Ok(out)
    }
}

/// Unimodular on the complement of `omega`, random phase per cell, zero on `omega`.
fn outside_input(spec: &GridSpec, omega: &IntervalUnion, cells: usize, seed: u64) -> GridFunction {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    GridFunction::from_fn(*spec, |x| {
        if omega.contains(x) {
            C64::new(0.0, 0.0)
        } else {
            let c = (((x - spec.origin) / spec.length * cells as f64) as usize).min(cells - 1);
            C64::from_polar(1.0, phases[c])
        }
    })
}

impl SizeDecay {
    fn diagnostics(&self, cfg: &ExperimentConfig, spec: &GridSpec, out: &mut Outcome) -> Result<()> {
        let (lines, cols) = chord_collections(cfg, spec)?;
        let fam = family(cfg, cfg.sizes.spatial_n)?;
        let ens = restricted(cfg);
        let (mut vs_max, mut packet, mut abs_ratio) = (0.0f64, 0.0f64, 0.0f64);
        let mut t = String::from("seed,mu,size,maximal_bound,packet_rhs\n");
        for k in 0..cfg.trials.min(10) as u64 {
            let seed = cfg.seed + k;
            let f = ens.draw(seed, *spec)?.function;
            for (line, cs) in lines.iter().zip(&cols) {
                let g = localized_inputs(line, [&f, &f, &f])?;
                for c in cs.iter().filter(|c| !c.tiles.is_empty()) {
                    let all = c.all();
                    let o = SizeOracle::new(&c.tiles, &g[0], 0, c.slope, fam.clone())?;
                    let rep = max_size(&o, &all, c.dilation);
                    let mb = maximal_bound(&c.tiles, &all, &g[0]);
                    if mb > 0.0 {
                        vs_max = vs_max.max(rep.size / mb);
                    }
                    let mut rhs = f64::NAN;
                    if let Some(top) = rep.top {
                        let tree = crate::timefreq::maximal_tree(&c.tiles, all.clone(), &top, c.dilation);
                        let (size, r) = wave_packet_bound(&o, &top, &tree)?;
                        rhs = r;
                        if r > 0.0 {
                            packet = packet.max(size / r);
                        }
                    }
                    let _ = writeln!(t, "{seed},{},{:e},{mb:e},{rhs:e}", c.mu, rep.size);
                }
            }
            // abstract sizes of the tile coefficients ⟨f, packet⟩ on the first collection
            if let Some(c) = cols.iter().flatten().find(|c| !c.tiles.is_empty()) {
                let g = localized_inputs(&lines[0], [&f, &f, &f])?;
                let coeffs: Vec<_> = c
                    .tiles
                    .iter()
                    .map(|p| {
                        let psi = crate::sizes::packet(spec, &p.interval.interval(), p.omega[0].center());
                        g[0].inner(&psi).map(|v| (p.interval, v.norm()))
                    })
                    .collect::<Result<_>>()?;
                let (l2, weak) = abstract_sizes(&coeffs);
                if weak > 0.0 {
                    abs_ratio = abs_ratio.max(l2 / weak);
                }
            }
        }
        out.push("size_over_maximal_max", vs_max);
        out.push("size_over_packet_bound_max", packet);
        out.push("abstract_l2_over_weak_max", abs_ratio);
        out.tables.push(("size_diagnostics".into(), t));

        // E3' = E3 minus the exceptional set of E1 and E2 keeps more than half
        // of E3; E3 is the whole period, the normalized case
        let c = cfg.sizes.exceptional_c;
        let e3 = IntervalUnion::single(Interval::new(spec.origin, spec.origin + spec.length));
        let mut worst = f64::INFINITY;
        let mut removed: f64 = 0.0;
        for k in 0..cfg.trials as u64 {
            let seed = cfg.seed + k;
            let mut pieces = Vec::new();
            for i in 0..2 {
                let set = ens.draw(3 * seed + i, *spec)?.set.unwrap_or_default();
                pieces.extend_from_slice(exceptional_set(&set, spec, c / e3.measure()).pieces());
            }
            let omega = IntervalUnion::new(pieces);
            let kept = kept_measure(spec, &e3, &omega) / e3.measure();
            worst = worst.min(kept);
            removed = removed.max(1.0 - kept);
        }
        out.push("e3_kept_fraction_min", worst);
        out.push("exceptional_fraction_max", removed);
        out.check("e3_kept_majority", worst > 0.5, format!("min |E3'|/|E3| = {worst:.4}"));
        Ok(())
    }
}

fn kept_measure(spec: &GridSpec, e: &IntervalUnion, omega: &IntervalUnion) -> f64 {
    let a = indicator(spec, e);
    let b = indicator(spec, omega);
    let skip: HashSet<usize> = (0..spec.n).filter(|&k| b.samples()[k].re > 0.5).collect();
    (0..spec.n).filter(|k| !skip.contains(k)).map(|k| a.samples()[k].re).sum::<f64>() * spec.step()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(kind: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            kind: kind.into(),
            trials: 3,
            ..Default::default()
        };
        c.grid.n = 256;
        c
    }

    #[test]
    fn registry_names_match() {
        let r = registry();
        assert_eq!(r.len(), 8);
        for (k, e) in &r {
            assert_eq!(*k, e.name());
            assert!(!e.describe().is_empty());
        }
        assert!(lookup("nope").is_err());
    }

    #[test]
    fn partition_small() {
        let mut c = quick("partition");
        c.geometry.samples = 500;
        let o = lookup("partition").unwrap().run(&c).unwrap();
        assert!(o.passed(), "{:?}", o.checks);
        assert!(o.metric("max_residual").unwrap() <= 1e-9);
    }

    #[test]
    fn paraproduct_small() {
        let mut c = quick("paraproduct");
        c.paraproduct.f_band = 8;
        c.paraproduct.gh_band = 16;
        let o = lookup("paraproduct").unwrap().run(&c).unwrap();
        assert!(o.passed(), "{:?}", o.checks);
        assert!(o.metric("literal_ranges_max_residual").unwrap() > 1e-8);
    }

    #[test]
    fn tiles_small() {
        let mut c = quick("tiles");
        c.tiles.collections = 3;
        let o = lookup("tiles").unwrap().run(&c).unwrap();
        assert!(o.passed(), "{:?}", o.checks);
        assert_eq!(o.tables[0].1.lines().count(), 4);
    }

    #[test]
    fn hs_small() {
        let mut c = quick("hs-oracle");
        c.operator.pairs = 2;
        c.operator.band = 8;
        let o = lookup("hs-oracle").unwrap().run(&c).unwrap();
        assert!(o.passed(), "{:?}", o.checks);
    }

    #[test]
    fn deterministic() {
        let mut c = quick("tiles");
        c.tiles.collections = 2;
        let e = lookup("tiles").unwrap();
        assert_eq!(e.run(&c).unwrap(), e.run(&c).unwrap());
    }

    #[test]
    fn kept_measure_counts_complement() {
        let spec = GridSpec::unit(64).unwrap();
        let e = IntervalUnion::single(Interval::new(0.0, 0.5));
        let o = IntervalUnion::single(Interval::new(0.25, 1.0));
        assert!((kept_measure(&spec, &e, &o) - 0.25).abs() < 1e-12);
    }
}
