//! Acceptance suite: one line per criterion.
//!
//! Every criterion runs to completion and prints `PASS` or `FAIL` with its
//! measured values. The process fails if any criterion fails, except a
//! performance target that the host cannot meet (fewer cores than the
//! criterion requires), which prints `FAIL (hardware)` and is not fatal.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use forestarea::accuracy::ConfusionMatrix;
use forestarea::classifier::{select_variables, CvParams, Dataset, Forest, NodeView, TrainParams};
use forestarea::estimation::{estimate, Method, SamplePlot, Stratum, VariancePolicy};
use forestarea::geostat::{KrigingObservation, UniversalKriging, VariogramModel};
use forestarea::raster::{
    mask_legend, medoid_composite, predict_map, BandSet, ClassMap, FeatureSource, GridSpec, ImageStack, RasterGrid,
};
use forestarea::rng::{mix64, SplitMix64};
use forestarea::simulation::{
    build_map, counts_by_stratum, generate_landscape, monte_carlo, Design, Landscape, LandscapeConfig, MapSource,
    McParams, McReport,
};
use forestarea::{Domain, Error};

const REPORT_DOMAINS: [Domain; 5] = [Domain::Spruce, Domain::Pine, Domain::Deciduous, Domain::NonForest, Domain::ForestTotal];
const SPECIES: [Domain; 3] = [Domain::Spruce, Domain::Pine, Domain::Deciduous];

enum Verdict {
    Pass,
    Fail,
    /// The target needs hardware this host lacks.
    HardwareFail,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Outcome {
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            detail,
        }
    }
}

fn within(d: Duration, limit_s: f64) -> bool {
    d.as_secs_f64() <= limit_s
}

// ------------------------------------------------------------------ 1

fn metric_reproduction() -> Outcome {
    let t = Instant::now();
    let labels = vec![Domain::Spruce, Domain::Pine];
    let m = ConfusionMatrix::from_cells(labels, vec![58.0, 4.0, 4.0, 34.0]).expect("2×2 matrix");
    let pct = |v: Option<f64>| 100.0 * v.expect("defined");
    let oa = pct(m.oa());
    let ua = [pct(m.ua(Domain::Spruce)), pct(m.ua(Domain::Pine))];
    let pa = [pct(m.pa(Domain::Spruce)), pct(m.pa(Domain::Pine))];
    let near = |got: f64, want: f64| (got - want).abs() <= 1.0;
    let elapsed = t.elapsed();
    let pass = near(oa, 92.0)
        && near(ua[0], 94.0)
        && near(ua[1], 89.0)
        && near(pa[0], 93.0)
        && near(pa[1], 89.0)
        && within(elapsed, 1.0);
    Outcome::check(
        pass,
        format!(
            "OA {oa:.1}, UA {:.1}/{:.1}, PA {:.1}/{:.1} in {elapsed:.1?}",
            ua[0], ua[1], pa[0], pa[1]
        ),
    )
}

// ------------------------------------------------------------------ 2

/// Pairwise form of the sample variance: Σ_{i<j} (a_i − a_j)² / (n (n − 1)).
fn pairwise_s2(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mut s = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            s += (v[i] - v[j]) * (v[i] - v[j]);
        }
    }
    s / (n * (n - 1.0))
}

struct Instance {
    plots: Vec<SamplePlot>,
    strata: Vec<Stratum>,
    target: Domain,
    mapped: BTreeMap<u32, f64>,
}

fn random_instance(rng: &mut SplitMix64) -> Instance {
    let h = 1 + rng.below_usize(3);
    let mut plots = Vec::new();
    let mut strata = Vec::new();
    let mut mapped = BTreeMap::new();
    let target = REPORT_DOMAINS[rng.below_usize(5)];
    let budget = 12;
    for s in 0..h {
        let id = 10 + s as u32;
        let left = budget - plots.len() - 2 * (h - s - 1);
        let n = 2 + rng.below_usize(left.min(6) - 1);
        let area = 10.0 + 190.0 * rng.next_f64();
        let mut pred_in = 0;
        for i in 0..n {
            let obs = Domain::LABELS[rng.below_usize(5)];
            let pred = Domain::LABELS[rng.below_usize(5)];
            pred_in += target.indicator(pred) as usize;
            plots.push(SamplePlot::new(format!("s{s}p{i}"), id, obs, area / n as f64).with_prediction(pred));
        }
        let in_area = match pred_in {
            0 => 0.0,
            k if k == n => area,
            _ => area * rng.next_f64(),
        };
        mapped.insert(id, in_area);
        strata.push(Stratum::from_count(id, area, n));
    }
    Instance {
        plots,
        strata,
        target,
        mapped,
    }
}

/// `(total, variance)` by inclusion-probability expansion and pairwise
/// variances; `None` when a non-empty poststratum has a single plot.
fn brute_force(inst: &Instance, method: Method) -> Option<(f64, f64)> {
    let d = inst.target;
    let mut total = 0.0;
    let mut variance = 0.0;
    for s in &inst.strata {
        let members: Vec<&SamplePlot> = inst.plots.iter().filter(|p| p.stratum_id == s.id).collect();
        let n = members.len() as f64;
        let pi = n / s.area;
        let y = |p: &SamplePlot| d.indicator(p.observed);
        let yhat = |p: &SamplePlot| d.indicator(p.predicted.expect("prediction"));
        match method {
            Method::Direct => {
                let v: Vec<f64> = members.iter().map(|p| y(p)).collect();
                total += v.iter().map(|y| y / pi).sum::<f64>();
                variance += s.area * s.area * pairwise_s2(&v) / n;
            }
            Method::ModelAssisted => {
                let e: Vec<f64> = members.iter().map(|p| y(p) - yhat(p)).collect();
                total += inst.mapped[&s.id] + e.iter().map(|e| e / pi).sum::<f64>();
                variance += s.area * s.area * pairwise_s2(&e) / n;
            }
            Method::Poststratified => {
                for (flag, area) in [(1.0, inst.mapped[&s.id]), (0.0, s.area - inst.mapped[&s.id])] {
                    let v: Vec<f64> = members.iter().filter(|p| yhat(p) == flag).map(|p| y(p)).collect();
                    if v.is_empty() {
                        continue;
                    }
                    if v.len() == 1 && area > 0.0 {
                        return None;
                    }
                    let ng = v.len() as f64;
                    total += area * v.iter().sum::<f64>() / ng;
                    if v.len() > 1 {
                        variance += area * area * pairwise_s2(&v) / ng;
                    }
                }
            }
        }
    }
    Some((total, variance))
}

fn rel_err(got: f64, want: f64, scale: f64) -> f64 {
    if want == 0.0 {
        got.abs() / scale
    } else {
        ((got - want) / want).abs()
    }
}

fn estimator_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = SplitMix64::new(2024);
    let mut worst: f64 = 0.0;
    let mut checked = [0usize; 3];
    let mut mismatched = 0usize;
    let mut attempts = 0;
    while checked.iter().any(|&c| c < 50) && attempts < 100_000 {
        attempts += 1;
        let inst = random_instance(&mut rng);
        let scale = inst.strata.iter().map(|s| s.area * s.area).sum::<f64>();
        for (k, method) in Method::ALL.into_iter().enumerate() {
            if checked[k] >= 50 {
                continue;
            }
            let got = estimate(&inst.plots, &inst.strata, method, inst.target, &inst.mapped, VariancePolicy::Strict);
            match (brute_force(&inst, method), got) {
                (Some((t_o, v_o)), Ok(e)) => {
                    worst = worst.max(rel_err(e.total, t_o, scale.sqrt())).max(rel_err(e.variance, v_o, scale));
                    checked[k] += 1;
                }
                (None, Err(Error::VarianceUndefined(_))) => {}
                _ => mismatched += 1,
            }
        }
    }
    let elapsed = t.elapsed();
    let pass = checked.iter().all(|&c| c >= 50) && mismatched == 0 && worst <= 1e-12 && within(elapsed, 5.0);
    Outcome::check(
        pass,
        format!(
            "{}/{}/{} direct/MA/PS instances, max relative error {worst:.1e}, {mismatched} applicability mismatches, {elapsed:.1?}",
            checked[0], checked[1], checked[2]
        ),
    )
}

// ------------------------------------------------------------------ 3

fn perfect_map_degeneracy() -> Outcome {
    let mut rng = SplitMix64::new(5);
    let strata = vec![Stratum::from_count(1, 120.0, 8), Stratum::from_count(2, 80.0, 6)];
    let mut plots = Vec::new();
    let mut counts: BTreeMap<(u32, Domain), f64> = BTreeMap::new();
    for (s, n) in [(1u32, 8usize), (2, 6)] {
        for i in 0..n {
            let d = Domain::LABELS[rng.below_usize(5)];
            *counts.entry((s, d)).or_default() += 1.0;
            plots.push(SamplePlot::new(format!("{s}-{i}"), s, d, 1.0).with_prediction(d));
        }
    }
    let mut ok = true;
    let mut notes = Vec::new();
    for d in REPORT_DOMAINS {
        // Mapped areas proportional to the plot shares keep every non-empty
        // poststratum supported by plots.
        let mapped: BTreeMap<u32, f64> = strata
            .iter()
            .map(|s| {
                let n = plots.iter().filter(|p| p.stratum_id == s.id).count() as f64;
                let k = plots.iter().filter(|p| p.stratum_id == s.id && d.indicator(p.observed) > 0.0).count() as f64;
                (s.id, s.area * k / n)
            })
            .collect();
        let synthetic: f64 = mapped.values().sum();
        let ma = estimate(&plots, &strata, Method::ModelAssisted, d, &mapped, VariancePolicy::Strict);
        let ps = estimate(&plots, &strata, Method::Poststratified, d, &mapped, VariancePolicy::AllowPartial);
        match (ma, ps) {
            (Ok(ma), Ok(ps)) => {
                let ma_ok = ma.variance == 0.0 && ma.total == synthetic && ma.correction == Some(0.0);
                let ps_ok = ps.variance == 0.0 && ps.strata.iter().all(|c| c.variance.is_none_or(|v| v == 0.0));
                ok &= ma_ok && ps_ok;
                if !(ma_ok && ps_ok) {
                    notes.push(format!("{d}: MA var {} total {} vs {synthetic}, PS var {}", ma.variance, ma.total, ps.variance));
                }
            }
            (a, b) => {
                ok = false;
                notes.push(format!("{d}: {:?} / {:?}", a.err(), b.err()));
            }
        }
    }
    let detail = if notes.is_empty() {
        "MA variance 0 and total = synthetic area; PS variances 0 in all 5 domains".to_string()
    } else {
        notes.join("; ")
    };
    Outcome::check(ok, detail)
}

// ------------------------------------------------------------------ 4-6

fn mc(landscape: &Landscape, map: &ClassMap, design: Design, seed: u64) -> McReport {
    let params = McParams::new(1000, design, (1..=4).map(|h| (h, 50)).collect(), seed);
    monte_carlo(landscape, map, &params).expect("Monte Carlo run")
}

fn calibration(landscape: &Landscape) -> Outcome {
    let t = Instant::now();
    let map = build_map(landscape, &MapSource::Perfect, 7).expect("map");
    let report = mc(landscape, &map, Design::StratifiedSrs, 11);
    let elapsed = t.elapsed();
    let mut pass = within(elapsed, 300.0);
    let mut worst = (0.0f64, 1.0f64, 0.95f64);
    for d in REPORT_DOMAINS {
        let r = report.row(Method::Direct, d).expect("direct row");
        let z = (r.bias / r.mc_se).abs();
        let ratio = r.variance_ratio.unwrap_or(f64::NAN);
        pass &= z <= 3.0 && (0.85..=1.15).contains(&ratio) && (0.93..=0.97).contains(&r.coverage);
        worst.0 = worst.0.max(z);
        if (ratio - 1.0).abs() > (worst.1 - 1.0).abs() || ratio.is_nan() {
            worst.1 = ratio;
        }
        if (r.coverage - 0.95).abs() > (worst.2 - 0.95).abs() {
            worst.2 = r.coverage;
        }
    }
    Outcome::check(
        pass,
        format!(
            "R=1000, n_h=50: max |bias|/MC-SE {:.2}, worst variance ratio {:.3}, worst coverage {:.3}, {elapsed:.1?}",
            worst.0, worst.1, worst.2
        ),
    )
}

/// Stratified expectation of the model-assisted RE when map labels are
/// independent of the truth: Var(y) / (Var(y) + Var(ŷ)).
fn independent_label_re(landscape: &Landscape, map: &ClassMap, d: Domain) -> f64 {
    let truth = counts_by_stratum(&landscape.truth, &landscape.strata).expect("truth counts");
    let mapped = counts_by_stratum(map, &landscape.strata).expect("map counts");
    let share = |c: &[u64; 256]| {
        let total: u64 = Domain::LABELS.iter().map(|l| c[l.code().unwrap() as usize]).sum();
        let hit: u64 = Domain::LABELS.iter().filter(|l| d.indicator(**l) > 0.0).map(|l| c[l.code().unwrap() as usize]).sum();
        (hit as f64 / total as f64, total as f64)
    };
    let (mut vy, mut ve) = (0.0, 0.0);
    for (h, c) in &truth {
        let (p, a) = share(c);
        let (q, _) = share(&mapped[h]);
        vy += a * a * p * (1.0 - p);
        ve += a * a * (p * (1.0 - p) + q * (1.0 - q));
    }
    vy / ve
}

fn relative_efficiency(landscape: &Landscape) -> Outcome {
    let t = Instant::now();
    // Noisier spectra bring the forest map down to about 80% OA.
    let noisy = generate_landscape(&LandscapeConfig {
        noise_sd: 0.7,
        ..Default::default()
    })
    .expect("landscape");
    let map = build_map(&noisy, &MapSource::Forest { ntrees: 100, training_plots: 2000 }, 7).expect("forest map");
    let agree = map.codes.iter().zip(&noisy.truth.codes).filter(|(a, b)| a == b).count();
    let oa = agree as f64 / map.codes.len() as f64;
    let report = mc(&noisy, &map, Design::StratifiedSrs, 11);
    let re = |m: Method, d: Domain| report.row(m, d).and_then(|r| r.mean_re);
    let best_species = SPECIES.iter().filter_map(|&d| re(Method::ModelAssisted, d)).fold(f64::NAN, f64::max);
    let forest_total = re(Method::ModelAssisted, Domain::ForestTotal).unwrap_or(f64::NAN);
    let mut ps_gap = f64::INFINITY;
    for d in REPORT_DOMAINS {
        if let (Some(ma), Some(ps)) = (re(Method::ModelAssisted, d), re(Method::Poststratified, d)) {
            ps_gap = ps_gap.min(ps - ma);
        }
    }

    let random = build_map(landscape, &MapSource::RandomLabels, 7).expect("random map");
    let rreport = mc(landscape, &random, Design::StratifiedSrs, 11);
    let rre = |m: Method, d: Domain| rreport.row(m, d).and_then(|r| r.mean_re);
    let mut ps_random = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ma_random = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ma_analytic_gap: f64 = 0.0;
    for d in REPORT_DOMAINS {
        let ps = rre(Method::Poststratified, d).unwrap_or(f64::NAN);
        let ma = rre(Method::ModelAssisted, d).unwrap_or(f64::NAN);
        ps_random = (ps_random.0.min(ps), ps_random.1.max(ps));
        ma_random = (ma_random.0.min(ma), ma_random.1.max(ma));
        ma_analytic_gap = ma_analytic_gap.max((ma - independent_label_re(landscape, &random, d)).abs());
    }
    let elapsed = t.elapsed();
    // With independent labels the model-assisted residual variance is
    // Var(y) + Var(ŷ), so its RE is pinned to the analytic value below 1;
    // the [0.9, 1.1] band applies to poststratification, whose groups are
    // then uninformative but harmless.
    let pass = best_species >= 1.15
        && forest_total >= 1.3
        && ps_gap >= -0.05
        && ps_random.0 >= 0.9
        && ps_random.1 <= 1.1
        && ma_analytic_gap <= 0.05;
    Outcome::check(
        pass,
        format!(
            "map OA {:.1}%: best species MA RE {best_species:.2}, forest-total MA RE {forest_total:.2}, min PS−MA {ps_gap:.2}; \
             random labels: PS RE {:.2}..{:.2}, MA RE {:.2}..{:.2} (analytic within {ma_analytic_gap:.3}); {elapsed:.1?}",
            100.0 * oa,
            ps_random.0,
            ps_random.1,
            ma_random.0,
            ma_random.1
        ),
    )
}

fn systematic_overestimation() -> Outcome {
    let t = Instant::now();
    let config = LandscapeConfig {
        patch_scale_m: 1500.0,
        ..Default::default()
    };
    let landscape = generate_landscape(&config).expect("landscape");
    let map = build_map(&landscape, &MapSource::Perfect, 7).expect("map");
    let report = mc(&landscape, &map, Design::StratifiedSystematic, 11);
    let ratios: Vec<f64> = REPORT_DOMAINS
        .iter()
        .map(|&d| report.row(Method::Direct, d).and_then(|r| r.variance_ratio).unwrap_or(f64::NAN))
        .collect();
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Outcome::check(
        ratios.iter().all(|&r| r >= 1.0),
        format!("direct variance ratio {min:.2}..{max:.2} over 5 domains, {:.1?}", t.elapsed()),
    )
}

// ------------------------------------------------------------------ 7

fn medoid_oracle() -> Outcome {
    const PIXELS: usize = 1000;
    const EPOCHS: usize = 10;
    const BANDS: usize = 4;
    const NODATA: f64 = -9999.0;
    let spec = GridSpec::new(0.0, 10.0, 10.0, 1, PIXELS).expect("spec");
    let mut rng = SplitMix64::new(77);
    let mut values = vec![vec![vec![0.0; PIXELS]; BANDS]; EPOCHS];
    for px in 0..PIXELS {
        let epochs = 1 + rng.below_usize(EPOCHS);
        for (e, epoch) in values.iter_mut().enumerate() {
            let dup = e > 0 && rng.below(8) == 0;
            for b in 0..BANDS {
                epoch[b][px] = if e >= epochs {
                    NODATA
                } else if dup {
                    // Repeated observations exercise the earliest-epoch tie rule.
                    f64::NAN
                } else {
                    (rng.next_f64() * 1000.0).round() / 10.0
                };
            }
        }
    }
    // NaN marks a repeat of the previous epoch.
    for px in 0..PIXELS {
        for e in 1..EPOCHS {
            for b in 0..BANDS {
                if values[e][b][px].is_nan() {
                    values[e][b][px] = values[e - 1][b][px];
                }
            }
        }
    }
    let stack = ImageStack::new(
        values
            .iter()
            .map(|bands| {
                BandSet::new(
                    (0..BANDS).map(|b| format!("b{b}")).collect(),
                    bands.iter().map(|v| RasterGrid::new(spec, NODATA, v.clone()).expect("grid")).collect(),
                )
                .expect("band set")
            })
            .collect(),
    )
    .expect("stack");
    let t = Instant::now();
    let composite = medoid_composite(&stack).expect("composite");
    let elapsed = t.elapsed();

    let mut matches = 0;
    for px in 0..PIXELS {
        let valid: Vec<DVector<f64>> = (0..EPOCHS)
            .filter(|&e| values[e][0][px] != NODATA)
            .map(|e| DVector::from_iterator(BANDS, (0..BANDS).map(|b| values[e][b][px])))
            .collect();
        let k = valid.len();
        let dist = DMatrix::from_fn(k, k, |i, j| (&valid[i] - &valid[j]).norm());
        let sums: Vec<f64> = (0..k).map(|i| dist.row(i).sum()).collect();
        let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
        let best = sums.iter().position(|&s| s <= min * (1.0 + 1e-12)).expect("a candidate");
        let got = DVector::from_iterator(BANDS, composite.bands.iter().map(|b| b.values[px]));
        matches += usize::from(got == valid[best]);
    }
    Outcome::check(
        matches == PIXELS && within(elapsed, 1.0),
        format!("{matches}/{PIXELS} pixels match the exhaustive oracle, composite in {elapsed:.1?}"),
    )
}

// ------------------------------------------------------------------ 8

fn kriging_exactness() -> Outcome {
    let model = VariogramModel::spherical(0.0, 0.73, 5600.0).expect("model");
    let g = model.gamma(2800.0).expect("gamma");
    let mut rng = SplitMix64::new(31);
    let obs: Vec<KrigingObservation> = (0..25)
        .map(|_| {
            let (x, y) = (20_000.0 * rng.next_f64(), 20_000.0 * rng.next_f64());
            KrigingObservation {
                x,
                y,
                response: if rng.next_f64() < 0.4 { 1.0 } else { 0.0 },
                covariate: -3.0 + 6.0 * (y / 20_000.0) + 0.3 * rng.normal(),
            }
        })
        .collect();
    let uk = UniversalKriging::fit(&obs, model).expect("fit");
    let site_err = obs.iter().map(|o| (uk.predict(o.x, o.y, o.covariate) - o.response).abs()).fold(0.0, f64::max);

    // Independent dense solve of the same system at random targets.
    let n = obs.len();
    let gamma = |a: (f64, f64), b: (f64, f64)| model.gamma(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).unwrap();
    let mut a = DMatrix::zeros(n + 2, n + 2);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = gamma((obs[i].x, obs[i].y), (obs[j].x, obs[j].y));
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        a[(i, n + 1)] = obs[i].covariate;
        a[(n + 1, i)] = obs[i].covariate;
    }
    let lu = a.lu();
    let (mut sum_err, mut oracle_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let (x, y, c) = (20_000.0 * rng.next_f64(), 20_000.0 * rng.next_f64(), rng.normal());
        let (w, _) = uk.weights(x, y, c);
        sum_err = sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
        let mut b = DVector::zeros(n + 2);
        for i in 0..n {
            b[i] = gamma((obs[i].x, obs[i].y), (x, y));
        }
        b[n] = 1.0;
        b[n + 1] = c;
        let sol = lu.solve(&b).expect("oracle solve");
        let oracle_pred: f64 = (0..n).map(|i| sol[i] * obs[i].response).sum();
        oracle_err = oracle_err.max((uk.predict(x, y, c) - oracle_pred).abs());
    }
    let pass = site_err < 1e-9 && sum_err <= 1e-10 && (g - 0.5018).abs() <= 1e-4 && oracle_err < 1e-9;
    Outcome::check(
        pass,
        format!(
            "max site error {site_err:.1e}, max |Σw − 1| {sum_err:.1e}, γ(2800 m) = {g:.6}, dense-solve agreement {oracle_err:.1e}"
        ),
    )
}

// ------------------------------------------------------------------ 9

const FIXTURE_CLASSES: [Domain; 4] = [Domain::Spruce, Domain::Pine, Domain::Deciduous, Domain::NonForest];

/// Four well-separated Gaussian clusters in `p` features.
fn separable(n: usize, p: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Domain>) {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let k = rng.below_usize(4);
            let row = (0..p).map(|j| if j == k % p { 4.0 } else { 0.0 } + if j == (k + 1) % p { 2.0 * k as f64 } else { 0.0 } + 0.4 * rng.normal()).collect();
            (row, FIXTURE_CLASSES[k])
        })
        .unzip()
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

fn classifier_suite() -> Outcome {
    let t = Instant::now();
    let p = 4;
    let (rows, labels) = separable(600, p, 1);
    let train = Dataset::new(names(p), rows, &labels).expect("dataset");
    let params = TrainParams::default().with_ntrees(200).with_seed(9);
    let forest = Forest::train(&train, &params, None).expect("train");
    let (test_rows, test_labels) = separable(400, p, 2);
    let correct = test_rows.iter().zip(&test_labels).filter(|(r, l)| forest.predict(r).expect("predict") == **l).count();
    let oa = correct as f64 / test_rows.len() as f64;

    // One informative feature (class means 6 SD apart) among three noise
    // features, offered first.
    let mut rejected = 0;
    for seed in 0..20u64 {
        let mut rng = SplitMix64::new(1000 + seed);
        let (rows, labels): (Vec<Vec<f64>>, Vec<Domain>) = (0..200)
            .map(|_| {
                let k = rng.below_usize(2);
                let row = vec![6.0 * k as f64 + rng.normal(), rng.normal(), rng.normal(), rng.normal()];
                (row, FIXTURE_CLASSES[k])
            })
            .unzip();
        let data = Dataset::new(names(4), rows, &labels).expect("dataset");
        let cv = CvParams {
            k: 5,
            train: TrainParams::default().with_ntrees(50).with_seed(seed),
        };
        let sel = select_variables(&data, &[0, 1, 2, 3], &cv, seed).expect("selection");
        rejected += usize::from(sel.features == vec![0]);
    }

    let serial = Forest::train(&train, &params.clone().serial(), None).expect("serial");
    let identical = serial.to_json() == forest.to_json();

    // Strictly increasing maps of every feature. Rank-midpoint splits make
    // every tree choose the same features at the same ranks, so the forests
    // agree node for node and on every training sample.
    let transforms: [fn(f64) -> f64; 4] = [|x| x.exp(), |x| x * x * x + x, |x| (x + 10.0).ln(), |x| 2.0 * x - 7.0];
    let mut mapped = train.clone();
    for (j, f) in transforms.iter().enumerate() {
        mapped = mapped.map_feature(j, f);
    }
    let forest_t = Forest::train(&mapped, &params, None).expect("train transformed");
    let same_shape = forest.trees().iter().zip(forest_t.trees()).all(|(a, b)| {
        a.n_nodes() == b.n_nodes()
            && (0..a.n_nodes()).all(|i| match (a.node(i), b.node(i)) {
                (NodeView::Leaf { class: x }, NodeView::Leaf { class: y }) => x == y,
                (NodeView::Internal { feature: f, left: l, .. }, NodeView::Internal { feature: g, left: m, .. }) => {
                    f == g && l == m
                }
                _ => false,
            })
    });
    let invariant = same_shape && forest.predict_dataset(&train).unwrap() == forest_t.predict_dataset(&mapped).unwrap();

    let pass = oa >= 0.95 && rejected >= 18 && identical && invariant;
    Outcome::check(
        pass,
        format!(
            "held-out OA {:.1}%, noise rejected in {rejected}/20 seeds, serial = parallel: {identical}, monotone invariance: {invariant}, {:.1?}",
            100.0 * oa,
            t.elapsed()
        ),
    )
}

// ------------------------------------------------------------------ 10

/// Eight hashed features per cell; no storage, so any grid size fits.
struct ProceduralStack {
    spec: GridSpec,
}

const PROC_FEATURES: usize = 8;

fn procedural_value(row: usize, col: usize, j: usize) -> f64 {
    let h = mix64(mix64(((row as u64) << 32) | col as u64) ^ (j as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    // Smooth class signal on 64-cell blocks plus hashed noise.
    let block = mix64(((row / 64) as u64) << 32 | (col / 64) as u64) % 4;
    let signal = if j == block as usize { 1.0 } else { 0.0 };
    signal + 0.6 * ((h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
}

impl FeatureSource for ProceduralStack {
    fn spec(&self) -> GridSpec {
        self.spec
    }

    fn feature_names(&self) -> Vec<String> {
        names(PROC_FEATURES)
    }

    fn fill(&self, row: usize, col0: usize, len: usize, columns: &[usize], out: &mut [f64]) {
        let p = columns.len();
        for c in 0..len {
            for (k, &j) in columns.iter().enumerate() {
                out[c * p + k] = procedural_value(row, col0 + c, j);
            }
        }
    }
}

fn performance() -> Outcome {
    let mut rng = SplitMix64::new(10);
    let (rows, labels): (Vec<Vec<f64>>, Vec<Domain>) = (0..2000)
        .map(|_| {
            let (r, c) = (rng.below_usize(100_000), rng.below_usize(100_000));
            let block = (mix64(((r / 64) as u64) << 32 | (c / 64) as u64) % 4) as usize;
            ((0..PROC_FEATURES).map(|j| procedural_value(r, c, j)).collect(), FIXTURE_CLASSES[block])
        })
        .unzip();
    let data = Dataset::new(names(PROC_FEATURES), rows, &labels).expect("dataset");
    let forest = Forest::train(&data, &TrainParams::default().with_ntrees(500).with_seed(4), None).expect("train");

    let source = |n: usize| ProceduralStack {
        spec: GridSpec::new(0.0, n as f64 * 16.0, 16.0, n, n).expect("spec"),
    };
    let run = |n: usize, tile: usize| {
        let s = source(n);
        let mask = ClassMap::filled(s.spec, 1, mask_legend()).expect("mask");
        let t = Instant::now();
        let map = predict_map(&s, &mask, &forest, tile).expect("predict");
        (map, t.elapsed())
    };

    let (a, _) = run(300, 256);
    let (b, _) = run(300, 37);
    let tile_invariant = a.codes == b.codes;
    let (_, small) = run(1000, 256);
    let small_ok = within(small, 10.0);

    let threads = rayon::current_num_threads();
    let full_requested = std::env::var_os("FORESTAREA_FULL_PERF").is_some();
    let large = if threads >= 4 || full_requested {
        let (_, d) = run(10_000, 256);
        Some(d)
    } else {
        None
    };
    let large_text = match large {
        Some(d) => format!("10000² in {d:.1?}"),
        None => format!(
            "10000² skipped on {threads} thread(s), projected {:.0?}",
            small.mul_f64(100.0)
        ),
    };
    let large_ok = large.is_some_and(|d| within(d, 600.0));
    let detail = format!("{threads} thread(s): 1000² in {small:.1?} (limit 10 s), {large_text}, tile invariant: {tile_invariant}");
    let verdict = if tile_invariant && small_ok && large_ok {
        Verdict::Pass
    } else if tile_invariant && threads < 4 {
        Verdict::HardwareFail
    } else {
        Verdict::Fail
    };
    Outcome { verdict, detail }
}

fn main() {
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let landscape = std::cell::OnceCell::new();
    let default_landscape = || landscape.get_or_init(|| generate_landscape(&LandscapeConfig::default()).expect("landscape"));
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "metric reproduction", Box::new(metric_reproduction)),
        (2, "estimator oracle equivalence", Box::new(estimator_oracle)),
        (3, "perfect-map degeneracy", Box::new(perfect_map_degeneracy)),
        (4, "Monte Carlo calibration", Box::new(|| calibration(default_landscape()))),
        (5, "relative efficiency", Box::new(|| relative_efficiency(default_landscape()))),
        (6, "systematic overestimation", Box::new(systematic_overestimation)),
        (7, "medoid oracle", Box::new(medoid_oracle)),
        (8, "kriging exactness", Box::new(kriging_exactness)),
        (9, "classifier suite", Box::new(classifier_suite)),
        (10, "performance", Box::new(performance)),
    ];
    let mut fatal = 0;
    for (id, name, run) in &criteria {
        if only.is_some_and(|o| o != *id) {
            continue;
        }
        let out = run();
        let tag = match out.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                fatal += 1;
                "FAIL"
            }
            Verdict::HardwareFail => "FAIL (hardware)",
        };
        println!("criterion {id:>2} {tag:<15} {name}: {}", out.detail);
    }
    if fatal > 0 {
        eprintln!("{fatal} acceptance criteria failed");
        std::process::exit(1);
    }
}
