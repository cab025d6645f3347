//! Subcommand implementations. Every input is read and validated before
//! any output is written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};

use forestarea::accuracy::{weighted_confusion, LabelField};
use forestarea::classifier::{
    kfold_cv, mtry_divisor_grid, select_variables, tune as tune_grid, tune_csv, CvParams, Dataset, Forest, TrainParams,
};
use forestarea::estimation::{estimate as run_estimate, ma_variance_exact_mask_with, Estimate, Method, Stratum, VariancePolicy};
use forestarea::geostat::{logit_elevation, logit_elevation_grid, threshold_to_stratum, UniversalKriging, VariogramModel};
use forestarea::io::{
    format_estimate_summary, format_estimates, format_plots, read_observations, read_plots, read_strata, read_subpops,
    status_text, write_atomic, PlotTable, StratumRow,
};
use forestarea::raster::{
    class_areas, extract_plot_predictors, mask_legend, medoid_composite, predict_map, read_band_set,
    read_class_map, read_grid, write_band_set, write_class_map, write_grid, ClassMap, GridEncoding, ImageStack,
    DEFAULT_TILE_SIZE, PLOT_RADIUS_M,
};
use forestarea::simulation::{run_simulation, SimulationConfig};
use forestarea::{Domain, Error, Result};

pub enum Outcome {
    Done,
    /// Work finished but some estimator was inapplicable in strict mode.
    GateFailed,
}

fn ensure_exists(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::input(format!("{what} {} does not exist", path.display())))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(Error::input(format!("output directory {} does not exist", d.display())))
        }
        _ => Ok(()),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| Error::input(format!("{what}: cannot parse '{}'", x.trim()))))
        .collect()
}

// ---------------------------------------------------------------- composite

#[derive(Args, Debug)]
pub struct CompositeArgs {
    /// Band manifest of one epoch; repeat for every epoch.
    #[arg(long = "epoch", required = true)]
    epochs: Vec<PathBuf>,
    /// Output manifest; band files are written beside it.
    #[arg(long)]
    out: PathBuf,
    /// Write bands in the binary grid format.
    #[arg(long)]
    binary: bool,
}

pub fn composite(a: CompositeArgs) -> Result<Outcome> {
    for e in &a.epochs {
        ensure_exists(e, "epoch manifest")?;
    }
    ensure_parent(&a.out)?;
    let epochs = a.epochs.iter().map(|p| read_band_set(p)).collect::<Result<Vec<_>>>()?;
    let stack = ImageStack::new(epochs)?;
    let composite = medoid_composite(&stack)?;
    let enc = if a.binary { GridEncoding::Binary } else { GridEncoding::Ascii };
    write_band_set(&a.out, &composite, enc)?;
    println!("composited {} epochs × {} bands into {}", stack.epochs.len(), composite.n_bands(), a.out.display());
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- extract

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    plots: PathBuf,
    /// Band manifest of the predictor stack.
    #[arg(long)]
    bands: PathBuf,
    /// Plot CSV with one feature column per band (existing columns of the
    /// same name are replaced).
    #[arg(long)]
    out: PathBuf,
    /// Plot radius in meters; 18 m is tried when no pixel is valid.
    #[arg(long, default_value_t = PLOT_RADIUS_M)]
    radius: f64,
}

pub fn extract(a: ExtractArgs) -> Result<Outcome> {
    ensure_exists(&a.plots, "plot file")?;
    ensure_exists(&a.bands, "band manifest")?;
    ensure_parent(&a.out)?;
    let mut table = read_plots(&a.plots)?;
    let bands = read_band_set(&a.bands)?;
    let kept: Vec<usize> = (0..table.feature_names.len()).filter(|&i| !bands.names.contains(&table.feature_names[i])).collect();
    let (mut fallback, mut missing) = (0usize, 0usize);
    for p in &mut table.plots {
        let e = extract_plot_predictors(&bands, p.x, p.y, a.radius).map_err(|e| Error::input(format!("plot {}: {e}", p.id)))?;
        if e.radius_used != a.radius {
            fallback += 1;
        }
        let values = e.values.unwrap_or_else(|| {
            missing += 1;
            vec![f64::NAN; bands.n_bands()]
        });
        let mut row: Vec<f64> = kept.iter().map(|&i| p.predictors[i]).collect();
        row.extend(values);
        p.predictors = row;
    }
    let mut names: Vec<String> = kept.iter().map(|&i| table.feature_names[i].clone()).collect();
    names.extend(bands.names.iter().cloned());
    table.feature_names = names;
    write_atomic(&a.out, format_plots(&table).as_bytes())?;
    if missing > 0 {
        warn!("{missing} plots have no valid pixel within 18 m; their predictors are empty");
    }
    println!(
        "extracted {} bands for {} plots ({fallback} used the 18 m fallback, {missing} missing)",
        bands.n_bands(),
        table.plots.len()
    );
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- model data

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Plot CSV with predictor columns.
    #[arg(long)]
    plots: PathBuf,
    /// Predictor columns to use (comma separated; default all).
    #[arg(long)]
    features: Option<String>,
    /// Use every plot, not only those flagged in_model_set.
    #[arg(long)]
    all_plots: bool,
    /// Trees per forest.
    #[arg(long, default_value_t = 500)]
    ntrees: usize,
    /// Features tried per split (default: p / 3).
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Model dataset from the flagged plots (all plots if none is flagged or
/// `--all-plots`), skipping plots with missing predictors.
fn model_data(a: &ModelArgs) -> Result<Dataset> {
    ensure_exists(&a.plots, "plot file")?;
    let table = read_plots(&a.plots)?;
    let names: Vec<String> = match &a.features {
        Some(f) => f.split(',').map(|s| s.trim().to_ascii_lowercase()).collect(),
        None => table.feature_names.clone(),
    };
    if names.is_empty() {
        return Err(Error::input(format!("{}: no predictor columns", a.plots.display())));
    }
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            table
                .feature_names
                .iter()
                .position(|f| f == n)
                .ok_or_else(|| Error::input(format!("{}: no predictor column '{n}'", a.plots.display())))
        })
        .collect::<Result<_>>()?;
    let flagged = table.plots.iter().any(|p| p.in_model_set);
    let mut chosen = Vec::new();
    let mut skipped = 0;
    for p in &table.plots {
        if flagged && !a.all_plots && !p.in_model_set {
            continue;
        }
        let mut q = p.clone();
        q.predictors = cols.iter().map(|&c| p.predictors[c]).collect();
        if q.predictors.iter().any(|v| !v.is_finite()) {
            skipped += 1;
            continue;
        }
        chosen.push(q);
    }
    if skipped > 0 {
        warn!("{skipped} plots with missing predictors left out of the model data");
    }
    info!("model data: {} plots, {} predictors", chosen.len(), names.len());
    Dataset::from_plots(&chosen, names)
}

fn train_params(a: &ModelArgs) -> TrainParams {
    let mut p = TrainParams::default().with_ntrees(a.ntrees).with_seed(a.seed);
    if let Some(m) = a.mtry {
        p = p.with_mtry(m);
    }
    p
}

// ---------------------------------------------------------------- train

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Forest JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Also report k-fold cross-validated OA.
    #[arg(long)]
    cv_folds: Option<usize>,
}

pub fn train(a: TrainArgs) -> Result<Outcome> {
    ensure_parent(&a.out)?;
    let data = model_data(&a.model)?;
    let params = train_params(&a.model);
    let forest = Forest::train(&data, &params, None)?;
    write_atomic(&a.out, forest.to_json().as_bytes())?;
    println!("trained {} trees, mtry {}, on {} plots", forest.ntrees, forest.mtry, data.n_samples());
    let imp = forest.gini_importance();
    let mut order: Vec<usize> = (0..imp.len()).collect();
    order.sort_by(|&x, &y| imp[y].total_cmp(&imp[x]).then(x.cmp(&y)));
    println!("gini importance:");
    for i in order {
        println!("  {:<16}{:.6}", forest.feature_names[i], imp[i]);
    }
    if let Some(k) = a.cv_folds {
        let cv = kfold_cv(&data, &CvParams { k, train: params }, a.model.seed)?;
        println!("{k}-fold cross-validated weighted OA: {:.1}%", 100.0 * cv.oa);
    }
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- select-vars

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Selection trace CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

pub fn select_vars(a: SelectArgs) -> Result<Outcome> {
    ensure_parent(&a.out)?;
    let data = model_data(&a.model)?;
    let params = CvParams {
        k: a.k,
        train: train_params(&a.model),
    };
    let candidates: Vec<usize> = (0..data.n_features()).collect();
    let sel = select_variables(&data, &candidates, &params, a.model.seed)?;
    write_atomic(&a.out, sel.trace.to_csv(data.feature_names()).as_bytes())?;
    let names: Vec<&str> = sel.features.iter().map(|&f| data.feature_names()[f].as_str()).collect();
    println!("selected {} of {} predictors: {}", names.len(), data.n_features(), names.join(", "));
    println!("cross-validated weighted OA: {:.1}%", 100.0 * sel.oa);
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- tune

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Tuning table CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "100,200,300,400,500")]
    ntrees_grid: String,
    /// mtry candidates as divisors of the predictor count.
    #[arg(long, default_value = "1,2,3,4,5,6")]
    mtry_divisors: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

pub fn tune(a: TuneArgs) -> Result<Outcome> {
    ensure_parent(&a.out)?;
    let ntrees: Vec<usize> = parse_list(&a.ntrees_grid, "--ntrees-grid")?;
    let divisors: Vec<usize> = parse_list(&a.mtry_divisors, "--mtry-divisors")?;
    if divisors.contains(&0) {
        return Err(Error::input("--mtry-divisors must be positive"));
    }
    let data = model_data(&a.model)?;
    let mtry = mtry_divisor_grid(data.n_features(), divisors);
    let base = CvParams {
        k: a.k,
        train: train_params(&a.model),
    };
    let rows = tune_grid(&data, &ntrees, &mtry, &base, a.model.seed)?;
    write_atomic(&a.out, tune_csv(&rows).as_bytes())?;
    if let Some(best) = rows.iter().max_by(|x, y| x.oa.total_cmp(&y.oa)) {
        println!("best: ntrees {}, mtry {}, OA {:.1}%", best.ntrees, best.mtry, 100.0 * best.oa);
    }
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- predict

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Forest JSON.
    #[arg(long)]
    forest: PathBuf,
    /// Band manifest; must contain every forest predictor by name.
    #[arg(long)]
    bands: PathBuf,
    /// Forest mask grid (0 non-forest, 1 forest, 255 nodata).
    #[arg(long)]
    mask: PathBuf,
    /// Class map output (.asc, or .bin for binary).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    tile_size: usize,
    /// Class areas CSV.
    #[arg(long)]
    areas: Option<PathBuf>,
    /// Stratum grid; with --strata-out writes mapped class areas per stratum
    /// in the strata CSV layout.
    #[arg(long, requires = "strata_out")]
    strata_map: Option<PathBuf>,
    #[arg(long, requires = "strata_map")]
    strata_out: Option<PathBuf>,
}

fn label_of(code: u8) -> String {
    Domain::from_code(code).map(|d| d.as_str().to_string()).unwrap_or_else(|| "nodata".into())
}

pub fn predict(a: PredictArgs) -> Result<Outcome> {
    ensure_exists(&a.forest, "forest file")?;
    ensure_exists(&a.bands, "band manifest")?;
    ensure_exists(&a.mask, "mask grid")?;
    if let Some(s) = &a.strata_map {
        ensure_exists(s, "stratum grid")?;
    }
    for p in [Some(&a.out), a.areas.as_ref(), a.strata_out.as_ref()].into_iter().flatten() {
        ensure_parent(p)?;
    }
    let text = std::fs::read_to_string(&a.forest).map_err(|e| Error::io(&a.forest, e))?;
    let forest = Forest::from_json(&text).map_err(|e| Error::input(format!("{}: {e}", a.forest.display())))?;
    let bands = read_band_set(&a.bands)?;
    let mask = read_class_map(&a.mask, mask_legend())?;
    let strata = match &a.strata_map {
        Some(p) => {
            let g = read_grid(p)?;
            let legend = (0..255u8).map(|c| (c, format!("stratum-{c}"))).collect();
            Some(ClassMap::from_raster(&g, legend).map_err(|e| Error::format(p, 0, e.to_string()))?)
        }
        None => None,
    };
    let map = predict_map(&bands, &mask, &forest, a.tile_size)?;
    write_class_map(&a.out, &map, GridEncoding::from_path(&a.out))?;
    let areas = class_areas(&map);
    if let Some(p) = &a.areas {
        let mut s = String::from("code,label,area_km2\n");
        for (c, km2) in &areas {
            let _ = writeln!(s, "{c},{},{km2}", label_of(*c));
        }
        write_atomic(p, s.as_bytes())?;
    }
    if let (Some(st), Some(out)) = (&strata, &a.strata_out) {
        let counts = forestarea::simulation::counts_by_stratum(&map, st)?;
        let cell = map.spec.cell_area_km2();
        let mut s = String::from("stratum_id,area_km2");
        for d in Domain::LABELS {
            let _ = write!(s, ",mapped_{}_km2", d.as_str().replace('-', "_"));
        }
        s.push('\n');
        for (h, c) in &counts {
            let total: u64 = c.iter().enumerate().filter(|(k, _)| *k != 255).map(|(_, n)| n).sum();
            let _ = write!(s, "{h},{}", total as f64 * cell);
            for d in Domain::LABELS {
                let _ = write!(s, ",{}", c[d.code().expect("label") as usize] as f64 * cell);
            }
            s.push('\n');
        }
        write_atomic(out, s.as_bytes())?;
    }
    for (c, km2) in areas {
        println!("{:<12}{km2:>14.4} km²", label_of(c));
    }
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- accuracy

#[derive(Args, Debug)]
pub struct AccuracyArgs {
    #[arg(long)]
    plots: PathBuf,
    /// Percent confusion matrix CSV with UA, PA and OA.
    #[arg(long)]
    out: PathBuf,
    /// Raw weight matrix CSV at full precision.
    #[arg(long)]
    weights_out: Option<PathBuf>,
    /// Prediction column: predicted or predicted_exact_mask.
    #[arg(long, default_value = "predicted")]
    prediction: String,
}

pub fn accuracy(a: AccuracyArgs) -> Result<Outcome> {
    ensure_exists(&a.plots, "plot file")?;
    ensure_parent(&a.out)?;
    if let Some(w) = &a.weights_out {
        ensure_parent(w)?;
    }
    let field = match a.prediction.as_str() {
        "predicted" => LabelField::Predicted,
        "predicted_exact_mask" => LabelField::PredictedExactMask,
        other => return Err(Error::input(format!("--prediction must be predicted or predicted_exact_mask, got '{other}'"))),
    };
    let table = read_plots(&a.plots)?;
    let m = weighted_confusion(&table.plots, LabelField::Observed, field)?;
    write_atomic(&a.out, m.to_percent_csv().as_bytes())?;
    if let Some(w) = &a.weights_out {
        write_atomic(w, m.to_weights_csv().as_bytes())?;
    }
    let pct = |v: Option<f64>| v.map(|v| format!("{:.1}", 100.0 * v)).unwrap_or_else(|| "-".into());
    println!("overall accuracy {}%", pct(m.oa()));
    println!("{:<12}{:>8}{:>8}", "class", "UA %", "PA %");
    for &l in m.labels() {
        println!("{:<12}{:>8}{:>8}", l.as_str(), pct(m.ua(l)), pct(m.pa(l)));
    }
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- estimate

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    plots: PathBuf,
    /// Strata CSV; map-based methods need its mapped_<label>_km2 columns.
    #[arg(long)]
    strata: PathBuf,
    /// direct, ma, ps or all.
    #[arg(long, default_value = "all")]
    method: String,
    /// A label, forest-total, or all (spruce, pine, deciduous, non-forest,
    /// forest-total).
    #[arg(long, default_value = "all")]
    domain: String,
    /// Report CSV.
    #[arg(long)]
    out: PathBuf,
    /// Return totals with a partial variance when a stratum or group has a
    /// single plot, instead of failing.
    #[arg(long)]
    allow_partial: bool,
    /// Also write the model-assisted variance with an exact forest mask
    /// (uses predicted_exact_mask).
    #[arg(long)]
    exact_mask_out: Option<PathBuf>,
}

pub const REPORT_DOMAINS: [Domain; 5] = [Domain::Spruce, Domain::Pine, Domain::Deciduous, Domain::NonForest, Domain::ForestTotal];

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    if s.eq_ignore_ascii_case("all") {
        Ok(Method::ALL.to_vec())
    } else {
        parse_list(s, "--method")
    }
}

fn parse_domains(s: &str) -> Result<Vec<Domain>> {
    if s.eq_ignore_ascii_case("all") {
        Ok(REPORT_DOMAINS.to_vec())
    } else {
        s.split(',').map(|d| d.parse()).collect()
    }
}

/// Strata with sampling weights from the plot counts when not given, and
/// mapped areas of `target` per stratum.
fn design_strata(rows: &[StratumRow], table: &PlotTable) -> Vec<Stratum> {
    rows.iter()
        .map(|r| {
            let n = table.plots.iter().filter(|p| p.stratum_id == r.stratum.id).count();
            let mut s = Stratum::from_count(r.stratum.id, r.stratum.area, n);
            if r.stratum.sampling_weight.is_finite() {
                s.sampling_weight = r.stratum.sampling_weight;
            }
            s
        })
        .collect()
}

fn mapped_for(rows: &[StratumRow], target: Domain, path: &Path) -> Result<BTreeMap<u32, f64>> {
    rows.iter()
        .map(|r| {
            let a = r.mapped_area(target).ok_or_else(|| {
                Error::input(format!("{}: stratum {} has no mapped {target} area", path.display(), r.stratum.id))
            })?;
            Ok((r.stratum.id, a))
        })
        .collect()
}

pub fn estimate(a: EstimateArgs) -> Result<Outcome> {
    ensure_exists(&a.plots, "plot file")?;
    ensure_exists(&a.strata, "strata file")?;
    ensure_parent(&a.out)?;
    if let Some(p) = &a.exact_mask_out {
        ensure_parent(p)?;
    }
    let methods = parse_methods(&a.method)?;
    let domains = parse_domains(&a.domain)?;
    let table = read_plots(&a.plots)?;
    let rows = read_strata(&a.strata)?;
    let strata = design_strata(&rows, &table);
    let policy = if a.allow_partial { VariancePolicy::AllowPartial } else { VariancePolicy::Strict };
    let mut out: Vec<(Method, Domain, Estimate)> = Vec::new();
    for &d in &domains {
        let mapped = if methods.iter().any(|&m| m != Method::Direct) {
            mapped_for(&rows, d, &a.strata)?
        } else {
            BTreeMap::new()
        };
        for &m in &methods {
            out.push((m, d, run_estimate(&table.plots, &strata, m, d, &mapped, policy)?));
        }
    }
    write_atomic(&a.out, format_estimates(&out).as_bytes())?;
    if let Some(p) = &a.exact_mask_out {
        let mut s = String::from("domain,variance_km4,se_km2,variance_status\n");
        for &d in &domains {
            let v = ma_variance_exact_mask_with(&table.plots, &strata, d, policy)?;
            let status = status_text(&Estimate {
                total: 0.0,
                variance: v.variance,
                se: v.se,
                cv: None,
                correction: None,
                synthetic: None,
                relative_efficiency: None,
                status: v.status.clone(),
                strata: Vec::new(),
            });
            let _ = writeln!(s, "{d},{},{},{status}", v.variance, v.se);
        }
        write_atomic(p, s.as_bytes())?;
    }
    print!("{}", format_estimate_summary(&out));
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- smallarea

#[derive(Args, Debug)]
pub struct SmallareaArgs {
    #[arg(long)]
    plots: PathBuf,
    /// Sub-population CSV (subpop_id, stratum_id, area_km2, mapped_<label>_km2).
    #[arg(long)]
    subpops: PathBuf,
    /// Plot membership CSV (plot_id, subpop_id).
    #[arg(long)]
    membership: PathBuf,
    /// Design strata CSV, used to check sub-population areas.
    #[arg(long)]
    strata: Option<PathBuf>,
    /// direct, ma or ps.
    #[arg(long, default_value = "ma")]
    method: String,
    #[arg(long, default_value = "forest-total")]
    domain: String,
    /// Results CSV.
    #[arg(long)]
    out: PathBuf,
    /// Exit with code 4 when any stratum of any sub-population fails the gate.
    #[arg(long)]
    strict: bool,
}

pub const SMALLAREA_CSV_HEADER: &str =
    "subpop_id,domain,method,scope,status,n_plots,total_km2,variance,se,re";

pub fn smallarea(a: SmallareaArgs) -> Result<Outcome> {
    ensure_exists(&a.plots, "plot file")?;
    ensure_exists(&a.subpops, "sub-population file")?;
    ensure_exists(&a.membership, "membership file")?;
    if let Some(s) = &a.strata {
        ensure_exists(s, "strata file")?;
    }
    ensure_parent(&a.out)?;
    let method: Method = a.method.parse()?;
    let target: Domain = a.domain.parse()?;
    let table = read_plots(&a.plots)?;
    let subs = read_subpops(&a.subpops, &a.membership)?;
    if let Some(p) = &a.strata {
        let strata: Vec<Stratum> = read_strata(p)?.into_iter().map(|r| r.stratum).collect();
        for s in &subs {
            s.validate(&strata)?;
        }
    }
    let known: std::collections::BTreeSet<&str> = table.plots.iter().map(|p| p.id.as_str()).collect();
    for s in &subs {
        if let Some(id) = s.plot_ids.iter().find(|id| !known.contains(id.as_str())) {
            return Err(Error::input(format!("{}: plot {id} is not in {}", a.membership.display(), a.plots.display())));
        }
    }
    let results: Vec<_> = forestarea::smallarea::estimate_all(&subs, &table.plots, method, target)
        .into_iter()
        .collect::<Result<_>>()?;
    let mut s = format!("{SMALLAREA_CSV_HEADER}\n");
    let mut any_fail = false;
    let row = |s: &mut String, id: &str, scope: &str, status: &str, n: usize, e: Option<&Estimate>| {
        let (t, v, se, re) = match e {
            Some(e) => (
                e.total.to_string(),
                e.variance.to_string(),
                e.se.to_string(),
                e.relative_efficiency.map(|r| r.to_string()).unwrap_or_default(),
            ),
            None => Default::default(),
        };
        let _ = writeln!(s, "{id},{target},{method},{scope},{status},{n},{t},{v},{se},{re}");
    };
    for r in &results {
        any_fail |= r.partial;
        for (v, sr) in r.verdict.strata.iter().zip(&r.strata) {
            let status = if v.pass { "applicable" } else { "inapplicable" };
            row(&mut s, &r.subpop_id, &v.stratum_id.to_string(), status, v.n_plots, sr.estimate.as_ref());
        }
        let status = match (&r.aggregate, r.partial) {
            (None, _) => "inapplicable",
            (Some(_), true) => "partial",
            (Some(_), false) => "applicable",
        };
        let n: usize = r.verdict.strata.iter().filter(|v| v.pass).map(|v| v.n_plots).sum();
        row(&mut s, &r.subpop_id, "all", status, n, r.aggregate.as_ref());
    }
    write_atomic(&a.out, s.as_bytes())?;
    let ok = results.iter().filter(|r| r.aggregate.is_some()).count();
    let full = results.iter().filter(|r| !r.partial).count();
    println!(
        "{method} estimates of {target}: {ok} of {} sub-populations estimable in at least one stratum, {full} in every stratum",
        results.len()
    );
    if a.strict && any_fail {
        eprintln!("error: the {method} gate failed in at least one stratum (strict mode)");
        return Ok(Outcome::GateFailed);
    }
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- krige-strata

#[derive(Args, Debug)]
pub struct KrigeArgs {
    /// Observation CSV (x, y, response).
    #[arg(long)]
    observations: PathBuf,
    /// Elevation grid (m); its logit transform is the drift covariate.
    #[arg(long)]
    dem: PathBuf,
    /// Stratum map output (1 below the cut, 2 at or above it).
    #[arg(long)]
    out: PathBuf,
    /// Continuous kriged surface output.
    #[arg(long)]
    prediction_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    nugget: f64,
    #[arg(long, default_value_t = 0.73)]
    sill: f64,
    /// Variogram range, m.
    #[arg(long, default_value_t = 5600.0)]
    range: f64,
    #[arg(long, default_value_t = 0.5)]
    cut: f64,
}

pub fn krige_strata(a: KrigeArgs) -> Result<Outcome> {
    ensure_exists(&a.observations, "observation file")?;
    ensure_exists(&a.dem, "elevation grid")?;
    ensure_parent(&a.out)?;
    if let Some(p) = &a.prediction_out {
        ensure_parent(p)?;
    }
    let model = VariogramModel::spherical(a.nugget, a.sill, a.range)?;
    let dem = read_grid(&a.dem)?;
    let max = dem.values.iter().filter(|&&v| !dem.is_nodata(v)).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut obs = read_observations(&a.observations)?;
    for (i, o) in obs.iter_mut().enumerate() {
        let cell = dem.spec.cell_at(o.x, o.y).and_then(|(r, c)| dem.get(r, c));
        let e = cell.ok_or_else(|| {
            Error::format(&a.observations, i + 2, format!("no elevation at ({}, {})", o.x, o.y))
        })?;
        o.covariate = logit_elevation(e, max);
    }
    let uk = UniversalKriging::fit(&obs, model)?;
    let pred = uk.predict_grid(&logit_elevation_grid(&dem));
    let strata = threshold_to_stratum(&pred, a.cut);
    write_class_map(&a.out, &strata, GridEncoding::from_path(&a.out))?;
    if let Some(p) = &a.prediction_out {
        write_grid(p, &pred, GridEncoding::from_path(p))?;
    }
    let h = strata.histogram();
    let cell = strata.spec.cell_area_km2();
    println!("stratum 1: {:.4} km², stratum 2: {:.4} km²", h[1] as f64 * cell, h[2] as f64 * cell);
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- simulate

#[derive(Args, Debug)]
#[command(after_long_help = "CONFIG KEYS\n  seed, nrows, ncols, cell_size, patch_scale, strata (area fractions),\n  \
mixture.<h> (spruce, pine, deciduous, non-forest fractions), bands,\n  mean.<label> (one mean per band), noise_sd, \
replicates, design (srs|systematic),\n  plots_per_stratum (one value or one per stratum), map (perfect|random|noisy:<acc>|forest),\n  \
map_ntrees, map_training_plots, mc_seed. Lines starting with '#' are comments.")]
pub struct SimulateArgs {
    /// Key-value config file (defaults are used when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report CSV.
    #[arg(long)]
    out: PathBuf,
    /// Human-readable summary output.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Overrides the config's replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Overrides the config's Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn simulate(a: SimulateArgs) -> Result<Outcome> {
    if let Some(c) = &a.config {
        ensure_exists(c, "config file")?;
    }
    ensure_parent(&a.out)?;
    if let Some(p) = &a.summary {
        ensure_parent(p)?;
    }
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            SimulationConfig::parse(&text, p)?
        }
        None => SimulationConfig::default(),
    };
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = a.seed {
        cfg.mc_seed = s;
    }
    let report = run_simulation(&cfg)?;
    write_atomic(&a.out, report.to_csv().as_bytes())?;
    let summary = report.summary();
    if let Some(p) = &a.summary {
        write_atomic(p, summary.as_bytes())?;
    }
    print!("{summary}");
    Ok(Outcome::Done)
}
