use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forestarea"))
        .args(args)
        .env_remove("FORESTAREA_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert_eq!(code(&o), 0, "{args:?} failed: {}", stderr(&o));
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// Exact rational values from an independent oracle over the 12-plot fixture:
// (domain, method, total, variance, correction, synthetic, re).
#[rustfmt::skip]
const FIXTURE_ORACLE: [(&str, &str, f64, f64, Option<f64>, Option<f64>, Option<f64>); 15] = [
    ("spruce", "direct", 55.0, 505.0, None, None, None),
    ("spruce", "ma", 65.0, 325.0, Some(25.0), Some(40.0), Some(505.0 / 325.0)),
    ("spruce", "ps", 62.5, 256.25, None, None, Some(505.0 / 256.25)),
    ("pine", "direct", 50.0, 520.0, None, None, None),
    ("pine", "ma", 40.0, 880.0, Some(-10.0), Some(50.0), Some(520.0 / 880.0)),
    ("pine", "ps", 48.75, 90125.0 / 144.0, None, None, Some(520.0 * 144.0 / 90125.0)),
    ("deciduous", "direct", 20.0, 160.0, None, None, None),
    ("deciduous", "ma", 25.0, 100.0, Some(-10.0), Some(35.0), Some(1.6)),
    ("deciduous", "ps", 70.0 / 3.0, 1225.0 / 9.0, None, None, Some(160.0 * 9.0 / 1225.0)),
    ("non-forest", "direct", 15.0, 225.0, None, None, None),
    ("non-forest", "ma", 10.0, 225.0, Some(-15.0), Some(25.0), Some(1.0)),
    ("non-forest", "ps", 12.5, 156.25, None, None, Some(1.44)),
    ("forest-total", "direct", 135.0, 225.0, None, None, None),
    ("forest-total", "ma", 140.0, 225.0, Some(15.0), Some(125.0), Some(1.0)),
    ("forest-total", "ps", 137.5, 156.25, None, None, Some(1.44)),
];

fn close(got: &str, want: Option<f64>) -> bool {
    match want {
        None => got.is_empty(),
        Some(w) => {
            let g: f64 = got.parse().unwrap();
            (g - w).abs() <= 1e-12 * w.abs().max(1.0)
        }
    }
}

#[test]
fn estimate_fixture_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("est.csv");
    ok(&["estimate", "--plots", p(&fixture("plots12.csv")), "--strata", p(&fixture("strata12.csv")), "--method", "all", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "domain,method,total_km2,variance,se,cv,correction,synthetic,re,variance_status");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), FIXTURE_ORACLE.len());
    for (r, (d, m, t, v, c, s, re)) in rows.iter().zip(FIXTURE_ORACLE) {
        assert_eq!((r[0], r[1]), (d, m));
        assert!(close(r[2], Some(t)), "{d} {m} total {}", r[2]);
        assert!(close(r[3], Some(v)), "{d} {m} variance {}", r[3]);
        assert!(close(r[4], Some(v.sqrt())), "{d} {m} se {}", r[4]);
        assert!(close(r[6], c) && close(r[7], s), "{d} {m} correction/synthetic");
        assert!(close(r[8], re), "{d} {m} re {}", r[8]);
        assert_eq!(r[9], "complete");
    }
}

#[test]
fn single_method_and_domain() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("est.csv");
    let o = ok(&[
        "estimate", "--plots", p(&fixture("plots12.csv")), "--strata", p(&fixture("strata12.csv")),
        "--method", "ps", "--domain", "pine", "--out", p(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("pine,ps,48.75,"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("48.75"));
}

#[test]
fn exact_mask_variance_report() {
    let dir = TempDir::new().unwrap();
    let (out, em) = (dir.path().join("est.csv"), dir.path().join("em.csv"));
    ok(&[
        "estimate", "--plots", p(&fixture("plots12.csv")), "--strata", p(&fixture("strata12.csv")),
        "--method", "ma", "--domain", "non-forest", "--out", p(&out), "--exact-mask-out", p(&em),
    ]);
    let text = fs::read_to_string(&em).unwrap();
    // Every residual vanishes for non-forest once the mask is exact.
    assert_eq!(text.lines().nth(1).unwrap(), "non-forest,0,0,complete");
}

#[test]
fn accuracy_fixture() {
    let dir = TempDir::new().unwrap();
    let (pct, w) = (dir.path().join("acc.csv"), dir.path().join("w.csv"));
    let o = ok(&["accuracy", "--plots", p(&fixture("plots12.csv")), "--out", p(&pct), "--weights-out", p(&w)]);
    // Correct plots carry 2·15 + 15 + 15 + 2·10 + 10 = 90 of 150 km² of weight.
    assert!(String::from_utf8_lossy(&o.stdout).contains("overall accuracy 60.0%"));
    let text = fs::read_to_string(&pct).unwrap();
    assert!(text.contains("overall_accuracy,,,,,,60.0"));
    assert!(fs::read_to_string(&w).unwrap().lines().count() > 5);
}

#[test]
fn unknown_flag_is_input_error_with_usage() {
    let o = run(&["estimate", "--no-such-flag"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Usage"));
    let o = run(&["frobnicate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn help_lists_formats() {
    let o = ok(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in ["Plot CSV", "Strata CSV", "Band manifest", "EXIT CODES", "FORESTAREA_THREADS"] {
        assert!(text.contains(needle), "help lacks {needle}");
    }
}

#[test]
fn missing_input_names_the_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    let o = run(&["estimate", "--plots", "/nonexistent/plots.csv", "--strata", p(&fixture("strata12.csv")), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/nonexistent/plots.csv"));
    assert!(!out.exists());
}

#[test]
fn malformed_row_names_file_and_line() {
    let dir = TempDir::new().unwrap();
    let plots = dir.path().join("plots.csv");
    let text = fs::read_to_string(fixture("plots12.csv")).unwrap().replace("p04,150,650,1,pine", "p04,150,650,1,larch");
    fs::write(&plots, text).unwrap();
    let o = run(&["estimate", "--plots", p(&plots), "--strata", p(&fixture("strata12.csv")), "--out", p(&dir.path().join("e.csv"))]);
    assert_eq!(code(&o), 2);
    let e = stderr(&o);
    assert!(e.contains("plots.csv") && e.contains(":5"), "{e}");
}

#[test]
fn singleton_stratum_is_numeric_error_unless_partial() {
    let dir = TempDir::new().unwrap();
    let plots = dir.path().join("plots.csv");
    let strata = dir.path().join("strata.csv");
    let text = fs::read_to_string(fixture("plots12.csv")).unwrap().replace("p12,750,150,2,", "p12,750,150,3,");
    fs::write(&plots, text).unwrap();
    fs::write(&strata, "stratum_id,area_km2\n1,90\n2,50\n3,10\n").unwrap();
    let out = dir.path().join("e.csv");
    let args = ["estimate", "--plots", p(&plots), "--strata", p(&strata), "--method", "direct", "--out", p(&out)];
    assert_eq!(code(&run(&args)), 3);
    let mut partial = args.to_vec();
    partial.push("--allow-partial");
    ok(&partial);
    assert!(fs::read_to_string(&out).unwrap().contains("partial:3"));
}

fn smallarea_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let subs = dir.join("subpops.csv");
    let members = dir.join("members.csv");
    fs::write(
        &subs,
        "subpop_id,stratum_id,area_km2,mapped_spruce_km2,mapped_pine_km2,mapped_deciduous_km2,mapped_non_forest_km2\n\
         north,1,45,20,12.5,0,12.5\nsouth,2,30,0,12.5,17.5,0\n",
    )
    .unwrap();
    let mut m = String::from("plot_id,subpop_id\n");
    for i in 1..=12 {
        let _ = writeln!(m, "p{i:02},{}", if i <= 6 { "north" } else { "south" });
    }
    fs::write(&members, m).unwrap();
    (subs, members)
}

#[test]
fn smallarea_gates_and_strict_exit() {
    let dir = TempDir::new().unwrap();
    let (subs, members) = smallarea_inputs(dir.path());
    let out = dir.path().join("sa.csv");
    let (plots, strata) = (fixture("plots12.csv"), fixture("strata12.csv"));
    let base = [
        "smallarea", "--plots", p(&plots), "--subpops", p(&subs), "--membership", p(&members),
        "--strata", p(&strata), "--out", p(&out),
    ];
    let mut direct = base.to_vec();
    direct.extend(["--method", "direct", "--domain", "spruce", "--strict"]);
    ok(&direct);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("north,spruce,direct,1,applicable,6,"));
    assert!(text.contains("north,spruce,direct,all,applicable,6,"));

    // Six plots per stratum are far below the model-assisted minimum.
    let mut ma = base.to_vec();
    ma.extend(["--method", "ma"]);
    ok(&ma);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("north,forest-total,ma,1,inapplicable,6,,,,"));
    ma.push("--strict");
    assert_eq!(code(&run(&ma)), 4);
}

#[test]
fn smallarea_unknown_plot_is_input_error() {
    let dir = TempDir::new().unwrap();
    let (subs, members) = smallarea_inputs(dir.path());
    let mut m = fs::read_to_string(&members).unwrap();
    m.push_str("p99,north\n");
    fs::write(&members, m).unwrap();
    let o = run(&[
        "smallarea", "--plots", p(&fixture("plots12.csv")), "--subpops", p(&subs), "--membership", p(&members),
        "--out", p(&dir.path().join("sa.csv")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("p99"));
}

fn ascii_grid(path: &Path, nrows: usize, ncols: usize, cell: f64, f: impl Fn(usize, usize) -> f64) {
    let mut s = format!("ncols {ncols}\nnrows {nrows}\nxllcorner 0\nyllcorner 0\ncellsize {cell}\nNODATA_value -9999\n");
    for r in 0..nrows {
        let row: Vec<String> = (0..ncols).map(|c| f(r, c).to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

/// Three epochs of a two-band 34 × 30 stack (30 m cells) covering the
/// fixture plots, with a cloud in epoch 2.
fn write_epochs(dir: &Path) -> Vec<PathBuf> {
    (0..3)
        .map(|e| {
            let manifest = dir.join(format!("epoch{e}.txt"));
            for b in 0..2 {
                ascii_grid(&dir.join(format!("e{e}b{b}.asc")), 34, 30, 30.0, |r, c| {
                    if e == 2 && (10..20).contains(&r) {
                        return 5000.0;
                    }
                    let base = if b == 0 { c as f64 / 30.0 } else { 1.0 - r as f64 / 34.0 };
                    base + 0.01 * e as f64
                });
            }
            fs::write(&manifest, format!("b1 = e{e}b0.asc\nb2 = e{e}b1.asc\n")).unwrap();
            manifest
        })
        .collect()
}

#[test]
fn raster_pipeline_is_thread_count_invariant() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let epochs = write_epochs(d);
    let comp = d.join("comp.txt");
    ok(&["composite", "--epoch", p(&epochs[0]), "--epoch", p(&epochs[1]), "--epoch", p(&epochs[2]), "--out", p(&comp)]);
    let extracted = d.join("plots_x.csv");
    ok(&["extract", "--plots", p(&fixture("plots12.csv")), "--bands", p(&comp), "--out", p(&extracted)]);
    let header = fs::read_to_string(&extracted).unwrap().lines().next().unwrap().to_string();
    assert!(header.ends_with(",b1,b2"), "{header}");
    ascii_grid(&d.join("mask.asc"), 34, 30, 30.0, |r, c| match (r, c) {
        (0, 0) => -9999.0,
        (_, c) if c < 3 => 0.0,
        _ => 1.0,
    });
    ascii_grid(&d.join("strata.asc"), 34, 30, 30.0, |r, _| if r < 17 { 1.0 } else { 2.0 });

    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let forest = d.join(format!("forest{threads}.json"));
        let map = d.join(format!("map{threads}.asc"));
        let areas = d.join(format!("areas{threads}.csv"));
        let strata_out = d.join(format!("strata{threads}.csv"));
        ok(&["--threads", threads, "train", "--plots", p(&extracted), "--out", p(&forest), "--ntrees", "25", "--seed", "4"]);
        ok(&[
            "--threads", threads, "predict", "--forest", p(&forest), "--bands", p(&comp), "--mask", p(&d.join("mask.asc")),
            "--out", p(&map), "--tile-size", if threads == "1" { "7" } else { "64" }, "--areas", p(&areas),
            "--strata-map", p(&d.join("strata.asc")), "--strata-out", p(&strata_out),
        ]);
        outputs.push([forest, map, areas, strata_out].map(|f| fs::read(f).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);

    // The per-stratum areas feed straight back into `estimate`.
    let strata_csv = String::from_utf8(outputs[0][3].clone()).unwrap();
    assert!(strata_csv.starts_with("stratum_id,area_km2,mapped_spruce_km2"));
    let map = String::from_utf8(outputs[0][1].clone()).unwrap();
    let first = map.lines().nth(6).unwrap();
    assert!(first.starts_with("255 0 0 "), "{first}");
}

#[test]
fn train_reports_cross_validation_and_selection() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let forest = d.join("f.json");
    let o = ok(&["train", "--plots", p(&fixture("plots12.csv")), "--out", p(&forest), "--ntrees", "20", "--cv-folds", "3"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("gini importance") && text.contains("3-fold"));
    let trace = d.join("trace.csv");
    ok(&["select-vars", "--plots", p(&fixture("plots12.csv")), "--out", p(&trace), "--ntrees", "20", "--k", "3"]);
    assert!(fs::read_to_string(&trace).unwrap().lines().count() > 1);
    let table = d.join("tune.csv");
    ok(&[
        "tune", "--plots", p(&fixture("plots12.csv")), "--out", p(&table), "--ntrees-grid", "10,20",
        "--mtry-divisors", "1,2", "--k", "3",
    ]);
    assert_eq!(fs::read_to_string(&table).unwrap().lines().count(), 1 + 2 * 2);
    let o = run(&["train", "--plots", p(&fixture("plots12.csv")), "--out", p(&forest), "--features", "b9"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn krige_strata_end_to_end() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ascii_grid(&d.join("dem.asc"), 20, 20, 500.0, |r, c| 100.0 + 40.0 * (20 - r) as f64 + 5.0 * c as f64);
    let mut obs = String::from("x,y,response\n");
    for i in 0..25 {
        let (x, y) = (250.0 + 400.0 * (i % 5) as f64 * 2.0 + 37.0 * i as f64, 250.0 + 1900.0 * (i / 5) as f64);
        let _ = writeln!(obs, "{x},{y},{}", if y > 5000.0 { 1 } else { 0 });
    }
    fs::write(d.join("obs.csv"), obs).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let (out, pred) = (d.join(format!("s{threads}.asc")), d.join(format!("p{threads}.asc")));
        let o = ok(&[
            "--threads", threads, "krige-strata", "--observations", p(&d.join("obs.csv")), "--dem", p(&d.join("dem.asc")),
            "--out", p(&out), "--prediction-out", p(&pred),
        ]);
        assert!(String::from_utf8_lossy(&o.stdout).contains("stratum 2"));
        outputs.push((fs::read(out).unwrap(), fs::read(pred).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let strata = String::from_utf8(outputs[0].0.clone()).unwrap();
    let body: Vec<&str> = strata.lines().skip(6).collect();
    assert!(body[0].split(' ').all(|v| v == "2"), "top row should be mountain: {}", body[0]);
    assert!(body[19].split(' ').all(|v| v == "1"), "bottom row should be lowland: {}", body[19]);

    let o = run(&["krige-strata", "--observations", p(&d.join("obs.csv")), "--dem", p(&d.join("dem.asc")), "--out", p(&d.join("x.asc")), "--sill", "0"]);
    assert_eq!(code(&o), 2);
    // Coincident observations make the kriging system singular.
    fs::write(d.join("dup.csv"), "x,y,response\n100,100,1\n100,100,0\n3000,3000,1\n6000,200,0\n").unwrap();
    let o = run(&["krige-strata", "--observations", p(&d.join("dup.csv")), "--dem", p(&d.join("dem.asc")), "--out", p(&d.join("x.asc"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn simulate_small_config_is_thread_count_invariant() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sim.cfg");
    fs::write(
        &cfg,
        "nrows = 60\nncols = 50\nstrata = 0.5, 0.5\nplots_per_stratum = 12\nmap = noisy:0.8\nreplicates = 100\npatch_scale = 150\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("mc{threads}.csv"));
        let summary = dir.path().join(format!("mc{threads}.txt"));
        ok(&["--threads", threads, "simulate", "--config", p(&cfg), "--out", p(&out), "--summary", p(&summary), "--seed", "5"]);
        outputs.push((fs::read(out).unwrap(), fs::read(summary).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 5);

    fs::write(&cfg, "nrows = 60\nbogus = 1\n").unwrap();
    let o = run(&["simulate", "--config", p(&cfg), "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sim.cfg:2"));
}

#[test]
fn threads_env_var_is_a_fallback() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("e.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_forestarea"))
        .args(["estimate", "--plots", p(&fixture("plots12.csv")), "--strata", p(&fixture("strata12.csv")), "--out", p(&out)])
        .env("FORESTAREA_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "zero threads from the environment must be rejected");
}
