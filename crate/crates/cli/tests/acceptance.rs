//! End-to-end acceptance checks on synthetic phantoms. Prints one PASS/FAIL line
//! per criterion and exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use stainkit_core::imaging::{od_to_rgb, rgb_to_od, tissue_mask, DEFAULT_TISSUE_THRESHOLD, SAFFRON};
use stainkit_core::linalg::cosine;
use stainkit_core::metrics::{dice_at, mdice, mean_concentration_regression, MetricReport};
use stainkit_core::predictor::{compute_class_weights, fit_linear_baseline, predict, wmse_loss, ClassWeights, DEFAULT_WINDOW};
use stainkit_core::reconstruct::{reconstruct_hes, rerender_he, ReconstructionConfig};
use stainkit_core::registration::register_pair;
use stainkit_core::stain::{
    estimate_stain_matrix, extract_saffron, normalize_p99, pseudo_max, sample_tissue_pixels, saffron_raw,
    solve_concentrations, SnmfConfig, SolveMode, DEFAULT_SAMPLE_SIZE,
};
use stainkit_core::synth::{generate_phantom, generate_registration_case, random_warp, Lcg64, Phantom, PhantomSpec};
use stainkit_core::{BinaryMask, ConcentrationMap64, RgbImage};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

const PHANTOM_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Sparsity penalty for phantoms peaking at 0.4 OD; 0.1 shrinks H enough to tilt
/// the estimated columns.
const PHANTOM_LAMBDA: f64 = 0.001;

fn check(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

fn od_round_trip() -> Outcome {
    let t = Instant::now();
    let mut g = Lcg64::new(1);
    for i in 0..1000 {
        let data: Vec<u8> = (0..64 * 64 * 3).map(|_| 1 + (g.next_u64() % 255) as u8).collect();
        let img = RgbImage::new(64, 64, data).unwrap();
        let back = od_to_rgb(&rgb_to_od::<f64>(&img, 255).unwrap(), 255).unwrap();
        check(back == img, format!("tile {i} changed"))?;
    }
    within(t.elapsed(), 5.0)?;
    Ok(format!("1000 tiles bit-exact in {:.2} s", t.elapsed().as_secs_f64()))
}

fn deconvolution_oracle() -> Outcome {
    let t = Instant::now();
    let (mut worst_h, mut worst_cos) = (0.0f64, 1.0f64);
    for seed in PHANTOM_SEEDS {
        let p = generate_phantom::<f64>(&PhantomSpec::new(256, 256, seed));
        let od = rgb_to_od::<f64>(&p.i_hes, 255).unwrap();
        let h = solve_concentrations(&od, &p.w_true, SolveMode::Pinv).unwrap();
        let err = h.data().iter().zip(p.h_true.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst_h = worst_h.max(err);
        let sample = sample_tissue_pixels::<f64>(
            std::slice::from_ref(&p.i_hes),
            255,
            DEFAULT_TISSUE_THRESHOLD,
            DEFAULT_SAMPLE_SIZE,
            seed,
        )
        .unwrap();
        let cfg = SnmfConfig { sparsity_lambda: PHANTOM_LAMBDA, ..SnmfConfig::new(3) };
        let out = estimate_stain_matrix(&sample, &cfg).unwrap();
        check(out.objective_trace.windows(2).all(|w| w[1] <= w[0]), format!("seed {seed}: objective increased"))?;
        for (est, truth) in out.matrix.columns().iter().zip(p.w_true.columns()) {
            worst_cos = worst_cos.min(cosine(est, truth));
        }
    }
    check(worst_h <= 0.01, format!("max density error {worst_h:.4} > 0.01"))?;
    check(worst_cos >= 0.99, format!("min column cosine {worst_cos:.4} < 0.99"))?;
    within(t.elapsed(), 60.0)?;
    Ok(format!("max |dH| {worst_h:.4}, min cosine {worst_cos:.4}, {:.1} s", t.elapsed().as_secs_f64()))
}

fn saffron_mae(hard: bool, seed: u64) -> f64 {
    let spec = PhantomSpec { hard_mode: hard, ..PhantomSpec::new(256, 256, seed) };
    let p = generate_phantom::<f64>(&spec);
    let mask = tissue_mask(&rgb_to_od::<f64>(&p.i_hes, 255).unwrap(), DEFAULT_TISSUE_THRESHOLD).unwrap();
    let got = extract_saffron(&p.i_hes, &p.w_true, &mask).unwrap();
    let truth = normalize_p99(&p.h_true.channel(p.w_true.position(SAFFRON).unwrap()), &mask).unwrap();
    got.data().iter().zip(truth.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / got.len_pixels() as f64
}

fn saffron_extraction() -> Outcome {
    let easy = PHANTOM_SEEDS.iter().map(|&s| saffron_mae(false, s)).fold(0.0, f64::max);
    let hard = PHANTOM_SEEDS.iter().map(|&s| saffron_mae(true, s)).fold(0.0, f64::max);
    check(easy <= 0.02, format!("MAE {easy:.4} > 0.02"))?;
    check(hard <= 0.05, format!("hard-mode MAE {hard:.4} > 0.05"))?;
    Ok(format!("worst MAE {easy:.4}, hard mode {hard:.4}"))
}

fn reconstruction_config(p: &Phantom<f64>) -> ReconstructionConfig<f64> {
    ReconstructionConfig::new(&p.w_he, p.w_true.column(p.w_true.position(SAFFRON).unwrap())).unwrap()
}

fn reconstruction() -> Outcome {
    // (a) zero Saffron
    let p = generate_phantom::<f64>(&PhantomSpec::new(128, 128, 4));
    let cfg = reconstruction_config(&p);
    let zero = reconstruct_hes(&p.i_he, &ConcentrationMap64::zeros(128, 128, 1), &cfg).unwrap();
    let a = zero == rerender_he(&p.i_he, &cfg.w_he).unwrap();

    // (b) true Saffron on paired phantoms
    let mut worst_b = 0.0f64;
    for seed in [1, 2, 3] {
        let p = generate_phantom::<f64>(&PhantomSpec::paired(256, 256, seed));
        let cfg = reconstruction_config(&p);
        let mask = tissue_mask(&rgb_to_od::<f64>(&p.i_hes, 255).unwrap(), DEFAULT_TISSUE_THRESHOLD).unwrap();
        let h_s = normalize_p99(&p.h_true.channel(p.w_true.position(SAFFRON).unwrap()), &mask).unwrap();
        let out = reconstruct_hes(&p.i_he, &h_s, &cfg).unwrap();
        let mut err = [0.0f64; 3];
        for (x, y) in out.pixels().zip(p.i_hes.pixels()) {
            for c in 0..3 {
                err[c] += (x[c] as f64 - y[c] as f64).abs();
            }
        }
        worst_b = err.iter().fold(worst_b, |m, e| m.max(e / out.len_pixels() as f64));
    }
    let b = worst_b <= 2.0;

    // (c) raising the Saffron level at a pixel never brightens any channel
    let cfg = reconstruction_config(&generate_phantom::<f64>(&PhantomSpec::new(32, 32, 0)));
    let mut g = Lcg64::new(4);
    let mut brighter = 0;
    for _ in 0..10_000 {
        let he = RgbImage::filled(1, 1, [0; 3].map(|_| 1 + (g.next_u64() % 255) as u8));
        let (s1, s2) = (g.uniform(0.0, 1.5), g.uniform(0.0, 1.5));
        let render = |s: f64| {
            let map = ConcentrationMap64::new(1, 1, 1, vec![s], vec![0.35]).unwrap();
            reconstruct_hes(&he, &map, &cfg).unwrap().pixel(0, 0)
        };
        let (lo, hi) = (render(s1.min(s2)), render(s1.max(s2)));
        if (0..3).any(|c| hi[c] > lo[c]) {
            brighter += 1;
        }
    }
    let c = brighter == 0;
    let summary = format!(
        "(a) {} (b) worst mean channel error {worst_b:.3} (c) {brighter}/10000 probes brighten",
        if a { "identical" } else { "differs" }
    );
    check(a && b && c, summary.clone())?;
    Ok(summary)
}

fn registration() -> Outcome {
    let t = Instant::now();
    let mut rng = Lcg64::new(2024);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let warp = random_warp(&mut rng, 256, 256, 5.0, 20.0, 0.98, 1.02);
        let spec = PhantomSpec { warp: Some(warp), ..PhantomSpec::new(256, 256, 100 + i) };
        let case = generate_registration_case::<f64>(&spec);
        let res = register_pair::<f64>(&case.fixed, &case.moving, 255).unwrap();
        for level in &res.ssd_trace {
            check(level.windows(2).all(|w| w[1] <= w[0]), format!("case {i}: SSD increased"))?;
        }
        let expected = case.t_true.inverse().unwrap();
        worst = worst.max(res.transform.mean_corner_error(&expected, 256, 256));
    }
    check(worst <= 0.5, format!("worst corner error {worst:.3} px > 0.5"))?;
    within(t.elapsed(), 120.0)?;
    Ok(format!("worst corner error {worst:.3} px, {:.1} s", t.elapsed().as_secs_f64()))
}

fn predictor() -> Outcome {
    let mut g = Lcg64::new(6);
    for _ in 0..20 {
        let a = ConcentrationMap64::unscaled(300, 1, 1, (0..300).map(|_| g.uniform(0.0, 1.0)).collect()).unwrap();
        let b = ConcentrationMap64::unscaled(300, 1, 1, (0..300).map(|_| g.uniform(-0.2, 1.0).max(0.0)).collect())
            .unwrap();
        let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 300.0;
        let w = wmse_loss(&a, &b, &ClassWeights::uniform()).unwrap();
        check((w - mse).abs() <= 1e-12, format!("wMSE {w} vs MSE {mse}"))?;
    }
    let quarter = ConcentrationMap64::unscaled(4, 4, 1, (0..16).map(|i| if i < 4 { 0.5 } else { 0.0 }).collect())
        .unwrap();
    let cw = compute_class_weights(&[quarter]).unwrap();
    check(
        (cw.w_saffron, cw.w_background) == (0.75, 0.25),
        format!("class weights ({}, {})", cw.w_saffron, cw.w_background),
    )?;

    let phantoms: Vec<Phantom<f64>> = (0..10).map(|s| generate_phantom(&PhantomSpec::paired(128, 128, s))).collect();
    let raw: Vec<(ConcentrationMap64, BinaryMask)> = phantoms
        .iter()
        .map(|p| {
            let od = rgb_to_od::<f64>(&p.i_hes, 255).unwrap();
            (saffron_raw(&p.i_hes, &p.w_true).unwrap(), tissue_mask(&od, DEFAULT_TISSUE_THRESHOLD).unwrap())
        })
        .collect();
    let train: Vec<_> = raw[..8].iter().map(|(m, k)| (m, k)).collect();
    let scale = pseudo_max(&train).unwrap();
    let targets: Vec<ConcentrationMap64> = raw.iter().map(|(m, _)| m.rescaled(&scale).unwrap()).collect();
    let weights = compute_class_weights(&targets[..8]).unwrap();
    let pairs: Vec<_> = phantoms[..8].iter().zip(&targets).map(|(p, t)| (p.i_he.clone(), t.clone())).collect();
    let model = fit_linear_baseline(&pairs, &weights, DEFAULT_WINDOW).unwrap();
    let mut worst = 0.0f64;
    for (p, t) in phantoms[8..].iter().zip(&targets[8..]) {
        let pred = predict(&model, &p.i_he).unwrap();
        worst = worst.max(stainkit_core::metrics::mae(&pred, t, None).unwrap());
    }
    check(worst <= 0.02, format!("held-out MAE {worst:.4} > 0.02"))?;
    Ok(format!("wMSE = MSE, weights (0.75, 0.25), held-out MAE {worst:.4}"))
}

fn report_value(report: &str, key: &str) -> Option<String> {
    report.lines().find_map(|l| {
        let (k, v) = l.split_once(" = ")?;
        (k == key).then(|| v.to_string())
    })
}

fn stainkit(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stainkit")).args(args).output().map_err(|e| e.to_string())?;
    check(
        out.status.success(),
        format!("stainkit {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)),
    )
}

fn run_pipeline(syn: &Path, out: &Path, jobs: &str) -> Result<(), String> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    stainkit(&[
        "pipeline",
        "--manifest",
        &s(&syn.join("pairs.txt")),
        "--out-dir",
        &s(out),
        "--matrix-he",
        &s(&syn.join("matrix_he.txt")),
        "--matrix-hes",
        &s(&syn.join("matrix_hes.txt")),
        "--seed",
        "11",
        "--jobs",
        jobs,
    ])
}

/// Synthesizes a phantom slide once and runs the pipeline three times.
struct EndToEnd {
    dir: tempfile::TempDir,
}

impl EndToEnd {
    fn new() -> Result<Self, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let spec = dir.path().join("spec.toml");
        std::fs::write(&spec, "tiles = 25\n").map_err(|e| e.to_string())?;
        let syn = dir.path().join("syn");
        stainkit(&["synth", "--spec", spec.to_str().unwrap(), "--out-dir", syn.to_str().unwrap(), "--seed", "11"])?;
        for (name, jobs) in [("run1", "1"), ("run2", "1"), ("run8", "8")] {
            run_pipeline(&syn, &dir.path().join(name), jobs)?;
        }
        Ok(Self { dir })
    }

    fn report(&self) -> Result<String, String> {
        std::fs::read_to_string(self.dir.path().join("run1/report.txt")).map_err(|e| e.to_string())
    }
}

fn metrics(e2e: &Result<EndToEnd, String>) -> Outcome {
    let mut g = Lcg64::new(5);
    let rand_map = |g: &mut Lcg64| {
        ConcentrationMap64::unscaled(500, 1, 1, (0..500).map(|_| g.uniform(0.0, 1.1)).collect()).unwrap()
    };
    for _ in 0..20 {
        let (p, t) = (rand_map(&mut g), rand_map(&mut g));
        let mut total = 0.0;
        for k in 0..20 {
            let th = k as f64 / 20.0;
            let a: Vec<bool> = p.data().iter().map(|&v| v > th).collect();
            let b: Vec<bool> = t.data().iter().map(|&v| v > th).collect();
            let inter = a.iter().zip(&b).filter(|(x, y)| **x && **y).count();
            let sizes = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
            total += if sizes == 0 { 1.0 } else { 2.0 * inter as f64 / sizes as f64 };
        }
        let got = mdice(&p, &t).unwrap();
        check((got - total / 20.0).abs() <= 1e-12, format!("mdice {got} vs loop {}", total / 20.0))?;
        check(
            MetricReport::pooled(&[(&p, &t)]).unwrap().dice_s == dice_at(&p, &t, 0.0).unwrap(),
            "dice_s differs from dice_at(0)".into(),
        )?;
    }
    let m = |v: &[f64]| ConcentrationMap64::unscaled(v.len(), 1, 1, v.to_vec()).unwrap();
    let d = dice_at(&m(&[1.0, 1.0, 1.0, 0.0, 0.0]), &m(&[1.0, 0.0, 0.0, 1.0, 0.0]), 0.5).unwrap();
    check(d == 0.4, format!("hand Dice case {d} != 0.4"))?;

    let regions: Vec<(ConcentrationMap64, ConcentrationMap64)> =
        (1..=5).map(|k| (m(&[k as f64 * 0.1; 4]), m(&[0.05 + k as f64 * 0.2; 4]))).collect();
    let refs: Vec<_> = regions.iter().map(|(p, t)| (p, t)).collect();
    let fit = mean_concentration_regression(&refs).unwrap();
    check((fit.r2 - 1.0).abs() <= 1e-12, format!("collinear R² {}", fit.r2))?;

    let report = e2e.as_ref().map_err(|e| e.clone())?.report()?;
    let regions: usize = report_value(&report, "regions").and_then(|v| v.parse().ok()).unwrap_or(0);
    let r2: f64 = report_value(&report, "regression_r2").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
    check(regions >= 20, format!("only {regions} regions"))?;
    check(r2 >= 0.99, format!("end-to-end R² {r2:.4} < 0.99"))?;
    Ok(format!("mdice oracle, Dice 0.4, collinear R² 1, end-to-end R² {r2:.5} over {regions} regions"))
}

fn tree_bytes(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).map_err(|e| e.to_string())?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism(e2e: &Result<EndToEnd, String>) -> Outcome {
    let dir = e2e.as_ref().map_err(|e| e.clone())?.dir.path();
    let run1 = tree_bytes(&dir.join("run1"))?;
    check(!run1.is_empty(), "pipeline wrote nothing".into())?;
    check(run1 == tree_bytes(&dir.join("run2"))?, "two --jobs 1 runs differ".into())?;
    check(run1 == tree_bytes(&dir.join("run8"))?, "--jobs 1 and --jobs 8 differ".into())?;
    Ok(format!("{} files byte-identical across runs and job counts", run1.len()))
}

fn main() {
    let e2e = EndToEnd::new();
    let criteria: [Criterion; 8] = [
        ("OD round trip", Box::new(od_round_trip)),
        ("deconvolution oracle", Box::new(deconvolution_oracle)),
        ("Saffron extraction", Box::new(saffron_extraction)),
        ("reconstruction", Box::new(reconstruction)),
        ("registration", Box::new(registration)),
        ("predictor and loss", Box::new(predictor)),
        ("metrics", Box::new(|| metrics(&e2e))),
        ("determinism", Box::new(|| determinism(&e2e))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
            Ok(Ok(detail)) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): panicked", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
