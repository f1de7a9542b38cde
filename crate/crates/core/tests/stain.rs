use stainkit_core::imaging::{rgb_to_od, tissue_mask, DEFAULT_TISSUE_THRESHOLD, SAFFRON};
use stainkit_core::linalg::cosine;
use stainkit_core::stain::{
    estimate_stain_matrix, extract_saffron, normalize_p99, sample_tissue_pixels, solve_concentrations, SnmfConfig,
    SolveMode, DEFAULT_SAMPLE_SIZE,
};
use stainkit_core::synth::{generate_phantom, PhantomSpec};
use stainkit_core::BinaryMask;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Phantom densities peak at 0.4 OD, so the default penalty of 0.1 shrinks H
/// enough to tilt the columns; a lighter penalty keeps the fit sparse but unbiased.
const PHANTOM_LAMBDA: f64 = 0.001;

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn true_matrix_recovers_densities() {
    for seed in SEEDS {
        let p = generate_phantom::<f64>(&PhantomSpec::new(256, 256, seed));
        let od = rgb_to_od::<f64>(&p.i_hes, 255).unwrap();
        for mode in [SolveMode::Pinv, SolveMode::Nnls] {
            let h = solve_concentrations(&od, &p.w_true, mode).unwrap();
            let err = max_abs(h.data(), p.h_true.data());
            assert!(err <= 0.01, "seed {seed} {mode:?}: max error {err}");
        }
    }
}

#[test]
fn forward_inverse_within_quantization_bound() {
    let mut spec = PhantomSpec::new(128, 128, 9);
    spec.max_concentration = [0.3; 3];
    let p = generate_phantom::<f64>(&spec);
    let od = rgb_to_od::<f64>(&p.i_hes, 255).unwrap();
    let h = solve_concentrations(&od, &p.w_true, SolveMode::Pinv).unwrap();
    assert!(max_abs(h.data(), p.h_true.data()) <= 2.0 / 255.0);
}

#[test]
fn snmf_matches_true_columns_with_monotone_objective() {
    for seed in SEEDS {
        let p = generate_phantom::<f64>(&PhantomSpec::new(256, 256, seed));
        let sample = sample_tissue_pixels::<f64>(
            std::slice::from_ref(&p.i_hes),
            255,
            DEFAULT_TISSUE_THRESHOLD,
            DEFAULT_SAMPLE_SIZE,
            seed,
        )
        .unwrap();
        let mut cfg = SnmfConfig::new(3);
        cfg.sparsity_lambda = PHANTOM_LAMBDA;
        let out = estimate_stain_matrix(&sample, &cfg).unwrap();
        assert!(out.objective_trace.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: objective increased");
        for (k, (est, truth)) in out.matrix.columns().iter().zip(p.w_true.columns()).enumerate() {
            let c = cosine(est, truth);
            assert!(c >= 0.99, "seed {seed} column {k}: cosine {c}");
        }
    }
}

fn saffron_mae(hard: bool, seed: u64) -> f64 {
    let mut spec = PhantomSpec::new(256, 256, seed);
    spec.hard_mode = hard;
    let p = generate_phantom::<f64>(&spec);
    let mask = tissue_mask(&rgb_to_od::<f64>(&p.i_hes, 255).unwrap(), DEFAULT_TISSUE_THRESHOLD).unwrap();
    let got = extract_saffron(&p.i_hes, &p.w_true, &mask).unwrap();
    let s = p.w_true.position(SAFFRON).unwrap();
    let truth = normalize_p99(&p.h_true.channel(s), &mask).unwrap();
    got.data().iter().zip(truth.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / got.data().len() as f64
}

#[test]
fn saffron_extraction_matches_normalized_truth() {
    for seed in SEEDS {
        let mae = saffron_mae(false, seed);
        assert!(mae <= 0.02, "seed {seed}: mae {mae}");
    }
}

#[test]
fn saffron_extraction_hard_mode() {
    for seed in SEEDS {
        let mae = saffron_mae(true, seed);
        assert!(mae <= 0.05, "seed {seed}: mae {mae}");
    }
}

#[test]
fn white_tile_has_no_tissue() {
    let mut spec = PhantomSpec::new(64, 64, 0);
    spec.blob_count = [0; 3];
    let p = generate_phantom::<f64>(&spec);
    let mask = tissue_mask(&rgb_to_od::<f64>(&p.i_hes, 255).unwrap(), DEFAULT_TISSUE_THRESHOLD).unwrap();
    assert_eq!(mask, BinaryMask::full(64, 64, false));
}

#[test]
fn snmf_on_exact_low_rank_sample() {
    use stainkit_core::stain::{reference_stains, PixelSample};
    use stainkit_core::synth::Lcg64;
    let truth: Vec<[f64; 3]> = reference_stains::<f64>().into_iter().map(|(_, v)| v).collect();
    let mut g = Lcg64::new(31);
    let od: Vec<[f64; 3]> = (0..5000)
        .map(|_| {
            let h = [g.uniform(0.0, 1.0), g.uniform(0.0, 1.0), g.uniform(0.0, 1.0)];
            std::array::from_fn(|c| (0..3).map(|k| truth[k][c] * h[k]).sum())
        })
        .collect();
    let sample = PixelSample::from_vectors(od).unwrap();
    let mut cfg = SnmfConfig::new(3);
    cfg.sparsity_lambda = 0.01;
    let out = estimate_stain_matrix(&sample, &cfg).unwrap();
    for (est, t) in out.matrix.columns().iter().zip(&truth) {
        assert!(cosine(est, t) >= 0.99);
    }
    assert!(out.objective_trace.windows(2).all(|w| w[1] <= w[0]));
}
