use stainkit_core::imaging::{rgb_to_od, tissue_mask, DEFAULT_TISSUE_THRESHOLD, EOSIN, SAFFRON};
use stainkit_core::reconstruct::{reconstruct_hes, rerender_he, ReconstructionConfig};
use stainkit_core::stain::{normalize_p99, solve_concentrations, SolveMode};
use stainkit_core::synth::{generate_phantom, Lcg64, PhantomSpec};
use stainkit_core::{ConcentrationMap64, RgbImage};

fn phantom_config(spec: &PhantomSpec) -> (stainkit_core::synth::Phantom<f64>, ReconstructionConfig<f64>) {
    let p = generate_phantom::<f64>(spec);
    let s = p.w_true.position(SAFFRON).unwrap();
    let cfg = ReconstructionConfig::new(&p.w_he, p.w_true.column(s)).unwrap();
    (p, cfg)
}

#[test]
fn zero_saffron_is_the_he_rerender() {
    let (p, cfg) = phantom_config(&PhantomSpec::new(128, 128, 4));
    let out = reconstruct_hes(&p.i_he, &ConcentrationMap64::zeros(128, 128, 1), &cfg).unwrap();
    assert_eq!(out, rerender_he(&p.i_he, &cfg.w_he).unwrap());
}

#[test]
fn true_saffron_reproduces_rendered_hes() {
    for seed in [1, 2, 3] {
        let (p, cfg) = phantom_config(&PhantomSpec::paired(256, 256, seed));
        let mask = tissue_mask(&rgb_to_od::<f64>(&p.i_hes, 255).unwrap(), DEFAULT_TISSUE_THRESHOLD).unwrap();
        let s = p.w_true.position(SAFFRON).unwrap();
        let h_s = normalize_p99(&p.h_true.channel(s), &mask).unwrap();
        let out = reconstruct_hes(&p.i_he, &h_s, &cfg).unwrap();
        let mut err = [0.0f64; 3];
        for (a, b) in out.pixels().zip(p.i_hes.pixels()) {
            for c in 0..3 {
                err[c] += (a[c] as f64 - b[c] as f64).abs();
            }
        }
        let n = out.len_pixels() as f64;
        for (c, e) in err.iter().enumerate() {
            assert!(e / n <= 2.0, "seed {seed} channel {c}: mean error {}", e / n);
        }
    }
}

/// One random HE pixel and two Saffron levels `s_lo < s_hi`.
struct Probe {
    he: RgbImage,
    lo: f64,
    hi: f64,
}

fn probes(n: usize, seed: u64) -> Vec<Probe> {
    let mut g = Lcg64::new(seed);
    (0..n)
        .map(|_| {
            let rgb = [0; 3].map(|_| g.uniform(60.0, 255.0).round() as u8);
            let (a, b) = (g.uniform(0.0, 1.5), g.uniform(0.0, 1.5));
            Probe { he: RgbImage::filled(1, 1, rgb), lo: a.min(b), hi: a.max(b) }
        })
        .collect()
}

fn render(cfg: &ReconstructionConfig<f64>, he: &RgbImage, s: f64) -> [u8; 3] {
    let map = ConcentrationMap64::new(1, 1, 1, vec![s], vec![0.35]).unwrap();
    reconstruct_hes(he, &map, cfg).unwrap().pixel(0, 0)
}

fn darker_or_equal(a: [u8; 3], b: [u8; 3]) -> bool {
    (0..3).all(|c| b[c] <= a[c])
}

#[test]
fn more_saffron_darkens_when_suppression_state_is_unchanged() {
    let (_, cfg) = phantom_config(&PhantomSpec::new(32, 32, 0));
    let e = cfg.w_he.position(EOSIN).unwrap();
    let mut checked = 0;
    for p in probes(10_000, 99) {
        let h = solve_concentrations(&rgb_to_od::<f64>(&p.he, 255).unwrap(), &cfg.w_he, SolveMode::Pinv).unwrap();
        let eosin = h.get(0, e) / 0.35;
        let state = |s: f64| s > eosin + cfg.epsilon;
        if state(p.lo) != state(p.hi) {
            continue;
        }
        checked += 1;
        assert!(darker_or_equal(render(&cfg, &p.he, p.lo), render(&cfg, &p.he, p.hi)));
    }
    assert!(checked > 5_000);
}
