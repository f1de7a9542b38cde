//! Sparse non-negative factorization `V ≈ W H` of pixel OD vectors.
//!
//! Objective: `‖V − W H‖²_F + λ Σ H`, with `W` (3 x r) non-negative and
//! unit-norm per column, `H` (r x n) non-negative.
//!
//! Each iteration does a multiplicative L1-shrinkage update of `H` followed by a
//! projected-gradient step on `W` (clamp, renormalize columns) chosen by
//! backtracking so that the objective never increases.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{StainMatrix, DEFAULT_ILLUMINANT, EOSIN, HEMATOXYLIN, SAFFRON};
use crate::linalg::{cosine, dot3, invert};
use crate::scalar::Scalar;
use crate::stain::sample::PixelSample;
use crate::synth::SAFFRON_HUE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnmfInit {
    /// Start from the reference stain vectors.
    Reference,
    /// Start from seeded random non-negative unit columns.
    Random(u64),
}

#[derive(Clone, Debug)]
pub struct SnmfConfig<T> {
    pub sparsity_lambda: T,
    pub max_iters: usize,
    pub tol: T,
    pub init: SnmfInit,
    pub stain_count: usize,
    /// Labeled reference OD directions, one per stain. Used for the reference
    /// initialization and for canonical column ordering.
    pub references: Vec<(String, [T; 3])>,
    pub illuminant: u32,
}

impl<T: Scalar> SnmfConfig<T> {
    pub fn new(stain_count: usize) -> Self {
        Self {
            sparsity_lambda: T::lit(0.1),
            max_iters: 200,
            tol: T::lit(1e-5),
            init: SnmfInit::Reference,
            stain_count,
            references: reference_stains::<T>().into_iter().take(stain_count).collect(),
            illuminant: DEFAULT_ILLUMINANT,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.stain_count) {
            return Err(Error::InvalidArgument(format!("stain count {} not in 1..=3", self.stain_count)));
        }
        if self.max_iters < 1 || !(self.tol > T::zero()) || !(self.sparsity_lambda >= T::zero()) {
            return Err(Error::InvalidArgument("snmf needs max_iters >= 1, tol > 0, lambda >= 0".into()));
        }
        if self.references.len() != self.stain_count {
            return Err(Error::InvalidArgument("one reference vector per stain is required".into()));
        }
        Ok(())
    }
}

/// Canonical OD directions for Hematoxylin, Eosin and Saffron, unit-normalized.
/// Saffron comes from the synthetic phantom's orange hue.
pub fn reference_stains<T: Scalar>() -> Vec<(String, [T; 3])> {
    let unit = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.map(|x| T::lit(x / n))
    };
    let saffron = SAFFRON_HUE.map(|c| -(c as f64 / 255.0).ln());
    vec![
        (HEMATOXYLIN.to_string(), unit([0.65, 0.70, 0.29])),
        (EOSIN.to_string(), unit([0.07, 0.99, 0.11])),
        (SAFFRON.to_string(), unit(saffron)),
    ]
}

#[derive(Clone, Debug)]
pub struct SnmfOutcome<T> {
    pub matrix: StainMatrix<T>,
    /// Objective after initialization, then after every iteration.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    /// False when the relative objective change was still above `tol` at
    /// `max_iters`; `matrix` is then the best iterate.
    pub converged: bool,
}

struct Factorization<'a, T> {
    v: &'a [[T; 3]],
    r: usize,
    lambda: T,
}

impl<T: Scalar> Factorization<'_, T> {
    fn objective(&self, w: &[[T; 3]], h: &[T]) -> T {
        let mut fit = T::zero();
        let mut l1 = T::zero();
        for (v, hp) in self.v.iter().zip(h.chunks_exact(self.r)) {
            let mut e = *v;
            for (col, &c) in w.iter().zip(hp) {
                for k in 0..3 {
                    e[k] = e[k] - col[k] * c;
                }
                l1 = l1 + c;
            }
            fit = fit + dot3(&e, &e);
        }
        fit + self.lambda * l1
    }

    /// `H ← H ⊙ WᵀV / (WᵀW H + λ/2)`; the ½ matches the unhalved squared error.
    fn update_h(&self, w: &[[T; 3]], h: &mut [T]) {
        let r = self.r;
        let mut gram = [[T::zero(); 3]; 3];
        for i in 0..r {
            for j in 0..r {
                gram[i][j] = dot3(&w[i], &w[j]);
            }
        }
        let half_lambda = self.lambda / T::lit(2.0);
        let floor = T::min_positive_value();
        for (v, hp) in self.v.iter().zip(h.chunks_exact_mut(r)) {
            let mut next = [T::zero(); 3];
            for k in 0..r {
                let num = dot3(&w[k], v);
                let mut den = half_lambda;
                for j in 0..r {
                    den = den + gram[k][j] * hp[j];
                }
                next[k] = if den > floor { hp[k] * num / den } else { T::zero() };
            }
            hp.copy_from_slice(&next[..r]);
        }
    }

    /// Gradient of the squared error w.r.t. W: `2 (W H − V) Hᵀ`.
    fn grad_w(&self, w: &[[T; 3]], h: &[T]) -> Vec<[T; 3]> {
        let mut g = vec![[T::zero(); 3]; self.r];
        for (v, hp) in self.v.iter().zip(h.chunks_exact(self.r)) {
            let mut e = [-v[0], -v[1], -v[2]];
            for (col, &c) in w.iter().zip(hp) {
                for k in 0..3 {
                    e[k] = e[k] + col[k] * c;
                }
            }
            for (gj, &c) in g.iter_mut().zip(hp) {
                for k in 0..3 {
                    gj[k] = gj[k] + e[k] * c;
                }
            }
        }
        let two = T::lit(2.0);
        g.iter_mut().for_each(|gj| gj.iter_mut().for_each(|x| *x = *x * two));
        g
    }
}

fn project_columns<T: Scalar>(w: &[[T; 3]]) -> Option<Vec<[T; 3]>> {
    w.iter()
        .map(|c| {
            let c = c.map(|x| x.max(T::zero()));
            let n = dot3(&c, &c).sqrt();
            (n > T::epsilon()).then(|| c.map(|x| x / n))
        })
        .collect()
}

fn initial_h<T: Scalar>(v: &[[T; 3]], w: &[[T; 3]]) -> Vec<T> {
    let r = w.len();
    let mut gram = vec![T::zero(); r * r];
    for i in 0..r {
        for j in 0..r {
            gram[i * r + j] = dot3(&w[i], &w[j]);
        }
    }
    let floor = T::lit(1e-3);
    match invert(&gram, r) {
        Some(inv) => v
            .iter()
            .flat_map(|p| {
                let wtv: Vec<T> = w.iter().map(|c| dot3(c, p)).collect();
                let inv = &inv;
                (0..r).map(move |i| {
                    let s: T = (0..r).map(|j| inv[i * r + j] * wtv[j]).sum();
                    s.max(floor)
                })
            })
            .collect(),
        None => vec![floor; v.len() * r],
    }
}

/// Greedy matching of columns to references by maximal cosine; ties go to the
/// earlier reference. Returns, for each reference in order, the column index.
fn canonical_order<T: Scalar>(w: &[[T; 3]], refs: &[(String, [T; 3])]) -> Vec<usize> {
    let r = w.len();
    let mut assigned = vec![usize::MAX; r];
    let mut used = vec![false; r];
    for _ in 0..r {
        let mut best: Option<(T, usize, usize)> = None;
        for (ri, (_, rv)) in refs.iter().enumerate() {
            if assigned[ri] != usize::MAX {
                continue;
            }
            for (ci, col) in w.iter().enumerate() {
                if used[ci] {
                    continue;
                }
                let c = cosine(col, rv);
                if best.is_none_or(|(b, _, _)| c > b) {
                    best = Some((c, ri, ci));
                }
            }
        }
        let (_, ri, ci) = best.unwrap();
        assigned[ri] = ci;
        used[ci] = true;
    }
    assigned
}

/// Jointly estimates the stain matrix and densities of a pixel sample.
pub fn estimate_stain_matrix<T: Scalar>(sample: &PixelSample<T>, cfg: &SnmfConfig<T>) -> Result<SnmfOutcome<T>> {
    cfg.validate()?;
    let r = cfg.stain_count;
    if sample.len() < r {
        return Err(Error::InvalidArgument(format!("sample has {} pixels, need at least {}", sample.len(), r)));
    }
    let mut w: Vec<[T; 3]> = match cfg.init {
        SnmfInit::Reference => cfg.references.iter().map(|(_, v)| *v).collect(),
        SnmfInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<[T; 3]> = (0..r)
                .map(|_| [(); 3].map(|_| T::lit(rng.random_range(0.05..1.0))))
                .collect();
            project_columns(&raw).expect("random columns are positive")
        }
    };
    let problem = Factorization { v: &sample.od, r, lambda: cfg.sparsity_lambda };
    let mut h = initial_h(&sample.od, &w);
    let mut f = problem.objective(&w, &h);
    let mut trace = vec![f];
    let mut step = T::zero();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let prev = f;

        let mut h_next = h.clone();
        problem.update_h(&w, &mut h_next);
        let f_h = problem.objective(&w, &h_next);
        if f_h <= f {
            h = h_next;
            f = f_h;
        }

        let g = problem.grad_w(&w, &h);
        let gnorm2: T = g.iter().map(|c| dot3(c, c)).sum();
        if gnorm2 > T::zero() {
            if step == T::zero() {
                step = T::lit(0.1) / gnorm2.sqrt();
            }
            for _ in 0..40 {
                let cand: Vec<[T; 3]> = w
                    .iter()
                    .zip(&g)
                    .map(|(c, gc)| [c[0] - step * gc[0], c[1] - step * gc[1], c[2] - step * gc[2]])
                    .collect();
                if let Some(cand) = project_columns(&cand) {
                    let f_w = problem.objective(&cand, &h);
                    if f_w < f {
                        w = cand;
                        f = f_w;
                        step = step * T::lit(2.0);
                        break;
                    }
                }
                step = step / T::lit(2.0);
            }
        }

        trace.push(f);
        let denom = prev.abs().max(T::min_positive_value());
        if (prev - f) / denom < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("snmf did not converge in {} iterations", cfg.max_iters);
    }

    let order = canonical_order(&w, &cfg.references);
    let columns = order.iter().map(|&i| w[i]).collect();
    let labels = cfg.references.iter().map(|(l, _)| l.clone()).collect();
    let matrix = StainMatrix::new(columns, labels, cfg.illuminant)?;
    Ok(SnmfOutcome { matrix, objective_trace: trace, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = dot3(&v, &v).sqrt();
        v.map(|x| x / n)
    }

    #[test]
    fn references_are_unit_and_distinct() {
        let refs = reference_stains::<f64>();
        for (_, v) in &refs {
            assert!((dot3(v, v) - 1.0).abs() < 1e-12);
        }
        assert!(cosine(&refs[1].1, &refs[2].1) < 0.8);
    }

    #[test]
    fn canonical_order_undoes_permutation() {
        let refs = reference_stains::<f64>();
        let w = vec![refs[2].1, refs[0].1, refs[1].1];
        assert_eq!(canonical_order(&w, &refs), vec![1, 2, 0]);
    }

    #[test]
    fn rank_one_sample_recovers_direction() {
        let dir = unit([0.3, 0.5, 0.8]);
        let od: Vec<[f64; 3]> = (1..=200).map(|i| dir.map(|x| x * (0.2 + i as f64 / 200.0))).collect();
        let mean = unit(od.iter().fold([0.0; 3], |a, v| [a[0] + v[0], a[1] + v[1], a[2] + v[2]]));
        let sample = PixelSample::from_vectors(od).unwrap();
        let out = estimate_stain_matrix(&sample, &SnmfConfig::new(1)).unwrap();
        assert!(cosine(&out.matrix.column(0), &mean) >= 0.999);
    }

    #[test]
    fn duplicated_pixels_converge() {
        let v = unit([0.62, 0.72, 0.31]).map(|x| x * 0.8);
        let sample = PixelSample::from_vectors(vec![v; 500]).unwrap();
        let out = estimate_stain_matrix(&sample, &SnmfConfig::new(2)).unwrap();
        assert!(out.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(cosine(&out.matrix.column(0), &v) >= 0.99, "{:?}", out.matrix);
    }

    #[test]
    fn rejects_small_sample_and_bad_config() {
        let sample = PixelSample::from_vectors(vec![[0.1, 0.2, 0.3]]).unwrap();
        assert!(estimate_stain_matrix(&sample, &SnmfConfig::<f64>::new(2)).is_err());
        let mut cfg = SnmfConfig::<f64>::new(1);
        cfg.tol = 0.0;
        assert!(estimate_stain_matrix(&sample, &cfg).is_err());
    }

    #[test]
    fn random_init_is_deterministic() {
        let refs = reference_stains::<f64>();
        let od: Vec<[f64; 3]> = (0..300)
            .map(|i| {
                let a = (i % 17) as f64 / 17.0;
                let b = (i % 11) as f64 / 11.0;
                [0, 1, 2].map(|k| a * refs[0].1[k] + b * refs[1].1[k])
            })
            .collect();
        let sample = PixelSample::from_vectors(od).unwrap();
        let mut cfg = SnmfConfig::new(2);
        cfg.init = SnmfInit::Random(11);
        let a = estimate_stain_matrix(&sample, &cfg).unwrap();
        let b = estimate_stain_matrix(&sample, &cfg).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.objective_trace, b.objective_trace);
    }
}
