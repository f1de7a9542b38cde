use crate::error::{Error, Result};
use crate::imaging::{ConcentrationMap, OdImage, StainMatrix};
use crate::linalg::{condition_number, dot3, invert};
use crate::scalar::Scalar;

pub const MAX_CONDITION: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMode {
    /// Moore-Penrose solve, negatives clamped to zero.
    Pinv,
    /// Exact per-pixel non-negative least squares.
    Nnls,
}

impl std::str::FromStr for SolveMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pinv" => Ok(Self::Pinv),
            "nnls" => Ok(Self::Nnls),
            other => Err(format!("unknown solve mode {other:?} (expected pinv or nnls)")),
        }
    }
}

/// Left pseudo-inverse `(WᵀW)⁻¹Wᵀ` of a full-column-rank set of columns, r x 3 row-major.
fn pinv<T: Scalar>(cols: &[[T; 3]]) -> Option<Vec<[T; 3]>> {
    let r = cols.len();
    let mut gram = vec![T::zero(); r * r];
    for i in 0..r {
        for j in 0..r {
            gram[i * r + j] = dot3(&cols[i], &cols[j]);
        }
    }
    let inv = invert(&gram, r)?;
    Some(
        (0..r)
            .map(|i| {
                let mut row = [T::zero(); 3];
                for j in 0..r {
                    for k in 0..3 {
                        row[k] = row[k] + inv[i * r + j] * cols[j][k];
                    }
                }
                row
            })
            .collect(),
    )
}

/// Per-pixel solver for `v = W h`.
pub(crate) struct Deconvolver<T> {
    cols: Vec<[T; 3]>,
    full: Vec<[T; 3]>,
    /// Non-empty proper column subsets with their pseudo-inverses, for NNLS.
    subsets: Vec<(Vec<usize>, Vec<[T; 3]>)>,
}

impl<T: Scalar> Deconvolver<T> {
    pub(crate) fn new(w: &StainMatrix<T>) -> Result<Self> {
        let cols = w.columns().to_vec();
        let cond = condition_number(&cols);
        if !(cond.as_f64() <= MAX_CONDITION) {
            return Err(Error::SingularStainMatrix(cond.as_f64()));
        }
        let full = pinv(&cols).ok_or(Error::SingularStainMatrix(f64::INFINITY))?;
        let r = cols.len();
        let mut subsets = Vec::new();
        for bits in (1..(1usize << r) - 1).rev() {
            let idx: Vec<usize> = (0..r).filter(|i| bits & (1 << i) != 0).collect();
            let sub: Vec<[T; 3]> = idx.iter().map(|&i| cols[i]).collect();
            if let Some(p) = pinv(&sub) {
                subsets.push((idx, p));
            }
        }
        Ok(Self { cols, full, subsets })
    }

    fn residual(&self, v: &[T; 3], h: &[T]) -> T {
        let mut e = *v;
        for (c, &x) in self.cols.iter().zip(h) {
            for k in 0..3 {
                e[k] = e[k] - c[k] * x;
            }
        }
        dot3(&e, &e)
    }

    #[inline]
    pub(crate) fn unconstrained(&self, v: &[T; 3], out: &mut [T]) {
        for (o, row) in out.iter_mut().zip(&self.full) {
            *o = dot3(row, v);
        }
    }

    #[inline]
    pub(crate) fn pinv_clamped(&self, v: &[T; 3], out: &mut [T]) {
        self.unconstrained(v, out);
        out.iter_mut().for_each(|x| *x = x.max(T::zero()));
    }

    /// NNLS by enumerating supports: the optimum is the least-squares solution
    /// on its own support, so the best feasible candidate is exact. The full
    /// support is tried first and uses the same arithmetic as `pinv`.
    pub(crate) fn nnls(&self, v: &[T; 3], out: &mut [T]) {
        let r = self.cols.len();
        self.unconstrained(v, out);
        if out.iter().all(|&x| x >= T::zero()) {
            return;
        }
        let mut best = vec![T::zero(); r];
        let mut best_res = dot3(v, v);
        let mut cand = vec![T::zero(); r];
        for (idx, p) in &self.subsets {
            cand.iter_mut().for_each(|x| *x = T::zero());
            let mut feasible = true;
            for (&i, row) in idx.iter().zip(p) {
                let x = dot3(row, v);
                if x < T::zero() {
                    feasible = false;
                    break;
                }
                cand[i] = x;
            }
            if !feasible {
                continue;
            }
            let res = self.residual(v, &cand);
            if res < best_res {
                best_res = res;
                best.copy_from_slice(&cand);
            }
        }
        out.copy_from_slice(&best);
    }

    pub(crate) fn solve(&self, v: &[T; 3], mode: SolveMode, out: &mut [T]) {
        match mode {
            SolveMode::Pinv => self.pinv_clamped(v, out),
            SolveMode::Nnls => self.nnls(v, out),
        }
    }
}

/// Stain densities `H` from optical densities `V = W H`, one r-vector per pixel.
pub fn solve_concentrations<T: Scalar>(
    od: &OdImage<T>,
    w: &StainMatrix<T>,
    mode: SolveMode,
) -> Result<ConcentrationMap<T>> {
    if od.channels() != 3 {
        return Err(Error::ChannelCount { expected: 3, actual: od.channels() });
    }
    let solver = Deconvolver::new(w)?;
    let r = w.stains();
    let mut data = vec![T::zero(); od.width() * od.height() * r];
    for (px, out) in od.data().chunks_exact(3).zip(data.chunks_exact_mut(r)) {
        solver.solve(&[px[0], px[1], px[2]], mode, out);
    }
    ConcentrationMap::unscaled(od.width(), od.height(), r, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stain::reference_stains;
    use proptest::prelude::*;

    fn ref_matrix(r: usize) -> StainMatrix<f64> {
        let refs = reference_stains::<f64>();
        StainMatrix::new(
            refs.iter().take(r).map(|x| x.1).collect(),
            refs.iter().take(r).map(|x| x.0.clone()).collect(),
            255,
        )
        .unwrap()
    }

    fn od_from(h: &[[f64; 3]], w: &StainMatrix<f64>) -> OdImage<f64> {
        let data = h.iter().flat_map(|hp| w.mix(hp)).collect();
        OdImage::new(h.len(), 1, 3, data).unwrap()
    }

    #[test]
    fn recovers_known_densities() {
        let w = ref_matrix(3);
        let h = [[0.2, 0.5, 0.1], [1.0, 0.0, 0.3], [0.0, 0.0, 0.0], [0.7, 0.9, 1.1]];
        let cm = solve_concentrations(&od_from(&h, &w), &w, SolveMode::Pinv).unwrap();
        for (i, hp) in h.iter().enumerate() {
            for (s, &want) in hp.iter().enumerate() {
                let got = cm.get(i, s);
                assert!((got - want).abs() <= 1e-6 * want.max(1e-12) + 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn zero_od_gives_zero() {
        let w = ref_matrix(2);
        let od = OdImage::<f64>::zeros(3, 2, 3);
        for mode in [SolveMode::Pinv, SolveMode::Nnls] {
            let cm = solve_concentrations(&od, &w, mode).unwrap();
            assert!(cm.data().iter().all(|&v| v == 0.0));
            assert_eq!(cm.stains(), 2);
            assert_eq!(cm.scale(), &[1.0, 1.0]);
        }
    }

    #[test]
    fn orthonormal_basis() {
        let w = StainMatrix::new(
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec!["a".into(), "b".into(), "c".into()],
            255,
        )
        .unwrap();
        let od = OdImage::new(2, 1, 3, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let cm = solve_concentrations(&od, &w, SolveMode::Pinv).unwrap();
        assert_eq!(cm.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn singular_matrix_rejected() {
        let v = [0.6, 0.8, 0.0];
        let w = StainMatrix::new(vec![v, v], vec!["a".into(), "b".into()], 255).unwrap();
        let od = OdImage::<f64>::zeros(1, 1, 3);
        assert!(matches!(
            solve_concentrations(&od, &w, SolveMode::Pinv),
            Err(Error::SingularStainMatrix(_))
        ));
    }

    #[test]
    fn nnls_beats_clamped_pinv_when_constrained() {
        let w = ref_matrix(3);
        // outside the cone: pinv has a negative component
        let od = OdImage::new(1, 1, 3, vec![0.9, 0.1, 0.05]).unwrap();
        let p = solve_concentrations(&od, &w, SolveMode::Pinv).unwrap();
        let n = solve_concentrations(&od, &w, SolveMode::Nnls).unwrap();
        let solver = Deconvolver::new(&w).unwrap();
        let v = [0.9, 0.1, 0.05];
        assert!(solver.residual(&v, n.data()) <= solver.residual(&v, p.data()));
        assert!(n.data().iter().all(|&x| x >= 0.0));
    }

    proptest! {
        #[test]
        fn pinv_and_nnls_agree_inside_cone(h in proptest::collection::vec(0.0f64..2.0, 3)) {
            let w = ref_matrix(3);
            let od = od_from(&[[h[0], h[1], h[2]]], &w);
            let a = solve_concentrations(&od, &w, SolveMode::Pinv).unwrap();
            let b = solve_concentrations(&od, &w, SolveMode::Nnls).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() <= 1e-6);
            }
        }

        #[test]
        fn nnls_is_optimal_against_grid(v in proptest::collection::vec(0.0f64..1.5, 3)) {
            let w = ref_matrix(2);
            let solver = Deconvolver::new(&w).unwrap();
            let v = [v[0], v[1], v[2]];
            let mut h = [0.0; 2];
            solver.nnls(&v, &mut h);
            let best = solver.residual(&v, &h);
            // coarse brute-force oracle over the non-negative quadrant
            for i in 0..60 {
                for j in 0..60 {
                    let cand = [i as f64 * 0.05, j as f64 * 0.05];
                    prop_assert!(best <= solver.residual(&v, &cand) + 1e-12);
                }
            }
        }
    }
}
