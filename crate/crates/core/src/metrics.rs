//! Collapse diagnostics for a representation matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, matmul, singular_values, Matrix, RepMatrix, Spectrum};

/// Row or column norms at or below this make a cosine undefined.
pub const COSINE_ZERO_NORM: f64 = 1e-12;

/// Measurements of one layer's representations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub layer_index: usize,
    pub variance: f64,
    /// Absent for an all-zero matrix.
    pub effective_rank: Option<f64>,
    pub uniformity_loss: f64,
    pub vicreg_exp_loss: f64,
    pub dim_loss: f64,
    /// Absent when some row has zero norm or there is a single row.
    pub feature_similarity: Option<f64>,
    /// Absent when no attention matrix was used at this layer.
    pub attention_similarity: Option<f64>,
    pub singular_values: Spectrum,
}

/// Squared Frobenius norm of the column-centered matrix.
pub fn variance(h: &RepMatrix) -> f64 {
    h.center_columns().frobenius_sq()
}

/// `exp` of the Shannon entropy (natural log) of the L1-normalized
/// singular values; zero singular values contribute nothing.
pub fn effective_rank_of(spectrum: &Spectrum) -> Result<f64> {
    let total = spectrum.sum();
    if !(total > 1e-300) {
        return Err(Error::Degenerate(
            "effective rank of an all-zero spectrum".into(),
        ));
    }
    let entropy: f64 = spectrum
        .values()
        .iter()
        .map(|&s| s / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok(entropy.exp())
}

pub fn effective_rank(h: &RepMatrix) -> Result<f64> {
    effective_rank_of(&singular_values(h)?)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `Σ_i log Σ_j exp(h_iᵀ h_j / tau)`, self-term included.
pub fn uniformity_loss(h: &RepMatrix, tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidConfig("tau must be positive".into()));
    }
    let n = h.rows();
    let mut logits = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..n {
        let hi = h.row(i);
        for (j, l) in logits.iter_mut().enumerate() {
            *l = dot(hi, h.row(j)) / tau;
        }
        total += log_sum_exp(&logits);
    }
    Ok(total)
}

/// Feature-decorrelation loss over columns: the uniformity loss of `Hᵀ` at
/// unit temperature.
pub fn vicreg_exp_loss(h: &RepMatrix) -> f64 {
    uniformity_loss(&h.transpose(), 1.0).expect("unit temperature is valid")
}

/// `tr((I - HHᵀ)²) / 4`, evaluated as `(n - 2‖H‖² + ‖HᵀH‖²) / 4` through
/// whichever Gram matrix is smaller.
pub fn dim_loss(h: &RepMatrix) -> f64 {
    let gram = if h.rows() <= h.cols() {
        h.gram_rows()
    } else {
        h.gram_cols()
    };
    (h.rows() as f64 - 2.0 * h.frobenius_sq() + gram.frobenius_sq()) / 4.0
}

/// Gradient of [`dim_loss`], `-(I - HHᵀ) H`.
pub fn dim_loss_gradient(h: &RepMatrix) -> RepMatrix {
    let hhh = matmul(&h.gram_rows(), h).expect("square gram times h");
    hhh.sub(h).expect("same shape")
}

fn unit_rows(vectors: &Matrix, what: &str) -> Result<Matrix> {
    let mut out = vectors.clone();
    for i in 0..out.rows() {
        let r = out.row_mut(i);
        let norm = dot(r, r).sqrt();
        if norm <= COSINE_ZERO_NORM {
            return Err(Error::Degenerate(format!("{what} {i} has zero norm")));
        }
        r.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(out)
}

fn mean_pairwise_cosine(unit: &Matrix) -> f64 {
    let n = unit.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += dot(unit.row(i), unit.row(j));
        }
    }
    2.0 * sum / (n * (n - 1)) as f64
}

/// Mean cosine similarity over unordered pairs of rows.
pub fn feature_similarity(h: &RepMatrix) -> Result<f64> {
    if h.rows() < 2 {
        return Err(Error::Degenerate("feature similarity needs two rows".into()));
    }
    Ok(mean_pairwise_cosine(&unit_rows(h, "row")?))
}

/// Mean pairwise cosine similarity between the columns of each attention
/// matrix, averaged over heads.
pub fn attention_similarity(heads: &[Matrix]) -> Result<f64> {
    let first = heads
        .first()
        .ok_or_else(|| Error::Degenerate("no attention heads".into()))?;
    let n = first.rows();
    if n < 2 {
        return Err(Error::Degenerate("attention similarity needs n >= 2".into()));
    }
    let mut total = 0.0;
    for (k, a) in heads.iter().enumerate() {
        if a.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "head {k} is {}x{}, expected {n}x{n}",
                a.rows(),
                a.cols()
            )));
        }
        total += mean_pairwise_cosine(&unit_rows(&a.transpose(), "column")?);
    }
    Ok(total / heads.len() as f64)
}

/// Bundles every measurement for one layer. Undefined quantities
/// (effective rank of a zero matrix, cosines of zero rows) are recorded as
/// absent rather than failing the whole record.
pub fn diagnostics(
    h: &RepMatrix,
    attention: Option<&[Matrix]>,
    tau: f64,
    layer_index: usize,
) -> Result<LayerDiagnostics> {
    let spectrum = singular_values(h)?;
    let effective_rank = match effective_rank_of(&spectrum) {
        Ok(r) => Some(r),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let feature_similarity = match feature_similarity(h) {
        Ok(v) => Some(v),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let attention_similarity = match attention {
        None => None,
        Some(heads) => match attention_similarity(heads) {
            Ok(v) => Some(v),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        },
    };
    Ok(LayerDiagnostics {
        layer_index,
        variance: variance(h),
        effective_rank,
        uniformity_loss: uniformity_loss(h, tau)?,
        vicreg_exp_loss: vicreg_exp_loss(h),
        dim_loss: dim_loss(h),
        feature_similarity,
        attention_similarity,
        singular_values: spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, orthonormal_rows, seeded};
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance(&Matrix::filled(3, 2, 4.0)), 0.0);
        assert!((variance(&Matrix::identity(2)) - 1.0).abs() < 1e-15);
        let mut rng = seeded(1);
        let h = gaussian_matrix(&mut rng, 5, 3);
        assert!((variance(&h.scale(-3.0)) - 9.0 * variance(&h)).abs() < 1e-12 * variance(&h) * 9.0);
    }

    #[test]
    fn variance_matches_projector_form() {
        let mut rng = seeded(2);
        for n in 1..=8 {
            let h = gaussian_matrix(&mut rng, n, 3);
            let c = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
            let projected = matmul(&c, &h).unwrap().frobenius_sq();
            assert!((variance(&h) - projected).abs() <= 1e-9);
        }
    }

    #[test]
    fn effective_rank_examples() {
        let r = effective_rank_of(&Spectrum::new(vec![1.0, 1.0]).unwrap()).unwrap();
        assert!((r - 2.0).abs() < 1e-15);
        // p = (2/3, 1/3): entropy = ln 3 - (2/3) ln 2 = 0.636514...
        let r = effective_rank_of(&Spectrum::new(vec![1.0, 0.5]).unwrap()).unwrap();
        let oracle = (3.0_f64.ln() - 2.0 / 3.0 * 2.0_f64.ln()).exp();
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 1.8899).abs() < 1e-3);
        let u = [1.0, 2.0, -1.0];
        let v = [0.5, 0.0, 3.0, 1.0];
        let rank1 = Matrix::from_fn(3, 4, |i, j| u[i] * v[j]);
        assert!((effective_rank(&rank1).unwrap() - 1.0).abs() < 1e-6);
        assert!(matches!(effective_rank(&Matrix::zeros(3, 2)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn uniformity_examples() {
        let z = uniformity_loss(&Matrix::zeros(5, 3), 0.7).unwrap();
        assert!((z - 5.0 * 5.0_f64.ln()).abs() < 1e-12);
        // Each row: log(e^1 + e^0).
        let ortho = uniformity_loss(&Matrix::identity(2), 1.0).unwrap();
        assert!((ortho - 2.0 * (1.0_f64.exp() + 1.0).ln()).abs() < 1e-9);
        assert!((ortho - 2.6265).abs() < 1e-4);
        let antipodal = m(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let taus = [0.5, 0.75, 1.0, 1.5, 2.0];
        let losses: Vec<f64> = taus.iter().map(|&t| uniformity_loss(&antipodal, t).unwrap()).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
        assert!(uniformity_loss(&antipodal, 0.0).is_err());
    }

    #[test]
    fn vicreg_examples() {
        let z = vicreg_exp_loss(&Matrix::zeros(5, 3));
        assert!((z - 3.0 * 3.0_f64.ln()).abs() < 1e-12);
        let mut rng = seeded(3);
        let h = gaussian_matrix(&mut rng, 4, 3);
        assert_eq!(vicreg_exp_loss(&h), uniformity_loss(&h.transpose(), 1.0).unwrap());
        let col = gaussian_matrix(&mut rng, 6, 1);
        assert!((vicreg_exp_loss(&col) - col.frobenius_sq()).abs() < 1e-12);
    }

    #[test]
    fn dim_loss_examples() {
        let mut rng = seeded(4);
        let q = orthonormal_rows(&mut rng, 3, 5);
        assert!(dim_loss(&q).abs() < 1e-14);
        assert!((dim_loss(&Matrix::zeros(6, 2)) - 1.5).abs() < 1e-15);
        let h = gaussian_matrix(&mut rng, 4, 3);
        let i_minus = Matrix::identity(4).sub(&h.gram_rows()).unwrap();
        let direct = matmul(&i_minus, &i_minus).unwrap().trace() / 4.0;
        assert!((dim_loss(&h) - direct).abs() < 1e-12);
    }

    #[test]
    fn dim_loss_gradient_matches_finite_differences() {
        let mut rng = seeded(5);
        let h = gaussian_matrix(&mut rng, 4, 3).scale(0.6);
        let grad = dim_loss_gradient(&h);
        let step = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let mut p = h.clone();
                p.set(i, j, h.get(i, j) + step);
                let mut q = h.clone();
                q.set(i, j, h.get(i, j) - step);
                let fd = (dim_loss(&p) - dim_loss(&q)) / (2.0 * step);
                assert!((fd - grad.get(i, j)).abs() <= 1e-6, "{fd} vs {}", grad.get(i, j));
            }
        }
    }

    #[test]
    fn similarity_examples() {
        assert!((feature_similarity(&Matrix::filled(4, 3, 2.0)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(feature_similarity(&Matrix::identity(2)).unwrap(), 0.0);
        let three = m(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]]);
        assert!((feature_similarity(&three).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert!(feature_similarity(&m(&[&[1.0, 0.0], &[0.0, 0.0]])).is_err());

        let uniform = Matrix::filled(4, 4, 0.25);
        assert!((attention_similarity(&[uniform.clone()]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(attention_similarity(&[Matrix::identity(4)]).unwrap(), 0.0);
        let two = attention_similarity(&[uniform, Matrix::identity(4)]).unwrap();
        assert!((two - 0.5).abs() < 1e-15);
        assert!(matches!(
            attention_similarity(&[Matrix::identity(3), Matrix::identity(4)]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn diagnostics_bundle() {
        let mut rng = seeded(6);
        let q = orthonormal_rows(&mut rng, 4, 8);
        let d = diagnostics(&q, None, 1.0, 3).unwrap();
        assert_eq!(d.layer_index, 3);
        assert!((d.effective_rank.unwrap() - 4.0).abs() < 1e-9);
        assert!(d.feature_similarity.unwrap().abs() < 1e-12);
        assert!(d.attention_similarity.is_none());

        let c = diagnostics(&Matrix::filled(5, 3, 1.5), None, 1.0, 0).unwrap();
        assert_eq!(c.variance, 0.0);
        assert!((c.feature_similarity.unwrap() - 1.0).abs() < 1e-15);

        let z = diagnostics(&Matrix::zeros(3, 3), Some(&[Matrix::identity(3)]), 1.0, 0).unwrap();
        assert!(z.effective_rank.is_none());
        assert!(z.feature_similarity.is_none());
        assert_eq!(z.attention_similarity, Some(0.0));
    }

    proptest! {
        #[test]
        fn effective_rank_scale_invariant_and_bounded(
            seed in 0u64..1000, n in 1usize..8, d in 1usize..8, c in 0.01f64..100.0
        ) {
            let mut rng = seeded(seed);
            let h = gaussian_matrix(&mut rng, n, d);
            let r = effective_rank(&h).unwrap();
            let rc = effective_rank(&h.scale(c)).unwrap();
            prop_assert!((r - rc).abs() <= 1e-9);
            prop_assert!(r >= 1.0 - 1e-12 && r <= n.min(d) as f64 + 1e-12);
        }

        #[test]
        fn feature_similarity_ignores_row_scaling(
            seed in 0u64..1000, n in 2usize..8, d in 1usize..6
        ) {
            let mut rng = seeded(seed);
            let h = gaussian_matrix(&mut rng, n, d);
            let scales = gaussian_matrix(&mut rng, n, 1).map(|x| x.abs() + 0.1);
            let scaled = Matrix::from_fn(n, d, |i, j| h.get(i, j) * scales.get(i, 0));
            let a = feature_similarity(&h).unwrap();
            let b = feature_similarity(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}
