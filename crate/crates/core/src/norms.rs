//! Representation-update layers: the ContraNorm family and the LayerNorm /
//! PairNorm baselines.
//!
//! Every layer is a pure function `&RepMatrix -> RepMatrix`. The ContraNorm
//! updates take one gradient step of size `s` on the uniformity loss at
//! temperature `tau`:
//!
//! | variant | update |
//! |---|---|
//! | `ContraNormFull` | `H - s/tau (softmax_rows(HHᵀ/tau) + softmax_cols(HHᵀ/tau)) H` |
//! | `ContraNormSg`   | `H - s/tau softmax_rows(HHᵀ) H` |
//! | `ContraNormReg`  | `(1+s) H - s/tau softmax_rows(HHᵀ) H` |
//! | `ContraNorm`     | `LayerNorm(ContraNormSg(H))` |
//! | `ContraNormD`    | `LayerNorm(H - s/tau H softmax_rows(HᵀH))` |
//!
//! The stop-gradient family uses raw `HHᵀ` logits unless
//! [`NormalizerConfig::temper_logits`] is set, in which case the logits are
//! divided by `tau` as in the full update.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, matmul, softmax_cols, softmax_in_place, softmax_rows, Matrix, RepMatrix};

/// Row norms below this are treated as zero by [`pair_norm`].
pub const PAIRNORM_ZERO_ROW: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormVariant {
    None,
    #[serde(rename = "layernorm")]
    LayerNorm,
    #[serde(rename = "pairnorm")]
    PairNorm,
    #[serde(rename = "contranorm-full")]
    ContraNormFull,
    #[serde(rename = "contranorm-sg")]
    ContraNormSg,
    #[serde(rename = "contranorm-reg")]
    ContraNormReg,
    #[serde(rename = "contranorm")]
    ContraNorm,
    #[serde(rename = "contranorm-d")]
    ContraNormD,
}

impl NormVariant {
    pub const ALL: [NormVariant; 8] = [
        NormVariant::None,
        NormVariant::LayerNorm,
        NormVariant::PairNorm,
        NormVariant::ContraNormFull,
        NormVariant::ContraNormSg,
        NormVariant::ContraNormReg,
        NormVariant::ContraNorm,
        NormVariant::ContraNormD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormVariant::None => "none",
            NormVariant::LayerNorm => "layernorm",
            NormVariant::PairNorm => "pairnorm",
            NormVariant::ContraNormFull => "contranorm-full",
            NormVariant::ContraNormSg => "contranorm-sg",
            NormVariant::ContraNormReg => "contranorm-reg",
            NormVariant::ContraNorm => "contranorm",
            NormVariant::ContraNormD => "contranorm-d",
        }
    }
}

impl fmt::Display for NormVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormVariant {
    type Err = Error;

    /// Accepts the full names plus the short forms `sg`, `full`, `reg`, `d`.
    fn from_str(s: &str) -> Result<Self> {
        let v = match s {
            "sg" => NormVariant::ContraNormSg,
            "full" => NormVariant::ContraNormFull,
            "reg" => NormVariant::ContraNormReg,
            "d" | "dual" => NormVariant::ContraNormD,
            other => *NormVariant::ALL
                .iter()
                .find(|v| v.name() == other)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown norm variant `{other}`")))?,
        };
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizerConfig {
    pub variant: NormVariant,
    /// Step size `s` of the uniformity-loss gradient step.
    pub scale: f64,
    /// Temperature `tau`.
    pub tau: f64,
    /// Per-dimension LayerNorm gain; `None` means all ones.
    pub gamma: Option<Vec<f64>>,
    /// Per-dimension LayerNorm shift; `None` means all zeros.
    pub beta: Option<Vec<f64>>,
    pub layernorm_eps: f64,
    /// Target row norm of [`pair_norm`].
    pub pairnorm_scale: f64,
    /// Divide the stop-gradient logits by `tau`.
    pub temper_logits: bool,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        NormalizerConfig {
            variant: NormVariant::None,
            scale: 0.0,
            tau: 1.0,
            gamma: None,
            beta: None,
            layernorm_eps: 1e-5,
            pairnorm_scale: 1.0,
            temper_logits: false,
        }
    }
}

impl NormalizerConfig {
    pub fn new(variant: NormVariant) -> Self {
        NormalizerConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn with_scale(mut self, s: f64) -> Self {
        self.scale = s;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_affine(mut self, gamma: Vec<f64>, beta: Vec<f64>) -> Self {
        self.gamma = Some(gamma);
        self.beta = Some(beta);
        self
    }

    pub fn with_temper_logits(mut self, on: bool) -> Self {
        self.temper_logits = on;
        self
    }

    /// Checks scalar ranges, and affine lengths against `dim` when given.
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return bad("scale s must be non-negative");
        }
        if !(self.layernorm_eps.is_finite() && self.layernorm_eps > 0.0) {
            return bad("layernorm eps must be positive");
        }
        if !(self.pairnorm_scale.is_finite() && self.pairnorm_scale > 0.0) {
            return bad("pairnorm scale must be positive");
        }
        for (name, v) in [("gamma", &self.gamma), ("beta", &self.beta)] {
            let Some(v) = v else { continue };
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} has non-finite entries")));
            }
            if let Some(d) = dim {
                if v.len() != d {
                    return Err(Error::InvalidConfig(format!(
                        "{name} has length {}, feature dimension is {d}",
                        v.len()
                    )));
                }
            }
        }
        Ok(())
    }

    fn logit_scale(&self) -> f64 {
        if self.temper_logits {
            1.0 / self.tau
        } else {
            1.0
        }
    }
}

pub fn layer_norm(h: &RepMatrix, cfg: &NormalizerConfig) -> Result<RepMatrix> {
    cfg.validate(Some(h.cols()))?;
    let d = h.cols();
    let mut out = h.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + cfg.layernorm_eps).sqrt();
        for (j, x) in row.iter_mut().enumerate() {
            let g = cfg.gamma.as_ref().map_or(1.0, |g| g[j]);
            let b = cfg.beta.as_ref().map_or(0.0, |b| b[j]);
            *x = g * ((*x - mean) * inv) + b;
        }
    }
    Ok(out)
}

/// `softmax_rows(c · HHᵀ) · H`, streamed one row at a time so that memory
/// stays `O(n)` beyond the output.
pub fn attention_smooth(h: &RepMatrix, logit_scale: f64) -> RepMatrix {
    let (n, d) = h.shape();
    let mut out = Matrix::zeros(n, d);
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let hi = h.row(i);
        for (j, w) in weights.iter_mut().enumerate() {
            *w = logit_scale * dot(hi, h.row(j));
        }
        softmax_in_place(&mut weights);
        let dst = out.row_mut(i);
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, x) in dst.iter_mut().zip(h.row(j)) {
                *o += w * x;
            }
        }
    }
    out
}

/// Stop-gradient step without the trailing LayerNorm.
pub fn sg_update(h: &RepMatrix, cfg: &NormalizerConfig, keep: f64) -> Result<RepMatrix> {
    cfg.validate(Some(h.cols()))?;
    if cfg.scale == 0.0 {
        return Ok(h.clone());
    }
    let smoothed = attention_smooth(h, cfg.logit_scale());
    h.axpby(keep, &smoothed, -cfg.scale / cfg.tau)
}

pub fn contranorm_full(h: &RepMatrix, cfg: &NormalizerConfig) -> Result<RepMatrix> {
    cfg.validate(Some(h.cols()))?;
    if cfg.scale == 0.0 {
        return Ok(h.clone());
    }
    let logits = h.gram_rows().scale(1.0 / cfg.tau);
    let both = softmax_rows(&logits).add(&softmax_cols(&logits))?;
    h.axpby(1.0, &matmul(&both, h)?, -cfg.scale / cfg.tau)
}

pub fn contranorm_sg(h: &RepMatrix, cfg: &NormalizerConfig) -> Result<RepMatrix> {
    sg_update(h, cfg, 1.0)
}

pub fn contranorm_reg(h: &RepMatrix, cfg: &NormalizerConfig) -> Result<RepMatrix> {
    sg_update(h, cfg, 1.0 + cfg.scale)
}

pub fn contranorm(h: &RepMatrix, cfg: &NormalizerConfig) -> Result<RepMatrix> {
    layer_norm(&contranorm_sg(h, cfg)?, cfg)
}

/// Dual step `H - s/tau · H · softmax_rows(HᵀH)` before LayerNorm. Costs
/// `O(n d²)`.
pub fn dual_update(h: &RepMatrix, cfg: &NormalizerConfig) -> Result<RepMatrix> {
    cfg.validate(Some(h.cols()))?;
    if cfg.scale == 0.0 {
        return Ok(h.clone());
    }
    let corr = softmax_rows(&h.gram_cols().scale(cfg.logit_scale()));
    h.axpby(1.0, &matmul(h, &corr)?, -cfg.scale / cfg.tau)
}

pub fn contranorm_dual(h: &RepMatrix, cfg: &NormalizerConfig) -> Result<RepMatrix> {
    layer_norm(&dual_update(h, cfg)?, cfg)
}

/// Scale-individual PairNorm: center the columns, then rescale every row to
/// norm `pairnorm_scale`. Rows that center to (numerically) zero stay zero.
pub fn pair_norm(h: &RepMatrix, cfg: &NormalizerConfig) -> Result<RepMatrix> {
    cfg.validate(Some(h.cols()))?;
    let mut out = h.center_columns();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = dot(row, row).sqrt();
        if norm < PAIRNORM_ZERO_ROW {
            row.iter_mut().for_each(|x| *x = 0.0);
        } else {
            let f = cfg.pairnorm_scale / norm;
            row.iter_mut().for_each(|x| *x *= f);
        }
    }
    Ok(out)
}

/// Applies the layer selected by `cfg.variant`.
pub fn apply(h: &RepMatrix, cfg: &NormalizerConfig) -> Result<RepMatrix> {
    cfg.validate(Some(h.cols()))?;
    match cfg.variant {
        NormVariant::None => Ok(h.clone()),
        NormVariant::LayerNorm => layer_norm(h, cfg),
        NormVariant::PairNorm => pair_norm(h, cfg),
        NormVariant::ContraNormFull => contranorm_full(h, cfg),
        NormVariant::ContraNormSg => contranorm_sg(h, cfg),
        NormVariant::ContraNormReg => contranorm_reg(h, cfg),
        NormVariant::ContraNorm => contranorm(h, cfg),
        NormVariant::ContraNormD => contranorm_dual(h, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{uniformity_loss, variance};
    use crate::rng::{gaussian_matrix, seeded};
    use proptest::prelude::*;

    fn cfg(variant: NormVariant, s: f64) -> NormalizerConfig {
        NormalizerConfig::new(variant).with_scale(s)
    }

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_rows(&[v]).unwrap()
    }

    #[test]
    fn layer_norm_examples() {
        let c = NormalizerConfig::default();
        assert_eq!(layer_norm(&row(&[1.0, 1.0]), &c).unwrap(), row(&[0.0, 0.0]));
        let out = layer_norm(&row(&[0.0, 2.0]), &c).unwrap();
        // mean 1, variance 1: (x - 1) / sqrt(1 + 1e-5)
        let expect = 1.0 / (1.0_f64 + 1e-5).sqrt();
        assert!((out.get(0, 0) + expect).abs() < 1e-15);
        assert!((out.get(0, 1) - expect).abs() < 1e-15);
        assert!((out.get(0, 1) - 1.0).abs() < 1e-4);
        let c = NormalizerConfig::default().with_affine(vec![0.0; 3], vec![5.0; 3]);
        assert_eq!(layer_norm(&row(&[3.0, -1.0, 7.0]), &c).unwrap(), row(&[5.0, 5.0, 5.0]));
    }

    #[test]
    fn affine_length_is_validated() {
        let c = NormalizerConfig::new(NormVariant::LayerNorm).with_affine(vec![1.0; 2], vec![0.0; 2]);
        assert!(matches!(apply(&Matrix::zeros(2, 3), &c), Err(Error::InvalidConfig(_))));
        assert!(NormalizerConfig::default().with_tau(0.0).validate(None).is_err());
        assert!(NormalizerConfig::default().with_scale(-1.0).validate(None).is_err());
    }

    #[test]
    fn zero_scale_is_identity() {
        let mut rng = seeded(2);
        let h = gaussian_matrix(&mut rng, 5, 3);
        for v in [NormVariant::ContraNormFull, NormVariant::ContraNormSg, NormVariant::ContraNormReg] {
            assert_eq!(apply(&h, &cfg(v, 0.0)).unwrap(), h, "{v}");
        }
        let ln = layer_norm(&h, &NormalizerConfig::default()).unwrap();
        assert_eq!(contranorm(&h, &cfg(NormVariant::ContraNorm, 0.0)).unwrap(), ln);
        assert_eq!(contranorm_dual(&h, &cfg(NormVariant::ContraNormD, 0.0)).unwrap(), ln);
    }

    #[test]
    fn single_row_updates() {
        let h = row(&[0.3, -1.2, 2.0]);
        let s = 0.25;
        let full = contranorm_full(&h, &cfg(NormVariant::ContraNormFull, s)).unwrap();
        assert!(full.max_abs_diff(&h.scale(1.0 - 2.0 * s)).unwrap() < 1e-15);
        let sg = contranorm_sg(&h, &cfg(NormVariant::ContraNormSg, s)).unwrap();
        assert!(sg.max_abs_diff(&h.scale(1.0 - s)).unwrap() < 1e-15);
        let reg = contranorm_reg(&h, &cfg(NormVariant::ContraNormReg, s)).unwrap();
        assert!(reg.max_abs_diff(&h).unwrap() < 1e-15);
    }

    #[test]
    fn identical_rows_shrink_by_one_minus_step() {
        let h = Matrix::from_fn(4, 3, |_, j| [0.5, -0.25, 1.5][j]);
        let c = cfg(NormVariant::ContraNormSg, 0.3).with_tau(2.0);
        let smoothed = attention_smooth(&h, 1.0);
        assert!(smoothed.max_abs_diff(&h).unwrap() <= 1e-12);
        let sg = contranorm_sg(&h, &c).unwrap();
        assert!(sg.max_abs_diff(&h.scale(1.0 - 0.3 / 2.0)).unwrap() <= 1e-12);
    }

    /// Central finite differences of the uniformity loss.
    fn fd_gradient(h: &Matrix, tau: f64) -> Matrix {
        let step = 1e-6;
        Matrix::from_fn(h.rows(), h.cols(), |i, j| {
            let mut plus = h.clone();
            plus.set(i, j, h.get(i, j) + step);
            let mut minus = h.clone();
            minus.set(i, j, h.get(i, j) - step);
            (uniformity_loss(&plus, tau).unwrap() - uniformity_loss(&minus, tau).unwrap()) / (2.0 * step)
        })
    }

    #[test]
    fn full_update_is_a_gradient_step() {
        let mut rng = seeded(17);
        let h = gaussian_matrix(&mut rng, 4, 3).scale(0.5);
        let s = 0.1;
        let out = contranorm_full(&h, &cfg(NormVariant::ContraNormFull, s)).unwrap();
        let expect = h.axpby(1.0, &fd_gradient(&h, 1.0), -s).unwrap();
        assert!(out.max_abs_diff(&expect).unwrap() <= 1e-5);
    }

    #[test]
    fn full_update_matches_analytic_gradient() {
        let mut rng = seeded(18);
        let h = gaussian_matrix(&mut rng, 6, 4);
        let (s, tau) = (0.2, 0.7);
        let c = cfg(NormVariant::ContraNormFull, s).with_tau(tau).with_temper_logits(true);
        let grad = crate::verify::uniformity_gradient(&h, tau).unwrap();
        let expect = h.axpby(1.0, &grad, -s).unwrap();
        assert!(contranorm_full(&h, &c).unwrap().max_abs_diff(&expect).unwrap() <= 1e-12);
    }

    /// Five rows whose Gram matrix is `c (I - 11ᵀ/5)`: equal norms and equal
    /// pairwise products, so the attention matrix is doubly stochastic and
    /// `P` is positive semi-definite.
    fn simplex_rows(seed: u64, scale: f64) -> Matrix {
        let mut rng = seeded(seed);
        let g = gaussian_matrix(&mut rng, 5, 4).center_columns().transpose();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for i in 0..4 {
            let mut v = g.row(i).to_vec();
            for b in &basis {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let norm = dot(&v, &v).sqrt();
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
        Matrix::from_fn(5, 4, |i, j| scale * basis[j][i])
    }

    #[test]
    fn reg_increases_variance_when_sigma_min_nonnegative() {
        for seed in 0..5 {
            let h = simplex_rows(seed, 2.0);
            let report = crate::verify::check_prop1(&h, 0.5).unwrap();
            assert!(report.sigma_min.unwrap() >= -1e-12, "{report:?}");
            let out = contranorm_reg(&h, &cfg(NormVariant::ContraNormReg, 0.5)).unwrap();
            assert!(variance(&out) >= variance(&h), "{} < {}", variance(&out), variance(&h));
        }
    }

    #[test]
    fn contranorm_rows_are_standardized() {
        let mut rng = seeded(8);
        let h = gaussian_matrix(&mut rng, 6, 16).scale(3.0);
        let out = contranorm(&h, &cfg(NormVariant::ContraNorm, 0.7)).unwrap();
        for i in 0..out.rows() {
            let r = out.row(i);
            let mean = r.iter().sum::<f64>() / 16.0;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-3 && (var - 1.0).abs() < 1e-3, "{mean} {var}");
        }
        let z = Matrix::zeros(3, 4);
        assert_eq!(contranorm(&z, &cfg(NormVariant::ContraNorm, 0.7)).unwrap(), z);
        assert_eq!(contranorm_dual(&z, &cfg(NormVariant::ContraNormD, 0.7)).unwrap(), z);
    }

    #[test]
    fn dual_is_transposed_sg_with_column_softmax() {
        let mut rng = seeded(21);
        let h = gaussian_matrix(&mut rng, 7, 3);
        let c = cfg(NormVariant::ContraNormD, 0.4).with_tau(1.5);
        let dual = dual_update(&h, &c).unwrap();
        let ht = h.transpose();
        let corr = softmax_cols(&ht.gram_rows());
        let swapped = ht.axpby(1.0, &matmul(&corr, &ht).unwrap(), -0.4 / 1.5).unwrap();
        assert!(dual.transpose().max_abs_diff(&swapped).unwrap() <= 1e-12);
    }

    #[test]
    fn streamed_smoothing_matches_dense() {
        let mut rng = seeded(22);
        let h = gaussian_matrix(&mut rng, 9, 5);
        let dense = matmul(&softmax_rows(&h.gram_rows().scale(0.5)), &h).unwrap();
        assert!(attention_smooth(&h, 0.5).max_abs_diff(&dense).unwrap() <= 1e-12);
    }

    #[test]
    fn pair_norm_postconditions() {
        let mut rng = seeded(9);
        let h = gaussian_matrix(&mut rng, 6, 3);
        assert!(h.center_columns().col_means().iter().all(|m| m.abs() < 1e-12));
        let mut c = NormalizerConfig::new(NormVariant::PairNorm);
        c.pairnorm_scale = 2.5;
        let out = pair_norm(&h, &c).unwrap();
        for i in 0..out.rows() {
            assert!((dot(out.row(i), out.row(i)).sqrt() - 2.5).abs() <= 1e-9);
        }
        let same = Matrix::filled(4, 3, 1.25);
        assert_eq!(pair_norm(&same, &c).unwrap(), Matrix::zeros(4, 3));
    }

    #[test]
    fn dispatch_routes() {
        let mut rng = seeded(10);
        let h = gaussian_matrix(&mut rng, 5, 4);
        assert_eq!(apply(&h, &NormalizerConfig::default()).unwrap(), h);
        let c = cfg(NormVariant::ContraNormSg, 0.3);
        assert_eq!(apply(&h, &c).unwrap(), contranorm_sg(&h, &c).unwrap());
        let c = cfg(NormVariant::ContraNorm, 0.0);
        assert_eq!(apply(&h, &c).unwrap(), layer_norm(&h, &c).unwrap());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in NormVariant::ALL {
            assert_eq!(v.name().parse::<NormVariant>().unwrap(), v);
        }
        assert_eq!("sg".parse::<NormVariant>().unwrap(), NormVariant::ContraNormSg);
        assert!("batchnorm".parse::<NormVariant>().is_err());
    }

    proptest! {
        #[test]
        fn every_variant_is_permutation_equivariant(
            seed in 0u64..500, n in 2usize..8, d in 1usize..6, s in 0.0f64..1.5,
            temper in proptest::bool::ANY
        ) {
            let mut rng = seeded(seed);
            let h = gaussian_matrix(&mut rng, n, d);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.rotate_left(seed as usize % n);
            perm.swap(0, n - 1);
            let hp = h.permute_rows(&perm).unwrap();
            for v in NormVariant::ALL {
                let c = cfg(v, s).with_tau(0.8).with_temper_logits(temper);
                let a = apply(&hp, &c).unwrap();
                let b = apply(&h, &c).unwrap().permute_rows(&perm).unwrap();
                prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-12, "{v}");
            }
        }
    }
}
