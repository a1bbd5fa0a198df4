//! Numerical checks of the variance and effective-rank guarantees of the
//! ContraNorm updates, the lemmas behind them, and the analytic gradient of
//! the uniformity loss.
//!
//! Each `check_*` function evaluates one instance and reports both sides of
//! the inequality. The `*_suite` functions draw seeded random instances and
//! collect any instance where the hypothesis held but the conclusion did
//! not. Suites are deterministic: instance `i` of a suite seeded with `s`
//! uses the generator seed [`derive_seed`]`(s, i)`.

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::metrics::{effective_rank_of, uniformity_loss, variance};
use crate::numerics::{matmul, singular_values, softmax_cols, softmax_rows, sym_eigen, Matrix, RepMatrix, Spectrum};
use crate::rng::{derive_seed, gaussian_matrix, seeded, LabRng};

/// Absolute slack of the effective-rank comparison.
pub const ERANK_SLACK: f64 = 1e-10;
/// Tolerance of the eigenvalue-map multiset comparison.
pub const EIGEN_MAP_TOL: f64 = 1e-8;
/// Acceptance threshold of [`gradient_check`].
pub const GRADIENT_REL_TOL: f64 = 1e-5;
/// Central-difference step of [`gradient_check`].
pub const FD_STEP: f64 = 1e-6;
/// Largest eigenvalue accepted as "not larger than zero" by [`check_lemma1`].
pub const LEMMA1_EIG_TOL: f64 = 1e-12;
/// Row-stochastic inputs must have rows summing to one within this.
pub const STOCHASTIC_TOL: f64 = 1e-9;

fn variance_tolerance(rhs: f64) -> f64 {
    1e-9 * (1.0 + rhs.abs())
}

/// Outcome of one proposition instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropositionReport {
    pub instance_seed: Option<u64>,
    pub n: usize,
    pub d: usize,
    pub s: f64,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// Variance proposition only: the bound `Var(H_b) / (1 - s σ_min)`
    /// derived in the longer proof, recorded next to the asserted one.
    pub appendix_rhs: Option<f64>,
    pub condition_held: bool,
    pub claim_held: bool,
    /// Effective-rank proposition only: every non-zero singular value is
    /// equal, so the strict increase degenerates to equality.
    pub boundary: bool,
    /// `lhs - rhs`.
    pub slack: f64,
}

fn check_row_stochastic(a: &Matrix) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::NotStochastic(format!("{}x{} is not square", a.rows(), a.cols())));
    }
    if a.as_slice().iter().any(|&v| v < -1e-15) {
        return Err(Error::NotStochastic("negative entry".into()));
    }
    for (i, s) in a.row_sums().into_iter().enumerate() {
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// `P = (I - eeᵀ)(I - Ā) + (I - Ā)ᵀ(I - eeᵀ)` with `e = 1/√n`. The
/// projector is applied as column centering.
pub fn build_p(attn: &Matrix) -> Result<Matrix> {
    check_row_stochastic(attn)?;
    let n = attn.rows();
    let i_minus = Matrix::identity(n).sub(attn)?;
    let q = i_minus.center_columns();
    q.add(&q.transpose())
}

fn smallest_eigenvalue(m: &Matrix) -> Result<f64> {
    let (e, _) = sym_eigen(m)?;
    Ok(e.min().expect("non-empty spectrum"))
}

/// Variance bound for `H_t = ((1+s) I - s Ā) H` with `Ā = softmax(HHᵀ)`:
/// `Var(H_t) >= (1 + s σ_min(P)) Var(H)`.
pub fn check_prop1(h: &RepMatrix, s: f64) -> Result<PropositionReport> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidConfig("s must be positive".into()));
    }
    let attn = softmax_rows(&h.gram_rows());
    let sigma_min = smallest_eigenvalue(&build_p(&attn)?)?;
    let updated = h.axpby(1.0 + s, &matmul(&attn, h)?, -s)?;
    let before = variance(h);
    let lhs = variance(&updated);
    let rhs = (1.0 + s * sigma_min) * before;
    let appendix_rhs = (s * sigma_min < 1.0).then(|| before / (1.0 - s * sigma_min));
    Ok(PropositionReport {
        instance_seed: None,
        n: h.rows(),
        d: h.cols(),
        s,
        sigma_min: Some(sigma_min),
        sigma_max: None,
        lhs,
        rhs,
        appendix_rhs,
        condition_held: true,
        claim_held: lhs >= rhs - variance_tolerance(rhs),
        boundary: false,
        slack: lhs - rhs,
    })
}

/// `(1+s) H - s (HHᵀ) H`, one ascent step on `-tr((I - HHᵀ)²)/4`.
pub fn dim_update(h: &RepMatrix, s: f64) -> Result<RepMatrix> {
    let hhh = matmul(&h.gram_rows(), h)?;
    h.axpby(1.0 + s, &hhh, -s)
}

fn equal_nonzero_spectrum(sv: &Spectrum) -> bool {
    let max = sv.max().unwrap_or(0.0);
    let nonzero: Vec<f64> = sv.values().iter().copied().filter(|&v| v > 1e-6 * max).collect();
    match (nonzero.first(), nonzero.last()) {
        (Some(&hi), Some(&lo)) => hi - lo <= 1e-9 * hi,
        _ => true,
    }
}

/// Effective-rank increase of [`dim_update`] whenever
/// `1 + (1 - σ_max²) s > 0`.
pub fn check_prop2(h: &RepMatrix, s: f64) -> Result<PropositionReport> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidConfig("s must be positive".into()));
    }
    let sv = singular_values(h)?;
    let before = effective_rank_of(&sv)?;
    let sigma_max = sv.max().expect("non-empty spectrum");
    let updated = dim_update(h, s)?;
    let after = effective_rank_of(&singular_values(&updated)?)?;
    let condition_held = 1.0 + (1.0 - sigma_max * sigma_max) * s > 0.0;
    let boundary = equal_nonzero_spectrum(&sv);
    Ok(PropositionReport {
        instance_seed: None,
        n: h.rows(),
        d: h.cols(),
        s,
        sigma_min: None,
        sigma_max: Some(sigma_max),
        lhs: after,
        rhs: before,
        appendix_rhs: None,
        condition_held,
        claim_held: !condition_held || after > before - ERANK_SLACK,
        boundary,
        slack: after - before,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenMapReport {
    pub s: f64,
    /// `(λ s - (1 + s))² λ` for each eigenvalue `λ` of `HHᵀ`, sorted.
    pub predicted: Vec<f64>,
    /// Eigenvalues of `H_t H_tᵀ`, sorted.
    pub observed: Vec<f64>,
    pub max_abs_diff: f64,
    pub held: bool,
}

/// Compares the spectrum of `H_t H_tᵀ` for [`dim_update`] with the image of
/// the spectrum of `HHᵀ` under `λ -> (λ s - (1 + s))² λ`.
pub fn check_eigen_map(h: &RepMatrix, s: f64) -> Result<EigenMapReport> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::InvalidConfig("s must be non-negative".into()));
    }
    let (lambda, _) = sym_eigen(&h.gram_rows())?;
    let predicted = Spectrum::from_unsorted(
        lambda
            .values()
            .iter()
            .map(|&l| (l * s - (1.0 + s)).powi(2) * l)
            .collect(),
    );
    let updated = dim_update(h, s)?;
    let (observed, _) = sym_eigen(&updated.gram_rows())?;
    let max_abs_diff = predicted
        .values()
        .iter()
        .zip(observed.values())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(EigenMapReport {
        s,
        predicted: predicted.values().to_vec(),
        observed: observed.values().to_vec(),
        max_abs_diff,
        held: max_abs_diff <= EIGEN_MAP_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma3Report {
    pub ratio_increasing: bool,
    pub erank_a: f64,
    pub erank_b: f64,
    pub implication_held: bool,
}

/// Given the eigenvalues of `AAᵀ` and `BBᵀ` (both descending), checks that
/// a non-decreasing ratio `σ_i / λ_i` implies `erank(B) >= erank(A)`.
pub fn check_lemma3(gram_a: &Spectrum, gram_b: &Spectrum) -> Result<Lemma3Report> {
    if gram_a.len() != gram_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "spectra of length {} and {}",
            gram_a.len(),
            gram_b.len()
        )));
    }
    if gram_a.values().iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidConfig("eigenvalues of AAᵀ must be positive".into()));
    }
    let ratios: Vec<f64> = gram_b
        .values()
        .iter()
        .zip(gram_a.values())
        .map(|(s, l)| s / l)
        .collect();
    let ratio_increasing = ratios.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let sqrt_spec = |g: &Spectrum| Spectrum::from_unsorted(g.values().iter().map(|v| v.max(0.0).sqrt()).collect());
    let erank_a = effective_rank_of(&sqrt_spec(gram_a))?;
    let erank_b = effective_rank_of(&sqrt_spec(gram_b))?;
    Ok(Lemma3Report {
        ratio_increasing,
        erank_a,
        erank_b,
        implication_held: !ratio_increasing || erank_b >= erank_a - 1e-12,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagDominanceReport {
    /// `Σ_k a_kj <= 1 + n a_ij` for every `i, j`.
    pub condition_held: bool,
    pub sigma_min: f64,
    pub claim_held: bool,
}

/// Column-sum condition under which `P` is diagonally dominant, hence
/// positive semi-definite.
pub fn check_diag_dominance(attn: &Matrix) -> Result<DiagDominanceReport> {
    let p = build_p(attn)?;
    let n = attn.rows();
    let col = attn.col_sums();
    let condition_held = (0..n).all(|i| (0..n).all(|j| col[j] <= 1.0 + n as f64 * attn.get(i, j) + 1e-12));
    let sigma_min = smallest_eigenvalue(&p)?;
    Ok(DiagDominanceReport {
        condition_held,
        sigma_min,
        claim_held: !condition_held || sigma_min >= -1e-9,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub lambda: f64,
    /// Largest eigenvalue of `(I - eeᵀ) - λ Pᵀ (I - eeᵀ) P`.
    pub top_eigenvalue: f64,
    pub condition_held: bool,
    /// `Var(P X₀)`
    pub lhs: f64,
    /// `Var(X₀) / λ`
    pub rhs: f64,
    pub claim_held: bool,
}

/// If `(I - eeᵀ) - λ Pᵀ(I - eeᵀ)P` has no positive eigenvalue then
/// `Var(P X₀) >= Var(X₀) / λ`.
pub fn check_lemma1(x0: &RepMatrix, p: &Matrix, lambda: f64) -> Result<Lemma1Report> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidConfig("lambda must be positive".into()));
    }
    let n = x0.rows();
    if p.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "P is {}x{}, X₀ has {n} rows",
            p.rows(),
            p.cols()
        )));
    }
    let centered_p = p.center_columns();
    let projector = Matrix::identity(n).center_columns();
    let sigma = projector.axpby(1.0, &centered_p.gram_cols(), -lambda)?;
    let (eig, _) = sym_eigen(&sigma)?;
    let top_eigenvalue = eig.max().expect("non-empty spectrum");
    let condition_held = top_eigenvalue <= LEMMA1_EIG_TOL;
    let lhs = variance(&matmul(p, x0)?);
    let rhs = variance(x0) / lambda;
    Ok(Lemma1Report {
        lambda,
        top_eigenvalue,
        condition_held,
        lhs,
        rhs,
        claim_held: !condition_held || lhs >= rhs - 1e-9,
    })
}

/// Analytic gradient of the uniformity loss,
/// `(softmax_rows(HHᵀ/τ) + softmax_cols(HHᵀ/τ)) H / τ`.
pub fn uniformity_gradient(h: &RepMatrix, tau: f64) -> Result<RepMatrix> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidConfig("tau must be positive".into()));
    }
    let logits = h.gram_rows().scale(1.0 / tau);
    let both = softmax_rows(&logits).add(&softmax_cols(&logits))?;
    Ok(matmul(&both, h)?.scale(1.0 / tau))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    pub n: usize,
    pub d: usize,
    pub tau: f64,
    /// RMS of the input before it was standardized.
    pub input_rms: f64,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Compares [`uniformity_gradient`] with central finite differences of
/// [`uniformity_loss`], element by element, at the input rescaled to unit
/// RMS. Relative error uses the denominator `max(1, |analytic|)`.
pub fn gradient_check(h: &RepMatrix, tau: f64) -> Result<GradientReport> {
    let (n, d) = h.shape();
    let input_rms = (h.frobenius_sq() / (n * d) as f64).sqrt();
    let h = if input_rms > 0.0 { h.scale(1.0 / input_rms) } else { h.clone() };
    let analytic = uniformity_gradient(&h, tau)?;
    let mut max_rel_error = 0.0_f64;
    let mut probe = h.clone();
    for i in 0..n {
        for j in 0..d {
            let x = h.get(i, j);
            probe.set(i, j, x + FD_STEP);
            let plus = uniformity_loss(&probe, tau)?;
            probe.set(i, j, x - FD_STEP);
            let minus = uniformity_loss(&probe, tau)?;
            probe.set(i, j, x);
            let fd = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.get(i, j);
            max_rel_error = max_rel_error.max((a - fd).abs() / a.abs().max(1.0));
        }
    }
    Ok(GradientReport {
        n,
        d,
        tau,
        input_rms,
        max_rel_error,
        passed: max_rel_error <= GRADIENT_REL_TOL,
    })
}

// ---------------------------------------------------------------------------
// Randomized suites
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteOptions {
    pub instances: usize,
    pub seed: u64,
    /// Harness self-test: the first checked instance has its left-hand side
    /// replaced by `rhs - 1`, which must surface as a counterexample.
    pub inject_counterexample: bool,
}

impl SuiteOptions {
    pub fn new(instances: usize, seed: u64) -> Self {
        SuiteOptions {
            instances,
            seed,
            inject_counterexample: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    pub index: usize,
    pub instance_seed: u64,
    /// Full instance and report, enough to reproduce the failure.
    pub instance: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteSummary {
    pub name: String,
    pub instances: usize,
    /// Instances whose hypothesis held, so the conclusion was asserted.
    pub checked: usize,
    /// Instances outside the hypothesis or on an excluded boundary.
    pub skipped: usize,
    /// Smallest `lhs - rhs` over checked instances, where meaningful.
    pub worst_slack: Option<f64>,
    pub counterexamples: Vec<Counterexample>,
}

impl SuiteSummary {
    fn new(name: &str, instances: usize) -> Self {
        SuiteSummary {
            name: name.to_string(),
            instances,
            checked: 0,
            skipped: 0,
            worst_slack: None,
            counterexamples: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }

    fn record(&mut self, index: usize, instance_seed: u64, held: bool, slack: Option<f64>, instance: impl FnOnce() -> serde_json::Value) {
        self.checked += 1;
        if let Some(s) = slack {
            self.worst_slack = Some(self.worst_slack.map_or(s, |w| w.min(s)));
        }
        if !held {
            self.counterexamples.push(Counterexample {
                index,
                instance_seed,
                instance: instance(),
            });
        }
    }
}

fn inject(opts: &SuiteOptions, summary: &SuiteSummary) -> bool {
    opts.inject_counterexample && summary.checked == 0
}

fn apply_injection(r: &mut PropositionReport) {
    r.lhs = r.rhs - 1.0;
    r.slack = -1.0;
    r.claim_held = false;
}

/// `n` in `2..=16`, `d` in `1..=8`, standard normal entries.
fn random_features(rng: &mut LabRng) -> RepMatrix {
    let n = rng.random_range(2..=16);
    let d = rng.random_range(1..=8);
    gaussian_matrix(rng, n, d)
}

/// Instance `index` of the variance suite: Gaussian `H`, `s` cycling
/// through `{0.1, 0.5, 1.0}`.
pub fn prop1_instance(seed: u64, index: usize) -> (u64, RepMatrix, f64) {
    let instance_seed = derive_seed(seed, index as u64);
    let mut rng = seeded(instance_seed);
    let h = random_features(&mut rng);
    (instance_seed, h, [0.1, 0.5, 1.0][index % 3])
}

pub fn prop1_suite(opts: &SuiteOptions) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary::new("prop1", opts.instances);
    for index in 0..opts.instances {
        let (instance_seed, h, s) = prop1_instance(opts.seed, index);
        let mut r = check_prop1(&h, s)?;
        r.instance_seed = Some(instance_seed);
        if inject(opts, &summary) {
            apply_injection(&mut r);
        }
        summary.record(index, instance_seed, r.claim_held, Some(r.slack), || json!({ "h": h, "s": s, "report": r }));
    }
    Ok(summary)
}

/// Instance `index` of the effective-rank suite: Gaussian `H` rescaled so
/// that `σ_max` is uniform in `[0.1, 1]`, and `s` uniform in `(0, 1)`.
pub fn prop2_instance(seed: u64, index: usize) -> Result<(u64, RepMatrix, f64)> {
    let instance_seed = derive_seed(seed, index as u64);
    let mut rng = seeded(instance_seed);
    let h = random_features(&mut rng);
    let target = rng.random_range(0.1..=1.0);
    let sigma_max = singular_values(&h)?.max().expect("non-empty spectrum");
    let s = loop {
        let s: f64 = rng.random();
        if s > 0.0 {
            break s;
        }
    };
    Ok((instance_seed, h.scale(target / sigma_max), s))
}

pub fn prop2_suite(opts: &SuiteOptions) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary::new("prop2", opts.instances);
    for index in 0..opts.instances {
        let (instance_seed, h, s) = prop2_instance(opts.seed, index)?;
        let mut r = check_prop2(&h, s)?;
        r.instance_seed = Some(instance_seed);
        if r.boundary || !r.condition_held {
            summary.skipped += 1;
            continue;
        }
        if inject(opts, &summary) {
            apply_injection(&mut r);
        }
        summary.record(index, instance_seed, r.claim_held, Some(r.slack), || json!({ "h": h, "s": s, "report": r }));
    }
    Ok(summary)
}

/// Eigenvalue-map identity on the same instances as [`prop2_suite`].
pub fn eigenmap_suite(opts: &SuiteOptions) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary::new("eigenmap", opts.instances);
    for index in 0..opts.instances {
        let (instance_seed, h, s) = prop2_instance(opts.seed, index)?;
        let mut r = check_eigen_map(&h, s)?;
        if inject(opts, &summary) {
            r.max_abs_diff += 1.0;
            r.held = false;
        }
        summary.record(index, instance_seed, r.held, Some(EIGEN_MAP_TOL - r.max_abs_diff), || {
            json!({ "h": h, "s": s, "report": r })
        });
    }
    Ok(summary)
}

/// Row-stochastic `n x n`: a few Sinkhorn sweeps over a random positive
/// matrix (so columns nearly sum to one), finished by a row normalization.
fn near_doubly_stochastic(rng: &mut LabRng, n: usize, sweeps: usize) -> Matrix {
    let mut a = Matrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0));
    let normalize_rows = |a: &mut Matrix| {
        for i in 0..a.rows() {
            let s: f64 = a.row(i).iter().sum();
            a.row_mut(i).iter_mut().for_each(|x| *x /= s);
        }
    };
    for _ in 0..sweeps {
        normalize_rows(&mut a);
        let cols = a.col_sums();
        for i in 0..n {
            a.row_mut(i).iter_mut().zip(&cols).for_each(|(x, c)| *x /= c);
        }
    }
    normalize_rows(&mut a);
    a
}

/// Instance `index` of the diagonal-dominance suite. Even indices draw
/// near-doubly-stochastic matrices, odd indices the attention of Gaussian
/// features.
pub fn diagdom_instance(seed: u64, index: usize) -> (u64, Matrix) {
    let instance_seed = derive_seed(seed, index as u64);
    let mut rng = seeded(instance_seed);
    let n = rng.random_range(2..=16);
    let attn = if index % 2 == 0 {
        let sweeps = rng.random_range(0..=4);
        near_doubly_stochastic(&mut rng, n, sweeps)
    } else {
        let d = rng.random_range(1..=8);
        let scale = rng.random_range(0.1..1.0);
        softmax_rows(&gaussian_matrix(&mut rng, n, d).scale(scale).gram_rows())
    };
    (instance_seed, attn)
}

pub fn diagdom_suite(opts: &SuiteOptions) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary::new("diagdom", opts.instances);
    for index in 0..opts.instances {
        let (instance_seed, attn) = diagdom_instance(opts.seed, index);
        let mut r = check_diag_dominance(&attn)?;
        if !r.condition_held {
            summary.skipped += 1;
            continue;
        }
        if inject(opts, &summary) {
            r.sigma_min = -1.0;
            r.claim_held = false;
        }
        summary.record(index, instance_seed, r.claim_held, Some(r.sigma_min), || json!({ "attn": attn, "report": r }));
    }
    Ok(summary)
}

/// Instance `index` of the Lemma 1 suite: `P = I + K` with zero row sums
/// in `K` (so `P` fixes the constant direction), `λ` log-uniform in
/// `[0.1, 100]`.
pub fn lemma1_instance(seed: u64, index: usize) -> (u64, RepMatrix, Matrix, f64) {
    let instance_seed = derive_seed(seed, index as u64);
    let mut rng = seeded(instance_seed);
    let n = rng.random_range(2..=8);
    let d = rng.random_range(1..=6);
    let x0 = gaussian_matrix(&mut rng, n, d);
    let spread = rng.random_range(0.05..0.6);
    let k = gaussian_matrix(&mut rng, n, n).scale(spread).transpose().center_columns().transpose();
    let p = Matrix::identity(n).add(&k).expect("same shape");
    let lambda = 10f64.powf(rng.random_range(-1.0..2.0));
    (instance_seed, x0, p, lambda)
}

pub fn lemma1_suite(opts: &SuiteOptions) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary::new("lemma1", opts.instances);
    for index in 0..opts.instances {
        let (instance_seed, x0, p, lambda) = lemma1_instance(opts.seed, index);
        let mut r = check_lemma1(&x0, &p, lambda)?;
        if !r.condition_held {
            summary.skipped += 1;
            continue;
        }
        if inject(opts, &summary) {
            r.lhs = r.rhs - 1.0;
            r.claim_held = false;
        }
        summary.record(index, instance_seed, r.claim_held, Some(r.lhs - r.rhs), || {
            json!({ "x0": x0, "p": p, "lambda": lambda, "report": r })
        });
    }
    Ok(summary)
}

/// Instance `index` of the Lemma 3 suite: descending positive `λ`, and a
/// non-decreasing ratio sequence chosen so that `σ = ratio · λ` also stays
/// descending.
pub fn lemma3_instance(seed: u64, index: usize) -> (u64, Spectrum, Spectrum) {
    let instance_seed = derive_seed(seed, index as u64);
    let mut rng = seeded(instance_seed);
    let q = rng.random_range(1..=10);
    let mut lambda: Vec<f64> = (0..q).map(|_| 10f64.powf(rng.random_range(-3.0..1.0))).collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    let mut sigma = Vec::with_capacity(q);
    let mut ratio: f64 = rng.random_range(0.1..2.0);
    for i in 0..q {
        if i > 0 {
            // Keep σ_i <= σ_{i-1}: ratio_i in [ratio_{i-1}, ratio_{i-1} λ_{i-1} / λ_i].
            let hi = ratio * lambda[i - 1] / lambda[i];
            ratio += rng.random::<f64>() * (hi - ratio);
        }
        sigma.push(ratio * lambda[i]);
    }
    let sigma = Spectrum::from_unsorted(sigma);
    (instance_seed, Spectrum::new(lambda).expect("sorted"), sigma)
}

pub fn lemma3_suite(opts: &SuiteOptions) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary::new("lemma3", opts.instances);
    for index in 0..opts.instances {
        let (instance_seed, a, b) = lemma3_instance(opts.seed, index);
        let mut r = check_lemma3(&a, &b)?;
        if !r.ratio_increasing {
            summary.skipped += 1;
            continue;
        }
        if inject(opts, &summary) {
            r.erank_b = r.erank_a - 1.0;
            r.implication_held = false;
        }
        summary.record(index, instance_seed, r.implication_held, Some(r.erank_b - r.erank_a), || {
            json!({ "gram_a": a, "gram_b": b, "report": r })
        });
    }
    Ok(summary)
}

pub const GRADIENT_GRID_N: [usize; 3] = [2, 4, 8];
pub const GRADIENT_GRID_D: [usize; 3] = [1, 3, 8];
pub const GRADIENT_GRID_TAU: [f64; 3] = [0.5, 1.0, 2.0];

/// Gradient check over the `n x d x τ` grid, `seeds_per_point` Gaussian
/// inputs each.
pub fn gradient_grid(seeds_per_point: usize, seed: u64) -> Result<SuiteSummary> {
    let total = GRADIENT_GRID_N.len() * GRADIENT_GRID_D.len() * GRADIENT_GRID_TAU.len() * seeds_per_point;
    let mut summary = SuiteSummary::new("gradient", total);
    let mut index = 0;
    for &n in &GRADIENT_GRID_N {
        for &d in &GRADIENT_GRID_D {
            for &tau in &GRADIENT_GRID_TAU {
                for _ in 0..seeds_per_point {
                    let instance_seed = derive_seed(seed, index as u64);
                    let h = gaussian_matrix(&mut seeded(instance_seed), n, d);
                    let r = gradient_check(&h, tau)?;
                    summary.record(index, instance_seed, r.passed, Some(GRADIENT_REL_TOL - r.max_rel_error), || {
                        json!({ "h": h, "tau": tau, "report": r })
                    });
                    index += 1;
                }
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::orthonormal_rows;

    #[test]
    fn p_of_identity_and_uniform() {
        assert_eq!(build_p(&Matrix::identity(4)).unwrap(), Matrix::zeros(4, 4));
        let n = 5;
        let p = build_p(&Matrix::filled(n, n, 1.0 / n as f64)).unwrap();
        let expect = Matrix::identity(n).center_columns().scale(2.0);
        assert!(p.max_abs_diff(&expect).unwrap() < 1e-15);
        let (e, _) = sym_eigen(&p).unwrap();
        assert!(e.min().unwrap().abs() < 1e-12);
        assert!((e.max().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn p_is_symmetric_and_rejects_non_stochastic() {
        let mut rng = seeded(1);
        let attn = softmax_rows(&gaussian_matrix(&mut rng, 6, 3).gram_rows());
        let p = build_p(&attn).unwrap();
        assert!(p.max_abs_diff(&p.transpose()).unwrap() <= 1e-12);
        assert!(matches!(build_p(&Matrix::filled(3, 3, 0.5)), Err(Error::NotStochastic(_))));
    }

    #[test]
    fn prop1_constant_rows_and_zero_sigma() {
        let r = check_prop1(&Matrix::filled(4, 3, 0.7), 0.5).unwrap();
        assert_eq!(r.rhs, 0.0);
        assert!(r.claim_held);
        assert!(check_prop1(&Matrix::identity(2), 0.0).is_err());

        // Equal norms and equal pairwise products: doubly-stochastic
        // attention, σ_min = 0 up to round-off, variance cannot shrink.
        let mut rng = seeded(2);
        let h = orthonormal_rows(&mut rng, 4, 6).scale(1.5);
        let r = check_prop1(&h, 0.5).unwrap();
        assert!(r.sigma_min.unwrap().abs() < 1e-12);
        assert!(r.lhs >= variance(&h) - 1e-12);
    }

    #[test]
    fn prop1_random_instances() {
        let s = prop1_suite(&SuiteOptions::new(1000, 11)).unwrap();
        assert!(s.passed(), "{:?}", s.counterexamples.first());
        assert_eq!(s.checked, 1000);
    }

    #[test]
    fn prop2_diag_example() {
        let h = Matrix::diag(&[1.0, 0.5]);
        let r = check_prop2(&h, 0.1).unwrap();
        assert!(r.condition_held);
        assert!((r.rhs - 1.8899).abs() < 1e-3);
        // Mapped singular values: 1.0 * 1.0 and (1.1 - 0.1 * 0.25) * 0.5.
        let mapped = Spectrum::new(vec![1.0, 0.5375]).unwrap();
        let oracle = effective_rank_of(&mapped).unwrap();
        assert!((r.lhs - oracle).abs() < 1e-12);
        assert!((r.lhs - 1.9102).abs() < 1e-3);
        assert!(r.lhs > r.rhs && r.claim_held && !r.boundary);
    }

    #[test]
    fn prop2_equal_spectrum_is_boundary() {
        let mut rng = seeded(3);
        let h = orthonormal_rows(&mut rng, 3, 5).scale(0.8);
        let r = check_prop2(&h, 0.4).unwrap();
        assert!(r.boundary);
        assert!((r.lhs - 3.0).abs() < 1e-9 && (r.rhs - 3.0).abs() < 1e-9);
        assert!(matches!(check_prop2(&Matrix::zeros(2, 2), 0.1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn prop2_random_instances() {
        let s = prop2_suite(&SuiteOptions::new(1000, 12)).unwrap();
        assert!(s.passed(), "{:?}", s.counterexamples.first());
        assert!(s.checked > 800, "{s:?}");
    }

    #[test]
    fn eigen_map_examples() {
        let mut rng = seeded(4);
        let h = gaussian_matrix(&mut rng, 6, 4);
        assert!(check_eigen_map(&h, 0.0).unwrap().held);
        assert_eq!(dim_update(&h, 0.0).unwrap(), h);

        let r = check_eigen_map(&Matrix::diag(&[1.0, 0.5]), 0.1).unwrap();
        assert!((r.predicted[0] - 1.0).abs() < 1e-15);
        assert!((r.predicted[1] - 0.5375 * 0.5375).abs() < 1e-15);
        assert!(r.held);

        let r = check_eigen_map(&h, 0.3).unwrap();
        assert!(r.max_abs_diff <= 1e-8 * (1.0 + r.observed[0]), "{r:?}");
    }

    #[test]
    fn eigen_map_s_grid() {
        for index in 0..200 {
            let (_, h, _) = prop2_instance(77, index).unwrap();
            for s in [0.0, 0.1, 0.5, 1.0] {
                let r = check_eigen_map(&h, s).unwrap();
                assert!(r.held, "index {index}, s {s}: {r:?}");
            }
        }
    }

    #[test]
    fn lemma3_examples() {
        let a = Spectrum::new(vec![4.0, 1.0]).unwrap();
        let r = check_lemma3(&a, &Spectrum::new(vec![12.0, 3.0]).unwrap()).unwrap();
        assert!(r.ratio_increasing && (r.erank_a - r.erank_b).abs() < 1e-12);
        let r = check_lemma3(&a, &Spectrum::new(vec![4.0, 2.0]).unwrap()).unwrap();
        assert!(r.ratio_increasing && r.erank_b > r.erank_a && r.implication_held);
        let direct = |s: [f64; 2]| {
            let t = s[0] + s[1];
            (-(s[0] / t) * (s[0] / t).ln() - (s[1] / t) * (s[1] / t).ln()).exp()
        };
        assert!((r.erank_a - direct([2.0, 1.0])).abs() < 1e-12);
        assert!((r.erank_b - direct([2.0, 2f64.sqrt()])).abs() < 1e-12);
        assert!(check_lemma3(&a, &Spectrum::new(vec![1.0]).unwrap()).is_err());
        let s = lemma3_suite(&SuiteOptions::new(1000, 13)).unwrap();
        assert!(s.passed() && s.checked == 1000, "{s:?}");
    }

    #[test]
    fn diag_dominance_examples() {
        let r = check_diag_dominance(&Matrix::filled(4, 4, 0.25)).unwrap();
        assert!(r.condition_held && r.sigma_min.abs() < 1e-12 && r.claim_held);
        let r = check_diag_dominance(&Matrix::identity(4)).unwrap();
        assert!(r.condition_held && r.sigma_min.abs() < 1e-15);
        let s = diagdom_suite(&SuiteOptions::new(500, 14)).unwrap();
        assert!(s.passed(), "{:?}", s.counterexamples.first());
        assert!(s.checked > 100, "{s:?}");
    }

    #[test]
    fn lemma1_examples() {
        let mut rng = seeded(5);
        let x0 = gaussian_matrix(&mut rng, 5, 3);
        let r = check_lemma1(&x0, &Matrix::identity(5), 1.0).unwrap();
        assert!(r.condition_held && (r.lhs - r.rhs).abs() < 1e-12 && r.claim_held);
        let r = check_lemma1(&x0, &Matrix::identity(5).scale(2.0), 0.25).unwrap();
        assert!(r.condition_held && (r.lhs - 4.0 * variance(&x0)).abs() < 1e-9 && r.claim_held);
        let s = lemma1_suite(&SuiteOptions::new(1000, 15)).unwrap();
        assert!(s.passed(), "{:?}", s.counterexamples.first());
        assert!(s.checked > 50, "{s:?}");
    }

    #[test]
    fn gradient_examples() {
        let r = gradient_check(&Matrix::zeros(3, 2), 1.0).unwrap();
        assert!(r.max_rel_error <= 1e-8 && r.passed);
        assert_eq!(uniformity_gradient(&Matrix::zeros(3, 2), 1.0).unwrap(), Matrix::zeros(3, 2));
        let mut rng = seeded(6);
        assert!(gradient_check(&gaussian_matrix(&mut rng, 4, 3), 1.0).unwrap().passed);
        assert!(gradient_check(&gaussian_matrix(&mut rng, 5, 2), 0.5).unwrap().passed);
    }

    #[test]
    fn injected_counterexample_is_reported() {
        let mut opts = SuiteOptions::new(20, 1);
        opts.inject_counterexample = true;
        for s in [prop1_suite(&opts), prop2_suite(&opts), eigenmap_suite(&opts), lemma3_suite(&opts)] {
            let s = s.unwrap();
            assert_eq!(s.counterexamples.len(), 1, "{}", s.name);
            assert!(s.counterexamples[0].instance.get("report").is_some());
        }
    }

    #[test]
    fn instances_replay_from_their_seed() {
        let (seed_a, h_a, _) = prop1_instance(99, 7);
        let (seed_b, h_b, _) = prop1_instance(99, 7);
        assert_eq!((seed_a, &h_a), (seed_b, &h_b));
        assert_eq!(derive_seed(99, 7), seed_a);
    }
}
