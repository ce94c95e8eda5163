//! Monte-Carlo Bergman-space computations.
//!
//! Inner products `<f, g>_D = int_D f conj(g)` are estimated from rejection
//! samples. Within one weighted level the Gram matrix of monomials determines
//! the reproducing polynomials `p_alpha` with `<h, p_alpha> = d^alpha h(0)`.
//! Their lowest total degree `d(alpha)` feeds the quasi-resonance orders.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domains::{DomainError, DomainSpec, SampleSet, SamplingConfig};
use crate::poly::SparsePoly;
use crate::weights::{enumerate_level, MultiIndex, ResonanceReport, Weight, WeightError};

/// Gram blocks with a larger condition number are refused.
pub const DEFAULT_MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BergmanError {
    #[error("no samples to integrate over")]
    EmptyBatch,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("level {level} contains no multi-index")]
    EmptyLevel { level: u64 },
    #[error("Gram block at level {level} has condition number {condition:.3e}")]
    IllConditioned { level: u64, condition: f64 },
    #[error("Gram block at level {level} is singular")]
    SingularGram { level: u64 },
    #[error("representer basis at level {level} is singular")]
    SingularBasis { level: u64 },
    #[error("multi-index {alpha} is not in the block at level {level}")]
    NotInBlock { alpha: MultiIndex, level: u64 },
    #[error("expansion residual {residual:.3e} exceeds tolerance")]
    ExpansionMismatch { residual: f64 },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// A Monte-Carlo estimate of one inner product or integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerProductEstimate {
    pub value: Complex64,
    /// Standard error of the complex estimate, `sqrt(Var Re + Var Im)`.
    pub std_error: f64,
    /// Accepted points used.
    pub sample_count: usize,
}

impl InnerProductEstimate {
    /// `|value - target| / std_error`, or infinity when the error is zero and
    /// the value differs.
    pub fn sigmas_from(&self, target: Complex64) -> f64 {
        let d = (self.value - target).norm();
        if d == 0.0 {
            0.0
        } else if self.std_error == 0.0 {
            f64::INFINITY
        } else {
            d / self.std_error
        }
    }

    pub fn within(&self, target: Complex64, sigmas: f64) -> bool {
        (self.value - target).norm() <= sigmas * self.std_error
    }
}

/// Integrates `k` functions at once over the domain the samples came from.
///
/// Each batch is reduced on its own thread; batch partial sums are then
/// combined in batch-index order, so the result does not depend on the
/// thread count. The standard error is the pooled per-draw variance of
/// `V * h * 1_D` over all box draws.
pub fn integrate_many<F>(samples: &SampleSet, k: usize, f: F) -> Result<Vec<InnerProductEstimate>, BergmanError>
where
    F: Fn(&[Complex64], &mut [Complex64]) + Sync,
{
    if samples.accepted() == 0 {
        return Err(BergmanError::EmptyBatch);
    }
    let partials: Vec<(Vec<Complex64>, Vec<f64>)> = samples
        .batches
        .par_iter()
        .map(|batch| {
            let mut sum = vec![Complex64::new(0.0, 0.0); k];
            let mut sq = vec![0.0; k];
            let mut out = vec![Complex64::new(0.0, 0.0); k];
            for z in batch.iter() {
                f(z, &mut out);
                for j in 0..k {
                    sum[j] += out[j];
                    sq[j] += out[j].norm_sqr();
                }
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![Complex64::new(0.0, 0.0); k];
    let mut sq = vec![0.0; k];
    for (s, q) in &partials {
        for j in 0..k {
            sum[j] += s[j];
            sq[j] += q[j];
        }
    }
    let tries = samples.tries() as f64;
    let volume = samples.box_volume();
    let count = samples.accepted();
    Ok(sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| {
            let mean = s / tries;
            let var = (q / tries - mean.norm_sqr()).max(0.0);
            InnerProductEstimate {
                value: mean * volume,
                std_error: volume * (var / tries).sqrt(),
                sample_count: count,
            }
        })
        .collect())
}

fn check_dim(samples: &SampleSet, dim: usize) -> Result<(), BergmanError> {
    if samples.dim() != dim {
        return Err(BergmanError::DimensionMismatch {
            expected: samples.dim(),
            found: dim,
        });
    }
    Ok(())
}

/// `<f, g>_D`, conjugate-linear in `g`.
pub fn inner_product(
    samples: &SampleSet,
    f: &SparsePoly,
    g: &SparsePoly,
) -> Result<InnerProductEstimate, BergmanError> {
    check_dim(samples, f.dim())?;
    check_dim(samples, g.dim())?;
    let est = integrate_many(samples, 1, |z, out| {
        out[0] = f.eval_unchecked(z) * g.eval_unchecked(z).conj();
    })?;
    Ok(est[0])
}

/// `<f, g_j>_D` for every `g_j`, sharing the evaluation of `f`.
pub fn inner_products(
    samples: &SampleSet,
    f: &SparsePoly,
    gs: &[SparsePoly],
) -> Result<Vec<InnerProductEstimate>, BergmanError> {
    check_dim(samples, f.dim())?;
    for g in gs {
        check_dim(samples, g.dim())?;
    }
    integrate_many(samples, gs.len(), |z, out| {
        let fz = f.eval_unchecked(z);
        for (o, g) in out.iter_mut().zip(gs) {
            *o = fz * g.eval_unchecked(z).conj();
        }
    })
}

/// Evaluates a fixed list of monomials through per-variable power tables.
struct MonomialTable<'a> {
    monomials: &'a [MultiIndex],
    max_exp: Vec<usize>,
}

impl<'a> MonomialTable<'a> {
    fn new(dim: usize, monomials: &'a [MultiIndex]) -> Self {
        let mut max_exp = vec![0usize; dim];
        for a in monomials {
            for (m, &e) in max_exp.iter_mut().zip(a.exponents()) {
                *m = (*m).max(e as usize);
            }
        }
        MonomialTable { monomials, max_exp }
    }

    fn eval(&self, z: &[Complex64], powers: &mut Vec<Vec<Complex64>>, out: &mut [Complex64]) {
        powers.resize(z.len(), Vec::new());
        for ((table, zj), &e) in powers.iter_mut().zip(z).zip(&self.max_exp) {
            table.clear();
            table.push(Complex64::new(1.0, 0.0));
            for k in 1..=e {
                let next = table[k - 1] * zj;
                table.push(next);
            }
        }
        for (o, a) in out.iter_mut().zip(self.monomials) {
            let mut v = Complex64::new(1.0, 0.0);
            for (j, &e) in a.exponents().iter().enumerate() {
                if e > 0 {
                    v *= powers[j][e as usize];
                }
            }
            *o = v;
        }
    }
}

/// Gram matrix `G[b][c] = <z^b, z^c>_D` and its entrywise standard errors.
pub fn monomial_gram(
    samples: &SampleSet,
    monomials: &[MultiIndex],
) -> Result<(DMatrix<Complex64>, DMatrix<f64>), BergmanError> {
    let s = monomials.len();
    for a in monomials {
        check_dim(samples, a.dim())?;
    }
    let table = MonomialTable::new(samples.dim(), monomials);
    let pairs: Vec<(usize, usize)> = (0..s).flat_map(|i| (i..s).map(move |j| (i, j))).collect();
    let est = integrate_many(samples, pairs.len(), |z, out| {
        thread_local! {
            static SCRATCH: std::cell::RefCell<(Vec<Vec<Complex64>>, Vec<Complex64>)> =
                const { std::cell::RefCell::new((Vec::new(), Vec::new())) };
        }
        SCRATCH.with(|cell| {
            let (powers, values) = &mut *cell.borrow_mut();
            values.resize(s, Complex64::new(0.0, 0.0));
            table.eval(z, powers, values);
            for (o, &(i, j)) in out.iter_mut().zip(&pairs) {
                *o = values[i] * values[j].conj();
            }
        });
    })?;
    let mut gram = DMatrix::zeros(s, s);
    let mut errors = DMatrix::zeros(s, s);
    for (e, &(i, j)) in est.iter().zip(&pairs) {
        gram[(i, j)] = e.value;
        gram[(j, i)] = e.value.conj();
        errors[(i, j)] = e.std_error;
        errors[(j, i)] = e.std_error;
    }
    Ok((gram, errors))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramOptions {
    pub max_condition: f64,
}

impl Default for GramOptions {
    fn default() -> Self {
        GramOptions {
            max_condition: DEFAULT_MAX_CONDITION,
        }
    }
}

/// Monte-Carlo Gram matrix of the monomials in one weighted level.
///
/// Different levels are orthogonal, so the blocks are independent.
#[derive(Debug, Clone)]
pub struct GramBlock {
    pub level: u64,
    pub weight: Weight,
    pub monomials: Vec<MultiIndex>,
    /// Exactly Hermitian.
    pub gram: DMatrix<Complex64>,
    pub std_errors: DMatrix<f64>,
    /// Ratio of extreme eigenvalue moduli; infinite when not positive definite.
    pub condition_number: f64,
    pub sample_count: usize,
}

impl GramBlock {
    pub fn size(&self) -> usize {
        self.monomials.len()
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.monomials.iter().position(|a| a == alpha)
    }

    pub fn entry(&self, i: usize, j: usize) -> InnerProductEstimate {
        InnerProductEstimate {
            value: self.gram[(i, j)],
            std_error: self.std_errors[(i, j)],
            sample_count: self.sample_count,
        }
    }
}

fn condition_number(gram: &DMatrix<Complex64>) -> f64 {
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Builds the Gram block of level `k`. Refuses blocks whose condition
/// number exceeds `options.max_condition`.
pub fn gram_block(
    samples: &SampleSet,
    m: &Weight,
    k: u64,
    options: &GramOptions,
) -> Result<GramBlock, BergmanError> {
    check_dim(samples, m.dim())?;
    let monomials = enumerate_level(m, k)?;
    if monomials.is_empty() {
        return Err(BergmanError::EmptyLevel { level: k });
    }
    let (raw, raw_err) = monomial_gram(samples, &monomials)?;
    let gram = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
    let std_errors = (&raw_err + raw_err.transpose()) * 0.5;
    let condition = condition_number(&gram);
    if condition > options.max_condition {
        return Err(BergmanError::IllConditioned {
            level: k,
            condition,
        });
    }
    Ok(GramBlock {
        level: k,
        weight: m.clone(),
        monomials,
        gram,
        std_errors,
        condition_number: condition,
        sample_count: samples.accepted(),
    })
}

/// Three-way classification of representer coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroPolicy {
    /// Floor relative to the largest coefficient modulus in the representer.
    pub rel_floor: f64,
    /// Certified zero below this many propagated standard errors.
    pub zero_sigma: f64,
    /// Certified nonzero above this many propagated standard errors.
    pub nonzero_sigma: f64,
}

impl Default for ZeroPolicy {
    fn default() -> Self {
        ZeroPolicy {
            rel_floor: 1e-6,
            zero_sigma: 3.0,
            nonzero_sigma: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermClass {
    Nonzero,
    Zero,
    Borderline,
}

impl ZeroPolicy {
    pub fn classify(&self, modulus: f64, error: f64, max_modulus: f64) -> TermClass {
        let floor = self.rel_floor * max_modulus;
        if modulus > floor.max(self.nonzero_sigma * error) {
            TermClass::Nonzero
        } else if modulus < floor.max(self.zero_sigma * error) {
            TermClass::Zero
        } else {
            TermClass::Borderline
        }
    }
}

/// `d(alpha)` with its statistical status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeCertificate {
    /// Minimum `|beta|` over certified-nonzero terms.
    pub d_alpha: Option<u32>,
    /// Minimum `|beta|` over terms that are not certified zero.
    pub d_lower: Option<u32>,
    /// Terms neither certified zero nor nonzero.
    pub borderline: Vec<MultiIndex>,
}

impl DegreeCertificate {
    /// `d(alpha)` is decided when no borderline term could lower it.
    pub fn is_certain(&self) -> bool {
        self.d_alpha.is_some() && self.d_alpha == self.d_lower
    }

    /// `Some(true)` if certainly `d(alpha) <= k`, `Some(false)` if certainly not.
    pub fn at_most(&self, k: u32) -> Option<bool> {
        match (self.d_alpha, self.d_lower) {
            (Some(d), _) if d <= k => Some(true),
            (_, Some(lo)) if lo <= k => None,
            _ => Some(false),
        }
    }
}

/// The reproducing polynomial `p_alpha` of one block.
#[derive(Debug, Clone, Serialize)]
pub struct Representer {
    pub alpha: MultiIndex,
    pub level: u64,
    pub poly: SparsePoly,
    /// Propagated standard error of each coefficient, in block order.
    pub coefficient_errors: Vec<(MultiIndex, f64)>,
    pub degree: DegreeCertificate,
}

impl Representer {
    pub fn d_alpha(&self) -> Option<u32> {
        self.degree.d_alpha
    }
}

/// Solves `<z^beta, p_alpha> = alpha! delta` inside the block for every
/// `alpha`, and propagates the Gram standard errors to first order.
pub fn representers(block: &GramBlock, policy: &ZeroPolicy) -> Result<Vec<Representer>, BergmanError> {
    let s = block.size();
    let dim = block.weight.dim();
    let lu = block.gram.clone().lu();
    let inverse = lu
        .try_inverse()
        .ok_or(BergmanError::SingularGram { level: block.level })?;
    if inverse.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(BergmanError::SingularGram { level: block.level });
    }
    let inv_sq = inverse.map(|v| v.norm_sqr());
    let err_sq = block.std_errors.map(|e| e * e);
    let mut out = Vec::with_capacity(s);
    for (a, alpha) in block.monomials.iter().enumerate() {
        // G c = alpha! e_alpha with c = conj(b)
        let c: Vec<Complex64> = (0..s).map(|i| inverse[(i, a)] * alpha.factorial()).collect();
        let c_sq: Vec<f64> = c.iter().map(|v| v.norm_sqr()).collect();
        // Var(dc_i) = sum_{j,k} |Ginv_ij|^2 se_jk^2 |c_k|^2
        let inner: Vec<f64> = (0..s)
            .map(|j| (0..s).map(|k| err_sq[(j, k)] * c_sq[k]).sum())
            .collect();
        let errors: Vec<f64> = (0..s)
            .map(|i| (0..s).map(|j| inv_sq[(i, j)] * inner[j]).sum::<f64>().sqrt())
            .collect();
        let poly = SparsePoly::from_terms(
            dim,
            block.monomials.iter().cloned().zip(c.iter().map(|v| v.conj())),
        )
        .expect("block monomials share the weight dimension");
        let mut rep = Representer {
            alpha: alpha.clone(),
            level: block.level,
            poly,
            coefficient_errors: block.monomials.iter().cloned().zip(errors).collect(),
            degree: DegreeCertificate {
                d_alpha: None,
                d_lower: None,
                borderline: Vec::new(),
            },
        };
        rep.degree = d_of_alpha(&rep, policy);
        out.push(rep);
    }
    Ok(out)
}

/// Certified `d(alpha)`: the lowest total degree among coefficients that
/// clear both the relative floor and the noise threshold.
pub fn d_of_alpha(rep: &Representer, policy: &ZeroPolicy) -> DegreeCertificate {
    let max_modulus = rep.poly.max_coefficient_modulus();
    let mut d_alpha: Option<u32> = None;
    let mut d_lower: Option<u32> = None;
    let mut borderline = Vec::new();
    for (beta, err) in &rep.coefficient_errors {
        let modulus = rep.poly.coefficient(beta).norm();
        let deg = beta.total_degree();
        match policy.classify(modulus, *err, max_modulus) {
            TermClass::Nonzero => {
                d_alpha = Some(d_alpha.map_or(deg, |d| d.min(deg)));
                d_lower = Some(d_lower.map_or(deg, |d| d.min(deg)));
            }
            TermClass::Borderline => {
                d_lower = Some(d_lower.map_or(deg, |d| d.min(deg)));
                borderline.push(beta.clone());
            }
            TermClass::Zero => {}
        }
    }
    DegreeCertificate {
        d_alpha,
        d_lower,
        borderline,
    }
}

/// Residual of the reproducing identity on an independent sample set.
#[derive(Debug, Clone, Serialize)]
pub struct ReproducingResidual {
    pub alpha: MultiIndex,
    pub beta: MultiIndex,
    pub value: Complex64,
    pub target: f64,
    /// Fresh Monte-Carlo error combined with the error carried by `p_alpha`.
    pub sigma: f64,
}

impl ReproducingResidual {
    pub fn sigmas(&self) -> f64 {
        let d = (self.value - self.target).norm();
        if d == 0.0 {
            0.0
        } else {
            d / self.sigma
        }
    }
}

/// Checks `<z^beta, p_alpha> = alpha! delta_{alpha beta}` for every `beta` in
/// the block using `fresh` samples. `original` must be the sample set the
/// representer was solved from; its noise enters through `p_alpha`.
pub fn reproducing_residuals(
    original: &SampleSet,
    fresh: &SampleSet,
    block: &GramBlock,
    rep: &Representer,
) -> Result<Vec<ReproducingResidual>, BergmanError> {
    let monos: Vec<SparsePoly> = block
        .monomials
        .iter()
        .map(|b| SparsePoly::monomial(b.clone(), Complex64::new(1.0, 0.0)))
        .collect();
    let conj_rep = rep.poly.conj_coefficients();
    let f = |samples: &SampleSet| {
        integrate_many(samples, monos.len(), |z, out| {
            // conj(p(z)) = conj_rep(conj z)
            let zc: Vec<Complex64> = z.iter().map(|w| w.conj()).collect();
            let p_conj = conj_rep.eval_unchecked(&zc);
            for (o, m) in out.iter_mut().zip(&monos) {
                *o = m.eval_unchecked(z) * p_conj;
            }
        })
    };
    let orig = f(original)?;
    let new = f(fresh)?;
    Ok(block
        .monomials
        .iter()
        .zip(orig.iter().zip(&new))
        .map(|(beta, (o, n))| ReproducingResidual {
            alpha: rep.alpha.clone(),
            beta: beta.clone(),
            value: n.value,
            target: if *beta == rep.alpha { rep.alpha.factorial() } else { 0.0 },
            sigma: (o.std_error.powi(2) + n.std_error.powi(2)).sqrt(),
        })
        .collect())
}

/// `z^alpha = sum_beta c_beta p_beta` within one block.
#[derive(Debug, Clone, Serialize)]
pub struct MonomialExpansion {
    pub alpha: MultiIndex,
    pub coefficients: Vec<(MultiIndex, Complex64)>,
    /// Largest relative mismatch between both sides at the check points.
    pub max_relative_residual: f64,
}

/// Relative tolerance for the pointwise check of an expansion.
pub const EXPANSION_TOLERANCE: f64 = 1e-6;

pub fn expand_monomial(
    block: &GramBlock,
    reps: &[Representer],
    alpha: &MultiIndex,
) -> Result<MonomialExpansion, BergmanError> {
    let s = block.size();
    let a = block.index_of(alpha).ok_or_else(|| BergmanError::NotInBlock {
        alpha: alpha.clone(),
        level: block.level,
    })?;
    if reps.len() != s {
        return Err(BergmanError::SingularBasis { level: block.level });
    }
    // Column j holds the coefficients of p_{beta_j}.
    let basis = DMatrix::from_fn(s, s, |i, j| reps[j].poly.coefficient(&block.monomials[i]));
    let mut rhs = DMatrix::zeros(s, 1);
    rhs[(a, 0)] = Complex64::new(1.0, 0.0);
    let coeffs = basis
        .lu()
        .solve(&rhs)
        .ok_or(BergmanError::SingularBasis { level: block.level })?;
    if coeffs.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(BergmanError::SingularBasis { level: block.level });
    }
    let coefficients: Vec<(MultiIndex, Complex64)> = reps
        .iter()
        .zip(coeffs.iter())
        .map(|(r, c)| (r.alpha.clone(), *c))
        .collect();

    let dim = block.weight.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(block.level ^ 0xe4a1);
    let mono = SparsePoly::monomial(alpha.clone(), Complex64::new(1.0, 0.0));
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let z: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(0.0..std::f64::consts::TAU)))
            .collect();
        let lhs = mono.eval_unchecked(&z);
        let rhs: Complex64 = coefficients
            .iter()
            .zip(reps)
            .map(|((_, c), r)| c * r.poly.eval_unchecked(&z))
            .sum();
        let scale: f64 = coefficients
            .iter()
            .zip(reps)
            .map(|((_, c), r)| (c * r.poly.eval_unchecked(&z)).norm())
            .sum::<f64>()
            .max(lhs.norm());
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    if worst > EXPANSION_TOLERANCE {
        return Err(BergmanError::ExpansionMismatch { residual: worst });
    }
    Ok(MonomialExpansion {
        alpha: alpha.clone(),
        coefficients,
        max_relative_residual: worst,
    })
}

/// Settings for [`quasi_resonance_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct QuasiOptions {
    pub sampling: SamplingConfig,
    /// Draw an independent sample set for every block.
    pub fresh_per_block: bool,
    pub gram: GramOptions,
    pub policy: ZeroPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certification {
    Certified,
    Borderline,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaEntry {
    pub alpha: MultiIndex,
    pub level: u64,
    pub total_degree: u32,
    pub d_alpha: Option<u32>,
    pub d_lower: Option<u32>,
    pub status: Certification,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockSummary {
    pub level: u64,
    pub size: usize,
    pub condition_number: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplingSummary {
    pub points: usize,
    pub batches: usize,
    pub seed: u64,
    pub fresh_per_block: bool,
    pub box_draws: u64,
    pub box_volume: f64,
    pub acceptance_rate: f64,
    pub root_failures: u64,
}

/// `Q_{mu_i}`, `nu_i` and `nu`, with the evidence behind them.
#[derive(Debug, Clone, Serialize)]
pub struct QuasiResonanceReport {
    pub weights: Weight,
    pub resonance_orders: Vec<u32>,
    /// `nu_i` over certified members of `Q_{mu_i}`.
    pub orders: Vec<u32>,
    pub global_order: u32,
    /// Largest weighted degree searched for index `i`: `mu_i * m_n`. Any
    /// `alpha` beyond it has `d(alpha) >= m.alpha / m_n > mu_i`.
    pub enumeration_bounds: Vec<u64>,
    /// Certified members of `Q_{mu_i}` within the bound, keyed by 1-based `i`.
    pub q_sets: BTreeMap<usize, Vec<MultiIndex>>,
    /// Multi-indices whose membership in `Q_{mu_i}` is undecided.
    pub borderline: BTreeMap<usize, Vec<MultiIndex>>,
    pub entries: Vec<AlphaEntry>,
    pub blocks: Vec<BlockSummary>,
    /// False when some block was skipped; `nu_i` is then a lower bound.
    pub complete: bool,
    pub sampling: SamplingSummary,
    pub policy: ZeroPolicy,
    pub max_condition: f64,
    #[serde(skip)]
    pub representers: Vec<Representer>,
}

impl QuasiResonanceReport {
    /// `Q_1` is contained in the resonance set `E`. The constant index is
    /// left out: `d(0) = 0` and it lies in no `E_i`.
    pub fn q1_within_resonance_set(&self, resonance: &ResonanceReport) -> bool {
        self.entries
            .iter()
            .filter(|e| !e.alpha.is_zero() && e.d_alpha.is_some_and(|d| d <= 1))
            .all(|e| resonance.contains(&e.alpha))
    }

    /// `mu_i <= nu_i <= mu_i m_n / m_1` for every `i`.
    pub fn sandwich_holds(&self) -> bool {
        let (m1, mn) = (u64::from(self.weights.min()), u64::from(self.weights.max()));
        self.orders
            .iter()
            .zip(&self.resonance_orders)
            .all(|(&nu, &mu)| mu <= nu && u64::from(nu) * m1 <= u64::from(mu) * mn)
    }

    pub fn representer(&self, alpha: &MultiIndex) -> Option<&Representer> {
        self.representers.iter().find(|r| &r.alpha == alpha)
    }

    pub fn borderline_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.status == Certification::Borderline)
            .count()
    }
}

/// Samples the domain once (or per block) and assembles the report.
pub fn quasi_resonance_report(
    spec: &DomainSpec,
    resonance: &ResonanceReport,
    options: &QuasiOptions,
) -> Result<QuasiResonanceReport, BergmanError> {
    if options.fresh_per_block {
        build_report(spec, resonance, options, None)
    } else {
        let samples = SampleSet::generate(spec, options.sampling)?;
        build_report(spec, resonance, options, Some(&samples))
    }
}

/// Same as [`quasi_resonance_report`] on an existing shared sample set.
pub fn quasi_resonance_report_with(
    samples: &SampleSet,
    resonance: &ResonanceReport,
    options: &QuasiOptions,
) -> Result<QuasiResonanceReport, BergmanError> {
    build_report(&samples.spec, resonance, options, Some(samples))
}

fn build_report(
    spec: &DomainSpec,
    resonance: &ResonanceReport,
    options: &QuasiOptions,
    shared: Option<&SampleSet>,
) -> Result<QuasiResonanceReport, BergmanError> {
    let m = &resonance.weights;
    if spec.dim != m.dim() {
        return Err(BergmanError::DimensionMismatch {
            expected: spec.dim,
            found: m.dim(),
        });
    }
    let mn = u64::from(m.max());
    let bounds: Vec<u64> = resonance.orders.iter().map(|&mu| u64::from(mu) * mn).collect();
    let top = bounds.iter().copied().max().unwrap_or(0);

    let mut entries = Vec::new();
    let mut blocks = Vec::new();
    let mut representers_all = Vec::new();
    let (mut draws, mut accepted, mut root_failures) = (0u64, 0usize, 0u64);
    if let Some(s) = shared {
        draws = s.tries();
        accepted = s.accepted();
        root_failures = s.root_failures();
    }

    for k in 0..=top {
        let monomials = enumerate_level(m, k)?;
        if monomials.is_empty() {
            continue;
        }
        let owned;
        let samples = match shared {
            Some(s) => s,
            None => {
                owned = SampleSet::generate(spec, options.sampling.reseeded(k))?;
                draws += owned.tries();
                accepted += owned.accepted();
                root_failures += owned.root_failures();
                &owned
            }
        };
        let outcome = gram_block(samples, m, k, &options.gram)
            .and_then(|b| representers(&b, &options.policy).map(|r| (b, r)));
        match outcome {
            Ok((block, reps)) => {
                blocks.push(BlockSummary {
                    level: k,
                    size: block.size(),
                    condition_number: Some(block.condition_number),
                    error: None,
                });
                for rep in reps {
                    let status = if rep.degree.is_certain() {
                        Certification::Certified
                    } else {
                        Certification::Borderline
                    };
                    entries.push(AlphaEntry {
                        alpha: rep.alpha.clone(),
                        level: k,
                        total_degree: rep.alpha.total_degree(),
                        d_alpha: rep.degree.d_alpha,
                        d_lower: rep.degree.d_lower,
                        status,
                    });
                    representers_all.push(rep);
                }
            }
            Err(e @ (BergmanError::IllConditioned { .. } | BergmanError::SingularGram { .. })) => {
                log::warn!("skipping level {k}: {e}");
                blocks.push(BlockSummary {
                    level: k,
                    size: monomials.len(),
                    condition_number: match e {
                        BergmanError::IllConditioned { condition, .. } => Some(condition),
                        _ => None,
                    },
                    error: Some(e.to_string()),
                });
                for alpha in monomials {
                    entries.push(AlphaEntry {
                        total_degree: alpha.total_degree(),
                        alpha,
                        level: k,
                        d_alpha: None,
                        d_lower: None,
                        status: Certification::Skipped,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }

    let rep_by_alpha: BTreeMap<&MultiIndex, &Representer> =
        representers_all.iter().map(|r| (&r.alpha, r)).collect();
    let mut q_sets = BTreeMap::new();
    let mut borderline = BTreeMap::new();
    let mut orders = Vec::with_capacity(m.dim());
    for (i, (&mu, &bound)) in resonance.orders.iter().zip(&bounds).enumerate() {
        let mut members = Vec::new();
        let mut unsure = Vec::new();
        for e in entries.iter().filter(|e| e.level <= bound) {
            let Some(rep) = rep_by_alpha.get(&e.alpha) else {
                continue;
            };
            match rep.degree.at_most(mu) {
                Some(true) => members.push(e.alpha.clone()),
                Some(false) => {}
                None => unsure.push(e.alpha.clone()),
            }
        }
        let nu = members.iter().map(MultiIndex::total_degree).max().unwrap_or(0);
        orders.push(nu);
        q_sets.insert(i + 1, members);
        borderline.insert(i + 1, unsure);
    }
    let global_order = orders.iter().copied().max().unwrap_or(0);
    let complete = blocks.iter().all(|b| b.error.is_none());
    Ok(QuasiResonanceReport {
        weights: m.clone(),
        resonance_orders: resonance.orders.clone(),
        orders,
        global_order,
        enumeration_bounds: bounds,
        q_sets,
        borderline,
        entries,
        blocks,
        complete,
        sampling: SamplingSummary {
            points: options.sampling.points,
            batches: options.sampling.batches,
            seed: options.sampling.seed,
            fresh_per_block: options.fresh_per_block,
            box_draws: draws,
            box_volume: spec.box_volume(),
            acceptance_rate: if draws == 0 { 0.0 } else { accepted as f64 / draws as f64 },
            root_failures,
        },
        policy: options.policy,
        max_condition: options.gram.max_condition,
        representers: representers_all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::rotation_apply;
    use crate::weights::resonance_report;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mono(e: &[u32]) -> SparsePoly {
        SparsePoly::monomial(MultiIndex::new(e.to_vec()), c(1.0, 0.0))
    }

    fn samples(spec: &str, points: usize, seed: u64) -> SampleSet {
        SampleSet::generate(&spec.parse().unwrap(), SamplingConfig::new(points, seed)).unwrap()
    }

    /// pi^n alpha! / (n + |alpha|)!
    fn ball_moment(alpha: &MultiIndex) -> f64 {
        let n = alpha.dim() as u32;
        let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
        PI.powi(n as i32) * alpha.factorial() / fact(n + alpha.total_degree())
    }

    #[test]
    fn disc_inner_products() {
        let s = samples("ball:n=1", 200_000, 1);
        let one = SparsePoly::constant(1, c(1.0, 0.0));
        let z = mono(&[1]);
        assert!(inner_product(&s, &one, &one).unwrap().within(c(PI, 0.0), 3.0));
        assert!(inner_product(&s, &z, &z).unwrap().within(c(PI / 2.0, 0.0), 3.0));

        let s2 = samples("ball:n=2", 200_000, 1);
        assert!(inner_product(&s2, &mono(&[1, 0]), &mono(&[0, 1])).unwrap().within(c(0.0, 0.0), 3.0));
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_second_argument() {
        let s = samples("ball:n=2", 20_000, 4);
        let f = &mono(&[1, 0]) + &mono(&[0, 2]);
        let g = &mono(&[1, 1]) + &mono(&[1, 0]);
        let a = c(0.3, -1.2);
        let lhs = inner_product(&s, &f, &g.scale(a)).unwrap().value;
        let rhs = a.conj() * inner_product(&s, &f, &g).unwrap().value;
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn standard_error_halves_when_samples_quadruple() {
        let f = mono(&[1, 1]);
        let small = inner_product(&samples("ball:n=2", 50_000, 2), &f, &f).unwrap();
        let large = inner_product(&samples("ball:n=2", 200_000, 3), &f, &f).unwrap();
        let ratio = large.std_error / small.std_error;
        assert!((0.3..=0.7).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn ball_gram_block_is_diagonal_with_known_moments() {
        let s = samples("ball:n=2", 200_000, 5);
        let block = gram_block(&s, &Weight::circular(2), 1, &GramOptions::default()).unwrap();
        assert_eq!(block.size(), 2);
        for i in 0..2 {
            assert!(block.entry(i, i).within(c(PI * PI / 6.0, 0.0), 3.0));
        }
        assert!(block.entry(0, 1).within(c(0.0, 0.0), 3.0));
        assert_eq!(block.gram, block.gram.adjoint());
    }

    #[test]
    fn empty_level_is_an_error() {
        let s = samples("ball:n=2", 1000, 5);
        let m = Weight::new(&[2, 3]).unwrap();
        assert_eq!(
            gram_block(&s, &m, 1, &GramOptions::default()).unwrap_err(),
            BergmanError::EmptyLevel { level: 1 }
        );
    }

    #[test]
    fn ill_conditioned_blocks_are_refused() {
        let s = samples("ball:n=2", 1000, 5);
        let opts = GramOptions { max_condition: 1.0 };
        assert!(matches!(
            gram_block(&s, &Weight::circular(2), 2, &opts),
            Err(BergmanError::IllConditioned { level: 2, .. })
        ));
    }

    #[test]
    fn disc_representer() {
        let s = samples("ball:n=1", 400_000, 8);
        let block = gram_block(&s, &Weight::circular(1), 1, &GramOptions::default()).unwrap();
        let reps = representers(&block, &ZeroPolicy::default()).unwrap();
        let b = reps[0].poly.coefficient(&MultiIndex::new(vec![1]));
        let err = reps[0].coefficient_errors[0].1;
        assert!((b - c(2.0 / PI, 0.0)).norm() < 3.0 * err, "{b} vs {}", 2.0 / PI);
        // reproducing on the same samples is exact by construction
        let rp = inner_product(&s, &mono(&[1]), &reps[0].poly).unwrap();
        assert!((rp.value - c(1.0, 0.0)).norm() < 1e-10);
        assert_eq!(reps[0].d_alpha(), Some(1));
    }

    #[test]
    fn reinhardt_representers_are_single_terms() {
        let spec = DomainSpec::complex_ellipsoid(&[1.0, 2.0])
            .unwrap()
            .with_weight(Weight::new(&[1, 2]).unwrap())
            .unwrap();
        let s = SampleSet::generate(&spec, SamplingConfig::new(1 << 18, 9)).unwrap();
        for k in 0..=4 {
            let block = gram_block(&s, &spec.weight, k, &GramOptions::default()).unwrap();
            let reps = representers(&block, &ZeroPolicy::default()).unwrap();
            for (i, rep) in reps.iter().enumerate() {
                assert_eq!(rep.d_alpha(), Some(rep.alpha.total_degree()));
                assert!(rep.degree.is_certain(), "{}: {:?}", rep.alpha, rep.degree);
                let want = rep.alpha.factorial() / block.gram[(i, i)].re;
                let got = rep.poly.coefficient(&rep.alpha);
                assert!((got.re - want).abs() < 0.05 * want);

                let exp = expand_monomial(&block, &reps, &rep.alpha).unwrap();
                let (_, coef) = exp.coefficients.iter().find(|(b, _)| b == &rep.alpha).unwrap();
                assert!((coef.re - block.gram[(i, i)].re / rep.alpha.factorial()).abs() < 0.05 * coef.re);
            }
        }
    }

    #[test]
    fn expansion_matches_closed_form_and_round_trips() {
        let s = samples("symell:q=1,n=2", 1 << 15, 3);
        let m = Weight::ascending(2);
        for k in 2..=4 {
            let block = gram_block(&s, &m, k, &GramOptions::default()).unwrap();
            let reps = representers(&block, &ZeroPolicy::default()).unwrap();
            for (a, alpha) in block.monomials.iter().enumerate() {
                let exp = expand_monomial(&block, &reps, alpha).unwrap();
                // <z^alpha, p_beta> = d^beta z^alpha (0) gives c_beta = G[alpha][beta] / beta!
                for (j, (beta, coef)) in exp.coefficients.iter().enumerate() {
                    let want = block.gram[(a, j)] / beta.factorial();
                    assert!((coef - want).norm() <= 1e-8 * want.norm().max(1e-3));
                }
                let mut back = SparsePoly::zero(2);
                for ((_, coef), r) in exp.coefficients.iter().zip(&reps) {
                    back = &back + &r.poly.scale(*coef);
                }
                let target = SparsePoly::monomial(alpha.clone(), c(1.0, 0.0));
                assert!(back.max_abs_diff(&target) < 1e-6);
            }
        }
        let block = gram_block(&s, &m, 2, &GramOptions::default()).unwrap();
        let reps = representers(&block, &ZeroPolicy::default()).unwrap();
        assert!(matches!(
            expand_monomial(&block, &reps, &MultiIndex::new(vec![1, 0])),
            Err(BergmanError::NotInBlock { .. })
        ));
    }

    #[test]
    fn representers_are_rotation_equivariant() {
        let s = samples("symell:q=1,n=2", 1 << 14, 21);
        let m = Weight::ascending(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 1..=4 {
            let block = gram_block(&s, &m, k, &GramOptions::default()).unwrap();
            for rep in representers(&block, &ZeroPolicy::default()).unwrap() {
                assert!(rep.poly.is_m_homogeneous(&m, k));
                let theta: f64 = rng.random_range(0.0..6.0);
                let z = [c(rng.random(), rng.random()), c(rng.random(), rng.random())];
                let lhs = rep.poly.evaluate(&rotation_apply(&m, theta, &z).unwrap()).unwrap();
                let rhs = Complex64::from_polar(1.0, k as f64 * theta) * rep.poly.evaluate(&z).unwrap();
                assert!((lhs - rhs).norm() < 1e-10 * rhs.norm().max(1.0));
            }
        }
    }

    #[test]
    fn one_by_one_blocks() {
        let s = samples("symell:q=1,n=2", 1 << 14, 4);
        let m = Weight::ascending(2);
        let block = gram_block(&s, &m, 1, &GramOptions::default()).unwrap();
        assert_eq!(block.size(), 1);
        let reps = representers(&block, &ZeroPolicy::default()).unwrap();
        assert_eq!(reps[0].poly.num_terms(), 1);
        assert_eq!(reps[0].d_alpha(), Some(1));
        let exp = expand_monomial(&block, &reps, &block.monomials[0]).unwrap();
        let p = reps[0].poly.coefficient(&block.monomials[0]);
        assert!((exp.coefficients[0].1 * p - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn cross_level_orthogonality_of_representers() {
        let s = samples("symell:q=1,n=2", 1 << 16, 30);
        let m = Weight::ascending(2);
        let reps: Vec<Representer> = (1..=3)
            .flat_map(|k| {
                let block = gram_block(&s, &m, k, &GramOptions::default()).unwrap();
                representers(&block, &ZeroPolicy::default()).unwrap()
            })
            .collect();
        let fresh = samples("symell:q=1,n=2", 1 << 16, 31);
        for a in &reps {
            for b in &reps {
                if a.level != b.level {
                    let e = inner_product(&fresh, &a.poly, &b.poly).unwrap();
                    assert!(e.within(c(0.0, 0.0), 4.0), "{} vs {}: {:?}", a.alpha, b.alpha, e);
                }
            }
        }
    }

    #[test]
    fn reproducing_property_on_the_ball_with_fresh_samples() {
        let s = samples("ball:n=2", 1 << 17, 40);
        let fresh = samples("ball:n=2", 1 << 17, 41);
        let m = Weight::new(&[1, 2]).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..=3 {
            let block = gram_block(&s, &m, k, &GramOptions::default()).unwrap();
            for rep in representers(&block, &ZeroPolicy::default()).unwrap() {
                for r in reproducing_residuals(&s, &fresh, &block, &rep).unwrap() {
                    worst = worst.max(r.sigmas());
                }
            }
        }
        assert!(worst < 4.0, "worst deviation {worst} sigma");
    }

    #[test]
    fn random_block_polynomial_reproduces_derivatives() {
        let s = samples("ball:n=2", 1 << 17, 50);
        let fresh = samples("ball:n=2", 1 << 17, 51);
        let m = Weight::circular(2);
        let block = gram_block(&s, &m, 2, &GramOptions::default()).unwrap();
        let reps = representers(&block, &ZeroPolicy::default()).unwrap();
        let h = &(&mono(&[2, 0]).scale(c(0.5, 1.0)) + &mono(&[1, 1]).scale(c(-1.0, 0.2))) + &mono(&[0, 2]).scale(c(0.1, 0.0));
        for rep in &reps {
            let want = h.coefficient(&rep.alpha) * rep.alpha.factorial();
            let got = inner_product(&fresh, &h, &rep.poly).unwrap();
            assert!((got.value - want).norm() < 4.0 * got.std_error + 0.05 * want.norm(), "{}", rep.alpha);
        }
    }

    #[test]
    fn ball_moments() {
        let s = samples("ball:n=2", 1 << 17, 60);
        for k in 0..=3 {
            for alpha in enumerate_level(&Weight::circular(2), k).unwrap() {
                let p = mono(alpha.exponents());
                let e = inner_product(&s, &p, &p).unwrap();
                assert!(e.within(c(ball_moment(&alpha), 0.0), 3.5), "{alpha}");
            }
        }
    }

    #[test]
    fn zero_policy_classification() {
        let p = ZeroPolicy::default();
        assert_eq!(p.classify(1.0, 0.01, 1.0), TermClass::Nonzero);
        assert_eq!(p.classify(0.01, 0.01, 1.0), TermClass::Zero);
        assert_eq!(p.classify(0.04, 0.01, 1.0), TermClass::Borderline);
        assert_eq!(p.classify(1e-8, 0.0, 1.0), TermClass::Zero);
        assert_eq!(p.classify(1e-3, 0.0, 1.0), TermClass::Nonzero);
    }

    #[test]
    fn degree_certificate_logic() {
        let cert = DegreeCertificate {
            d_alpha: Some(2),
            d_lower: Some(1),
            borderline: vec![MultiIndex::new(vec![0, 1])],
        };
        assert!(!cert.is_certain());
        assert_eq!(cert.at_most(2), Some(true));
        assert_eq!(cert.at_most(1), None);
        assert_eq!(cert.at_most(0), Some(false));
    }

    #[test]
    fn quasi_report_for_the_ball() {
        let spec = DomainSpec::ball(2).unwrap();
        let res = resonance_report(&spec.weight).unwrap();
        let opts = QuasiOptions {
            sampling: SamplingConfig::new(1 << 15, 1),
            ..Default::default()
        };
        let rep = quasi_resonance_report(&spec, &res, &opts).unwrap();
        assert_eq!(rep.global_order, 1);
        assert_eq!(rep.orders, vec![1, 1]);
        assert!(rep.q1_within_resonance_set(&res));
        assert!(rep.sandwich_holds());
        assert!(rep.complete);
    }

    #[test]
    fn quasi_report_for_the_symmetrized_ellipsoid() {
        let spec = DomainSpec::symmetrized_ellipsoid(1.0, 2, 1.0).unwrap();
        let res = resonance_report(&spec.weight).unwrap();
        let opts = QuasiOptions {
            sampling: SamplingConfig::new(1 << 16, 2),
            ..Default::default()
        };
        let rep = quasi_resonance_report(&spec, &res, &opts).unwrap();
        assert!(rep.sandwich_holds(), "{:?}", rep.orders);
        assert!(rep.q1_within_resonance_set(&res));
        assert_eq!(rep.enumeration_bounds, vec![2, 4]);

        let fresh = QuasiOptions {
            fresh_per_block: true,
            ..opts
        };
        let rep2 = quasi_resonance_report(&spec, &res, &fresh).unwrap();
        assert!(rep2.sandwich_holds());
        assert!(rep2.sampling.box_draws > rep.sampling.box_draws);
    }

    #[test]
    fn gram_entries_converge_when_samples_double() {
        let m = Weight::new(&[1, 2]).unwrap();
        let mut total = 0;
        let mut ok = 0;
        for trial in 0..6u64 {
            let a = samples("ellipsoid:p=1,2", 1 << 14, 100 + trial);
            let b = samples("ellipsoid:p=1,2", 1 << 15, 200 + trial);
            for k in 0..=4 {
                let ga = gram_block(&a, &m, k, &GramOptions::default()).unwrap();
                let gb = gram_block(&b, &m, k, &GramOptions::default()).unwrap();
                for i in 0..ga.size() {
                    for j in 0..ga.size() {
                        total += 1;
                        let tol = 3.0 * ga.std_errors[(i, j)].max(gb.std_errors[(i, j)]);
                        if (ga.gram[(i, j)] - gb.gram[(i, j)]).norm() < tol {
                            ok += 1;
                        }
                    }
                }
            }
        }
        assert!(ok as f64 >= 0.99 * total as f64, "{ok}/{total}");
    }

    #[test]
    fn empty_sample_set_is_rejected() {
        let mut s = samples("ball:n=1", 10, 1);
        s.batches.clear();
        let one = SparsePoly::constant(1, c(1.0, 0.0));
        assert_eq!(inner_product(&s, &one, &one).unwrap_err(), BergmanError::EmptyBatch);
    }
}
