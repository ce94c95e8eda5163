//! Numerical checks for candidate automorphisms fixing the origin.
//!
//! Sample-based checks can only falsify. Every statistical decision is
//! three-valued: within `pass_sigma` standard errors passes, beyond
//! `fail_sigma` fails, and the band in between is inconclusive.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bergman::{integrate_many, BergmanError, Certification, QuasiResonanceReport};
use crate::domains::{DomainError, DomainSpec, SampleSet, SamplingConfig};
use crate::examples::triangular_inverse;
use crate::poly::{compose, PolyError, PolyMap, SparsePoly};
use crate::weights::{enumerate_level, MultiIndex, ResonanceReport, Weight, WeightError};

/// Tolerance on the coefficients of `f o f^{-1} - id`.
pub const INVERSE_TOLERANCE: f64 = 1e-8;
/// Relative spread allowed in the Jacobian determinant.
pub const JACOBIAN_TOLERANCE: f64 = 1e-8;
/// Fewest points at which the Jacobian determinant is evaluated.
pub const MIN_JACOBIAN_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("supplied inverse is not an inverse: max coefficient deviation {residual:.3e}")]
    NotInverse { residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Bergman(#[from] BergmanError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    NotApplicable,
    Inconclusive,
    Fail,
}

impl Status {
    /// The more severe of two outcomes; `NotApplicable` never masks a result.
    pub fn worst(self, other: Status) -> Status {
        match (self, other) {
            (Status::NotApplicable, s) | (s, Status::NotApplicable) => s,
            (a, b) => a.max(b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::NotApplicable => "not-applicable",
            Status::Inconclusive => "inconclusive",
            Status::Fail => "fail",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

/// Pass and fail thresholds in standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseBand {
    pub pass_sigma: f64,
    pub fail_sigma: f64,
}

impl Default for NoiseBand {
    fn default() -> Self {
        NoiseBand {
            pass_sigma: 3.0,
            fail_sigma: 5.0,
        }
    }
}

impl NoiseBand {
    pub fn classify(&self, deviation: f64, sigma: f64) -> Status {
        if deviation == 0.0 || deviation <= self.pass_sigma * sigma {
            Status::Pass
        } else if deviation <= self.fail_sigma * sigma {
            Status::Inconclusive
        } else {
            Status::Fail
        }
    }

    fn describe(&self) -> String {
        format!(
            "pass within {} sigma, inconclusive within {} sigma",
            self.pass_sigma, self.fail_sigma
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
}

impl Measurement {
    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Measurement {
            name: name.into(),
            value,
            error: None,
        }
    }

    pub fn noisy(name: impl Into<String>, value: f64, error: f64) -> Self {
        Measurement {
            name: name.into(),
            value,
            error: Some(error),
        }
    }
}

/// One row of [`degree_bound_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeRow {
    /// 1-based component index.
    pub component: usize,
    /// `-1` for the zero polynomial.
    pub degree: i64,
    pub resonance_order: u32,
    /// Certified `nu_i`, when a quasi-resonance report was supplied.
    pub quasi_order: Option<u32>,
    /// Largest value `nu_i` can take given the evidence.
    pub quasi_order_upper: u32,
    pub theorem: Status,
    /// `deg f_i <= mu_i`; informational only.
    pub conjectured: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub status: Status,
    pub measurements: Vec<Measurement>,
    pub tolerance: String,
    pub samples: usize,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree_table: Option<Vec<DegreeRow>>,
}

impl VerificationReport {
    fn new(check: &str, status: Status, tolerance: impl Into<String>) -> Self {
        VerificationReport {
            check: check.to_string(),
            status,
            measurements: Vec::new(),
            tolerance: tolerance.into(),
            samples: 0,
            notes: Vec::new(),
            degree_table: None,
        }
    }

    fn measure(mut self, m: Measurement) -> Self {
        self.measurements.push(m);
        self
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }

    pub fn measurement(&self, name: &str) -> Option<&Measurement> {
        self.measurements.iter().find(|m| m.name == name)
    }
}

fn check_map_dim(f: &PolyMap, dim: usize) -> Result<(), VerifyError> {
    if f.dim() != dim {
        return Err(VerifyError::DimensionMismatch {
            expected: dim,
            found: f.dim(),
        });
    }
    Ok(())
}

/// Exact symbolic check that no component has a constant term.
pub fn check_origin_fixed(f: &PolyMap) -> VerificationReport {
    let worst = f
        .components()
        .iter()
        .map(|p| p.constant_term().norm())
        .fold(0.0, f64::max);
    let status = if worst == 0.0 { Status::Pass } else { Status::Fail };
    VerificationReport::new("origin", status, "exact: every constant term is zero")
        .measure(Measurement::exact("max_constant_term", worst))
}

/// Fraction of interior source points whose image lies in the target.
///
/// Only points with source level below `1 - margin` are counted. A failing
/// point whose image level stays below `1 + margin`, or whose level could
/// not be computed, makes the result inconclusive rather than failed.
pub fn check_membership_preservation<'a, I>(
    f: &PolyMap,
    points: I,
    source: &DomainSpec,
    target: &DomainSpec,
    margin: f64,
) -> Result<VerificationReport, VerifyError>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    check_map_dim(f, source.dim)?;
    check_map_dim(f, target.dim)?;
    let mut counted = 0usize;
    let mut preserved = 0usize;
    let mut near = 0usize;
    let mut failures = 0usize;
    let mut max_image_level: f64 = 0.0;
    for z in points {
        match source.level(z) {
            Ok(l) if l < 1.0 - margin => {}
            Ok(_) => continue,
            Err(DomainError::RootSolveFailed(_)) => continue,
            Err(e) => return Err(e.into()),
        }
        counted += 1;
        let w = f.eval_unchecked(z);
        match target.level(&w) {
            Ok(l) => {
                max_image_level = max_image_level.max(l);
                if l < 1.0 {
                    preserved += 1;
                } else if l < 1.0 + margin {
                    near += 1;
                }
            }
            Err(DomainError::RootSolveFailed(_)) => failures += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if counted == 0 {
        return Ok(VerificationReport::new("membership", Status::Inconclusive, "")
            .note("no source points away from the boundary"));
    }
    let outside = counted - preserved - near - failures;
    let status = if preserved == counted {
        Status::Pass
    } else if outside == 0 {
        Status::Inconclusive
    } else {
        Status::Fail
    };
    let mut report = VerificationReport::new(
        "membership",
        status,
        format!("all images inside; source boundary band of {margin:e} excluded"),
    )
    .measure(Measurement::exact("fraction_preserved", preserved as f64 / counted as f64))
    .measure(Measurement::exact("max_image_level", max_image_level))
    .measure(Measurement::exact("points_outside", outside as f64))
    .measure(Measurement::exact("points_near_boundary", near as f64))
    .measure(Measurement::exact("root_failures", failures as f64));
    report.samples = counted;
    Ok(report)
}

/// Evaluates `det Df` at the given points; passes when the maximum
/// relative deviation from the mean is below `1e-8`.
pub fn check_jacobian_constant<'a, I>(f: &PolyMap, points: I) -> Result<VerificationReport, VerifyError>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let jac = f.jacobian();
    let dets = points
        .into_iter()
        .map(|z| jac.det_at(z))
        .collect::<Result<Vec<_>, _>>()?;
    if dets.len() < MIN_JACOBIAN_POINTS {
        return Err(VerifyError::TooFewPoints {
            needed: MIN_JACOBIAN_POINTS,
            got: dets.len(),
        });
    }
    let mean = dets.iter().sum::<Complex64>() / dets.len() as f64;
    let spread = dets.iter().map(|d| (d - mean).norm()).fold(0.0, f64::max);
    let relative = if mean.norm() == 0.0 {
        f64::INFINITY
    } else {
        spread / mean.norm()
    };
    let status = if relative < JACOBIAN_TOLERANCE {
        Status::Pass
    } else {
        Status::Fail
    };
    let mut report = VerificationReport::new(
        "jacobian",
        status,
        format!("max relative deviation from mean < {JACOBIAN_TOLERANCE:e}"),
    )
    .measure(Measurement::exact("mean_re", mean.re))
    .measure(Measurement::exact("mean_im", mean.im))
    .measure(Measurement::exact("max_relative_deviation", relative));
    report.samples = dets.len();
    if mean.norm() == 0.0 {
        report = report.note("determinant vanishes; not locally invertible");
    }
    Ok(report)
}

/// Largest coefficient deviation of `f o g` and `g o f` from the identity.
pub fn inverse_residual(f: &PolyMap, g: &PolyMap) -> Result<f64, VerifyError> {
    let id = PolyMap::identity(f.dim());
    let a = compose(f, g)?.max_abs_diff(&id);
    let b = compose(g, f)?.max_abs_diff(&id);
    Ok(a.max(b))
}

/// `<u (phi o f), psi>_source = <phi, U (psi o F)>_target` with `u`, `U`
/// the Jacobian determinants of `f` and `F = f^{-1}`.
///
/// When both sides use the same sample set the deviation is integrated
/// pointwise, so its standard error accounts for the correlation.
#[allow(clippy::too_many_arguments)]
pub fn check_adjoint_identity(
    f: &PolyMap,
    f_inv: &PolyMap,
    phi: &SparsePoly,
    psi: &SparsePoly,
    source: &SampleSet,
    target: &SampleSet,
    band: &NoiseBand,
) -> Result<VerificationReport, VerifyError> {
    check_map_dim(f, source.dim())?;
    check_map_dim(f_inv, target.dim())?;
    let residual = inverse_residual(f, f_inv)?;
    if residual > INVERSE_TOLERANCE {
        return Err(VerifyError::NotInverse { residual });
    }
    let jf = f.jacobian();
    let jg = f_inv.jacobian();
    let lhs_at = |z: &[Complex64]| {
        let u = jf.det_at(z).expect("dimension checked");
        u * phi.eval_unchecked(&f.eval_unchecked(z)) * psi.eval_unchecked(z).conj()
    };
    let rhs_at = |w: &[Complex64]| {
        let big_u = jg.det_at(w).expect("dimension checked");
        phi.eval_unchecked(w) * (big_u * psi.eval_unchecked(&f_inv.eval_unchecked(w))).conj()
    };
    let (lhs, rhs, deviation, sigma) = if std::ptr::eq(source, target) {
        let est = integrate_many(source, 3, |z, out| {
            out[0] = lhs_at(z);
            out[1] = rhs_at(z);
            out[2] = out[0] - out[1];
        })?;
        (est[0], est[1], est[2].value.norm(), est[2].std_error)
    } else {
        let l = integrate_many(source, 1, |z, out| out[0] = lhs_at(z))?[0];
        let r = integrate_many(target, 1, |w, out| out[0] = rhs_at(w))?[0];
        let sigma = (l.std_error.powi(2) + r.std_error.powi(2)).sqrt();
        (l, r, (l.value - r.value).norm(), sigma)
    };
    let mut report = VerificationReport::new("adjoint", band.classify(deviation, sigma), band.describe())
        .measure(Measurement::noisy("lhs_re", lhs.value.re, lhs.std_error))
        .measure(Measurement::noisy("lhs_im", lhs.value.im, lhs.std_error))
        .measure(Measurement::noisy("rhs_re", rhs.value.re, rhs.std_error))
        .measure(Measurement::noisy("rhs_im", rhs.value.im, rhs.std_error))
        .measure(Measurement::noisy("deviation", deviation, sigma))
        .measure(Measurement::exact("inverse_residual", residual));
    report.samples = lhs.sample_count.max(rhs.sample_count);
    Ok(report)
}

/// Which inner products [`check_theorem_orthogonality`] tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthogonalityOptions {
    /// Largest weighted degree `m.alpha` tested.
    pub max_weighted_degree: u64,
    pub band: NoiseBand,
}

impl Default for OrthogonalityOptions {
    fn default() -> Self {
        OrthogonalityOptions {
            max_weighted_degree: 6,
            band: NoiseBand::default(),
        }
    }
}

/// One tested inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityEntry {
    pub component: usize,
    pub alpha: MultiIndex,
    pub against_representer: bool,
    pub value: Complex64,
    pub std_error: f64,
    pub status: Status,
}

/// `<f_i, z^alpha> = 0` for `mu_i < |alpha|`, and `<f_i, p_alpha> = 0` for
/// certified `alpha` in `P_{mu_i}` when a quasi-resonance report is given.
pub fn check_theorem_orthogonality(
    f: &PolyMap,
    resonance: &ResonanceReport,
    quasi: Option<&QuasiResonanceReport>,
    samples: &SampleSet,
    options: &OrthogonalityOptions,
) -> Result<(VerificationReport, Vec<OrthogonalityEntry>), VerifyError> {
    let m = &resonance.weights;
    check_map_dim(f, samples.dim())?;
    check_map_dim(f, m.dim())?;
    let mut tests: Vec<(usize, MultiIndex, SparsePoly, bool)> = Vec::new();
    for k in 0..=options.max_weighted_degree {
        for alpha in enumerate_level(m, k)? {
            for (i, &mu) in resonance.orders.iter().enumerate() {
                if alpha.total_degree() > mu {
                    let mono = SparsePoly::monomial(alpha.clone(), Complex64::new(1.0, 0.0));
                    tests.push((i, alpha.clone(), mono, false));
                }
            }
        }
    }
    if let Some(q) = quasi {
        for e in q
            .entries
            .iter()
            .filter(|e| e.status == Certification::Certified && e.level <= options.max_weighted_degree)
        {
            let Some(rep) = q.representer(&e.alpha) else {
                continue;
            };
            for (i, &mu) in resonance.orders.iter().enumerate() {
                if rep.degree.at_most(mu) == Some(false) {
                    tests.push((i, e.alpha.clone(), rep.poly.clone(), true));
                }
            }
        }
    }
    if tests.is_empty() {
        return Ok((
            VerificationReport::new("orthogonality", Status::NotApplicable, options.band.describe())
                .note("no multi-index in range"),
            Vec::new(),
        ));
    }
    let est = integrate_many(samples, tests.len(), |z, out| {
        let fz = f.eval_unchecked(z);
        for (o, (i, _, g, _)) in out.iter_mut().zip(&tests) {
            *o = fz[*i] * g.eval_unchecked(z).conj();
        }
    })?;
    let entries: Vec<OrthogonalityEntry> = tests
        .into_iter()
        .zip(&est)
        .map(|((i, alpha, _, rep), e)| OrthogonalityEntry {
            component: i + 1,
            alpha,
            against_representer: rep,
            value: e.value,
            std_error: e.std_error,
            status: options.band.classify(e.value.norm(), e.std_error),
        })
        .collect();
    let status = entries.iter().fold(Status::Pass, |s, e| s.worst(e.status));
    let worst_sigma = entries
        .iter()
        .map(|e| if e.value.norm() == 0.0 { 0.0 } else { e.value.norm() / e.std_error })
        .fold(0.0, f64::max);
    let mut report = VerificationReport::new("orthogonality", status, options.band.describe())
        .measure(Measurement::exact("pairs_tested", entries.len() as f64))
        .measure(Measurement::exact(
            "pairs_passed",
            entries.iter().filter(|e| e.status == Status::Pass).count() as f64,
        ))
        .measure(Measurement::exact("max_sigma", worst_sigma))
        .measure(Measurement::exact("max_weighted_degree", options.max_weighted_degree as f64));
    report.samples = samples.accepted();
    for e in entries.iter().filter(|e| e.status != Status::Pass) {
        let kind = if e.against_representer { "p" } else { "z^" };
        report = report.note(format!(
            "<f_{}, {}{}> = {:.3e} (se {:.1e}): {}",
            e.component, kind, e.alpha, e.value, e.std_error, e.status
        ));
    }
    Ok((report, entries))
}

/// Per component: `deg f_i` against `nu_i` (required) and `mu_i`
/// (conjectured, never fails the run).
///
/// Without a quasi-resonance report `nu_i` is only known to lie in
/// `[mu_i, mu_i m_n / m_1]`; degrees inside that interval are inconclusive.
pub fn degree_bound_report(
    f: &PolyMap,
    resonance: &ResonanceReport,
    quasi: Option<&QuasiResonanceReport>,
) -> Result<VerificationReport, VerifyError> {
    let m = &resonance.weights;
    check_map_dim(f, m.dim())?;
    let (m1, mn) = (m.min(), m.max());
    let mut rows = Vec::with_capacity(m.dim());
    for (i, comp) in f.components().iter().enumerate() {
        let degree = comp.degree().as_i64();
        let mu = resonance.orders[i];
        let sandwich_upper = mu * mn / m1;
        let (quasi_order, upper) = match quasi {
            Some(q) => {
                let nu = q.orders[i];
                let undecided = q.borderline.get(&(i + 1)).into_iter().flatten();
                let mut upper = undecided.map(MultiIndex::total_degree).fold(nu, u32::max);
                if !q.complete {
                    upper = upper.max(sandwich_upper);
                }
                (Some(nu), upper)
            }
            None => (None, sandwich_upper),
        };
        let lower = quasi_order.unwrap_or(mu);
        let theorem = if degree <= i64::from(lower) {
            Status::Pass
        } else if degree <= i64::from(upper) {
            Status::Inconclusive
        } else {
            Status::Fail
        };
        rows.push(DegreeRow {
            component: i + 1,
            degree,
            resonance_order: mu,
            quasi_order,
            quasi_order_upper: upper,
            theorem,
            conjectured: degree <= i64::from(mu),
        });
    }
    let status = rows.iter().fold(Status::Pass, |s, r| s.worst(r.theorem));
    let mut report = VerificationReport::new(
        "degree",
        status,
        "deg f_i <= nu_i required; deg f_i <= mu_i conjectured",
    )
    .measure(Measurement::exact(
        "max_excess_over_nu",
        rows.iter()
            .map(|r| (r.degree - i64::from(r.quasi_order.unwrap_or(r.resonance_order))) as f64)
            .fold(f64::NEG_INFINITY, f64::max),
    ));
    if quasi.is_none() {
        report = report.note("no quasi-resonance report; nu_i bounded by mu_i <= nu_i <= mu_i m_n / m_1");
    }
    if rows.iter().any(|r| !r.conjectured) {
        report = report.note("degree exceeds the resonance order in some component (conjectured bound, informational)");
    }
    report.degree_table = Some(rows);
    Ok(report)
}

/// When `mu = 1`, passes iff `f` has no term of total degree `>= 2`.
pub fn linearity_check(f: &PolyMap, resonance: &ResonanceReport) -> Result<VerificationReport, VerifyError> {
    check_map_dim(f, resonance.weights.dim())?;
    if resonance.global_order != 1 {
        return Ok(VerificationReport::new("linearity", Status::NotApplicable, "exact")
            .note(format!("resonance order is {}, not 1", resonance.global_order)));
    }
    let nonlinear = f
        .components()
        .iter()
        .flat_map(|p| p.terms())
        .filter(|(a, c)| a.total_degree() >= 2 && c.norm() > 0.0)
        .count();
    let status = if nonlinear == 0 { Status::Pass } else { Status::Fail };
    Ok(VerificationReport::new("linearity", status, "exact: no term of total degree >= 2")
        .measure(Measurement::exact("nonlinear_terms", nonlinear as f64)))
}

/// Whether `f o rho_theta = rho_theta o f` for every `theta`: each term
/// `alpha` of `f_i` has `m.alpha = m_i`.
pub fn commutes_with_rotation(f: &PolyMap, m: &Weight) -> bool {
    f.components().iter().zip(m.entries()).all(|(p, &mi)| {
        p.terms()
            .all(|(a, _)| a.weighted_degree(m) == u64::from(mi))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Origin,
    Membership,
    Jacobian,
    Adjoint,
    Orthogonality,
    Degree,
    Linearity,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Origin,
        Check::Membership,
        Check::Jacobian,
        Check::Adjoint,
        Check::Orthogonality,
        Check::Degree,
        Check::Linearity,
    ];

    fn needs_samples(self) -> bool {
        matches!(
            self,
            Check::Membership | Check::Jacobian | Check::Adjoint | Check::Orthogonality
        )
    }
}

/// Settings for [`run_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub sampling: SamplingConfig,
    pub membership_margin: f64,
    pub jacobian_points: usize,
    /// Random `(phi, psi)` pairs for the adjoint identity.
    pub adjoint_pairs: usize,
    pub adjoint_degree: u32,
    pub orthogonality: OrthogonalityOptions,
    pub band: NoiseBand,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            sampling: SamplingConfig::default(),
            membership_margin: 1e-6,
            jacobian_points: 256,
            adjoint_pairs: 5,
            adjoint_degree: 3,
            orthogonality: OrthogonalityOptions::default(),
            band: NoiseBand::default(),
        }
    }
}

/// Everything a suite run needs.
#[derive(Debug, Clone)]
pub struct SuiteInput<'a> {
    pub map: &'a PolyMap,
    pub inverse: Option<&'a PolyMap>,
    pub source: &'a DomainSpec,
    /// Defaults to `source`.
    pub target: Option<&'a DomainSpec>,
    pub resonance: &'a ResonanceReport,
    pub quasi: Option<&'a QuasiResonanceReport>,
}

/// Random polynomial with `terms` terms of total degree `<= degree` and
/// coefficients in the unit square.
pub fn random_poly(dim: usize, degree: u32, terms: usize, rng: &mut impl Rng) -> SparsePoly {
    let mut p = SparsePoly::zero(dim);
    for _ in 0..terms {
        let total = rng.random_range(0..=degree);
        let mut exps = vec![0u32; dim];
        for _ in 0..total {
            exps[rng.random_range(0..dim)] += 1;
        }
        let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        p.add_term(MultiIndex::new(exps), c);
    }
    p
}

/// Interior points for the Jacobian check: accepted samples when sampling
/// is feasible, otherwise the domain's own interior point generator.
pub fn jacobian_points(
    spec: &DomainSpec,
    samples: Option<&SampleSet>,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<Complex64>>, VerifyError> {
    if let Some(s) = samples {
        if s.accepted() >= count {
            return Ok(s.points().take(count).map(<[Complex64]>::to_vec).collect());
        }
    }
    let flat = spec.interior_points(count, seed)?;
    Ok(flat.chunks_exact(spec.dim).map(<[Complex64]>::to_vec).collect())
}

/// Runs the requested checks in declaration order.
///
/// Sampling failures (for instance a box acceptance rate too low to sample)
/// turn sample-based checks into inconclusive reports, except the Jacobian
/// and membership checks which fall back to generated interior points.
pub fn run_suite(
    input: &SuiteInput<'_>,
    checks: &[Check],
    options: &SuiteOptions,
) -> Result<Vec<VerificationReport>, VerifyError> {
    let f = input.map;
    let source = input.source;
    let target = input.target.unwrap_or(source);
    check_map_dim(f, source.dim)?;
    check_map_dim(f, target.dim)?;
    let mut checks = checks.to_vec();
    checks.sort();
    checks.dedup();

    let needs = checks.iter().any(|c| c.needs_samples());
    let source_samples = if needs {
        Some(SampleSet::generate(source, options.sampling))
    } else {
        None
    };
    let source_samples = match source_samples {
        Some(Ok(s)) => Some(s),
        Some(Err(DomainError::LowAcceptance { rate })) => {
            log::warn!("source domain cannot be sampled (acceptance {rate:.2e})");
            None
        }
        Some(Err(e)) => return Err(e.into()),
        None => None,
    };
    let same_domain = source == target;
    let target_samples = if needs && !same_domain {
        match SampleSet::generate(target, options.sampling.reseeded(1)) {
            Ok(s) => Some(s),
            Err(DomainError::LowAcceptance { .. }) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let unsampled = |check: &str| {
        VerificationReport::new(check, Status::Inconclusive, "")
            .note("domain acceptance rate too low for rejection sampling")
    };

    let mut reports = Vec::new();
    for check in checks {
        let report = match check {
            Check::Origin => check_origin_fixed(f),
            Check::Membership => {
                let pts;
                let mut report = match &source_samples {
                    Some(s) => check_membership_preservation(f, s.points(), source, target, options.membership_margin)?,
                    None => {
                        pts = jacobian_points(source, None, options.jacobian_points, options.sampling.seed)?;
                        check_membership_preservation(
                            f,
                            pts.iter().map(Vec::as_slice),
                            source,
                            target,
                            options.membership_margin,
                        )?
                        .note("points are generated interior points, not uniform samples")
                    }
                };
                if !same_domain {
                    report = report.note(format!("source {source}, target {target}"));
                }
                report
            }
            Check::Jacobian => {
                let pts = jacobian_points(
                    source,
                    source_samples.as_ref(),
                    options.jacobian_points,
                    options.sampling.seed,
                )?;
                check_jacobian_constant(f, pts.iter().map(Vec::as_slice))?
            }
            Check::Adjoint => {
                let derived;
                let inverse = match input.inverse {
                    Some(g) => Some(g),
                    None => {
                        derived = triangular_inverse(f);
                        derived.as_ref()
                    }
                };
                let tgt_samples = if same_domain {
                    source_samples.as_ref()
                } else {
                    target_samples.as_ref()
                };
                match (inverse, source_samples.as_ref(), tgt_samples) {
                    (None, _, _) => VerificationReport::new("adjoint", Status::NotApplicable, "")
                        .note("no inverse supplied and the map is not triangular"),
                    (_, None, _) | (_, _, None) => unsampled("adjoint"),
                    (Some(g), Some(src), Some(tgt)) => {
                        adjoint_pairs(f, g, src, tgt, options, input.inverse.is_none())?
                    }
                }
            }
            Check::Orthogonality => match &source_samples {
                Some(s) => {
                    check_theorem_orthogonality(f, input.resonance, input.quasi, s, &options.orthogonality)?.0
                }
                None => unsampled("orthogonality"),
            },
            Check::Degree => degree_bound_report(f, input.resonance, input.quasi)?,
            Check::Linearity => linearity_check(f, input.resonance)?,
        };
        reports.push(report);
    }
    Ok(reports)
}

fn adjoint_pairs(
    f: &PolyMap,
    g: &PolyMap,
    source: &SampleSet,
    target: &SampleSet,
    options: &SuiteOptions,
    derived_inverse: bool,
) -> Result<VerificationReport, VerifyError> {
    let dim = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(options.sampling.seed ^ 0xad01);
    let mut status = Status::Pass;
    let mut per_pair = Vec::new();
    let mut worst: f64 = 0.0;
    for _ in 0..options.adjoint_pairs {
        let phi = random_poly(dim, options.adjoint_degree, 3, &mut rng);
        let psi = random_poly(dim, options.adjoint_degree, 3, &mut rng);
        let r = match check_adjoint_identity(f, g, &phi, &psi, source, target, &options.band) {
            Err(VerifyError::NotInverse { residual }) => {
                return Ok(VerificationReport::new("adjoint", Status::Fail, "")
                    .measure(Measurement::exact("inverse_residual", residual))
                    .note("supplied inverse does not invert the map"));
            }
            other => other?,
        };
        let dev = r.measurement("deviation").expect("always measured");
        let sigma = dev.error.unwrap_or(0.0);
        worst = worst.max(if dev.value == 0.0 { 0.0 } else { dev.value / sigma });
        status = status.worst(r.status);
        per_pair.push(r.status);
    }
    let mut report = VerificationReport::new("adjoint", status, options.band.describe())
        .measure(Measurement::exact("pairs_tested", per_pair.len() as f64))
        .measure(Measurement::exact(
            "pairs_passed",
            per_pair.iter().filter(|s| **s == Status::Pass).count() as f64,
        ))
        .measure(Measurement::exact("max_sigma", worst));
    report.samples = source.accepted();
    if derived_inverse {
        report = report.note("inverse constructed by triangular back-substitution");
    }
    Ok(report)
}

/// Aggregate status of a suite, ignoring `NotApplicable`.
pub fn overall_status(reports: &[VerificationReport]) -> Status {
    reports.iter().fold(Status::NotApplicable, |s, r| s.worst(r.status))
}

/// Summary counts keyed by status name.
pub fn status_counts(reports: &[VerificationReport]) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for r in reports {
        *out.entry(r.status.as_str()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bergman::{quasi_resonance_report, QuasiOptions};
    use crate::examples::{rotation_map, zapalowski_map};
    use crate::weights::resonance_report;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn poly(n: usize, terms: &[(&[u32], f64)]) -> SparsePoly {
        SparsePoly::from_terms(
            n,
            terms
                .iter()
                .map(|(a, v)| (MultiIndex::new(a.to_vec()), c(*v, 0.0))),
        )
        .unwrap()
    }

    fn map(n: usize, comps: &[&[(&[u32], f64)]]) -> PolyMap {
        PolyMap::new(comps.iter().map(|t| poly(n, t)).collect()).unwrap()
    }

    fn samples(spec: &DomainSpec, points: usize, seed: u64) -> SampleSet {
        SampleSet::generate(spec, SamplingConfig::new(points, seed)).unwrap()
    }

    #[test]
    fn status_ordering() {
        assert_eq!(Status::Pass.worst(Status::Inconclusive), Status::Inconclusive);
        assert_eq!(Status::Fail.worst(Status::Pass), Status::Fail);
        assert_eq!(Status::NotApplicable.worst(Status::Pass), Status::Pass);
        assert_eq!(Status::Inconclusive.worst(Status::NotApplicable), Status::Inconclusive);
        let band = NoiseBand::default();
        assert_eq!(band.classify(0.0, 0.0), Status::Pass);
        assert_eq!(band.classify(2.0, 1.0), Status::Pass);
        assert_eq!(band.classify(4.0, 1.0), Status::Inconclusive);
        assert_eq!(band.classify(6.0, 1.0), Status::Fail);
    }

    #[test]
    fn origin_examples() {
        let m = Weight::new(&[1, 2]).unwrap();
        assert_eq!(check_origin_fixed(&rotation_map(&m, 0.4)).status, Status::Pass);
        let shifted = map(2, &[&[(&[1, 0], 1.0), (&[0, 0], 0.1)], &[(&[0, 1], 1.0)]]);
        assert_eq!(check_origin_fixed(&shifted).status, Status::Fail);
        for n in 2..=6 {
            assert_eq!(check_origin_fixed(&zapalowski_map(n).unwrap()).status, Status::Pass);
        }
    }

    #[test]
    fn membership_examples() {
        let ball = DomainSpec::ball(2).unwrap();
        let s = samples(&ball, 10_000, 1);
        let m = Weight::circular(2);
        let r = check_membership_preservation(&rotation_map(&m, 1.1), s.points(), &ball, &ball, 1e-6).unwrap();
        assert_eq!(r.status, Status::Pass);
        let doubled = map(2, &[&[(&[1, 0], 2.0)], &[(&[0, 1], 1.0)]]);
        let r = check_membership_preservation(&doubled, s.points(), &ball, &ball, 1e-6).unwrap();
        assert_eq!(r.status, Status::Fail);
        assert!(r.measurement("fraction_preserved").unwrap().value < 0.9);
    }

    #[test]
    fn rotations_preserve_every_builtin_domain() {
        for text in ["ball:n=3", "polydisc:n=2", "ellipsoid:p=1,2", "symell:q=1,n=2", "symell:q=2,n=2,r=0.5"] {
            let spec: DomainSpec = text.parse().unwrap();
            let s = samples(&spec, 10_000, 2);
            let f = rotation_map(&spec.weight, 0.77);
            let r = check_membership_preservation(&f, s.points(), &spec, &spec, 1e-9).unwrap();
            assert_eq!(r.status, Status::Pass, "{text}");
        }
    }

    #[test]
    fn jacobian_examples() {
        let ball = DomainSpec::ball(2).unwrap();
        let pts = jacobian_points(&ball, None, 128, 3).unwrap();
        let m = Weight::new(&[1, 2]).unwrap();
        let r = check_jacobian_constant(&rotation_map(&m, 0.5), pts.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(r.status, Status::Pass);
        let want = Complex64::from_polar(1.0, 1.5);
        assert!((r.measurement("mean_re").unwrap().value - want.re).abs() < 1e-14);

        let unipotent = map(2, &[&[(&[1, 0], 1.0), (&[0, 2], 1.0)], &[(&[0, 1], 1.0)]]);
        let r = check_jacobian_constant(&unipotent, pts.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(r.status, Status::Pass);
        assert!((r.measurement("mean_re").unwrap().value - 1.0).abs() < 1e-14);

        let bent = map(2, &[&[(&[1, 0], 1.0), (&[2, 0], 1.0)], &[(&[0, 1], 1.0)]]);
        let r = check_jacobian_constant(&bent, pts.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(r.status, Status::Fail);

        assert!(matches!(
            check_jacobian_constant(&bent, pts.iter().take(10).map(Vec::as_slice)),
            Err(VerifyError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn zapalowski_jacobian_on_interior_points() {
        for n in 2..=6 {
            let spec = DomainSpec::symmetrized_ellipsoid(1.0, n, 1.0).unwrap();
            let pts = jacobian_points(&spec, None, 128, 5).unwrap();
            let r = check_jacobian_constant(&zapalowski_map(n).unwrap(), pts.iter().map(Vec::as_slice)).unwrap();
            assert_eq!(r.status, Status::Pass, "n={n}");
            assert!((r.measurement("mean_re").unwrap().value.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_identity_examples() {
        let spec = DomainSpec::symmetrized_ellipsoid(1.0, 2, 1.0).unwrap();
        let s = samples(&spec, 1 << 16, 7);
        let band = NoiseBand::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phi = random_poly(2, 3, 3, &mut rng);
        let psi = random_poly(2, 3, 3, &mut rng);

        let id = PolyMap::identity(2);
        let r = check_adjoint_identity(&id, &id, &phi, &psi, &s, &s, &band).unwrap();
        assert_eq!(r.status, Status::Pass);
        assert_eq!(r.measurement("deviation").unwrap().value, 0.0);

        let f = rotation_map(&spec.weight, 0.9);
        let g = rotation_map(&spec.weight, -0.9);
        let r = check_adjoint_identity(&f, &g, &phi, &psi, &s, &s, &band).unwrap();
        assert_ne!(r.status, Status::Fail);

        let wrong = rotation_map(&spec.weight, 0.3);
        assert!(matches!(
            check_adjoint_identity(&f, &wrong, &phi, &psi, &s, &s, &band),
            Err(VerifyError::NotInverse { .. })
        ));
    }

    #[test]
    fn adjoint_of_unitary_diagonal_preserves_volume() {
        let ball = DomainSpec::ball(2).unwrap();
        let s = samples(&ball, 1 << 15, 8);
        let m = Weight::circular(2);
        let one = SparsePoly::constant(2, c(1.0, 0.0));
        let f = rotation_map(&m, 0.25);
        let g = rotation_map(&m, -0.25);
        let r = check_adjoint_identity(&f, &g, &one, &one, &s, &s, &NoiseBand::default()).unwrap();
        assert_eq!(r.status, Status::Pass);
        let vol = std::f64::consts::PI.powi(2) / 2.0;
        let lhs = r.measurement("lhs_re").unwrap();
        // u = e^{0.5 i} scales the lhs by a unit phase
        let modulus = lhs.value.hypot(r.measurement("lhs_im").unwrap().value);
        assert!((modulus - vol).abs() < 3.0 * lhs.error.unwrap());
    }

    #[test]
    fn scaling_breaks_the_adjoint_identity() {
        let ball = DomainSpec::ball(2).unwrap();
        let s = samples(&ball, 1 << 16, 10);
        let f = map(2, &[&[(&[1, 0], 2.0)], &[(&[0, 1], 1.0)]]);
        let g = map(2, &[&[(&[1, 0], 0.5)], &[(&[0, 1], 1.0)]]);
        let phi = poly(2, &[(&[0, 0], 1.0)]);
        let psi = poly(2, &[(&[0, 0], 1.0)]);
        let r = check_adjoint_identity(&f, &g, &phi, &psi, &s, &s, &NoiseBand::default()).unwrap();
        assert_eq!(r.status, Status::Fail);
    }

    #[test]
    fn orthogonality_for_identity_and_rotation() {
        let ball = DomainSpec::ball(2).unwrap();
        let s = samples(&ball, 1 << 16, 11);
        let res = resonance_report(&ball.weight).unwrap();
        let (r, entries) =
            check_theorem_orthogonality(&PolyMap::identity(2), &res, None, &s, &OrthogonalityOptions::default())
                .unwrap();
        assert!(!entries.is_empty());
        assert_ne!(r.status, Status::Fail);

        let bent = map(2, &[&[(&[1, 0], 1.0), (&[2, 0], 1.0)], &[(&[0, 1], 1.0)]]);
        let (r, _) = check_theorem_orthogonality(&bent, &res, None, &s, &OrthogonalityOptions::default()).unwrap();
        assert_eq!(r.status, Status::Fail);
    }

    #[test]
    fn orthogonality_includes_representers_when_available() {
        let spec = DomainSpec::symmetrized_ellipsoid(1.0, 2, 1.0).unwrap();
        let res = resonance_report(&spec.weight).unwrap();
        let s = samples(&spec, 1 << 16, 12);
        let q = crate::bergman::quasi_resonance_report_with(
            &s,
            &res,
            &QuasiOptions {
                sampling: s.config,
                ..Default::default()
            },
        )
        .unwrap();
        let f = rotation_map(&spec.weight, 0.4);
        let (r, entries) =
            check_theorem_orthogonality(&f, &res, Some(&q), &s, &OrthogonalityOptions::default()).unwrap();
        assert!(entries.iter().any(|e| e.against_representer));
        assert_ne!(r.status, Status::Fail);
    }

    #[test]
    fn degree_report_examples() {
        for n in 2..=6 {
            let m = Weight::ascending(n);
            let res = resonance_report(&m).unwrap();
            let r = degree_bound_report(&zapalowski_map(n).unwrap(), &res, None).unwrap();
            assert_eq!(r.status, Status::Pass);
            for row in r.degree_table.unwrap() {
                assert_eq!(row.degree, row.component as i64);
                assert_eq!(row.resonance_order, row.component as u32);
                assert!(row.conjectured);
            }
        }
        let m = Weight::new(&[1, 3]).unwrap();
        let res = resonance_report(&m).unwrap();
        let lin = rotation_map(&m, 0.2);
        assert_eq!(degree_bound_report(&lin, &res, None).unwrap().status, Status::Pass);
        // mu_2 = 3, sandwich allows nu_2 up to 9
        let high = map(2, &[&[(&[1, 0], 1.0)], &[(&[0, 1], 1.0), (&[10, 0], 1.0)]]);
        assert_eq!(degree_bound_report(&high, &res, None).unwrap().status, Status::Fail);
        let mid = map(2, &[&[(&[1, 0], 1.0)], &[(&[0, 1], 1.0), (&[5, 0], 1.0)]]);
        assert_eq!(degree_bound_report(&mid, &res, None).unwrap().status, Status::Inconclusive);
    }

    #[test]
    fn degree_report_with_quasi_orders() {
        let spec = DomainSpec::complex_ellipsoid(&[1.0, 2.0])
            .unwrap()
            .with_weight(Weight::new(&[1, 2]).unwrap())
            .unwrap();
        let res = resonance_report(&spec.weight).unwrap();
        let q = quasi_resonance_report(
            &spec,
            &res,
            &QuasiOptions {
                sampling: SamplingConfig::new(1 << 16, 3),
                ..Default::default()
            },
        )
        .unwrap();
        let ok = map(2, &[&[(&[1, 0], 1.0)], &[(&[0, 1], 1.0), (&[2, 0], 1.0)]]);
        assert_eq!(degree_bound_report(&ok, &res, Some(&q)).unwrap().status, Status::Pass);
        let bad = map(2, &[&[(&[1, 0], 1.0)], &[(&[0, 1], 1.0), (&[3, 0], 1.0)]]);
        let r = degree_bound_report(&bad, &res, Some(&q)).unwrap();
        assert_eq!(r.status, Status::Fail);
        assert!(!r.degree_table.unwrap()[1].conjectured);
    }

    #[test]
    fn linearity_examples() {
        let m = Weight::circular(3);
        let res = resonance_report(&m).unwrap();
        assert_eq!(linearity_check(&rotation_map(&m, 0.3), &res).unwrap().status, Status::Pass);
        let m = Weight::new(&[2, 3]).unwrap();
        let res = resonance_report(&m).unwrap();
        assert_eq!(linearity_check(&rotation_map(&m, 0.3), &res).unwrap().status, Status::Pass);
        let bent = map(2, &[&[(&[1, 0], 1.0), (&[0, 2], 1.0)], &[(&[0, 1], 1.0)]]);
        assert_eq!(linearity_check(&bent, &res).unwrap().status, Status::Fail);
        let m = Weight::new(&[1, 2]).unwrap();
        let res = resonance_report(&m).unwrap();
        let f = map(2, &[&[(&[1, 0], 1.0)], &[(&[0, 1], 1.0), (&[2, 0], 1.0)]]);
        assert_eq!(linearity_check(&f, &res).unwrap().status, Status::NotApplicable);
    }

    #[test]
    fn commuting_maps_respect_resonance_orders() {
        for n in 2..=5 {
            let m = Weight::ascending(n);
            let res = resonance_report(&m).unwrap();
            for f in [rotation_map(&m, 0.3), zapalowski_map(n).unwrap()] {
                assert!(commutes_with_rotation(&f, &m));
                for (p, &mu) in f.components().iter().zip(&res.orders) {
                    assert!(p.degree().at_most(mu));
                }
            }
        }
        let m = Weight::new(&[1, 2]).unwrap();
        let f = map(2, &[&[(&[1, 0], 1.0), (&[0, 1], 1.0)], &[(&[0, 1], 1.0)]]);
        assert!(!commutes_with_rotation(&f, &m));
    }

    #[test]
    fn two_domain_form_matches_single_domain_bit_for_bit() {
        let spec = DomainSpec::ball(2).unwrap();
        let res = resonance_report(&spec.weight).unwrap();
        let f = rotation_map(&spec.weight, 0.6);
        let options = SuiteOptions {
            sampling: SamplingConfig::new(1 << 14, 4),
            ..Default::default()
        };
        let single = SuiteInput {
            map: &f,
            inverse: None,
            source: &spec,
            target: None,
            resonance: &res,
            quasi: None,
        };
        let double = SuiteInput {
            target: Some(&spec),
            ..single.clone()
        };
        let a = run_suite(&single, &Check::ALL, &options).unwrap();
        let b = run_suite(&double, &Check::ALL, &options).unwrap();
        assert_eq!(a, b);
        assert_ne!(overall_status(&a), Status::Fail);
    }

    #[test]
    fn suite_falls_back_when_sampling_is_infeasible() {
        let spec = DomainSpec::symmetrized_ellipsoid(1.0, 4, 1.0).unwrap();
        let res = resonance_report(&spec.weight).unwrap();
        let f = zapalowski_map(4).unwrap();
        let options = SuiteOptions {
            sampling: SamplingConfig::new(1 << 12, 4),
            ..Default::default()
        };
        let input = SuiteInput {
            map: &f,
            inverse: None,
            source: &spec,
            target: None,
            resonance: &res,
            quasi: None,
        };
        let reports = run_suite(&input, &[Check::Origin, Check::Jacobian, Check::Degree], &options).unwrap();
        assert!(reports.iter().all(|r| r.status == Status::Pass), "{reports:#?}");
    }
}
