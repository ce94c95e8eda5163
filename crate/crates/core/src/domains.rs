//! Model quasi-circular domains: membership oracles, bounding boxes,
//! the weighted rotation action, and deterministic rejection sampling.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::roots::{monic_roots, RootError};
use crate::weights::{Weight, WeightError};

/// Abort rejection sampling below this acceptance rate.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
/// Draws made before a low acceptance rate is treated as final.
const ACCEPTANCE_PROBE: u64 = 1_000_000;

pub const DEFAULT_SEED: u64 = 0x5e_ed0f_d0a1;
pub const DEFAULT_POINTS: usize = 1 << 20;
pub const DEFAULT_BATCHES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("root solve failed: {0}")]
    RootSolveFailed(#[from] RootError),
    #[error("acceptance rate {rate:.3e} is below {MIN_ACCEPTANCE:e}; bounding box too loose")]
    LowAcceptance { rate: f64 },
    #[error("invalid domain spec: {0}")]
    InvalidSpec(String),
    #[error("weight {weight} is not a rotation weight of {domain}")]
    IncompatibleWeight { weight: String, domain: String },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("sample count must be at least 1")]
    EmptyRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DomainKind {
    Ball,
    Polydisc,
    /// `sum |z_j|^{2 p_j} < 1`
    ComplexEllipsoid { exponents: Vec<f64> },
    /// Image of `{sum |lambda_j|^{2q} < r}` under the elementary symmetric map.
    SymmetrizedEllipsoid { q: f64, radius: f64 },
}

/// A bounded domain containing the origin, together with its rotation weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub dim: usize,
    pub weight: Weight,
    /// Per-coordinate modulus bound; the sampling box is `|Re|, |Im| < R_j`.
    pub bounding_box: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, j| acc * (n - j) as u64 / (j + 1) as u64)
}

impl DomainSpec {
    pub fn ball(n: usize) -> Result<Self, DomainError> {
        Self::unit_box(DomainKind::Ball, n)
    }

    pub fn polydisc(n: usize) -> Result<Self, DomainError> {
        Self::unit_box(DomainKind::Polydisc, n)
    }

    pub fn complex_ellipsoid(exponents: &[f64]) -> Result<Self, DomainError> {
        if exponents.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(DomainError::InvalidSpec(
                "ellipsoid exponents must be positive".into(),
            ));
        }
        Self::unit_box(
            DomainKind::ComplexEllipsoid {
                exponents: exponents.to_vec(),
            },
            exponents.len(),
        )
    }

    /// Default weight is `(1, 2, ..., n)`.
    pub fn symmetrized_ellipsoid(q: f64, n: usize, radius: f64) -> Result<Self, DomainError> {
        if n < 2 {
            return Err(DomainError::InvalidSpec("symell needs n >= 2".into()));
        }
        if !(q > 0.0 && q.is_finite() && radius > 0.0 && radius.is_finite()) {
            return Err(DomainError::InvalidSpec("symell needs q > 0 and r > 0".into()));
        }
        // |e_i(lambda)| <= C(n,i) max|lambda_j|^i and |lambda_j| < r^{1/(2q)}
        let root_bound = radius.powf(1.0 / (2.0 * q));
        let bounding_box = (1..=n)
            .map(|i| binomial(n, i) as f64 * root_bound.powi(i as i32))
            .collect();
        Ok(DomainSpec {
            kind: DomainKind::SymmetrizedEllipsoid { q, radius },
            dim: n,
            weight: Weight::ascending(n),
            bounding_box,
        })
    }

    fn unit_box(kind: DomainKind, n: usize) -> Result<Self, DomainError> {
        if n == 0 {
            return Err(DomainError::InvalidSpec("dimension must be positive".into()));
        }
        Ok(DomainSpec {
            kind,
            dim: n,
            weight: Weight::circular(n),
            bounding_box: vec![1.0; n],
        })
    }

    /// Whether the domain is Reinhardt (invariant under every torus rotation).
    pub fn is_reinhardt(&self) -> bool {
        !matches!(self.kind, DomainKind::SymmetrizedEllipsoid { .. })
    }

    /// Replaces the rotation weight. Reinhardt domains accept any weight of
    /// the right length; the symmetrized ellipsoid only `(1, ..., n)`.
    pub fn with_weight(mut self, weight: Weight) -> Result<Self, DomainError> {
        if weight.dim() != self.dim {
            return Err(DomainError::DimensionMismatch {
                expected: self.dim,
                found: weight.dim(),
            });
        }
        if !self.is_reinhardt() && weight != Weight::ascending(self.dim) {
            return Err(DomainError::IncompatibleWeight {
                weight: weight.to_string(),
                domain: self.to_string(),
            });
        }
        self.weight = weight;
        Ok(self)
    }

    /// Lebesgue volume of the sampling box in `R^{2n}`.
    pub fn box_volume(&self) -> f64 {
        self.bounding_box.iter().map(|r| 4.0 * r * r).product()
    }

    fn check_dim(&self, z: &[Complex64]) -> Result<(), DomainError> {
        if z.len() != self.dim {
            return Err(DomainError::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        Ok(())
    }

    /// Defining function normalized so that the domain is `{level < 1}`.
    pub fn level(&self, z: &[Complex64]) -> Result<f64, DomainError> {
        self.check_dim(z)?;
        Ok(match &self.kind {
            DomainKind::Ball => z.iter().map(|w| w.norm_sqr()).sum(),
            DomainKind::Polydisc => z.iter().map(|w| w.norm_sqr()).fold(0.0, f64::max),
            DomainKind::ComplexEllipsoid { exponents } => z
                .iter()
                .zip(exponents)
                .map(|(w, &p)| w.norm_sqr().powf(p))
                .sum(),
            DomainKind::SymmetrizedEllipsoid { q, radius } => {
                let roots = symmetric_roots(z)?;
                let s: f64 = if *q == 1.0 {
                    roots.iter().map(|l| l.norm_sqr()).sum()
                } else {
                    roots.iter().map(|l| l.norm_sqr().powf(*q)).sum()
                };
                s / radius
            }
        })
    }

    /// Open-domain membership; boundary points are outside.
    pub fn membership(&self, z: &[Complex64]) -> Result<bool, DomainError> {
        Ok(self.level(z)? < 1.0)
    }

    /// Whether `z` lies in the open sampling box.
    pub fn inside_box(&self, z: &[Complex64]) -> bool {
        z.iter()
            .zip(&self.bounding_box)
            .all(|(w, &r)| w.re.abs() < r && w.im.abs() < r)
    }

    /// Points inside the domain, not uniformly distributed. For the
    /// symmetrized ellipsoid they are images of root vectors drawn from a
    /// polydisc that sits inside the pre-image; otherwise rejection samples.
    pub fn interior_points(&self, count: usize, seed: u64) -> Result<Vec<Complex64>, DomainError> {
        match &self.kind {
            DomainKind::SymmetrizedEllipsoid { q, radius } => {
                let n = self.dim;
                // sum |lambda_j|^{2q} < n * (r/n) = r
                let rho = (radius / n as f64).powf(1.0 / (2.0 * q));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = Vec::with_capacity(count * n);
                let mut lambda = vec![Complex64::new(0.0, 0.0); n];
                for _ in 0..count {
                    for l in lambda.iter_mut() {
                        let r = rho * rng.random::<f64>().sqrt() * 0.999;
                        *l = Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU));
                    }
                    out.extend(elementary_symmetric(&lambda));
                }
                Ok(out)
            }
            _ => Ok(sample(self, count, seed, 0)?.points),
        }
    }
}

/// Roots of `t^n - z_1 t^{n-1} + z_2 t^{n-2} - ... + (-1)^n z_n`.
pub fn symmetric_roots(z: &[Complex64]) -> Result<Vec<Complex64>, RootError> {
    let n = z.len();
    // lower[k] is the coefficient of t^k, i.e. (-1)^{n-k} z_{n-k}
    let lower: Vec<Complex64> = (0..n)
        .map(|k| {
            let i = n - k;
            if i.is_multiple_of(2) {
                z[i - 1]
            } else {
                -z[i - 1]
            }
        })
        .collect();
    monic_roots(&lower)
}

/// `(e_1(lambda), ..., e_n(lambda))`.
pub fn elementary_symmetric(lambda: &[Complex64]) -> Vec<Complex64> {
    let n = lambda.len();
    let mut e = vec![Complex64::new(0.0, 0.0); n + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for (k, l) in lambda.iter().enumerate() {
        for i in (1..=k + 1).rev() {
            let prev = e[i - 1];
            e[i] += prev * l;
        }
    }
    e.remove(0);
    e
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DomainKind::Ball => write!(f, "ball:n={}", self.dim),
            DomainKind::Polydisc => write!(f, "polydisc:n={}", self.dim),
            DomainKind::ComplexEllipsoid { exponents } => {
                let p: Vec<String> = exponents.iter().map(|p| p.to_string()).collect();
                write!(f, "ellipsoid:p={}", p.join(","))
            }
            DomainKind::SymmetrizedEllipsoid { q, radius } => {
                write!(f, "symell:q={},n={},r={}", q, self.dim, radius)
            }
        }
    }
}

/// Grammar accepted by [`DomainSpec::from_str`].
pub const DOMAIN_GRAMMAR: &str = "\
domain specs:
  ball:n=<dim>                   unit ball
  polydisc:n=<dim>               unit polydisc
  ellipsoid:p=<p1>,<p2>,...      sum |z_j|^(2 p_j) < 1
  symell:q=<q>,n=<dim>[,r=<r>]   symmetrized (q,n)-ellipsoid, default r=1, weight (1,..,n)";

impl FromStr for DomainSpec {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: &str| DomainError::InvalidSpec(format!("{msg} in '{s}'"));
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        let parse_usize = |v: &str| v.trim().parse::<usize>().map_err(|_| bad("bad integer"));
        let parse_f64 = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("bad number"));
        match kind.trim() {
            "ball" | "polydisc" => {
                let n = rest
                    .trim()
                    .strip_prefix("n=")
                    .ok_or_else(|| bad("expected n=<dim>"))?;
                let n = parse_usize(n)?;
                if kind.trim() == "ball" {
                    DomainSpec::ball(n)
                } else {
                    DomainSpec::polydisc(n)
                }
            }
            "ellipsoid" => {
                let p = rest
                    .trim()
                    .strip_prefix("p=")
                    .ok_or_else(|| bad("expected p=<list>"))?;
                let exps = p.split(',').map(parse_f64).collect::<Result<Vec<_>, _>>()?;
                DomainSpec::complex_ellipsoid(&exps)
            }
            "symell" => {
                let (mut q, mut n, mut r) = (None, None, 1.0);
                for part in rest.split(',') {
                    let (key, value) = part.split_once('=').ok_or_else(|| bad("expected key=value"))?;
                    match key.trim() {
                        "q" => q = Some(parse_f64(value)?),
                        "n" => n = Some(parse_usize(value)?),
                        "r" => r = parse_f64(value)?,
                        _ => return Err(bad("unknown key")),
                    }
                }
                DomainSpec::symmetrized_ellipsoid(
                    q.ok_or_else(|| bad("missing q"))?,
                    n.ok_or_else(|| bad("missing n"))?,
                    r,
                )
            }
            _ => Err(bad("unknown domain kind")),
        }
    }
}

/// The weighted rotation `z_j -> e^{i m_j theta} z_j`.
pub fn rotation_apply(m: &Weight, theta: f64, z: &[Complex64]) -> Result<Vec<Complex64>, DomainError> {
    if z.len() != m.dim() {
        return Err(DomainError::DimensionMismatch {
            expected: m.dim(),
            found: z.len(),
        });
    }
    Ok(z.iter()
        .zip(m.entries())
        .map(|(w, &mj)| w * Complex64::from_polar(1.0, f64::from(mj) * theta))
        .collect())
}

/// One batch of accepted points from rejection sampling on the bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub dim: usize,
    /// Flat storage, `dim` coordinates per point.
    pub points: Vec<Complex64>,
    pub seed: u64,
    pub batch_index: u64,
    /// Box draws made, accepted or not.
    pub tries: u64,
    pub box_volume: f64,
    pub acceptance_rate: f64,
    /// Draws whose membership could not be decided; counted as outside.
    pub root_failures: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, Complex64> {
        self.points.chunks_exact(self.dim)
    }
}

fn batch_rng(seed: u64, batch_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch_index);
    rng
}

/// Draws `count` accepted points. The stream is keyed by `(seed, batch_index)`,
/// so the batch is reproducible bit-for-bit on any thread.
pub fn sample(
    spec: &DomainSpec,
    count: usize,
    seed: u64,
    batch_index: u64,
) -> Result<SampleBatch, DomainError> {
    if count == 0 {
        return Err(DomainError::EmptyRequest);
    }
    let mut rng = batch_rng(seed, batch_index);
    let n = spec.dim;
    let mut points = Vec::with_capacity(count * n);
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    let mut tries = 0u64;
    let mut accepted = 0usize;
    let mut root_failures = 0u64;
    while accepted < count {
        for (w, &r) in z.iter_mut().zip(&spec.bounding_box) {
            *w = Complex64::new(rng.random_range(-r..r), rng.random_range(-r..r));
        }
        tries += 1;
        match spec.membership(&z) {
            Ok(true) => {
                points.extend_from_slice(&z);
                accepted += 1;
            }
            Ok(false) => {}
            Err(DomainError::RootSolveFailed(_)) => root_failures += 1,
            Err(e) => return Err(e),
        }
        if tries >= ACCEPTANCE_PROBE && (accepted as f64) < MIN_ACCEPTANCE * tries as f64 {
            return Err(DomainError::LowAcceptance {
                rate: accepted as f64 / tries as f64,
            });
        }
    }
    if root_failures > 0 {
        log::warn!("batch {batch_index}: {root_failures} root solves failed; counted as outside");
    }
    let acceptance_rate = accepted as f64 / tries as f64;
    if acceptance_rate < MIN_ACCEPTANCE {
        return Err(DomainError::LowAcceptance {
            rate: acceptance_rate,
        });
    }
    Ok(SampleBatch {
        dim: n,
        points,
        seed,
        batch_index,
        tries,
        box_volume: spec.box_volume(),
        acceptance_rate,
        root_failures,
    })
}

/// Sample size and seed for Monte-Carlo integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SamplingConfig {
    /// Accepted points in total, split evenly over the batches.
    pub points: usize,
    pub batches: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            points: DEFAULT_POINTS,
            batches: DEFAULT_BATCHES,
            seed: DEFAULT_SEED,
        }
    }
}

impl SamplingConfig {
    pub fn new(points: usize, seed: u64) -> Self {
        SamplingConfig {
            points,
            seed,
            ..Default::default()
        }
    }

    /// Same sizes, independent stream.
    pub fn reseeded(&self, tag: u64) -> Self {
        SamplingConfig {
            seed: derive_seed(self.seed, tag),
            ..*self
        }
    }
}

/// SplitMix64 finalizer applied to `seed ^ mix(tag)`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    fn mix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }
    mix(seed ^ mix(tag))
}

/// All batches for one domain, in batch-index order.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub spec: DomainSpec,
    pub config: SamplingConfig,
    pub batches: Vec<SampleBatch>,
}

impl SampleSet {
    pub fn generate(spec: &DomainSpec, config: SamplingConfig) -> Result<Self, DomainError> {
        if config.points == 0 || config.batches == 0 {
            return Err(DomainError::EmptyRequest);
        }
        let batches_n = config.batches.min(config.points);
        let base = config.points / batches_n;
        let extra = config.points % batches_n;
        let batches = (0..batches_n)
            .into_par_iter()
            .map(|b| {
                let count = base + usize::from(b < extra);
                sample(spec, count, config.seed, b as u64)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SampleSet {
            spec: spec.clone(),
            config,
            batches,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn accepted(&self) -> usize {
        self.batches.iter().map(SampleBatch::len).sum()
    }

    pub fn tries(&self) -> u64 {
        self.batches.iter().map(|b| b.tries).sum()
    }

    pub fn root_failures(&self) -> u64 {
        self.batches.iter().map(|b| b.root_failures).sum()
    }

    pub fn box_volume(&self) -> f64 {
        self.spec.box_volume()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted() as f64 / self.tries() as f64
    }

    /// Monte-Carlo volume estimate with its standard error.
    pub fn volume(&self) -> (f64, f64) {
        let p = self.acceptance_rate();
        let v = self.box_volume();
        (v * p, v * (p * (1.0 - p) / self.tries() as f64).sqrt())
    }

    pub fn points(&self) -> impl Iterator<Item = &[Complex64]> {
        self.batches.iter().flat_map(SampleBatch::iter)
    }
}
