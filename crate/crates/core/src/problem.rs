//! Synthetic synchronization instances `C = G* G*^T + Delta`.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Result, SyncError};
use crate::linalg::{block_inf_norm, sym_op_norm, Mat};
use crate::manifold::{Group, RotationStack};
use crate::rng::{stream, Domain};

/// Haar-distributed stack in `SO(d)^n`: QR of a Gaussian block with the
/// signs of `R`'s diagonal moved into `Q`, then a fixed reflection if the
/// determinant is negative.
pub fn random_rotation_stack(n: usize, d: usize, seed: u64) -> Result<RotationStack> {
    if n < 2 {
        return Err(SyncError::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    if d == 0 {
        return Err(SyncError::InvalidArgument("need d >= 1".into()));
    }
    let blocks: Vec<Mat> = (0..n).map(|i| haar_block(d, seed, i)).collect();
    RotationStack::from_blocks(&blocks, Group::SO)
}

fn haar_block(d: usize, seed: u64, i: usize) -> Mat {
    let mut rng = stream(seed, Domain::Rotation, i, 0);
    let z = Mat::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..d {
        if r[(c, c)] < 0.0 {
            for row in 0..d {
                q[(row, c)] = -q[(row, c)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for row in 0..d {
            q[(row, 0)] = -q[(row, 0)];
        }
    }
    q
}

/// Symmetric `nd x nd` noise with zero diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix {
    mat: Mat,
    d: usize,
}

impl NoiseMatrix {
    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.mat.nrows() / self.d
    }
}

/// `Delta_ij = sigma W_ij` for `i < j` with iid standard normal entries,
/// mirrored below the diagonal; diagonal blocks are zero. Block `(i, j)` is
/// drawn from its own stream, so it does not depend on `n`.
pub fn gaussian_noise(n: usize, d: usize, sigma: f64, seed: u64) -> Result<NoiseMatrix> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(SyncError::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if d == 0 {
        return Err(SyncError::InvalidArgument("need d >= 1".into()));
    }
    let mut mat = Mat::zeros(n * d, n * d);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut rng = stream(seed, Domain::Noise, i, j);
            for a in 0..d {
                for b in 0..d {
                    let w: f64 = StandardNormal.sample(&mut rng);
                    mat[(i * d + a, j * d + b)] = sigma * w;
                    mat[(j * d + b, i * d + a)] = sigma * w;
                }
            }
        }
    }
    Ok(NoiseMatrix { mat, d })
}

/// Accepts an arbitrary square noise matrix: symmetrizes it and zeroes its
/// diagonal blocks. Returns the cleaned matrix and the Frobenius norm of the
/// modification.
pub fn custom_noise(m: &Mat, d: usize) -> Result<(NoiseMatrix, f64)> {
    if d == 0 || m.nrows() != m.ncols() || m.nrows() % d != 0 {
        return Err(SyncError::Dimension(format!(
            "{}x{} noise is not a square block matrix with d = {d}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(SyncError::InvalidArgument("noise contains non-finite entries".into()));
    }
    let mut sym = (m + m.transpose()) * 0.5;
    let n = m.nrows() / d;
    for i in 0..n {
        sym.view_mut((i * d, i * d), (d, d)).fill(0.0);
    }
    let modification = (&sym - m).norm();
    Ok((NoiseMatrix { mat: sym, d }, modification))
}

/// Noise statistics the guarantees are stated in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseStats {
    /// Spectral norm of `Delta`.
    pub op_norm_delta: f64,
    /// `max_i |(Delta G*)_i|_F`.
    pub delta_gstar_inf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum NoiseLevel {
    Gaussian(f64),
    #[serde(serialize_with = "serialize_custom")]
    Custom,
}

fn serialize_custom<S: serde::Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str("custom")
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub n: usize,
    pub d: usize,
    pub c: Mat,
    pub level: NoiseLevel,
    pub seed: u64,
    pub truth: Option<RotationStack>,
    /// `C - G* G*^T` when the truth is known.
    pub delta: Option<Mat>,
    pub stats: Option<NoiseStats>,
}

impl Observation {
    /// Observation with no ground truth attached (e.g. read from disk).
    pub fn without_truth(c: Mat, d: usize, level: NoiseLevel, seed: u64) -> Result<Self> {
        check_square_blocks(&c, d)?;
        Ok(Observation { n: c.nrows() / d, d, c, level, seed, truth: None, delta: None, stats: None })
    }

    /// Attaches a ground truth and recomputes `Delta` and its statistics.
    pub fn with_truth(c: Mat, truth: RotationStack, level: NoiseLevel, seed: u64) -> Result<Self> {
        let d = truth.d();
        check_square_blocks(&c, d)?;
        if c.nrows() != truth.n() * d {
            return Err(SyncError::Dimension("truth and observation differ in n".into()));
        }
        let delta = &c - truth.as_mat() * truth.as_mat().transpose();
        let stats = noise_stats(&delta, &truth);
        Ok(Observation {
            n: truth.n(),
            d,
            c,
            level,
            seed,
            truth: Some(truth),
            delta: Some(delta),
            stats: Some(stats),
        })
    }

    pub fn truth(&self) -> Result<&RotationStack> {
        self.truth.as_ref().ok_or(SyncError::MissingTruth("this operation"))
    }

    pub fn require_stats(&self) -> Result<(NoiseStats, &Mat, &RotationStack)> {
        match (&self.stats, &self.delta, &self.truth) {
            (Some(s), Some(delta), Some(t)) => Ok((*s, delta, t)),
            _ => Err(SyncError::MissingTruth("noise statistics")),
        }
    }
}

fn check_square_blocks(c: &Mat, d: usize) -> Result<()> {
    if d == 0 || c.nrows() != c.ncols() || c.nrows() % d != 0 {
        return Err(SyncError::Dimension(format!("{}x{} with d = {d}", c.nrows(), c.ncols())));
    }
    Ok(())
}

pub fn noise_stats(delta: &Mat, truth: &RotationStack) -> NoiseStats {
    NoiseStats {
        op_norm_delta: sym_op_norm(delta),
        delta_gstar_inf: block_inf_norm(&(delta * truth.as_mat()), truth.d()),
    }
}

/// `C = G* G*^T + Delta` with the noise statistics cached.
pub fn assemble_observation(
    truth: &RotationStack,
    noise: &NoiseMatrix,
    level: NoiseLevel,
    seed: u64,
) -> Result<Observation> {
    if noise.d() != truth.d() || noise.n() != truth.n() {
        return Err(SyncError::Dimension("noise and truth differ in shape".into()));
    }
    let c = truth.as_mat() * truth.as_mat().transpose() + noise.as_mat();
    let stats = noise_stats(noise.as_mat(), truth);
    Ok(Observation {
        n: truth.n(),
        d: truth.d(),
        c,
        level,
        seed,
        truth: Some(truth.clone()),
        delta: Some(noise.as_mat().clone()),
        stats: Some(stats),
    })
}

/// Gaussian instance with a Haar truth; the standard synthetic benchmark.
pub fn gaussian_instance(n: usize, d: usize, sigma: f64, seed: u64) -> Result<Observation> {
    let truth = random_rotation_stack(n, d, seed)?;
    let noise = gaussian_noise(n, d, sigma, seed)?;
    assemble_observation(&truth, &noise, NoiseLevel::Gaussian(sigma), seed)
}

/// Named guarantees whose noise hypotheses can be checked on an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Guarantee {
    /// Estimation error of any global maximizer in Frobenius distance.
    L2Error,
    /// Block-wise estimation error of global maximizers.
    LinfError,
    /// Strong concavity, local error bound and the linear rate.
    LocalConcavity,
    /// Truth and estimator both inside the strong-concavity region.
    RegionContainment,
    /// One gradient step keeps the iterate in the ball (three dimensions).
    StayInBall,
    /// Spectral initialization lands close to the truth.
    SpectralInit,
    /// Spectral initialization followed by gradient ascent converges.
    GlobalConvergence,
}

impl Guarantee {
    pub const ALL: [Guarantee; 7] = [
        Guarantee::L2Error,
        Guarantee::LinfError,
        Guarantee::LocalConcavity,
        Guarantee::RegionContainment,
        Guarantee::StayInBall,
        Guarantee::SpectralInit,
        Guarantee::GlobalConvergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Guarantee::L2Error => "l2-error",
            Guarantee::LinfError => "linf-error",
            Guarantee::LocalConcavity => "local-concavity",
            Guarantee::RegionContainment => "region-containment",
            Guarantee::StayInBall => "stay-in-ball",
            Guarantee::SpectralInit => "spectral-init",
            Guarantee::GlobalConvergence => "global-convergence",
        }
    }

    /// `(bound on |Delta|, bound on |Delta G*|_inf)` for the instance size.
    fn noise_bounds(self, n: usize, d: usize) -> (Option<f64>, Option<f64>) {
        let nf = n as f64;
        let sd = (d as f64).sqrt();
        let n34 = nf.powf(0.75);
        match self {
            Guarantee::L2Error => (None, None),
            Guarantee::LinfError => (Some(nf / (6.0 * sd)), None),
            Guarantee::LocalConcavity => (Some(n34 / (20.0 * sd)), Some(nf / 20.0)),
            Guarantee::RegionContainment => (Some(n34 / (80.0 * sd)), Some(nf / 40.0)),
            Guarantee::StayInBall => (Some(nf / 50.0), Some(nf / 400.0)),
            Guarantee::SpectralInit => (Some(n34 / (20.0 * sd)), Some(nf / (40.0 * d as f64))),
            Guarantee::GlobalConvergence => {
                (Some(n34 / (80.0 * sd)), Some(nf / (400.0 * d as f64)))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `bound - value`; non-negative iff the hypothesis holds.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Admissibility {
    pub guarantee: Guarantee,
    pub hypotheses: Vec<Hypothesis>,
}

impl Admissibility {
    pub fn holds(&self) -> bool {
        self.hypotheses.iter().all(|h| h.pass)
    }
}

fn hypothesis(name: &str, value: f64, bound: f64) -> Hypothesis {
    Hypothesis { name: name.into(), value, bound, margin: bound - value, pass: value <= bound }
}

/// Evaluates the noise hypotheses of `guarantee` on an instance with known truth.
pub fn admissibility(obs: &Observation, guarantee: Guarantee) -> Result<Admissibility> {
    let stats = obs.stats.ok_or(SyncError::MissingTruth("admissibility"))?;
    let (op_bound, inf_bound) = guarantee.noise_bounds(obs.n, obs.d);
    let mut hypotheses = vec![hypothesis("n >= 2", 2.0, obs.n as f64)];
    if guarantee == Guarantee::StayInBall {
        hypotheses.push(hypothesis("d == 3", (obs.d as f64 - 3.0).abs(), 0.0));
    }
    if let Some(b) = op_bound {
        hypotheses.push(hypothesis("|Delta|", stats.op_norm_delta, b));
    }
    if let Some(b) = inf_bound {
        hypotheses.push(hypothesis("|Delta G*|_inf", stats.delta_gstar_inf, b));
    }
    Ok(Admissibility { guarantee, hypotheses })
}

/// Region of strong concavity around a global maximizer:
/// Frobenius radius `min(sqrt(n), n / |Delta|) / 10` and block radius `1/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionSpec {
    pub rho_f: f64,
    pub rho_inf: f64,
}

impl RegionSpec {
    pub fn for_instance(n: usize, op_norm_delta: f64) -> Self {
        let nf = n as f64;
        let inner = if op_norm_delta > 0.0 { nf.sqrt().min(nf / op_norm_delta) } else { nf.sqrt() };
        RegionSpec { rho_f: inner / 10.0, rho_inf: 0.25 }
    }

    pub fn contains(&self, dist_f: f64, dist_inf: f64) -> bool {
        dist_f <= self.rho_f && dist_inf <= self.rho_inf
    }
}
