//! Seeded random generation for the data-generating processes.
//!
//! Every draw comes from a [`SeededStream`]: the ChaCha8 block cipher keyed by
//! a 64-bit seed, with a 64-bit stream selector used to give replication `r`
//! its own independent sequence. Standard normals are produced with the
//! Box–Muller transform using the pure-Rust `libm` routines, so output is
//! bit-identical across platforms.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::covariance::CovarianceSpec;
use crate::designs::DesignMatrix;
use crate::error::{dim, Error, Result};

/// Seed used when none is given on the command line or in the environment.
pub const DEFAULT_SEED: u64 = 20_200_415;

/// A deterministic random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct SeededStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
    spare: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            rng,
            seed,
            stream_id,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `(0, 1]` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller; the second variate of each pair is
    /// kept for the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    pub fn standard_normals(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.standard_normal())
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(self);
        idx
    }
}

impl RngCore for SeededStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Multivariate normal sampler holding the lower Cholesky factor of `Σ`.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(mean: DVector<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        if sigma.shape() != (mean.len(), mean.len()) {
            return Err(dim(format!(
                "covariance {:?} does not match mean length {}",
                sigma.shape(),
                mean.len()
            )));
        }
        let factor = sigma
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .unpack();
        Ok(Self { mean, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + L z` with `z` drawn from `stream`.
    pub fn sample(&self, stream: &mut SeededStream) -> DVector<f64> {
        let z = stream.standard_normals(self.dim());
        &self.mean + &self.factor * z
    }
}

/// One draw from `N(mean, Σ)`.
pub fn sample_mvn(
    mean: &DVector<f64>,
    sigma: &DMatrix<f64>,
    stream: &mut SeededStream,
) -> Result<DVector<f64>> {
    Ok(MvnSampler::new(mean.clone(), sigma)?.sample(stream))
}

/// Training and test responses drawn jointly at the same feature levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDraw {
    pub y_train: DVector<f64>,
    pub y_test: DVector<f64>,
}

/// Joint sampler for the stacked `(Y₁, Y₂)` model with shared design.
#[derive(Debug, Clone)]
pub struct PairedSampler {
    joint: MvnSampler,
    n: usize,
}

impl PairedSampler {
    /// Mean `(Xβ, Xβ)`, covariance from a [`CovarianceSpec::PairedCross`]
    /// whose `n` matches the design.
    pub fn new(x: &DesignMatrix, beta: &DVector<f64>, cov: &CovarianceSpec) -> Result<Self> {
        let CovarianceSpec::PairedCross { n, .. } = cov else {
            return Err(Error::InvalidSpec(format!("paired sampling needs a paired covariance, got {cov}")));
        };
        if *n != x.nrows() {
            return Err(dim(format!("covariance dimension {n} does not match {} design rows", x.nrows())));
        }
        let mu = x.mean_response(beta)?;
        let mean = DVector::from_iterator(2 * n, mu.iter().chain(mu.iter()).copied());
        let sigma = cov.materialize()?;
        Ok(Self {
            joint: MvnSampler::new(mean, &sigma)?,
            n: *n,
        })
    }

    pub fn sample(&self, stream: &mut SeededStream) -> PairedDraw {
        let joint = self.joint.sample(stream);
        PairedDraw {
            y_train: joint.rows(0, self.n).into_owned(),
            y_test: joint.rows(self.n, self.n).into_owned(),
        }
    }
}

/// A single joint draw from the paired equicorrelated model with cross
/// correlation equal to `rho`.
pub fn sample_paired(
    x: &DesignMatrix,
    beta: &DVector<f64>,
    sigma2: f64,
    rho: f64,
    stream: &mut SeededStream,
) -> Result<PairedDraw> {
    let cov = CovarianceSpec::PairedCross {
        sigma2,
        rho,
        n: x.nrows(),
        cross_rho: rho,
    };
    Ok(PairedSampler::new(x, beta, &cov)?.sample(stream))
}

/// A strictly stationary AR(1) path: `Y₀ ~ N(0, σ²/(1−φ²))`, then
/// `Y_t = φ Y_{t−1} + ε_t` with `ε_t ~ N(0, σ²)`.
pub fn sample_ar1(n: usize, phi: f64, sigma2: f64, stream: &mut SeededStream) -> Result<Vec<f64>> {
    CovarianceSpec::Ar1 { sigma2, phi, n }.validate()?;
    let sd = sigma2.sqrt();
    let mut path = Vec::with_capacity(n);
    let mut prev = stream.standard_normal() * (sigma2 / (1.0 - phi * phi)).sqrt();
    path.push(prev);
    for _ in 1..n {
        prev = phi * prev + sd * stream.standard_normal();
        path.push(prev);
    }
    Ok(path)
}
