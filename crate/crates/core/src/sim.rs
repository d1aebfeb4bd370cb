//! Verification harness: Poisson nearest-neighbor sampling, synthetic evidence
//! drawn from the nominal law, Monte Carlo false-alarm periods and
//! anomaly-injection fixtures.

use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::detector::Frame;
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::model::{powi, DetectorModel};
use crate::specfun::volume_constant;

/// Largest dimension the point-process sampler accepts; the enclosing cube grows as 2^m.
pub const MAX_SIM_DIM: u32 = 10;
/// Probability that the simulation cube misses the true nearest neighbor.
const CUBE_MISS_PROB: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub m: u32,
    /// Poisson rate (points per unit volume).
    pub intensity: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub h: f64,
    pub omega0: f64,
    /// Horizon of one false-alarm run.
    pub max_steps: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(self.intensity > 0.0) || !self.intensity.is_finite() {
            return Err(Error::Config(format!("intensity must be positive, got {}", self.intensity)));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Bound period `e^{ω₀h}`.
    pub fn bound_period(&self) -> f64 {
        (self.omega0 * self.h).exp()
    }
}

/// Horizon of `100·e^{ω₀h}` steps, saturating.
pub fn default_max_steps(bound_period: f64) -> u64 {
    let v = (100.0 * bound_period).ceil();
    if v.is_finite() && v < u64::MAX as f64 {
        (v as u64).max(1)
    } else {
        u64::MAX
    }
}

/// `P(NN distance ≤ r) = 1 − exp(−v_m r^m)` for a unit-rate Poisson process.
pub fn nn_distance_cdf(r: f64, m: u32) -> Result<f64> {
    nn_distance_cdf_with_intensity(r, m, 1.0)
}

pub fn nn_distance_cdf_with_intensity(r: f64, m: u32, intensity: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("distance must be non-negative, got {r}")));
    }
    let v = volume_constant(m)?;
    Ok(-(-intensity * v * powi(r, m as usize)).exp_m1())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnSample {
    pub distances: Vec<f64>,
    /// Realizations with no point in the cube, which were drawn again.
    pub redraws: usize,
}

/// Distance from the origin to the nearest point of a homogeneous Poisson process.
pub fn sample_nn_distances(config: &SimConfig) -> Result<NnSample> {
    config.validate()?;
    if config.m > MAX_SIM_DIM {
        return Err(Error::Config(format!("point-process sampling is limited to m <= {MAX_SIM_DIM}, got {}", config.m)));
    }
    let m = config.m as usize;
    let v = volume_constant(config.m)?;
    // radius that holds the nearest neighbor with probability 1 − CUBE_MISS_PROB
    let half_side = (-CUBE_MISS_PROB.ln() / (config.intensity * v)).powf(1.0 / m as f64);
    let mean_count = config.intensity * powi(2.0 * half_side, m);
    let poisson = Poisson::new(mean_count).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut distances = Vec::with_capacity(config.n_samples);
    let mut redraws = 0;
    let mut point = vec![0.0; m];
    while distances.len() < config.n_samples {
        let count = poisson.sample(&mut rng) as u64;
        if count == 0 {
            redraws += 1;
            continue;
        }
        let mut best = f64::INFINITY;
        for _ in 0..count {
            for p in point.iter_mut() {
                *p = rng.random_range(-half_side..half_side);
            }
            best = best.min(point.iter().map(|x| x * x).sum());
        }
        distances.push(best.sqrt());
    }
    Ok(NnSample { distances, redraws })
}

/// Draws nominal evidence `δ = E/v_m − c`, optionally rejecting values above `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSampler {
    pub v_m: f64,
    pub d_alpha_pow: f64,
    pub truncate_at: Option<f64>,
}

impl DeltaSampler {
    pub fn new(m: u32, d_alpha_pow: f64, truncate_at: Option<f64>) -> Result<Self> {
        if !(d_alpha_pow >= 0.0) || !d_alpha_pow.is_finite() {
            return Err(Error::Domain(format!("d_alpha^m must be finite and non-negative, got {d_alpha_pow}")));
        }
        if let Some(phi) = truncate_at {
            if !(phi > -d_alpha_pow) {
                return Err(Error::Domain(format!("truncation point {phi} leaves no support")));
            }
        }
        Ok(Self { v_m: volume_constant(m)?, d_alpha_pow, truncate_at })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let e: f64 = Exp1.sample(rng);
            let delta = e / self.v_m - self.d_alpha_pow;
            match self.truncate_at {
                Some(phi) if delta > phi => continue,
                _ => return delta,
            }
        }
    }
}

/// `count` untruncated evidence draws for `d_α` in `m` dimensions.
pub fn sample_delta(d_alpha: f64, m: u32, count: usize, seed: u64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let sampler = DeltaSampler::new(m, powi(d_alpha, m as usize), None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}

/// Monte Carlo estimate of the mean time to first threshold crossing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarEstimate {
    pub h: f64,
    pub omega0: f64,
    pub mean_period: f64,
    pub std_error: f64,
    pub n_runs: usize,
    pub censored: usize,
    pub bound_period: f64,
    pub bound_satisfied: bool,
}

impl FarEstimate {
    fn from_periods(periods: &[(u64, bool)], h: f64, omega0: f64) -> Result<Self> {
        let n = periods.len();
        let censored = periods.iter().filter(|p| p.1).count();
        if censored == n {
            return Err(Error::HorizonTooShort { runs: n, max_steps: periods.first().map_or(0, |p| p.0) });
        }
        let mean = periods.iter().map(|p| p.0 as f64).sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = periods.iter().map(|p| (p.0 as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            // one run gives no spread estimate; use its own magnitude
            mean
        };
        let bound_period = (omega0 * h).exp();
        Ok(Self {
            h,
            omega0,
            mean_period: mean,
            std_error,
            n_runs: n,
            censored,
            bound_period,
            bound_satisfied: mean + 2.0 * std_error >= bound_period,
        })
    }
}

fn first_crossing(mut next: impl FnMut() -> f64, h: f64, max_steps: u64) -> (u64, bool) {
    let mut s = 0.0f64;
    for t in 1..=max_steps {
        s = (s + next()).max(0.0);
        if s >= h {
            return (t, false);
        }
    }
    (max_steps, true)
}

/// False-alarm period of the recursion driven by i.i.d. nominal evidence.
///
/// Run `i` uses seed `config.seed + i`, so results do not depend on scheduling.
pub fn estimate_false_alarm_period(config: &SimConfig, d_alpha_pow: f64, truncate_at: Option<f64>) -> Result<FarEstimate> {
    config.validate()?;
    if !(config.h > 0.0) || !(config.omega0 > 0.0) {
        return Err(Error::Config("h and omega0 must be positive".into()));
    }
    let sampler = DeltaSampler::new(config.m, d_alpha_pow, truncate_at)?;
    let periods: Vec<(u64, bool)> = (0..config.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(i));
            first_crossing(|| sampler.sample(&mut rng), config.h, config.max_steps)
        })
        .collect();
    FarEstimate::from_periods(&periods, config.h, config.omega0)
}

/// Source of nominal feature vectors.
pub trait NominalSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// Uniform distribution on the cube `[lo, hi)^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformBox {
    pub lo: f64,
    pub hi: f64,
    pub m: usize,
}

impl NominalSampler for UniformBox {
    fn dim(&self) -> usize {
        self.m
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.m).map(|_| rng.random_range(self.lo..self.hi)).collect()
    }
}

/// `count` nominal vectors, one per frame.
pub fn nominal_dataset(sampler: &dyn NominalSampler, count: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count as u64).map(|i| FeatureVector::new(i, 0, sampler.sample(&mut rng))).collect()
}

/// Nominal frames with objects shifted by `anomaly_offset` along the first coordinate inside `window`.
pub fn make_injected_stream(
    sampler: &dyn NominalSampler,
    anomaly_offset: f64,
    window: Range<u64>,
    length: u64,
    objects_per_frame: usize,
    seed: u64,
) -> Result<Vec<Frame>> {
    if !(anomaly_offset >= 0.0) || !anomaly_offset.is_finite() {
        return Err(Error::Config(format!("anomaly offset must be finite and non-negative, got {anomaly_offset}")));
    }
    if window.start > window.end || window.end > length {
        return Err(Error::Config(format!("window {window:?} must lie within [0, {length})")));
    }
    if objects_per_frame == 0 {
        return Err(Error::Config("objects_per_frame must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..length)
        .map(|t| {
            let objects = (0..objects_per_frame as u64)
                .map(|j| {
                    let mut v = sampler.sample(&mut rng);
                    if window.contains(&t) {
                        v[0] += anomaly_offset;
                    }
                    FeatureVector::new(t, j, v)
                })
                .collect();
            Frame { frame_id: t, objects }
        })
        .collect();
    Ok(frames)
}

/// False-alarm period of the full pipeline: kNN evidence of fresh nominal vectors.
pub fn estimate_pipeline_false_alarm_period(
    model: &DetectorModel,
    sampler: &dyn NominalSampler,
    h: f64,
    omega0: f64,
    n_runs: usize,
    max_steps: u64,
    seed: u64,
) -> Result<FarEstimate> {
    if sampler.dim() != model.m {
        return Err(Error::Data(format!("sampler dimension {} differs from model dimension {}", sampler.dim(), model.m)));
    }
    if n_runs == 0 || max_steps == 0 {
        return Err(Error::Config("n_runs and max_steps must be positive".into()));
    }
    let c = model.d_alpha_pow();
    let periods = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let mut err = None;
            let out = first_crossing(
                || match model.knn_distance(&sampler.sample(&mut rng)) {
                    Ok(d) => powi(d, model.m) - c,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                },
                h,
                max_steps,
            );
            match err {
                Some(e) => Err(e),
                None => Ok(out),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    FarEstimate::from_periods(&periods, h, omega0)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Writes `h,omega0,bound_period,mean_period,std_error,n_runs,censored,bound_satisfied`.
pub fn write_simulation_csv<W: std::io::Write>(w: W, rows: &[FarEstimate]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["h", "omega0", "bound_period", "mean_period", "std_error", "n_runs", "censored", "bound_satisfied"])
        .map_err(crate::feature::csv_io)?;
    for r in rows {
        wr.write_record([
            r.h.to_string(),
            r.omega0.to_string(),
            r.bound_period.to_string(),
            r.mean_period.to_string(),
            r.std_error.to_string(),
            r.n_runs.to_string(),
            r.censored.to_string(),
            r.bound_satisfied.to_string(),
        ])
        .map_err(crate::feature::csv_io)?;
    }
    wr.flush()?;
    Ok(())
}
