//! Nominal model: random train/reference split, kNN baseline percentile and the
//! evidence upper bound, plus the versioned JSON model file.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::knn::KdTree;

pub const MODEL_VERSION: u64 = 1;

/// How the evidence upper bound φ is derived from the largest training kNN distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiConvention {
    /// `φ = (max dᵢ)^m − d_α^m`, the largest evidence value seen in training.
    #[default]
    PowerMinus,
    /// `φ = max dᵢ`, the raw distance.
    RawDistance,
}

impl std::str::FromStr for PhiConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power_minus" => Ok(Self::PowerMinus),
            "raw_distance" => Ok(Self::RawDistance),
            other => Err(Error::Config(format!("unknown phi convention {other:?}"))),
        }
    }
}

impl std::fmt::Display for PhiConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PowerMinus => "power_minus",
            Self::RawDistance => "raw_distance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub k: usize,
    pub alpha: f64,
    pub partition_fraction: f64,
    pub partition_seed: u64,
    pub phi_convention: PhiConvention,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { k: 1, alpha: 0.05, partition_fraction: 0.5, partition_seed: 0, phi_convention: PhiConvention::PowerMinus }
    }
}

impl TrainParams {
    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.partition_fraction > 0.0 && self.partition_fraction < 1.0) {
            return Err(Error::Config(format!(
                "partition fraction must lie in (0, 1), got {}",
                self.partition_fraction
            )));
        }
        Ok(())
    }
}

/// Trained detector: reference set plus the statistics derived from the held-out half.
#[derive(Debug, Clone)]
pub struct DetectorModel {
    reference_points: Vec<Vec<f64>>,
    index: KdTree,
    pub m: usize,
    pub k: usize,
    pub alpha: f64,
    pub d_alpha: f64,
    pub phi: f64,
    pub m1_count: usize,
    pub partition_seed: u64,
    pub phi_convention: PhiConvention,
}

impl PartialEq for DetectorModel {
    fn eq(&self, other: &Self) -> bool {
        self.reference_points == other.reference_points
            && self.m == other.m
            && self.k == other.k
            && self.alpha.to_bits() == other.alpha.to_bits()
            && self.d_alpha.to_bits() == other.d_alpha.to_bits()
            && self.phi.to_bits() == other.phi.to_bits()
            && self.m1_count == other.m1_count
            && self.partition_seed == other.partition_seed
            && self.phi_convention == other.phi_convention
    }
}

/// Summary of a training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainingSummary {
    pub total_count: usize,
    pub m1_count: usize,
    pub m2_count: usize,
    pub m: usize,
    pub k: usize,
    pub alpha: f64,
    pub d_alpha: f64,
    pub max_knn_distance: f64,
    pub phi: f64,
    pub phi_convention: PhiConvention,
}

/// Nearest-rank `(1 − α)` percentile of an ascending slice (1-based index ⌈(1−α)·n⌉).
pub fn nearest_rank_percentile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    // the small slack keeps e.g. 0.95·2500 from rounding up to 2376
    let rank = ((1.0 - alpha) * n as f64 - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

/// Fits a model on nominal vectors.
pub fn train(dataset: &[FeatureVector], params: &TrainParams) -> Result<(DetectorModel, TrainingSummary)> {
    params.validate()?;
    let total = dataset.len();
    let min_size = 10usize.max((1.0 / params.alpha).ceil() as usize);
    if total < min_size {
        return Err(Error::Training(format!(
            "dataset has {total} vectors; at least {min_size} are needed for alpha = {}",
            params.alpha
        )));
    }
    let m = dataset[0].dim();
    if m == 0 {
        return Err(Error::Data("feature vectors must have at least one value".into()));
    }
    for v in dataset {
        if v.dim() != m {
            return Err(Error::Data(format!(
                "dimension mismatch: frame {} object {} has {} values, expected {m}",
                v.frame_id,
                v.object_id,
                v.dim()
            )));
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite value in frame {} object {}", v.frame_id, v.object_id)));
        }
    }

    let m1 = ((params.partition_fraction * total as f64).round() as usize).clamp(1, total - 1);
    let m2 = total - m1;
    if params.k > m2 {
        return Err(Error::Training(format!("k = {} exceeds the reference set size {m2}", params.k)));
    }
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.partition_seed);
    order.shuffle(&mut rng);
    let (held_out, reference) = order.split_at(m1);
    let reference_points: Vec<Vec<f64>> = reference.iter().map(|&i| dataset[i].values.clone()).collect();
    let index = KdTree::build(&reference_points)?;

    let mut distances = held_out
        .iter()
        .map(|&i| index.knn_distance(&dataset[i].values, params.k))
        .collect::<Result<Vec<f64>>>()?;
    distances.sort_by(f64::total_cmp);
    let d_alpha = nearest_rank_percentile(&distances, params.alpha);
    let max_d = *distances.last().expect("m1 >= 1");
    if max_d == 0.0 {
        return Err(Error::Training("degenerate nominal manifold: every kNN distance is zero".into()));
    }
    let phi = match params.phi_convention {
        PhiConvention::PowerMinus => powi(max_d, m) - powi(d_alpha, m),
        PhiConvention::RawDistance => max_d,
    };
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::Training(format!(
            "degenerate nominal manifold: evidence bound {phi} is not positive (d_alpha = {d_alpha}, max = {max_d})"
        )));
    }

    let model = DetectorModel {
        reference_points,
        index,
        m,
        k: params.k,
        alpha: params.alpha,
        d_alpha,
        phi,
        m1_count: m1,
        partition_seed: params.partition_seed,
        phi_convention: params.phi_convention,
    };
    let summary = TrainingSummary {
        total_count: total,
        m1_count: m1,
        m2_count: m2,
        m,
        k: params.k,
        alpha: params.alpha,
        d_alpha,
        max_knn_distance: max_d,
        phi,
        phi_convention: params.phi_convention,
    };
    Ok((model, summary))
}

/// `x^m` for a dimension count.
pub fn powi(x: f64, m: usize) -> f64 {
    x.powi(i32::try_from(m).unwrap_or(i32::MAX))
}

impl DetectorModel {
    /// Assembles a model from its stored fields, enforcing every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        reference_points: Vec<Vec<f64>>,
        k: usize,
        alpha: f64,
        d_alpha: f64,
        phi: f64,
        m1_count: usize,
        partition_seed: u64,
        phi_convention: PhiConvention,
    ) -> Result<Self> {
        let m = reference_points.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::Validation("m must be at least 1".into()));
        }
        if reference_points.iter().any(|p| p.len() != m) {
            return Err(Error::Validation("reference points have inconsistent dimensions".into()));
        }
        if reference_points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Validation("reference points contain non-finite values".into()));
        }
        if k == 0 || k > reference_points.len() {
            return Err(Error::Validation(format!("k = {k} must lie in 1..={}", reference_points.len())));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Validation(format!("alpha = {alpha} must lie in (0, 1)")));
        }
        if !(d_alpha >= 0.0) || !d_alpha.is_finite() {
            return Err(Error::Validation(format!("d_alpha = {d_alpha} must be finite and non-negative")));
        }
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::Validation(format!("phi = {phi} must be finite and positive")));
        }
        if m1_count == 0 {
            return Err(Error::Validation("m1_count must be positive".into()));
        }
        let index = KdTree::build(&reference_points)?;
        Ok(Self { reference_points, index, m, k, alpha, d_alpha, phi, m1_count, partition_seed, phi_convention })
    }

    pub fn reference_points(&self) -> &[Vec<f64>] {
        &self.reference_points
    }

    pub fn m2_count(&self) -> usize {
        self.reference_points.len()
    }

    /// `d_α^m`.
    pub fn d_alpha_pow(&self) -> f64 {
        powi(self.d_alpha, self.m)
    }

    /// kNN distance of `query` to the reference set.
    pub fn knn_distance(&self, query: &[f64]) -> Result<f64> {
        self.index.knn_distance(query, self.k)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            version: MODEL_VERSION,
            m: self.m,
            k: self.k,
            alpha: self.alpha,
            d_alpha: self.d_alpha,
            phi: self.phi,
            phi_convention: self.phi_convention,
            m1_count: self.m1_count,
            partition_seed: self.partition_seed,
            reference_points: self.reference_points.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).map_err(|e| Error::Internal(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        let version = value
            .get("version")
            .ok_or_else(|| Error::Parse { offset: 0, message: "missing version field".into() })?
            .as_u64()
            .ok_or_else(|| Error::Parse { offset: 0, message: "version must be a non-negative integer".into() })?;
        if version != MODEL_VERSION {
            return Err(Error::Version { found: version, expected: MODEL_VERSION });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Parse { offset: 0, message: e.to_string() })?;
        if file.m == 0 {
            return Err(Error::Validation("m must be at least 1".into()));
        }
        let model = Self::from_parts(
            file.reference_points,
            file.k,
            file.alpha,
            file.d_alpha,
            file.phi,
            file.m1_count,
            file.partition_seed,
            file.phi_convention,
        )?;
        if model.m != file.m {
            return Err(Error::Validation(format!("header m = {} but reference points have {} values", file.m, model.m)));
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u64,
    m: usize,
    k: usize,
    alpha: f64,
    d_alpha: f64,
    phi: f64,
    #[serde(default)]
    phi_convention: PhiConvention,
    m1_count: usize,
    partition_seed: u64,
    reference_points: Vec<Vec<f64>>,
}

/// Converts serde's line/column into a byte offset.
fn parse_error(text: &str, e: &serde_json::Error) -> Error {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i + 1 == e.line() {
            offset += e.column().saturating_sub(1).min(line.len());
            break;
        }
        offset += line.len();
    }
    Error::Parse { offset: offset.min(text.len()), message: e.to_string() }
}
