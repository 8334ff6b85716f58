use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::instance::{Instance, Point};
use crate::error::{Error, Result};
use crate::flow::FlowDistribution;
use crate::seed::{self, Rng};

/// Attempts before a degenerate (all points identical) draw becomes an error.
pub const MAX_NORMALIZATION_ATTEMPTS: usize = 100;

/// How the noise scale `lambda` of the mixed-Gaussian generator is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum LambdaMode {
    /// A fresh `lambda ~ U(0, lambda_max)` for every instance.
    PerInstance,
    /// One `lambda` shared by each consecutive block of `group_size` instances.
    Grouped { group_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedGaussian {
    pub lambda_max: f64,
    pub lambda_mode: LambdaMode,
}

impl Default for MixedGaussian {
    fn default() -> Self {
        Self { lambda_max: 1.0, lambda_mode: LambdaMode::PerInstance }
    }
}

#[derive(Debug, Clone)]
pub enum DistKind {
    UniformSquare,
    MixedGaussian(MixedGaussian),
    Flow(Arc<FlowDistribution>),
    Mixture { weights: Vec<f64>, components: Vec<InstanceDistribution> },
    /// Uniform draws from a fixed dataset.
    Empirical(Arc<Vec<Instance>>),
}

/// A distribution over instances of a fixed scale `n`.
#[derive(Debug, Clone)]
pub struct InstanceDistribution {
    pub scale: usize,
    pub kind: DistKind,
}

pub(crate) fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidStrategy("empty weight vector".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidStrategy(format!("negative or non-finite weight in {weights:?}")));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidStrategy(format!("weights sum to {s}, expected 1")));
    }
    Ok(())
}

/// Index drawn from a simplex by inverse CDF.
pub(crate) fn draw_index(weights: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

impl InstanceDistribution {
    pub fn uniform(scale: usize) -> Self {
        Self { scale, kind: DistKind::UniformSquare }
    }

    pub fn mixed_gaussian(scale: usize, params: MixedGaussian) -> Self {
        Self { scale, kind: DistKind::MixedGaussian(params) }
    }

    pub fn flow(scale: usize, flow: FlowDistribution) -> Self {
        Self { scale, kind: DistKind::Flow(Arc::new(flow)) }
    }

    pub fn empirical(instances: Vec<Instance>) -> Result<Self> {
        let scale = instances
            .first()
            .map(Instance::n)
            .ok_or_else(|| Error::InvalidDistribution("empty dataset".into()))?;
        if instances.iter().any(|i| i.n() != scale) {
            return Err(Error::InvalidDistribution("dataset mixes scales".into()));
        }
        Ok(Self { scale, kind: DistKind::Empirical(Arc::new(instances)) })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<InstanceDistribution>) -> Result<Self> {
        let d = Self {
            scale: components.first().map_or(0, |c| c.scale),
            kind: DistKind::Mixture { weights, components },
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(Error::InvalidDistribution(format!("scale {} < 2", self.scale)));
        }
        match &self.kind {
            DistKind::Mixture { weights, components } => {
                if components.is_empty() {
                    return Err(Error::InvalidDistribution("empty mixture".into()));
                }
                if weights.len() != components.len() {
                    return Err(Error::InvalidDistribution("mixture weight/component count mismatch".into()));
                }
                check_simplex(weights).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
                for c in components {
                    if c.scale != self.scale {
                        return Err(Error::InvalidDistribution("mixture components differ in scale".into()));
                    }
                    c.validate()?;
                }
            }
            DistKind::MixedGaussian(p) if !(p.lambda_max >= 0.0) => {
                return Err(Error::InvalidDistribution("lambda_max must be >= 0".into()));
            }
            DistKind::MixedGaussian(MixedGaussian { lambda_mode: LambdaMode::Grouped { group_size: 0 }, .. }) => {
                return Err(Error::InvalidDistribution("group_size must be >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match &self.kind {
            DistKind::UniformSquare => "uniform".into(),
            DistKind::MixedGaussian(p) => format!("mixed-gaussian(lambda_max={})", p.lambda_max),
            DistKind::Flow(_) => "flow".into(),
            DistKind::Mixture { components, .. } => format!("mixture[{}]", components.len()),
            DistKind::Empirical(d) => format!("dataset[{}]", d.len()),
        }
    }

    /// `count` instances; instance `i` depends only on `(seed, i)`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Instance>> {
        self.validate()?;
        (0..count as u64)
            .map(|i| {
                let mut rng = seed::rng(seed::derive2(seed, seed::stream::SAMPLE, i));
                self.draw(&mut rng, i, seed)
            })
            .collect()
    }

    /// Like [`sample`](Self::sample) but also reports which mixture component
    /// produced each instance (`0` for non-mixtures).
    pub fn sample_tagged(&self, count: usize, seed: u64) -> Result<Vec<(usize, Instance)>> {
        self.validate()?;
        (0..count as u64)
            .map(|i| {
                let mut rng = seed::rng(seed::derive2(seed, seed::stream::SAMPLE, i));
                match &self.kind {
                    DistKind::Mixture { weights, components } => {
                        let k = draw_index(weights, &mut rng);
                        Ok((k, components[k].draw(&mut rng, i, seed)?))
                    }
                    _ => Ok((0, self.draw(&mut rng, i, seed)?)),
                }
            })
            .collect()
    }

    fn draw(&self, rng: &mut Rng, index: u64, seed: u64) -> Result<Instance> {
        match &self.kind {
            DistKind::UniformSquare => {
                Instance::new((0..self.scale).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect())
            }
            DistKind::MixedGaussian(p) => {
                let lambda = match p.lambda_mode {
                    LambdaMode::PerInstance => rng.random::<f64>() * p.lambda_max,
                    LambdaMode::Grouped { group_size } => {
                        let group = index / group_size as u64;
                        let mut g = seed::rng(seed::derive2(seed, seed::stream::TARGET, group));
                        g.random::<f64>() * p.lambda_max
                    }
                };
                mixed_gaussian_instance(self.scale, lambda, rng)
            }
            DistKind::Flow(flow) => Instance::new(flow.sample_points(self.scale, rng)?),
            DistKind::Mixture { weights, components } => {
                let k = draw_index(weights, rng);
                components[k].draw(rng, index, seed)
            }
            DistKind::Empirical(data) => Ok(data[rng.random_range(0..data.len())].clone()),
        }
    }
}

/// Jointly min-max normalises the points into the unit square.
///
/// Returns `None` when all coordinates coincide.
pub fn normalize_joint(points: &[Point]) -> Option<Vec<Point>> {
    let (lo, hi) = points
        .iter()
        .flat_map(|p| p.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return None;
    }
    Some(
        points
            .iter()
            .map(|p| [((p[0] - lo) / span).clamp(0.0, 1.0), ((p[1] - lo) / span).clamp(0.0, 1.0)])
            .collect(),
    )
}

/// One mixed-Gaussian instance with noise scale `lambda`:
/// `x ~ U([0,1]^2)`, `y ~ N(0, diag(s1, s2))` with `s_k ~ U[0, lambda]`,
/// `z = x + y`, then joint min-max normalisation.
pub fn mixed_gaussian_instance(n: usize, lambda: f64, rng: &mut Rng) -> Result<Instance> {
    for _ in 0..MAX_NORMALIZATION_ATTEMPTS {
        let var = [rng.random::<f64>() * lambda, rng.random::<f64>() * lambda];
        let sd = [var[0].sqrt(), var[1].sqrt()];
        let raw: Vec<Point> = (0..n)
            .map(|_| {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                let e0: f64 = StandardNormal.sample(rng);
                let e1: f64 = StandardNormal.sample(rng);
                [x[0] + sd[0] * e0, x[1] + sd[1] * e1]
            })
            .collect();
        if let Some(points) = normalize_joint(&raw) {
            return Instance::new(points);
        }
    }
    Err(Error::DegenerateNormalization(MAX_NORMALIZATION_ATTEMPTS))
}

/// `count` mixed-Gaussian instances of scale `n` with per-instance `lambda`.
pub fn sample_mixed_gaussian(n: usize, count: usize, lambda_max: f64, seed: u64) -> Result<Vec<Instance>> {
    InstanceDistribution::mixed_gaussian(n, MixedGaussian { lambda_max, lambda_mode: LambdaMode::PerInstance })
        .sample(count, seed)
}

/// Samples `count` instances from any distribution.
pub fn sample_from(dist: &InstanceDistribution, count: usize, seed: u64) -> Result<Vec<Instance>> {
    dist.sample(count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_instances_span_the_unit_interval() {
        for inst in sample_mixed_gaussian(12, 50, 1.0, 3).unwrap() {
            let all: Vec<f64> = inst.points().iter().flat_map(|p| p.iter().copied()).collect();
            let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(lo, 0.0);
            assert_eq!(hi, 1.0);
        }
    }

    #[test]
    fn zero_lambda_is_normalized_uniform() {
        let got = sample_mixed_gaussian(10, 5, 0.0, 8).unwrap();
        // replay the raw uniform draws with the same stream
        for (i, inst) in got.iter().enumerate() {
            let mut rng = seed::rng(seed::derive2(8, seed::stream::SAMPLE, i as u64));
            let _lambda: f64 = rng.random();
            let _v: [f64; 2] = [rng.random(), rng.random()];
            let raw: Vec<Point> = (0..10)
                .map(|_| {
                    let x = [rng.random::<f64>(), rng.random::<f64>()];
                    let _: f64 = StandardNormal.sample(&mut rng);
                    let _: f64 = StandardNormal.sample(&mut rng);
                    x
                })
                .collect();
            assert!(raw.iter().flatten().all(|c| (0.0..=1.0).contains(c)));
            assert_eq!(inst.points(), normalize_joint(&raw).unwrap().as_slice());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = InstanceDistribution::mixed_gaussian(7, MixedGaussian::default());
        assert_eq!(d.sample(4, 9).unwrap(), d.sample(4, 9).unwrap());
        assert_ne!(d.sample(4, 9).unwrap(), d.sample(4, 10).unwrap());
    }

    #[test]
    fn grouped_lambda_is_shared_within_groups() {
        let mode = LambdaMode::Grouped { group_size: 3 };
        let d = InstanceDistribution::mixed_gaussian(5, MixedGaussian { lambda_max: 1.0, lambda_mode: mode });
        assert_eq!(d.sample(6, 1).unwrap().len(), 6);
        let bad = InstanceDistribution::mixed_gaussian(
            5,
            MixedGaussian { lambda_max: 1.0, lambda_mode: LambdaMode::Grouped { group_size: 0 } },
        );
        assert!(bad.sample(1, 0).is_err());
    }

    #[test]
    fn degenerate_points_fail_normalization() {
        assert!(normalize_joint(&[[0.3, 0.3], [0.3, 0.3]]).is_none());
    }

    #[test]
    fn mixture_validation() {
        assert!(InstanceDistribution::mixture(vec![], vec![]).is_err());
        let u = InstanceDistribution::uniform(5);
        assert!(InstanceDistribution::mixture(vec![0.5, 0.6], vec![u.clone(), u.clone()]).is_err());
        assert!(InstanceDistribution::mixture(vec![1.0], vec![InstanceDistribution::uniform(6)]).is_ok());
        assert!(InstanceDistribution::mixture(vec![0.5, 0.5], vec![u, InstanceDistribution::uniform(6)]).is_err());
    }
}
