//! Multi-episode evaluation with confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::marl::train::mix_seed;
use crate::policy::{run_episode, Controller};
use crate::sim::{Env, MetricsReport};

/// Sample mean with the half-width of its two-sided 95% t-interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// NaN for fewer than two samples.
    pub ci95: f64,
    pub std: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, ci95: f64::NAN, std: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Self { mean, ci95: f64::NAN, std: 0.0, n };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df >= 1").inverse_cdf(0.975);
        Self { mean, ci95: t * std / (n as f64).sqrt(), std, n }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95
    }

    /// Whether the two 95% intervals share any point.
    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// Per-metric estimates over a set of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub pick_rate_lines_per_hour: Estimate,
    pub agv_distance_m: Estimate,
    pub picker_distance_m: Estimate,
    pub agv_idle_s: Estimate,
    pub picker_idle_s: Estimate,
    pub mean_lead_time_s: Estimate,
}

impl Aggregate {
    pub fn from_reports(reports: &[MetricsReport]) -> Self {
        let col = |f: fn(&MetricsReport) -> f64| {
            Estimate::from_samples(&reports.iter().map(f).collect::<Vec<_>>())
        };
        Self {
            episodes: reports.len(),
            pick_rate_lines_per_hour: col(|r| r.pick_rate_lines_per_hour),
            agv_distance_m: col(|r| r.agv_distance_m),
            picker_distance_m: col(|r| r.picker_distance_m),
            agv_idle_s: col(|r| r.agv_idle_s),
            picker_idle_s: col(|r| r.picker_idle_s),
            mean_lead_time_s: col(|r| r.mean_lead_time_s),
        }
    }

    /// `(metric name, estimate)` in the column order of the per-episode table.
    pub fn rows(&self) -> [(&'static str, Estimate); 6] {
        [
            ("pick_rate_lines_per_hour", self.pick_rate_lines_per_hour),
            ("agv_distance_m", self.agv_distance_m),
            ("picker_distance_m", self.picker_distance_m),
            ("agv_idle_s", self.agv_idle_s),
            ("picker_idle_s", self.picker_idle_s),
            ("mean_lead_time_s", self.mean_lead_time_s),
        ]
    }
}

/// Seed of episode `e` in a run seeded with `seed`.
pub fn episode_seed(seed: u64, e: usize) -> u64 {
    mix_seed(seed, e as u64)
}

/// Runs `episodes` episodes and aggregates their reports.
pub fn evaluate<C: Controller + ?Sized>(
    env: &mut Env,
    controller: &mut C,
    episodes: usize,
    seed: u64,
) -> Result<(Vec<MetricsReport>, Aggregate)> {
    if episodes == 0 {
        return Err(Error::InvalidParameter("at least one episode is required".into()));
    }
    let reports = (0..episodes)
        .map(|e| run_episode(env, controller, episode_seed(seed, e)))
        .collect::<Result<Vec<_>>>()?;
    let agg = Aggregate::from_reports(&reports);
    Ok((reports, agg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_interval() {
        // t_{0.975, 4} = 2.7764451
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(e.mean, 3.0);
        let want = 2.776_445_105 * (2.5f64).sqrt() / 5f64.sqrt();
        assert!((e.ci95 - want).abs() < 1e-6);
    }

    #[test]
    fn degenerate_samples() {
        assert!(Estimate::from_samples(&[2.0]).ci95.is_nan());
        assert_eq!(Estimate::from_samples(&[2.0, 2.0]).ci95, 0.0);
    }

    #[test]
    fn overlap() {
        let a = Estimate { mean: 1.0, ci95: 0.5, std: 0.0, n: 2 };
        let b = Estimate { mean: 2.0, ci95: 0.4, std: 0.0, n: 2 };
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&Estimate { ci95: 0.6, ..b }));
    }
}
