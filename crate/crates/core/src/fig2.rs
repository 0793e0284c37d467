//! Reputation trajectories under repeated human evaluations at fixed
//! evaluator quality and evaluation spacing.
//!
//! Three phases are produced for every (evaluator weight, duration) pair:
//!
//! - `growth`: `n_steps` perfect answers (score 1) starting from 0.5
//! - `decline`: `n_steps` worst answers (score 0) starting where growth ended
//! - `decline_sym`: `n_steps` worst answers starting from 0.5, the mirror
//!   image of `growth`
//!
//! The trust threshold is held at 0.5, the mean of a population that stays
//! at its bootstrap value.

use serde::{Deserialize, Serialize};

use crate::reputation::{self, HyperParams, ReputationError};

pub const START_REPUTATION: f64 = 0.5;
pub const POPULATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2Config {
    /// Evaluator-quality levels (the weight before the duration factor).
    pub wh_levels: Vec<f64>,
    /// Minutes between consecutive evaluations.
    pub d_levels: Vec<f64>,
    pub n_steps: usize,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Self {
            wh_levels: vec![0.25, 0.5, 0.75, 1.0],
            d_levels: vec![60.0, 360.0, 1440.0],
            n_steps: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Growth,
    Decline,
    DeclineSym,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Growth => "growth",
            Phase::Decline => "decline",
            Phase::DeclineSym => "decline_sym",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub phase: Phase,
    pub wh: f64,
    pub d_minutes: f64,
    pub omega: f64,
    /// 0 is the starting reputation, before any evaluation.
    pub step: usize,
    pub reputation: f64,
}

fn replay(start: f64, score: f64, omega: f64, n: usize, hp: &HyperParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut r = start;
    out.push(r);
    for _ in 0..n {
        r = reputation::update_reputation(r, score, omega, POPULATION_THRESHOLD, hp);
        out.push(r);
    }
    out
}

pub fn run_fig2(hp: &HyperParams, cfg: &Fig2Config) -> Result<Vec<TrajectoryPoint>, ReputationError> {
    hp.validate()?;
    for &wh in &cfg.wh_levels {
        if !(0.0..=1.0).contains(&wh) {
            return Err(ReputationError::InvalidInput(format!("W^h level {wh} outside [0, 1]")));
        }
    }
    let mut points = Vec::new();
    for &wh in &cfg.wh_levels {
        for &d in &cfg.d_levels {
            let fd = reputation::duration_factor(reputation::effective_duration(d, hp), hp)?;
            let omega = wh * fd;
            let growth = replay(START_REPUTATION, 1.0, omega, cfg.n_steps, hp);
            let peak = *growth.last().unwrap();
            let decline = replay(peak, 0.0, omega, cfg.n_steps, hp);
            let mirror = replay(START_REPUTATION, 0.0, omega, cfg.n_steps, hp);
            for (phase, series) in [
                (Phase::Growth, growth),
                (Phase::Decline, decline),
                (Phase::DeclineSym, mirror),
            ] {
                points.extend(series.into_iter().enumerate().map(|(step, reputation)| TrajectoryPoint {
                    phase,
                    wh,
                    d_minutes: d,
                    omega,
                    step,
                    reputation,
                }));
            }
        }
    }
    Ok(points)
}

pub const CSV_HEADER: &str = "phase,wh,d_minutes,omega,step,reputation";

pub fn to_csv(points: &[TrajectoryPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.phase.as_str(),
            p.wh,
            p.d_minutes,
            p.omega,
            p.step,
            p.reputation
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series<'a>(points: &'a [TrajectoryPoint], phase: Phase, wh: f64, d: f64) -> Vec<f64> {
        points
            .iter()
            .filter(|p| p.phase == phase && p.wh == wh && p.d_minutes == d)
            .map(|p| p.reputation)
            .collect()
    }

    #[test]
    fn growth_is_monotone_and_ordered_by_weight() {
        let cfg = Fig2Config::default();
        let points = run_fig2(&HyperParams::default(), &cfg).unwrap();
        for &d in &cfg.d_levels {
            let mut prev: Option<Vec<f64>> = None;
            for &wh in &cfg.wh_levels {
                let s = series(&points, Phase::Growth, wh, d);
                assert_eq!(s.len(), cfg.n_steps + 1);
                assert!(s.windows(2).all(|w| w[1] > w[0]));
                if let Some(p) = prev {
                    assert!(s.iter().zip(&p).all(|(hi, lo)| hi >= lo));
                }
                prev = Some(s);
            }
        }
    }

    #[test]
    fn drop_step_exceeds_growth_step_at_equal_distance() {
        let hp = HyperParams::default();
        let points = run_fig2(&hp, &Fig2Config::default()).unwrap();
        let g = series(&points, Phase::Growth, 1.0, 1440.0);
        let d = series(&points, Phase::DeclineSym, 1.0, 1440.0);
        // first step: both start 0.5 away from their target
        let gain = g[1] - g[0];
        let loss = d[0] - d[1];
        let omega = reputation::duration_factor(1440.0, &hp).unwrap();
        assert!((gain - hp.psi * omega * 0.5).abs() < 1e-12);
        assert!((loss - hp.xi * omega * 0.5).abs() < 1e-12);
        assert!(loss > gain);
    }

    #[test]
    fn csv_shape() {
        let cfg = Fig2Config {
            wh_levels: vec![1.0],
            d_levels: vec![1440.0],
            n_steps: 2,
        };
        let csv = to_csv(&run_fig2(&HyperParams::default(), &cfg).unwrap());
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 3 * 3);
        assert!(lines[1].starts_with("growth,1,1440,"));
    }

    #[test]
    fn rejects_out_of_range_levels() {
        let cfg = Fig2Config {
            wh_levels: vec![1.5],
            ..Fig2Config::default()
        };
        assert!(run_fig2(&HyperParams::default(), &cfg).is_err());
    }
}
