//! Valid-move ratio, goal rate, planning efficiency and their aggregation.

use serde::{Deserialize, Serialize};

use crate::env::{episode_return, EpisodeLog};
use crate::error::{Error, Result};
use crate::formats::LoggedEpisode;
use crate::mazegen::Problem;
use crate::oracle::optimal_plan_length;

pub fn valid_ratio(log: &EpisodeLog) -> Result<f64> {
    if log.steps.is_empty() {
        return Err(Error::UndefinedMetric("valid ratio of an empty log".into()));
    }
    let valid = log.steps.iter().filter(|s| s.valid).count();
    Ok(valid as f64 / log.steps.len() as f64)
}

/// Share of the `n` trials that reached the goal; unplayed trials count 0.
pub fn goal_rate(log: &EpisodeLog, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let reached = log.trials.iter().take(n).filter(|t| t.reached_goal).count();
    reached as f64 / n as f64
}

/// Mean of `tau_star / len` over the `n` trial slots; unplayed slots count 0.
pub fn efficiency(log: &EpisodeLog, tau_star: usize, n: usize) -> Result<f64> {
    if tau_star == 0 {
        return Err(Error::Domain("tau_star must be at least 1".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for t in log.trials.iter().take(n) {
        if t.reached_goal && t.length < tau_star {
            return Err(Error::UndefinedMetric(format!(
                "a trial reached the goal in {} steps, below the optimum {tau_star}",
                t.length
            )));
        }
        if t.length > 0 {
            sum += tau_star as f64 / t.length as f64;
        }
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub problem_id: String,
    pub valid_ratio: f64,
    pub goal_rate: f64,
    pub efficiency: f64,
    pub episode_return: f64,
    pub steps: usize,
    pub trials: usize,
}

pub fn episode_metrics(
    problem_id: &str,
    log: &EpisodeLog,
    tau_star: usize,
    n: usize,
    gamma: f64,
) -> Result<EpisodeMetrics> {
    Ok(EpisodeMetrics {
        problem_id: problem_id.to_string(),
        valid_ratio: valid_ratio(log)?,
        goal_rate: goal_rate(log, n),
        efficiency: efficiency(log, tau_star, n)?,
        episode_return: episode_return(log, gamma),
        steps: log.steps.len(),
        trials: log.trials.len(),
    })
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub episodes: Vec<EpisodeMetrics>,
    pub valid_ratio: Summary,
    pub goal_rate: Summary,
    pub efficiency: Summary,
    pub episode_return: Summary,
}

impl Report {
    pub fn new(episodes: Vec<EpisodeMetrics>) -> Report {
        let col =
            |f: fn(&EpisodeMetrics) -> f64| -> Summary { Summary::of(&episodes.iter().map(f).collect::<Vec<_>>()) };
        Report {
            valid_ratio: col(|e| e.valid_ratio),
            goal_rate: col(|e| e.goal_rate),
            efficiency: col(|e| e.efficiency),
            episode_return: col(|e| e.episode_return),
            episodes,
        }
    }

    pub fn text(&self) -> String {
        format!(
            "episodes: {}\nvalid ratio: {}\ngoal rate: {}\nefficiency: {}\nreturn: {}\n",
            self.episodes.len(),
            self.valid_ratio,
            self.goal_rate,
            self.efficiency,
            self.episode_return
        )
    }

    /// One header line, one line per episode.
    pub fn tsv(&self) -> String {
        let mut out = String::from("problem_id\tvalid_ratio\tgoal_rate\tefficiency\treturn\tsteps\ttrials\n");
        for e in &self.episodes {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.problem_id, e.valid_ratio, e.goal_rate, e.efficiency, e.episode_return, e.steps, e.trials
            ));
        }
        out
    }
}

/// Scores logged episodes against the problems they ran on, using each
/// episode's own task parameters.
pub fn evaluate(episodes: &[LoggedEpisode], problems: &[Problem]) -> Result<Report> {
    let mut out = Vec::with_capacity(episodes.len());
    for ep in episodes {
        let problem = problems
            .iter()
            .find(|p| p.id == ep.problem_id)
            .ok_or_else(|| Error::Domain(format!("log names unknown problem {:?}", ep.problem_id)))?;
        let tau_star = optimal_plan_length(&problem.maze, ep.params.max_opt_len);
        out.push(episode_metrics(&ep.problem_id, &ep.log, tau_star, ep.params.max_trials, ep.params.gamma)?);
    }
    Ok(Report::new(out))
}
