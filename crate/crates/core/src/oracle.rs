//! Reference policy: hint-guided exploration in the first trial, then replay
//! of the merged trajectory.

use crate::env::{Env, EpisodeLog, TaskParams};
use crate::error::{Error, Result};
use crate::types::{hint_direction, Direction, Maze, Move, PanelDescription};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OracleMemory {
    /// First-trial trajectory as merged (direction, units) runs.
    pub segments: Vec<(Direction, u32)>,
    /// Replay plan built once the first successful trial ends.
    pub plan: Vec<Move>,
    replaying: bool,
    cursor: usize,
}

impl OracleMemory {
    pub fn is_replaying(&self) -> bool {
        self.replaying
    }

    /// Records a valid exploration move, merging it into the last run.
    pub fn record(&mut self, mv: &Move) {
        if self.replaying {
            return;
        }
        let units = mv.displacement();
        if units == 0 {
            return;
        }
        match self.segments.last_mut() {
            Some((d, n)) if *d == mv.direction => *n += units,
            _ => self.segments.push((mv.direction, units)),
        }
    }

    /// Called at every trial boundary.
    pub fn end_trial(&mut self, reached_goal: bool, max_opt_len: usize) {
        if !self.replaying && reached_goal {
            self.plan = merged_plan(&self.segments, max_opt_len);
            self.replaying = true;
        }
        if !self.replaying {
            self.segments.clear();
        }
        self.cursor = 0;
    }
}

/// Splits runs into options of at most `3 * max_opt_len` units.
pub fn merged_plan(segments: &[(Direction, u32)], max_opt_len: usize) -> Vec<Move> {
    let cap = 3 * max_opt_len as u32;
    let mut plan = Vec::new();
    for (d, n) in segments {
        let mut left = *n;
        while left > 0 {
            let chunk = left.min(cap);
            plan.push(Move::greedy(*d, chunk));
            left -= chunk;
        }
    }
    plan
}

/// The exploration move for one panel.
pub fn explore_move(desc: &PanelDescription, max_opt_len: usize) -> Result<Move> {
    let goal = desc.goal_offset();
    let direction = match desc.hint {
        Some(h) => hint_direction(h),
        None => {
            let mut cands = Direction::ALL.into_iter().filter(|d| desc.wall(*d) > 0 && d.component(goal) > 0);
            match (cands.next(), cands.next()) {
                (Some(d), None) => d,
                (None, _) => {
                    return Err(Error::OracleAssumption(format!("no open direction toward goal offset {goal:?}")))
                }
                (Some(a), Some(b)) => {
                    return Err(Error::OracleAssumption(format!(
                        "both {a} and {b} lead toward the goal without a hint"
                    )))
                }
            }
        }
    };
    let mut units = desc.wall(direction) as u32;
    if let Some(c) = desc.crossing(direction) {
        units = units.min(c as u32);
    }
    let along = direction.component(goal);
    if along > 0 {
        units = units.min(along as u32);
    }
    units = units.min(3 * max_opt_len as u32);
    if units == 0 {
        return Err(Error::OracleAssumption(format!("hint points into a wall ({direction})")));
    }
    Ok(Move::greedy(direction, units))
}

/// Next oracle move: exploration before the first success, replay after.
pub fn oracle_decide(desc: &PanelDescription, mem: &mut OracleMemory, params: &TaskParams) -> Result<Move> {
    if mem.replaying {
        if let Some(m) = mem.plan.get(mem.cursor) {
            mem.cursor += 1;
            return Ok(m.clone());
        }
        return Err(Error::OracleAssumption("replay plan exhausted before the goal".into()));
    }
    explore_move(desc, params.max_opt_len)
}

/// Optimal number of options from start to goal.
pub fn optimal_plan_length(maze: &Maze, max_opt_len: usize) -> usize {
    segments_plan_length(&maze.path_segments(), max_opt_len)
}

pub fn segments_plan_length(segments: &[(Direction, u32)], max_opt_len: usize) -> usize {
    let cap = 3 * max_opt_len as u32;
    segments.iter().map(|(_, d)| d.div_ceil(cap) as usize).sum()
}

/// Feeds the oracle from any observation source (in-process or remote).
#[derive(Clone, Debug)]
pub struct OracleAgent {
    params: TaskParams,
    pub memory: OracleMemory,
    pending: Option<Move>,
}

impl OracleAgent {
    pub fn new(params: TaskParams) -> Self {
        OracleAgent { params, memory: OracleMemory::default(), pending: None }
    }

    pub fn act(&mut self, desc: &PanelDescription) -> Result<Move> {
        let m = oracle_decide(desc, &mut self.memory, &self.params)?;
        self.pending = Some(m.clone());
        Ok(m)
    }

    /// Reports the outcome of the last action.
    pub fn feedback(&mut self, valid: bool, trial_done: bool, reached_goal: bool) {
        if let Some(m) = self.pending.take() {
            if valid {
                self.memory.record(&m);
            }
        }
        if trial_done {
            self.memory.end_trial(reached_goal, self.params.max_opt_len);
        }
    }
}

/// Runs one full oracle episode in process.
pub fn run_oracle_episode(maze: &Maze, params: &TaskParams) -> Result<EpisodeLog> {
    let mut env = Env::new(maze.clone(), params.clone())?;
    let mut obs = env.reset()?;
    let mut agent = OracleAgent::new(params.clone());
    while !env.is_done() {
        let mv = agent.act(&obs.desc)?;
        let out = env.step(&mv)?;
        agent.feedback(out.info.valid, out.trial_done, out.info.reached_goal);
        obs = out.obs;
    }
    Ok(env.into_log())
}
