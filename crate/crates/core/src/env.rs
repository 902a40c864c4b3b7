//! Episode/trial state machine and the symbolic observation encoder.

use serde::{Deserialize, Serialize};

use crate::concept::{describe_state, transition};
use crate::error::{Error, Result};
use crate::types::{Direction, HintSymbol, Maze, Move, PanelDescription, Position, MAX_DIGIT};

pub const SLOTS: usize = 11;
pub const CATEGORIES: usize = 19;
const GOAL_X_SLOT: usize = 8;
const GOAL_Y_SLOT: usize = 9;
const HINT_SLOT: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    /// L: step budget of one episode.
    pub max_episode_steps: usize,
    /// N: trial budget of one episode.
    pub max_trials: usize,
    /// H: step budget of one trial.
    pub max_trial_steps: usize,
    pub gamma: f64,
    pub goal_reward: f64,
    pub invalid_penalty: f64,
    /// Reward per unit decrease of the Manhattan distance to the goal.
    pub shaping_coeff: f64,
    pub max_opt_len: usize,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            max_episode_steps: 500,
            max_trials: 10,
            max_trial_steps: 200,
            gamma: 0.95,
            goal_reward: 100.0,
            invalid_penalty: -5.0,
            shaping_coeff: 1.0,
            max_opt_len: 5,
        }
    }
}

impl TaskParams {
    pub fn with_max_opt_len(max_opt_len: usize) -> Self {
        TaskParams { max_opt_len, ..TaskParams::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_episode_steps == 0 || self.max_trials == 0 || self.max_trial_steps == 0 || self.max_opt_len == 0 {
            return Err(Error::Domain("step, trial and option budgets must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Domain(format!("gamma {} outside (0,1]", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub trial: usize,
    /// Step index within the trial.
    pub t: usize,
    pub desc_before: PanelDescription,
    #[serde(rename = "move")]
    pub mv: Move,
    pub valid: bool,
    pub reward: f64,
    /// Panel at the landing cell, before any respawn.
    pub desc_after: PanelDescription,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub length: usize,
    pub reached_goal: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
    pub trials: Vec<TrialSummary>,
}

impl EpisodeLog {
    pub fn trial_steps(&self, trial: usize) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(move |s| s.trial == trial)
    }
}

/// Discounted return of an episode: trial `i` is discounted by gamma raised to
/// the summed lengths of the earlier trials, and step `t` within it by gamma^t.
pub fn episode_return(log: &EpisodeLog, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut offset = 0usize;
    for (i, trial) in log.trials.iter().enumerate() {
        let inner: f64 = log.trial_steps(i).map(|s| gamma.powi(s.t as i32) * s.reward).sum();
        total += gamma.powi(offset as i32) * inner;
        offset += trial.length;
    }
    total
}

/// An 11-row one-hot matrix, optionally widened by a slot-index one-hot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicObs {
    pub cols: usize,
    pub data: Vec<u8>,
}

impl SymbolicObs {
    pub fn shape(&self) -> (usize, usize) {
        (SLOTS, self.cols)
    }

    pub fn row(&self, slot: usize) -> &[u8] {
        &self.data[slot * self.cols..(slot + 1) * self.cols]
    }

    pub fn augmented(&self) -> bool {
        self.cols == CATEGORIES + SLOTS
    }

    pub fn from_flat(data: Vec<u8>) -> Result<SymbolicObs> {
        let cols = data.len() / SLOTS;
        if !data.len().is_multiple_of(SLOTS) || (cols != CATEGORIES && cols != CATEGORIES + SLOTS) {
            return Err(Error::Encoding(format!("{} values do not form 11x19 or 11x30", data.len())));
        }
        Ok(SymbolicObs { cols, data })
    }
}

fn signed_category(v: i32) -> Result<usize> {
    if v.unsigned_abs() > MAX_DIGIT as u32 {
        return Err(Error::Encoding(format!("magnitude {v} outside -9..=9")));
    }
    Ok((v + 9) as usize)
}

pub fn encode_symbolic(desc: &PanelDescription, index_augmented: bool) -> Result<SymbolicObs> {
    let cols = if index_augmented { CATEGORIES + SLOTS } else { CATEGORIES };
    let mut data = vec![0u8; SLOTS * cols];
    let mut set = |slot: usize, cat: usize| data[slot * cols + cat] = 1;
    for d in Direction::ALL {
        let i = d.index();
        if desc.wall[i] != 0 {
            set(i, signed_category(desc.wall[i] as i32)?);
        }
        if let Some(c) = desc.crossing[i] {
            if c == 0 {
                return Err(Error::Encoding(format!("zero crossing toward {d}")));
            }
            set(4 + i, signed_category(c as i32)?);
        }
    }
    for (slot, v) in [(GOAL_X_SLOT, desc.goal[0]), (GOAL_Y_SLOT, desc.goal[1])] {
        if v != 0 {
            set(slot, signed_category(v as i32)?);
        }
    }
    if let Some(h) = desc.hint {
        set(HINT_SLOT, h.index());
    }
    if index_augmented {
        for slot in 0..SLOTS {
            set(slot, CATEGORIES + slot);
        }
    }
    Ok(SymbolicObs { cols, data })
}

/// Inverse of [`encode_symbolic`].
pub fn decode_symbolic(obs: &SymbolicObs) -> Result<PanelDescription> {
    if obs.data.len() != SLOTS * obs.cols || obs.cols < CATEGORIES {
        return Err(Error::Encoding("malformed observation shape".into()));
    }
    let hot = |slot: usize| -> Result<Option<usize>> {
        let row = &obs.row(slot)[..CATEGORIES];
        let mut ones = row.iter().enumerate().filter(|(_, v)| **v != 0);
        let first = ones.next().map(|(i, _)| i);
        if ones.next().is_some() {
            return Err(Error::Encoding(format!("slot {slot} is not one-hot")));
        }
        if row.iter().any(|v| *v > 1) {
            return Err(Error::Encoding(format!("slot {slot} holds a non-binary value")));
        }
        Ok(first)
    };
    let positive = |slot: usize| -> Result<Option<u8>> {
        match hot(slot)? {
            None => Ok(None),
            Some(c) if c > 9 => Ok(Some((c - 9) as u8)),
            Some(c) => Err(Error::Encoding(format!("slot {slot} holds non-positive value {}", c as i32 - 9))),
        }
    };
    let mut desc = PanelDescription::default();
    for i in 0..4 {
        desc.wall[i] = positive(i)?.unwrap_or(0);
        desc.crossing[i] = positive(4 + i)?;
    }
    desc.goal[0] = hot(GOAL_X_SLOT)?.map_or(0, |c| c as i8 - 9);
    desc.goal[1] = hot(GOAL_Y_SLOT)?.map_or(0, |c| c as i8 - 9);
    desc.hint = match hot(HINT_SLOT)? {
        None => None,
        Some(i) => {
            Some(*HintSymbol::ALL.get(i).ok_or_else(|| Error::Encoding(format!("hint category {i} out of range")))?)
        }
    };
    Ok(desc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub desc: PanelDescription,
    pub symbolic: SymbolicObs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInfo {
    pub valid: bool,
    /// Trial the step belonged to.
    pub trial_index: usize,
    pub reached_goal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub trial_done: bool,
    pub episode_done: bool,
    pub info: StepInfo,
}

/// One agent's episode on one maze.
#[derive(Clone, Debug)]
pub struct Env {
    maze: Maze,
    params: TaskParams,
    index_augmented: bool,
    pos: Position,
    trial_steps: usize,
    total_steps: usize,
    done: bool,
    log: EpisodeLog,
}

impl Env {
    pub fn new(maze: Maze, params: TaskParams) -> Result<Env> {
        params.validate()?;
        if !maze.is_open(maze.start) {
            return Err(Error::NotOpen(maze.start));
        }
        Ok(Env {
            pos: maze.start,
            maze,
            params,
            index_augmented: false,
            trial_steps: 0,
            total_steps: 0,
            done: false,
            log: EpisodeLog::default(),
        })
    }

    pub fn set_index_augmented(&mut self, on: bool) {
        self.index_augmented = on;
    }

    pub fn maze(&self) -> &Maze {
        &self.maze
    }

    pub fn params(&self) -> &TaskParams {
        &self.params
    }

    pub fn position(&self) -> Position {
        self.pos
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn trial_index(&self) -> usize {
        self.log.trials.len()
    }

    /// Starts a fresh episode at the maze start.
    pub fn reset(&mut self) -> Result<Observation> {
        self.pos = self.maze.start;
        self.trial_steps = 0;
        self.total_steps = 0;
        self.done = false;
        self.log = EpisodeLog::default();
        self.observe()
    }

    pub fn observe(&self) -> Result<Observation> {
        let desc = describe_state(&self.maze, self.pos)?;
        Ok(Observation { symbolic: encode_symbolic(&desc, self.index_augmented)?, desc })
    }

    pub fn step(&mut self, mv: &Move) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Protocol("step after episode end".into()));
        }
        if mv.primitives.is_empty() || mv.primitives.len() > self.params.max_opt_len {
            return Err(Error::Protocol(format!(
                "option length {} outside 1..={}",
                mv.primitives.len(),
                self.params.max_opt_len
            )));
        }
        let mv = Move::new(mv.direction, mv.primitives.clone())?;
        let desc_before = describe_state(&self.maze, self.pos)?;
        let tr = transition(&self.maze, self.pos, &mv)?;
        let goal = self.maze.goal;
        let closer = self.pos.manhattan(goal) - tr.new_pos.manhattan(goal);
        let reached = tr.new_pos == goal;
        let mut reward = self.params.shaping_coeff * closer as f64;
        if !tr.valid {
            reward += self.params.invalid_penalty;
        }
        if reached {
            reward += self.params.goal_reward;
        }
        let desc_after = describe_state(&self.maze, tr.new_pos)?;
        let trial = self.trial_index();
        self.log.steps.push(StepRecord {
            trial,
            t: self.trial_steps,
            desc_before,
            mv,
            valid: tr.valid,
            reward,
            desc_after,
        });
        self.pos = tr.new_pos;
        self.trial_steps += 1;
        self.total_steps += 1;

        let out_of_steps = self.total_steps >= self.params.max_episode_steps;
        let trial_done = reached || self.trial_steps >= self.params.max_trial_steps || out_of_steps;
        if trial_done {
            self.log.trials.push(TrialSummary { length: self.trial_steps, reached_goal: reached });
            self.trial_steps = 0;
            self.pos = self.maze.start;
        }
        self.done = out_of_steps || self.log.trials.len() >= self.params.max_trials;
        Ok(StepOutcome {
            obs: self.observe()?,
            reward,
            trial_done,
            episode_done: self.done,
            info: StepInfo { valid: tr.valid, trial_index: trial, reached_goal: reached },
        })
    }
}
