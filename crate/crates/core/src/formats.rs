//! On-disk formats: problem-set text files, JSON-lines episode logs and
//! memory files.
//!
//! A problem-set file starts with `#` header lines and then holds one maze per
//! line:
//!
//! ```text
//! # halma problem set v1
//! # paths: <path counting convention>
//! # config: {"grid_size":10,...}
//! id=m0000 seed=42 grid=10 start=1,2 goal=8,4 open=#.../.... hints=1,2:R;3,2:D path=1,2;2,2 tag=ST-1 <5,3|Up>
//! ```
//!
//! `open` lists grid rows top to bottom, `.` open and `#` wall. `tag` is
//! optional and always last, since it may contain spaces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EpisodeLog, StepRecord, TaskParams, TrialSummary};
use crate::error::{Error, Result};
use crate::kb::{memory_from_log, MemEntry};
use crate::mazegen::{set_stats, GenConfig, Problem, ProblemSet, PATH_COUNT_CONVENTION};
use crate::types::{Direction, Maze, Move, PanelDescription, Position};

pub const SET_MAGIC: &str = "# halma problem set v1";

fn pos_text(p: Position) -> String {
    format!("{},{}", p.x, p.y)
}

pub fn problem_line(p: &Problem) -> String {
    let m = &p.maze;
    let g = m.grid_size as i32;
    let rows: Vec<String> =
        (0..g).map(|y| (0..g).map(|x| if m.is_open(Position::new(x, y)) { '.' } else { '#' }).collect()).collect();
    let hints: Vec<String> = m.hints.iter().map(|(pos, d)| format!("{}:{}", pos_text(*pos), d.letter())).collect();
    let path: Vec<String> = m.optimal_path.iter().map(|p| pos_text(*p)).collect();
    let mut line = format!(
        "id={} seed={} grid={} start={} goal={} open={} hints={} path={}",
        p.id,
        p.seed,
        m.grid_size,
        pos_text(m.start),
        pos_text(m.goal),
        rows.join("/"),
        hints.join(";"),
        path.join(";"),
    );
    if let Some(tag) = &p.tag {
        let _ = write!(line, " tag={tag}");
    }
    line
}

pub fn serialize_set(set: &ProblemSet) -> String {
    let config = serde_json::to_string(&set.config).expect("config serializes");
    let mut out = format!("{SET_MAGIC}\n# paths: {PATH_COUNT_CONVENTION}\n# config: {config}\n");
    for p in &set.problems {
        out.push_str(&problem_line(p));
        out.push('\n');
    }
    out
}

fn parse_pos(s: &str, at: usize) -> Result<Position> {
    let (x, y) = s.split_once(',').ok_or_else(|| Error::parse(at, format!("position {s:?} lacks ','")))?;
    let num = |v: &str| v.parse::<i32>().map_err(|e| Error::parse(at, format!("position {s:?}: {e}")));
    Ok(Position::new(num(x)?, num(y)?))
}

fn parse_list<T>(s: &str, at: usize, f: impl Fn(&str, usize) -> Result<T>) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|item| f(item, at)).collect()
}

/// Parses one maze line; `base` is the byte offset of the line in its file.
pub fn parse_problem_line(line: &str, base: usize) -> Result<Problem> {
    let (body, tag) = match line.find(" tag=") {
        Some(i) => (&line[..i], Some(line[i + 5..].to_string())),
        None => (line, None),
    };
    let mut fields: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
    let mut offset = 0;
    for tok in body.split(' ') {
        let at = base + offset;
        offset += tok.len() + 1;
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::parse(at, format!("field {tok:?} lacks '='")))?;
        if fields.insert(k, (v, at + k.len() + 1)).is_some() {
            return Err(Error::parse(at, format!("duplicate field {k:?}")));
        }
    }
    let get = |k: &str| -> Result<(&str, usize)> {
        fields.get(k).copied().ok_or_else(|| Error::parse(base, format!("missing field {k:?}")))
    };
    let number = |k: &str| -> Result<u64> {
        let (v, at) = get(k)?;
        v.parse().map_err(|e| Error::parse(at, format!("{k}={v:?}: {e}")))
    };
    let id = get("id")?.0.to_string();
    let seed = number("seed")?;
    let grid = number("grid")? as usize;
    let (v, at) = get("start")?;
    let start = parse_pos(v, at)?;
    let (v, at) = get("goal")?;
    let goal = parse_pos(v, at)?;
    let mut maze = Maze::empty(grid, start, goal);
    let (rows, at) = get("open")?;
    let rows: Vec<&str> = rows.split('/').collect();
    if rows.len() != grid || rows.iter().any(|r| r.len() != grid) {
        return Err(Error::parse(at, format!("open grid is not {grid}x{grid}")));
    }
    for (y, row) in rows.iter().enumerate() {
        for (x, c) in row.chars().enumerate() {
            match c {
                '.' => maze.set_open(Position::new(x as i32, y as i32), true),
                '#' => {}
                _ => return Err(Error::parse(at + y * (grid + 1) + x, format!("cell {c:?}"))),
            }
        }
    }
    let (v, at) = get("hints")?;
    maze.hints = parse_list(v, at, |item, at| {
        let (p, d) = item.rsplit_once(':').ok_or_else(|| Error::parse(at, format!("hint {item:?} lacks ':'")))?;
        let mut cs = d.chars();
        let d = match (cs.next(), cs.next()) {
            (Some(c), None) => Direction::from_letter(c),
            _ => None,
        }
        .ok_or_else(|| Error::parse(at, format!("hint direction {d:?}")))?;
        Ok((parse_pos(p, at)?, d))
    })?
    .into_iter()
    .collect();
    let (v, at) = get("path")?;
    maze.optimal_path = parse_list(v, at, parse_pos)?;
    maze.check().map_err(|e| Error::parse(base, format!("maze {id}: {e}")))?;
    Ok(Problem { id, seed, maze, tag })
}

pub fn parse_set(text: &str) -> Result<ProblemSet> {
    let mut config: Option<GenConfig> = None;
    let mut problems = Vec::new();
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let at = offset;
        offset += line.len();
        let line = line.trim_end_matches('\n');
        if i == 0 && line != SET_MAGIC {
            return Err(Error::parse(at, "not a problem-set file"));
        }
        if let Some(rest) = line.strip_prefix("# config: ") {
            let cfg = serde_json::from_str(rest)
                .map_err(|e| Error::parse(at + 10 + e.column().saturating_sub(1), e.to_string()))?;
            config = Some(cfg);
        } else if line.starts_with('#') || line.is_empty() {
            continue;
        } else {
            problems.push(parse_problem_line(line, at)?);
        }
    }
    let config = config.ok_or_else(|| Error::parse(0, "missing config header"))?;
    Ok(ProblemSet { stats: set_stats(&problems), problems, config })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_set(path: &Path) -> Result<ProblemSet> {
    parse_set(&read_text(path)?)
}

pub fn write_set(path: &Path, set: &ProblemSet) -> Result<()> {
    write_text(path, &serialize_set(set))
}

/// One record of a JSON-lines episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Episode {
        episode: usize,
        problem_id: String,
        params: TaskParams,
    },
    Step {
        episode: usize,
        problem_id: String,
        trial: usize,
        t: usize,
        desc_before: PanelDescription,
        #[serde(rename = "move")]
        mv: Move,
        valid: bool,
        reward: f64,
        desc_after: PanelDescription,
        trial_done: bool,
        reached_goal: bool,
    },
    End {
        episode: usize,
        problem_id: String,
        trials: Vec<TrialSummary>,
    },
}

/// A logged episode together with the problem it ran on.
#[derive(Clone, Debug, PartialEq)]
pub struct LoggedEpisode {
    pub problem_id: String,
    pub params: TaskParams,
    pub log: EpisodeLog,
}

pub fn episode_lines(episode: usize, ep: &LoggedEpisode) -> Vec<LogLine> {
    let mut out = vec![LogLine::Episode { episode, problem_id: ep.problem_id.clone(), params: ep.params.clone() }];
    let mut done_at = BTreeMap::new();
    let mut end = 0;
    for (i, tr) in ep.log.trials.iter().enumerate() {
        end += tr.length;
        done_at.insert(end - 1, (i, tr.reached_goal));
    }
    for (k, s) in ep.log.steps.iter().enumerate() {
        let closing = done_at.get(&k);
        out.push(LogLine::Step {
            episode,
            problem_id: ep.problem_id.clone(),
            trial: s.trial,
            t: s.t,
            desc_before: s.desc_before,
            mv: s.mv.clone(),
            valid: s.valid,
            reward: s.reward,
            desc_after: s.desc_after,
            trial_done: closing.is_some(),
            reached_goal: closing.is_some_and(|c| c.1),
        });
    }
    out.push(LogLine::End { episode, problem_id: ep.problem_id.clone(), trials: ep.log.trials.clone() });
    out
}

pub fn serialize_log(episodes: &[LoggedEpisode]) -> String {
    let mut out = String::new();
    for (i, ep) in episodes.iter().enumerate() {
        for line in episode_lines(i, ep) {
            out.push_str(&serde_json::to_string(&line).expect("log line serializes"));
            out.push('\n');
        }
    }
    out
}

fn json_error(at: usize, e: serde_json::Error) -> Error {
    Error::parse(at + e.column().saturating_sub(1), e.to_string())
}

/// Parses a log. Trial summaries are rebuilt from the step records; an `end`
/// record, when present, must agree with them.
pub fn parse_log(text: &str) -> Result<Vec<LoggedEpisode>> {
    let mut episodes: Vec<LoggedEpisode> = Vec::new();
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rec: LogLine = serde_json::from_str(line).map_err(|e| json_error(at, e))?;
        match rec {
            LogLine::Episode { episode, problem_id, params } => {
                if index.insert(episode, episodes.len()).is_some() {
                    return Err(Error::parse(at, format!("episode {episode} opened twice")));
                }
                episodes.push(LoggedEpisode { problem_id, params, log: EpisodeLog::default() });
            }
            LogLine::Step {
                episode,
                trial,
                t,
                desc_before,
                mv,
                valid,
                reward,
                desc_after,
                trial_done,
                reached_goal,
                ..
            } => {
                let ep = index
                    .get(&episode)
                    .map(|i| &mut episodes[*i])
                    .ok_or_else(|| Error::parse(at, format!("step for unopened episode {episode}")))?;
                if trial != ep.log.trials.len() {
                    return Err(Error::parse(at, format!("step in trial {trial} out of order")));
                }
                ep.log.steps.push(StepRecord { trial, t, desc_before, mv, valid, reward, desc_after });
                if trial_done {
                    ep.log.trials.push(TrialSummary { length: t + 1, reached_goal });
                }
            }
            LogLine::End { episode, trials, .. } => {
                let ep = index
                    .get(&episode)
                    .map(|i| &episodes[*i])
                    .ok_or_else(|| Error::parse(at, format!("end of unopened episode {episode}")))?;
                if ep.log.trials != trials {
                    return Err(Error::parse(at, format!("episode {episode} trial summary disagrees with its steps")));
                }
            }
        }
    }
    Ok(episodes)
}

pub fn read_log(path: &Path) -> Result<Vec<LoggedEpisode>> {
    parse_log(&read_text(path)?)
}

pub fn write_log(path: &Path, episodes: &[LoggedEpisode]) -> Result<()> {
    write_text(path, &serialize_log(episodes))
}

pub fn serialize_memory(mem: &[MemEntry]) -> String {
    let mut out = String::new();
    for m in mem {
        out.push_str(&serde_json::to_string(m).expect("memory entry serializes"));
        out.push('\n');
    }
    out
}

/// Reads transitions from either a memory file or an episode log.
pub fn parse_memory(text: &str) -> Result<Vec<MemEntry>> {
    let is_log = text.lines().find(|l| !l.trim().is_empty()).is_some_and(|l| l.contains("\"type\""));
    if is_log {
        return Ok(parse_log(text)?.iter().flat_map(|ep| memory_from_log(&ep.log)).collect());
    }
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line.trim()).map_err(|e| json_error(at, e))?);
    }
    Ok(out)
}

pub fn read_memory(path: &Path) -> Result<Vec<MemEntry>> {
    parse_memory(&read_text(path)?)
}

pub fn write_memory(path: &Path, mem: &[MemEntry]) -> Result<()> {
    write_text(path, &serialize_memory(mem))
}

/// Streams log lines to any writer, one episode at a time.
pub fn append_episode<W: Write>(out: &mut W, episode: usize, ep: &LoggedEpisode) -> std::io::Result<()> {
    for line in episode_lines(episode, ep) {
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
