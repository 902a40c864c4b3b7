//! Test mazes built around a digit pair pulled from a knowledge base, checked
//! by scanning every open cell.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::concept::describe_state;
use crate::env::TaskParams;
use crate::error::{Error, Result};
use crate::kb::{Category, KnowledgeBase, Pair};
use crate::mazegen::{grow_branch, grow_branches, sample_depth, GenConfig, Problem};
use crate::metrics::{goal_rate, valid_ratio};
use crate::oracle::run_oracle_episode;
use crate::types::{direction_color, Direction, Indication, Maze, Position, Slot};

const BUILD_RETRIES: usize = 60;

fn perpendiculars(d: Direction) -> [Direction; 2] {
    if d.is_horizontal() {
        [Direction::Up, Direction::Down]
    } else {
        [Direction::Left, Direction::Right]
    }
}

/// A monotone path holding a straight run of `pair.greater` cells in the
/// pair's direction that ends in a turn (or the goal). Returns the path and
/// the index of the run's first cell.
fn run_path<R: Rng + ?Sized>(pair: Pair, cfg: &GenConfig, rng: &mut R) -> Result<(Vec<Position>, usize)> {
    let t = pair.direction;
    let reach = cfg.reach();
    let d1 = pair.greater as i32;
    if d1 > reach {
        return Err(Error::GenerationFailure(format!("{pair} does not fit a {}-cell grid", cfg.grid_size)));
    }
    let p = perpendiculars(t)[rng.random_range(0..2)];
    let room = reach - d1;
    let e1 = rng.random_range(0..=room);
    let e2 = rng.random_range(0..=room - e1);
    let b2_min = (e2 > 0) as i32;
    let b1 = rng.random_range(0..=reach - b2_min);
    let b2 = rng.random_range(b2_min..=reach - b1);

    let mut prefix: Vec<Direction> =
        std::iter::repeat_n(t, e1 as usize).chain(std::iter::repeat_n(p, b1 as usize)).collect();
    prefix.shuffle(rng);
    let mut steps = prefix.clone();
    steps.extend(std::iter::repeat_n(t, d1 as usize));
    if b2 > 0 {
        let mut tail: Vec<Direction> =
            std::iter::repeat_n(t, e2 as usize).chain(std::iter::repeat_n(p, (b2 - 1) as usize)).collect();
        tail.shuffle(rng);
        steps.push(p);
        steps.extend(tail);
    }

    let mut rel = vec![Position::new(0, 0)];
    for d in &steps {
        rel.push(rel.last().expect("non-empty").step(*d, 1));
    }
    let (minx, maxx) = (rel.iter().map(|c| c.x).min().unwrap_or(0), rel.iter().map(|c| c.x).max().unwrap_or(0));
    let (miny, maxy) = (rel.iter().map(|c| c.y).min().unwrap_or(0), rel.iter().map(|c| c.y).max().unwrap_or(0));
    let g = cfg.grid_size as i32;
    let ox = rng.random_range(-minx..=g - 1 - maxx);
    let oy = rng.random_range(-miny..=g - 1 - maxy);
    let path = rel.iter().map(|c| Position::new(c.x + ox, c.y + oy)).collect();
    Ok((path, prefix.len()))
}

fn attempt<R: Rng + ?Sized>(pair: Pair, cfg: &GenConfig, rng: &mut R) -> Result<Maze> {
    let (path, pi) = run_path(pair, cfg, rng)?;
    let t = pair.direction;
    let d1 = pair.greater as usize;
    let d2 = pair.lesser as usize;
    let run_end = path[pi + d1];
    let reserved = [run_end.step(t, 1)];

    let mut base = Maze::from_path(cfg.grid_size, &path)?;
    let junction = path[pi + d2];
    let depth = sample_depth(cfg.branch_depth_mean, rng);
    if grow_branch(&mut base, junction, depth, &reserved, rng).is_empty() {
        return Err(Error::GenerationFailure("no room for the crossing branch".into()));
    }
    let quiet: Vec<Position> = path[pi + 1..pi + d2].to_vec();
    let sites: Vec<Position> = path[1..path.len() - 1].iter().copied().filter(|c| !quiet.contains(c)).collect();
    grow_branches(&base, &sites, &reserved, cfg, rng)
}

/// A test maze around `pair`, retried until it passes [`verify_test_maze`].
pub fn build_test_problem(
    pair: Pair,
    category: Category,
    kb: &KnowledgeBase,
    cfg: &GenConfig,
    seed: u64,
) -> Result<Maze> {
    if pair.lesser == 0 || pair.lesser >= pair.greater {
        return Err(Error::Domain(format!("{pair} is not a strict inequality")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::from("no attempt");
    for _ in 0..BUILD_RETRIES {
        match attempt(pair, cfg, &mut rng) {
            Ok(m) => match verify_test_maze(&m, pair, category, kb) {
                Ok(()) => return Ok(m),
                Err(why) => last = why,
            },
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::GenerationFailure(format!("{category} {pair}: {last}")))
}

fn shows(desc: &crate::types::PanelDescription, pair: Pair, d: Direction) -> bool {
    desc.wall(d) == pair.greater && desc.crossing(d) == Some(pair.lesser)
}

/// Scans every open cell: the pair must be shown on the optimal path in its
/// own direction, nowhere in another direction (except for ST-1), with a
/// novel digit combination (ST-1 only), and the oracle must solve the maze.
pub fn verify_test_maze(
    maze: &Maze,
    pair: Pair,
    category: Category,
    kb: &KnowledgeBase,
) -> std::result::Result<(), String> {
    maze.check().map_err(|e| e.to_string())?;
    let t = pair.direction;
    let mut hosts = Vec::new();
    for c in maze.open_cells() {
        let desc = describe_state(maze, c).map_err(|e| e.to_string())?;
        desc.check().map_err(|e| format!("panel at {c}: {e}"))?;
        if category != Category::St1 {
            if let Some(d) = Direction::ALL.into_iter().find(|d| *d != t && shows(&desc, pair, *d)) {
                return Err(format!("{c} shows the pair toward {d}"));
            }
        }
        if shows(&desc, pair, t) && maze.optimal_path.contains(&c) {
            hosts.push(desc);
        }
    }
    if hosts.is_empty() {
        return Err("no optimal-path cell shows the pair".into());
    }
    if category == Category::St1 && !hosts.iter().any(|d| novel_quadruple(d, pair, kb)) {
        return Err("every host panel repeats a remembered digit combination".into());
    }
    let params = TaskParams::default();
    let log = run_oracle_episode(maze, &params).map_err(|e| e.to_string())?;
    if goal_rate(&log, params.max_trials) != 1.0 || valid_ratio(&log).map_err(|e| e.to_string())? != 1.0 {
        return Err("oracle does not solve the maze".into());
    }
    Ok(())
}

/// Whether the pair plus another wall digit and a goal digit of `desc` never
/// appeared together in a remembered panel.
pub fn novel_quadruple(desc: &crate::types::PanelDescription, pair: Pair, kb: &KnowledgeBase) -> bool {
    let color = direction_color(Indication::WallOrCrossing, pair.direction);
    let base = [(color, pair.greater), (color, pair.lesser)];
    let entries = desc.entries();
    let walls = entries.iter().filter(|(s, _)| matches!(s, Slot::Wall(d) if *d != pair.direction));
    walls.into_iter().any(|w| {
        entries.iter().filter(|(s, _)| matches!(s, Slot::Goal(_))).any(|g| {
            let sig = [base[0], base[1], (w.0.color(), w.1), (g.0.color(), g.1)];
            kb.co_occurrence(&sig) == 0
        })
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Skip {
    pub category: Category,
    pub pair: Option<Pair>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Suite {
    pub problems: BTreeMap<Category, Vec<Problem>>,
    pub skipped: Vec<Skip>,
}

impl Suite {
    pub fn all(&self) -> impl Iterator<Item = (Category, &Problem)> {
        self.problems.iter().flat_map(|(c, ps)| ps.iter().map(move |p| (*c, p)))
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in Category::ALL {
            let n = self.problems.get(&c).map_or(0, |v| v.len());
            let cell = if n == 0 { "-".to_string() } else { n.to_string() };
            out.push_str(&format!("{:<6}{cell}\n", c.label()));
        }
        out.push_str(&format!("skipped attempts: {}\n", self.skipped.len()));
        out
    }
}

/// Tag stored with each test problem, e.g. `ST-1 <5,3|Up>`.
pub fn tag(category: Category, pair: Pair) -> String {
    format!("{category} {pair}")
}

pub fn parse_tag(s: &str) -> Option<(Category, Pair)> {
    let (c, p) = s.split_once(' ')?;
    Some((Category::from_label(c)?, p.parse().ok()?))
}

/// Up to `target` problems per category, cycling over its candidate pairs.
pub fn generate_suite(kb: &KnowledgeBase, cfg: &GenConfig, target: usize) -> Suite {
    let mut suite = Suite::default();
    for (ci, cat) in Category::ALL.into_iter().enumerate() {
        let cands: Vec<Pair> = kb.query(cat).into_iter().filter(|p| (p.greater as i32) <= cfg.reach()).collect();
        let list = suite.problems.entry(cat).or_default();
        if cands.is_empty() {
            suite.skipped.push(Skip { category: cat, pair: None, reason: "no candidate pair".into() });
            continue;
        }
        let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((ci as u64 + 1) << 32));
        let mut attempts = 0;
        while list.len() < target && attempts < target * 3 {
            let pair = cands[attempts % cands.len()];
            attempts += 1;
            let seed = seeds.next_u64();
            match build_test_problem(pair, cat, kb, cfg, seed) {
                Ok(maze) => list.push(Problem {
                    id: format!("{}-{:03}", cat.label(), list.len()),
                    seed,
                    maze,
                    tag: Some(tag(cat, pair)),
                }),
                Err(e) => suite.skipped.push(Skip { category: cat, pair: Some(pair), reason: e.to_string() }),
            }
        }
    }
    suite
}
