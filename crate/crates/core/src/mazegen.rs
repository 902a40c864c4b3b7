//! Problem generation: valid optimal paths, deceptive branches, hints, and
//! set-level balancing of panel statistics.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::concept::describe_state;
use crate::error::{Error, Result};
use crate::types::{Color, Direction, Maze, Position, DEFAULT_GRID_SIZE, MAX_DIGIT};

/// How paths are counted and sampled. Written into problem-set headers.
pub const PATH_COUNT_CONVENTION: &str = "paths are counted once per signed displacement \
(dx,dy) != (0,0) with |dx|,|dy| <= min(grid-1, max_digit), i.e. up to translation; \
a 10x10 grid gives 738980";

/// Chance that a new branch grows from an existing branch cell rather than the path.
const SUB_BRANCH_PROB: f64 = 0.2;
const ATTACH_RETRIES: usize = 8;
const SITE_TRIES: usize = 24;
const MAZE_RETRIES: usize = 64;
/// Candidates drawn per slot when balancing a set.
const BALANCE_CANDIDATES: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub grid_size: usize,
    pub branch_depth_mean: f64,
    pub branching_mean: f64,
    pub max_digit: u8,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig::train(0)
    }
}

impl GenConfig {
    pub fn train(seed: u64) -> Self {
        GenConfig {
            grid_size: DEFAULT_GRID_SIZE,
            branch_depth_mean: 2.0,
            branching_mean: 5.0,
            max_digit: MAX_DIGIT,
            seed,
        }
    }

    pub fn test(seed: u64) -> Self {
        GenConfig { branch_depth_mean: 5.0, ..GenConfig::train(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Domain("grid_size must be at least 2".into()));
        }
        if self.branch_depth_mean.is_nan() || self.branch_depth_mean < 1.0 {
            return Err(Error::Domain("branch_depth_mean must be at least 1".into()));
        }
        if self.branching_mean.is_nan() || self.branching_mean < 0.0 {
            return Err(Error::Domain("branching_mean must be non-negative".into()));
        }
        if self.max_digit == 0 || self.max_digit > MAX_DIGIT {
            return Err(Error::Domain("max_digit must be in 1..=9".into()));
        }
        Ok(())
    }

    /// Largest displacement along one axis.
    pub fn reach(&self) -> i32 {
        (self.grid_size as i32 - 1).min(self.max_digit as i32)
    }
}

/// A generated maze with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub id: String,
    pub seed: u64,
    pub maze: Maze,
    /// Test category and provoking pair for generated tests.
    pub tag: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetStats {
    /// Indexed by [`Color::index`].
    pub color_counts: [u64; 8],
    /// Indexed by digit value; slot 0 unused.
    pub digit_counts: [u64; 10],
    /// Panels by number of displayed digits.
    pub panel_sizes: [u64; 12],
    pub panels: u64,
    /// Depths of all deceptive branches (cells per branch).
    pub branch_depths: Vec<u32>,
}

impl SetStats {
    pub fn of_maze(maze: &Maze) -> SetStats {
        let mut s = SetStats::default();
        s.add_maze(maze);
        s
    }

    pub fn add_maze(&mut self, maze: &Maze) {
        for p in maze.open_cells() {
            let Ok(desc) = describe_state(maze, p) else {
                continue;
            };
            let entries = desc.entries();
            for (slot, v) in &entries {
                self.color_counts[slot.color().index()] += 1;
                self.digit_counts[*v as usize] += 1;
            }
            self.panel_sizes[entries.len().min(11)] += 1;
            self.panels += 1;
        }
        self.branch_depths.extend(branch_depths(maze));
    }

    pub fn merge(&mut self, other: &SetStats) {
        for i in 0..8 {
            self.color_counts[i] += other.color_counts[i];
        }
        for i in 0..10 {
            self.digit_counts[i] += other.digit_counts[i];
        }
        for i in 0..12 {
            self.panel_sizes[i] += other.panel_sizes[i];
        }
        self.panels += other.panels;
        self.branch_depths.extend_from_slice(&other.branch_depths);
    }

    /// Largest relative deviation from the group mean within the wall/crossing
    /// colors (`group = 0`) or the goal colors (`group = 1`).
    pub fn color_spread(&self, group: usize) -> f64 {
        let g = &self.color_counts[group * 4..group * 4 + 4];
        let mean = g.iter().sum::<u64>() as f64 / 4.0;
        if mean == 0.0 {
            return 0.0;
        }
        g.iter().map(|c| (*c as f64 - mean).abs() / mean).fold(0.0, f64::max)
    }

    /// Sum of increases between consecutive digit counts 1..9, relative to
    /// the total; zero when the histogram is non-increasing.
    pub fn digit_rise(&self) -> f64 {
        let total: u64 = self.digit_counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let rise: u64 = (1..9).map(|i| self.digit_counts[i + 1].saturating_sub(self.digit_counts[i])).sum();
        rise as f64 / total as f64
    }

    pub fn digits_non_increasing(&self) -> bool {
        (1..9).all(|i| self.digit_counts[i] >= self.digit_counts[i + 1])
    }

    /// Share of panels showing between `lo` and `hi` digits inclusive.
    pub fn panel_share(&self, lo: usize, hi: usize) -> f64 {
        if self.panels == 0 {
            return 0.0;
        }
        let n: u64 = self.panel_sizes[lo..=hi.min(11)].iter().sum();
        n as f64 / self.panels as f64
    }

    pub fn mean_branch_depth(&self) -> f64 {
        if self.branch_depths.is_empty() {
            return 0.0;
        }
        self.branch_depths.iter().map(|d| *d as f64).sum::<f64>() / self.branch_depths.len() as f64
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        out.push_str("colors:");
        for c in Color::ALL {
            out.push_str(&format!(" {:?}={}", c, self.color_counts[c.index()]));
        }
        out.push_str("\ndigits:");
        for d in 1..=9 {
            out.push_str(&format!(" {}={}", d, self.digit_counts[d]));
        }
        out.push_str("\npanel sizes:");
        for (n, c) in self.panel_sizes.iter().enumerate().filter(|(_, c)| **c > 0) {
            out.push_str(&format!(" {n}={c}"));
        }
        out.push_str(&format!(
            "\npanels: {}\nwall/crossing color spread: {:.3}\ngoal color spread: {:.3}\n\
             digits non-increasing: {}\npanels with 3-6 digits: {:.3}\n\
             branches: {} (mean depth {:.2})\n",
            self.panels,
            self.color_spread(0),
            self.color_spread(1),
            self.digits_non_increasing(),
            self.panel_share(3, 6),
            self.branch_depths.len(),
            self.mean_branch_depth(),
        ));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSet {
    pub problems: Vec<Problem>,
    pub config: GenConfig,
    pub stats: SetStats,
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Monotone lattice paths across an `m` x `n` block of cells.
pub fn count_monotone_paths(m: usize, n: usize) -> Result<u64> {
    if m < 1 || n < 1 {
        return Err(Error::Domain(format!("span ({m},{n}) must be at least (1,1)")));
    }
    Ok(binomial((m + n - 2) as u64, (n - 1) as u64))
}

/// Every distinct optimal path shape reachable under `cfg`.
pub fn path_universe_size(grid_size: usize, max_digit: u8) -> u64 {
    let r = (grid_size as i32 - 1).min(max_digit as i32);
    let mut total = 0;
    for a in -r..=r {
        for b in -r..=r {
            if (a, b) != (0, 0) {
                total += count_monotone_paths(a.unsigned_abs() as usize + 1, b.unsigned_abs() as usize + 1)
                    .expect("spans are positive");
            }
        }
    }
    total
}

/// True iff every unit step reduces the Manhattan distance to `goal` by one.
pub fn validate_path(path: &[Position], goal: Position) -> Result<bool> {
    let Some(last) = path.last() else {
        return Err(Error::MalformedPath("empty path".into()));
    };
    if *last != goal {
        return Err(Error::MalformedPath(format!("path ends at {last}, not the goal {goal}")));
    }
    for w in path.windows(2) {
        if w[0].manhattan(w[1]) != 1 {
            return Err(Error::MalformedPath(format!("{} and {} are not adjacent", w[0], w[1])));
        }
    }
    Ok(path.windows(2).all(|w| w[1].manhattan(goal) + 1 == w[0].manhattan(goal)))
}

/// Samples a path uniformly over the shapes counted by [`path_universe_size`],
/// then a uniform translation that fits the grid.
pub fn sample_optimal_path<R: Rng + ?Sized>(cfg: &GenConfig, rng: &mut R) -> Vec<Position> {
    let r = cfg.reach();
    let mut disps = Vec::new();
    let mut weights = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            if (a, b) != (0, 0) {
                disps.push((a, b));
                weights.push(binomial((a.abs() + b.abs()) as u64, a.unsigned_abs() as u64));
            }
        }
    }
    let Ok(dist) = WeightedIndex::new(&weights) else {
        return vec![Position::new(0, 0)];
    };
    let (a, b) = disps[dist.sample(rng)];
    let mut steps: Vec<Direction> = Vec::with_capacity((a.abs() + b.abs()) as usize);
    let h = if a > 0 { Direction::Right } else { Direction::Left };
    let v = if b > 0 { Direction::Down } else { Direction::Up };
    steps.extend(std::iter::repeat_n(h, a.unsigned_abs() as usize));
    steps.extend(std::iter::repeat_n(v, b.unsigned_abs() as usize));
    steps.shuffle(rng);

    let g = cfg.grid_size as i32;
    let x0 = rng.random_range((-a).max(0)..g - a.max(0));
    let y0 = rng.random_range((-b).max(0)..g - b.max(0));
    let mut p = Position::new(x0, y0);
    let mut path = vec![p];
    for d in steps {
        p = p.step(d, 1);
        path.push(p);
    }
    path
}

/// Cells that may receive a new branch cell growing from `from`.
fn growth_options(maze: &Maze, from: Position, reserved: &[Position]) -> Vec<Position> {
    Direction::ALL
        .iter()
        .map(|d| from.step(*d, 1))
        .filter(|q| {
            maze.in_bounds(*q)
                && !maze.is_open(*q)
                && *q != maze.goal
                && !reserved.contains(q)
                && Direction::ALL.iter().map(|d| q.step(*d, 1)).all(|n| n == from || !maze.is_open(n))
        })
        .collect()
}

pub(crate) fn sample_depth<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 1.0 {
        return 1;
    }
    let geo = Geometric::new(1.0 / mean).expect("probability in (0,1]");
    (geo.sample(rng) as u32).saturating_add(1)
}

/// Grows one dead-end corridor of up to `depth` cells from `site`; returns
/// the opened cells (empty if `site` has no room).
pub fn grow_branch<R: Rng + ?Sized>(
    maze: &mut Maze,
    site: Position,
    depth: u32,
    reserved: &[Position],
    rng: &mut R,
) -> Vec<Position> {
    let mut cur = site;
    let mut cells = Vec::new();
    while (cells.len() as u32) < depth {
        let opts = growth_options(maze, cur, reserved);
        let Some(next) = opts.choose(rng) else { break };
        maze.set_open(*next, true);
        cells.push(*next);
        cur = *next;
    }
    cells
}

/// Grows dead-end branches off `path` and places hints.
pub fn attach_branches<R: Rng + ?Sized>(path: &[Position], cfg: &GenConfig, rng: &mut R) -> Result<Maze> {
    let base = Maze::from_path(cfg.grid_size, path)?;
    let sites: Vec<Position> = path.iter().skip(1).take(path.len().saturating_sub(2)).copied().collect();
    grow_branches(&base, &sites, &[], cfg, rng)
}

/// Adds a Poisson number of branches to `base`, rooted at `sites` or at
/// earlier branch cells, never opening a `reserved` cell.
pub fn grow_branches<R: Rng + ?Sized>(
    base: &Maze,
    sites: &[Position],
    reserved: &[Position],
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Maze> {
    if cfg.branching_mean <= 0.0 {
        let mut m = base.clone();
        m.place_hints();
        return Ok(m);
    }
    let poisson = Poisson::new(cfg.branching_mean).map_err(|e| Error::Domain(format!("branching_mean: {e}")))?;
    let wanted = (poisson.sample(rng) as usize).clamp(1, base.optimal_path.len().max(1));

    for _ in 0..ATTACH_RETRIES {
        let mut maze = base.clone();
        let mut branch_cells: Vec<Position> = Vec::new();
        let mut placed = 0;
        for _ in 0..wanted {
            let depth = sample_depth(cfg.branch_depth_mean, rng);
            for _ in 0..SITE_TRIES {
                let site = if !branch_cells.is_empty() && rng.random_bool(SUB_BRANCH_PROB) {
                    *branch_cells.choose(rng).expect("non-empty")
                } else if let Some(s) = sites.choose(rng) {
                    *s
                } else {
                    break;
                };
                let cells = grow_branch(&mut maze, site, depth, reserved, rng);
                if !cells.is_empty() {
                    branch_cells.extend(cells);
                    placed += 1;
                    break;
                }
            }
        }
        if placed < wanted {
            continue;
        }
        maze.place_hints();
        if panels_within_cap(&maze, cfg.max_digit) {
            return Ok(maze);
        }
    }
    Err(Error::GenerationFailure(format!(
        "could not attach {wanted} branches to a {}-cell path",
        base.optimal_path.len()
    )))
}

fn panels_within_cap(maze: &Maze, max_digit: u8) -> bool {
    maze.open_cells().all(|p| match describe_state(maze, p) {
        Ok(d) => d.check().is_ok() && d.entries().iter().all(|(_, v)| *v <= max_digit),
        Err(_) => false,
    })
}

/// Recomputes hints so that exactly the junctions carry one.
pub fn place_hints(mut maze: Maze) -> Maze {
    maze.place_hints();
    maze
}

/// Branch depths of a maze: for each attachment (an open non-path neighbour
/// of a path cell) the number of cells in the subtree it roots.
pub fn branch_depths(maze: &Maze) -> Vec<u32> {
    let on_path: std::collections::HashSet<Position> = maze.optimal_path.iter().copied().collect();
    let mut out = Vec::new();
    for p in &maze.optimal_path {
        for d in Direction::ALL {
            let q = p.step(d, 1);
            if maze.is_open(q) && !on_path.contains(&q) {
                let mut seen = std::collections::HashSet::from([*p, q]);
                let mut stack = vec![q];
                let mut n = 0;
                while let Some(c) = stack.pop() {
                    n += 1;
                    for e in Direction::ALL {
                        let r = c.step(e, 1);
                        if maze.is_open(r) && !on_path.contains(&r) && seen.insert(r) {
                            stack.push(r);
                        }
                    }
                }
                out.push(n);
            }
        }
    }
    out
}

/// One maze from a dedicated seed.
pub fn generate_maze(cfg: &GenConfig, seed: u64) -> Result<Maze> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..MAZE_RETRIES {
        let path = sample_optimal_path(cfg, &mut rng);
        match attach_branches(&path, cfg, &mut rng) {
            Ok(m) => return Ok(m),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::GenerationFailure("no attempt made".into())))
}

fn balance_score(stats: &SetStats) -> f64 {
    stats.color_spread(0) + stats.color_spread(1) + 4.0 * stats.digit_rise()
}

/// `n` mazes, greedily chosen among candidates to keep the color groups
/// balanced and the digit histogram non-increasing.
pub fn generate_set(n: usize, cfg: &GenConfig) -> Result<ProblemSet> {
    if n == 0 {
        return Err(Error::Domain("a problem set needs at least one maze".into()));
    }
    cfg.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = SetStats::default();
    let mut problems = Vec::with_capacity(n);
    for i in 0..n {
        let mut best: Option<(f64, u64, Maze, SetStats)> = None;
        for _ in 0..BALANCE_CANDIDATES {
            let seed = seeds.next_u64();
            let Ok(maze) = generate_maze(cfg, seed) else {
                continue;
            };
            let mut trial = stats.clone();
            let own = SetStats::of_maze(&maze);
            trial.merge(&own);
            let score = balance_score(&trial);
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, seed, maze, own));
            }
        }
        let (_, seed, maze, own) =
            best.ok_or_else(|| Error::GenerationFailure(format!("no candidate maze for slot {i}")))?;
        stats.merge(&own);
        problems.push(Problem { id: format!("m{i:04}"), seed, maze, tag: None });
    }
    Ok(ProblemSet { problems, config: cfg.clone(), stats })
}

/// Statistics recomputed from scratch over a list of problems.
pub fn set_stats(problems: &[Problem]) -> SetStats {
    let mut s = SetStats::default();
    for p in problems {
        s.add_maze(&p.maze);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: i32, y: i32) -> Position {
        Position::new(x, y)
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(count_monotone_paths(1, 1).unwrap(), 1);
        assert_eq!(count_monotone_paths(3, 2).unwrap(), 3);
        assert!(count_monotone_paths(0, 3).is_err());
        assert_eq!(path_universe_size(10, 9), 738_980);
    }

    #[test]
    fn staircase_is_valid_and_c_shape_is_not() {
        let l = vec![p(0, 2), p(0, 1), p(0, 0), p(1, 0), p(2, 0)];
        assert!(validate_path(&l, p(2, 0)).unwrap());
        let c = vec![p(1, 0), p(0, 0), p(0, 1), p(0, 2), p(1, 2)];
        assert!(!validate_path(&c, p(1, 2)).unwrap());
        assert!(validate_path(&[p(3, 3)], p(3, 3)).unwrap());
        assert!(validate_path(&[p(0, 0), p(2, 0)], p(2, 0)).is_err());
        assert!(validate_path(&[], p(0, 0)).is_err());
    }

    #[test]
    fn same_seed_same_path() {
        let cfg = GenConfig::train(1);
        let a = sample_optimal_path(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let b = sample_optimal_path(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(validate_path(&a, *a.last().unwrap()).unwrap());
    }

    #[test]
    fn zero_branching_gives_bare_path() {
        let cfg = GenConfig { branching_mean: 0.0, ..GenConfig::train(3) };
        let path: Vec<Position> = (0..6).map(|x| p(x, 4)).collect();
        let m = attach_branches(&path, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(m.open_count(), path.len());
        assert!(m.hints.is_empty());
    }

    #[test]
    fn branches_touch_path_only_at_attachment() {
        let cfg = GenConfig::train(5);
        for seed in 0..50 {
            let m = generate_maze(&cfg, seed).unwrap();
            m.check().unwrap();
            let on_path: std::collections::HashSet<_> = m.optimal_path.iter().copied().collect();
            // open cells form a tree: edges = vertices - 1
            let edges: usize = m
                .open_cells()
                .map(|c| [Direction::Right, Direction::Down].iter().filter(|d| m.is_open(c.step(**d, 1))).count())
                .sum();
            assert_eq!(edges + 1, m.open_count(), "seed {seed}");
            assert!(!m.hints.contains_key(&m.goal));
            for c in m.open_cells().filter(|c| !on_path.contains(c)) {
                assert_ne!(c, m.goal);
            }
            assert!(validate_path(&m.optimal_path, m.goal).unwrap());
            assert_eq!(m.start, m.optimal_path[0]);
        }
    }

    #[test]
    fn train_profile_branch_means() {
        let cfg = GenConfig::train(9);
        let mut depths = Vec::new();
        let mut counts = Vec::new();
        for seed in 0..300 {
            let m = generate_maze(&cfg, seed).unwrap();
            let d = branch_depths(&m);
            counts.push(d.len() as f64);
            depths.extend(d);
        }
        let mean_count = counts.iter().sum::<f64>() / counts.len() as f64;
        assert!((3.0..7.0).contains(&mean_count), "{mean_count}");
        let mean_depth = depths.iter().map(|d| *d as f64).sum::<f64>() / depths.len() as f64;
        assert!((1.3..3.5).contains(&mean_depth), "{mean_depth}");
    }

    #[test]
    fn single_maze_set() {
        let s = generate_set(1, &GenConfig::train(11)).unwrap();
        assert_eq!(s.problems.len(), 1);
        assert!(s.stats.panels > 0);
        assert!(generate_set(0, &GenConfig::train(11)).is_err());
    }
}
