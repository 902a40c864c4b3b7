use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 10;
/// Largest magnitude any panel digit may show.
pub const MAX_DIGIT: u8 = 9;
/// Largest single primitive magnitude.
pub const MAX_PRIMITIVE: u8 = 3;

/// Grid cell in screen coordinates: x grows to the right, y grows downward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub x: i32,
    pub y: i32,
}

impl Position {
    pub const fn new(x: i32, y: i32) -> Self {
        Position { x, y }
    }

    pub fn step(self, d: Direction, n: i32) -> Self {
        let (dx, dy) = d.delta();
        Position::new(self.x + dx * n, self.y + dy * n)
    }

    pub fn manhattan(self, other: Position) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    /// Direction of a unit step from `self` to `other`, if they are 4-adjacent.
    pub fn direction_to(self, other: Position) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| self.step(*d, 1) == other)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Up,
    Right,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Left, Direction::Up, Direction::Right, Direction::Down];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Left => (-1, 0),
            Direction::Up => (0, -1),
            Direction::Right => (1, 0),
            Direction::Down => (0, 1),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Up => Direction::Down,
            Direction::Right => Direction::Left,
            Direction::Down => Direction::Up,
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Direction::Left | Direction::Right)
    }

    /// Component of a signed offset along this direction.
    pub fn component(self, offset: (i32, i32)) -> i32 {
        let (dx, dy) = self.delta();
        offset.0 * dx + offset.1 * dy
    }

    pub fn letter(self) -> char {
        match self {
            Direction::Left => 'L',
            Direction::Up => 'U',
            Direction::Right => 'R',
            Direction::Down => 'D',
        }
    }

    pub fn from_letter(c: char) -> Option<Direction> {
        match c {
            'L' => Some(Direction::Left),
            'U' => Some(Direction::Up),
            'R' => Some(Direction::Right),
            'D' => Some(Direction::Down),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Indication {
    WallOrCrossing,
    Goal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Color {
    Red,
    Orange,
    Yellow,
    Green,
    Cyan,
    Blue,
    Purple,
    White,
}

impl Color {
    pub const ALL: [Color; 8] =
        [Color::Red, Color::Orange, Color::Yellow, Color::Green, Color::Cyan, Color::Blue, Color::Purple, Color::White];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [1.0, 0.0, 0.0],
            Color::Orange => [1.0, 0.5, 0.0],
            Color::Yellow => [1.0, 1.0, 0.0],
            Color::Green => [0.0, 1.0, 0.0],
            Color::Cyan => [0.0, 1.0, 1.0],
            Color::Blue => [0.0, 0.0, 1.0],
            Color::Purple => [0.5, 0.0, 1.0],
            Color::White => [1.0, 1.0, 1.0],
        }
    }

    /// Inverse of [`direction_color`].
    pub fn meaning(self) -> (Indication, Direction) {
        let i = self.index();
        let ind = if i < 4 { Indication::WallOrCrossing } else { Indication::Goal };
        (ind, Direction::ALL[i % 4])
    }
}

pub fn direction_color(indication: Indication, d: Direction) -> Color {
    let base = match indication {
        Indication::WallOrCrossing => 0,
        Indication::Goal => 4,
    };
    Color::ALL[base + d.index()]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HintSymbol {
    Circle,
    Triangle,
    Square,
    Pentagon,
}

impl HintSymbol {
    pub const ALL: [HintSymbol; 4] =
        [HintSymbol::Circle, HintSymbol::Triangle, HintSymbol::Square, HintSymbol::Pentagon];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn for_direction(d: Direction) -> HintSymbol {
        match d {
            Direction::Up => HintSymbol::Circle,
            Direction::Right => HintSymbol::Triangle,
            Direction::Left => HintSymbol::Square,
            Direction::Down => HintSymbol::Pentagon,
        }
    }
}

pub fn hint_direction(h: HintSymbol) -> Direction {
    match h {
        HintSymbol::Triangle => Direction::Right,
        HintSymbol::Pentagon => Direction::Down,
        HintSymbol::Square => Direction::Left,
        HintSymbol::Circle => Direction::Up,
    }
}

/// Which digit of a panel an entry comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Wall(Direction),
    Crossing(Direction),
    /// Goal offset along the horizontal (`Left`/`Right`) or vertical axis.
    Goal(Direction),
}

impl Slot {
    pub fn color(self) -> Color {
        match self {
            Slot::Wall(d) | Slot::Crossing(d) => direction_color(Indication::WallOrCrossing, d),
            Slot::Goal(d) => direction_color(Indication::Goal, d),
        }
    }
}

/// Symbolic content of one observation.
///
/// Arrays are indexed by [`Direction::index`]. A wall distance of 0 means the
/// neighbouring cell is already a wall and is not displayed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PanelDescription {
    pub wall: [u8; 4],
    pub crossing: [Option<u8>; 4],
    pub goal: [i8; 2],
    pub hint: Option<HintSymbol>,
}

impl PanelDescription {
    pub fn wall(&self, d: Direction) -> u8 {
        self.wall[d.index()]
    }

    pub fn crossing(&self, d: Direction) -> Option<u8> {
        self.crossing[d.index()]
    }

    pub fn goal_offset(&self) -> (i32, i32) {
        (self.goal[0] as i32, self.goal[1] as i32)
    }

    /// Every displayed digit with its slot, in slot order.
    pub fn entries(&self) -> Vec<(Slot, u8)> {
        let mut out = Vec::with_capacity(11);
        for d in Direction::ALL {
            if self.wall(d) > 0 {
                out.push((Slot::Wall(d), self.wall(d)));
            }
        }
        for d in Direction::ALL {
            if let Some(c) = self.crossing(d) {
                out.push((Slot::Crossing(d), c));
            }
        }
        let (dx, dy) = self.goal_offset();
        if dx != 0 {
            let d = if dx < 0 { Direction::Left } else { Direction::Right };
            out.push((Slot::Goal(d), dx.unsigned_abs() as u8));
        }
        if dy != 0 {
            let d = if dy < 0 { Direction::Up } else { Direction::Down };
            out.push((Slot::Goal(d), dy.unsigned_abs() as u8));
        }
        out
    }

    pub fn digit_count(&self) -> usize {
        self.entries().len()
    }

    /// Checks the panel-level invariants. Whether a hint belongs on the cell
    /// is a maze-level question and is checked by [`Maze::check`].
    pub fn check(&self) -> Result<()> {
        for d in Direction::ALL {
            let w = self.wall(d);
            if w > MAX_DIGIT {
                return Err(Error::Domain(format!("wall {d} = {w} exceeds {MAX_DIGIT}")));
            }
            if let Some(c) = self.crossing(d) {
                if c == 0 || c >= w {
                    return Err(Error::Domain(format!("crossing {d} = {c} must satisfy 0 < crossing < wall ({w})")));
                }
            }
        }
        for g in self.goal {
            if g.unsigned_abs() > MAX_DIGIT {
                return Err(Error::Domain(format!("goal offset {g} exceeds {MAX_DIGIT}")));
            }
        }
        Ok(())
    }
}

/// An option: one direction and a sequence of primitive magnitudes.
/// Serialized in the `R:3+2` text form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Move {
    pub direction: Direction,
    pub primitives: Vec<u8>,
}

impl Move {
    pub fn new(direction: Direction, primitives: Vec<u8>) -> Result<Move> {
        if primitives.is_empty() {
            return Err(Error::Domain("a move needs at least one primitive".into()));
        }
        if let Some(p) = primitives.iter().find(|p| **p > MAX_PRIMITIVE) {
            return Err(Error::Domain(format!("primitive {p} outside 0..=3")));
        }
        Ok(Move { direction, primitives })
    }

    pub fn displacement(&self) -> u32 {
        self.primitives.iter().map(|p| *p as u32).sum()
    }

    /// Greedy decomposition into 3s followed by the remainder.
    pub fn greedy(direction: Direction, units: u32) -> Move {
        let mut primitives = vec![MAX_PRIMITIVE; (units / 3) as usize];
        if !units.is_multiple_of(3) || primitives.is_empty() {
            primitives.push((units % 3) as u8);
        }
        Move { direction, primitives }
    }
}

pub fn displacement(m: &Move) -> u32 {
    m.displacement()
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.direction.letter())?;
        for (i, p) in self.primitives.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl From<Move> for String {
    fn from(m: Move) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Move {
    type Error = Error;

    fn try_from(s: String) -> Result<Move> {
        s.parse()
    }
}

impl std::str::FromStr for Move {
    type Err = Error;

    /// Parses the `R:3+2` form produced by `Display`.
    fn from_str(s: &str) -> Result<Move> {
        let (d, prims) = s.split_once(':').ok_or_else(|| Error::parse(0, format!("move {s:?} lacks ':'")))?;
        let mut chars = d.chars();
        let direction = match (chars.next(), chars.next()) {
            (Some(c), None) => Direction::from_letter(c),
            _ => None,
        }
        .ok_or_else(|| Error::parse(0, format!("bad direction in move {s:?}")))?;
        let primitives = prims
            .split('+')
            .map(|p| p.parse::<u8>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(d.len() + 1, format!("move {s:?}: {e}")))?;
        Move::new(direction, primitives)
    }
}

/// A maze problem on a square grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Maze {
    pub grid_size: usize,
    open: Vec<bool>,
    pub start: Position,
    pub goal: Position,
    pub hints: BTreeMap<Position, Direction>,
    pub optimal_path: Vec<Position>,
}

impl Maze {
    /// An all-wall grid with the given endpoints; callers open cells afterwards.
    pub fn empty(grid_size: usize, start: Position, goal: Position) -> Maze {
        Maze {
            grid_size,
            open: vec![false; grid_size * grid_size],
            start,
            goal,
            hints: BTreeMap::new(),
            optimal_path: Vec::new(),
        }
    }

    /// Builds a maze whose open set is exactly `path`, with hints placed.
    pub fn from_path(grid_size: usize, path: &[Position]) -> Result<Maze> {
        let (start, goal) = match (path.first(), path.last()) {
            (Some(s), Some(g)) => (*s, *g),
            _ => return Err(Error::MalformedPath("empty path".into())),
        };
        let mut maze = Maze::empty(grid_size, start, goal);
        for p in path {
            if !maze.in_bounds(*p) {
                return Err(Error::MalformedPath(format!("{p} outside the grid")));
            }
            maze.set_open(*p, true);
        }
        maze.optimal_path = path.to_vec();
        maze.place_hints();
        Ok(maze)
    }

    pub fn in_bounds(&self, p: Position) -> bool {
        let g = self.grid_size as i32;
        (0..g).contains(&p.x) && (0..g).contains(&p.y)
    }

    fn idx(&self, p: Position) -> usize {
        p.y as usize * self.grid_size + p.x as usize
    }

    pub fn is_open(&self, p: Position) -> bool {
        self.in_bounds(p) && self.open[self.idx(p)]
    }

    pub fn set_open(&mut self, p: Position, open: bool) {
        let i = self.idx(p);
        self.open[i] = open;
    }

    /// Open cells in row-major order.
    pub fn open_cells(&self) -> impl Iterator<Item = Position> + '_ {
        let g = self.grid_size as i32;
        (0..g).flat_map(move |y| (0..g).map(move |x| Position::new(x, y))).filter(|p| self.is_open(*p))
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|o| **o).count()
    }

    pub fn open_degree(&self, p: Position) -> usize {
        Direction::ALL.iter().filter(|d| self.is_open(p.step(**d, 1))).count()
    }

    /// Open cell other than the goal with at least three open neighbours.
    pub fn is_junction(&self, p: Position) -> bool {
        p != self.goal && self.is_open(p) && self.open_degree(p) >= 3
    }

    /// BFS distance to the goal for every open cell (`u32::MAX` if unreachable).
    pub fn goal_distances(&self) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.open.len()];
        if !self.is_open(self.goal) {
            return dist;
        }
        let mut queue = VecDeque::from([self.goal]);
        dist[self.idx(self.goal)] = 0;
        while let Some(p) = queue.pop_front() {
            let dp = dist[self.idx(p)];
            for d in Direction::ALL {
                let q = p.step(d, 1);
                if self.is_open(q) && dist[self.idx(q)] == u32::MAX {
                    dist[self.idx(q)] = dp + 1;
                    queue.push_back(q);
                }
            }
        }
        dist
    }

    /// First step of a shortest path from `p` to the goal. Ties prefer the
    /// next cell of the optimal path.
    pub fn next_step_toward_goal(&self, p: Position, dist: &[u32]) -> Option<Direction> {
        let dp = *dist.get(self.idx(p))?;
        if dp == 0 || dp == u32::MAX {
            return None;
        }
        let along_path = self
            .optimal_path
            .iter()
            .position(|c| *c == p)
            .and_then(|i| self.optimal_path.get(i + 1))
            .and_then(|n| p.direction_to(*n));
        let mut candidates = Direction::ALL.into_iter().filter(|d| {
            let q = p.step(*d, 1);
            self.is_open(q) && dist[self.idx(q)] + 1 == dp
        });
        let first = candidates.next()?;
        let rest: Vec<Direction> = candidates.collect();
        match along_path {
            Some(a) if a == first || rest.contains(&a) => Some(a),
            _ => Some(first),
        }
    }

    /// Recomputes the hint map: one hint per junction, pointing along a
    /// shortest path to the goal.
    pub fn place_hints(&mut self) {
        let dist = self.goal_distances();
        let junctions: Vec<Position> = self.open_cells().filter(|p| self.is_junction(*p)).collect();
        self.hints =
            junctions.into_iter().filter_map(|p| self.next_step_toward_goal(p, &dist).map(|d| (p, d))).collect();
    }

    /// Verifies the structural invariants of a maze.
    pub fn check(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Domain("grid_size must be at least 2".into()));
        }
        for (name, p) in [("start", self.start), ("goal", self.goal)] {
            if !self.is_open(p) {
                return Err(Error::Domain(format!("{name} {p} is not open")));
            }
        }
        for p in &self.optimal_path {
            if !self.is_open(*p) {
                return Err(Error::Domain(format!("optimal path cell {p} is not open")));
            }
        }
        let dist = self.goal_distances();
        for p in self.open_cells() {
            let junction = self.is_junction(p);
            match (junction, self.hints.get(&p)) {
                (true, None) => return Err(Error::Domain(format!("junction {p} has no hint"))),
                (false, Some(_)) => return Err(Error::Domain(format!("hint at non-junction {p}"))),
                (true, Some(d)) => {
                    let q = p.step(*d, 1);
                    if !self.is_open(q) || dist[self.idx(q)] + 1 != dist[self.idx(p)] {
                        return Err(Error::Domain(format!("hint {d} at {p} does not follow a shortest path")));
                    }
                }
                (false, None) => {}
            }
        }
        for p in self.hints.keys() {
            if !self.is_open(*p) {
                return Err(Error::Domain(format!("hint on closed cell {p}")));
            }
        }
        Ok(())
    }

    /// Maximal same-direction runs of the optimal path.
    pub fn path_segments(&self) -> Vec<(Direction, u32)> {
        path_segments(&self.optimal_path)
    }
}

/// Collapses a 4-connected path into (direction, length) runs.
pub fn path_segments(path: &[Position]) -> Vec<(Direction, u32)> {
    let mut segs: Vec<(Direction, u32)> = Vec::new();
    for w in path.windows(2) {
        let Some(d) = w[0].direction_to(w[1]) else {
            continue;
        };
        match segs.last_mut() {
            Some((last, n)) if *last == d => *n += 1,
            _ => segs.push((d, 1)),
        }
    }
    segs
}
