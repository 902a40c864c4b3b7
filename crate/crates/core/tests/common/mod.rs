//! Helpers shared by the integration tests. Everything here is written
//! against the rules directly, without calling the library code it checks.
#![allow(dead_code)]

use std::collections::BTreeSet;

use halma::env::{Env, EpisodeLog, TaskParams};
use halma::kb::MemEntry;
use halma::types::{Direction, HintSymbol, Maze, Move, PanelDescription, Position};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIRS: [(Direction, i32, i32); 4] =
    [(Direction::Left, -1, 0), (Direction::Up, 0, -1), (Direction::Right, 1, 0), (Direction::Down, 0, 1)];

fn open_neighbours(maze: &Maze, p: Position) -> usize {
    DIRS.iter().filter(|(_, dx, dy)| maze.is_open(Position::new(p.x + dx, p.y + dy))).count()
}

fn junction(maze: &Maze, p: Position) -> bool {
    maze.is_open(p) && p != maze.goal && open_neighbours(maze, p) >= 3
}

/// Panel at `p` computed by walking rays cell by cell.
pub fn scan_panel(maze: &Maze, p: Position) -> PanelDescription {
    let mut desc = PanelDescription::default();
    for (i, (_, dx, dy)) in DIRS.iter().enumerate() {
        let mut cells = Vec::new();
        let mut q = Position::new(p.x + dx, p.y + dy);
        while maze.is_open(q) {
            cells.push(q);
            q = Position::new(q.x + dx, q.y + dy);
        }
        desc.wall[i] = cells.len() as u8;
        desc.crossing[i] =
            cells.iter().take(cells.len().saturating_sub(1)).position(|c| junction(maze, *c)).map(|k| k as u8 + 1);
    }
    desc.goal = [(maze.goal.x - p.x) as i8, (maze.goal.y - p.y) as i8];
    if junction(maze, p) {
        desc.hint = maze.hints.get(&p).map(|d| match d {
            Direction::Up => HintSymbol::Circle,
            Direction::Left => HintSymbol::Square,
            Direction::Right => HintSymbol::Triangle,
            Direction::Down => HintSymbol::Pentagon,
        });
    }
    desc
}

/// Episode of uniformly random options.
pub fn random_episode(maze: &Maze, params: &TaskParams, seed: u64) -> EpisodeLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = Env::new(maze.clone(), params.clone()).unwrap();
    env.reset().unwrap();
    while !env.is_done() {
        let d = Direction::ALL[rng.random_range(0..4)];
        let len = rng.random_range(1..=params.max_opt_len);
        let prims = (0..len).map(|_| rng.random_range(0..=3)).collect();
        env.step(&Move::new(d, prims).unwrap()).unwrap();
    }
    env.into_log()
}

/// Knowledge-base sets derived straight from memory with threshold `theta`.
#[derive(Debug, Default)]
pub struct BruteKb {
    /// (greater, lesser, direction)
    pub s: BTreeSet<(u8, u8, Direction)>,
    pub ac: BTreeSet<(u8, u8, Direction)>,
    pub eq: BTreeSet<(u8, Direction)>,
}

pub fn brute_kb(mem: &[MemEntry], theta: u32) -> BruteKb {
    let mut s_counts: Vec<((u8, u8, Direction), u32)> = Vec::new();
    let mut ac_counts: Vec<((u8, u8, Direction), u32)> = Vec::new();
    let mut eq_counts: Vec<((u8, Direction), u32)> = Vec::new();
    fn bump<K: PartialEq>(v: &mut Vec<(K, u32)>, k: K) {
        match v.iter_mut().find(|(x, _)| *x == k) {
            Some((_, n)) => *n += 1,
            None => v.push((k, 1)),
        }
    }
    let ordered = |a: u8, b: u8, d| (a.max(b), a.min(b), d);
    for e in mem {
        for (i, (d, _, _)) in DIRS.iter().enumerate() {
            let w = e.desc_s.wall[i];
            if let Some(c) = e.desc_s.crossing[i] {
                if w != 0 && c != 0 && w != c {
                    bump(&mut s_counts, ordered(w, c, *d));
                }
            }
        }
        let disp: u32 = e.mv.primitives.iter().map(|p| *p as u32).sum();
        if !e.valid || disp == 0 {
            continue;
        }
        let moved = DIRS.iter().position(|(d, _, _)| *d == e.mv.direction).unwrap();
        let back = (moved + 2) % 4;
        for i in [moved, back] {
            let (a, b) = (e.desc_s.wall[i], e.desc_s2.wall[i]);
            if a != 0 && b != 0 && a != b {
                bump(&mut ac_counts, ordered(a, b, DIRS[i].0));
            }
        }
        let before = [Some(e.desc_s.wall[moved]), e.desc_s.crossing[moved]];
        let after = [Some(e.desc_s2.wall[moved]), e.desc_s2.crossing[moved]];
        let mut seen = BTreeSet::new();
        for v in before.into_iter().flatten() {
            if v != 0 && v as u32 == disp && !after.contains(&Some(v)) && seen.insert(v) {
                bump(&mut eq_counts, (v, e.mv.direction));
            }
        }
    }
    BruteKb {
        s: s_counts.into_iter().filter(|(_, n)| *n >= theta).map(|(k, _)| k).collect(),
        ac: ac_counts.into_iter().filter(|(_, n)| *n >= theta).map(|(k, _)| k).collect(),
        eq: eq_counts.into_iter().filter(|(_, n)| *n >= theta).map(|(k, _)| k).collect(),
    }
}

/// Category labels whose defining predicate holds for (g, l, t). The
/// predicates are written out with their exclusions, not as a precedence
/// chain, so overlaps would show up as more than one label.
pub fn brute_categories(kb: &BruteKb, g: u8, l: u8, t: Direction) -> Vec<&'static str> {
    let dirs = Direction::ALL;
    let s_t = kb.s.contains(&(g, l, t));
    let s_any = dirs.iter().any(|d| kb.s.contains(&(g, l, *d)));
    let ac_t = kb.ac.contains(&(g, l, t));
    let ac_any = dirs.iter().any(|d| kb.ac.contains(&(g, l, *d)));
    let eq_t = kb.eq.contains(&(g, t)) && kb.eq.contains(&(l, t));
    let eq_digit = |v: u8| kb.eq.iter().any(|(x, _)| *x == v);
    let eq_any = eq_digit(g) && eq_digit(l);

    let mut known: BTreeSet<(u8, u8)> = kb.s.iter().chain(&kb.ac).map(|(a, b, _)| (*a, *b)).collect();
    let eq_digits: BTreeSet<u8> = kb.eq.iter().map(|(v, _)| *v).collect();
    for a in &eq_digits {
        for b in &eq_digits {
            if a > b {
                known.insert((*a, *b));
            }
        }
    }
    let template = (1..=9u8).any(|a| {
        (1..a).any(|b| (1..b).any(|c| known.contains(&(a, b)) && known.contains(&(b, c)) && known.contains(&(a, c))))
    });
    let bridged = (l + 1..g).any(|m| known.contains(&(g, m)) && known.contains(&(m, l)));

    let mut out = Vec::new();
    if s_t {
        out.push("ST-1");
    }
    if !s_t && s_any {
        out.push("ST-2");
    }
    if !s_any && ac_t {
        out.push("AfT-1");
    }
    if !s_any && !ac_t && eq_t {
        out.push("AfT-2");
    }
    if !s_any && !ac_t && !eq_t && ac_any {
        out.push("AfT-3");
    }
    if !s_any && !ac_any && !eq_t && eq_any {
        out.push("AfT-4");
    }
    if !known.contains(&(g, l)) && bridged && template {
        out.push("AnT");
    }
    out
}
