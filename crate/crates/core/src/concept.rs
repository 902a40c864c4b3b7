//! Executable semantics of the concept space: what a cell looks like, which
//! options exist, which are afforded, and what they cause.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Direction, HintSymbol, Maze, Move, PanelDescription, Position, MAX_DIGIT, MAX_PRIMITIVE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    /// Crossing digit below wall digit in one panel.
    SemanticLess,
    /// A digit equals the displacement of an option that consumed it.
    AffordEqual,
    /// A displacement strictly below the wall digit.
    AffordLess,
    /// Wall digit before equals wall digit after plus displacement.
    CausalEqual,
}

/// A typed relation between two magnitudes, e.g. `<5,3|Left>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub lhs: u8,
    pub rhs: u8,
    pub direction: Direction,
}

impl Relation {
    pub fn new(kind: RelationKind, lhs: u8, rhs: u8, direction: Direction) -> Result<Relation> {
        for v in [lhs, rhs] {
            if v == 0 || v > MAX_DIGIT {
                return Err(Error::Domain(format!("relation magnitude {v} outside 1..=9")));
            }
        }
        Ok(Relation { kind, lhs, rhs, direction })
    }

    /// Whether the relation is witnessed by a panel alone (semantic kind only).
    pub fn holds_in(&self, desc: &PanelDescription) -> bool {
        match self.kind {
            RelationKind::SemanticLess => {
                desc.wall(self.direction) == self.lhs && desc.crossing(self.direction) == Some(self.rhs)
            }
            _ => false,
        }
    }
}

/// Panel shown at `pos`.
pub fn describe_state(maze: &Maze, pos: Position) -> Result<PanelDescription> {
    if !maze.is_open(pos) {
        return Err(Error::NotOpen(pos));
    }
    let mut desc = PanelDescription::default();
    for d in Direction::ALL {
        let mut wall = 0u8;
        let mut crossing = None;
        let mut q = pos.step(d, 1);
        while maze.is_open(q) {
            wall += 1;
            if crossing.is_none() && maze.is_junction(q) {
                crossing = Some(wall);
            }
            q = q.step(d, 1);
        }
        desc.wall[d.index()] = wall;
        desc.crossing[d.index()] = crossing.filter(|c| *c < wall);
    }
    desc.goal = [(maze.goal.x - pos.x) as i8, (maze.goal.y - pos.y) as i8];
    if maze.is_junction(pos) {
        desc.hint = maze.hints.get(&pos).map(|d| HintSymbol::for_direction(*d));
    }
    Ok(desc)
}

/// Every option up to `max_opt_len` primitives: directions in `Left, Up,
/// Right, Down` order, then by length, then lexicographically.
pub fn enumerate_moves(max_opt_len: usize) -> Vec<Move> {
    let mut out = Vec::new();
    for d in Direction::ALL {
        for len in 1..=max_opt_len {
            let total = (MAX_PRIMITIVE as usize + 1).pow(len as u32);
            for code in 0..total {
                let mut prims = vec![0u8; len];
                let mut c = code;
                for slot in prims.iter_mut().rev() {
                    *slot = (c % 4) as u8;
                    c /= 4;
                }
                out.push(Move { direction: d, primitives: prims });
            }
        }
    }
    out
}

pub fn affordable(desc: &PanelDescription, mv: &Move) -> bool {
    mv.displacement() <= desc.wall(mv.direction) as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub new_pos: Position,
    pub valid: bool,
}

/// Applies a move; intermediate cells are skipped, not observed.
pub fn transition(maze: &Maze, pos: Position, mv: &Move) -> Result<Transition> {
    let desc = describe_state(maze, pos)?;
    if affordable(&desc, mv) {
        Ok(Transition { new_pos: pos.step(mv.direction, mv.displacement() as i32), valid: true })
    } else {
        Ok(Transition { new_pos: pos, valid: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: i32, y: i32) -> Position {
        Position::new(x, y)
    }

    /// A horizontal corridor (0..=5, 3) with a branch going up at x = 2.
    fn corridor() -> Maze {
        let path: Vec<Position> = (0..=5).map(|x| p(x, 3)).collect();
        let mut m = Maze::empty(10, path[0], path[5]);
        for c in &path {
            m.set_open(*c, true);
        }
        m.set_open(p(2, 2), true);
        m.optimal_path = path;
        m.place_hints();
        m
    }

    #[test]
    fn describe_counts_walls_and_crossings() {
        let m = corridor();
        let d = describe_state(&m, p(0, 3)).unwrap();
        assert_eq!(d.wall, [0, 0, 5, 0]);
        assert_eq!(d.crossing, [None, None, Some(2), None]);
        assert_eq!(d.goal, [5, 0]);
        assert_eq!(d.hint, None);
        let j = describe_state(&m, p(2, 3)).unwrap();
        assert_eq!(j.hint, Some(HintSymbol::Triangle));
        assert_eq!(j.wall, [2, 1, 3, 0]);
    }

    #[test]
    fn goal_cell_has_no_goal_digits() {
        let m = corridor();
        let d = describe_state(&m, m.goal).unwrap();
        assert_eq!(d.goal, [0, 0]);
        assert!(d.entries().iter().all(|(s, _)| !matches!(s, crate::types::Slot::Goal(_))));
        assert_eq!(d.wall(Direction::Right), 0);
    }

    #[test]
    fn closed_cell_is_a_domain_error() {
        let m = corridor();
        assert!(describe_state(&m, p(9, 9)).is_err());
    }

    #[test]
    fn move_counts() {
        assert_eq!(enumerate_moves(1).len(), 16);
        assert_eq!(enumerate_moves(5).len(), 4 * (4 + 16 + 64 + 256 + 1024));
        let max = enumerate_moves(5).iter().map(|m| m.displacement()).max();
        assert_eq!(max, Some(15));
        let first = &enumerate_moves(2)[..6];
        assert_eq!(first[0].primitives, vec![0]);
        assert_eq!(first[4].primitives, vec![0, 0]);
        assert_eq!(first[5].primitives, vec![0, 1]);
    }

    #[test]
    fn affordance_is_bounded_by_wall() {
        let mut d = PanelDescription::default();
        d.wall[Direction::Left.index()] = 5;
        let m = |p: &[u8]| Move::new(Direction::Left, p.to_vec()).unwrap();
        assert!(affordable(&d, &m(&[2, 1, 2])));
        assert!(!affordable(&d, &m(&[2, 2, 3])));
        assert!(affordable(&PanelDescription::default(), &m(&[0])));
    }

    #[test]
    fn transitions_land_or_stay() {
        let path: Vec<Position> = (0..=5).rev().map(|x| p(x, 3)).collect();
        let mut m = Maze::empty(10, p(5, 3), p(0, 3));
        for c in &path {
            m.set_open(*c, true);
        }
        m.set_open(p(2, 4), true);
        m.optimal_path = path;
        m.place_hints();
        let d = describe_state(&m, p(5, 3)).unwrap();
        assert_eq!((d.wall(Direction::Left), d.crossing(Direction::Left)), (5, Some(3)));

        let hop = Move::new(Direction::Left, vec![1, 2]).unwrap();
        let t = transition(&m, p(5, 3), &hop).unwrap();
        assert!(t.valid);
        assert_eq!(t.new_pos, p(2, 3));
        assert!(describe_state(&m, t.new_pos).unwrap().hint.is_some());

        let long = Move::new(Direction::Left, vec![3, 3]).unwrap();
        let t = transition(&m, p(5, 3), &long).unwrap();
        assert_eq!(t, Transition { new_pos: p(5, 3), valid: false });

        let two = Move::new(Direction::Left, vec![2]).unwrap();
        let t = transition(&m, p(5, 3), &two).unwrap();
        assert_eq!(describe_state(&m, t.new_pos).unwrap().wall(Direction::Left), 3);
    }

    #[test]
    fn semantic_relation_in_panel() {
        let m = corridor();
        let d = describe_state(&m, p(0, 3)).unwrap();
        let r = Relation::new(RelationKind::SemanticLess, 5, 2, Direction::Right).unwrap();
        assert!(r.holds_in(&d));
        assert!(Relation::new(RelationKind::SemanticLess, 10, 2, Direction::Right).is_err());
    }
}
