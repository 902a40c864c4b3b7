//! Hand-built mazes used as known references by tests and demos.

use crate::kb::MemEntry;
use crate::types::{Direction, Maze, Move, PanelDescription, Position};

fn build(path: &[(i32, i32)], branches: &[(i32, i32)]) -> Maze {
    let path: Vec<Position> = path.iter().map(|(x, y)| Position::new(*x, *y)).collect();
    let mut maze = Maze::from_path(10, &path).expect("fixture path is in bounds");
    for (x, y) in branches {
        maze.set_open(Position::new(*x, *y), true);
    }
    maze.place_hints();
    maze
}

/// The worked example trial: segments R5, D1, R2, D1 with a junction at every
/// cell of the first run, so the oracle explores in eight moves and replays
/// in four.
pub fn worked_trial_maze() -> Maze {
    build(
        &[(1, 2), (2, 2), (3, 2), (4, 2), (5, 2), (6, 2), (6, 3), (7, 3), (8, 3), (8, 4)],
        &[
            (0, 2),
            (1, 1),
            (2, 3),
            (2, 4),
            (3, 1),
            (3, 0),
            (4, 3),
            (5, 1),
            (5, 0),
            (6, 4),
            (6, 5),
            (6, 6),
            (8, 2),
            (8, 1),
            (8, 5),
        ],
    )
}

/// A start junction showing a right-hand crossing 2 away and a wall 5 away.
pub fn crossing_panel_maze() -> Maze {
    build(&[(1, 5), (2, 5), (3, 5), (4, 5), (5, 5), (6, 5), (6, 4), (6, 3)], &[(1, 4), (0, 5), (3, 6)])
}

fn panel(wall: [u8; 4], crossing: [Option<u8>; 4], goal: [i8; 2]) -> PanelDescription {
    PanelDescription { wall, crossing, goal, hint: None }
}

fn seen(wall: [u8; 4], crossing: [Option<u8>; 4], goal: [i8; 2]) -> MemEntry {
    let s = panel(wall, crossing, goal);
    MemEntry { desc_s: s, mv: Move::new(Direction::Up, vec![0]).expect("zero move"), valid: true, desc_s2: s }
}

fn moved(s: PanelDescription, d: Direction, prims: &[u8], s2: PanelDescription) -> MemEntry {
    MemEntry { desc_s: s, mv: Move::new(d, prims.to_vec()).expect("valid primitives"), valid: true, desc_s2: s2 }
}

/// A memory in which every test category has candidates, each entry repeated
/// `repeat` times:
///
/// - seen pairs <5,3|Up>, <4,3|Left>, <5,4|Right>, <8,7|Down>, <7,6|Left>
/// - a wall going 6 -> 4 under Left:2
/// - 7 consumed by Up:3+3+1 and 2 consumed by Up:2
pub fn rich_memory(repeat: usize) -> Vec<MemEntry> {
    let n = None;
    let base = [
        seen([0, 5, 0, 1], [n, Some(3), n, n], [1, -4]),
        seen([4, 0, 1, 0], [Some(3), n, n, n], [-2, 3]),
        seen([1, 0, 5, 0], [n, n, Some(4), n], [4, 0]),
        seen([0, 1, 0, 8], [n, n, n, Some(7)], [0, 6]),
        seen([7, 0, 2, 0], [Some(6), n, n, n], [-5, -1]),
        moved(panel([6, 0, 0, 0], [n; 4], [-6, 2]), Direction::Left, &[2], panel([4, 0, 2, 0], [n; 4], [-4, 2])),
        moved(panel([0, 7, 0, 0], [n; 4], [3, -7]), Direction::Up, &[3, 3, 1], panel([0, 0, 1, 7], [n; 4], [3, 0])),
        moved(panel([1, 2, 0, 0], [n; 4], [-1, -2]), Direction::Up, &[2], panel([0, 0, 0, 2], [n; 4], [-1, 0])),
    ];
    base.iter().flat_map(|e| std::iter::repeat_n(e.clone(), repeat)).collect()
}
