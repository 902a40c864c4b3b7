use std::collections::BTreeMap;

use halma::formats::{parse_set, serialize_set};
use halma::mazegen::{
    count_monotone_paths, generate_maze, generate_set, path_universe_size, sample_optimal_path, validate_path,
    GenConfig,
};
use halma::types::{Direction, Position};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lattice paths across an m x n block of cells, by walking them.
fn walk_count(m: usize, n: usize) -> u64 {
    fn go(x: usize, y: usize, m: usize, n: usize) -> u64 {
        if x == m - 1 && y == n - 1 {
            return 1;
        }
        let mut total = 0;
        if x + 1 < m {
            total += go(x + 1, y, m, n);
        }
        if y + 1 < n {
            total += go(x, y + 1, m, n);
        }
        total
    }
    go(0, 0, m, n)
}

/// Every path on a g x g grid whose steps each bring it one closer to its goal,
/// for every start/goal pair.
fn enumerate_valid_paths(g: i32) -> Vec<Vec<Position>> {
    fn extend(path: &mut Vec<Position>, goal: Position, g: i32, out: &mut Vec<Vec<Position>>) {
        let here = *path.last().unwrap();
        if here == goal {
            out.push(path.clone());
            return;
        }
        for d in Direction::ALL {
            let next = here.step(d, 1);
            if (0..g).contains(&next.x) && (0..g).contains(&next.y) && next.manhattan(goal) < here.manhattan(goal) {
                path.push(next);
                extend(path, goal, g, out);
                path.pop();
            }
        }
    }
    let cells: Vec<Position> = (0..g).flat_map(|y| (0..g).map(move |x| Position::new(x, y))).collect();
    let mut out = Vec::new();
    for s in &cells {
        for t in &cells {
            if s != t {
                extend(&mut vec![*s], *t, g, &mut out);
            }
        }
    }
    out
}

fn shape(path: &[Position]) -> Vec<(i32, i32)> {
    path.windows(2).map(|w| (w[1].x - w[0].x, w[1].y - w[0].y)).collect()
}

#[test]
fn binomial_counts_match_walking() {
    for m in 1..=6 {
        for n in 1..=6 {
            assert_eq!(count_monotone_paths(m, n).unwrap(), walk_count(m, n), "{m}x{n}");
        }
    }
    assert_eq!(count_monotone_paths(3, 2).unwrap(), 3);
    assert!(count_monotone_paths(0, 3).is_err());
}

#[test]
fn small_grid_universe_matches_enumeration() {
    let paths = enumerate_valid_paths(4);
    let mut by_span: BTreeMap<(i32, i32), u64> = BTreeMap::new();
    for p in &paths {
        let (s, t) = (p[0], *p.last().unwrap());
        *by_span.entry(((t.x - s.x).abs(), (t.y - s.y).abs())).or_default() += 1;
    }
    let placements = |a: i32, b: i32| -> u64 {
        let signs = if a == 0 || b == 0 { 2 } else { 4 };
        (signs * (4 - a) * (4 - b)) as u64
    };
    for ((a, b), n) in &by_span {
        let per = count_monotone_paths(*a as usize + 1, *b as usize + 1).unwrap();
        assert_eq!(*n, per * placements(*a, *b), "span ({a},{b})");
    }
    let mut shapes: Vec<_> = paths.iter().map(|p| shape(p)).collect();
    shapes.sort();
    shapes.dedup();
    assert_eq!(shapes.len() as u64, path_universe_size(4, 9));
    assert_eq!(path_universe_size(10, 9), 738_980);
}

#[test]
fn sampling_is_uniform_over_small_grid_shapes() {
    let paths = enumerate_valid_paths(4);
    let mut universe: Vec<_> = paths.iter().map(|p| shape(p)).collect();
    universe.sort();
    universe.dedup();
    let k = universe.len();
    let index: BTreeMap<_, usize> = universe.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();

    let cfg = GenConfig { grid_size: 4, ..GenConfig::train(0) };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let samples = 10_000;
    let mut counts = vec![0u64; k];
    for _ in 0..samples {
        let path = sample_optimal_path(&cfg, &mut rng);
        assert!(path.iter().all(|p| (0..4).contains(&p.x) && (0..4).contains(&p.y)));
        counts[index[&shape(&path)]] += 1;
    }
    let expected = samples as f64 / k as f64;
    let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
    let dof = (k - 1) as f64;
    let band = 3.0 * (2.0 * dof).sqrt();
    assert!((chi2 - dof).abs() <= band, "chi2 {chi2:.1} outside {dof} ± {band:.1}");
}

#[test]
fn sampled_paths_are_valid_and_c_shapes_are_not() {
    let cfg = GenConfig::train(0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let path = sample_optimal_path(&cfg, &mut rng);
        assert!(validate_path(&path, *path.last().unwrap()).unwrap());
    }
    for _ in 0..1000 {
        // out along one axis, across, and back: a C
        let out = rng.random_range(1..=3);
        let across = rng.random_range(1..=4);
        let (x0, y0) = (rng.random_range(0..3), rng.random_range(0..5));
        let mut path = vec![Position::new(x0, y0)];
        let moves = std::iter::repeat_n(Direction::Right, out)
            .chain(std::iter::repeat_n(Direction::Down, across))
            .chain(std::iter::repeat_n(Direction::Left, out));
        for d in moves {
            let next = path.last().unwrap().step(d, 1);
            path.push(next);
        }
        assert!(!validate_path(&path, *path.last().unwrap()).unwrap());
    }
}

#[test]
fn malformed_paths_are_errors() {
    assert!(validate_path(&[], Position::new(0, 0)).is_err());
    let jump = [Position::new(0, 0), Position::new(2, 0)];
    assert!(validate_path(&jump, Position::new(2, 0)).is_err());
    let wrong_end = [Position::new(0, 0), Position::new(1, 0)];
    assert!(validate_path(&wrong_end, Position::new(3, 3)).is_err());
}

fn is_tree(maze: &halma::types::Maze) -> bool {
    let cells: Vec<Position> = maze.open_cells().collect();
    let edges: usize = cells
        .iter()
        .map(|c| [Direction::Right, Direction::Down].iter().filter(|d| maze.is_open(c.step(**d, 1))).count())
        .sum();
    // connected with |E| = |V| - 1
    let mut seen = vec![cells[0]];
    let mut stack = vec![cells[0]];
    while let Some(c) = stack.pop() {
        for d in Direction::ALL {
            let n = c.step(d, 1);
            if maze.is_open(n) && !seen.contains(&n) {
                seen.push(n);
                stack.push(n);
            }
        }
    }
    seen.len() == cells.len() && edges + 1 == cells.len()
}

fn bfs_from_goal(maze: &halma::types::Maze) -> BTreeMap<Position, u32> {
    let mut dist = BTreeMap::from([(maze.goal, 0)]);
    let mut queue = std::collections::VecDeque::from([maze.goal]);
    while let Some(c) = queue.pop_front() {
        for d in Direction::ALL {
            let n = c.step(d, 1);
            if maze.is_open(n) && !dist.contains_key(&n) {
                dist.insert(n, dist[&c] + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_mazes_are_sound(seed in any::<u64>(), test_profile in any::<bool>()) {
        let cfg = if test_profile { GenConfig::test(0) } else { GenConfig::train(0) };
        let maze = generate_maze(&cfg, seed).unwrap();
        prop_assert!(maze.check().is_ok());
        prop_assert!(is_tree(&maze));
        prop_assert!(validate_path(&maze.optimal_path, maze.goal).unwrap());
        prop_assert_eq!(maze.optimal_path[0], maze.start);
        let dist = bfs_from_goal(&maze);
        for (cell, d) in &maze.hints {
            let next = cell.step(*d, 1);
            prop_assert!(maze.is_open(next));
            prop_assert_eq!(dist[&next] + 1, dist[cell], "hint at {} leads away from the goal", cell);
            if let Some(at) = maze.optimal_path.iter().position(|p| p == cell) {
                prop_assert_eq!(next, maze.optimal_path[at + 1]);
            }
        }
    }

    #[test]
    fn set_files_round_trip(seed in 0u64..1000, n in 1usize..4) {
        let set = generate_set(n, &GenConfig::train(seed)).unwrap();
        let text = serialize_set(&set);
        let back = parse_set(&text).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(serialize_set(&back), text);
    }
}

#[test]
fn generation_is_deterministic() {
    let a = generate_set(20, &GenConfig::train(9)).unwrap();
    let b = generate_set(20, &GenConfig::train(9)).unwrap();
    assert_eq!(serialize_set(&a), serialize_set(&b));
    let c = generate_set(20, &GenConfig::train(10)).unwrap();
    assert_ne!(serialize_set(&a), serialize_set(&c));
}

#[test]
fn bad_configs_are_rejected() {
    assert!(generate_set(0, &GenConfig::train(0)).is_err());
    let bad = GenConfig { grid_size: 1, ..GenConfig::train(0) };
    assert!(generate_set(1, &bad).is_err());
    let bad = GenConfig { max_digit: 0, ..GenConfig::train(0) };
    assert!(generate_maze(&bad, 0).is_err());
}
