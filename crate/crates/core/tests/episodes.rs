mod common;

use halma::env::{episode_return, Env, EpisodeLog, StepRecord, TaskParams, TrialSummary};
use halma::fixture::worked_trial_maze;
use halma::mazegen::{generate_maze, GenConfig};
use halma::metrics::{efficiency, goal_rate, valid_ratio};
use halma::oracle::{optimal_plan_length, run_oracle_episode};
use halma::types::{Direction, Maze, Move, PanelDescription, Position};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mv(d: Direction, prims: &[u8]) -> Move {
    Move::new(d, prims.to_vec()).unwrap()
}

fn corridor() -> Maze {
    let path: Vec<Position> = (0..5).map(|x| Position::new(x, 0)).collect();
    Maze::from_path(10, &path).unwrap()
}

fn distance(desc: &PanelDescription) -> f64 {
    (desc.goal[0].unsigned_abs() + desc.goal[1].unsigned_abs()) as f64
}

#[test]
fn reward_terms_follow_the_task_table() {
    let mut env = Env::new(corridor(), TaskParams::default()).unwrap();
    env.reset().unwrap();
    let r = env.step(&mv(Direction::Right, &[2])).unwrap();
    assert_eq!(r.reward, 2.0);
    let r = env.step(&mv(Direction::Left, &[3])).unwrap();
    assert_eq!(r.reward, -5.0);
    assert!(!r.info.valid);
    let r = env.step(&mv(Direction::Left, &[1])).unwrap();
    assert_eq!(r.reward, -1.0);
    let r = env.step(&mv(Direction::Right, &[3])).unwrap();
    assert_eq!(r.reward, 103.0);
    assert!(r.trial_done);
    let mut env = Env::new(corridor(), TaskParams::default()).unwrap();
    env.reset().unwrap();
    env.step(&mv(Direction::Right, &[2])).unwrap();
    let r = env.step(&mv(Direction::Right, &[1, 1])).unwrap();
    assert_eq!(r.reward, 102.0);
}

#[test]
fn discounted_return_of_a_two_trial_log() {
    let step = |trial, t, reward| StepRecord {
        trial,
        t,
        desc_before: PanelDescription::default(),
        mv: mv(Direction::Up, &[0]),
        valid: true,
        reward,
        desc_after: PanelDescription::default(),
    };
    let log = EpisodeLog {
        steps: vec![step(0, 0, 1.5), step(0, 1, -5.0), step(1, 0, 102.0)],
        trials: vec![TrialSummary { length: 2, reached_goal: false }, TrialSummary { length: 1, reached_goal: true }],
    };
    let g: f64 = 0.95;
    let by_hand = 1.5 + 0.95 * -5.0 + 0.9025 * 102.0;
    assert!((episode_return(&log, g) - by_hand).abs() < 1e-12);
    assert!((by_hand - 88.805).abs() < 1e-12);
}

#[test]
fn worked_trial_reproduces_lengths_and_efficiency() {
    let maze = worked_trial_maze();
    let params = TaskParams::with_max_opt_len(5);
    let log = run_oracle_episode(&maze, &params).unwrap();
    let lengths: Vec<usize> = log.trials.iter().map(|t| t.length).collect();
    assert_eq!(lengths, [8, 4, 4, 4, 4, 4, 4, 4, 4, 4]);
    let tau = optimal_plan_length(&maze, 5);
    assert_eq!(tau, 4);
    let by_hand = (4.0 / 8.0 + 9.0 * 1.0) / 10.0;
    assert_eq!(efficiency(&log, tau, 10).unwrap(), by_hand);
    assert_eq!(by_hand, 0.95);
    assert_eq!(goal_rate(&log, 10), 1.0);
    assert_eq!(valid_ratio(&log).unwrap(), 1.0);
}

#[test]
fn efficiency_rejects_trials_shorter_than_optimal() {
    let log = run_oracle_episode(&worked_trial_maze(), &TaskParams::default()).unwrap();
    assert!(efficiency(&log, 5, 10).is_err());
    assert!(efficiency(&log, 0, 10).is_err());
    assert!(valid_ratio(&EpisodeLog::default()).is_err());
}

fn small_params(h: usize, n: usize, l: usize, opt: usize) -> TaskParams {
    TaskParams { max_trial_steps: h, max_trials: n, max_episode_steps: l, max_opt_len: opt, ..TaskParams::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_episodes_respect_budgets(seed in any::<u64>(), h in 1usize..12, n in 1usize..5, l in 1usize..40, opt in 1usize..4) {
        let maze = generate_maze(&GenConfig::train(0), seed).unwrap();
        let params = small_params(h, n, l, opt);
        let mut env = Env::new(maze.clone(), params.clone()).unwrap();
        let start = env.reset().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut steps = 0;
        while !env.is_done() {
            let d = Direction::ALL[rng.random_range(0..4)];
            let prims: Vec<u8> = (0..rng.random_range(1..=opt)).map(|_| rng.random_range(0..=3)).collect();
            let out = env.step(&Move::new(d, prims).unwrap()).unwrap();
            steps += 1;
            let rec = env.log().steps.last().unwrap().clone();
            let mut expected = distance(&rec.desc_before) - distance(&rec.desc_after);
            if !rec.valid {
                expected += -5.0;
            }
            if rec.desc_after.goal == [0, 0] {
                expected += 100.0;
            }
            prop_assert_eq!(out.reward, expected);
            prop_assert!(rec.t < h);
            if out.trial_done {
                prop_assert_eq!(&out.obs, &start);
                prop_assert_eq!(env.position(), maze.start);
            }
        }
        prop_assert!(steps <= l);
        prop_assert!(env.log().trials.len() <= n);
        prop_assert!(env.log().trials.iter().all(|t| t.length <= h));
        let pos = env.position();
        let len = env.log().steps.len();
        prop_assert!(env.step(&Move::new(Direction::Up, vec![1]).unwrap()).is_err());
        prop_assert_eq!(env.position(), pos);
        prop_assert_eq!(env.log().steps.len(), len);
        let log = env.log();
        let va = valid_ratio(log).unwrap();
        let gr = goal_rate(log, n);
        prop_assert!((0.0..=1.0).contains(&va));
        prop_assert!((0.0..=1.0).contains(&gr));
    }

    #[test]
    fn oracle_is_optimal_after_the_first_trial(seed in any::<u64>(), opt in 1usize..=5, test_profile in any::<bool>()) {
        let cfg = if test_profile { GenConfig::test(0) } else { GenConfig::train(0) };
        let maze = generate_maze(&cfg, seed).unwrap();
        let params = TaskParams::with_max_opt_len(opt);
        let log = run_oracle_episode(&maze, &params).unwrap();
        prop_assert_eq!(valid_ratio(&log).unwrap(), 1.0);
        prop_assert_eq!(goal_rate(&log, params.max_trials), 1.0);
        let tau = optimal_plan_length(&maze, opt);
        for t in &log.trials[1..] {
            prop_assert_eq!(t.length, tau);
        }
        let eff = efficiency(&log, tau, params.max_trials).unwrap();
        prop_assert!(eff > 0.0 && eff <= 1.0);
        for s in log.trial_steps(0) {
            let at = Position::new(maze.goal.x - s.desc_after.goal[0] as i32, maze.goal.y - s.desc_after.goal[1] as i32);
            prop_assert!(maze.optimal_path.contains(&at), "trial 1 left the optimal path at {}", at);
        }
    }

    #[test]
    fn random_agent_metrics_stay_in_range(seed in any::<u64>()) {
        let maze = generate_maze(&GenConfig::train(0), seed).unwrap();
        let params = small_params(30, 4, 120, 3);
        let log = common::random_episode(&maze, &params, seed);
        let tau = optimal_plan_length(&maze, 3);
        for v in [valid_ratio(&log).unwrap(), goal_rate(&log, 4), efficiency(&log, tau, 4).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v), "{}", v);
        }
    }
}
