use std::io::{BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use halma::concept::describe_state;
use halma::env::TaskParams;
use halma::formats::{read_log, read_memory, read_set, write_log, write_set, LoggedEpisode};
use halma::kb::{build_kb, DEFAULT_THETA};
use halma::mazegen::{generate_set, GenConfig, ProblemSet};
use halma::metrics::{evaluate, Report};
use halma::oracle::run_oracle_episode;
use halma::proto::{oracle_over_wire, serve_stream, LineClient, ServerState, Session};
use halma::render::{render_panel_with, DigitBank, Pool, RenderOptions};
use halma::testgen::generate_suite;
use halma::types::Position;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Directory holding MNIST IDX files; a procedural digit bank is used when unset.
const MNIST_ENV: &str = "HALMA_MNIST_DIR";

#[derive(Parser)]
#[command(name = "halma", version, about = "Maze problems, oracle, evaluation and generalization tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Train,
    Test,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Profile::Train)]
    profile: Profile,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    branch_depth_mean: Option<f64>,
    #[arg(long)]
    branching_mean: Option<f64>,
    #[arg(long)]
    max_digit: Option<u8>,
}

impl GenArgs {
    fn config(&self) -> GenConfig {
        let mut cfg = match self.profile {
            Profile::Train => GenConfig::train(self.seed),
            Profile::Test => GenConfig::test(self.seed),
        };
        if let Some(v) = self.grid_size {
            cfg.grid_size = v;
        }
        if let Some(v) = self.branch_depth_mean {
            cfg.branch_depth_mean = v;
        }
        if let Some(v) = self.branching_mean {
            cfg.branching_mean = v;
        }
        if let Some(v) = self.max_digit {
            cfg.max_digit = v;
        }
        cfg
    }
}

#[derive(clap::Args)]
struct TaskArgs {
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    max_opt_len: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    max_trials: u64,
}

impl TaskArgs {
    fn params(&self) -> TaskParams {
        TaskParams { max_trials: self.max_trials as usize, ..TaskParams::with_max_opt_len(self.max_opt_len as usize) }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem set.
    Gen {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print colour, digit and panel-size histograms of a set.
    Stats {
        #[arg(long)]
        set: PathBuf,
    },
    /// Run the oracle on every problem of a set.
    Oracle {
        #[arg(long)]
        set: PathBuf,
        #[command(flatten)]
        task: TaskArgs,
        /// Write the episode log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write per-episode metrics as a table here.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Play against a running server instead of in process.
        #[arg(long)]
        connect: Option<String>,
    },
    /// Score episode logs against a problem set.
    Eval {
        #[arg(long)]
        set: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        log: Vec<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Build a knowledge base from a memory file or log and emit test suites.
    Testgen {
        #[arg(long)]
        memory: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: u32,
        #[arg(long, default_value_t = 150, value_parser = clap::value_parser!(u64).range(1..))]
        target: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also print the knowledge base.
        #[arg(long)]
        dump_kb: bool,
    },
    /// Render a panel of a problem to PNG.
    Render {
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        problem: String,
        /// Cell as x,y; defaults to the start.
        #[arg(long)]
        at: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed digit scale instead of a random one.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Serve the agent protocol over TCP or stdio.
    Serve {
        #[arg(long)]
        set: PathBuf,
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, conflicts_with = "stdio")]
        listen: Option<String>,
        #[arg(long)]
        stdio: bool,
        /// Seed of the visual renderer.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Append finished episodes of every session here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn digit_bank() -> Result<DigitBank> {
    match std::env::var_os(MNIST_ENV) {
        Some(dir) => Ok(DigitBank::load_dir(Path::new(&dir))?),
        None => Ok(DigitBank::synthetic(60, 0)),
    }
}

fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    std::fs::write(path, data).with_context(|| format!("cannot write {}", path.display()))
}

fn finish_report(report: &Report, table: Option<&Path>) -> Result<()> {
    print!("{}", report.text());
    if let Some(path) = table {
        write_file(path, report.tsv().as_bytes())?;
    }
    Ok(())
}

fn run_oracle(set: &ProblemSet, params: &TaskParams, connect: Option<&str>) -> Result<Vec<LoggedEpisode>> {
    let mut episodes = Vec::with_capacity(set.problems.len());
    for p in &set.problems {
        let log = match connect {
            None => run_oracle_episode(&p.maze, params)?,
            Some(addr) => {
                let stream = TcpStream::connect(addr).with_context(|| format!("cannot connect to {addr}"))?;
                stream.set_nodelay(true)?;
                let reader = BufReader::new(stream.try_clone()?);
                let mut client = LineClient::new(reader, stream);
                oracle_over_wire(&mut client, &p.id, params).with_context(|| format!("problem {}", p.id))?
            }
        };
        episodes.push(LoggedEpisode { problem_id: p.id.clone(), params: params.clone(), log });
    }
    Ok(episodes)
}

fn parse_cell(s: &str) -> Result<Position> {
    let (x, y) = s.split_once(',').ok_or_else(|| anyhow!("cell {s:?} is not x,y"))?;
    Ok(Position::new(x.trim().parse()?, y.trim().parse()?))
}

/// Appends episodes to a log, numbering them across sessions.
struct Recorder {
    path: Option<PathBuf>,
    next: usize,
}

impl Recorder {
    fn record(&mut self, episodes: Vec<LoggedEpisode>) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        for ep in &episodes {
            halma::formats::append_episode(&mut f, self.next, ep)
                .with_context(|| format!("cannot write {}", path.display()))?;
            self.next += 1;
        }
        Ok(())
    }
}

fn serve(state: ServerState, listen: Option<String>, stdio: bool, log: Option<PathBuf>) -> Result<()> {
    let state = Arc::new(state);
    let mut recorder = Recorder { path: log, next: 0 };
    if stdio {
        let stdin = std::io::stdin().lock();
        let episodes = serve_stream(Session::new(state), stdin, std::io::stdout().lock())?;
        return recorder.record(episodes);
    }
    let addr = listen.unwrap_or_else(|| "127.0.0.1:7878".into());
    let listener = TcpListener::bind(&addr).with_context(|| format!("cannot listen on {addr}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    let (tx, rx) = std::sync::mpsc::channel::<Vec<LoggedEpisode>>();
    let logger = std::thread::spawn(move || {
        for episodes in rx {
            if let Err(e) = recorder.record(episodes) {
                eprintln!("error: {e:#}");
            }
        }
    });
    for conn in listener.incoming() {
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                eprintln!("accept failed: {e}");
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        let state = state.clone();
        let tx = tx.clone();
        std::thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(e) => return eprintln!("session setup failed: {e}"),
            };
            match serve_stream(Session::new(state), reader, stream) {
                Ok(episodes) => {
                    let _ = tx.send(episodes);
                }
                Err(e) => eprintln!("session ended: {e}"),
            }
        });
    }
    drop(tx);
    logger.join().map_err(|_| anyhow!("log writer panicked"))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { n, gen, out } => {
            let cfg = gen.config();
            let set = generate_set(n as usize, &cfg)?;
            write_set(&out, &set)?;
            print!("{}", set.stats.report());
        }
        Command::Stats { set } => {
            let set = read_set(&set)?;
            print!("{}", set.stats.report());
        }
        Command::Oracle { set, task, log, table, connect } => {
            let set = read_set(&set)?;
            let episodes = run_oracle(&set, &task.params(), connect.as_deref())?;
            if let Some(path) = &log {
                write_log(path, &episodes)?;
            }
            finish_report(&evaluate(&episodes, &set.problems)?, table.as_deref())?;
        }
        Command::Eval { set, log, table } => {
            let set = read_set(&set)?;
            let mut episodes = Vec::new();
            for path in &log {
                episodes.extend(read_log(path)?);
            }
            finish_report(&evaluate(&episodes, &set.problems)?, table.as_deref())?;
        }
        Command::Testgen { memory, theta, target, seed, out_dir, dump_kb } => {
            let mem = read_memory(&memory)?;
            let kb = build_kb(&mem, theta);
            if dump_kb {
                print!("{}", kb.dump());
            }
            let cfg = GenConfig::test(seed);
            let suite = generate_suite(&kb, &cfg, target as usize);
            std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
            for (cat, problems) in &suite.problems {
                if problems.is_empty() {
                    continue;
                }
                let set = ProblemSet {
                    stats: halma::mazegen::set_stats(problems),
                    problems: problems.clone(),
                    config: cfg.clone(),
                };
                write_set(&out_dir.join(format!("{}.hps", cat.label())), &set)?;
            }
            print!("{}", suite.summary());
        }
        Command::Render { set, problem, at, seed, scale, out } => {
            let set = read_set(&set)?;
            let p = set
                .problems
                .iter()
                .find(|p| p.id == problem)
                .ok_or_else(|| anyhow!("no problem {problem:?} in the set"))?;
            let cell = match at {
                Some(s) => parse_cell(&s)?,
                None => p.maze.start,
            };
            let desc = describe_state(&p.maze, cell)?;
            let pool = if p.tag.is_some() { Pool::Heldout } else { Pool::Train };
            let mut opts = RenderOptions::default();
            if let Some(s) = scale {
                if !(0.1..=4.0).contains(&s) {
                    bail!("scale {s} outside 0.1..=4");
                }
                opts.scale_min = s;
                opts.scale_max = s;
            }
            let bank = digit_bank()?;
            let (img, _) = render_panel_with(&desc, &bank, pool, &opts, &mut ChaCha8Rng::seed_from_u64(seed))?;
            write_file(&out, &img.to_png()?)?;
        }
        Command::Serve { set, task, listen, stdio, seed, log } => {
            let set = read_set(&set)?;
            let mut state = ServerState::new(set.problems, task.params())?;
            state.bank = Some(digit_bank()?);
            state.seed = seed;
            serve(state, listen, stdio, log)?;
        }
    }
    std::io::stdout().flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
