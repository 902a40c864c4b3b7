//! Line-delimited JSON protocol between an agent and a simulation session.
//!
//! Requests, one per line:
//!
//! ```text
//! {"op":"reset","problem_id":"m0000","visual":"none","index":false}
//! {"op":"step","direction":"R","primitives":[3,2]}
//! {"op":"close"}
//! ```
//!
//! `visual` is `none` (default), `raw` (base64 of little-endian f32, row-major
//! 128x128x3) or `png`. `index` widens the symbolic rows with the slot index.
//!
//! Replies, one per line, fields always in this order:
//!
//! ```text
//! {"type":"obs","shape":[11,19],"symbolic":[...],"visual":null,"reward":0.0,
//!  "trial_done":false,"episode_done":false,"info":{"valid":true,"trial_index":0,"reached_goal":false}}
//! {"type":"error","message":"..."}
//! {"type":"closed"}
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use base64::Engine as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    decode_symbolic, Env, EpisodeLog, Observation, StepRecord, SymbolicObs, TaskParams, TrialSummary, SLOTS,
};
use crate::error::{Error, Result};
use crate::formats::LoggedEpisode;
use crate::mazegen::Problem;
use crate::oracle::OracleAgent;
use crate::render::{render_panel, DigitBank, Pool};
use crate::types::{Direction, Move, PanelDescription};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualFormat {
    #[default]
    None,
    Raw,
    Png,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Reset {
        problem_id: String,
        #[serde(default)]
        visual: VisualFormat,
        #[serde(default)]
        index: bool,
    },
    Step {
        /// Letter (`R`) or name (`Right`).
        direction: String,
        primitives: Vec<u8>,
    },
    Close,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visual {
    pub format: VisualFormat,
    pub data: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyInfo {
    pub valid: bool,
    pub trial_index: usize,
    pub reached_goal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Obs {
        shape: [usize; 2],
        symbolic: Vec<u8>,
        visual: Option<Visual>,
        reward: f64,
        trial_done: bool,
        episode_done: bool,
        info: ReplyInfo,
    },
    Error {
        message: String,
    },
    Closed,
}

fn parse_direction(s: &str) -> Option<Direction> {
    let mut cs = s.chars();
    match (cs.next(), cs.next()) {
        (Some(c), None) => Direction::from_letter(c),
        _ => Direction::ALL.into_iter().find(|d| format!("{d:?}") == s),
    }
}

/// Problems and settings shared by every session of one server.
#[derive(Debug)]
pub struct ServerState {
    pub problems: BTreeMap<String, Problem>,
    pub params: TaskParams,
    pub bank: Option<DigitBank>,
    /// Seeds the visual renderer of each session.
    pub seed: u64,
}

impl ServerState {
    pub fn new(problems: Vec<Problem>, params: TaskParams) -> Result<ServerState> {
        params.validate()?;
        Ok(ServerState {
            problems: problems.into_iter().map(|p| (p.id.clone(), p)).collect(),
            params,
            bank: None,
            seed: 0,
        })
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// One agent connection. Owns its environment; nothing is shared between
/// sessions except the read-only server state.
pub struct Session {
    state: Arc<ServerState>,
    env: Option<Env>,
    problem_id: String,
    visual: VisualFormat,
    pool: Pool,
    rng: ChaCha8Rng,
    finished: Vec<LoggedEpisode>,
}

impl Session {
    pub fn new(state: Arc<ServerState>) -> Session {
        Session {
            rng: ChaCha8Rng::seed_from_u64(state.seed),
            state,
            env: None,
            problem_id: String::new(),
            visual: VisualFormat::None,
            pool: Pool::Train,
            finished: Vec::new(),
        }
    }

    fn flush_episode(&mut self) {
        if let Some(env) = self.env.take() {
            if !env.log().steps.is_empty() {
                self.finished.push(LoggedEpisode {
                    problem_id: self.problem_id.clone(),
                    params: env.params().clone(),
                    log: env.log().clone(),
                });
            }
        }
    }

    /// Episodes run so far, including the one in progress.
    pub fn into_episodes(mut self) -> Vec<LoggedEpisode> {
        self.flush_episode();
        self.finished
    }

    fn obs_reply(
        &mut self,
        obs: &Observation,
        reward: f64,
        trial_done: bool,
        episode_done: bool,
        info: ReplyInfo,
    ) -> Result<Reply> {
        let visual = match self.visual {
            VisualFormat::None => None,
            fmt => {
                let bank = self
                    .state
                    .bank
                    .as_ref()
                    .ok_or_else(|| Error::Protocol("server has no digit bank for visual observations".into()))?;
                let img = render_panel(&obs.desc, bank, self.pool, &mut self.rng)?;
                let bytes = match fmt {
                    VisualFormat::Png => img.to_png()?,
                    _ => img.to_le_bytes(),
                };
                Some(Visual { format: fmt, data: base64::engine::general_purpose::STANDARD.encode(bytes) })
            }
        };
        Ok(Reply::Obs {
            shape: [SLOTS, obs.symbolic.cols],
            symbolic: obs.symbolic.data.clone(),
            visual,
            reward,
            trial_done,
            episode_done,
            info,
        })
    }

    fn handle_request(&mut self, req: Request) -> Result<Reply> {
        match req {
            Request::Reset { problem_id, visual, index } => {
                let problem = self
                    .state
                    .problems
                    .get(&problem_id)
                    .ok_or_else(|| Error::Protocol(format!("unknown problem {problem_id:?}")))?;
                if visual != VisualFormat::None && self.state.bank.is_none() {
                    return Err(Error::Protocol("server has no digit bank for visual observations".into()));
                }
                let mut env = Env::new(problem.maze.clone(), self.state.params.clone())?;
                env.set_index_augmented(index);
                self.pool = if problem.tag.is_some() { Pool::Heldout } else { Pool::Train };
                self.flush_episode();
                self.rng = ChaCha8Rng::seed_from_u64(self.state.seed ^ fnv1a(&problem_id));
                self.problem_id = problem_id;
                self.visual = visual;
                let obs = env.reset()?;
                self.env = Some(env);
                let info = ReplyInfo { valid: true, trial_index: 0, reached_goal: false };
                self.obs_reply(&obs, 0.0, false, false, info)
            }
            Request::Step { direction, primitives } => {
                let d = parse_direction(&direction)
                    .ok_or_else(|| Error::Protocol(format!("unknown direction {direction:?}")))?;
                let mv = Move::new(d, primitives)?;
                let env = self.env.as_mut().ok_or_else(|| Error::Protocol("step before reset".into()))?;
                let out = env.step(&mv)?;
                let info = ReplyInfo {
                    valid: out.info.valid,
                    trial_index: out.info.trial_index,
                    reached_goal: out.info.reached_goal,
                };
                self.obs_reply(&out.obs, out.reward, out.trial_done, out.episode_done, info)
            }
            Request::Close => Ok(Reply::Closed),
        }
    }

    /// Handles one request line. Malformed lines produce an error reply and
    /// leave the session usable.
    pub fn handle_line(&mut self, line: &str) -> Reply {
        let req: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                return Reply::Error { message: Error::parse(e.column().saturating_sub(1), e.to_string()).to_string() }
            }
        };
        self.handle_request(req).unwrap_or_else(|e| Reply::Error { message: e.to_string() })
    }
}

pub fn reply_line(reply: &Reply) -> String {
    serde_json::to_string(reply).expect("reply serializes")
}

/// Serves one session over a byte stream until `close` or end of input.
pub fn serve_stream<R: BufRead, W: Write>(
    mut session: Session,
    reader: R,
    mut writer: W,
) -> std::io::Result<Vec<LoggedEpisode>> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(&line);
        let mut out = reply_line(&reply);
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
        if reply == Reply::Closed {
            break;
        }
    }
    Ok(session.into_episodes())
}

/// Something that answers one request line with one reply line.
pub trait Exchange {
    fn exchange(&mut self, request: &str) -> Result<String>;
}

impl Exchange for Session {
    fn exchange(&mut self, request: &str) -> Result<String> {
        Ok(reply_line(&self.handle_line(request)))
    }
}

/// Client end of a stream connection.
pub struct LineClient<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> LineClient<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        LineClient { reader, writer }
    }
}

impl<R: BufRead, W: Write> Exchange for LineClient<R, W> {
    fn exchange(&mut self, request: &str) -> Result<String> {
        let io = |e: std::io::Error| Error::Protocol(format!("transport: {e}"));
        self.writer.write_all(format!("{request}\n").as_bytes()).map_err(io)?;
        self.writer.flush().map_err(io)?;
        let mut line = String::new();
        if self.reader.read_line(&mut line).map_err(io)? == 0 {
            return Err(Error::Protocol("connection closed".into()));
        }
        Ok(line.trim_end().to_string())
    }
}

/// Records every exchanged pair as `> request` / `< reply` lines.
pub struct Transcript<'a, E: Exchange> {
    pub inner: &'a mut E,
    pub text: String,
}

impl<'a, E: Exchange> Transcript<'a, E> {
    pub fn new(inner: &'a mut E) -> Self {
        Transcript { inner, text: String::new() }
    }
}

impl<E: Exchange> Exchange for Transcript<'_, E> {
    fn exchange(&mut self, request: &str) -> Result<String> {
        let reply = self.inner.exchange(request)?;
        self.text.push_str(&format!("> {request}\n< {reply}\n"));
        Ok(reply)
    }
}

pub fn call<E: Exchange + ?Sized>(ex: &mut E, req: &Request) -> Result<Reply> {
    let line = serde_json::to_string(req).expect("request serializes");
    let reply = ex.exchange(&line)?;
    let reply: Reply = serde_json::from_str(&reply).map_err(|e| Error::Protocol(format!("unreadable reply: {e}")))?;
    if let Reply::Error { message } = &reply {
        return Err(Error::Protocol(format!("server error: {message}")));
    }
    Ok(reply)
}

/// Plays the oracle over the protocol, deciding only from decoded symbolic
/// observations. Returns the episode as the client saw it: `desc_after` is
/// the next observed panel, which after a finished trial is the start panel.
pub fn oracle_over_wire<E: Exchange + ?Sized>(ex: &mut E, problem_id: &str, params: &TaskParams) -> Result<EpisodeLog> {
    let reset = Request::Reset { problem_id: problem_id.to_string(), visual: VisualFormat::None, index: false };
    let mut reply = call(ex, &reset)?;
    let mut agent = OracleAgent::new(params.clone());
    let mut log = EpisodeLog::default();
    let mut t = 0;
    loop {
        let desc = observed_panel(&reply)?;
        let mv = agent.act(&desc)?;
        let step = Request::Step { direction: mv.direction.letter().to_string(), primitives: mv.primitives.clone() };
        reply = call(ex, &step)?;
        let Reply::Obs { reward, trial_done, episode_done, info, .. } = reply.clone() else {
            return Err(Error::Protocol("expected an observation".into()));
        };
        agent.feedback(info.valid, trial_done, info.reached_goal);
        log.steps.push(StepRecord {
            trial: log.trials.len(),
            t,
            desc_before: desc,
            mv,
            valid: info.valid,
            reward,
            desc_after: observed_panel(&reply)?,
        });
        t += 1;
        if trial_done {
            log.trials.push(TrialSummary { length: t, reached_goal: info.reached_goal });
            t = 0;
        }
        if episode_done {
            break;
        }
    }
    call(ex, &Request::Close)?;
    Ok(log)
}

fn observed_panel(reply: &Reply) -> Result<PanelDescription> {
    match reply {
        Reply::Obs { symbolic, .. } => decode_symbolic(&SymbolicObs::from_flat(symbolic.clone())?),
        _ => Err(Error::Protocol("expected an observation".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use crate::oracle::run_oracle_episode;

    fn state() -> Arc<ServerState> {
        let p = Problem { id: "fixture".into(), seed: 0, maze: fixture::worked_trial_maze(), tag: None };
        Arc::new(ServerState::new(vec![p], TaskParams::default()).unwrap())
    }

    #[test]
    fn malformed_line_keeps_session() {
        let mut s = Session::new(state());
        match s.handle_line("{not json") {
            Reply::Error { message } => assert!(message.contains("parse")),
            r => panic!("{r:?}"),
        }
        assert!(matches!(s.handle_line(r#"{"op":"step","direction":"R","primitives":[1]}"#), Reply::Error { .. }));
        assert!(matches!(s.handle_line(r#"{"op":"reset","problem_id":"fixture"}"#), Reply::Obs { .. }));
    }

    #[test]
    fn step_reward_passes_through() {
        let mut s = Session::new(state());
        s.handle_line(r#"{"op":"reset","problem_id":"fixture"}"#);
        let r = s.handle_line(r#"{"op":"step","direction":"Right","primitives":[1]}"#);
        let mut env = Env::new(fixture::worked_trial_maze(), TaskParams::default()).unwrap();
        env.reset().unwrap();
        let direct = env.step(&Move::new(Direction::Right, vec![1]).unwrap()).unwrap();
        match r {
            Reply::Obs { reward, symbolic, info, .. } => {
                assert_eq!(reward, direct.reward);
                assert_eq!(symbolic, direct.obs.symbolic.data);
                assert!(info.valid);
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn wire_oracle_matches_in_process() {
        let st = state();
        let mut s = Session::new(st.clone());
        let seen = oracle_over_wire(&mut s, "fixture", &st.params).unwrap();
        let direct = run_oracle_episode(&fixture::worked_trial_maze(), &st.params).unwrap();
        assert_eq!(seen.trials, direct.trials);
        for (a, b) in seen.steps.iter().zip(&direct.steps) {
            assert_eq!(
                (a.trial, a.t, &a.desc_before, &a.mv, a.valid, a.reward),
                (b.trial, b.t, &b.desc_before, &b.mv, b.valid, b.reward)
            );
        }
        let eps = s.into_episodes();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].log, direct);
    }

    #[test]
    fn step_after_done_is_an_error_reply() {
        let st = state();
        let mut s = Session::new(st.clone());
        oracle_over_wire(&mut s, "fixture", &st.params).unwrap();
        match s.handle_line(r#"{"op":"step","direction":"R","primitives":[1]}"#) {
            Reply::Error { message } => assert!(message.contains("after episode end")),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn visual_needs_a_bank() {
        let mut s = Session::new(state());
        let r = s.handle_line(r#"{"op":"reset","problem_id":"fixture","visual":"png"}"#);
        assert!(matches!(r, Reply::Error { .. }));
    }

    #[test]
    fn serve_stream_answers_each_line() {
        let input = "{\"op\":\"reset\",\"problem_id\":\"fixture\"}\n\n{\"op\":\"close\"}\n{\"op\":\"close\"}\n";
        let mut out = Vec::new();
        serve_stream(Session::new(state()), input.as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"type\":\"obs\",\"shape\":[11,19],\"symbolic\":["));
        assert!(text.ends_with("{\"type\":\"closed\"}\n"));
    }
}
