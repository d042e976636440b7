//! Per-agent protocol state machine.
//!
//! [`step_fsm`] is pure: it maps an agent and one event to the agent's next
//! state plus the messages, timers and radio actions the engine must carry
//! out. Timers carry the agent's generation at the time they were armed and
//! are ignored once the agent has moved on.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::messages::{ControlMessage, Destination, MessageKind, Outcome, Payload, Schedule};
use crate::analytics::Variation;
use crate::channel::OnOffChannel;
use crate::selection::{select_time_invariant, select_time_varying, CandidateSu};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Idle,
    Source,
    Destination,
    Cooperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmState {
    Idle,
    // source
    WaitRCts,
    PairSensing,
    WaitSCts,
    WaitFeedback,
    WaitResults,
    WaitTCts,
    Transmitting,
    WaitAck,
    Backoff,
    // destination
    DestSensing,
    WaitSRts,
    WaitCoop,
    WaitTRts,
    Receiving,
    // cooperator
    WaitCRts,
    CoopSensing,
    CoopReported,
}

impl FsmState {
    /// Cooperators in these states have given up their own link.
    pub fn silenced(self) -> bool {
        matches!(self, Self::CoopSensing | Self::CoopReported)
    }
}

impl fmt::Display for FsmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimerKind {
    /// Waiting for the CTS of a unicast handshake or an ACK.
    Reply,
    Feedback,
    Results,
    Backoff,
    /// Cooperator waiting for grouping or the next instruction.
    Cooperation,
    /// Destination waiting for the source to finish cooperative sensing.
    Session,
}

/// Work to resume once a backoff expires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pending {
    ResendRRts,
    ResendSRts,
    ResendCsr,
    ResendTRts,
    Retransmit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Feedback {
    id: usize,
    tau: f64,
    rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Vote {
    team: usize,
    busy: bool,
    rate: f64,
}

/// Bookkeeping of a source running cooperative sensing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceSession {
    feedback: Vec<Feedback>,
    schedule: Option<Arc<Schedule>>,
    round: usize,
    votes: Vec<(usize, Vote)>,
}

/// A cooperator's place in the current schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub team: usize,
    pub member: usize,
    pub schedule: Arc<Schedule>,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuAgent {
    pub id: usize,
    pub role: Role,
    pub state: FsmState,
    pub generation: u64,
    pub peer: Option<usize>,
    /// Pair channel, data channel or the channel a cooperator is sensing.
    pub channel: Option<usize>,
    /// Local verdict of the pair sensing (source) or the joint one
    /// (destination).
    pub busy: Option<bool>,
    pub last_sense_time: f64,
    pub retries: u32,
    pub pending: Option<Pending>,
    pub session: Option<SourceSession>,
    pub assignment: Option<Assignment>,
}

impl SuAgent {
    pub fn new(id: usize) -> Self {
        Self {
            id,
            role: Role::Idle,
            state: FsmState::Idle,
            generation: 0,
            peer: None,
            channel: None,
            busy: None,
            last_sense_time: 0.0,
            retries: 0,
            pending: None,
            session: None,
            assignment: None,
        }
    }

    /// Drops all session data and returns to idle.
    pub fn reset(&mut self) {
        let id = self.id;
        let generation = self.generation + 1;
        let last = self.last_sense_time;
        *self = Self::new(id);
        self.generation = generation;
        self.last_sense_time = last;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FsmEvent {
    /// The engine elected this agent source of a new cycle.
    Start { dest: usize, channel: usize },
    Receive(ControlMessage),
    Timeout { kind: TimerKind, token: u64 },
    SenseDone { channel: usize, busy: bool, rate: f64 },
    DataEnd { ok: bool },
}

impl FsmEvent {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Start { .. } => "start",
            Self::Receive(_) => "recv",
            Self::Timeout { .. } => "timeout",
            Self::SenseDone { .. } => "sensed",
            Self::DataEnd { ok: true } => "data-ok",
            Self::DataEnd { ok: false } => "data-fail",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Sense { channel: usize },
    Transmit { channel: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimerRequest {
    pub kind: TimerKind,
    pub delay: f64,
    pub token: u64,
}

/// Fused verdict of one team in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeamDecision {
    pub round: usize,
    pub team: usize,
    pub channel: usize,
    pub busy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub agent: SuAgent,
    pub emitted: Vec<ControlMessage>,
    pub timers: Vec<TimerRequest>,
    pub actions: Vec<Action>,
    pub decisions: Vec<TeamDecision>,
    pub fault: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timers {
    pub reply: f64,
    pub feedback: f64,
    pub results: f64,
    pub cooperation: f64,
    pub session: f64,
    pub slot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackoffWindow {
    pub initial: u32,
    pub max: u32,
}

/// Protocol constants shared by every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub teams: usize,
    pub team_size: usize,
    pub candidates: usize,
    pub variation: Variation,
    pub used_channel: OnOffChannel,
    pub timers: Timers,
    /// `None` means zero backoff.
    pub backoff: Option<BackoffWindow>,
    pub max_retries: u32,
    /// Give up at once when a data exchange is not acknowledged.
    pub abandon_on_failure: bool,
    pub message_length: u32,
}

/// Per-step inputs the engine supplies.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub now: f64,
    pub params: &'a ProtocolParams,
    /// Current rate of this agent's own link, reported in feedback.
    pub link_rate: f64,
    /// Channel visiting order of the current cycle.
    pub channel_order: &'a [usize],
    /// Uniform draw for the backoff length.
    pub backoff_u: f64,
}

struct Step<'a> {
    ctx: &'a StepContext<'a>,
    agent: SuAgent,
    emitted: Vec<ControlMessage>,
    timers: Vec<TimerRequest>,
    actions: Vec<Action>,
    decisions: Vec<TeamDecision>,
    fault: Option<String>,
}

impl<'a> Step<'a> {
    fn goto(&mut self, state: FsmState) {
        self.agent.state = state;
        self.agent.generation += 1;
        if state == FsmState::Idle {
            self.agent.reset();
        }
    }

    fn send(&mut self, kind: MessageKind, dst: Destination, payload: Payload) {
        self.emitted.push(ControlMessage {
            kind,
            src: self.agent.id,
            dst,
            payload,
            length: self.ctx.params.message_length,
        });
    }

    fn unicast(&mut self, kind: MessageKind, payload: Payload) {
        let peer = self.agent.peer.expect("peer is set while in a session");
        self.send(kind, Destination::Unicast(peer), payload);
    }

    fn timer(&mut self, kind: TimerKind, delay: f64) {
        self.timers.push(TimerRequest {
            kind,
            delay,
            token: self.agent.generation,
        });
    }

    fn finish(self) -> Transition {
        Transition {
            agent: self.agent,
            emitted: self.emitted,
            timers: self.timers,
            actions: self.actions,
            decisions: self.decisions,
            fault: self.fault,
        }
    }

    fn protocol_fault(&mut self, what: String) {
        self.fault = Some(what);
        self.goto(FsmState::Idle);
    }

    fn data_channel(&self) -> usize {
        self.agent.channel.expect("channel is set while in a session")
    }

    fn abandon(&mut self) {
        self.send(
            MessageKind::Result,
            Destination::Broadcast,
            Payload::Outcome(Outcome::Abandon),
        );
        self.goto(FsmState::Idle);
    }

    fn backoff(&mut self, pending: Pending) {
        let p = self.ctx.params;
        self.agent.retries += 1;
        if self.agent.retries > p.max_retries {
            self.abandon();
            return;
        }
        let delay = match p.backoff {
            None => 0.0,
            Some(w) => {
                let shift = (self.agent.retries - 1).min(31);
                let window = w.initial.saturating_mul(1 << shift).min(w.max).max(1);
                (self.ctx.backoff_u * f64::from(window)).floor() * p.timers.slot
            }
        };
        self.agent.pending = Some(pending);
        self.goto(FsmState::Backoff);
        self.timer(TimerKind::Backoff, delay);
    }

    fn resume(&mut self) {
        let t = self.ctx.params.timers;
        match self.agent.pending.take() {
            Some(Pending::ResendRRts) => {
                let c = self.data_channel();
                self.unicast(MessageKind::RRts, Payload::Channel(c));
                self.goto(FsmState::WaitRCts);
                self.timer(TimerKind::Reply, t.reply);
            }
            Some(Pending::ResendSRts) => {
                let c = self.data_channel();
                let busy = self.agent.busy.unwrap_or(true);
                self.unicast(MessageKind::SRts, Payload::Sensing { channel: c, busy });
                self.goto(FsmState::WaitSCts);
                self.timer(TimerKind::Reply, t.reply);
            }
            Some(Pending::ResendCsr) => self.request_cooperation(),
            Some(Pending::ResendTRts) => {
                let c = self.data_channel();
                self.unicast(MessageKind::TRts, Payload::Channel(c));
                self.goto(FsmState::WaitTCts);
                self.timer(TimerKind::Reply, t.reply);
            }
            Some(Pending::Retransmit) => {
                let c = self.data_channel();
                self.actions.push(Action::Transmit { channel: c });
                self.goto(FsmState::Transmitting);
            }
            None => self.goto(FsmState::Idle),
        }
    }

    fn request_cooperation(&mut self) {
        self.send(MessageKind::MsgCsr, Destination::Broadcast, Payload::None);
        if self.agent.session.is_none() {
            self.agent.session = Some(SourceSession::default());
        }
        self.goto(FsmState::WaitFeedback);
        self.timer(TimerKind::Feedback, self.ctx.params.timers.feedback);
    }

    fn form_teams(&mut self) {
        let p = self.ctx.params;
        let session = self.agent.session.as_ref().expect("session exists");
        let candidates: Vec<CandidateSu> = session
            .feedback
            .iter()
            .map(|f| CandidateSu {
                id: f.id,
                tau: f.tau,
                used_channel: p.used_channel,
                rate: f.rate,
            })
            .collect();
        let count = p.teams * p.team_size;
        let picked = match p.variation {
            Variation::Ti => select_time_invariant(&candidates, count),
            Variation::Tv => select_time_varying(&candidates, count),
        };
        let Ok(picked) = picked else {
            self.backoff(Pending::ResendCsr);
            return;
        };
        let schedule = Arc::new(Schedule::new(
            &picked.chosen,
            p.teams,
            p.team_size,
            self.ctx.channel_order,
        ));
        let session = self.agent.session.as_mut().expect("session exists");
        session.schedule = Some(schedule.clone());
        session.round = 0;
        session.votes.clear();
        self.send(
            MessageKind::CRts,
            Destination::Broadcast,
            Payload::Grouping(schedule),
        );
        self.goto(FsmState::WaitResults);
        self.timer(TimerKind::Results, p.timers.results);
    }

    fn evaluate_round(&mut self) {
        let p = self.ctx.params;
        let session = self.agent.session.as_ref().expect("session exists");
        let schedule = session.schedule.clone().expect("schedule exists");
        let round = session.round;
        let mut free: Option<(usize, usize, f64)> = None;
        for (team, members) in schedule.teams.iter().enumerate() {
            let Some(channel) = schedule.channel(round, team) else {
                continue;
            };
            let votes: Vec<&Vote> = session
                .votes
                .iter()
                .filter(|(_, v)| v.team == team)
                .map(|(_, v)| v)
                .collect();
            // Missing votes count as busy.
            let idle = votes.iter().filter(|v| !v.busy).count();
            let busy_votes = members.len() - idle;
            let busy = busy_votes >= members.len().div_ceil(2);
            self.decisions.push(TeamDecision {
                round,
                team,
                channel,
                busy,
            });
            if busy {
                continue;
            }
            let rate = votes
                .iter()
                .filter(|v| !v.busy)
                .map(|v| v.rate)
                .fold(0.0, f64::max);
            free = match (free, p.variation) {
                (None, _) => Some((team, channel, rate)),
                (Some(best), Variation::Tv) if rate > best.2 => Some((team, channel, rate)),
                (keep, _) => keep,
            };
        }
        if let Some((_, channel, _)) = free {
            self.send(
                MessageKind::Result,
                Destination::Broadcast,
                Payload::Outcome(Outcome::Release { round, channel }),
            );
            self.agent.channel = Some(channel);
            self.agent.retries = 0;
            self.unicast(MessageKind::TRts, Payload::Channel(channel));
            self.goto(FsmState::WaitTCts);
            self.timer(TimerKind::Reply, p.timers.reply);
        } else if round + 1 < schedule.rounds() {
            let session = self.agent.session.as_mut().expect("session exists");
            session.round = round + 1;
            session.votes.clear();
            self.send(
                MessageKind::Result,
                Destination::Broadcast,
                Payload::Outcome(Outcome::Continue { round: round + 1 }),
            );
            self.goto(FsmState::WaitResults);
            self.timer(TimerKind::Results, p.timers.results);
        } else {
            self.abandon();
        }
    }

    /// Cooperator: sense this round's channel or sit the round out.
    fn cooperate(&mut self) {
        let a = self.agent.assignment.as_ref().expect("assignment exists");
        match a.schedule.channel(a.round, a.team) {
            Some(c) => {
                self.agent.channel = Some(c);
                self.actions.push(Action::Sense { channel: c });
                self.goto(FsmState::CoopSensing);
            }
            None => {
                self.goto(FsmState::CoopReported);
                self.timer(TimerKind::Cooperation, self.ctx.params.timers.cooperation);
            }
        }
    }
}

fn is_from_peer(agent: &SuAgent, msg: &ControlMessage) -> bool {
    agent.peer == Some(msg.src)
}

/// Advances `agent` by one event.
pub fn step_fsm(agent: &SuAgent, event: &FsmEvent, ctx: &StepContext<'_>) -> Transition {
    use FsmState as S;
    use MessageKind as K;

    let mut st = Step {
        ctx,
        agent: agent.clone(),
        emitted: Vec::new(),
        timers: Vec::new(),
        actions: Vec::new(),
        decisions: Vec::new(),
        fault: None,
    };
    let t = ctx.params.timers;

    if let FsmEvent::Timeout { token, .. } = event {
        if *token != agent.generation {
            return st.finish();
        }
    }

    match (agent.state, event) {
        (S::Idle, FsmEvent::Start { dest, channel }) => {
            st.agent.role = Role::Source;
            st.agent.peer = Some(*dest);
            st.agent.channel = Some(*channel);
            st.unicast(K::RRts, Payload::Channel(*channel));
            st.goto(S::WaitRCts);
            st.timer(TimerKind::Reply, t.reply);
        }
        (_, FsmEvent::Start { .. }) => {
            st.protocol_fault(format!("start while {}", agent.state));
        }

        // ---- timers ----
        (S::WaitRCts, FsmEvent::Timeout { .. }) => st.backoff(Pending::ResendRRts),
        (S::WaitSCts, FsmEvent::Timeout { .. }) => st.backoff(Pending::ResendSRts),
        (S::WaitFeedback, FsmEvent::Timeout { .. }) => {
            let have = st.agent.session.as_ref().map_or(0, |s| s.feedback.len());
            if have >= ctx.params.teams * ctx.params.team_size {
                st.form_teams();
            } else {
                st.backoff(Pending::ResendCsr);
            }
        }
        (S::WaitResults, FsmEvent::Timeout { .. }) => st.evaluate_round(),
        (S::WaitTCts, FsmEvent::Timeout { .. }) => st.backoff(Pending::ResendTRts),
        (S::WaitAck, FsmEvent::Timeout { .. }) => {
            if ctx.params.abandon_on_failure {
                st.abandon();
            } else {
                st.backoff(Pending::Retransmit);
            }
        }
        (S::Backoff, FsmEvent::Timeout { .. }) => st.resume(),
        (
            S::WaitSRts | S::WaitCoop | S::WaitTRts | S::WaitCRts | S::CoopReported,
            FsmEvent::Timeout { .. },
        ) => st.goto(S::Idle),
        (_, FsmEvent::Timeout { .. }) => {}

        // ---- sensing and data ----
        (S::PairSensing, FsmEvent::SenseDone { channel, busy, .. }) => {
            st.agent.last_sense_time = ctx.now;
            st.agent.busy = Some(*busy);
            st.unicast(
                K::SRts,
                Payload::Sensing {
                    channel: *channel,
                    busy: *busy,
                },
            );
            st.goto(S::WaitSCts);
            st.timer(TimerKind::Reply, t.reply);
        }
        (S::DestSensing, FsmEvent::SenseDone { busy, .. }) => {
            st.agent.last_sense_time = ctx.now;
            st.agent.busy = Some(*busy);
            st.goto(S::WaitSRts);
            st.timer(TimerKind::Session, t.reply);
        }
        (S::CoopSensing, FsmEvent::SenseDone { busy, rate, .. }) => {
            st.agent.last_sense_time = ctx.now;
            let a = st.agent.assignment.as_ref().expect("assignment exists");
            let payload = Payload::Vote {
                team: a.team,
                round: a.round,
                busy: *busy,
                rate: *rate,
            };
            st.unicast(K::Result, payload);
            st.goto(S::CoopReported);
            st.timer(TimerKind::Cooperation, t.cooperation);
        }
        (S::Transmitting, FsmEvent::DataEnd { .. }) => {
            st.goto(S::WaitAck);
            st.timer(TimerKind::Reply, t.reply);
        }
        (S::Receiving, FsmEvent::DataEnd { ok: true }) => {
            st.unicast(K::Ack, Payload::None);
            st.goto(S::Idle);
        }
        (S::Receiving, FsmEvent::DataEnd { ok: false }) => {}
        (_, FsmEvent::SenseDone { .. } | FsmEvent::DataEnd { .. }) => {
            st.protocol_fault(format!("{} while {}", event.label(), agent.state));
        }

        // ---- messages ----
        (state, FsmEvent::Receive(msg)) => {
            let broadcast = msg.dst == Destination::Broadcast;
            let handled = receive(&mut st, state, msg);
            if !handled && !broadcast {
                st.protocol_fault(format!("{} while {}", msg.kind, state));
            }
        }
    }
    st.finish()
}

/// Applies a received message; `false` if the pair is not part of the protocol.
fn receive(st: &mut Step<'_>, state: FsmState, msg: &ControlMessage) -> bool {
    use FsmState as S;
    use MessageKind as K;
    let t = st.ctx.params.timers;
    let from_peer = is_from_peer(&st.agent, msg);

    match (state, msg.kind, &msg.payload) {
        // destination
        (S::Idle, K::RRts, Payload::Channel(c)) => {
            st.agent.role = Role::Destination;
            st.agent.peer = Some(msg.src);
            st.agent.channel = Some(*c);
            st.unicast(K::RCts, Payload::None);
            st.actions.push(Action::Sense { channel: *c });
            st.goto(S::DestSensing);
        }
        (S::WaitSRts, K::SRts, Payload::Sensing { channel, busy }) if from_peer => {
            let joint = *busy || st.agent.busy.unwrap_or(true);
            st.agent.busy = Some(joint);
            st.unicast(
                K::SCts,
                Payload::Sensing {
                    channel: *channel,
                    busy: joint,
                },
            );
            st.goto(if joint { S::WaitCoop } else { S::WaitTRts });
            st.timer(TimerKind::Session, t.session);
        }
        (S::WaitCoop | S::WaitTRts, K::SRts, Payload::Sensing { channel, .. }) if from_peer => {
            let joint = st.agent.busy.unwrap_or(true);
            st.unicast(
                K::SCts,
                Payload::Sensing {
                    channel: *channel,
                    busy: joint,
                },
            );
        }
        (S::WaitCoop | S::WaitTRts, K::TRts, Payload::Channel(c)) if from_peer => {
            st.agent.channel = Some(*c);
            st.unicast(K::TCts, Payload::None);
            st.goto(S::Receiving);
        }
        (S::Receiving, K::TRts, Payload::Channel(_)) if from_peer => {
            st.unicast(K::TCts, Payload::None);
        }
        (
            S::DestSensing | S::WaitSRts | S::WaitCoop | S::WaitTRts | S::Receiving,
            K::Result,
            Payload::Outcome(Outcome::Abandon | Outcome::Done),
        ) if from_peer => st.goto(S::Idle),

        // source
        (S::WaitRCts, K::RCts, _) if from_peer => {
            let c = st.data_channel();
            st.actions.push(Action::Sense { channel: c });
            st.goto(S::PairSensing);
        }
        (S::WaitSCts, K::SCts, Payload::Sensing { busy: false, .. }) if from_peer => {
            let c = st.data_channel();
            st.unicast(K::TRts, Payload::Channel(c));
            st.goto(S::WaitTCts);
            st.timer(TimerKind::Reply, t.reply);
        }
        (S::WaitSCts, K::SCts, Payload::Sensing { busy: true, .. }) if from_peer => {
            st.agent.retries = 0;
            st.request_cooperation();
        }
        (S::WaitFeedback, K::CCts, Payload::Feedback { tau, rate }) => {
            let session = st.agent.session.as_mut().expect("session exists");
            if !session.feedback.iter().any(|f| f.id == msg.src) {
                session.feedback.push(Feedback {
                    id: msg.src,
                    tau: *tau,
                    rate: *rate,
                });
            }
            if session.feedback.len() >= st.ctx.params.candidates {
                st.form_teams();
            }
        }
        (S::WaitResults, K::Result, Payload::Vote { team, round, busy, rate }) => {
            let session = st.agent.session.as_mut().expect("session exists");
            let schedule = session.schedule.clone().expect("schedule exists");
            if *round == session.round && !session.votes.iter().any(|(id, _)| *id == msg.src) {
                session.votes.push((
                    msg.src,
                    Vote {
                        team: *team,
                        busy: *busy,
                        rate: *rate,
                    },
                ));
                if session.votes.len() >= schedule.reporters(session.round) {
                    st.evaluate_round();
                }
            }
        }
        (S::WaitTCts, K::TCts, _) if from_peer => {
            let c = st.data_channel();
            st.actions.push(Action::Transmit { channel: c });
            st.goto(S::Transmitting);
        }
        (S::WaitAck, K::Ack, _) if from_peer => {
            st.send(
                K::Result,
                Destination::Broadcast,
                Payload::Outcome(Outcome::Done),
            );
            st.goto(S::Idle);
        }
        // Late replies to a source that already moved on.
        (s, K::CCts | K::Result | K::RCts | K::SCts | K::TCts | K::Ack, _)
            if st.agent.role == Role::Source && s != S::Idle => {}

        // cooperator
        (S::Idle, K::MsgCsr, _) => {
            st.agent.role = Role::Cooperator;
            st.agent.peer = Some(msg.src);
            let tau = (st.ctx.now - st.agent.last_sense_time).max(0.0);
            st.unicast(
                K::CCts,
                Payload::Feedback {
                    tau,
                    rate: st.ctx.link_rate,
                },
            );
            st.goto(S::WaitCRts);
            st.timer(TimerKind::Cooperation, t.cooperation);
        }
        (S::WaitCRts, K::CRts, Payload::Grouping(schedule)) if from_peer => {
            match schedule.position(st.agent.id) {
                Some((team, member)) => {
                    st.agent.assignment = Some(Assignment {
                        team,
                        member,
                        schedule: schedule.clone(),
                        round: 0,
                    });
                    st.cooperate();
                }
                None => st.goto(S::Idle),
            }
        }
        (S::CoopReported, K::Result, Payload::Outcome(Outcome::Continue { round })) if from_peer => {
            let a = st.agent.assignment.as_mut().expect("assignment exists");
            a.round = *round;
            st.cooperate();
        }
        (
            S::WaitCRts | S::CoopSensing | S::CoopReported,
            K::Result,
            Payload::Outcome(Outcome::Release { .. } | Outcome::Abandon | Outcome::Done),
        ) if from_peer => st.goto(S::Idle),

        _ => return false,
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ProtocolParams {
        ProtocolParams {
            teams: 1,
            team_size: 3,
            candidates: 4,
            variation: Variation::Ti,
            used_channel: OnOffChannel::new(0.01, 0.01).unwrap(),
            timers: Timers {
                reply: 1e-3,
                feedback: 2e-3,
                results: 3e-3,
                cooperation: 5e-3,
                session: 1.0,
                slot: 1e-4,
            },
            backoff: Some(BackoffWindow {
                initial: 16,
                max: 1024,
            }),
            max_retries: 2,
            abandon_on_failure: false,
            message_length: 40,
        }
    }

    fn ctx<'a>(p: &'a ProtocolParams, order: &'a [usize]) -> StepContext<'a> {
        StepContext {
            now: 1.0,
            params: p,
            link_rate: 5e5,
            channel_order: order,
            backoff_u: 0.5,
        }
    }

    fn msg(kind: MessageKind, src: usize, dst: Destination, payload: Payload) -> ControlMessage {
        ControlMessage {
            kind,
            src,
            dst,
            payload,
            length: 40,
        }
    }

    fn in_state(id: usize, role: Role, state: FsmState, peer: usize) -> SuAgent {
        let mut a = SuAgent::new(id);
        a.role = role;
        a.state = state;
        a.peer = Some(peer);
        a.channel = Some(2);
        a.generation = 7;
        a
    }

    #[test]
    fn source_enters_transmission_on_idle_verdict() {
        let p = params();
        let a = in_state(0, Role::Source, FsmState::WaitSCts, 1);
        let ev = FsmEvent::Receive(msg(
            MessageKind::SCts,
            1,
            Destination::Unicast(0),
            Payload::Sensing {
                channel: 2,
                busy: false,
            },
        ));
        let tr = step_fsm(&a, &ev, &ctx(&p, &[0, 1, 2]));
        assert_eq!(tr.agent.state, FsmState::WaitTCts);
        assert_eq!(tr.emitted.len(), 1);
        assert_eq!(tr.emitted[0].kind, MessageKind::TRts);
        assert_eq!(tr.emitted[0].dst, Destination::Unicast(1));
        assert_eq!(tr.timers.len(), 1);
        assert_eq!(tr.timers[0].token, tr.agent.generation);
    }

    #[test]
    fn busy_verdict_starts_cooperation() {
        let p = params();
        let a = in_state(0, Role::Source, FsmState::WaitSCts, 1);
        let ev = FsmEvent::Receive(msg(
            MessageKind::SCts,
            1,
            Destination::Unicast(0),
            Payload::Sensing {
                channel: 2,
                busy: true,
            },
        ));
        let tr = step_fsm(&a, &ev, &ctx(&p, &[0, 1, 2]));
        assert_eq!(tr.agent.state, FsmState::WaitFeedback);
        assert_eq!(tr.emitted[0].kind, MessageKind::MsgCsr);
        assert_eq!(tr.emitted[0].dst, Destination::Broadcast);
    }

    #[test]
    fn reply_timeout_backs_off_silently() {
        let p = params();
        let a = in_state(0, Role::Source, FsmState::WaitSCts, 1);
        let ev = FsmEvent::Timeout {
            kind: TimerKind::Reply,
            token: 7,
        };
        let tr = step_fsm(&a, &ev, &ctx(&p, &[0]));
        assert_eq!(tr.agent.state, FsmState::Backoff);
        assert!(tr.emitted.is_empty());
        assert_eq!(tr.agent.pending, Some(Pending::ResendSRts));
        // 0.5 of a 16-slot window.
        assert!((tr.timers[0].delay - 8.0 * 1e-4).abs() < 1e-15);
    }

    #[test]
    fn stale_timer_is_ignored() {
        let p = params();
        let a = in_state(0, Role::Source, FsmState::WaitSCts, 1);
        let ev = FsmEvent::Timeout {
            kind: TimerKind::Reply,
            token: 6,
        };
        let tr = step_fsm(&a, &ev, &ctx(&p, &[0]));
        assert_eq!(tr.agent, a);
        assert!(tr.emitted.is_empty() && tr.timers.is_empty() && tr.fault.is_none());
    }

    #[test]
    fn cooperator_reverts_when_grouping_never_arrives() {
        let p = params();
        let a = in_state(5, Role::Cooperator, FsmState::WaitCRts, 0);
        let ev = FsmEvent::Timeout {
            kind: TimerKind::Cooperation,
            token: 7,
        };
        let tr = step_fsm(&a, &ev, &ctx(&p, &[0]));
        assert_eq!(tr.agent.state, FsmState::Idle);
        assert_eq!(tr.agent.role, Role::Idle);
        assert!(tr.emitted.is_empty());
    }

    #[test]
    fn unexpected_unicast_is_a_fault() {
        let p = params();
        let a = SuAgent::new(3);
        let ev = FsmEvent::Receive(msg(MessageKind::TCts, 0, Destination::Unicast(3), Payload::None));
        let tr = step_fsm(&a, &ev, &ctx(&p, &[0]));
        assert!(tr.fault.is_some());
        assert_eq!(tr.agent.state, FsmState::Idle);
    }

    #[test]
    fn unexpected_broadcast_is_ignored() {
        let p = params();
        let a = in_state(3, Role::Destination, FsmState::Receiving, 0);
        let ev = FsmEvent::Receive(msg(MessageKind::MsgCsr, 9, Destination::Broadcast, Payload::None));
        let tr = step_fsm(&a, &ev, &ctx(&p, &[0]));
        assert!(tr.fault.is_none());
        assert_eq!(tr.agent, a);
    }

    #[test]
    fn full_cooperative_round() {
        let p = params();
        let order = [4, 2];
        let mut src = in_state(0, Role::Source, FsmState::WaitFeedback, 1);
        src.session = Some(SourceSession::default());
        let c = ctx(&p, &order);
        for (id, tau) in [(2, 0.5), (3, 0.1), (4, 0.9), (5, 0.7)] {
            let ev = FsmEvent::Receive(msg(
                MessageKind::CCts,
                id,
                Destination::Unicast(0),
                Payload::Feedback { tau, rate: 1e6 },
            ));
            src = step_fsm(&src, &ev, &c).agent;
        }
        assert_eq!(src.state, FsmState::WaitResults);
        let schedule = src.session.as_ref().unwrap().schedule.clone().unwrap();
        // Longest since last sensing first.
        assert_eq!(schedule.teams, vec![vec![4, 5, 2]]);
        assert_eq!(schedule.rounds(), 2);

        // Round 0: channel 4 busy by majority.
        for (id, busy) in [(4, true), (5, true), (2, false)] {
            let ev = FsmEvent::Receive(msg(
                MessageKind::Result,
                id,
                Destination::Unicast(0),
                Payload::Vote {
                    team: 0,
                    round: 0,
                    busy,
                    rate: 1e6,
                },
            ));
            let tr = step_fsm(&src, &ev, &c);
            src = tr.agent;
            if id == 2 {
                assert_eq!(tr.decisions.len(), 1);
                assert!(tr.decisions[0].busy);
                assert_eq!(
                    tr.emitted[0].payload,
                    Payload::Outcome(Outcome::Continue { round: 1 })
                );
            }
        }
        // Round 1: channel 2 idle.
        let mut last = None;
        for (id, busy) in [(4, false), (5, true), (2, false)] {
            let ev = FsmEvent::Receive(msg(
                MessageKind::Result,
                id,
                Destination::Unicast(0),
                Payload::Vote {
                    team: 0,
                    round: 1,
                    busy,
                    rate: 1e6,
                },
            ));
            let tr = step_fsm(&src, &ev, &c);
            src = tr.agent.clone();
            last = Some(tr);
        }
        let tr = last.unwrap();
        assert_eq!(tr.agent.state, FsmState::WaitTCts);
        assert_eq!(tr.agent.channel, Some(2));
        assert_eq!(
            tr.emitted[0].payload,
            Payload::Outcome(Outcome::Release {
                round: 1,
                channel: 2
            })
        );
        assert_eq!(tr.emitted[1].kind, MessageKind::TRts);
    }

    #[test]
    fn cooperator_senses_and_reports() {
        let p = params();
        let schedule = Arc::new(Schedule::new(&[4, 5, 2], 1, 3, &[4, 2]));
        let a = in_state(5, Role::Cooperator, FsmState::WaitCRts, 0);
        let c = ctx(&p, &[]);
        let ev = FsmEvent::Receive(msg(
            MessageKind::CRts,
            0,
            Destination::Broadcast,
            Payload::Grouping(schedule),
        ));
        let tr = step_fsm(&a, &ev, &c);
        assert_eq!(tr.agent.state, FsmState::CoopSensing);
        assert_eq!(tr.actions, vec![Action::Sense { channel: 4 }]);
        let ev = FsmEvent::SenseDone {
            channel: 4,
            busy: false,
            rate: 3e5,
        };
        let tr = step_fsm(&tr.agent, &ev, &c);
        assert_eq!(tr.agent.state, FsmState::CoopReported);
        assert!(tr.agent.state.silenced());
        assert_eq!(
            tr.emitted[0].payload,
            Payload::Vote {
                team: 0,
                round: 0,
                busy: false,
                rate: 3e5
            }
        );
        let ev = FsmEvent::Receive(msg(
            MessageKind::Result,
            0,
            Destination::Broadcast,
            Payload::Outcome(Outcome::Release {
                round: 0,
                channel: 4,
            }),
        ));
        let tr = step_fsm(&tr.agent, &ev, &c);
        assert_eq!(tr.agent.state, FsmState::Idle);
    }

    #[test]
    fn retries_are_bounded() {
        let p = params();
        let mut a = in_state(0, Role::Source, FsmState::WaitAck, 1);
        a.retries = p.max_retries;
        let ev = FsmEvent::Timeout {
            kind: TimerKind::Reply,
            token: 7,
        };
        let tr = step_fsm(&a, &ev, &ctx(&p, &[0]));
        assert_eq!(tr.agent.state, FsmState::Idle);
        assert_eq!(
            tr.emitted[0].payload,
            Payload::Outcome(Outcome::Abandon)
        );
    }
}
