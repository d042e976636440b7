use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use super::fsm::{
    step_fsm, Action, BackoffWindow, FsmEvent, FsmState, ProtocolParams, Role, StepContext,
    SuAgent, Timers,
};
use super::messages::{ControlMessage, Destination, MessageKind, Outcome, Payload};
use super::metrics::SimMetrics;
use super::rng::{uniform, Tag};
use super::trace::TraceRecord;
use super::world::World;
use super::{ChannelMemory, ControlModel, CooperatorLink, MisdetectionPolicy, OccupancyModel, SimConfig};
use crate::analytics::{service_moments, Load, Variation};
use crate::channel::Occupancy;
use crate::error::Result;

#[derive(Debug)]
enum EngineEvent {
    CycleStart,
    Fsm {
        agent: usize,
        cycle: u64,
        event: FsmEvent,
    },
    Deliver {
        id: u64,
        cycle: u64,
        msg: ControlMessage,
    },
}

#[derive(Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    event: EngineEvent,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: the heap pops the earliest event, then the lowest sequence.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug)]
struct Cycle {
    source: usize,
    dest: usize,
    cooperative: bool,
    /// Channel access was granted by an idle verdict or a release.
    sanctioned: bool,
    discovery_round: Option<usize>,
    delivered: f64,
    foregone: f64,
    silence_start: Vec<Option<f64>>,
    /// Primary-user state seen by each `(round, channel)` team sensing.
    sensed: Vec<(usize, usize, Occupancy)>,
    attempts: u64,
    queue: u64,
    queue_since: f64,
    draws: u64,
}

pub(crate) struct Engine<'a> {
    cfg: &'a SimConfig,
    params: ProtocolParams,
    world: World,
    agents: Vec<SuAgent>,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now: f64,
    next_cycle: u64,
    cycle_id: u64,
    cycle: Option<Cycle>,
    order: Vec<usize>,
    /// Control transmissions still on air: `(id, start, end)`.
    on_air: Vec<(u64, f64, f64)>,
    collided: BTreeSet<u64>,
    sender_free_at: Vec<f64>,
    next_tx: u64,
    draws: u64,
    phase_mark: f64,
    lambda: f64,
    metrics: SimMetrics,
    trace: Vec<TraceRecord>,
    stopped: bool,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(cfg: &'a SimConfig) -> Result<Self> {
        let sc = &cfg.scenario;
        let (teams, team_size) = cfg.scheme.layout(sc);
        let agents = sc.sus + 2;
        let variation = cfg.regime.variation;
        let airtime = cfg.control.airtime();
        let (window, backoff) = match cfg.control.model {
            ControlModel::Ideal => (16, None),
            ControlModel::Contended {
                window, max_window, ..
            } => (
                window,
                Some(BackoffWindow {
                    initial: window,
                    max: max_window,
                }),
            ),
        };
        let slot = airtime;
        let reply = 2.0 * airtime + slot;
        let contention = f64::from(window + 2) * slot + airtime;
        let results = sc.sense_duration + contention;
        let feedback = contention;
        let retries = f64::from(cfg.max_retries + 1);
        let max_backoff = match backoff {
            Some(w) => f64::from(w.max) * slot,
            None => 0.0,
        };
        let rounds = sc.channels.div_ceil(teams) as f64;
        let timers = Timers {
            reply,
            feedback,
            results,
            cooperation: feedback + results + reply,
            session: retries * (feedback + max_backoff + 2.0 * reply) + rounds * results + reply,
            slot,
        };
        let params = ProtocolParams {
            teams,
            team_size,
            candidates: sc.sus,
            variation,
            used_channel: sc.channel,
            timers,
            backoff,
            max_retries: cfg.max_retries,
            abandon_on_failure: cfg.misdetection == MisdetectionPolicy::Abandon,
            message_length: cfg.control.message_length,
        };
        let (chain, link_rate) = match variation {
            Variation::Ti => (None, sc.r_use.unwrap_or(sc.rate)),
            Variation::Tv => (Some(sc.rate_chain.clone()), sc.rate),
        };
        let world = World::new(
            cfg.seed,
            sc.channel,
            sc.channels,
            agents,
            sc.rate,
            link_rate,
            chain,
            cfg.occupancy == OccupancyModel::Shared,
        )?;
        let lambda = match (cfg.regime.load, sc.traffic) {
            (Load::Nonsat, Some(t)) => {
                let mean_service = match variation {
                    Variation::Ti => sc.packet_length / sc.rate,
                    Variation::Tv => service_moments(&sc.rate_chain, sc.packet_length)?.0,
                };
                t.arrival_rate(mean_service)
            }
            _ => 0.0,
        };
        let metrics = SimMetrics {
            seed: cfg.seed,
            normalization: sc.normalization(variation),
            discovery_rounds: vec![0; sc.channels.div_ceil(teams)],
            ..SimMetrics::default()
        };
        Ok(Self {
            cfg,
            params,
            world,
            agents: (0..agents).map(SuAgent::new).collect(),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            next_cycle: 0,
            cycle_id: u64::MAX,
            cycle: None,
            order: Vec::new(),
            on_air: Vec::new(),
            collided: BTreeSet::new(),
            sender_free_at: vec![0.0; agents],
            next_tx: 0,
            draws: 0,
            phase_mark: 0.0,
            lambda,
            metrics,
            trace: Vec::new(),
            stopped: false,
        })
    }

    fn nonsat(&self) -> bool {
        self.cfg.regime.load == Load::Nonsat
    }

    fn schedule(&mut self, time: f64, event: EngineEvent) {
        self.seq += 1;
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
    }

    fn schedule_fsm(&mut self, time: f64, agent: usize, event: FsmEvent) {
        let cycle = self.cycle_id;
        self.schedule(time, EngineEvent::Fsm { agent, cycle, event });
    }

    fn draw(&mut self, tag: Tag, who: usize) -> f64 {
        self.draws += 1;
        uniform(self.cfg.seed, tag, &[self.cycle_id, who as u64, self.draws])
    }

    pub(crate) fn run(mut self) -> Result<(SimMetrics, Vec<TraceRecord>)> {
        self.schedule(0.0, EngineEvent::CycleStart);
        while let Some(next) = self.heap.pop() {
            if next.time > self.cfg.horizon {
                self.now = self.cfg.horizon;
                break;
            }
            self.now = next.time;
            match next.event {
                EngineEvent::CycleStart => self.start_cycle(),
                EngineEvent::Fsm { agent, cycle, event } => {
                    if cycle == self.cycle_id {
                        self.dispatch(agent, event);
                    }
                }
                EngineEvent::Deliver { id, cycle, msg } => {
                    if cycle == self.cycle_id {
                        self.deliver(id, msg);
                    }
                }
            }
            if self.stopped {
                break;
            }
        }
        self.metrics.elapsed = self.now.min(self.cfg.horizon);
        Ok((self.metrics, self.trace))
    }

    fn start_cycle(&mut self) {
        if self.now >= self.cfg.horizon
            || self.cfg.max_cycles.is_some_and(|m| self.metrics.cycles >= m)
        {
            self.stopped = true;
            return;
        }
        for i in 0..self.agents.len() {
            if self.agents[i].state != FsmState::Idle {
                self.close_silence(i);
                self.agents[i].reset();
                self.metrics.stale_resets += 1;
            }
        }
        self.cycle_id = self.next_cycle;
        self.next_cycle += 1;
        self.world
            .new_cycle(self.cycle_id, self.cfg.memory == ChannelMemory::Renewal);
        let (source, dest, order) = self.world.layout(self.agents.len(), self.cfg.scenario.channels);
        let pair_channel = *order.last().expect("at least one channel");
        self.order = order;
        self.on_air.clear();
        self.collided.clear();
        self.cycle = Some(Cycle {
            source,
            dest,
            cooperative: false,
            sanctioned: false,
            discovery_round: None,
            delivered: 0.0,
            foregone: 0.0,
            silence_start: vec![None; self.agents.len()],
            sensed: Vec::new(),
            attempts: 0,
            queue: 0,
            queue_since: self.now,
            draws: 0,
        });
        self.phase_mark = self.now;
        self.dispatch(
            source,
            FsmEvent::Start {
                dest,
                channel: pair_channel,
            },
        );
    }

    fn finish_cycle(&mut self) {
        let Some(c) = self.cycle.take() else {
            return;
        };
        let m = &mut self.metrics;
        m.cycles += 1;
        if c.cooperative {
            m.cooperative_cycles += 1;
            m.cooperative_delivered_bytes += c.delivered;
            m.foregone_bytes += c.foregone;
            match c.discovery_round {
                Some(r) => {
                    m.discoveries += 1;
                    m.discovery_rounds[r] += 1;
                    m.charged_overhead_bytes += (r + 1) as f64 * c.foregone;
                }
                None => m.abandoned_cycles += 1,
            }
        } else if c.sanctioned {
            m.direct_cycles += 1;
        } else {
            m.abandoned_cycles += 1;
        }
        let gap = match self.cfg.control.model {
            ControlModel::Ideal => 0.0,
            ControlModel::Contended { .. } => 2.0 * self.cfg.control.airtime(),
        };
        self.schedule(self.now + gap, EngineEvent::CycleStart);
    }

    fn phase_of(state: FsmState) -> Option<usize> {
        use FsmState as S;
        match state {
            S::WaitRCts | S::PairSensing | S::WaitSCts => Some(0),
            S::WaitFeedback | S::WaitResults => Some(1),
            S::WaitTCts | S::Transmitting | S::WaitAck => Some(2),
            S::Backoff => Some(3),
            _ => None,
        }
    }

    fn dispatch(&mut self, i: usize, event: FsmEvent) {
        let link_rate = match &event {
            FsmEvent::Receive(m) if m.kind == MessageKind::MsgCsr => self.world.link_rate(i, self.now),
            _ => 0.0,
        };
        let backoff_u = self.draw(Tag::Backoff, i);
        let order = std::mem::take(&mut self.order);
        let tr = {
            let ctx = StepContext {
                now: self.now,
                params: &self.params,
                link_rate,
                channel_order: &order,
                backoff_u,
            };
            step_fsm(&self.agents[i], &event, &ctx)
        };
        self.order = order;

        let before = self.agents[i].state;
        let after = tr.agent.state;
        if self.cfg.trace {
            let kind = match &event {
                FsmEvent::Receive(m) => Some(m.kind.label().to_string()),
                _ => None,
            };
            self.trace.push(TraceRecord {
                time: self.now,
                agent: i,
                state: after,
                event: event.label().to_string(),
                kind,
            });
        }
        if tr.fault.is_some() {
            self.metrics.protocol_faults += 1;
        }
        let is_source = self.cycle.as_ref().is_some_and(|c| c.source == i);
        if is_source && before != after {
            if let Some(p) = Self::phase_of(before) {
                let dt = self.now - self.phase_mark;
                let ph = &mut self.metrics.phase_time;
                match p {
                    0 => ph.reservation += dt,
                    1 => ph.sensing += dt,
                    2 => ph.transmission += dt,
                    _ => ph.backoff += dt,
                }
            }
            self.phase_mark = self.now;
        }
        if before.silenced() && !after.silenced() {
            self.close_silence(i);
        }
        if !before.silenced() && after.silenced() {
            if let Some(c) = self.cycle.as_mut() {
                c.silence_start[i] = Some(self.now);
            }
        }

        for d in &tr.decisions {
            let truth = self.cycle.as_ref().and_then(|c| {
                c.sensed
                    .iter()
                    .find(|(r, ch, _)| *r == d.round && *ch == d.channel)
                    .map(|x| x.2)
            });
            let m = &mut self.metrics;
            match truth {
                Some(Occupancy::On) => {
                    m.busy_channel_verdicts += 1;
                    m.busy_channel_detected += u64::from(d.busy);
                }
                Some(Occupancy::Off) => {
                    m.idle_channel_verdicts += 1;
                    m.idle_channel_false_alarms += u64::from(d.busy);
                }
                None => {}
            }
        }

        self.agents[i] = tr.agent;
        let src_state = self.agents[i].state;
        let silenced = src_state.silenced();
        for msg in tr.emitted {
            self.observe(&msg);
            self.send(msg);
        }
        for t in tr.timers {
            self.schedule_fsm(
                self.now + t.delay,
                i,
                FsmEvent::Timeout {
                    kind: t.kind,
                    token: t.token,
                },
            );
        }
        for a in tr.actions {
            match a {
                Action::Sense { channel } => self.sense(i, channel),
                Action::Transmit { channel } => {
                    if silenced {
                        self.metrics.silenced_transmissions += 1;
                    }
                    self.transmit(i, channel);
                }
            }
        }
        if is_source && after == FsmState::Idle && before != FsmState::Idle {
            self.finish_cycle();
        }
    }

    /// Bookkeeping from the messages agents emit.
    fn observe(&mut self, msg: &ControlMessage) {
        let Some(c) = self.cycle.as_mut() else {
            return;
        };
        match (msg.kind, &msg.payload) {
            (MessageKind::SCts, Payload::Sensing { busy: false, .. }) if msg.src == c.dest => {
                c.sanctioned = true;
            }
            (MessageKind::MsgCsr, _) if msg.src == c.source => c.cooperative = true,
            (MessageKind::Result, Payload::Outcome(Outcome::Release { round, .. }))
                if msg.src == c.source =>
            {
                c.sanctioned = true;
                c.discovery_round = Some(*round);
            }
            _ => {}
        }
    }

    fn close_silence(&mut self, i: usize) {
        let Some(c) = self.cycle.as_mut() else {
            return;
        };
        let Some(start) = c.silence_start[i].take() else {
            return;
        };
        let end = self.now;
        let backlogged = self.cfg.link == CooperatorLink::Backlogged;
        let idle = self.world.link_idle_time(i, start, end, backlogged);
        let rate = self.world.link_rate(i, start);
        let lost = if self.nonsat() {
            let c = self.cycle.as_mut().expect("checked above");
            c.draws += 1;
            let arrivals = self.world.arrivals(i, self.lambda, end - start, c.draws);
            let cap = (idle * rate / self.cfg.scenario.packet_length).floor() as u64;
            arrivals.min(cap) as f64 * self.cfg.scenario.packet_length
        } else {
            rate * idle
        };
        self.cycle.as_mut().expect("checked above").foregone += lost;
    }

    fn sense(&mut self, i: usize, channel: usize) {
        let state = self.world.occupancy(channel, self.now);
        let rate = self.world.rate(channel, self.now);
        let agent = &self.agents[i];
        let slot = match (agent.role, &agent.assignment) {
            (Role::Cooperator, Some(a)) => a.member as u64,
            (Role::Source, _) => 1 << 32,
            _ => (1 << 32) + 1,
        };
        if let (Some(c), Some(a)) = (self.cycle.as_mut(), &agent.assignment) {
            if !c.sensed.iter().any(|(r, ch, _)| *r == a.round && *ch == channel) {
                c.sensed.push((a.round, channel, state));
            }
        }
        let u = uniform(
            self.cfg.seed,
            Tag::Vote,
            &[self.cycle_id, channel as u64, slot],
        );
        let s = &self.cfg.scenario.sensing;
        let busy = match state {
            Occupancy::On => u < s.pd,
            Occupancy::Off => u < s.pf,
        };
        self.schedule_fsm(
            self.now + self.cfg.scenario.sense_duration,
            i,
            FsmEvent::SenseDone {
                channel,
                busy,
                rate,
            },
        );
    }

    fn transmit(&mut self, i: usize, channel: usize) {
        let nonsat = self.nonsat();
        let lambda = self.lambda;
        let l = self.cfg.scenario.packet_length;
        let now = self.now;
        let Some(c) = self.cycle.as_mut() else {
            return;
        };
        if !c.sanctioned {
            self.metrics.protocol_faults += 1;
        }
        let attempt = c.attempts;
        c.attempts += 1;
        let dest = c.dest;
        let state = self.world.occupancy(channel, now);
        let rate = self.world.rate(channel, now);
        let (ok, duration, bytes) = match state {
            Occupancy::On => {
                self.metrics.misdetections += 1;
                (false, l / rate, 0.0)
            }
            Occupancy::Off => {
                let residual = self.world.residual_idle(attempt);
                if nonsat {
                    let c = self.cycle.as_mut().expect("checked above");
                    c.draws += 1;
                    c.queue += self.world.arrivals(i, lambda, now - c.queue_since, c.draws);
                    c.queue_since = now;
                    let cap = (residual * rate / l).floor() as u64;
                    let sent = c.queue.min(cap);
                    c.queue -= sent;
                    let duration = sent as f64 * l / rate;
                    self.world.set_occupancy(channel, now + duration, Occupancy::Off);
                    (true, duration, sent as f64 * l)
                } else {
                    self.world.set_occupancy(channel, now + residual, Occupancy::On);
                    (true, residual, rate * residual)
                }
            }
        };
        let c = self.cycle.as_mut().expect("checked above");
        c.delivered += bytes;
        self.metrics.delivered_bytes += bytes;
        self.schedule_fsm(now + duration, i, FsmEvent::DataEnd { ok });
        self.schedule_fsm(now + duration, dest, FsmEvent::DataEnd { ok });
    }

    fn recipients(&self, msg: &ControlMessage) -> Vec<usize> {
        match msg.dst {
            Destination::Unicast(j) => vec![j],
            Destination::Broadcast => (0..self.agents.len()).filter(|&j| j != msg.src).collect(),
        }
    }

    fn send(&mut self, msg: ControlMessage) {
        self.metrics.control_messages += 1;
        match self.cfg.control.model {
            ControlModel::Ideal => {
                for j in self.recipients(&msg) {
                    self.schedule_fsm(self.now, j, FsmEvent::Receive(msg.clone()));
                }
            }
            ControlModel::Contended { window, .. } => {
                let airtime = self.cfg.control.airtime();
                let delay = if msg.kind.contends() {
                    (self.draw(Tag::Backoff, msg.src) * f64::from(window)).floor() * airtime
                } else {
                    0.0
                };
                let start = (self.now + delay).max(self.sender_free_at[msg.src]);
                let end = start + airtime;
                self.sender_free_at[msg.src] = end;
                let id = self.next_tx;
                self.next_tx += 1;
                let now = self.now;
                self.on_air.retain(|&(_, _, e)| e > now);
                for &(other, s, e) in &self.on_air {
                    if start < e && s < end {
                        self.collided.insert(other);
                        self.collided.insert(id);
                    }
                }
                self.on_air.push((id, start, end));
                let cycle = self.cycle_id;
                self.schedule(end, EngineEvent::Deliver { id, cycle, msg });
            }
        }
    }

    fn deliver(&mut self, id: u64, msg: ControlMessage) {
        if self.collided.remove(&id) {
            self.metrics.collisions += 1;
            return;
        }
        let loss = match self.cfg.control.model {
            ControlModel::Contended { loss, .. } => loss,
            ControlModel::Ideal => 0.0,
        };
        for j in self.recipients(&msg) {
            if loss > 0.0 && self.draw(Tag::Loss, j) < loss {
                self.metrics.lost_messages += 1;
                continue;
            }
            self.schedule_fsm(self.now, j, FsmEvent::Receive(msg.clone()));
        }
    }
}
