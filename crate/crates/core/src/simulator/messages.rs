//! Control-channel messages of the reservation, sensing and transmission
//! handshakes.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    RRts,
    RCts,
    SRts,
    SCts,
    CRts,
    CCts,
    TRts,
    TCts,
    MsgCsr,
    Ack,
    Result,
}

impl MessageKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::RRts => "R_RTS",
            Self::RCts => "R_CTS",
            Self::SRts => "S_RTS",
            Self::SCts => "S_CTS",
            Self::CRts => "C_RTS",
            Self::CCts => "C_CTS",
            Self::TRts => "T_RTS",
            Self::TCts => "T_CTS",
            Self::MsgCsr => "MSG_CSR",
            Self::Ack => "ACK",
            Self::Result => "RESULT",
        }
    }

    /// Replies that many agents send at once and therefore contend.
    pub fn contends(self) -> bool {
        matches!(self, Self::CCts | Self::Result)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Team membership and the channel each team senses in each round.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Member ids per team.
    pub teams: Vec<Vec<usize>>,
    /// `channels[round][team]`; `None` once every channel is covered.
    pub channels: Vec<Vec<Option<usize>>>,
}

impl Schedule {
    /// Builds `teams` teams of `team_size` from `chosen` (best first) and
    /// walks `order` `teams` channels per round.
    pub fn new(chosen: &[usize], teams: usize, team_size: usize, order: &[usize]) -> Self {
        let members = chosen
            .chunks(team_size)
            .take(teams)
            .map(<[usize]>::to_vec)
            .collect();
        let rounds = order.len().div_ceil(teams);
        let channels = (0..rounds)
            .map(|r| (0..teams).map(|t| order.get(r * teams + t).copied()).collect())
            .collect();
        Self {
            teams: members,
            channels,
        }
    }

    pub fn rounds(&self) -> usize {
        self.channels.len()
    }

    /// `(team, member)` position of `id`, if scheduled.
    pub fn position(&self, id: usize) -> Option<(usize, usize)> {
        self.teams.iter().enumerate().find_map(|(t, m)| {
            m.iter().position(|&x| x == id).map(|i| (t, i))
        })
    }

    pub fn channel(&self, round: usize, team: usize) -> Option<usize> {
        self.channels.get(round).and_then(|r| r.get(team)).copied().flatten()
    }

    /// Members expected to report in `round`.
    pub fn reporters(&self, round: usize) -> usize {
        (0..self.teams.len())
            .filter(|&t| self.channel(round, t).is_some())
            .map(|t| self.teams[t].len())
            .sum()
    }
}

/// What the source tells everyone after evaluating a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// Sense the channels of the given round next.
    Continue { round: usize },
    /// A channel was found in `round`; cooperators are released.
    Release { round: usize, channel: usize },
    /// No channel found or the handshake failed.
    Abandon,
    /// Data exchange finished.
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    None,
    Channel(usize),
    /// A local or joint busy/idle verdict on `channel`.
    Sensing { channel: usize, busy: bool },
    /// Cooperation feedback: seconds since last sensing and current link rate.
    Feedback { tau: f64, rate: f64 },
    Grouping(Arc<Schedule>),
    Vote {
        team: usize,
        round: usize,
        busy: bool,
        rate: f64,
    },
    Outcome(Outcome),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Unicast(usize),
    Broadcast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlMessage {
    pub kind: MessageKind,
    pub src: usize,
    pub dst: Destination,
    pub payload: Payload,
    /// Bytes on air.
    pub length: u32,
}
