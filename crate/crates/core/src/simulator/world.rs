//! Primary-user activity, channel rates and cooperator links, sampled lazily
//! from the exact transition kernels between observations.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::rng::{stream, uniform, Tag};
use crate::channel::{sample_index, Occupancy, OnOffChannel, RateChain, RateStepper};

#[derive(Debug, Clone)]
struct RateModel {
    chain: RateChain,
    stepper: RateStepper,
    pi: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct Observed {
    occupancy: Option<(f64, Occupancy)>,
    rate: Option<(f64, usize)>,
    draws: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct World {
    seed: u64,
    cycle: u64,
    channel: OnOffChannel,
    fixed_rate: f64,
    link_rate: f64,
    rates: Option<RateModel>,
    shared: bool,
    channels: Vec<Observed>,
    links: Vec<Observed>,
}

impl World {
    /// `rates = None` keeps every channel and link at `fixed_rate` and
    /// `link_rate` respectively.
    pub(crate) fn new(
        seed: u64,
        channel: OnOffChannel,
        channels: usize,
        agents: usize,
        fixed_rate: f64,
        link_rate: f64,
        rates: Option<RateChain>,
        shared: bool,
    ) -> crate::Result<Self> {
        let rates = match rates {
            Some(chain) => Some(RateModel {
                pi: chain.stationary()?,
                stepper: RateStepper::new(&chain),
                chain,
            }),
            None => None,
        };
        Ok(Self {
            seed,
            cycle: 0,
            channel,
            fixed_rate,
            link_rate,
            rates,
            shared,
            channels: vec![Observed::default(); channels],
            links: vec![Observed::default(); agents],
        })
    }

    /// Moves to a new cycle; `renewal` forgets every past observation.
    pub(crate) fn new_cycle(&mut self, cycle: u64, renewal: bool) {
        self.cycle = cycle;
        for o in self.channels.iter_mut().chain(self.links.iter_mut()) {
            o.draws = 0;
            if renewal {
                o.occupancy = None;
                o.rate = None;
            }
        }
    }

    fn process(&self, channel: usize) -> usize {
        if self.shared {
            0
        } else {
            channel
        }
    }

    fn draw(&mut self, tag: Tag, which: usize, link: bool) -> f64 {
        let obs = if link {
            &mut self.links[which]
        } else {
            &mut self.channels[which]
        };
        let k = obs.draws;
        obs.draws += 1;
        uniform(self.seed, tag, &[self.cycle, which as u64, k, u64::from(link)])
    }

    fn observe_occupancy(&mut self, which: usize, t: f64, link: bool) -> Occupancy {
        let obs = if link { &self.links[which] } else { &self.channels[which] };
        let p_off = match obs.occupancy {
            Some((t0, s)) if t <= t0 => return s,
            Some((t0, s)) => self.channel.off_probability_after(s, t - t0),
            None => self.channel.availability(),
        };
        let u = self.draw(Tag::Channel, which, link);
        let s = if u < p_off { Occupancy::Off } else { Occupancy::On };
        let obs = if link { &mut self.links[which] } else { &mut self.channels[which] };
        obs.occupancy = Some((t, s));
        s
    }

    /// Primary-user state of `channel` at `t`.
    pub(crate) fn occupancy(&mut self, channel: usize, t: f64) -> Occupancy {
        let i = self.process(channel);
        self.observe_occupancy(i, t, false)
    }

    /// Pins the state of `channel` at `t`, e.g. when a primary user returns.
    pub(crate) fn set_occupancy(&mut self, channel: usize, t: f64, s: Occupancy) {
        let i = self.process(channel);
        self.channels[i].occupancy = Some((t, s));
    }

    fn observe_rate(&mut self, which: usize, t: f64, link: bool) -> f64 {
        let Some(model) = &self.rates else {
            return if link { self.link_rate } else { self.fixed_rate };
        };
        let dwell = model.chain.dwell();
        let obs = if link { &self.links[which] } else { &self.channels[which] };
        let (epoch, from) = ((t / dwell).floor() as u64, obs.rate);
        let state = match from {
            Some((t0, s)) => {
                let steps = epoch.saturating_sub((t0 / dwell).floor() as u64);
                if steps == 0 {
                    s
                } else {
                    let u = self.draw(Tag::Rate, which, link);
                    let model = self.rates.as_ref().expect("checked above");
                    model.stepper.advance(s, steps, u)
                }
            }
            None => {
                let u = self.draw(Tag::Rate, which, link);
                let model = self.rates.as_ref().expect("checked above");
                sample_index(&model.pi, u)
            }
        };
        let obs = if link { &mut self.links[which] } else { &mut self.channels[which] };
        obs.rate = Some((t, state));
        self.rates.as_ref().expect("checked above").chain.rates()[state]
    }

    /// Data rate of `channel` at `t` (bytes/s).
    pub(crate) fn rate(&mut self, channel: usize, t: f64) -> f64 {
        self.observe_rate(channel, t, false)
    }

    /// Rate of agent `su`'s own link at `t` (bytes/s).
    pub(crate) fn link_rate(&mut self, su: usize, t: f64) -> f64 {
        self.observe_rate(su, t, true)
    }

    /// Remaining idle time of a channel just observed idle.
    pub(crate) fn residual_idle(&self, attempt: u64) -> f64 {
        let mut rng = stream(self.seed, Tag::Burst, &[self.cycle, attempt]);
        self.channel.sample_sojourn(Occupancy::Off, &mut rng)
    }

    /// Time agent `su`'s link spends idle during `[start, end]`. With
    /// `backlogged` the link is idle at `start`; otherwise its state there is
    /// drawn from its own history.
    pub(crate) fn link_idle_time(&mut self, su: usize, start: f64, end: f64, backlogged: bool) -> f64 {
        let mut state = if backlogged {
            Occupancy::Off
        } else {
            self.observe_occupancy(su, start, true)
        };
        let mut rng = stream(self.seed, Tag::Link, &[self.cycle, su as u64]);
        let mut t = start;
        let mut idle = 0.0;
        while t < end {
            let next = (t + self.channel.sample_sojourn(state, &mut rng)).min(end);
            if state == Occupancy::Off {
                idle += next - t;
            }
            t = next;
            state = match state {
                Occupancy::On => Occupancy::Off,
                Occupancy::Off => Occupancy::On,
            };
        }
        if !backlogged {
            let s = match state {
                Occupancy::On => Occupancy::Off,
                Occupancy::Off => Occupancy::On,
            };
            // `state` was flipped past the last sojourn that reached `end`.
            self.links[su].occupancy = Some((end, s));
        }
        idle
    }

    /// Poisson packet arrivals to agent `su` over `span` seconds.
    pub(crate) fn arrivals(&self, su: usize, lambda: f64, span: f64, k: u64) -> u64 {
        let mean = lambda * span;
        if !(mean > 0.0) {
            return 0;
        }
        let mut rng = stream(self.seed, Tag::Queue, &[self.cycle, su as u64, k]);
        let n: f64 = Poisson::new(mean).expect("positive mean").sample(&mut rng);
        n as u64
    }

    /// Uniform pick in `0..n` for the pair and channel-order draws.
    pub(crate) fn layout(&self, agents: usize, channels: usize) -> (usize, usize, Vec<usize>) {
        let mut rng = stream(self.seed, Tag::Pair, &[self.cycle]);
        let src = rng.random_range(0..agents);
        let mut dst = rng.random_range(0..agents - 1);
        if dst >= src {
            dst += 1;
        }
        let pair_channel = rng.random_range(0..channels);
        let mut order: Vec<usize> = (0..channels).filter(|&c| c != pair_channel).collect();
        let mut rng = stream(self.seed, Tag::Order, &[self.cycle]);
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        order.push(pair_channel);
        (src, dst, order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(seed: u64) -> World {
        let ch = OnOffChannel::new(2.0, 1.0).unwrap();
        World::new(seed, ch, 3, 4, 1e6, 1e6, None, false).unwrap()
    }

    #[test]
    fn repeated_observation_is_stable() {
        let mut w = world(1);
        let s = w.occupancy(1, 0.5);
        assert_eq!(w.occupancy(1, 0.5), s);
        assert_eq!(w.occupancy(1, 0.2), s);
    }

    #[test]
    fn stationary_fraction_idle() {
        let ch = OnOffChannel::new(2.0, 1.0).unwrap();
        let mut idle = 0usize;
        let n = 20_000;
        for c in 0..n {
            let mut w = world(3);
            w.new_cycle(c, true);
            idle += usize::from(w.occupancy(0, 1.0) == Occupancy::Off);
        }
        let p = ch.availability();
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((idle as f64 / n as f64 - p).abs() < 4.0 * sd);
    }

    #[test]
    fn backlogged_link_over_short_window_is_idle() {
        let ch = OnOffChannel::new(0.01, 0.01).unwrap();
        let mut w = World::new(5, ch, 1, 2, 1e6, 1e6, None, false).unwrap();
        let idle = w.link_idle_time(0, 1.0, 1.003, true);
        assert!((idle - 0.003).abs() < 1e-12);
    }

    #[test]
    fn link_idle_fraction_matches_availability() {
        let ch = OnOffChannel::new(3.0, 1.0).unwrap();
        let mut w = World::new(8, ch, 1, 1, 1e6, 1e6, None, false).unwrap();
        let idle = w.link_idle_time(0, 0.0, 20_000.0, false);
        assert!((idle / 20_000.0 - ch.availability()).abs() < 0.01);
    }

    #[test]
    fn layout_puts_pair_channel_last() {
        let w = world(11);
        let (s, d, order) = w.layout(5, 3);
        assert_ne!(s, d);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }
}
