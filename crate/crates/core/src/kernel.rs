//! Deterministic discrete-event engine.
//!
//! Integer-picosecond timeline with a stable binary-heap event queue,
//! named seeded random streams, and entanglement bookkeeping for
//! photon pairs in flight.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::quantum::{
    self, JonesMatrix, JonesVector, MeasurementBasis, Slot, TwoPhotonState,
};

/// Simulation time in integer picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_ps(ps: u64) -> Self {
        Timestamp(ps)
    }

    pub fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_seconds(self) -> f64 {
        self.0 as f64 * 1e-12
    }

    /// Adds a continuous offset in picoseconds, rounding to the nearest tick.
    /// Negative offsets saturate at zero; overflow panics rather than wraps.
    pub fn offset_ps(self, ps: f64) -> Timestamp {
        let t = self.0 as f64 + ps;
        if t <= 0.0 {
            Timestamp(0)
        } else {
            Timestamp(
                t.round() as u64,
            )
        }
    }
}

struct Event<W> {
    time: Timestamp,
    seq: u64,
    action: Box<dyn FnOnce(&mut W, &mut Timeline<W>)>,
}

impl<W> PartialEq for Event<W> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl<W> Eq for Event<W> {}

impl<W> PartialOrd for Event<W> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so the max-heap pops the earliest (time, seq) first.
impl<W> Ord for Event<W> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Statistics returned by [`Timeline::run_until`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStats {
    pub events_executed: u64,
    pub final_time: Timestamp,
}

/// Priority-ordered event executor over a caller-supplied world `W`.
///
/// Events with equal timestamps execute in insertion order; a run is fully
/// determined by the schedule and the caller's RNG streams.
pub struct Timeline<W> {
    queue: BinaryHeap<Event<W>>,
    now: Timestamp,
    next_seq: u64,
    executed: u64,
    trace: Option<Vec<(Timestamp, u64)>>,
}

impl<W> Default for Timeline<W> {
    fn default() -> Self {
        Self::new()
    }
}

impl<W> Timeline<W> {
    pub fn new() -> Self {
        Self {
            queue: BinaryHeap::new(),
            now: Timestamp::ZERO,
            next_seq: 0,
            executed: 0,
            trace: None,
        }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Enables the line-oriented event trace used by determinism tests.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[(Timestamp, u64)]> {
        self.trace.as_deref()
    }

    /// Schedules `action` at `time`. Scheduling in the past is a fatal
    /// configuration error.
    pub fn schedule(
        &mut self,
        time: Timestamp,
        action: impl FnOnce(&mut W, &mut Timeline<W>) + 'static,
    ) {
        assert!(
            time >= self.now,
            "event scheduled in the past: t={} < now={}",
            time.0,
            self.now.0
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event {
            time,
            seq,
            action: Box::new(action),
        });
    }

    /// Executes all events with time <= `t_end` and advances the clock to
    /// `t_end`.
    pub fn run_until(&mut self, world: &mut W, t_end: Timestamp) -> RunStats {
        let mut last: Option<(Timestamp, u64)> = None;
        while let Some(head) = self.queue.peek() {
            if head.time > t_end {
                break;
            }
            let ev = self.queue.pop().unwrap();
            debug_assert!(
                last.is_none_or(|prev| prev < (ev.time, ev.seq)),
                "event executed out of (time, seq) order"
            );
            last = Some((ev.time, ev.seq));
            self.now = ev.time;
            self.executed += 1;
            if let Some(trace) = &mut self.trace {
                trace.push((ev.time, ev.seq));
            }
            (ev.action)(world, self);
        }
        self.now = t_end;
        RunStats {
            events_executed: self.executed,
            final_time: self.now,
        }
    }
}

/// Factory for named, independently seeded pseudorandom streams.
///
/// Each (master seed, component name) pair maps to a fixed ChaCha12 stream,
/// so adding or removing a component never perturbs the sequences drawn by
/// the others.
#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    master_seed: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self, name: &str) -> ChaCha12Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(name.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha12Rng::from_seed(seed)
    }

    /// Deterministic seed for an independent sub-run (sweep grid point).
    pub fn derive_seed(&self, index: u64) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(b"grid");
        hasher.update(index.to_le_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhotonId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhotonKind {
    Signal,
    Idler,
    Noise,
}

/// Polarization carried by a photon: either a standalone pure state or a
/// reference into the entanglement registry.
#[derive(Debug, Clone, Copy)]
pub enum Polarization {
    Pure(JonesVector),
    Entangled { pair: PairId, slot: Slot },
}

/// Timestamped particle in flight.
///
/// `delay_ps` accumulates continuous (sub-picosecond) delay contributions;
/// it is quantized once, when a detection record is produced.
#[derive(Debug, Clone, Copy)]
pub struct Photon {
    pub id: PhotonId,
    pub wavelength_nm: f64,
    pub emission_time: Timestamp,
    pub delay_ps: f64,
    pub polarization: Polarization,
    pub kind: PhotonKind,
}

impl Photon {
    pub fn arrival_time(&self) -> Timestamp {
        self.emission_time.offset_ps(self.delay_ps)
    }
}

#[derive(Debug, Clone)]
enum PairState {
    /// Both photons unmeasured; joint state lives here.
    Joint(TwoPhotonState),
    /// One photon resolved; the remaining photon (at `slot`) is pure.
    Collapsed { slot: Slot, state: JonesVector },
    /// Both photons resolved; kept until end-of-run accounting.
    Done,
}

/// Bookkeeping for entangled pairs: joint states, collapse on measurement,
/// and marginal collapse on loss.
#[derive(Debug, Default)]
pub struct EntanglementRegistry {
    entries: HashMap<u64, PairState>,
    next_pair: u64,
    next_photon: u64,
}

impl EntanglementRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn new_photon_id(&mut self) -> PhotonId {
        let id = self.next_photon;
        self.next_photon += 1;
        PhotonId(id)
    }

    pub fn register_pair(&mut self, state: TwoPhotonState) -> PairId {
        let id = self.next_pair;
        self.next_pair += 1;
        self.entries.insert(id, PairState::Joint(state));
        PairId(id)
    }

    /// Applies a local unitary to one arm of a pair. For collapsed pairs the
    /// unitary acts on the surviving photon only if it sits in `slot`.
    pub fn apply_local(&mut self, pair: PairId, slot: Slot, j: &JonesMatrix) {
        match self.entries.get_mut(&pair.0) {
            Some(PairState::Joint(state)) => {
                *state = quantum::apply_local(state, j, slot);
            }
            Some(PairState::Collapsed { slot: s, state }) if *s == slot => {
                *state = j.apply(state);
            }
            _ => {}
        }
    }

    /// Projectively measures one arm; the partner collapses to its
    /// conditional state. Panics if the photon was already resolved.
    pub fn measure<R: Rng>(
        &mut self,
        pair: PairId,
        slot: Slot,
        basis: &MeasurementBasis,
        rng: &mut R,
    ) -> u8 {
        let entry = self
            .entries
            .get_mut(&pair.0)
            .expect("measured photon has no registry entry");
        match entry {
            PairState::Joint(state) => {
                let (outcome, partner) = quantum::measure(state, basis, slot, rng);
                let partner_slot = match slot {
                    Slot::A => Slot::B,
                    Slot::B => Slot::A,
                };
                *entry = PairState::Collapsed {
                    slot: partner_slot,
                    state: partner,
                };
                outcome
            }
            PairState::Collapsed { slot: s, state } => {
                assert_eq!(*s, slot, "photon measured twice");
                let p0 = state.inner(&basis.b0).norm_sqr() / state.norm_sq();
                let outcome = if rng.gen::<f64>() < p0 { 0 } else { 1 };
                *entry = PairState::Done;
                outcome
            }
            PairState::Done => panic!("pair already fully resolved"),
        }
    }

    /// Records loss of one arm. The partner becomes a heralded single in a
    /// computational-basis state sampled from its marginal distribution.
    pub fn mark_lost<R: Rng>(&mut self, pair: PairId, slot: Slot, rng: &mut R) {
        let entry = match self.entries.get_mut(&pair.0) {
            Some(e) => e,
            None => return,
        };
        match entry {
            PairState::Joint(state) => {
                let partner_slot = match slot {
                    Slot::A => Slot::B,
                    Slot::B => Slot::A,
                };
                // marginal P(partner = H)
                let a = &state.amps;
                let p_h = match partner_slot {
                    Slot::A => a[0].norm_sqr() + a[1].norm_sqr(),
                    Slot::B => a[0].norm_sqr() + a[2].norm_sqr(),
                };
                let collapsed = if rng.gen::<f64>() < p_h {
                    JonesVector::h()
                } else {
                    JonesVector::v()
                };
                *entry = PairState::Collapsed {
                    slot: partner_slot,
                    state: collapsed,
                };
            }
            PairState::Collapsed { slot: s, .. } => {
                if *s == slot {
                    *entry = PairState::Done;
                }
            }
            PairState::Done => {}
        }
    }

    /// Current pure state of a photon, if it is no longer jointly entangled.
    pub fn pure_state(&self, pair: PairId, slot: Slot) -> Option<JonesVector> {
        match self.entries.get(&pair.0) {
            Some(PairState::Collapsed { slot: s, state }) if *s == slot => Some(*state),
            _ => None,
        }
    }

    /// Number of entries that still hold an unresolved photon.
    pub fn unresolved(&self) -> usize {
        self.entries
            .values()
            .filter(|s| !matches!(s, PairState::Done))
            .count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
