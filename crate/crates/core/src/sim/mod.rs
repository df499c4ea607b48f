//! A deterministic CongestedClique simulator.
//!
//! `n` machines each own a private [`Store`]. Machines only learn about each
//! other through [`ClusterState::deliver`], which moves a whole
//! [`MessageBatch`] at a round boundary and charges the [`RoundLedger`] under
//! the Lenzen routing cost model: a pattern where no machine sends or receives
//! more than `n` words costs `lenzen_constant` rounds, and larger patterns
//! cost proportionally more.

mod ledger;
mod store;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::graph::Graph;

pub use ledger::{DeliverRecord, LabelStats, RoundLedger};
pub use store::Store;

/// Store key holding a machine's adjacency row, `Vec<(usize, u64)>`.
pub const ADJACENCY: &str = "adjacency";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostModel {
    /// Matrix multiplication exponent: one product costs `ceil(n^alpha)` rounds.
    pub alpha: f64,
    pub lenzen_constant: u64,
    pub word_bits: u32,
}

impl CostModel {
    pub fn new(n: usize) -> Self {
        CostModel { alpha: 0.158, lenzen_constant: 1, word_bits: default_word_bits(n) }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        assert!((0.0..1.0).contains(&alpha), "alpha must lie in [0, 1)");
        self.alpha = alpha;
        self
    }

    pub fn matmul_rounds(&self, n: usize) -> u64 {
        (n as f64).powf(self.alpha).ceil() as u64
    }

    /// Words needed for a payload of `bits` bits.
    pub fn words_for_bits(&self, bits: u64) -> u64 {
        bits.div_ceil(self.word_bits as u64)
    }
}

/// `ceil(2 log2 n)`, at least 1.
pub fn default_word_bits(n: usize) -> u32 {
    ((2.0 * (n.max(2) as f64).log2()).ceil() as u32).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message<T> {
    pub src: usize,
    pub dst: usize,
    /// Declared size used for bandwidth accounting.
    pub words: u64,
    pub payload: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageBatch<T> {
    msgs: Vec<Message<T>>,
}

impl<T> Default for MessageBatch<T> {
    fn default() -> Self {
        MessageBatch { msgs: Vec::new() }
    }
}

impl<T> MessageBatch<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, src: usize, dst: usize, words: u64, payload: T) {
        self.msgs.push(Message { src, dst, words, payload });
    }

    pub fn len(&self) -> usize {
        self.msgs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.msgs.is_empty()
    }

    pub fn messages(&self) -> &[Message<T>] {
        &self.msgs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Received<T> {
    pub src: usize,
    pub words: u64,
    pub payload: T,
}

/// Delivered messages grouped by receiver, each group ordered by sender and
/// then by position in the batch.
#[derive(Debug, Clone)]
pub struct Inbox<T> {
    msgs: Vec<Received<T>>,
    starts: Vec<usize>,
}

impl<T> Inbox<T> {
    pub fn at(&self, machine: usize) -> &[Received<T>] {
        &self.msgs[self.starts[machine]..self.starts[machine + 1]]
    }

    pub fn total(&self) -> usize {
        self.msgs.len()
    }

    /// Consumes the inbox, yielding each machine's messages in order.
    pub fn into_machines(self) -> Vec<Vec<Received<T>>> {
        let mut out = Vec::with_capacity(self.starts.len() - 1);
        let mut it = self.msgs.into_iter();
        for w in self.starts.windows(2) {
            out.push(it.by_ref().take(w[1] - w[0]).collect());
        }
        out
    }
}

/// One machine's view during local computation: its own store and its own
/// random stream.
pub struct MachineCtx<'a> {
    pub id: usize,
    pub store: &'a mut Store,
    seed: u64,
    epoch: u64,
    draws: &'a mut u64,
    rng: Option<ChaCha8Rng>,
}

impl MachineCtx<'_> {
    /// The machine's private randomness, derived from the cluster seed, the
    /// machine id, the number of delivers so far and a per-machine counter.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        if self.rng.is_none() {
            *self.draws += 1;
            let s = mix(&[self.seed, self.id as u64, self.epoch, *self.draws]);
            self.rng = Some(ChaCha8Rng::seed_from_u64(s));
        }
        self.rng.as_mut().unwrap()
    }
}

/// The simulated cluster.
#[derive(Debug)]
pub struct ClusterState {
    n: usize,
    rng_seed: u64,
    cost: CostModel,
    stores: Vec<Store>,
    ledger: RoundLedger,
    delivers: u64,
    draws: Vec<u64>,
    shared_calls: u64,
}

impl ClusterState {
    pub fn new(n: usize, rng_seed: u64, cost: CostModel) -> Self {
        assert!(n >= 1);
        ClusterState {
            n,
            rng_seed,
            cost,
            stores: (0..n).map(|_| Store::default()).collect(),
            ledger: RoundLedger::new(n),
            delivers: 0,
            draws: vec![0; n],
            shared_calls: 0,
        }
    }

    /// A cluster where machine `i` holds vertex `i` and its adjacency row.
    pub fn for_graph(g: &Graph, rng_seed: u64, cost: CostModel) -> Self {
        let mut cs = Self::new(g.n(), rng_seed, cost);
        for v in 0..g.n() {
            cs.stores[v].put(ADJACENCY, g.neighbors(v).to_vec());
        }
        cs
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn ledger(&self) -> &RoundLedger {
        &self.ledger
    }

    /// Keep a per-deliver record of traffic (needed by audits, off by default).
    pub fn set_trace(&mut self, on: bool) {
        self.ledger.set_trace(on);
    }

    pub fn machine(&mut self, id: usize) -> MachineCtx<'_> {
        MachineCtx {
            id,
            store: &mut self.stores[id],
            seed: self.rng_seed,
            epoch: self.delivers,
            draws: &mut self.draws[id],
            rng: None,
        }
    }

    /// Read-only look at a machine's store, for inspection and tests.
    pub fn peek(&self, id: usize) -> &Store {
        &self.stores[id]
    }

    /// Moves every message in `batch` to its receiver and charges
    /// `lenzen_constant * ceil(max(sent, received) / n)` rounds under `label`.
    pub fn deliver<T>(&mut self, batch: MessageBatch<T>, label: &str) -> Inbox<T> {
        let n = self.n;
        let mut sent = vec![0u64; n];
        let mut recv = vec![0u64; n];
        let mut recv_msgs = vec![0u64; n];
        for m in &batch.msgs {
            assert!(m.src < n && m.dst < n, "machine id out of range");
            sent[m.src] += m.words;
            recv[m.dst] += m.words;
            recv_msgs[m.dst] += 1;
        }
        let peak = sent.iter().chain(recv.iter()).copied().max().unwrap_or(0);
        let rounds = self.cost.lenzen_constant * peak.div_ceil(n as u64);
        self.delivers += 1;
        self.ledger.record_deliver(label, rounds, &sent, &recv, &recv_msgs);

        let mut msgs = batch.msgs;
        // Stable, so equal (dst, src) keep batch order.
        msgs.sort_by_key(|m| (m.dst, m.src));
        let mut starts = vec![0usize; n + 1];
        for m in &msgs {
            starts[m.dst + 1] += 1;
        }
        for i in 0..n {
            starts[i + 1] += starts[i];
        }
        let msgs = msgs
            .into_iter()
            .map(|m| Received { src: m.src, words: m.words, payload: m.payload })
            .collect();
        Inbox { msgs, starts }
    }

    /// `src` sends the same payload to every machine; costs `words` rounds.
    pub fn broadcast<T: Clone>(&mut self, src: usize, payload: T, words: u64, label: &str) -> T {
        if words == 0 {
            return payload;
        }
        let mut batch = MessageBatch::new();
        for dst in 0..self.n {
            batch.push(src, dst, words, payload.clone());
        }
        self.deliver(batch, label);
        payload
    }

    /// Broadcast through relays: `src` scatters `ceil(words / n)`-word pieces,
    /// then every machine forwards its piece to everyone. Two delivers, each
    /// costing `ceil(words / n)` units.
    pub fn relay_broadcast<T: Clone>(&mut self, src: usize, payload: T, words: u64, label: &str) -> T {
        if words == 0 {
            return payload;
        }
        let piece = words.div_ceil(self.n as u64);
        let mut scatter = MessageBatch::new();
        for dst in 0..self.n {
            scatter.push(src, dst, piece, ());
        }
        self.deliver(scatter, label);
        let mut gather = MessageBatch::new();
        for s in 0..self.n {
            for dst in 0..self.n {
                gather.push(s, dst, piece, ());
            }
        }
        self.deliver(gather, label);
        payload
    }

    fn next_shared(&mut self, bits: u64) -> Vec<u64> {
        self.shared_calls += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[self.rng_seed, u64::MAX, self.shared_calls]));
        let mut out: Vec<u64> = (0..bits.div_ceil(64)).map(|_| rand::Rng::gen(&mut rng)).collect();
        if bits % 64 != 0 {
            *out.last_mut().unwrap() &= (1u64 << (bits % 64)) - 1;
        }
        out
    }

    /// A fresh shared random bit string (packed little-endian into `u64`s),
    /// broadcast by `broadcaster`.
    pub fn shared_seed(&mut self, broadcaster: usize, bits: u64, label: &str) -> Vec<u64> {
        let s = self.next_shared(bits);
        let words = self.cost.words_for_bits(bits);
        self.broadcast(broadcaster, s, words, label)
    }

    /// Same as [`Self::shared_seed`] but spread with [`Self::relay_broadcast`].
    pub fn shared_seed_relayed(&mut self, broadcaster: usize, bits: u64, label: &str) -> Vec<u64> {
        let s = self.next_shared(bits);
        let words = self.cost.words_for_bits(bits);
        self.relay_broadcast(broadcaster, s, words, label)
    }

    /// Charges `count` matrix products of the current size without moving data.
    pub fn charge_matmul(&mut self, count: u64, label: &str) {
        self.charge_matmul_sized(count, self.n, label);
    }

    /// As [`Self::charge_matmul`] for products of `side x side` blocks.
    pub fn charge_matmul_sized(&mut self, count: u64, side: usize, label: &str) {
        let rounds = count * self.cost.matmul_rounds(side.max(1));
        self.ledger.charge(label, rounds, count);
    }
}

/// SplitMix64 folded over `parts`.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn deliver_costs() {
        let mut cs = ClusterState::new(4, 1, CostModel::new(4));
        let mut b = MessageBatch::new();
        for s in 0..4 {
            for d in 0..4 {
                b.push(s, d, 1, ());
            }
        }
        cs.deliver(b, "all");
        assert_eq!(cs.ledger().rounds_charged(), 1);

        let mut b = MessageBatch::new();
        b.push(1, 0, 12, ());
        cs.deliver(b, "hot");
        assert_eq!(cs.ledger().label("hot").rounds, 3);

        cs.deliver(MessageBatch::<()>::new(), "empty");
        assert_eq!(cs.ledger().label("empty").rounds, 0);
        assert_eq!(cs.ledger().rounds_charged(), 4);
    }

    #[test]
    fn inbox_order() {
        let mut cs = ClusterState::new(3, 1, CostModel::new(3));
        let mut b = MessageBatch::new();
        b.push(2, 0, 1, 'a');
        b.push(1, 0, 1, 'b');
        b.push(2, 0, 1, 'c');
        b.push(0, 2, 1, 'd');
        let inbox = cs.deliver(b, "x");
        let got: Vec<char> = inbox.at(0).iter().map(|r| r.payload).collect();
        assert_eq!(got, vec!['b', 'a', 'c']);
        assert!(inbox.at(1).is_empty());
        let per = inbox.into_machines();
        assert_eq!(per[2][0].payload, 'd');
    }

    #[test]
    fn broadcast_and_matmul_costs() {
        let mut cs = ClusterState::new(16, 1, CostModel::new(16));
        cs.broadcast(0, 7u8, 1, "b1");
        assert_eq!(cs.ledger().label("b1").rounds, 1);
        cs.broadcast(0, 7u8, 4, "b4");
        assert_eq!(cs.ledger().label("b4").rounds, 4);
        cs.broadcast(0, 7u8, 0, "b0");
        assert_eq!(cs.ledger().label("b0").rounds, 0);
        cs.charge_matmul(1, "matmul");
        assert_eq!(cs.ledger().label("matmul").rounds, 2);
        cs.charge_matmul(0, "matmul");
        assert_eq!(cs.ledger().label("matmul").rounds, 2);

        let mut flat = ClusterState::new(16, 1, CostModel::new(16).with_alpha(0.0));
        flat.charge_matmul(5, "matmul");
        assert_eq!(flat.ledger().label("matmul").rounds, 5);

        let mut relay = ClusterState::new(16, 1, CostModel::new(16));
        relay.relay_broadcast(3, (), 16, "r");
        assert_eq!(relay.ledger().label("r").rounds, 2);
    }

    #[test]
    fn shared_seeds() {
        let n = 8;
        let mut a = ClusterState::new(n, 42, CostModel::new(n));
        let wb = a.cost().word_bits as u64;
        let s1 = a.shared_seed(0, wb, "seed");
        assert_eq!(a.ledger().label("seed").rounds, 1);
        let s2 = a.shared_seed(0, wb, "seed");
        assert_ne!(s1, s2);
        let mut b = ClusterState::new(n, 42, CostModel::new(n));
        assert_eq!(b.shared_seed(0, wb, "seed"), s1);
        assert!(s1[0] < 1 << wb);
    }

    #[test]
    fn machine_randomness_is_reproducible_and_distinct() {
        let draw = |cs: &mut ClusterState, m| cs.machine(m).rng().gen::<u64>();
        let mut a = ClusterState::new(4, 9, CostModel::new(4));
        let mut b = ClusterState::new(4, 9, CostModel::new(4));
        let x: Vec<u64> = (0..4).map(|m| draw(&mut a, m)).collect();
        let y: Vec<u64> = (0..4).map(|m| draw(&mut b, m)).collect();
        assert_eq!(x, y);
        assert_ne!(x[0], x[1]);
        assert_ne!(draw(&mut a, 0), x[0]);
    }

    #[test]
    fn isolation_under_fault_injection() {
        let g = crate::corpus::named("k4").unwrap();
        let mut cs = ClusterState::for_graph(&g, 5, CostModel::new(4));
        let before: Vec<String> = (0..4).map(|m| cs.peek(m).fingerprint()).collect();
        cs.machine(2).store.put(ADJACENCY, vec![(0usize, 99u64)]);
        for m in [0, 1, 3] {
            assert_eq!(cs.peek(m).fingerprint(), before[m]);
        }
        assert_ne!(cs.peek(2).fingerprint(), before[2]);
    }

    #[test]
    fn ledger_matches_recount() {
        let mut cs = ClusterState::new(5, 3, CostModel::new(5));
        cs.set_trace(true);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for round in 0..20 {
            let mut b = MessageBatch::new();
            for _ in 0..rng.gen_range(0..30) {
                b.push(rng.gen_range(0..5), rng.gen_range(0..5), rng.gen_range(1..4), ());
            }
            let copy = b.clone();
            cs.deliver(b, if round % 2 == 0 { "even" } else { "odd" });
            let rec = cs.ledger().trace().unwrap().last().unwrap();
            let mut sent = [0u64; 5];
            let mut recv = [0u64; 5];
            for m in copy.messages() {
                sent[m.src] += m.words;
                recv[m.dst] += m.words;
            }
            assert_eq!(rec.sent_words, sent);
            assert_eq!(rec.recv_words, recv);
        }
        let ledger = cs.ledger();
        assert!(ledger.audit());
        let trace = ledger.trace().unwrap();
        for m in 0..5 {
            assert_eq!(ledger.max_send()[m], trace.iter().map(|r| r.sent_words[m]).max().unwrap());
            assert_eq!(ledger.max_recv()[m], trace.iter().map(|r| r.recv_words[m]).max().unwrap());
        }
    }
}
