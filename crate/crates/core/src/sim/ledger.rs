use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelStats {
    pub rounds: u64,
    /// Number of charge events (delivers, or individual matrix products).
    pub units: u64,
}

/// Traffic of one deliver, kept only when tracing is on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliverRecord {
    pub label: String,
    pub rounds: u64,
    pub sent_words: Vec<u64>,
    pub recv_words: Vec<u64>,
    pub recv_messages: Vec<u64>,
}

/// Accumulated round accounting. Never reset while an experiment runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundLedger {
    rounds_charged: u64,
    labels: BTreeMap<String, LabelStats>,
    max_send: Vec<u64>,
    max_recv: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<DeliverRecord>>,
}

impl RoundLedger {
    pub(super) fn new(n: usize) -> Self {
        RoundLedger {
            rounds_charged: 0,
            labels: BTreeMap::new(),
            max_send: vec![0; n],
            max_recv: vec![0; n],
            trace: None,
        }
    }

    pub(super) fn set_trace(&mut self, on: bool) {
        match (on, self.trace.is_some()) {
            (true, false) => self.trace = Some(Vec::new()),
            (false, true) => self.trace = None,
            _ => {}
        }
    }

    pub(super) fn charge(&mut self, label: &str, rounds: u64, units: u64) {
        self.rounds_charged += rounds;
        match self.labels.get_mut(label) {
            Some(s) => {
                s.rounds += rounds;
                s.units += units;
            }
            None => {
                self.labels.insert(label.to_string(), LabelStats { rounds, units });
            }
        }
    }

    pub(super) fn record_deliver(&mut self, label: &str, rounds: u64, sent: &[u64], recv: &[u64], recv_msgs: &[u64]) {
        self.charge(label, rounds, 1);
        for (m, (&s, &r)) in sent.iter().zip(recv).enumerate() {
            self.max_send[m] = self.max_send[m].max(s);
            self.max_recv[m] = self.max_recv[m].max(r);
        }
        if let Some(t) = self.trace.as_mut() {
            t.push(DeliverRecord {
                label: label.to_string(),
                rounds,
                sent_words: sent.to_vec(),
                recv_words: recv.to_vec(),
                recv_messages: recv_msgs.to_vec(),
            });
        }
    }

    pub fn rounds_charged(&self) -> u64 {
        self.rounds_charged
    }

    pub fn label(&self, label: &str) -> LabelStats {
        self.labels.get(label).copied().unwrap_or_default()
    }

    pub fn labels(&self) -> &BTreeMap<String, LabelStats> {
        &self.labels
    }

    /// Sum over every label starting with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> LabelStats {
        self.labels
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .fold(LabelStats::default(), |acc, (_, s)| LabelStats {
                rounds: acc.rounds + s.rounds,
                units: acc.units + s.units,
            })
    }

    pub fn max_send(&self) -> &[u64] {
        &self.max_send
    }

    pub fn max_recv(&self) -> &[u64] {
        &self.max_recv
    }

    pub fn trace(&self) -> Option<&[DeliverRecord]> {
        self.trace.as_deref()
    }

    /// Per-label rounds add up to the total.
    pub fn audit(&self) -> bool {
        self.labels.values().map(|s| s.rounds).sum::<u64>() == self.rounds_charged
    }
}
