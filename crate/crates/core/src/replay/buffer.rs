use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::dataset::largest_remainder;
use crate::env::Transition;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Offline,
    Generated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    Offline,
    Generated,
    Prioritized,
}

/// A transition as the learner sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct Stored {
    pub transition: Transition,
    /// Normalized reward fed to the critic: raw for real data, penalized for synthetic data.
    pub reward: f64,
    /// The dataset's next action when the next step exists in the same trajectory.
    pub next_action: Option<Vec<f64>>,
    pub source: Source,
    /// Insertion order across the whole buffer.
    pub seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrioritySpec {
    pub quantile_q: f64,
    pub rebuild_every: usize,
}

impl Default for PrioritySpec {
    fn default() -> Self {
        Self {
            quantile_q: 0.1,
            rebuild_every: 1000,
        }
    }
}

impl PrioritySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile_q > 0.0 && self.quantile_q <= 0.5) || self.rebuild_every == 0 {
            return Err(Error::Config(format!(
                "priority: quantile_q must lie in (0, 0.5] and rebuild_every >= 1, got {} / {}",
                self.quantile_q, self.rebuild_every
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSchedule {
    pub warmup_steps: usize,
    pub mix_offline: f64,
    pub mix_generated: f64,
    pub mix_prioritized: f64,
}

impl Default for SamplingSchedule {
    fn default() -> Self {
        Self {
            warmup_steps: 5000,
            mix_offline: 0.6,
            mix_generated: 0.3,
            mix_prioritized: 0.1,
        }
    }
}

impl SamplingSchedule {
    pub fn validate(&self) -> Result<()> {
        let w = [self.mix_offline, self.mix_generated, self.mix_prioritized];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "sampling: mixture weights must be >= 0 and sum to 1, got {w:?}"
            )));
        }
        Ok(())
    }

    /// Per-partition counts `[offline, generated, prioritized]` for one batch.
    pub fn counts(&self, batch_size: usize, global_step: usize, generated_empty: bool, prioritized_empty: bool) -> [usize; 3] {
        if global_step < self.warmup_steps {
            return [batch_size, 0, 0];
        }
        let c = largest_remainder(batch_size, &[self.mix_offline, self.mix_generated, self.mix_prioritized]);
        let mut out = [c[0], c[1], c[2]];
        if generated_empty {
            out[0] += out[1];
            out[1] = 0;
        }
        if prioritized_empty {
            out[0] += out[2];
            out[2] = 0;
        }
        out
    }
}

/// Offline, generated and prioritized segments.
#[derive(Clone, Debug)]
pub struct PartitionedBuffer {
    offline: Vec<Stored>,
    generated: VecDeque<Stored>,
    prioritized: Vec<Stored>,
    generated_capacity: usize,
    next_seq: u64,
}

/// One sampled batch with the partition each row came from.
#[derive(Clone, Debug)]
pub struct SampledBatch<'a> {
    pub items: Vec<&'a Stored>,
    pub partitions: Vec<Partition>,
    pub counts: [usize; 3],
}

impl PartitionedBuffer {
    /// `offline` is fixed from here on.
    pub fn new(offline: Vec<Stored>, generated_capacity: usize) -> Result<Self> {
        if offline.is_empty() {
            return Err(Error::InvalidArgument("offline partition must not be empty".into()));
        }
        if generated_capacity == 0 {
            return Err(Error::InvalidArgument("generated capacity must be >= 1".into()));
        }
        let mut offline = offline;
        for (i, s) in offline.iter_mut().enumerate() {
            s.seq = i as u64;
            s.source = Source::Offline;
        }
        let next_seq = offline.len() as u64;
        Ok(Self {
            offline,
            generated: VecDeque::new(),
            prioritized: Vec::new(),
            generated_capacity,
            next_seq,
        })
    }

    pub fn offline(&self) -> &[Stored] {
        &self.offline
    }

    pub fn generated(&self) -> impl ExactSizeIterator<Item = &Stored> {
        self.generated.iter()
    }

    pub fn prioritized(&self) -> &[Stored] {
        &self.prioritized
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.offline.len(), self.generated.len(), self.prioritized.len()]
    }

    /// Append synthetic transitions, evicting the oldest beyond capacity.
    pub fn insert_generated(&mut self, items: impl IntoIterator<Item = Stored>) {
        for mut s in items {
            s.seq = self.next_seq;
            s.source = Source::Generated;
            self.next_seq += 1;
            if self.generated.len() == self.generated_capacity {
                self.generated.pop_front();
            }
            self.generated.push_back(s);
        }
    }

    /// Replace the prioritized segment with copies of the bottom-`q` and top-`q` transitions
    /// of offline ∪ generated by reward, `⌈q·N⌉` each, ties going to the earlier insertion.
    pub fn rebuild_prioritized(&mut self, spec: &PrioritySpec) -> Result<()> {
        spec.validate()?;
        let all: Vec<&Stored> = self.offline.iter().chain(self.generated.iter()).collect();
        let n = all.len();
        let c = ((spec.quantile_q * n as f64 - 1e-9).ceil() as usize).max(1);
        if 2 * c >= n {
            self.prioritized = all.into_iter().cloned().collect();
            return Ok(());
        }
        let mut asc = all.clone();
        asc.sort_by(|a, b| a.reward.total_cmp(&b.reward).then(a.seq.cmp(&b.seq)));
        let mut desc = all;
        desc.sort_by(|a, b| b.reward.total_cmp(&a.reward).then(a.seq.cmp(&b.seq)));
        self.prioritized = asc[..c].iter().chain(&desc[..c]).map(|s| (*s).clone()).collect();
        Ok(())
    }

    /// Draw a batch uniformly within partitions according to `schedule`.
    pub fn sample(
        &self,
        schedule: &SamplingSchedule,
        batch_size: usize,
        global_step: usize,
        rng: &mut impl Rng,
    ) -> Result<SampledBatch<'_>> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        let counts = schedule.counts(
            batch_size,
            global_step,
            self.generated.is_empty(),
            self.prioritized.is_empty(),
        );
        let mut items = Vec::with_capacity(batch_size);
        let mut partitions = Vec::with_capacity(batch_size);
        for _ in 0..counts[0] {
            items.push(&self.offline[rng.gen_range(0..self.offline.len())]);
            partitions.push(Partition::Offline);
        }
        for _ in 0..counts[1] {
            items.push(&self.generated[rng.gen_range(0..self.generated.len())]);
            partitions.push(Partition::Generated);
        }
        for _ in 0..counts[2] {
            items.push(&self.prioritized[rng.gen_range(0..self.prioritized.len())]);
            partitions.push(Partition::Prioritized);
        }
        Ok(SampledBatch {
            items,
            partitions,
            counts,
        })
    }
}
