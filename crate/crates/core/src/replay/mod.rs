//! Three-segment replay buffer with a warm-up then hybrid sampling curriculum.

pub mod buffer;

pub use buffer::{PartitionedBuffer, Partition, PrioritySpec, SampledBatch, SamplingSchedule, Source, Stored};
