use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, Segment};

/// Stacked inputs `[B, C, W]` (row-major) and their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Vec<f32>,
    pub y: Vec<usize>,
    pub channels: usize,
    pub window: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Mixes a base seed with an epoch index (SplitMix64 finalizer).
pub fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    let mut z = seed ^ epoch.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Single-owner iterator over batches; the last batch may be partial.
pub struct Batches<'a> {
    segments: &'a [Segment],
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Batches<'_> {
    /// Segment indices in visiting order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let idx = &self.order[self.next..(self.next + self.batch_size).min(self.order.len())];
        self.next += idx.len();
        let first = &self.segments[idx[0]];
        let mut x = Vec::with_capacity(idx.len() * first.data.len());
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(&self.segments[i].data);
            y.push(self.segments[i].label);
        }
        Some(Batch {
            x,
            y,
            channels: first.channels,
            window: first.window,
        })
    }
}

/// Batches in stored order, or in a seeded permutation when
/// `shuffle_seed` is set.
pub fn batches(
    segments: &[Segment],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Batches<'_>, DatasetError> {
    if batch_size == 0 {
        return Err(DatasetError::Config("batch size must be at least 1".into()));
    }
    if let Some(s) = segments.first() {
        if segments
            .iter()
            .any(|o| (o.channels, o.window) != (s.channels, s.window))
        {
            return Err(DatasetError::Config(
                "segments of different shapes cannot be batched".into(),
            ));
        }
    }
    let mut order: Vec<usize> = (0..segments.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(Batches {
        segments,
        order,
        batch_size,
        next: 0,
    })
}
