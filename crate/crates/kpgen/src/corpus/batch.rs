use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::encode::{delimiter_positions, EncodedExample};
use crate::corpus::vocab::PAD_ID;

/// A padded batch. The model walks examples by their true lengths; the padded
/// matrices and masks exist for inspection and for consumers that want a
/// rectangular layout.
#[derive(Debug, Clone)]
pub struct Batch {
    pub examples: Vec<EncodedExample>,
    /// B x S source ids (base vocab), padded with `<pad>`.
    pub source: Vec<Vec<usize>>,
    /// B x S source ids over the extended space.
    pub source_ext: Vec<Vec<usize>>,
    /// B x S: 1 on real positions, 0 on padding.
    pub source_mask: Vec<Vec<u8>>,
    /// B x T teacher-forcing inputs.
    pub target_in: Vec<Vec<usize>>,
    /// B x T target ids over the extended space.
    pub target_ext: Vec<Vec<usize>>,
    /// B x T: 1 on real positions.
    pub target_mask: Vec<Vec<u8>>,
    /// B x T: 1 where the target token is `<sep>` or `</s>`.
    pub delimiter_mask: Vec<Vec<u8>>,
}

impl Batch {
    pub fn new(examples: Vec<EncodedExample>) -> Self {
        let s_max = examples.iter().map(EncodedExample::source_len).max().unwrap_or(0);
        let t_max = examples.iter().map(EncodedExample::target_len).max().unwrap_or(0);
        let mut source = Vec::new();
        let mut source_ext = Vec::new();
        let mut source_mask = Vec::new();
        let mut target_in = Vec::new();
        let mut target_ext = Vec::new();
        let mut target_mask = Vec::new();
        let mut delimiter_mask = Vec::new();
        for ex in &examples {
            let pad = |ids: &[usize], width: usize| {
                let mut row = ids.to_vec();
                row.resize(width, PAD_ID);
                row
            };
            let mask = |len: usize, width: usize| {
                let mut row = vec![1u8; len];
                row.resize(width, 0);
                row
            };
            source.push(pad(&ex.source_ids, s_max));
            source_ext.push(pad(&ex.source_ext_ids, s_max));
            source_mask.push(mask(ex.source_len(), s_max));
            target_in.push(pad(&ex.target_in_ids, t_max));
            target_ext.push(pad(&ex.target_ext_ids, t_max));
            target_mask.push(mask(ex.target_len(), t_max));
            let mut delim = vec![0u8; t_max];
            for pos in delimiter_positions(&ex.target_ext_ids) {
                delim[pos] = 1;
            }
            delimiter_mask.push(delim);
        }
        Batch {
            examples,
            source,
            source_ext,
            source_mask,
            target_in,
            target_ext,
            target_mask,
            delimiter_mask,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Shuffle examples with the given seed and group them into padded batches.
pub fn make_batches(examples: &[EncodedExample], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size)
        .map(|chunk| Batch::new(chunk.iter().map(|&i| examples[i].clone()).collect()))
        .collect()
}
