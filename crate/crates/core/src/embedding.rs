//! Image-branch embeddings and the deterministic synthetic backbone.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::rng;
use crate::EMBEDDING_DIM;

/// Output of the truncated image backbone for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageEmbedding {
    pub frame_id: String,
    pub vector: Vec<f32>,
}

impl ImageEmbedding {
    /// `true` when the vector has the backbone width and only finite entries.
    pub fn is_well_formed(&self) -> bool {
        self.vector.len() == EMBEDDING_DIM && self.vector.iter().all(|v| v.is_finite())
    }
}

/// Stand-in backbone: `frame_id` and `seed` hashed into a generator that
/// emits `EMBEDDING_DIM` values uniform in `[-1, 1)`.
pub fn synthetic_embedding(frame_id: &str, seed: u64) -> ImageEmbedding {
    let mut rng = rng::keyed(frame_id, seed);
    let vector = (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    ImageEmbedding { frame_id: frame_id.into(), vector }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_id_same_vector() {
        let a = synthetic_embedding("v1_t0", 7);
        assert_eq!(a, synthetic_embedding("v1_t0", 7));
        assert!(a.is_well_formed());
        assert_ne!(a.vector, synthetic_embedding("v1_t1", 7).vector);
        assert_ne!(a.vector, synthetic_embedding("v1_t0", 8).vector);
    }

    #[test]
    fn values_are_centered_and_bounded() {
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for i in 0..10 {
            let e = synthetic_embedding(&alloc::format!("frame{i}"), 1);
            for &v in &e.vector {
                assert!((-1.0..1.0).contains(&v));
                sum += v as f64;
                n += 1;
            }
        }
        assert!((sum / n as f64).abs() < 0.05);
    }
}
