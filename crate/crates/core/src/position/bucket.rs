use serde::{Deserialize, Serialize};

use super::RelativePosition;
use crate::error::{Error, Result};

/// Maps relative positions to rows of the bias table. Signed distances use the
/// bidirectional log-bucket scheme; the three sentinels get the rows appended
/// right after the distance buckets, in the order G2G, T2G, G2T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketTable {
    pub num_distance_buckets: usize,
    pub max_distance: usize,
}

impl Default for BucketTable {
    fn default() -> Self {
        Self {
            num_distance_buckets: 32,
            max_distance: 128,
        }
    }
}

impl BucketTable {
    pub fn new(num_distance_buckets: usize, max_distance: usize) -> Self {
        Self {
            num_distance_buckets,
            max_distance,
        }
    }

    /// Total rows including the sentinel buckets.
    pub fn len(&self) -> usize {
        self.num_distance_buckets + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn g2g(&self) -> usize {
        self.num_distance_buckets
    }

    pub fn t2g(&self) -> usize {
        self.num_distance_buckets + 1
    }

    pub fn g2t(&self) -> usize {
        self.num_distance_buckets + 2
    }

    /// Bucket shared by all large positive distances.
    pub fn positive_infinity(&self) -> usize {
        self.num_distance_buckets - 1
    }

    /// Bucket of the signed distance `key - query`.
    pub fn distance_bucket(&self, distance: i32) -> usize {
        let half = self.num_distance_buckets / 2;
        let mut bucket = if distance > 0 { half } else { 0 };
        let n = distance.unsigned_abs() as usize;
        let max_exact = half / 2;
        if n < max_exact {
            return bucket + n;
        }
        // Single precision on purpose: pretrained tables were indexed with
        // float32 arithmetic, and boundary distances round accordingly.
        let scaled = (n as f32 / max_exact as f32).ln() / ((self.max_distance as f64 / max_exact as f64).ln() as f32)
            * (half - max_exact) as f32;
        bucket += (max_exact + scaled as usize).min(half - 1);
        bucket
    }

    pub fn bucketize(&self, rp: RelativePosition) -> Result<usize> {
        match rp {
            RelativePosition::Distance(d) => Ok(self.distance_bucket(d)),
            RelativePosition::G2G => Ok(self.g2g()),
            RelativePosition::T2G => Ok(self.t2g()),
            RelativePosition::G2T => Ok(self.g2t()),
            RelativePosition::None => Err(Error::NoBucket),
        }
    }
}
