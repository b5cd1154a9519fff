//! Flat bit encoding of an assignment: all x bits (request-major, then
//! device, then block) followed by all y bits (request-major).

use crate::assignment::Assignment;
use crate::error::{Error, Result};

/// Requests, devices, blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub requests: usize,
    pub devices: usize,
    pub blocks: usize,
}

impl Dims {
    pub fn of(a: &Assignment) -> Self {
        Self {
            requests: a.requests(),
            devices: a.devices(),
            blocks: a.blocks(),
        }
    }

    pub fn x_len(&self) -> usize {
        self.requests * self.devices * self.blocks
    }

    pub fn len(&self) -> usize {
        self.x_len() + self.requests * self.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn encode(a: &Assignment) -> Vec<bool> {
    let mut bits = Vec::with_capacity(Dims::of(a).len());
    bits.extend_from_slice(a.x_bits());
    bits.extend_from_slice(a.y_bits());
    bits
}

/// The stem's keep bit is forced on.
pub fn decode(bits: &[bool], dims: Dims) -> Result<Assignment> {
    if bits.len() != dims.len() {
        return Err(Error::LengthMismatch {
            what: "chromosome",
            expected: dims.len(),
            got: bits.len(),
        });
    }
    let (x, y) = bits.split_at(dims.x_len());
    Assignment::from_parts(dims.requests, dims.devices, dims.blocks, x.to_vec(), y.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn length_formula() {
        let d = Dims {
            requests: 1,
            devices: 2,
            blocks: 3,
        };
        assert_eq!(d.len(), 9);
        assert!(matches!(
            decode(&[false; 8], d),
            Err(Error::LengthMismatch {
                expected: 9,
                got: 8,
                ..
            })
        ));
    }

    #[test]
    fn zero_bits_keep_the_stem() {
        let d = Dims {
            requests: 2,
            devices: 2,
            blocks: 4,
        };
        let a = decode(&vec![false; d.len()], d).unwrap();
        assert!(a.keep(0, 0) && a.keep(1, 0));
        assert!(!a.keep(0, 1));
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let d = Dims {
                requests: rng.random_range(0..4),
                devices: rng.random_range(1..5),
                blocks: rng.random_range(1..7),
            };
            let mut bits: Vec<bool> = (0..d.len()).map(|_| rng.random_bool(0.5)).collect();
            for r in 0..d.requests {
                bits[d.x_len() + r * d.blocks] = true;
            }
            let a = decode(&bits, d).unwrap();
            assert_eq!(encode(&a), bits);
            assert_eq!(decode(&encode(&a), d).unwrap(), a);
        }
    }
}
