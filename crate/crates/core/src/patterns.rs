//! Built-in test codes, one bit matrix per view.

use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// View `v` (0-based) gets a checkerboard with blocks of `1 + v % 3`
    /// pixels and phase `v / 3`.
    Checkerboard,
    /// Independent uniform bits per view from the run seed.
    Random,
}

/// Parsed generator request such as `checkerboard 9x9` or `random 21x21`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub rows: usize,
    pub cols: usize,
}

impl FromStr for PatternSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            Error::Format(format!(
                "unrecognized pattern {s:?}, expected e.g. \"random 21x21\""
            ))
        };
        let mut parts = s.split_whitespace();
        let kind = match parts.next().ok_or_else(bad)? {
            "checkerboard" => PatternKind::Checkerboard,
            "random" => PatternKind::Random,
            _ => return Err(bad()),
        };
        let (r, c) = parts
            .next()
            .ok_or_else(bad)?
            .split_once('x')
            .ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        let rows: usize = r.parse().map_err(|_| bad())?;
        let cols: usize = c.parse().map_err(|_| bad())?;
        if rows == 0 || cols == 0 {
            return Err(bad());
        }
        Ok(Self { kind, rows, cols })
    }
}

impl PatternSpec {
    pub fn generate(&self, views: usize, seed: u64) -> Vec<Array2<u8>> {
        match self.kind {
            PatternKind::Checkerboard => (0..views)
                .map(|v| {
                    let block = 1 + v % 3;
                    let phase = v / 3;
                    Array2::from_shape_fn((self.rows, self.cols), |(r, c)| {
                        ((r / block + c / block + phase) % 2) as u8
                    })
                })
                .collect(),
            PatternKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..views)
                    .map(|_| {
                        Array2::from_shape_fn((self.rows, self.cols), |_| {
                            u8::from(rng.random::<bool>())
                        })
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_generate() {
        let p: PatternSpec = "checkerboard 9x9".parse().unwrap();
        assert_eq!(p.kind, PatternKind::Checkerboard);
        let a = p.generate(9, 0);
        assert_eq!(a.len(), 9);
        assert_eq!(a, p.generate(9, 123));
        assert_eq!(a[0][(0, 0)], 0);
        assert_eq!(a[0][(0, 1)], 1);

        let r: PatternSpec = "random 21x21".parse().unwrap();
        assert_eq!(r.generate(25, 4), r.generate(25, 4));
        assert_ne!(r.generate(9, 4), r.generate(9, 5));

        for bad in [
            "stripes 3x3",
            "random 3",
            "random 0x4",
            "random 3x3 extra",
            "",
        ] {
            assert!(bad.parse::<PatternSpec>().is_err(), "{bad}");
        }
    }
}
