use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chronological split fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.train, self.val, self.test].iter().all(|f| *f > 0.0 && *f < 1.0);
        if !ok || (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "split fractions must be positive and sum to 1, got {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }

    /// Step boundaries `[0, a)`, `[a, b)`, `[b, len)`.
    pub fn boundaries(&self, len: usize) -> (usize, usize) {
        let a = (len as f64 * self.train + 1e-9).floor() as usize;
        let b = (len as f64 * (self.train + self.val) + 1e-9).floor() as usize;
        (a.min(len), b.min(len))
    }
}

/// Window start indices; each window covers `start..start+P` as inputs and
/// the following `Q` steps as targets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stride-1 windows inside `from..to`.
pub fn sliding_windows(from: usize, to: usize, p: usize, q: usize) -> Vec<usize> {
    if to < from + p + q {
        return Vec::new();
    }
    (from..=to - p - q).collect()
}

/// Windows of each split lie entirely inside that split's steps.
pub fn split_windows(len: usize, p: usize, q: usize, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    if len < p + q {
        return Err(Error::Data(format!("series of {len} steps is shorter than P + Q = {}", p + q)));
    }
    let (a, b) = spec.boundaries(len);
    let splits = Splits {
        train: sliding_windows(0, a, p, q),
        val: sliding_windows(a, b, p, q),
        test: sliding_windows(b, len, p, q),
    };
    for (name, set, lo, hi) in [
        ("training", &splits.train, 0, a),
        ("validation", &splits.val, a, b),
        ("test", &splits.test, b, len),
    ] {
        if set.is_empty() {
            return Err(Error::Data(format!(
                "{name} split has {} steps ({lo}..{hi}), fewer than P + Q = {}",
                hi - lo,
                p + q
            )));
        }
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_length_gives_one_window() {
        assert_eq!(sliding_windows(0, 24, 12, 12), vec![0]);
        assert!(sliding_windows(0, 23, 12, 12).is_empty());
    }

    /// Enumerate every start and keep those whose steps stay in one split.
    fn enumerate(len: usize, p: usize, q: usize, spec: &SplitSpec) -> [usize; 3] {
        let a = (len as f64 * spec.train + 1e-9).floor() as usize;
        let b = (len as f64 * (spec.train + spec.val) + 1e-9).floor() as usize;
        let seg = |t: usize| if t < a { 0 } else if t < b { 1 } else { 2 };
        let mut counts = [0; 3];
        for s in 0..=len - p - q {
            let first = seg(s);
            if (s..s + p + q).all(|t| seg(t) == first) {
                counts[first] += 1;
            }
        }
        counts
    }

    #[test]
    fn counts_match_enumeration() {
        let spec = SplitSpec::default();
        for len in [200, 347, 2016] {
            let s = split_windows(len, 12, 12, &spec).unwrap();
            assert_eq!([s.train.len(), s.val.len(), s.test.len()], enumerate(len, 12, 12, &spec));
        }
        let s = split_windows(200, 12, 12, &spec).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (97, 17, 17));
    }

    #[test]
    fn hundred_steps_is_too_short_for_validation() {
        // 20 validation steps cannot hold a 24-step window without
        // crossing into a neighbouring split
        let err = split_windows(100, 12, 12, &SplitSpec::default()).unwrap_err();
        assert!(err.to_string().contains("validation"), "{err}");
        assert_eq!(enumerate(100, 12, 12, &SplitSpec::default()), [37, 0, 0]);
    }

    #[test]
    fn targets_follow_inputs() {
        let s = split_windows(500, 12, 3, &SplitSpec::default()).unwrap();
        for &w in s.train.iter().chain(&s.val).chain(&s.test) {
            let input_end = w + 12 - 1;
            let target_start = w + 12;
            assert_eq!(target_start, input_end + 1);
        }
        assert!(s.train.last().unwrap() + 15 <= 300);
        assert!(*s.val.first().unwrap() >= 300);
    }
}
