use rand::seq::SliceRandom;

use super::manifest::{Manifest, Split};
use crate::rng::rng_for;
use crate::{Error, Result};

pub const MIN_CLASS_SIZE: usize = 5;

/// Train/val/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split fractions {parts:?} must lie in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for a class of `n` samples. Test takes the
    /// ceiling of its share, val its share rounded half up, train the rest.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let nf = n as f64;
        let test = ((self.test * nf - 1e-9).ceil().max(0.0) as usize).min(n);
        let val = ((self.val * nf + 0.5 + 1e-9).floor() as usize).min(n - test);
        (n - test - val, val, test)
    }
}

/// Assigns every row to train/val/test per class. Rows of each class are
/// shuffled with a stream keyed by `(seed, class)`, then cut in order.
/// Augmented rows are not expected here; splitting happens on originals.
pub fn stratified_split(manifest: &Manifest, fractions: SplitFractions, seed: u64) -> Result<Manifest> {
    fractions.validate()?;
    let classes = manifest.scheme.class_count();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, r) in manifest.rows.iter().enumerate() {
        by_class[r.mapped_label].push(i);
    }
    let mut out = manifest.clone();
    out.seed = seed;
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.len() < MIN_CLASS_SIZE {
            return Err(Error::Stratification(format!(
                "class {} has {} samples, at least {MIN_CLASS_SIZE} required",
                manifest.scheme.classes[class],
                idx.len()
            )));
        }
        idx.shuffle(&mut rng_for(seed, &[class as u64]));
        let (train, val, _) = fractions.sizes(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            out.rows[i].split = if k < train {
                Split::Train
            } else if k < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassScheme, ImageSample, Origin};

    fn manifest(counts: &[usize]) -> Manifest {
        let labels: Vec<String> = (0..counts.len()).map(|i| format!("c{i}")).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let scheme = ClassScheme::identity("t", &refs).unwrap();
        let mut m = Manifest::empty(scheme, 0);
        for (c, &n) in counts.iter().enumerate() {
            for k in 0..n {
                let idx = m.rows.len();
                m.rows.push(ImageSample {
                    path: format!("c{c}/{k}.png"),
                    raw_label: labels[c].clone(),
                    mapped_label: c,
                    split: Split::Unassigned,
                    origin: Origin::Original,
                    source_index: idx,
                });
            }
        }
        m
    }

    #[test]
    fn ten_per_class_is_exact() {
        let s = stratified_split(&manifest(&[10, 10]), SplitFractions::default(), 1).unwrap();
        assert_eq!(s.class_counts(Split::Train), vec![6, 6]);
        assert_eq!(s.class_counts(Split::Val), vec![2, 2]);
        assert_eq!(s.class_counts(Split::Test), vec![2, 2]);
    }

    #[test]
    fn tiny_class_is_rejected() {
        let err = stratified_split(&manifest(&[10, 4]), SplitFractions::default(), 1);
        assert!(matches!(err, Err(Error::Stratification(_))));
    }

    #[test]
    fn same_seed_same_assignment() {
        let m = manifest(&[17, 23, 9]);
        let a = stratified_split(&m, SplitFractions::default(), 3).unwrap();
        let b = stratified_split(&m, SplitFractions::default(), 3).unwrap();
        let c = stratified_split(&m, SplitFractions::default(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let f = SplitFractions {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(stratified_split(&manifest(&[10]), f, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn train_share_is_within_one_sample(n in 5usize..5000) {
            let (train, val, test) = SplitFractions::default().sizes(n);
            proptest::prop_assert_eq!(train + val + test, n);
            proptest::prop_assert!((train as f64 - 0.6 * n as f64).abs() <= 1.0 + 1e-9);
            proptest::prop_assert_eq!(test, (n as f64 / 5.0).ceil() as usize);
        }
    }
}
