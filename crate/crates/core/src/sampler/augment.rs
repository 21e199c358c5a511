use babel_numerics::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub n_freq_masks: usize,
    pub max_freq_width: usize,
    pub n_time_masks: usize,
    pub max_time_width: usize,
    /// Upper bound on a time mask as a fraction of the utterance length.
    pub max_time_ratio: f64,
    pub enabled: bool,
}

impl Default for AugmentPolicy {
    /// LibriSpeech "double" values, disabled until the curriculum completes.
    fn default() -> Self {
        Self {
            n_freq_masks: 2,
            max_freq_width: 27,
            n_time_masks: 2,
            max_time_width: 100,
            max_time_ratio: 1.0,
            enabled: false,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_time_ratio) {
            return Err(Error::Config(format!(
                "augment.max_time_ratio must be in [0, 1], got {}",
                self.max_time_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mask {
    Freq { start: usize, width: usize },
    Time { start: usize, width: usize },
}

/// Frequency then time masks, zero-filled; the input is never modified.
pub fn spec_augment<R: Rng + ?Sized>(features: &Tensor, policy: &AugmentPolicy, rng: &mut R) -> Tensor {
    spec_augment_masked(features, policy, rng).0
}

/// [`spec_augment`] that also reports the masks it applied.
pub fn spec_augment_masked<R: Rng + ?Sized>(
    features: &Tensor,
    policy: &AugmentPolicy,
    rng: &mut R,
) -> (Tensor, Vec<Mask>) {
    let mut out = features.clone();
    let mut masks = Vec::new();
    if !policy.enabled {
        return (out, masks);
    }
    let (t, f) = (features.rows(), features.cols());
    let max_f = policy.max_freq_width.min(f);
    let max_t = policy
        .max_time_width
        .min((policy.max_time_ratio * t as f64).floor() as usize)
        .min(t);
    for _ in 0..policy.n_freq_masks {
        let width = rng.random_range(0..=max_f);
        let start = rng.random_range(0..=f - width);
        masks.push(Mask::Freq { start, width });
    }
    for _ in 0..policy.n_time_masks {
        let width = rng.random_range(0..=max_t);
        let start = rng.random_range(0..=t - width);
        masks.push(Mask::Time { start, width });
    }
    if masks
        .iter()
        .all(|m| matches!(m, Mask::Freq { width: 0, .. } | Mask::Time { width: 0, .. }))
    {
        return (out, masks);
    }
    let data = out.data_mut();
    for m in &masks {
        match *m {
            Mask::Freq { start, width } => {
                for r in 0..t {
                    data[r * f + start..r * f + start + width].fill(0.0);
                }
            }
            Mask::Time { start, width } => data[start * f..(start + width) * f].fill(0.0),
        }
    }
    (out, masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(t: usize, f: usize) -> Tensor {
        Tensor::new(&[t, f], (0..t * f).map(|i| 1.0 + i as f64).collect()).unwrap()
    }

    #[test]
    fn disabled_or_zero_width_is_identity() {
        let x = ramp(100, 80);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(spec_augment(&x, &AugmentPolicy::disabled(), &mut rng), x);
        let zero = AugmentPolicy {
            max_freq_width: 0,
            max_time_width: 0,
            enabled: true,
            ..AugmentPolicy::default()
        };
        assert_eq!(spec_augment(&x, &zero, &mut rng), x);
    }

    #[test]
    fn masked_cells_exact() {
        let x = ramp(100, 80);
        let policy = AugmentPolicy {
            enabled: true,
            ..AugmentPolicy::default()
        };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (y, masks) = spec_augment_masked(&x, &policy, &mut rng);
            assert_eq!(masks.len(), 4);
            for r in 0..100 {
                for c in 0..80 {
                    let hit = masks.iter().any(|m| match *m {
                        Mask::Freq { start, width } => (start..start + width).contains(&c),
                        Mask::Time { start, width } => (start..start + width).contains(&r),
                    });
                    let expect = if hit { 0.0 } else { x.at(r, c) };
                    assert_eq!(y.at(r, c), expect);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn bounded_masking(t in 1usize..60, f in 1usize..40, nf in 0usize..4, wf in 0usize..30,
                           nt in 0usize..4, wt in 0usize..80, ratio in 0.0f64..=1.0, seed in any::<u64>()) {
            let x = ramp(t, f);
            let policy = AugmentPolicy { n_freq_masks: nf, max_freq_width: wf, n_time_masks: nt,
                max_time_width: wt, max_time_ratio: ratio, enabled: true };
            let y = spec_augment(&x, &policy, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(y.shape(), x.shape());
            let zeros = y.data().iter().filter(|&&v| v == 0.0).count();
            prop_assert!(zeros <= nf * wf * t + nt * wt * f);
            prop_assert!(x.data().iter().all(|&v| v >= 1.0));
        }
    }
}
