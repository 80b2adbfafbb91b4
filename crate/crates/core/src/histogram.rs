use serde::{Deserialize, Serialize};

use crate::error::FrameError;
use crate::frame::GrayImage;

pub const DEFAULT_BIN_COUNT: usize = 64;

/// A normalized grayscale histogram; bins sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Histogram {
    bins: Vec<f64>,
}

impl Histogram {
    /// Wraps raw bins. The caller is responsible for normalization.
    pub fn from_bins(bins: Vec<f64>) -> Self {
        Self { bins }
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// Element-wise arithmetic mean of a non-empty set of equally sized histograms.
    pub fn mean_of<'a, I>(histograms: I) -> Option<Histogram>
    where
        I: IntoIterator<Item = &'a Histogram>,
    {
        let mut iter = histograms.into_iter();
        let first = iter.next()?;
        let mut acc = first.bins.clone();
        let mut count = 1usize;
        for h in iter {
            debug_assert_eq!(h.bins.len(), acc.len());
            for (a, b) in acc.iter_mut().zip(&h.bins) {
                *a += b;
            }
            count += 1;
        }
        let inv = 1.0 / count as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Some(Histogram { bins: acc })
    }
}

/// Counts pixels into `bin_count` equal-width intensity bins and normalizes.
///
/// Bin `k` covers `[k * 256 / B, (k + 1) * 256 / B)`.
pub fn compute_histogram(image: &GrayImage, bin_count: usize) -> Result<Histogram, FrameError> {
    if bin_count == 0 || 256 % bin_count != 0 {
        return Err(FrameError::BinCount(bin_count));
    }
    if image.pixels.is_empty() {
        return Err(FrameError::EmptyFrame);
    }
    let width = 256 / bin_count;
    let mut counts = vec![0u64; bin_count];
    for &p in &image.pixels {
        counts[p as usize / width] += 1;
    }
    let total = image.pixels.len() as f64;
    Ok(Histogram {
        bins: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent count: test every pixel against every bin's interval.
    fn brute_force(image: &GrayImage, bins: usize) -> Vec<f64> {
        let mut out = vec![0.0; bins];
        for (k, slot) in out.iter_mut().enumerate() {
            let lo = (k * 256) as f64 / bins as f64;
            let hi = ((k + 1) * 256) as f64 / bins as f64;
            let n = image
                .pixels
                .iter()
                .filter(|&&p| f64::from(p) >= lo && f64::from(p) < hi)
                .count();
            *slot = n as f64 / image.pixels.len() as f64;
        }
        out
    }

    fn random_image(seed: u64, w: u32, h: u32) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..w * h).map(|_| rng.random::<u8>()).collect();
        GrayImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn constant_zero_frame() {
        let h = compute_histogram(&GrayImage::filled(4, 4, 0), 64).unwrap();
        assert_eq!(h.bins()[0], 1.0);
        assert!(h.bins()[1..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn two_tone_frame() {
        let mut pixels = vec![0u8; 8];
        pixels[4..].fill(255);
        let h = compute_histogram(&GrayImage::new(4, 2, pixels).unwrap(), 64).unwrap();
        assert_eq!(h.bins()[0], 0.5);
        assert_eq!(h.bins()[63], 0.5);
        assert_eq!(h.total(), 1.0);
    }

    #[test]
    fn seeded_random_frame_matches_brute_force() {
        let img = random_image(7, 8, 8);
        let h = compute_histogram(&img, 64).unwrap();
        assert_eq!(h.bins(), brute_force(&img, 64).as_slice());
    }

    #[test]
    fn rejects_bad_bin_counts_and_empty_frames() {
        let img = GrayImage::filled(2, 2, 9);
        assert!(matches!(
            compute_histogram(&img, 0),
            Err(FrameError::BinCount(0))
        ));
        assert!(matches!(
            compute_histogram(&img, 48),
            Err(FrameError::BinCount(48))
        ));
        let empty = GrayImage::new(0, 0, vec![]).unwrap();
        assert!(matches!(
            compute_histogram(&empty, 64),
            Err(FrameError::EmptyFrame)
        ));
    }

    #[test]
    fn mean_of_two() {
        let p = Histogram::from_bins(vec![1.0, 0.0]);
        let q = Histogram::from_bins(vec![0.0, 1.0]);
        assert_eq!(Histogram::mean_of([&p, &q]).unwrap().bins(), &[0.5, 0.5]);
        assert!(Histogram::mean_of(std::iter::empty()).is_none());
    }

    proptest::proptest! {
        #[test]
        fn normalized_and_matches_brute_force(
            seed in 0u64..10_000,
            w in 1u32..=64,
            h in 1u32..=64,
            bins_pow in 1u32..=8,
        ) {
            let bins = 1usize << bins_pow;
            let img = random_image(seed, w, h);
            let hist = compute_histogram(&img, bins).unwrap();
            proptest::prop_assert!((hist.total() - 1.0).abs() < 1e-9);
            proptest::prop_assert!(hist.bins().iter().all(|&b| b >= 0.0));
            let oracle = brute_force(&img, bins);
            proptest::prop_assert_eq!(hist.bins(), oracle.as_slice());
        }
    }
}
