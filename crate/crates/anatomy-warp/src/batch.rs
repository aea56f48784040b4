//! Seeded augmentation of single samples and batches on a bounded pool.
//!
//! Item `i` of a batch draws from `stream(seed, i)`, so the output does not
//! depend on the number of workers or on scheduling.

use anatomy_warp_core::rng::stream;
use anatomy_warp_core::{augment, AugmentationConfig, Augmented, TrainingSample};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "ANATOMY_WARP_THREADS";

/// Worker count: `ANATOMY_WARP_THREADS` if set, else the available cores.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Usage(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, usize::from)),
    }
}

pub fn pool(threads: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))
}

/// Pool sized by [`thread_count`].
pub fn default_pool() -> Result<ThreadPool> {
    pool(thread_count()?)
}

/// One augmentation drawn from `stream(seed, 0)`; the same draw the CLI
/// and the buffer interface make for `--seed seed`.
pub fn augment_seeded(sample: &TrainingSample, config: &AugmentationConfig, seed: u64) -> Result<Augmented> {
    augment_item(sample, config, seed, 0)
}

fn augment_item(sample: &TrainingSample, config: &AugmentationConfig, seed: u64, index: u64) -> Result<Augmented> {
    Ok(augment(sample, config, &mut stream(seed, index))?)
}

/// Augment every sample on `pool`, results in input order.
pub fn augment_batch(
    samples: &[TrainingSample],
    config: &AugmentationConfig,
    seed: u64,
    pool: &ThreadPool,
) -> Result<Vec<Augmented>> {
    config.validate()?;
    pool.install(|| {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| augment_item(s, config, seed, i as u64))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use anatomy_warp_core::{LabelVolume, MultiChannelVolume, ScalarVolume, VolumeGeometry};

    fn sample(k: usize) -> TrainingSample {
        let g = VolumeGeometry::new([20, 18, 6], [1.0, 1.0, 2.0]).unwrap();
        let img = ScalarVolume::from_fn(g, |x, y, z| (x * 7 + y * 3 + z + k) as f64);
        let organs = LabelVolume::from_fn(g, |x, y, _| {
            if (x as i32 - 8).pow(2) + (y as i32 - 9).pow(2) < 16 {
                1
            } else {
                0
            }
        });
        let lesions = LabelVolume::from_fn(g, |x, _, _| u32::from(x == 14));
        TrainingSample::new(MultiChannelVolume::from_scalar(img), lesions, organs).unwrap()
    }

    #[test]
    fn batch_output_is_independent_of_worker_count() {
        let samples: Vec<_> = (0..6).map(sample).collect();
        let mut config = AugmentationConfig::default();
        config.probability = 0.7;
        config.smoothing.sigma_inplane = 3.0;
        let one = augment_batch(&samples, &config, 11, &pool(1).unwrap()).unwrap();
        let three = augment_batch(&samples, &config, 11, &pool(3).unwrap()).unwrap();
        assert_eq!(one, three);
        assert_eq!(one[0], augment_seeded(&samples[0], &config, 11).unwrap());
    }
}
