use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Noisy copy of an image plus the SNR actually realized before clipping.
#[derive(Debug, Clone)]
pub struct NoiseRealization {
    pub noisy: Array2<f64>,
    pub realized_snr_db: f64,
    pub sigma: f64,
}

/// Noise standard deviation giving `snr_db` for the pooled power ratio
/// `||X||^2 / (L N sigma^2)`.
pub fn noise_sigma(x: &Array2<f64>, snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return 0.0;
    }
    let power: f64 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    (power / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// Adds i.i.d. Gaussian noise at the requested SNR and clips at zero.
/// Frame `l` draws from stream `l` of the seeded generator, so the result
/// does not depend on evaluation order.
pub fn add_noise(x: &Array2<f64>, snr_db: f64, seed: u64) -> NoiseRealization {
    let sigma = noise_sigma(x, snr_db);
    if sigma == 0.0 {
        return NoiseRealization {
            noisy: x.clone(),
            realized_snr_db: f64::INFINITY,
            sigma,
        };
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    let frames = crate::par::map_indices(x.nrows(), |l| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(l as u64);
        (0..x.ncols())
            .map(|_| normal.sample(&mut rng))
            .collect::<Vec<f64>>()
    });
    let mut noisy = x.clone();
    let mut noise_power = 0.0;
    for (mut row, noise) in noisy.rows_mut().into_iter().zip(frames) {
        for (v, e) in row.iter_mut().zip(noise) {
            noise_power += e * e;
            *v = (*v + e).max(0.0);
        }
    }
    let signal: f64 = x.iter().map(|v| v * v).sum();
    NoiseRealization {
        noisy,
        realized_snr_db: 10.0 * (signal / noise_power).log10(),
        sigma,
    }
}
