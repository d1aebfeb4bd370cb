use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqdetect::sim::{sample_delta, DeltaSampler};
use seqdetect::specfun::volume_constant;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const BINS: usize = 50;

/// Pearson statistic over equiprobable bins of `1 − exp(−v(y + c))`.
fn chi_square(samples: &[f64], v: f64, c: f64) -> f64 {
    let mut counts = [0usize; BINS];
    for &y in samples {
        let u = -(-v * (y + c)).exp_m1();
        counts[((u * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let expected = samples.len() as f64 / BINS as f64;
    counts.iter().map(|&n| (n as f64 - expected).powi(2) / expected).sum()
}

#[test]
fn evidence_follows_shifted_exponential() {
    let critical = ChiSquared::new((BINS - 1) as f64).unwrap().inverse_cdf(0.999);
    for (i, m) in [1u32, 2, 5, 10].into_iter().enumerate() {
        let d_alpha = 0.3f64;
        let c = d_alpha.powi(m as i32);
        let v = volume_constant(m).unwrap();
        let xs = sample_delta(d_alpha, m, 50_000, 100 + i as u64).unwrap();
        assert!(xs.iter().all(|&y| y >= -c - 1e-15));
        let stat = chi_square(&xs, v, c);
        assert!(stat < critical, "m={m}: chi2 {stat} >= {critical}");
    }
}

#[test]
fn truncation_renormalizes() {
    // conditional law on [−c, φ]: F(y)/F(φ)
    let (m, c, phi) = (2u32, 0.05, 0.4);
    let v = volume_constant(m).unwrap();
    let s = DeltaSampler::new(m, c, Some(phi)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xs: Vec<f64> = (0..40_000).map(|_| s.sample(&mut rng)).collect();
    assert!(xs.iter().all(|&y| y <= phi));
    let top = -(-v * (phi + c)).exp_m1();
    let mut counts = [0usize; BINS];
    for &y in &xs {
        let u = -(-v * (y + c)).exp_m1() / top;
        counts[((u * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let expected = xs.len() as f64 / BINS as f64;
    let stat: f64 = counts.iter().map(|&n| (n as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((BINS - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < critical, "chi2 {stat}");
}
