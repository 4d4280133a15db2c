//! Second-order correlation from detection records by coincidence counting.

use serde::{Deserialize, Serialize};

use super::JumpRecord;
use crate::error::{Error, Result};

/// g²(τ) on bins [kΔ, (k+1)Δ), τ ≥ 0; g²(−τ) = g²(τ).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct G2Histogram {
    /// Bin centres (μs).
    pub taus: Vec<f64>,
    pub g2: Vec<f64>,
    /// Jackknife standard error over records.
    pub se: Vec<f64>,
    pub pairs: Vec<u64>,
    pub clicks: usize,
}

impl G2Histogram {
    pub fn bin_width(&self) -> f64 {
        if self.taus.len() > 1 {
            self.taus[1] - self.taus[0]
        } else {
            2.0 * self.taus.first().copied().unwrap_or(0.0)
        }
    }

    /// Applies [`smooth_gaussian`] to the estimate and its errors.
    pub fn smoothed(&self, sigma: f64) -> G2Histogram {
        let bw = self.bin_width();
        G2Histogram {
            taus: self.taus.clone(),
            g2: smooth_gaussian(&self.g2, bw, sigma, true),
            se: smooth_gaussian(&self.se, bw, sigma, true),
            pairs: self.pairs.clone(),
            clicks: self.clicks,
        }
    }
}

/// Pair counts of one record and the Poisson expectation per bin.
fn record_counts(times: &[f64], span: f64, bin_width: f64, n_bins: usize) -> (Vec<f64>, Vec<f64>) {
    let mut pairs = vec![0.0; n_bins];
    let window = bin_width * n_bins as f64;
    for (i, &ti) in times.iter().enumerate() {
        for &tj in &times[i + 1..] {
            let d = tj - ti;
            if d >= window {
                break;
            }
            pairs[(d / bin_width) as usize] += 1.0;
        }
    }
    let n = times.len() as f64;
    // λ² estimated without the self-pair bias
    let lam2 = n * (n - 1.0).max(0.0) / (span * span);
    let expected = (0..n_bins)
        .map(|k| lam2 * bin_width * (span - (k as f64 + 0.5) * bin_width).max(0.0))
        .collect();
    (pairs, expected)
}

/// Normalized coincidence histogram of clicks on `channels`, counted per
/// record after `t_start` and pooled.
pub fn g2_from_clicks(
    records: &[JumpRecord],
    channels: &[String],
    bin_width: f64,
    window: f64,
    t_start: f64,
) -> Result<G2Histogram> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidParameter {
            name: "bin_width",
            reason: format!("must be positive, got {bin_width}"),
        });
    }
    if !(window >= bin_width) {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("must be at least one bin, got {window}"),
        });
    }
    let n_bins = (window / bin_width).round() as usize;
    let mut per = Vec::with_capacity(records.len());
    let mut clicks = 0;
    for rec in records {
        let span = rec.t_max - t_start;
        if !(span > 0.0) {
            return Err(Error::InvalidParameter {
                name: "t_start",
                reason: format!("record of length {} ends before {t_start}", rec.t_max),
            });
        }
        let times: Vec<f64> = rec.clicks_on(channels).filter(|&t| t >= t_start).collect();
        clicks += times.len();
        per.push(record_counts(&times, span, bin_width, n_bins));
    }
    if clicks < 2 {
        return Err(Error::Statistics(clicks));
    }
    let mut pairs = vec![0.0; n_bins];
    let mut expected = vec![0.0; n_bins];
    for (p, e) in &per {
        for k in 0..n_bins {
            pairs[k] += p[k];
            expected[k] += e[k];
        }
    }
    let ratio = |p: f64, e: f64| if e > 0.0 { p / e } else { f64::NAN };
    let g2: Vec<f64> = (0..n_bins).map(|k| ratio(pairs[k], expected[k])).collect();
    let n = per.len();
    let se = (0..n_bins)
        .map(|k| {
            if n < 2 {
                return f64::NAN;
            }
            let loo: Vec<f64> = per.iter().map(|(p, e)| ratio(pairs[k] - p[k], expected[k] - e[k])).collect();
            jackknife_se(&loo)
        })
        .collect();
    Ok(G2Histogram {
        taus: (0..n_bins).map(|k| (k as f64 + 0.5) * bin_width).collect(),
        g2,
        se,
        pairs: pairs.iter().map(|&p| p as u64).collect(),
        clicks,
    })
}

/// Standard error from leave-one-out estimates.
pub(crate) fn jackknife_se(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    if loo.len() < 2 {
        return f64::NAN;
    }
    let mean = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Gaussian smoothing of samples on a uniform grid, kernel truncated at 4σ.
/// With `mirror`, the series is treated as even about index 0 (a one-sided
/// g²(τ)).
pub fn smooth_gaussian(values: &[f64], spacing: f64, sigma: f64, mirror: bool) -> Vec<f64> {
    if !(sigma > 0.0) || values.is_empty() {
        return values.to_vec();
    }
    let reach = (4.0 * sigma / spacing).ceil() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|j| (-0.5 * (j as f64 * spacing / sigma).powi(2)).exp())
        .collect();
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (w, j) in kernel.iter().zip(-reach..=reach) {
                let mut k = i + j;
                if mirror && k < 0 {
                    k = -k - 1;
                }
                if k < 0 || k >= n || !values[k as usize].is_finite() {
                    continue;
                }
                acc += w * values[k as usize];
                wsum += w;
            }
            if wsum > 0.0 {
                acc / wsum
            } else {
                f64::NAN
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectories::{Click, Seed};
    use rand::Rng;
    use std::collections::BTreeMap;

    fn poisson(rate: f64, t_max: f64, seed: u64) -> JumpRecord {
        let mut rng = Seed::new(seed, 0).rng();
        let mut t = 0.0;
        let mut clicks = Vec::new();
        loop {
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / rate;
            if t >= t_max {
                break;
            }
            clicks.push(Click { time: t, channel: "c".into() });
        }
        JumpRecord {
            seed: Seed::new(seed, 0),
            t_max,
            clicks,
            samples: None,
            conditional: None,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn poisson_is_flat() {
        let recs: Vec<_> = (0..20).map(|s| poisson(5.0, 400.0, s)).collect();
        let h = g2_from_clicks(&recs, &["c".into()], 0.05, 1.0, 0.0).unwrap();
        assert_eq!(h.taus.len(), 20);
        for (g, e) in h.g2.iter().zip(&h.se) {
            assert!((g - 1.0).abs() < 4.0 * e, "{g} ± {e}");
            assert!(*e < 0.1);
        }
    }

    #[test]
    fn too_few_clicks() {
        let mut r = poisson(5.0, 10.0, 1);
        r.clicks.truncate(1);
        assert!(matches!(g2_from_clicks(&[r], &["c".into()], 0.1, 1.0, 0.0), Err(Error::Statistics(1))));
    }

    #[test]
    fn smoothing_preserves_constants() {
        let v = vec![2.5; 40];
        for x in smooth_gaussian(&v, 1e-3, 5e-3, true) {
            assert!((x - 2.5).abs() < 1e-12);
        }
        let spike: Vec<f64> = (0..41).map(|k| if k == 20 { 1.0 } else { 0.0 }).collect();
        let s = smooth_gaussian(&spike, 1.0, 2.0, false);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-3);
        assert!(s[20] > s[18] && s[18] > s[16]);
    }
}
