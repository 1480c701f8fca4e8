use crate::error::{Error, Result};

/// Normalized histogram of severity scores over shared bin edges on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityHistogram {
    pub bin_edges: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_samples: usize,
}

impl SeverityHistogram {
    /// Uniform binning of `[0, 1]` with Laplace smoothing `alpha` applied to
    /// the counts before normalization, so no bin weight is exactly zero.
    pub fn from_scores(scores: &[f64], bins: usize, alpha: f64) -> Result<SeverityHistogram> {
        assert!(bins >= 1);
        if scores.is_empty() {
            return Err(Error::TooFewSamples { need: 1, got: 0 });
        }
        let mut counts = vec![0.0f64; bins];
        for &s in scores {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::NonFinite("severity score outside [0,1]"));
            }
            let b = ((s * bins as f64) as usize).min(bins - 1);
            counts[b] += 1.0;
        }
        let total = scores.len() as f64 + alpha * bins as f64;
        let weights = counts.iter().map(|c| (c + alpha) / total).collect();
        let bin_edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Ok(SeverityHistogram { bin_edges, weights, n_samples: scores.len() })
    }

    fn check_normalized(&self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Unnormalized(sum));
        }
        Ok(())
    }
}

/// Jensen-Shannon divergence between two histograms on identical bin edges.
/// Terms with zero mass contribute zero; the result lies in `[0, ln 2]`.
pub fn js_divergence(p: &SeverityHistogram, q: &SeverityHistogram) -> Result<f64> {
    if p.bin_edges.len() != q.bin_edges.len()
        || p.bin_edges
            .iter()
            .zip(&q.bin_edges)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::BinningMismatch);
    }
    p.check_normalized()?;
    q.check_normalized()?;
    let term = |x: f64, z: f64| if x > 0.0 { x * (x / z).ln() } else { 0.0 };
    let mut acc = 0.0;
    for (&x, &y) in p.weights.iter().zip(&q.weights) {
        let z = 0.5 * (x + y);
        if z > 0.0 {
            acc += term(x, z) + term(y, z);
        }
    }
    Ok((acc / 2.0).clamp(0.0, std::f64::consts::LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(weights: &[f64]) -> SeverityHistogram {
        let bins = weights.len();
        SeverityHistogram {
            bin_edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
            weights: weights.to_vec(),
            n_samples: 100,
        }
    }

    #[test]
    fn identical_histograms_give_zero() {
        let p = hist(&[0.2, 0.3, 0.5]);
        assert_eq!(js_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_supports_hit_ln2() {
        let p = hist(&[1.0, 0.0]);
        let q = hist(&[0.0, 1.0]);
        let v = js_divergence(&p, &q).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn hand_case() {
        let p = hist(&[0.5, 0.5]);
        let q = hist(&[0.25, 0.75]);
        let v = js_divergence(&p, &q).unwrap();
        // Direct evaluation of the definition.
        let z = [0.375, 0.625];
        let direct = 0.5
            * ((0.5f64 * (0.5f64 / z[0]).ln() + 0.5 * (0.5f64 / z[1]).ln())
                + (0.25f64 * (0.25f64 / z[0]).ln() + 0.75 * (0.75f64 / z[1]).ln()));
        assert!((v - direct).abs() < 1e-12);
        assert!((v - 0.0338).abs() < 1e-4);
    }

    #[test]
    fn symmetric_exactly() {
        let p = hist(&[0.1, 0.2, 0.3, 0.4]);
        let q = hist(&[0.4, 0.3, 0.2, 0.1]);
        assert_eq!(js_divergence(&p, &q).unwrap(), js_divergence(&q, &p).unwrap());
    }

    #[test]
    fn binning_mismatch_rejected() {
        let p = hist(&[0.5, 0.5]);
        let q = hist(&[0.25, 0.25, 0.5]);
        assert!(matches!(js_divergence(&p, &q), Err(Error::BinningMismatch)));
    }

    #[test]
    fn unnormalized_rejected() {
        let p = hist(&[0.5, 0.5]);
        let mut q = hist(&[0.5, 0.5]);
        q.weights[0] = 0.9;
        assert!(matches!(js_divergence(&p, &q), Err(Error::Unnormalized(_))));
    }

    #[test]
    fn from_scores_normalizes_and_bins() {
        let h = SeverityHistogram::from_scores(&[0.0, 0.05, 0.5, 1.0], 10, 1e-6).unwrap();
        assert_eq!(h.weights.len(), 10);
        assert!((h.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // The score 1.0 lands in the last bin.
        assert!(h.weights[9] > 0.2);
    }
}
