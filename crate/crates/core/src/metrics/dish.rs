use crate::error::{Error, Result};
use crate::img::Image;
use crate::metrics::{js_divergence, SeverityHistogram};
use crate::severity::SeverityScorer;

pub const DEFAULT_DISH_BINS: usize = 20;
pub const DISH_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DishResult {
    pub js: f64,
    pub real_hist: SeverityHistogram,
    pub fake_hist: SeverityHistogram,
    /// Images the scorer failed on (excluded from the histograms).
    pub scorer_failures: usize,
}

/// Severity-histogram divergence between a real image set and `n` generated
/// samples: score every image, build both histograms on shared uniform bin
/// edges over `[0, 1]`, and return their Jensen-Shannon divergence.
pub fn dish<F>(
    reals: &[Image],
    mut generate: F,
    scorer: &dyn SeverityScorer,
    n: usize,
    bins: usize,
) -> Result<DishResult>
where
    F: FnMut(usize) -> Result<Image>,
{
    if reals.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    if n < bins {
        return Err(Error::TooFewSamples { need: bins, got: n });
    }
    let mut failures = 0usize;
    let mut score_all = |images: &mut dyn Iterator<Item = Result<Image>>| -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for image in images {
            match scorer.score(&image?) {
                Ok(s) => out.push(s),
                Err(_) => failures += 1,
            }
        }
        Ok(out)
    };
    let fake_scores = score_all(&mut (0..n).map(&mut generate))?;
    let real_scores = score_all(&mut reals.iter().cloned().map(Ok))?;
    if fake_scores.is_empty() || real_scores.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let fake_hist = SeverityHistogram::from_scores(&fake_scores, bins, DISH_SMOOTHING)?;
    let real_hist = SeverityHistogram::from_scores(&real_scores, bins, DISH_SMOOTHING)?;
    let js = js_divergence(&real_hist, &fake_hist)?;
    Ok(DishResult { js, real_hist, fake_hist, scorer_failures: failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct PixelScorer;
    impl SeverityScorer for PixelScorer {
        fn name(&self) -> &str {
            "pixel"
        }
        fn version(&self) -> &str {
            "test"
        }
        fn score(&self, image: &Image) -> Result<f64> {
            Ok(image.data[[0, 0, 0]].clamp(0.0, 1.0))
        }
    }

    fn flat(v: f64) -> Image {
        let mut im = Image::zeros(2, 2);
        im.data.fill(v);
        im
    }

    #[test]
    fn replay_generator_is_zero() {
        let reals: Vec<Image> = (0..40).map(|i| flat(i as f64 / 40.0)).collect();
        let replay = |i: usize| Ok(reals[i].clone());
        let r = dish(&reals, replay, &PixelScorer, reals.len(), 20).unwrap();
        assert!(r.js.abs() < 1e-9);
        assert_eq!(r.scorer_failures, 0);
    }

    #[test]
    fn constant_generator_vs_spread_reals_is_large() {
        let reals: Vec<Image> = (0..100).map(|i| flat(i as f64 / 100.0)).collect();
        let constant = |_| Ok(flat(0.525));
        let r = dish(&reals, constant, &PixelScorer, 100, 20).unwrap();
        assert!(r.js >= 0.5 * std::f64::consts::LN_2, "js = {}", r.js);
    }

    #[test]
    fn scorer_failures_are_counted_and_excluded() {
        struct Flaky;
        impl SeverityScorer for Flaky {
            fn name(&self) -> &str {
                "flaky"
            }
            fn version(&self) -> &str {
                "test"
            }
            fn score(&self, image: &Image) -> Result<f64> {
                let v = image.data[[0, 0, 0]];
                if v > 0.9 {
                    Err(Error::NonFinite("flaky"))
                } else {
                    Ok(v.clamp(0.0, 1.0))
                }
            }
        }
        // Keep real scores below the flaky threshold so only fakes fail.
        let reals: Vec<Image> = (0..50).map(|i| flat(i as f64 / 60.0)).collect();
        let gen = |i: usize| Ok(flat(if i < 5 { 0.95 } else { 0.3 }));
        let r = dish(&reals, gen, &Flaky, 50, 20).unwrap();
        assert_eq!(r.scorer_failures, 5);
        assert_eq!(r.fake_hist.n_samples, 45);
    }

    #[test]
    fn n_below_bins_rejected() {
        let reals = vec![flat(0.5)];
        assert!(dish(&reals, |_| Ok(flat(0.5)), &PixelScorer, 5, 20).is_err());
    }
}
