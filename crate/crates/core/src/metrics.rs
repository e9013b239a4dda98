//! Sweep metrics: which beams a prior would probe, whether the optimal
//! beam is among them, and how much SNR the sweep recovers.
//!
//! A predicted prior induces a deterministic beam ranking (descending
//! probability, ties broken by ascending index). Probing the top `k` beams
//! succeeds when the optimal beam is among them (Hit@k); the recovered
//! fraction of the best achievable gain is SNR-ratio@k. Users whose optimal
//! beam carries almost no power are excluded from SNR aggregation via the
//! gain floor rather than polluting the means with 0/0 noise.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::UeRecord;
use crate::error::{Error, Result};

/// Gain below which the optimal beam counts as unreachable and the user is
/// ineligible for SNR aggregation.
pub const GAIN_FLOOR: f64 = 1e-12;

fn check_prior(p_hat: &[f64]) -> Result<()> {
    if p_hat.is_empty() {
        return Err(Error::Contract("empty prior".into()));
    }
    if p_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite prior entry".into()));
    }
    Ok(())
}

/// Full beam ranking by descending probability; equal probabilities rank by
/// ascending beam index, so the order is deterministic.
pub fn full_ranking(p_hat: &[f64]) -> Result<Vec<usize>> {
    check_prior(p_hat)?;
    let mut idx: Vec<usize> = (0..p_hat.len()).collect();
    // Stable sort keeps ascending index among equal probabilities.
    idx.sort_by(|&a, &b| p_hat[b].partial_cmp(&p_hat[a]).expect("finite"));
    Ok(idx)
}

/// The `k` beams a sweep would probe for this prior.
pub fn topk(p_hat: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > p_hat.len() {
        return Err(Error::Config(format!(
            "k must be in 1..={}, got {k}",
            p_hat.len()
        )));
    }
    let mut ranking = full_ranking(p_hat)?;
    ranking.truncate(k);
    Ok(ranking)
}

/// 1 when the optimal beam is among the top `k` probed beams.
pub fn hit_at_k(p_hat: &[f64], b_star: usize, k: usize) -> Result<bool> {
    if b_star >= p_hat.len() {
        return Err(Error::Contract(format!(
            "optimal beam {b_star} out of range for {} beams",
            p_hat.len()
        )));
    }
    Ok(topk(p_hat, k)?.contains(&b_star))
}

/// Best probed gain relative to the optimal beam's gain, or `None` when the
/// user is ineligible (optimal gain at or below [`GAIN_FLOOR`]).
pub fn snr_ratio_at_k(
    p_hat: &[f64],
    gains: &[f64],
    b_star: usize,
    k: usize,
) -> Result<Option<f64>> {
    if gains.len() != p_hat.len() {
        return Err(Error::Shape(format!(
            "{} gains for {} prior entries",
            gains.len(),
            p_hat.len()
        )));
    }
    if b_star >= gains.len() {
        return Err(Error::Contract(format!(
            "optimal beam {b_star} out of range for {} beams",
            gains.len()
        )));
    }
    if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::Numeric("gains must be finite and nonnegative".into()));
    }
    let g_star = gains[b_star];
    if g_star <= GAIN_FLOOR {
        return Ok(None);
    }
    let best = topk(p_hat, k)?
        .into_iter()
        .map(|b| gains[b])
        .fold(0.0f64, f64::max);
    Ok(Some(best / g_star))
}

/// Aggregated sweep metrics over a user split. `hit[k-1]` and `snr[k-1]`
/// are the means at sweep size `k`; SNR means cover eligible users only.
/// Latency is measured by the caller (it needs a wall clock) and attached
/// afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_beam: usize,
    pub total: usize,
    pub eligible: usize,
    pub hit: Vec<f64>,
    pub snr: Vec<f64>,
    pub latency_s: Option<f64>,
}

/// Evaluates a prior generator over a record split: one prior per record,
/// then Hit@k and SNR-ratio@k for every sweep size.
///
/// The caller guarantees records come from one dataset (equal beam counts,
/// optimal beams consistent with gains); violations are reported as
/// contract errors rather than silently skewing the means.
pub fn evaluate<'a, I, F>(records: I, mut prior_fn: F) -> Result<MetricsReport>
where
    I: IntoIterator<Item = &'a UeRecord>,
    F: FnMut(&UeRecord) -> Result<Vec<f64>>,
{
    let mut n_beam = 0usize;
    let mut total = 0usize;
    let mut eligible = 0usize;
    let mut hit_sum: Vec<f64> = Vec::new();
    let mut snr_sum: Vec<f64> = Vec::new();

    for rec in records {
        if total == 0 {
            n_beam = rec.gains.len();
            hit_sum = vec![0.0; n_beam];
            snr_sum = vec![0.0; n_beam];
        } else if rec.gains.len() != n_beam {
            return Err(Error::Contract(format!(
                "record {} has {} beams, split started with {n_beam}",
                rec.ue_id,
                rec.gains.len()
            )));
        }
        let g_star = rec.gains[rec.best_beam];
        if rec.gains.iter().any(|&g| g > g_star) {
            return Err(Error::Contract(format!(
                "record {}: stored optimal beam is not the gain argmax",
                rec.ue_id
            )));
        }

        let p_hat = prior_fn(rec)?;
        if p_hat.len() != n_beam {
            return Err(Error::Shape(format!(
                "prior has {} entries for {n_beam} beams",
                p_hat.len()
            )));
        }
        let ranking = full_ranking(&p_hat)?;

        // Walk the ranking once; prefix maxima give every k at once.
        let is_eligible = g_star > GAIN_FLOOR;
        let mut found = false;
        let mut best_gain = 0.0f64;
        for (pos, &b) in ranking.iter().enumerate() {
            found = found || b == rec.best_beam;
            hit_sum[pos] += f64::from(u8::from(found));
            if is_eligible {
                best_gain = best_gain.max(rec.gains[b]);
                snr_sum[pos] += best_gain / g_star;
            }
        }
        total += 1;
        eligible += usize::from(is_eligible);
    }

    if total == 0 {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let hit: Vec<f64> = hit_sum.iter().map(|s| s / total as f64).collect();
    let snr: Vec<f64> = if eligible > 0 {
        snr_sum.iter().map(|s| s / eligible as f64).collect()
    } else {
        vec![0.0; n_beam]
    };

    // Construction guarantees these; check anyway so a corrupted report can
    // never leave this function.
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    if !monotone(&hit) || (hit[n_beam - 1] - 1.0).abs() > 1e-12 {
        return Err(Error::Numeric("hit curve violates its invariants".into()));
    }
    if eligible > 0
        && (!monotone(&snr)
            || (snr[n_beam - 1] - 1.0).abs() > 1e-12
            || snr.iter().any(|&v| !(0.0..=1.0 + 1e-12).contains(&v)))
    {
        return Err(Error::Numeric("snr curve violates its invariants".into()));
    }

    Ok(MetricsReport {
        n_beam,
        total,
        eligible,
        hit,
        snr,
        latency_s: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::BeamPrior;
    use crate::dataset::Split;
    use crate::rng;
    use crate::scene::Vec3;

    fn record(ue_id: usize, gains: Vec<f64>) -> UeRecord {
        let sum: f64 = gains.iter().sum();
        let prior = if sum > 0.0 {
            BeamPrior::new(gains.iter().map(|g| g / sum).collect()).unwrap()
        } else {
            BeamPrior::uniform(gains.len())
        };
        let best_beam = gains
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        // Lowest index wins ties, matching the dataset builder.
        let best_beam = gains
            .iter()
            .position(|&g| g == gains[best_beam])
            .unwrap_or(best_beam);
        UeRecord {
            ue_id,
            pos: Vec3::new(1.0, 0.0, 1.5),
            features: vec![1.0, 0.0, 1.5, 2.0, 1.0, 0.1, 0.2],
            gains,
            prior,
            best_beam,
            los: true,
            n_paths: 1,
            zero_power: false,
            split: Split::Val,
        }
    }

    #[test]
    fn topk_sorts_by_value_then_index() {
        let one_hot = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(topk(&one_hot, 1).unwrap(), vec![2]);

        let uniform = [0.125; 8];
        assert_eq!(topk(&uniform, 3).unwrap(), vec![0, 1, 2]);

        let p = [0.1, 0.4, 0.05, 0.3, 0.05, 0.04, 0.03, 0.03];
        assert_eq!(topk(&p, 2).unwrap(), vec![1, 3]);

        assert!(topk(&uniform, 0).is_err());
        assert!(topk(&uniform, 9).is_err());
    }

    #[test]
    fn hit_follows_the_rank_of_the_optimal_beam() {
        let p = [0.05, 0.3, 0.25, 0.2, 0.1, 0.05, 0.03, 0.02];
        // Beam 4 ranks fourth in p (behind beams 1, 2, 3).
        assert!(!hit_at_k(&p, 4, 3).unwrap());
        assert!(hit_at_k(&p, 4, 4).unwrap());

        // argmax at k = 1; any beam at k = 8.
        assert!(hit_at_k(&p, 1, 1).unwrap());
        for b in 0..8 {
            assert!(hit_at_k(&p, b, 8).unwrap());
        }
        assert!(hit_at_k(&p, 8, 1).is_err());
    }

    #[test]
    fn snr_ratio_matches_hand_cases() {
        let mut gains = vec![4.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        // Prior ranks beams 1, 2, 0: one or two probes recover 1/4 of the
        // gain, the third reaches the optimum exactly.
        let p = [0.1, 0.5, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(snr_ratio_at_k(&p, &gains, 0, 1).unwrap(), Some(0.25));
        assert_eq!(snr_ratio_at_k(&p, &gains, 0, 2).unwrap(), Some(0.25));
        assert_eq!(snr_ratio_at_k(&p, &gains, 0, 3).unwrap(), Some(1.0));

        gains = vec![0.0; 8];
        assert_eq!(snr_ratio_at_k(&p, &gains, 0, 1).unwrap(), None);

        let below_floor = vec![1e-13; 8];
        assert_eq!(snr_ratio_at_k(&p, &below_floor, 0, 1).unwrap(), None);

        assert!(snr_ratio_at_k(&p, &[1.0; 4], 0, 1).is_err());
        assert!(snr_ratio_at_k(&p, &[-1.0; 8], 0, 1).is_err());
    }

    #[test]
    fn oracle_prior_saturates_hit_and_snr_at_one_probe() {
        let mut r = rng::seeded(3);
        let records: Vec<UeRecord> = (0..60)
            .map(|i| {
                let mut g = vec![0.0; 8];
                for v in g.iter_mut() {
                    *v = rng::u01(&mut r) + 0.01;
                }
                record(i, g)
            })
            .collect();
        let report = evaluate(records.iter(), |rec| Ok(rec.prior.as_slice().to_vec())).unwrap();
        assert_eq!(report.total, 60);
        assert_eq!(report.eligible, 60);
        assert_eq!(report.hit[0], 1.0);
        assert_eq!(report.snr[0], 1.0);
        assert!(report.hit.iter().all(|&h| h == 1.0));
        assert!(report.snr.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn uniform_prior_hits_exactly_k_over_n_on_balanced_labels() {
        // One record per optimal beam: the uniform prior probes beams
        // 0..k-1 by the tie rule, so Hit@k over the 8 records is exactly
        // k/8.
        let records: Vec<UeRecord> = (0..8)
            .map(|b| {
                let mut g = vec![0.5; 8];
                g[b] = 2.0;
                record(b, g)
            })
            .collect();
        let report = evaluate(records.iter(), |rec| {
            Ok(vec![1.0 / rec.gains.len() as f64; rec.gains.len()])
        })
        .unwrap();
        for k in 1..=8usize {
            assert!(
                (report.hit[k - 1] - k as f64 / 8.0).abs() < 1e-15,
                "k={k}: {}",
                report.hit[k - 1]
            );
        }
    }

    #[test]
    fn report_invariants_hold_for_arbitrary_priors() {
        let mut r = rng::seeded(9);
        let records: Vec<UeRecord> = (0..40)
            .map(|i| {
                let mut g = vec![0.0; 8];
                for v in g.iter_mut() {
                    *v = rng::u01(&mut r);
                }
                // A few blocked users exercise the eligibility filter.
                if i % 10 == 0 {
                    g = vec![0.0; 8];
                }
                record(i, g)
            })
            .collect();
        let mut prior_rng = rng::seeded(10);
        let report = evaluate(records.iter(), |_| {
            Ok(crate::baselines::random_prior(&mut prior_rng, 8))
        })
        .unwrap();
        assert_eq!(report.total, 40);
        assert_eq!(report.eligible, 36);
        assert!(report.hit.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(report.hit[7], 1.0);
        assert!(report.snr.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(report.snr[7], 1.0);
        assert!(report.snr.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn mean_hit_matches_per_user_sweep_recomputation() {
        let mut r = rng::seeded(21);
        let records: Vec<UeRecord> = (0..30)
            .map(|i| {
                let mut g = vec![0.0; 8];
                for v in g.iter_mut() {
                    *v = rng::u01(&mut r) + 1e-3;
                }
                record(i, g)
            })
            .collect();
        // Deterministic non-oracle prior: shifted copy of the true prior.
        let prior_of = |rec: &UeRecord| -> Vec<f64> {
            let p = rec.prior.as_slice();
            let n = p.len();
            (0..n).map(|i| p[(i + 1) % n]).collect()
        };
        let report = evaluate(records.iter(), |rec| Ok(prior_of(rec))).unwrap();
        for k in 1..=8usize {
            let mut hits = 0usize;
            for rec in &records {
                let sweep = topk(&prior_of(rec), k).unwrap();
                hits += usize::from(sweep.contains(&rec.best_beam));
            }
            assert_eq!(report.hit[k - 1], hits as f64 / records.len() as f64);
        }
    }

    #[test]
    fn evaluate_rejects_bad_inputs() {
        assert!(evaluate([].iter(), |_: &UeRecord| Ok(vec![0.125; 8])).is_err());

        let records = vec![record(0, vec![1.0, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0])];
        assert!(evaluate(records.iter(), |_| Ok(vec![0.25; 4])).is_err());

        let mut corrupt = records.clone();
        corrupt[0].best_beam = 3;
        assert!(evaluate(corrupt.iter(), |r| Ok(r.prior.as_slice().to_vec())).is_err());
    }
}
