//! Shared pieces of the acceptance suite: outcome reporting, reference
//! schemas and distributions, goodness-of-fit statistics, and an exact
//! model of the sampler under a perfect denoiser.

use std::fmt;
use std::time::Duration;

use bindiff_core::schema::{ColumnSpec, TableSchema, TargetSpec};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    /// Soft criteria are reported but never fail the run.
    pub soft: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let soft = if self.soft { " (soft, warning only)" } else { "" };
        write!(
            f,
            "{status} [{:>2}] {}{soft}: {} ({:.1}s)",
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Column layout of the Travel customer-churn table: two numeric columns,
/// four categorical ones and a binary target.
pub fn travel_layout() -> TableSchema {
    TableSchema::new(
        vec![
            ColumnSpec::continuous("Age", 27.0, 38.0),
            ColumnSpec::categorical("FrequentFlyer", ["No", "No Record", "Yes"]),
            ColumnSpec::categorical("AnnualIncomeClass", ["High Income", "Low Income", "Middle Income"]),
            ColumnSpec::continuous("ServicesOpted", 1.0, 6.0),
            ColumnSpec::categorical("AccountSyncedToSocialMedia", ["No", "Yes"]),
            ColumnSpec::categorical("BookedHotelOrNot", ["No", "Yes"]),
        ],
        TargetSpec::classification("Target", ["0", "1"]),
        6,
    )
    .expect("valid layout")
}

/// Class-conditional joints over two binary features, states ordered 00, 01, 10, 11.
pub const TOY_JOINT_A: [f64; 4] = [0.6, 0.2, 0.1, 0.1];
pub const TOY_JOINT_B: [f64; 4] = [0.1, 0.1, 0.2, 0.6];

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Pearson goodness-of-fit statistic and its upper-tail p-value.
pub fn chi_square(observed: &[usize], probs: &[f64]) -> (f64, f64) {
    let n: usize = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = (observed.len() - 1) as f64;
    let p = ChiSquared::new(df).expect("df > 0").sf(stat);
    (stat, p)
}

/// Exact output distribution of the denoise/renoise sampler when the
/// network returns the true posterior bit marginals.
///
/// States are `d`-bit integers with bit `d-1-i` holding feature bit `i`.
/// Guidance combines per-bit logits of the conditional and unconditional
/// posteriors; binarization is `sigmoid > 0.5`, i.e. logit `> 0`.
pub fn ideal_sampler_joint(d: usize, cond: &[f64], uncond: &[f64], w: f64, timesteps: &[u32], t_max: u32) -> Vec<f64> {
    let n = 1usize << d;
    assert!(cond.len() == n && uncond.len() == n);
    let mut dist = vec![1.0 / n as f64; n];
    let bit = |s: usize, i: usize| (s >> (d - 1 - i)) & 1;
    for &t in timesteps {
        let p = 0.5 * f64::from(t) / f64::from(t_max);
        let lik = |x0: usize, xt: usize| {
            let h = (x0 ^ xt).count_ones() as i32;
            p.powi(h) * (1.0 - p).powi(d as i32 - h)
        };
        let logit_of = |prior: &[f64], xt: usize, i: usize| {
            let (mut on, mut all) = (0.0, 0.0);
            for (x0, &mass) in prior.iter().enumerate() {
                let m = mass * lik(x0, xt);
                all += m;
                if bit(x0, i) == 1 {
                    on += m;
                }
            }
            // Unreachable x_t: fall back to the prior marginal.
            if all == 0.0 {
                (on, all) = (0.0, 0.0);
                for (x0, &mass) in prior.iter().enumerate() {
                    all += mass;
                    if bit(x0, i) == 1 {
                        on += mass;
                    }
                }
            }
            let q = (on / all).clamp(1e-300, 1.0 - 1e-16);
            (q / (1.0 - q)).ln()
        };
        let mut next = vec![0.0; n];
        for (xt, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let mut x0 = 0;
            for i in 0..d {
                let lu = logit_of(uncond, xt, i);
                let lc = logit_of(cond, xt, i);
                if lu + w * (lc - lu) > 0.0 {
                    x0 |= 1 << (d - 1 - i);
                }
            }
            for z in 0..n {
                let h = z.count_ones() as i32;
                next[x0 ^ z] += mass * p.powi(h) * (1.0 - p).powi(d as i32 - h);
            }
        }
        dist = next;
    }
    dist
}
