//! Slow reference implementation of the batch round protocol, used to
//! cross-check [`crate::auction::run_batch`].
//!
//! Everything is recomputed from scratch on every bid: the price normaliser,
//! each agent's preferred auction and who leads what.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::auction::{run_batch, AgentId, Auction, AuctionConfig, BidderView, PriceNormaliser};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOutcome {
    /// agent -> (auction index, price paid)
    pub assignments: BTreeMap<AgentId, (usize, f64)>,
    pub rounds_used: u32,
    pub total_bids: u64,
}

pub fn reference_batch(
    start_prices: &[f64],
    views: &[BidderView],
    cfg: &AuctionConfig,
    order_seed: u64,
) -> ReferenceOutcome {
    let n = start_prices.len();
    let mut raises = vec![0u32; n];
    let mut leader: Vec<Option<usize>> = vec![None; n];
    let mut bid: Vec<f64> = vec![0.0; n];
    let mut out = vec![false; views.len()];
    let price = |raises: &[u32], i: usize| start_prices[i] + raises[i] as f64 * cfg.epsilon_eur;

    let mut order: Vec<usize> = (0..views.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(order_seed));

    let mut rounds = 0;
    let mut total = 0;
    let mut quiet = 0;
    if n > 0 {
        loop {
            rounds += 1;
            let mut any = false;
            for &k in &order {
                if out[k] || leader.contains(&Some(k)) {
                    continue;
                }
                let v = &views[k];
                let p_max = match cfg.price_normaliser {
                    PriceNormaliser::CurrentMax => {
                        (0..n).map(|i| price(&raises, i)).fold(0.0, f64::max)
                    }
                    PriceNormaliser::Valuation => v.valuation,
                };
                let d_max = v.distances.iter().copied().fold(0.0, f64::max);
                let mut best: Option<(usize, f64)> = None;
                for i in 0..n {
                    let p = price(&raises, i);
                    if p > v.valuation + 1e-9 {
                        continue;
                    }
                    let dt = if d_max > 0.0 { v.distances[i] / d_max } else { 0.0 };
                    let c = v.beta * p / p_max + (1.0 - v.beta) * dt;
                    if best.map_or(true, |(_, bc)| c < bc - 1e-12) {
                        best = Some((i, c));
                    }
                }
                match best {
                    None => out[k] = true,
                    Some((i, _)) => {
                        bid[i] = price(&raises, i);
                        leader[i] = Some(k);
                        raises[i] += 1;
                        total += 1;
                        any = true;
                    }
                }
            }
            if any {
                quiet = 0;
            } else {
                quiet += 1;
                if quiet >= cfg.quiescence_rounds {
                    break;
                }
            }
        }
    }
    let assignments = (0..n)
        .filter_map(|i| leader[i].map(|k| (views[k].agent, (i, bid[i]))))
        .collect();
    ReferenceOutcome {
        assignments,
        rounds_used: rounds,
        total_bids: total,
    }
}

/// A random batch: start prices from `{0.5, 1.0}`, integer distances and
/// betas from `{0.01, 0.5}` or uniform.
pub fn random_instance<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<BidderView>) {
    let n = rng.gen_range(1..=8);
    let m = rng.gen_range(1..=10);
    let prices: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.5) { 0.5 } else { 1.0 })
        .collect();
    let views = (0..m)
        .map(|k| {
            let beta = match rng.gen_range(0..3) {
                0 => 0.01,
                1 => 0.5,
                _ => rng.gen_range(0.0..1.0),
            };
            let valuation = rng.gen_range(0.4..3.0);
            let distances = (0..n).map(|_| rng.gen_range(0..6) as f64 * 100.0).collect();
            BidderView::new(k as AgentId, beta, valuation, distances)
        })
        .collect();
    (prices, views)
}

#[derive(Debug, Clone, Default)]
pub struct CrossCheck {
    pub instances: usize,
    pub mismatches: Vec<String>,
}

/// Compare the production engine with the reference on random batches.
pub fn cross_check(instances: usize, seed: u64) -> Result<CrossCheck> {
    cross_check_with(instances, seed, &AuctionConfig::default())
}

pub fn cross_check_with(instances: usize, seed: u64, cfg: &AuctionConfig) -> Result<CrossCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CrossCheck {
        instances,
        ..CrossCheck::default()
    };
    for case in 0..instances {
        let (prices, views) = random_instance(&mut rng);
        let order_seed = rng.gen();
        let auctions = prices
            .iter()
            .enumerate()
            .map(|(i, &p)| Auction::new(i, i as u32, i as u32, p))
            .collect();
        let fast = run_batch(auctions, &views, cfg, order_seed)?;
        let slow = reference_batch(&prices, &views, cfg, order_seed);
        let fast_map: BTreeMap<AgentId, (usize, f64)> = fast
            .assignments
            .iter()
            .map(|(&a, w)| (a, (w.auction, w.price)))
            .collect();
        let same = fast_map.len() == slow.assignments.len()
            && fast_map.iter().zip(&slow.assignments).all(|(a, b)| {
                a.0 == b.0 && a.1 .0 == b.1 .0 && (a.1 .1 - b.1 .1).abs() < 1e-9
            })
            && fast.rounds_used == slow.rounds_used
            && fast.total_bids == slow.total_bids;
        if !same {
            report.mismatches.push(format!(
                "case {case}: engine {fast_map:?} in {} rounds, reference {:?} in {} rounds",
                fast.rounds_used, slow.assignments, slow.rounds_used
            ));
        }
    }
    Ok(report)
}
