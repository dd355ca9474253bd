//! Simultaneous independent ascending auctions with local greedy bidding.
//!
//! One auction sells one free parking space. Bidding proceeds in global
//! rounds: every agent that does not currently lead an auction looks up its
//! cheapest auction at the current prices and, if it can afford it, takes the
//! lead at the asking price, which then rises by one increment. A round in
//! which nobody bids closes every auction and the leaders win at the price
//! they bid.
//!
//! Nothing here knows about the traffic simulation; spaces, areas and agents
//! are opaque integer labels.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::{Error, Result};

/// Slack for price comparisons; prices are exact multiples of the increment
/// above the start price only up to floating-point rounding.
const PRICE_TOL: f64 = 1e-9;
/// Two costs closer than this are treated as a tie.
const COST_TOL: f64 = 1e-12;

pub type AgentId = u32;

/// Price normaliser of the cost function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceNormaliser {
    /// Highest asking price in the batch, tracked as bids come in.
    CurrentMax,
    /// The bidding agent's own valuation.
    #[default]
    Valuation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuctionConfig {
    pub epsilon_eur: f64,
    pub quiescence_rounds: u32,
    pub max_rounds_guard: u32,
    pub price_normaliser: PriceNormaliser,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        Self {
            epsilon_eur: 0.05,
            quiescence_rounds: 1,
            max_rounds_guard: 1_000_000,
            price_normaliser: PriceNormaliser::Valuation,
        }
    }
}

impl AuctionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_eur > 0.0 && self.epsilon_eur.is_finite()) {
            return Err(Error::Config(format!(
                "auction.epsilon_eur must be positive, got {}",
                self.epsilon_eur
            )));
        }
        if self.quiescence_rounds == 0 {
            return Err(Error::Config(
                "auction.quiescence_rounds must be at least 1".into(),
            ));
        }
        if self.max_rounds_guard == 0 {
            return Err(Error::Config("auction.max_rounds_guard must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Auction {
    pub id: usize,
    pub space: u32,
    pub area: u32,
    pub start_price: f64,
    pub current_price: f64,
    pub leader: Option<AgentId>,
    pub leader_bid: Option<f64>,
    raises: u32,
    leader_slot: Option<usize>,
}

impl Auction {
    pub fn new(id: usize, space: u32, area: u32, start_price: f64) -> Self {
        Self {
            id,
            space,
            area,
            start_price,
            current_price: start_price,
            leader: None,
            leader_bid: None,
            raises: 0,
            leader_slot: None,
        }
    }

    /// Record a bid at the asking price and raise it by one increment.
    fn accept(&mut self, agent: AgentId, slot: usize, epsilon: f64) {
        self.leader = Some(agent);
        self.leader_slot = Some(slot);
        self.leader_bid = Some(self.current_price);
        self.raises += 1;
        // Recomputed from the start price so repeated raises do not drift.
        self.current_price = self.start_price + self.raises as f64 * epsilon;
    }
}

/// What one agent knows when bidding: its attitude, budget and the driving
/// distance from each auctioned space to its destination.
#[derive(Debug, Clone, PartialEq)]
pub struct BidderView {
    pub agent: AgentId,
    pub beta: f64,
    pub valuation: f64,
    /// `distances[i]` belongs to the auction with index `i` of the batch.
    pub distances: Vec<f64>,
    pub d_max: f64,
}

impl BidderView {
    pub fn new(agent: AgentId, beta: f64, valuation: f64, distances: Vec<f64>) -> Self {
        let d_max = distances.iter().copied().fold(0.0, f64::max);
        Self {
            agent,
            beta,
            valuation,
            distances,
            d_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Award {
    pub auction: usize,
    pub space: u32,
    pub area: u32,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchResult {
    pub assignments: BTreeMap<AgentId, Award>,
    pub unassigned: Vec<AgentId>,
    pub rounds_used: u32,
    pub total_bids: u64,
}

/// One accepted bid, for audit logs and protocol checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidRecord {
    pub round: u32,
    pub agent: AgentId,
    pub auction: usize,
    /// Price the agent committed to; the asking price afterwards is one
    /// increment higher.
    pub price: f64,
}

impl BidRecord {
    pub fn to_line(&self) -> String {
        format!("{} {} {} {:.4}", self.round, self.agent, self.auction, self.price)
    }
}

/// Weighted parking cost: normalised price against normalised distance.
/// A zero distance normaliser means every lot is equally far, so the distance
/// term vanishes.
pub fn cost(beta: f64, price: f64, p_max: f64, distance: f64, d_max: f64) -> Result<f64> {
    if !(p_max > 0.0) {
        return Err(Error::PriceNormaliser(p_max));
    }
    Ok(cost_unchecked(beta, price, p_max, distance, d_max))
}

#[inline]
fn cost_unchecked(beta: f64, price: f64, p_max: f64, distance: f64, d_max: f64) -> f64 {
    let dist_term = if d_max > 0.0 { distance / d_max } else { 0.0 };
    beta * price / p_max + (1.0 - beta) * dist_term
}

/// Highest asking price across the batch.
pub fn max_price(auctions: &[Auction]) -> f64 {
    auctions.iter().map(|a| a.current_price).fold(0.0, f64::max)
}

/// The agent's cheapest affordable auction at current prices, lowest index on
/// ties. `None` when every asking price exceeds the valuation.
pub fn preferred_auction(view: &BidderView, auctions: &[Auction]) -> Result<Option<usize>> {
    if auctions.is_empty() {
        return Ok(None);
    }
    let p_max = max_price(auctions);
    if !(p_max > 0.0) {
        return Err(Error::PriceNormaliser(p_max));
    }
    Ok(preferred_with(view, auctions, p_max))
}

fn preferred_with(view: &BidderView, auctions: &[Auction], p_max: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, a) in auctions.iter().enumerate() {
        if a.current_price > view.valuation + PRICE_TOL {
            continue;
        }
        let c = cost_unchecked(view.beta, a.current_price, p_max, view.distances[i], view.d_max);
        match best {
            Some((_, bc)) if c >= bc - COST_TOL => {}
            _ => best = Some((i, c)),
        }
    }
    best.map(|(i, _)| i)
}

/// Upper bound on accepted bids for a batch.
pub fn bid_bound(auctions: &[Auction], views: &[BidderView], epsilon: f64) -> u64 {
    let max_v = views.iter().map(|v| v.valuation).fold(0.0, f64::max);
    let min_p = auctions
        .iter()
        .map(|a| a.start_price)
        .fold(f64::INFINITY, f64::min);
    // An auction that ever gets a bid keeps a leader, so at most one auction
    // per agent sees its final bid at the top price step.
    let steps = ((max_v - min_p) / epsilon - PRICE_TOL).ceil().max(0.0) as u64;
    auctions.len() as u64 * steps + views.len() as u64
}

pub fn run_batch(
    auctions: Vec<Auction>,
    views: &[BidderView],
    cfg: &AuctionConfig,
    order_seed: u64,
) -> Result<BatchResult> {
    run_batch_audited(auctions, views, cfg, order_seed, |_, _| {}).map(|(r, _)| r)
}

/// [`run_batch`] with a callback invoked after every accepted bid with the
/// bid and the full auction state at that instant. Returns the final auction
/// state alongside the result.
pub fn run_batch_audited<F>(
    mut auctions: Vec<Auction>,
    views: &[BidderView],
    cfg: &AuctionConfig,
    order_seed: u64,
    mut on_bid: F,
) -> Result<(BatchResult, Vec<Auction>)>
where
    F: FnMut(&BidRecord, &[Auction]),
{
    for (i, a) in auctions.iter_mut().enumerate() {
        debug_assert!(a.start_price > 0.0);
        a.id = i;
    }
    for v in views {
        debug_assert_eq!(v.distances.len(), auctions.len());
    }

    let mut order: Vec<usize> = (0..views.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(order_seed));

    // leading[k] is the auction agent k currently leads.
    let mut leading: Vec<Option<usize>> = vec![None; views.len()];
    let mut dropped = vec![false; views.len()];
    let mut p_max = max_price(&auctions);
    let mut total_bids = 0u64;
    let mut rounds = 0u32;
    let mut quiet = 0u32;

    if !auctions.is_empty() {
        loop {
            if rounds >= cfg.max_rounds_guard {
                return Err(Error::RoundGuard(cfg.max_rounds_guard));
            }
            rounds += 1;
            let mut bids = 0u32;
            for &k in &order {
                if dropped[k] || leading[k].is_some() {
                    continue;
                }
                let norm = match cfg.price_normaliser {
                    PriceNormaliser::CurrentMax => p_max,
                    PriceNormaliser::Valuation => views[k].valuation,
                };
                let Some(i) = preferred_with(&views[k], &auctions, norm) else {
                    // Prices never fall, so nothing becomes affordable later.
                    dropped[k] = true;
                    continue;
                };
                let auction = &mut auctions[i];
                if let Some(prev) = auction.leader_slot {
                    leading[prev] = None;
                }
                let record = BidRecord {
                    round: rounds,
                    agent: views[k].agent,
                    auction: i,
                    price: auction.current_price,
                };
                auction.accept(views[k].agent, k, cfg.epsilon_eur);
                p_max = p_max.max(auction.current_price);
                leading[k] = Some(i);
                bids += 1;
                total_bids += 1;
                on_bid(&record, &auctions);
            }
            if bids == 0 {
                quiet += 1;
                if quiet >= cfg.quiescence_rounds {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
    }

    let mut result = BatchResult {
        rounds_used: rounds,
        total_bids,
        ..BatchResult::default()
    };
    for (k, view) in views.iter().enumerate() {
        match leading[k] {
            Some(i) => {
                let a = &auctions[i];
                result.assignments.insert(
                    view.agent,
                    Award {
                        auction: i,
                        space: a.space,
                        area: a.area,
                        price: a.leader_bid.expect("led auction has a bid"),
                    },
                );
            }
            None => result.unassigned.push(view.agent),
        }
    }
    result.unassigned.sort_unstable();
    Ok((result, auctions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn cost_examples() {
        assert!(close(cost(0.5, 0.5, 1.0, 100.0, 200.0).unwrap(), 0.50));
        assert!(close(cost(1.0, 0.7, 1.4, 123.0, 999.0).unwrap(), 0.5));
        assert!(close(cost(0.01, 1.0, 1.0, 0.0, 200.0).unwrap(), 0.01));
        assert!(close(cost(0.5, 0.5, 1.0, 0.0, 0.0).unwrap(), 0.25));
        assert!(matches!(
            cost(0.5, 0.5, 0.0, 1.0, 1.0),
            Err(Error::PriceNormaliser(_))
        ));
    }

    #[test]
    fn preferred_single_and_capped() {
        let auctions = vec![Auction::new(0, 7, 1, 0.5)];
        let v = BidderView::new(1, 0.5, 5.0, vec![10.0]);
        assert_eq!(preferred_auction(&v, &auctions).unwrap(), Some(0));
        let poor = BidderView::new(1, 0.5, 0.4, vec![10.0]);
        assert_eq!(preferred_auction(&poor, &auctions).unwrap(), None);
        assert_eq!(preferred_auction(&v, &[]).unwrap(), None);
    }

    #[test]
    fn preferred_ties_go_to_lowest_index() {
        let auctions = vec![
            Auction::new(0, 0, 0, 0.5),
            Auction::new(1, 1, 0, 0.5),
            Auction::new(2, 2, 1, 0.5),
        ];
        let v = BidderView::new(1, 0.5, 5.0, vec![100.0, 100.0, 100.0]);
        assert_eq!(preferred_auction(&v, &auctions).unwrap(), Some(0));
    }

    #[test]
    fn uncontested_sale_at_start_price() {
        let r = run_batch(
            vec![Auction::new(0, 3, 0, 0.5)],
            &[BidderView::new(1, 0.5, 5.0, vec![0.0])],
            &AuctionConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(r.assignments[&1].space, 3);
        assert!(close(r.assignments[&1].price, 0.5));
        assert_eq!(r.total_bids, 1);
        assert_eq!(r.rounds_used, 2);
    }

    #[test]
    fn two_caps_second_price() {
        for seed in 0..16 {
            let r = run_batch(
                vec![Auction::new(0, 0, 0, 0.5)],
                &[
                    BidderView::new(1, 1.0, 1.0, vec![0.0]),
                    BidderView::new(2, 1.0, 0.7, vec![0.0]),
                ],
                &AuctionConfig::default(),
                seed,
            )
            .unwrap();
            let award = r.assignments[&1];
            assert!(award.price >= 0.70 - 1e-9 && award.price <= 0.75 + 1e-9, "{award:?}");
            assert_eq!(r.unassigned, vec![2]);
        }
    }

    fn find_seed_with_order(first: AgentId, n: usize) -> u64 {
        (0..1000)
            .find(|&s| {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
                order[0] as AgentId + 1 == first
            })
            .unwrap()
    }

    #[test]
    fn two_auctions_indifference_point() {
        let seed = find_seed_with_order(1, 2);
        let views = [
            BidderView::new(1, 0.5, 5.0, vec![100.0, 200.0]),
            BidderView::new(2, 0.5, 5.0, vec![100.0, 200.0]),
        ];
        let cfg = AuctionConfig {
            price_normaliser: PriceNormaliser::CurrentMax,
            ..AuctionConfig::default()
        };
        let r = run_batch(
            vec![Auction::new(0, 0, 0, 0.5), Auction::new(1, 1, 1, 0.5)],
            &views,
            &cfg,
            seed,
        )
        .unwrap();
        assert_eq!(r.assignments[&1].auction, 0);
        assert!(close(r.assignments[&1].price, 1.0));
        assert_eq!(r.assignments[&2].auction, 1);
        assert!(close(r.assignments[&2].price, 0.5));
    }

    #[test]
    fn valuation_normaliser_moves_the_indifference_point() {
        // Scaled by 5.0, A costs 0.1 p + 0.25 against B's 0.55: the agents
        // alternate on A until p = 3.00.
        let seed = find_seed_with_order(1, 2);
        let views = [
            BidderView::new(1, 0.5, 5.0, vec![100.0, 200.0]),
            BidderView::new(2, 0.5, 5.0, vec![100.0, 200.0]),
        ];
        let r = run_batch(
            vec![Auction::new(0, 0, 0, 0.5), Auction::new(1, 1, 1, 0.5)],
            &views,
            &AuctionConfig::default(),
            seed,
        )
        .unwrap();
        assert_eq!(r.assignments[&1].auction, 0);
        assert!(close(r.assignments[&1].price, 3.0));
        assert_eq!(r.assignments[&2].auction, 1);
        assert!(close(r.assignments[&2].price, 0.5));
        assert_eq!(r.total_bids, 52);
    }

    #[test]
    fn no_auctions_leaves_everyone_unassigned() {
        let r = run_batch(
            vec![],
            &[BidderView::new(4, 0.5, 5.0, vec![])],
            &AuctionConfig::default(),
            0,
        )
        .unwrap();
        assert!(r.assignments.is_empty());
        assert_eq!(r.unassigned, vec![4]);
    }

    #[test]
    fn guard_fires() {
        let cfg = AuctionConfig {
            max_rounds_guard: 1,
            ..AuctionConfig::default()
        };
        let err = run_batch(
            vec![Auction::new(0, 0, 0, 0.5)],
            &[BidderView::new(1, 0.5, 5.0, vec![0.0])],
            &cfg,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::RoundGuard(1)));
    }

    #[test]
    fn longer_quiescence_changes_nothing_but_rounds() {
        let mk = || {
            (
                vec![Auction::new(0, 0, 0, 0.5), Auction::new(1, 1, 0, 1.0)],
                vec![
                    BidderView::new(1, 0.5, 5.0, vec![10.0, 300.0]),
                    BidderView::new(2, 0.01, 5.0, vec![10.0, 300.0]),
                    BidderView::new(3, 0.5, 5.0, vec![200.0, 0.0]),
                ],
            )
        };
        let (a, v) = mk();
        let one = run_batch(a, &v, &AuctionConfig::default(), 5).unwrap();
        let (a, v) = mk();
        let three = run_batch(
            a,
            &v,
            &AuctionConfig {
                quiescence_rounds: 3,
                ..AuctionConfig::default()
            },
            5,
        )
        .unwrap();
        assert_eq!(one.assignments, three.assignments);
        assert_eq!(one.rounds_used + 2, three.rounds_used);
    }

    #[test]
    fn audit_lines() {
        let mut lines = Vec::new();
        run_batch_audited(
            vec![Auction::new(0, 0, 0, 0.5)],
            &[BidderView::new(9, 0.5, 5.0, vec![0.0])],
            &AuctionConfig::default(),
            0,
            |b, _| lines.push(b.to_line()),
        )
        .unwrap();
        assert_eq!(lines, vec!["1 9 0 0.5000".to_string()]);
    }
}
