//! The per-step capacity market.
//!
//! Capacity originates at the destination and is resold outward, one hop
//! level at a time: nodes at distance k buy from distance k-1 and offer
//! what they obtained to distance k+1. Offers carry price, delay and
//! availability accumulated along the chain; requests are capacity
//! intervals and are settled per provider by a fixed priority rule.

use std::collections::BTreeMap;
use std::fmt;

use crate::topology::{DestParams, NodeId, NodeParams, Topology};

/// Contracts currently last a single step; duration is carried on offers
/// and contracts so longer terms stay representable.
pub const DEFAULT_CONTRACT_DURATION: u32 = 1;

/// Per-link availability. Links never fail in the current model, so this
/// is a constant factor; the product is still tracked end to end.
pub const LINK_AVAILABILITY: f64 = 1.0;

/// A requested amount of capacity: at least `lo` units, at most `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CapacityInterval {
    pub lo: u32,
    pub hi: u32,
}

impl CapacityInterval {
    pub fn new(lo: u32, hi: u32) -> Self {
        CapacityInterval { lo, hi }
    }

    /// A usable request: positive lower end, ordered ends.
    pub fn is_valid(&self) -> bool {
        self.lo >= 1 && self.lo <= self.hi
    }
}

impl fmt::Display for CapacityInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// A route toward the destination announced by `provider` to one of its
/// neighbors farther out.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteOffer {
    pub provider: NodeId,
    /// Neighbor the offer is addressed to.
    pub to: NodeId,
    pub dest: NodeId,
    /// Chain of resellers from the provider down to the destination.
    pub path: Vec<NodeId>,
    pub unit_price: f64,
    pub available_capacity: u32,
    /// Total delay as seen from `to`, link delays summed along the chain.
    pub delay: f64,
    /// Product of per-link availabilities along the chain.
    pub availability: f64,
    pub duration: u32,
}

/// A buyer asking one provider for an interval of capacity on a specific
/// offered route.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityRequest {
    pub buyer: NodeId,
    pub interval: CapacityInterval,
    pub offer: RouteOffer,
}

/// A settled trade.
#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    pub buyer: NodeId,
    pub seller: NodeId,
    /// Reseller chain from the seller down to the destination.
    pub path: Vec<NodeId>,
    pub granted_capacity: u32,
    pub unit_price: f64,
    pub delay: f64,
    pub availability: f64,
    pub remaining_duration: u32,
}

/// One player's market results for a step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlayerOutcome {
    /// Capacity granted to this player by its provider (0 when rejected
    /// or when no acceptable offer existed).
    pub granted: u32,
    pub acquisition_cost: f64,
    /// Units resold to downstream buyers.
    pub resold: u32,
    pub resale_revenue: f64,
    /// Own demand actually carried: min(demand, granted - resold).
    pub delivered: u32,
    pub benefit: f64,
    /// True when some downstream contract's route crosses this node.
    pub traversed: bool,
}

/// Everything that happened on the market in one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketOutcome {
    pub players: BTreeMap<NodeId, PlayerOutcome>,
    pub contracts: Vec<Contract>,
}

/// What a node is selling from: the destination exports fresh capacity,
/// everyone else resells what they just bought.
#[derive(Debug, Clone, Copy)]
pub enum OfferBasis<'a> {
    Export(&'a DestParams),
    Resale(&'a Contract),
}

/// Offers `node` announces to its neighbors one hop farther from the
/// destination. Empty when the node has nothing in stock. Offers are
/// produced in recipient-id order.
pub fn generate_offers(
    node: &NodeId,
    basis: OfferBasis<'_>,
    topo: &Topology,
    levels: &BTreeMap<NodeId, u32>,
) -> Vec<RouteOffer> {
    let Some(&level) = levels.get(node) else {
        return Vec::new();
    };
    let (stock, unit_price, base_delay, availability, path) = match basis {
        OfferBasis::Export(dest) => (
            dest.export_capacity,
            dest.base_price,
            0.0,
            1.0,
            vec![node.clone()],
        ),
        OfferBasis::Resale(contract) => {
            let margin = topo
                .node_params(node)
                .map(|p| p.margin)
                .unwrap_or_default();
            let mut path = Vec::with_capacity(contract.path.len() + 1);
            path.push(node.clone());
            path.extend(contract.path.iter().cloned());
            (
                contract.granted_capacity,
                contract.unit_price + margin,
                contract.delay,
                contract.availability,
                path,
            )
        }
    };
    if stock == 0 {
        return Vec::new();
    }
    topo.neighbors(node)
        .filter(|(neighbor, _)| levels.get(*neighbor) == Some(&(level + 1)))
        .map(|(neighbor, link_delay)| RouteOffer {
            provider: node.clone(),
            to: neighbor.clone(),
            dest: topo.destination().clone(),
            path: path.clone(),
            unit_price,
            available_capacity: stock,
            delay: base_delay + link_delay,
            availability: availability * LINK_AVAILABILITY,
            duration: DEFAULT_CONTRACT_DURATION,
        })
        .collect()
}

/// Settles the requests addressed to one provider holding `stock` units.
/// Priority: larger `lo` first, ties broken by smaller buyer id. A request
/// is granted min(hi, remaining stock) if that still covers `lo`, else
/// nothing. Returns `(buyer, granted)` in processing order.
pub fn settle_requests(stock: u32, requests: &[CapacityRequest]) -> Vec<(NodeId, u32)> {
    let mut order: Vec<&CapacityRequest> = requests.iter().collect();
    order.sort_by(|a, b| {
        b.interval
            .lo
            .cmp(&a.interval.lo)
            .then_with(|| a.buyer.cmp(&b.buyer))
    });
    let mut remaining = stock;
    let mut grants = Vec::with_capacity(order.len());
    for request in order {
        if !request.interval.is_valid() {
            log::warn!(
                "rejecting request {} from {}: not a valid interval",
                request.interval,
                request.buyer
            );
            grants.push((request.buyer.clone(), 0));
            continue;
        }
        let grant = request.interval.hi.min(remaining);
        if grant >= request.interval.lo {
            remaining -= grant;
            grants.push((request.buyer.clone(), grant));
        } else {
            grants.push((request.buyer.clone(), 0));
        }
    }
    grants
}

/// Units of own demand a player can actually carry after reselling.
pub fn delivered_units(own_demand: u32, granted: u32, resold: u32) -> u32 {
    own_demand.min(granted - resold)
}

/// A player's money balance for the step: resale revenue, plus the value
/// of delivered own demand, minus what the granted capacity cost. A player
/// that obtained nothing has benefit 0.
pub fn compute_benefit(
    granted: u32,
    unit_price: f64,
    resold: u32,
    resale_revenue: f64,
    params: &NodeParams,
) -> f64 {
    if granted == 0 {
        return 0.0;
    }
    let delivered = delivered_units(params.own_demand, granted, resold);
    resale_revenue + params.demand_value * f64::from(delivered) - f64::from(granted) * unit_price
}

struct Purchase {
    granted: u32,
    unit_price: f64,
}

/// Runs one full market step: offers cascade outward from the destination,
/// each player picks a route with `selector` (given its offers and its
/// interval, returning an index into the offer slice) and files one
/// request, providers settle level by level. Pure: identical inputs give
/// identical outcomes.
///
/// Players missing from `actions` sit the step out.
pub fn cascade_round<F>(
    topo: &Topology,
    actions: &BTreeMap<NodeId, CapacityInterval>,
    selector: F,
) -> MarketOutcome
where
    F: Fn(&[RouteOffer], CapacityInterval) -> Option<usize>,
{
    let levels = topo.levels();
    let destination = topo.destination();
    let max_level = levels.values().copied().max().unwrap_or(0);

    let mut outcome = MarketOutcome::default();
    for node in levels.keys().filter(|n| *n != destination) {
        outcome.players.insert(node.clone(), PlayerOutcome::default());
    }

    // Offers waiting for each buyer, filled as upstream trades settle.
    let mut pending: BTreeMap<NodeId, Vec<RouteOffer>> = BTreeMap::new();
    let dest_params = topo.dest_params();
    for offer in generate_offers(destination, OfferBasis::Export(&dest_params), topo, &levels) {
        pending.entry(offer.to.clone()).or_default().push(offer);
    }

    let mut purchases: BTreeMap<NodeId, Purchase> = BTreeMap::new();

    for level in 1..=max_level {
        // Route choice: every player at this level files at most one request.
        let mut by_provider: BTreeMap<NodeId, Vec<CapacityRequest>> = BTreeMap::new();
        for (node, &node_level) in &levels {
            if node_level != level {
                continue;
            }
            let offers = pending.remove(node).unwrap_or_default();
            let Some(&interval) = actions.get(node) else {
                continue;
            };
            if let Some(index) = selector(&offers, interval) {
                let offer = offers[index].clone();
                by_provider
                    .entry(offer.provider.clone())
                    .or_default()
                    .push(CapacityRequest {
                        buyer: node.clone(),
                        interval,
                        offer,
                    });
            }
        }

        // Settlement, one provider at a time.
        for (provider, requests) in by_provider {
            let stock = if provider == *destination {
                dest_params.export_capacity
            } else {
                purchases
                    .get(&provider)
                    .map(|p| p.granted)
                    .expect("providers only offer capacity they acquired")
            };
            for (buyer, granted) in settle_requests(stock, &requests) {
                if granted == 0 {
                    continue;
                }
                let request = requests
                    .iter()
                    .find(|r| r.buyer == buyer)
                    .expect("grant refers to a settled request");
                let contract = Contract {
                    buyer: buyer.clone(),
                    seller: provider.clone(),
                    path: request.offer.path.clone(),
                    granted_capacity: granted,
                    unit_price: request.offer.unit_price,
                    delay: request.offer.delay,
                    availability: request.offer.availability,
                    remaining_duration: request.offer.duration,
                };
                let revenue = f64::from(granted) * contract.unit_price;
                if provider != *destination {
                    let seller = outcome.players.get_mut(&provider).unwrap();
                    seller.resold += granted;
                    seller.resale_revenue += revenue;
                }
                let entry = outcome.players.get_mut(&buyer).unwrap();
                entry.granted = granted;
                entry.acquisition_cost = revenue;
                purchases.insert(
                    buyer.clone(),
                    Purchase {
                        granted,
                        unit_price: contract.unit_price,
                    },
                );
                for offer in generate_offers(&buyer, OfferBasis::Resale(&contract), topo, &levels)
                {
                    pending.entry(offer.to.clone()).or_default().push(offer);
                }
                outcome.contracts.push(contract);
            }
        }
    }

    for (node, entry) in &mut outcome.players {
        let params = topo
            .node_params(node)
            .expect("players are declared nodes");
        let (unit_price, granted) = purchases
            .get(node)
            .map(|p| (p.unit_price, p.granted))
            .unwrap_or((0.0, 0));
        debug_assert_eq!(granted, entry.granted);
        entry.delivered = delivered_units(params.own_demand, entry.granted, entry.resold);
        entry.benefit = compute_benefit(
            entry.granted,
            unit_price,
            entry.resold,
            entry.resale_revenue,
            params,
        );
    }

    for contract in &outcome.contracts {
        for node in &contract.path {
            if node != destination {
                outcome.players.get_mut(node).unwrap().traversed = true;
            }
        }
    }

    outcome
}
