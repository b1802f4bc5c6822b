//! Agent-based market with a generalised order book.
//!
//! N traders hold integer opinions about the value of a share; M of them own
//! one share each. In a stable book the owners hold the M highest opinions.
//! Each update picks a trader with weight `(1 + |p_i - p|)^(-γ)` so traders
//! near the price move more often, shifts its opinion by a drifted random
//! step, and trades with the boundary trader on the other side if the move
//! broke stability. Both trading partners then jump away from the trading
//! price.

use std::cmp::Reverse;
use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};

use crate::error::{ensure_positive, param};
use crate::io::{fmt_real, write_rows};
use crate::rng_paths::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceFormula {
    /// `(ask + bid) / 2`.
    Mid,
    /// `(ask - bid) / 2`.
    HalfSpread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftRule {
    /// Drift toward the price: `e^{+m}` below it, `e^{-m}` above it.
    Sign,
    /// `e^{+m}` for share owners, `e^{-m}` for the others.
    Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMethod {
    /// Rejection sampling with a piecewise envelope over dyadic distance
    /// bands; acceptance is at least `2^(-γ)` per proposal.
    Banded,
    /// Rejection sampling with envelope 1 (uniform proposal).
    Flat,
    /// Inverse transform over the explicit cumulative weights, O(N).
    Cumulative,
}

macro_rules! keyword_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl $ty {
            pub fn name(&self) -> &'static str {
                $(if *self == $variant { return $name; })+
                unreachable!()
            }
        }

        impl std::str::FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!("expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
    };
}

keyword_enum!(PriceFormula { "mid" => PriceFormula::Mid, "half_spread" => PriceFormula::HalfSpread });
keyword_enum!(DriftRule { "sign" => DriftRule::Sign, "role" => DriftRule::Role });
keyword_enum!(SelectionMethod {
    "banded" => SelectionMethod::Banded,
    "flat" => SelectionMethod::Flat,
    "cumulative" => SelectionMethod::Cumulative,
});

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub n_traders: usize,
    pub n_shares: usize,
    pub gamma: f64,
    /// Largest opinion step.
    pub l: u32,
    pub drift_magnitude: f64,
    /// Mean of the exponential magnitude of the log external force.
    pub ext_mean: f64,
    /// Mean number of updates between external force renewals.
    pub ext_rate_steps: u64,
    pub jump_away_min: i64,
    pub jump_away_max: i64,
    pub record_every: u64,
    /// Initial opinions are uniform on `init_center ± init_width/2`.
    pub init_width: i64,
    pub init_center: i64,
    pub price_formula: PriceFormula,
    pub drift_rule: DriftRule,
    pub selection: SelectionMethod,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            n_traders: 2000,
            n_shares: 1000,
            gamma: 1.5,
            l: 4,
            drift_magnitude: 0.1,
            ext_mean: 0.12,
            ext_rate_steps: 2000,
            jump_away_min: 5,
            jump_away_max: 20,
            record_every: 100,
            init_width: 400,
            init_center: 0,
            price_formula: PriceFormula::Mid,
            drift_rule: DriftRule::Sign,
            selection: SelectionMethod::Banded,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_shares == 0 || self.n_shares >= self.n_traders {
            return Err(Error::DegenerateMarket(format!(
                "need 0 < n_shares < n_traders, got {} shares for {} traders",
                self.n_shares, self.n_traders
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(param("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        if self.l == 0 {
            return Err(param("l", "must be at least 1"));
        }
        ensure_positive("drift_magnitude", self.drift_magnitude)?;
        ensure_positive("ext_mean", self.ext_mean)?;
        if self.ext_rate_steps == 0 {
            return Err(param("ext_rate_steps", "must be at least 1"));
        }
        if self.jump_away_min < 1 || self.jump_away_max < self.jump_away_min {
            return Err(param(
                "jump_away_min",
                format!(
                    "need 1 <= jump_away_min <= jump_away_max, got {}..{}",
                    self.jump_away_min, self.jump_away_max
                ),
            ));
        }
        if self.record_every == 0 {
            return Err(param("record_every", "must be at least 1"));
        }
        if self.init_width < 0 {
            return Err(param("init_width", "must be >= 0"));
        }
        Ok(())
    }

    /// 1-based descending ranks whose opinion difference is the gap.
    pub fn gap_ranks(&self) -> (usize, usize) {
        let n = self.n_traders as f64;
        let upper = ((0.475 * n).ceil() as usize).max(1);
        let lower = ((0.525 * n).ceil() as usize).min(self.n_traders);
        (upper, lower)
    }
}

/// Fenwick tree over a window of opinion levels, with the traders at each
/// level, for counting and indexing traders by opinion.
#[derive(Debug, Clone)]
struct LevelIndex {
    base: i64,
    tree: Vec<u32>,
    members: Vec<Vec<u32>>,
    slot: Vec<u32>,
}

impl LevelIndex {
    fn build(opinions: &[i64], lo: i64, hi: i64) -> Self {
        let span = (hi - lo + 1) as usize;
        let size = (2 * span + 64).next_power_of_two();
        let base = lo - ((size - span) / 2) as i64;
        let mut index = Self {
            base,
            tree: vec![0; size + 1],
            members: vec![Vec::new(); size],
            slot: vec![0; opinions.len()],
        };
        for (i, &o) in opinions.iter().enumerate() {
            index.insert(i, o);
        }
        index
    }

    fn size(&self) -> usize {
        self.members.len()
    }

    fn covers(&self, o: i64) -> bool {
        o >= self.base && o < self.base + self.size() as i64
    }

    fn add(&mut self, pos: usize, delta: i32) {
        let mut k = pos + 1;
        while k < self.tree.len() {
            self.tree[k] = self.tree[k].wrapping_add_signed(delta);
            k += k & k.wrapping_neg();
        }
    }

    fn insert(&mut self, trader: usize, o: i64) {
        let pos = (o - self.base) as usize;
        self.slot[trader] = self.members[pos].len() as u32;
        self.members[pos].push(trader as u32);
        self.add(pos, 1);
    }

    fn remove(&mut self, trader: usize, o: i64) {
        let pos = (o - self.base) as usize;
        let at = self.slot[trader] as usize;
        let level = &mut self.members[pos];
        level.swap_remove(at);
        if let Some(&moved) = level.get(at) {
            self.slot[moved as usize] = at as u32;
        }
        self.add(pos, -1);
    }

    /// Number of traders with opinion `<= o`.
    fn prefix(&self, o: i64) -> u32 {
        if o < self.base {
            return 0;
        }
        let mut k = ((o - self.base) as usize + 1).min(self.size());
        let mut sum = 0;
        while k > 0 {
            sum += self.tree[k];
            k &= k - 1;
        }
        sum
    }

    fn count(&self, lo: i64, hi: i64) -> u32 {
        if hi < lo {
            0
        } else {
            self.prefix(hi) - self.prefix(lo - 1)
        }
    }

    /// Trader at 0-based position `k` in ascending opinion order (levels in
    /// order, members of a level in storage order).
    fn kth(&self, mut k: u32) -> usize {
        let mut pos = 0;
        let mut step = self.size();
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= k {
                pos = next;
                k -= self.tree[next];
            }
            step >>= 1;
        }
        self.members[pos][k as usize] as usize
    }
}

/// Ask, bid and price of a book.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketQuote {
    pub ask: i64,
    pub bid: i64,
    pub price: f64,
}

/// What an update did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// The move kept the book stable.
    Moved,
    /// A non-owner bought from the lowest asker.
    Bought { counterparty: usize, k: i64 },
    /// An owner sold to the highest bidder.
    Sold { counterparty: usize, k: i64 },
}

/// Opinions, ownership and the indexes used to quote and select quickly.
#[derive(Debug, Clone)]
pub struct OrderBook {
    opinions: Vec<i64>,
    owns: Vec<bool>,
    time_step: u64,
    price_formula: PriceFormula,
    owners: BTreeSet<(i64, usize)>,
    // Reverse index so that the largest element is the highest bid with the
    // lowest trader index.
    others: BTreeSet<(i64, Reverse<usize>)>,
    levels: LevelIndex,
}

impl OrderBook {
    /// Book with the given opinions; the `n_shares` highest opinions own,
    /// ties going to the lower trader index.
    pub fn from_opinions(opinions: Vec<i64>, n_shares: usize, price_formula: PriceFormula) -> Result<Self> {
        let n = opinions.len();
        if n_shares == 0 || n_shares >= n {
            return Err(Error::DegenerateMarket(format!(
                "need 0 < shares < traders, got {n_shares} shares for {n} traders"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (Reverse(opinions[i]), i));
        let mut owns = vec![false; n];
        for &i in &order[..n_shares] {
            owns[i] = true;
        }
        Ok(Self::with_ownership(opinions, owns, price_formula))
    }

    fn with_ownership(opinions: Vec<i64>, owns: Vec<bool>, price_formula: PriceFormula) -> Self {
        let lo = *opinions.iter().min().unwrap();
        let hi = *opinions.iter().max().unwrap();
        let mut owners = BTreeSet::new();
        let mut others = BTreeSet::new();
        for (i, (&o, &own)) in opinions.iter().zip(&owns).enumerate() {
            if own {
                owners.insert((o, i));
            } else {
                others.insert((o, Reverse(i)));
            }
        }
        let levels = LevelIndex::build(&opinions, lo, hi);
        Self {
            opinions,
            owns,
            time_step: 0,
            price_formula,
            owners,
            others,
            levels,
        }
    }

    pub fn opinions(&self) -> &[i64] {
        &self.opinions
    }

    pub fn owns(&self) -> &[bool] {
        &self.owns
    }

    pub fn time_step(&self) -> u64 {
        self.time_step
    }

    pub fn n_traders(&self) -> usize {
        self.opinions.len()
    }

    pub fn n_shares(&self) -> usize {
        self.owners.len()
    }

    pub fn ask(&self) -> i64 {
        self.owners.first().expect("book has owners").0
    }

    pub fn bid(&self) -> i64 {
        self.others.last().expect("book has non-owners").0
    }

    pub fn quote(&self) -> MarketQuote {
        let (ask, bid) = (self.ask(), self.bid());
        MarketQuote {
            ask,
            bid,
            price: self.price_doubled() as f64 / 2.0,
        }
    }

    /// Twice the price, an integer.
    fn price_doubled(&self) -> i64 {
        match self.price_formula {
            PriceFormula::Mid => self.ask() + self.bid(),
            PriceFormula::HalfSpread => self.ask() - self.bid(),
        }
    }

    /// Owners hold a set of M highest opinions (ask >= bid). Owners and
    /// non-owners may share the boundary opinion.
    pub fn is_stable(&self) -> bool {
        self.ask() >= self.bid()
    }

    fn lowest_opinion(&self) -> i64 {
        self.owners.first().unwrap().0.min(self.others.first().unwrap().0)
    }

    fn highest_opinion(&self) -> i64 {
        self.owners.last().unwrap().0.max(self.others.last().unwrap().0)
    }

    fn set_opinion(&mut self, i: usize, o: i64) {
        let old = self.opinions[i];
        if old == o {
            return;
        }
        if self.owns[i] {
            self.owners.remove(&(old, i));
            self.owners.insert((o, i));
        } else {
            self.others.remove(&(old, Reverse(i)));
            self.others.insert((o, Reverse(i)));
        }
        self.opinions[i] = o;
        if self.levels.covers(o) {
            self.levels.remove(i, old);
            self.levels.insert(i, o);
        } else {
            let lo = self.lowest_opinion();
            let hi = self.highest_opinion();
            self.levels = LevelIndex::build(&self.opinions, lo, hi);
        }
    }

    fn set_owner(&mut self, i: usize, own: bool) {
        if self.owns[i] == own {
            return;
        }
        let o = self.opinions[i];
        if own {
            self.others.remove(&(o, Reverse(i)));
            self.owners.insert((o, i));
        } else {
            self.owners.remove(&(o, i));
            self.others.insert((o, Reverse(i)));
        }
        self.owns[i] = own;
    }

    /// Selection weight `(1 + |p_i - p|)^(-γ)`.
    pub fn selection_weight(&self, i: usize, gamma: f64) -> f64 {
        let d2 = (2 * self.opinions[i] - self.price_doubled()).abs();
        (1.0 + d2 as f64 / 2.0).powf(-gamma)
    }

    /// Draws a trader with probability proportional to its selection
    /// weight.
    pub fn select_trader(&self, gamma: f64, method: SelectionMethod, rng: &mut RngStream) -> usize {
        match method {
            SelectionMethod::Banded => self.select_banded(gamma, rng),
            SelectionMethod::Flat => self.select_flat(gamma, rng),
            SelectionMethod::Cumulative => self.select_cumulative(gamma, rng),
        }
    }

    fn select_flat(&self, gamma: f64, rng: &mut RngStream) -> usize {
        let n = self.n_traders() as u64;
        loop {
            let i = rng.below(n) as usize;
            if rng.uniform_open() < self.selection_weight(i, gamma) {
                return i;
            }
        }
    }

    fn select_cumulative(&self, gamma: f64, rng: &mut RngStream) -> usize {
        let weights: Vec<f64> = (0..self.n_traders()).map(|i| self.selection_weight(i, gamma)).collect();
        let total: f64 = weights.iter().sum();
        let mut target = rng.uniform_open() * total;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                return i;
            }
            target -= w;
        }
        self.n_traders() - 1
    }

    /// Opinion ranges of distance band `b` around the doubled price `p2`:
    /// band 0 holds `|o - p| < 1`, band `b >= 1` holds
    /// `2^(b-1) <= |o - p| < 2^b`. Returns (left, right) inclusive ranges.
    fn band_ranges(p2: i64, b: u32) -> ((i64, i64), (i64, i64)) {
        let floor2 = |v: i64| v.div_euclid(2);
        let ceil2 = |v: i64| -(-v).div_euclid(2);
        if b == 0 {
            return ((ceil2(p2 - 1), floor2(p2 + 1)), (1, 0));
        }
        let lo = 1i64 << b;
        let hi = 1i64 << (b + 1);
        let left = (floor2(p2 - hi) + 1, floor2(p2 - lo));
        let right = (ceil2(p2 + lo), ceil2(p2 + hi) - 1);
        (left, right)
    }

    fn select_banded(&self, gamma: f64, rng: &mut RngStream) -> usize {
        let p2 = self.price_doubled();
        let reach = (2 * self.lowest_opinion() - p2)
            .abs()
            .max((2 * self.highest_opinion() - p2).abs());
        let mut bands = Vec::with_capacity(40);
        let mut total = 0.0;
        let mut b = 0u32;
        loop {
            let (left, right) = Self::band_ranges(p2, b);
            let left_count = self.levels.count(left.0, left.1);
            let right_count = self.levels.count(right.0, right.1);
            let count = left_count + right_count;
            let floor_dist = if b == 0 { 0.0 } else { (1u64 << (b - 1)) as f64 };
            let envelope = count as f64 * (1.0 + floor_dist).powf(-gamma);
            total += envelope;
            bands.push((envelope, floor_dist, left, left_count, right, count));
            if (1i64 << (b + 1)) > reach {
                break;
            }
            b += 1;
        }
        loop {
            let mut target = rng.uniform_open() * total;
            let mut chosen = bands.len() - 1;
            for (j, band) in bands.iter().enumerate() {
                if target < band.0 {
                    chosen = j;
                    break;
                }
                target -= band.0;
            }
            let (envelope, floor_dist, left, left_count, right, count) = bands[chosen];
            if envelope == 0.0 {
                continue;
            }
            let r = rng.below(count as u64) as u32;
            let trader = if r < left_count {
                self.levels.kth(self.levels.prefix(left.0 - 1) + r)
            } else {
                self.levels.kth(self.levels.prefix(right.0 - 1) + r - left_count)
            };
            let dist = (2 * self.opinions[trader] - p2).abs() as f64 / 2.0;
            let accept = ((1.0 + floor_dist) / (1.0 + dist)).powf(gamma);
            if rng.uniform_open() < accept {
                return trader;
            }
        }
    }

    /// Drift factor for trader `i`.
    pub fn drift_factor(&self, i: usize, config: &GameConfig) -> f64 {
        let m = config.drift_magnitude;
        match config.drift_rule {
            DriftRule::Sign => {
                let diff = 2 * self.opinions[i] - self.price_doubled();
                if diff < 0 {
                    m.exp()
                } else if diff > 0 {
                    (-m).exp()
                } else {
                    1.0
                }
            }
            DriftRule::Role => {
                if self.owns[i] {
                    m.exp()
                } else {
                    (-m).exp()
                }
            }
        }
    }

    /// Draws the opinion change of trader `i`.
    pub fn propose_move(&self, i: usize, ext: &ExternalForce, config: &GameConfig, rng: &mut RngStream) -> i64 {
        let q = self.drift_factor(i, config) * ext.strength;
        sample_move(q, config.l, rng)
    }

    /// Moves trader `i` by `d`, trading if the move broke stability.
    pub fn apply_update(&mut self, i: usize, d: i64, config: &GameConfig, rng: &mut RngStream) -> UpdateOutcome {
        let target = self.opinions[i] + d;
        let outcome = if self.owns[i] {
            let bid = self.bid();
            if target < bid {
                let (_, Reverse(j)) = *self.others.last().unwrap();
                let k = rng.random_range(config.jump_away_min..=config.jump_away_max);
                self.set_owner(i, false);
                self.set_owner(j, true);
                self.set_opinion(i, bid - k);
                self.set_opinion(j, bid + k);
                UpdateOutcome::Sold { counterparty: j, k }
            } else {
                self.set_opinion(i, target);
                UpdateOutcome::Moved
            }
        } else {
            let ask = self.ask();
            if target > ask {
                let (_, j) = *self.owners.first().unwrap();
                let k = rng.random_range(config.jump_away_min..=config.jump_away_max);
                self.set_owner(i, true);
                self.set_owner(j, false);
                self.set_opinion(i, ask + k);
                self.set_opinion(j, ask - k);
                UpdateOutcome::Bought { counterparty: j, k }
            } else {
                self.set_opinion(i, target);
                UpdateOutcome::Moved
            }
        };
        debug_assert_eq!(self.owners.len() + self.others.len(), self.opinions.len());
        debug_assert!(self.is_stable());
        self.time_step += 1;
        outcome
    }

    /// Opinion at 1-based descending rank `rank`.
    pub fn opinion_at_rank(&self, rank: usize) -> i64 {
        let mut copy = self.opinions.clone();
        let (_, v, _) = copy.select_nth_unstable_by(rank - 1, |a, b| b.cmp(a));
        *v
    }

    /// Opinion difference across the ownership boundary between the ranks
    /// of [`GameConfig::gap_ranks`].
    pub fn gap(&self, config: &GameConfig) -> i64 {
        let (upper, lower) = config.gap_ranks();
        let mut copy = self.opinions.clone();
        let a = *copy.select_nth_unstable_by(upper - 1, |a, b| b.cmp(a)).1;
        let b = *copy.select_nth_unstable_by(lower - 1, |a, b| b.cmp(a)).1;
        a - b
    }

    /// CSV with columns `trader_index,opinion,owns`.
    pub fn write_snapshot<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(
            writer,
            &["trader_index", "opinion", "owns"],
            self.opinions.iter().zip(&self.owns).enumerate().map(|(i, (o, own))| {
                vec![i.to_string(), o.to_string(), u8::from(*own).to_string()]
            }),
        )
    }
}

/// Checks from scratch that owners hold a set of M highest opinions:
/// everyone strictly above the M-th highest opinion owns and everyone
/// strictly below it does not.
pub fn owners_are_top(opinions: &[i64], owns: &[bool], n_shares: usize) -> bool {
    if owns.iter().filter(|o| **o).count() != n_shares {
        return false;
    }
    let mut copy = opinions.to_vec();
    let threshold = *copy.select_nth_unstable_by(n_shares - 1, |a, b| b.cmp(a)).1;
    opinions
        .iter()
        .zip(owns)
        .all(|(o, own)| (*o > threshold && *own) || (*o < threshold && !*own) || *o == threshold)
}

/// Draws `d` in `-l..=l`: each `d != 0` has probability `min(q^d, 1)/(2l+1)`
/// and 0 takes the remaining mass.
pub fn sample_move(q: f64, l: u32, rng: &mut RngStream) -> i64 {
    let l = l as i64;
    let d = rng.random_range(-l..=l);
    if d == 0 {
        return 0;
    }
    let p = q.powi(d as i32);
    if p >= 1.0 || rng.uniform_open() < p {
        d
    } else {
        0
    }
}

/// Exact law of [`sample_move`], indexed by `d + l`.
pub fn move_distribution(q: f64, l: u32) -> Vec<f64> {
    let l = l as i64;
    let norm = (2 * l + 1) as f64;
    let mut probs: Vec<f64> = (-l..=l)
        .map(|d| if d == 0 { 0.0 } else { q.powi(d as i32).min(1.0) / norm })
        .collect();
    let rest: f64 = probs.iter().sum();
    probs[l as usize] = 1.0 - rest;
    probs
}

/// The market-wide multiplicative drift and its next renewal time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalForce {
    pub strength: f64,
    pub next_switch: u64,
}

impl ExternalForce {
    /// Draws the force in effect from update `now` on.
    pub fn draw(now: u64, config: &GameConfig, rng: &mut RngStream) -> Self {
        let magnitude = Exp::new(1.0 / config.ext_mean).expect("validated mean").sample(rng);
        let sign = if rng.coin() { 1.0 } else { -1.0 };
        let wait = Geometric::new(1.0 / config.ext_rate_steps as f64)
            .expect("validated rate")
            .sample(rng);
        Self {
            strength: (sign * magnitude).exp(),
            next_switch: now + 1 + wait,
        }
    }
}

/// A running game: book, force and random stream.
#[derive(Debug, Clone)]
pub struct Game {
    config: GameConfig,
    book: OrderBook,
    force: ExternalForce,
    rng: RngStream,
}

/// Draws initial opinions and assigns shares to the highest ones.
pub fn init_book(config: &GameConfig, rng: &mut RngStream) -> Result<OrderBook> {
    config.validate()?;
    let half = config.init_width / 2;
    let lo = config.init_center - half;
    let hi = config.init_center + (config.init_width - half);
    let opinions = (0..config.n_traders).map(|_| rng.random_range(lo..=hi)).collect();
    OrderBook::from_opinions(opinions, config.n_shares, config.price_formula)
}

impl Game {
    pub fn new(config: GameConfig, mut rng: RngStream) -> Result<Self> {
        let book = init_book(&config, &mut rng)?;
        Self::with_book(config, book, rng)
    }

    pub fn with_book(config: GameConfig, book: OrderBook, mut rng: RngStream) -> Result<Self> {
        config.validate()?;
        if book.n_traders() != config.n_traders || book.n_shares() != config.n_shares {
            return Err(param("book", "trader or share count does not match the config"));
        }
        let force = ExternalForce::draw(book.time_step(), &config, &mut rng);
        Ok(Self {
            config,
            book,
            force,
            rng,
        })
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn force(&self) -> &ExternalForce {
        &self.force
    }

    /// One opinion update (force renewal, selection, move, trade).
    pub fn step(&mut self) -> UpdateOutcome {
        if self.book.time_step() >= self.force.next_switch {
            self.force = ExternalForce::draw(self.book.time_step(), &self.config, &mut self.rng);
        }
        let i = self.book.select_trader(self.config.gamma, self.config.selection, &mut self.rng);
        let d = self.book.propose_move(i, &self.force, &self.config, &mut self.rng);
        self.book.apply_update(i, d, &self.config, &mut self.rng)
    }

    fn record(&self) -> SeriesRow {
        let q = self.book.quote();
        SeriesRow {
            step: self.book.time_step(),
            price: q.price,
            ask: q.ask,
            bid: q.bid,
            gap: self.book.gap(&self.config),
            delta_ext: self.force.strength,
        }
    }

    /// Runs `horizon` updates, recording every `record_every` updates and
    /// taking snapshots at the listed update counts.
    pub fn run(&mut self, horizon: u64, snapshot_steps: &[u64]) -> Result<GameRecord> {
        if horizon < self.config.record_every {
            return Err(param(
                "horizon",
                format!("must be at least record_every = {}", self.config.record_every),
            ));
        }
        let mut rows = Vec::with_capacity((horizon / self.config.record_every) as usize);
        let mut snapshots = Vec::new();
        for _ in 0..horizon {
            self.step();
            let t = self.book.time_step();
            if t % self.config.record_every == 0 {
                rows.push(self.record());
            }
            if snapshot_steps.contains(&t) {
                snapshots.push((t, self.book.clone()));
            }
        }
        Ok(GameRecord { rows, snapshots })
    }

    /// Takes the median of the first `baseline_records` recorded gaps as
    /// the baseline, then keeps running until a recorded gap exceeds
    /// `factor` times the baseline or `max_updates` updates in total have
    /// been made.
    pub fn gap_escape(&mut self, factor: f64, baseline_records: usize, max_updates: u64) -> GapEscape {
        let mut baseline = Vec::with_capacity(baseline_records);
        let mut threshold = f64::INFINITY;
        let mut max_gap = i64::MIN;
        let mut exceeded_at = None;
        for _ in 0..max_updates {
            self.step();
            let t = self.book.time_step();
            if t % self.config.record_every != 0 {
                continue;
            }
            let gap = self.book.gap(&self.config);
            if baseline.len() < baseline_records {
                baseline.push(gap as f64);
                if baseline.len() == baseline_records {
                    threshold = factor * crate::stats::median(&baseline);
                }
            }
            max_gap = max_gap.max(gap);
            if gap as f64 > threshold {
                exceeded_at = Some(t);
                break;
            }
        }
        GapEscape {
            baseline_median: if baseline.len() == baseline_records {
                threshold / factor
            } else {
                f64::NAN
            },
            max_gap,
            exceeded_at,
            updates: self.book.time_step(),
        }
    }
}

/// Outcome of [`Game::gap_escape`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEscape {
    pub baseline_median: f64,
    pub max_gap: i64,
    pub exceeded_at: Option<u64>,
    pub updates: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub step: u64,
    pub price: f64,
    pub ask: i64,
    pub bid: i64,
    pub gap: i64,
    pub delta_ext: f64,
}

#[derive(Debug, Clone)]
pub struct GameRecord {
    pub rows: Vec<SeriesRow>,
    pub snapshots: Vec<(u64, OrderBook)>,
}

impl GameRecord {
    pub fn prices(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.price).collect()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gap as f64).collect()
    }

    /// CSV with columns `step,price,ask,bid,gap,delta_ext`.
    pub fn write_series<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(
            writer,
            &["step", "price", "ask", "bid", "gap", "delta_ext"],
            self.rows.iter().map(|r| {
                vec![
                    r.step.to_string(),
                    fmt_real(r.price),
                    r.ask.to_string(),
                    r.bid.to_string(),
                    r.gap.to_string(),
                    fmt_real(r.delta_ext),
                ]
            }),
        )
    }
}
