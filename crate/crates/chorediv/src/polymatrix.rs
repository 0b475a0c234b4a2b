//! Exchange markets built from normalized polymatrix games.
//!
//! The market has `K` layers of `2n` chores, paired into `n` components per
//! layer. Prices of a pair always sum to the same constant, and the ratio
//! inside a pair is squeezed into a narrow band that flips between its two
//! extremes from one layer to the next. The top layer's prices encode a
//! strategy vector of the game.

use std::path::Path;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::model::{int, rat, to_f64, GadgetMetadata, Instance, RatStr, Rational};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolymatrixError {
    #[error("bad game: {0}")]
    BadGame(String),
    #[error("games with n = {0} are too small for the construction (need n >= 2)")]
    DegenerateSize(usize),
    #[error("not a polymatrix gadget: {0}")]
    NotGadget(String),
    #[error("price {price} of top-layer chore {chore} is outside the regulation band")]
    OutOfBand { chore: usize, price: f64 },
    #[error("expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// A `2n x 2n` payoff matrix whose paired columns sum to one in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct PolymatrixGame {
    pub n: usize,
    pub payoff: Vec<Vec<Rational>>,
}

#[derive(Serialize, Deserialize)]
struct GameFile {
    payoff: Vec<Vec<RatStr>>,
}

impl PolymatrixGame {
    pub fn new(payoff: Vec<Vec<Rational>>) -> Result<Self, PolymatrixError> {
        let size = payoff.len();
        if size == 0 || size % 2 != 0 {
            return Err(PolymatrixError::BadGame(format!("matrix has {size} rows, need a positive even count")));
        }
        for (r, row) in payoff.iter().enumerate() {
            if row.len() != size {
                return Err(PolymatrixError::BadGame(format!("row {r} has {} entries, need {size}", row.len())));
            }
            for (c, v) in row.iter().enumerate() {
                if v.is_negative() || *v > Rational::one() {
                    return Err(PolymatrixError::BadGame(format!("entry ({r}, {c}) is outside [0, 1]")));
                }
            }
            for pair in row.chunks(2) {
                if &pair[0] + &pair[1] != Rational::one() {
                    return Err(PolymatrixError::BadGame(format!("row {r} has a column pair not summing to 1")));
                }
            }
        }
        Ok(PolymatrixGame { n: size / 2, payoff })
    }

    /// Every entry 1/2: no column ever beats its partner.
    pub fn uniform(n: usize) -> Self {
        PolymatrixGame {
            n,
            payoff: vec![vec![rat(1, 2); 2 * n]; 2 * n],
        }
    }

    pub fn size(&self) -> usize {
        2 * self.n
    }

    pub fn column_sum(&self, col: usize) -> Rational {
        self.payoff.iter().map(|row| &row[col]).sum()
    }

    pub fn to_json(&self) -> String {
        let file = GameFile {
            payoff: self.payoff.iter().map(|row| row.iter().cloned().map(RatStr).collect()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("game serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PolymatrixError> {
        let file: GameFile = serde_json::from_str(text).map_err(|e| PolymatrixError::BadGame(e.to_string()))?;
        Self::new(file.payoff.into_iter().map(|row| row.into_iter().map(|v| v.0).collect()).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolymatrixError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PolymatrixError::BadGame(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

/// Layer count, ratio schedule and balancing endowments for a given `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolymatrixParams {
    pub c: u32,
    pub levels: usize,
    /// `alpha[k - 1]` is the band half-width of layer `k`.
    pub alpha: Vec<Rational>,
    pub delta: Vec<Rational>,
    pub tau: Rational,
}

#[derive(Serialize)]
struct ParamsFile {
    c: u32,
    levels: usize,
    alpha: Vec<RatStr>,
    delta: Vec<RatStr>,
    tau: RatStr,
}

fn ceil_log2(n: usize) -> u32 {
    let mut t = 0;
    while (1usize << t) < n {
        t += 1;
    }
    t
}

impl PolymatrixParams {
    pub const C: u32 = 4;

    pub fn for_size(n: usize) -> Result<Self, PolymatrixError> {
        if n < 2 {
            return Err(PolymatrixError::DegenerateSize(n));
        }
        let c = Self::C;
        let levels = 2 * c as usize * ceil_log2(n).max(1) as usize;
        let nn = Rational::from_integer(n.into());
        let alpha_1 = Rational::one() / num_traits::pow(nn.clone(), 3 * c as usize);
        let mut alpha = Vec::with_capacity(levels);
        let mut a = alpha_1;
        for _ in 0..levels {
            alpha.push(a.clone());
            a = a * rat(3, 2);
        }
        let delta = alpha.iter().map(|a| &nn * a / int(2)).collect();
        let params = PolymatrixParams {
            c,
            levels,
            alpha,
            delta,
            tau: int(2),
        };
        if !params.claim_holds(n) {
            return Err(PolymatrixError::BadGame(format!("alpha schedule breaks its bounds at n = {n}")));
        }
        Ok(params)
    }

    /// Band half-width of layer `k` (one-based).
    pub fn alpha(&self, k: usize) -> &Rational {
        &self.alpha[k - 1]
    }

    pub fn delta(&self, k: usize) -> &Rational {
        &self.delta[k - 1]
    }

    pub fn alpha_top(&self) -> &Rational {
        self.alpha(self.levels)
    }

    /// `n^c * alpha_1 < alpha_K <= n^-c`.
    pub fn claim_holds(&self, n: usize) -> bool {
        let nc = num_traits::pow(Rational::from_integer(n.into()), self.c as usize);
        let top = self.alpha_top();
        &nc * self.alpha(1) < *top && top * &nc <= Rational::one()
    }

    pub fn to_json(&self) -> String {
        let file = ParamsFile {
            c: self.c,
            levels: self.levels,
            alpha: self.alpha.iter().cloned().map(RatStr).collect(),
            delta: self.delta.iter().cloned().map(RatStr).collect(),
            tau: RatStr(self.tau.clone()),
        };
        serde_json::to_string_pretty(&file).expect("params serialize")
    }
}

/// Stored with a built instance so agents and chores can be located by role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolymatrixLayout {
    pub n: usize,
    pub levels: usize,
    pub payoff: Vec<Vec<RatStr>>,
}

// All index helpers take one-based layer and position arguments.
impl PolymatrixLayout {
    pub fn game(&self) -> Result<PolymatrixGame, PolymatrixError> {
        PolymatrixGame::new(self.payoff.iter().map(|row| row.iter().map(|v| v.0.clone()).collect()).collect())
    }

    pub fn params(&self) -> Result<PolymatrixParams, PolymatrixError> {
        let params = PolymatrixParams::for_size(self.n)?;
        if params.levels != self.levels {
            return Err(PolymatrixError::NotGadget(format!(
                "layout has {} layers, expected {}",
                self.levels, params.levels
            )));
        }
        Ok(params)
    }

    pub fn chore(&self, k: usize, i: usize) -> usize {
        (k - 1) * 2 * self.n + (i - 1)
    }

    fn layer_base(&self, k: usize) -> usize {
        4 * self.n + (k - 2) * 3 * self.n
    }

    /// Agent `a^k_i` for `k < K`; it owns `b^k_i` and works in layer `k + 1`.
    pub fn chain_agent(&self, k: usize, i: usize) -> usize {
        if k == 1 {
            i - 1
        } else {
            self.layer_base(k) + i - 1
        }
    }

    /// Agent `a'_i` of the first layer.
    pub fn fixed_agent(&self, i: usize) -> usize {
        2 * self.n + i - 1
    }

    /// Agent `ā^k_i` for `k >= 2`, owning a sliver of both chores of pair `i`.
    pub fn balancing_agent(&self, k: usize, i: usize) -> usize {
        if k == self.levels {
            self.layer_base(k) + 4 * self.n * self.n + i - 1
        } else {
            self.layer_base(k) + 2 * self.n + i - 1
        }
    }

    /// Agent `a^K_{r,c}` owning `M[r][c]` of `b^K_r`.
    pub fn top_agent(&self, r: usize, c: usize) -> usize {
        self.layer_base(self.levels) + (r - 1) * 2 * self.n + (c - 1)
    }

    pub fn agents(&self) -> usize {
        self.layer_base(self.levels) + 4 * self.n * self.n + self.n
    }

    pub fn chores(&self) -> usize {
        2 * self.n * self.levels
    }

    /// Sum of the two prices of pair `i` in layer `k`.
    pub fn pair_total(&self, prices: &[f64], k: usize, i: usize) -> f64 {
        prices[self.chore(k, 2 * i - 1)] + prices[self.chore(k, 2 * i)]
    }

    pub fn pair_ratio(&self, prices: &[f64], k: usize, i: usize) -> f64 {
        prices[self.chore(k, 2 * i - 1)] / prices[self.chore(k, 2 * i)]
    }
}

pub fn build_polymatrix_instance(game: &PolymatrixGame) -> Result<(Instance, PolymatrixParams), PolymatrixError> {
    let n = game.n;
    let params = PolymatrixParams::for_size(n)?;
    let big_k = params.levels;
    let layout = PolymatrixLayout {
        n,
        levels: big_k,
        payoff: game.payoff.iter().map(|row| row.iter().cloned().map(RatStr).collect()).collect(),
    };
    let agents = layout.agents();
    let chores = layout.chores();
    let mut d: Vec<Vec<Option<Rational>>> = vec![vec![None; chores]; agents];
    let mut w = vec![vec![Rational::zero(); chores]; agents];
    let nn = int(n as i64);
    let one = Rational::one();

    // Disutilities of pair (2i-1, 2i) in layer k: the "left" agent prefers the odd chore.
    let mut set_pair = |agent: usize, k: usize, i: usize, left: bool| {
        let a = params.alpha(k);
        let (lo, hi) = (&one - a, &one + a);
        let (x, y) = if left { (lo, hi) } else { (hi, lo) };
        d[agent][layout.chore(k, 2 * i - 1)] = Some(x);
        d[agent][layout.chore(k, 2 * i)] = Some(y);
    };
    for i in 1..=n {
        for r in 1..=2 * n {
            set_pair(layout.top_agent(r, 2 * i - 1), 1, i, true);
            set_pair(layout.top_agent(r, 2 * i), 1, i, false);
        }
        set_pair(layout.fixed_agent(2 * i - 1), 1, i, true);
        set_pair(layout.fixed_agent(2 * i), 1, i, false);
        for k in 2..=big_k {
            set_pair(layout.chain_agent(k - 1, 2 * i - 1), k, i, true);
            set_pair(layout.chain_agent(k - 1, 2 * i), k, i, false);
        }
    }
    for k in 2..=big_k {
        let lo = &one - params.alpha(k);
        for i in 1..=n {
            let b = layout.balancing_agent(k, i);
            d[b][layout.chore(k, 2 * i - 1)] = Some(lo.clone());
            d[b][layout.chore(k, 2 * i)] = Some(lo.clone());
        }
    }

    let shrink = &one - params.alpha_top();
    for i in 1..=2 * n {
        w[layout.chain_agent(1, i)][layout.chore(1, i)] = nn.clone();
    }
    for i in 1..=n {
        for col in [2 * i - 1, 2 * i] {
            let share = &shrink * (int(2 * n as i64) - game.column_sum(col - 1)) / int(2);
            let a = layout.fixed_agent(col);
            w[a][layout.chore(1, 2 * i - 1)] = share.clone();
            w[a][layout.chore(1, 2 * i)] = share;
        }
    }
    for k in 2..big_k {
        for i in 1..=2 * n {
            w[layout.chain_agent(k, i)][layout.chore(k, i)] = nn.clone();
        }
    }
    for r in 1..=2 * n {
        for c in 1..=2 * n {
            w[layout.top_agent(r, c)][layout.chore(big_k, r)] = game.payoff[r - 1][c - 1].clone();
        }
    }
    for k in 2..=big_k {
        for i in 1..=n {
            let b = layout.balancing_agent(k, i);
            w[b][layout.chore(k, 2 * i - 1)] = params.delta(k).clone();
            w[b][layout.chore(k, 2 * i)] = params.delta(k).clone();
        }
    }

    let inst = Instance::exchange(params.tau.clone(), d, w)
        .map_err(|e| PolymatrixError::BadGame(e.to_string()))?
        .with_metadata(GadgetMetadata::Polymatrix(layout));
    Ok((inst, params))
}

fn layout_of(inst: &Instance) -> Result<&PolymatrixLayout, PolymatrixError> {
    let layout = match &inst.metadata {
        Some(GadgetMetadata::Polymatrix(l)) => l,
        _ => return Err(PolymatrixError::NotGadget("instance carries no polymatrix layout".into())),
    };
    if layout.agents() != inst.agents() || layout.chores() != inst.chores() {
        return Err(PolymatrixError::NotGadget("layout does not match the instance size".into()));
    }
    if !inst.is_exchange() {
        return Err(PolymatrixError::NotGadget("gadget must be an exchange market".into()));
    }
    Ok(layout)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub passed: bool,
    pub detail: String,
}

impl PropertyCheck {
    fn from_failures(failures: Vec<String>, ok: &str) -> Self {
        match failures.first() {
            None => PropertyCheck {
                passed: true,
                detail: ok.to_string(),
            },
            Some(first) => PropertyCheck {
                passed: false,
                detail: if failures.len() > 1 {
                    format!("{first} (and {} more)", failures.len() - 1)
                } else {
                    first.clone()
                },
            },
        }
    }
}

/// The price-dependent entries are absent when no prices were supplied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GadgetPropertyReport {
    pub equal_endowments: PropertyCheck,
    pub price_equality: Option<PropertyCheck>,
    pub fixed_earning: Option<PropertyCheck>,
    pub price_regulation: Option<PropertyCheck>,
    pub reverse_ratio: Option<PropertyCheck>,
}

impl GadgetPropertyReport {
    pub fn passed(&self) -> bool {
        self.equal_endowments.passed
            && [&self.price_equality, &self.fixed_earning, &self.price_regulation, &self.reverse_ratio]
                .iter()
                .all(|c| c.as_ref().is_none_or(|c| c.passed))
    }
}

/// Scales prices so that the first pair of the first layer sums to 2.
pub fn rescale_prices(inst: &Instance, prices: &[f64]) -> Result<Vec<f64>, PolymatrixError> {
    let layout = layout_of(inst)?;
    if prices.len() != layout.chores() {
        return Err(PolymatrixError::DimensionMismatch {
            expected: layout.chores(),
            found: prices.len(),
        });
    }
    let total = layout.pair_total(prices, 1, 1);
    if !(total.is_finite() && total > 0.0) {
        return Err(PolymatrixError::NotGadget("first pair has no positive price".into()));
    }
    Ok(prices.iter().map(|p| p * 2.0 / total).collect())
}

pub fn verify_gadget_properties(
    inst: &Instance,
    prices: Option<&[f64]>,
    tol: f64,
) -> Result<GadgetPropertyReport, PolymatrixError> {
    let layout = layout_of(inst)?;
    let params = layout.params()?;
    let game = layout.game()?;
    let n = layout.n;
    let big_k = layout.levels;
    let nn = int(n as i64);
    let one = Rational::one();

    let mut failures = Vec::new();
    for k in 1..=big_k {
        let expected = if k == 1 {
            &nn + &nn * (&one - params.alpha_top())
        } else {
            &nn + params.delta(k)
        };
        for i in 1..=2 * n {
            let j = layout.chore(k, i);
            let total: Rational = inst.supply(j);
            if total != expected {
                failures.push(format!("chore b^{k}_{i} has total endowment {total}, expected {expected}"));
            }
        }
    }
    let equal_endowments = PropertyCheck::from_failures(failures, "every pair has equal totals");

    let Some(raw) = prices else {
        return Ok(GadgetPropertyReport {
            equal_endowments,
            price_equality: None,
            fixed_earning: None,
            price_regulation: None,
            reverse_ratio: None,
        });
    };
    let p = rescale_prices(inst, raw)?;
    let alpha: Vec<f64> = params.alpha.iter().map(to_f64).collect();
    let alpha_top = alpha[big_k - 1];

    let mut failures = Vec::new();
    for k in 1..=big_k {
        for i in 1..=n {
            let total = layout.pair_total(&p, k, i);
            if (total - 2.0).abs() > tol {
                failures.push(format!("pair {i} of layer {k} sums to {total}"));
            }
        }
    }
    let price_equality = PropertyCheck::from_failures(failures, "all pair totals equal 2");

    let mut failures = Vec::new();
    for col in 1..=2 * n {
        let earned = inst.budget_f64(layout.fixed_agent(col), &p);
        let target = (1.0 - alpha_top) * (2.0 * n as f64 - to_f64(&game.column_sum(col - 1)));
        if (earned - target).abs() > tol * target.abs().max(1.0) {
            failures.push(format!("fixed agent {col} earns {earned}, expected {target}"));
        }
    }
    let fixed_earning = PropertyCheck::from_failures(failures, "fixed agents earn their targets");

    let band = |k: usize| {
        let a = alpha[k - 1];
        ((1.0 - a) / (1.0 + a), (1.0 + a) / (1.0 - a))
    };
    let mut failures = Vec::new();
    for k in 1..=big_k {
        let (lo, hi) = band(k);
        for i in 1..=n {
            let r = layout.pair_ratio(&p, k, i);
            if !(r >= lo - tol && r <= hi + tol) {
                failures.push(format!("pair {i} of layer {k} has ratio {r} outside [{lo}, {hi}]"));
            }
        }
    }
    let price_regulation = PropertyCheck::from_failures(failures, "all ratios inside their bands");

    let mut failures = Vec::new();
    for k in 1..big_k {
        let (lo, hi) = band(k);
        let (next_lo, next_hi) = band(k + 1);
        for i in 1..=n {
            let r = layout.pair_ratio(&p, k, i);
            let next = layout.pair_ratio(&p, k + 1, i);
            if (r - lo).abs() <= tol && (next - next_hi).abs() > tol {
                failures.push(format!("pair {i}: layer {k} at its lower end but layer {} has ratio {next}", k + 1));
            }
            if (r - hi).abs() <= tol && (next - next_lo).abs() > tol {
                failures.push(format!("pair {i}: layer {k} at its upper end but layer {} has ratio {next}", k + 1));
            }
        }
    }
    let reverse_ratio = PropertyCheck::from_failures(failures, "extreme ratios flip between layers");

    Ok(GadgetPropertyReport {
        equal_endowments,
        price_equality: Some(price_equality),
        fixed_earning: Some(fixed_earning),
        price_regulation: Some(price_regulation),
        reverse_ratio: Some(reverse_ratio),
    })
}

/// Reads a strategy vector off the top layer's prices.
pub fn recover_strategy(inst: &Instance, prices: &[f64], tol: f64) -> Result<Vec<f64>, PolymatrixError> {
    let layout = layout_of(inst)?;
    let params = layout.params()?;
    let p = rescale_prices(inst, prices)?;
    let a = to_f64(params.alpha_top());
    (1..=2 * layout.n)
        .map(|i| {
            let price = p[layout.chore(layout.levels, i)];
            if price < 1.0 - a - tol || price > 1.0 + a + tol {
                return Err(PolymatrixError::OutOfBand { chore: i, price });
            }
            Ok(((price - (1.0 - a)) / (2.0 * a)).clamp(0.0, 1.0))
        })
        .collect()
}

/// Prices sitting at the band extremes in every layer. `low_first[i]` picks
/// whether pair `i` starts at the lower extreme in the first layer; the
/// extreme then alternates with each layer.
pub fn endpoint_prices(inst: &Instance, low_first: &[bool]) -> Result<Vec<Rational>, PolymatrixError> {
    let layout = layout_of(inst)?;
    let params = layout.params()?;
    if low_first.len() != layout.n {
        return Err(PolymatrixError::DimensionMismatch {
            expected: layout.n,
            found: low_first.len(),
        });
    }
    let one = Rational::one();
    let mut p = vec![Rational::zero(); layout.chores()];
    for k in 1..=layout.levels {
        let a = params.alpha(k);
        for (idx, &low) in low_first.iter().enumerate() {
            let i = idx + 1;
            let low_here = low == (k % 2 == 1);
            let (x, y) = if low_here { (&one - a, &one + a) } else { (&one + a, &one - a) };
            p[layout.chore(k, 2 * i - 1)] = x;
            p[layout.chore(k, 2 * i)] = y;
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameViolation {
    Negative { index: usize, value: f64 },
    PairSum { pair: usize, sum: f64 },
    /// Column `better` beats its partner by more than `1/n` but the partner is still played.
    Implication { better: usize, worse: usize, gap: f64, weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameVerdict {
    pub passed: bool,
    pub payoffs: Vec<f64>,
    pub violations: Vec<GameViolation>,
}

/// Indices in violations are one-based.
pub fn verify_polymatrix_equilibrium(
    game: &PolymatrixGame,
    x: &[f64],
    slack: f64,
) -> Result<GameVerdict, PolymatrixError> {
    let size = game.size();
    if x.len() != size {
        return Err(PolymatrixError::DimensionMismatch {
            expected: size,
            found: x.len(),
        });
    }
    let m: Vec<Vec<f64>> = game.payoff.iter().map(|row| row.iter().map(to_f64).collect()).collect();
    let payoffs: Vec<f64> = (0..size).map(|c| (0..size).map(|r| x[r] * m[r][c]).sum()).collect();
    let threshold = 1.0 / game.n as f64;
    let mut violations = Vec::new();
    for (i, &v) in x.iter().enumerate() {
        if v < -slack {
            violations.push(GameViolation::Negative { index: i + 1, value: v });
        }
    }
    for pair in 0..game.n {
        let (a, b) = (2 * pair, 2 * pair + 1);
        let sum = x[a] + x[b];
        if (sum - 1.0).abs() > slack {
            violations.push(GameViolation::PairSum { pair: pair + 1, sum });
        }
        for (better, worse) in [(a, b), (b, a)] {
            let gap = payoffs[better] - payoffs[worse];
            if gap > threshold + slack && x[worse] > slack {
                violations.push(GameViolation::Implication {
                    better: better + 1,
                    worse: worse + 1,
                    gap,
                    weight: x[worse],
                });
            }
        }
    }
    Ok(GameVerdict {
        passed: violations.is_empty(),
        payoffs,
        violations,
    })
}

/// Exact form of the strategy formula, handy for rational price vectors.
pub fn recover_strategy_exact(inst: &Instance, prices: &[Rational]) -> Result<Vec<Rational>, PolymatrixError> {
    let layout = layout_of(inst)?;
    let params = layout.params()?;
    let total = &prices[layout.chore(1, 1)] + &prices[layout.chore(1, 2)];
    if !total.is_positive() {
        return Err(PolymatrixError::NotGadget("first pair has no positive price".into()));
    }
    let scale = int(2) / total;
    let a = params.alpha_top();
    let one = Rational::one();
    (1..=2 * layout.n)
        .map(|i| {
            let price = &prices[layout.chore(layout.levels, i)] * &scale;
            if price < &one - a || price > &one + a {
                return Err(PolymatrixError::OutOfBand {
                    chore: i,
                    price: price.to_f64().unwrap_or(f64::NAN),
                });
            }
            Ok((price - (&one - a)) / (a * int(2)))
        })
        .collect()
}
