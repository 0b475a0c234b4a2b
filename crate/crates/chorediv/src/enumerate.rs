//! Exact enumeration of equilibria by trying every pattern of MPB sets.
//!
//! A pattern fixes, for each agent with income, the nonempty set of chores
//! on which its pain per buck is minimal. Each pattern is one linear program
//! in prices and money flows; a strictly positive optimal slack certifies
//! that the pattern is realized by an equilibrium.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::lp::{LinearProgram, LpStatus, Relation, Sense};
use crate::model::{format_rational, normalize_prices, ExactCandidate, Instance, Market, Rational};

pub const DEFAULT_PATTERN_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationLimits {
    pub pattern_cap: u128,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits {
            pattern_cap: DEFAULT_PATTERN_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnumerateError {
    #[error("{count} patterns exceed the cap of {cap}")]
    PatternBudgetExceeded { count: u128, cap: u128 },
    #[error("epsilon must lie in [0, 1)")]
    BadEpsilon,
}

/// MPB set of every agent; empty for agents without income.
pub type Pattern = Vec<Vec<usize>>;

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub pattern: Pattern,
    /// Prices scaled to sum to one.
    pub ray: Vec<Rational>,
    /// A verified equilibrium on this ray. For fixed earnings the prices
    /// carry the scale the earnings dictate, so they need not sum to one.
    pub witness: ExactCandidate,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EquilibriumSet {
    /// One entry per distinct ray, sorted by ray.
    pub equilibria: Vec<EquilibriumPoint>,
    /// Every pattern whose program certified an equilibrium, in search order.
    pub feasible_patterns: Vec<Pattern>,
    pub patterns_tried: usize,
}

impl EquilibriumSet {
    pub fn len(&self) -> usize {
        self.equilibria.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equilibria.is_empty()
    }

    pub fn rays(&self) -> Vec<Vec<Rational>> {
        self.equilibria.iter().map(|e| e.ray.clone()).collect()
    }
}

/// Number of candidate patterns, saturating.
pub fn pattern_count(inst: &Instance) -> u128 {
    let mut total: u128 = 1;
    for i in 0..inst.agents() {
        if !inst.has_income(i) {
            continue;
        }
        let k = inst.finite_chores(i).len() as u32;
        let options = if k >= 127 { u128::MAX } else { (1u128 << k) - 1 };
        total = total.saturating_mul(options);
    }
    total
}

pub fn enumerate_equilibria(
    inst: &Instance,
    epsilon: &Rational,
    limits: EnumerationLimits,
) -> Result<EquilibriumSet, EnumerateError> {
    search(inst, epsilon, limits, false)
}

pub fn exists_equilibrium(inst: &Instance, epsilon: &Rational, limits: EnumerationLimits) -> Result<bool, EnumerateError> {
    Ok(!search(inst, epsilon, limits, true)?.is_empty())
}

fn search(inst: &Instance, epsilon: &Rational, limits: EnumerationLimits, stop_early: bool) -> Result<EquilibriumSet, EnumerateError> {
    if epsilon.is_negative() || *epsilon >= Rational::one() {
        return Err(EnumerateError::BadEpsilon);
    }
    let count = pattern_count(inst);
    if count > limits.pattern_cap {
        return Err(EnumerateError::PatternBudgetExceeded {
            count,
            cap: limits.pattern_cap,
        });
    }
    let n = inst.agents();
    let m = inst.chores();
    let rows: Vec<Vec<usize>> = (0..n)
        .map(|i| if inst.has_income(i) { inst.finite_chores(i) } else { Vec::new() })
        .collect();
    // reach[i] = chores some agent at index >= i could still cover.
    let mut reach = vec![vec![false; m]; n + 1];
    for i in (0..n).rev() {
        reach[i] = reach[i + 1].clone();
        for &j in &rows[i] {
            reach[i][j] = true;
        }
    }

    let mut out = EquilibriumSet::default();
    let mut seen = BTreeSet::new();
    let mut pattern: Pattern = vec![Vec::new(); n];
    let mut covered = vec![0usize; m];
    let mut ctx = Search {
        inst,
        epsilon,
        rows: &rows,
        reach: &reach,
        stop_early,
        out: &mut out,
        seen: &mut seen,
    };
    ctx.visit(0, &mut pattern, &mut covered);
    out.equilibria.sort_by(|a, b| a.ray.cmp(&b.ray));
    Ok(out)
}

struct Search<'a> {
    inst: &'a Instance,
    epsilon: &'a Rational,
    rows: &'a [Vec<usize>],
    reach: &'a [Vec<bool>],
    stop_early: bool,
    out: &'a mut EquilibriumSet,
    seen: &'a mut BTreeSet<Vec<Rational>>,
}

impl Search<'_> {
    /// Returns false once the search should stop.
    fn visit(&mut self, agent: usize, pattern: &mut Pattern, covered: &mut [usize]) -> bool {
        // Every chore has positive supply and price, so somebody must do it.
        if covered.iter().zip(&self.reach[agent]).any(|(&c, &r)| c == 0 && !r) {
            return true;
        }
        if agent == self.rows.len() {
            self.out.patterns_tried += 1;
            if let Some(witness) = solve_pattern(self.inst, self.epsilon, pattern) {
                self.out.feasible_patterns.push(pattern.clone());
                let ray = normalize_prices(&witness.prices).expect("positive prices");
                if self.seen.insert(ray.clone()) {
                    self.out.equilibria.push(EquilibriumPoint {
                        pattern: pattern.clone(),
                        ray,
                        witness,
                    });
                }
                if self.stop_early {
                    return false;
                }
            }
            return true;
        }
        let row = &self.rows[agent];
        if row.is_empty() {
            return self.visit(agent + 1, pattern, covered);
        }
        for mask in 1u64..(1u64 << row.len()) {
            let set: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &j)| j)
                .collect();
            for &j in &set {
                covered[j] += 1;
            }
            pattern[agent] = set;
            let go_on = self.visit(agent + 1, pattern, covered);
            for &j in &pattern[agent] {
                covered[j] -= 1;
            }
            pattern[agent].clear();
            if !go_on {
                return false;
            }
        }
        true
    }
}

/// Solves the program for one pattern and returns a verified witness when
/// the pattern is realized by an equilibrium.
pub fn solve_pattern(inst: &Instance, epsilon: &Rational, pattern: &Pattern) -> Option<ExactCandidate> {
    let n = inst.agents();
    let m = inst.chores();
    let mut flow_vars = Vec::new();
    for (i, set) in pattern.iter().enumerate() {
        for &j in set {
            flow_vars.push((i, j));
        }
    }
    let f0 = m;
    let slack = m + flow_vars.len();
    let mut lp = LinearProgram::new(slack + 1, Sense::Maximize);
    lp.set_objective_term(slack, Rational::one());
    lp.set_bounds(slack, Some(Rational::zero()), Some(Rational::one()));
    let d = |i: usize, j: usize| inst.disutility[i][j].clone().expect("pattern chores are finite");

    for (i, set) in pattern.iter().enumerate() {
        let Some(&j0) = set.first() else { continue };
        for &j in &set[1..] {
            // d(i,j) / p_j = d(i,j0) / p_j0
            lp.add_terms(&[(j0, d(i, j)), (j, -d(i, j0))], Relation::Eq, Rational::zero());
        }
        for k in inst.finite_chores(i) {
            if set.contains(&k) {
                continue;
            }
            // d(i,j0) / p_j0 < d(i,k) / p_k
            lp.add_terms(
                &[(k, d(i, j0)), (j0, -d(i, k)), (slack, Rational::one())],
                Relation::Le,
                Rational::zero(),
            );
        }
    }

    let mut by_agent: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); n];
    let mut by_chore: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); m];
    for (v, &(i, j)) in flow_vars.iter().enumerate() {
        by_agent[i].push((f0 + v, Rational::one()));
        by_chore[j].push((f0 + v, Rational::one()));
    }
    for (i, terms) in by_agent.iter_mut().enumerate() {
        match &inst.market {
            Market::Exchange { endowment } => {
                for (j, w) in endowment[i].iter().enumerate() {
                    if !w.is_zero() {
                        terms.push((j, -w));
                    }
                }
                lp.add_terms(terms, Relation::Eq, Rational::zero());
            }
            Market::FixedEarnings { earning, .. } => {
                lp.add_terms(terms, Relation::Eq, earning[i].clone());
            }
        }
    }
    let keep = Rational::one() - epsilon;
    for (j, terms) in by_chore.iter().enumerate() {
        let s = inst.supply(j);
        if epsilon.is_zero() {
            let mut row = terms.clone();
            row.push((j, -s));
            lp.add_terms(&row, Relation::Eq, Rational::zero());
        } else {
            let mut lower = terms.clone();
            lower.push((j, -(&keep * &s)));
            lp.add_terms(&lower, Relation::Ge, Rational::zero());
            let mut upper: Vec<(usize, Rational)> = terms.iter().map(|(v, c)| (*v, c * &keep)).collect();
            upper.push((j, -s));
            lp.add_terms(&upper, Relation::Le, Rational::zero());
        }
        lp.add_terms(&[(j, Rational::one()), (slack, -Rational::one())], Relation::Ge, Rational::zero());
    }
    if inst.is_exchange() {
        let all: Vec<(usize, Rational)> = (0..m).map(|j| (j, Rational::one())).collect();
        lp.add_terms(&all, Relation::Eq, Rational::one());
    }

    let res = lp.solve().expect("well-formed program");
    if res.status != LpStatus::Optimal || !res.value.is_positive() {
        return None;
    }
    let prices = res.point[..m].to_vec();
    let mut flow = vec![vec![Rational::zero(); m]; n];
    for (v, &(i, j)) in flow_vars.iter().enumerate() {
        flow[i][j] = res.point[f0 + v].clone();
    }
    Some(ExactCandidate::from_flow(prices, flow))
}

#[derive(Serialize)]
struct PointJson {
    pattern: Pattern,
    ray: Vec<String>,
    prices: Vec<String>,
    allocation: Vec<Vec<String>>,
    flow: Vec<Vec<String>>,
}

impl EquilibriumSet {
    pub fn to_json(&self) -> serde_json::Value {
        let strs = |v: &[Rational]| v.iter().map(format_rational).collect::<Vec<_>>();
        let points: Vec<PointJson> = self
            .equilibria
            .iter()
            .map(|e| PointJson {
                pattern: e.pattern.clone(),
                ray: strs(&e.ray),
                prices: strs(&e.witness.prices),
                allocation: e.witness.allocation.iter().map(|r| strs(r)).collect(),
                flow: e.witness.flow_or_derived().iter().map(|r| strs(r)).collect(),
            })
            .collect();
        serde_json::json!({
            "count": self.len(),
            "patterns_tried": self.patterns_tried,
            "feasible_patterns": self.feasible_patterns.len(),
            "equilibria": points,
        })
    }
}
