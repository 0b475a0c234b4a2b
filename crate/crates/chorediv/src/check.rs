//! Minimum-pain-per-buck sets, equilibrium verification, envy and Pareto
//! checks.

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::lp::{LinearProgram, LpStatus, Relation, Sense};
use crate::model::{format_rational, AnyCandidate, ExactCandidate, FloatCandidate, Instance, ModelError, Rational};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("epsilon must lie in [0, 1)")]
    BadEpsilon,
    #[error("allocation does not complete chore {0} exactly")]
    NotFullyAssigned(usize),
    #[error("agent {agent} is assigned chore {chore} it cannot do")]
    SupportViolation { agent: usize, chore: usize },
}

impl From<ModelError> for CheckError {
    fn from(e: ModelError) -> Self {
        CheckError::DimensionMismatch(e.to_string())
    }
}

/// Chores attaining an agent's minimum disutility per unit of money, and
/// that minimum. Empty when the agent has no finite chore with a positive
/// price.
#[derive(Debug, Clone, PartialEq)]
pub struct MpbSet<T> {
    pub chores: Vec<usize>,
    pub ratio: Option<T>,
}

impl<T> MpbSet<T> {
    pub fn is_empty(&self) -> bool {
        self.chores.is_empty()
    }
}

pub fn mpb_sets(inst: &Instance, prices: &[Rational]) -> Vec<MpbSet<Rational>> {
    (0..inst.agents())
        .map(|i| {
            let mut best: Option<Rational> = None;
            let mut chores = Vec::new();
            for (j, p) in prices.iter().enumerate() {
                let Some(d) = &inst.disutility[i][j] else { continue };
                if !p.is_positive() {
                    continue;
                }
                let r = d / p;
                match &best {
                    Some(b) if r > *b => {}
                    Some(b) if r == *b => chores.push(j),
                    _ => {
                        best = Some(r);
                        chores = vec![j];
                    }
                }
            }
            MpbSet { chores, ratio: best }
        })
        .collect()
}

/// Float MPB sets; a chore belongs when its ratio is within `rel_tol` of
/// the minimum.
pub fn mpb_sets_f64(inst: &Instance, prices: &[f64], rel_tol: f64) -> Vec<MpbSet<f64>> {
    (0..inst.agents())
        .map(|i| {
            let ratios: Vec<(usize, f64)> = prices
                .iter()
                .enumerate()
                .filter_map(|(j, &p)| {
                    let d = inst.disutility[i][j].as_ref()?;
                    (p > 0.0).then(|| (j, crate::model::to_f64(d) / p))
                })
                .collect();
            let Some(best) = ratios.iter().map(|r| r.1).reduce(f64::min) else {
                return MpbSet {
                    chores: Vec::new(),
                    ratio: None,
                };
            };
            MpbSet {
                chores: ratios
                    .iter()
                    .filter(|r| r.1 <= best * (1.0 + rel_tol))
                    .map(|r| r.0)
                    .collect(),
                ratio: Some(best),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ZeroPrice { chore: usize },
    NegativeAmount { agent: usize, chore: usize },
    Threshold { agent: usize, chore: usize },
    NotMpb { agent: usize, chore: usize },
    Budget { agent: usize, earned: String, budget: String },
    FlowMismatch { agent: usize, chore: usize },
    Clearing { chore: usize, done: String, supply: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub mode: &'static str,
    pub epsilon: String,
    pub mpb_ok: bool,
    pub threshold_ok: bool,
    pub budget_ok: bool,
    pub clearing_ok: bool,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    fn new(mode: &'static str, epsilon: String) -> Self {
        VerificationReport {
            mode,
            epsilon,
            mpb_ok: true,
            threshold_ok: true,
            budget_ok: true,
            clearing_ok: true,
            violations: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.mpb_ok && self.threshold_ok && self.budget_ok && self.clearing_ok
    }

    fn push(&mut self, v: Violation) {
        match &v {
            Violation::ZeroPrice { .. } | Violation::NotMpb { .. } => self.mpb_ok = false,
            Violation::NegativeAmount { .. } | Violation::Threshold { .. } => self.threshold_ok = false,
            Violation::Budget { .. } | Violation::FlowMismatch { .. } => self.budget_ok = false,
            Violation::Clearing { .. } => self.clearing_ok = false,
        }
        self.violations.push(v);
    }
}

/// Tolerances for float candidates: `mpb` is relative and also governs the
/// budget equation, `clearing` is relative to each chore's supply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatTolerances {
    pub mpb: f64,
    pub clearing: f64,
}

impl Default for FloatTolerances {
    fn default() -> Self {
        FloatTolerances {
            mpb: 1e-9,
            clearing: 1e-7,
        }
    }
}

impl FloatTolerances {
    pub fn uniform(tol: f64) -> Self {
        FloatTolerances { mpb: tol, clearing: tol }
    }
}

fn check_epsilon(eps: &Rational) -> Result<(), CheckError> {
    if eps.is_negative() || *eps >= Rational::one() {
        return Err(CheckError::BadEpsilon);
    }
    Ok(())
}

pub fn verify_equilibrium(
    inst: &Instance,
    cand: &AnyCandidate,
    epsilon: &Rational,
    tol: FloatTolerances,
) -> Result<VerificationReport, CheckError> {
    match cand {
        AnyCandidate::Exact(c) => verify_exact(inst, c, epsilon),
        AnyCandidate::Float(c) => {
            check_epsilon(epsilon)?;
            verify_float(inst, c, crate::model::to_f64(epsilon), tol)
        }
    }
}

/// Exact check of the three equilibrium conditions, with chores allowed to
/// be done within a factor `1 - epsilon` of their supply.
pub fn verify_exact(inst: &Instance, cand: &ExactCandidate, epsilon: &Rational) -> Result<VerificationReport, CheckError> {
    check_epsilon(epsilon)?;
    let (n, m) = (inst.agents(), inst.chores());
    cand.check_dims(n, m)?;
    let mut rep = VerificationReport::new("exact", format_rational(epsilon));
    let p = &cand.prices;
    let x = &cand.allocation;
    for (j, pj) in p.iter().enumerate() {
        if !pj.is_positive() {
            rep.push(Violation::ZeroPrice { chore: j });
        }
    }
    let mpb = mpb_sets(inst, p);
    for i in 0..n {
        for j in 0..m {
            if x[i][j].is_negative() {
                rep.push(Violation::NegativeAmount { agent: i, chore: j });
            } else if x[i][j].is_positive() {
                if inst.disutility[i][j].is_none() {
                    rep.push(Violation::Threshold { agent: i, chore: j });
                } else if !mpb[i].chores.contains(&j) {
                    rep.push(Violation::NotMpb { agent: i, chore: j });
                }
            }
        }
        let earned: Rational = x[i].iter().zip(p).map(|(a, b)| a * b).sum();
        let budget = inst.budget(i, p);
        if earned != budget {
            rep.push(Violation::Budget {
                agent: i,
                earned: format_rational(&earned),
                budget: format_rational(&budget),
            });
        }
        if let Some(f) = &cand.flow {
            for j in 0..m {
                if f[i][j] != &x[i][j] * &p[j] {
                    rep.push(Violation::FlowMismatch { agent: i, chore: j });
                }
            }
        }
    }
    let keep = Rational::one() - epsilon;
    for j in 0..m {
        let done: Rational = x.iter().map(|row| &row[j]).sum();
        let s = inst.supply(j);
        if done < &keep * &s || &done * &keep > s {
            rep.push(Violation::Clearing {
                chore: j,
                done: format_rational(&done),
                supply: format_rational(&s),
            });
        }
    }
    Ok(rep)
}

pub fn verify_float(
    inst: &Instance,
    cand: &FloatCandidate,
    epsilon: f64,
    tol: FloatTolerances,
) -> Result<VerificationReport, CheckError> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(CheckError::BadEpsilon);
    }
    let (n, m) = (inst.agents(), inst.chores());
    cand.check_dims(n, m)?;
    let mut rep = VerificationReport::new("float", epsilon.to_string());
    let p = &cand.prices;
    let x = &cand.allocation;
    let supplies: Vec<f64> = inst.supplies().iter().map(crate::model::to_f64).collect();
    let money_scale = p.iter().zip(&supplies).map(|(a, b)| a * b).fold(0.0, f64::max);
    for (j, &pj) in p.iter().enumerate() {
        if pj <= 0.0 || !pj.is_finite() {
            rep.push(Violation::ZeroPrice { chore: j });
        }
    }
    let mpb = mpb_sets_f64(inst, p, tol.mpb);
    for i in 0..n {
        for j in 0..m {
            if x[i][j] < 0.0 || x[i][j].is_nan() {
                rep.push(Violation::NegativeAmount { agent: i, chore: j });
            } else if x[i][j] > 0.0 {
                if inst.disutility[i][j].is_none() {
                    rep.push(Violation::Threshold { agent: i, chore: j });
                } else if !mpb[i].chores.contains(&j) {
                    rep.push(Violation::NotMpb { agent: i, chore: j });
                }
            }
        }
        let earned: f64 = x[i].iter().zip(p).map(|(a, b)| a * b).sum();
        let budget = inst.budget_f64(i, p);
        let scale = budget.abs().max(earned.abs()).max(money_scale);
        if (earned - budget).abs() > tol.mpb * scale {
            rep.push(Violation::Budget {
                agent: i,
                earned: earned.to_string(),
                budget: budget.to_string(),
            });
        }
        if let Some(f) = &cand.flow {
            for j in 0..m {
                let want = x[i][j] * p[j];
                if (f[i][j] - want).abs() > tol.mpb * want.abs().max(money_scale) {
                    rep.push(Violation::FlowMismatch { agent: i, chore: j });
                }
            }
        }
    }
    let keep = 1.0 - epsilon;
    for (j, &s) in supplies.iter().enumerate() {
        let done: f64 = x.iter().map(|row| row[j]).sum();
        if done < keep * s * (1.0 - tol.clearing) || done > s / keep * (1.0 + tol.clearing) {
            rep.push(Violation::Clearing {
                chore: j,
                done: done.to_string(),
                supply: s.to_string(),
            });
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvyStatus {
    Holds,
    Violated,
    /// One of the two agents has zero budget, so the weighted comparison is
    /// undefined.
    ZeroBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvyPair {
    pub agent: usize,
    pub other: usize,
    pub status: EnvyStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    #[serde(serialize_with = "ser_rationals")]
    pub profile: Vec<Rational>,
    pub zero_budget: Vec<usize>,
    pub envy: Vec<EnvyPair>,
}

impl FairnessReport {
    pub fn envy_free(&self) -> bool {
        self.envy.iter().all(|e| e.status != EnvyStatus::Violated)
    }
}

fn ser_rationals<S: serde::Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(format_rational))
}

/// Disutility of `agent` for the bundle `row`; `None` when the bundle holds
/// a chore the agent cannot do.
fn bundle_cost(inst: &Instance, agent: usize, row: &[Rational]) -> Option<Rational> {
    let mut total = Rational::zero();
    for (j, x) in row.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        total += inst.disutility[agent][j].as_ref()? * x;
    }
    Some(total)
}

/// Disutility profile and budget-weighted envy between every ordered pair.
pub fn fairness_report(inst: &Instance, cand: &ExactCandidate) -> Result<FairnessReport, CheckError> {
    let n = inst.agents();
    cand.check_dims(n, inst.chores())?;
    let x = &cand.allocation;
    let profile = (0..n)
        .map(|i| {
            bundle_cost(inst, i, &x[i]).ok_or_else(|| {
                let chore = (0..inst.chores())
                    .find(|&j| !x[i][j].is_zero() && !inst.finite(i, j))
                    .unwrap_or(0);
                CheckError::SupportViolation { agent: i, chore }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let budgets: Vec<Rational> = (0..n).map(|i| inst.budget(i, &cand.prices)).collect();
    let zero_budget: Vec<usize> = (0..n).filter(|&i| budgets[i].is_zero()).collect();
    let mut envy = Vec::new();
    for i in 0..n {
        for k in 0..n {
            if i == k {
                continue;
            }
            let status = if budgets[i].is_zero() || budgets[k].is_zero() {
                EnvyStatus::ZeroBudget
            } else {
                match bundle_cost(inst, i, &x[k]) {
                    None => EnvyStatus::Holds,
                    Some(other) => {
                        if &profile[i] * &budgets[k] <= other * &budgets[i] {
                            EnvyStatus::Holds
                        } else {
                            EnvyStatus::Violated
                        }
                    }
                }
            };
            envy.push(EnvyPair { agent: i, other: k, status });
        }
    }
    Ok(FairnessReport {
        profile,
        zero_budget,
        envy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParetoOutcome {
    Optimal,
    /// `witness` gives every agent at most its current disutility and
    /// `agent` strictly less.
    Dominated { agent: usize, witness: Vec<Vec<Rational>> },
}

/// Certifies Pareto optimality of a complete allocation by minimizing each
/// agent's disutility while capping everybody else's at its current level.
pub fn check_pareto(inst: &Instance, allocation: &[Vec<Rational>]) -> Result<ParetoOutcome, CheckError> {
    let (n, m) = (inst.agents(), inst.chores());
    if allocation.len() != n || allocation.iter().any(|r| r.len() != m) {
        return Err(CheckError::DimensionMismatch(format!("allocation must be {n} x {m}")));
    }
    for (i, row) in allocation.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            if x.is_negative() || (x.is_positive() && !inst.finite(i, j)) {
                return Err(CheckError::SupportViolation { agent: i, chore: j });
            }
        }
    }
    for j in 0..m {
        let done: Rational = allocation.iter().map(|r| &r[j]).sum();
        if done != inst.supply(j) {
            return Err(CheckError::NotFullyAssigned(j));
        }
    }
    let profile: Vec<Rational> = (0..n)
        .map(|i| bundle_cost(inst, i, &allocation[i]).expect("support checked"))
        .collect();

    let mut vars = Vec::new();
    let mut var_of = vec![vec![None; m]; n];
    for i in 0..n {
        for j in 0..m {
            if inst.finite(i, j) {
                var_of[i][j] = Some(vars.len());
                vars.push((i, j));
            }
        }
    }
    for t in 0..n {
        let mut lp = LinearProgram::new(vars.len(), Sense::Minimize);
        for (v, &(i, j)) in vars.iter().enumerate() {
            if i == t {
                lp.set_objective_term(v, inst.disutility[i][j].clone().expect("finite"));
            }
        }
        for j in 0..m {
            let terms: Vec<(usize, Rational)> = (0..n)
                .filter_map(|i| var_of[i][j].map(|v| (v, Rational::one())))
                .collect();
            lp.add_terms(&terms, Relation::Eq, inst.supply(j));
        }
        for i in 0..n {
            let terms: Vec<(usize, Rational)> = (0..m)
                .filter_map(|j| var_of[i][j].map(|v| (v, inst.disutility[i][j].clone().expect("finite"))))
                .collect();
            lp.add_terms(&terms, Relation::Le, profile[i].clone());
        }
        let res = lp.solve().expect("well-formed program");
        // The allocation itself is feasible, so the program is never infeasible.
        if res.status == LpStatus::Optimal && res.value < profile[t] {
            let mut witness = vec![vec![Rational::zero(); m]; n];
            for (v, &(i, j)) in vars.iter().enumerate() {
                witness[i][j] = res.point[v].clone();
            }
            return Ok(ParetoOutcome::Dominated { agent: t, witness });
        }
    }
    Ok(ParetoOutcome::Optimal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{int, rat, Candidate};

    fn fin(v: i64) -> Option<Rational> {
        Some(int(v))
    }

    fn warm_up() -> Instance {
        Instance::fixed_earnings(
            int(100),
            vec![vec![fin(1), fin(3)], vec![None, fin(1)]],
            vec![int(1), int(1)],
            None,
        )
        .unwrap()
    }

    fn intro(l: i64) -> Instance {
        let h = rat(1, 2);
        Instance::exchange(
            int(l + 1),
            vec![vec![fin(1), fin(l)], vec![fin(l), fin(1)]],
            vec![vec![h.clone(), h.clone()], vec![h.clone(), h]],
        )
        .unwrap()
    }

    fn cand(p: Vec<Rational>, x: Vec<Vec<Rational>>) -> ExactCandidate {
        Candidate {
            prices: p,
            allocation: x,
            flow: None,
        }
    }

    #[test]
    fn mpb_examples() {
        let sets = mpb_sets(&warm_up(), &[rat(1, 2), rat(3, 2)]);
        assert_eq!(sets[0].chores, vec![0, 1]);
        assert_eq!(sets[0].ratio, Some(int(2)));
        assert_eq!(sets[1].chores, vec![1]);
        let ex1 = Instance::exchange(
            int(10),
            vec![vec![fin(1), None], vec![fin(1), fin(2)]],
            vec![vec![int(1), int(1)], vec![int(1), int(1)]],
        )
        .unwrap();
        assert_eq!(mpb_sets(&ex1, &[int(1), int(1)])[1].chores, vec![0]);
        let lone = Instance::exchange(int(2), vec![vec![fin(1)]], vec![vec![int(1)]]).unwrap();
        assert_eq!(mpb_sets(&lone, &[rat(7, 3)])[0].chores, vec![0]);
        // Zero prices never make it in.
        assert!(mpb_sets(&lone, &[int(0)])[0].is_empty());
    }

    #[test]
    fn warm_up_identity_assignment_passes() {
        let c = cand(vec![int(1), int(1)], vec![vec![int(1), int(0)], vec![int(0), int(1)]]);
        let rep = verify_exact(&warm_up(), &c, &int(0)).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn warm_up_second_equilibrium_passes() {
        let c = cand(
            vec![rat(1, 2), rat(3, 2)],
            vec![vec![int(1), rat(1, 3)], vec![int(0), rat(2, 3)]],
        );
        assert!(verify_exact(&warm_up(), &c, &int(0)).unwrap().passed());
    }

    #[test]
    fn warm_up_wrong_chore_fails_mpb() {
        let c = cand(vec![int(1), int(1)], vec![vec![int(0), int(1)], vec![int(0), int(0)]]);
        let rep = verify_exact(&warm_up(), &c, &int(0)).unwrap();
        assert!(!rep.mpb_ok);
        assert!(rep.violations.contains(&Violation::NotMpb { agent: 0, chore: 1 }));
    }

    #[test]
    fn zero_price_and_dimension_errors() {
        let c = cand(vec![int(0), int(2)], vec![vec![int(0), int(1)], vec![int(0), int(1)]]);
        assert!(!verify_exact(&warm_up(), &c, &int(0)).unwrap().mpb_ok);
        let short = cand(vec![int(1)], vec![vec![int(1)], vec![int(0)]]);
        assert!(matches!(
            verify_exact(&warm_up(), &short, &int(0)),
            Err(CheckError::DimensionMismatch(_))
        ));
        let ok = cand(vec![int(1), int(1)], vec![vec![int(1), int(0)], vec![int(0), int(1)]]);
        assert!(matches!(verify_exact(&warm_up(), &ok, &int(1)), Err(CheckError::BadEpsilon)));
    }

    #[test]
    fn approximate_clearing_band() {
        // Agent 0 does 9/10 of chore 0 at price 10/9 and earns its budget of 1.
        let c = cand(vec![rat(10, 9), int(1)], vec![vec![rat(9, 10), int(0)], vec![int(0), int(1)]]);
        assert!(!verify_exact(&warm_up(), &c, &int(0)).unwrap().clearing_ok);
        assert!(verify_exact(&warm_up(), &c, &rat(1, 10)).unwrap().passed());
    }

    #[test]
    fn float_verification() {
        let c = FloatCandidate {
            prices: vec![0.5, 1.5],
            allocation: vec![vec![1.0, 1.0 / 3.0], vec![0.0, 2.0 / 3.0]],
            flow: None,
        };
        let rep = verify_float(&warm_up(), &c, 0.0, FloatTolerances::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn profiles_of_intro_equilibria() {
        let inst = intro(3);
        let x1 = cand(vec![rat(1, 2), rat(1, 2)], vec![vec![int(1), int(0)], vec![int(0), int(1)]]);
        assert_eq!(fairness_report(&inst, &x1).unwrap().profile, vec![int(1), int(1)]);
        let x2 = cand(
            vec![rat(1, 4), rat(3, 4)],
            vec![vec![int(1), rat(1, 3)], vec![int(0), rat(2, 3)]],
        );
        assert!(verify_exact(&inst, &x2, &int(0)).unwrap().passed());
        let rep = fairness_report(&inst, &x2).unwrap();
        assert_eq!(rep.profile, vec![int(2), rat(2, 3)]);
        assert!(rep.envy_free());
    }

    #[test]
    fn warm_up_equilibria_are_envy_free() {
        let c = cand(
            vec![rat(1, 2), rat(3, 2)],
            vec![vec![int(1), rat(1, 3)], vec![int(0), rat(2, 3)]],
        );
        let rep = fairness_report(&warm_up(), &c).unwrap();
        assert!(rep.envy_free());
        assert_eq!(rep.envy.len(), 2);
    }

    #[test]
    fn zero_budget_pairs_are_flagged() {
        let inst = Instance::fixed_earnings(
            int(10),
            vec![vec![fin(1)], vec![fin(1)]],
            vec![int(1), int(0)],
            None,
        )
        .unwrap();
        let c = cand(vec![int(1)], vec![vec![int(1)], vec![int(0)]]);
        let rep = fairness_report(&inst, &c).unwrap();
        assert_eq!(rep.zero_budget, vec![1]);
        assert!(rep.envy.iter().all(|e| e.status == EnvyStatus::ZeroBudget));
    }

    #[test]
    fn pareto_checks() {
        let inst = intro(3);
        let x1 = vec![vec![int(1), int(0)], vec![int(0), int(1)]];
        assert_eq!(check_pareto(&inst, &x1).unwrap(), ParetoOutcome::Optimal);
        let half = rat(1, 2);
        let split = vec![vec![half.clone(), half.clone()], vec![half.clone(), half]];
        match check_pareto(&inst, &split).unwrap() {
            ParetoOutcome::Dominated { agent, witness } => {
                let d = |i: usize, row: &Vec<Rational>| bundle_cost(&inst, i, row).unwrap();
                assert!(d(0, &witness[0]) <= int(2));
                assert!(d(1, &witness[1]) <= int(2));
                assert!(d(agent, &witness[agent]) < int(2));
            }
            ParetoOutcome::Optimal => panic!("even split is dominated"),
        }
        let lone = Instance::exchange(int(2), vec![vec![fin(1)]], vec![vec![int(1)]]).unwrap();
        assert_eq!(check_pareto(&lone, &[vec![int(1)]]).unwrap(), ParetoOutcome::Optimal);
        let partial = vec![vec![int(1), int(0)], vec![int(0), int(0)]];
        assert_eq!(check_pareto(&warm_up(), &partial), Err(CheckError::NotFullyAssigned(1)));
        let bad = vec![vec![int(0), int(0)], vec![int(1), int(1)]];
        assert_eq!(
            check_pareto(&warm_up(), &bad),
            Err(CheckError::SupportViolation { agent: 1, chore: 0 })
        );
    }
}
