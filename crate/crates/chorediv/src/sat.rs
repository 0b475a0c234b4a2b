//! Fixed-earnings markets built from 3-CNF formulas.
//!
//! Every variable gets two agents and two chores whose prices are either
//! `(1, 1)` (true) or `(1/2, 3/2)` (false). Every clause gets one chore and
//! one agent per literal plus a clause-wide agent whose earning is just
//! short of what the clause chores cost when all literals are false. The
//! market has an equilibrium exactly when the formula is satisfiable.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::model::{int, rat, AnyCandidate, ExactCandidate, GadgetMetadata, Instance, Market, RatStr, Rational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SatError {
    #[error("bad formula: {0}")]
    BadFormula(String),
    #[error("bad gadget parameters: {0}")]
    BadParams(String),
    #[error("the assignment does not satisfy the formula")]
    NotSatisfying,
    #[error("not a formula gadget: {0}")]
    NotGadget(String),
    #[error("earning of agent {agent} times the scale is not a nonnegative integer")]
    NonIntegralEarnings { agent: usize },
    #[error("{0}")]
    BadInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    /// Zero-based variable index.
    pub var: usize,
    pub negated: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal { var, negated: false }
    }

    pub fn neg(var: usize) -> Self {
        Literal { var, negated: true }
    }

    /// Signed one-based form: `3` is x3, `-3` is not x3.
    pub fn from_dimacs(v: i64) -> Option<Self> {
        if v == 0 {
            return None;
        }
        Some(Literal {
            var: v.unsigned_abs() as usize - 1,
            negated: v < 0,
        })
    }

    pub fn to_dimacs(self) -> i64 {
        let v = self.var as i64 + 1;
        if self.negated {
            -v
        } else {
            v
        }
    }

    pub fn holds(self, assignment: &[bool]) -> bool {
        assignment[self.var] != self.negated
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfFormula {
    pub variables: usize,
    pub clauses: Vec<Vec<Literal>>,
}

impl CnfFormula {
    /// Formula whose clauses have exactly three literals on distinct
    /// variables.
    pub fn new(variables: usize, clauses: Vec<Vec<Literal>>) -> Result<Self, SatError> {
        Self::build(variables, clauses, 3..=3)
    }

    /// Like [`CnfFormula::new`] but clauses may have one to three literals.
    /// The gadget for such formulas is small enough to enumerate.
    pub fn with_short_clauses(variables: usize, clauses: Vec<Vec<Literal>>) -> Result<Self, SatError> {
        Self::build(variables, clauses, 1..=3)
    }

    fn build(variables: usize, clauses: Vec<Vec<Literal>>, width: std::ops::RangeInclusive<usize>) -> Result<Self, SatError> {
        for (r, c) in clauses.iter().enumerate() {
            if !width.contains(&c.len()) {
                return Err(SatError::BadFormula(format!("clause {} has {} literals", r + 1, c.len())));
            }
            for (a, l) in c.iter().enumerate() {
                if l.var >= variables {
                    return Err(SatError::BadFormula(format!("clause {} uses unknown variable {}", r + 1, l.var + 1)));
                }
                if c[..a].iter().any(|o| o.var == l.var) {
                    return Err(SatError::BadFormula(format!("clause {} repeats variable {}", r + 1, l.var + 1)));
                }
            }
        }
        Ok(CnfFormula { variables, clauses })
    }

    /// Parses DIMACS CNF. Comment lines start with `c`.
    pub fn parse_dimacs(text: &str) -> Result<Self, SatError> {
        let mut variables = None;
        let mut expected = None;
        let mut clauses = Vec::new();
        let mut current = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('p') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 || parts[0] != "cnf" {
                    return Err(SatError::BadFormula(format!("bad header {line:?}")));
                }
                let parse = |s: &str| s.parse::<usize>().map_err(|_| SatError::BadFormula(format!("bad header {line:?}")));
                variables = Some(parse(parts[1])?);
                expected = Some(parse(parts[2])?);
                continue;
            }
            for tok in line.split_whitespace() {
                let v: i64 = tok.parse().map_err(|_| SatError::BadFormula(format!("bad literal {tok:?}")))?;
                match Literal::from_dimacs(v) {
                    Some(l) => current.push(l),
                    None => clauses.push(std::mem::take(&mut current)),
                }
            }
        }
        if !current.is_empty() {
            clauses.push(current);
        }
        let variables = variables.ok_or_else(|| SatError::BadFormula("missing p cnf header".into()))?;
        if expected.is_some_and(|e| e != clauses.len()) {
            return Err(SatError::BadFormula(format!(
                "header announces {} clauses, found {}",
                expected.unwrap_or(0),
                clauses.len()
            )));
        }
        Self::new(variables, clauses)
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.variables, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                out += &format!("{} ", l.to_dimacs());
            }
            out += "0\n";
        }
        out
    }

    pub fn evaluate(&self, assignment: &[bool]) -> bool {
        self.clauses.iter().all(|c| c.iter().any(|l| l.holds(assignment)))
    }
}

/// `eps` is the base earning of a literal agent, `eps_prime` the shortfall
/// of a clause agent, `delta` the target slack in the hardness bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SatGadgetParams {
    pub eps: Rational,
    pub eps_prime: Rational,
    pub tau: Rational,
    pub delta: Rational,
}

impl Default for SatGadgetParams {
    fn default() -> Self {
        SatGadgetParams {
            eps: rat(1, 10),
            eps_prime: rat(1, 30),
            tau: int(100),
            delta: rat(1, 30),
        }
    }
}

/// Largest allowed `1 / eps`.
pub const MAX_INVERSE_EPS: i64 = 1_000_000;

impl SatGadgetParams {
    pub fn validate(&self) -> Result<(), SatError> {
        let bad = |m: &str| Err(SatError::BadParams(m.into()));
        if !self.eps.is_positive() || self.eps >= Rational::one() {
            return bad("eps must lie in (0, 1)");
        }
        if self.eps.recip() > int(MAX_INVERSE_EPS) {
            return bad("eps is too small");
        }
        if !self.eps_prime.is_positive() || self.eps_prime >= &self.eps / int(2) {
            return bad("eps_prime must lie in (0, eps/2)");
        }
        if &self.eps_prime / (int(6) * &self.eps) <= rat(1, 12) - &self.delta {
            return bad("eps_prime / (6 eps) must exceed 1/12 - delta");
        }
        if self.tau <= int(3) {
            return bad("tau must exceed every finite disutility (3)");
        }
        Ok(())
    }

    /// The approximation the hardness argument rules out for unsatisfiable
    /// formulas: no equilibrium clears chores within `1/12 - delta`.
    pub fn hardness_epsilon(&self) -> Rational {
        rat(1, 12) - &self.delta
    }
}

/// Positions of the gadget's agents and chores, stored with the instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatLayout {
    pub variables: usize,
    /// Clauses as signed one-based literals.
    pub clauses: Vec<Vec<i64>>,
    pub eps: RatStr,
    pub eps_prime: RatStr,
    pub agent_labels: Vec<String>,
    pub chore_labels: Vec<String>,
}

impl SatLayout {
    fn new(phi: &CnfFormula, params: &SatGadgetParams) -> Self {
        let mut agent_labels = Vec::new();
        let mut chore_labels = Vec::new();
        for i in 1..=phi.variables {
            agent_labels.push(format!("x{i}.a1"));
            agent_labels.push(format!("x{i}.a2"));
            chore_labels.push(format!("x{i}.b1"));
            chore_labels.push(format!("x{i}.b2"));
        }
        for (r, c) in phi.clauses.iter().enumerate() {
            for t in 1..=c.len() {
                agent_labels.push(format!("c{}.n{t}", r + 1));
            }
            agent_labels.push(format!("c{}.shared", r + 1));
            for t in 1..=c.len() {
                chore_labels.push(format!("c{}.m{t}", r + 1));
            }
        }
        SatLayout {
            variables: phi.variables,
            clauses: phi.clauses.iter().map(|c| c.iter().map(|l| l.to_dimacs()).collect()).collect(),
            eps: RatStr(params.eps.clone()),
            eps_prime: RatStr(params.eps_prime.clone()),
            agent_labels,
            chore_labels,
        }
    }

    pub fn formula(&self) -> Result<CnfFormula, SatError> {
        let clauses = self
            .clauses
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&v| Literal::from_dimacs(v).ok_or_else(|| SatError::NotGadget("zero literal".into())))
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        CnfFormula::with_short_clauses(self.variables, clauses)
    }

    /// Agent `which` (0 or 1) of variable `var`.
    pub fn variable_agent(&self, var: usize, which: usize) -> usize {
        2 * var + which
    }

    /// Chore `which` (0 or 1) of variable `var`.
    pub fn variable_chore(&self, var: usize, which: usize) -> usize {
        2 * var + which
    }

    fn clause_offsets(&self) -> (Vec<usize>, Vec<usize>) {
        let mut agents = Vec::new();
        let mut chores = Vec::new();
        let (mut a, mut c) = (2 * self.variables, 2 * self.variables);
        for cl in &self.clauses {
            agents.push(a);
            chores.push(c);
            a += cl.len() + 1;
            c += cl.len();
        }
        (agents, chores)
    }

    pub fn literal_agent(&self, clause: usize, lit: usize) -> usize {
        self.clause_offsets().0[clause] + lit
    }

    pub fn shared_agent(&self, clause: usize) -> usize {
        self.clause_offsets().0[clause] + self.clauses[clause].len()
    }

    pub fn clause_chore(&self, clause: usize, lit: usize) -> usize {
        self.clause_offsets().1[clause] + lit
    }

    pub fn agents(&self) -> usize {
        self.agent_labels.len()
    }

    pub fn chores(&self) -> usize {
        self.chore_labels.len()
    }
}

/// Earning of the clause-wide agent: half `eps` per positive literal, `eps`
/// per negated one, minus `eps_prime`.
pub fn shared_earning(clause: &[Literal], params: &SatGadgetParams) -> Rational {
    let pos = clause.iter().filter(|l| !l.negated).count() as i64;
    let neg = clause.len() as i64 - pos;
    &params.eps * rat(pos, 2) + &params.eps * int(neg) - &params.eps_prime
}

pub fn build_sat_instance(phi: &CnfFormula, params: &SatGadgetParams) -> Result<Instance, SatError> {
    params.validate()?;
    let layout = SatLayout::new(phi, params);
    let (n, m) = (layout.agents(), layout.chores());
    let eps = &params.eps;
    let mut d: Vec<Vec<Option<Rational>>> = vec![vec![None; m]; n];
    let mut earning = vec![Rational::zero(); n];
    for v in 0..phi.variables {
        let (a1, a2) = (layout.variable_agent(v, 0), layout.variable_agent(v, 1));
        let (b1, b2) = (layout.variable_chore(v, 0), layout.variable_chore(v, 1));
        d[a1][b1] = Some(int(1));
        d[a1][b2] = Some(int(3));
        d[a2][b2] = Some(int(1));
        earning[a1] = int(1);
        earning[a2] = int(1);
    }
    for (r, clause) in phi.clauses.iter().enumerate() {
        let shared = layout.shared_agent(r);
        earning[shared] = shared_earning(clause, params);
        for (t, lit) in clause.iter().enumerate() {
            let agent = layout.literal_agent(r, t);
            let chore = layout.clause_chore(r, t);
            let (b, db, dm) = if lit.negated {
                (layout.variable_chore(lit.var, 0), rat(2, 3), eps * rat(4, 3))
            } else {
                (layout.variable_chore(lit.var, 1), int(1), eps.clone())
            };
            for who in [agent, shared] {
                d[who][b] = Some(db.clone());
                d[who][chore] = Some(dm.clone());
            }
            earning[agent] = eps.clone();
        }
    }
    let inst = Instance::fixed_earnings(params.tau.clone(), d, earning, None)
        .map_err(|e| SatError::BadParams(e.to_string()))?;
    Ok(inst.with_metadata(GadgetMetadata::Sat(layout)))
}

/// Explicit equilibrium of the gadget for a satisfying assignment.
pub fn assignment_to_equilibrium(
    phi: &CnfFormula,
    params: &SatGadgetParams,
    assignment: &[bool],
) -> Result<ExactCandidate, SatError> {
    params.validate()?;
    if assignment.len() != phi.variables {
        return Err(SatError::BadInput(format!(
            "assignment has {} values for {} variables",
            assignment.len(),
            phi.variables
        )));
    }
    if !phi.evaluate(assignment) {
        return Err(SatError::NotSatisfying);
    }
    let layout = SatLayout::new(phi, params);
    let (n, m) = (layout.agents(), layout.chores());
    let eps = &params.eps;
    let mut prices = vec![Rational::zero(); m];
    let mut flow = vec![vec![Rational::zero(); m]; n];
    for (v, &value) in assignment.iter().enumerate() {
        let (a1, a2) = (layout.variable_agent(v, 0), layout.variable_agent(v, 1));
        let (b1, b2) = (layout.variable_chore(v, 0), layout.variable_chore(v, 1));
        flow[a2][b2] = int(1);
        if value {
            prices[b1] = int(1);
            prices[b2] = int(1);
            flow[a1][b1] = int(1);
        } else {
            prices[b1] = rat(1, 2);
            prices[b2] = rat(3, 2);
            flow[a1][b1] = rat(1, 2);
            flow[a1][b2] = rat(1, 2);
        }
    }
    for (r, clause) in phi.clauses.iter().enumerate() {
        let shared = layout.shared_agent(r);
        let budget = shared_earning(clause, params);
        let truth: Vec<bool> = clause.iter().map(|l| l.holds(assignment)).collect();
        let unsat: Vec<usize> = (0..clause.len()).filter(|&t| !truth[t]).collect();
        // Cheapest price at which a false literal's agent would rather do
        // the clause chore than its variable chore.
        let floor = |t: usize| if clause[t].negated { eps * int(2) } else { eps * rat(3, 2) };
        let mut shared_chores = Vec::new();
        for t in 0..clause.len() {
            prices[layout.clause_chore(r, t)] = eps.clone();
        }
        if !unsat.is_empty() {
            let bounds: Rational = unsat.iter().map(|&t| floor(t)).sum();
            let alpha = (eps * int(unsat.len() as i64) + &budget) / bounds;
            for &t in &unsat {
                prices[layout.clause_chore(r, t)] = &alpha * floor(t);
                shared_chores.push(t);
            }
        } else {
            let positive: Vec<usize> = (0..clause.len()).filter(|&t| !clause[t].negated).collect();
            // With only negated literals the extra money goes to all of them.
            let targets = if positive.is_empty() { (0..clause.len()).collect() } else { positive };
            let extra = &budget / int(targets.len() as i64);
            for &t in &targets {
                prices[layout.clause_chore(r, t)] = eps + &extra;
                shared_chores.push(t);
            }
        }
        for t in 0..clause.len() {
            let chore = layout.clause_chore(r, t);
            flow[layout.literal_agent(r, t)][chore] = eps.clone();
            if shared_chores.contains(&t) {
                flow[shared][chore] = &prices[chore] - eps;
            }
        }
    }
    Ok(ExactCandidate::from_flow(prices, flow))
}

fn layout_of(inst: &Instance) -> Result<&SatLayout, SatError> {
    match &inst.metadata {
        Some(GadgetMetadata::Sat(l)) => {
            if l.agents() != inst.agents() || l.chores() != inst.chores() {
                return Err(SatError::NotGadget("layout does not match the instance size".into()));
            }
            Ok(l)
        }
        _ => Err(SatError::NotGadget("instance carries no formula layout".into())),
    }
}

/// Reads an assignment off an equilibrium: a variable is false exactly when
/// its first agent earns money on its second chore.
pub fn equilibrium_to_assignment(inst: &Instance, cand: &AnyCandidate) -> Result<Vec<bool>, SatError> {
    let layout = layout_of(inst)?;
    let (n, m) = (inst.agents(), inst.chores());
    let mut values = Vec::with_capacity(layout.variables);
    for v in 0..layout.variables {
        let (a1, b2) = (layout.variable_agent(v, 0), layout.variable_chore(v, 1));
        let paid = match cand {
            AnyCandidate::Exact(c) => {
                c.check_dims(n, m).map_err(|e| SatError::BadInput(e.to_string()))?;
                c.flow_or_derived()[a1][b2].is_positive()
            }
            AnyCandidate::Float(c) => {
                c.check_dims(n, m).map_err(|e| SatError::BadInput(e.to_string()))?;
                c.allocation[a1][b2] * c.prices[b2] > 0.0
            }
        };
        values.push(!paid);
    }
    Ok(values)
}

/// Equal-earnings copy of a fixed-earnings market: agent `i` becomes
/// `scale * e_i` agents earning one unit each.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualEarnings {
    pub instance: Instance,
    /// Original agent of every copy.
    pub origin: Vec<usize>,
}

impl EqualEarnings {
    /// Sums the copies' rows back into an allocation of the original market.
    pub fn collapse(&self, allocation: &[Vec<Rational>], agents: usize) -> Vec<Vec<Rational>> {
        let m = self.instance.chores();
        let mut out = vec![vec![Rational::zero(); m]; agents];
        for (row, &o) in allocation.iter().zip(&self.origin) {
            for (j, x) in row.iter().enumerate() {
                out[o][j] += x;
            }
        }
        out
    }
}

/// Smallest positive integer that makes every earning integral.
pub fn earning_scale(inst: &Instance) -> Result<Rational, SatError> {
    let Market::FixedEarnings { earning, .. } = &inst.market else {
        return Err(SatError::BadInput("fixed-earnings market expected".into()));
    };
    let l = earning.iter().fold(BigInt::one(), |acc, e| acc.lcm(e.denom()));
    Ok(Rational::from_integer(l))
}

pub fn expand_to_equal_earnings(inst: &Instance, scale: &Rational) -> Result<EqualEarnings, SatError> {
    let Market::FixedEarnings { earning, supply } = &inst.market else {
        return Err(SatError::BadInput("fixed-earnings market expected".into()));
    };
    if !scale.is_positive() {
        return Err(SatError::BadInput("scale must be positive".into()));
    }
    let mut disutility = Vec::new();
    let mut origin = Vec::new();
    for (i, e) in earning.iter().enumerate() {
        let copies = e * scale;
        if !copies.is_integer() || copies.is_negative() {
            return Err(SatError::NonIntegralEarnings { agent: i });
        }
        let copies: usize = copies
            .to_integer()
            .try_into()
            .map_err(|_| SatError::BadInput(format!("agent {i} needs too many copies")))?;
        for _ in 0..copies {
            disutility.push(inst.disutility[i].clone());
            origin.push(i);
        }
    }
    let earnings = vec![Rational::one(); origin.len()];
    let instance = Instance::fixed_earnings(inst.tau.clone(), disutility, earnings, Some(supply.clone()))
        .map_err(|e| SatError::BadInput(e.to_string()))?;
    Ok(EqualEarnings { instance, origin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::verify_exact;
    use crate::graph::check_condition1_for;

    fn lits(v: &[i64]) -> Vec<Literal> {
        v.iter().map(|&x| Literal::from_dimacs(x).unwrap()).collect()
    }

    fn two_clauses() -> CnfFormula {
        CnfFormula::new(3, vec![lits(&[1, 2, 3]), lits(&[-1, -2, 3])]).unwrap()
    }

    #[test]
    fn formula_validation() {
        assert!(CnfFormula::new(3, vec![lits(&[1, 2])]).is_err());
        assert!(CnfFormula::new(3, vec![lits(&[1, -1, 2])]).is_err());
        assert!(CnfFormula::new(2, vec![lits(&[1, 2, 3])]).is_err());
        assert!(CnfFormula::with_short_clauses(1, vec![lits(&[1])]).is_ok());
    }

    #[test]
    fn dimacs_roundtrip() {
        let phi = two_clauses();
        let text = phi.to_dimacs();
        assert_eq!(text, "p cnf 3 2\n1 2 3 0\n-1 -2 3 0\n");
        assert_eq!(CnfFormula::parse_dimacs(&format!("c demo\n{text}")).unwrap(), phi);
        assert!(CnfFormula::parse_dimacs("1 2 3 0\n").is_err());
        assert!(CnfFormula::parse_dimacs("p cnf 3 2\n1 2 3 0\n").is_err());
    }

    #[test]
    fn default_params_are_valid() {
        assert!(SatGadgetParams::default().validate().is_ok());
        let mut p = SatGadgetParams::default();
        p.eps_prime = rat(1, 20);
        assert!(matches!(p.validate(), Err(SatError::BadParams(_))));
        let mut p = SatGadgetParams::default();
        p.delta = rat(1, 100);
        assert!(matches!(p.validate(), Err(SatError::BadParams(_))));
    }

    #[test]
    fn one_clause_sizes() {
        let phi = CnfFormula::new(3, vec![lits(&[1, 2, 3])]).unwrap();
        let inst = build_sat_instance(&phi, &SatGadgetParams::default()).unwrap();
        assert_eq!(inst.agents(), 10);
        assert_eq!(inst.chores(), 9);
        let Market::FixedEarnings { earning, .. } = &inst.market else { panic!() };
        assert_eq!(earning[9], rat(7, 60));
    }

    #[test]
    fn all_true_clause_prices() {
        let phi = CnfFormula::new(3, vec![lits(&[1, 2, 3])]).unwrap();
        let params = SatGadgetParams::default();
        let eq = assignment_to_equilibrium(&phi, &params, &[true, true, true]).unwrap();
        assert_eq!(eq.prices[6..], [rat(5, 36), rat(5, 36), rat(5, 36)]);
        let inst = build_sat_instance(&phi, &params).unwrap();
        assert!(verify_exact(&inst, &eq, &int(0)).unwrap().passed());
    }

    #[test]
    fn every_satisfying_assignment_yields_an_equilibrium() {
        let phi = two_clauses();
        let params = SatGadgetParams::default();
        let inst = build_sat_instance(&phi, &params).unwrap();
        for bits in 0..8u32 {
            let a: Vec<bool> = (0..3).map(|k| bits >> k & 1 == 1).collect();
            match assignment_to_equilibrium(&phi, &params, &a) {
                Ok(eq) => {
                    let rep = verify_exact(&inst, &eq, &int(0)).unwrap();
                    assert!(rep.passed(), "{a:?}: {rep:?}");
                    let back = equilibrium_to_assignment(&inst, &AnyCandidate::Exact(eq)).unwrap();
                    assert_eq!(back, a);
                }
                Err(SatError::NotSatisfying) => assert!(!phi.evaluate(&a)),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn all_negated_clause_with_all_literals_true() {
        let phi = CnfFormula::new(3, vec![lits(&[-1, -2, -3])]).unwrap();
        let params = SatGadgetParams::default();
        let inst = build_sat_instance(&phi, &params).unwrap();
        let eq = assignment_to_equilibrium(&phi, &params, &[false, false, false]).unwrap();
        assert!(verify_exact(&inst, &eq, &int(0)).unwrap().passed());
    }

    #[test]
    fn gadgets_fail_condition1() {
        let inst = build_sat_instance(&two_clauses(), &SatGadgetParams::default()).unwrap();
        assert!(!check_condition1_for(&inst).passed());
    }

    #[test]
    fn readback_needs_layout() {
        let plain = Instance::fixed_earnings(int(2), vec![vec![Some(int(1))]], vec![int(1)], None).unwrap();
        let c = AnyCandidate::Exact(ExactCandidate::from_flow(vec![int(1)], vec![vec![int(1)]]));
        assert!(matches!(equilibrium_to_assignment(&plain, &c), Err(SatError::NotGadget(_))));
    }

    #[test]
    fn equal_earnings_expansion() {
        let inst = Instance::fixed_earnings(
            int(10),
            vec![vec![Some(int(1)), Some(int(2))], vec![Some(int(2)), Some(int(1))]],
            vec![int(2), int(1)],
            None,
        )
        .unwrap();
        let ex = expand_to_equal_earnings(&inst, &int(1)).unwrap();
        assert_eq!(ex.instance.agents(), 3);
        assert_eq!(ex.origin, vec![0, 0, 1]);
        assert_eq!(ex.instance.disutility[1], inst.disutility[0]);
        assert!(matches!(
            expand_to_equal_earnings(&inst, &rat(1, 2)),
            Err(SatError::NonIntegralEarnings { agent: 1 })
        ));
        let gadget = build_sat_instance(&two_clauses(), &SatGadgetParams::default()).unwrap();
        let scale = earning_scale(&gadget).unwrap();
        assert_eq!(scale, int(60));
        let big = expand_to_equal_earnings(&gadget, &scale).unwrap();
        let Market::FixedEarnings { earning, .. } = &big.instance.market else { panic!() };
        assert!(earning.iter().all(|e| e.is_one()));
    }
}
