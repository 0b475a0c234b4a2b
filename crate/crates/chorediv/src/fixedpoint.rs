//! Float fixed-point search for an equilibrium.
//!
//! Prices live in the set of normalized price vectors: nonnegative, summing
//! to one, and with every component earning exactly the total price of its
//! own chores. One step raises the price of every unfinished chore, then
//! redistributes price mass across components so the component budgets
//! balance again. A fixed point of the step is an equilibrium.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;

use num_traits::One;
use serde::Serialize;

use crate::enumerate::{solve_pattern, Pattern};
use crate::check::{mpb_sets_f64, verify_float, FloatTolerances, VerificationReport};
use crate::graph::{build_exchange_graph, check_condition1_for, check_condition2, strongly_connected_components, ComponentDecomposition};
use crate::model::{to_f64, FloatCandidate, Instance, Market, ModelError, Rational};

pub const NULL_TOL: f64 = 1e-10;
pub const MAX_NULL_ITERS: usize = 1_000_000;
pub const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FixedPointError {
    #[error("instance violates the existence conditions: {0}")]
    ConditionViolated(String),
    #[error("null vector did not converge")]
    NotConverged,
    #[error("agent {0} has income but no priced chore")]
    EmptyMpb(usize),
    #[error("initial prices: {0}")]
    ConstructionFailed(String),
    #[error("iterate left the price domain by {0:e}")]
    NotInP(f64),
    #[error("{0}")]
    BadInput(String),
}

impl From<ModelError> for FixedPointError {
    fn from(e: ModelError) -> Self {
        FixedPointError::BadInput(e.to_string())
    }
}

/// Stationary vector of a matrix with nonnegative off-diagonal entries and
/// zero column sums: `t >= 0`, `sum t = 1`, `Z t = 0`.
///
/// Each closed class of the transition graph carries its own stationary
/// vector, found by a direct solve; the classes are mixed uniformly. Power
/// iteration on `Z / lambda + I` polishes the result when the direct solve
/// is not accurate enough.
pub fn stochastic_null_vector(z: &[Vec<f64>]) -> Result<Vec<f64>, FixedPointError> {
    let d = z.len();
    if z.iter().any(|r| r.len() != d) {
        return Err(FixedPointError::BadInput("matrix must be square".into()));
    }
    if d == 0 {
        return Ok(Vec::new());
    }
    // Mass flows from column j to row i.
    let succ: Vec<Vec<usize>> = (0..d)
        .map(|j| (0..d).filter(|&i| i != j && z[i][j] > 0.0).collect())
        .collect();
    let sccs = strongly_connected_components(&succ);
    let mut class_of = vec![0; d];
    for (c, members) in sccs.iter().enumerate() {
        for &v in members {
            class_of[v] = c;
        }
    }
    let closed: Vec<&Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, members)| members.iter().all(|&v| succ[v].iter().all(|&w| class_of[w] == *c)))
        .map(|(_, m)| m)
        .collect();
    let mut t = vec![0.0; d];
    let share = 1.0 / closed.len() as f64;
    for members in &closed {
        let local = solve_closed_class(z, members);
        for (k, &v) in members.iter().enumerate() {
            t[v] += share * local[k];
        }
    }
    if null_residual(z, &t) <= NULL_TOL {
        return Ok(t);
    }
    power_iteration(z, t)
}

fn solve_closed_class(z: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let k = members.len();
    if k == 1 {
        return vec![1.0];
    }
    // Rows of Z restricted to the class, with the last one replaced by the
    // normalization.
    let mut a: Vec<Vec<f64>> = members
        .iter()
        .map(|&i| {
            let mut row: Vec<f64> = members.iter().map(|&j| z[i][j]).collect();
            row.push(0.0);
            row
        })
        .collect();
    a[k - 1] = vec![1.0; k + 1];
    let mut x = gaussian_solve(a).unwrap_or_else(|| vec![1.0 / k as f64; k]);
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

/// Solves an augmented system with partial pivoting.
fn gaussian_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = a.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..k {
            if r == col {
                continue;
            }
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..=k {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    Some((0..k).map(|r| a[r][k] / a[r][r]).collect())
}

fn null_residual(z: &[Vec<f64>], t: &[f64]) -> f64 {
    z.iter()
        .map(|row| row.iter().zip(t).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

fn power_iteration(z: &[Vec<f64>], mut t: Vec<f64>) -> Result<Vec<f64>, FixedPointError> {
    let lambda = z.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    for _ in 0..MAX_NULL_ITERS {
        let next: Vec<f64> = (0..t.len())
            .map(|i| t[i] + z[i].iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / lambda)
            .map(|v| v.max(0.0))
            .collect();
        let s: f64 = next.iter().sum();
        t = next.iter().map(|v| v / s).collect();
        if null_residual(z, &t) <= NULL_TOL {
            return Ok(t);
        }
    }
    Err(FixedPointError::NotConverged)
}

/// Which point of the optimal-allocation correspondence the solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Each agent splits its budget over its MPB chores in proportion to
    /// their prices.
    Proportional,
    /// Route as much money as the chores can absorb along MPB edges, then
    /// spread any leftover budget proportionally.
    MaxFlow,
}

/// Float view of an instance.
#[derive(Debug, Clone)]
struct Dense {
    disutility: Vec<Vec<Option<f64>>>,
    endowment: Vec<Vec<f64>>,
    earning: Option<Vec<f64>>,
    supply: Vec<f64>,
    bound: f64,
}

impl Dense {
    fn new(inst: &Instance) -> Self {
        let disutility: Vec<Vec<Option<f64>>> = inst
            .disutility
            .iter()
            .map(|r| r.iter().map(|d| d.as_ref().map(to_f64)).collect())
            .collect();
        let finite: Vec<f64> = disutility.iter().flatten().flatten().copied().collect();
        let dmax = finite.iter().copied().fold(0.0, f64::max);
        let dmin = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let (endowment, earning) = match &inst.market {
            Market::Exchange { endowment } => (
                endowment.iter().map(|r| r.iter().map(to_f64).collect()).collect(),
                None,
            ),
            Market::FixedEarnings { earning, .. } => (Vec::new(), Some(earning.iter().map(to_f64).collect())),
        };
        Dense {
            bound: inst.chores() as f64 * dmax / dmin,
            disutility,
            endowment,
            earning,
            supply: inst.supplies().iter().map(to_f64).collect(),
        }
    }

    fn agents(&self) -> usize {
        self.disutility.len()
    }

    fn chores(&self) -> usize {
        self.supply.len()
    }

    fn budget(&self, i: usize, p: &[f64]) -> f64 {
        match &self.earning {
            Some(e) => e[i],
            None => self.endowment[i].iter().zip(p).map(|(w, q)| w * q).sum(),
        }
    }

    fn mpb(&self, i: usize, p: &[f64], rel_tol: f64) -> Vec<usize> {
        let ratios: Vec<(usize, f64)> = (0..self.chores())
            .filter_map(|j| {
                let d = self.disutility[i][j]?;
                (p[j] > 0.0).then(|| (j, d / p[j]))
            })
            .collect();
        let Some(best) = ratios.iter().map(|r| r.1).reduce(f64::min) else {
            return Vec::new();
        };
        ratios
            .into_iter()
            .filter(|r| r.1 <= best * (1.0 + rel_tol))
            .map(|r| r.0)
            .collect()
    }

    fn allocate(&self, p: &[f64], selection: Selection, rel_tol: f64) -> Result<Vec<Vec<f64>>, FixedPointError> {
        let (n, m) = (self.agents(), self.chores());
        let budgets: Vec<f64> = (0..n).map(|i| self.budget(i, p)).collect();
        let mut sets = Vec::with_capacity(n);
        for (i, &b) in budgets.iter().enumerate() {
            let set = if b > 0.0 { self.mpb(i, p, rel_tol) } else { Vec::new() };
            if b > 0.0 && set.is_empty() {
                return Err(FixedPointError::EmptyMpb(i));
            }
            sets.push(set);
        }
        let mut flow = vec![vec![0.0; m]; n];
        let mut left = budgets.clone();
        if selection == Selection::MaxFlow {
            let cap: Vec<f64> = (0..m).map(|j| p[j] * self.supply[j]).collect();
            let routed = max_flow(&budgets, &cap, &sets);
            for (i, row) in routed.into_iter().enumerate() {
                for (j, f) in row {
                    flow[i][j] += f;
                    left[i] -= f;
                }
            }
        }
        let mut x = vec![vec![0.0; m]; n];
        for i in 0..n {
            if budgets[i] <= 0.0 {
                continue;
            }
            let rest = left[i].max(0.0);
            let total: f64 = sets[i].iter().map(|&j| p[j]).sum();
            for &j in &sets[i] {
                let f = flow[i][j] + rest * p[j] / total;
                x[i][j] = (f / p[j]).min(self.bound);
            }
        }
        Ok(x)
    }

    fn residual(&self, x: &[Vec<f64>]) -> f64 {
        (0..self.chores())
            .map(|j| (self.supply[j] - x.iter().map(|r| r[j]).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }
}

/// Max flow from agents (capacity = budget) to chores (capacity = value)
/// along MPB edges, by augmenting paths. Returns per-agent `(chore, flow)`.
fn max_flow(budgets: &[f64], capacity: &[f64], sets: &[Vec<usize>]) -> Vec<Vec<(usize, f64)>> {
    let n = budgets.len();
    let m = capacity.len();
    let scale = budgets.iter().chain(capacity).fold(0.0f64, |a, &b| a.max(b.abs()));
    let eps = scale * 1e-15;
    // Nodes: 0 source, 1..=n agents, n+1..=n+m chores, n+m+1 sink.
    let sink = n + m + 1;
    let mut graph = FlowGraph::new(sink + 1);
    for (i, &b) in budgets.iter().enumerate() {
        if b > 0.0 {
            graph.add_edge(0, 1 + i, b);
        }
    }
    let mut mid = Vec::new();
    for (i, set) in sets.iter().enumerate() {
        for &j in set {
            mid.push((i, j, graph.add_edge(1 + i, 1 + n + j, f64::INFINITY)));
        }
    }
    for (j, &c) in capacity.iter().enumerate() {
        if c > 0.0 {
            graph.add_edge(1 + n + j, sink, c);
        }
    }
    graph.run(0, sink, eps);
    let mut out = vec![Vec::new(); n];
    for (i, j, e) in mid {
        let f = graph.flow(e);
        if f > 0.0 {
            out[i].push((j, f));
        }
    }
    out
}

struct FlowGraph {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    orig: Vec<f64>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        FlowGraph {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            orig: Vec::new(),
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: f64) -> usize {
        let e = self.to.len();
        self.adj[a].push(e);
        self.to.push(b);
        self.cap.push(c);
        self.orig.push(c);
        self.adj[b].push(e + 1);
        self.to.push(a);
        self.cap.push(0.0);
        self.orig.push(0.0);
        e
    }

    fn flow(&self, e: usize) -> f64 {
        self.cap[e ^ 1]
    }

    /// Shortest augmenting paths; ignores residual capacity below `eps`.
    fn run(&mut self, s: usize, t: usize, eps: f64) {
        loop {
            let mut prev = vec![usize::MAX; self.adj.len()];
            let mut queue = std::collections::VecDeque::from([s]);
            let mut seen = vec![false; self.adj.len()];
            seen[s] = true;
            while let Some(v) = queue.pop_front() {
                for &e in &self.adj[v] {
                    let w = self.to[e];
                    if !seen[w] && self.cap[e] > eps {
                        seen[w] = true;
                        prev[w] = e;
                        queue.push_back(w);
                    }
                }
            }
            if !seen[t] {
                return;
            }
            let mut push = f64::INFINITY;
            let mut v = t;
            while v != s {
                let e = prev[v];
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = prev[v];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
        }
    }
}

/// Price-proportional split of each agent's budget over its MPB chores,
/// in the instance's own units.
pub fn optimal_allocation(inst: &Instance, p: &[f64]) -> Result<Vec<Vec<f64>>, FixedPointError> {
    if p.len() != inst.chores() {
        return Err(FixedPointError::BadInput("one price per chore expected".into()));
    }
    Dense::new(inst).allocate(p, Selection::Proportional, 0.0)
}

/// Point of the domain whose component sums come from the exchange matrix
/// restricted to one chore per component. Expects unit supplies.
pub fn initial_prices(inst: &Instance, dec: &ComponentDecomposition) -> Result<Vec<f64>, FixedPointError> {
    let Market::Exchange { endowment } = &inst.market else {
        return Err(FixedPointError::BadInput("initial prices need an exchange market".into()));
    };
    let reps: Vec<usize> = dec.components.iter().map(|c| c.chores[0]).collect();
    let d = reps.len();
    let mut w = vec![vec![0.0; d]; d];
    for (k, comp) in dec.components.iter().enumerate() {
        for (l, &b) in reps.iter().enumerate() {
            w[k][l] = comp.agents.iter().map(|&i| to_f64(&endowment[i][b])).sum::<f64>();
        }
        w[k][k] -= 1.0;
    }
    let t = stochastic_null_vector(&w)?;
    if t.iter().any(|&v| v < -DOMAIN_TOL) {
        return Err(FixedPointError::ConstructionFailed("negative component price".into()));
    }
    let mut p = vec![0.0; inst.chores()];
    for (k, &b) in reps.iter().enumerate() {
        p[b] = t[k].max(0.0);
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationState {
    pub prices: Vec<f64>,
    pub allocation: Vec<Vec<f64>>,
    pub residual: f64,
    pub iteration: usize,
}

/// Quantities computed during one step, exposed for invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub q: Vec<f64>,
    pub component_totals: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

impl StepDiagnostics {
    pub fn max_column_sum(&self) -> f64 {
        let d = self.matrix.len();
        (0..d)
            .map(|c| self.matrix.iter().map(|r| r[c]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn min_off_diagonal(&self) -> f64 {
        let mut out = f64::INFINITY;
        for (k, row) in self.matrix.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                if k != l {
                    out = out.min(v);
                }
            }
        }
        out
    }
}

/// Component matrix for weights `q`: entry `(k, l)` is the money agents of
/// `k` earn from the chores of `l` when those chores carry `q` rescaled to
/// unit total, minus one on the diagonal.
fn component_matrix(dense: &Dense, dec: &ComponentDecomposition, q: &[f64], totals: &[f64]) -> Vec<Vec<f64>> {
    let d = dec.len();
    let mut mat = vec![vec![0.0; d]; d];
    for (k, from) in dec.components.iter().enumerate() {
        for (l, to) in dec.components.iter().enumerate() {
            let mut s = 0.0;
            for &i in &from.agents {
                for &j in &to.chores {
                    s += dense.endowment[i][j] * q[j] / totals[l];
                }
            }
            mat[k][l] = s;
        }
        mat[k][k] -= 1.0;
    }
    mat
}

fn component_totals(dec: &ComponentDecomposition, v: &[f64]) -> Vec<f64> {
    dec.components.iter().map(|c| c.chores.iter().map(|&j| v[j]).sum()).collect()
}

/// Keeps the within-component ratios of `weights` and picks the component
/// totals that balance component budgets.
fn rebalance(
    dense: &Dense,
    dec: &ComponentDecomposition,
    weights: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>), FixedPointError> {
    let totals = component_totals(dec, weights);
    if let Some(k) = totals.iter().position(|&t| t <= 0.0) {
        return Err(FixedPointError::BadInput(format!("component {k} has no price mass")));
    }
    let mat = component_matrix(dense, dec, weights, &totals);
    let t = stochastic_null_vector(&mat)?;
    let mut p = vec![0.0; weights.len()];
    for (k, c) in dec.components.iter().enumerate() {
        for &j in &c.chores {
            p[j] = weights[j] / totals[k] * t[k];
        }
    }
    Ok((p, totals, mat))
}

fn step(
    dense: &Dense,
    dec: &ComponentDecomposition,
    st: &IterationState,
    selection: Selection,
    rel_tol: f64,
) -> Result<(IterationState, StepDiagnostics), FixedPointError> {
    let m = dense.chores();
    let q: Vec<f64> = (0..m)
        .map(|j| {
            let done: f64 = st.allocation.iter().map(|r| r[j]).sum();
            st.prices[j] + (dense.supply[j] - done).max(0.0)
        })
        .collect();
    let (prices, totals, matrix) = rebalance(dense, dec, &q)?;
    let allocation = dense.allocate(&st.prices, selection, rel_tol)?;
    let residual = dense.residual(&allocation);
    Ok((
        IterationState {
            prices,
            allocation,
            residual,
            iteration: st.iteration + 1,
        },
        StepDiagnostics {
            q,
            component_totals: totals,
            matrix,
        },
    ))
}

/// One application of the price/allocation map. Expects unit supplies and
/// an exchange market.
pub fn phi_step(inst: &Instance, dec: &ComponentDecomposition, st: &IterationState) -> Result<IterationState, FixedPointError> {
    phi_step_detailed(inst, dec, st).map(|r| r.0)
}

pub fn phi_step_detailed(
    inst: &Instance,
    dec: &ComponentDecomposition,
    st: &IterationState,
) -> Result<(IterationState, StepDiagnostics), FixedPointError> {
    if !inst.is_exchange() {
        return Err(FixedPointError::BadInput("the step map needs an exchange market".into()));
    }
    step(&Dense::new(inst), dec, st, Selection::Proportional, 0.0)
}

/// Largest violation of the domain conditions at `p`.
fn domain_error(dense: &Dense, dec: &ComponentDecomposition, p: &[f64]) -> f64 {
    let mut err = (p.iter().sum::<f64>() - 1.0).abs();
    for &v in p {
        err = err.max(-v);
    }
    for c in &dec.components {
        let earned: f64 = c.agents.iter().map(|&i| dense.budget(i, p)).sum();
        let priced: f64 = c.chores.iter().map(|&j| p[j]).sum();
        err = err.max((earned - priced).abs());
    }
    err
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub residual_tol: f64,
    pub damping: f64,
    pub selection: Selection,
    /// Relative slack when deciding which chores tie for minimum pain per
    /// buck.
    pub mpb_tol: f64,
    /// Every this many iterations, and once more before giving up, read
    /// near-tie MPB patterns off recent iterates and solve each pattern's
    /// program exactly. Zero disables it.
    pub polish_every: usize,
    /// Cap on exact pattern solves over the whole run. Large markets make
    /// each solve expensive.
    pub polish_limit: usize,
    /// Markets with more chores than this skip the exact step entirely.
    pub polish_max_chores: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 10_000,
            residual_tol: 1e-7,
            damping: 0.5,
            selection: Selection::MaxFlow,
            mpb_tol: 1e-10,
            polish_every: 100,
            polish_limit: 48,
            polish_max_chores: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    pub component_sums: Vec<f64>,
}

pub fn write_trace_csv(trace: &[TraceRow], out: impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = trace.first().map_or(0, |r| r.component_sums.len());
    let mut header = vec!["iteration".to_string(), "residual".to_string()];
    header.extend((0..width).map(|k| format!("component_{k}")));
    w.write_record(&header)?;
    for row in trace {
        let mut rec = vec![row.iteration.to_string(), format!("{:e}", row.residual)];
        rec.extend(row.component_sums.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Converged {
        candidate: FloatCandidate,
        residual: f64,
        iterations: usize,
        /// Whether the candidate came from an exact pattern solve rather
        /// than the iteration itself.
        polished: bool,
        report: VerificationReport,
        trace: Vec<TraceRow>,
    },
    Stalled {
        trace: Vec<TraceRow>,
    },
}

impl SolveOutcome {
    pub fn trace(&self) -> &[TraceRow] {
        match self {
            SolveOutcome::Converged { trace, .. } | SolveOutcome::Stalled { trace } => trace,
        }
    }
}

/// What the observer sees after every step, in internal unit-supply units.
#[derive(Debug, Clone)]
pub struct StepReport<'a> {
    pub before: &'a IterationState,
    pub diagnostics: &'a StepDiagnostics,
    /// Domain violation of the next iterate after damping and projection.
    pub domain_error: f64,
    pub next_prices: &'a [f64],
}

/// Rescales an instance to unit supply of every chore, as an exchange
/// market. Returns the rescaled instance and the factor that turns its
/// prices back into the original money scale.
pub fn unit_supply_market(inst: &Instance) -> Result<(Instance, Rational), FixedPointError> {
    let money = match &inst.market {
        Market::Exchange { .. } => Rational::one(),
        Market::FixedEarnings { earning, .. } => earning.iter().sum(),
    };
    let ex = inst.to_exchange()?;
    let supply = ex.supplies();
    let Market::Exchange { endowment } = &ex.market else { unreachable!() };
    let disutility: Vec<Vec<Option<Rational>>> = ex
        .disutility
        .iter()
        .map(|row| row.iter().zip(&supply).map(|(d, s)| d.as_ref().map(|d| d * s)).collect())
        .collect();
    let endowment: Vec<Vec<Rational>> = endowment
        .iter()
        .map(|row| row.iter().zip(&supply).map(|(w, s)| w / s).collect())
        .collect();
    let dmax = disutility.iter().flatten().flatten().max().cloned().unwrap_or_else(Rational::one);
    let tau = if dmax < inst.tau { inst.tau.clone() } else { dmax + Rational::one() };
    Ok((Instance::exchange(tau, disutility, endowment)?, money))
}

pub fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<SolveOutcome, FixedPointError> {
    solve_observed(inst, cfg, |_| {})
}

pub fn solve_observed(
    inst: &Instance,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&StepReport),
) -> Result<SolveOutcome, FixedPointError> {
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(FixedPointError::BadInput("damping must lie in (0, 1]".into()));
    }
    let c1 = check_condition1_for(inst);
    let Some(dec) = c1.decomposition().cloned() else {
        return Err(FixedPointError::ConditionViolated("condition 1 fails".into()));
    };
    let (unit, money) = unit_supply_market(inst)?;
    let graph = build_exchange_graph(&unit, &dec).expect("exchange market");
    if !check_condition2(&graph).passed() {
        return Err(FixedPointError::ConditionViolated("condition 2 fails".into()));
    }
    let dense = Dense::new(&unit);
    let mut prices = initial_prices(&unit, &dec)?;
    let mut allocation = dense.allocate(&prices, cfg.selection, cfg.mpb_tol)?;
    let mut state = IterationState {
        residual: dense.residual(&allocation),
        prices: std::mem::take(&mut prices),
        allocation: std::mem::take(&mut allocation),
        iteration: 0,
    };
    let mut trace = Vec::new();
    let mut recent: VecDeque<Vec<f64>> = VecDeque::new();
    let mut tried = BTreeSet::new();
    loop {
        trace.push(TraceRow {
            iteration: state.iteration,
            residual: state.residual,
            component_sums: component_totals(&dec, &state.prices),
        });
        if state.residual <= cfg.residual_tol {
            return finish(inst, state, money, cfg, trace);
        }
        if recent.len() == POLISH_WINDOW {
            recent.pop_front();
        }
        recent.push_back(state.prices.clone());
        let stalled = state.iteration >= cfg.max_iters;
        let polish_on = cfg.polish_every > 0 && inst.chores() <= cfg.polish_max_chores;
        let due = polish_on && state.iteration > 0 && state.iteration.is_multiple_of(cfg.polish_every);
        if due || (stalled && polish_on) {
            if let Some(out) = polish(inst, &dense, &recent, &mut tried, state.iteration, cfg, &trace)? {
                return Ok(out);
            }
        }
        if stalled {
            return Ok(SolveOutcome::Stalled { trace });
        }
        let (next, diag) = step(&dense, &dec, &state, cfg.selection, cfg.mpb_tol)?;
        let mixed: Vec<f64> = state
            .prices
            .iter()
            .zip(&next.prices)
            .map(|(a, b)| (1.0 - cfg.damping) * a + cfg.damping * b)
            .collect();
        let (projected, _, _) = rebalance(&dense, &dec, &mixed)?;
        let err = domain_error(&dense, &dec, &projected);
        observer(&StepReport {
            before: &state,
            diagnostics: &diag,
            domain_error: err,
            next_prices: &projected,
        });
        if err > DOMAIN_TOL {
            return Err(FixedPointError::NotInP(err));
        }
        let allocation = dense.allocate(&projected, cfg.selection, cfg.mpb_tol)?;
        state = IterationState {
            residual: dense.residual(&allocation),
            prices: projected,
            allocation,
            iteration: next.iteration,
        };
    }
}

fn finish(
    inst: &Instance,
    state: IterationState,
    money: Rational,
    cfg: &SolverConfig,
    trace: Vec<TraceRow>,
) -> Result<SolveOutcome, FixedPointError> {
    let supply: Vec<f64> = inst.supplies().iter().map(to_f64).collect();
    let scale = to_f64(&money);
    let prices: Vec<f64> = state.prices.iter().zip(&supply).map(|(p, s)| p * scale / s).collect();
    let allocation: Vec<Vec<f64>> = state
        .allocation
        .iter()
        .map(|row| row.iter().zip(&supply).map(|(x, s)| x * s).collect())
        .collect();
    let candidate = FloatCandidate {
        prices,
        allocation,
        flow: None,
    };
    let tol = FloatTolerances {
        mpb: FloatTolerances::default().mpb.max(cfg.mpb_tol * 10.0),
        clearing: FloatTolerances::default().clearing.max(cfg.residual_tol * 1.000_001),
    };
    let report = verify_float(inst, &candidate, 0.0, tol).map_err(|e| FixedPointError::BadInput(e.to_string()))?;
    Ok(SolveOutcome::Converged {
        candidate,
        residual: state.residual,
        iterations: state.iteration,
        polished: false,
        report,
        trace,
    })
}

const POLISH_WINDOW: usize = 16;
const POLISH_TOLS: [f64; 5] = [1e-9, 1e-6, 1e-3, 1e-2, 5e-2];

/// Tries the exact program of every near-tie MPB pattern seen in `recent`,
/// plus the per-agent union over the window. Patterns already tried are
/// skipped. A solution is accepted only if float verification passes.
fn polish(
    inst: &Instance,
    unit: &Dense,
    recent: &VecDeque<Vec<f64>>,
    tried: &mut BTreeSet<Pattern>,
    iteration: usize,
    cfg: &SolverConfig,
    trace: &[TraceRow],
) -> Result<Option<SolveOutcome>, FixedPointError> {
    let n = inst.agents();
    let income: Vec<bool> = (0..n).map(|i| inst.has_income(i)).collect();
    let pattern_at = |p: &[f64], tol: f64| -> Pattern {
        (0..n)
            .map(|i| if income[i] { unit.mpb(i, p, tol) } else { Vec::new() })
            .collect()
    };
    let mut candidates: Vec<Pattern> = Vec::new();
    for &tol in &POLISH_TOLS {
        let mut union: Pattern = vec![Vec::new(); n];
        for p in recent.iter().rev() {
            let pat = pattern_at(p, tol);
            for (u, s) in union.iter_mut().zip(&pat) {
                for &j in s {
                    if !u.contains(&j) {
                        u.push(j);
                    }
                }
            }
            candidates.push(pat);
        }
        for u in union.iter_mut() {
            u.sort_unstable();
        }
        candidates.push(union);
    }
    let zero = Rational::from_integer(0.into());
    for pat in candidates {
        if tried.len() >= cfg.polish_limit {
            break;
        }
        if pat.iter().zip(&income).any(|(s, &inc)| inc && s.is_empty()) || !tried.insert(pat.clone()) {
            continue;
        }
        let Some(exact) = solve_pattern(inst, &zero, &pat) else {
            continue;
        };
        let candidate = exact.to_float();
        let supply: Vec<f64> = inst.supplies().iter().map(to_f64).collect();
        let residual = (0..inst.chores())
            .map(|j| {
                let done: f64 = candidate.allocation.iter().map(|r| r[j]).sum();
                (supply[j] - done).abs() / supply[j]
            })
            .fold(0.0, f64::max);
        let tol = FloatTolerances {
            mpb: FloatTolerances::default().mpb.max(cfg.mpb_tol * 10.0),
            clearing: FloatTolerances::default().clearing.max(cfg.residual_tol * 1.000_001),
        };
        let report = verify_float(inst, &candidate, 0.0, tol).map_err(|e| FixedPointError::BadInput(e.to_string()))?;
        if report.passed() {
            return Ok(Some(SolveOutcome::Converged {
                candidate,
                residual,
                iterations: iteration,
                polished: true,
                report,
                trace: trace.to_vec(),
            }));
        }
    }
    Ok(None)
}

/// MPB sets of a float candidate, for reporting.
pub fn candidate_mpb(inst: &Instance, cand: &FloatCandidate, rel_tol: f64) -> Vec<Vec<usize>> {
    mpb_sets_f64(inst, &cand.prices, rel_tol).into_iter().map(|s| s.chores).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::check_condition1_for;
    use crate::model::{int, rat};

    fn fin(v: i64) -> Option<Rational> {
        Some(int(v))
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn null_vector_examples() {
        let t = stochastic_null_vector(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert!(close(&t, &[0.5, 0.5], 1e-15));
        let t = stochastic_null_vector(&[vec![-2.0, 1.0], vec![2.0, -1.0]]).unwrap();
        assert!(close(&t, &[1.0 / 3.0, 2.0 / 3.0], 1e-15));
        let t = stochastic_null_vector(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert!(close(&t, &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn power_iteration_agrees_with_direct_solve() {
        let z = vec![vec![-2.0, 1.0, 0.5], vec![1.5, -1.0, 0.5], vec![0.5, 0.0, -1.0]];
        let direct = stochastic_null_vector(&z).unwrap();
        let iterated = power_iteration(&z, vec![1.0 / 3.0; 3]).unwrap();
        assert!(close(&direct, &iterated, 1e-9));
    }

    fn example2() -> Instance {
        Instance::exchange(
            int(10),
            vec![vec![fin(1), None], vec![None, fin(1)]],
            vec![vec![int(1), rat(1, 2)], vec![int(0), rat(1, 2)]],
        )
        .unwrap()
    }

    #[test]
    fn initial_price_examples() {
        let inst = example2();
        let dec = check_condition1_for(&inst).decomposition().unwrap().clone();
        assert!(close(&initial_prices(&inst, &dec).unwrap(), &[1.0, 0.0], 1e-15));

        let one = Instance::exchange(
            int(10),
            vec![vec![fin(1), fin(2)]],
            vec![vec![int(1), int(1)]],
        )
        .unwrap();
        let dec = check_condition1_for(&one).decomposition().unwrap().clone();
        assert!(close(&initial_prices(&one, &dec).unwrap(), &[1.0, 0.0], 1e-15));
    }

    #[test]
    fn proportional_allocation_examples() {
        let warm = Instance::fixed_earnings(
            int(100),
            vec![vec![fin(1), fin(3)], vec![None, fin(1)]],
            vec![int(1), int(1)],
            None,
        )
        .unwrap();
        // At (1/4, 3/4) agent 0 is indifferent between both chores.
        let x = optimal_allocation(&warm, &[0.25, 0.75]).unwrap();
        assert!(close(&x[0], &[1.0, 1.0], 1e-12));
        assert!(close(&x[1], &[0.0, 4.0 / 3.0], 1e-12));

        let idle = Instance::fixed_earnings(int(10), vec![vec![fin(1)], vec![fin(1)]], vec![int(1), int(0)], None).unwrap();
        let x = optimal_allocation(&idle, &[1.0]).unwrap();
        assert_eq!(x, vec![vec![1.0], vec![0.0]]);
        assert_eq!(optimal_allocation(&idle, &[0.0]), Err(FixedPointError::EmptyMpb(0)));
    }

    fn single() -> Instance {
        Instance::exchange(int(2), vec![vec![fin(1)]], vec![vec![int(1)]]).unwrap()
    }

    #[test]
    fn step_examples() {
        let inst = single();
        let dec = check_condition1_for(&inst).decomposition().unwrap().clone();
        let fixed = IterationState {
            prices: vec![1.0],
            allocation: vec![vec![1.0]],
            residual: 0.0,
            iteration: 0,
        };
        let next = phi_step(&inst, &dec, &fixed).unwrap();
        assert_eq!(next.prices, vec![1.0]);
        assert_eq!(next.allocation, vec![vec![1.0]]);

        let empty = IterationState {
            allocation: vec![vec![0.0]],
            residual: 1.0,
            ..fixed
        };
        let next = phi_step(&inst, &dec, &empty).unwrap();
        assert_eq!(next.prices, vec![1.0]);
        assert_eq!(next.allocation, vec![vec![1.0]]);

        let two = Instance::exchange(int(2), vec![vec![fin(1), fin(1)]], vec![vec![int(1), int(1)]]).unwrap();
        let dec = check_condition1_for(&two).decomposition().unwrap().clone();
        let st = IterationState {
            prices: vec![0.5, 0.5],
            allocation: vec![vec![0.0, 0.0]],
            residual: 1.0,
            iteration: 0,
        };
        let (next, diag) = phi_step_detailed(&two, &dec, &st).unwrap();
        assert!(close(&next.prices, &[0.5, 0.5], 1e-15));
        assert!(close(&next.allocation[0], &[1.0, 1.0], 1e-15));
        assert!(close(&diag.q, &[1.5, 1.5], 1e-15));
        assert_eq!(diag.matrix, vec![vec![0.0]]);
    }

    #[test]
    fn single_chore_converges_at_once() {
        match solve(&single(), &SolverConfig::default()).unwrap() {
            SolveOutcome::Converged { candidate, iterations, report, .. } => {
                assert!(iterations <= 2);
                assert_eq!(candidate.prices, vec![1.0]);
                assert!(report.passed());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn refuses_instances_outside_the_conditions() {
        let ex1 = Instance::exchange(
            int(10),
            vec![vec![fin(1), None], vec![fin(1), fin(2)]],
            vec![vec![int(1), int(1)], vec![int(1), int(1)]],
        )
        .unwrap();
        assert!(matches!(
            solve(&ex1, &SolverConfig::default()),
            Err(FixedPointError::ConditionViolated(_))
        ));
        assert!(matches!(
            solve(&example2(), &SolverConfig::default()),
            Err(FixedPointError::ConditionViolated(_))
        ));
    }

    #[test]
    fn trace_csv_has_header() {
        let trace = vec![TraceRow {
            iteration: 0,
            residual: 0.5,
            component_sums: vec![1.0],
        }];
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,residual,component_0\n0,5e-1,1e0\n"));
    }
}
