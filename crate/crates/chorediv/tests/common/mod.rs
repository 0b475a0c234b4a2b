//! Independent oracles and generators shared by the integration tests.
//! Nothing here calls into the solvers under test.
#![allow(dead_code)]

use chorediv::lp::{LinearProgram, Relation, Sense};
use chorediv::{Instance, Market, Rational};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn q(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn qr(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Linear programs by brute-force vertex enumeration.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<Rational>,
    pub rel: Rel,
    pub rhs: Rational,
}

/// `max` or `min` of `objective . x` subject to `rows` and `x >= 0`.
#[derive(Debug, Clone)]
pub struct SmallLp {
    pub vars: usize,
    pub objective: Vec<Rational>,
    pub maximize: bool,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Infeasible,
    Unbounded,
    Optimal(Rational),
}

impl SmallLp {
    pub fn random(r: &mut impl Rng) -> Self {
        let vars = r.gen_range(1..=5);
        let count = r.gen_range(0..=8);
        let mut rows: Vec<Row> = Vec::new();
        for _ in 0..count {
            if !rows.is_empty() && r.gen_bool(0.1) {
                // Repeated and scaled rows make degenerate vertices.
                let src = rows[r.gen_range(0..rows.len())].clone();
                let k = q(r.gen_range(1..=2));
                rows.push(Row {
                    coeffs: src.coeffs.iter().map(|c| c * &k).collect(),
                    rel: src.rel,
                    rhs: src.rhs * k,
                });
                continue;
            }
            let coeffs = (0..vars).map(|_| q(r.gen_range(-3..=3))).collect();
            let rel = match r.gen_range(0..5) {
                0 | 1 => Rel::Le,
                2 | 3 => Rel::Ge,
                _ => Rel::Eq,
            };
            rows.push(Row {
                coeffs,
                rel,
                rhs: q(r.gen_range(-4..=8)),
            });
        }
        SmallLp {
            vars,
            objective: (0..vars).map(|_| q(r.gen_range(-3..=3))).collect(),
            maximize: r.gen_bool(0.5),
            rows,
        }
    }

    pub fn to_program(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(self.vars, if self.maximize { Sense::Maximize } else { Sense::Minimize });
        lp.set_objective(self.objective.clone());
        for row in &self.rows {
            let rel = match row.rel {
                Rel::Le => Relation::Le,
                Rel::Ge => Relation::Ge,
                Rel::Eq => Relation::Eq,
            };
            lp.add_constraint(row.coeffs.clone(), rel, row.rhs.clone());
        }
        lp
    }

    pub fn solve_by_vertices(&self) -> OracleOutcome {
        let verts = vertices(self.vars, &self.rows);
        if verts.is_empty() {
            return OracleOutcome::Infeasible;
        }
        let sign = if self.maximize { q(1) } else { q(-1) };
        let dir: Vec<Rational> = self.objective.iter().map(|c| c * &sign).collect();
        // Recession cone of the feasible set, cut by sum(r) = 1.
        let mut cone: Vec<Row> = self
            .rows
            .iter()
            .map(|row| Row {
                coeffs: row.coeffs.clone(),
                rel: row.rel,
                rhs: Rational::zero(),
            })
            .collect();
        cone.push(Row {
            coeffs: vec![q(1); self.vars],
            rel: Rel::Eq,
            rhs: q(1),
        });
        if vertices(self.vars, &cone).iter().any(|r| dot(&dir, r).is_positive()) {
            return OracleOutcome::Unbounded;
        }
        let best = verts
            .iter()
            .map(|v| dot(&self.objective, v))
            .reduce(|a, b| if (b > a) == self.maximize { b } else { a })
            .unwrap();
        OracleOutcome::Optimal(best)
    }
}

pub fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn satisfies(row: &Row, x: &[Rational]) -> bool {
    let lhs = dot(&row.coeffs, x);
    match row.rel {
        Rel::Le => lhs <= row.rhs,
        Rel::Ge => lhs >= row.rhs,
        Rel::Eq => lhs == row.rhs,
    }
}

/// Every vertex of `{x >= 0} ∩ rows`, found by solving each square subsystem
/// of active constraints.
pub fn vertices(n: usize, rows: &[Row]) -> Vec<Vec<Rational>> {
    let mut all: Vec<(Vec<Rational>, Rational)> = rows.iter().map(|r| (r.coeffs.clone(), r.rhs.clone())).collect();
    for j in 0..n {
        let mut e = vec![Rational::zero(); n];
        e[j] = Rational::one();
        all.push((e, Rational::zero()));
    }
    let mut out: Vec<Vec<Rational>> = Vec::new();
    let mut pick = Vec::with_capacity(n);
    subsets(all.len(), n, 0, &mut pick, &mut |idx| {
        let a: Vec<Vec<Rational>> = idx.iter().map(|&k| all[k].0.clone()).collect();
        let b: Vec<Rational> = idx.iter().map(|&k| all[k].1.clone()).collect();
        if let Some(x) = solve_square(a, b) {
            if x.iter().all(|v| !v.is_negative()) && rows.iter().all(|r| satisfies(r, &x)) && !out.contains(&x) {
                out.push(x);
            }
        }
    });
    out
}

fn subsets(total: usize, k: usize, start: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..total {
        if total - i < k - pick.len() {
            break;
        }
        pick.push(i);
        subsets(total, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Unique solution of a square system, or `None` when singular.
pub fn solve_square(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = &a[r][col] / &a[col][col];
                for c in col..n {
                    let t = &f * &a[col][c];
                    a[r][c] -= t;
                }
                let t = &f * &b[col];
                b[r] -= t;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

// ---------------------------------------------------------------------------
// Markets.

fn fin(v: i64) -> Option<Rational> {
    Some(q(v))
}

/// Random exchange market built to satisfy both structural conditions:
/// complete bipartite blocks, and block `k` owning every chore of block
/// `k + 1` (cyclically).
pub fn compliant_instance(r: &mut impl Rng, max_blocks: usize) -> Instance {
    let blocks = r.gen_range(1..=max_blocks);
    let shape: Vec<(usize, usize)> = (0..blocks).map(|_| (r.gen_range(1..=2), r.gen_range(1..=2))).collect();
    let n: usize = shape.iter().map(|s| s.0).sum();
    let m: usize = shape.iter().map(|s| s.1).sum();
    let mut agent_block = Vec::new();
    let mut chore_block = Vec::new();
    for (k, &(a, c)) in shape.iter().enumerate() {
        agent_block.extend(std::iter::repeat(k).take(a));
        chore_block.extend(std::iter::repeat(k).take(c));
    }
    let mut d = vec![vec![None; m]; n];
    let mut w = vec![vec![Rational::zero(); m]; n];
    for i in 0..n {
        for j in 0..m {
            if agent_block[i] == chore_block[j] {
                d[i][j] = fin(r.gen_range(1..=5));
            }
            let owns = chore_block[j] == (agent_block[i] + 1) % blocks || r.gen_bool(0.3);
            if owns {
                w[i][j] = q(r.gen_range(1..=3));
            }
        }
    }
    Instance::exchange(q(10), d, w).expect("generated instance is valid")
}

/// Random disutility pattern where every chore has some finite entry.
pub fn random_support(r: &mut impl Rng, n: usize, m: usize) -> Instance {
    let mut d: Vec<Vec<Option<Rational>>> = (0..n)
        .map(|_| (0..m).map(|_| if r.gen_bool(0.5) { fin(r.gen_range(1..=4)) } else { None }).collect())
        .collect();
    for j in 0..m {
        if d.iter().all(|row| row[j].is_none()) {
            let i = r.gen_range(0..n);
            d[i][j] = fin(1);
        }
    }
    let w = vec![vec![q(1); m]; n];
    Instance::exchange(q(10), d, w).expect("valid")
}

/// Finite chore sets of every two agents are identical or disjoint.
pub fn sets_identical_or_disjoint(inst: &Instance) -> bool {
    let sets: Vec<Vec<usize>> = (0..inst.agents())
        .map(|i| (0..inst.chores()).filter(|&j| inst.disutility[i][j].is_some()).collect())
        .collect();
    sets.iter().enumerate().all(|(a, x)| {
        sets[a + 1..]
            .iter()
            .all(|y| x == y || x.iter().all(|j| !y.contains(j)))
    })
}

pub fn budget(inst: &Instance, i: usize, p: &[Rational]) -> Rational {
    match &inst.market {
        Market::Exchange { endowment } => dot(&endowment[i], p),
        Market::FixedEarnings { earning, .. } => earning[i].clone(),
    }
}

pub fn supplies(inst: &Instance) -> Vec<Rational> {
    match &inst.market {
        Market::Exchange { endowment } => (0..inst.chores()).map(|j| endowment.iter().map(|r| &r[j]).sum()).collect(),
        Market::FixedEarnings { supply, .. } => supply.clone(),
    }
}

/// Chores of minimum pain per buck for agent `i` among its finite chores.
pub fn mpb(inst: &Instance, i: usize, p: &[Rational]) -> Vec<usize> {
    let ratios: Vec<(usize, Rational)> = (0..inst.chores())
        .filter_map(|j| inst.disutility[i][j].as_ref().map(|d| (j, d / &p[j])))
        .collect();
    let Some(best) = ratios.iter().map(|(_, r)| r.clone()).min() else {
        return Vec::new();
    };
    ratios.into_iter().filter(|(_, r)| *r == best).map(|(j, _)| j).collect()
}

/// Whether positive prices `p` admit an equilibrium allocation: a money
/// flow along MPB edges paying every budget in full and every chore its
/// full value. Decided by an exact max-flow.
pub fn equilibrium_at(inst: &Instance, p: &[Rational]) -> bool {
    let (n, m) = (inst.agents(), inst.chores());
    if p.iter().any(|v| !v.is_positive()) {
        return false;
    }
    let s = supplies(inst);
    let budgets: Vec<Rational> = (0..n).map(|i| budget(inst, i, p)).collect();
    let value: Vec<Rational> = (0..m).map(|j| &p[j] * &s[j]).collect();
    let total_budget: Rational = budgets.iter().sum();
    let total_value: Rational = value.iter().sum();
    if total_budget != total_value {
        return false;
    }
    // Nodes: 0 source, 1..=n agents, n+1..=n+m chores, n+m+1 sink.
    let size = n + m + 2;
    let sink = size - 1;
    let mut cap = vec![vec![Rational::zero(); size]; size];
    let big = &total_value + q(1);
    for i in 0..n {
        cap[0][1 + i] = budgets[i].clone();
        if budgets[i].is_positive() {
            for j in mpb(inst, i, p) {
                cap[1 + i][1 + n + j] = big.clone();
            }
        }
    }
    for j in 0..m {
        cap[1 + n + j][sink] = value[j].clone();
    }
    max_flow(cap, 0, sink) == total_value
}

pub fn max_flow(mut cap: Vec<Vec<Rational>>, s: usize, t: usize) -> Rational {
    let size = cap.len();
    let mut flow = Rational::zero();
    loop {
        let mut prev = vec![usize::MAX; size];
        prev[s] = s;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..size {
                if prev[v] == usize::MAX && cap[u][v].is_positive() {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return flow;
        }
        let mut bottleneck: Option<Rational> = None;
        let mut v = t;
        while v != s {
            let u = prev[v];
            bottleneck = Some(match bottleneck {
                Some(b) if b <= cap[u][v] => b,
                _ => cap[u][v].clone(),
            });
            v = u;
        }
        let b = bottleneck.unwrap();
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u][v] -= &b;
            cap[v][u] += &b;
            v = u;
        }
        flow += b;
    }
}

/// Every price vector with entries in `1..=top`, scaled to sum to one.
pub fn price_grid(m: usize, top: i64) -> Vec<Vec<Rational>> {
    let mut out = Vec::new();
    let mut cur = vec![1i64; m];
    loop {
        let total: i64 = cur.iter().sum();
        let p: Vec<Rational> = cur.iter().map(|&v| qr(v, total)).collect();
        if !out.contains(&p) {
            out.push(p);
        }
        let mut k = 0;
        loop {
            if k == m {
                return out;
            }
            cur[k] += 1;
            if cur[k] <= top {
                break;
            }
            cur[k] = 1;
            k += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Matrices for the stationary-vector routine.

/// `d x d` matrix with nonnegative off-diagonal entries (often zero) and
/// zero column sums.
pub fn column_sum_zero_matrix(r: &mut impl Rng) -> Vec<Vec<f64>> {
    let d = r.gen_range(1..=6);
    let mut z = vec![vec![0.0; d]; d];
    for l in 0..d {
        let mut col = 0.0;
        for k in 0..d {
            if k != l && r.gen_bool(0.6) {
                let v = if r.gen_bool(0.2) { r.gen_range(1e-6..1e-3) } else { r.gen_range(0.0..5.0) };
                z[k][l] = v;
                col += v;
            }
        }
        z[l][l] = -col;
    }
    z
}
