//! Exact two-phase simplex over rationals with Bland's anti-cycling rule.

use num_traits::{Signed, Zero};

use crate::model::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub relation: Relation,
    pub rhs: Rational,
}

/// Variable bounds; `None` means unbounded on that side.
#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub lower: Option<Rational>,
    pub upper: Option<Rational>,
}

impl Default for Bound {
    fn default() -> Self {
        Bound {
            lower: Some(Rational::zero()),
            upper: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<Rational>,
    pub sense: Sense,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bound>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `point` and `value` are meaningful only when the status is optimal.
#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    pub point: Vec<Rational>,
    pub value: Rational,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

impl LinearProgram {
    /// Program over `num_vars` nonnegative variables with a zero objective.
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![Rational::zero(); num_vars],
            sense,
            constraints: Vec::new(),
            bounds: vec![Bound::default(); num_vars],
        }
    }

    pub fn set_objective(&mut self, coeffs: Vec<Rational>) {
        self.objective = coeffs;
    }

    pub fn set_objective_term(&mut self, var: usize, coeff: Rational) {
        self.objective[var] = coeff;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<Rational>, relation: Relation, rhs: Rational) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Adds a constraint given as `(variable, coefficient)` terms. Repeated
    /// variables accumulate.
    pub fn add_terms(&mut self, terms: &[(usize, Rational)], relation: Relation, rhs: Rational) {
        let mut coeffs = vec![Rational::zero(); self.num_vars];
        for (v, c) in terms {
            coeffs[*v] += c;
        }
        self.add_constraint(coeffs, relation, rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: Option<Rational>, upper: Option<Rational>) {
        self.bounds[var] = Bound { lower, upper };
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars;
        if self.objective.len() != n {
            return Err(LpError::Malformed(format!(
                "objective has {} coefficients for {n} variables",
                self.objective.len()
            )));
        }
        if self.bounds.len() != n {
            return Err(LpError::Malformed(format!("{} bounds for {n} variables", self.bounds.len())));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Malformed(format!(
                    "constraint {k} has {} coefficients for {n} variables",
                    c.coeffs.len()
                )));
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpResult, LpError> {
        self.check()?;
        let infeasible = || LpResult {
            status: LpStatus::Infeasible,
            point: Vec::new(),
            value: Rational::zero(),
        };

        // Rewrite every variable in terms of nonnegative columns.
        let mut maps = Vec::with_capacity(self.num_vars);
        let mut cols = 0usize;
        let mut extra_rows: Vec<(Vec<(usize, Rational)>, Relation, Rational)> = Vec::new();
        for b in &self.bounds {
            match (&b.lower, &b.upper) {
                (Some(l), upper) => {
                    if let Some(u) = upper {
                        if u < l {
                            return Ok(infeasible());
                        }
                        extra_rows.push((vec![(cols, Rational::from_integer(1.into()))], Relation::Le, u - l));
                    }
                    maps.push(VarMap::Shift { col: cols, offset: l.clone() });
                    cols += 1;
                }
                (None, Some(u)) => {
                    maps.push(VarMap::Mirror { col: cols, offset: u.clone() });
                    cols += 1;
                }
                (None, None) => {
                    maps.push(VarMap::Split { pos: cols, neg: cols + 1 });
                    cols += 2;
                }
            }
        }

        let mut rows: Vec<(Vec<(usize, Rational)>, Relation, Rational)> = Vec::new();
        for c in &self.constraints {
            let mut terms = Vec::new();
            let mut rhs = c.rhs.clone();
            for (v, a) in c.coeffs.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                match &maps[v] {
                    VarMap::Shift { col, offset } => {
                        rhs -= a * offset;
                        terms.push((*col, a.clone()));
                    }
                    VarMap::Mirror { col, offset } => {
                        rhs -= a * offset;
                        terms.push((*col, -a));
                    }
                    VarMap::Split { pos, neg } => {
                        terms.push((*pos, a.clone()));
                        terms.push((*neg, -a));
                    }
                }
            }
            rows.push((terms, c.relation, rhs));
        }
        rows.extend(extra_rows);

        let mut cost = vec![Rational::zero(); cols];
        let sign = match self.sense {
            Sense::Minimize => Rational::from_integer(1.into()),
            Sense::Maximize => Rational::from_integer((-1).into()),
        };
        for (v, c) in self.objective.iter().enumerate() {
            let c = c * &sign;
            match &maps[v] {
                VarMap::Shift { col, .. } => cost[*col] += c,
                VarMap::Mirror { col, .. } => cost[*col] -= c,
                VarMap::Split { pos, neg } => {
                    cost[*pos] += c.clone();
                    cost[*neg] -= c;
                }
            }
        }

        let columns = match Tableau::solve(cols, &rows, &cost) {
            Outcome::Infeasible => return Ok(infeasible()),
            Outcome::Unbounded => {
                return Ok(LpResult {
                    status: LpStatus::Unbounded,
                    point: Vec::new(),
                    value: Rational::zero(),
                })
            }
            Outcome::Optimal(y) => y,
        };

        let point: Vec<Rational> = maps
            .iter()
            .map(|m| match m {
                VarMap::Shift { col, offset } => offset + &columns[*col],
                VarMap::Mirror { col, offset } => offset - &columns[*col],
                VarMap::Split { pos, neg } => &columns[*pos] - &columns[*neg],
            })
            .collect();
        let value = self.objective.iter().zip(&point).map(|(c, x)| c * x).sum();
        Ok(LpResult {
            status: LpStatus::Optimal,
            point,
            value,
        })
    }
}

enum VarMap {
    /// x = offset + col
    Shift { col: usize, offset: Rational },
    /// x = offset - col
    Mirror { col: usize, offset: Rational },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
}

enum Outcome {
    Optimal(Vec<Rational>),
    Infeasible,
    Unbounded,
}

/// Dense tableau for `min cost.y` subject to the given rows and `y >= 0`.
struct Tableau {
    /// rows x (columns + 1); the last entry of each row is its right-hand side.
    t: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    /// Reduced costs, with the negated objective value in the last slot.
    obj: Vec<Rational>,
    width: usize,
}

impl Tableau {
    fn solve(structural: usize, rows: &[(Vec<(usize, Rational)>, Relation, Rational)], cost: &[Rational]) -> Outcome {
        let slack_count = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let first_art = structural + slack_count;
        let mut art_count = 0;
        let mut layout = Vec::with_capacity(rows.len());
        for (_, rel, rhs) in rows {
            let flipped = rhs.is_negative();
            let rel = match (rel, flipped) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => *r,
            };
            if rel != Relation::Le {
                art_count += 1;
            }
            layout.push((flipped, rel));
        }
        let width = first_art + art_count;
        let one = Rational::from_integer(1.into());

        let mut t = Vec::with_capacity(rows.len());
        let mut basis = Vec::with_capacity(rows.len());
        let mut slack = structural;
        let mut art = first_art;
        for ((terms, orig_rel, rhs), (flipped, rel)) in rows.iter().zip(&layout) {
            let mut row = vec![Rational::zero(); width + 1];
            for (c, a) in terms {
                row[*c] += a;
            }
            row[width] = rhs.clone();
            if *flipped {
                for x in row.iter_mut() {
                    *x = -&*x;
                }
            }
            if *orig_rel != Relation::Eq {
                row[slack] = if *rel == Relation::Le { one.clone() } else { -one.clone() };
                if *rel == Relation::Le {
                    basis.push(slack);
                }
                slack += 1;
            }
            if *rel != Relation::Le {
                row[art] = one.clone();
                basis.push(art);
                art += 1;
            }
            t.push(row);
        }

        let mut tab = Tableau {
            t,
            basis,
            obj: vec![Rational::zero(); width + 1],
            width,
        };

        if art_count > 0 {
            let mut phase1 = vec![Rational::zero(); width];
            for c in phase1.iter_mut().skip(first_art) {
                *c = one.clone();
            }
            tab.set_objective(&phase1);
            // Phase one is bounded below by zero.
            tab.run(width);
            if tab.obj[width].is_negative() {
                return Outcome::Infeasible;
            }
            tab.drive_out_artificials(first_art);
        }

        let mut phase2 = vec![Rational::zero(); width];
        phase2[..structural].clone_from_slice(cost);
        tab.set_objective(&phase2);
        if !tab.run(first_art) {
            return Outcome::Unbounded;
        }
        let mut y = vec![Rational::zero(); structural];
        for (r, &b) in tab.basis.iter().enumerate() {
            if b < structural {
                y[b] = tab.t[r][width].clone();
            }
        }
        Outcome::Optimal(y)
    }

    fn set_objective(&mut self, cost: &[Rational]) {
        let w = self.width;
        let mut obj: Vec<Rational> = cost.iter().cloned().chain(std::iter::once(Rational::zero())).collect();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = &cost[b];
            if cb.is_zero() {
                continue;
            }
            for (o, x) in obj.iter_mut().zip(&self.t[r]) {
                if !x.is_zero() {
                    *o -= cb * x;
                }
            }
        }
        debug_assert_eq!(obj.len(), w + 1);
        self.obj = obj;
    }

    /// Pivots until optimal. Columns at or beyond `limit` never enter.
    /// Returns false when the objective is unbounded below.
    fn run(&mut self, limit: usize) -> bool {
        let w = self.width;
        loop {
            let Some(enter) = (0..limit).find(|&j| self.obj[j].is_negative()) else {
                return true;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for (r, row) in self.t.iter().enumerate() {
                let a = &row[enter];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &row[w] / a;
                let better = match &leave {
                    None => true,
                    Some((lr, best)) => ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(r, enter),
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c].clone();
        for x in self.t[r].iter_mut() {
            if !x.is_zero() {
                *x /= &p;
            }
        }
        let pivot_row = std::mem::take(&mut self.t[r]);
        let nz: Vec<usize> = (0..pivot_row.len()).filter(|&j| !pivot_row[j].is_zero()).collect();
        let eliminate = |row: &mut Vec<Rational>| {
            let f = row[c].clone();
            if f.is_zero() {
                return;
            }
            for &j in &nz {
                row[j] -= &f * &pivot_row[j];
            }
        };
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.obj);
        self.t[r] = pivot_row;
        self.basis[r] = c;
    }

    /// After phase one every artificial left in the basis sits at zero.
    /// Pivot it out on any real column or drop its (redundant) row.
    fn drive_out_artificials(&mut self, first_art: usize) {
        let mut r = 0;
        while r < self.t.len() {
            if self.basis[r] < first_art {
                r += 1;
                continue;
            }
            match (0..first_art).find(|&j| !self.t[r][j].is_zero()) {
                Some(j) => {
                    self.pivot(r, j);
                    r += 1;
                }
                None => {
                    self.t.remove(r);
                    self.basis.remove(r);
                }
            }
        }
    }
}
