//! Dense two-phase tableau simplex for small linear programs.
//!
//! Problems are stated as `maximize c.x` subject to linear rows and `x >= 0`.
//! Pivoting follows Bland's rule (lowest eligible index for both the entering
//! and the leaving variable). After every pivot the tableau is recomputed from
//! the original rows through an LU factorization of the basis.

use nalgebra::DMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

const OPT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const ZERO_TOL: f64 = 1e-14;
const MAX_PIVOTS: usize = 50_000;

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    /// `m` rows of `ncols` coefficients.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// The rows as built, before any pivot.
    orig_a: Vec<Vec<f64>>,
    orig_b: Vec<f64>,
    /// Index into `orig_a` of the row owning each artificial column.
    art_rows: Vec<usize>,
    basis: Vec<usize>,
    num_vars: usize,
    /// Columns at or beyond this index are artificial.
    first_artificial: usize,
    ncols: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
            .rows
            .iter()
            .map(|r| {
                if r.rhs < 0.0 {
                    let flipped = match r.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (r.coeffs.iter().map(|c| -c).collect(), flipped, -r.rhs)
                } else {
                    (r.coeffs.clone(), r.relation, r.rhs)
                }
            })
            .collect();

        let num_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let num_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let first_artificial = n + num_slack;
        let ncols = first_artificial + num_art;

        let mut a = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut slack = n;
        let mut art = first_artificial;
        let mut art_rows = Vec::with_capacity(num_art);
        for (r, (coeffs, relation, rhs)) in rows.drain(..).enumerate() {
            let mut row = coeffs;
            row.resize(ncols, 0.0);
            match relation {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis.push(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    art_rows.push(r);
                    row[art] = 1.0;
                    basis.push(art);
                    art += 1;
                }
                Relation::Eq => {
                    art_rows.push(r);
                    row[art] = 1.0;
                    basis.push(art);
                    art += 1;
                }
            }
            a.push(row);
            b.push(rhs);
        }
        Self {
            orig_a: a.clone(),
            orig_b: b.clone(),
            art_rows,
            a,
            b,
            basis,
            num_vars: n,
            first_artificial,
            ncols,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        self.b[r] /= p;
        self.a[r][c] = 1.0;
        let pivot_row = self.a[r].clone();
        let pivot_rhs = self.b[r];
        for i in 0..self.a.len() {
            if i == r {
                continue;
            }
            let f = self.a[i][c];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in self.a[i].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.a[i][c] = 0.0;
            self.b[i] -= f * pivot_rhs;
            if self.b[i] < 0.0 && self.b[i] > -FEAS_TOL {
                self.b[i] = 0.0;
            }
        }
        self.basis[r] = c;
        self.refactor();
    }

    /// Recomputes `B^-1 [A | b]` for the current basis from the original rows.
    fn refactor(&mut self) {
        let m = self.basis.len();
        let basis = DMatrix::from_fn(m, m, |i, k| self.orig_a[i][self.basis[k]]);
        let rhs = DMatrix::from_fn(m, self.ncols + 1, |i, j| {
            if j < self.ncols {
                self.orig_a[i][j]
            } else {
                self.orig_b[i]
            }
        });
        let Some(sol) = basis.lu().solve(&rhs) else {
            return;
        };
        if sol.iter().any(|v| !v.is_finite()) {
            return;
        }
        for i in 0..m {
            for j in 0..self.ncols {
                let v = sol[(i, j)];
                self.a[i][j] = if v.abs() < ZERO_TOL { 0.0 } else { v };
            }
            let v = sol[(i, self.ncols)];
            self.b[i] = if v.abs() < ZERO_TOL || (v < 0.0 && v > -FEAS_TOL) {
                0.0
            } else {
                v
            };
        }
        for (k, &c) in self.basis.iter().enumerate() {
            for i in 0..m {
                self.a[i][c] = if i == k { 1.0 } else { 0.0 };
            }
        }
    }

    /// Maximizes `cost` over columns `< limit`; returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], limit: usize, pivots: &mut usize) -> Option<bool> {
        loop {
            if *pivots >= MAX_PIVOTS {
                return None;
            }
            let entering = (0..limit).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .zip(&self.a)
                        .map(|(&bi, row)| cost[bi] * row[j])
                        .sum::<f64>();
                reduced > OPT_TOL
            });
            let Some(c) = entering else {
                return Some(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let coef = self.a[i][c];
                if coef <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.b[i] / coef;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - 1e-14
                            || (ratio <= best + 1e-14 && self.basis[i] < self.basis[k])
                        {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Some(false);
            };
            self.pivot(r, c);
            *pivots += 1;
        }
    }

    fn run(mut self, objective: &[f64]) -> LpOutcome {
        let mut pivots = 0;
        if self.first_artificial < self.ncols {
            let mut phase1 = vec![0.0; self.ncols];
            for v in phase1.iter_mut().skip(self.first_artificial) {
                *v = -1.0;
            }
            if self.optimize(&phase1, self.ncols, &mut pivots).is_none() {
                return LpOutcome::IterationLimit;
            }
            let infeasibility: f64 = self
                .basis
                .iter()
                .zip(&self.b)
                .filter(|(&bi, _)| bi >= self.first_artificial)
                .map(|(_, &v)| v)
                .sum();
            let scale = self.b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
            if infeasibility > FEAS_TOL * scale {
                return LpOutcome::Infeasible;
            }
            // Drive zero-valued artificials out of the basis; rows where that is
            // impossible are linearly dependent and are dropped.
            let mut i = 0;
            while i < self.a.len() {
                if self.basis[i] < self.first_artificial {
                    i += 1;
                    continue;
                }
                let col = (0..self.first_artificial)
                    .filter(|j| !self.basis.contains(j))
                    .max_by(|&x, &y| self.a[i][x].abs().total_cmp(&self.a[i][y].abs()))
                    .filter(|&j| self.a[i][j].abs() > 1e-9);
                match col {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        // The artificial's own row is a combination of the others.
                        let r = self.art_rows[self.basis[i] - self.first_artificial];
                        self.orig_a.remove(r);
                        self.orig_b.remove(r);
                        for v in self.art_rows.iter_mut().filter(|v| **v > r) {
                            *v -= 1;
                        }
                        self.a.remove(i);
                        self.b.remove(i);
                        self.basis.remove(i);
                    }
                }
            }
        }

        let mut cost = vec![0.0; self.ncols];
        cost[..self.num_vars].copy_from_slice(objective);
        match self.optimize(&cost, self.first_artificial, &mut pivots) {
            None => LpOutcome::IterationLimit,
            Some(false) => LpOutcome::Unbounded,
            Some(true) => {
                let mut x = vec![0.0; self.num_vars];
                for (&bi, &v) in self.basis.iter().zip(&self.b) {
                    if bi < self.num_vars {
                        x[bi] = v.max(0.0);
                    }
                }
                let objective = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                LpOutcome::Optimal { x, objective }
            }
        }
    }
}
