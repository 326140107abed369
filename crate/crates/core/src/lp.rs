//! Dense two-phase simplex with Bland's rule, for tiny programs.

const PIVOT_EPS: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Cmp {
    Le,
    Ge,
    Eq,
}

/// minimise c·x subject to rows and x ≥ 0.
#[derive(Clone, Debug, Default)]
pub(crate) struct Lp {
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Cmp, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl Lp {
    pub fn new(n_vars: usize) -> Self {
        Self { c: vec![0.0; n_vars], rows: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add(&mut self, coeffs: &[(usize, f64)], cmp: Cmp, rhs: f64) {
        let mut row = vec![0.0; self.n_vars()];
        for &(j, a) in coeffs {
            row[j] += a;
        }
        self.rows.push((row, cmp, rhs));
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    // m constraint rows plus the objective row last; rhs in the last column.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_orig: usize,
    n_total: usize,
    artificial: Vec<bool>,
}

impl Tableau {
    fn build(lp: &Lp) -> Self {
        let n = lp.n_vars();
        let m = lp.rows.len();
        let mut n_slack = 0;
        let mut n_art = 0;
        let norm: Vec<(Vec<f64>, Cmp, f64)> = lp
            .rows
            .iter()
            .map(|(a, cmp, b)| {
                if *b < 0.0 {
                    let flipped = match cmp {
                        Cmp::Le => Cmp::Ge,
                        Cmp::Ge => Cmp::Le,
                        Cmp::Eq => Cmp::Eq,
                    };
                    (a.iter().map(|v| -v).collect(), flipped, -b)
                } else {
                    (a.clone(), *cmp, *b)
                }
            })
            .collect();
        for (_, cmp, _) in &norm {
            match cmp {
                Cmp::Le => n_slack += 1,
                Cmp::Ge => {
                    n_slack += 1;
                    n_art += 1
                }
                Cmp::Eq => n_art += 1,
            }
        }
        let n_total = n + n_slack + n_art;
        let mut t = vec![vec![0.0; n_total + 1]; m + 1];
        let mut basis = vec![0; m];
        let mut artificial = vec![false; n_total];
        let (mut next_slack, mut next_art) = (n, n + n_slack);
        for (i, (a, cmp, b)) in norm.iter().enumerate() {
            t[i][..n].copy_from_slice(a);
            t[i][n_total] = *b;
            match cmp {
                Cmp::Le => {
                    t[i][next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Cmp::Ge => {
                    t[i][next_slack] = -1.0;
                    next_slack += 1;
                    t[i][next_art] = 1.0;
                    artificial[next_art] = true;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Cmp::Eq => {
                    t[i][next_art] = 1.0;
                    artificial[next_art] = true;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
        Self { t, basis, n_orig: n, n_total, artificial }
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    /// Writes reduced costs of `cost` into the objective row.
    fn set_objective(&mut self, cost: &[f64]) {
        let m = self.m();
        let w = self.n_total + 1;
        let mut obj = vec![0.0; w];
        obj[..cost.len()].copy_from_slice(cost);
        for i in 0..m {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..w {
                    obj[j] -= cb * self.t[i][j];
                }
            }
        }
        self.t[m] = obj;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.n_total + 1;
        let p = self.t[r][c];
        for j in 0..w {
            self.t[r][j] /= p;
        }
        for i in 0..=self.m() {
            if i != r {
                let f = self.t[i][c];
                if f != 0.0 {
                    for j in 0..w {
                        self.t[i][j] -= f * self.t[r][j];
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule iterations; false if unbounded.
    fn iterate(&mut self, allowed: &dyn Fn(usize) -> bool) -> bool {
        let m = self.m();
        let rhs = self.n_total;
        loop {
            let Some(c) = (0..self.n_total).find(|&j| allowed(j) && self.t[m][j] < -PIVOT_EPS) else {
                return true;
            };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..m {
                let a = self.t[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][rhs] / a;
                    let better = match best {
                        None => true,
                        Some((r, k)) => ratio < r - 1e-14 || (ratio <= r + 1e-14 && self.basis[i] < self.basis[k]),
                    };
                    if better {
                        best = Some((ratio, i));
                    }
                }
            }
            match best {
                Some((_, r)) => self.pivot(r, c),
                None => return false,
            }
        }
    }

    fn run(mut self, lp: &Lp) -> LpOutcome {
        let m = self.m();
        let rhs = self.n_total;
        if self.artificial.iter().any(|&a| a) {
            let phase1: Vec<f64> = self.artificial.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
            self.set_objective(&phase1);
            self.iterate(&|_| true);
            if -self.t[m][rhs] > 1e-9 {
                return LpOutcome::Infeasible;
            }
            // Drive zero-level artificials out of the basis where possible.
            for i in 0..m {
                if self.artificial[self.basis[i]] {
                    if let Some(j) = (0..self.n_total).find(|&j| !self.artificial[j] && self.t[i][j].abs() > PIVOT_EPS) {
                        self.pivot(i, j);
                    }
                }
            }
        }
        self.set_objective(&lp.c);
        let art = self.artificial.clone();
        if !self.iterate(&|j| !art[j]) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![0.0; self.n_orig];
        for i in 0..m {
            if self.basis[i] < self.n_orig {
                x[self.basis[i]] = self.t[i][rhs];
            }
        }
        let value = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { value, x }
    }
}
