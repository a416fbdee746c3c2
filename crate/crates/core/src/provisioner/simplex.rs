//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Purpose-built for the provisioning programs: minimize `c·x` subject to
//! rows `a·x ≤ b` or `a·x ≥ b` and `x ≥ 0`. The instances are small (tens
//! of variables, a handful of rows), so the solver keeps a plain dense
//! tableau and favors auditability over sparsity tricks: every optimum is
//! re-verified against the original data via primal/dual feasibility,
//! complementary slackness, and strong duality before it is returned.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Row sense; variables are implicitly nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    /// Constraint name surfaced in infeasibility certificates.
    pub name: String,
    pub coeffs: Vec<f64>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// `minimize · x` subject to `rows`, `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lp {
    pub minimize: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per input row (0 for redundant rows).
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    Malformed { reason: String },
    /// No feasible point: `row` is the constraint phase 1 could not satisfy
    /// and `shortfall` how far it remained from its right-hand side.
    Infeasible { row: String, shortfall: f64 },
    Unbounded,
    /// The computed optimum failed the independent optimality audit.
    SelfCheck { reason: String },
}

impl core::fmt::Display for LpError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LpError::Malformed { reason } => write!(f, "malformed program: {reason}"),
            LpError::Infeasible { row, shortfall } => {
                write!(f, "infeasible: `{row}` misses its bound by {shortfall}")
            }
            LpError::Unbounded => write!(f, "objective is unbounded below"),
            LpError::SelfCheck { reason } => write!(f, "optimality audit failed: {reason}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LpError {}

/// Pivot tolerance: entries smaller than this are treated as zero.
const EPS: f64 = 1e-9;
/// Relative tolerance of the post-solve optimality audit.
const AUDIT_TOL: f64 = 1e-7;

/// Column layout: `[structural (n)] [slack/surplus (m)] [artificial (k)]`.
struct Tableau {
    a: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// Row index each artificial column belongs to.
    artificial_row: Vec<usize>,
    n_structural: usize,
    n_cols: usize,
    /// Input rows whose sign was flipped to normalize `rhs ≥ 0`.
    flipped: Vec<bool>,
    /// Map from tableau row to input row (phase 1 may drop redundant rows).
    source_row: Vec<usize>,
}

impl Tableau {
    fn build(lp: &Lp) -> Tableau {
        let n = lp.minimize.len();
        let m = lp.rows.len();
        let mut flipped = vec![false; m];
        let mut senses = Vec::with_capacity(m);
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        for (i, row) in lp.rows.iter().enumerate() {
            let flip = row.rhs < 0.0;
            flipped[i] = flip;
            let s = if flip { -1.0 } else { 1.0 };
            a.push(row.coeffs.iter().map(|&c| c * s).collect());
            rhs.push(row.rhs * s);
            senses.push(match (row.cmp, flip) {
                (Cmp::Le, false) | (Cmp::Ge, true) => Cmp::Le,
                _ => Cmp::Ge,
            });
        }
        // Slack (+1) per Le row; surplus (−1) plus an artificial per Ge row.
        let n_artificial = senses.iter().filter(|&&s| s == Cmp::Ge).count();
        let n_cols = n + m + n_artificial;
        let mut artificial_row = Vec::with_capacity(n_artificial);
        let mut basis = Vec::with_capacity(m);
        for (i, row) in a.iter_mut().enumerate() {
            row.resize(n_cols, 0.0);
            match senses[i] {
                Cmp::Le => {
                    row[n + i] = 1.0;
                    basis.push(n + i);
                }
                Cmp::Ge => {
                    row[n + i] = -1.0;
                    let col = n + m + artificial_row.len();
                    row[col] = 1.0;
                    artificial_row.push(i);
                    basis.push(col);
                }
            }
        }
        Tableau {
            a,
            rhs,
            basis,
            artificial_row,
            n_structural: n,
            n_cols,
            flipped,
            source_row: (0..m).collect(),
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        self.rhs[row] /= p;
        for i in 0..self.a.len() {
            if i == row {
                continue;
            }
            let f = self.a[i][col];
            if f == 0.0 {
                continue;
            }
            for j in 0..self.n_cols {
                self.a[i][j] -= f * self.a[row][j];
            }
            self.rhs[i] -= f * self.rhs[row];
        }
        self.basis[row] = col;
    }

    /// Reduced-cost row for objective `c` (extended with zeros) under the
    /// current basis, and the current objective value.
    fn reduced_costs(&self, c: &[f64]) -> (Vec<f64>, f64) {
        let mut r: Vec<f64> = (0..self.n_cols)
            .map(|j| c.get(j).copied().unwrap_or(0.0))
            .collect();
        let mut value = 0.0;
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = c.get(b).copied().unwrap_or(0.0);
            if cb == 0.0 {
                continue;
            }
            value += cb * self.rhs[i];
            for j in 0..self.n_cols {
                r[j] -= cb * self.a[i][j];
            }
        }
        (r, value)
    }

    /// Run Bland-rule simplex on objective `c` over columns `< active`.
    /// Maintains `r` incrementally. `Some(true)` = optimal, `Some(false)` =
    /// unbounded, `None` = pivot-count safety cap exceeded.
    fn optimize(&mut self, r: &mut [f64], active: usize) -> Option<bool> {
        // Bland's rule terminates in finitely many pivots; the cap only
        // guards against tolerance-induced stalls.
        let mut budget = 1000 * (self.n_cols + 1);
        loop {
            budget = budget.checked_sub(1)?;
            // Bland: entering column = lowest index with negative reduced cost.
            let Some(col) = (0..active).find(|&j| r[j] < -EPS) else {
                return Some(true);
            };
            // Leaving row: minimum ratio, ties to the lowest basic index.
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let a = self.a[i][col];
                if a > EPS {
                    let ratio = self.rhs[i] / a;
                    let replace = match leave {
                        None => true,
                        Some((bi, br)) => {
                            ratio < br - EPS
                                || (ratio < br + EPS && self.basis[i] < self.basis[bi])
                        }
                    };
                    if replace {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Some(false);
            };
            self.pivot(row, col);
            // The pivot is elementary row elimination on r as well.
            let f = r[col];
            if f != 0.0 {
                for j in 0..self.n_cols {
                    r[j] -= f * self.a[row][j];
                }
            }
        }
    }
}

/// Solve `lp` to an optimal vertex, or report why none exists. The returned
/// solution has passed the complementary-slackness audit against the
/// original (un-normalized) program data.
pub fn solve(lp: &Lp) -> Result<LpSolution, LpError> {
    let n = lp.minimize.len();
    for (i, row) in lp.rows.iter().enumerate() {
        if row.coeffs.len() != n {
            return Err(LpError::Malformed {
                reason: format!("row {i} has {} coefficients, expected {n}", row.coeffs.len()),
            });
        }
        if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed {
                reason: format!("row {i} has a non-finite entry"),
            });
        }
    }
    if lp.minimize.iter().any(|c| !c.is_finite()) {
        return Err(LpError::Malformed {
            reason: String::from("objective has a non-finite entry"),
        });
    }

    let mut t = Tableau::build(lp);

    // Phase 1: minimize the sum of artificial variables. Artificials start
    // basic and are barred from re-entering (entering columns stop at the
    // artificial floor), the delete-on-leave treatment: feasibility is
    // preserved because any feasible point has all artificials at zero.
    if !t.artificial_row.is_empty() {
        let artificial_floor = t.n_structural + t.a.len();
        let mut c1 = vec![0.0; t.n_cols];
        for j in artificial_floor..t.n_cols {
            c1[j] = 1.0;
        }
        let (mut r, _) = t.reduced_costs(&c1);
        match t.optimize(&mut r, artificial_floor) {
            Some(true) => {}
            Some(false) => {
                return Err(LpError::SelfCheck {
                    reason: String::from("phase 1 reported unbounded"),
                })
            }
            None => {
                return Err(LpError::SelfCheck {
                    reason: String::from("phase 1 exceeded the pivot budget"),
                })
            }
        }
        // Any artificial still basic at a positive level certifies an
        // unsatisfiable row.
        for i in 0..t.a.len() {
            if t.basis[i] >= artificial_floor && t.rhs[i] > EPS.max(1e-7 * rhs_scale(lp)) {
                let src = t.source_row[t.artificial_row[t.basis[i] - artificial_floor]];
                return Err(LpError::Infeasible {
                    row: lp.rows[src].name.clone(),
                    shortfall: t.rhs[i],
                });
            }
        }
        // Drive degenerate artificials out of the basis; rows that admit no
        // pivot are linear combinations of others and are dropped.
        let mut i = 0;
        while i < t.a.len() {
            if t.basis[i] >= artificial_floor {
                match (0..artificial_floor).find(|&j| t.a[i][j].abs() > EPS) {
                    Some(j) => t.pivot(i, j),
                    None => {
                        t.a.remove(i);
                        t.rhs.remove(i);
                        t.basis.remove(i);
                        t.source_row.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    // Phase 2 over structural + slack/surplus columns only.
    let active = t.n_structural + lp.rows.len();
    let (mut r, _) = t.reduced_costs(&lp.minimize);
    match t.optimize(&mut r, active) {
        Some(true) => {}
        Some(false) => return Err(LpError::Unbounded),
        None => {
            return Err(LpError::SelfCheck {
                reason: String::from("phase 2 exceeded the pivot budget"),
            })
        }
    }

    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs[i];
        }
    }
    let objective: f64 = lp.minimize.iter().zip(&x).map(|(c, v)| c * v).sum();

    // Duals from the slack/surplus reduced costs: a slack column (+1 in its
    // row) prices to −y, a surplus column (−1) to +y; flipped rows negate.
    // Rows dropped as redundant in phase 1 price to zero.
    let mut present = vec![false; lp.rows.len()];
    for &s in &t.source_row {
        present[s] = true;
    }
    let mut duals = vec![0.0; lp.rows.len()];
    for (i, row) in lp.rows.iter().enumerate() {
        if !present[i] {
            continue;
        }
        let rc = r[n + i];
        let sense = match (row.cmp, t.flipped[i]) {
            (Cmp::Le, false) | (Cmp::Ge, true) => Cmp::Le,
            _ => Cmp::Ge,
        };
        let y = match sense {
            Cmp::Le => -rc,
            Cmp::Ge => rc,
        };
        duals[i] = if t.flipped[i] { -y } else { y };
    }

    let solution = LpSolution { x, objective, duals };
    audit(lp, &solution)?;
    Ok(solution)
}

fn rhs_scale(lp: &Lp) -> f64 {
    lp.rows.iter().fold(1.0, |s, r| s.max(r.rhs.abs()))
}

/// Independent optimality audit: primal and dual feasibility, complementary
/// slackness, and strong duality, all against the original program data.
fn audit(lp: &Lp, sol: &LpSolution) -> Result<(), LpError> {
    let fail = |reason: String| Err(LpError::SelfCheck { reason });
    let scale = rhs_scale(lp).max(sol.objective.abs());
    let tol = AUDIT_TOL * scale;
    for (j, &v) in sol.x.iter().enumerate() {
        if v < -tol {
            return fail(format!("x[{j}] = {v} is negative"));
        }
    }
    for (i, row) in lp.rows.iter().enumerate() {
        let ax: f64 = row.coeffs.iter().zip(&sol.x).map(|(a, v)| a * v).sum();
        let slack = ax - row.rhs;
        let y = sol.duals[i];
        match row.cmp {
            Cmp::Le => {
                if slack > tol {
                    return fail(format!("`{}` violated by {slack}", row.name));
                }
                if y > tol {
                    return fail(format!("dual of `{}` has the wrong sign", row.name));
                }
            }
            Cmp::Ge => {
                if slack < -tol {
                    return fail(format!("`{}` violated by {}", row.name, -slack));
                }
                if y < -tol {
                    return fail(format!("dual of `{}` has the wrong sign", row.name));
                }
            }
        }
        if y.abs() * slack.abs() > tol * scale.max(1.0) {
            return fail(format!("complementary slackness fails on `{}`", row.name));
        }
    }
    for j in 0..lp.minimize.len() {
        let reduced: f64 = lp.minimize[j]
            - lp
                .rows
                .iter()
                .zip(&sol.duals)
                .map(|(row, y)| row.coeffs[j] * y)
                .sum::<f64>();
        if reduced < -tol {
            return fail(format!("dual infeasible at variable {j}"));
        }
        if sol.x[j].abs() * reduced.abs() > tol * scale.max(1.0) {
            return fail(format!("complementary slackness fails at variable {j}"));
        }
    }
    let dual_objective: f64 = lp.rows.iter().zip(&sol.duals).map(|(r, y)| r.rhs * y).sum();
    if (dual_objective - sol.objective).abs() > tol {
        return fail(format!(
            "duality gap {} between primal {} and dual {dual_objective}",
            (dual_objective - sol.objective).abs(),
            sol.objective
        ));
    }
    Ok(())
}

/// Exhaustive optimum by enumerating every basis of the standard form —
/// the testing oracle for [`solve`]. `None` means infeasible. Cost grows
/// combinatorially; callers keep instances to a handful of rows/columns.
pub fn brute_force_optimum(lp: &Lp) -> Option<f64> {
    let n = lp.minimize.len();
    let m = lp.rows.len();
    if m == 0 {
        return Some(0.0);
    }
    // Standard form with rhs normalized nonnegative: slack +1 / surplus −1.
    let cols = n + m;
    let mut a = vec![vec![0.0; cols]; m];
    let mut b = vec![0.0; m];
    for (i, row) in lp.rows.iter().enumerate() {
        let s = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        for (j, &c) in row.coeffs.iter().enumerate() {
            a[i][j] = c * s;
        }
        b[i] = row.rhs * s;
        let le = matches!(
            (row.cmp, row.rhs < 0.0),
            (Cmp::Le, false) | (Cmp::Ge, true)
        );
        a[i][n + i] = if le { 1.0 } else { -1.0 };
    }

    let mut best: Option<f64> = None;
    let mut pick: Vec<usize> = (0..m).collect();
    loop {
        if let Some(xb) = solve_square(&a, &b, &pick) {
            if xb.iter().all(|&v| v >= -1e-9) {
                let obj: f64 = pick
                    .iter()
                    .zip(&xb)
                    .filter(|(&j, _)| j < n)
                    .map(|(&j, &v)| lp.minimize[j] * v)
                    .sum();
                best = Some(match best {
                    None => obj,
                    Some(prev) => prev.min(obj),
                });
            }
        }
        // Next m-combination of columns in lexicographic order.
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] != i + cols - m {
                pick[i] += 1;
                for k in i + 1..m {
                    pick[k] = pick[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Solve the square system over the picked columns by Gaussian elimination
/// with partial pivoting; `None` if singular.
fn solve_square(a: &[Vec<f64>], b: &[f64], pick: &[usize]) -> Option<Vec<f64>> {
    let m = pick.len();
    let mut mat = vec![vec![0.0; m + 1]; m];
    for i in 0..m {
        for (k, &j) in pick.iter().enumerate() {
            mat[i][k] = a[i][j];
        }
        mat[i][m] = b[i];
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| {
            mat[x][col]
                .abs()
                .partial_cmp(&mat[y][col].abs())
                .expect("finite pivots")
        })?;
        if mat[piv][col].abs() < 1e-12 {
            return None;
        }
        mat.swap(col, piv);
        for i in 0..m {
            if i == col {
                continue;
            }
            let f = mat[i][col] / mat[col][col];
            if f == 0.0 {
                continue;
            }
            for j in col..=m {
                mat[i][j] -= f * mat[col][j];
            }
        }
    }
    Some((0..m).map(|i| mat[i][m] / mat[i][i]).collect())
}
