//! Dense bounded-variable simplex (dual and primal) over a generic scalar.
//!
//! Every row `i` gets a logical variable `r_i = a_i · x` carrying the row's
//! bounds, so the system is `[A | -I] z = 0` and the initial basis consists of
//! the logicals. The tableau stores `B⁻¹ [A | -I]` explicitly, which is cheap
//! to update and to copy between branch-and-bound nodes at desk scale.

use crate::model::{Milp, Relation};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pos {
    Basic,
    Lower,
    Upper,
    /// Nonbasic strictly between (or without) bounds; value kept as is.
    Free,
}

/// Temporary bound used to make unbounded columns dual feasible.
const BOX: f64 = 1e7;

#[derive(Clone, Debug)]
pub struct Tableau<T: Scalar> {
    n: usize,
    m: usize,
    w: usize,
    tab: Vec<T>,
    basis: Vec<usize>,
    pos: Vec<Pos>,
    value: Vec<T>,
    d: Vec<T>,
    cost: Vec<T>,
    lo: Vec<Option<T>>,
    hi: Vec<Option<T>>,
    /// Artificial bound side per column, if any.
    boxed: Vec<Option<Pos>>,
    rows: Vec<Vec<(usize, T)>>,
    pub iterations: usize,
    pub refactorizations: usize,
}

impl<T: Scalar> Tableau<T> {
    /// Builds the slack-basis tableau of the continuous relaxation.
    pub fn from_milp(milp: &Milp) -> Self {
        let n = milp.num_vars();
        let m = milp.num_constraints();
        let w = n + m;
        let mut lo = Vec::with_capacity(w);
        let mut hi = Vec::with_capacity(w);
        let mut cost = vec![T::zero(); w];
        for v in &milp.vars {
            lo.push(v.lower.as_ref().map(T::from_rational));
            hi.push(v.upper.as_ref().map(T::from_rational));
        }
        for (v, c) in &milp.objective.terms {
            cost[v.0] = cost[v.0].add(&T::from_rational(c));
        }
        let mut rows = Vec::with_capacity(m);
        for c in &milp.constraints {
            let rhs = T::from_rational(&c.rhs);
            let (l, h) = match c.rel {
                Relation::Le => (None, Some(rhs)),
                Relation::Ge => (Some(rhs), None),
                Relation::Eq => (Some(rhs.clone()), Some(rhs)),
            };
            lo.push(l);
            hi.push(h);
            rows.push(
                c.expr
                    .terms
                    .iter()
                    .map(|(v, a)| (v.0, T::from_rational(a)))
                    .collect::<Vec<_>>(),
            );
        }
        let mut t = Tableau {
            n,
            m,
            w,
            tab: Vec::new(),
            basis: Vec::new(),
            pos: vec![Pos::Lower; w],
            value: vec![T::zero(); w],
            d: cost.clone(),
            cost,
            lo,
            hi,
            boxed: vec![None; w],
            rows,
            iterations: 0,
            refactorizations: 0,
        };
        t.slack_basis();
        t
    }

    pub fn num_structural(&self) -> usize {
        self.n
    }

    fn slack_basis(&mut self) {
        let (n, m, w) = (self.n, self.m, self.w);
        self.tab = vec![T::zero(); m * w];
        for (i, row) in self.rows.iter().enumerate() {
            for (j, a) in row {
                let cell = &mut self.tab[i * w + j];
                *cell = cell.sub(a);
            }
            self.tab[i * w + n + i] = T::one();
        }
        self.basis = (n..w).collect();
        for j in 0..w {
            self.pos[j] = if j >= n { Pos::Basic } else { Pos::Lower };
        }
        for j in 0..n {
            self.place_nonbasic(j);
        }
        self.compute_duals();
        for j in 0..n {
            self.place_nonbasic(j);
        }
        self.compute_values();
    }

    /// Puts a nonbasic column at the bound that makes its reduced cost dual feasible.
    fn place_nonbasic(&mut self, j: usize) {
        let want_upper = self.d[j] < T::zero();
        let (lo, hi) = (self.lo[j].clone(), self.hi[j].clone());
        let (p, v) = match (lo, hi) {
            (Some(l), Some(h)) => {
                if want_upper {
                    (Pos::Upper, h)
                } else {
                    (Pos::Lower, l)
                }
            }
            (Some(l), None) => (Pos::Lower, l),
            (None, Some(h)) => (Pos::Upper, h),
            (None, None) => (Pos::Free, T::zero()),
        };
        self.pos[j] = p;
        self.value[j] = v;
    }

    fn is_fixed(&self, j: usize) -> bool {
        matches!((&self.lo[j], &self.hi[j]), (Some(l), Some(h)) if !(l < h))
    }

    fn compute_values(&mut self) {
        let w = self.w;
        for r in 0..self.m {
            let mut acc = T::zero();
            let row = &self.tab[r * w..(r + 1) * w];
            for j in 0..w {
                if self.pos[j] != Pos::Basic && !row[j].negligible() {
                    acc.sub_mul_assign(&row[j], &self.value[j]);
                }
            }
            self.value[self.basis[r]] = acc;
        }
    }

    fn compute_duals(&mut self) {
        let w = self.w;
        self.d = self.cost.clone();
        for r in 0..self.m {
            let cb = self.cost[self.basis[r]].clone();
            if cb.negligible() {
                continue;
            }
            let row = &self.tab[r * w..(r + 1) * w];
            for j in 0..w {
                if !row[j].negligible() {
                    self.d[j].sub_mul_assign(&cb, &row[j]);
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = T::zero();
        }
    }

    pub fn objective(&self) -> T {
        let mut acc = T::zero();
        for j in 0..self.n {
            if !self.cost[j].negligible() {
                acc = acc.add(&self.cost[j].mul(&self.value[j]));
            }
        }
        acc
    }

    /// Values of the structural variables.
    pub fn primal(&self) -> Vec<T> {
        self.value[..self.n].to_vec()
    }

    pub fn value_of(&self, j: usize) -> &T {
        &self.value[j]
    }

    pub fn bounds(&self, j: usize) -> (Option<T>, Option<T>) {
        (self.lo[j].clone(), self.hi[j].clone())
    }

    /// Changes the bounds of a structural column, keeping the basis.
    pub fn set_bounds(&mut self, j: usize, lo: Option<T>, hi: Option<T>) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        self.boxed[j] = None;
        if self.pos[j] == Pos::Basic {
            return;
        }
        let old = self.value[j].clone();
        let new = match (self.pos[j], &self.lo[j], &self.hi[j]) {
            (Pos::Upper, _, Some(h)) => h.clone(),
            (Pos::Lower, Some(l), _) => l.clone(),
            (_, Some(l), Some(h)) => {
                self.pos[j] = if self.d[j] < T::zero() { Pos::Upper } else { Pos::Lower };
                if self.pos[j] == Pos::Upper {
                    h.clone()
                } else {
                    l.clone()
                }
            }
            (_, Some(l), None) => {
                self.pos[j] = Pos::Lower;
                l.clone()
            }
            (_, None, Some(h)) => {
                self.pos[j] = Pos::Upper;
                h.clone()
            }
            (_, None, None) => {
                self.pos[j] = Pos::Free;
                old.clone()
            }
        };
        self.shift_nonbasic(j, new.sub(&old));
        self.value[j] = new;
    }

    fn shift_nonbasic(&mut self, j: usize, delta: T) {
        if delta.negligible() && !T::EXACT {
            return;
        }
        let w = self.w;
        for r in 0..self.m {
            let a = &self.tab[r * w + j];
            if !a.negligible() {
                let b = self.basis[r];
                let a = a.clone();
                self.value[b].sub_mul_assign(&a, &delta);
            }
        }
    }

    fn infeasibility(&self, j: usize) -> Option<(T, bool)> {
        let v = &self.value[j];
        if let Some(l) = &self.lo[j] {
            let gap = l.sub(v);
            if gap > T::feas_tol() {
                return Some((gap, false));
            }
        }
        if let Some(h) = &self.hi[j] {
            let gap = v.sub(h);
            if gap > T::feas_tol() {
                return Some((gap, true));
            }
        }
        None
    }

    fn dual_infeasible(&self, j: usize) -> bool {
        if self.pos[j] == Pos::Basic || self.is_fixed(j) {
            return false;
        }
        let tol = T::opt_tol();
        let d = &self.d[j];
        match self.pos[j] {
            Pos::Lower => d.neg() > tol,
            Pos::Upper => *d > tol,
            _ => d.abs() > tol,
        }
    }

    /// Makes the basis dual feasible by moving nonbasic columns to the right bound,
    /// boxing columns whose required bound is infinite.
    fn restore_dual_feasibility(&mut self) {
        let mut moved = false;
        for j in 0..self.w {
            if !self.dual_infeasible(j) {
                continue;
            }
            let up = self.d[j] < T::zero();
            if up {
                if self.hi[j].is_none() {
                    let base = self.lo[j].clone().unwrap_or_else(T::zero);
                    self.hi[j] = Some(base.add(&T::from_i64(BOX as i64)));
                    self.boxed[j] = Some(Pos::Upper);
                }
            } else if self.lo[j].is_none() {
                let base = self.hi[j].clone().unwrap_or_else(T::zero);
                self.lo[j] = Some(base.sub(&T::from_i64(BOX as i64)));
                self.boxed[j] = Some(Pos::Lower);
            }
            let old = self.value[j].clone();
            let (p, v) = if up {
                (Pos::Upper, self.hi[j].clone().unwrap())
            } else {
                (Pos::Lower, self.lo[j].clone().unwrap())
            };
            self.pos[j] = p;
            self.value[j] = v.clone();
            if !T::EXACT {
                self.shift_nonbasic(j, v.sub(&old));
            }
            moved = true;
        }
        if moved && T::EXACT {
            self.compute_values();
        }
    }

    /// Solves from the current basis. Returns the final status.
    pub fn solve(&mut self, iter_limit: usize) -> LpStatus {
        let start = self.iterations;
        loop {
            self.restore_dual_feasibility();
            let st = self.dual_simplex(start + iter_limit);
            if st != LpStatus::Optimal {
                if st == LpStatus::Infeasible && self.boxed.iter().any(|b| b.is_some()) {
                    // the box may be what made it infeasible; let primal phase decide
                    self.unbox();
                    self.compute_values();
                    return self.primal_from_scratch(start + iter_limit);
                }
                return st;
            }
            if self.boxed.iter().any(|b| b.is_some()) {
                self.unbox();
                self.compute_values();
                let st = self.primal_simplex(start + iter_limit);
                if st != LpStatus::Optimal {
                    return st;
                }
            }
            if self.check_residual() {
                return LpStatus::Optimal;
            }
            self.refactor();
            if self.iterations > start + iter_limit {
                return LpStatus::IterationLimit;
            }
        }
    }

    fn unbox(&mut self) {
        for j in 0..self.w {
            let Some(side) = self.boxed[j].take() else {
                continue;
            };
            if side == Pos::Upper {
                self.hi[j] = None;
            } else {
                self.lo[j] = None;
            }
            if self.pos[j] == side {
                self.pos[j] = Pos::Free;
            }
        }
    }

    /// Composite primal method when no dual-feasible start is usable: minimise
    /// the sum of infeasibilities first, then the real objective.
    fn primal_from_scratch(&mut self, limit: usize) -> LpStatus {
        let real_cost = self.cost.clone();
        let status = loop {
            let mut phase1 = vec![T::zero(); self.w];
            let mut any = false;
            for &b in &self.basis {
                if let Some((_, above)) = self.infeasibility(b) {
                    phase1[b] = if above { T::one() } else { T::one().neg() };
                    any = true;
                }
            }
            if !any {
                break None;
            }
            self.cost = phase1;
            self.compute_duals();
            if self.no_improving_phase1_column() {
                break Some(LpStatus::Infeasible);
            }
            if self.iterations >= limit {
                break Some(LpStatus::IterationLimit);
            }
            let one_step = self.iterations + 1;
            if self.primal_loop(one_step, true) == LpStatus::Unbounded {
                break Some(LpStatus::Infeasible);
            }
        };
        self.cost = real_cost;
        self.compute_duals();
        match status {
            Some(st) => st,
            None => self.primal_simplex(limit),
        }
    }

    fn no_improving_phase1_column(&self) -> bool {
        (0..self.w).all(|j| self.entering_direction(j).is_none())
    }

    fn entering_direction(&self, j: usize) -> Option<bool> {
        if self.pos[j] == Pos::Basic || self.is_fixed(j) {
            return None;
        }
        let tol = T::opt_tol();
        let d = &self.d[j];
        let can_inc = self.hi[j].as_ref().map_or(true, |h| self.value[j] < *h);
        let can_dec = self.lo[j].as_ref().map_or(true, |l| self.value[j] > *l);
        if d.neg() > tol && can_inc {
            Some(true)
        } else if *d > tol && can_dec {
            Some(false)
        } else {
            None
        }
    }

    fn dual_simplex(&mut self, limit: usize) -> LpStatus {
        let w = self.w;
        let mut degenerate = 0usize;
        let mut retried = false;
        loop {
            if self.iterations >= limit {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate > 50;
            // leaving row
            let mut leave: Option<(usize, T, bool)> = None;
            for r in 0..self.m {
                let b = self.basis[r];
                if let Some((gap, above)) = self.infeasibility(b) {
                    let better = match &leave {
                        None => true,
                        Some((rr, g, _)) => {
                            if bland {
                                b < self.basis[*rr]
                            } else {
                                gap > *g
                            }
                        }
                    };
                    if better {
                        leave = Some((r, gap, above));
                    }
                }
            }
            let Some((r, _, above)) = leave else {
                return LpStatus::Optimal;
            };
            // ratio test; z_b = -Σ α_j z_j, we need z_b to move towards its violated bound
            let row = &self.tab[r * w..(r + 1) * w];
            let ptol = T::pivot_tol();
            let mut cands: Vec<(usize, T, T)> = Vec::new();
            for j in 0..w {
                let p = self.pos[j];
                if p == Pos::Basic || self.is_fixed(j) {
                    continue;
                }
                let a = &row[j];
                if !(a.abs() > ptol) {
                    continue;
                }
                let a_pos = *a > T::zero();
                // increasing z_j changes z_b by -a
                let ok = match p {
                    Pos::Lower => a_pos == above,
                    Pos::Upper => a_pos != above,
                    _ => true,
                };
                if ok {
                    cands.push((j, self.d[j].abs(), a.abs()));
                }
            }
            if cands.is_empty() {
                if !T::EXACT && !retried {
                    // drifted basic values can fake infeasibility; recompute once
                    retried = true;
                    self.compute_values();
                    continue;
                }
                return LpStatus::Infeasible;
            }
            retried = false;
            let q = if T::EXACT || bland {
                let mut best = 0;
                for k in 1..cands.len() {
                    let lhs = cands[k].1.mul(&cands[best].2);
                    let rhs = cands[best].1.mul(&cands[k].2);
                    if lhs < rhs {
                        best = k;
                    }
                }
                cands[best].0
            } else {
                // Harris two-pass
                let tol = T::opt_tol();
                let mut theta = f64::INFINITY;
                for (_, d, a) in &cands {
                    theta = theta.min((d.add(&tol)).div(a).to_f64());
                }
                let mut best: Option<usize> = None;
                for (k, (_, d, a)) in cands.iter().enumerate() {
                    if d.div(a).to_f64() <= theta {
                        if best.map_or(true, |b| *a > cands[b].2) {
                            best = Some(k);
                        }
                    }
                }
                cands[best.unwrap()].0
            };
            let b = self.basis[r];
            let target = if above {
                self.hi[b].clone().unwrap()
            } else {
                self.lo[b].clone().unwrap()
            };
            let step = self.d[q].abs().div(&self.tab[r * w + q].abs());
            if step.negligible() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, q, target, if above { Pos::Upper } else { Pos::Lower });
        }
    }

    fn primal_simplex(&mut self, limit: usize) -> LpStatus {
        self.primal_loop(limit, false)
    }

    /// With `phase1`, basic variables may sit outside their bounds and only
    /// block once they reach them from the infeasible side.
    fn primal_loop(&mut self, limit: usize, phase1: bool) -> LpStatus {
        let w = self.w;
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= limit {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate > 50;
            let mut enter: Option<(usize, bool)> = None;
            let mut best = T::zero();
            for j in 0..w {
                if let Some(up) = self.entering_direction(j) {
                    if bland {
                        enter = Some((j, up));
                        break;
                    }
                    let s = self.d[j].abs();
                    if enter.is_none() || s > best {
                        best = s;
                        enter = Some((j, up));
                    }
                }
            }
            let Some((q, up)) = enter else {
                return LpStatus::Optimal;
            };
            // step limit from q's own opposite bound
            let mut t_best: Option<T> = match (up, &self.lo[q], &self.hi[q]) {
                (true, _, Some(h)) => Some(h.sub(&self.value[q])),
                (false, Some(l), _) => Some(self.value[q].sub(l)),
                _ => None,
            };
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_a = T::zero();
            let ptol = T::pivot_tol();
            for r in 0..self.m {
                let a = &self.tab[r * w + q];
                if !(a.abs() > ptol) {
                    continue;
                }
                // rate of change of z_b per unit step
                let rate = if up { a.neg() } else { a.clone() };
                let b = self.basis[r];
                let z = &self.value[b];
                let (limit_t, to_upper) = if rate > T::zero() {
                    match &self.hi[b] {
                        Some(h) if !(phase1 && *z > h.add(&T::feas_tol())) => {
                            (h.sub(z).div(&rate), true)
                        }
                        _ => match &self.lo[b] {
                            // phase 1: an entry below its lower bound blocks on reaching it
                            Some(l) if phase1 && *z < l.sub(&T::feas_tol()) => {
                                (l.sub(z).div(&rate), false)
                            }
                            _ => continue,
                        },
                    }
                } else {
                    let nrate = rate.neg();
                    match &self.lo[b] {
                        Some(l) if !(phase1 && *z < l.sub(&T::feas_tol())) => {
                            (z.sub(l).div(&nrate), false)
                        }
                        _ => match &self.hi[b] {
                            Some(h) if phase1 && *z > h.add(&T::feas_tol()) => {
                                (z.sub(h).div(&nrate), true)
                            }
                            _ => continue,
                        },
                    }
                };
                let limit_t = if limit_t < T::zero() { T::zero() } else { limit_t };
                let better = match &t_best {
                    None => true,
                    Some(t) => {
                        limit_t < *t
                            || (!T::EXACT
                                && limit_t.sub(t).abs() <= T::feas_tol()
                                && leave.is_some()
                                && a.abs() > leave_a)
                    }
                };
                if better {
                    t_best = Some(limit_t);
                    leave = Some((r, to_upper));
                    leave_a = a.abs();
                }
            }
            let Some(t) = t_best else {
                return LpStatus::Unbounded;
            };
            if t.negligible() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            match leave {
                None => {
                    // bound flip
                    let delta = if up { t } else { t.neg() };
                    self.shift_nonbasic(q, delta.clone());
                    self.value[q] = self.value[q].add(&delta);
                    self.pos[q] = if up { Pos::Upper } else { Pos::Lower };
                    self.iterations += 1;
                }
                Some((r, to_upper)) => {
                    let b = self.basis[r];
                    let target = if to_upper {
                        self.hi[b].clone().unwrap()
                    } else {
                        self.lo[b].clone().unwrap()
                    };
                    self.pivot(r, q, target, if to_upper { Pos::Upper } else { Pos::Lower });
                }
            }
        }
    }

    /// Exchanges basic variable of row `r` with column `q`; the leaving variable
    /// ends at `target` with nonbasic position `side`.
    fn pivot(&mut self, r: usize, q: usize, target: T, side: Pos) {
        let w = self.w;
        let m = self.m;
        let b = self.basis[r];
        let alpha = self.tab[r * w + q].clone();
        // primal update
        let delta = target.sub(&self.value[b]).div(&alpha.neg());
        if !delta.negligible() || T::EXACT {
            for k in 0..m {
                let a = &self.tab[k * w + q];
                if !a.negligible() {
                    let a = a.clone();
                    let bk = self.basis[k];
                    self.value[bk].sub_mul_assign(&a, &delta);
                }
            }
            self.value[q] = self.value[q].add(&delta);
        }
        self.value[b] = target;
        // normalise pivot row and collect its support
        let mut nz: Vec<(usize, T)> = Vec::new();
        for j in 0..w {
            let cell = &mut self.tab[r * w + j];
            if cell.negligible() {
                if !T::EXACT {
                    *cell = T::zero();
                }
                continue;
            }
            *cell = cell.div(&alpha);
            nz.push((j, cell.clone()));
        }
        self.tab[r * w + q] = T::one();
        for k in 0..m {
            if k == r {
                continue;
            }
            let f = self.tab[k * w + q].clone();
            if f.negligible() {
                continue;
            }
            let row = &mut self.tab[k * w..(k + 1) * w];
            for (j, v) in &nz {
                row[*j].sub_mul_assign(&f, v);
                if !T::EXACT && row[*j].negligible() {
                    row[*j] = T::zero();
                }
            }
            row[q] = T::zero();
        }
        let dq = self.d[q].clone();
        if !dq.negligible() {
            for (j, v) in &nz {
                self.d[*j].sub_mul_assign(&dq, v);
            }
        }
        self.d[q] = T::zero();
        self.basis[r] = q;
        self.pos[q] = Pos::Basic;
        self.pos[b] = side;
        self.iterations += 1;
    }

    /// Checks `a_i · x = r_i` on the original rows; returns false when the
    /// tableau has drifted numerically.
    fn check_residual(&self) -> bool {
        if T::EXACT {
            return true;
        }
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = self.value[self.n + i].to_f64().neg();
            for (j, a) in row {
                acc += a.to_f64() * self.value[*j].to_f64();
            }
            if acc.abs() > 1e-7 {
                return false;
            }
        }
        true
    }

    /// Rebuilds `B⁻¹[A | -I]` from the original rows for the current basis.
    pub fn refactor(&mut self) {
        self.refactorizations += 1;
        let (n, m, w) = (self.n, self.m, self.w);
        let wanted: Vec<usize> = self.basis.clone();
        let mut tab = vec![T::zero(); m * w];
        for (i, row) in self.rows.iter().enumerate() {
            for (j, a) in row {
                tab[i * w + j] = tab[i * w + j].sub(a);
            }
            tab[i * w + n + i] = T::one();
        }
        let mut row_used = vec![false; m];
        let mut new_basis = vec![usize::MAX; m];
        for &col in &wanted {
            let mut best: Option<usize> = None;
            for r in 0..m {
                if row_used[r] {
                    continue;
                }
                let a = tab[r * w + col].abs();
                if a > T::pivot_tol() && best.map_or(true, |b| a > tab[b * w + col].abs()) {
                    best = Some(r);
                }
            }
            let Some(r) = best else {
                self.pos[col] = Pos::Lower;
                continue;
            };
            let alpha = tab[r * w + col].clone();
            for j in 0..w {
                tab[r * w + j] = tab[r * w + j].div(&alpha);
            }
            let pivot_row: Vec<T> = tab[r * w..(r + 1) * w].to_vec();
            for k in 0..m {
                if k == r {
                    continue;
                }
                let f = tab[k * w + col].clone();
                if f.negligible() {
                    continue;
                }
                for j in 0..w {
                    if !pivot_row[j].negligible() {
                        tab[k * w + j].sub_mul_assign(&f, &pivot_row[j]);
                    }
                }
            }
            row_used[r] = true;
            new_basis[r] = col;
        }
        // singular leftovers: fill with the row's own logical if available
        for r in 0..m {
            if new_basis[r] == usize::MAX {
                let logical = n + r;
                let a = tab[r * w + logical].clone();
                if !new_basis.contains(&logical) && a.abs() > T::pivot_tol() {
                    for j in 0..w {
                        tab[r * w + j] = tab[r * w + j].div(&a);
                    }
                    new_basis[r] = logical;
                } else {
                    // pick any usable column
                    let col = (0..w)
                        .find(|&j| !new_basis.contains(&j) && tab[r * w + j].abs() > T::pivot_tol())
                        .expect("rank deficient tableau");
                    let a = tab[r * w + col].clone();
                    for j in 0..w {
                        tab[r * w + j] = tab[r * w + j].div(&a);
                    }
                    new_basis[r] = col;
                }
                let col = new_basis[r];
                let pivot_row: Vec<T> = tab[r * w..(r + 1) * w].to_vec();
                for k in 0..m {
                    if k == r {
                        continue;
                    }
                    let f = tab[k * w + col].clone();
                    if !f.negligible() {
                        for j in 0..w {
                            tab[k * w + j].sub_mul_assign(&f, &pivot_row[j]);
                        }
                    }
                }
            }
        }
        self.tab = tab;
        self.basis = new_basis;
        for j in 0..w {
            if self.pos[j] == Pos::Basic && !self.basis.contains(&j) {
                self.pos[j] = Pos::Lower;
                if let Some(l) = self.lo[j].clone() {
                    self.value[j] = l;
                } else if let Some(h) = self.hi[j].clone() {
                    self.pos[j] = Pos::Upper;
                    self.value[j] = h;
                } else {
                    self.pos[j] = Pos::Free;
                }
            }
        }
        for &b in &self.basis {
            self.pos[b] = Pos::Basic;
        }
        self.compute_values();
        self.compute_duals();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rational, LinExpr, Milp, Relation, VarKind};
    use num_rational::BigRational;

    fn r(n: i64, d: i64) -> BigRational {
        rational(n, d)
    }

    #[test]
    fn vertex_cover_relaxation_is_three_halves() {
        let mut m = Milp::new();
        let x: Vec<_> = (1..=3).map(|i| m.add_binary(format!("x{i}")).unwrap()).collect();
        m.add_constraint("", LinExpr::var(x[0]).with(x[1], 1), Relation::Ge, r(1, 1))
            .unwrap();
        m.add_constraint("", LinExpr::var(x[1]).with(x[2], 1), Relation::Ge, r(1, 1))
            .unwrap();
        m.set_objective(LinExpr::var(x[0]).with(x[1], 1).with(x[2], 1));
        let mut t = Tableau::<f64>::from_milp(&m);
        assert_eq!(t.solve(1000), LpStatus::Optimal);
        // the path x1-x2-x3 has LP optimum 1 (x2 = 1); 3/2 needs the triangle
        assert!((t.objective() - 1.0).abs() < 1e-9);
        let mut e = Tableau::<BigRational>::from_milp(&m);
        assert_eq!(e.solve(1000), LpStatus::Optimal);
        assert_eq!(e.objective(), r(1, 1));
    }

    #[test]
    fn free_variable_and_unbounded() {
        let mut m = Milp::new();
        let x = m.add_var("x", VarKind::Continuous, None, None).unwrap();
        m.add_constraint("", LinExpr::var(x), Relation::Ge, r(-3, 1)).unwrap();
        m.set_objective(LinExpr::var(x));
        let mut t = Tableau::<f64>::from_milp(&m);
        assert_eq!(t.solve(1000), LpStatus::Optimal);
        assert!((t.objective() + 3.0).abs() < 1e-9);

        m.set_objective(LinExpr::new().with(x, -1));
        let mut t = Tableau::<f64>::from_milp(&m);
        assert_eq!(t.solve(1000), LpStatus::Unbounded);
    }

    #[test]
    fn infeasible_bounds() {
        let mut m = Milp::new();
        let x = m.add_var("x", VarKind::Continuous, Some(r(0, 1)), None).unwrap();
        m.add_constraint("", LinExpr::var(x), Relation::Ge, r(1, 1)).unwrap();
        m.add_constraint("", LinExpr::var(x), Relation::Le, r(0, 1)).unwrap();
        let mut t = Tableau::<f64>::from_milp(&m);
        assert_eq!(t.solve(1000), LpStatus::Infeasible);
        let mut e = Tableau::<BigRational>::from_milp(&m);
        assert_eq!(e.solve(1000), LpStatus::Infeasible);
    }
}

#[cfg(test)]
mod regression {
    use super::*;
    use crate::model::{rational, LinExpr, Milp, Relation, VarKind};

    #[test]
    fn boxed_free_columns_do_not_fake_infeasibility() {
        let bounds = [(Some(0), None), (Some(-3), None), (None, Some(4)), (None, None), (None, Some(2))];
        let rows: [([i64; 5], u8, i64); 4] = [
            ([2, -2, -1, 0, -1], 0, -4),
            ([1, 1, -1, -2, 1], 0, 1),
            ([0, 1, -2, 2, 2], 2, -1),
            ([3, -1, -1, -2, 2], 1, 5),
        ];
        let obj = [0, 0, 2, -2, -1];
        let mut m = Milp::new();
        let vars: Vec<_> = bounds
            .iter()
            .enumerate()
            .map(|(i, (l, h))| {
                m.add_var(format!("v{i}"), VarKind::Continuous, l.map(|v| rational(v, 1)), h.map(|v| rational(v, 1)))
                    .unwrap()
            })
            .collect();
        for (k, (c, rel, rhs)) in rows.iter().enumerate() {
            let mut e = LinExpr::new();
            for (v, a) in vars.iter().zip(c) {
                e.add_int(*v, *a);
            }
            let rel = [Relation::Le, Relation::Ge, Relation::Eq][*rel as usize];
            m.add_constraint(format!("r{k}"), e, rel, rational(*rhs, 1)).unwrap();
        }
        let mut o = LinExpr::new();
        for (v, c) in vars.iter().zip(&obj) {
            o.add_int(*v, *c);
        }
        m.set_objective(o);
        let mut e = Tableau::<num_rational::BigRational>::from_milp(&m);
        let se = e.solve(1000);
        let mut f = Tableau::<f64>::from_milp(&m);
        let sf = f.solve(1000);
        assert_eq!(se, LpStatus::Optimal);
        assert_eq!(sf, LpStatus::Optimal);
        assert_eq!(e.objective(), rational(14, 3));
        assert!((f.objective() - 14.0 / 3.0).abs() < 1e-9);
    }
}
