//! Difference-bound zones and the zone-DNF normal form for constraints.
//!
//! The constraint grammar is closed under negation, which single convex
//! zones cannot express, so the normal form is a finite union of canonical
//! DBMs over the clock set plus the zero reference clock. Negating a zone
//! yields one facet zone per tightened bound.

use std::fmt;

use num_rational::Ratio;

use crate::timelogic::clocks::{ClockId, Valuation};
use crate::timelogic::constraint::{half_grid, Constraint};
use crate::timelogic::TimeError;

type Rat = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strict {
    /// `<`
    Lt,
    /// `<=`
    Le,
}

/// An upper bound `xi - xj  (< | <=)  c`, or no bound at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Inf,
    At(Rat, Strict),
}

impl Bound {
    const LE_ZERO: Bound = Bound::At(Ratio::new_raw(0, 1), Strict::Le);

    fn tighter_than(&self, other: &Bound) -> bool {
        match (self, other) {
            (_, Bound::Inf) => !matches!(self, Bound::Inf),
            (Bound::Inf, _) => false,
            (Bound::At(c1, s1), Bound::At(c2, s2)) => {
                c1 < c2 || (c1 == c2 && matches!(s1, Strict::Lt) && matches!(s2, Strict::Le))
            }
        }
    }

    fn min(self, other: Bound) -> Bound {
        if self.tighter_than(&other) {
            self
        } else {
            other
        }
    }

    fn add(self, other: Bound) -> Bound {
        match (self, other) {
            (Bound::Inf, _) | (_, Bound::Inf) => Bound::Inf,
            (Bound::At(c1, s1), Bound::At(c2, s2)) => {
                let s = if matches!(s1, Strict::Lt) || matches!(s2, Strict::Lt) {
                    Strict::Lt
                } else {
                    Strict::Le
                };
                Bound::At(c1 + c2, s)
            }
        }
    }

    /// `xj - xi (< | <=) -c`, the complement facet of this bound on `xi - xj`.
    fn negated(&self) -> Bound {
        match self {
            Bound::Inf => Bound::Inf,
            Bound::At(c, Strict::Le) => Bound::At(-c, Strict::Lt),
            Bound::At(c, Strict::Lt) => Bound::At(-c, Strict::Le),
        }
    }

    /// Does the concrete difference `d` satisfy the bound?
    fn admits(&self, d: Rat) -> bool {
        match self {
            Bound::Inf => true,
            Bound::At(c, Strict::Le) => d <= *c,
            Bound::At(c, Strict::Lt) => d < *c,
        }
    }
}

/// A canonical difference-bound matrix over `clocks` plus the reference
/// clock at index 0. Index `i >= 1` is `clocks[i-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dbm {
    dim: usize,
    m: Vec<Bound>,
}

impl Dbm {
    /// The whole non-negative orthant.
    pub fn universe(n_clocks: usize) -> Dbm {
        let dim = n_clocks + 1;
        let mut m = vec![Bound::Inf; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = Bound::LE_ZERO;
        }
        for i in 1..dim {
            // x0 - xi <= 0, i.e. every clock is non-negative
            m[i] = Bound::LE_ZERO;
        }
        Dbm { dim, m }
    }

    fn get(&self, i: usize, j: usize) -> Bound {
        self.m[i * self.dim + j]
    }

    fn set(&mut self, i: usize, j: usize, b: Bound) {
        self.m[i * self.dim + j] = b;
    }

    /// Floyd-Warshall tightening. Returns false when the zone is empty.
    fn canonicalize(&mut self) -> bool {
        let d = self.dim;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let via = self.get(i, k).add(self.get(k, j));
                    if via.tighter_than(&self.get(i, j)) {
                        self.set(i, j, via);
                    }
                }
            }
        }
        (0..d).all(|i| !self.get(i, i).tighter_than(&Bound::LE_ZERO))
    }

    fn and_bound(&self, i: usize, j: usize, b: Bound) -> Option<Dbm> {
        let mut z = self.clone();
        z.set(i, j, b.min(z.get(i, j)));
        if z.canonicalize() {
            Some(z)
        } else {
            None
        }
    }

    fn intersect(&self, other: &Dbm) -> Option<Dbm> {
        let mut z = self.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                z.set(i, j, z.get(i, j).min(other.get(i, j)));
            }
        }
        if z.canonicalize() {
            Some(z)
        } else {
            None
        }
    }

    /// `self` included in `other`; exact for canonical forms.
    fn included_in(&self, other: &Dbm) -> bool {
        (0..self.dim * self.dim).all(|k| !other.m[k].tighter_than(&self.m[k]))
    }

    /// Existentially projects clock `i` away, keeping non-negativity.
    fn free(&mut self, i: usize) {
        for j in 0..self.dim {
            if j != i {
                self.set(i, j, Bound::Inf);
                self.set(j, i, Bound::Inf);
            }
        }
        self.set(0, i, Bound::LE_ZERO);
        self.canonicalize();
    }

    fn assign_zero(&mut self, i: usize) {
        self.free(i);
        self.set(i, 0, Bound::LE_ZERO);
        self.set(0, i, Bound::LE_ZERO);
        self.canonicalize();
    }

    /// Time predecessors: drops lower bounds, keeps upper bounds and clock
    /// differences (differences are invariant under uniform delay).
    fn down(&mut self) {
        for i in 1..self.dim {
            self.set(0, i, Bound::LE_ZERO);
        }
        self.canonicalize();
    }

    fn contains(&self, values: &[Rat]) -> bool {
        debug_assert_eq!(values.len() + 1, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let vi = if i == 0 { Ratio::from_integer(0) } else { values[i - 1] };
                let vj = if j == 0 { Ratio::from_integer(0) } else { values[j - 1] };
                if !self.get(i, j).admits(vi - vj) {
                    return false;
                }
            }
        }
        true
    }
}

/// A finite union of canonical zones sharing one clock set. The empty set
/// of zones is the unsatisfiable constraint.
#[derive(Debug, Clone)]
pub struct ZoneDnf {
    clocks: Vec<ClockId>,
    zones: Vec<Dbm>,
}

impl ZoneDnf {
    pub fn clocks(&self) -> &[ClockId] {
        &self.clocks
    }

    pub fn zone_count(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    fn index_of(&self, c: &ClockId) -> usize {
        1 + self
            .clocks
            .iter()
            .position(|k| k == c)
            .expect("clock resolved during normalization")
    }

    fn push_zone(&mut self, z: Dbm) {
        if self.zones.iter().any(|have| z.included_in(have)) {
            return;
        }
        self.zones.retain(|have| !have.included_in(&z));
        self.zones.push(z);
    }

    /// The conjunction of difference bounds an atom denotes.
    fn atom_bounds(&self, c: &Constraint) -> Vec<(usize, usize, Bound)> {
        match c {
            Constraint::True => vec![],
            Constraint::Gt(x, n) => {
                // x > n  <=>  x0 - x < -n
                let i = self.index_of(x);
                vec![(0, i, Bound::At(-Ratio::from_integer(*n as i64), Strict::Lt))]
            }
            Constraint::EqC(x, n) => {
                let i = self.index_of(x);
                let c = Ratio::from_integer(*n as i64);
                vec![
                    (i, 0, Bound::At(c, Strict::Le)),
                    (0, i, Bound::At(-c, Strict::Le)),
                ]
            }
            Constraint::DiffGt(x, y, n) => {
                // x - y > n  <=>  y - x < -n
                let (ix, iy) = (self.index_of(x), self.index_of(y));
                vec![(iy, ix, Bound::At(-Ratio::from_integer(*n as i64), Strict::Lt))]
            }
            Constraint::DiffEq(x, y, n) => {
                let (ix, iy) = (self.index_of(x), self.index_of(y));
                let c = Ratio::from_integer(*n as i64);
                vec![
                    (ix, iy, Bound::At(c, Strict::Le)),
                    (iy, ix, Bound::At(-c, Strict::Le)),
                ]
            }
            _ => unreachable!("atom_bounds() called on non-atom"),
        }
    }

    fn prune(mut zs: Vec<Dbm>) -> Vec<Dbm> {
        let mut kept: Vec<Dbm> = Vec::new();
        for z in zs.drain(..) {
            if kept.iter().any(|have| z.included_in(have)) {
                continue;
            }
            kept.retain(|have| !have.included_in(&z));
            kept.push(z);
        }
        kept
    }

    /// Zones of `c` (`positive = true`) or of `!c` (`positive = false`).
    /// Negation is pushed to the atoms, so disjunctions stay unions and the
    /// representation never re-complements a whole zone set.
    fn build(&self, c: &Constraint, positive: bool) -> Vec<Dbm> {
        let u = Dbm::universe(self.clocks.len());
        match c {
            Constraint::Not(d) => self.build(d, !positive),
            Constraint::And(a, b) => {
                let za = self.build(a, positive);
                let zb = self.build(b, positive);
                if positive {
                    let mut out = Vec::new();
                    for x in &za {
                        for y in &zb {
                            if let Some(z) = x.intersect(y) {
                                out.push(z);
                            }
                        }
                    }
                    Self::prune(out)
                } else {
                    // !(a && b) = !a || !b
                    let mut out = za;
                    out.extend(zb);
                    Self::prune(out)
                }
            }
            atom => {
                let bounds = self.atom_bounds(atom);
                if positive {
                    let mut z = u;
                    for (i, j, b) in bounds {
                        match z.and_bound(i, j, b) {
                            Some(next) => z = next,
                            None => return vec![],
                        }
                    }
                    vec![z]
                } else {
                    // the complement of a conjunction of bounds is the
                    // union of the negated bounds; for `true` the list is
                    // empty, correctly yielding the empty union
                    let mut out = Vec::new();
                    for (i, j, b) in bounds {
                        if let Some(z) = u.and_bound(j, i, b.negated()) {
                            out.push(z);
                        }
                    }
                    Self::prune(out)
                }
            }
        }
    }

    pub fn contains(&self, nu: &Valuation) -> bool {
        let values: Vec<Rat> = self
            .clocks
            .iter()
            .map(|c| nu.get(c).map(|t| t.ratio()).unwrap_or_else(|| Ratio::from_integer(0)))
            .collect();
        self.zones.iter().any(|z| z.contains(&values))
    }

    /// Searches the half-integer grid up to `max+1` for a member valuation.
    pub fn grid_witness(&self, max_constant: u64) -> Option<Valuation> {
        if self.zones.is_empty() {
            return None;
        }
        if self.clocks.is_empty() {
            return Some(Valuation::zero([]));
        }
        let grid = half_grid(max_constant);
        let n = self.clocks.len();
        let mut idx = vec![0usize; n];
        loop {
            let candidate = Valuation::from_map(
                self.clocks
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (c.clone(), grid[idx[k]]))
                    .collect(),
            );
            if self.contains(&candidate) {
                return Some(candidate);
            }
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < grid.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == n {
                    return None;
                }
            }
        }
    }

    /// Reconstructs a constraint in the core grammar with the same models.
    pub fn denormalize(&self) -> Result<Constraint, TimeError> {
        if self.zones.is_empty() {
            return Ok(Constraint::falsum());
        }
        let u = Dbm::universe(self.clocks.len());
        let mut parts = Vec::new();
        for z in &self.zones {
            let mut conj: Option<Constraint> = None;
            for i in 0..z.dim {
                for j in 0..z.dim {
                    if i == j {
                        continue;
                    }
                    let b = z.get(i, j);
                    if !b.tighter_than(&u.get(i, j)) {
                        continue;
                    }
                    let atom = self.bound_atom(i, j, b)?;
                    conj = Some(match conj {
                        None => atom,
                        Some(c) => Constraint::and(c, atom),
                    });
                }
            }
            parts.push(conj.unwrap_or(Constraint::True));
        }
        let mut it = parts.into_iter();
        let first = it.next().unwrap();
        Ok(it.fold(first, Constraint::or))
    }

    fn bound_atom(&self, i: usize, j: usize, b: Bound) -> Result<Constraint, TimeError> {
        let (c, strict) = match b {
            Bound::At(c, s) => (c, s),
            Bound::Inf => unreachable!(),
        };
        if !c.is_integer() {
            return Err(TimeError::NonIntegralBound(format!("{c}")));
        }
        let cv = *c.numer() / *c.denom();
        let name = |k: usize| self.clocks[k - 1].clone();
        Ok(if j == 0 {
            // xi (< | <=) c ; canonical non-empty zones keep c >= 0 here
            let n = cv.max(0) as u64;
            match strict {
                Strict::Le => Constraint::le(name(i), n),
                Strict::Lt => Constraint::lt(name(i), n),
            }
        } else if i == 0 {
            // -xj (< | <=) c, i.e. xj (> | >=) -c with -c >= 0
            let n = (-cv).max(0) as u64;
            match strict {
                Strict::Lt => Constraint::gt(name(j), n),
                Strict::Le => Constraint::ge(name(j), n),
            }
        } else if cv >= 0 {
            // xi - xj (< | <=) c
            let n = cv as u64;
            match strict {
                Strict::Le => Constraint::not(Constraint::DiffGt(name(i), name(j), n)),
                Strict::Lt => Constraint::and(
                    Constraint::not(Constraint::DiffGt(name(i), name(j), n)),
                    Constraint::not(Constraint::DiffEq(name(i), name(j), n)),
                ),
            }
        } else {
            // xi - xj (< | <=) -k, i.e. xj - xi (> | >=) k with k > 0
            let n = (-cv) as u64;
            match strict {
                Strict::Lt => Constraint::DiffGt(name(j), name(i), n),
                Strict::Le => Constraint::or(
                    Constraint::DiffGt(name(j), name(i), n),
                    Constraint::DiffEq(name(j), name(i), n),
                ),
            }
        })
    }
}

impl fmt::Display for ZoneDnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} zone(s) over {:?}", self.zones.len(), self.clocks)
    }
}

/// Normalizes a constraint into canonical zone-DNF over the union of the
/// constraint's clocks and `domain`.
pub fn normalize_over(delta: &Constraint, domain: &[ClockId]) -> ZoneDnf {
    let mut clocks: Vec<ClockId> = domain.to_vec();
    for c in delta.clocks() {
        if !clocks.contains(&c) {
            clocks.push(c);
        }
    }
    clocks.sort();
    clocks.dedup();
    let mut dnf = ZoneDnf { clocks, zones: Vec::new() };
    for z in dnf.build(delta, true) {
        dnf.push_zone(z);
    }
    dnf
}

pub fn normalize(delta: &Constraint) -> ZoneDnf {
    normalize_over(delta, &[])
}

/// True iff some valuation satisfies the constraint.
pub fn satisfiable(delta: &Constraint) -> bool {
    !normalize(delta).is_empty()
}

/// `delta1 |= delta2`: every model of the first satisfies the second,
/// decided as unsatisfiability of `delta1 && !delta2`.
pub fn entails(delta1: &Constraint, delta2: &Constraint) -> bool {
    let domain: Vec<ClockId> = delta1
        .clocks()
        .into_iter()
        .chain(delta2.clocks())
        .collect();
    let probe = Constraint::and(delta1.clone(), Constraint::not(delta2.clone()));
    normalize_over(&probe, &domain).is_empty()
}

pub fn equivalent(delta1: &Constraint, delta2: &Constraint) -> bool {
    entails(delta1, delta2) && entails(delta2, delta1)
}

/// Strongest constraint satisfied by `nu[lambda -> 0]` whenever `nu |= delta`:
/// existential projection of the reset clocks followed by pinning them to 0,
/// computed zone-wise.
pub fn constraint_reset(
    delta: &Constraint,
    lambda: &std::collections::BTreeSet<ClockId>,
    domain: &[ClockId],
) -> Result<Constraint, TimeError> {
    let mut full_domain: Vec<ClockId> = domain.to_vec();
    full_domain.extend(lambda.iter().cloned());
    let mut dnf = normalize_over(delta, &full_domain);
    let indices: Vec<usize> = lambda.iter().map(|c| dnf.index_of(c)).collect();
    let zones = std::mem::take(&mut dnf.zones);
    for mut z in zones {
        for &i in &indices {
            z.assign_zero(i);
        }
        dnf.push_zone(z);
    }
    dnf.denormalize()
}

/// The weak past: `nu |= past(delta)` iff some delay of `nu` satisfies
/// `delta`. Computed via the time-predecessor operation on each zone.
pub fn past(delta: &Constraint) -> Result<Constraint, TimeError> {
    let mut dnf = normalize(delta);
    let zones = std::mem::take(&mut dnf.zones);
    for mut z in zones {
        z.down();
        dnf.push_zone(z);
    }
    dnf.denormalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timelogic::TimeValue;
    use std::collections::BTreeSet;

    fn cid(s: &str) -> ClockId {
        ClockId::new(s)
    }

    /// Point-sampling oracle: evaluates both constraints on the half grid
    /// and reports the first disagreement.
    fn agree_on_grid(a: &Constraint, b: &Constraint, max: u64) -> bool {
        let clocks: Vec<ClockId> = a.clocks().into_iter().chain(b.clocks()).collect();
        let clocks: BTreeSet<ClockId> = clocks.into_iter().collect();
        let clocks: Vec<ClockId> = clocks.into_iter().collect();
        let grid = half_grid(max);
        if clocks.is_empty() {
            let nu = Valuation::zero([]);
            return a.sat(&nu) == b.sat(&nu);
        }
        let mut idx = vec![0usize; clocks.len()];
        loop {
            let nu = Valuation::from_map(
                clocks
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (c.clone(), grid[idx[k]]))
                    .collect(),
            );
            if a.sat(&nu) != b.sat(&nu) {
                return false;
            }
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < grid.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == clocks.len() {
                    return true;
                }
            }
        }
    }

    #[test]
    fn normalize_true_is_one_unconstrained_zone() {
        let dnf = normalize_over(&Constraint::True, &[cid("x")]);
        assert_eq!(dnf.zone_count(), 1);
        assert!(dnf.contains(&Valuation::from_map(
            [(cid("x"), TimeValue::new(9, 2).unwrap())].into_iter().collect()
        )));
    }

    #[test]
    fn normalize_contradiction_is_empty() {
        let c = Constraint::and(
            Constraint::gt("x", 3),
            Constraint::not(Constraint::gt("x", 3)),
        );
        assert!(normalize(&c).is_empty());
    }

    #[test]
    fn normalize_negated_conjunction_matches_union() {
        // !(x>2 && y=1) has the same models as x<=2 || y!=1
        let c = Constraint::not(Constraint::and(
            Constraint::gt("x", 2),
            Constraint::eq("y", 1),
        ));
        let expected = Constraint::or(
            Constraint::le("x", 2),
            Constraint::not(Constraint::eq("y", 1)),
        );
        let dnf = normalize(&c);
        let back = dnf.denormalize().unwrap();
        assert!(agree_on_grid(&back, &expected, 3));
        assert!(equivalent(&back, &expected));
        // sampling oracle against the dnf membership itself
        let grid = half_grid(3);
        for vx in &grid {
            for vy in &grid {
                let nu = Valuation::from_map(
                    [(cid("x"), *vx), (cid("y"), *vy)].into_iter().collect(),
                );
                assert_eq!(c.sat(&nu), dnf.contains(&nu));
            }
        }
    }

    #[test]
    fn satisfiable_examples() {
        assert!(!satisfiable(&Constraint::and(
            Constraint::eq("y", 2),
            Constraint::gt("y", 3)
        )));
        assert!(satisfiable(&Constraint::between(2, "x", 5)));
        // x-y>1 && y-x>1 has a negative cycle
        assert!(!satisfiable(&Constraint::and(
            Constraint::DiffGt(cid("x"), cid("y"), 1),
            Constraint::DiffGt(cid("y"), cid("x"), 1),
        )));
    }

    #[test]
    fn entails_examples() {
        assert!(entails(&Constraint::eq("x", 2), &Constraint::lt("x", 5)));
        assert!(!entails(&Constraint::lt("x", 5), &Constraint::eq("x", 2)));
        assert!(entails(
            &Constraint::and(Constraint::gt("x", 3), Constraint::gt("x", 4)),
            &Constraint::gt("x", 4)
        ));
    }

    #[test]
    fn constraint_reset_projects_then_pins() {
        let out = constraint_reset(
            &Constraint::gt("x", 3),
            &[cid("x")].into_iter().collect(),
            &[],
        )
        .unwrap();
        assert!(equivalent(&out, &Constraint::eq("x", 0)));

        let out = constraint_reset(
            &Constraint::and(Constraint::gt("x", 3), Constraint::eq("y", 1)),
            &[cid("x")].into_iter().collect(),
            &[],
        )
        .unwrap();
        assert!(equivalent(
            &out,
            &Constraint::and(Constraint::eq("x", 0), Constraint::eq("y", 1))
        ));
    }

    #[test]
    fn constraint_reset_reconstructs_diagonal_window() {
        // 3<x<5 && x-y=2, reset {x}: y ranges over (1,3) and x is pinned to 0.
        let delta = Constraint::and(
            Constraint::between(3, "x", 5),
            Constraint::DiffEq(cid("x"), cid("y"), 2),
        );
        let out = constraint_reset(&delta, &[cid("x")].into_iter().collect(), &[]).unwrap();
        let expected = Constraint::and(Constraint::eq("x", 0), Constraint::between(1, "y", 3));
        assert!(equivalent(&out, &expected));

        // brute-force: reset images of satisfying grid points == grid points of result
        let grid = half_grid(5);
        let lambda: BTreeSet<ClockId> = [cid("x")].into_iter().collect();
        let mut images = BTreeSet::new();
        for vx in &grid {
            for vy in &grid {
                let nu = Valuation::from_map(
                    [(cid("x"), *vx), (cid("y"), *vy)].into_iter().collect(),
                );
                if delta.sat(&nu) {
                    images.insert(nu.reset(&lambda).unwrap());
                }
            }
        }
        let mut of_result = BTreeSet::new();
        for vx in &grid {
            for vy in &grid {
                let nu = Valuation::from_map(
                    [(cid("x"), *vx), (cid("y"), *vy)].into_iter().collect(),
                );
                if out.sat(&nu) {
                    of_result.insert(nu);
                }
            }
        }
        assert_eq!(images, of_result);
    }

    #[test]
    fn past_golden_examples() {
        // past(3<x<5) = x<5
        let p = past(&Constraint::between(3, "x", 5)).unwrap();
        assert!(equivalent(&p, &Constraint::lt("x", 5)));
        // past(x>2) = true
        let p = past(&Constraint::gt("x", 2)).unwrap();
        assert!(equivalent(&p, &Constraint::True));
    }

    #[test]
    fn past_keeps_clock_differences() {
        // past(x=3 && y=5) = y-x=2 && x<=3
        let p = past(&Constraint::and(Constraint::eq("x", 3), Constraint::eq("y", 5))).unwrap();
        let expected = Constraint::and(
            Constraint::DiffEq(cid("y"), cid("x"), 2),
            Constraint::le("x", 3),
        );
        assert!(equivalent(&p, &expected));
    }

    #[test]
    fn denormalize_round_trips_semantics() {
        let cases = vec![
            Constraint::between(3, "x", 5),
            Constraint::or(Constraint::lt("x", 2), Constraint::gt("y", 4)),
            Constraint::and(
                Constraint::DiffGt(cid("x"), cid("y"), 1),
                Constraint::le("x", 6),
            ),
            Constraint::not(Constraint::between(1, "x", 4)),
        ];
        for c in cases {
            let back = normalize(&c).denormalize().unwrap();
            assert!(equivalent(&c, &back), "round trip changed semantics of {c}");
        }
    }
}
