//! Factor-graph representation, validation, surgery and distance queries.
//!
//! A factor graph couples `n` variable nodes to a list of constraint nodes.
//! Each constraint carries an ordered tuple of neighbor variables (repeats
//! permitted) and a reference into a pool of strictly positive weight
//! functions. The induced bipartite graph (variable-constraint edges of
//! length 1) defines all distance notions used by the diagnostics.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Variable node id, dense in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

/// Constraint node id, dense in `0..m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

impl fmt::Display for ConId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Finite spin alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinAlphabet {
    labels: Vec<String>,
}

impl SpinAlphabet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "spin alphabet needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            for b in labels.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::InvalidParameter(format!(
                        "duplicate spin label {a:?}"
                    )));
                }
            }
        }
        Ok(Self { labels })
    }

    /// Alphabet `{1, ..., q}` with numeric labels.
    pub fn numeric(q: usize) -> Self {
        Self::new((1..=q).map(|i| i.to_string()).collect()).expect("q >= 2")
    }

    /// Boolean alphabet `{+, -}`; index 0 is `+`.
    pub fn boolean() -> Self {
        Self::new(vec!["+".into(), "-".into()]).expect("two labels")
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Strictly positive weight table over `Ω^arity`, row-major with the last
/// coordinate fastest. Arity 0 is a single positive scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction<S = f64> {
    arity: usize,
    table: Vec<S>,
}

impl<S: Real> WeightFunction<S> {
    pub fn new(arity: usize, table: Vec<S>) -> Result<Self> {
        let wf = Self { arity, table };
        wf.check(0)?;
        Ok(wf)
    }

    /// Arity-0 constant weight.
    pub fn scalar(value: S) -> Result<Self> {
        Self::new(0, vec![value])
    }

    fn check(&self, q_hint: usize) -> Result<()> {
        if q_hint > 0 {
            let expect = q_hint.pow(self.arity as u32);
            if self.table.len() != expect {
                return Err(Error::InvalidParameter(format!(
                    "weight table has {} entries, expected q^arity = {}",
                    self.table.len(),
                    expect
                )));
            }
        } else if self.table.is_empty() {
            return Err(Error::InvalidParameter("empty weight table".into()));
        }
        for (i, &v) in self.table.iter().enumerate() {
            if !(v > S::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "weight table entry {i} is {v}, must be finite and > 0"
                )));
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn table(&self) -> &[S] {
        &self.table
    }

    /// Row-major index of a spin tuple (last coordinate fastest).
    pub fn index(&self, q: usize, spins: &[usize]) -> usize {
        debug_assert_eq!(spins.len(), self.arity);
        let mut idx = 0;
        for &s in spins {
            idx = idx * q + s;
        }
        idx
    }

    pub fn value(&self, q: usize, spins: &[usize]) -> S {
        self.table[self.index(q, spins)]
    }

    /// Arithmetic mean of the table.
    pub fn mean(&self) -> S {
        let sum: S = self.table.iter().copied().sum();
        sum / real(self.table.len() as f64)
    }

    /// Pointwise rescaling by `c > 0`.
    pub fn scaled(&self, c: S) -> Result<Self> {
        Self::new(self.arity, self.table.iter().map(|&v| v * c).collect())
    }

    pub fn map_scalar<T: Real>(&self, f: impl Fn(S) -> T) -> WeightFunction<T> {
        WeightFunction {
            arity: self.arity,
            table: self.table.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Constraint node: ordered neighbor tuple plus a reference into the weight pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub neighbors: Vec<VarId>,
    pub weight: usize,
}

impl Constraint {
    pub fn new(neighbors: Vec<VarId>, weight: usize) -> Self {
        Self { neighbors, weight }
    }

    /// Degree `d(a)`: the tuple length, counting repeats.
    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }
}

/// Spin assignment for all `n` variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<u8>);

impl Assignment {
    pub fn constant(n: usize, spin: usize) -> Self {
        Self(vec![spin as u8; n])
    }

    pub fn spin(&self, x: VarId) -> usize {
        self.0[x.0] as usize
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One directed message slot: variable `var` appears in constraint `con`.
/// There is exactly one incidence per distinct (variable, constraint) pair,
/// regardless of how many tuple slots of the constraint the variable fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub var: VarId,
    pub con: ConId,
}

/// A single validation violation; `validate` reports these instead of panicking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    IndexOutOfRange {
        con: usize,
        slot: usize,
        var: usize,
    },
    UnknownWeight {
        con: usize,
        weight: usize,
    },
    ArityMismatch {
        con: usize,
        arity: usize,
        degree: usize,
    },
    NonPositiveWeight {
        weight: usize,
        entry: usize,
    },
    BadTableLength {
        weight: usize,
        len: usize,
        expected: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IndexOutOfRange { con, slot, var } => {
                write!(
                    f,
                    "constraint {con} slot {slot}: index out of range ({var})"
                )
            }
            Violation::UnknownWeight { con, weight } => {
                write!(f, "constraint {con}: unknown weight id {weight}")
            }
            Violation::ArityMismatch { con, arity, degree } => write!(
                f,
                "constraint {con}: weight arity {arity} does not match degree {degree}"
            ),
            Violation::NonPositiveWeight { weight, entry } => {
                write!(f, "weight {weight} entry {entry}: non-positive weight")
            }
            Violation::BadTableLength {
                weight,
                len,
                expected,
            } => {
                write!(
                    f,
                    "weight {weight}: table length {len}, expected {expected}"
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Map from old constraint ids to surviving new ids after a deletion.
#[derive(Debug, Clone)]
pub struct ConstraintRelabeling {
    map: Vec<Option<ConId>>,
}

impl ConstraintRelabeling {
    /// New id of an old constraint, or `None` if it was deleted.
    pub fn new_id(&self, old: ConId) -> Option<ConId> {
        self.map.get(old.0).copied().flatten()
    }
}

/// Immutable factor graph. Surgery operations return new graphs.
#[derive(Debug, Clone)]
pub struct FactorGraph<S = f64> {
    n: usize,
    spins: SpinAlphabet,
    weight_pool: Vec<WeightFunction<S>>,
    constraints: Vec<Constraint>,
    // Derived incidence structure, built once at construction.
    incidences: Vec<Incidence>,
    con_incidences: Vec<Vec<usize>>,
    var_incidences: Vec<Vec<usize>>,
    distinct_neighbors: Vec<Vec<VarId>>,
}

impl<S: Real> FactorGraph<S> {
    pub fn new(
        n: usize,
        spins: SpinAlphabet,
        weight_pool: Vec<WeightFunction<S>>,
        constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let report = validate_parts(n, &spins, &weight_pool, &constraints);
        if !report.is_ok() {
            let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::InvalidGraph(msgs.join("; ")));
        }
        Ok(Self::new_unchecked(n, spins, weight_pool, constraints))
    }

    fn new_unchecked(
        n: usize,
        spins: SpinAlphabet,
        weight_pool: Vec<WeightFunction<S>>,
        constraints: Vec<Constraint>,
    ) -> Self {
        let mut incidences = Vec::new();
        let mut con_incidences = Vec::with_capacity(constraints.len());
        let mut var_incidences = vec![Vec::new(); n];
        let mut distinct_neighbors = Vec::with_capacity(constraints.len());
        for (ci, c) in constraints.iter().enumerate() {
            let mut distinct: Vec<VarId> = Vec::with_capacity(c.neighbors.len());
            for &v in &c.neighbors {
                if !distinct.contains(&v) {
                    distinct.push(v);
                }
            }
            let mut slots = Vec::with_capacity(distinct.len());
            for &v in &distinct {
                let id = incidences.len();
                incidences.push(Incidence {
                    var: v,
                    con: ConId(ci),
                });
                var_incidences[v.0].push(id);
                slots.push(id);
            }
            con_incidences.push(slots);
            distinct_neighbors.push(distinct);
        }
        Self {
            n,
            spins,
            weight_pool,
            constraints,
            incidences,
            con_incidences,
            var_incidences,
            distinct_neighbors,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn q(&self) -> usize {
        self.spins.size()
    }

    pub fn spins(&self) -> &SpinAlphabet {
        &self.spins
    }

    pub fn weight_pool(&self) -> &[WeightFunction<S>] {
        &self.weight_pool
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, a: ConId) -> &Constraint {
        &self.constraints[a.0]
    }

    pub fn weight_of(&self, a: ConId) -> &WeightFunction<S> {
        &self.weight_pool[self.constraints[a.0].weight]
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.n).map(VarId)
    }

    pub fn con_ids(&self) -> impl Iterator<Item = ConId> {
        (0..self.constraints.len()).map(ConId)
    }

    /// All distinct (variable, constraint) incidences.
    pub fn incidences(&self) -> &[Incidence] {
        &self.incidences
    }

    /// Incidence ids of a constraint, in first-occurrence neighbor order.
    pub fn incidences_of_con(&self, a: ConId) -> &[usize] {
        &self.con_incidences[a.0]
    }

    /// Incidence ids of a variable, in increasing constraint order.
    pub fn incidences_of_var(&self, x: VarId) -> &[usize] {
        &self.var_incidences[x.0]
    }

    /// Distinct neighbor variables of a constraint, in first-occurrence order.
    pub fn distinct_neighbors(&self, a: ConId) -> &[VarId] {
        &self.distinct_neighbors[a.0]
    }

    /// `∂x` as a set of constraint ids.
    pub fn constraints_of_var(&self, x: VarId) -> impl Iterator<Item = ConId> + '_ {
        self.var_incidences[x.0]
            .iter()
            .map(move |&i| self.incidences[i].con)
    }

    /// `d(x)`: number of distinct incident constraints.
    pub fn var_degree(&self, x: VarId) -> usize {
        self.var_incidences[x.0].len()
    }

    /// Number of tuple slots of `x` summed over all constraints.
    pub fn var_slot_count(&self, x: VarId) -> usize {
        self.constraints
            .iter()
            .map(|c| c.neighbors.iter().filter(|&&v| v == x).count())
            .sum()
    }

    /// Table value `ψ_a(σ(∂a))` for a full assignment.
    pub fn constraint_value(&self, a: ConId, sigma: &Assignment) -> S {
        self.constraint_value_spins(a, &sigma.0)
    }

    /// [`Self::constraint_value`] on a raw spin slice.
    pub fn constraint_value_spins(&self, a: ConId, spins: &[u8]) -> S {
        let c = &self.constraints[a.0];
        let w = &self.weight_pool[c.weight];
        let q = self.q();
        let mut idx = 0usize;
        for &v in &c.neighbors {
            idx = idx * q + spins[v.0] as usize;
        }
        w.table()[idx]
    }

    pub fn validate(&self) -> ValidationReport {
        validate_parts(self.n, &self.spins, &self.weight_pool, &self.constraints)
    }

    /// Graph with constraint `a` deleted; variables untouched. The relabeling
    /// maps every surviving old constraint id to its new dense id.
    pub fn remove_constraint(&self, a: ConId) -> Result<(Self, ConstraintRelabeling)> {
        if a.0 >= self.constraints.len() {
            return Err(Error::UnknownConstraint(a.0));
        }
        self.remove_constraints(&[a])
    }

    /// Bulk constraint deletion with a single relabeling map.
    pub fn remove_constraints(&self, delete: &[ConId]) -> Result<(Self, ConstraintRelabeling)> {
        let m = self.constraints.len();
        let mut keep = vec![true; m];
        for &a in delete {
            if a.0 >= m {
                return Err(Error::UnknownConstraint(a.0));
            }
            keep[a.0] = false;
        }
        let mut map = vec![None; m];
        let mut constraints = Vec::with_capacity(m - delete.len());
        for (i, c) in self.constraints.iter().enumerate() {
            if keep[i] {
                map[i] = Some(ConId(constraints.len()));
                constraints.push(c.clone());
            }
        }
        let graph = Self::new_unchecked(
            self.n,
            self.spins.clone(),
            self.weight_pool.clone(),
            constraints,
        );
        Ok((graph, ConstraintRelabeling { map }))
    }

    /// Cavity graph for the message `μ_{a→x}`: keeps `a` and every constraint
    /// not incident to `x`, i.e. deletes `∂x \ a`.
    pub fn cavity_restrict(&self, x: VarId, a: ConId) -> Result<(Self, ConstraintRelabeling)> {
        if a.0 >= self.constraints.len() {
            return Err(Error::UnknownConstraint(a.0));
        }
        if !self.constraints[a.0].neighbors.contains(&x) {
            return Err(Error::VariableNotInConstraint { var: x.0, con: a.0 });
        }
        let delete: Vec<ConId> = self.constraints_of_var(x).filter(|&b| b != a).collect();
        self.remove_constraints(&delete)
    }

    /// Deletes variable `x` together with every constraint in `∂x`.
    /// Variable ids above `x` shift down by one.
    pub fn remove_variable(&self, x: VarId) -> Result<Self> {
        if x.0 >= self.n {
            return Err(Error::InvalidParameter(format!(
                "variable {} out of range for n = {}",
                x.0, self.n
            )));
        }
        let drop: Vec<ConId> = self.constraints_of_var(x).collect();
        let (pruned, _) = self.remove_constraints(&drop)?;
        let constraints = pruned
            .constraints
            .iter()
            .map(|c| {
                let neighbors = c
                    .neighbors
                    .iter()
                    .map(|&v| if v.0 > x.0 { VarId(v.0 - 1) } else { v })
                    .collect();
                Constraint::new(neighbors, c.weight)
            })
            .collect();
        Ok(Self::new_unchecked(
            self.n - 1,
            self.spins.clone(),
            self.weight_pool.clone(),
            constraints,
        ))
    }

    /// Graph with one weight table pointwise rescaled by `c > 0`.
    pub fn with_scaled_weight(&self, weight: usize, c: S) -> Result<Self> {
        if weight >= self.weight_pool.len() {
            return Err(Error::InvalidParameter(format!(
                "weight id {weight} out of range"
            )));
        }
        let mut pool = self.weight_pool.clone();
        pool[weight] = pool[weight].scaled(c)?;
        Ok(Self::new_unchecked(
            self.n,
            self.spins.clone(),
            pool.clone(),
            self.constraints.clone(),
        ))
    }

    /// Renames variables by `perm` (old id -> new id). `perm` must be a
    /// permutation of `0..n`.
    pub fn relabel_variables(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidParameter("permutation length != n".into()));
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || seen[p] {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            seen[p] = true;
        }
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                Constraint::new(
                    c.neighbors.iter().map(|&v| VarId(perm[v.0])).collect(),
                    c.weight,
                )
            })
            .collect();
        Ok(Self::new_unchecked(
            self.n,
            self.spins.clone(),
            self.weight_pool.clone(),
            constraints,
        ))
    }

    /// Bipartite BFS distances from a variable node. Returns distances to
    /// variables (`dist_var`) and constraints (`dist_con`); unreachable nodes
    /// get `usize::MAX`.
    pub fn distances_from(&self, x: VarId) -> (Vec<usize>, Vec<usize>) {
        const INF: usize = usize::MAX;
        let mut dist_var = vec![INF; self.n];
        let mut dist_con = vec![INF; self.constraints.len()];
        dist_var[x.0] = 0;
        let mut queue = VecDeque::new();
        queue.push_back((true, x.0));
        while let Some((is_var, id)) = queue.pop_front() {
            if is_var {
                let d = dist_var[id];
                for &inc in &self.var_incidences[id] {
                    let a = self.incidences[inc].con.0;
                    if dist_con[a] == INF {
                        dist_con[a] = d + 1;
                        queue.push_back((false, a));
                    }
                }
            } else {
                let d = dist_con[id];
                for &y in &self.distinct_neighbors[id] {
                    if dist_var[y.0] == INF {
                        dist_var[y.0] = d + 1;
                        queue.push_back((true, y.0));
                    }
                }
            }
        }
        (dist_var, dist_con)
    }

    /// Variables at bipartite distance `> ell` from `x` (unreachable counts
    /// as infinite distance); `x` itself is never included.
    pub fn far_set(&self, x: VarId, ell: usize) -> Vec<VarId> {
        let (dist_var, _) = self.distances_from(x);
        (0..self.n)
            .filter(|&y| y != x.0 && dist_var[y] > ell)
            .map(VarId)
            .collect()
    }

    /// True when the bipartite graph (one edge per distinct incidence) has no cycle.
    pub fn is_acyclic(&self) -> bool {
        let total = self.n + self.constraints.len();
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for inc in &self.incidences {
            let a = find(&mut parent, inc.var.0);
            let b = find(&mut parent, self.n + inc.con.0);
            if a == b {
                return false;
            }
            parent[a] = b;
        }
        true
    }

    /// Diameter of the bipartite graph: the largest finite pairwise distance
    /// over variable and constraint nodes. Zero for an edgeless graph.
    pub fn bipartite_diameter(&self) -> usize {
        let mut best = 0usize;
        for x in 0..self.n {
            let (dv, dc) = self.distances_from(VarId(x));
            for d in dv.into_iter().chain(dc) {
                if d != usize::MAX && d > best {
                    best = d;
                }
            }
        }
        best
    }

    pub fn map_scalar<T: Real>(&self, f: impl Fn(S) -> T + Copy) -> FactorGraph<T> {
        FactorGraph::new_unchecked(
            self.n,
            self.spins.clone(),
            self.weight_pool.iter().map(|w| w.map_scalar(f)).collect(),
            self.constraints.clone(),
        )
    }
}

/// Checks all structural invariants without panicking.
pub fn validate_parts<S: Real>(
    n: usize,
    spins: &SpinAlphabet,
    weight_pool: &[WeightFunction<S>],
    constraints: &[Constraint],
) -> ValidationReport {
    let q = spins.size();
    let mut violations = Vec::new();
    for (wi, w) in weight_pool.iter().enumerate() {
        let expected = q.pow(w.arity() as u32);
        if w.table().len() != expected {
            violations.push(Violation::BadTableLength {
                weight: wi,
                len: w.table().len(),
                expected,
            });
        }
        for (ei, &v) in w.table().iter().enumerate() {
            if !(v > S::zero()) || !v.is_finite() {
                violations.push(Violation::NonPositiveWeight {
                    weight: wi,
                    entry: ei,
                });
            }
        }
    }
    for (ci, c) in constraints.iter().enumerate() {
        for (slot, &v) in c.neighbors.iter().enumerate() {
            if v.0 >= n {
                violations.push(Violation::IndexOutOfRange {
                    con: ci,
                    slot,
                    var: v.0,
                });
            }
        }
        match weight_pool.get(c.weight) {
            None => violations.push(Violation::UnknownWeight {
                con: ci,
                weight: c.weight,
            }),
            Some(w) => {
                if w.arity() != c.degree() {
                    violations.push(Violation::ArityMismatch {
                        con: ci,
                        arity: w.arity(),
                        degree: c.degree(),
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}
