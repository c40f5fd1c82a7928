//! Radial network model: rooted-tree topology, the reduced edge-to-node
//! incidence matrix `M`, and O(n) tree applications of `M⁻¹` and `M⁻ᵀ`.
//!
//! Buses are indexed `0..=n` with the root (substation) at index 0. Branch
//! `l` is identified with its receiving bus `l + 1`, so every branch-indexed
//! vector (`r`, `x`, `P`, `Q`, `ell`, `alpha`) and every bus-indexed vector
//! (`p`, `q`, `v`) has length `n` and shares the same index space.
//!
//! For a radial network the reduced incidence matrix is nonsingular and
//! satisfies `M⁻¹ m0 = -1`. Its inverse never needs to be materialized:
//! `M⁻ᵀ y` is the negative downstream (subtree) sum of `y` per branch, and
//! `M⁻¹ z` is the negative root-path sum of `z` per bus, both single tree
//! traversals.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A distribution line between two buses. Impedances are per unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

/// Net complex power injections at all non-root buses, per unit.
/// Sign convention is injection-positive: a pure load has negative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Scenario {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::LengthMismatch {
                expected: p.len(),
                got: q.len(),
            });
        }
        if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite injection".into()));
        }
        Ok(Self { p, q })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// All injections multiplied by a common loading factor `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            p: self.p.iter().map(|v| k * v).collect(),
            q: self.q.iter().map(|v| k * v).collect(),
        }
    }

    /// Componentwise multipliers, one per bus, applied to both p and q.
    pub fn scaled_per_bus(&self, m: &[f64]) -> Self {
        Self {
            p: self.p.iter().zip(m).map(|(v, m)| m * v).collect(),
            q: self.q.iter().zip(m).map(|(v, m)| m * v).collect(),
        }
    }
}

/// Immutable radial feeder. Construction validates radiality; all
/// operations afterwards are pure, so the network can be shared freely
/// across threads.
#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    root_voltage_sq: f64,
    base_mva: f64,
    branches: Vec<Branch>,
    r: Vec<f64>,
    x: Vec<f64>,
    /// children[bus] lists child buses, bus in 0..=n
    children: Vec<Vec<usize>>,
    /// non-root buses in root-to-leaf (BFS) order
    topo: Vec<usize>,
    /// original bus labels, labels[bus] for bus in 0..=n
    labels: Vec<i64>,
}

/// Checks the rooted-tree invariants for `n` non-root buses and returns the
/// parent of each non-root bus on success. The diagnostic names the
/// offending bus: more than one feeding branch is a cycle, an unreachable
/// bus is a disconnection.
pub fn validate_radial(n: usize, branches: &[Branch]) -> Result<Vec<usize>> {
    let mut parent = vec![usize::MAX; n + 1];
    for (i, b) in branches.iter().enumerate() {
        if b.to == 0 || b.to > n {
            return Err(Error::InvalidBranch {
                index: i,
                reason: format!("receiving bus {} out of range 1..={n}", b.to),
            });
        }
        if b.from > n {
            return Err(Error::InvalidBranch {
                index: i,
                reason: format!("sending bus {} out of range 0..={n}", b.from),
            });
        }
        if b.from == b.to {
            return Err(Error::InvalidBranch {
                index: i,
                reason: "self-loop".into(),
            });
        }
        if b.r < 0.0 || !b.r.is_finite() || !b.x.is_finite() {
            return Err(Error::InvalidBranch {
                index: i,
                reason: format!("bad impedance r={} x={}", b.r, b.x),
            });
        }
        if b.r == 0.0 && b.x == 0.0 {
            return Err(Error::ZeroImpedanceBranch { branch: i });
        }
        if parent[b.to] != usize::MAX {
            return Err(Error::CycleDetected { bus: b.to });
        }
        parent[b.to] = b.from;
    }
    for bus in 1..=n {
        if parent[bus] == usize::MAX {
            return Err(Error::DisconnectedBus { bus });
        }
    }
    // every bus must reach the root; a detached cycle has parents but no path
    for bus in 1..=n {
        let mut cur = bus;
        let mut steps = 0;
        while cur != 0 {
            cur = parent[cur];
            steps += 1;
            if steps > n {
                return Err(Error::DisconnectedBus { bus });
            }
        }
    }
    Ok(parent)
}

impl Network {
    /// Builds a network from branches in any order. Each branch must be
    /// oriented away from the root; receiving buses must cover 1..=n.
    pub fn new(
        n: usize,
        root_voltage_sq: f64,
        base_mva: f64,
        branches: Vec<Branch>,
    ) -> Result<Self> {
        let labels = (0..=n as i64).collect();
        Self::with_labels(n, root_voltage_sq, base_mva, branches, labels)
    }

    /// Like [`Network::new`] but preserving a map back to original bus labels.
    pub fn with_labels(
        n: usize,
        root_voltage_sq: f64,
        base_mva: f64,
        mut branches: Vec<Branch>,
        labels: Vec<i64>,
    ) -> Result<Self> {
        if branches.len() != n {
            // n branches for n non-root buses; anything else is non-radial
            if branches.len() > n {
                validate_radial(n, &branches)?;
            }
            let fed: Vec<usize> = branches.iter().map(|b| b.to).collect();
            let missing = (1..=n).find(|b| !fed.contains(b)).unwrap_or(1);
            return Err(Error::DisconnectedBus { bus: missing });
        }
        validate_radial(n, &branches)?;
        branches.sort_by_key(|b| b.to);

        let mut children = vec![Vec::new(); n + 1];
        for b in &branches {
            children[b.from].push(b.to);
        }
        let mut topo = Vec::with_capacity(n);
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(bus) = queue.pop_front() {
            if bus != 0 {
                topo.push(bus);
            }
            for &c in &children[bus] {
                queue.push_back(c);
            }
        }
        debug_assert_eq!(topo.len(), n);

        let r = branches.iter().map(|b| b.r).collect();
        let x = branches.iter().map(|b| b.x).collect();
        Ok(Self {
            n,
            root_voltage_sq,
            base_mva,
            branches,
            r,
            x,
            children,
            topo,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Squared voltage magnitude held at the root, p.u.².
    pub fn root_voltage_sq(&self) -> f64 {
        self.root_voltage_sq
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Branches sorted by receiving bus: `branches()[l].to == l + 1`.
    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Branch resistances, indexed by receiving bus.
    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// Branch reactances, indexed by receiving bus.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Parent (sending) bus of non-root bus `bus`.
    pub fn parent(&self, bus: usize) -> usize {
        self.branches[bus - 1].from
    }

    pub fn children(&self, bus: usize) -> &[usize] {
        &self.children[bus]
    }

    /// Non-root buses in root-to-leaf order.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// Original label of an internal bus index.
    pub fn label(&self, bus: usize) -> i64 {
        self.labels[bus]
    }

    /// Re-checks the tree invariants (they are enforced at construction).
    pub fn validate_radial(&self) -> Result<()> {
        validate_radial(self.n, &self.branches).map(|_| ())
    }

    /// Assembles the signed edge-to-node incidence pair `(m0, M)` densely:
    /// +1 where a branch leaves a bus, -1 where it enters. Row `l` is the
    /// branch received by bus `l + 1`; column `j` is bus `j + 1`.
    ///
    /// Dense assembly is for inspection and test oracles; the solvers only
    /// ever use the tree traversals below.
    pub fn build_incidence(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut m0 = DVector::zeros(n);
        let mut m = DMatrix::zeros(n, n);
        for (l, b) in self.branches.iter().enumerate() {
            if b.from == 0 {
                m0[l] = 1.0;
            } else {
                m[(l, b.from - 1)] = 1.0;
            }
            m[(l, b.to - 1)] = -1.0;
        }
        (m0, m)
    }

    /// Applies `M⁻ᵀ` to a bus-indexed vector: entry `l` is the negative sum
    /// of `nodal` over the subtree hanging from the receiving bus of `l`.
    pub fn apply_m_inv_t(&self, nodal: &[f64]) -> Result<Vec<f64>> {
        if nodal.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: nodal.len(),
            });
        }
        Ok(self.m_inv_t_counted(nodal).0)
    }

    /// Applies `M⁻¹` to a branch-indexed vector: entry `j` is the negative
    /// sum of `branch_vals` over the branches on the path root -> bus `j+1`.
    pub fn apply_m_inv(&self, branch_vals: &[f64]) -> Result<Vec<f64>> {
        if branch_vals.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: branch_vals.len(),
            });
        }
        Ok(self.m_inv_counted(branch_vals).0)
    }

    pub(crate) fn m_inv_t_counted(&self, nodal: &[f64]) -> (Vec<f64>, usize) {
        let mut acc = nodal.to_vec();
        let mut visits = 0;
        for &bus in self.topo.iter().rev() {
            visits += 1;
            let subtree: f64 = self.children[bus].iter().map(|&c| acc[c - 1]).sum();
            acc[bus - 1] += subtree;
        }
        for v in acc.iter_mut() {
            *v = -*v;
        }
        (acc, visits)
    }

    pub(crate) fn m_inv_counted(&self, branch_vals: &[f64]) -> (Vec<f64>, usize) {
        let mut out = vec![0.0; self.n];
        let mut visits = 0;
        for &bus in &self.topo {
            visits += 1;
            let up = self.parent(bus);
            let path = if up == 0 { 0.0 } else { -out[up - 1] };
            out[bus - 1] = -(path + branch_vals[bus - 1]);
        }
        (out, visits)
    }

    /// Stable identity of the feeder topology and parameters, used to bind
    /// trained models to the network they were built for.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.n.to_le_bytes());
        h.update(self.root_voltage_sq.to_le_bytes());
        h.update(self.base_mva.to_le_bytes());
        for b in &self.branches {
            h.update(b.from.to_le_bytes());
            h.update(b.to.to_le_bytes());
            h.update(b.r.to_le_bytes());
            h.update(b.x.to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
