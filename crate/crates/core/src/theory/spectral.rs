use serde::Serialize;

use crate::error::{invalid, Result};
use crate::lattice::LatticeBox;
use crate::sim::KernelPsi;

/// A spectral atom: a direction on `B^(m)` with max-norm 1, stored sparsely
/// as `(linear index in B^(m), value)` pairs in increasing index order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub entries: Vec<(usize, f64)>,
    pub weight: f64,
}

impl Atom {
    pub fn value_at(&self, idx: usize) -> f64 {
        self.entries
            .binary_search_by_key(&idx, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn dense(&self, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }

    pub fn max_norm(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, e| a.max(e.1.abs()))
    }
}

/// Discrete spectral measure of the window `B^(m)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralAtoms {
    m: i64,
    window: LatticeBox,
    atoms: Vec<Atom>,
}

impl SpectralAtoms {
    pub fn new(m: i64, window: LatticeBox, atoms: Vec<Atom>) -> Result<Self> {
        if window != LatticeBox::centered(window.dim(), m) {
            return Err(invalid("atoms", "window must be B^(m)"));
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-9 || atoms.iter().any(|a| a.weight < 0.0) {
            return Err(invalid("atoms", "weights must be non-negative and sum to 1"));
        }
        Ok(SpectralAtoms { m, window, atoms })
    }

    pub fn m(&self) -> i64 {
        self.m
    }

    /// `B^(m)`.
    pub fn window(&self) -> &LatticeBox {
        &self.window
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Linear index of the origin in `B^(m)`; sites after it in
    /// lexicographic order form `A_0^(m)`.
    pub fn origin(&self) -> usize {
        self.window.len() / 2
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// The atom closest to `direction` in max-norm distance.
    pub fn nearest(&self, direction: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (j, atom) in self.atoms.iter().enumerate() {
            let mut dist = 0.0f64;
            let mut e = atom.entries.iter().peekable();
            for (i, &x) in direction.iter().enumerate() {
                let a = match e.peek() {
                    Some(&&(k, v)) if k == i => {
                        e.next();
                        v
                    }
                    _ => 0.0,
                };
                dist = dist.max((x - a).abs());
            }
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((j, dist));
            }
        }
        best
    }
}

/// Atoms `±psi^u / ||psi^u||` over `u ∈ B^(t+m)`, where
/// `psi^u = (psi_{v-u})_{v ∈ B^(m)}`, weighted by `p_xi ||psi^u||^alpha` and
/// `(1 - p_xi) ||psi^u||^alpha` and normalized to total mass 1.
pub fn ma_spectral_atoms(kernel: &KernelPsi, m: i64, alpha: f64, p_xi: f64) -> Result<SpectralAtoms> {
    if m < 0 {
        return Err(invalid("m", "must be non-negative"));
    }
    let d = kernel.dim();
    let window = LatticeBox::centered(d, m);
    let shifts = LatticeBox::centered(d, kernel.radius() + m);
    let mut atoms = Vec::new();
    let mut total = 0.0;
    for u in shifts.sites() {
        let entries: Vec<(usize, f64)> = kernel
            .coefficients()
            .iter()
            .filter_map(|(o, c)| {
                let v: Vec<i64> = u.iter().zip(o).map(|(a, b)| a + b).collect();
                window.index_of(&v).map(|i| (i, *c))
            })
            .collect();
        if entries.is_empty() {
            continue;
        }
        let norm = entries.iter().fold(0.0f64, |a, e| a.max(e.1.abs()));
        let mass = norm.powf(alpha);
        total += mass;
        let unit: Vec<(usize, f64)> = entries.iter().map(|&(i, c)| (i, c / norm)).collect();
        let negated = unit.iter().map(|&(i, c)| (i, -c)).collect();
        atoms.push(Atom {
            entries: unit,
            weight: p_xi * mass,
        });
        atoms.push(Atom {
            entries: negated,
            weight: (1.0 - p_xi) * mass,
        });
    }
    for a in &mut atoms {
        a.weight /= total;
    }
    SpectralAtoms::new(m, window, atoms)
}
