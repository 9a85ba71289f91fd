//! Binary KP-tree over a vector's entries, emulating QRAM state preparation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::ledger::{Counter, Formula, QueryLedger};
use crate::spectral::{CVector, C64};

/// Level ℓ holds 2^ℓ virtual nodes; only non-zero nodes are stored.
/// Leaves live at level `depth` and store the complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct KPTree {
    dim: usize,
    depth: usize,
    support: usize,
    internal: Vec<BTreeMap<usize, f64>>,
    leaves: BTreeMap<usize, C64>,
}

/// ⌈log₂ d⌉ with ⌈log₂ 1⌉ = 0.
pub fn ceil_log2(d: usize) -> usize {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as usize
    }
}

impl KPTree {
    pub fn build(v: &CVector) -> Result<Self> {
        let dim = v.len();
        if dim == 0 {
            return Err(invalid("cannot build a tree over an empty vector"));
        }
        let depth = ceil_log2(dim);
        let leaves: BTreeMap<usize, C64> = v
            .iter()
            .enumerate()
            .filter(|(_, x)| x.norm_sqr() > 0.0)
            .map(|(j, x)| (j, *x))
            .collect();
        let support = leaves.len();
        // squared weights, bottom-up
        let mut sq: BTreeMap<usize, f64> = leaves.iter().map(|(&j, x)| (j, x.norm_sqr())).collect();
        let mut internal = vec![BTreeMap::new(); depth];
        for level in (0..depth).rev() {
            let mut up: BTreeMap<usize, f64> = BTreeMap::new();
            for (j, w) in &sq {
                *up.entry(j >> 1).or_insert(0.0) += w;
            }
            internal[level] = up.iter().map(|(&j, &w)| (j, w.sqrt())).collect();
            sq = up;
        }
        if depth == 0 {
            // the single leaf is also the root
            internal = Vec::new();
        }
        Ok(KPTree {
            dim,
            depth,
            support,
            internal,
            leaves,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// |supp(v)|, stored at the root.
    pub fn support_size(&self) -> usize {
        self.support
    }

    pub fn root_norm(&self) -> f64 {
        if self.depth == 0 {
            self.leaves.get(&0).map(|x| x.norm()).unwrap_or(0.0)
        } else {
            self.internal[0].get(&0).copied().unwrap_or(0.0)
        }
    }

    /// KP_v(ℓ, j): internal levels return the aggregate norm, the leaf level
    /// the entry itself; absent nodes read as 0.
    pub fn query(&self, level: usize, j: usize) -> Result<C64> {
        if level > self.depth {
            return Err(invalid(format!("level {level} exceeds depth {}", self.depth)));
        }
        if j >= 1usize << level {
            return Ok(C64::new(0.0, 0.0));
        }
        if level == self.depth {
            return Ok(self.leaves.get(&j).copied().unwrap_or_default());
        }
        Ok(C64::new(self.internal[level].get(&j).copied().unwrap_or(0.0), 0.0))
    }

    fn weight(&self, level: usize, j: usize) -> f64 {
        if level == self.depth {
            self.leaves.get(&j).map(|x| x.norm()).unwrap_or(0.0)
        } else {
            self.internal[level].get(&j).copied().unwrap_or(0.0)
        }
    }

    /// v/‖v‖ reconstructed top-down: each level applies the rotation with
    /// amplitudes w_child/w_parent; the leaf level contributes the phase.
    pub fn amplitudes(&self) -> Result<CVector> {
        let root = self.root_norm();
        if root == 0.0 {
            return Err(Error::Degenerate("zero vector has no normalized state".into()));
        }
        let mut amp: BTreeMap<usize, f64> = BTreeMap::new();
        amp.insert(0, 1.0);
        for level in 0..self.depth {
            let mut next = BTreeMap::new();
            for (&j, &a) in &amp {
                let parent = self.weight(level, j);
                for child in [2 * j, 2 * j + 1] {
                    let w = self.weight(level + 1, child);
                    if w > 0.0 {
                        next.insert(child, a * w / parent);
                    }
                }
            }
            amp = next;
        }
        let mut out = CVector::zeros(self.dim);
        for (j, a) in amp {
            let leaf = self.leaves[&j];
            out[j] = leaf / leaf.norm() * a;
        }
        Ok(out)
    }

    /// State preparation with its tree-read cost charged to `ledger`.
    pub fn prepare(&self, ledger: &mut QueryLedger, subroutine: &str) -> Result<CVector> {
        let state = self.amplitudes()?;
        ledger.charge(
            subroutine,
            Formula::KpStatePrep,
            Counter::KpReads,
            self.prep_cost() as f64,
        )?;
        Ok(state)
    }

    /// 2⌈log₂ d⌉ reads per state preparation.
    pub fn prep_cost(&self) -> u64 {
        2 * self.depth as u64
    }

    /// (v, 1 − ‖v‖²) for a sub-normalized vector: the first component is
    /// the |0⟩-flagged branch, the second the weight of the |1⟩ branch.
    pub fn subnormalized_amplitudes(&self) -> Result<(CVector, f64)> {
        let norm = self.root_norm();
        if norm > 1.0 + 1e-12 {
            return Err(invalid(format!("norm {norm} exceeds 1")));
        }
        let residual = (1.0 - norm * norm).max(0.0);
        if norm == 0.0 {
            return Ok((CVector::zeros(self.dim), 1.0));
        }
        let v = self.amplitudes()? * C64::new(norm, 0.0);
        Ok((v, residual))
    }

    /// Level-order `level,index,re,im` CSV; internal nodes have im = 0.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("level,index,re,im\n");
        for level in 0..self.depth {
            for (j, w) in &self.internal[level] {
                writeln!(out, "{level},{j},{w},0").unwrap();
            }
        }
        for (j, x) in &self.leaves {
            writeln!(out, "{},{j},{},{}", self.depth, x.re, x.im).unwrap();
        }
        out
    }
}
