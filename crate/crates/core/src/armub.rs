//! Orthonormal bases of `R^d` from a resolvable design and an orthogonal `Y`.
//!
//! Every parallel class gives one basis: block `b` (points sorted) contributes
//! `k` vectors, vector `i` having value `Y_ij` at the `j`-th point of `b`.
//! Vector `b·k + i` of a basis is row `i` of `Y` laid over block `b`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::quad::{QuadJson, QuadNum};
use crate::epsh::EpsHadamard;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rbd::Rbd;

/// Above this dimension orthonormality is certified structurally
/// (orthogonal `Y` plus partitioning classes) instead of by explicit sums.
pub const EXPLICIT_GRAM_LIMIT: usize = 1024;

#[derive(Debug, Clone)]
pub struct SparseBasis {
    pub d: usize,
    pub k: usize,
    pub class_index: usize,
    y: Arc<EpsHadamard>,
    rbd: Arc<Rbd>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseVector {
    /// `(coordinate, value)` in increasing coordinate order.
    pub entries: Vec<(usize, QuadNum)>,
}

impl SparseVector {
    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|(c, _)| *c).collect()
    }

    pub fn dot(&self, other: &SparseVector) -> QuadNum {
        let m = self.entries.first().map_or(1, |(_, v)| v.m());
        let (mut i, mut j) = (0, 0);
        let mut acc = QuadNum::zero(m);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (&self.entries[i], &other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc = &acc + &(&a.1 * &b.1);
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

impl SparseBasis {
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.rbd.classes[self.class_index]
    }

    pub fn y(&self) -> &EpsHadamard {
        &self.y
    }

    /// Block and row of `Y` generating vector `index`.
    pub fn block_of_vector(&self, index: usize) -> (usize, usize) {
        (index / self.k, index % self.k)
    }

    pub fn vector_at(&self, index: usize) -> Result<SparseVector> {
        if index >= self.d {
            return Err(Error::domain(format!("vector index {index} outside 0..{}", self.d)));
        }
        let (b, i) = self.block_of_vector(index);
        let block = &self.blocks()[b];
        Ok(SparseVector { entries: block.iter().enumerate().map(|(j, &p)| (p, self.y.get(i, j).clone())).collect() })
    }

    /// `(vector, coordinate, row i, column j)` for every nonzero slot, with value `Y_ij`.
    pub fn slots(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        self.blocks().iter().enumerate().flat_map(move |(b, block)| {
            (0..self.k).flat_map(move |i| block.iter().enumerate().map(move |(j, &p)| (b * self.k + i, p, i, j)))
        })
    }

    /// Dense `d×d` matrix whose columns are the basis vectors.
    pub fn dense(&self) -> Vec<Vec<QuadNum>> {
        let m = self.y.radicand();
        let mut out = vec![vec![QuadNum::zero(m); self.d]; self.d];
        for (v, p, i, j) in self.slots() {
            out[p][v] = self.y.get(i, j).clone();
        }
        out
    }

    /// First pair `(u, v)` with `⟨u, v⟩ ≠ δ_uv`, summing only over shared coordinates.
    pub fn explicit_gram_violation(&self, exec: Execution) -> Option<(usize, usize)> {
        let vectors: Vec<SparseVector> = (0..self.d).map(|i| self.vector_at(i).expect("in range")).collect();
        // vectors sharing a coordinate belong to the same block
        let per_block = par::map_range(exec, self.blocks().len(), |b| {
            let base = b * self.k;
            (0..self.k).find_map(|i| {
                (i..self.k).find_map(|i2| {
                    let v = vectors[base + i].dot(&vectors[base + i2]);
                    let ok = if i == i2 { v == QuadNum::one(v.m()) } else { v.is_zero() };
                    (!ok).then_some((base + i, base + i2))
                })
            })
        });
        per_block.into_iter().flatten().next()
    }
}

#[derive(Debug, Clone)]
pub struct BasisSet {
    pub d: usize,
    pub k: usize,
    pub s: usize,
    pub bases: Vec<SparseBasis>,
    pub rbd: Arc<Rbd>,
    pub y: Arc<EpsHadamard>,
}

/// How orthonormality of every basis was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrthonormalityEvidence {
    /// Every within-block inner product summed explicitly.
    Explicit,
    /// `Y·Yᵀ = I` exactly and each class partitions the points into sorted blocks of size `k`.
    Structural,
}

impl BasisSet {
    pub fn evidence(&self) -> OrthonormalityEvidence {
        if self.d <= EXPLICIT_GRAM_LIMIT {
            OrthonormalityEvidence::Explicit
        } else {
            OrthonormalityEvidence::Structural
        }
    }

    pub fn radicand(&self) -> u64 {
        self.y.radicand()
    }

    /// Re-runs the orthonormality certification; returns the first failure.
    pub fn orthonormality_violation(&self, exec: Execution) -> Option<String> {
        if let Some((i, j)) = self.y.orthogonality_violation(exec) {
            return Some(format!("Y·Yᵀ ≠ I at ({i},{j})"));
        }
        let cert = crate::rbd::verify_rbd_with(
            &self.rbd,
            crate::rbd::RbdCheckOptions { exec, mu_limit: usize::MAX, ..Default::default() },
        );
        if !cert.structure_ok() {
            return Some(format!("design classes are not partitions: {:?}", cert.violations.first()));
        }
        if self.evidence() == OrthonormalityEvidence::Explicit {
            for b in &self.bases {
                if let Some((u, v)) = b.explicit_gram_violation(exec) {
                    return Some(format!("basis {}: ⟨{u},{v}⟩ is wrong", b.class_index));
                }
            }
        }
        None
    }

    pub fn to_json(&self, with_triplets: bool) -> BasisSetJson {
        let mut values: Vec<QuadNum> = Vec::new();
        let mut id_of = std::collections::HashMap::new();
        for (_, v) in self.y.y.entries() {
            id_of.entry(v.clone()).or_insert_with(|| {
                values.push(v.clone());
                values.len() - 1
            });
        }
        let bases = with_triplets.then(|| {
            self.bases
                .iter()
                .map(|b| BasisJson {
                    class: b.class_index,
                    triplets: b.slots().map(|(v, p, i, j)| [v, p, id_of[b.y.get(i, j)]]).collect(),
                })
                .collect()
        });
        BasisSetJson {
            d: self.d,
            k: self.k,
            s: self.s,
            m: self.y.four_n,
            values: values.iter().map(QuadNum::to_json).collect(),
            bases,
        }
    }
}

/// Assembly without the orthonormality certification, for re-checking
/// artifacts that may have been altered.
pub fn assemble_unchecked(rbd: Arc<Rbd>, y: Arc<EpsHadamard>) -> Result<BasisSet> {
    if y.k != rbd.k {
        return Err(Error::domain(format!("Y has order {} but blocks have size {}", y.k, rbd.k)));
    }
    let bases = (0..rbd.num_classes())
        .map(|c| SparseBasis { d: rbd.d, k: rbd.k, class_index: c, y: y.clone(), rbd: rbd.clone() })
        .collect();
    Ok(BasisSet { d: rbd.d, k: rbd.k, s: rbd.num_classes(), bases, rbd, y })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisJson {
    pub class: usize,
    /// `[vector, coordinate, value id]`.
    pub triplets: Vec<[usize; 3]>,
}

/// Sparse export. `bases` is omitted for large `d`; the design and `Y`
/// artifacts determine every vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSetJson {
    pub d: usize,
    pub k: usize,
    pub s: usize,
    pub m: u64,
    pub values: Vec<QuadJson>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bases: Option<Vec<BasisJson>>,
}

/// One basis per parallel class, all built from the same `Y`.
pub fn assemble(rbd: &Rbd, y: &EpsHadamard) -> Result<BasisSet> {
    assemble_shared(Arc::new(rbd.clone()), Arc::new(y.clone()), Execution::default())
}

pub fn assemble_shared(rbd: Arc<Rbd>, y: Arc<EpsHadamard>, exec: Execution) -> Result<BasisSet> {
    let set = assemble_unchecked(rbd, y)?;
    if let Some(why) = set.orthonormality_violation(exec) {
        return Err(Error::Certification(why));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::rational::frac;
    use crate::epsh::{best_reduction, ReductionOptions};
    use crate::hadamard::{find_hadamard, sylvester};
    use crate::rbd::build_affine_rbd;

    fn h2() -> EpsHadamard {
        EpsHadamard::from_hadamard(&sylvester(1).unwrap()).unwrap()
    }

    fn d4_design() -> Rbd {
        Rbd::from_classes(vec![vec![vec![0, 1], vec![2, 3]], vec![vec![0, 2], vec![1, 3]], vec![vec![0, 3], vec![1, 2]]]).unwrap()
    }

    #[test]
    fn reproduces_the_d4_matrices() {
        let set = assemble(&d4_design(), &h2()).unwrap();
        let r = QuadNum::new(frac(0, 1), frac(1, 2), 2).unwrap(); // 1/√2
        let expect: [[[i64; 4]; 4]; 3] = [
            [[1, 1, 0, 0], [1, -1, 0, 0], [0, 0, 1, 1], [0, 0, 1, -1]],
            [[1, 1, 0, 0], [0, 0, 1, 1], [1, -1, 0, 0], [0, 0, 1, -1]],
            [[1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, -1], [1, -1, 0, 0]],
        ];
        for (b, e) in set.bases.iter().zip(expect) {
            let dense = b.dense();
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(dense[i][j], r.scale(&frac(e[i][j], 1)), "basis {} ({i},{j})", b.class_index);
                }
            }
        }
        let v0 = set.bases[0].vector_at(0).unwrap();
        assert_eq!(v0.entries, vec![(0, r.clone()), (1, r)]);
        assert!(set.bases[0].vector_at(4).is_err());
    }

    #[test]
    fn d6_inner_products_by_dense_gram() {
        let set = assemble(&build_affine_rbd(2, 3).unwrap(), &h2()).unwrap();
        let half = QuadNum::rational(frac(1, 2), 2);
        for a in 0..3 {
            let da = set.bases[a].dense();
            for b in 0..3 {
                let db = set.bases[b].dense();
                for u in 0..6 {
                    for v in 0..6 {
                        let ip = (0..6).fold(QuadNum::zero(2), |acc, p| &acc + &(&da[p][u] * &db[p][v]));
                        if a == b {
                            assert_eq!(ip, QuadNum::from_int((u == v) as i64, 2));
                        } else {
                            assert!(ip.is_zero() || ip.abs() == half);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn d15_support_law_and_bound() {
        let y = best_reduction(&sylvester(2).unwrap(), 1, ReductionOptions::default()).unwrap();
        let set = assemble(&build_affine_rbd(3, 5).unwrap(), &y).unwrap();
        let bound = QuadNum::rational(frac(4, 9), 1);
        let mut max = QuadNum::zero(1);
        for a in 0..5 {
            for b in a + 1..5 {
                for u in 0..15 {
                    let vu = set.bases[a].vector_at(u).unwrap();
                    for v in 0..15 {
                        let vv = set.bases[b].vector_at(v).unwrap();
                        let shared = vu.support().iter().filter(|p| vv.support().contains(p)).count();
                        assert!(shared <= 1);
                        let ip = vu.dot(&vv).abs();
                        if ip.cmp_value(&max).is_gt() {
                            max = ip;
                        }
                    }
                }
            }
        }
        assert_eq!(max, bound);
    }

    #[test]
    fn supports_are_blocks() {
        let y = best_reduction(&find_hadamard(8).unwrap(), 1, ReductionOptions::default()).unwrap();
        let set = assemble(&build_affine_rbd(7, 11).unwrap(), &y).unwrap();
        for b in &set.bases {
            for idx in 0..set.d {
                let (blk, _) = b.block_of_vector(idx);
                assert_eq!(b.vector_at(idx).unwrap().support(), b.blocks()[blk]);
            }
        }
        let last = set.bases[0].vector_at(set.d - 1).unwrap();
        let row: Vec<QuadNum> = (0..7).map(|j| y.get(6, j).clone()).collect();
        assert_eq!(last.entries.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>(), row);
    }

    #[test]
    fn order_mismatch_is_domain_error() {
        assert!(matches!(assemble(&build_affine_rbd(3, 5).unwrap(), &h2()), Err(Error::Domain(_))));
    }

    #[test]
    fn triplet_export_counts() {
        let set = assemble(&build_affine_rbd(2, 3).unwrap(), &h2()).unwrap();
        let j = set.to_json(true);
        assert_eq!(j.values.len(), 2);
        let bases = j.bases.unwrap();
        assert_eq!(bases.len(), 3);
        assert!(bases.iter().all(|b| b.triplets.len() == 6 * 2));
        assert!(set.to_json(false).bases.is_none());
    }
}
