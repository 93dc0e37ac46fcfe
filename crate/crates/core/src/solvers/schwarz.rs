use rayon::prelude::*;

use crate::assembly::DofMap;
use crate::geometry::{ActiveMesh, ElementClass};
use crate::scalar::Real;
use crate::spaces::FeSpace;

use super::dense::{sym_eigen, DenseMatrix};
use super::krylov::Preconditioner;
use super::sparse::Csr;
use super::SolverError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockStrategy<T> {
    /// One block per cut element, singletons elsewhere.
    CutElements,
    /// One block per active element.
    AllElements,
    /// Blocks only for cut elements with `eta < threshold`.
    Threshold(T),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockIndexSet<T> {
    /// Sorted, duplicate-free system indices per block.
    pub blocks: Vec<Vec<usize>>,
    pub strategy: BlockStrategy<T>,
    /// Whether the element blocks alone cover every index, before singleton fill.
    pub covers_all: bool,
    pub size: usize,
}

impl<T: Real> BlockIndexSet<T> {
    /// Builds a set from explicit blocks, filling uncovered indices with singletons.
    pub fn from_blocks(size: usize, blocks: Vec<Vec<usize>>, strategy: BlockStrategy<T>) -> Self {
        let mut covered = vec![false; size];
        let mut out = Vec::with_capacity(blocks.len());
        for mut b in blocks {
            b.sort_unstable();
            b.dedup();
            if b.is_empty() {
                continue;
            }
            for &i in &b {
                covered[i] = true;
            }
            out.push(b);
        }
        let covers_all = covered.iter().all(|&c| c);
        out.extend((0..size).filter(|&i| !covered[i]).map(|i| vec![i]));
        Self { blocks: out, strategy, covers_all, size }
    }

    pub fn multi_dof_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.len() > 1).count()
    }
}

/// Blocks of system indices from the DOFs supported on selected elements.
pub fn select_blocks<T: Real>(active: &ActiveMesh<T>, space: &FeSpace<T>, map: &DofMap<T>, strategy: BlockStrategy<T>) -> BlockIndexSet<T> {
    let chosen: Vec<usize> = match strategy {
        BlockStrategy::CutElements => active.cut.clone(),
        BlockStrategy::AllElements => active.active.clone(),
        BlockStrategy::Threshold(t) => active.cut.iter().copied().filter(|&e| active.class[e] == ElementClass::Cut && active.eta[e] < t).collect(),
    };
    let blocks = chosen
        .iter()
        .map(|&e| space.dofs(e).iter().flat_map(|&d| map.rows[d].iter().map(|&(k, _)| k)).collect())
        .collect();
    BlockIndexSet::from_blocks(map.num_free, blocks, strategy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchwarzMode {
    Additive,
    Multiplicative,
}

/// Spectrally truncated pseudo-inverse of one diagonal block.
#[derive(Clone, Debug)]
struct BlockFactor<T> {
    idx: Vec<usize>,
    /// Retained eigenvectors, `idx.len()` rows, stored column after column.
    vectors: Vec<Vec<T>>,
    inv_values: Vec<T>,
}

impl<T: Real> BlockFactor<T> {
    fn solve(&self, r: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); r.len()];
        for (v, &il) in self.vectors.iter().zip(&self.inv_values) {
            let c = v.iter().zip(r).map(|(&a, &b)| a * b).sum::<T>() * il;
            for (o, &vi) in out.iter_mut().zip(v) {
                *o += c * vi;
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SchwarzPreconditioner<T> {
    pub mode: SchwarzMode,
    pub theta: T,
    pub blocks: BlockIndexSet<T>,
    factors: Vec<BlockFactor<T>>,
    matrix: Csr<T>,
}

/// Factorizes every block `A_i = P_i^T A P_i`, dropping eigenpairs below
/// `theta * lambda_max(A_i)`.
pub fn build_schwarz<T: Real>(a: &Csr<T>, blocks: &BlockIndexSet<T>, mode: SchwarzMode, theta: T) -> Result<SchwarzPreconditioner<T>, SolverError> {
    let factors: Result<Vec<_>, _> = blocks
        .blocks
        .par_iter()
        .enumerate()
        .map(|(bi, idx)| {
            if idx.len() == 1 {
                let d = a.get(idx[0], idx[0]);
                return if d > T::zero() {
                    Ok(BlockFactor { idx: idx.clone(), vectors: vec![vec![T::one()]], inv_values: vec![T::one() / d] })
                } else {
                    Err(SolverError::DegenerateBlock(bi))
                };
            }
            let eig = sym_eigen(&a.submatrix(idx), true);
            let lmax = eig.values.iter().fold(T::zero(), |m, &v| m.max(v));
            let vecs: DenseMatrix<T> = eig.vectors.expect("requested");
            let mut vectors = Vec::new();
            let mut inv_values = Vec::new();
            for (k, &lam) in eig.values.iter().enumerate() {
                if lmax > T::zero() && lam >= theta * lmax && lam > T::zero() {
                    vectors.push((0..idx.len()).map(|r| vecs[(r, k)]).collect());
                    inv_values.push(T::one() / lam);
                }
            }
            if vectors.is_empty() {
                return Err(SolverError::DegenerateBlock(bi));
            }
            Ok(BlockFactor { idx: idx.clone(), vectors, inv_values })
        })
        .collect();
    Ok(SchwarzPreconditioner { mode, theta, blocks: blocks.clone(), factors: factors?, matrix: a.clone() })
}

impl<T: Real> SchwarzPreconditioner<T> {
    fn additive(&self, r: &[T]) -> Vec<T> {
        let parts: Vec<Vec<T>> = self
            .factors
            .par_iter()
            .map(|f| {
                let local: Vec<T> = f.idx.iter().map(|&i| r[i]).collect();
                f.solve(&local)
            })
            .collect();
        // summation in block order keeps the result independent of scheduling
        let mut z = vec![T::zero(); r.len()];
        for (f, part) in self.factors.iter().zip(parts) {
            for (&i, v) in f.idx.iter().zip(part) {
                z[i] += v;
            }
        }
        z
    }

    fn multiplicative(&self, r: &[T]) -> Vec<T> {
        let mut z = vec![T::zero(); r.len()];
        for f in &self.factors {
            let local: Vec<T> = f.idx.iter().map(|&i| r[i] - self.matrix.row_dot(i, &z)).collect();
            for (&i, v) in f.idx.iter().zip(f.solve(&local)) {
                z[i] += v;
            }
        }
        z
    }

    /// Dense matrix of the preconditioner, column by column.
    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.blocks.size;
        let mut b = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            for (i, v) in self.apply(&e).into_iter().enumerate() {
                b[(i, j)] = v;
            }
        }
        b
    }
}

impl<T: Real> Preconditioner<T> for SchwarzPreconditioner<T> {
    fn apply(&self, r: &[T]) -> Vec<T> {
        match self.mode {
            SchwarzMode::Additive => self.additive(r),
            SchwarzMode::Multiplicative => self.multiplicative(r),
        }
    }

    fn is_symmetric(&self) -> bool {
        self.mode == SchwarzMode::Additive
    }
}
