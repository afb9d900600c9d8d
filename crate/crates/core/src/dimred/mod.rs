//! Dimensionality reduction front-ends for the clustering benchmark.

mod embedding;
mod ica;
mod kpca;
mod pca;
mod tsne;

pub use embedding::{read_embedding, write_embedding, Embedding, Provenance};
pub use ica::{fast_ica, IcaConfig, IcaResult};
pub use kpca::{kernel_pca, Kernel, KernelPcaConfig};
pub use pca::{pca_fit_transform, Components, PcaModel};
pub use tsne::{joint_probabilities, tsne, JointProbabilities, TsneConfig, TsneResult};

use nalgebra::DMatrix;

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue, with
/// each eigenvector's largest-magnitude entry made positive.
pub(crate) fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            orient(&mut v);
            v
        })
        .collect();
    (values, vectors)
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
pub(crate) fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
