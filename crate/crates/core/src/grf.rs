//! Gaussian random field posterior: harmonic mean, conditional covariance,
//! marginalization onto a test set and conditional correlation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::linalg;
use crate::scalar::Scalar;

/// Laplacian plus heat parameter β; the posterior covariance is `β · L_U⁻¹`.
#[derive(Debug, Clone)]
pub struct GrfModel<T: Scalar> {
    laplacian: Laplacian<T>,
    beta: T,
}

impl<T: Scalar> GrfModel<T> {
    pub fn new(laplacian: Laplacian<T>, beta: T) -> Result<Self> {
        if !(beta > T::zero()) {
            return Err(Error::invalid("heat parameter β must be positive"));
        }
        Ok(Self { laplacian, beta })
    }

    /// Model with β = 1.
    pub fn unit(laplacian: Laplacian<T>) -> Self {
        Self {
            laplacian,
            beta: T::one(),
        }
    }

    pub fn laplacian(&self) -> &Laplacian<T> {
        &self.laplacian
    }

    pub fn beta(&self) -> T {
        self.beta
    }
}

/// Labeled nodes with their tags in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    nodes: Vec<usize>,
    tags: Vec<T>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(nodes: Vec<usize>, tags: Vec<T>) -> Result<Self> {
        if nodes.len() != tags.len() {
            return Err(Error::invalid(format!(
                "{} labeled nodes but {} tags",
                nodes.len(),
                tags.len()
            )));
        }
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("labeled nodes must be distinct"));
        }
        if let Some(t) = tags.iter().find(|&&t| !(t >= T::zero() && t <= T::one())) {
            return Err(Error::invalid(format!("tag {t} outside [0, 1]")));
        }
        Ok(Self { nodes, tags })
    }

    pub fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            tags: Vec::new(),
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn tags(&self) -> &[T] {
        &self.tags
    }
}

/// Which unlabeled nodes a prediction or risk is measured on.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TestSet {
    #[default]
    AllUnlabeled,
    Nodes(Vec<usize>),
}

impl TestSet {
    pub fn nodes(&self) -> Option<&[usize]> {
        match self {
            TestSet::AllUnlabeled => None,
            TestSet::Nodes(n) => Some(n),
        }
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes().is_some_and(|n| n.contains(&node))
    }
}

/// Conditional distribution of the unlabeled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GrfPosterior<T: Scalar> {
    pub unlabeled_nodes: Vec<usize>,
    pub mean: DVector<T>,
    pub covariance: DMatrix<T>,
}

impl<T: Scalar> GrfPosterior<T> {
    pub fn variance(&self, node: usize) -> Option<T> {
        let k = self.unlabeled_nodes.iter().position(|&u| u == node)?;
        Some(self.covariance[(k, k)])
    }
}

/// Matrix indices of the labeled set and of its complement (ascending ids).
pub(crate) fn split<T: Scalar>(l: &Laplacian<T>, labeled: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let lab_idx = l.indices_of(labeled)?;
    let mut is_lab = vec![false; l.dim()];
    for &k in &lab_idx {
        if is_lab[k] {
            return Err(Error::invalid("labeled nodes must be distinct"));
        }
        is_lab[k] = true;
    }
    let unl_idx = (0..l.dim()).filter(|&k| !is_lab[k]).collect();
    Ok((lab_idx, unl_idx))
}

/// Conditions the field on the labeled tags: mean `−L_U⁻¹ L_ul t`,
/// covariance `β L_U⁻¹`, over unlabeled nodes in ascending id order.
pub fn condition<T: Scalar>(model: &GrfModel<T>, labeled: &LabeledSet<T>) -> Result<GrfPosterior<T>> {
    let l = model.laplacian();
    let (lab_idx, unl_idx) = split(l, labeled.nodes())?;
    let unlabeled_nodes: Vec<usize> = unl_idx.iter().map(|&k| l.nodes()[k]).collect();
    if unl_idx.is_empty() {
        return Ok(GrfPosterior {
            unlabeled_nodes,
            mean: DVector::zeros(0),
            covariance: DMatrix::zeros(0, 0),
        });
    }
    let chol = linalg::cholesky(linalg::principal(l.matrix(), &unl_idx), "L_U")?;
    let l_ul = linalg::block(l.matrix(), &unl_idx, &lab_idx);
    let t = DVector::from_column_slice(labeled.tags());
    let mean = -chol.solve(&(l_ul * t));
    let covariance = linalg::symmetrize(chol.inverse()) * model.beta();
    Ok(GrfPosterior {
        unlabeled_nodes,
        mean,
        covariance,
    })
}

/// Harmonic means for several tag vectors sharing one factorization.
///
/// `tags` has one row per labeled node and one column per tag vector; the
/// result has one row per unlabeled node (ascending id) in the same columns.
pub fn harmonic_means<T: Scalar>(
    l: &Laplacian<T>,
    labeled: &[usize],
    tags: &DMatrix<T>,
) -> Result<(Vec<usize>, DMatrix<T>)> {
    if tags.nrows() != labeled.len() {
        return Err(Error::invalid("tag matrix needs one row per labeled node"));
    }
    let (lab_idx, unl_idx) = split(l, labeled)?;
    let unlabeled: Vec<usize> = unl_idx.iter().map(|&k| l.nodes()[k]).collect();
    if unl_idx.is_empty() {
        return Ok((unlabeled, DMatrix::zeros(0, tags.ncols())));
    }
    let chol = linalg::cholesky(linalg::principal(l.matrix(), &unl_idx), "L_U")?;
    let rhs = linalg::block(l.matrix(), &unl_idx, &lab_idx) * tags;
    Ok((unlabeled, -chol.solve(&rhs)))
}

/// Restricts a posterior to the test nodes (row/column selection).
pub fn marginalize<T: Scalar>(posterior: &GrfPosterior<T>, test: &TestSet) -> Result<GrfPosterior<T>> {
    let Some(nodes) = test.nodes() else {
        return Ok(posterior.clone());
    };
    let idx: Vec<usize> = nodes
        .iter()
        .map(|&v| {
            posterior
                .unlabeled_nodes
                .iter()
                .position(|&u| u == v)
                .ok_or_else(|| Error::invalid(format!("test node {v} is not unlabeled")))
        })
        .collect::<Result<_>>()?;
    Ok(GrfPosterior {
        unlabeled_nodes: nodes.to_vec(),
        mean: DVector::from_fn(idx.len(), |r, _| posterior.mean[idx[r]]),
        covariance: linalg::principal(&posterior.covariance, &idx),
    })
}

/// Correlation matrix of the unlabeled nodes given the labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation<T: Scalar> {
    pub nodes: Vec<usize>,
    pub matrix: DMatrix<T>,
}

impl<T: Scalar> Correlation<T> {
    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        let a = self.nodes.iter().position(|&u| u == i)?;
        let b = self.nodes.iter().position(|&u| u == j)?;
        Some(self.matrix[(a, b)])
    }
}

/// `D^{-1/2} L_U⁻¹ D^{-1/2}` with `D = diag(L_U⁻¹)`.
pub fn conditional_correlation<T: Scalar>(model: &GrfModel<T>, labeled_nodes: &[usize]) -> Result<Correlation<T>> {
    let l = model.laplacian();
    let (_, unl_idx) = split(l, labeled_nodes)?;
    let cov = linalg::spd_inverse(linalg::principal(l.matrix(), &unl_idx), "L_U")?;
    let scale: Vec<T> = (0..cov.nrows()).map(|k| T::one() / cov[(k, k)].sqrt()).collect();
    let mut matrix = DMatrix::from_fn(cov.nrows(), cov.ncols(), |r, c| cov[(r, c)] * scale[r] * scale[c]);
    for k in 0..matrix.nrows() {
        matrix[(k, k)] = T::one();
    }
    Ok(Correlation {
        nodes: unl_idx.iter().map(|&k| l.nodes()[k]).collect(),
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, LaplacianMode, WeightedGraph};
    use approx::assert_abs_diff_eq;

    fn path3_l0() -> Laplacian<f64> {
        let g = WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        build_laplacian(&g, &LaplacianMode::Unregularized).unwrap()
    }

    fn labeled(nodes: &[usize], tags: &[f64]) -> LabeledSet<f64> {
        LabeledSet::new(nodes.to_vec(), tags.to_vec()).unwrap()
    }

    #[test]
    fn center_label_on_path() {
        let m = GrfModel::unit(path3_l0());
        let p = condition(&m, &labeled(&[1], &[1.0])).unwrap();
        assert_eq!(p.unlabeled_nodes, vec![0, 2]);
        assert_abs_diff_eq!(p.mean, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(p.covariance, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn end_label_on_path() {
        let m = GrfModel::unit(path3_l0());
        let p = condition(&m, &labeled(&[0], &[1.0])).unwrap();
        assert_eq!(p.unlabeled_nodes, vec![1, 2]);
        assert_abs_diff_eq!(p.mean, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-12);
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        assert_abs_diff_eq!(p.covariance, expect, epsilon = 1e-12);
    }

    #[test]
    fn zero_tags_give_zero_mean() {
        let g = WeightedGraph::new(4, [(0, 1, 0.5), (1, 2, 2.0), (2, 3, 1.0), (3, 0, 0.7)]).unwrap();
        let l = build_laplacian(&g, &LaplacianMode::uniform(4, 3.0)).unwrap();
        let p = condition(&GrfModel::unit(l), &labeled(&[0, 2], &[0.0, 0.0])).unwrap();
        assert!(p.mean.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn singular_without_labels() {
        let err = condition(&GrfModel::unit(path3_l0()), &LabeledSet::empty()).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn rejects_bad_labeled_sets() {
        assert!(LabeledSet::new(vec![0, 0], vec![0.1, 0.2]).is_err());
        assert!(LabeledSet::new(vec![0], vec![1.5]).is_err());
        assert!(LabeledSet::new(vec![0, 1], vec![0.5]).is_err());
        assert!(GrfModel::new(path3_l0(), 0.0).is_err());
    }

    #[test]
    fn marginal_selection() {
        let m = GrfModel::unit(path3_l0());
        let p = condition(&m, &labeled(&[0], &[1.0])).unwrap();
        assert_eq!(marginalize(&p, &TestSet::AllUnlabeled).unwrap(), p);
        let q = marginalize(&p, &TestSet::Nodes(vec![2])).unwrap();
        assert_abs_diff_eq!(q.covariance[(0, 0)], 2.0, epsilon = 1e-12);
        assert_eq!(q.variance(2), Some(q.covariance[(0, 0)]));
        assert!(marginalize(&p, &TestSet::Nodes(vec![0])).is_err());
    }

    #[test]
    fn correlations_on_path() {
        let m = GrfModel::unit(path3_l0());
        let c = conditional_correlation(&m, &[1]).unwrap();
        assert_abs_diff_eq!(c.matrix, DMatrix::identity(2, 2), epsilon = 1e-12);
        let c = conditional_correlation(&m, &[0]).unwrap();
        assert_abs_diff_eq!(c.get(1, 2).unwrap(), 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        let c = conditional_correlation(&m, &[0, 1]).unwrap();
        assert_eq!(c.matrix, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn beta_scaling() {
        let g = WeightedGraph::new(4, [(0, 1, 0.5), (1, 2, 2.0), (2, 3, 1.0)]).unwrap();
        let l = build_laplacian(&g, &LaplacianMode::uniform(4, 2.0)).unwrap();
        let lab = labeled(&[3], &[0.8]);
        let base = condition(&GrfModel::unit(l.clone()), &lab).unwrap();
        for beta in [0.5, 1.0, 2.0] {
            let p = condition(&GrfModel::new(l.clone(), beta).unwrap(), &lab).unwrap();
            assert_abs_diff_eq!(p.mean, base.mean, epsilon = 1e-14);
            assert_abs_diff_eq!(p.covariance, &base.covariance * beta, epsilon = 1e-12);
        }
    }

    #[test]
    fn multi_column_means_match_condition() {
        let g = WeightedGraph::new(4, [(0, 1, 0.5), (1, 2, 2.0), (2, 3, 1.0), (0, 3, 0.1)]).unwrap();
        let l = build_laplacian(&g, &LaplacianMode::uniform(4, 2.0)).unwrap();
        let tags = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.25, 0.75]);
        let (unl, means) = harmonic_means(&l, &[1, 3], &tags).unwrap();
        assert_eq!(unl, vec![0, 2]);
        for c in 0..2 {
            let lab = labeled(&[1, 3], &[tags[(0, c)], tags[(1, c)]]);
            let p = condition(&GrfModel::unit(l.clone()), &lab).unwrap();
            assert_abs_diff_eq!(means.column(c).clone_owned(), p.mean, epsilon = 1e-13);
        }
    }
}
