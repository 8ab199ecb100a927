use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::embedding::EmbeddingMatrix;

use super::{AnchorDictionary, Method, TranslationError, TranslationMatrix};

/// Singular values below this fraction of the largest count as zero when
/// deciding whether the cross-covariance is rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesFit {
    pub r: Array2<f64>,
    pub singular_values: Vec<f64>,
    /// Some singular value is (numerically) zero, so the minimizer is not
    /// unique; the returned `R` is still a minimizer.
    pub rank_deficient: bool,
}

/// Orthogonal `R` minimizing `‖R·source − target‖²_F`, where both inputs hold
/// paired points as columns. Reflections are allowed.
pub fn orthogonal_procrustes(
    source: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
) -> Result<ProcrustesFit, TranslationError> {
    if source.dim() != target.dim() {
        return Err(TranslationError::Dimension(format!(
            "source is {:?}, target is {:?}",
            source.dim(),
            target.dim()
        )));
    }
    let d = source.nrows();
    // target · sourceᵀ = U Σ Vᵀ  =>  R = U Vᵀ
    let cross = target.dot(&source.t());
    let m = DMatrix::from_fn(d, d, |i, j| cross[[i, j]]);
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let rm = u * v_t;
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let largest = singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let rank_deficient = singular_values.iter().any(|&s| s <= RANK_TOL * largest) || largest == 0.0;
    Ok(ProcrustesFit {
        r: Array2::from_shape_fn((d, d), |(i, j)| rm[(i, j)]),
        singular_values,
        rank_deficient,
    })
}

/// `‖R·source − target‖²_F`.
pub fn procrustes_objective(r: ArrayView2<'_, f64>, source: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> f64 {
    let diff = r.dot(&source) - target;
    diff.iter().map(|v| v * v).sum()
}

fn anchor_columns(x: &EmbeddingMatrix, places: impl Iterator<Item = crate::PlaceId>) -> Result<Array2<f64>, TranslationError> {
    let places: Vec<_> = places.collect();
    let mut out = Array2::zeros((x.dim(), places.len()));
    for (k, p) in places.into_iter().enumerate() {
        let col = x.column(p).ok_or_else(|| TranslationError::MissingPlace {
            city: x.city_id().clone(),
            place: p,
        })?;
        out.column_mut(k).assign(&col);
    }
    Ok(out)
}

/// Closed-form alignment of `x_phi` onto `x_psi` over the anchor pairs.
pub fn procrustes_align(
    x_phi: &EmbeddingMatrix,
    x_psi: &EmbeddingMatrix,
    anchors: &AnchorDictionary,
) -> Result<TranslationMatrix, TranslationError> {
    if x_phi.dim() != x_psi.dim() {
        return Err(TranslationError::Dimension(format!(
            "source d={}, target d={}",
            x_phi.dim(),
            x_psi.dim()
        )));
    }
    let b = anchor_columns(x_phi, anchors.pairs.iter().map(|p| p.0))?;
    let a = anchor_columns(x_psi, anchors.pairs.iter().map(|p| p.1))?;
    let fit = orthogonal_procrustes(b.view(), a.view())?;
    if fit.rank_deficient {
        log::warn!(
            "anchor cross-covariance is rank deficient ({} anchors, d={}); the rotation is not unique",
            anchors.len(),
            x_phi.dim()
        );
    }
    Ok(TranslationMatrix {
        source_city: x_phi.city_id().clone(),
        target_city: x_psi.city_id().clone(),
        method: Method::Procrustes,
        r: fit.r,
    })
}
