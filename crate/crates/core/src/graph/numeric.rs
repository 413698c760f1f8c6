use nalgebra::DMatrix;

use super::{Factor, Values};
use crate::error::Result;
use crate::geom::CameraIntrinsics;

/// Central-difference Jacobians of the raw residual, one block per connected
/// variable, taken through each variable's retraction.
pub fn numeric_jacobian(factor: &Factor, values: &Values, k: &CameraIntrinsics, h: f64) -> Result<Vec<DMatrix<f64>>> {
    let rows = factor.residual(values, k)?.len();
    let mut blocks = Vec::new();
    for key in factor.keys() {
        let mut j = DMatrix::zeros(rows, key.dim());
        for col in 0..key.dim() {
            let mut delta = vec![0.0; key.dim()];
            delta[col] = h;
            let mut plus = values.clone();
            plus.retract(&key, &delta)?;
            delta[col] = -h;
            let mut minus = values.clone();
            minus.retract(&key, &delta)?;
            let diff = (factor.residual(&plus, k)? - factor.residual(&minus, k)?) / (2.0 * h);
            j.set_column(col, &diff);
        }
        blocks.push(j);
    }
    Ok(blocks)
}
