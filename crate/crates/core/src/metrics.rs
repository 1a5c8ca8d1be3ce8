use crate::error::Result;
use crate::raster::{check_dims, BitMask};

/// Intersection over union; two empty masks agree perfectly (1.0).
pub fn iou(pred: &BitMask, gt: &BitMask) -> Result<f64> {
    check_dims(gt.dims(), pred.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, g) in pred.bits().iter().zip(gt.bits()) {
        inter += (*p && *g) as usize;
        union += (*p || *g) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
