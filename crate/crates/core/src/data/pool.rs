use crate::nn::Matrix;
use crate::{Error, Result};

/// Frame-level encoder output for one utterance, `(frames, dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub id: String,
    pub frames: Matrix,
    pub source: String,
}

/// Elementwise maximum over frames.
pub fn max_pool(features: &FrameFeatures) -> Result<Vec<f64>> {
    let frames = &features.frames;
    if frames.rows() == 0 || frames.cols() == 0 {
        return Err(Error::Validation(format!(
            "`{}` has no frames to pool",
            features.id
        )));
    }
    let mut out = frames.row(0).to_vec();
    for r in 1..frames.rows() {
        for (o, &v) in out.iter_mut().zip(frames.row(r)) {
            *o = o.max(v);
        }
    }
    Ok(out)
}
