//! Max pooling frame features into one embedding per utterance.

use vdx::data::{max_pool, FrameFeatures};
use vdx::nn::Matrix;

fn main() -> vdx::Result<()> {
    let frames = Matrix::from_rows(&[
        [0.1, -0.3, 0.8, 0.0],
        [0.5, -0.9, 0.2, 0.1],
        [-0.2, 0.4, 0.3, -0.7],
    ])?;
    let features = FrameFeatures {
        id: "utt1".into(),
        frames,
        source: "example".into(),
    };
    println!("pooled: {:?}", max_pool(&features)?);
    Ok(())
}
