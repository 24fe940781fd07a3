//! Serving a freshly trained model on http://127.0.0.1:8642 with the
//! training corpus as demo data. Try:
//!
//! ```text
//! curl localhost:8642/examples?limit=2
//! curl -X POST localhost:8642/intervene -H 'content-type: application/json' \
//!   -d '{"v":1,"example_id":"syn0000","overrides":{"dysphonia_absent":1}}'
//! ```

use std::sync::Arc;

use vdx::data::{synth_generate, SynthConfig};
use vdx::models::{Arch, ArchConfig, Checkpoint};
use vdx::service::{serve, ServingState};
use vdx::training::{fit_holdout, TrainConfig};

#[tokio::main]
async fn main() -> vdx::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let ds = synth_generate(&SynthConfig {
        embedding_dim: 64,
        ..SynthConfig::separable()
    })?;
    let arch_cfg = ArchConfig::default();
    let model = fit_holdout(Arch::Cbm, &ds, &arch_cfg, &TrainConfig::default())?.model;
    let state = ServingState::new(Checkpoint::new(model, arch_cfg), Some(ds))?;
    serve(Arc::new(state), ([127, 0, 0, 1], 8642).into()).await
}
