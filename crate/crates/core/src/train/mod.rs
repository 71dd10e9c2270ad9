//! Normalization, windowing, loss, metrics and the optimisation loop.

pub mod fit;
pub mod loss;
pub mod windows;
pub mod zscore;

pub use fit::{
    evaluate, evaluate_persistence, history_csv, predict_windows, train, EpochRecord, Evaluation,
    Prepared, TrainConfig, TrainReport, HISTORY_HEADER,
};
pub use loss::{combined_loss, combined_loss_value, horizon_metrics, mape_count, metrics, Metrics, MAPE_MASK};
pub use windows::{sliding_windows, split_windows, SplitSpec, Splits};
pub use zscore::{ZScore, STD_GUARD};

use crate::data::{RunConfig, TrafficDataset};
use crate::error::Result;
use crate::graph::{build_predefined, DistanceGraph};
use crate::model::{ModelConfig, Stjgcn};
use crate::tensor::Scalar;

impl RunConfig {
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.train_frac,
            val: self.val_frac,
            test: self.test_frac,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            beta: self.beta,
            seed: self.seed,
            grad_clip: self.grad_clip,
        }
    }

    /// Model shape for a dataset.
    pub fn model_config(&self, ds: &TrafficDataset) -> Result<ModelConfig> {
        self.validate()?;
        let cfg = ModelConfig {
            nodes: ds.nodes(),
            channels: ds.channels(),
            hidden: self.d,
            input_len: self.p,
            horizon: self.q,
            kernel: self.k,
            dilations: self.layer_config()?.dilations,
            delta_adt: self.delta_adt,
            slots_per_day: ds.calendar().slots_per_day(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fresh model for `ds` over `graph`, seeded by `self.seed`.
    pub fn build_model<T: Scalar>(&self, ds: &TrafficDataset, graph: &DistanceGraph) -> Result<Stjgcn<T>> {
        let cfg = self.model_config(ds)?;
        let graph = match self.sigma {
            Some(s) => graph.clone().with_sigma(s)?,
            None => graph.clone(),
        };
        let stjg = build_predefined(&graph, cfg.required_gaps()?, self.delta_pdf)?;
        Stjgcn::new(cfg, stjg, self.seed)
    }
}
