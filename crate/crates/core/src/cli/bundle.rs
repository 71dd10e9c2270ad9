//! A trained model together with what is needed to rebuild and apply it:
//! run configuration, normalization statistics and the distance graph.

use std::path::Path;

use serde_json::json;

use crate::data::RunConfig;
use crate::error::{Error, Result};
use crate::graph::{build_predefined, DistanceGraph, Edge};
use crate::model::{ArrayData, Checkpoint, ModelConfig, NamedArray, Stjgcn};
use crate::tensor::Scalar;
use crate::train::ZScore;

pub const FORMAT_NAME: &str = "stjgcn-model";
pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug)]
pub struct Bundle<T: Scalar> {
    pub run: RunConfig,
    pub model: Stjgcn<T>,
    pub zscore: ZScore,
    pub graph: DistanceGraph,
    pub best_epoch: Option<usize>,
}

impl<T: Scalar> Bundle<T> {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = json!({
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "precision": T::DTYPE,
            "run": self.run,
            "model": self.model.config(),
            "best_epoch": self.best_epoch,
            "graph_nodes": self.graph.node_count(),
        });
        let mut arrays = self.model.export_arrays();
        let c = self.zscore.channels();
        arrays.push(NamedArray::new("zscore.mean", &[c], ArrayData::F64(self.zscore.mean.clone())));
        arrays.push(NamedArray::new("zscore.std", &[c], ArrayData::F64(self.zscore.std.clone())));
        let edges: Vec<f64> = self
            .graph
            .edges()
            .iter()
            .flat_map(|e| [e.from as f64, e.to as f64, e.distance])
            .collect();
        arrays.push(NamedArray::new("graph.edges", &[self.graph.edges().len(), 3], ArrayData::F64(edges)));
        arrays.push(NamedArray::new("graph.sigma", &[1], ArrayData::F64(vec![self.graph.sigma()])));
        Ok(Checkpoint { meta, arrays })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = &ckpt.meta;
        if meta["format"] != FORMAT_NAME {
            return Err(Error::Format(format!("not a {FORMAT_NAME} checkpoint")));
        }
        if meta["version"] != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", meta["version"])));
        }
        let run: RunConfig = serde_json::from_value(meta["run"].clone())?;
        let config: ModelConfig = serde_json::from_value(meta["model"].clone())?;
        let best_epoch: Option<usize> = serde_json::from_value(meta["best_epoch"].clone())?;
        let nodes: usize = serde_json::from_value(meta["graph_nodes"].clone())?;

        let zscore = ZScore {
            mean: ckpt.get("zscore.mean")?.data.to_f64(),
            std: ckpt.get("zscore.std")?.data.to_f64(),
        };
        let raw = ckpt.get("graph.edges")?.data.to_f64();
        let edges = raw
            .chunks_exact(3)
            .map(|e| Edge {
                from: e[0] as usize,
                to: e[1] as usize,
                distance: e[2],
            })
            .collect();
        let sigma = ckpt.get("graph.sigma")?.data.to_f64()[0];
        let graph = DistanceGraph::new(nodes, edges)?.with_sigma(sigma)?;

        let stjg = build_predefined(&graph, config.required_gaps()?, run.delta_pdf)?;
        let mut model = Stjgcn::new(config, stjg, run.seed)?;
        model.import_arrays(ckpt)?;
        Ok(Self {
            run,
            model,
            zscore,
            graph,
            best_epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Element type recorded in a checkpoint.
pub fn checkpoint_precision(ckpt: &Checkpoint) -> Option<String> {
    ckpt.meta["precision"].as_str().map(str::to_string)
}
