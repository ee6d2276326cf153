//! Spatial-balance comparison of designs on a square grid of dots.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::design::{Design, DesignConfig, DesignKind};
use crate::diagnostics::spatial_balance_index;
use crate::error::{Error, Result};
use crate::frame::{grid_block_strata, grid_frame, AuxSelector, GridAux, PopulationFrame};
use crate::replicate::{map_replicates, replicate_rng, Execution};
use crate::sample::Sample;

/// The designs compared by default, in table order.
pub const DEFAULT_DESIGNS: [DesignKind; 7] = [
    DesignKind::Systematic,
    DesignKind::Srs,
    DesignKind::Stratified,
    DesignKind::LocalPivotal,
    DesignKind::Cube,
    DesignKind::LocalCube,
    DesignKind::Grts,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub side: usize,
    pub n: usize,
    pub replications: usize,
    pub designs: Vec<DesignKind>,
    pub master_seed: u64,
    /// Side of the square strata, in grid cells.
    pub stratum_block: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            side: 40,
            n: 50,
            replications: 1000,
            designs: DEFAULT_DESIGNS.to_vec(),
            master_seed: 20240601,
            stratum_block: 8,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side == 0 {
            return Err(Error::invalid("grid side must be positive"));
        }
        if self.n == 0 || self.n > self.side * self.side {
            return Err(Error::invalid(format!(
                "sample size {} not in [1, {}]",
                self.n,
                self.side * self.side
            )));
        }
        if self.replications == 0 {
            return Err(Error::invalid("at least one replication is needed"));
        }
        if self.designs.is_empty() {
            return Err(Error::invalid("no designs selected"));
        }
        Ok(())
    }

    /// The grid with aux `(one, x, y)`, coordinates, and square strata when
    /// the block size divides the side.
    pub fn frame(&self) -> Result<PopulationFrame> {
        let frame = grid_frame(self.side, GridAux::CoordsAndOne)?;
        if self.designs.contains(&DesignKind::Stratified) {
            frame.with_strata(&grid_block_strata(self.side, self.stratum_block)?)
        } else {
            Ok(frame)
        }
    }

    pub fn design_config(&self, kind: DesignKind) -> DesignConfig {
        let cfg = DesignConfig::new(kind, self.n);
        match kind {
            DesignKind::Cube | DesignKind::LocalCube => cfg.with_aux(vec![
                AuxSelector::One,
                AuxSelector::Column("x".into()),
                AuxSelector::Column("y".into()),
            ]),
            _ => cfg,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignSummary {
    pub design: DesignKind,
    /// Spatial-balance index of every replication, in replication order.
    pub indices: Vec<f64>,
    pub mean_index: f64,
    /// Sample standard deviation; `None` with a single replication.
    pub sd_index: Option<f64>,
    /// The sample of the first replication.
    pub example: Sample,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub frame: PopulationFrame,
    pub summaries: Vec<DesignSummary>,
}

/// Seed of the replication stream of a design; independent of the design list.
fn design_seed(master_seed: u64, kind: DesignKind) -> u64 {
    crate::replicate::replicate_seed(master_seed, 1_000_000 + kind as u64)
}

pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    config.validate()?;
    let frame = config.frame()?;
    let coords = frame.require_coords()?.clone();
    let mut summaries = Vec::with_capacity(config.designs.len());
    for &kind in &config.designs {
        let design: Design = config.design_config(kind).prepare(&frame)?;
        let pi = design.inclusion_probabilities();
        let seed = design_seed(config.master_seed, kind);
        let runs: Vec<Result<(f64, Option<Sample>)>> =
            map_replicates(config.replications, seed, exec, |r, rng| {
                let s = design.draw(rng)?;
                let b = spatial_balance_index(&coords, &s, &pi)?;
                Ok((b.index, (r == 0).then_some(s)))
            });
        let mut indices = Vec::with_capacity(runs.len());
        let mut example = None;
        for run in runs {
            let (index, s) = run?;
            indices.push(index);
            if s.is_some() {
                example = s;
            }
        }
        let r = indices.len() as f64;
        let mean_index = indices.iter().sum::<f64>() / r;
        let sd_index = (indices.len() > 1)
            .then(|| (indices.iter().map(|b| (b - mean_index).powi(2)).sum::<f64>() / (r - 1.0)).sqrt());
        summaries.push(DesignSummary {
            design: kind,
            indices,
            mean_index,
            sd_index,
            example: example.unwrap_or_else(|| Sample::empty(frame.size())),
        });
    }
    Ok(ExperimentResult {
        config: config.clone(),
        frame,
        summaries,
    })
}

/// Draws the example sample of one design again from its stream.
pub fn example_sample(config: &ExperimentConfig, frame: &PopulationFrame, kind: DesignKind) -> Result<Sample> {
    let design = config.design_config(kind).prepare(frame)?;
    design.draw(&mut replicate_rng(design_seed(config.master_seed, kind), 0))
}

/// Writes `design,mean_index,sd_index,replications`; the standard deviation
/// is left empty with a single replication.
pub fn write_table<W: Write>(summaries: &[DesignSummary], replications: usize, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["design", "mean_index", "sd_index", "replications"])?;
    for s in summaries {
        w.write_record([
            s.design.name().to_string(),
            format!("{:.6}", s.mean_index),
            s.sd_index.map_or(String::new(), |sd| format!("{sd:.6}")),
            replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
