use serde::{Deserialize, Serialize};

use crate::arch::{format_architecture, parse_architecture, LayerSpec, NeuronKind};
use crate::data::ImageSet;
use crate::error::{Error, Result};

use super::config::TrainConfig;
use super::run::train_on;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// 1-based position among convolutional spiking layers; `None` for the
    /// all-LIF baseline.
    pub position: Option<usize>,
    pub architecture: String,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Baseline first, then positions in ascending order.
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Rows by descending accuracy; ties keep their original order.
    pub fn ranked(&self) -> Vec<&SweepRow> {
        let mut rows: Vec<&SweepRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy));
        rows
    }
}

/// Indices of spiking layers fed by a convolution (through any batch norm).
pub fn conv_spiking_layers(specs: &[LayerSpec]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut after_conv = false;
    for (i, spec) in specs.iter().enumerate() {
        match spec {
            LayerSpec::Conv { .. } => after_conv = true,
            LayerSpec::BatchNorm => {}
            LayerSpec::Spiking(_) => {
                if after_conv {
                    out.push(i);
                }
                after_conv = false;
            }
            _ => after_conv = false,
        }
    }
    out
}

/// The base architecture with every convolutional spiking layer set to LIF,
/// and SIT at `position` if given.
pub fn location_variant(architecture: &str, position: Option<usize>) -> Result<String> {
    let mut specs = parse_architecture(architecture)?;
    let slots = conv_spiking_layers(&specs);
    for &i in &slots {
        specs[i] = LayerSpec::Spiking(NeuronKind::Lif);
    }
    if let Some(p) = position {
        let &i = slots.get(p.wrapping_sub(1)).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "position {p} out of range: {architecture} has {} convolutional spiking layers",
                slots.len()
            ))
        })?;
        specs[i] = LayerSpec::Spiking(NeuronKind::Sit);
    }
    Ok(format_architecture(&specs))
}

/// Trains the all-LIF baseline plus one model per SIT position, all with the
/// base config's seed.
pub fn sit_location_sweep(
    base: &TrainConfig,
    train_set: &ImageSet,
    test_set: &ImageSet,
    positions: &[usize],
) -> Result<SweepReport> {
    let mut unique = positions.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != positions.len() {
        log::warn!("duplicate SIT positions ignored: {positions:?} -> {unique:?}");
    }
    let mut variants = vec![(None, location_variant(&base.architecture, None)?)];
    for &p in &unique {
        variants.push((Some(p), location_variant(&base.architecture, Some(p))?));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for (position, architecture) in variants {
        let config = TrainConfig {
            architecture: architecture.clone(),
            ..base.clone()
        };
        let trained = train_on(&config, train_set, test_set)?;
        rows.push(SweepRow {
            position,
            architecture,
            accuracy: trained.report.final_accuracy,
        });
    }
    Ok(SweepReport { rows })
}
