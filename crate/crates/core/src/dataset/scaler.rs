use serde::{Deserialize, Serialize};

use super::IoDataset;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Input,
    Output,
}

/// Global per-channel min-max scaling fitted on a training split.
///
/// Values outside the fitted range map outside [0, 1]; nothing is clipped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub input_min: f64,
    pub input_max: f64,
    pub output_min: f64,
    pub output_max: f64,
}

impl ScalerState {
    fn range(&self, channel: Channel) -> (f64, f64) {
        match channel {
            Channel::Input => (self.input_min, self.input_max),
            Channel::Output => (self.output_min, self.output_max),
        }
    }

    pub fn transform(&self, channel: Channel, values: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.range(channel);
        let span = hi - lo;
        values.iter().map(|v| (v - lo) / span).collect()
    }

    pub fn inverse(&self, channel: Channel, values: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.range(channel);
        let span = hi - lo;
        values.iter().map(|v| v * span + lo).collect()
    }
}

fn min_max<'a>(series: impl Iterator<Item = &'a [f64]>) -> (f64, f64) {
    series
        .flat_map(|s| s.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Fits input and output ranges over the pairs listed in `train`.
pub fn fit_scaler(ds: &IoDataset, train: &[usize]) -> Result<ScalerState> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    if let Some(&bad) = train.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::Shape(format!(
            "training index {bad} out of range for {} pairs",
            ds.len()
        )));
    }
    let (input_min, input_max) = min_max(train.iter().map(|&i| ds.pairs[i].0.values.as_slice()));
    let (output_min, output_max) =
        min_max(train.iter().map(|&i| ds.pairs[i].1.values.as_slice()));
    // Written so that NaN also fails.
    if !(input_max > input_min) {
        return Err(Error::ConstantChannel {
            channel: "input",
            value: input_min,
        });
    }
    if !(output_max > output_min) {
        return Err(Error::ConstantChannel {
            channel: "output",
            value: output_min,
        });
    }
    Ok(ScalerState {
        input_min,
        input_max,
        output_min,
        output_max,
    })
}

/// Scaled copies of every series, in pair order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledDataset {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub scaler: ScalerState,
}

pub fn apply_scaler(ds: &IoDataset, scaler: &ScalerState) -> ScaledDataset {
    let inputs = ds
        .pairs
        .iter()
        .map(|(x, _)| scaler.transform(Channel::Input, &x.values))
        .collect();
    let outputs = ds
        .pairs
        .iter()
        .map(|(_, y)| scaler.transform(Channel::Output, &y.values))
        .collect();
    ScaledDataset {
        inputs,
        outputs,
        scaler: *scaler,
    }
}
