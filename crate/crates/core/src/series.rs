use std::ops::Range;

use crate::diffmath::Tensor;
use crate::error::{Error, Result};

/// Multi-channel signals on a fixed graph, one snapshot per time step.
///
/// Snapshots are stored node-major (`node * channels + channel`), the layout
/// the model consumes directly.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSeries {
    nodes: usize,
    channels: usize,
    step_minutes: u32,
    values: Vec<f64>,
}

impl GraphSeries {
    pub fn new(nodes: usize, channels: usize, step_minutes: u32, values: Vec<f64>) -> Result<Self> {
        if nodes == 0 || channels == 0 {
            return Err(Error::Input("series needs at least one node and channel".into()));
        }
        if values.len() % (nodes * channels) != 0 {
            return Err(Error::Input(format!(
                "{} values do not divide into snapshots of {}",
                values.len(),
                nodes * channels
            )));
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Input(format!("NaN at flat index {i}")));
        }
        Ok(Self {
            nodes,
            channels,
            step_minutes,
            values,
        })
    }

    pub fn from_snapshots(nodes: usize, channels: usize, snapshots: &[Tensor]) -> Result<Self> {
        let mut values = Vec::with_capacity(snapshots.len() * nodes * channels);
        for s in snapshots {
            if s.len() != nodes * channels {
                return Err(Error::Input(format!(
                    "snapshot of {} values, expected {}",
                    s.len(),
                    nodes * channels
                )));
            }
            values.extend_from_slice(s.data());
        }
        Self::new(nodes, channels, 30, values)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.snapshot_len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn snapshot_len(&self) -> usize {
        self.nodes * self.channels
    }

    pub fn index(&self, t: usize, channel: usize, node: usize) -> usize {
        t * self.snapshot_len() + node * self.channels + channel
    }

    pub fn get(&self, t: usize, channel: usize, node: usize) -> f64 {
        self.values[self.index(t, channel, node)]
    }

    pub fn set(&mut self, t: usize, channel: usize, node: usize, v: f64) {
        let i = self.index(t, channel, node);
        self.values[i] = v;
    }

    pub fn snapshot(&self, t: usize) -> &[f64] {
        let w = self.snapshot_len();
        &self.values[t * w..(t + 1) * w]
    }

    /// Snapshot `t` as an `(n, C)` tensor.
    pub fn snapshot_tensor(&self, t: usize) -> Tensor {
        Tensor::matrix(self.nodes, self.channels, self.snapshot(t).to_vec())
            .expect("snapshot shape")
    }

    pub fn snapshots(&self) -> Vec<Tensor> {
        (0..self.len()).map(|t| self.snapshot_tensor(t)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::Input(format!(
                "range {range:?} outside series of length {}",
                self.len()
            )));
        }
        let w = self.snapshot_len();
        Ok(Self {
            values: self.values[range.start * w..range.end * w].to_vec(),
            ..*self
        })
    }

    pub fn concat(&self, other: &GraphSeries) -> Result<Self> {
        if self.nodes != other.nodes || self.channels != other.channels {
            return Err(Error::Input("cannot concatenate series of different shapes".into()));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self { values, ..*self })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_node_major() {
        let s = GraphSeries::new(3, 2, 30, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(1, 1, 2), 11.0);
        assert_eq!(s.get(0, 0, 1), 2.0);
        assert_eq!(s.snapshot_tensor(1).shape(), &[3, 2]);
    }

    #[test]
    fn rejects_nan_and_ragged() {
        assert!(GraphSeries::new(2, 1, 30, vec![0.0, f64::NAN]).is_err());
        assert!(GraphSeries::new(2, 2, 30, vec![0.0; 6]).is_err());
    }

    #[test]
    fn slice_and_concat_reassemble() {
        let s = GraphSeries::new(2, 1, 30, (0..10).map(f64::from).collect()).unwrap();
        let a = s.slice(0..3).unwrap();
        let b = s.slice(3..5).unwrap();
        assert_eq!(a.concat(&b).unwrap(), s);
        assert!(s.slice(4..6).is_err());
    }
}
