use crate::error::Result;
use serde::Serialize;
use std::io::Write;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Largest per-epoch absolute loss difference; `INFINITY` when the
    /// traces have different lengths.
    pub fn max_loss_deviation(&self, other: &TrainTrace) -> f64 {
        if self.records.len() != other.records.len() {
            return f64::INFINITY;
        }
        self.records
            .iter()
            .zip(&other.records)
            .map(|(a, b)| (a.loss - b.loss).abs())
            .fold(0.0, f64::max)
    }

    /// `epoch,loss,train_acc` with a header row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,loss,train_acc")?;
        for r in &self.records {
            writeln!(w, "{},{},{}", r.epoch, r.loss, r.train_acc)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let t = TrainTrace {
            records: vec![EpochRecord {
                epoch: 1,
                loss: 0.5,
                train_acc: 0.25,
            }],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,loss,train_acc\n1,0.5,0.25\n");
        assert_eq!(t.max_loss_deviation(&TrainTrace::default()), f64::INFINITY);
    }
}
