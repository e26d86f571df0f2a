use std::time::Instant;

use crate::error::Result;
use crate::linalg::{frobenius_norm, Matrix};
use crate::trace::{Phase, Trace, TraceRecord};

use super::SolverConfig;

/// Builds a trace with thinning, optional ground-truth error and optional
/// wall-clock stamps.
pub(crate) struct Recorder<'a> {
    trace: Trace,
    every: u64,
    w_star: Option<&'a Matrix>,
    start: Option<Instant>,
    pub phase: Option<Phase>,
}

pub(crate) struct Point {
    pub iter: u64,
    pub loss: f64,
    pub epoch: Option<u64>,
    pub sample_index: Option<u64>,
}

impl Point {
    pub fn new(iter: u64, loss: f64) -> Self {
        Point {
            iter,
            loss,
            epoch: None,
            sample_index: None,
        }
    }
}

impl<'a> Recorder<'a> {
    pub fn new(config: &SolverConfig, w_star: Option<&'a Matrix>) -> Self {
        Recorder {
            trace: Trace::new(),
            every: config.record_every,
            w_star,
            start: config.record_wallclock.then(Instant::now),
            phase: None,
        }
    }

    pub fn wants(&self, iter: u64) -> bool {
        iter.is_multiple_of(self.every)
    }

    fn make(&self, p: &Point, w: &Matrix) -> Result<TraceRecord> {
        let err_fro = match self.w_star {
            Some(truth) => Some(frobenius_norm(&w.sub(truth)?)),
            None => None,
        };
        Ok(TraceRecord {
            iter: p.iter,
            epoch: p.epoch,
            phase: self.phase,
            sample_index: p.sample_index,
            loss: p.loss,
            err_fro,
            wallclock_ns: self.start.map_or(0, |s| {
                u64::try_from(s.elapsed().as_nanos()).unwrap_or(u64::MAX)
            }),
        })
    }

    /// Records `p` if it falls on the thinning grid or `force` is set.
    pub fn record(&mut self, p: Point, w: &Matrix, force: bool) -> Result<()> {
        if force || self.wants(p.iter) {
            let rec = self.make(&p, w)?;
            self.trace.retain_last(rec)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Trace {
        self.trace
    }
}
