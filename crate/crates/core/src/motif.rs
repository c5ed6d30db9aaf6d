//! Piecewise-constant target motifs.
//!
//! A motif is built by averaging a discretized Ornstein-Uhlenbeck trace over
//! randomly drawn intervals, so it consists of discrete jumps separated by
//! constant stretches. The construction: run the OU dynamics past a warmup,
//! draw interval lengths uniformly in steps, set each interval to the mean of
//! the trace over that interval, average the residual span after the last
//! drawn interval as one final segment, pad with zeros, and reset the first
//! sample to zero.

use crate::error::{CoreError, Result};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

/// Parameters of the motif construction.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MotifSpec {
    /// Time units per step.
    pub dt: f64,
    /// Noise scale of the OU process.
    pub gamma: f64,
    /// Discarded OU steps before the signal window.
    pub warmup_steps: usize,
    /// Steps of OU trace available for segment averaging.
    pub signal_steps: usize,
    /// Zero samples appended at the end.
    pub pad_steps: usize,
    /// Minimum interval length in steps.
    pub interval_min_steps: usize,
    /// Maximum interval length in steps.
    pub interval_max_steps: usize,
    /// Seed of the per-motif random stream.
    pub seed: u64,
}

impl Default for MotifSpec {
    fn default() -> Self {
        MotifSpec {
            dt: 0.1,
            gamma: 3.0 * std::f64::consts::SQRT_2,
            warmup_steps: 200,
            signal_steps: 1000,
            pad_steps: 50,
            interval_min_steps: 50,
            interval_max_steps: 500,
            seed: 0,
        }
    }
}

impl MotifSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(CoreError::validation("dt must be positive"));
        }
        if !(self.gamma >= 0.0) {
            return Err(CoreError::validation("gamma must be nonnegative"));
        }
        if self.interval_min_steps < 1 {
            return Err(CoreError::validation("interval_min_steps must be at least 1"));
        }
        if self.interval_max_steps < self.interval_min_steps {
            return Err(CoreError::validation(
                "interval_max_steps must be >= interval_min_steps",
            ));
        }
        if self.signal_steps < self.interval_max_steps {
            return Err(CoreError::validation(
                "signal_steps must be >= interval_max_steps",
            ));
        }
        Ok(())
    }

    /// Total samples of a motif built from this spec.
    pub fn total_steps(&self) -> usize {
        self.signal_steps + self.pad_steps
    }
}

/// One target motif: a fixed-length sampled sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Motif {
    pub id: usize,
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl Motif {
    /// Duration in time units (samples x dt).
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// Sample times `0, dt, 2dt, ...` matching `samples`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|i| i as f64 * self.dt).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }
}

/// The motif library exchanged between pipeline stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotifLibrary {
    pub version: u32,
    pub dt: f64,
    pub motifs: Vec<LibraryEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub id: usize,
    pub seed: u64,
    pub spec: MotifSpec,
    pub samples: Vec<f64>,
}

impl MotifLibrary {
    pub fn motif(&self, id: usize) -> Option<Motif> {
        self.motifs.iter().find(|e| e.id == id).map(|e| Motif {
            id: e.id,
            dt: self.dt,
            samples: e.samples.clone(),
        })
    }

    pub fn motif_ids(&self) -> Vec<usize> {
        self.motifs.iter().map(|e| e.id).collect()
    }

    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut len = None;
        for entry in &self.motifs {
            if entry.spec.dt != self.dt {
                return Err(CoreError::validation(format!(
                    "motif {} has dt {} but library dt is {}",
                    entry.id, entry.spec.dt, self.dt
                )));
            }
            let expected = entry.spec.total_steps();
            if entry.samples.len() != expected {
                return Err(CoreError::validation(format!(
                    "motif {} has {} samples, spec implies {}",
                    entry.id,
                    entry.samples.len(),
                    expected
                )));
            }
            match len {
                None => len = Some(entry.samples.len()),
                Some(l) if l != entry.samples.len() => {
                    return Err(CoreError::validation(format!(
                        "motif {} length {} differs from library length {}",
                        entry.id,
                        entry.samples.len(),
                        l
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Euler-discretized OU trace of length `warmup_steps + signal_steps`,
/// starting at zero: `z <- z + dt (-z + (gamma/sqrt(dt)) chi)`.
pub fn generate_ou_trace(spec: &MotifSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, "ou", 0);
    let n = spec.warmup_steps + spec.signal_steps;
    let mut trace = Vec::with_capacity(n);
    let mut z = 0.0_f64;
    let noise_scale = spec.gamma / spec.dt.sqrt();
    for _ in 0..n {
        trace.push(z);
        let chi: f64 = rng.sample(StandardNormal);
        z += spec.dt * (-z + noise_scale * chi);
    }
    Ok(trace)
}

/// Interval lengths `[T_1..T_j]`: each uniform on integer steps
/// `[interval_min_steps, interval_max_steps]`, keeping the longest prefix
/// with a strict total below `signal_steps`.
pub fn draw_intervals(spec: &MotifSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, "intervals", 0);
    let mut intervals = Vec::new();
    let mut total = 0usize;
    loop {
        let t = rng.gen_range(spec.interval_min_steps..=spec.interval_max_steps);
        if total + t >= spec.signal_steps {
            break;
        }
        total += t;
        intervals.push(t);
    }
    Ok(intervals)
}

/// Build one motif from a spec.
pub fn generate_motif(id: usize, spec: &MotifSpec) -> Result<Motif> {
    spec.validate()?;
    let trace = generate_ou_trace(spec)?;
    let signal = &trace[spec.warmup_steps..];
    let intervals = draw_intervals(spec)?;

    let mut samples = Vec::with_capacity(spec.total_steps());
    let mut start = 0usize;
    for &t in &intervals {
        let mean = segment_mean(&signal[start..start + t]);
        samples.extend(std::iter::repeat(mean).take(t));
        start += t;
    }
    // The span between the last drawn interval and the end of the signal
    // window becomes one final averaged segment.
    if start < spec.signal_steps {
        let mean = segment_mean(&signal[start..spec.signal_steps]);
        samples.extend(std::iter::repeat(mean).take(spec.signal_steps - start));
    }
    samples.extend(std::iter::repeat(0.0).take(spec.pad_steps));
    samples[0] = 0.0;
    Ok(Motif {
        id,
        dt: spec.dt,
        samples,
    })
}

fn segment_mean(seg: &[f64]) -> f64 {
    seg.iter().sum::<f64>() / seg.len() as f64
}

/// Generate a library of `count` motifs. Per-motif seeds derive from the
/// master seed and the motif id.
pub fn generate_library(count: usize, master_seed: u64, base: &MotifSpec) -> Result<MotifLibrary> {
    base.validate()?;
    let mut motifs = Vec::with_capacity(count);
    for id in 0..count {
        let mut spec = base.clone();
        spec.seed = rng::derive_seed(master_seed, "motif", id as u64);
        let motif = generate_motif(id, &spec)?;
        motifs.push(LibraryEntry {
            id,
            seed: spec.seed,
            spec,
            samples: motif.samples,
        });
    }
    Ok(MotifLibrary {
        version: FORMAT_VERSION,
        dt: base.dt,
        motifs,
    })
}

pub fn save_library(lib: &MotifLibrary, path: impl AsRef<Path>) -> Result<()> {
    lib.validate()?;
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), lib)?;
    Ok(())
}

pub fn load_library(path: impl AsRef<Path>) -> Result<MotifLibrary> {
    let file = std::fs::File::open(path)?;
    let lib: MotifLibrary = serde_json::from_reader(std::io::BufReader::new(file))?;
    lib.validate()?;
    Ok(lib)
}
