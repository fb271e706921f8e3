//! Uniform-grid signal representation, synthesis, noise generation, basic
//! norms, and CSV I/O.
//!
//! Signals live on a midpoint grid over the unit interval: `n` samples at
//! `x_i = (i + 1/2) * h` with `h = 1/n`. Midpoint collocation keeps every
//! node strictly inside `(0, 1)` and away from the singular endpoints of the
//! fractional kernels used elsewhere in the crate.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Uniform midpoint grid on `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    h: f64,
}

impl Grid {
    /// Builds a midpoint grid with `n >= 2` samples.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("grid needs n >= 2 samples, got {n}")));
        }
        Ok(Grid {
            n,
            h: 1.0 / n as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `h = 1/n`.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Node position `x_i = (i + 1/2) h`.
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }
}

/// Convenience constructor matching the grid definition above.
pub fn make_grid(n: usize) -> Result<Grid> {
    Grid::new(n)
}

/// Real-valued samples on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: Grid,
    values: Vec<f64>,
}

impl Signal {
    /// Wraps samples on a grid, rejecting length mismatches and non-finite
    /// values.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "signal has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "signal value at index {i} is not finite"
            )));
        }
        Ok(Signal { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }
}

/// One piece of a piecewise signal description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentShape {
    /// `u(x) = value`.
    Constant { value: f64 },
    /// `u(x) = intercept + slope * x` with `x` the global coordinate.
    Affine { intercept: f64, slope: f64 },
    /// `u(x) = offset + amplitude * sin(2 pi cycles x + phase)`.
    Sine {
        amplitude: f64,
        cycles: f64,
        phase: f64,
        offset: f64,
    },
}

impl SegmentShape {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            SegmentShape::Constant { value } => value,
            SegmentShape::Affine { intercept, slope } => intercept + slope * x,
            SegmentShape::Sine {
                amplitude,
                cycles,
                phase,
                offset,
            } => offset + amplitude * (std::f64::consts::TAU * cycles * x + phase).sin(),
        }
    }
}

/// A segment covers `[start, end)`; the final segment also includes `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub shape: SegmentShape,
}

/// Piecewise description of a signal over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSpec {
    segments: Vec<Segment>,
}

impl PiecewiseSpec {
    /// Validates that segments are sorted, contiguous, and cover `[0, 1]`.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("piecewise spec needs at least one segment"));
        }
        for seg in &segments {
            if !(0.0..=1.0).contains(&seg.start) || !(0.0..=1.0).contains(&seg.end) {
                return Err(Error::invalid(format!(
                    "segment breakpoints [{}, {}] outside [0, 1]",
                    seg.start, seg.end
                )));
            }
            if seg.start >= seg.end {
                return Err(Error::invalid(format!(
                    "segment breakpoints [{}, {}] not increasing",
                    seg.start, seg.end
                )));
            }
        }
        for pair in segments.windows(2) {
            if pair[0].end != pair[1].start {
                return Err(Error::invalid(format!(
                    "segments not contiguous at breakpoint {} vs {}",
                    pair[0].end, pair[1].start
                )));
            }
        }
        if segments[0].start != 0.0 || segments[segments.len() - 1].end != 1.0 {
            return Err(Error::invalid("segments must cover [0, 1]"));
        }
        Ok(PiecewiseSpec { segments })
    }

    /// Single segment covering the whole interval.
    pub fn uniform(shape: SegmentShape) -> Self {
        PiecewiseSpec {
            segments: vec![Segment {
                start: 0.0,
                end: 1.0,
                shape,
            }],
        }
    }

    fn eval(&self, x: f64) -> f64 {
        for seg in &self.segments {
            if x < seg.end {
                return seg.shape.eval(x);
            }
        }
        self.segments[self.segments.len() - 1].shape.eval(x)
    }
}

/// Samples a piecewise description at the grid nodes.
pub fn gen_signal(grid: Grid, spec: &PiecewiseSpec) -> Result<Signal> {
    let values = grid.nodes().map(|x| spec.eval(x)).collect();
    Signal::new(grid, values)
}

/// Gaussian noise parameters.
///
/// Noise is reproducible across builds and platforms: the stream comes from a
/// SplitMix64 generator seeded with `seed`, turned into standard normals by
/// the Box-Muller transform (see [`add_noise`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
    pub zero_mean: bool,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64, zero_mean: bool) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(NoiseSpec {
            sigma,
            seed,
            zero_mean,
        })
    }
}

/// SplitMix64 (Steele, Lea & Flood 2014). Tiny, portable, and stable across
/// builds, which is what the reproducibility contract needs.
#[derive(Debug, Clone)]
pub(crate) struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub(crate) fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in `(0, 1]`: 53 mantissa bits, shifted off zero so `ln` is safe.
    fn next_open_closed(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Uniform in `[0, 1)`.
    fn next_closed_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal pair via the Box-Muller transform.
    fn next_normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_open_closed();
        let u2 = self.next_closed_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    pub(crate) fn next_normal_vec(&mut self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let (a, b) = self.next_normal_pair();
            out.push(a);
            if out.len() < n {
                out.push(b);
            }
        }
        out
    }

    /// Uniform in `[lo, hi)`.
    #[cfg(test)]
    pub(crate) fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_closed_open()
    }
}

/// Adds seeded Gaussian noise; with `zero_mean` the realization is shifted so
/// its discrete mean `h * sum eta_i` vanishes. Same `(u, spec)` gives a
/// bit-identical result.
pub fn add_noise(u: &Signal, spec: &NoiseSpec) -> Signal {
    let n = u.len();
    let mut rng = SplitMix64::new(spec.seed);
    let mut eta: Vec<f64> = rng
        .next_normal_vec(n)
        .into_iter()
        .map(|z| spec.sigma * z)
        .collect();
    if spec.zero_mean {
        let mean = eta.iter().sum::<f64>() / n as f64;
        for e in &mut eta {
            *e -= mean;
        }
    }
    let values = u
        .values()
        .iter()
        .zip(&eta)
        .map(|(v, e)| v + e)
        .collect();
    Signal::new(u.grid, values).expect("noisy signal stays finite")
}

/// Squared L2 distance `h * sum (u_i - v_i)^2`.
pub fn l2_dist_sq(u: &Signal, v: &Signal) -> Result<f64> {
    if u.grid != v.grid {
        return Err(Error::invalid(format!(
            "grid mismatch: {} vs {} nodes",
            u.len(),
            v.len()
        )));
    }
    let sum: f64 = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(u.spacing() * sum)
}

/// Total variation as the sum of jump masses `sum |u_{i+1} - u_i|` (no `h`
/// factor: these are masses of the derivative measure).
pub fn tv(u: &Signal) -> f64 {
    tv_slice(u.values())
}

pub(crate) fn tv_slice(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Writes one value per line, LF-terminated, shortest round-trip formatting.
pub fn save_signal(u: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for v in u.values() {
        writeln!(out, "{v}").expect("string write");
    }
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a signal CSV (one value per line; LF or CRLF). The grid size is the
/// line count.
pub fn load_signal(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut values = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let trimmed = line.trim_end_matches('\r').trim();
        if trimmed.is_empty() && idx == values.len() {
            // Tolerate a single trailing newline; anything else is malformed.
            continue;
        }
        let v: f64 = trimmed.parse().map_err(|_| Error::Format {
            path: path.display().to_string(),
            line: idx + 1,
            msg: format!("expected a real number, got {trimmed:?}"),
        })?;
        values.push(v);
    }
    let grid = Grid::new(values.len()).map_err(|_| Error::Format {
        path: path.display().to_string(),
        line: values.len(),
        msg: "signal file needs at least 2 samples".into(),
    })?;
    Signal::new(grid, values)
}
