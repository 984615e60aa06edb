//! Sequences, warping constraints and the pointwise cost model.

use crate::error::{Result, TwistError};

pub type SequenceId = u64;

/// A real-valued sequence with a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    id: SequenceId,
    values: Vec<f64>,
}

impl TimeSeries {
    /// Rejects empty sequences and non-finite values.
    pub fn new(id: SequenceId, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(TwistError::Input(format!("sequence {id} is empty")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(TwistError::Input(format!(
                "sequence {id} has a non-finite value at position {pos}"
            )));
        }
        Ok(Self { id, values })
    }

    pub fn id(&self) -> SequenceId {
        self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for TimeSeries {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Per-position warping radii (an R-K band).
///
/// Cell `(i, j)` of the alignment grid is admissible iff `j <= i + r[i]` and
/// `i <= j + r[j]`. The diagonal is always admissible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalConstraint {
    radii: Vec<usize>,
    max_radius: usize,
}

impl GlobalConstraint {
    pub fn new(radii: Vec<usize>) -> Result<Self> {
        let n = radii.len();
        if n == 0 {
            return Err(TwistError::Input(
                "constraint must cover at least one position".into(),
            ));
        }
        if let Some((i, r)) = radii.iter().enumerate().find(|(_, &r)| r > n) {
            return Err(TwistError::Input(format!(
                "radius {r} at position {i} exceeds sequence length {n}"
            )));
        }
        let max_radius = radii.iter().copied().max().unwrap_or(0);
        Ok(Self { radii, max_radius })
    }

    /// Uniform band of radius `round(width_fraction * n)` (a Sakoe-Chiba band).
    pub fn sakoe_chiba(width_fraction: f64, n: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&width_fraction) {
            return Err(TwistError::Input(format!(
                "band width fraction {width_fraction} is outside [0, 1]"
            )));
        }
        let r = (width_fraction * n as f64).round() as usize;
        Self::uniform(r.min(n), n)
    }

    pub fn uniform(radius: usize, n: usize) -> Result<Self> {
        Self::new(vec![radius; n])
    }

    /// Zero radius everywhere: pointwise alignment only.
    pub fn euclidean(n: usize) -> Self {
        Self {
            radii: vec![0; n],
            max_radius: 0,
        }
    }

    pub fn unconstrained(n: usize) -> Self {
        Self {
            radii: vec![n; n],
            max_radius: n,
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    pub fn radius(&self, i: usize) -> usize {
        self.radii[i]
    }

    pub fn max_radius(&self) -> usize {
        self.max_radius
    }

    /// `Some(r)` when every position shares the same radius.
    pub fn uniform_radius(&self) -> Option<usize> {
        let first = self.radii[0];
        self.radii.iter().all(|&r| r == first).then_some(first)
    }

    /// 0-based cell test.
    #[inline]
    pub fn admits(&self, i: usize, j: usize) -> bool {
        j <= i + self.radii[i] && i <= j + self.radii[j]
    }

    /// Inclusive window `[i - r_i, i + r_i]` clamped to the sequence.
    #[inline]
    pub fn window(&self, i: usize) -> (usize, usize) {
        let r = self.radii[i];
        (i.saturating_sub(r), (i + r).min(self.radii.len() - 1))
    }
}

/// L_p cost model. Internally every accumulation is kept unrooted; the root
/// is applied only when a distance leaves the public API.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistanceParams {
    pub p: u32,
    pub apply_root: bool,
}

impl Default for DistanceParams {
    fn default() -> Self {
        Self {
            p: 2,
            apply_root: true,
        }
    }
}

impl DistanceParams {
    pub fn new(p: u32, apply_root: bool) -> Result<Self> {
        if p == 0 {
            return Err(TwistError::Input("p must be a positive integer".into()));
        }
        Ok(Self { p, apply_root })
    }

    /// `|a - b|^p`
    #[inline]
    pub fn cost(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self.p {
            1 => d,
            2 => d * d,
            p => d.powi(p as i32),
        }
    }

    /// Maps an unrooted accumulation to the reported distance.
    #[inline]
    pub fn finish(&self, acc: f64) -> f64 {
        if !self.apply_root {
            return acc;
        }
        match self.p {
            1 => acc,
            2 => acc.sqrt(),
            p => acc.powf(1.0 / p as f64),
        }
    }

    /// Inverse of [`finish`](Self::finish).
    #[inline]
    pub fn unroot(&self, distance: f64) -> f64 {
        if !self.apply_root {
            return distance;
        }
        match self.p {
            1 => distance,
            2 => distance * distance,
            p => distance.powi(p as i32),
        }
    }
}
