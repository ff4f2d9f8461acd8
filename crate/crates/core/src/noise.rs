//! XOR corruption process: timestep -> flip probability, random masks, XOR.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::BinaryRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleShape {
    /// `p(t) = 0.5 t / T`
    #[default]
    Linear,
    /// `p(t) = 0.25 (1 - cos(pi t / T))`
    Cosine,
}

/// Maps a timestep `t` in `0..=T` to a per-bit flip probability in `[0, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub timesteps: u32,
    #[serde(default)]
    pub shape: ScheduleShape,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(1000)
    }
}

impl NoiseSchedule {
    pub fn linear(timesteps: u32) -> Self {
        Self {
            timesteps,
            shape: ScheduleShape::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 {
            return Err(Error::Config("schedule needs at least one timestep".into()));
        }
        Ok(())
    }

    pub fn flip_probability(&self, t: u32) -> Result<f64> {
        if t > self.timesteps {
            return Err(Error::TimestepOutOfRange {
                t,
                max: self.timesteps,
            });
        }
        let frac = f64::from(t) / f64::from(self.timesteps);
        Ok(match self.shape {
            ScheduleShape::Linear => 0.5 * frac,
            ScheduleShape::Cosine => 0.25 * (1.0 - (std::f64::consts::PI * frac).cos()),
        })
    }
}

/// Draws a mask whose bits are independently 1 with probability `p(t)`.
pub fn sample_mask<R: Rng + ?Sized>(
    d: usize,
    t: u32,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<BinaryRow> {
    let p = schedule.flip_probability(t)?;
    Ok(BinaryRow::new(bernoulli_bits(d, p, rng)))
}

pub(crate) fn bernoulli_bits<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Vec<bool> {
    (0..d).map(|_| rng.random::<f64>() < p).collect()
}

pub fn apply_noise(x: &BinaryRow, z: &BinaryRow) -> Result<BinaryRow> {
    if x.len() != z.len() {
        return Err(Error::Length {
            expected: x.len(),
            got: z.len(),
        });
    }
    Ok(BinaryRow::new(
        x.bits().iter().zip(z.bits()).map(|(a, b)| a ^ b).collect(),
    ))
}
