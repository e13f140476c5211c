//! Poisson sampling on the disc and on the infinite-limit band, plus point CSV I/O.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{phi, phi_inverse, radius_from_uniform, BandPoint, DiscPoint, ModelParams};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("band height limit {0} must be positive and finite")]
    BadHeightLimit(f64),
    #[error("expected point count {0} is not usable")]
    BadMean(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed point row {row}: {reason}")]
    Malformed { row: usize, reason: String },
}

/// Which process produced a point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Disc,
    /// Poisson process of the infinite limit, restricted to heights below `y_max`.
    Band { y_max: f64 },
}

/// Sampled points in both coordinate systems; `band[i] == phi(disc[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub params: ModelParams,
    pub disc: Vec<DiscPoint>,
    pub band: Vec<BandPoint>,
    pub seed: u64,
    pub kind: ProcessKind,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.disc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disc.is_empty()
    }

    pub fn max_height(&self) -> f64 {
        self.band.iter().map(|b| b.y).fold(0.0, f64::max)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `k` from a master seed.
pub fn mix_seed(master: u64, k: u64) -> u64 {
    splitmix(splitmix(master) ^ k.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn poisson_count(mean: f64, rng: &mut ChaCha8Rng) -> Result<usize, SampleError> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(SampleError::BadMean(mean));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|_| SampleError::BadMean(mean))?;
    Ok(d.sample(rng) as usize)
}

/// Poisson process with intensity `n` times the disc law.
pub fn sample_disc(params: &ModelParams, seed: u64) -> Result<PointSet, SampleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = poisson_count(params.n(), &mut rng)?;
    let mut disc = Vec::with_capacity(count);
    let mut band = Vec::with_capacity(count);
    for _ in 0..count {
        let theta = PI - 2.0 * PI * rng.random::<f64>();
        let r = radius_from_uniform(rng.random::<f64>(), params);
        let p = DiscPoint::new(r, theta);
        disc.push(p);
        band.push(phi(&p, params));
    }
    Ok(PointSet {
        params: *params,
        disc,
        band,
        seed,
        kind: ProcessKind::Disc,
    })
}

/// Poisson process on the band with intensity `intensity * e^{-alpha y}` on `[0, y_max]`.
pub fn sample_band(params: &ModelParams, seed: u64, y_max: f64) -> Result<PointSet, SampleError> {
    if !(y_max.is_finite() && y_max > 0.0) {
        return Err(SampleError::BadHeightLimit(y_max));
    }
    let a = params.alpha();
    let mass = -(-a * y_max).exp_m1();
    let mean = 2.0 * params.half_length() * params.intensity() * mass / a;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = poisson_count(mean, &mut rng)?;
    let i = params.half_length();
    let mut disc = Vec::with_capacity(count);
    let mut band = Vec::with_capacity(count);
    for _ in 0..count {
        let x = i - 2.0 * i * rng.random::<f64>();
        let y = -(-rng.random::<f64>() * mass).ln_1p() / a;
        let b = BandPoint::new(x, y);
        disc.push(phi_inverse(&b, params));
        band.push(b);
    }
    Ok(PointSet {
        params: *params,
        disc,
        band,
        seed,
        kind: ProcessKind::Band { y_max },
    })
}

/// Writes `r,theta,y,x` rows with 17 significant digits.
pub fn write_points<W: Write>(ps: &PointSet, out: W) -> Result<(), SampleError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "theta", "y", "x"])?;
    for (d, b) in ps.disc.iter().zip(&ps.band) {
        w.write_record([
            format!("{:.16e}", d.r),
            format!("{:.16e}", d.theta),
            format!("{:.16e}", b.y),
            format!("{:.16e}", b.x),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads rows written by [`write_points`].
pub fn read_points<R: Read>(
    input: R,
    params: &ModelParams,
    seed: u64,
    kind: ProcessKind,
) -> Result<PointSet, SampleError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        // A zero-byte file is an empty point set.
        return Ok(PointSet {
            params: *params,
            disc: Vec::new(),
            band: Vec::new(),
            seed,
            kind,
        });
    }
    if headers.iter().collect::<Vec<_>>() != ["r", "theta", "y", "x"] {
        return Err(SampleError::Malformed {
            row: 0,
            reason: format!("unexpected header {:?}", headers),
        });
    }
    let mut disc = Vec::new();
    let mut band = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut vals = [0.0; 4];
        for (k, v) in vals.iter_mut().enumerate() {
            let field = rec.get(k).ok_or_else(|| SampleError::Malformed {
                row: row + 1,
                reason: "missing column".into(),
            })?;
            *v = field.trim().parse().map_err(|e| SampleError::Malformed {
                row: row + 1,
                reason: format!("{field:?}: {e}"),
            })?;
        }
        disc.push(DiscPoint::new(vals[0], vals[1]));
        band.push(BandPoint::new(vals[3], vals[2]));
    }
    Ok(PointSet {
        params: *params,
        disc,
        band,
        seed,
        kind,
    })
}
