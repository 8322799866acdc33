//! Default direction sets.

use epidiff::catalog::CriticalConeRepr;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::CliError;

/// Random directions drawn per default set.
pub const RANDOM_DIRECTIONS: usize = 8;
/// Off-cone directions appended by `verify`.
pub const OFF_CONE_DIRECTIONS: usize = 2;

const MAX_DRAWS: usize = 400;

fn gaussian_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let w: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm = w.norm();
        if norm > 1e-6 {
            return w / norm;
        }
    }
}

fn push_unique(out: &mut Vec<DVector<f64>>, w: DVector<f64>) {
    if !out.iter().any(|u| (u - &w).norm() < 1e-9) {
        out.push(w);
    }
}

/// Critical directions: the cone's generators (both signs of lineality
/// vectors) followed by seeded random unit critical directions. On spectral
/// instances `w` is read as `svec` of a symmetric matrix, so the Euclidean
/// norm is the Frobenius norm.
pub fn default_directions(cone: &CriticalConeRepr, n: usize, seed: u64) -> Result<Vec<DVector<f64>>, CliError> {
    let mut out = Vec::new();
    if let Some(c) = cone.as_cone() {
        for d in c.generators()?.directions() {
            let norm = d.norm();
            if norm > 1e-12 {
                push_unique(&mut out, d / norm);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = 0;
    for _ in 0..MAX_DRAWS {
        if drawn == RANDOM_DIRECTIONS {
            break;
        }
        let raw = gaussian_unit(&mut rng, n);
        let w = match cone.project(&raw) {
            Some(p) => p,
            None if cone.contains(&raw) => raw,
            None => continue,
        };
        let norm = w.norm();
        if norm < 1e-6 {
            continue;
        }
        push_unique(&mut out, w / norm);
        drawn += 1;
    }
    Ok(out)
}

/// Seeded unit directions at distance at least `0.2` from the critical cone.
/// Empty when the cone has no projector or fills the space.
pub fn off_cone_directions(cone: &CriticalConeRepr, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = Vec::new();
    for _ in 0..MAX_DRAWS {
        if out.len() == OFF_CONE_DIRECTIONS {
            break;
        }
        let raw = gaussian_unit(&mut rng, n);
        match cone.project(&raw) {
            Some(p) if (&raw - &p).norm() >= 0.2 => push_unique(&mut out, raw),
            Some(_) => {}
            None => break,
        }
    }
    out
}

/// Parses `"1,0"` or `"1 0"` into a vector of length `n`.
pub fn parse_direction(text: &str, n: usize) -> Result<DVector<f64>, CliError> {
    let vals = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::validation("--dir", format!("{:?}: {}", text, e)))?;
    if vals.len() != n {
        return Err(CliError::validation("--dir", format!("{:?} has {} entries, expected {}", text, vals.len(), n)));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(CliError::validation("--dir", "entries must be finite"));
    }
    Ok(DVector::from_vec(vals))
}
