//! Leaky-balloon resistance dynamics.
//!
//! Each antibiotic carries a latent resistance pressure. Prescriptions inflate
//! it (including cross-resistance inflow from other antibiotics), a
//! proportional leak deflates it, and the observable resistance level is
//! `2 / (1 + exp(-pressure / flatness)) - 1`, which is zero at zero pressure
//! and approaches but never reaches one.

use crate::config::AntibioticConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalloonParams<T> {
    pub flatness: T,
    pub leak: T,
    pub inflation_rate: T,
    pub initial_pressure: T,
}

impl<T: Scalar> BalloonParams<T> {
    pub fn from_config(abx: &AntibioticConfig) -> Self {
        BalloonParams {
            flatness: T::lit(abx.flatness),
            leak: T::lit(abx.leak),
            inflation_rate: T::lit(abx.inflation_rate),
            initial_pressure: T::lit(abx.initial_pressure),
        }
    }
}

/// Square, nonnegative coupling matrix; `get(a, b)` is the pressure added to
/// antibiotic `a` per prescription of antibiotic `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossResistance<T> {
    size: usize,
    entries: Vec<T>,
}

impl<T: Scalar> CrossResistance<T> {
    pub fn identity(size: usize) -> Self {
        let mut entries = vec![T::zero(); size * size];
        for a in 0..size {
            entries[a * size + a] = T::one();
        }
        CrossResistance { size, entries }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let mut entries = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(Error::Dimension {
                    what: "cross-resistance row",
                    expected: size,
                    found: row.len(),
                });
            }
            for &c in row {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::Contract(format!("cross-resistance entry {c} is negative")));
                }
                entries.push(T::lit(c));
            }
        }
        Ok(CrossResistance { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, a: usize, b: usize) -> T {
        self.entries[a * self.size + b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalloonState<T> {
    pub pressure: Vec<T>,
    pub sigma: Vec<T>,
}

/// Maps latent pressure to observable resistance in `[0, 1)`.
///
/// `2/(1+e^(-x))-1` equals `tanh(x/2)`; the tanh form avoids cancellation near
/// zero. Saturated values are pinned to the largest float below one.
pub fn observable_level<T: Scalar>(pressure: T, flatness: T) -> T {
    let two = T::one() + T::one();
    let level = (pressure / flatness / two).tanh();
    level.max(T::zero()).min(T::below_one())
}

pub fn reset_balloons<T: Scalar>(params: &[BalloonParams<T>]) -> BalloonState<T> {
    let pressure: Vec<T> = params.iter().map(|p| p.initial_pressure).collect();
    let sigma = params
        .iter()
        .zip(&pressure)
        .map(|(p, &x)| observable_level(x, p.flatness))
        .collect();
    BalloonState { pressure, sigma }
}

/// One step: `pressure' = (pressure + rate * Σ_b C[a][b] * counts[b]) * (1 - leak)`.
pub fn step_balloons<T: Scalar>(
    state: &BalloonState<T>,
    params: &[BalloonParams<T>],
    cross: &CrossResistance<T>,
    counts: &[usize],
) -> Result<BalloonState<T>> {
    let n = params.len();
    for (what, found) in [
        ("balloon state", state.pressure.len()),
        ("cross-resistance matrix", cross.size()),
        ("prescription counts", counts.len()),
    ] {
        if found != n {
            return Err(Error::Dimension { what, expected: n, found });
        }
    }
    let mut pressure = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for (a, p) in params.iter().enumerate() {
        let weighted: T = counts
            .iter()
            .enumerate()
            .map(|(b, &c)| cross.get(a, b) * T::lit(c as f64))
            .sum();
        let inflated = state.pressure[a] + p.inflation_rate * weighted;
        let next = inflated * (T::one() - p.leak);
        pressure.push(next);
        sigma.push(observable_level(next, p.flatness));
    }
    Ok(BalloonState { pressure, sigma })
}
