//! Agreement statistics between two raters (typically human vs automated).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2x2 contingency table. Rows are rater 1 (pass, fail), columns rater 2
/// (pass, fail):
///
/// ```text
///            r2 pass  r2 fail
/// r1 pass       a        b
/// r1 fail       c        d
/// ```
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl Confusion2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Confusion2x2 { a, b, c, d }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut t = Confusion2x2::default();
        for pair in pairs {
            match pair {
                (true, true) => t.a += 1,
                (true, false) => t.b += 1,
                (false, true) => t.c += 1,
                (false, false) => t.d += 1,
            }
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// The table with pass and fail relabeled for both raters.
    pub fn swapped(&self) -> Self {
        Confusion2x2::new(self.d, self.c, self.b, self.a)
    }
}

pub fn phi_coefficient(t: &Confusion2x2) -> Result<f64> {
    let (a, b, c, d) = (t.a as f64, t.b as f64, t.c as f64, t.d as f64);
    let marginals = [a + b, c + d, a + c, b + d];
    if marginals.contains(&0.0) {
        return Err(Error::Undefined("phi coefficient (zero marginal)"));
    }
    Ok((a * d - b * c) / marginals.iter().product::<f64>().sqrt())
}

pub fn cohens_kappa(t: &Confusion2x2) -> Result<f64> {
    let n = t.total() as f64;
    if n == 0.0 {
        return Err(Error::EmptyInput("cohen's kappa"));
    }
    let (a, b, c, d) = (t.a as f64, t.b as f64, t.c as f64, t.d as f64);
    let p_o = (a + d) / n;
    let p_e = ((a + b) * (a + c) + (c + d) * (b + d)) / (n * n);
    if p_e == 1.0 {
        return Err(Error::Undefined("cohen's kappa (chance agreement is 1)"));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Fraction of pairs whose labels are equal.
pub fn agreement_rate<T: PartialEq>(pairs: &[(T, T)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("agreement rate"));
    }
    Ok(pairs.iter().filter(|(x, y)| x == y).count() as f64 / pairs.len() as f64)
}

/// Mean |t1 - t2| over paired skin tone indices (1..=10).
pub fn tone_mean_abs_diff(pairs: &[(u8, u8)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("tone difference"));
    }
    if let Some(&(x, y)) = pairs.iter().find(|(x, y)| !(1..=10).contains(x) || !(1..=10).contains(y)) {
        return Err(Error::invalid("tone pair", format!("({x}, {y}) outside [1,10]")));
    }
    let sum: u64 = pairs.iter().map(|&(x, y)| x.abs_diff(y) as u64).sum();
    Ok(sum as f64 / pairs.len() as f64)
}
