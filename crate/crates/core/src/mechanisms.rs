//! Basis functions and per-class utility-generating mechanisms.

use serde::{Deserialize, Serialize};

use crate::error::{PoaError, Result};
use crate::network::ClassPartition;

/// Tabulated welfare basis `w(0..=n)` with `w(0) = 0` and `w(j) > 0` for `j >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisFile", into = "BasisFile")]
pub struct BasisFunction {
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisFile {
    pub values: Vec<f64>,
}

impl TryFrom<BasisFile> for BasisFunction {
    type Error = PoaError;

    fn try_from(file: BasisFile) -> Result<Self> {
        BasisFunction::from_values(file.values)
    }
}

impl From<BasisFunction> for BasisFile {
    fn from(w: BasisFunction) -> Self {
        BasisFile { values: w.values }
    }
}

impl BasisFunction {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(PoaError::validation(
                "basis needs values for at least w(0) and w(1)",
            ));
        }
        if values[0] != 0.0 {
            return Err(PoaError::validation(format!(
                "basis must have w(0) = 0, got {}",
                values[0]
            )));
        }
        if let Some((j, v)) = values
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(PoaError::validation(format!(
                "basis must be positive and finite for j >= 1, w({j}) = {v}"
            )));
        }
        Ok(BasisFunction { values })
    }

    /// Largest multiplicity covered.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        self.values[j]
    }

    /// Same basis cut to multiplicities `0..=n`.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        self.require(n)?;
        Ok(BasisFunction {
            values: self.values[..=n].to_vec(),
        })
    }

    pub fn require(&self, n: usize) -> Result<()> {
        if self.n() < n {
            return Err(PoaError::validation(format!(
                "basis covers multiplicities up to {}, need {n}",
                self.n()
            )));
        }
        Ok(())
    }
}

/// Set covering welfare: `w(j) = 1` for every `j >= 1`.
pub fn basis_set_covering(n: usize) -> Result<BasisFunction> {
    if n == 0 {
        return Err(PoaError::validation("set covering basis needs n >= 1"));
    }
    let mut values = vec![1.0; n + 1];
    values[0] = 0.0;
    BasisFunction::from_values(values)
}

/// Power basis `w(j) = j^d`.
pub fn basis_power(n: usize, d: f64) -> Result<BasisFunction> {
    if n == 0 {
        return Err(PoaError::validation("power basis needs n >= 1"));
    }
    if !(d.is_finite() && d > 0.0) {
        return Err(PoaError::validation(format!(
            "power basis exponent must be positive, got {d}"
        )));
    }
    BasisFunction::from_values((0..=n).map(|j| (j as f64).powf(d)).collect())
}

/// One tabulated vector `f_j(0..=|N_j|+1)` per class, boundary zeros included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub per_class: Vec<Vec<f64>>,
}

impl Mechanism {
    pub fn new(per_class: Vec<Vec<f64>>) -> Self {
        Mechanism { per_class }
    }

    pub fn k(&self) -> usize {
        self.per_class.len()
    }

    pub fn class(&self, j: usize) -> &[f64] {
        &self.per_class[j]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Mechanism {
            per_class: self
                .per_class
                .iter()
                .map(|f| f.iter().map(|v| v * alpha).collect())
                .collect(),
        }
    }

    /// A single vector `(0, f(1), .., f(m), 0)` from the interior values.
    pub fn from_interior(interior: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(interior.len() + 2);
        f.push(0.0);
        f.extend_from_slice(interior);
        f.push(0.0);
        f
    }
}

/// Marginal contribution `f_j(l) = w(l) - w(l-1)` on `1..=|N_j|`.
pub fn marginal_contribution(w: &BasisFunction, part: &ClassPartition) -> Result<Mechanism> {
    w.require(part.n())?;
    let per_class = (0..part.k())
        .map(|j| {
            let m = part.observed_count(j);
            let interior: Vec<f64> = (1..=m).map(|l| w.at(l) - w.at(l - 1)).collect();
            Mechanism::from_interior(&interior)
        })
        .collect();
    Ok(Mechanism { per_class })
}

/// Marginal contribution for a single class observing `m` agents.
pub fn marginal_contribution_vector(w: &BasisFunction, m: usize) -> Result<Vec<f64>> {
    w.require(m)?;
    let interior: Vec<f64> = (1..=m).map(|l| w.at(l) - w.at(l - 1)).collect();
    Ok(Mechanism::from_interior(&interior))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMechanismCheck {
    /// `f_j(1) > 0`; when false the price of anarchy is zero.
    pub gate_ok: bool,
    pub boundary_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismReport {
    pub classes: Vec<ClassMechanismCheck>,
}

impl MechanismReport {
    /// First class (0-based) whose `f_j(1) <= 0`.
    pub fn gate_failure(&self) -> Option<usize> {
        self.classes.iter().position(|c| !c.gate_ok)
    }

    pub fn boundary_ok(&self) -> bool {
        self.classes.iter().all(|c| c.boundary_ok)
    }
}

/// Structural mismatches are errors; gate and boundary outcomes are reported.
pub fn validate_mechanism(
    f: &Mechanism,
    part: &ClassPartition,
    w: &BasisFunction,
) -> Result<MechanismReport> {
    w.require(part.n())?;
    if f.k() != part.k() {
        return Err(PoaError::validation(format!(
            "mechanism has {} classes, partition has {}",
            f.k(),
            part.k()
        )));
    }
    let mut classes = Vec::with_capacity(f.k());
    for j in 0..f.k() {
        let m = part.observed_count(j);
        let fj = f.class(j);
        if fj.len() != m + 2 {
            return Err(PoaError::validation(format!(
                "mechanism for class {} has length {}, expected |N_j| + 2 = {}",
                j + 1,
                fj.len(),
                m + 2
            )));
        }
        if let Some(v) = fj.iter().find(|v| !v.is_finite()) {
            return Err(PoaError::validation(format!(
                "mechanism for class {} has non-finite entry {v}",
                j + 1
            )));
        }
        classes.push(ClassMechanismCheck {
            gate_ok: fj[1] > 0.0,
            boundary_ok: fj[0] == 0.0 && fj[m + 1] == 0.0,
        });
    }
    Ok(MechanismReport { classes })
}
