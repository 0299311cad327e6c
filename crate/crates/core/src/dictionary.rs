//! Candidate-function library.
//!
//! Feature order is fixed: polynomial terms by ascending total degree, and
//! within one degree by the ascending multiset of variable indices
//! (`x1^2, x1*x2, x2^2` for two states). Trigonometric terms follow, one
//! block per harmonic `k` in the order given: `sin(k*x1) .. sin(k*xn)` then
//! `cos(k*x1) .. cos(k*xn)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub state_dim: usize,
    pub max_degree: u32,
    pub include_constant: bool,
    #[serde(default)]
    pub trig_harmonics: Vec<u32>,
}

/// One column of the dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feature {
    /// Product of powers; all-zero exponents is the constant.
    Monomial(Vec<u32>),
    Sin { harmonic: u32, channel: usize },
    Cos { harmonic: u32, channel: usize },
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

impl Feature {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Feature::Monomial(exps) => exps
                .iter()
                .zip(x)
                .filter(|(e, _)| **e > 0)
                .map(|(&e, &v)| v.powi(e as i32))
                .product(),
            Feature::Sin { harmonic, channel } => (*harmonic as f64 * x[*channel]).sin(),
            Feature::Cos { harmonic, channel } => (*harmonic as f64 * x[*channel]).cos(),
        }
    }

    /// Parses a canonical label for a system with `state_dim` states.
    pub fn parse(label: &str, state_dim: usize) -> Result<Feature> {
        let bad = || Error::Label(label.to_string());
        let var = |s: &str| -> Result<usize> {
            let idx: usize = s.strip_prefix('x').ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if idx == 0 || idx > state_dim {
                return Err(bad());
            }
            Ok(idx - 1)
        };
        let label = label.trim();
        if label == "1" {
            return Ok(Feature::Monomial(vec![0; state_dim]));
        }
        for (prefix, is_sin) in [("sin(", true), ("cos(", false)] {
            if let Some(inner) = label.strip_prefix(prefix) {
                let inner = inner.strip_suffix(')').ok_or_else(bad)?;
                let (harmonic, v) = match inner.split_once('*') {
                    Some((k, v)) => (k.parse().map_err(|_| bad())?, v),
                    None => (1, inner),
                };
                let channel = var(v)?;
                return Ok(if is_sin {
                    Feature::Sin { harmonic, channel }
                } else {
                    Feature::Cos { harmonic, channel }
                });
            }
        }
        let mut exps = vec![0u32; state_dim];
        for factor in label.split('*') {
            let (v, e) = match factor.split_once('^') {
                Some((v, e)) => (v, e.parse::<u32>().map_err(|_| bad())?),
                None => (factor, 1),
            };
            exps[var(v)?] += e;
        }
        Ok(Feature::Monomial(exps))
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Monomial(exps) => {
                let parts: Vec<String> = exps
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| **e > 0)
                    .map(|(i, &e)| if e == 1 { format!("x{}", i + 1) } else { format!("x{}^{e}", i + 1) })
                    .collect();
                if parts.is_empty() {
                    write!(f, "1")
                } else {
                    write!(f, "{}", parts.join("*"))
                }
            }
            Feature::Sin { harmonic, channel } | Feature::Cos { harmonic, channel } => {
                let name = if matches!(self, Feature::Sin { .. }) { "sin" } else { "cos" };
                if *harmonic == 1 {
                    write!(f, "{name}(x{})", channel + 1)
                } else {
                    write!(f, "{name}({harmonic}*x{})", channel + 1)
                }
            }
        }
    }
}

/// Θ evaluated on a batch of states, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Tensor,
    pub labels: Vec<String>,
}

/// Calls `visit` with every multiset of `degree` indices from `0..n`, ascending.
fn multisets(n: usize, degree: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, start: usize, left: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if left == 0 {
            visit(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, i, left - 1, cur, visit);
            cur.pop();
        }
    }
    rec(n, 0, degree, &mut Vec::with_capacity(degree), visit);
}

impl DictionarySpec {
    pub fn polynomial(state_dim: usize, max_degree: u32) -> Self {
        Self {
            state_dim,
            max_degree,
            include_constant: true,
            trig_harmonics: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return Err(Error::invalid("dictionary needs at least one state"));
        }
        if self.trig_harmonics.contains(&0) {
            return Err(Error::invalid("trigonometric harmonics must be positive"));
        }
        if self.len() == 0 {
            return Err(Error::invalid("dictionary is empty"));
        }
        Ok(())
    }

    /// Number of columns `D`.
    pub fn len(&self) -> usize {
        let n = self.state_dim as u64;
        let mut d = binomial(n + self.max_degree as u64, self.max_degree as u64) as usize;
        if !self.include_constant {
            d -= 1;
        }
        d + 2 * self.state_dim * self.trig_harmonics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> Vec<Feature> {
        let n = self.state_dim;
        let mut out = Vec::with_capacity(self.len());
        let first = if self.include_constant { 0 } else { 1 };
        for degree in first..=self.max_degree as usize {
            multisets(n, degree, &mut |idx| {
                let mut exps = vec![0u32; n];
                idx.iter().for_each(|&i| exps[i] += 1);
                out.push(Feature::Monomial(exps));
            });
        }
        for &harmonic in &self.trig_harmonics {
            out.extend((0..n).map(|channel| Feature::Sin { harmonic, channel }));
            out.extend((0..n).map(|channel| Feature::Cos { harmonic, channel }));
        }
        out
    }

    pub fn labels(&self) -> Vec<String> {
        self.features().iter().map(|f| f.to_string()).collect()
    }

    pub fn state_names(&self) -> Vec<String> {
        (1..=self.state_dim).map(|i| format!("x{i}")).collect()
    }

    /// One dictionary row.
    pub fn eval_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::invalid(format!(
                "state has {} entries, dictionary expects {}",
                x.len(),
                self.state_dim
            )));
        }
        Ok(self.features().iter().map(|f| f.eval(x)).collect())
    }

    /// Θ(X) for a `[samples, state_dim]` batch.
    pub fn eval_batch(&self, x: &Tensor) -> Result<FeatureMatrix> {
        if x.cols() != self.state_dim {
            return Err(Error::invalid(format!(
                "batch has {} columns, dictionary expects {}",
                x.cols(),
                self.state_dim
            )));
        }
        let features = self.features();
        let mut values = Vec::with_capacity(x.rows() * features.len());
        for r in 0..x.rows() {
            let row = x.row_slice(r);
            values.extend(features.iter().map(|f| f.eval(row)));
        }
        Ok(FeatureMatrix {
            values: Tensor::matrix(x.rows(), features.len(), values),
            labels: features.iter().map(|f| f.to_string()).collect(),
        })
    }

    /// Candidate vector field `Θ(x) · Ξ` at one state; `xi` is `[D, n]`.
    pub fn apply(&self, x: &[f64], xi: &Tensor) -> Result<Vec<f64>> {
        let d = self.len();
        if xi.shape() != [d, self.state_dim] {
            return Err(Error::invalid(format!(
                "coefficient matrix {:?} does not match dictionary [{d}, {}]",
                xi.shape(),
                self.state_dim
            )));
        }
        let theta = self.eval_features(x)?;
        let mut out = vec![0.0; self.state_dim];
        for (j, th) in theta.iter().enumerate() {
            if *th == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += th * xi.get(j, i);
            }
        }
        Ok(out)
    }

    /// Records Θ(x) on the tape for a `[rows, state_dim]` node.
    pub fn record(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let [rows, cols] = tape.shape(x);
        if cols != self.state_dim {
            return Err(Error::invalid(format!("dictionary input has {cols} columns, expected {}", self.state_dim)));
        }
        let mut column_nodes = Vec::with_capacity(self.state_dim);
        for i in 0..self.state_dim {
            column_nodes.push(tape.column(x, i)?);
        }
        // power cache indexed by (channel, exponent)
        let mut powers: Vec<Vec<Option<NodeId>>> = vec![vec![None; self.max_degree as usize + 1]; self.state_dim];
        let mut ones = None;
        let mut parts = Vec::with_capacity(self.len());
        for feature in self.features() {
            let node = match feature {
                Feature::Monomial(exps) => {
                    let mut acc: Option<NodeId> = None;
                    for (i, &e) in exps.iter().enumerate().filter(|(_, e)| **e > 0) {
                        let p = match powers[i][e as usize] {
                            Some(p) => p,
                            None => {
                                let p = if e == 1 { column_nodes[i] } else { tape.powi(column_nodes[i], e as i32) };
                                powers[i][e as usize] = Some(p);
                                p
                            }
                        };
                        acc = Some(match acc {
                            Some(a) => tape.mul(a, p)?,
                            None => p,
                        });
                    }
                    match acc {
                        Some(a) => a,
                        None => match ones {
                            Some(o) => o,
                            None => {
                                let o = tape.constant(Tensor::full(rows, 1, 1.0))?;
                                ones = Some(o);
                                o
                            }
                        },
                    }
                }
                Feature::Sin { harmonic, channel } => {
                    let arg = tape.scale(column_nodes[channel], harmonic as f64);
                    tape.sin(arg)
                }
                Feature::Cos { harmonic, channel } => {
                    let arg = tape.scale(column_nodes[channel], harmonic as f64);
                    tape.cos(arg)
                }
            };
            parts.push(node);
        }
        tape.concat_columns(&parts)
    }

    /// Records `Θ(x) · Ξ` on the tape.
    pub fn record_apply(&self, tape: &mut Tape, x: NodeId, xi: NodeId) -> Result<NodeId> {
        let theta = self.record(tape, x)?;
        tape.matmul(theta, xi)
    }
}
