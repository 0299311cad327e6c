//! Sparse coefficient matrices, hard thresholding and sequentially
//! thresholded least squares.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::autodiff::Tensor;
use crate::dictionary::DictionarySpec;
use crate::dynamics::{finite_difference_derivatives, Dataset};
use crate::error::{Error, Result};

pub use crate::training::rk4_sindy_direct;

/// Coefficients `Ξ` (`features x states`) together with an activity mask.
/// Inactive entries are exactly `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    labels: Vec<String>,
    state_names: Vec<String>,
    values: Tensor,
    mask: Vec<bool>,
}

impl CoefficientMatrix {
    /// All-zero matrix with every entry active.
    pub fn zeros(labels: Vec<String>, state_names: Vec<String>) -> Self {
        let (d, n) = (labels.len(), state_names.len());
        Self {
            labels,
            state_names,
            values: Tensor::zeros(d, n),
            mask: vec![true; d * n],
        }
    }

    pub fn for_dictionary(spec: &DictionarySpec) -> Self {
        Self::zeros(spec.labels(), spec.state_names())
    }

    /// Wraps dense values; entries that are exactly zero stay active.
    pub fn from_values(labels: Vec<String>, state_names: Vec<String>, values: Tensor) -> Result<Self> {
        if values.shape() != [labels.len(), state_names.len()] {
            return Err(Error::invalid(format!(
                "coefficients of shape {:?} do not match {} features x {} states",
                values.shape(),
                labels.len(),
                state_names.len()
            )));
        }
        let mask = vec![true; values.len()];
        Ok(Self {
            labels,
            state_names,
            values,
            mask,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::invalid("mask length does not match coefficients"));
        }
        self.mask = mask;
        self.enforce_mask();
        Ok(self)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn features(&self) -> usize {
        self.labels.len()
    }

    pub fn states(&self) -> usize {
        self.state_names.len()
    }

    pub fn get(&self, feature: usize, state: usize) -> f64 {
        self.values.get(feature, state)
    }

    pub fn is_active(&self, feature: usize, state: usize) -> bool {
        self.mask[feature * self.states() + state]
    }

    /// Number of active entries.
    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Active entries with a nonzero value.
    pub fn support(&self) -> Vec<bool> {
        self.mask
            .iter()
            .zip(self.values.values())
            .map(|(m, v)| *m && *v != 0.0)
            .collect()
    }

    /// Replaces the values, zeroing every inactive entry.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::invalid("coefficient buffer has the wrong length"));
        }
        self.values.values_mut().copy_from_slice(values);
        self.enforce_mask();
        Ok(())
    }

    fn enforce_mask(&mut self) {
        for (v, m) in self.values.values_mut().iter_mut().zip(&self.mask) {
            if !m {
                *v = 0.0;
            }
        }
    }

    /// Zeroes and deactivates every entry with `|value| < tol`. Returns the
    /// `(feature, state)` pairs newly pruned.
    pub fn threshold(&mut self, tol: f64) -> Vec<(usize, usize)> {
        let n = self.states();
        let mut pruned = Vec::new();
        for (k, (v, m)) in self.values.values_mut().iter_mut().zip(self.mask.iter_mut()).enumerate() {
            if *m && v.abs() < tol {
                *v = 0.0;
                *m = false;
                pruned.push((k / n, k % n));
            }
        }
        pruned
    }

    /// Column `state` as a vector over features.
    pub fn column(&self, state: usize) -> Vec<f64> {
        (0..self.features()).map(|f| self.get(f, state)).collect()
    }

    /// CSV with header `feature,x1..xn,mask_x1..mask_xn`; mask entries are 0/1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature");
        for name in &self.state_names {
            write!(s, ",{name}").unwrap();
        }
        for name in &self.state_names {
            write!(s, ",mask_{name}").unwrap();
        }
        s.push('\n');
        for (f, label) in self.labels.iter().enumerate() {
            s.push_str(label);
            for j in 0..self.states() {
                write!(s, ",{}", self.get(f, j)).unwrap();
            }
            for j in 0..self.states() {
                write!(s, ",{}", u8::from(self.is_active(f, j))).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(csv: &str) -> Result<Self> {
        let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::invalid("empty coefficient csv"))?
            .split(',')
            .collect();
        if header.first() != Some(&"feature") || header.len() % 2 == 0 {
            return Err(Error::invalid("coefficient csv header must be feature,<states>,<masks>"));
        }
        let n = (header.len() - 1) / 2;
        let state_names: Vec<String> = header[1..=n].iter().map(|s| s.to_string()).collect();
        let mut labels = Vec::new();
        let mut values = Vec::new();
        let mut mask = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(Error::invalid(format!("coefficient row {line:?} has the wrong width")));
            }
            labels.push(fields[0].to_string());
            for f in &fields[1..=n] {
                values.push(f.parse::<f64>().map_err(|e| Error::invalid(format!("{f:?}: {e}")))?);
            }
            for f in &fields[n + 1..] {
                mask.push(match *f {
                    "1" => true,
                    "0" => false,
                    other => return Err(Error::invalid(format!("mask entry {other:?} is not 0 or 1"))),
                });
            }
        }
        let d = labels.len();
        Self::from_values(labels, state_names, Tensor::matrix(d, n, values))?.with_mask(mask)
    }
}

/// Least-squares solver used by [`stls`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    NormalEquations,
    /// Minimum-norm pseudo-inverse solution; used when the normal equations
    /// are too ill-conditioned.
    Pseudoinverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlsResult {
    pub coefficients: CoefficientMatrix,
    pub iterations: usize,
    /// True if any subproblem fell back to the pseudo-inverse.
    pub ill_conditioned: bool,
}

/// Condition number above which the normal equations are abandoned.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Solves `min ‖a x − b‖` over the given columns of `a`.
fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> (Vec<f64>, SolveMethod) {
    if cols.is_empty() {
        return (Vec::new(), SolveMethod::NormalEquations);
    }
    let sub = a.select_columns(cols);
    let gram = sub.transpose() * &sub;
    let rhs = sub.transpose() * b;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e.abs()), hi.max(e.abs())));
    if lo > 0.0 && hi / lo <= CONDITION_LIMIT {
        if let Some(chol) = gram.cholesky() {
            return (chol.solve(&rhs).iter().copied().collect(), SolveMethod::NormalEquations);
        }
    }
    let dim = sub.nrows().max(sub.ncols()) as f64;
    let svd = sub.svd(true, true);
    let x = svd
        .solve(b, f64::EPSILON * dim * svd.singular_values.max())
        .expect("u and v were computed");
    (x.iter().copied().collect(), SolveMethod::Pseudoinverse)
}

/// Sequentially thresholded least squares on a feature matrix `theta`
/// (`samples x features`) and derivative matrix `dx` (`samples x states`).
///
/// Stops after `max_iter` refits or once the mask has stayed the same for two
/// consecutive iterations.
pub fn stls(
    theta: &Tensor,
    dx: &Tensor,
    labels: Vec<String>,
    state_names: Vec<String>,
    tol: f64,
    max_iter: usize,
) -> Result<StlsResult> {
    if theta.rows() != dx.rows() {
        return Err(Error::invalid(format!(
            "feature matrix has {} rows but derivatives have {}",
            theta.rows(),
            dx.rows()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    if theta.cols() != labels.len() || dx.cols() != state_names.len() {
        return Err(Error::invalid("labels do not match matrix shapes"));
    }
    let (m, d, n) = (theta.rows(), theta.cols(), dx.cols());
    let a = DMatrix::from_row_slice(m, d, theta.values());
    let all: Vec<usize> = (0..d).collect();
    let mut xi = CoefficientMatrix::zeros(labels, state_names);
    let mut values = vec![0.0; d * n];
    let mut ill = false;
    let targets: Vec<DVector<f64>> = (0..n)
        .map(|j| DVector::from_iterator(m, (0..m).map(|r| dx.get(r, j))))
        .collect();
    for (j, b) in targets.iter().enumerate() {
        let (x, how) = least_squares(&a, b, &all);
        ill |= how == SolveMethod::Pseudoinverse;
        for (f, v) in x.into_iter().enumerate() {
            values[f * n + j] = v;
        }
    }
    xi.set_values(&values)?;
    let mut iterations = 0;
    let mut stable = 0;
    while iterations < max_iter {
        iterations += 1;
        let before = xi.mask().to_vec();
        xi.threshold(tol);
        let mut values = xi.values().values().to_vec();
        for (j, b) in targets.iter().enumerate() {
            let cols: Vec<usize> = (0..d).filter(|&f| xi.is_active(f, j)).collect();
            let (x, how) = least_squares(&a, b, &cols);
            ill |= how == SolveMethod::Pseudoinverse;
            for (&f, v) in cols.iter().zip(x) {
                values[f * n + j] = v;
            }
        }
        xi.set_values(&values)?;
        if xi.mask() == before.as_slice() {
            stable += 1;
            if stable >= 2 {
                break;
            }
        } else {
            stable = 0;
        }
    }
    Ok(StlsResult {
        coefficients: xi,
        iterations,
        ill_conditioned: ill,
    })
}

/// Runs [`stls`] on a dataset's noisy states using finite-difference
/// derivatives, stacking all trajectories.
pub fn stls_sindy(dataset: &Dataset, spec: &DictionarySpec, tol: f64, max_iter: usize) -> Result<StlsResult> {
    let derivs = finite_difference_derivatives(dataset)?;
    let states = stack(dataset.trajectories.iter().map(|t| &t.noisy))?;
    let dx = stack(derivs.iter())?;
    let theta = spec.eval_batch(&states)?;
    stls(&theta.values, &dx, spec.labels(), spec.state_names(), tol, max_iter)
}

/// Concatenates matrices with equal column counts row-wise.
pub fn stack<'a>(parts: impl IntoIterator<Item = &'a Tensor>) -> Result<Tensor> {
    let mut cols = None;
    let mut rows = 0;
    let mut values = Vec::new();
    for p in parts {
        if *cols.get_or_insert(p.cols()) != p.cols() {
            return Err(Error::invalid("cannot stack matrices with different widths"));
        }
        rows += p.rows();
        values.extend_from_slice(p.values());
    }
    Ok(Tensor::matrix(rows, cols.unwrap_or(0), values))
}
