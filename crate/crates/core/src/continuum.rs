//! Linear-in-`1/N` continuum fits and the extrapolation-error table.

use rayon::prelude::*;

use crate::coherent::QuadratureGrid;
use crate::contour::ContourParams;
use crate::error::{Error, Result};
use crate::evaluator::{build_operators, TwoPoint};
use crate::lattice::HamiltonianSpec;
use crate::oracle::ExactOracle;
use crate::scalar::{c, Real, C};

/// Lattice values of one observable at several timeslice counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FitWindow<T> {
    ns: Vec<usize>,
    values: Vec<C<T>>,
    exact: C<T>,
}

impl<T: Real> FitWindow<T> {
    pub fn new(ns: Vec<usize>, values: Vec<C<T>>, exact: C<T>) -> Result<Self> {
        if ns.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: ns.len(),
                got: values.len(),
            });
        }
        if ns.len() < 3 {
            return Err(Error::TooFewPoints {
                needed: 3,
                got: ns.len(),
            });
        }
        let mut sorted = ns.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ns.len() {
            let repeated = ns
                .iter()
                .find(|n| ns.iter().filter(|m| m == n).count() > 1)
                .copied()
                .unwrap_or(0);
            return Err(Error::DegenerateAbscissas(repeated));
        }
        if sorted != ns {
            return Err(Error::InvalidContour(
                "fit window N values must be increasing".into(),
            ));
        }
        Ok(Self { ns, values, exact })
    }

    pub fn ns(&self) -> &[usize] {
        &self.ns
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    pub fn exact(&self) -> C<T> {
        self.exact
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult<T> {
    /// Continuum estimate.
    pub intercept: C<T>,
    /// Coefficient of `1/N`.
    pub slope: C<T>,
    pub residual_rms: T,
    /// `intercept − exact`.
    pub extrapolation_error: C<T>,
}

fn fit_line<T: Real>(xs: &[T], ys: &[T]) -> (T, T, T) {
    let n = T::from_count(xs.len());
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss = xs.iter().zip(ys).fold(T::zero(), |a, (&x, &y)| {
        let r = y - intercept - slope * x;
        a + r * r
    });
    (intercept, slope, ss)
}

/// Unweighted least squares of value against `1/N`, real and imaginary parts
/// fitted independently.
pub fn linear_fit<T: Real>(window: &FitWindow<T>) -> FitResult<T> {
    let xs: Vec<T> = window
        .ns
        .iter()
        .map(|&n| T::one() / T::from_count(n))
        .collect();
    let re: Vec<T> = window.values.iter().map(|v| v.re).collect();
    let im: Vec<T> = window.values.iter().map(|v| v.im).collect();
    let (a_re, b_re, ss_re) = fit_line(&xs, &re);
    let (a_im, b_im, ss_im) = fit_line(&xs, &im);
    let intercept = c(a_re, a_im);
    FitResult {
        intercept,
        slope: c(b_re, b_im),
        residual_rms: ((ss_re + ss_im) / T::from_count(xs.len())).sqrt(),
        extrapolation_error: intercept - window.exact,
    }
}

/// Lattice values of every observable at every `N`, evaluated in parallel over
/// `N`. Row `k` belongs to `ns[k]`.
pub fn lattice_sweep<T: Real>(
    spec: &HamiltonianSpec<T>,
    beta: T,
    t_max: T,
    grid: &QuadratureGrid<T>,
    ns: &[usize],
    observables: &[TwoPoint<T>],
) -> Result<Vec<Vec<C<T>>>> {
    ns.par_iter()
        .map(|&n| {
            let contour = ContourParams::new(beta, t_max, n)?;
            let (props, ins) = build_operators(spec, &contour, grid)?;
            observables
                .iter()
                .map(|o| o.lattice(&props, &ins))
                .collect()
        })
        .collect()
}

/// Fit results indexed by `[window][observable]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable<T> {
    pub windows: Vec<Vec<usize>>,
    pub observables: Vec<TwoPoint<T>>,
    pub fits: Vec<Vec<FitResult<T>>>,
    /// Raw lattice values `[window][observable][k]`, kept for diagnostics.
    pub raw: Vec<Vec<Vec<C<T>>>>,
    pub exact: Vec<C<T>>,
}

/// `{300,400,500}` style label of a fit window.
pub fn window_label(ns: &[usize]) -> String {
    let parts: Vec<String> = ns.iter().map(|n| n.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

/// Extrapolation errors of every observable over every window. Each distinct
/// `N` is evaluated once even when windows overlap.
pub fn error_table<T: Real>(
    spec: &HamiltonianSpec<T>,
    beta: T,
    t_max: T,
    grid: &QuadratureGrid<T>,
    windows: &[Vec<usize>],
    observables: &[TwoPoint<T>],
) -> Result<ErrorTable<T>> {
    let mut all: Vec<usize> = windows.iter().flatten().copied().collect();
    all.sort_unstable();
    all.dedup();
    let values = lattice_sweep(spec, beta, t_max, grid, &all, observables)?;
    let oracle = ExactOracle::new(spec)?;
    let exact = observables
        .iter()
        .map(|o| o.exact(&oracle, beta))
        .collect::<Result<Vec<_>>>()?;
    let row = |n: usize| &values[all.binary_search(&n).expect("swept")];
    let mut fits = Vec::with_capacity(windows.len());
    let mut raw = Vec::with_capacity(windows.len());
    for ns in windows {
        let mut fit_row = Vec::with_capacity(observables.len());
        let mut raw_row = Vec::with_capacity(observables.len());
        for (k, &ex) in exact.iter().enumerate() {
            let vals: Vec<C<T>> = ns.iter().map(|&n| row(n)[k]).collect();
            let window = FitWindow::new(ns.clone(), vals.clone(), ex)?;
            fit_row.push(linear_fit(&window));
            raw_row.push(vals);
        }
        fits.push(fit_row);
        raw.push(raw_row);
    }
    Ok(ErrorTable {
        windows: windows.to_vec(),
        observables: observables.to_vec(),
        fits,
        raw,
        exact,
    })
}
