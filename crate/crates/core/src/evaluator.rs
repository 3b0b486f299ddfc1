//! Matrix-trace evaluation of the coherent-state lattice path integral.
//!
//! Each short-time propagator `P_a = ∫d̄Ω e^{c_a h(Ω)} |Ω⟩⟨Ω|` is built by
//! quadrature, with `c₊ = iΔt`, `c₋ = −iΔt`, `c_E = −Δτ`. Correlators replace
//! the factors at two slots by insertion matrices
//! `∫d̄Ω e^{c_a h(Ω)} Ω_{x,i} |Ω⟩⟨Ω|` and take the trace of the contour product.

use rayon::prelude::*;

use crate::coherent::{quad_operators, QuadratureGrid};
use crate::contour::{ContourParams, Leg, Ordering};
use crate::error::{Error, Result};
use crate::lattice::{Component, HamiltonianSpec};
use crate::linalg::{chain_product, max_abs_diff, powi, trace, OperatorMatrix};
use crate::oracle::ExactOracle;
use crate::scalar::{c, c_re, cexp, Real, C};

/// Default bound on the change of any propagator entry under grid doubling.
pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-11;

/// The three coherent-state short-time propagators at fixed `(Δt, Δτ)`.
#[derive(Debug, Clone)]
pub struct PropagatorSet<T: Real> {
    pub forward: OperatorMatrix<T>,
    pub backward: OperatorMatrix<T>,
    pub euclid: OperatorMatrix<T>,
    pub contour: ContourParams<T>,
    pub n_theta: usize,
    pub n_phi: usize,
    s_plus_one: T,
}

impl<T: Real> PropagatorSet<T> {
    pub fn get(&self, leg: Leg) -> &OperatorMatrix<T> {
        match leg {
            Leg::Forward => &self.forward,
            Leg::Backward => &self.backward,
            Leg::Euclidean => &self.euclid,
        }
    }
}

/// `∫d̄Ω e^{±iΔt h} Ω_{x,i} |Ω⟩⟨Ω|` on the forward (+) or backward (−) leg.
#[derive(Debug, Clone)]
pub struct InsertionMatrix<T: Real> {
    pub leg: Leg,
    pub site: usize,
    pub component: Component,
    pub matrix: OperatorMatrix<T>,
}

/// Insertion matrices for every site and component on both real-time legs.
#[derive(Debug, Clone)]
pub struct InsertionSet<T: Real> {
    sites: usize,
    items: Vec<InsertionMatrix<T>>,
}

impl<T: Real> InsertionSet<T> {
    pub fn get(&self, leg: Leg, site: usize, component: Component) -> Option<&InsertionMatrix<T>> {
        let leg_idx = match leg {
            Leg::Forward => 0,
            Leg::Backward => 1,
            Leg::Euclidean => return None,
        };
        if site >= self.sites {
            return None;
        }
        self.items
            .get((leg_idx * self.sites + site) * 3 + component.index())
    }
}

fn leg_coefficient<T: Real>(contour: &ContourParams<T>, leg: Leg) -> C<T> {
    match leg {
        Leg::Forward => c(T::zero(), contour.dt()),
        Leg::Backward => c(T::zero(), -contour.dt_backward()),
        Leg::Euclidean => c_re(-contour.dtau()),
    }
}

fn check_grid<T: Real>(spec: &HamiltonianSpec<T>, grid: &QuadratureGrid<T>) -> Result<()> {
    spec.validate()?;
    if grid.sites() != spec.sites() || grid.rep() != spec.rep {
        return Err(Error::DimensionMismatch {
            expected: spec.hilbert_dim(),
            got: grid.hilbert_dim(),
        });
    }
    Ok(())
}

fn propagator_set<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    grid: &QuadratureGrid<T>,
    mut mats: Vec<OperatorMatrix<T>>,
) -> PropagatorSet<T> {
    let euclid = mats.remove(2);
    let backward = mats.remove(1);
    let forward = mats.remove(0);
    PropagatorSet {
        forward,
        backward,
        euclid,
        contour: *contour,
        n_theta: grid.n_theta(),
        n_phi: grid.n_phi(),
        s_plus_one: spec.rep.s_plus_one(),
    }
}

/// Builds `P₊, P₋, P_E` by quadrature on `grid`.
pub fn build_propagators<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    grid: &QuadratureGrid<T>,
) -> Result<PropagatorSet<T>> {
    check_grid(spec, grid)?;
    let coefs = Leg::ALL.map(|leg| leg_coefficient(contour, leg));
    let mats = quad_operators(grid, 3, |omega, out| {
        let h = spec.h_cartesian(omega);
        for (o, k) in out.iter_mut().zip(coefs) {
            *o = cexp(k * h);
        }
    });
    Ok(propagator_set(spec, contour, grid, mats))
}

/// Builds one insertion matrix (without the `(s+1)` factor).
pub fn build_insertion<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    grid: &QuadratureGrid<T>,
    leg: Leg,
    site: usize,
    component: Component,
) -> Result<InsertionMatrix<T>> {
    check_grid(spec, grid)?;
    if leg == Leg::Euclidean {
        return Err(Error::InvalidContour(
            "insertions live on the real-time legs".into(),
        ));
    }
    if site >= spec.sites() {
        return Err(Error::DimensionMismatch {
            expected: spec.sites(),
            got: site + 1,
        });
    }
    let k = leg_coefficient(contour, leg);
    let matrix = quad_operators(grid, 1, |omega, out| {
        out[0] = cexp(k * spec.h_cartesian(omega)) * omega[site][component.index()];
    })
    .pop()
    .expect("one integrand");
    Ok(InsertionMatrix {
        leg,
        site,
        component,
        matrix,
    })
}

/// Propagators and every real-time insertion matrix in a single quadrature pass.
pub fn build_operators<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    grid: &QuadratureGrid<T>,
) -> Result<(PropagatorSet<T>, InsertionSet<T>)> {
    check_grid(spec, grid)?;
    let sites = spec.sites();
    let coefs = Leg::ALL.map(|leg| leg_coefficient(contour, leg));
    let count = 3 + 6 * sites;
    let mut mats = quad_operators(grid, count, |omega, out| {
        let h = spec.h_cartesian(omega);
        let w = coefs.map(|k| cexp(k * h));
        out[..3].copy_from_slice(&w);
        for leg in 0..2 {
            for x in 0..sites {
                for i in 0..3 {
                    out[3 + (leg * sites + x) * 3 + i] = w[leg] * omega[x][i];
                }
            }
        }
    });
    let rest = mats.split_off(3);
    let items = rest
        .into_iter()
        .enumerate()
        .map(|(k, matrix)| InsertionMatrix {
            leg: if k / (3 * sites) == 0 {
                Leg::Forward
            } else {
                Leg::Backward
            },
            site: (k / 3) % sites,
            component: Component::ALL[k % 3],
            matrix,
        })
        .collect();
    Ok((
        propagator_set(spec, contour, grid, mats),
        InsertionSet { sites, items },
    ))
}

/// Largest entry change of the three propagators when both node counts are
/// doubled.
pub fn quadrature_change<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    grid: &QuadratureGrid<T>,
) -> Result<T> {
    let coarse = build_propagators(spec, contour, grid)?;
    let fine = build_propagators(spec, contour, &grid.doubled()?)?;
    Ok(Leg::ALL
        .iter()
        .map(|&leg| max_abs_diff(coarse.get(leg), fine.get(leg)))
        .fold(T::zero(), |a, b| if b > a { b } else { a }))
}

/// [`build_operators`] preceded by a grid-doubling convergence check.
pub fn build_operators_checked<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    grid: &QuadratureGrid<T>,
    tol: T,
) -> Result<(PropagatorSet<T>, InsertionSet<T>)> {
    let change = quadrature_change(spec, contour, grid)?;
    if !(change <= tol) {
        return Err(Error::QuadratureNotConverged {
            change: change.as_f64(),
            tol: tol.as_f64(),
        });
    }
    build_operators(spec, contour, grid)
}

/// `Z = tr(P₊^{N₊} P₋^{N₋} P_E^{N_E})`.
pub fn partition_trace<T: Real>(props: &PropagatorSet<T>) -> C<T> {
    let c = &props.contour;
    trace(
        &(powi(&props.forward, c.slices(Leg::Forward))
            * powi(&props.backward, c.slices(Leg::Backward))
            * powi(&props.euclid, c.slices(Leg::Euclidean))),
    )
}

/// `(s+1)² ⟨Ω_{a,x,i} Ω_{b,x',i'}⟩_SK`, converging to `⟨s_i(x,t) s_i'(x',t')⟩`
/// with `t = t_hat Δt`, `t' = t_hat_prime Δt`.
#[allow(clippy::too_many_arguments)]
pub fn lattice_correlator<T: Real>(
    props: &PropagatorSet<T>,
    insertions: &InsertionSet<T>,
    ordering: Ordering,
    t_hat: usize,
    t_hat_prime: usize,
    x: usize,
    i: Component,
    xp: usize,
    ip: Component,
) -> Result<C<T>> {
    let z = partition_trace(props);
    correlator_with_z(
        props,
        insertions,
        ordering,
        t_hat,
        t_hat_prime,
        x,
        i,
        xp,
        ip,
        z,
    )
}

#[allow(clippy::too_many_arguments)]
fn correlator_with_z<T: Real>(
    props: &PropagatorSet<T>,
    insertions: &InsertionSet<T>,
    ordering: Ordering,
    t_hat: usize,
    t_hat_prime: usize,
    x: usize,
    i: Component,
    xp: usize,
    ip: Component,
    z: C<T>,
) -> Result<C<T>> {
    let contour = &props.contour;
    let (a, b) = contour.correlator_slots(ordering, t_hat, t_hat_prime)?;
    let missing = |site| Error::DimensionMismatch {
        expected: insertions.sites,
        got: site + 1,
    };
    let ins_a = insertions.get(a.leg, x, i).ok_or_else(|| missing(x))?;
    let ins_b = insertions.get(b.leg, xp, ip).ok_or_else(|| missing(xp))?;
    let mut product: Option<OperatorMatrix<T>> = None;
    for leg in Leg::ALL {
        let mut repl: Vec<(usize, &OperatorMatrix<T>)> = Vec::new();
        if a.leg == leg {
            repl.push((a.index, &ins_a.matrix));
        }
        if b.leg == leg {
            repl.push((b.index, &ins_b.matrix));
        }
        repl.sort_by_key(|(k, _)| *k);
        let part = chain_product(props.get(leg), contour.slices(leg), &repl);
        product = Some(match product {
            None => part,
            Some(p) => p * part,
        });
    }
    let sp1 = props.s_plus_one;
    Ok(trace(&product.expect("three legs")) * (sp1 * sp1) / z)
}

/// `⟨s_i(x,t) s_i'(x',t')⟩` at fixed physical times under one ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPoint<T> {
    pub ordering: Ordering,
    pub x: usize,
    pub i: Component,
    pub xp: usize,
    pub ip: Component,
    pub t: T,
    pub t_prime: T,
}

impl<T: Real> TwoPoint<T> {
    /// Short label such as `unordered <s1(0,t) s1(1,t')>`.
    pub fn label(&self) -> String {
        format!(
            "{} <{}({},t) {}({},t')>",
            self.ordering.name(),
            self.i,
            self.x,
            self.ip,
            self.xp
        )
    }

    fn indices(&self, contour: &ContourParams<T>) -> Result<(usize, usize)> {
        let off_grid = |t: T| {
            Error::InvalidContour(format!(
                "time {t:e} is not a multiple of dt = {:e}",
                contour.dt()
            ))
        };
        let t_hat = contour.time_index(self.t).ok_or_else(|| off_grid(self.t))?;
        let t_hat_prime = contour
            .time_index(self.t_prime)
            .ok_or_else(|| off_grid(self.t_prime))?;
        Ok((t_hat, t_hat_prime))
    }

    pub fn lattice(&self, props: &PropagatorSet<T>, insertions: &InsertionSet<T>) -> Result<C<T>> {
        let (t_hat, t_hat_prime) = self.indices(&props.contour)?;
        lattice_correlator(
            props,
            insertions,
            self.ordering,
            t_hat,
            t_hat_prime,
            self.x,
            self.i,
            self.xp,
            self.ip,
        )
    }

    pub fn exact(&self, oracle: &ExactOracle<T>, beta: T) -> Result<C<T>> {
        oracle.correlator(beta, self.x, self.i, self.t, self.xp, self.ip, self.t_prime)
    }
}

/// Where a correlator series came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance<T> {
    Lattice {
        n: usize,
        n_theta: usize,
        n_phi: usize,
    },
    Exact,
    MonteCarlo {
        stderr: Vec<C<T>>,
    },
}

/// Complex correlator values on a real-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorSeries<T> {
    pub ordering: Ordering,
    pub times: Vec<T>,
    pub values: Vec<C<T>>,
    pub provenance: Provenance<T>,
}

impl<T: Real> CorrelatorSeries<T> {
    pub fn new(
        ordering: Ordering,
        times: Vec<T>,
        values: Vec<C<T>>,
        provenance: Provenance<T>,
    ) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidContour(
                "series times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            ordering,
            times,
            values,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Lattice correlator on the forward time indices `t_hats` at fixed `t_hat_prime`.
#[allow(clippy::too_many_arguments)]
pub fn lattice_series<T: Real>(
    props: &PropagatorSet<T>,
    insertions: &InsertionSet<T>,
    ordering: Ordering,
    t_hats: &[usize],
    t_hat_prime: usize,
    x: usize,
    i: Component,
    xp: usize,
    ip: Component,
) -> Result<CorrelatorSeries<T>> {
    let z = partition_trace(props);
    let values = t_hats
        .par_iter()
        .map(|&t| correlator_with_z(props, insertions, ordering, t, t_hat_prime, x, i, xp, ip, z))
        .collect::<Result<Vec<_>>>()?;
    let dt = props.contour.dt();
    let times = t_hats.iter().map(|&k| T::from_count(k) * dt).collect();
    CorrelatorSeries::new(
        ordering,
        times,
        values,
        Provenance::Lattice {
            n: props.contour.slices(Leg::Forward),
            n_theta: props.n_theta,
            n_phi: props.n_phi,
        },
    )
}
