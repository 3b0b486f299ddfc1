//! Hilbert-space ground truth: exact spin operators, exact thermal real-time
//! correlators, and the first-order product `Z̃(j)` with classical sources,
//! differentiated by central finite differences.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::coherent::spin_rep_matrix;
use crate::contour::{ContourParams, Leg, Ordering, Slot};
use crate::error::{Error, Result};
use crate::lattice::{Component, HamiltonianSpec, SpinRep};
use crate::linalg::{chain_product, identity, kron, trace, zeros, OperatorMatrix};
use crate::scalar::{c, c_re, cis, Real, C};

/// `s_i(x)` on `sites` sites: `1 ⊗ … ⊗ s_i ⊗ … ⊗ 1`, site 0 leftmost.
pub fn spin_matrix<T: Real>(
    rep: SpinRep,
    sites: usize,
    x: usize,
    comp: Component,
) -> Result<OperatorMatrix<T>> {
    if x >= sites {
        return Err(Error::DimensionMismatch {
            expected: sites,
            got: x + 1,
        });
    }
    let id = identity::<T>(rep.dim());
    let s = spin_rep_matrix::<T>(rep, comp);
    let mut out = DMatrix::from_element(1, 1, c_re(T::one()));
    for site in 0..sites {
        out = kron(&out, if site == x { &s } else { &id });
    }
    Ok(out)
}

/// `H = Σ_terms coupling · Π s_i(x)` as a dense matrix.
pub fn hamiltonian_matrix<T: Real>(spec: &HamiltonianSpec<T>) -> Result<OperatorMatrix<T>> {
    spec.validate()?;
    let dim = spec.hilbert_dim();
    let mut h = zeros::<T>(dim);
    for term in &spec.terms {
        let mut prod = identity::<T>(dim);
        for &(site, comp) in &term.factors {
            prod = &prod * spin_matrix::<T>(spec.rep, spec.sites(), site, comp)?;
        }
        h += prod * c_re(term.coupling);
    }
    Ok(h)
}

/// Eigendecomposition of `H`, reused for every `(t, t')`.
#[derive(Debug, Clone)]
pub struct ExactOracle<T: Real> {
    rep: SpinRep,
    sites: usize,
    /// Shifted so the ground state sits at zero.
    energies: Vec<T>,
    vectors: OperatorMatrix<T>,
}

impl<T: Real> ExactOracle<T> {
    pub fn new(spec: &HamiltonianSpec<T>) -> Result<Self> {
        let h = hamiltonian_matrix(spec)?;
        let eig = h.symmetric_eigen();
        let e0 = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(eig.eigenvalues[0], |a, b| if b < a { b } else { a });
        Ok(Self {
            rep: spec.rep,
            sites: spec.sites(),
            energies: eig.eigenvalues.iter().map(|&e| e - e0).collect(),
            vectors: eig.eigenvectors,
        })
    }

    /// Spectrum relative to the ground state.
    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    fn in_eigenbasis(&self, x: usize, comp: Component) -> Result<OperatorMatrix<T>> {
        let s = spin_matrix::<T>(self.rep, self.sites, x, comp)?;
        Ok(self.vectors.adjoint() * s * &self.vectors)
    }

    /// `tr(s_i(x,t) s_i'(x',t') e^{−βH}) / tr(e^{−βH})` with
    /// `s(x,t) = e^{iHt} s(x) e^{−iHt}`.
    #[allow(clippy::too_many_arguments)]
    pub fn correlator(
        &self,
        beta: T,
        x: usize,
        i: Component,
        t: T,
        xp: usize,
        ip: Component,
        tp: T,
    ) -> Result<C<T>> {
        let a = self.in_eigenbasis(x, i)?;
        let b = self.in_eigenbasis(xp, ip)?;
        Ok(self.correlator_in_basis(beta, &a, &b, t - tp))
    }

    fn correlator_in_basis(
        &self,
        beta: T,
        a: &OperatorMatrix<T>,
        b: &OperatorMatrix<T>,
        tau: T,
    ) -> C<T> {
        let boltz: Vec<T> = self.energies.iter().map(|&e| (-beta * e).exp()).collect();
        let z = boltz.iter().fold(T::zero(), |acc, &w| acc + w);
        let dim = self.energies.len();
        let mut sum = c_re(T::zero());
        for m in 0..dim {
            for n in 0..dim {
                let phase = cis((self.energies[m] - self.energies[n]) * tau);
                sum += a[(m, n)] * b[(n, m)] * phase * boltz[m];
            }
        }
        sum / z
    }

    /// `⟨s_i(x,t) s_i'(x',t')⟩` for every `t` in `times` at fixed `t'`.
    #[allow(clippy::too_many_arguments)]
    pub fn correlator_series(
        &self,
        beta: T,
        x: usize,
        i: Component,
        times: &[T],
        xp: usize,
        ip: Component,
        tp: T,
    ) -> Result<Vec<C<T>>> {
        let a = self.in_eigenbasis(x, i)?;
        let b = self.in_eigenbasis(xp, ip)?;
        Ok(times
            .par_iter()
            .map(|&t| self.correlator_in_basis(beta, &a, &b, t - tp))
            .collect())
    }

    /// `tr e^{−βH}` for the unshifted Hamiltonian, given the ground energy.
    pub fn partition_function(&self, beta: T, ground_energy: T) -> T {
        let z = self
            .energies
            .iter()
            .fold(T::zero(), |acc, &e| acc + (-beta * e).exp());
        z * (-beta * ground_energy).exp()
    }
}

/// Thermal two-point function of spin components, see [`ExactOracle::correlator`].
#[allow(clippy::too_many_arguments)]
pub fn exact_correlator<T: Real>(
    spec: &HamiltonianSpec<T>,
    beta: T,
    x: usize,
    i: Component,
    t: T,
    xp: usize,
    ip: Component,
    tp: T,
) -> Result<C<T>> {
    ExactOracle::new(spec)?.correlator(beta, x, i, t, xp, ip, tp)
}

/// Classical source `j` coupled to `s_i(x)` on one slice of one leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceField<T> {
    pub leg: Leg,
    /// 0-based slice on the leg.
    pub slice: usize,
    pub site: usize,
    pub component: Component,
    pub value: T,
}

/// `∂P̃_leg / ∂j` per unit `s`: `−iΔt`, `+iΔt`, `+Δτ`.
pub fn source_derivative_factor<T: Real>(contour: &ContourParams<T>, leg: Leg) -> C<T> {
    match leg {
        Leg::Forward => c(T::zero(), -contour.dt()),
        Leg::Backward => c(T::zero(), contour.dt_backward()),
        Leg::Euclidean => c_re(contour.dtau()),
    }
}

fn first_order_factor<T: Real>(
    h: &OperatorMatrix<T>,
    contour: &ContourParams<T>,
    leg: Leg,
) -> OperatorMatrix<T> {
    let coef = match leg {
        Leg::Forward => c(T::zero(), contour.dt()),
        Leg::Backward => c(T::zero(), -contour.dt_backward()),
        Leg::Euclidean => c_re(-contour.dtau()),
    };
    identity::<T>(h.nrows()) + h * coef
}

/// `tr(Π P̃₊(j⁺) Π P̃₋(j⁻) Π P̃_E(j^E))` with first-order factors
/// `1 ± iΔt(H − Σ j·s)` and `1 − Δτ(H − Σ j·s)`.
pub fn ztilde_trace<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    sources: &[SourceField<T>],
) -> Result<C<T>> {
    let h = hamiltonian_matrix(spec)?;
    ztilde_trace_with(&h, spec, contour, sources)
}

fn ztilde_trace_with<T: Real>(
    h: &OperatorMatrix<T>,
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    sources: &[SourceField<T>],
) -> Result<C<T>> {
    let mut product = identity::<T>(h.nrows());
    for leg in Leg::ALL {
        let n = contour.slices(leg);
        let mut shifted: Vec<(usize, OperatorMatrix<T>)> = Vec::new();
        for src in sources.iter().filter(|s| s.leg == leg) {
            if src.slice >= n {
                return Err(Error::SlotOutOfRange {
                    slot: src.slice,
                    len: n,
                });
            }
            let coupling = spin_matrix::<T>(spec.rep, spec.sites(), src.site, src.component)?
                * c_re(src.value);
            match shifted.iter_mut().find(|(k, _)| *k == src.slice) {
                Some((_, m)) => *m -= coupling,
                None => shifted.push((src.slice, h - coupling)),
            }
        }
        shifted.sort_by_key(|(k, _)| *k);
        let factors: Vec<(usize, OperatorMatrix<T>)> = shifted
            .into_iter()
            .map(|(k, m)| (k, first_order_factor(&m, contour, leg)))
            .collect();
        let refs: Vec<(usize, &OperatorMatrix<T>)> = factors.iter().map(|(k, m)| (*k, m)).collect();
        product *= chain_product(&first_order_factor(h, contour, leg), n, &refs);
    }
    Ok(trace(&product))
}

/// Default source step of [`fd_correlator`]. The two sources sit on distinct
/// slices, where `Z̃` is exactly bilinear in them, so the central difference
/// has no truncation error and a unit step keeps cancellation small.
pub const DEFAULT_FD_STEP: f64 = 1.0;

/// Second mixed central difference of `Z̃` in the sources at the two
/// correlator slots, normalised by the source-derivative factors and `Z̃(0)`.
#[allow(clippy::too_many_arguments)]
pub fn fd_correlator<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    ordering: Ordering,
    t_hat: usize,
    t_hat_prime: usize,
    x: usize,
    i: Component,
    xp: usize,
    ip: Component,
    eps: T,
) -> Result<C<T>> {
    let (a, b) = contour.correlator_slots(ordering, t_hat, t_hat_prime)?;
    let h = hamiltonian_matrix(spec)?;
    let src = |slot: Slot, site, component, value| SourceField {
        leg: slot.leg,
        slice: slot.index,
        site,
        component,
        value,
    };
    let z = |ea: T, eb: T| {
        ztilde_trace_with(&h, spec, contour, &[src(a, x, i, ea), src(b, xp, ip, eb)])
    };
    let d2 = (z(eps, eps)? - z(eps, -eps)? - z(-eps, eps)? + z(-eps, -eps)?)
        / c_re(T::lit(4.0) * eps * eps);
    let z0 = ztilde_trace_with(&h, spec, contour, &[])?;
    let norm = source_derivative_factor(contour, a.leg) * source_derivative_factor(contour, b.leg);
    Ok(d2 / (norm * z0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{HamiltonianTerm, LatticeSpec};
    use crate::linalg::{is_hermitian, max_abs_diff};
    use crate::scalar::cabs;

    const X: Component = Component::X;
    const Y: Component = Component::Y;
    const Z: Component = Component::Z;

    fn single_site(terms: Vec<HamiltonianTerm<f64>>) -> HamiltonianSpec<f64> {
        HamiltonianSpec::new(
            terms,
            LatticeSpec::new(1, vec![], "site").unwrap(),
            SpinRep::half(),
        )
        .unwrap()
    }

    #[test]
    fn sz_is_diagonal_half() {
        let s = spin_matrix::<f64>(SpinRep::half(), 1, 0, Z).unwrap();
        let want =
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c_re(0.5), c_re(-0.5)]));
        assert_eq!(s, want);
        assert!(spin_matrix::<f64>(SpinRep::half(), 1, 1, Z).is_err());
    }

    #[test]
    fn su2_algebra_and_locality() {
        for two_s in [1u32, 2] {
            let rep = SpinRep::new(two_s).unwrap();
            for sites in 1..=3 {
                for x in 0..sites {
                    let [sx, sy, sz] =
                        Component::ALL.map(|cmp| spin_matrix::<f64>(rep, sites, x, cmp).unwrap());
                    assert!(
                        max_abs_diff(&(&sx * &sy - &sy * &sx), &(sz.clone() * c(0.0, 1.0))) < 1e-14
                    );
                    assert!(
                        max_abs_diff(&(&sy * &sz - &sz * &sy), &(sx.clone() * c(0.0, 1.0))) < 1e-14
                    );
                    for y in 0..sites {
                        if y == x {
                            continue;
                        }
                        for cmp in Component::ALL {
                            let o = spin_matrix::<f64>(rep, sites, y, cmp).unwrap();
                            assert!(max_abs_diff(&(&sx * &o), &(&o * &sx)) < 1e-14);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn demo_hamiltonian_spectrum() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        let h = hamiltonian_matrix(&spec).unwrap();
        assert!(is_hermitian(&h, 1e-13));
        let mut e: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // -(j/2)(XX + ZZ)/4 on Bell states: XX+ZZ has eigenvalues {2, 0, 0, -2}
        let want = [-0.25, 0.0, 0.0, 0.25];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        // spectrum symmetric under E -> -E for this model
        for k in 0..4 {
            assert!((e[k] + e[3 - k]).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_and_single_term_hamiltonians() {
        let spec = single_site(vec![]);
        assert_eq!(hamiltonian_matrix(&spec).unwrap(), zeros(2));
        let spec = single_site(vec![HamiltonianTerm::new(0.7, vec![(0, Z)])]);
        let h = hamiltonian_matrix(&spec).unwrap();
        assert!(
            max_abs_diff(
                &h,
                &(spin_matrix(SpinRep::half(), 1, 0, Z).unwrap() * c_re(0.7))
            ) < 1e-15
        );
    }

    #[test]
    fn equal_time_same_component_is_quarter() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        let oracle = ExactOracle::new(&spec).unwrap();
        for cmp in Component::ALL {
            let v = oracle.correlator(3.0, 0, cmp, 1.7, 0, cmp, 1.7).unwrap();
            assert!(cabs(v - c_re(0.25)) < 1e-14);
        }
        let v = oracle.correlator(3.0, 1, X, 0.0, 1, X, 0.0).unwrap();
        assert!(cabs(v - c_re(0.25)) < 1e-14);
    }

    #[test]
    fn exact_correlator_is_time_translation_invariant_and_hermitian() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        let oracle = ExactOracle::new(&spec).unwrap();
        for &(t, tp) in &[(0.3, 1.1), (2.0, -4.0), (7.5, 2.5)] {
            for (x, i, xp, ip) in [(0, X, 1, X), (0, Y, 0, Y), (1, Z, 0, X)] {
                let v = oracle.correlator(3.0, x, i, t, xp, ip, tp).unwrap();
                let shifted = oracle
                    .correlator(3.0, x, i, t + 0.9, xp, ip, tp + 0.9)
                    .unwrap();
                assert!(cabs(v - shifted) < 1e-12);
                let swapped = oracle.correlator(3.0, xp, ip, tp, x, i, t).unwrap();
                assert!(cabs(v.conj() - swapped) < 1e-12);
            }
        }
    }

    #[test]
    fn ztilde_trivial_cases() {
        let spec = single_site(vec![]);
        let contour = ContourParams::new(1.0, 1.0, 1).unwrap();
        assert_eq!(ztilde_trace(&spec, &contour, &[]).unwrap(), c_re(2.0));
        let bad = SourceField {
            leg: Leg::Forward,
            slice: 1,
            site: 0,
            component: Z,
            value: 0.1,
        };
        assert!(matches!(
            ztilde_trace(&spec, &contour, &[bad]),
            Err(Error::SlotOutOfRange { .. })
        ));
    }

    #[test]
    fn ztilde_converges_linearly_to_partition_function() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        let h = hamiltonian_matrix(&spec).unwrap();
        let z_exact: f64 = h
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|e| (-3.0 * e).exp())
            .sum();
        let dev = |n| {
            let contour = ContourParams::new(3.0, 10.0, n).unwrap();
            cabs(ztilde_trace(&spec, &contour, &[]).unwrap() / z_exact - c_re(1.0))
        };
        let (d1, d2) = (dev(400), dev(800));
        assert!(d1 < 0.05);
        let ratio = d1 / d2;
        assert!((1.5..2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn single_source_derivative_inserts_spin() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        let contour = ContourParams::new(1.0, 1.0, 50).unwrap();
        let h = hamiltonian_matrix(&spec).unwrap();
        let eps = 1e-6;
        let src = SourceField {
            leg: Leg::Forward,
            slice: 20,
            site: 1,
            component: Y,
            value: eps,
        };
        let fd = (ztilde_trace(&spec, &contour, &[src]).unwrap()
            - ztilde_trace(&spec, &contour, &[]).unwrap())
            / (c(0.0, -contour.dt()) * eps);
        // explicit insertion of s_y(1) in place of the slot-20 factor
        let s = spin_matrix::<f64>(spec.rep, 2, 1, Y).unwrap();
        let p = |leg| first_order_factor(&h, &contour, leg);
        let m = chain_product(&p(Leg::Forward), 50, &[(20, &s)])
            * crate::linalg::powi(&p(Leg::Backward), 50)
            * crate::linalg::powi(&p(Leg::Euclidean), 50);
        let want = trace(&m);
        assert!(cabs(fd - want) < 1e-6 * cabs(want).max(1.0));
    }

    #[test]
    fn fd_correlator_is_independent_of_step() {
        let spec = HamiltonianSpec::demo_xz(1.0);
        let contour = ContourParams::new(3.0, 10.0, 50).unwrap();
        let at = |eps: f64| {
            fd_correlator(&spec, &contour, Ordering::Unordered, 20, 3, 0, X, 1, X, eps).unwrap()
        };
        let reference = at(DEFAULT_FD_STEP);
        for eps in [1e-2, 0.3, 3.0] {
            assert!(cabs(at(eps) - reference) < 1e-10, "eps {eps}");
        }
    }

    #[test]
    fn free_spin_fd_correlator_is_constant_quarter() {
        let spec = HamiltonianSpec::free(
            LatticeSpec::new(1, vec![], "site").unwrap(),
            SpinRep::half(),
        );
        let contour = ContourParams::new(2.0, 4.0, 40).unwrap();
        for (o, t, tp) in [
            (Ordering::Unordered, 5, 30),
            (Ordering::AntiOrdered, 3, 17),
            (Ordering::TimeOrdered, 30, 2),
        ] {
            let v = fd_correlator(&spec, &contour, o, t, tp, 0, Z, 0, Z, DEFAULT_FD_STEP).unwrap();
            assert!(cabs(v - c_re(0.25)) < 1e-12, "{o:?}: {v}");
        }
    }

    #[test]
    fn fd_correlator_approaches_exact() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        let oracle = ExactOracle::new(&spec).unwrap();
        let contour = ContourParams::new(3.0, 10.0, 400).unwrap();
        let t_hat = contour.time_index(2.0).unwrap();
        let v = fd_correlator(
            &spec,
            &contour,
            Ordering::Unordered,
            t_hat,
            0,
            0,
            X,
            0,
            X,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        let exact = oracle.correlator(3.0, 0, X, 2.0, 0, X, 0.0).unwrap();
        assert!(cabs(v - exact) < 5e-2);
    }

    #[test]
    fn fd_anti_ordered_matches_exact_at_large_n() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        let oracle = ExactOracle::new(&spec).unwrap();
        let contour = ContourParams::new(3.0, 10.0, 2000).unwrap();
        let (a, b) = (
            contour.time_index(2.0).unwrap(),
            contour.time_index(5.0).unwrap(),
        );
        let v = fd_correlator(
            &spec,
            &contour,
            Ordering::AntiOrdered,
            a,
            b,
            0,
            X,
            1,
            X,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        let exact = oracle.correlator(3.0, 0, X, 2.0, 1, X, 5.0).unwrap();
        assert!(cabs(v - exact) < 5e-3, "{v} vs {exact}");
    }
}
