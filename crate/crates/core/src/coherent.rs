//! Spin coherent states and quadrature over products of Bloch spheres.
//!
//! `|Ω⟩ = Π_x exp(iθ_x (s_1 sin φ_x − s_2 cos φ_x)) |s, s⟩`, with the
//! diagonal measure `d̄Ω = Π_x (2s+1)/(4π) dΩ_x`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Component, SpinRep};
use crate::linalg::{OperatorMatrix, StateVector};
use crate::scalar::{c, c_re, cis, cpowi, Real, C};

/// A point on the unit sphere, `θ ∈ [0, π]`, `φ ∈ [0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochPoint<T> {
    theta: T,
    phi: T,
}

impl<T: Real> BlochPoint<T> {
    /// Validates `theta` and wraps `phi` into `[0, 2π)`.
    pub fn new(theta: T, phi: T) -> Result<Self> {
        let bad = || Error::BadBlochPoint {
            theta: theta.as_f64(),
            phi: phi.as_f64(),
        };
        if !theta.is_finite() || !phi.is_finite() || theta < T::zero() || theta > T::pi() {
            return Err(bad());
        }
        let tau = T::two_pi();
        let mut phi = phi % tau;
        if phi < T::zero() {
            phi += tau;
        }
        if phi >= tau {
            phi = T::zero();
        }
        Ok(Self { theta, phi })
    }

    pub fn north() -> Self {
        Self {
            theta: T::zero(),
            phi: T::zero(),
        }
    }

    pub fn south() -> Self {
        Self {
            theta: T::pi(),
            phi: T::zero(),
        }
    }

    /// Inverse of [`Self::cartesian`]; the input is normalised first.
    pub fn from_cartesian(v: [T; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let z = (v[2] / norm).max(-T::one()).min(T::one());
        let theta = z.acos();
        let mut phi = v[1].atan2(v[0]);
        if phi < T::zero() {
            phi += T::two_pi();
        }
        if phi >= T::two_pi() {
            phi = T::zero();
        }
        Self { theta, phi }
    }

    #[inline]
    pub fn theta(&self) -> T {
        self.theta
    }

    #[inline]
    pub fn phi(&self) -> T {
        self.phi
    }

    /// `(sin θ cos φ, sin θ sin φ, cos θ)`.
    #[inline]
    pub fn cartesian(&self) -> [T; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// `(cos θ/2, sin θ/2)`.
    #[inline]
    pub fn half_angles(&self) -> (T, T) {
        let (s, c) = (self.theta / T::lit(2.0)).sin_cos();
        (c, s)
    }
}

/// One Bloch point per lattice site (a single timeslice of the field).
#[derive(Debug, Clone, PartialEq)]
pub struct SphereConfig<T> {
    points: Vec<BlochPoint<T>>,
}

impl<T: Real> SphereConfig<T> {
    pub fn new(points: Vec<BlochPoint<T>>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[BlochPoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Representation matrix of `s_i` in the basis `|s, m⟩`, `m = s, s−1, …, −s`.
pub fn spin_rep_matrix<T: Real>(rep: SpinRep, comp: Component) -> OperatorMatrix<T> {
    let d = rep.dim();
    let s = rep.s::<T>();
    let half = T::lit(0.5);
    let m_of = |k: usize| s - T::from_count(k);
    let mut out = DMatrix::zeros(d, d);
    match comp {
        Component::Z => {
            for k in 0..d {
                out[(k, k)] = c_re(m_of(k));
            }
        }
        Component::X | Component::Y => {
            // s+ |m⟩ = sqrt(s(s+1) − m(m+1)) |m+1⟩ ; row k−1 holds m+1.
            for k in 1..d {
                let m = m_of(k);
                let amp = (s * (s + T::one()) - m * (m + T::one())).sqrt();
                match comp {
                    Component::X => {
                        out[(k - 1, k)] = c_re(half * amp);
                        out[(k, k - 1)] = c_re(half * amp);
                    }
                    _ => {
                        out[(k - 1, k)] = c(T::zero(), -half * amp);
                        out[(k, k - 1)] = c(T::zero(), half * amp);
                    }
                }
            }
        }
    }
    out
}

/// `exp(i G)` for Hermitian `G` via its eigendecomposition.
pub(crate) fn expi_hermitian<T: Real>(g: &OperatorMatrix<T>) -> OperatorMatrix<T> {
    let eig = g.clone().symmetric_eigen();
    let phases = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| cis(e)),
    );
    let u = &eig.eigenvectors;
    u * DMatrix::from_diagonal(&phases) * u.adjoint()
}

/// Single-site coherent state `exp(iθ(s_1 sin φ − s_2 cos φ)) |s, s⟩`.
pub fn site_coherent_state<T: Real>(point: &BlochPoint<T>, rep: SpinRep) -> StateVector<T> {
    let (sp, cp) = point.phi().sin_cos();
    let s1 = spin_rep_matrix::<T>(rep, Component::X);
    let s2 = spin_rep_matrix::<T>(rep, Component::Y);
    let g = (s1 * c_re(sp) - s2 * c_re(cp)) * c_re(point.theta());
    let u = expi_hermitian(&g);
    u.column(0).into_owned()
}

/// Tensor product over sites; site 0 is the most significant index.
pub fn coherent_state<T: Real>(omega: &SphereConfig<T>, rep: SpinRep) -> StateVector<T> {
    let mut state = DVector::from_element(1, c_re(T::one()));
    for p in omega.points() {
        state = state.kronecker(&site_coherent_state(p, rep));
    }
    state
}

/// Per-site factor `cos θ'/2 cos θ/2 + e^{−i(φ'−φ)} sin θ'/2 sin θ/2`.
#[inline]
pub fn site_overlap_factor<T: Real>(bra: &BlochPoint<T>, ket: &BlochPoint<T>) -> C<T> {
    let (cb, sb) = bra.half_angles();
    let (ck, sk) = ket.half_angles();
    c_re(cb * ck) + cis(ket.phi() - bra.phi()) * (sb * sk)
}

/// Closed-form `⟨Ω'|Ω⟩ = Π_x (site factor)^{2s}`.
pub fn overlap<T: Real>(
    bra: &SphereConfig<T>,
    ket: &SphereConfig<T>,
    rep: SpinRep,
) -> Result<C<T>> {
    if bra.len() != ket.len() {
        return Err(Error::DimensionMismatch {
            expected: bra.len(),
            got: ket.len(),
        });
    }
    Ok(bra
        .points()
        .iter()
        .zip(ket.points())
        .fold(c_re(T::one()), |acc, (b, k)| {
            acc * cpowi(site_overlap_factor(b, k), rep.two_s())
        }))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed in `f64`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 0 { 0.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = x;
        nodes[n - 1 - k] = -x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

/// A node on a single sphere, with its measure weight and cached data.
#[derive(Debug, Clone)]
pub struct SphereNode<T> {
    pub point: BlochPoint<T>,
    /// Includes the `(2s+1)/(4π)` factor.
    pub weight: T,
    pub cartesian: [T; 3],
    pub state: Vec<C<T>>,
}

/// Tensor-product grid: Gauss–Legendre in `cos θ` times a uniform trapezoid
/// in `φ`, repeated on every site.
#[derive(Debug, Clone)]
pub struct QuadratureGrid<T> {
    rep: SpinRep,
    sites: usize,
    n_theta: usize,
    n_phi: usize,
    nodes: Vec<SphereNode<T>>,
}

const CHUNK: usize = 2048;

impl<T: Real> QuadratureGrid<T> {
    pub fn rep(&self) -> SpinRep {
        self.rep
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    /// Nodes of one sphere; the full grid is their V-fold product.
    pub fn sphere_nodes(&self) -> &[SphereNode<T>] {
        &self.nodes
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes.len().pow(self.sites as u32)
    }

    pub fn hilbert_dim(&self) -> usize {
        self.rep.dim().pow(self.sites as u32)
    }

    /// Same rep and sites with both node counts doubled.
    pub fn doubled(&self) -> Result<Self> {
        build_grid(self.rep, self.sites, 2 * self.n_theta, 2 * self.n_phi)
    }

    /// Sum of weights over one sphere; `2s + 1` for a correct measure.
    pub fn sphere_weight_sum(&self) -> T {
        self.nodes.iter().fold(T::zero(), |acc, n| acc + n.weight)
    }
}

pub fn build_grid<T: Real>(
    rep: SpinRep,
    sites: usize,
    n_theta: usize,
    n_phi: usize,
) -> Result<QuadratureGrid<T>> {
    if n_theta < 2 || n_phi < 2 {
        return Err(Error::TooFewNodes { n_theta, n_phi });
    }
    if sites == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    let (xs, ws) = gauss_legendre(n_theta);
    // (2s+1)/(4π) · w_θ · 2π/n_φ
    let norm = (rep.two_s() as f64 + 1.0) / (4.0 * std::f64::consts::PI)
        * (2.0 * std::f64::consts::PI / n_phi as f64);
    let mut nodes = Vec::with_capacity(n_theta * n_phi);
    for (x, w) in xs.iter().zip(&ws) {
        let theta = T::lit(x.acos());
        for j in 0..n_phi {
            let phi = T::lit(2.0 * std::f64::consts::PI * j as f64 / n_phi as f64);
            let point = BlochPoint::new(theta, phi)?;
            nodes.push(SphereNode {
                point,
                weight: T::lit(w * norm),
                cartesian: point.cartesian(),
                state: site_coherent_state(&point, rep).iter().copied().collect(),
            });
        }
    }
    Ok(QuadratureGrid {
        rep,
        sites,
        n_theta,
        n_phi,
        nodes,
    })
}

/// `Σ_nodes w f_k(Ω) |Ω⟩⟨Ω|` for `count` integrands in one pass.
///
/// `f` receives the cartesian unit vector of every site and writes one value
/// per integrand into `out`. Work is split into fixed chunks whose partial
/// sums are combined in index order, so the result does not depend on the
/// thread count.
pub fn quad_operators<T, F>(grid: &QuadratureGrid<T>, count: usize, f: F) -> Vec<OperatorMatrix<T>>
where
    T: Real,
    F: Fn(&[[T; 3]], &mut [C<T>]) + Sync,
{
    let dim = grid.hilbert_dim();
    let total = grid.total_nodes();
    let chunks = total.div_ceil(CHUNK);
    let partials: Vec<Vec<C<T>>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            accumulate_chunk(
                grid,
                count,
                &f,
                chunk * CHUNK,
                ((chunk + 1) * CHUNK).min(total),
            )
        })
        .collect();
    let mut acc = vec![c_re(T::zero()); count * dim * dim];
    for part in partials {
        for (a, p) in acc.iter_mut().zip(part) {
            *a += p;
        }
    }
    acc.chunks(dim * dim)
        .map(|block| DMatrix::from_row_slice(dim, dim, block))
        .collect()
}

fn accumulate_chunk<T, F>(
    grid: &QuadratureGrid<T>,
    count: usize,
    f: &F,
    start: usize,
    end: usize,
) -> Vec<C<T>>
where
    T: Real,
    F: Fn(&[[T; 3]], &mut [C<T>]),
{
    let sites = grid.sites;
    let m = grid.nodes.len();
    let d = grid.rep.dim();
    let dim = grid.hilbert_dim();
    let mut acc = vec![c_re(T::zero()); count * dim * dim];
    let mut cart = vec![[T::zero(); 3]; sites];
    let mut vals = vec![c_re(T::zero()); count];
    let mut state = vec![c_re(T::zero()); dim];
    let mut digits = vec![0usize; sites];
    for idx in start..end {
        let mut rem = idx;
        for v in (0..sites).rev() {
            digits[v] = rem % m;
            rem /= m;
        }
        let mut weight = T::one();
        for v in 0..sites {
            let node = &grid.nodes[digits[v]];
            weight *= node.weight;
            cart[v] = node.cartesian;
        }
        // kron of single-site states, site 0 most significant
        for (a, amp) in state.iter_mut().enumerate() {
            let mut rem = a;
            let mut z = c_re(T::one());
            for v in (0..sites).rev() {
                z *= grid.nodes[digits[v]].state[rem % d];
                rem /= d;
            }
            *amp = z;
        }
        f(&cart, &mut vals);
        for (k, val) in vals.iter().enumerate() {
            let wf = *val * weight;
            if wf == c_re(T::zero()) {
                continue;
            }
            let block = &mut acc[k * dim * dim..(k + 1) * dim * dim];
            for a in 0..dim {
                let wa = wf * state[a];
                for b in 0..dim {
                    block[a * dim + b] += wa * state[b].conj();
                }
            }
        }
    }
    acc
}

/// `Σ_nodes w f(Ω) |Ω⟩⟨Ω|` for a single integrand.
pub fn quad_operator<T, F>(grid: &QuadratureGrid<T>, f: F) -> OperatorMatrix<T>
where
    T: Real,
    F: Fn(&[[T; 3]]) -> C<T> + Sync,
{
    quad_operators(grid, 1, |omega, out| out[0] = f(omega))
        .pop()
        .expect("one integrand")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, kron, max_abs_diff};
    use crate::scalar::cabs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_config(rng: &mut ChaCha8Rng, sites: usize) -> SphereConfig<f64> {
        SphereConfig::new(
            (0..sites)
                .map(|_| {
                    let z: f64 = rng.random_range(-1.0..1.0);
                    BlochPoint::new(z.acos(), rng.random_range(0.0..std::f64::consts::TAU)).unwrap()
                })
                .collect(),
        )
    }

    #[test]
    fn bloch_point_validates_and_wraps() {
        assert!(BlochPoint::new(-0.1, 0.0).is_err());
        assert!(BlochPoint::new(3.2, 0.0).is_err());
        assert!(BlochPoint::new(f64::NAN, 0.0).is_err());
        let p = BlochPoint::new(1.0, -0.5).unwrap();
        assert!((p.phi() - (std::f64::consts::TAU - 0.5)).abs() < 1e-15);
        let v = p.cartesian();
        assert!(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - 1.0).abs() < 1e-14);
        let back = BlochPoint::from_cartesian(v);
        assert!((back.theta() - p.theta()).abs() < 1e-12);
        assert!((back.phi() - p.phi()).abs() < 1e-12);
    }

    #[test]
    fn north_pole_state_is_highest_weight() {
        let psi = site_coherent_state(&BlochPoint::<f64>::new(0.0, 1.3).unwrap(), SpinRep::half());
        assert_eq!(psi[0], c_re(1.0));
        assert_eq!(psi[1], c_re(0.0));
    }

    #[test]
    fn south_pole_state_is_lowest_weight() {
        let psi = site_coherent_state(&BlochPoint::<f64>::south(), SpinRep::half());
        assert!(cabs(psi[0]) < 1e-15);
        assert!((cabs(psi[1]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spin_half_state_matches_half_angle_form() {
        let p = BlochPoint::new(0.9, 2.2).unwrap();
        let psi = site_coherent_state(&p, SpinRep::half());
        let (ch, sh) = p.half_angles();
        assert!(cabs(psi[0] - c_re(ch)) < 1e-14);
        assert!(cabs(psi[1] - cis(p.phi()) * sh) < 1e-14);
    }

    #[test]
    fn overlap_closed_form_matches_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for two_s in 1..=3 {
            let rep = SpinRep::new(two_s).unwrap();
            for _ in 0..200 {
                let a = random_config(&mut rng, 2);
                let b = random_config(&mut rng, 2);
                let va = coherent_state(&a, rep);
                let vb = coherent_state(&b, rep);
                assert!((va.norm() - 1.0).abs() < 1e-12);
                let direct = va.dotc(&vb);
                let closed = overlap(&a, &b, rep).unwrap();
                assert!(cabs(direct - closed) < 1e-12, "2s = {two_s}");
            }
        }
    }

    #[test]
    fn overlap_identities() {
        let rep = SpinRep::new(3).unwrap();
        let p = SphereConfig::new(vec![BlochPoint::new(0.4, 5.0).unwrap()]);
        assert_eq!(overlap(&p, &p, rep).unwrap(), c_re(1.0));
        let n = SphereConfig::new(vec![BlochPoint::<f64>::north()]);
        let s = SphereConfig::new(vec![BlochPoint::<f64>::south()]);
        assert!(cabs(overlap(&n, &s, rep).unwrap()) < 1e-15);
        assert!(overlap(&n, &SphereConfig::new(vec![]), rep).is_err());
    }

    #[test]
    fn spin_rep_matrices_satisfy_su2() {
        for two_s in 1..=4 {
            let rep = SpinRep::new(two_s).unwrap();
            let [x, y, z] = Component::ALL.map(|c| spin_rep_matrix::<f64>(rep, c));
            let comm = &x * &y - &y * &x;
            assert!(max_abs_diff(&comm, &(z.clone() * c(0.0, 1.0))) < 1e-14);
            let s = rep.s::<f64>();
            let casimir = &x * &x + &y * &y + &z * &z;
            assert!(
                max_abs_diff(
                    &casimir,
                    &(identity::<f64>(rep.dim()) * c_re(s * (s + 1.0)))
                ) < 1e-13
            );
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        for deg in 0..12 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 / (deg as f64 + 1.0)
            };
            assert!((q - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn grid_rejects_too_few_nodes() {
        assert!(matches!(
            build_grid::<f64>(SpinRep::half(), 1, 1, 8),
            Err(Error::TooFewNodes { .. })
        ));
        assert!(build_grid::<f64>(SpinRep::half(), 1, 4, 1).is_err());
    }

    #[test]
    fn grid_weights_sum_to_rep_dimension() {
        for (two_s, nt, np) in [(1, 2, 2), (1, 7, 13), (2, 5, 9), (3, 12, 24)] {
            let g = build_grid::<f64>(SpinRep::new(two_s).unwrap(), 1, nt, np).unwrap();
            assert!((g.sphere_weight_sum() - (two_s as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn resolution_of_identity_spin_half() {
        let g = build_grid::<f64>(SpinRep::half(), 1, 8, 16).unwrap();
        let id = quad_operator(&g, |_| c_re(1.0));
        assert!(max_abs_diff(&id, &identity(2)) < 1e-10);
    }

    #[test]
    fn spin_symbol_reproduces_spin_matrices() {
        for two_s in [1u32, 2] {
            let rep = SpinRep::new(two_s).unwrap();
            let sp1 = rep.s_plus_one::<f64>();
            let g = build_grid::<f64>(rep, 2, 6, 12).unwrap();
            let mats = quad_operators(&g, 7, |om, out| {
                out[0] = c_re(1.0);
                for x in 0..2 {
                    for i in 0..3 {
                        out[1 + 3 * x + i] = c_re(sp1 * om[x][i]);
                    }
                }
            });
            let id = identity::<f64>(rep.dim());
            assert!(max_abs_diff(&mats[0], &identity(rep.dim() * rep.dim())) < 1e-10);
            for (i, comp) in Component::ALL.into_iter().enumerate() {
                let s = spin_rep_matrix::<f64>(rep, comp);
                assert!(max_abs_diff(&mats[1 + i], &kron(&s, &id)) < 1e-10);
                assert!(max_abs_diff(&mats[4 + i], &kron(&id, &s)) < 1e-10);
            }
        }
    }

    /// Smallest exact grid: `n_theta >= s + 1` Legendre nodes and
    /// `n_phi >= 2s + 2` azimuthal nodes (single-site integrands are
    /// polynomials of degree `2s + 1` in the Cartesian components).
    #[test]
    fn single_site_exactness_threshold() {
        for (two_s, nt, np) in [(1u32, 2, 3), (2, 2, 4), (3, 3, 5)] {
            let rep = SpinRep::new(two_s).unwrap();
            let sp1 = rep.s_plus_one::<f64>();
            let err = |nt, np| {
                let g = build_grid::<f64>(rep, 1, nt, np).unwrap();
                let mut e = max_abs_diff(&quad_operator(&g, |_| c_re(1.0)), &identity(rep.dim()));
                for comp in Component::ALL {
                    let m = quad_operator(&g, |om| c_re(sp1 * om[0][comp.index()]));
                    e = e.max(max_abs_diff(&m, &spin_rep_matrix(rep, comp)));
                }
                e
            };
            assert!(err(nt, np) < 1e-12, "2s={two_s}");
            assert!(err(nt, np - 1) > 1e-6, "2s={two_s} below n_phi threshold");
        }
    }

    #[test]
    fn quadrature_is_thread_count_independent() {
        let g = build_grid::<f64>(SpinRep::half(), 2, 6, 10).unwrap();
        let f = |om: &[[f64; 3]]| cis(0.3 * om[0][0] * om[1][2]);
        let a = quad_operator(&g, f);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| quad_operator(&g, f));
        assert_eq!(a, b);
    }

    #[test]
    fn f32_grid_reproduces_identity() {
        let g = build_grid::<f32>(SpinRep::half(), 1, 4, 8).unwrap();
        let id = quad_operator(&g, |_| c_re(1.0f32));
        assert!(max_abs_diff(&id, &identity(2)) < 1e-5);
    }
}
