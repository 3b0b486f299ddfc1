//! Phase-reweighted Metropolis sampling of the Schwinger–Keldysh action over
//! sphere-valued paths.
//!
//! Slices are chained in path order `Ω⁺_0 … Ω⁺_{N₊−1}, Ω⁻_0 …, Ω^E_0 …` and the
//! weight is `e^{iΔt Σh(Ω⁺) − iΔt Σh(Ω⁻) − Δτ Σh(Ω^E)} ∏_k ⟨Ω_k|Ω_{k+1}⟩`
//! around the closed chain. Configurations are drawn from `|weight|`; the phase
//! is carried into the estimator.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::coherent::{site_overlap_factor, BlochPoint, QuadratureGrid};
use crate::contour::{ContourParams, Leg, Ordering, Slot};
use crate::error::{Error, Result};
use crate::lattice::{Component, HamiltonianSpec, SpinRep};
use crate::scalar::{c, cabs, carg, cis, Real, C};

/// Site overlap factors below this modulus count as orthogonal.
const ZERO_OVERLAP: f64 = 64.0 * f64::EPSILON;

/// One Bloch point per (leg, slice, site).
#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig<T> {
    slices: [usize; 3],
    sites: usize,
    points: Vec<BlochPoint<T>>,
}

impl<T: Real> PathConfig<T> {
    /// Every point set to `point`.
    pub fn uniform(contour: &ContourParams<T>, sites: usize, point: BlochPoint<T>) -> Self {
        let slices = Leg::ALL.map(|leg| contour.slices(leg));
        let total = slices.iter().sum::<usize>() * sites;
        Self {
            slices,
            sites,
            points: vec![point; total],
        }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn slices(&self, leg: Leg) -> usize {
        self.slices[leg.index()]
    }

    /// Number of slices along the closed chain.
    pub fn chain_len(&self) -> usize {
        self.slices.iter().sum()
    }

    /// Position of `(leg, slice)` along the chain.
    pub fn chain_index(&self, leg: Leg, slice: usize) -> usize {
        self.slices[..leg.index()].iter().sum::<usize>() + slice
    }

    fn leg_of(&self, k: usize) -> Leg {
        if k < self.slices[0] {
            Leg::Forward
        } else if k < self.slices[0] + self.slices[1] {
            Leg::Backward
        } else {
            Leg::Euclidean
        }
    }

    fn check(&self, leg: Leg, slice: usize, site: usize) -> Result<usize> {
        if slice >= self.slices(leg) {
            return Err(Error::SlotOutOfRange {
                slot: slice,
                len: self.slices(leg),
            });
        }
        if site >= self.sites {
            return Err(Error::DimensionMismatch {
                expected: self.sites,
                got: site + 1,
            });
        }
        Ok(self.chain_index(leg, slice) * self.sites + site)
    }

    pub fn get(&self, leg: Leg, slice: usize, site: usize) -> Result<BlochPoint<T>> {
        Ok(self.points[self.check(leg, slice, site)?])
    }

    pub fn set(&mut self, leg: Leg, slice: usize, site: usize, point: BlochPoint<T>) -> Result<()> {
        let k = self.check(leg, slice, site)?;
        self.points[k] = point;
        Ok(())
    }

    /// Points of chain slice `k`, one per site.
    pub fn slice_points(&self, k: usize) -> &[BlochPoint<T>] {
        &self.points[k * self.sites..(k + 1) * self.sites]
    }

    fn matches(&self, contour: &ContourParams<T>, sites: usize) -> Result<()> {
        let want = Leg::ALL.map(|leg| contour.slices(leg));
        if want != self.slices || sites != self.sites {
            return Err(Error::DimensionMismatch {
                expected: want.iter().sum::<usize>() * sites,
                got: self.points.len(),
            });
        }
        Ok(())
    }
}

/// `log|w|` and `arg w` of a path weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionValue<T> {
    pub log_magnitude: T,
    /// Principal value in `(−π, π]`.
    pub phase: T,
}

fn wrap_phase<T: Real>(phase: T) -> T {
    carg(cis(phase))
}

fn leg_coefficient<T: Real>(contour: &ContourParams<T>, leg: Leg) -> C<T> {
    match leg {
        Leg::Forward => c(T::zero(), contour.dt()),
        Leg::Backward => c(T::zero(), -contour.dt_backward()),
        Leg::Euclidean => c(-contour.dtau(), T::zero()),
    }
}

fn slice_h<T: Real>(spec: &HamiltonianSpec<T>, points: &[BlochPoint<T>]) -> T {
    let cart: Vec<[T; 3]> = points.iter().map(|p| p.cartesian()).collect();
    spec.h_cartesian(&cart)
}

/// Sum of `log|w|` and `arg w`, with `−∞` magnitude when a link is orthogonal.
/// Also returns the first orthogonal link, if any.
fn action_parts<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    path: &PathConfig<T>,
) -> Result<(T, T, Option<usize>)> {
    spec.validate()?;
    path.matches(contour, spec.sites())?;
    let two_s = T::from_count(spec.rep.two_s() as usize);
    let len = path.chain_len();
    let (mut log_mag, mut phase) = (T::zero(), T::zero());
    let mut zero = None;
    for k in 0..len {
        let coef = leg_coefficient(contour, path.leg_of(k));
        let h = slice_h(spec, path.slice_points(k));
        log_mag += coef.re * h;
        phase += coef.im * h;
        let next = path.slice_points((k + 1) % len);
        for (bra, ket) in path.slice_points(k).iter().zip(next) {
            let f = site_overlap_factor(bra, ket);
            let m = cabs(f);
            if m < T::lit(ZERO_OVERLAP) {
                zero.get_or_insert(k);
            }
            log_mag += two_s * m.ln();
            phase += two_s * carg(f);
        }
    }
    Ok((log_mag, phase, zero))
}

/// Log-magnitude and phase of the path weight with all sources off.
pub fn sk_action<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    path: &PathConfig<T>,
) -> Result<ActionValue<T>> {
    let (log_magnitude, phase, zero) = action_parts(spec, contour, path)?;
    if let Some(link) = zero {
        return Err(Error::ZeroOverlap { link });
    }
    Ok(ActionValue {
        log_magnitude,
        phase: wrap_phase(phase),
    })
}

/// `Σ_paths ∏ weights · e^{S_SK}` over every assignment of grid nodes to every
/// sphere of the path. Exponential in the path size; only for tiny contours.
pub fn brute_force_trace<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    grid: &QuadratureGrid<T>,
) -> Result<C<T>> {
    let sites = spec.sites();
    if grid.sites() != sites || grid.rep() != spec.rep {
        return Err(Error::DimensionMismatch {
            expected: sites,
            got: grid.sites(),
        });
    }
    let nodes = grid.sphere_nodes();
    let mut path = PathConfig::uniform(contour, sites, BlochPoint::north());
    let spheres = path.points.len();
    let total = (nodes.len() as f64).powi(spheres as i32);
    if total > 1e9 {
        return Err(Error::BadSamplerParams(format!(
            "{total:e} grid paths is too many to enumerate"
        )));
    }
    let mut idx = vec![0usize; spheres];
    let mut sum = c(T::zero(), T::zero());
    loop {
        let mut weight = T::one();
        for (p, &k) in path.points.iter_mut().zip(&idx) {
            *p = nodes[k].point;
            weight *= nodes[k].weight;
        }
        let (log_mag, phase, _) = action_parts(spec, contour, &path)?;
        sum += cis(phase) * (weight * log_mag.exp());
        let mut d = 0;
        while d < spheres {
            idx[d] += 1;
            if idx[d] < nodes.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == spheres {
            return Ok(sum);
        }
    }
}

/// Product of rescaled spin components `(s+1) Ω_{x,i}` at given path slots.
#[derive(Debug, Clone, PartialEq)]
pub struct McObservable<T> {
    pub scale: T,
    pub factors: Vec<(Slot, usize, Component)>,
}

impl<T: Real> McObservable<T> {
    /// `(s+1) Ω_{site, comp}` at `slot`.
    pub fn spin(rep: SpinRep, slot: Slot, site: usize, comp: Component) -> Self {
        Self {
            scale: rep.s_plus_one(),
            factors: vec![(slot, site, comp)],
        }
    }

    /// The estimator of `lattice_correlator` for the same arguments.
    #[allow(clippy::too_many_arguments)]
    pub fn two_point(
        contour: &ContourParams<T>,
        rep: SpinRep,
        ordering: Ordering,
        t_hat: usize,
        t_hat_prime: usize,
        x: usize,
        i: Component,
        xp: usize,
        ip: Component,
    ) -> Result<Self> {
        let (a, b) = contour.correlator_slots(ordering, t_hat, t_hat_prime)?;
        let s1 = rep.s_plus_one::<T>();
        Ok(Self {
            scale: s1 * s1,
            factors: vec![(a, x, i), (b, xp, ip)],
        })
    }

    pub fn value(&self, path: &PathConfig<T>) -> Result<T> {
        self.factors
            .iter()
            .try_fold(self.scale, |acc, &(slot, site, comp)| {
                Ok(acc * path.get(slot.leg, slot.index, site)?.cartesian()[comp.index()])
            })
    }
}

/// Uniform draw from the geodesic cap of angular `radius` around `center`,
/// from two uniforms in `[0, 1)`. The density is symmetric in
/// `(center, result)`.
pub fn propose_in_cap<T: Real>(center: [T; 3], radius: T, u1: f64, u2: f64) -> [T; 3] {
    let cos_r = if radius >= T::pi() {
        -T::one()
    } else {
        radius.cos()
    };
    let cos_a = T::one() - T::lit(u1) * (T::one() - cos_r);
    let sin_a = (T::one() - cos_a * cos_a).max(T::zero()).sqrt();
    let psi = T::two_pi() * T::lit(u2);
    let [nx, ny, nz] = center;
    let helper = if nz.abs() < T::lit(0.9) {
        [T::zero(), T::zero(), T::one()]
    } else {
        [T::one(), T::zero(), T::zero()]
    };
    let cross = |a: [T; 3], b: [T; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let e1 = cross(helper, center);
    let norm = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    let e1 = e1.map(|v| v / norm);
    let e2 = cross(center, e1);
    let (cp, sp) = (psi.cos(), psi.sin());
    [
        cos_a * nx + sin_a * (cp * e1[0] + sp * e2[0]),
        cos_a * ny + sin_a * (cp * e1[1] + sp * e2[1]),
        cos_a * nz + sin_a * (cp * e1[2] + sp * e2[2]),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McParams<T> {
    /// Angular radius of the proposal cap, in radians.
    pub proposal_width: T,
    /// Measured sweeps per chain.
    pub n_samples: usize,
    /// Discarded sweeps per chain.
    pub n_therm: usize,
    pub seed: u64,
    pub chains: usize,
}

impl<T: Real> McParams<T> {
    fn validate(&self) -> Result<()> {
        if !(self.proposal_width > T::zero()) {
            return Err(Error::BadSamplerParams(
                "proposal width must be positive".into(),
            ));
        }
        if self.n_samples == 0 || self.chains == 0 {
            return Err(Error::BadSamplerParams(
                "need at least one chain and one sample".into(),
            ));
        }
        Ok(())
    }
}

/// Reweighted estimate `⟨O e^{iφ}⟩ / ⟨e^{iφ}⟩` under `|weight|`.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate<T> {
    pub mean: C<T>,
    /// Component-wise standard errors.
    pub stderr: C<T>,
    pub avg_sign: C<T>,
    pub sign_stderr: C<T>,
    /// Measurements summed over chains.
    pub n_samples: usize,
    pub n_therm: usize,
    pub seed: u64,
    pub chains: usize,
    pub bin_size: usize,
    pub acceptance: T,
    /// `|avg_sign| < 3·stderr(avg_sign)`: the estimate is unreliable.
    pub sign_collapsed: bool,
}

#[derive(Debug, Clone)]
pub struct McRun<T> {
    pub estimates: Vec<McEstimate<T>>,
    /// Last configuration of each chain.
    pub final_paths: Vec<PathConfig<T>>,
}

/// `(cos θ/2, e^{iφ} sin θ/2)` from a unit vector, without trigonometry.
fn spinor<T: Real>(v: [T; 3]) -> (T, C<T>) {
    let half = T::lit(0.5);
    let up = (half * (T::one() + v[2])).max(T::zero()).sqrt();
    let down = (half * (T::one() - v[2])).max(T::zero()).sqrt();
    let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if r > T::zero() {
        (up, c(v[0], v[1]) * (down / r))
    } else {
        (up, c(down, T::zero()))
    }
}

/// Site overlap factor `⟨bra|ket⟩` in spinor form.
fn spinor_overlap<T: Real>(bra: (T, C<T>), ket: (T, C<T>)) -> C<T> {
    ket.1 * bra.1.conj() + c(bra.0 * ket.0, T::zero())
}

struct ChainOutput<T> {
    /// Row-major, `stride` columns per measurement: `e^{iφ}`, then
    /// `O_k e^{iφ}` for each observable.
    series: Vec<C<T>>,
    stride: usize,
    accepted: usize,
    proposed: usize,
    path: PathConfig<T>,
}

impl<T: Real> ChainOutput<T> {
    fn rows(&self) -> usize {
        self.series.len() / self.stride
    }
}

struct Chain<'a, T: Real> {
    spec: &'a HamiltonianSpec<T>,
    shape: PathConfig<T>,
    cart: Vec<[T; 3]>,
    spinors: Vec<(T, C<T>)>,
    coef: Vec<C<T>>,
    h: Vec<T>,
    /// Site overlap factor of link `k` (slice `k` to `k+1`) at each site, and
    /// its log-modulus.
    links: Vec<C<T>>,
    log_links: Vec<T>,
    two_s: T,
}

impl<'a, T: Real> Chain<'a, T> {
    fn new(spec: &'a HamiltonianSpec<T>, contour: &ContourParams<T>) -> Self {
        let sites = spec.sites();
        let shape = PathConfig::uniform(contour, sites, BlochPoint::north());
        let len = shape.chain_len();
        let cart = shape
            .points
            .iter()
            .map(|p| p.cartesian())
            .collect::<Vec<_>>();
        let coef = (0..len)
            .map(|k| leg_coefficient(contour, shape.leg_of(k)))
            .collect();
        let h = (0..len)
            .map(|k| spec.h_cartesian(&cart[k * sites..(k + 1) * sites]))
            .collect();
        Self {
            spec,
            shape,
            spinors: cart.iter().map(|&v| spinor(v)).collect(),
            cart,
            coef,
            h,
            links: vec![c(T::one(), T::zero()); len * sites],
            log_links: vec![T::zero(); len * sites],
            two_s: T::from_count(spec.rep.two_s() as usize),
        }
    }

    fn sweep(&mut self, rng: &mut ChaCha8Rng, width: T) -> usize {
        let sites = self.shape.sites;
        let len = self.shape.chain_len();
        let mut accepted = 0;
        let mut slice = vec![[T::zero(); 3]; sites];
        for k in 0..len {
            let prev = (k + len - 1) % len;
            let next = (k + 1) % len;
            slice.copy_from_slice(&self.cart[k * sites..(k + 1) * sites]);
            for x in 0..sites {
                let new_cart =
                    propose_in_cap(self.cart[k * sites + x], width, rng.random(), rng.random());
                let new_spinor = spinor(new_cart);
                slice[x] = new_cart;
                let h_new = self.spec.h_cartesian(&slice);
                let bra = if prev == k {
                    new_spinor
                } else {
                    self.spinors[prev * sites + x]
                };
                let ket = if next == k {
                    new_spinor
                } else {
                    self.spinors[next * sites + x]
                };
                let f_in = spinor_overlap(bra, new_spinor);
                let f_out = spinor_overlap(new_spinor, ket);
                let (m_in, m_out) = (cabs(f_in), cabs(f_out));
                let u: f64 = rng.random();
                if m_in < T::lit(ZERO_OVERLAP) || m_out < T::lit(ZERO_OVERLAP) {
                    slice[x] = self.cart[k * sites + x];
                    continue;
                }
                let (l_in, l_out) = (m_in.ln(), m_out.ln());
                let old = self.log_links[prev * sites + x] + self.log_links[k * sites + x];
                let delta =
                    self.coef[k].re * (h_new - self.h[k]) + self.two_s * (l_in + l_out - old);
                if delta >= T::zero() || T::lit(u).ln() < delta {
                    self.cart[k * sites + x] = new_cart;
                    self.spinors[k * sites + x] = new_spinor;
                    self.h[k] = h_new;
                    self.links[prev * sites + x] = f_in;
                    self.links[k * sites + x] = f_out;
                    self.log_links[prev * sites + x] = l_in;
                    self.log_links[k * sites + x] = l_out;
                    accepted += 1;
                } else {
                    slice[x] = self.cart[k * sites + x];
                }
            }
        }
        accepted
    }

    fn phase(&self) -> T {
        let h_part = self
            .coef
            .iter()
            .zip(&self.h)
            .fold(T::zero(), |a, (k, &h)| a + k.im * h);
        let berry = self.links.iter().fold(T::zero(), |a, &f| a + carg(f));
        h_part + self.two_s * berry
    }

    fn into_path(self) -> PathConfig<T> {
        let mut path = self.shape;
        for (p, v) in path.points.iter_mut().zip(&self.cart) {
            *p = BlochPoint::from_cartesian(*v);
        }
        path
    }
}

/// Observable factors resolved to flat `(sphere, component)` indices.
fn resolve<T: Real>(o: &McObservable<T>, shape: &PathConfig<T>) -> Result<Vec<(usize, usize)>> {
    o.factors
        .iter()
        .map(|&(slot, site, comp)| Ok((shape.check(slot.leg, slot.index, site)?, comp.index())))
        .collect()
}

fn run_chain<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    params: &McParams<T>,
    observables: &[McObservable<T>],
    chain_index: usize,
) -> Result<ChainOutput<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(chain_index as u64);
    let mut chain = Chain::new(spec, contour);
    let resolved = observables
        .iter()
        .map(|o| resolve(o, &chain.shape))
        .collect::<Result<Vec<_>>>()?;
    let per_sweep = chain.shape.points.len();
    for _ in 0..params.n_therm {
        chain.sweep(&mut rng, params.proposal_width);
    }
    let stride = observables.len() + 1;
    let mut accepted = 0;
    let mut series = Vec::with_capacity(params.n_samples * stride);
    for _ in 0..params.n_samples {
        accepted += chain.sweep(&mut rng, params.proposal_width);
        let sign = cis(chain.phase());
        series.push(sign);
        for (o, idx) in observables.iter().zip(&resolved) {
            let v = idx
                .iter()
                .fold(o.scale, |acc, &(k, i)| acc * chain.cart[k][i]);
            series.push(sign * v);
        }
    }
    Ok(ChainOutput {
        series,
        stride,
        accepted,
        proposed: per_sweep * params.n_samples,
        path: chain.into_path(),
    })
}

/// Bin means of column `col`, bins of `size` consecutive measurements taken
/// within each chain (a chain's remainder is dropped).
fn bins<T: Real>(chains: &[ChainOutput<T>], col: usize, size: usize) -> Vec<C<T>> {
    let mut out = Vec::new();
    for ch in chains {
        for block in ch.series.chunks_exact(size * ch.stride) {
            let s = block
                .iter()
                .skip(col)
                .step_by(ch.stride)
                .fold(c(T::zero(), T::zero()), |a, &v| a + v);
            out.push(s / T::from_count(size));
        }
    }
    out
}

/// Jackknife mean and component-wise error of `Σnum / Σden` over bins.
fn jackknife_ratio<T: Real>(num: &[C<T>], den: Option<&[C<T>]>) -> (C<T>, C<T>) {
    let n = num.len();
    let sum = |v: &[C<T>]| v.iter().fold(c(T::zero(), T::zero()), |a, &b| a + b);
    let sn = sum(num);
    let sd = den.map(sum);
    let full = match sd {
        Some(d) => sn / d,
        None => sn / T::from_count(n),
    };
    let nm1 = T::from_count(n - 1);
    let loo: Vec<C<T>> = (0..n)
        .map(|k| match (den, sd) {
            (Some(d), Some(sdv)) => (sn - num[k]) / (sdv - d[k]),
            _ => (sn - num[k]) / nm1,
        })
        .collect();
    let mean_loo = sum(&loo) / T::from_count(n);
    let (mut vr, mut vi) = (T::zero(), T::zero());
    for v in &loo {
        vr += (v.re - mean_loo.re) * (v.re - mean_loo.re);
        vi += (v.im - mean_loo.im) * (v.im - mean_loo.im);
    }
    let f = nm1 / T::from_count(n);
    (full, c((f * vr).sqrt(), (f * vi).sqrt()))
}

const MIN_BINS: usize = 32;

/// Bin size doubled until the error of the estimate changes by under 5%, or
/// fewer than `MIN_BINS` bins would remain.
fn binned_estimate<T: Real>(chains: &[ChainOutput<T>], col: Option<usize>) -> (C<T>, C<T>, usize) {
    let total: usize = chains.iter().map(|c| c.rows()).sum();
    let eval = |size: usize| {
        let den = bins(chains, 0, size);
        match col {
            Some(k) => jackknife_ratio(&bins(chains, k, size), Some(&den)),
            None => jackknife_ratio(&den, None),
        }
    };
    let mut size = 1;
    let mut best = eval(size);
    if total < 2 {
        return (best.0, best.1, size);
    }
    while total / (2 * size) >= MIN_BINS {
        let next = eval(2 * size);
        let (a, b) = (cabs(best.1), cabs(next.1));
        size *= 2;
        let settled = (b - a).abs() <= T::lit(0.05) * a;
        best = next;
        if settled {
            break;
        }
    }
    (best.0, best.1, size)
}

/// Runs `params.chains` independent chains in parallel and combines them in
/// chain order. Chain `k` uses the ChaCha8 stream `k` of `params.seed`.
pub fn metropolis_run<T: Real>(
    spec: &HamiltonianSpec<T>,
    contour: &ContourParams<T>,
    params: &McParams<T>,
    observables: &[McObservable<T>],
) -> Result<McRun<T>> {
    params.validate()?;
    spec.validate()?;
    let probe = PathConfig::uniform(contour, spec.sites(), BlochPoint::north());
    for o in observables {
        o.value(&probe)?;
    }
    let chains = (0..params.chains)
        .into_par_iter()
        .map(|k| run_chain(spec, contour, params, observables, k))
        .collect::<Result<Vec<_>>>()?;
    let accepted: usize = chains.iter().map(|c| c.accepted).sum();
    let proposed: usize = chains.iter().map(|c| c.proposed).sum();
    let acceptance = T::from_count(accepted) / T::from_count(proposed.max(1));
    let (avg_sign, sign_stderr, _) = binned_estimate(&chains, None);
    let sign_collapsed = cabs(avg_sign) < T::lit(3.0) * cabs(sign_stderr);
    let estimates = (0..observables.len())
        .map(|k| {
            let (mean, stderr, bin_size) = binned_estimate(&chains, Some(k + 1));
            McEstimate {
                mean,
                stderr,
                avg_sign,
                sign_stderr,
                n_samples: params.n_samples * params.chains,
                n_therm: params.n_therm,
                seed: params.seed,
                chains: params.chains,
                bin_size,
                acceptance,
                sign_collapsed,
            }
        })
        .collect();
    Ok(McRun {
        estimates,
        final_paths: chains.into_iter().map(|c| c.path).collect(),
    })
}

/// SHA-256 of the canonical text of a Hamiltonian spec.
pub fn spec_hash<T: Real>(spec: &HamiltonianSpec<T>) -> [u8; 32] {
    Sha256::digest(spec.canonical_text().as_bytes()).into()
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"SKSNAP1\0";

/// Fixed-size header preceding the snapshot records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub spec_hash: [u8; 32],
    pub beta: f64,
    pub t_max: f64,
    pub n_forward: u32,
    pub n_backward: u32,
    pub n_euclid: u32,
    pub sites: u32,
    pub two_s: u32,
    pub seed: u64,
}

impl SnapshotHeader {
    pub fn new<T: Real>(spec: &HamiltonianSpec<T>, contour: &ContourParams<T>, seed: u64) -> Self {
        Self {
            spec_hash: spec_hash(spec),
            beta: contour.beta.as_f64(),
            t_max: contour.t_max.as_f64(),
            n_forward: contour.slices(Leg::Forward) as u32,
            n_backward: contour.slices(Leg::Backward) as u32,
            n_euclid: contour.slices(Leg::Euclidean) as u32,
            sites: spec.sites() as u32,
            two_s: spec.rep.two_s(),
            seed,
        }
    }

    fn records_per_path(&self) -> u64 {
        (self.n_forward as u64 + self.n_backward as u64 + self.n_euclid as u64) * self.sites as u64
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Snapshot(e.to_string())
}

/// Writes the header, a path count, then one `(leg, slice, site, θ, φ)` record
/// per sphere, little-endian.
pub fn write_snapshot<W: Write, T: Real>(
    mut w: W,
    header: &SnapshotHeader,
    paths: &[PathConfig<T>],
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&header.spec_hash);
    buf.extend_from_slice(&header.beta.to_le_bytes());
    buf.extend_from_slice(&header.t_max.to_le_bytes());
    for v in [
        header.n_forward,
        header.n_backward,
        header.n_euclid,
        header.sites,
        header.two_s,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&header.seed.to_le_bytes());
    buf.extend_from_slice(&(paths.len() as u64).to_le_bytes());
    for path in paths {
        if path.points.len() as u64 != header.records_per_path() {
            return Err(Error::Snapshot("path shape does not match header".into()));
        }
        for leg in Leg::ALL {
            for slice in 0..path.slices(leg) {
                for site in 0..path.sites {
                    let p = path.get(leg, slice, site)?;
                    buf.push(leg.index() as u8);
                    buf.extend_from_slice(&(slice as u32).to_le_bytes());
                    buf.extend_from_slice(&(site as u32).to_le_bytes());
                    buf.extend_from_slice(&p.theta().as_f64().to_le_bytes());
                    buf.extend_from_slice(&p.phi().as_f64().to_le_bytes());
                }
            }
        }
    }
    w.write_all(&buf).map_err(io_err)
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.0.len() < N {
            return Err(Error::Snapshot("truncated snapshot".into()));
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(SnapshotHeader, Vec<PathConfig<f64>>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io_err)?;
    let mut cur = Cursor(&bytes);
    if &cur.take::<8>()? != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let header = SnapshotHeader {
        spec_hash: cur.take()?,
        beta: cur.f64()?,
        t_max: cur.f64()?,
        n_forward: cur.u32()?,
        n_backward: cur.u32()?,
        n_euclid: cur.u32()?,
        sites: cur.u32()?,
        two_s: cur.u32()?,
        seed: cur.u64()?,
    };
    let count = cur.u64()?;
    let slices = [header.n_forward, header.n_backward, header.n_euclid].map(|n| n as usize);
    let per_path = header.records_per_path() as usize;
    let mut paths = Vec::new();
    for _ in 0..count {
        let mut path = PathConfig {
            slices,
            sites: header.sites as usize,
            points: vec![BlochPoint::north(); per_path],
        };
        for _ in 0..per_path {
            let leg = *Leg::ALL
                .get(cur.take::<1>()?[0] as usize)
                .ok_or_else(|| Error::Snapshot("bad leg tag".into()))?;
            let slice = cur.u32()? as usize;
            let site = cur.u32()? as usize;
            let point = BlochPoint::new(cur.f64()?, cur.f64()?)?;
            path.set(leg, slice, site, point)
                .map_err(|e| Error::Snapshot(e.to_string()))?;
        }
        paths.push(path);
    }
    if !cur.0.is_empty() {
        return Err(Error::Snapshot("trailing bytes".into()));
    }
    Ok((header, paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::build_grid;
    use crate::evaluator::{
        build_operators, build_propagators, lattice_correlator, partition_trace,
    };
    use crate::lattice::LatticeSpec;

    fn free(sites: usize) -> HamiltonianSpec<f64> {
        HamiltonianSpec::free(LatticeSpec::chain(sites, false).unwrap(), SpinRep::half())
    }

    #[test]
    fn identical_path_has_trivial_action() {
        let contour = ContourParams::new(1.0, 1.0, 3).unwrap();
        let p = BlochPoint::new(1.1, -0.4).unwrap();
        let path = PathConfig::uniform(&contour, 2, p);
        let a = sk_action(&free(2), &contour, &path).unwrap();
        assert!(a.log_magnitude.abs() < 1e-14 && a.phase.abs() < 1e-14);
    }

    #[test]
    fn antipodal_neighbours_give_zero_overlap() {
        let contour = ContourParams::new(1.0, 1.0, 2).unwrap();
        let mut path = PathConfig::uniform(&contour, 1, BlochPoint::north());
        path.set(Leg::Backward, 1, 0, BlochPoint::south()).unwrap();
        let err = sk_action(&free(1), &contour, &path).unwrap_err();
        assert_eq!(err, Error::ZeroOverlap { link: 2 });
    }

    #[test]
    fn path_indexing_is_checked() {
        let contour = ContourParams::new(1.0, 1.0, 2).unwrap();
        let path = PathConfig::uniform(&contour, 2, BlochPoint::<f64>::north());
        assert!(path.get(Leg::Euclidean, 2, 0).is_err());
        assert!(path.get(Leg::Euclidean, 1, 2).is_err());
        assert_eq!(path.chain_index(Leg::Euclidean, 1), 5);
        let short = ContourParams::new(1.0, 1.0, 3).unwrap();
        assert!(sk_action(&free(2), &short, &path).is_err());
    }

    #[test]
    fn brute_force_equals_partition_trace() {
        let contour = ContourParams::new(1.0, 1.0, 1).unwrap();
        for spec in [
            free(1),
            HamiltonianSpec::nearest_neighbor(
                LatticeSpec::chain(1, false).unwrap(),
                SpinRep::half(),
                0.0,
                &[],
            )
            .unwrap(),
        ] {
            let grid = build_grid(spec.rep, 1, 4, 8).unwrap();
            let z = brute_force_trace(&spec, &contour, &grid).unwrap();
            assert!(cabs(z - c(2.0, 0.0)) < 1e-10, "{z}");
        }
        let field = HamiltonianSpec::new(
            vec![crate::lattice::HamiltonianTerm::new(
                0.7,
                vec![(0, Component::X)],
            )],
            LatticeSpec::chain(1, false).unwrap(),
            SpinRep::new(2).unwrap(),
        )
        .unwrap();
        let grid = build_grid(field.rep, 1, 4, 8).unwrap();
        let z = brute_force_trace(&field, &contour, &grid).unwrap();
        let trace = partition_trace(&build_propagators(&field, &contour, &grid).unwrap());
        assert!(cabs(z - trace) < 1e-10 * cabs(trace), "{z} {trace}");
    }

    #[test]
    fn cap_proposal_stays_in_cap_and_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let center = BlochPoint::new(0.7, 2.0).unwrap().cartesian();
        let r = 0.5f64;
        let n = 20000;
        let mut low = 0;
        for _ in 0..n {
            let p = propose_in_cap(center, r, rng.random(), rng.random());
            let norm: f64 = p.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            let cos_a: f64 = p.iter().zip(&center).map(|(a, b)| a * b).sum();
            assert!(cos_a >= r.cos() - 1e-12);
            if cos_a > 0.5 * (1.0 + r.cos()) {
                low += 1;
            }
        }
        // equal-area halves of the cap
        let frac = low as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn spinor_overlap_matches_angle_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]];
        for _ in 0..200 {
            pts.push(propose_in_cap(
                [0.0, 0.0, 1.0],
                std::f64::consts::PI,
                rng.random(),
                rng.random(),
            ));
        }
        for a in &pts {
            for b in &pts[..20] {
                let want = site_overlap_factor(
                    &BlochPoint::from_cartesian(*a),
                    &BlochPoint::from_cartesian(*b),
                );
                let got = spinor_overlap(spinor(*a), spinor(*b));
                assert!(cabs(want - got) < 1e-12, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn cap_proposal_handles_poles() {
        for center in [[0.0f64, 0.0, 1.0], [0.0, 0.0, -1.0]] {
            let p = propose_in_cap(center, 0.3, 0.5, 0.25);
            assert!((p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - 1.0).abs() < 1e-12);
        }
    }

    fn params(seed: u64, n_samples: usize) -> McParams<f64> {
        McParams {
            proposal_width: 1.0,
            n_samples,
            n_therm: 200,
            seed,
            chains: 4,
        }
    }

    #[test]
    fn rejects_bad_params() {
        let contour = ContourParams::new(1.0, 1.0, 1).unwrap();
        let mut p = params(0, 10);
        p.chains = 0;
        assert!(metropolis_run(&free(1), &contour, &p, &[]).is_err());
        p = params(0, 10);
        p.proposal_width = 0.0;
        assert!(metropolis_run(&free(1), &contour, &p, &[]).is_err());
        let bad = McObservable::spin(
            SpinRep::half(),
            Slot {
                leg: Leg::Forward,
                index: 5,
            },
            0,
            Component::Z,
        );
        assert!(metropolis_run(&free(1), &contour, &params(0, 10), &[bad]).is_err());
    }

    #[test]
    fn free_spin_has_zero_magnetization() {
        let contour = ContourParams::new(1.0, 1.0, 2).unwrap();
        let obs = McObservable::spin(
            SpinRep::half(),
            Slot {
                leg: Leg::Forward,
                index: 0,
            },
            0,
            Component::Z,
        );
        let run = metropolis_run(&free(1), &contour, &params(7, 20000), &[obs]).unwrap();
        let e = &run.estimates[0];
        assert!(!e.sign_collapsed);
        assert!(e.mean.re.abs() < 3.0 * e.stderr.re + 1e-12, "{e:?}");
        assert!(cabs(e.avg_sign) <= 1.0 + cabs(e.sign_stderr));
    }

    #[test]
    fn runs_are_reproducible() {
        let spec = HamiltonianSpec::demo_xz(1.0);
        let contour = ContourParams::new(1.0, 1.0, 2).unwrap();
        let obs = McObservable::two_point(
            &contour,
            spec.rep,
            Ordering::Unordered,
            1,
            0,
            0,
            Component::X,
            1,
            Component::X,
        )
        .unwrap();
        let a =
            metropolis_run(&spec, &contour, &params(3, 500), std::slice::from_ref(&obs)).unwrap();
        let b =
            metropolis_run(&spec, &contour, &params(3, 500), std::slice::from_ref(&obs)).unwrap();
        let d = metropolis_run(&spec, &contour, &params(4, 500), &[obs]).unwrap();
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.final_paths, b.final_paths);
        assert_ne!(a.estimates[0].mean, d.estimates[0].mean);
    }

    #[test]
    fn estimate_is_independent_of_proposal_width() {
        let spec = HamiltonianSpec::demo_xz(1.0);
        let contour = ContourParams::new(1.0, 1.0, 1).unwrap();
        let obs = McObservable::spin(
            spec.rep,
            Slot {
                leg: Leg::Euclidean,
                index: 0,
            },
            0,
            Component::X,
        );
        let narrow = McParams {
            proposal_width: 0.6,
            ..params(11, 20000)
        };
        let wide = McParams {
            proposal_width: std::f64::consts::PI,
            ..params(12, 20000)
        };
        let a = &metropolis_run(&spec, &contour, &narrow, std::slice::from_ref(&obs))
            .unwrap()
            .estimates[0];
        let b = &metropolis_run(&spec, &contour, &wide, &[obs])
            .unwrap()
            .estimates[0];
        let sigma = (a.stderr.re.powi(2) + b.stderr.re.powi(2)).sqrt();
        assert!((a.mean.re - b.mean.re).abs() < 3.5 * sigma, "{a:?} {b:?}");
    }

    #[test]
    fn small_contour_matches_trace_evaluation() {
        let spec = HamiltonianSpec::demo_xz(1.0);
        let contour = ContourParams::new(1.0, 1.0, 1).unwrap();
        let grid = build_grid(spec.rep, 2, 8, 16).unwrap();
        let (props, ins) = build_operators(&spec, &contour, &grid).unwrap();
        let exact = lattice_correlator(
            &props,
            &ins,
            Ordering::Unordered,
            0,
            0,
            0,
            Component::X,
            0,
            Component::X,
        )
        .unwrap();
        let obs = McObservable::two_point(
            &contour,
            spec.rep,
            Ordering::Unordered,
            0,
            0,
            0,
            Component::X,
            0,
            Component::X,
        )
        .unwrap();
        let e = &metropolis_run(&spec, &contour, &params(5, 40000), &[obs])
            .unwrap()
            .estimates[0];
        assert!(!e.sign_collapsed);
        assert!(
            (e.mean.re - exact.re).abs() < 3.0 * e.stderr.re,
            "{e:?} {exact}"
        );
        assert!(
            (e.mean.im - exact.im).abs() < 3.0 * e.stderr.im,
            "{e:?} {exact}"
        );
    }

    #[test]
    fn snapshot_round_trip() {
        let spec = HamiltonianSpec::demo_xz(1.0);
        let contour = ContourParams::new(1.0, 1.0, 2).unwrap();
        let run = metropolis_run(&spec, &contour, &params(9, 5), &[]).unwrap();
        let header = SnapshotHeader::new(&spec, &contour, 9);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &header, &run.final_paths).unwrap();
        let (h, paths) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(paths.len(), run.final_paths.len());
        for (a, b) in paths.iter().zip(&run.final_paths) {
            for (p, q) in a.points.iter().zip(&b.points) {
                assert!((p.theta() - q.theta()).abs() < 1e-15 && (p.phi() - q.phi()).abs() < 1e-15);
            }
        }
        assert!(read_snapshot(&buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(read_snapshot(buf.as_slice()).is_err());
    }

    #[test]
    fn spec_hash_tracks_content() {
        assert_eq!(
            spec_hash(&HamiltonianSpec::demo_xz(1.0)),
            spec_hash(&HamiltonianSpec::demo_xz(1.0))
        );
        assert_ne!(
            spec_hash(&HamiltonianSpec::demo_xz(1.0)),
            spec_hash(&HamiltonianSpec::demo_xz(2.0))
        );
    }
}
