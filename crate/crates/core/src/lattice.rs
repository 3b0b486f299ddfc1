//! Lattices, spin representations and symbolic Hamiltonians.
//!
//! A [`HamiltonianSpec`] is a list of terms `coupling * s_{i1}(x1) s_{i2}(x2) ...`
//! on pairwise distinct sites. The same term list drives both the operator
//! `H` (see [`crate::oracle::hamiltonian_matrix`]) and the classical function
//! `h(Ω) = H(ŝ → (s+1)Ω)` evaluated by [`HamiltonianSpec::h_eval`].

use std::fmt;

use crate::coherent::SphereConfig;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Spin component `s_1`, `s_2` or `s_3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    X,
    Y,
    Z,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::X, Component::Y, Component::Z];

    /// Zero-based cartesian index.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Component::X => 0,
            Component::Y => 1,
            Component::Z => 2,
        }
    }

    /// Parses the 1-based label used in config files.
    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            1 => Ok(Component::X),
            2 => Ok(Component::Y),
            3 => Ok(Component::Z),
            other => Err(Error::BadComponent(other)),
        }
    }

    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.label())
    }
}

/// Spin-`s` representation stored as `2s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinRep {
    two_s: u32,
}

impl SpinRep {
    pub fn new(two_s: u32) -> Result<Self> {
        if two_s == 0 {
            return Err(Error::InvalidSpin(two_s));
        }
        Ok(Self { two_s })
    }

    pub fn half() -> Self {
        Self { two_s: 1 }
    }

    #[inline]
    pub fn two_s(self) -> u32 {
        self.two_s
    }

    /// Dimension of the single-site space, `2s + 1`.
    #[inline]
    pub fn dim(self) -> usize {
        self.two_s as usize + 1
    }

    #[inline]
    pub fn s<T: Real>(self) -> T {
        T::from_count(self.two_s as usize) / T::lit(2.0)
    }

    /// The `(s+1)` factor of the coherent-state spin symbol.
    #[inline]
    pub fn s_plus_one<T: Real>(self) -> T {
        self.s::<T>() + T::one()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeSpec {
    sites: usize,
    adjacency: Vec<(usize, usize)>,
    label: String,
}

impl LatticeSpec {
    pub fn new(
        sites: usize,
        adjacency: Vec<(usize, usize)>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if sites == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        for &(a, b) in &adjacency {
            if a == b || a >= sites || b >= sites {
                return Err(Error::BadAdjacency(a, b));
            }
        }
        Ok(Self {
            sites,
            adjacency,
            label: label.into(),
        })
    }

    /// One-dimensional chain. With periodic boundaries, bonds that coincide
    /// (two sites: `0-1` and `1-0`) are kept once.
    pub fn chain(sites: usize, periodic: bool) -> Result<Self> {
        let mut bonds: Vec<(usize, usize)> = Vec::new();
        let last = if periodic {
            sites
        } else {
            sites.saturating_sub(1)
        };
        for x in 0..last {
            let y = (x + 1) % sites;
            if x == y {
                continue;
            }
            let key = (x.min(y), x.max(y));
            if !bonds.contains(&key) {
                bonds.push(key);
            }
        }
        let label = format!(
            "{}-site {} chain",
            sites,
            if periodic { "periodic" } else { "open" }
        );
        Self::new(sites, bonds, label)
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn adjacency(&self) -> &[(usize, usize)] {
        &self.adjacency
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm<T> {
    pub coupling: T,
    pub factors: Vec<(usize, Component)>,
}

impl<T: Real> HamiltonianTerm<T> {
    pub fn new(coupling: T, factors: Vec<(usize, Component)>) -> Self {
        Self { coupling, factors }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec<T> {
    pub terms: Vec<HamiltonianTerm<T>>,
    pub lattice: LatticeSpec,
    pub rep: SpinRep,
}

impl<T: Real> HamiltonianSpec<T> {
    /// Builds and validates a spec.
    pub fn new(terms: Vec<HamiltonianTerm<T>>, lattice: LatticeSpec, rep: SpinRep) -> Result<Self> {
        let spec = Self {
            terms,
            lattice,
            rep,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Free spins: no terms.
    pub fn free(lattice: LatticeSpec, rep: SpinRep) -> Self {
        Self {
            terms: Vec::new(),
            lattice,
            rep,
        }
    }

    /// `coupling * Σ_bonds Σ_components s_i(x) s_i(y)` over the lattice adjacency.
    pub fn nearest_neighbor(
        lattice: LatticeSpec,
        rep: SpinRep,
        coupling: T,
        components: &[Component],
    ) -> Result<Self> {
        let mut terms = Vec::new();
        for &(a, b) in lattice.adjacency() {
            for &comp in components {
                terms.push(HamiltonianTerm::new(coupling, vec![(a, comp), (b, comp)]));
            }
        }
        Self::new(terms, lattice, rep)
    }

    /// Two spin-1/2 sites on a periodic ring with
    /// `H = -(j/2)(s_1 s_1 + s_3 s_3)` on the single bond.
    pub fn demo_xz(j: T) -> Self {
        let lattice = LatticeSpec::chain(2, true).expect("two-site ring");
        let coupling = -j / T::lit(2.0);
        Self::nearest_neighbor(
            lattice,
            SpinRep::half(),
            coupling,
            &[Component::X, Component::Z],
        )
        .expect("demo spec is valid")
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.lattice.sites()
    }

    /// Hilbert space dimension `(2s+1)^V`.
    pub fn hilbert_dim(&self) -> usize {
        self.rep.dim().pow(self.sites() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let sites = self.sites();
        for (k, term) in self.terms.iter().enumerate() {
            if term.factors.is_empty() {
                return Err(Error::EmptyTerm { term: k });
            }
            for (n, &(site, _)) in term.factors.iter().enumerate() {
                if site >= sites {
                    return Err(Error::BadSiteIndex {
                        term: k,
                        site,
                        sites,
                    });
                }
                if term.factors[..n].iter().any(|&(other, _)| other == site) {
                    return Err(Error::SameSiteProduct { term: k, site });
                }
            }
        }
        Ok(())
    }

    /// `h(Ω)` for a configuration given as one cartesian unit vector per site.
    /// No length check; see [`Self::h_eval`] for the checked version.
    #[inline]
    pub fn h_cartesian(&self, omega: &[[T; 3]]) -> T {
        let sp1 = self.rep.s_plus_one::<T>();
        let mut h = T::zero();
        for term in &self.terms {
            let mut prod = term.coupling;
            for &(site, comp) in &term.factors {
                prod *= sp1 * omega[site][comp.index()];
            }
            h += prod;
        }
        h
    }

    /// Classical symbol `h(Ω) = Σ_terms coupling · Π (s+1) Ω_{site,component}`.
    pub fn h_eval(&self, omega: &SphereConfig<T>) -> Result<T> {
        if omega.len() != self.sites() {
            return Err(Error::DimensionMismatch {
                expected: self.sites(),
                got: omega.len(),
            });
        }
        let cart: Vec<[T; 3]> = omega.points().iter().map(|p| p.cartesian()).collect();
        Ok(self.h_cartesian(&cart))
    }

    /// Canonical one-line-per-term text used for hashing and provenance.
    pub fn canonical_text(&self) -> String {
        let mut out = format!(
            "sites={}\ntwo_s={}\nadjacency={:?}\n",
            self.sites(),
            self.rep.two_s(),
            self.lattice.adjacency()
        );
        for term in &self.terms {
            out.push_str(&format!("{:.17e}", term.coupling.as_f64()));
            for &(site, comp) in &term.factors {
                out.push_str(&format!(" {}:{}", site, comp.label()));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::BlochPoint;
    use proptest::prelude::*;

    fn two_site(terms: Vec<HamiltonianTerm<f64>>) -> HamiltonianSpec<f64> {
        HamiltonianSpec {
            terms,
            lattice: LatticeSpec::chain(2, true).unwrap(),
            rep: SpinRep::half(),
        }
    }

    #[test]
    fn demo_spec_is_valid_with_single_bond() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        assert!(spec.validate().is_ok());
        assert_eq!(spec.lattice.adjacency(), &[(0, 1)]);
        assert_eq!(spec.terms.len(), 2);
        assert_eq!(spec.hilbert_dim(), 4);
    }

    #[test]
    fn same_site_product_is_rejected() {
        let spec = two_site(vec![HamiltonianTerm::new(
            1.0,
            vec![(0, Component::X), (0, Component::X)],
        )]);
        assert_eq!(
            spec.validate(),
            Err(Error::SameSiteProduct { term: 0, site: 0 })
        );
    }

    #[test]
    fn out_of_range_site_is_rejected() {
        let spec = two_site(vec![HamiltonianTerm::new(1.0, vec![(5, Component::Z)])]);
        assert!(matches!(
            spec.validate(),
            Err(Error::BadSiteIndex { site: 5, .. })
        ));
    }

    #[test]
    fn empty_term_is_rejected() {
        let spec = two_site(vec![HamiltonianTerm::new(1.0, vec![])]);
        assert_eq!(spec.validate(), Err(Error::EmptyTerm { term: 0 }));
    }

    #[test]
    fn self_bond_is_rejected() {
        assert!(LatticeSpec::new(3, vec![(1, 1)], "bad").is_err());
        assert!(LatticeSpec::new(3, vec![(1, 3)], "bad").is_err());
    }

    #[test]
    fn open_and_periodic_chains() {
        assert_eq!(
            LatticeSpec::chain(3, false).unwrap().adjacency(),
            &[(0, 1), (1, 2)]
        );
        assert_eq!(
            LatticeSpec::chain(3, true).unwrap().adjacency(),
            &[(0, 1), (1, 2), (0, 2)]
        );
    }

    #[test]
    fn demo_h_at_north_pole() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        let omega = SphereConfig::new(vec![BlochPoint::north(); 2]);
        let h = spec.h_eval(&omega).unwrap();
        // oracle: enumerate the term list by hand, (s+1)^2 = 9/4
        let mut oracle = 0.0;
        for term in &spec.terms {
            let mut p = term.coupling;
            for &(_, comp) in &term.factors {
                p *= 1.5 * if comp == Component::Z { 1.0 } else { 0.0 };
            }
            oracle += p;
        }
        assert!((h - oracle).abs() < 1e-15);
        assert!((h + 9.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn empty_hamiltonian_has_zero_symbol() {
        let spec = two_site(vec![]);
        let omega = SphereConfig::new(vec![BlochPoint::new(0.3, 1.0).unwrap(); 2]);
        assert_eq!(spec.h_eval(&omega).unwrap(), 0.0);
    }

    #[test]
    fn single_term_is_linear_in_component() {
        let c = 0.7;
        let spec = two_site(vec![HamiltonianTerm::new(c, vec![(1, Component::Y)])]);
        let p = BlochPoint::new(1.1, 0.4).unwrap();
        let omega = SphereConfig::new(vec![BlochPoint::north(), p]);
        let h = spec.h_eval(&omega).unwrap();
        assert!((h - c * 1.5 * p.cartesian()[1]).abs() < 1e-15);
    }

    #[test]
    fn h_eval_checks_length() {
        let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
        let omega = SphereConfig::new(vec![BlochPoint::north()]);
        assert!(matches!(
            spec.h_eval(&omega),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn arb_point() -> impl Strategy<Value = BlochPoint<f64>> {
        (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU)
            .prop_map(|(t, p)| BlochPoint::new(t, p).unwrap())
    }

    fn arb_term() -> impl Strategy<Value = HamiltonianTerm<f64>> {
        (-2.0..2.0f64, 0u8..3, 0u8..3, any::<bool>()).prop_map(|(c, a, b, pair)| {
            let ca = Component::ALL[a as usize];
            let cb = Component::ALL[b as usize];
            let factors = if pair {
                vec![(0, ca), (1, cb)]
            } else {
                vec![(1, ca)]
            };
            HamiltonianTerm::new(c, factors)
        })
    }

    proptest! {
        #[test]
        fn h_is_linear_in_couplings(
            t1 in arb_term(), t2 in arb_term(),
            c1 in -3.0..3.0f64, c2 in -3.0..3.0f64,
            p0 in arb_point(), p1 in arb_point(),
        ) {
            let omega = SphereConfig::new(vec![p0, p1]);
            let scaled = |t: &HamiltonianTerm<f64>, c: f64| HamiltonianTerm::new(t.coupling * c, t.factors.clone());
            let both = two_site(vec![scaled(&t1, c1), scaled(&t2, c2)]);
            let h1 = two_site(vec![t1.clone()]).h_eval(&omega).unwrap();
            let h2 = two_site(vec![t2.clone()]).h_eval(&omega).unwrap();
            let h = both.h_eval(&omega).unwrap();
            prop_assert!((h - (c1 * h1 + c2 * h2)).abs() < 1e-12);
        }

        #[test]
        fn h_is_permutation_invariant(
            t1 in arb_term(), t2 in arb_term(), t3 in arb_term(),
            p0 in arb_point(), p1 in arb_point(),
        ) {
            let omega = SphereConfig::new(vec![p0, p1]);
            let fwd = two_site(vec![t1.clone(), t2.clone(), t3.clone()]);
            let rev_factors = |t: &HamiltonianTerm<f64>| {
                let mut f = t.factors.clone();
                f.reverse();
                HamiltonianTerm::new(t.coupling, f)
            };
            let rev = two_site(vec![rev_factors(&t3), rev_factors(&t1), rev_factors(&t2)]);
            prop_assert!((fwd.h_eval(&omega).unwrap() - rev.h_eval(&omega).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn demo_h_is_even_under_joint_component_flip(p0 in arb_point(), p1 in arb_point()) {
            let spec = HamiltonianSpec::<f64>::demo_xz(1.0);
            let cart = [p0.cartesian(), p1.cartesian()];
            for comp in [0usize, 2] {
                let mut flipped = cart;
                flipped[0][comp] = -flipped[0][comp];
                flipped[1][comp] = -flipped[1][comp];
                prop_assert!((spec.h_cartesian(&cart) - spec.h_cartesian(&flipped)).abs() < 1e-14);
            }
        }
    }
}
