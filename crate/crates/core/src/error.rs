use thiserror::Error;

use crate::contour::Ordering;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("term {term} multiplies two spin components on site {site}; same-site products need the product formula")]
    SameSiteProduct { term: usize, site: usize },
    #[error("term {term} references site {site} but the lattice has {sites} sites")]
    BadSiteIndex {
        term: usize,
        site: usize,
        sites: usize,
    },
    #[error("term {term} has no spin factors")]
    EmptyTerm { term: usize },
    #[error("adjacency pair ({0}, {1}) is invalid")]
    BadAdjacency(usize, usize),
    #[error("invalid spin representation 2s = {0}")]
    InvalidSpin(u32),
    #[error("spin component must be 1, 2 or 3, got {0}")]
    BadComponent(u8),
    #[error("configuration has {got} points, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid Bloch point (theta = {theta}, phi = {phi})")]
    BadBlochPoint { theta: f64, phi: f64 },
    #[error(
        "quadrature needs at least 2 nodes per direction, got n_theta = {n_theta}, n_phi = {n_phi}"
    )]
    TooFewNodes { n_theta: usize, n_phi: usize },
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("source or insertion slot {slot} is out of range on a leg with {len} slices")]
    SlotOutOfRange { slot: usize, len: usize },
    #[error("time indices ({t}, {t_prime}) are outside the validity domain of the {ordering:?} correlator")]
    InvalidOrderingDomain {
        ordering: Ordering,
        t: usize,
        t_prime: usize,
    },
    #[error("quadrature not converged: grid doubling changed propagators by {change:e} > {tol:e}")]
    QuadratureNotConverged { change: f64, tol: f64 },
    #[error("adjacent coherent states at chain link {link} are orthogonal")]
    ZeroOverlap { link: usize },
    #[error("fit abscissas are degenerate (repeated N = {0})")]
    DegenerateAbscissas(usize),
    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid sampler parameter: {0}")]
    BadSamplerParams(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
