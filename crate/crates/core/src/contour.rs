//! The discretised three-leg contour: forward real time, backward real time,
//! then imaginary time of extent β.
//!
//! Slots are 0-based. A slot `k` on a leg has `k` factors of the same leg
//! before it. Physical times map to slots as
//!
//! * forward leg: `t = k Δt`,
//! * backward leg: `t = (N₋ − 1 − k) Δt`.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Leg {
    Forward,
    Backward,
    Euclidean,
}

impl Leg {
    pub const ALL: [Leg; 3] = [Leg::Forward, Leg::Backward, Leg::Euclidean];

    pub fn index(self) -> usize {
        match self {
            Leg::Forward => 0,
            Leg::Backward => 1,
            Leg::Euclidean => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Leg::Forward => "+",
            Leg::Backward => "-",
            Leg::Euclidean => "E",
        }
    }
}

/// Operator ordering of a two-point function, selected by which legs carry
/// the two insertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ordering {
    /// Both on the backward leg; requires `t > t'`.
    TimeOrdered,
    /// Both on the forward leg; requires `t < t'`.
    AntiOrdered,
    /// Forward then backward leg; any `t`, `t'`.
    Unordered,
}

impl Ordering {
    pub const ALL: [Ordering; 3] = [
        Ordering::TimeOrdered,
        Ordering::AntiOrdered,
        Ordering::Unordered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ordering::TimeOrdered => "time-ordered",
            Ordering::AntiOrdered => "anti-ordered",
            Ordering::Unordered => "unordered",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == name)
    }
}

/// An insertion point on the contour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub leg: Leg,
    pub index: usize,
}

/// `(β, t_max)` and the slice count of each leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourParams<T> {
    pub beta: T,
    pub t_max: T,
    n_forward: usize,
    n_backward: usize,
    n_euclid: usize,
}

impl<T: Real> ContourParams<T> {
    /// Equal slice counts `n` on all three legs.
    pub fn new(beta: T, t_max: T, n: usize) -> Result<Self> {
        Self::with_legs(beta, t_max, n, n, n)
    }

    pub fn with_legs(
        beta: T,
        t_max: T,
        n_forward: usize,
        n_backward: usize,
        n_euclid: usize,
    ) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(Error::InvalidContour(format!(
                "beta must be positive, got {:e}",
                beta
            )));
        }
        if !(t_max > T::zero()) || !t_max.is_finite() {
            return Err(Error::InvalidContour(format!(
                "t_max must be positive, got {:e}",
                t_max
            )));
        }
        if n_forward == 0 || n_backward == 0 || n_euclid == 0 {
            return Err(Error::InvalidContour(
                "every leg needs at least one slice".into(),
            ));
        }
        Ok(Self {
            beta,
            t_max,
            n_forward,
            n_backward,
            n_euclid,
        })
    }

    pub fn slices(&self, leg: Leg) -> usize {
        match leg {
            Leg::Forward => self.n_forward,
            Leg::Backward => self.n_backward,
            Leg::Euclidean => self.n_euclid,
        }
    }

    /// Slice count when all legs agree.
    pub fn n(&self) -> Option<usize> {
        (self.n_forward == self.n_backward && self.n_backward == self.n_euclid)
            .then_some(self.n_forward)
    }

    /// Forward-leg real-time step `t_max / N₊`.
    pub fn dt(&self) -> T {
        self.t_max / T::from_count(self.n_forward)
    }

    pub fn dt_backward(&self) -> T {
        self.t_max / T::from_count(self.n_backward)
    }

    pub fn dtau(&self) -> T {
        self.beta / T::from_count(self.n_euclid)
    }

    /// Time step carried by one slice of `leg`.
    pub fn step(&self, leg: Leg) -> T {
        match leg {
            Leg::Forward => self.dt(),
            Leg::Backward => self.dt_backward(),
            Leg::Euclidean => self.dtau(),
        }
    }

    /// Nearest forward-grid index of physical time `t`, if `t` lies on the grid.
    pub fn time_index(&self, t: T) -> Option<usize> {
        let k = (t / self.dt()).round();
        if k < T::zero() {
            return None;
        }
        let tol = T::lit(1e-6);
        ((t / self.dt() - k).abs() <= tol).then(|| k.as_f64() as usize)
    }

    /// Slots of the two insertions of `⟨s(x,t) s(x',t')⟩` for time indices
    /// `(t_hat, t_hat_prime)`, the left operator first.
    pub fn correlator_slots(
        &self,
        ordering: Ordering,
        t_hat: usize,
        t_hat_prime: usize,
    ) -> Result<(Slot, Slot)> {
        let nf = self.n_forward;
        let nb = self.n_backward;
        let invalid = || Error::InvalidOrderingDomain {
            ordering,
            t: t_hat,
            t_prime: t_hat_prime,
        };
        match ordering {
            Ordering::Unordered => {
                if t_hat >= nf || t_hat_prime >= nb {
                    return Err(invalid());
                }
                Ok((
                    Slot {
                        leg: Leg::Forward,
                        index: t_hat,
                    },
                    Slot {
                        leg: Leg::Backward,
                        index: nb - 1 - t_hat_prime,
                    },
                ))
            }
            Ordering::AntiOrdered => {
                if !(t_hat < t_hat_prime && t_hat_prime < nf) {
                    return Err(invalid());
                }
                Ok((
                    Slot {
                        leg: Leg::Forward,
                        index: t_hat,
                    },
                    Slot {
                        leg: Leg::Forward,
                        index: t_hat_prime,
                    },
                ))
            }
            Ordering::TimeOrdered => {
                if !(t_hat > t_hat_prime && t_hat < nb) {
                    return Err(invalid());
                }
                Ok((
                    Slot {
                        leg: Leg::Backward,
                        index: nb - 1 - t_hat,
                    },
                    Slot {
                        leg: Leg::Backward,
                        index: nb - 1 - t_hat_prime,
                    },
                ))
            }
        }
    }
}
