//! Shared five-point FTCS kernel and step bookkeeping.

use crate::scalar::Real;

/// Reflected neighbour index: the ghost node beyond either end mirrors the
/// first interior node, which realises a zero-gradient boundary.
#[inline]
fn reflect(k: usize, count: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { k - 1 };
    let hi = if k + 1 == count { count - 2 } else { k + 1 };
    (lo, hi)
}

/// Writes `out = u + rx·(E + W − 2u) + ry·(N + S − 2u) + src` at every node,
/// with mirrored ghost nodes on all four sides.
///
/// The arithmetic at a node depends only on the values involved, never on the
/// position, so mirror-symmetric inputs give bit-identical mirror outputs.
pub(crate) fn diffuse_reflect<S: Real>(
    u: &[S],
    out: &mut [S],
    m1: usize,
    m2: usize,
    rx: S,
    ry: S,
    src: S,
) {
    debug_assert_eq!(u.len(), m1 * m2);
    debug_assert_eq!(out.len(), m1 * m2);
    let two = S::lit(2.0);
    for j in 0..m2 {
        let (js, jn) = reflect(j, m2);
        let row = &u[j * m1..(j + 1) * m1];
        let south = &u[js * m1..(js + 1) * m1];
        let north = &u[jn * m1..(jn + 1) * m1];
        let o = &mut out[j * m1..(j + 1) * m1];

        let c = row[0];
        o[0] = c + rx * (row[1] + row[1] - two * c) + ry * (north[0] + south[0] - two * c) + src;
        for i in 1..m1 - 1 {
            let c = row[i];
            o[i] = c
                + rx * (row[i + 1] + row[i - 1] - two * c)
                + ry * (north[i] + south[i] - two * c)
                + src;
        }
        let e = m1 - 1;
        let c = row[e];
        o[e] = c
            + rx * (row[e - 1] + row[e - 1] - two * c)
            + ry * (north[e] + south[e] - two * c)
            + src;
    }
}

/// Splits a phase of length `duration` into steps of at most `dt`.
///
/// When `duration` is a whole multiple of `dt` (to 1e-9 relative) every step
/// has length `dt`; otherwise the last step is shortened to land on the end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan<S> {
    pub steps: u64,
    pub dt: S,
    pub last_dt: S,
    pub duration: S,
}

impl<S: Real> StepPlan<S> {
    pub fn new(duration: S, dt: S) -> Self {
        if !(duration > S::zero()) {
            return Self {
                steps: 0,
                dt,
                last_dt: dt,
                duration: S::zero(),
            };
        }
        let ratio = duration / dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= S::lit(1e-9) * ratio.max(S::one()) && rounded >= S::one() {
            let steps = rounded.to_u64().unwrap_or(1);
            Self {
                steps,
                dt,
                last_dt: dt,
                duration,
            }
        } else {
            let full = ratio.floor().to_u64().unwrap_or(0);
            let last = duration - S::from_count(full) * dt;
            Self {
                steps: full + 1,
                dt,
                last_dt: last,
                duration,
            }
        }
    }

    /// Length of step `k` (0-based).
    pub fn step_len(&self, k: u64) -> S {
        if k + 1 == self.steps {
            self.last_dt
        } else {
            self.dt
        }
    }

    /// Elapsed phase time after `k` completed steps.
    pub fn time_after(&self, k: u64) -> S {
        if k >= self.steps {
            self.duration
        } else {
            S::from_count(k) * self.dt
        }
    }

    /// Smallest step count whose elapsed time reaches `t` (within 1e-9 dt).
    pub fn steps_to_reach(&self, t: S) -> u64 {
        if !(t > S::zero()) {
            return 0;
        }
        let k = (t / self.dt - S::lit(1e-9)).ceil().to_u64().unwrap_or(0);
        k.min(self.steps)
    }
}
