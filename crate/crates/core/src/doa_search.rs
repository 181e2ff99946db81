//! One-dimensional DOA updates over `u = cos(theta)`.
//!
//! [`golden_local_search`] climbs to the local maximum nearest the previous
//! estimate: it marches in steps of `grid_step` along the ascent direction,
//! brackets the peak, then shrinks the bracket with two interior points.
//! [`grid_argmax`] instead jumps to the global maximum of a uniform grid and
//! refines from there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible `|u|`; keeps `theta = acos(u)` strictly inside `(0, pi)`.
pub const U_LIMIT: f64 = 1.0 - 1e-9;

const DEFAULT_INTERIOR: f64 = 0.312;
const CANONICAL_INTERIOR: f64 = 0.382;
const OUTER_INTERIOR: f64 = 0.618;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    /// Local golden-section climb from the previous estimate.
    Golden,
    /// Global grid maximum followed by a local refinement.
    Grid,
}

impl std::str::FromStr for SearchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "golden" => Ok(SearchKind::Golden),
            "grid" => Ok(SearchKind::Grid),
            other => Err(Error::invalid("search", format!("unknown search `{other}`"))),
        }
    }
}

impl std::fmt::Display for SearchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchKind::Golden => "golden",
            SearchKind::Grid => "grid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoaSearchStrategy {
    pub kind: SearchKind,
    /// March step and grid spacing in `u`.
    pub grid_step: f64,
    /// Bracket width at which shrinking stops.
    pub bracket_tol: f64,
    /// Step of the central difference deciding the ascent direction.
    pub derivative_step: f64,
    /// Use the interior fractions 0.382/0.618 instead of 0.312/0.618.
    pub canonical_golden: bool,
}

impl Default for DoaSearchStrategy {
    fn default() -> Self {
        Self {
            kind: SearchKind::Golden,
            grid_step: 1e-3,
            bracket_tol: 1e-4,
            derivative_step: 1e-6,
            canonical_golden: false,
        }
    }
}

impl DoaSearchStrategy {
    pub fn golden() -> Self {
        Self::default()
    }

    pub fn grid() -> Self {
        Self {
            kind: SearchKind::Grid,
            ..Self::default()
        }
    }

    pub fn with_kind(kind: SearchKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0 && self.grid_step < 1.0) {
            return Err(Error::invalid("grid_step", format!("{} not in (0, 1)", self.grid_step)));
        }
        if !(self.bracket_tol > 0.0 && self.bracket_tol < self.grid_step) {
            return Err(Error::invalid(
                "bracket_tol",
                format!("{} not in (0, grid_step)", self.bracket_tol),
            ));
        }
        if !(self.derivative_step > 0.0 && self.derivative_step.is_finite()) {
            return Err(Error::invalid("derivative_step", "must be > 0"));
        }
        Ok(())
    }

    /// Maximizes `objective` according to `kind`, starting from `u_start` for
    /// the local search. Returns the maximizing `u`.
    pub fn maximize<F: Fn(f64) -> f64>(&self, objective: F, u_start: f64) -> Result<f64> {
        match self.kind {
            SearchKind::Golden => golden_local_search(objective, u_start, self),
            SearchKind::Grid => grid_argmax(objective, self),
        }
    }
}

fn clamp_u(u: f64) -> (f64, bool) {
    if u > U_LIMIT {
        (U_LIMIT, true)
    } else if u < -U_LIMIT {
        (-U_LIMIT, true)
    } else {
        (u, false)
    }
}

fn checked<F: Fn(f64) -> f64>(f: &F, u: f64) -> Result<f64> {
    let v = f(u);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("objective is {v} at u = {u}")))
    }
}

/// Local maximum of `objective` nearest `u_start`.
///
/// The result never has a lower objective value than `u_start`: if the final
/// bracket midpoint is not strictly better than the best marched point, the
/// marched point is returned instead.
pub fn golden_local_search<F: Fn(f64) -> f64>(
    objective: F,
    u_start: f64,
    params: &DoaSearchStrategy,
) -> Result<f64> {
    params.validate()?;
    if !(u_start > -1.0 && u_start < 1.0) {
        return Err(Error::Domain(format!("search start u = {u_start} outside (-1, 1)")));
    }
    let f = &objective;
    let du = params.grid_step;
    let (start, _) = clamp_u(u_start);

    let h = params.derivative_step;
    let (lo, _) = clamp_u(start - h);
    let (hi, _) = clamp_u(start + h);
    let slope = (checked(f, hi)? - checked(f, lo)?) / (hi - lo);
    let dir = if slope < 0.0 { -1.0 } else { 1.0 };

    let mut clamped = false;
    let mut best = start;
    let mut f_best = checked(f, start)?;
    let (mut next, c) = clamp_u(best + dir * du);
    clamped |= c;
    let mut f_next = checked(f, next)?;
    let max_steps = (2.0 / du).ceil() as usize + 1;
    let mut steps = 0;
    while f_best < f_next && steps < max_steps {
        best = next;
        f_best = f_next;
        let (cand, c) = clamp_u(next + dir * du);
        clamped |= c;
        if cand == best {
            break;
        }
        next = cand;
        f_next = checked(f, next)?;
        steps += 1;
    }

    let (mut star, mut end) = if dir > 0.0 {
        (clamp_u(best - du).0, next)
    } else {
        (next, clamp_u(best + du).0)
    };
    if clamped {
        log::warn!("DOA search reached the edge of (-1, 1); bracket clamped to [{star}, {end}]");
    }

    let inner = if params.canonical_golden {
        CANONICAL_INTERIOR
    } else {
        DEFAULT_INTERIOR
    };
    // Each pass keeps at most 0.688 of the width.
    let max_shrinks = 200;
    let mut shrinks = 0;
    while end - star > params.bracket_tol && shrinks < max_shrinks {
        let width = end - star;
        let mid1 = star + inner * width;
        let mid2 = star + OUTER_INTERIOR * width;
        if checked(f, mid1)? < checked(f, mid2)? {
            star = mid1;
        } else {
            end = mid2;
        }
        shrinks += 1;
    }
    let mid = 0.5 * (star + end);
    let f_mid = checked(f, mid)?;
    Ok(if f_mid > f_best { mid } else { best })
}

/// Global maximum over the grid `-1 + k * grid_step`, `k = 1, 2, ...` strictly
/// inside `(-1, 1)` (ties go to the smaller `u`), refined by a local search.
pub fn grid_argmax<F: Fn(f64) -> f64>(objective: F, params: &DoaSearchStrategy) -> Result<f64> {
    params.validate()?;
    let step = params.grid_step;
    let count = ((2.0 / step).round() as usize).saturating_sub(1);
    if count < 3 {
        return Err(Error::Domain(format!("grid step {step} leaves fewer than 3 points")));
    }
    let mut best_u = -1.0 + step;
    let mut best_f = f64::NEG_INFINITY;
    for k in 1..=count {
        let u = -1.0 + k as f64 * step;
        let v = checked(&objective, u)?;
        if v > best_f {
            best_f = v;
            best_u = u;
        }
    }
    golden_local_search(objective, best_u, params)
}
