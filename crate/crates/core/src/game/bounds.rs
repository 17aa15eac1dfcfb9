use nalgebra::DVector;

use super::{GameSpec, Hyperbox, Strategy};
use crate::error::{Error, Result};

/// Multiplier applied to grid maxima before they are used as sub-gradient bounds.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.1;

/// Sub-gradient norm bounds `A_n`, `A_0` and box diameters `B_n`.
///
/// `followers` and `leader` hold raw grid maxima; the `*_bound` accessors apply
/// the safety factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientBounds {
    pub followers: Vec<f64>,
    pub leader: f64,
    pub diameters: Vec<f64>,
    pub safety_factor: f64,
}

impl SubgradientBounds {
    pub fn follower_bound(&self, n: usize) -> f64 {
        self.followers[n] * self.safety_factor
    }

    pub fn leader_bound(&self) -> f64 {
        self.leader * self.safety_factor
    }

    /// Analytic values supplied by the caller, used as-is.
    pub fn exact(followers: Vec<f64>, leader: f64, diameters: Vec<f64>) -> Self {
        Self {
            followers,
            leader,
            diameters,
            safety_factor: 1.0,
        }
    }
}

/// Evenly spaced points on `[lo, hi]`, endpoints included.
fn axis_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// Visits every point of the tensor grid spanned by `boxes`, handing the
/// visitor one vector per box.
fn for_each_grid_point(
    boxes: &[&Hyperbox],
    per_axis: usize,
    mut visit: impl FnMut(&[Strategy]) -> Result<()>,
) -> Result<()> {
    let axes: Vec<Vec<f64>> = boxes
        .iter()
        .flat_map(|b| {
            b.lower()
                .iter()
                .zip(b.upper().iter())
                .map(|(lo, hi)| axis_points(*lo, *hi, per_axis))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut counter = vec![0usize; axes.len()];
    let mut parts: Vec<Strategy> = boxes.iter().map(|b| DVector::zeros(b.dim())).collect();
    loop {
        let mut axis = 0;
        for (part, b) in parts.iter_mut().zip(boxes) {
            for c in 0..b.dim() {
                part[c] = axes[axis][counter[axis]];
                axis += 1;
            }
        }
        visit(&parts)?;

        // advance the mixed-radix counter
        let mut i = 0;
        loop {
            if i == counter.len() {
                return Ok(());
            }
            counter[i] += 1;
            if counter[i] < per_axis {
                break;
            }
            counter[i] = 0;
            i += 1;
        }
    }
}

/// Grid estimate of the sub-gradient bounds over the feasible region.
///
/// For follower `n` the grid spans `X_n`, the box of reachable aggregates
/// `sigma_n` and `Y`; for the leader it spans `Y` and the box of `sigma_0`.
/// The raw maxima are lower bounds on the true suprema (exact when the norm is
/// maximized at a grid point, e.g. for affine oracles at the corners).
pub fn estimate_bounds(spec: &GameSpec, grid_points_per_axis: usize, safety_factor: f64) -> Result<SubgradientBounds> {
    if grid_points_per_axis < 2 {
        return Err(Error::Input("grid_points_per_axis must be at least 2".to_string()));
    }
    let mut followers = Vec::with_capacity(spec.n_followers);
    for n in 0..spec.n_followers {
        let sigma_box = spec.follower_aggregate_box(n);
        let mut best = 0.0f64;
        for_each_grid_point(
            &[&spec.follower_sets[n], &sigma_box, &spec.leader_set],
            grid_points_per_axis,
            |p| {
                let g = spec.follower_subgradient(n, &p[0], &p[1], &p[2])?;
                best = best.max(g.norm());
                Ok(())
            },
        )?;
        followers.push(best);
    }

    let sigma0_box = spec.leader_aggregate_box();
    let mut leader = 0.0f64;
    for_each_grid_point(&[&spec.leader_set, &sigma0_box], grid_points_per_axis, |p| {
        let g = spec.leader_subgradient(&p[0], &p[1])?;
        leader = leader.max(g.norm());
        Ok(())
    })?;

    Ok(SubgradientBounds {
        followers,
        leader,
        diameters: spec.follower_sets.iter().map(Hyperbox::diameter).collect(),
        safety_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{decoupled_game, quadratic_test_game};
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_oracle_bound_is_one() {
        let g = decoupled_game(&[0.0, 0.0], 0.0);
        let b = estimate_bounds(&g, 5, DEFAULT_SAFETY_FACTOR).unwrap();
        assert_abs_diff_eq!(b.followers[0], 1.0);
        assert_abs_diff_eq!(b.follower_bound(0), 1.1, epsilon = 1e-15);
    }

    #[test]
    fn box_diameter() {
        assert_abs_diff_eq!(
            Hyperbox::uniform(2, -1.0, 1.0).diameter(),
            2.0 * 2f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn quadratic_game_bounds_at_corners() {
        // max |5x + sigma + y - 1| over the unit cube is |-5 - 1 - 1 - 1| = 8,
        // max |10y + sigma0| is 11.
        let b = estimate_bounds(&quadratic_test_game(), 2, 1.0).unwrap();
        assert_abs_diff_eq!(b.followers[0], 8.0);
        assert_abs_diff_eq!(b.followers[1], 8.0);
        assert_abs_diff_eq!(b.leader, 11.0);
        assert_abs_diff_eq!(b.diameters[0], 2.0);
    }

    #[test]
    fn grid_visits_every_point() {
        let b = Hyperbox::uniform(2, 0.0, 1.0);
        let c = Hyperbox::uniform(1, 0.0, 1.0);
        let mut count = 0;
        for_each_grid_point(&[&b, &c], 3, |_| {
            count += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 27);
        assert!(estimate_bounds(&quadratic_test_game(), 1, 1.0).is_err());
    }
}
