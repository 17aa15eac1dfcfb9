//! Full-information reference equilibrium, its verification, empirical game
//! constants, the sufficient convergence conditions and a monotonicity probe.

use rand::Rng;
use serde::Serialize;

use crate::dynamics::Profile;
use crate::error::{Agent, Error, Result};
use crate::game::{sigma_follower_true, sigma_leader, GameSpec, Strategy, SubgradientBounds};

/// Reference equilibrium `z* = (x*, y*)` from the synchronous solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub x_star: Vec<Strategy>,
    pub y_star: Strategy,
    /// Projected-gradient residual `‖z - Π(z - s g(z))‖ / s` at the returned point.
    pub residual: f64,
    pub iterations_used: usize,
}

impl ReferencePoint {
    pub fn profile(&self) -> Profile {
        Profile::new(self.x_star.clone(), self.y_star.clone())
    }

    pub fn distance(&self, x: &[Strategy], y: &Strategy) -> f64 {
        self.profile().squared_distance(x, y).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverOptions {
    pub fn new(step: f64, tol: f64, max_iter: usize) -> Self {
        Self { step, tol, max_iter }
    }
}

/// `min(C_n, C_0) / (4 (L̄ + max C)^2)`.
pub fn default_reference_step(c: &CouplingConstants) -> f64 {
    let (lo, hi) = c
        .strong_followers
        .iter()
        .chain(std::iter::once(&c.strong_leader))
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    lo / (4.0 * (c.l_bar() + hi).powi(2))
}

/// Stacked sub-gradient map `g(z)` evaluated with true aggregates.
pub fn pseudo_gradient(spec: &GameSpec, x: &[Strategy], y: &Strategy) -> Result<(Vec<Strategy>, Strategy)> {
    let mut gx = Vec::with_capacity(spec.n_followers);
    for n in 0..spec.n_followers {
        let sigma = sigma_follower_true(spec, n, x)?;
        gx.push(spec.follower_subgradient(n, &x[n], &sigma, y)?);
    }
    let sigma0 = sigma_leader(spec, x)?;
    let gy = spec.leader_subgradient(y, &sigma0)?;
    Ok((gx, gy))
}

/// Synchronous projected pseudo-gradient iteration `z <- Π(z - step g(z))` from
/// the box centers, stopped once the projected-gradient residual drops below `tol`.
pub fn solve_reference_gne(spec: &GameSpec, options: &SolverOptions) -> Result<ReferencePoint> {
    if !(options.step > 0.0 && options.step.is_finite()) {
        return Err(Error::Input(format!("solver step {} must be positive", options.step)));
    }
    if options.tol.is_nan() || options.tol <= 0.0 {
        return Err(Error::Input(format!(
            "solver tolerance {} must be positive",
            options.tol
        )));
    }
    let start = Profile::center(spec);
    let mut x = start.x;
    let mut y = start.y;
    let mut best = ReferencePoint {
        x_star: x.clone(),
        y_star: y.clone(),
        residual: f64::INFINITY,
        iterations_used: 0,
    };
    for it in 0..options.max_iter {
        let (gx, gy) = pseudo_gradient(spec, &x, &y)?;
        let mut moved = 0.0;
        let mut next_x = Vec::with_capacity(x.len());
        for (n, (xn, g)) in x.iter().zip(&gx).enumerate() {
            let v = spec.follower_sets[n].project(&(xn - g * options.step))?;
            moved += (&v - xn).norm_squared();
            next_x.push(v);
        }
        let next_y = spec.leader_set.project(&(&y - gy * options.step))?;
        moved += (&next_y - &y).norm_squared();
        let residual = moved.sqrt() / options.step;

        if residual < best.residual {
            best = ReferencePoint {
                x_star: x.clone(),
                y_star: y.clone(),
                residual,
                iterations_used: it,
            };
        }
        if residual < options.tol {
            return Ok(best);
        }
        x = next_x;
        y = next_y;
    }
    Err(Error::NonConvergence {
        iterations: options.max_iter,
        residual: best.residual,
        best: Box::new(best),
    })
}

/// Tolerance `10 tol A` for the variational check of an agent with bound `A`.
pub fn gne_tolerance(tol: f64, bound: f64) -> f64 {
    10.0 * tol * bound
}

/// Most negative directional value per agent; an empty list of negatives means
/// the variational inequality holds on every probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GneCheck {
    pub followers: Vec<f64>,
    pub leader: f64,
}

impl GneCheck {
    pub fn worst(&self) -> (Option<Agent>, f64) {
        let mut out = (None, 0.0);
        for (n, v) in self.followers.iter().enumerate() {
            if *v < out.1 {
                out = (Some(Agent::Follower(n)), *v);
            }
        }
        if self.leader < out.1 {
            out = (Some(Agent::Leader), self.leader);
        }
        out
    }

    /// True when every agent's value is at least `-eps(agent)`.
    pub fn within(&self, eps: impl Fn(Agent) -> f64) -> bool {
        self.followers
            .iter()
            .enumerate()
            .all(|(n, v)| *v >= -eps(Agent::Follower(n)))
            && self.leader >= -eps(Agent::Leader)
    }
}

/// `min_{v in box} d^T (v - x*)`, attained at a vertex.
fn worst_vertex(d: &Strategy, at: &Strategy, bounds: &crate::game::Hyperbox) -> f64 {
    (0..d.len())
        .map(|i| {
            let lo = d[i] * (bounds.lower()[i] - at[i]);
            let hi = d[i] * (bounds.upper()[i] - at[i]);
            lo.min(hi)
        })
        .sum()
}

/// Checks `d_n(x_n*, sigma_n*, y*)^T (x_n - x_n*) >= 0` for random feasible `x_n`
/// and for the minimizing vertex of the box, and likewise for the leader.
pub fn verify_gne<R: Rng + ?Sized>(
    spec: &GameSpec,
    candidate: &ReferencePoint,
    probes_per_agent: usize,
    rng: &mut R,
) -> Result<GneCheck> {
    spec.check_profile(&candidate.x_star, &candidate.y_star)?;
    let (gx, gy) = pseudo_gradient(spec, &candidate.x_star, &candidate.y_star)?;
    let mut followers = Vec::with_capacity(spec.n_followers);
    for ((g, at), bx) in gx.iter().zip(&candidate.x_star).zip(&spec.follower_sets) {
        let mut worst = worst_vertex(g, at, bx).min(0.0);
        for _ in 0..probes_per_agent {
            worst = worst.min(g.dot(&(bx.sample(rng) - at)));
        }
        followers.push(worst);
    }
    let at = &candidate.y_star;
    let mut leader = worst_vertex(&gy, at, &spec.leader_set).min(0.0);
    for _ in 0..probes_per_agent {
        leader = leader.min(gy.dot(&(spec.leader_set.sample(rng) - at)));
    }
    Ok(GneCheck { followers, leader })
}

/// Strong-convexity and Lipschitz constants of the sub-gradient maps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingConstants {
    pub strong_followers: Vec<f64>,
    pub strong_leader: f64,
    pub lipschitz_follower: f64,
    pub lipschitz_leader: f64,
}

impl CouplingConstants {
    /// `max(2 L, L_0)`.
    pub fn l_bar(&self) -> f64 {
        (2.0 * self.lipschitz_follower).max(self.lipschitz_leader)
    }
}

/// Constants the convergence analysis needs, gathered in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConstants {
    pub coupling: CouplingConstants,
    pub bounds: SubgradientBounds,
}

impl GameConstants {
    pub fn l_bar(&self) -> f64 {
        self.coupling.l_bar()
    }
}

const DEGENERATE: f64 = 1e-12;

/// Sampled estimates: `C` is the minimum strong-monotonicity quotient, `L` the
/// maximum Lipschitz quotient in `(sigma, y)`. Exact for affine oracles.
pub fn estimate_constants<R: Rng + ?Sized>(
    spec: &GameSpec,
    sample_pairs: usize,
    rng: &mut R,
) -> Result<CouplingConstants> {
    if sample_pairs < 100 {
        return Err(Error::Input(format!(
            "sample_pairs must be at least 100, got {sample_pairs}"
        )));
    }
    let ybox = &spec.leader_set;
    let mut strong_followers = Vec::with_capacity(spec.n_followers);
    let mut lipschitz_follower = 0.0f64;
    for n in 0..spec.n_followers {
        let xbox = &spec.follower_sets[n];
        let sbox = spec.follower_aggregate_box(n);
        let mut c = f64::INFINITY;
        for i in 0..sample_pairs {
            let (x1, x2) = (xbox.sample(rng), xbox.sample(rng));
            let (s, y) = (sbox.sample(rng), ybox.sample(rng));
            let dx = &x1 - &x2;
            let nx = dx.norm_squared();
            if nx > DEGENERATE {
                let d1 = spec.follower_subgradient(n, &x1, &s, &y)?;
                let d2 = spec.follower_subgradient(n, &x2, &s, &y)?;
                c = c.min((d1 - d2).dot(&dx) / nx);
            }

            // alternate joint, sigma-only and y-only perturbations
            let x = xbox.sample(rng);
            let (mut s1, mut y1) = (sbox.sample(rng), ybox.sample(rng));
            let (s2, y2) = (sbox.sample(rng), ybox.sample(rng));
            match i % 3 {
                1 => y1 = y2.clone(),
                2 => s1 = s2.clone(),
                _ => {}
            }
            let denom = (&s1 - &s2).norm() + (&y1 - &y2).norm();
            if denom > DEGENERATE {
                let d1 = spec.follower_subgradient(n, &x, &s1, &y1)?;
                let d2 = spec.follower_subgradient(n, &x, &s2, &y2)?;
                lipschitz_follower = lipschitz_follower.max((d1 - d2).norm() / denom);
            }
        }
        strong_followers.push(c);
    }

    let s0box = spec.leader_aggregate_box();
    let mut strong_leader = f64::INFINITY;
    let mut lipschitz_leader = 0.0f64;
    for _ in 0..sample_pairs {
        let (y1, y2, s) = (ybox.sample(rng), ybox.sample(rng), s0box.sample(rng));
        let dy = &y1 - &y2;
        let ny = dy.norm_squared();
        if ny > DEGENERATE {
            let d1 = spec.leader_subgradient(&y1, &s)?;
            let d2 = spec.leader_subgradient(&y2, &s)?;
            strong_leader = strong_leader.min((d1 - d2).dot(&dy) / ny);
        }
        let (y, s1, s2) = (ybox.sample(rng), s0box.sample(rng), s0box.sample(rng));
        let ds = (&s1 - &s2).norm();
        if ds > DEGENERATE {
            let d1 = spec.leader_subgradient(&y, &s1)?;
            let d2 = spec.leader_subgradient(&y, &s2)?;
            lipschitz_leader = lipschitz_leader.max((d1 - d2).norm() / ds);
        }
    }
    Ok(CouplingConstants {
        strong_followers,
        strong_leader,
        lipschitz_follower,
        lipschitz_leader,
    })
}

pub const SUFFICIENT_ONLY: &str =
    "these conditions are sufficient, not necessary; convergence may still occur when they fail";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub strong_followers: Vec<f64>,
    pub strong_leader: f64,
    pub lipschitz_follower: f64,
    pub lipschitz_leader: f64,
    pub l_bar: f64,
    pub kappa: f64,
    pub delta: f64,
    pub k_bar: usize,
    /// `C_n - (kappa / delta) L̄`.
    pub follower_margins: Vec<f64>,
    /// `C_0 - kappa K̄ L̄`.
    pub leader_margin: f64,
    pub holds: bool,
    pub note: &'static str,
}

pub fn check_theorem_conditions(
    constants: &CouplingConstants,
    kappa: f64,
    delta: f64,
    k_bar: usize,
) -> ConditionReport {
    let l_bar = constants.l_bar();
    let follower_margins: Vec<f64> = constants
        .strong_followers
        .iter()
        .map(|c| c - kappa / delta * l_bar)
        .collect();
    let leader_margin = constants.strong_leader - kappa * k_bar as f64 * l_bar;
    let holds = leader_margin > 0.0 && follower_margins.iter().all(|m| *m > 0.0);
    ConditionReport {
        strong_followers: constants.strong_followers.clone(),
        strong_leader: constants.strong_leader,
        lipschitz_follower: constants.lipschitz_follower,
        lipschitz_leader: constants.lipschitz_leader,
        l_bar,
        kappa,
        delta,
        k_bar,
        follower_margins,
        leader_margin,
        holds,
        note: SUFFICIENT_ONLY,
    }
}

/// `Psi(z, z') = (z - z')^T (g(z) - g(z'))` with true aggregates.
pub fn psi(spec: &GameSpec, a: &Profile, b: &Profile) -> Result<f64> {
    let (ga, gya) = pseudo_gradient(spec, &a.x, &a.y)?;
    let (gb, gyb) = pseudo_gradient(spec, &b.x, &b.y)?;
    let mut total = (&a.y - &b.y).dot(&(gya - gyb));
    for n in 0..spec.n_followers {
        total += (&a.x[n] - &b.x[n]).dot(&(&ga[n] - &gb[n]));
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityProbe {
    pub min_psi: f64,
    pub pairs_evaluated: usize,
    /// `(C_0 - L̄)‖y - y'‖² + sum_n (C_n - L̄)‖x_n - x_n'‖²` at the minimizing pair.
    pub certificate: Option<f64>,
}

pub fn monotonicity_probe<R: Rng + ?Sized>(
    spec: &GameSpec,
    pairs: usize,
    constants: Option<&CouplingConstants>,
    rng: &mut R,
) -> Result<MonotonicityProbe> {
    if pairs == 0 {
        return Err(Error::Input("pairs must be at least 1".to_string()));
    }
    let sample = |rng: &mut R| {
        Profile::new(
            spec.follower_sets.iter().map(|b| b.sample(rng)).collect(),
            spec.leader_set.sample(rng),
        )
    };
    let mut min_psi = f64::INFINITY;
    let mut argmin = None;
    let mut evaluated = 0;
    for _ in 0..pairs {
        let (a, b) = (sample(rng), sample(rng));
        if a.squared_distance(&b.x, &b.y) <= DEGENERATE {
            continue;
        }
        let v = psi(spec, &a, &b)?;
        evaluated += 1;
        if v < min_psi {
            min_psi = v;
            argmin = Some((a, b));
        }
    }
    let certificate = match (constants, argmin) {
        (Some(c), Some((a, b))) => {
            let l_bar = c.l_bar();
            let mut cert = (c.strong_leader - l_bar) * (&a.y - &b.y).norm_squared();
            for n in 0..spec.n_followers {
                cert += (c.strong_followers[n] - l_bar) * (&a.x[n] - &b.x[n]).norm_squared();
            }
            Some(cert)
        }
        _ => None,
    };
    Ok(MonotonicityProbe {
        min_psi,
        pairs_evaluated: evaluated,
        certificate,
    })
}

/// Profile `x`/`y` with one scalar component shifted, for building perturbed candidates.
pub fn perturbed(reference: &ReferencePoint, agent: Agent, component: usize, by: f64) -> ReferencePoint {
    let mut out = reference.clone();
    match agent {
        Agent::Follower(n) => out.x_star[n][component] += by,
        Agent::Leader => out.y_star[component] += by,
    }
    out
}

/// Wraps raw slices into a reference point with zero residual.
pub fn reference_from(x: Vec<Strategy>, y: Strategy) -> ReferencePoint {
    ReferencePoint {
        x_star: x,
        y_star: y,
        residual: 0.0,
        iterations_used: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::run_stream;
    use crate::game::{decoupled_game, quadratic_test_game, AffineFollower, AffineLeader};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use std::sync::Arc;

    fn s(v: f64) -> Strategy {
        DVector::from_element(1, v)
    }

    fn analytic() -> ReferencePoint {
        reference_from(vec![s(10.0 / 59.0), s(10.0 / 59.0)], s(-1.0 / 59.0))
    }

    /// Independent check: Cramer's rule on `6x + y = 1`, `x + 10y = 0`.
    #[test]
    fn analytic_point_solves_the_stationarity_system() {
        let det = 6.0 * 10.0 - 1.0 * 1.0;
        let x = (1.0 * 10.0 - 1.0 * 0.0) / det;
        let y = (6.0 * 0.0 - 1.0 * 1.0) / det;
        assert_abs_diff_eq!(x, 10.0 / 59.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y, -1.0 / 59.0, epsilon = 1e-15);
    }

    fn quadratic_constants() -> CouplingConstants {
        estimate_constants(&quadratic_test_game(), 1_000, &mut run_stream(0, 0)).unwrap()
    }

    #[test]
    fn solver_matches_the_analytic_equilibrium() {
        let g = quadratic_test_game();
        let step = default_reference_step(&quadratic_constants());
        let r = solve_reference_gne(&g, &SolverOptions::new(step, 1e-10, 1_000_000)).unwrap();
        let a = analytic();
        for n in 0..2 {
            assert_abs_diff_eq!(r.x_star[n][0], a.x_star[n][0], epsilon = 1e-9);
        }
        assert_abs_diff_eq!(r.y_star[0], a.y_star[0], epsilon = 1e-9);
        assert!(r.residual < 1e-10);
    }

    #[test]
    fn decoupled_solution_is_the_projected_target() {
        let g = decoupled_game(&[0.3, 2.0, -5.0], 0.5);
        let r = solve_reference_gne(&g, &SolverOptions::new(0.5, 1e-12, 10_000)).unwrap();
        assert_abs_diff_eq!(r.x_star[0][0], 0.3, epsilon = 1e-11);
        assert_eq!(r.x_star[1][0], 1.0);
        assert_eq!(r.x_star[2][0], -1.0);
        assert_abs_diff_eq!(r.y_star[0], 0.5, epsilon = 1e-11);
    }

    #[test]
    fn non_convergence_carries_the_best_iterate() {
        let g = quadratic_test_game();
        match solve_reference_gne(&g, &SolverOptions::new(0.01, 1e-14, 5)) {
            Err(Error::NonConvergence {
                iterations,
                residual,
                best,
            }) => {
                assert_eq!(iterations, 5);
                assert_eq!(best.residual, residual);
                assert!(residual.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn verification_accepts_equilibria_and_flags_perturbations() {
        let g = quadratic_test_game();
        let mut rng = run_stream(1, 0);
        let ok = verify_gne(&g, &analytic(), 1_000, &mut rng).unwrap();
        assert!(ok.worst().1 >= -1e-8);

        let bad = perturbed(&analytic(), Agent::Follower(0), 0, 0.1);
        let check = verify_gne(&g, &bad, 1_000, &mut rng).unwrap();
        assert!(check.followers[0] < 0.0);
        assert_eq!(check.worst().0, Some(Agent::Follower(0)));
    }

    #[test]
    fn verification_of_solver_output_within_tolerance() {
        let g = quadratic_test_game();
        let tol = 1e-10;
        let r = solve_reference_gne(&g, &SolverOptions::new(0.01, tol, 1_000_000)).unwrap();
        let b = crate::game::estimate_bounds(&g, 3, 1.1).unwrap();
        let check = verify_gne(&g, &r, 500, &mut run_stream(2, 0)).unwrap();
        assert!(check.within(|a| match a {
            Agent::Follower(n) => gne_tolerance(tol, b.follower_bound(n)),
            Agent::Leader => gne_tolerance(tol, b.leader_bound()),
        }));
    }

    #[test]
    fn boundary_equilibrium_passes_the_variational_test() {
        // targets outside the box: optimum on the faces, gradient points outward
        let g = decoupled_game(&[3.0, -3.0], 2.0);
        let r = solve_reference_gne(&g, &SolverOptions::new(0.5, 1e-12, 1_000)).unwrap();
        let check = verify_gne(&g, &r, 1_000, &mut run_stream(3, 0)).unwrap();
        assert!(check.followers.iter().all(|v| *v >= 0.0));
        assert!(check.leader >= 0.0);
    }

    #[test]
    fn constants_are_exact_on_affine_oracles() {
        let c = quadratic_constants();
        for v in &c.strong_followers {
            assert_abs_diff_eq!(*v, 5.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(c.strong_leader, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.lipschitz_follower, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.lipschitz_leader, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.l_bar(), 2.0, epsilon = 1e-9);

        let d = estimate_constants(&decoupled_game(&[0.1, 0.2], 0.0), 200, &mut run_stream(0, 1)).unwrap();
        assert_eq!(d.lipschitz_follower, 0.0);
        assert_eq!(d.lipschitz_leader, 0.0);
        assert!(estimate_constants(&quadratic_test_game(), 99, &mut run_stream(0, 0)).is_err());
    }

    #[test]
    fn scaling_the_oracles_scales_the_constants() {
        let mut g = quadratic_test_game();
        for n in 0..2 {
            g.follower_oracles[n] = Arc::new(AffineFollower::scalar(10.0, 2.0, 2.0, -2.0));
        }
        g.leader_oracle = Arc::new(AffineLeader::scalar(20.0, 2.0, 0.0));
        let c = estimate_constants(&g, 1_000, &mut run_stream(0, 0)).unwrap();
        assert_abs_diff_eq!(c.strong_followers[0], 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.lipschitz_follower, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn condition_checker_arithmetic() {
        let c = CouplingConstants {
            strong_followers: vec![5.0, 5.0],
            strong_leader: 10.0,
            lipschitz_follower: 1.0,
            lipschitz_leader: 1.0,
        };
        let r = check_theorem_conditions(&c, 1.0, 1.0, 2);
        assert_eq!(r.l_bar, 2.0);
        assert_eq!(r.follower_margins, vec![3.0, 3.0]);
        assert_eq!(r.leader_margin, 6.0);
        assert!(r.holds);

        let r = check_theorem_conditions(&c, 1.0, 0.7, 2);
        assert_abs_diff_eq!(r.follower_margins[0], 5.0 - 2.0 / 0.7, epsilon = 1e-12);
        assert!(r.holds);

        let r = check_theorem_conditions(&c, 1.0, 1.0, 10);
        assert_eq!(r.leader_margin, -10.0);
        assert!(!r.holds);
        assert!(r.note.contains("sufficient"));
    }

    #[test]
    fn probe_finds_positive_psi_on_the_quadratic_game() {
        let g = quadratic_test_game();
        let c = quadratic_constants();
        let p = monotonicity_probe(&g, 10_000, Some(&c), &mut run_stream(5, 0)).unwrap();
        assert!(p.min_psi > 0.0);
        assert!(p.certificate.unwrap() > 0.0);
        assert!(p.min_psi >= p.certificate.unwrap() - 1e-12);
        let z = analytic().profile();
        assert_eq!(psi(&g, &z, &z).unwrap(), 0.0);
    }

    #[test]
    fn probe_detects_an_anti_monotone_oracle() {
        let mut g = decoupled_game(&[0.0, 0.0], 0.0);
        for n in 0..2 {
            g.follower_oracles[n] = Arc::new(AffineFollower::scalar(-1.0, 0.0, 0.0, 0.0));
        }
        g.leader_oracle = Arc::new(AffineLeader::scalar(-1.0, 0.0, 0.0));
        let p = monotonicity_probe(&g, 100, None, &mut run_stream(6, 0)).unwrap();
        assert!(p.min_psi < 0.0);
        assert!(p.certificate.is_none());
    }
}
