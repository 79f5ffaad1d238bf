//! (1+1) evolution strategy.
//!
//! One parent, one Gaussian descendant per iteration. The descendant replaces
//! the parent only when its cost is strictly lower; the search radius grows
//! by `growth_factor` on every acceptance and shrinks by `shrink_factor` on
//! every rejection. After `a` acceptances and `b` rejections the radius is
//! exactly `initial_radius · growth^a · shrink^b`.

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvoConfig {
    pub growth_factor: f64,
    pub shrink_factor: f64,
    pub initial_radius: f64,
    /// The run stops once the radius drops below this value.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Per-parameter step multipliers: a mutation moves coordinate `i` by
    /// `radius · scales[i] · z`. Empty means all ones.
    pub scales: Vec<f64>,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            growth_factor: 1.05,
            shrink_factor: 0.98,
            initial_radius: 6.25e-3,
            epsilon: 1.5e-6,
            max_iterations: 300,
            seed: 0,
            scales: Vec::new(),
        }
    }
}

impl EvoConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidConfig(what));
        if !(self.growth_factor > 1.0 && self.growth_factor.is_finite()) {
            return bad(format!("growth factor {} must exceed 1", self.growth_factor));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return bad(format!("shrink factor {} outside (0, 1)", self.shrink_factor));
        }
        if !(self.initial_radius > 0.0 && self.initial_radius.is_finite()) {
            return bad(format!("initial radius {} must be positive", self.initial_radius));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if self.max_iterations == 0 {
            return bad("max iterations must be positive".into());
        }
        if !self.scales.is_empty() {
            if self.scales.len() != dim {
                return bad(format!(
                    "{} scales for {dim} parameters",
                    self.scales.len()
                ));
            }
            if self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return bad("scales must be positive".into());
            }
        }
        Ok(())
    }

    fn scale(&self, i: usize) -> f64 {
        self.scales.get(i).copied().unwrap_or(1.0)
    }

    /// `initial_radius · growth^accepted · shrink^rejected`.
    pub fn radius_after(&self, accepted: usize, rejected: usize) -> f64 {
        self.initial_radius
            * self.growth_factor.powi(accepted as i32)
            * self.shrink_factor.powi(rejected as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    RadiusBelowEpsilon,
    MaxIterations,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::RadiusBelowEpsilon => "radius_below_epsilon",
            StopReason::MaxIterations => "max_iterations",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Parent cost after this iteration.
    pub cost: f64,
    /// Radius after this iteration.
    pub radius: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub parent: Vec<f64>,
    pub parent_cost: f64,
    pub radius: f64,
    pub iteration: usize,
    pub accepted: usize,
    rng: ChaCha8Rng,
    pub trace: Vec<TraceEntry>,
}

impl EvolutionState {
    /// Starting state; `parent_cost` must be the (finite) cost of `parent`.
    pub fn new(parent: Vec<f64>, parent_cost: f64, cfg: &EvoConfig) -> Self {
        Self {
            parent,
            parent_cost,
            radius: cfg.initial_radius,
            iteration: 0,
            accepted: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            trace: Vec::new(),
        }
    }

    pub fn rejected(&self) -> usize {
        self.iteration - self.accepted
    }
}

/// One mutation/selection round. A non-finite cost counts as a failure and
/// is always rejected.
pub fn step<F>(mut state: EvolutionState, cost: &mut F, cfg: &EvoConfig) -> EvolutionState
where
    F: FnMut(&[f64]) -> f64,
{
    let child: Vec<f64> = state
        .parent
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let z: f64 = StandardNormal.sample(&mut state.rng);
            p + state.radius * cfg.scale(i) * z
        })
        .collect();
    let child_cost = cost(&child);
    let accepted = child_cost.is_finite() && child_cost < state.parent_cost;
    if accepted {
        state.parent = child;
        state.parent_cost = child_cost;
        state.accepted += 1;
    }
    state.iteration += 1;
    state.radius = cfg.radius_after(state.accepted, state.rejected());
    state.trace.push(TraceEntry {
        iteration: state.iteration,
        cost: state.parent_cost,
        radius: state.radius,
        accepted,
    });
    state
}

#[derive(Debug, Clone)]
pub struct EvoOutcome {
    pub best: Vec<f64>,
    pub best_cost: f64,
    pub initial_cost: f64,
    pub reason: StopReason,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
}

/// Minimizes `cost` from `initial` until the radius falls below epsilon or
/// the iteration budget runs out.
pub fn run<F>(initial: &[f64], mut cost: F, cfg: &EvoConfig) -> Result<EvoOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate(initial.len())?;
    let initial_cost = cost(initial);
    if !initial_cost.is_finite() {
        return Err(Error::InvalidStart(format!(
            "cost at the initial point is {initial_cost}"
        )));
    }
    let mut state = EvolutionState::new(initial.to_vec(), initial_cost, cfg);
    while state.iteration < cfg.max_iterations && state.radius >= cfg.epsilon {
        state = step(state, &mut cost, cfg);
    }
    let reason = if state.radius < cfg.epsilon {
        StopReason::RadiusBelowEpsilon
    } else {
        StopReason::MaxIterations
    };
    Ok(EvoOutcome {
        best: state.parent,
        best_cost: state.parent_cost,
        initial_cost,
        reason,
        iterations: state.iteration,
        trace: state.trace,
    })
}

/// Writes `iteration,cost,radius` rows with a header line.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,cost,radius")?;
    for e in trace {
        writeln!(out, "{},{},{}", e.iteration, e.cost, e.radius)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> EvoConfig {
        EvoConfig {
            seed,
            ..EvoConfig::default()
        }
    }

    fn start(cost: f64) -> EvolutionState {
        EvolutionState::new(vec![0.0], cost, &cfg(1))
    }

    #[test]
    fn improvement_is_accepted_and_radius_grows() {
        let s = step(start(10.0), &mut |_: &[f64]| 1.0, &cfg(1));
        assert_eq!(s.parent_cost, 1.0);
        assert_ne!(s.parent, vec![0.0]);
        assert!((s.radius - 6.25e-3 * 1.05).abs() < 1e-18);
        assert!(s.trace[0].accepted);
    }

    #[test]
    fn tie_is_rejected() {
        let s = step(start(1.0), &mut |_: &[f64]| 1.0, &cfg(1));
        assert_eq!(s.parent, vec![0.0]);
        assert!((s.radius - 6.25e-3 * 0.98).abs() < 1e-18);
        assert_eq!(s.iteration, 1);
    }

    #[test]
    fn failures_are_rejected() {
        for bad in [f64::INFINITY, f64::NAN] {
            let s = step(start(1.0), &mut |_: &[f64]| bad, &cfg(1));
            assert_eq!(s.parent_cost, 1.0);
            assert!(s.radius < 6.25e-3);
        }
        // a failure is rejected even when the parent itself is +∞
        let s = step(start(f64::INFINITY), &mut |_: &[f64]| f64::INFINITY, &cfg(1));
        assert_eq!(s.accepted, 0);
    }

    #[test]
    fn invalid_start() {
        let err = run(&[0.0], |_| f64::INFINITY, &cfg(0)).unwrap_err();
        assert!(matches!(err, Error::InvalidStart(_)));
    }

    #[test]
    fn constant_cost_decays_to_epsilon() {
        let c = EvoConfig { max_iterations: 10_000, ..cfg(4) };
        let out = run(&[1.0, 2.0], |_| 5.0, &c).unwrap();
        let expected = ((c.epsilon / c.initial_radius).ln() / c.shrink_factor.ln()).ceil() as usize;
        assert_eq!(expected, 413);
        assert_eq!(out.iterations, expected);
        assert_eq!(out.reason, StopReason::RadiusBelowEpsilon);
        assert_eq!(out.best, vec![1.0, 2.0]);
    }

    #[test]
    fn quadratic_reaches_minimum() {
        let out = run(&[0.0], |x| (x[0] - 3.0).powi(2), &cfg(42)).unwrap();
        assert!((out.best[0] - 3.0).abs() < 1e-2, "{:?}", out.best);
        let again = run(&[0.0], |x| (x[0] - 3.0).powi(2), &cfg(42)).unwrap();
        assert_eq!(out.best[0].to_bits(), again.best[0].to_bits());
        assert_eq!(out.trace, again.trace);
    }

    #[test]
    fn scales_reach_a_far_optimum() {
        // optimum only moved in the coordinate with the large step multiplier
        let c = EvoConfig { scales: vec![1.0, 100.0], ..cfg(7) };
        let out = run(&[0.0, 0.0], |x| x[0].powi(2) + ((x[1] - 150.0) / 100.0).powi(2), &c).unwrap();
        assert!(out.best[0].abs() < 0.05, "{:?}", out.best);
        assert!((out.best[1] - 150.0).abs() < 5.0, "{:?}", out.best);
    }

    #[test]
    fn trace_radius_closed_form_and_monotone_cost() {
        let c = cfg(9);
        let out = run(&[0.0, 0.0], |x| (x[0] - 1.0).powi(2) + (x[1] + 0.5).powi(2), &c).unwrap();
        assert_eq!(out.trace.len(), out.iterations);
        let mut accepted = 0;
        let mut prev = out.initial_cost;
        for e in &out.trace {
            accepted += e.accepted as usize;
            assert_eq!(e.radius, c.radius_after(accepted, e.iteration - accepted));
            assert!(e.cost <= prev);
            prev = e.cost;
        }
    }

    #[test]
    fn config_validation() {
        assert!(EvoConfig { growth_factor: 1.0, ..cfg(0) }.validate(1).is_err());
        assert!(EvoConfig { shrink_factor: 1.0, ..cfg(0) }.validate(1).is_err());
        assert!(EvoConfig { scales: vec![1.0], ..cfg(0) }.validate(2).is_err());
        assert!(EvoConfig { scales: vec![1.0, 0.0], ..cfg(0) }.validate(2).is_err());
        assert!(run(&[0.0, 0.0], |_| 0.0, &EvoConfig { scales: vec![1.0], ..cfg(0) }).is_err());
    }

    #[test]
    fn trace_csv() {
        let out = run(&[0.0], |x| x[0].abs(), &EvoConfig { max_iterations: 3, ..cfg(0) }).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&out.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "iteration,cost,radius");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
    }
}
