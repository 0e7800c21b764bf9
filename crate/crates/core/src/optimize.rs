//! Derivative-free minimization over bounded physical parameters, and sweeps.
//!
//! Bounded parameters are optimized in an unbounded coordinate through a
//! logistic map onto their box (logarithmic boxes for rates and times);
//! periodic parameters are left unbounded and wrapped on output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::hz;
use crate::entanglement::{run_protocol, ProtocolConfig};
use crate::error::{Error, Result};
use crate::model::{build_cavity_feedback, build_mirror_feedback, LinearDelayModel};
use crate::params::{AuxCavityParams, AuxMirrorParams, OmParams, PathParams};
use crate::spectral::{lyapunov_phonon_occupation, phonon_occupation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
    /// Periodic with period `hi - lo`; bounds only seed the starts.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, scale: Scale) -> Self {
        Self {
            name: name.into(),
            lo,
            hi,
            scale,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo;
        let ok = ok && (self.scale != Scale::Log || self.lo > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "bounds of `{}` must be finite with lo < hi (and lo > 0 on a log scale), got [{}, {}]",
                self.name, self.lo, self.hi
            )))
        }
    }

    /// Physical value from the unbounded coordinate.
    pub fn to_physical(&self, y: f64) -> f64 {
        let s = 1.0 / (1.0 + (-y).exp());
        match self.scale {
            Scale::Linear => self.lo + (self.hi - self.lo) * s,
            Scale::Log => (self.lo.ln() + (self.hi.ln() - self.lo.ln()) * s).exp().clamp(self.lo, self.hi),
            Scale::Periodic => {
                let p = self.hi - self.lo;
                self.lo + (y - self.lo).rem_euclid(p)
            }
        }
    }

    /// Unbounded coordinate of a physical value (clamped just inside the box).
    pub fn to_unbounded(&self, x: f64) -> f64 {
        let frac = |u: f64| {
            let u = u.clamp(1e-9, 1.0 - 1e-9);
            (u / (1.0 - u)).ln()
        };
        match self.scale {
            Scale::Linear => frac((x - self.lo) / (self.hi - self.lo)),
            Scale::Log => frac((x.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln())),
            Scale::Periodic => x,
        }
    }

    fn from_unit(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Periodic => self.lo + (self.hi - self.lo) * u,
            _ => {
                let u = u.clamp(1e-6, 1.0 - 1e-6);
                (u / (1.0 - u)).ln()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    /// Simplex diameter in the unbounded coordinates.
    pub x_tol: f64,
    /// Spread of simplex values relative to the best value.
    pub f_rel_tol: f64,
    pub max_evals: usize,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            x_tol: 1e-4,
            f_rel_tol: 1e-6,
            max_evals: 2000,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub starts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub start: usize,
    pub iteration: usize,
    pub params: Vec<f64>,
    pub value: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Minimum {
    pub params: Vec<f64>,
    pub value: f64,
    pub start: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

struct SimplexRun {
    x: Vec<f64>,
    fx: f64,
    converged: bool,
}

/// Nelder–Mead on an unbounded domain. `f` may return `+inf` for infeasible points.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> (Vec<f64>, f64, bool) {
    let r = simplex(&mut f, x0, opts);
    (r.x, r.fx, r.converged)
}

fn simplex<F: FnMut(&[f64]) -> f64>(f: &mut F, x0: &[f64], opts: &NelderMeadOptions) -> SimplexRun {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let mut converged = false;
    if n == 0 {
        return SimplexRun {
            x: vec![],
            fx: vals[0],
            converged: true,
        };
    }
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let diameter = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = vals[n] - vals[0];
        if vals[0].is_finite() && diameter < opts.x_tol && spread <= opts.f_rel_tol * vals[0].abs().max(1e-300) {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (pts[n][k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(-0.5);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for i in 1..=n {
            let p: Vec<f64> = (0..n).map(|k| pts[0][k] + 0.5 * (pts[i][k] - pts[0][k])).collect();
            vals[i] = f(&p);
            pts[i] = p;
        }
        evals += n;
    }
    SimplexRun {
        x: pts[0].clone(),
        fx: vals[0],
        converged,
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Low-discrepancy points in the unit cube: Halton sequence with a seeded
/// random shift modulo one.
pub fn halton_points(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|i| {
            (0..dim)
                .map(|d| (radical_inverse(i as u64 + 1, PRIMES[d]) + shift[d]).fract())
                .collect()
        })
        .collect()
}

/// Multi-start bounded minimization. `warm_starts` (physical values) run
/// before the low-discrepancy starts. Evaluation errors count as infeasible
/// (`+inf`); if no start ever finds a finite value the collected diagnostics
/// are returned as [`Error::Infeasible`].
pub fn minimize<F>(f: F, params: &[ParamSpec], opts: &MinimizeOptions, warm_starts: &[Vec<f64>]) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    for p in params {
        p.validate()?;
    }
    let dim = params.len();
    let mut starts: Vec<Vec<f64>> = warm_starts
        .iter()
        .map(|x| params.iter().zip(x).map(|(p, v)| p.to_unbounded(*v)).collect())
        .collect();
    for u in halton_points(opts.starts, dim, opts.seed) {
        starts.push(params.iter().zip(&u).map(|(p, v)| p.from_unit(*v)).collect());
    }
    let physical = |y: &[f64]| -> Vec<f64> { params.iter().zip(y).map(|(p, v)| p.to_physical(*v)).collect() };

    let runs: Vec<(SimplexRun, Vec<TraceEntry>, Vec<String>)> = starts
        .par_iter()
        .enumerate()
        .map(|(k, y0)| {
            let mut trace = Vec::new();
            let mut errors = Vec::new();
            let mut obj = |y: &[f64]| {
                let x = physical(y);
                let (value, feasible) = match f(&x) {
                    Ok(v) if v.is_finite() => (v, true),
                    Ok(_) => (f64::INFINITY, false),
                    Err(e) => {
                        if errors.len() < 4 {
                            errors.push(e.to_string());
                        }
                        (f64::INFINITY, false)
                    }
                };
                trace.push(TraceEntry {
                    start: k,
                    iteration: trace.len(),
                    params: x,
                    value,
                    feasible,
                });
                value
            };
            let run = simplex(&mut obj, y0, &opts.nelder_mead);
            (run, trace, errors)
        })
        .collect();

    let mut best: Option<(usize, &SimplexRun)> = None;
    for (k, (run, _, _)) in runs.iter().enumerate() {
        if run.fx.is_finite() && best.map_or(true, |(_, b)| run.fx < b.fx) {
            best = Some((k, run));
        }
    }
    let Some((k, run)) = best else {
        let mut diag: Vec<String> = runs.iter().flat_map(|r| r.2.iter().cloned()).collect();
        diag.sort();
        diag.dedup();
        return Err(Error::Infeasible(if diag.is_empty() {
            "objective was never finite".into()
        } else {
            diag.join("; ")
        }));
    };
    let params_out = physical(&run.x);
    let value = run.fx;
    let converged = run.converged;
    let trace = runs.into_iter().flat_map(|r| r.1).collect();
    Ok(Minimum {
        params: params_out,
        value,
        start: k,
        converged,
        trace,
    })
}

/// CSV with columns `start, iteration, <names...>, value, feasible`.
pub fn trace_to_csv(trace: &[TraceEntry], names: &[String]) -> String {
    let mut out = String::from("start,iteration");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push_str(",value,feasible\n");
    for t in trace {
        out.push_str(&format!("{},{}", t.start, t.iteration));
        for p in &t.params {
            out.push_str(&format!(",{p:e}"));
        }
        out.push_str(&format!(",{:e},{}\n", t.value, t.feasible));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord<T, R> {
    pub index: usize,
    pub point: T,
    pub outcome: std::result::Result<R, String>,
}

/// Evaluates every grid point (concurrently) and returns the records in grid
/// order. Failures are captured per point.
pub fn sweep<T, R, F>(points: &[T], eval: F) -> Vec<SweepRecord<T, R>>
where
    T: Clone + Send + Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    points
        .par_iter()
        .enumerate()
        .map(|(index, p)| SweepRecord {
            index,
            point: p.clone(),
            outcome: eval(p).map_err(|e| e.to_string()),
        })
        .collect()
}

/// Tunable parameters of the cooling and entanglement scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    PhiS,
    DeltaA,
    Kappa1,
    Kappa2,
    TauS,
    GammaTm,
    TauP,
}

impl Knob {
    pub fn name(self) -> &'static str {
        match self {
            Knob::PhiS => "phi_s",
            Knob::DeltaA => "delta_a",
            Knob::Kappa1 => "kappa1",
            Knob::Kappa2 => "kappa2",
            Knob::TauS => "tau_s",
            Knob::GammaTm => "gamma_tm",
            Knob::TauP => "tau_p",
        }
    }

    /// Default search range for a given mechanical frequency (rad/s, s, 1/s).
    pub fn default_spec(self, omega_m: f64) -> ParamSpec {
        use std::f64::consts::PI;
        let (lo, hi, scale) = match self {
            Knob::PhiS => (-PI, PI, Scale::Periodic),
            Knob::DeltaA => (-10.0 * omega_m, 10.0 * omega_m, Scale::Linear),
            Knob::Kappa1 => (hz(10e3), hz(20e6), Scale::Log),
            Knob::Kappa2 => (hz(10e3), hz(5e6), Scale::Log),
            Knob::TauS => (0.0, 1e-6, Scale::Linear),
            Knob::GammaTm => (1e2, 1e7, Scale::Log),
            Knob::TauP => (1e-6, 1e-2, Scale::Log),
        };
        ParamSpec::new(self.name(), lo, hi, scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Auxiliary {
    Cavity(AuxCavityParams),
    Mirror(AuxMirrorParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingScenario {
    pub om: OmParams,
    pub aux: Auxiliary,
    pub path: PathParams,
}

impl CoolingScenario {
    pub fn build(&self) -> Result<LinearDelayModel> {
        match &self.aux {
            Auxiliary::Cavity(a) => build_cavity_feedback(&self.om, a, &self.path),
            Auxiliary::Mirror(m) => build_mirror_feedback(&self.om, m, &self.path),
        }
    }

    /// Steady phonon number: the Lyapunov solution for zero delay, the
    /// spectral integral otherwise. Both refuse unstable models.
    pub fn phonon_number(&self) -> Result<f64> {
        let model = self.build()?;
        if model.is_ode() {
            lyapunov_phonon_occupation(&model)
        } else {
            phonon_occupation(&model)
        }
    }

    fn apply(&mut self, knob: Knob, v: f64) -> Result<()> {
        match (knob, &mut self.aux) {
            (Knob::PhiS, _) => self.path.phi_s = v,
            (Knob::TauS, _) => self.path.tau_s = v,
            (Knob::DeltaA, Auxiliary::Cavity(a)) => a.delta_a = v,
            (Knob::Kappa1, Auxiliary::Cavity(a)) => a.kappa1 = v,
            (Knob::Kappa2, Auxiliary::Cavity(a)) => a.kappa2 = v,
            (k, _) => {
                return Err(Error::Precondition(format!(
                    "`{}` is not a parameter of this cooling scenario",
                    k.name()
                )))
            }
        }
        Ok(())
    }
}

fn apply_entangle(cfg: &mut ProtocolConfig, knob: Knob, v: f64) -> Result<()> {
    match knob {
        Knob::PhiS => cfg.schedule.phi_s = v,
        Knob::DeltaA => cfg.schedule.aux.delta_a = v,
        Knob::Kappa1 => cfg.schedule.aux.kappa1 = v,
        Knob::Kappa2 => cfg.schedule.aux.kappa2 = v,
        Knob::GammaTm => cfg.mode.gamma_tm = v,
        Knob::TauP => cfg.mode.tau_p = v,
        Knob::TauS => {
            return Err(Error::Precondition(
                "`tau_s` is not a parameter of the entanglement protocol".into(),
            ))
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "objective")]
pub enum Objective {
    PhononOccupation(CoolingScenario),
    DeltaEpr(ProtocolConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub knob: Knob,
    pub spec: ParamSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptProblem {
    pub objective: Objective,
    pub free: Vec<FreeParam>,
    pub options: MinimizeOptions,
}

impl OptProblem {
    pub fn new(objective: Objective, knobs: &[Knob], options: MinimizeOptions) -> Result<Self> {
        let omega_m = match &objective {
            Objective::PhononOccupation(s) => s.om.omega_m,
            Objective::DeltaEpr(c) => c.om.omega_m,
        };
        let free = knobs
            .iter()
            .map(|&knob| FreeParam {
                knob,
                spec: knob.default_spec(omega_m),
            })
            .collect();
        let p = Self {
            objective,
            free,
            options,
        };
        p.validate()?;
        Ok(p)
    }

    /// Every free parameter must be consumed by the scenario.
    pub fn validate(&self) -> Result<()> {
        let probe: Vec<f64> = self.free.iter().map(|f| 0.5 * (f.spec.lo + f.spec.hi)).collect();
        self.configure(&probe).map(|_| ())
    }

    fn configure(&self, x: &[f64]) -> Result<Objective> {
        let mut obj = self.objective.clone();
        for (f, &v) in self.free.iter().zip(x) {
            match &mut obj {
                Objective::PhononOccupation(s) => s.apply(f.knob, v)?,
                Objective::DeltaEpr(c) => apply_entangle(c, f.knob, v)?,
            }
        }
        Ok(obj)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        match self.configure(x)? {
            Objective::PhononOccupation(s) => s.phonon_number(),
            Objective::DeltaEpr(c) => run_protocol(&c).map(|r| r.delta_epr),
        }
    }

    /// Scenario with the given free-parameter values substituted.
    pub fn scenario_at(&self, x: &[f64]) -> Result<Objective> {
        self.configure(x)
    }

    pub fn names(&self) -> Vec<String> {
        self.free.iter().map(|f| f.spec.name.clone()).collect()
    }

    pub fn minimize(&self, warm_starts: &[Vec<f64>]) -> Result<Minimum> {
        let specs: Vec<ParamSpec> = self.free.iter().map(|f| f.spec.clone()).collect();
        minimize(|x| self.evaluate(x), &specs, &self.options, warm_starts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_quadratic_minimum() {
        let x0 = [0.3, -1.2, 2.0];
        let m = [[3.0, 0.5, 0.0], [0.5, 2.0, 0.3], [0.0, 0.3, 1.0]];
        let f = |x: &[f64]| {
            let d: Vec<f64> = (0..3).map(|i| x[i] - x0[i]).collect();
            let mut v = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    v += d[i] * m[i][j] * d[j];
                }
            }
            v
        };
        let opts = NelderMeadOptions {
            x_tol: 1e-8,
            f_rel_tol: 0.0,
            max_evals: 5000,
            initial_step: 0.5,
        };
        let (x, _, _) = nelder_mead(f, &[0.0, 0.0, 0.0], &opts);
        for i in 0..3 {
            assert!((x[i] - x0[i]).abs() < 1e-6, "{x:?}");
        }
    }

    #[test]
    fn bounded_transform_round_trips() {
        let p = ParamSpec::new("k", 1e3, 1e8, Scale::Log);
        for v in [2e3, 1e5, 9e7] {
            assert_relative_eq!(p.to_physical(p.to_unbounded(v)), v, max_relative = 1e-9);
        }
        for y in [-50.0, 0.0, 50.0] {
            let v = p.to_physical(y);
            assert!(v >= 1e3 && v <= 1e8);
        }
        let q = ParamSpec::new("phi", -3.0, 3.0, Scale::Periodic);
        assert_relative_eq!(q.to_physical(4.0), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn halton_is_deterministic_and_in_range() {
        let a = halton_points(16, 4, 7);
        assert_eq!(a, halton_points(16, 4, 7));
        assert_ne!(a, halton_points(16, 4, 8));
        assert!(a.iter().flatten().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn multistart_skips_infeasible_region() {
        let params = vec![ParamSpec::new("x", -5.0, 5.0, Scale::Linear)];
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                Err(Error::Precondition("negative".into()))
            } else {
                Ok((x[0] - 1.5).powi(2))
            }
        };
        let r = minimize(f, &params, &MinimizeOptions::default(), &[]).unwrap();
        assert!((r.params[0] - 1.5).abs() < 1e-3);
        assert!(r.trace.iter().any(|t| !t.feasible));
        let g = |_: &[f64]| -> Result<f64> { Err(Error::Precondition("never".into())) };
        assert!(matches!(
            minimize(g, &params, &MinimizeOptions::default(), &[]),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn minimize_is_reproducible() {
        let params = vec![
            ParamSpec::new("a", -2.0, 2.0, Scale::Linear),
            ParamSpec::new("b", 0.1, 10.0, Scale::Log),
        ];
        let f = |x: &[f64]| Ok((x[0] - 0.3).powi(2) + (x[1].ln() - 0.5).powi(2) + 0.1 * (3.0 * x[0]).sin());
        let opts = MinimizeOptions::default();
        let r1 = minimize(f, &params, &opts, &[]).unwrap();
        let r2 = minimize(f, &params, &opts, &[]).unwrap();
        assert_eq!(r1.params, r2.params);
        assert_eq!(r1.trace, r2.trace);
    }

    #[test]
    fn sweep_keeps_order_and_failures() {
        let pts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let recs = sweep(&pts, |x| {
            if *x == 3.0 {
                Err(Error::Precondition("bad".into()))
            } else {
                Ok(x * 2.0)
            }
        });
        assert_eq!(recs.len(), 10);
        assert!(recs.iter().enumerate().all(|(i, r)| r.index == i));
        assert!(recs[3].outcome.is_err());
        assert_eq!(recs[4].outcome, Ok(8.0));
    }

    #[test]
    fn rejects_unused_knob() {
        let s = CoolingScenario {
            om: OmParams::default(),
            aux: Auxiliary::Mirror(AuxMirrorParams::default()),
            path: PathParams::default(),
        };
        assert!(OptProblem::new(Objective::PhononOccupation(s), &[Knob::Kappa1], MinimizeOptions::default()).is_err());
        assert!(OptProblem::new(Objective::PhononOccupation(s), &[Knob::PhiS, Knob::TauS], MinimizeOptions::default()).is_ok());
    }

    #[test]
    fn trace_csv_layout() {
        let t = vec![TraceEntry {
            start: 0,
            iteration: 0,
            params: vec![1.0, 2.0],
            value: 3.0,
            feasible: true,
        }];
        let csv = trace_to_csv(&t, &["a".into(), "b".into()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "start,iteration,a,b,value,feasible");
        assert_eq!(lines.len(), 2);
    }
}
