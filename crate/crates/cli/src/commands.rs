//! One scenario type per subcommand: strict parsing, a dry run used by
//! `validate`, and the run itself.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use contraction_lab::coupling::{self, CouplingKind, CouplingRule, PairPath, SimOptions, TimeGrid};
use contraction_lab::harness::output::{curve_csv, svg_plot, Series};
use contraction_lab::harness::*;
use contraction_lab::model::{ModelConfig, ModelSpec};
use contraction_lab::ot::{self, EmpiricalMeasure, YoungFunction, YoungSpec};
use contraction_lab::rng;
use contraction_lab::theory::{self, Condition, NormBound, ProbeConfig, RateReport, TheoryError};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::artifacts::Artifacts;
use crate::config::strict;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    CheckConditions,
    Rates,
    Simulate,
    Wasserstein,
    Contraction,
    CouplingTime,
    Kuwada,
    Equilibrium,
    Gphi,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::CheckConditions,
        Kind::Rates,
        Kind::Simulate,
        Kind::Wasserstein,
        Kind::Contraction,
        Kind::CouplingTime,
        Kind::Kuwada,
        Kind::Equilibrium,
        Kind::Gphi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::CheckConditions => "check-conditions",
            Kind::Rates => "rates",
            Kind::Simulate => "simulate",
            Kind::Wasserstein => "wasserstein",
            Kind::Contraction => "contraction",
            Kind::CouplingTime => "coupling-time",
            Kind::Kuwada => "kuwada",
            Kind::Equilibrium => "equilibrium",
            Kind::Gphi => "gphi",
        }
    }

    pub fn from_name(name: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Whether the scenario has a top-level `seed`.
    pub fn has_seed(self) -> bool {
        !matches!(self, Kind::Rates | Kind::Wasserstein | Kind::Gphi)
    }

    /// Guesses the subcommand of a scenario without a `command` key from
    /// its distinctive keys.
    pub fn infer(value: &Value) -> Kind {
        let has = |k: &str| value.get(k).is_some();
        if has("conditions") || has("ep") || has("probe") {
            Kind::CheckConditions
        } else if has("k1") || has("k2") {
            Kind::Rates
        } else if has("mu") || has("nu") {
            Kind::Wasserstein
        } else if has("bound") || has("points") {
            Kind::Gphi
        } else if has("f") {
            Kind::Kuwada
        } else if has("n") && !has("y") {
            Kind::Equilibrium
        } else if has("dump") || has("moments") {
            Kind::Simulate
        } else if has("distances") || has("fit") || has("theory") || has("empirical_ot") {
            Kind::Contraction
        } else if matches!(value.get("coupling").and_then(|c| c.get("kind")), Some(Value::String(s)) if s != "synchronous") {
            Kind::CouplingTime
        } else {
            Kind::Contraction
        }
    }
}

/// Where relative input paths are resolved.
pub struct Ctx {
    pub base_dir: PathBuf,
}

pub struct Summary {
    /// Fully resolved scenario (defaults filled in), hashed into the manifest.
    pub resolved: Value,
    pub seed: Option<u64>,
    pub passed: bool,
}

trait Scenario: Sized + Serialize {
    fn parse(value: Value) -> Result<Self, CliError>;
    fn seed(&self) -> Option<u64>;
    fn dry_run(&self, ctx: &Ctx) -> Result<(), CliError>;
    /// Runs and writes artifacts; `false` when an assertion failed.
    fn execute(&self, ctx: &Ctx, out: &mut Artifacts) -> Result<bool, CliError>;
}

fn drive<S: Scenario>(value: Value, ctx: &Ctx, out: Option<&mut Artifacts>) -> Result<Summary, CliError> {
    let scenario = S::parse(value)?;
    scenario.dry_run(ctx)?;
    let passed = match out {
        Some(out) => scenario.execute(ctx, out)?,
        None => true,
    };
    Ok(Summary {
        resolved: serde_json::to_value(&scenario).expect("scenario serializes"),
        seed: scenario.seed(),
        passed,
    })
}

/// Parses `value` as `kind`; runs it when `out` is given, otherwise only
/// validates.
pub fn dispatch(kind: Kind, value: Value, ctx: &Ctx, out: Option<&mut Artifacts>) -> Result<Summary, CliError> {
    match kind {
        Kind::CheckConditions => drive::<CheckConditions>(value, ctx, out),
        Kind::Rates => drive::<Rates>(value, ctx, out),
        Kind::Simulate => drive::<Simulate>(value, ctx, out),
        Kind::Wasserstein => drive::<Wasserstein>(value, ctx, out),
        Kind::Contraction => drive::<Contraction>(value, ctx, out),
        Kind::CouplingTime => drive::<CouplingTime>(value, ctx, out),
        Kind::Kuwada => drive::<Kuwada>(value, ctx, out),
        Kind::Equilibrium => drive::<Equilibrium>(value, ctx, out),
        Kind::Gphi => drive::<Gphi>(value, ctx, out),
    }
}

// Shared checks.

fn point(pointer: &str, v: &[f64], d: usize) -> Result<(), CliError> {
    if v.len() != d {
        return Err(CliError::config(pointer, format!("expected {d} coordinates, got {}", v.len())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(CliError::config(pointer, "coordinates must be finite"));
    }
    Ok(())
}

fn positive(pointer: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(pointer, format!("must be positive and finite, got {v}")))
    }
}

fn at_least_two(pointer: &str, n: usize) -> Result<(), CliError> {
    if n < 2 {
        return Err(CliError::config(pointer, "need at least 2"));
    }
    Ok(())
}

fn coupling_ok(kind: &CouplingKind) -> Result<(), CliError> {
    match *kind {
        CouplingKind::Synchronous => Ok(()),
        CouplingKind::Reflection { lambda0 } => positive("/coupling/lambda0", lambda0),
        CouplingKind::Hybrid { lambda0, r0 } => {
            positive("/coupling/lambda0", lambda0)?;
            if !(r0 >= 0.0 && r0.is_finite()) {
                return Err(CliError::config("/coupling/r0", "must be non-negative"));
            }
            Ok(())
        }
    }
}

/// Checks shared by the pair experiments; returns the built model.
fn pair_setup(model: &ModelConfig, x: &[f64], y: &[f64], grid: &TimeGrid, n_paths: usize) -> Result<ModelSpec, CliError> {
    let spec = model.build()?;
    point("/x", x, spec.d())?;
    point("/y", y, spec.d())?;
    grid.n_steps()?;
    at_least_two("/n_paths", n_paths)?;
    Ok(spec)
}

fn young(pointer: &str, spec: &YoungSpec) -> Result<YoungFunction, CliError> {
    YoungFunction::from_spec(spec).map_err(|e| CliError::config(pointer, e.to_string()))
}

/// Moves `key` out of an object, for sections parsed separately.
fn take(value: &mut Value, key: &str) -> Option<Value> {
    value.as_object_mut().and_then(|m| m.remove(key))
}

fn strict_at<T: DeserializeOwned>(prefix: &str, value: Value) -> Result<T, CliError> {
    strict(value).map_err(|e| match e {
        CliError::Config { pointer, message } => CliError::config(format!("{prefix}{pointer}"), message),
        e => e,
    })
}

fn insert(value: &mut Value, key: &str, section: Value) {
    if let Value::Object(map) = value {
        map.insert(key.to_string(), section);
    }
}

fn svg_for(title: &str, curves: &[(String, &[f64], &[f64])], log_y: bool) -> String {
    let series: Vec<Series<'_>> = curves
        .iter()
        .map(|(label, times, values)| Series {
            label: label.as_str(),
            times,
            values,
        })
        .collect();
    svg_plot(title, &series, log_y)
}

/// Point cloud given inline or as a CSV file relative to the scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl Source {
    fn load(&self, ctx: &Ctx, pointer: &str) -> Result<EmpiricalMeasure, CliError> {
        let located = |e: ot::OtError| CliError::config(pointer, e.to_string());
        match (&self.points, &self.csv) {
            (Some(points), None) => EmpiricalMeasure::new(points).map_err(located),
            (None, Some(path)) => {
                let path = if path.is_absolute() { path.clone() } else { ctx.base_dir.join(path) };
                let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
                EmpiricalMeasure::read_csv(BufReader::new(file)).map_err(located)
            }
            _ => Err(CliError::config(pointer, "give exactly one of `points` and `csv`")),
        }
    }
}

// rates

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub k1: f64,
    pub k2: f64,
    pub r0: f64,
}

impl Rates {
    fn check(&self, prefix: &str) -> Result<(), CliError> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(CliError::config(format!("{prefix}/k1"), "must be non-negative"));
        }
        positive(&format!("{prefix}/k2"), self.k2)?;
        positive(&format!("{prefix}/r0"), self.r0)
    }

    fn report(&self) -> Result<RateReport, CliError> {
        Ok(theory::lyapunov_constants(self.k1, self.k2, self.r0)?)
    }
}

impl Scenario for Rates {
    fn parse(value: Value) -> Result<Self, CliError> {
        strict(value)
    }

    fn seed(&self) -> Option<u64> {
        None
    }

    fn dry_run(&self, _: &Ctx) -> Result<(), CliError> {
        self.check("")
    }

    fn execute(&self, _: &Ctx, out: &mut Artifacts) -> Result<bool, CliError> {
        let rep = self.report()?;
        out.write_json("rates.json", &rep)?;
        Ok(rep.c1 > 0.0)
    }
}

// check-conditions

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub box_radius: f64,
    pub n_pairs: usize,
    pub grid_points: usize,
    pub refine_steps: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let p = ProbeConfig::default();
        ProbeSection {
            box_radius: p.box_radius,
            n_pairs: p.n_pairs,
            grid_points: p.grid_points,
            refine_steps: p.refine_steps,
        }
    }
}

fn default_ep_pairs() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpSection {
    /// Suggested from the smallest eigenvalue of `σσ*` on the box when absent.
    #[serde(default)]
    pub lambda0: Option<f64>,
    #[serde(default = "default_ep_pairs")]
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConditions {
    pub model: ModelConfig,
    #[serde(default)]
    pub conditions: Vec<Condition>,
    /// Fixed cutoff for the EB estimate; scanned when absent.
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub ep: Option<EpSection>,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub seed: u64,
}

impl CheckConditions {
    fn probe(&self) -> ProbeConfig {
        ProbeConfig {
            box_radius: self.probe.box_radius,
            n_pairs: self.probe.n_pairs,
            grid_points: self.probe.grid_points,
            refine_steps: self.probe.refine_steps,
            seed: self.seed,
        }
    }
}

impl Scenario for CheckConditions {
    fn parse(value: Value) -> Result<Self, CliError> {
        strict(value)
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }

    fn dry_run(&self, _: &Ctx) -> Result<(), CliError> {
        self.model.build()?;
        positive("/probe/box_radius", self.probe.box_radius)?;
        if let Some(r0) = self.r0 {
            positive("/r0", r0)?;
        }
        for (i, c) in self.conditions.iter().enumerate() {
            match *c {
                Condition::Dss { p } if !(p >= 1.0 && p.is_finite()) => {
                    return Err(CliError::config(format!("/conditions/{i}/p"), "p must lie in [1, ∞)"));
                }
                Condition::Dss2 { lambda0 } | Condition::Dss3 { lambda0 } => {
                    positive(&format!("/conditions/{i}/lambda0"), lambda0)?;
                }
                _ => {}
            }
        }
        if self.conditions.is_empty() && self.ep.is_none() {
            return Err(CliError::config("/conditions", "nothing to check: give conditions or ep"));
        }
        Ok(())
    }

    fn execute(&self, _: &Ctx, out: &mut Artifacts) -> Result<bool, CliError> {
        let model = self.model.build()?;
        let probe = self.probe();
        let mut passed = true;
        let mut entries = Vec::new();
        for c in &self.conditions {
            let entry = match *c {
                Condition::Dss { p } => json!({ "report": theory::estimate_kp(&model, p, &probe)? }),
                Condition::Dss2Prime => json!({ "report": theory::estimate_dss2_prime(&model, &probe)? }),
                Condition::Dss2 { .. } | Condition::Dss3 { .. } => {
                    match theory::estimate_eb_constants_for(&model, *c, &probe, self.r0) {
                        Ok(rep) => {
                            let k = |key: &str| rep.constant(key).expect("EB constants reported");
                            let rates = Rates {
                                k1: k("K1"),
                                k2: k("K2"),
                                r0: k("r0"),
                            }
                            .report()?;
                            passed &= rates.c1 > 0.0;
                            json!({ "report": rep, "rates": rates })
                        }
                        Err(e @ (TheoryError::NoValidR0 { .. } | TheoryError::NonPositiveRate(_))) => {
                            passed = false;
                            json!({ "condition": c, "failed": e.to_string() })
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            };
            entries.push(entry);
        }
        let mut summary = json!({ "conditions": entries });
        if let Some(ep) = self.ep {
            let d = model.d();
            let r = self.probe.box_radius;
            let lambda0 = match ep.lambda0 {
                Some(l) => l,
                None => theory::suggest_lambda0(&model, r, 4096)?,
            };
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (1..=ep.n_pairs as u64)
                .map(|k| {
                    let u: Vec<f64> = rng::halton(k, 2 * d).iter().map(|u| r * (2.0 * u - 1.0)).collect();
                    (u[..d].to_vec(), u[d..].to_vec())
                })
                .collect();
            let rep = theory::check_ep_inequality(&model, &pairs, lambda0)?;
            passed &= rep.violations == 0;
            insert(&mut summary, "ep", serde_json::to_value(&rep).expect("report serializes"));
        }
        insert(&mut summary, "passed", json!(passed));
        out.write_json("conditions.json", &summary)?;
        Ok(passed)
    }
}

// simulate

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpSection {
    /// Paths written to `paths/`, from index 0.
    pub n_paths: usize,
    pub format: DumpFormat,
}

impl Default for DumpSection {
    fn default() -> Self {
        DumpSection {
            n_paths: 8,
            format: DumpFormat::Csv,
        }
    }
}

fn default_moments() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulate {
    pub model: ModelConfig,
    pub coupling: CouplingKind,
    #[serde(default)]
    pub rule: CouplingRule,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub grid: TimeGrid,
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dump: DumpSection,
    /// Exponents `p` of the `L^p` distance curves.
    #[serde(default = "default_moments")]
    pub moments: Vec<f64>,
}

impl Scenario for Simulate {
    fn parse(value: Value) -> Result<Self, CliError> {
        strict(value)
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }

    fn dry_run(&self, _: &Ctx) -> Result<(), CliError> {
        pair_setup(&self.model, &self.x, &self.y, &self.grid, self.n_paths)?;
        coupling_ok(&self.coupling)?;
        for (i, &p) in self.moments.iter().enumerate() {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(CliError::config(format!("/moments/{i}"), "exponents must lie in [1, ∞)"));
            }
        }
        Ok(())
    }

    fn execute(&self, _: &Ctx, out: &mut Artifacts) -> Result<bool, CliError> {
        let model = self.model.build()?;
        let opts = SimOptions {
            grid: self.grid,
            rule: self.rule,
            keep_states: false,
        };
        let paths: Vec<PairPath> = (0..self.n_paths as u64)
            .into_par_iter()
            .map(|i| coupling::simulate_pair(&model, self.coupling, &self.x, &self.y, &opts, self.seed, i))
            .collect::<Result<_, _>>()?;
        for path in paths.iter().take(self.dump.n_paths) {
            let mut buf = Vec::new();
            let ext = match self.dump.format {
                DumpFormat::Csv => {
                    coupling::dump::write_csv(path, &mut buf).expect("writes to memory");
                    "csv"
                }
                DumpFormat::Binary => {
                    coupling::dump::write_binary(path, &mut buf).expect("writes to memory");
                    "bin"
                }
            };
            out.write(&format!("paths/path_{:05}.{ext}", path.path_index), &buf)?;
        }
        let mut moments = Vec::new();
        for &p in &self.moments {
            let curve = coupling::distance_moments(&paths, p)?;
            let name = format!("moments_p{p}.csv");
            out.write(&name, curve_csv(&curve.times, &curve.values, &curve.stderr).as_bytes())?;
            moments.push(json!({
                "p": p,
                "file": name,
                "final_value": curve.values.last(),
                "final_stderr": curve.stderr.last(),
            }));
        }
        let taus: Vec<f64> = paths.iter().filter_map(|q| q.coupling_time).collect();
        let mean_tau = (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / taus.len() as f64);
        out.write_json(
            "simulate.json",
            &json!({
                "n_paths": self.n_paths,
                "coupled_fraction": taus.len() as f64 / self.n_paths as f64,
                "mean_coupling_time": mean_tau,
                "moments": moments,
            }),
        )?;
        Ok(true)
    }
}

// wasserstein

fn default_distance() -> YoungSpec {
    YoungSpec::Power { p: 1.0 }
}

fn default_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wasserstein {
    pub mu: Source,
    pub nu: Source,
    #[serde(default = "default_distance")]
    pub distance: YoungSpec,
    /// Relative tolerance of the Orlicz level search.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Wasserstein {
    fn load(&self, ctx: &Ctx) -> Result<(EmpiricalMeasure, EmpiricalMeasure), CliError> {
        let mu = self.mu.load(ctx, "/mu")?;
        let nu = self.nu.load(ctx, "/nu")?;
        if mu.len() != nu.len() || mu.dim() != nu.dim() {
            return Err(CliError::config(
                "/nu",
                format!("{} points in R^{} against {} in R^{}", nu.len(), nu.dim(), mu.len(), mu.dim()),
            ));
        }
        Ok((mu, nu))
    }
}

impl Scenario for Wasserstein {
    fn parse(value: Value) -> Result<Self, CliError> {
        strict(value)
    }

    fn seed(&self) -> Option<u64> {
        None
    }

    fn dry_run(&self, ctx: &Ctx) -> Result<(), CliError> {
        self.load(ctx)?;
        young("/distance", &self.distance)?;
        positive("/tol", self.tol)
    }

    fn execute(&self, ctx: &Ctx, out: &mut Artifacts) -> Result<bool, CliError> {
        let (mu, nu) = self.load(ctx)?;
        let phi = young("/distance", &self.distance)?;
        let plan = match self.distance {
            YoungSpec::Power { p } => ot::wasserstein_p(&mu, &nu, p)?,
            YoungSpec::Infinity => ot::wasserstein_inf(&mu, &nu)?,
            YoungSpec::Expr { .. } => {
                let w = ot::wasserstein_phi(&mu, &nu, &phi, self.tol)?;
                ot::CouplingPlan {
                    value: w.value,
                    permutation: w.plan.permutation,
                }
            }
        };
        out.write_json(
            "wasserstein.json",
            &json!({
                "distance": phi.label(),
                "value": plan.value,
                "n": mu.len(),
                "d": mu.dim(),
                "permutation": plan.permutation,
            }),
        )?;
        Ok(true)
    }
}

// contraction

fn default_boot() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_boot")]
    pub n_boot: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { n_boot: default_boot() }
    }
}

/// A contraction experiment plus optional `fit` and `theory` sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    pub experiment: ContractionConfig,
    pub fit: FitSection,
    /// `(K1, K2, r0)` for the certified envelope of the `p = 1` curves.
    pub theory: Option<Rates>,
}

impl Serialize for Contraction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut v = serde_json::to_value(&self.experiment).map_err(serde::ser::Error::custom)?;
        insert(&mut v, "fit", json!(self.fit));
        if let Some(t) = self.theory {
            insert(&mut v, "theory", json!(t));
        }
        v.serialize(s)
    }
}

fn estimator_name(e: Estimator) -> &'static str {
    match e {
        Estimator::CouplingUpperBound => "coupling_upper_bound",
        Estimator::EmpiricalOt => "empirical_ot",
    }
}

impl Scenario for Contraction {
    fn parse(mut value: Value) -> Result<Self, CliError> {
        let fit = take(&mut value, "fit").map(|v| strict_at("/fit", v)).transpose()?;
        let theory = take(&mut value, "theory").map(|v| strict_at("/theory", v)).transpose()?;
        Ok(Contraction {
            experiment: strict(value)?,
            fit: fit.unwrap_or_default(),
            theory,
        })
    }

    fn seed(&self) -> Option<u64> {
        Some(self.experiment.seed)
    }

    fn dry_run(&self, _: &Ctx) -> Result<(), CliError> {
        let e = &self.experiment;
        pair_setup(&e.model, &e.x, &e.y, &e.grid, e.n_paths)?;
        coupling_ok(&e.coupling)?;
        for (i, spec) in e.distances.iter().enumerate() {
            young(&format!("/distances/{i}"), spec)?;
        }
        if let Some(t) = &self.theory {
            t.check("/theory")?;
        }
        Ok(())
    }

    fn execute(&self, _: &Ctx, out: &mut Artifacts) -> Result<bool, CliError> {
        let res = contraction_experiment(&self.experiment)?;
        let rate = self.theory.map(|t| t.report()).transpose()?;
        let mut checks = vec![Check::new(
            "ordering",
            res.ordering_violations == 0,
            format!("{} times with empirical OT above the coupling bound", res.ordering_violations),
        )];
        let mut curves = Vec::new();
        let mut fits = Vec::new();
        let mut plot = Vec::new();
        let mut seen = [0usize; 2];
        for curve in &res.curves {
            let slot = &mut seen[curve.estimator as usize];
            let file = format!("{}_{}.csv", estimator_name(curve.estimator), *slot);
            *slot += 1;
            out.write(&file, curve_csv(&curve.times, &curve.values, &curve.stderr).as_bytes())?;
            curves.push(json!({
                "estimator": curve.estimator,
                "distance": curve.distance,
                "p": curve.p,
                "file": file,
                "n_samples": curve.n_samples,
                "final_value": curve.values.last(),
                "final_stderr": curve.stderr.last(),
            }));
            plot.push((format!("{} {}", estimator_name(curve.estimator), curve.distance), &curve.times[..], &curve.values[..]));
            if curve.estimator != Estimator::CouplingUpperBound {
                continue;
            }
            // The certified envelope bounds the mean distance only.
            let envelope = rate.as_ref().filter(|_| curve.p == Some(1.0));
            if let Some(rate) = envelope {
                let over = (0..curve.times.len())
                    .filter(|&k| curve.values[k] > rate.bound(curve.times[k], res.rho0) + 3.0 * curve.stderr[k])
                    .count();
                checks.push(Check::new(
                    &format!("envelope:{file}"),
                    over == 0,
                    format!("{over} times above c exp(-c1 t) rho0 + 3 stderr"),
                ));
            }
            let opts = FitOptions {
                n_boot: self.fit.n_boot,
                seed: self.experiment.seed,
                rho0: res.rho0,
            };
            let fit = match fit_rate(curve, envelope, &opts) {
                Ok(f) => json!({ "file": file, "fit": f }),
                Err(HarnessError::InsufficientDecay(msg)) => json!({ "file": file, "error": msg }),
                Err(e) => return Err(e.into()),
            };
            fits.push(fit);
        }
        out.write("contraction.svg", svg_for("contraction", &plot, true).as_bytes())?;
        let passed = checks.iter().all(|c| c.passed);
        out.write_json(
            "contraction.json",
            &json!({
                "rho0": res.rho0,
                "coupled_fraction": res.coupled_fraction,
                "ordering_violations": res.ordering_violations,
                "curves": curves,
                "fits": fits,
                "theory": rate,
                "checks": checks,
                "passed": passed,
            }),
        )?;
        Ok(passed)
    }
}

// coupling-time

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CouplingTime(CouplingTimeConfig);

impl Scenario for CouplingTime {
    fn parse(value: Value) -> Result<Self, CliError> {
        strict(value).map(CouplingTime)
    }

    fn seed(&self) -> Option<u64> {
        Some(self.0.seed)
    }

    fn dry_run(&self, _: &Ctx) -> Result<(), CliError> {
        let c = &self.0;
        pair_setup(&c.model, &c.x, &c.y, &c.grid, c.n_paths)?;
        if c.coupling == CouplingKind::Synchronous {
            return Err(CliError::config("/coupling", "coupling times need a reflection or hybrid coupling"));
        }
        coupling_ok(&c.coupling)
    }

    fn execute(&self, _: &Ctx, out: &mut Artifacts) -> Result<bool, CliError> {
        let curve = coupling_time_experiment(&self.0)?;
        out.write("survival.csv", curve_csv(&curve.times, &curve.survival, &curve.stderr).as_bytes())?;
        out.write(
            "survival.svg",
            svg_for("P(T > t)", &[("survival".into(), &curve.times, &curve.survival)], false).as_bytes(),
        )?;
        let mut taus = curve.coupling_times.clone();
        taus.sort_by(f64::total_cmp);
        let n = taus.len();
        out.write_json(
            "coupling_time.json",
            &json!({
                "n_paths": curve.n_paths,
                "coupled": n,
                "censored_fraction": curve.censored_fraction,
                "mean_coupling_time_coupled": (n > 0).then(|| taus.iter().sum::<f64>() / n as f64),
                "median_coupling_time_coupled": (n > 0).then(|| taus[n / 2]),
            }),
        )?;
        Ok(true)
    }
}

// kuwada

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Kuwada(KuwadaConfig);

impl Scenario for Kuwada {
    fn parse(value: Value) -> Result<Self, CliError> {
        strict(value).map(Kuwada)
    }

    fn seed(&self) -> Option<u64> {
        Some(self.0.seed)
    }

    fn dry_run(&self, _: &Ctx) -> Result<(), CliError> {
        let c = &self.0;
        let model = c.model.build()?;
        contraction_lab::model::parse_expr(&c.f, model.d()).map_err(|e| CliError::config("/f", e.to_string()))?;
        if !(c.p > 1.0) {
            return Err(CliError::config("/p", "p must exceed 1"));
        }
        positive("/t", c.t)?;
        TimeGrid::new(c.t, c.dt, 1).n_steps().map_err(|e| CliError::config("/dt", e.to_string()))?;
        at_least_two("/n_paths", c.n_paths)?;
        for (i, x) in c.probes.iter().flatten().enumerate() {
            point(&format!("/probes/{i}"), x, model.d())?;
        }
        Ok(())
    }

    fn execute(&self, _: &Ctx, out: &mut Artifacts) -> Result<bool, CliError> {
        let rep = kuwada_check(&self.0)?;
        let d = rep.probes.first().map_or(0, |p| p.x.len());
        let mut csv = String::new();
        for j in 1..=d {
            write!(csv, "x{j},").unwrap();
        }
        csv.push_str("lhs,rhs,ratio,ratio_error,fd_step,passed\n");
        for p in &rep.probes {
            for c in &p.x {
                write!(csv, "{c},").unwrap();
            }
            writeln!(csv, "{},{},{},{},{},{}", p.lhs, p.rhs, p.ratio, p.ratio_error, p.fd_step, p.passed).unwrap();
        }
        out.write("kuwada.csv", csv.as_bytes())?;
        out.write_json("kuwada.json", &rep)?;
        Ok(rep.passed)
    }
}

// equilibrium

/// Scalar OU closed form `dX = −k X dt + √2 s dB` to compare against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianReference {
    pub k: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub experiment: EquilibriumConfig,
    pub reference: Option<GaussianReference>,
}

impl Serialize for Equilibrium {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut v = serde_json::to_value(&self.experiment).map_err(serde::ser::Error::custom)?;
        if let Some(r) = self.reference {
            insert(&mut v, "reference", json!(r));
        }
        v.serialize(s)
    }
}

impl Scenario for Equilibrium {
    fn parse(mut value: Value) -> Result<Self, CliError> {
        let reference = take(&mut value, "reference").map(|v| strict_at("/reference", v)).transpose()?;
        Ok(Equilibrium {
            experiment: strict(value)?,
            reference,
        })
    }

    fn seed(&self) -> Option<u64> {
        Some(self.experiment.seed)
    }

    fn dry_run(&self, _: &Ctx) -> Result<(), CliError> {
        let e = &self.experiment;
        let model = e.model.build()?;
        point("/x", &e.x, model.d())?;
        at_least_two("/n", e.n)?;
        positive("/dt", e.dt)?;
        positive("/horizon", e.horizon)?;
        if let Some(r) = self.reference {
            if model.d() != 1 {
                return Err(CliError::config("/reference", "the Gaussian reference is one-dimensional"));
            }
            positive("/reference/k", r.k)?;
            positive("/reference/s", r.s)?;
        }
        Ok(())
    }

    fn execute(&self, _: &Ctx, out: &mut Artifacts) -> Result<bool, CliError> {
        let curve = equilibrium_experiment(&self.experiment)?;
        out.write("equilibrium.csv", curve_csv(&curve.times, &curve.values, &curve.stderr).as_bytes())?;
        let mut plot = vec![("W2 estimate".to_string(), &curve.times[..], &curve.values[..])];
        let mut checks = Vec::new();
        let exact: Option<Vec<f64>> = self.reference.map(|r| {
            curve.times.iter().map(|&t| gaussian_w2_ou(self.experiment.x[0], t, r.k, r.s)).collect()
        });
        if let Some(exact) = &exact {
            let slack = (curve.n as f64).powf(-0.5);
            let bad: Vec<f64> = (0..curve.times.len())
                .filter(|&k| (curve.values[k] - exact[k]).abs() > 3.0 * (curve.stderr[k] + slack))
                .map(|k| curve.times[k])
                .collect();
            checks.push(Check::new(
                "gaussian_reference",
                bad.is_empty(),
                format!("{} times outside 3 (stderr + n^-1/2): {bad:?}", bad.len()),
            ));
            plot.push(("closed form".to_string(), &curve.times[..], &exact[..]));
        }
        out.write("equilibrium.svg", svg_for("W2 to equilibrium", &plot, true).as_bytes())?;
        let passed = checks.iter().all(|c| c.passed);
        let mut summary = serde_json::to_value(&curve).expect("curve serializes");
        insert(&mut summary, "closed_form", json!(exact));
        insert(&mut summary, "checks", json!(checks));
        insert(&mut summary, "passed", json!(passed));
        out.write_json("equilibrium.json", &summary)?;
        Ok(passed)
    }
}

// gphi

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gphi {
    pub points: Source,
    pub phi: YoungSpec,
    pub bound: NormBound,
    pub times: Vec<f64>,
}

impl Scenario for Gphi {
    fn parse(value: Value) -> Result<Self, CliError> {
        strict(value)
    }

    fn seed(&self) -> Option<u64> {
        None
    }

    fn dry_run(&self, ctx: &Ctx) -> Result<(), CliError> {
        self.points.load(ctx, "/points")?;
        young("/phi", &self.phi)?;
        for (i, &t) in self.times.iter().enumerate() {
            positive(&format!("/times/{i}"), t)?;
            self.bound.eval(t).map_err(|e| CliError::config("/bound", e.to_string()))?;
        }
        Ok(())
    }

    fn execute(&self, ctx: &Ctx, out: &mut Artifacts) -> Result<bool, CliError> {
        let mu = self.points.load(ctx, "/points")?;
        let phi = young("/phi", &self.phi)?;
        let values: Vec<f64> = self
            .times
            .iter()
            .map(|&t| theory::g_phi(&mu, &phi, t, &self.bound))
            .collect::<Result<_, _>>()?;
        let mut csv = String::from("t,g\n");
        for (t, g) in self.times.iter().zip(&values) {
            writeln!(csv, "{t},{g}").unwrap();
        }
        out.write("gphi.csv", csv.as_bytes())?;
        let mut summary = Map::new();
        summary.insert("phi".into(), json!(phi.label()));
        summary.insert("n".into(), json!(mu.len()));
        summary.insert("times".into(), json!(self.times));
        summary.insert("g".into(), json!(values));
        out.write_json("gphi.json", &summary)?;
        Ok(true)
    }
}

/// Directory of the scenario file, for relative input paths.
pub fn base_dir(config: Option<&Path>) -> PathBuf {
    config
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
