//! Experiment runner: one report per subcommand, each carrying its
//! assertions, a CSV table and two-column plot data.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::contracting::{decay_to_delta, dual_ly_check, measure_suite, ContractionMap, DualMeasure, DualNorms};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::limits::{clt_check, green_kubo_variance, ldp_empirical, pressure_derivatives, rate_function, Observable};
use crate::norms::NormEstimator;
use crate::orbit::InitialMeasure;
use crate::singular::{l0_ly_check, perturbation_scan, ScanParams, SingularFamily};
use crate::spectral::{
    correlation_decay, invariant_measure, leading_eigs, ly_check, second_eigen, strip_uniformity, LyParams,
};
use crate::suite::{densities, perturbation_family};
use crate::ulam::UlamModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Norms,
    LyCheck,
    Spectrum,
    Correlations,
    Clt,
    Ldp,
    SingularLimit,
    Contracting,
    All,
}

impl Subcommand {
    pub const EACH: [Subcommand; 8] = [
        Subcommand::Norms,
        Subcommand::LyCheck,
        Subcommand::Spectrum,
        Subcommand::Correlations,
        Subcommand::Clt,
        Subcommand::Ldp,
        Subcommand::SingularLimit,
        Subcommand::Contracting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Norms => "norms",
            Subcommand::LyCheck => "ly-check",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Correlations => "correlations",
            Subcommand::Clt => "clt",
            Subcommand::Ldp => "ldp",
            Subcommand::SingularLimit => "singular-limit",
            Subcommand::Contracting => "contracting",
            Subcommand::All => "all",
        }
    }
}

impl std::str::FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Subcommand::EACH
            .into_iter()
            .chain([Subcommand::All])
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown subcommand '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub id: String,
    /// Which property the row checks, e.g. `lasota-yorke:weak`.
    pub tag: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Assertion {
    fn le(id: impl Into<String>, tag: &str, lhs: f64, rhs: f64) -> Self {
        Assertion { id: id.into(), tag: tag.into(), lhs, rhs, pass: lhs <= rhs, note: None }
    }

    fn flag(id: impl Into<String>, tag: &str, pass: bool) -> Self {
        Assertion { id: id.into(), tag: tag.into(), lhs: f64::from(u8::from(!pass)), rhs: 0.0, pass, note: None }
    }

    fn note(mut self, text: impl Into<String>) -> Self {
        self.note = Some(text.into());
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Plot {
    pub x: String,
    pub y: String,
    pub log_y: bool,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub failures: usize,
    pub assertions: Vec<Assertion>,
    pub data: serde_json::Value,
    #[serde(skip)]
    pub table: Table,
    #[serde(skip)]
    pub plot: Plot,
}

impl Report {
    fn new(sub: Subcommand, cfg: &ExperimentConfig, assertions: Vec<Assertion>, data: serde_json::Value) -> Self {
        let failures = assertions.iter().filter(|a| !a.pass).count();
        Report {
            subcommand: sub.name().into(),
            config_hash: cfg.hash(),
            seed: cfg.limits.seed,
            passed: failures == 0,
            failures,
            assertions,
            data,
            table: Table::default(),
            plot: Plot::default(),
        }
    }

    fn with(mut self, table: Table, plot: Plot) -> Self {
        self.table = table;
        self.plot = plot;
        self
    }

    pub fn failed(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.pass)
    }

    /// Writes `<name>.json`, `<name>.csv`, `<name>.dat` and `<name>.gp`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let name = &self.subcommand;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join(format!("{name}.json")), json + "\n")?;
        std::fs::write(dir.join(format!("{name}.csv")), self.table.to_csv())?;
        let mut dat = format!("# {} {}\n", self.plot.x, self.plot.y);
        for (x, y) in &self.plot.points {
            writeln!(dat, "{x} {y}").unwrap();
        }
        std::fs::write(dir.join(format!("{name}.dat")), dat)?;
        std::fs::write(dir.join(format!("{name}.gp")), self.plot_script())?;
        Ok(())
    }

    /// A gnuplot script rendering the `.dat` file to PNG.
    pub fn plot_script(&self) -> String {
        let name = &self.subcommand;
        let mut s = String::new();
        writeln!(s, "set terminal pngcairo size 800,500").unwrap();
        writeln!(s, "set output '{name}.png'").unwrap();
        writeln!(s, "set xlabel '{}'", self.plot.x).unwrap();
        writeln!(s, "set ylabel '{}'", self.plot.y).unwrap();
        if self.plot.log_y {
            writeln!(s, "set logscale y").unwrap();
        }
        writeln!(s, "plot '{name}.dat' using 1:2 with linespoints title '{name}'").unwrap();
        s
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report data serializes")
}

fn sine() -> Observable {
    Observable::new("sin_2pi_s", |s, _| (2.0 * PI * s).sin())
}

fn suite(cfg: &ExperimentConfig) -> Vec<(String, GridFunction)> {
    let n = cfg.norms.density_grid;
    densities(n, n).into_iter().map(|(k, f)| (k.to_string(), f)).collect()
}

/// Runs one subcommand, or every one in order for `All`.
pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> Result<Vec<Report>> {
    cfg.validate()?;
    match sub {
        Subcommand::All => Subcommand::EACH.iter().map(|&s| run_one(s, cfg)).collect(),
        s => Ok(vec![run_one(s, cfg)?]),
    }
}

fn run_one(sub: Subcommand, cfg: &ExperimentConfig) -> Result<Report> {
    match sub {
        Subcommand::Norms => norms(cfg),
        Subcommand::LyCheck => ly(cfg),
        Subcommand::Spectrum => spectrum(cfg),
        Subcommand::Correlations => correlations(cfg),
        Subcommand::Clt => clt(cfg),
        Subcommand::Ldp => ldp(cfg),
        Subcommand::SingularLimit => singular(cfg),
        Subcommand::Contracting => contracting(cfg),
        Subcommand::All => unreachable!(),
    }
}

fn norms(cfg: &ExperimentConfig) -> Result<Report> {
    let map = cfg.baker_map()?;
    let mut est = NormEstimator::new(cfg.norm_config(map.kappa()));
    let mut table = Table::new(&["function", "weak", "strong_stable", "strong_unstable", "strong_total"]);
    let mut plot = Plot { x: "function index".into(), y: "strong norm".into(), ..Plot::default() };
    let mut asserts = Vec::new();
    let mut reports = Vec::new();
    for (k, (name, f)) in suite(cfg).iter().enumerate() {
        let r = est.report(f)?;
        table.push(vec![name.clone(), fmt(r.weak), fmt(r.strong_stable), fmt(r.strong_unstable), fmt(r.strong_total)]);
        plot.points.push((k as f64, r.strong_total));
        if name == "one" {
            asserts.push(Assertion::le("one:weak", "norms:constant", (r.weak - 1.0).abs(), 0.02));
            asserts.push(Assertion::le("one:strong_stable", "norms:constant", (r.strong_stable - 1.0).abs(), 0.02));
        }
        reports.push(json!({"function": name, "weak": r.weak, "strong_stable": r.strong_stable,
            "strong_unstable": r.strong_unstable, "resolution": r.resolution}));
    }
    Ok(Report::new(Subcommand::Norms, cfg, asserts, json!({"map": cfg.map, "norms": reports})).with(table, plot))
}

fn ly(cfg: &ExperimentConfig) -> Result<Report> {
    let map = cfg.baker_map()?;
    let params = LyParams {
        n_max: cfg.ly.n_max,
        slack: cfg.ly.slack,
        norms: cfg.norm_config(map.kappa()),
        ..LyParams::default()
    };
    let rows = ly_check(&map, &suite(cfg), &params)?;
    let mut table = Table::new(&["function", "n", "norm", "lhs", "rhs", "pass"]);
    let mut plot = Plot { x: "row".into(), y: "lhs / rhs".into(), ..Plot::default() };
    let mut asserts = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        let norm = to_json(&r.norm).as_str().unwrap_or_default().to_string();
        table.push(vec![r.function.clone(), r.n.to_string(), norm.clone(), fmt(r.lhs), fmt(r.rhs), r.pass.to_string()]);
        plot.points.push((k as f64, if r.rhs > 0.0 { r.lhs / r.rhs } else { 0.0 }));
        asserts.push(Assertion {
            id: format!("{}:n={}", r.function, r.n),
            tag: format!("lasota-yorke:{norm}"),
            lhs: r.lhs,
            rhs: r.rhs * cfg.ly.slack + params.floor,
            pass: r.pass,
            note: None,
        });
    }
    let data = json!({"map": cfg.map, "n_max": cfg.ly.n_max, "slack": cfg.ly.slack, "rows": rows.len()});
    Ok(Report::new(Subcommand::LyCheck, cfg, asserts, data).with(table, plot))
}

fn spectrum(cfg: &ExperimentConfig) -> Result<Report> {
    let map = cfg.baker_map()?;
    let model = UlamModel::build(&map, cfg.spectral.level, cfg.spectral.depth)?;
    let rep = leading_eigs(&map, &model, &cfg.eigen_config(), cfg.norms.alpha, cfg.norms.beta, |s, _| {
        (2.0 * PI * s).sin()
    })?;
    let mu = &rep.invariant_vector;
    let mut asserts = vec![
        Assertion::le("leading", "spectral-gap:leading-eigenvalue", (rep.leading_eigenvalue - 1.0).abs(), 1e-10),
        Assertion::le("second", "spectral-gap:second-modulus", rep.second_modulus, cfg.spectral.second_modulus_max),
        Assertion::le("strip_uniformity", "physical-measure:arclength", strip_uniformity(&model, mu), cfg.spectral.uniformity_tol),
    ];
    if (map.jacobian() - 1.0).abs() < 1e-15 {
        let dev = (0..model.cell_count()).map(|i| (mu[i] / model.area(i) - 1.0).abs()).fold(0.0, f64::max);
        asserts.push(Assertion::le("uniform", "physical-measure:lebesgue", dev, 1e-10));
    }
    let mut table = Table::new(&["re", "im", "modulus"]);
    let mut plot = Plot { x: "re".into(), y: "im".into(), ..Plot::default() };
    for z in &rep.peripheral_candidates {
        table.push(vec![fmt(z[0]), fmt(z[1]), fmt(z[0].hypot(z[1]))]);
        plot.points.push((z[0], z[1]));
    }
    let data = json!({"map": cfg.map, "level": cfg.spectral.level, "depth": cfg.spectral.depth, "report": rep});
    Ok(Report::new(Subcommand::Spectrum, cfg, asserts, data).with(table, plot))
}

fn correlations(cfg: &ExperimentConfig) -> Result<Report> {
    let map = cfg.baker_map()?;
    let model = UlamModel::build(&map, cfg.spectral.level, cfg.spectral.depth)?;
    let (mu, _, _) = invariant_measure(&model, 1e-14, cfg.spectral.max_iter)?;
    let second = second_eigen(&model, &mu, &cfg.eigen_config())?;
    let g = sine().cell_averages(&model);
    let decay = correlation_decay(&model, &mu, &g, &g, cfg.spectral.decay_n_max, cfg.spectral.decay_floor);
    let bound = second.modulus + 0.05;
    let a = match decay.rate {
        Some(r) => Assertion::le("rate", "mixing:rate", r, bound),
        None => Assertion::le("rate", "mixing:rate", 0.0, bound)
            .note("every lagged correlation is below the floor; no rate to fit"),
    };
    let mut table = Table::new(&["n", "correlation"]);
    let mut plot = Plot { x: "n".into(), y: "|C_n|".into(), log_y: true, ..Plot::default() };
    for &(n, c) in &decay.rows {
        table.push(vec![n.to_string(), fmt(c)]);
        if c > 0.0 {
            plot.points.push((n as f64, c));
        }
    }
    let data = json!({"map": cfg.map, "observable": "sin_2pi_s", "second_modulus": second.modulus,
        "second_collapsed": second.collapsed, "decay": decay});
    Ok(Report::new(Subcommand::Correlations, cfg, vec![a], data).with(table, plot))
}

struct LimitSetup {
    model: UlamModel,
    mu: Vec<f64>,
    g: Observable,
}

fn limit_setup(cfg: &ExperimentConfig) -> Result<LimitSetup> {
    let map = cfg.baker_map()?;
    let model = UlamModel::build(&map, cfg.limits.level, cfg.limits.depth)?;
    let (mu, _, _) = invariant_measure(&model, 1e-14, cfg.spectral.max_iter)?;
    let g = sine().centered(&model, &mu);
    Ok(LimitSetup { model, mu, g })
}

fn clt(cfg: &ExperimentConfig) -> Result<Report> {
    let map = cfg.baker_map()?;
    let LimitSetup { model, mu, g } = limit_setup(cfg)?;
    let gk = green_kubo_variance(&model, &mu, &g, None);
    let l = &cfg.limits;
    let starts = [("lebesgue", InitialMeasure::Lebesgue), ("affine", cfg.start_measure())];
    let mut asserts = Vec::new();
    let mut reps = Vec::new();
    let mut plot = Plot { x: "S_n/sqrt(n)".into(), y: "empirical cdf".into(), ..Plot::default() };
    let mut table = Table::new(&["start", "n", "count", "variance_target", "mean", "variance", "ks"]);
    for (name, init) in &starts {
        let rep = clt_check(&map, &g, init, l.n, l.count, l.seed, gk.variance)?;
        table.push(vec![
            name.to_string(),
            l.n.to_string(),
            l.count.to_string(),
            fmt(gk.variance),
            fmt(rep.empirical_mean),
            fmt(rep.empirical_variance),
            opt(rep.ks),
        ]);
        let ks = rep.ks.unwrap_or(f64::INFINITY);
        asserts.push(Assertion::le(format!("{name}:ks"), "clt:ks-distance", ks, l.ks_max));
        if *name == "lebesgue" {
            let rel = (rep.empirical_variance - gk.variance).abs() / gk.variance.max(1e-300);
            asserts.push(Assertion::le("lebesgue:variance", "clt:green-kubo-variance", rel, l.variance_rel_tol));
            let mut z = crate::limits::birkhoff_sample(&map, &g, l.n, l.count.min(2000), init, l.seed);
            z.sort_by(|a, b| a.total_cmp(b));
            let root = (l.n as f64).sqrt();
            plot.points = z.iter().enumerate().map(|(k, x)| (x / root, (k + 1) as f64 / z.len() as f64)).collect();
        }
        reps.push(json!({"start": name, "report": rep}));
    }
    let data = json!({"map": cfg.map, "observable": "sin_2pi_s", "green_kubo": gk, "runs": reps});
    Ok(Report::new(Subcommand::Clt, cfg, asserts, data).with(table, plot))
}

fn ldp(cfg: &ExperimentConfig) -> Result<Report> {
    let map = cfg.baker_map()?;
    let LimitSetup { model, mu, g } = limit_setup(cfg)?;
    let l = &cfg.limits;
    let gk = green_kubo_variance(&model, &mu, &g, None);
    let rate = rate_function(&model, &mu, &g, &l.z_grid, &l.t_grid)?;
    let (_, p2) = pressure_derivatives(&model, &mu, &g, 1e-3)?;
    let p0 = crate::limits::pressure(&model, &g.cell_averages(&model), 0.0, Some(&mu))?;
    let mut asserts = vec![
        Assertion::le("pressure_at_zero", "large-deviations:pressure-zero", p0.abs(), 0.0),
        Assertion::le(
            "pressure_curvature",
            "large-deviations:green-kubo",
            (p2 - gk.variance).abs() / gk.variance.max(1e-300),
            l.variance_rel_tol,
        ),
    ];
    let leb = ldp_empirical(&map, &g, &InitialMeasure::Lebesgue, &rate, &l.ldp_lengths, l.ldp_count, l.seed, l.ldp_min_hits)?;
    let aff = ldp_empirical(&map, &g, &cfg.start_measure(), &rate, &l.ldp_lengths, l.ldp_count, l.seed, l.ldp_min_hits)?;
    let mut table = Table::new(&["t", "minus_rate", "lebesgue", "lebesgue_rel_error", "affine", "affine_rel_error"]);
    for (a, b) in leb.rows.iter().zip(&aff.rows) {
        table.push(vec![
            fmt(a.t),
            fmt(a.minus_rate),
            opt(a.extrapolated),
            opt(a.relative_error),
            opt(b.extrapolated),
            opt(b.relative_error),
        ]);
        let row = match a.relative_error {
            Some(e) => Assertion::le(format!("t={}", a.t), "large-deviations:exponent", e, l.ldp_rel_tol),
            None => Assertion::flag(format!("t={}", a.t), "large-deviations:exponent", false)
                .note("fewer than two lengths reach the hit threshold"),
        };
        asserts.push(row);
    }
    let plot = Plot {
        x: "t".into(),
        y: "-I(t)".into(),
        points: rate.t.iter().zip(&rate.rate).map(|(t, i)| (*t, -i)).collect(),
        ..Plot::default()
    };
    let data = json!({"map": cfg.map, "observable": "sin_2pi_s", "pressure_second_derivative": p2,
        "green_kubo": gk.variance, "rate": rate, "lebesgue": leb.rows, "affine": aff.rows,
        "affine_note": "reported only; no tolerance asserted"});
    Ok(Report::new(Subcommand::Ldp, cfg, asserts, data).with(table, plot))
}

fn singular(cfg: &ExperimentConfig) -> Result<Report> {
    let sg = &cfg.singular;
    let family = SingularFamily::new(sg.kappa, cfg.schedule()?)?;
    let norms = cfg.norm_config(sg.kappa);
    let mut asserts = Vec::new();
    let rows = l0_ly_check(&family, &suite(cfg), sg.n_max, &norms, sg.slack)?;
    for r in &rows {
        let bound = to_json(&r.bound).as_str().unwrap_or_default().to_string();
        asserts.push(Assertion {
            id: format!("{}:n={}", r.function, r.n),
            tag: format!("limit-operator:{bound}"),
            lhs: r.lhs,
            rhs: r.rhs * sg.slack + 1e-12,
            pass: r.pass,
            note: None,
        });
    }
    let grid = sg.kappa.pow(7);
    let mu0 = family.mu0(grid);
    asserts.push(Assertion::flag("mu0", "limit-operator:fixed-point", family.apply_l0_pairs(&mu0, grid) == mu0));
    let params = ScanParams { alpha: cfg.norms.alpha, norms, ulam_level: sg.ulam_level, ulam_depth: sg.ulam_depth };
    let scan = perturbation_scan(&family, &perturbation_family(cfg.norms.leaf_grid), &params)?;
    let mut table = Table::new(&["lambda", "estimate", "bound", "pass", "mu_distance"]);
    let mut plot = Plot { x: "lambda".into(), y: "operator difference".into(), ..Plot::default() };
    for r in &scan.rows {
        table.push(vec![r.lambda.clone(), fmt(r.estimate), fmt(r.bound), r.pass.to_string(), fmt(r.mu_distance)]);
        plot.points.push((r.lambda_f64, r.estimate));
        asserts.push(Assertion::le(format!("lambda={}", r.lambda), "perturbation:bound", r.estimate, r.bound));
    }
    asserts.push(Assertion::flag("monotone", "perturbation:continuity", scan.monotone));
    if let Some(last) = scan.rows.last() {
        asserts.push(Assertion::le("final_distance", "perturbation:continuity", last.mu_distance, sg.final_distance_max));
    }
    let data = json!({"kappa": sg.kappa, "schedule": sg.schedule, "l0_rows": rows.len(), "scan": scan});
    Ok(Report::new(Subcommand::SingularLimit, cfg, asserts, data).with(table, plot))
}

fn contracting(cfg: &ExperimentConfig) -> Result<Report> {
    let c = &cfg.contracting;
    let map = ContractionMap::new(c.map)?;
    let mut norms = DualNorms::new(c.alpha, c.grid);
    let decay = decay_to_delta(&map, &DualMeasure::lebesgue(c.grid), &mut norms, c.n_max)?;
    let bound = map.lambda_bound.powf(c.alpha) + c.rate_margin;
    let mut asserts = vec![
        match decay.rate {
            Some(r) => Assertion::le("rate", "contraction:decay-rate", r, bound),
            None => Assertion::le("rate", "contraction:decay-rate", 0.0, bound).note("distances below the fit floor"),
        },
        Assertion::flag("monotone", "contraction:monotone", decay.monotone),
    ];
    let rows = dual_ly_check(&map, &measure_suite(c.grid), c.alpha, &mut norms, c.n_max, c.slack)?;
    for r in &rows {
        asserts.push(Assertion {
            id: format!("{}:n={}", r.measure, r.n),
            tag: "contraction:lasota-yorke".into(),
            lhs: r.lhs,
            rhs: r.rhs * c.slack + 1e-12,
            pass: r.pass,
            note: None,
        });
    }
    let mut table = Table::new(&["n", "distance"]);
    let mut plot = Plot { x: "n".into(), y: "distance to delta".into(), log_y: true, ..Plot::default() };
    for (n, d) in decay.distances.iter().enumerate() {
        table.push(vec![n.to_string(), fmt(*d)]);
        if *d > 0.0 {
            plot.points.push((n as f64, *d));
        }
    }
    let data = json!({"map": c.map, "alpha": c.alpha, "fixed_point": map.fixed_point(), "decay": decay, "ly": rows});
    Ok(Report::new(Subcommand::Contracting, cfg, asserts, data).with(table, plot))
}
