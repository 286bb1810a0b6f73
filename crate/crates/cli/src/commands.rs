use std::io::Write;
use std::path::{Path, PathBuf};

use gkflab::fieldsim::{simulate_field, write_field_with_ell, GridSpec};
use gkflab::geomcore::{lk_model_space, SpaceDescriptor};
use gkflab::gkf::expected_lk;
use gkflab::gmf::{gmf_closed_form, gmf_numeric, DomainDescriptor, NumericSettings};
use gkflab::mcharness::{
    run_experiment, EuclidTube, Experiment, ExperimentConfig, ExperimentReport, FieldExperiment,
    KffExperiment, PoincareExperiment, RunSettings, ThresholdFamily, TubeExperiment, Verdict,
};

use crate::params::Params;
use crate::CliError;

pub const SEED_VAR: &str = "GKFLAB_SEED";
const DEFAULT_SEED: u64 = 1;

/// Six decimals with a `.` separator; negative zero prints as zero.
pub fn fmt6(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// Expands `rect:10,10`, `sphere:1`, `cap:30` or `point` into `space.*` keys.
pub fn space_flag(p: &mut Params, spec: Option<&str>) {
    let Some(spec) = spec else { return };
    let (kind, args) = spec.split_once(':').unwrap_or((spec, ""));
    p.flag("space.kind", Some(kind));
    if args.is_empty() {
        return;
    }
    let key = match kind {
        "sphere" => "space.radius",
        "cap" => "space.angle",
        _ => "space.sides",
    };
    p.flag(key, Some(args));
}

pub fn space_from(p: &Params, default_kind: &str) -> Result<SpaceDescriptor, CliError> {
    let kind = p.str_or("space.kind", default_kind);
    let lambda2: f64 = p.get_or("space.lambda2", 1.0)?;
    let space = match kind {
        "rect" => {
            let sides = p.list_or("space.sides", vec![10.0, 10.0])?;
            SpaceDescriptor::rectangle(sides, lambda2).map_err(|e| p.invalid("space.sides", e))?
        }
        "sphere" => {
            let r = p.get_or("space.radius", 1.0)?;
            SpaceDescriptor::sphere(r)
                .and_then(|s| s.with_metric_scale(lambda2))
                .map_err(|e| p.invalid("space.radius", e))?
        }
        "cap" => {
            let deg: f64 = p.require("space.angle", "use --space cap:<degrees>")?;
            SpaceDescriptor::cap(deg.to_radians())
                .and_then(|s| s.with_metric_scale(lambda2))
                .map_err(|e| p.invalid("space.angle", e))?
        }
        "point" => SpaceDescriptor::point(),
        other => {
            return Err(p.invalid(
                "space.kind",
                format!("unknown space '{other}' (rect, sphere, cap, point)"),
            ))
        }
    };
    Ok(space)
}

/// `u` is the threshold for half-lines, the lower end for intervals and the
/// excluded radius for ball complements.
pub fn domain_from(p: &Params, u: f64) -> Result<DomainDescriptor, CliError> {
    let k: usize = p.get_or("domain.k", 1)?;
    match p.str_or("domain.kind", "halfline") {
        "halfline" => Ok(DomainDescriptor::half_line(u)),
        "fullspace" => DomainDescriptor::full_space(k).map_err(|e| p.invalid("domain.k", e)),
        "ballcomp" => DomainDescriptor::ball_complement(k, u).map_err(|e| p.invalid("domain.u", e)),
        "interval" => {
            let b: f64 = p.require("domain.b", "intervals need an upper end, --b")?;
            DomainDescriptor::interval(u, b).map_err(|e| p.invalid("domain.b", e))
        }
        other => Err(p.invalid(
            "domain.kind",
            format!("unknown domain '{other}' (halfline, fullspace, ballcomp, interval)"),
        )),
    }
}

pub fn resolve_seed(p: &mut Params, required: bool) -> Result<u64, CliError> {
    p.env_fallback("mc.seed", SEED_VAR);
    match p.get::<u64>("mc.seed")? {
        Some(seed) => Ok(seed),
        None if required => Err(CliError::Config(format!(
            "mc.seed is required (pass --seed or set {SEED_VAR})"
        ))),
        None => Ok(DEFAULT_SEED),
    }
}

fn emit(p: &Params, text: &str) -> Result<(), CliError> {
    match p.raw("out.path") {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(path.into(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_expect(p: &mut Params) -> Result<i32, CliError> {
    let space = space_from(p, "rect")?;
    let lk = lk_model_space(&space)?;
    let dim = lk.dim();
    let orders: Vec<usize> = p.list_or("expect.i", vec![0])?;
    if let Some(&bad) = orders.iter().find(|&&i| i > dim) {
        return Err(p.invalid("expect.i", format!("order {bad} exceeds dim M = {dim}")));
    }
    let us: Vec<f64> = p.list_or("domain.u", vec![0.0])?;
    let mut out = String::from("u,i,predicted");
    for j in 0..=dim {
        out.push_str(&format!(",term_{j}"));
    }
    out.push('\n');
    for &u in &us {
        let d = domain_from(p, u)?;
        let gmf = gmf_closed_form(&d, dim)?
            .ok_or_else(|| CliError::Config(format!("no closed-form GMFs for {}", d.describe())))?;
        for &i in &orders {
            let pred = expected_lk(i, &lk, &gmf)?;
            let mut row = format!("{},{i},{}", fmt6(u), fmt6(pred.value));
            for j in 0..=dim {
                row.push(',');
                if let Some(t) = pred.terms.get(j) {
                    row.push_str(&fmt6(*t));
                }
            }
            out.push_str(&row);
            out.push('\n');
        }
    }
    emit(p, &out)?;
    Ok(0)
}

pub fn cmd_simulate(p: &mut Params) -> Result<i32, CliError> {
    let seed = resolve_seed(p, true)?;
    let space = space_from(p, "rect")?;
    let gkflab::geomcore::SpaceKind::Rectangle { sides } = &space.kind else {
        return Err(p.invalid("space.kind", "field dumps are written for rectangles only"));
    };
    let ell: f64 = p.get_or("field.ell", 1.0)?;
    let spacing: f64 = p.get_or("field.spacing", 0.2)?;
    let k: usize = p.get_or("field.k", 1)?;
    let binary = p.bool_or("field.binary", false)?;
    let grid = GridSpec::covering(sides, spacing).map_err(|e| p.invalid("field.spacing", e))?;
    let sample = simulate_field(&grid, ell, k, seed)?;
    let mut buf = Vec::new();
    write_field_with_ell(&sample, Some(ell), &mut buf, binary)?;
    match p.raw("out.path") {
        Some(path) => std::fs::write(path, &buf).map_err(|e| CliError::Io(path.into(), e))?,
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| CliError::Io("stdout".into(), e))?,
    }
    Ok(0)
}

pub fn cmd_gmf(p: &mut Params) -> Result<i32, CliError> {
    let u: f64 = p.get_or("domain.u", 0.0)?;
    let d = domain_from(p, u)?;
    let j_max: usize = p.get_or("gmf.jmax", 2)?;
    let numeric = p.bool_or("gmf.numeric", false)?;
    let closed = if numeric {
        None
    } else {
        gmf_closed_form(&d, j_max)?
    };
    let mut out = String::new();
    match closed {
        Some(g) => {
            out.push_str("j,value\n");
            for (j, v) in g.values.iter().enumerate() {
                out.push_str(&format!("{j},{}\n", fmt6(*v)));
            }
        }
        None => {
            let settings = NumericSettings {
                rho_grid: None,
                samples: p.get_or("gmf.samples", NumericSettings::default().samples)?,
                seed: resolve_seed(p, false)?,
            };
            let g = gmf_numeric(&d, j_max, &settings)?;
            let errs = g
                .errors
                .clone()
                .unwrap_or_else(|| vec![0.0; g.values.len()]);
            out.push_str("j,value,stderr\n");
            for (j, (v, e)) in g.values.iter().zip(&errs).enumerate() {
                out.push_str(&format!("{j},{},{}\n", fmt6(*v), fmt6(*e)));
            }
        }
    }
    emit(p, &out)?;
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    Ec,
    Volume,
    Kff,
    Poincare,
    Tube,
    Sup,
}

fn field_experiment(p: &Params, which: Which) -> Result<FieldExperiment, CliError> {
    let space = space_from(p, "rect")?;
    let (family, to_level): (ThresholdFamily, fn(f64) -> f64) =
        match p.str_or("domain.kind", "halfline") {
            "halfline" => (ThresholdFamily::Gaussian, |u| u),
            // The field is thresholded on |y|², so the level is the radius squared.
            "ballcomp" => (
                ThresholdFamily::ChiSquare {
                    k: p.get_or("domain.k", 2)?,
                },
                |u| u * u,
            ),
            other => {
                return Err(p.invalid(
                    "domain.kind",
                    format!("field experiments take halfline or ballcomp, not '{other}'"),
                ))
            }
        };
    let default_u = match which {
        Which::Volume => vec![0.0, 1.0],
        Which::Sup => Vec::new(),
        _ => vec![1.0, 2.0],
    };
    let thresholds = p
        .list_or("domain.u", default_u)?
        .into_iter()
        .map(to_level)
        .collect();
    let mut exp = FieldExperiment::new(space, family, thresholds);
    exp.length_scale = p.get_or("field.ell", exp.length_scale)?;
    exp.spacing = p.get_or("field.spacing", exp.spacing)?;
    exp.mesh_level = p.get_or("field.mesh_level", exp.mesh_level)?;
    exp.tail_target = p.get("sup.tail")?;
    if which == Which::Sup && exp.thresholds.is_empty() && exp.tail_target.is_none() {
        exp.tail_target = Some(0.05);
    }
    Ok(exp)
}

fn build_experiment(p: &Params, which: Which) -> Result<(Experiment, usize), CliError> {
    Ok(match which {
        Which::Ec => (Experiment::Ec(field_experiment(p, which)?), 500),
        Which::Volume => (Experiment::Volume(field_experiment(p, which)?), 500),
        Which::Sup => (Experiment::Sup(field_experiment(p, which)?), 2000),
        Which::Kff => {
            let alpha: f64 = p.get_or("kff.alpha", 45.0)?;
            let beta: f64 = p.get_or("kff.beta", 60.0)?;
            let exp = KffExperiment {
                alpha: alpha.to_radians(),
                beta: beta.to_radians(),
            };
            (Experiment::Kff(exp), 5000)
        }
        Which::Poincare => {
            let d = PoincareExperiment::default();
            let exp = PoincareExperiment {
                n_list: p.list_or("poincare.n", d.n_list)?,
                k: p.get_or("domain.k", d.k)?,
                mesh_level: p.get_or("field.mesh_level", d.mesh_level)?,
                u: p.get_or("domain.u", d.u)?,
            };
            (Experiment::Poincare(exp), 1000)
        }
        Which::Tube => {
            let u: f64 = p.get_or("domain.u", 1.0)?;
            let mut exp = TubeExperiment::new(
                domain_from(p, u)?,
                p.list_or("tube.rho", vec![0.1])?,
                p.get_or("tube.jmax", 2)?,
            );
            exp.numeric_check = p.bool_or("tube.numeric", true)?;
            exp.numeric_samples = p.get_or("gmf.samples", exp.numeric_samples)?;
            if let Some(spec) = p.raw("tube.euclid") {
                let sides = spec
                    .strip_prefix("rect:")
                    .unwrap_or(spec)
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| p.invalid("tube.euclid", "expected rect:<a>,<b>,..."))?;
                let space = SpaceDescriptor::rectangle(sides, 1.0)
                    .map_err(|e| p.invalid("tube.euclid", e))?;
                exp.euclid = Some(EuclidTube {
                    space,
                    rho: p.get_or("tube.euclid_rho", 0.5)?,
                });
            }
            (Experiment::Tube(exp), 200_000)
        }
    })
}

fn report_paths(base: &str) -> (PathBuf, PathBuf) {
    let base = Path::new(base);
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("json" | "csv") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    (stem.with_extension("json"), stem.with_extension("csv"))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}

pub fn cmd_validate(which: Which, p: &mut Params) -> Result<i32, CliError> {
    let format = p.str_or("out.format", "csv").to_string();
    if !matches!(format.as_str(), "csv" | "json") {
        return Err(p.invalid("out.format", "expected csv or json"));
    }
    let (experiment, default_reps) = build_experiment(p, which)?;
    let mut settings = RunSettings::new(
        p.get_or("mc.replicates", default_reps)?,
        resolve_seed(p, false)?,
    );
    settings.workers = p.get_or("mc.workers", 0)?;
    settings.z_gate = p.get("mc.z_gate")?;
    let cfg = ExperimentConfig {
        experiment,
        settings,
    };
    let report = run_experiment(&cfg)?;
    match p.raw("out.path") {
        Some(base) => {
            let (json, csv) = report_paths(base);
            write_file(&json, &report.to_json()?)?;
            write_file(&csv, &report.to_csv())?;
        }
        None if format == "json" => println!("{}", report.to_json()?),
        None => print!("{}", report.to_csv()),
    }
    print_failures(&report);
    Ok(match report.verdict {
        Verdict::Pass => {
            println!("PASS");
            0
        }
        Verdict::Fail => {
            println!("FAIL");
            1
        }
    })
}

fn print_failures(report: &ExperimentReport) {
    for c in report.cases.iter().filter(|c| !c.passed) {
        eprintln!("failed case {}: z = {} ({})", c.label, fmt6(c.z), c.rule);
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("failed check {}: {}", c.name, c.detail);
    }
}
