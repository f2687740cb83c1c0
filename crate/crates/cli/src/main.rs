//! `xferop`: command-line front end for system specs, representations,
//! verdicts, conformal measures and groupoids.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use xferop::groupoid::{self, TruncatedGroupoid};
use xferop::rational::parse_q;
use xferop::rep::{self, RepKind, RepPair};
use xferop::thermo::{self, CandidateMeasure, KmsCandidate, KmsSetup, Psi, PsiFile};
use xferop::transfer::{self, UlamMeasure, Validation};
use xferop::verdicts::{self, Verdict};
use xferop::{bundled, spec_file, spectra, Error, Model};

use report::{error_code, fnv1a, status, Format, Report};

#[derive(Parser, Debug)]
#[command(name = "xferop", version, about = "Transfer operators, crossed products and KMS states on exact models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Spec file path or bundled example name.
    #[arg(long, global = true)]
    spec: Option<String>,
    #[arg(long, global = true, default_value_t = 6)]
    depth: usize,
    #[arg(long, global = true, default_value_t = 256)]
    bins: usize,
    /// Residual tolerance (each command has its own default).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for report.txt and CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Validate the transfer operator and report its norm.
    Validate,
    /// Δ, Δ_pos, Δ_reg and the irregular points.
    Region,
    /// Essential domain of the system.
    Domain,
    /// Build a truncated representation.
    Rep {
        #[arg(value_enum)]
        kind: RepChoice,
        /// Level window of the regular representation (default: depth).
        #[arg(long)]
        window: Option<i64>,
    },
    /// Crossed-product relation battery on the regular representation.
    Relations {
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Stratified spectrum of the core subalgebra A_n.
    Spectrum {
        #[arg(long)]
        n: usize,
    },
    /// Quasi-orbit classes of sampled points.
    QuasiOrbits {
        #[arg(long, default_value_t = 16)]
        samples: usize,
    },
    /// Decide a dynamical property.
    Check {
        #[arg(value_enum)]
        property: CheckChoice,
        /// Potential ψ for positive-energy: `zero`, `one`, a rational, or a ψ file.
        #[arg(long)]
        psi: Option<String>,
    },
    /// Conformal measure at a given β or by bisection over a bracket.
    Conformal {
        #[arg(long)]
        psi: String,
        #[arg(long, conflicts_with = "solve")]
        beta: Option<f64>,
        #[arg(long)]
        solve: bool,
        #[arg(long, value_parser = parse_bracket)]
        bracket: Option<(f64, f64)>,
    },
    /// KMS residuals of a candidate written by `conformal`.
    KmsVerify {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, default_value_t = 20)]
        battery: usize,
    },
    /// Renault-Deaconu groupoid operations.
    Groupoid {
        #[arg(value_enum)]
        op: GroupoidChoice,
        /// Restrict φ to Δ_reg first (interval systems).
        #[arg(long)]
        restrict_regular: bool,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 12)]
        samples: usize,
    },
    /// Validation, regions and every verdict in one report.
    Report,
    /// Canonical re-serialization of the spec.
    Roundtrip,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RepChoice {
    Orbit,
    Regular,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CheckChoice {
    Free,
    Minimal,
    Contracting,
    Simple,
    PureInfinite,
    OneCircuit,
    PositiveEnergy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GroupoidChoice {
    Build,
    Gap,
    IsoCheck,
    GraphGen,
}

fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

/// A loaded spec with its raw text.
struct Input {
    name: String,
    text: String,
}

fn read_spec(arg: &str) -> Result<Input, Error> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{arg}: {e}")))?;
        return Ok(Input { name: arg.to_string(), text });
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
    match bundled::text(arg).or_else(|| bundled::text(stem)) {
        Some(t) => Ok(Input { name: format!("bundled:{stem}"), text: t.to_string() }),
        None => Err(Error::Parse(format!("spec `{arg}` is neither a file nor a bundled example ({})", bundled::NAMES.join(", ")))),
    }
}

fn parse_psi(m: &Model, arg: &str) -> Result<Psi, Error> {
    match arg {
        "zero" => return Ok(Psi::constant(m, parse_q("0")?)),
        "one" => return Ok(Psi::constant(m, parse_q("1")?)),
        _ => {}
    }
    if let Ok(c) = parse_q(arg) {
        return Ok(Psi::constant(m, c));
    }
    let text = std::fs::read_to_string(arg).map_err(|e| Error::Parse(format!("ψ `{arg}`: {e}")))?;
    Psi::parse(m, &text)
}

struct Ctx {
    cli: Cli,
    header: Vec<(String, String)>,
}

impl Ctx {
    fn report(&self) -> Report {
        Report::new(self.header.clone())
    }

    fn tol(&self, default: f64) -> f64 {
        self.cli.tol.unwrap_or(default)
    }

    fn model(&mut self) -> Result<Model, Error> {
        let arg = self.cli.spec.clone().ok_or_else(|| Error::Parse("--spec is required".into()))?;
        let input = read_spec(&arg)?;
        self.header.push(("spec".into(), input.name.clone()));
        self.header.push(("input_hash".into(), format!("fnv1a64:{:016x}", fnv1a(input.text.as_bytes()))));
        let m = spec_file::parse_str(&input.text)?;
        if self.cli.depth > m.depth_bound {
            return Err(Error::DepthExceeded { requested: self.cli.depth, bound: m.depth_bound });
        }
        Ok(m)
    }

    fn valid_model(&mut self) -> Result<Model, Error> {
        let m = self.model()?;
        transfer::validate(&m).handle()?;
        Ok(m)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut header = vec![
        ("xferop".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("command".to_string(), args.join(" ")),
        ("seed".to_string(), cli.seed.to_string()),
        ("depth".to_string(), cli.depth.to_string()),
    ];
    if let Some(t) = cli.tol {
        header.push(("tol".to_string(), format!("{t:e}")));
    }
    let (format, out) = (cli.format, cli.out.clone());
    if cli.depth == 0 || cli.tol.is_some_and(|t| t <= 0.0 || t.is_nan()) {
        eprintln!("error: depth must be ≥ 1 and tolerances > 0");
        return ExitCode::from(3);
    }
    let mut ctx = Ctx { cli, header };
    match run(&mut ctx) {
        Ok(rep) => {
            if let Err(e) = rep.emit(format, out.as_deref()) {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
            ExitCode::from(rep.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Validation(defects) = &e {
                for d in defects {
                    eprintln!("  defect {d}");
                }
            }
            ExitCode::from(error_code(&e) as u8)
        }
    }
}

fn run(ctx: &mut Ctx) -> Result<Report, Error> {
    match &ctx.cli.cmd {
        Cmd::Validate => validate(ctx),
        Cmd::Region => region(ctx),
        Cmd::Domain => domain(ctx),
        Cmd::Rep { kind, window } => build_rep(ctx, *kind, *window),
        Cmd::Relations { count } => relations(ctx, *count),
        Cmd::Spectrum { n } => spectrum(ctx, *n),
        Cmd::QuasiOrbits { samples } => quasi_orbits(ctx, *samples),
        Cmd::Check { property, psi } => check(ctx, *property, psi.clone()),
        Cmd::Conformal { psi, beta, solve, bracket } => conformal(ctx, psi.clone(), *beta, *solve, *bracket),
        Cmd::KmsVerify { candidate, battery } => kms_verify(ctx, candidate.clone(), *battery),
        Cmd::Groupoid { op, restrict_regular, count, samples } => {
            groupoid_cmd(ctx, *op, *restrict_regular, *count, *samples)
        }
        Cmd::Report => full_report(ctx),
        Cmd::Roundtrip => roundtrip(ctx),
    }
}

fn validate(ctx: &mut Ctx) -> Result<Report, Error> {
    let m = ctx.model()?;
    let mut r = ctx.report();
    match transfer::validate(&m) {
        Validation::Valid(h) => {
            r.line("valid");
            r.line(format!("norm ‖L‖ = {} ({})", xferop::rational::fmt_q(&h.norm), h.norm_witness));
            r.table("validation", format!("status,norm\nvalid,{}\n", xferop::rational::fmt_q(&h.norm)));
        }
        Validation::Invalid(defects) => {
            r.line(format!("invalid: {} defect(s)", defects.len()));
            let mut csv = String::from("point,message,required,found\n");
            for d in &defects {
                r.line(format!("  {d}"));
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    d.point,
                    d.message,
                    d.required.clone().unwrap_or_default(),
                    d.found.clone().unwrap_or_default()
                ));
            }
            r.table("defects", csv);
            r.code = 3;
        }
    }
    Ok(r)
}

fn region(ctx: &mut Ctx) -> Result<Report, Error> {
    let m = ctx.valid_model()?;
    let rr = m.regular_set();
    let mut r = ctx.report();
    r.line(format!("delta: {}", m.show_set(&rr.delta)));
    r.line(format!("delta_pos: {}", m.show_set(&rr.delta_pos)));
    r.line(format!("delta_reg: {}", m.show_set(&rr.delta_reg)));
    r.line(format!("zero_set: {}", m.show_set(&rr.zero_set)));
    let mut csv = String::from("point,reasons\n");
    for p in &rr.irregular_points {
        let reasons: Vec<String> = p.reasons.iter().map(|x| x.to_string()).collect();
        r.line(format!("irregular {}: {}", m.show(&p.point), reasons.join(", ")));
        csv.push_str(&format!("{},{}\n", m.show(&p.point), reasons.join(";")));
    }
    r.table("irregular_points", csv);
    Ok(r)
}

fn domain(ctx: &mut Ctx) -> Result<Report, Error> {
    let m = ctx.valid_model()?;
    let d = m.essential_domain(ctx.cli.depth);
    let mut r = ctx.report();
    r.line(format!("essential domain: {}", m.show_set(&d.set)));
    match d.stabilized_at {
        Some(k) => r.line(format!("stabilized at n = {k}")),
        None => r.line(format!("warning: not stabilized within depth {}", d.depth)),
    }
    r.table("domain", format!("set,depth,stabilized\n\"{}\",{},{}\n", m.show_set(&d.set), d.depth, d.stabilized));
    Ok(r)
}

fn rep_kind(kind: RepChoice, window: Option<i64>, depth: usize) -> RepKind {
    match kind {
        RepChoice::Orbit => RepKind::Orbit,
        RepChoice::Regular => RepKind::Regular { window: window.unwrap_or(depth as i64) },
    }
}

fn build_rep(ctx: &mut Ctx, kind: RepChoice, window: Option<i64>) -> Result<Report, Error> {
    let m = Arc::new(ctx.valid_model()?);
    let seeds = rep::default_seeds(&m, 2);
    let kind = rep_kind(kind, window, ctx.cli.depth);
    let rp = RepPair::build(m.clone(), &seeds, ctx.cli.depth, kind, None)?;
    let mut r = ctx.report();
    let seeds_s: Vec<String> = seeds.iter().map(|p| m.show(p)).collect();
    r.line(format!("kind: {kind:?}"));
    r.line(format!("seeds: {}", seeds_s.join(" ")));
    r.line(format!("basis points: {}", rp.basis.len()));
    r.line(format!("dimension: {}", rp.dim()));
    r.line(format!("nnz(T): {}", rp.t.nnz()));
    r.line(format!("‖T‖ ≈ {:.12}", rep::op_norm(&rp.t)));
    let res = rep::check_transfer_relation(&rp, &rep::constant(1.0));
    r.line(format!(
        "T*T = π(L1): residual {:.3e} on {}/{} exact columns",
        res.value, res.exact_columns, res.total_columns
    ));
    let mut csv = String::from("row,col,row_label,col_label,value\n");
    let mut entries: Vec<(usize, usize, f64)> = rp.t.iter().map(|(v, (i, j))| (i, j, *v)).collect();
    entries.sort_by_key(|e| (e.0, e.1));
    for (i, j, v) in entries {
        csv.push_str(&format!("{i},{j},\"{}\",\"{}\",{v:.17e}\n", rp.describe_index(i), rp.describe_index(j)));
    }
    r.table("t_matrix", csv);
    Ok(r)
}

fn relations(ctx: &mut Ctx, count: usize) -> Result<Report, Error> {
    let m = ctx.valid_model()?;
    let tol = ctx.tol(1e-10);
    let rows = rep::relation_battery(&m, ctx.cli.depth, count, ctx.cli.seed)?;
    let mut r = ctx.report();
    let mut csv = String::from("relation,item,residual,tol,exact_columns,total_columns,status\n");
    for name in rep::RELATIONS {
        let sel: Vec<_> = rows.iter().filter(|x| x.relation == name).collect();
        let worst = sel.iter().map(|x| x.residual.value).fold(0.0, f64::max);
        let ok = sel.iter().all(|x| x.residual.ok(tol));
        r.line(format!("{name:<12} items {:>3}  max residual {worst:.3e}  {}", sel.len(), status(ok)));
        if !ok {
            r.code = 1;
        }
    }
    for x in &rows {
        csv.push_str(&format!(
            "{},{},{:.3e},{:e},{},{},{}\n",
            x.relation,
            x.item,
            x.residual.value,
            tol,
            x.residual.exact_columns,
            x.residual.total_columns,
            status(x.residual.ok(tol))
        ));
    }
    r.line(format!("tolerance {tol:e}; residuals on exact (interior) columns only"));
    r.table("relations", csv);
    Ok(r)
}

fn spectrum(ctx: &mut Ctx, n: usize) -> Result<Report, Error> {
    let m = ctx.valid_model()?;
    let sd = spectra::spectrum_an(&m, n)?;
    let mut r = ctx.report();
    r.line(sd.to_text(&m));
    r.table("spectrum", sd.to_csv(&m));
    Ok(r)
}

fn quasi_orbits(ctx: &mut Ctx, samples: usize) -> Result<Report, Error> {
    let m = ctx.valid_model()?;
    let pts = m.sample_points(samples, ctx.cli.seed);
    let qo = spectra::quasi_orbits(&m, ctx.cli.depth, &pts)?;
    let mut r = ctx.report();
    r.line(format!("{} classes over {} samples", qo.representatives.len(), pts.len()));
    for (rep, cl) in qo.representatives.iter().zip(&qo.orbit_closures) {
        r.line(format!("class {}: cells {}", m.show(rep), cl));
    }
    let mut csv = String::from("point,class\n");
    for (p, c) in &qo.classes {
        csv.push_str(&format!("{},{}\n", m.show(p), m.show(c)));
    }
    r.table("quasi_orbits", csv);
    Ok(r)
}

fn run_check(m: &Model, property: CheckChoice, psi: Option<&Psi>, depth: usize) -> Result<Verdict, Error> {
    Ok(match property {
        CheckChoice::Free => verdicts::check_top_free(m, depth),
        CheckChoice::Minimal => verdicts::check_minimal(m, depth),
        CheckChoice::Contracting => verdicts::check_contracting(m, depth),
        CheckChoice::Simple => verdicts::verdict_simple(m, depth),
        CheckChoice::PureInfinite => verdicts::verdict_purely_infinite(m, depth),
        CheckChoice::OneCircuit => verdicts::check_one_circuit(m, depth),
        CheckChoice::PositiveEnergy => {
            let psi = psi.ok_or_else(|| Error::Parse("positive-energy needs --psi".into()))?;
            thermo::check_positive_energy(m, psi, depth)
        }
    })
}

fn check(ctx: &mut Ctx, property: CheckChoice, psi: Option<String>) -> Result<Report, Error> {
    let m = ctx.valid_model()?;
    let psi = psi.map(|p| parse_psi(&m, &p)).transpose()?;
    let v = run_check(&m, property, psi.as_ref(), ctx.cli.depth)?;
    let mut r = ctx.report();
    r.line(v.to_text(&m));
    r.table("verdict", format!("property,status,depth\n{:?},{},{}\n", v.property, v.status, v.depth));
    r.code = v.exit_code();
    Ok(r)
}

fn measure_table(c: &KmsCandidate) -> String {
    match &c.measure {
        CandidateMeasure::Ulam(u) => {
            let mut s = String::from("bin,lo,hi,density\n");
            for (i, d) in u.densities.iter().enumerate() {
                let b = u.bin(i);
                s.push_str(&format!("{i},{},{},{d:.15e}\n", xferop::rational::fmt_q(&b.lo), xferop::rational::fmt_q(&b.hi)));
            }
            s
        }
        CandidateMeasure::Vertex { masses } => {
            let mut s = String::from("vertex,mass\n");
            for (i, x) in masses.iter().enumerate() {
                s.push_str(&format!("{i},{x:.15e}\n"));
            }
            s
        }
        CandidateMeasure::Atomic(a) => {
            let mut s = String::from("atom,weight\n");
            for (p, w) in &a.atoms {
                s.push_str(&format!("{p:?},{w:.15e}\n"));
            }
            s
        }
    }
}

fn conformal(
    ctx: &mut Ctx,
    psi_arg: String,
    beta: Option<f64>,
    solve: bool,
    bracket: Option<(f64, f64)>,
) -> Result<Report, Error> {
    let m = ctx.valid_model()?;
    let psi = parse_psi(&m, &psi_arg)?;
    let bins = ctx.cli.bins;
    let cand = match (beta, solve) {
        (Some(b), false) => thermo::eigenmeasure_at(&m, &psi, bins, b)?,
        (None, true) => {
            let br = bracket.ok_or_else(|| Error::Parse("--solve needs --bracket a,b".into()))?;
            thermo::solve_conformal(&m, &psi, bins, br)?
        }
        _ => return Err(Error::Parse("give exactly one of --beta B or --solve --bracket a,b".into())),
    };
    let model = Arc::new(m.clone());
    let psi_arc = Arc::new(psi.clone());
    let setup = KmsSetup::new(&model, &psi_arc, &cand);
    let tests = rep::battery(&m, &m.space_set(), 8, ctx.cli.seed);
    let resid = thermo::conformal_residual(&model, &psi, cand.beta, setup.mu.as_ref(), &tests);
    let mut r = ctx.report();
    r.line(format!("beta: {:.12}", cand.beta));
    r.line(format!("perron root r(beta): {:.12}", cand.perron_root));
    r.line(format!("eigen residual: {:.3e}", cand.eigen_residual));
    r.line(format!("mass: {:.12}", cand.mass()));
    r.line(format!("conformal residual over {} test functions: {resid:.3e}", tests.len()));
    if let CandidateMeasure::Ulam(u) = &cand.measure {
        let uni = UlamMeasure::uniform(u.lo.clone(), u.hi.clone(), u.bins());
        r.line(format!("bins: {}; TV distance from uniform: {:.3e}", u.bins(), u.total_variation(&uni)));
    }
    if cand.degenerate {
        r.line("warning: r(beta) is constant on the bracket; beta is not determined");
    }
    if (cand.perron_root - 1.0).abs() > 1e-8 {
        r.line("not conformal: r(beta) ≠ 1");
        r.code = 1;
    }
    let file = json!({
        "spec": serde_json::from_str::<serde_json::Value>(&spec_file::to_canonical(&m)).expect("canonical spec is JSON"),
        "psi": psi.to_file(&m),
        "seed": ctx.cli.seed,
        "candidate": cand,
    });
    r.table("measure", measure_table(&cand));
    r.table("candidate.json", serde_json::to_string_pretty(&file).expect("serializable") + "\n");
    Ok(r)
}

fn kms_verify(ctx: &mut Ctx, path: PathBuf, count: usize) -> Result<Report, Error> {
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("candidate: {e}")))?;
    let spec_text = serde_json::to_string(v.get("spec").ok_or_else(|| Error::Parse("candidate: missing `spec`".into()))?)
        .expect("value");
    ctx.header.push(("candidate".into(), path.display().to_string()));
    ctx.header.push(("input_hash".into(), format!("fnv1a64:{:016x}", fnv1a(text.as_bytes()))));
    let m = spec_file::parse_str(&spec_text)?;
    transfer::validate(&m).handle()?;
    let pf: PsiFile = serde_json::from_value(v.get("psi").cloned().unwrap_or_default())
        .map_err(|e| Error::Parse(format!("candidate `psi`: {e}")))?;
    let psi = Psi::from_file(&m, &pf)?;
    let cand: KmsCandidate = serde_json::from_value(v.get("candidate").cloned().unwrap_or_default())
        .map_err(|e| Error::Parse(format!("candidate `candidate`: {e}")))?;
    let model = Arc::new(m);
    let setup = KmsSetup::new(&model, &Arc::new(psi), &cand);
    let bins = match &cand.measure {
        CandidateMeasure::Ulam(u) => u.bins(),
        _ => 0,
    };
    let tol = ctx.tol(if bins > 0 { 1e-5 + 10.0 / bins as f64 } else { 1e-5 });
    let pairs = thermo::kms_battery(&setup, count, ctx.cli.seed);
    let worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    let mut r = ctx.report();
    r.line(format!("beta: {:.12}", cand.beta));
    r.line(format!("pairs: {}", pairs.len()));
    r.line(format!("max KMS residual: {worst:.3e} (tol {tol:e}) {}", status(worst <= tol)));
    if worst > tol {
        r.code = 1;
    }
    let mut csv = thermo::kms_csv(&pairs);
    csv = csv.replacen("residual\n", "residual,tol\n", 1);
    let csv: String = csv
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l}\n") } else { format!("{l},{tol:e}\n") })
        .collect();
    r.table("kms", csv);
    Ok(r)
}

fn groupoid_cmd(ctx: &mut Ctx, op: GroupoidChoice, restrict: bool, count: usize, samples: usize) -> Result<Report, Error> {
    let mut m = ctx.valid_model()?;
    let mut r = ctx.report();
    if restrict {
        m = groupoid::restrict_regular(&m)?;
        r.line(format!("restricted φ to Δ_reg = {}", m.show_set(&m.regular_set().delta_reg)));
    }
    let m = Arc::new(m);
    let depth = ctx.cli.depth;
    let tol = ctx.tol(1e-10);
    match op {
        GroupoidChoice::Build => {
            let seeds = rep::default_seeds(&m, 2);
            let g: TruncatedGroupoid = groupoid::build_deaconu(&m, &seeds, depth)?;
            let brute = groupoid::brute_force_count(&m, &g.points, depth);
            let bad = g.axiom_violations();
            r.line(format!("points: {}", g.points.len()));
            r.line(format!("elements: {} (enumeration oracle {brute})", g.len()));
            r.line(format!("axiom violations: {}", bad.len()));
            for b in bad.iter().take(10) {
                r.line(format!("  {b}"));
            }
            if brute != g.len() || !bad.is_empty() {
                r.code = 1;
            }
            let mut pts = String::from("index,point\n");
            for (i, p) in g.points.iter().enumerate() {
                pts.push_str(&format!("{i},{}\n", m.show(p)));
            }
            r.table("elements", g.to_csv());
            r.table("points", pts);
        }
        GroupoidChoice::Gap => {
            let pts = m.sample_points(samples, ctx.cli.seed);
            let rep = groupoid::gap_check(&m, &pts, depth)?;
            r.line(format!("samples: {}; related pairs: {}", pts.len(), rep.pairs));
            r.line(format!(
                "reflexive {} symmetric {} transitive {} nested {}",
                rep.reflexive, rep.symmetric, rep.transitive, rep.nested
            ));
            if !(rep.reflexive && rep.symmetric && rep.transitive && rep.nested) {
                r.code = 1;
            }
            let mut csv = String::from("n,x,y\n");
            for n in 0..=depth {
                for p in groupoid::gap_relation(&m, n, &pts)? {
                    csv.push_str(&format!("{},{},{}\n", p.n, m.show(&p.x), m.show(&p.y)));
                }
            }
            r.table("gap", csv);
        }
        GroupoidChoice::IsoCheck => {
            let rows = groupoid::iso_battery(&m, depth, count, ctx.cli.seed)?;
            let worst = rows.iter().map(|(_, x)| x.value).fold(0.0, f64::max);
            let ok = rows.iter().all(|(_, x)| x.ok(tol));
            r.line(format!("pairs: {}; max convolution residual {worst:.3e} (tol {tol:e}) {}", rows.len(), status(ok)));
            if !ok {
                r.code = 1;
            }
            let mut csv = String::from("pair,exponents,residual,tol,exact_columns,total_columns\n");
            for (i, (label, x)) in rows.iter().enumerate() {
                csv.push_str(&format!(
                    "{i},{label},{:.3e},{tol:e},{},{}\n",
                    x.value, x.exact_columns, x.total_columns
                ));
            }
            r.table("iso", csv);
        }
        GroupoidChoice::GraphGen => {
            let gens = groupoid::graph_generators(&m, depth)?;
            let ok = gens.residuals.iter().all(|(_, x)| x.ok(tol)) && gens.consistency <= tol;
            r.line(format!(
                "relations: {}; worst residual {:.3e} (tol {tol:e}) {}",
                gens.residuals.len(),
                gens.worst(),
                status(ok)
            ));
            if !ok {
                r.code = 1;
            }
            r.table("generators", gens.to_csv());
        }
    }
    Ok(r)
}

fn full_report(ctx: &mut Ctx) -> Result<Report, Error> {
    let m = ctx.valid_model()?;
    let h = transfer::validate(&m).handle()?;
    let depth = ctx.cli.depth;
    let rr = m.regular_set();
    let mut r = ctx.report();
    r.line(format!("norm ‖L‖ = {}", xferop::rational::fmt_q(&h.norm)));
    r.line(format!("delta_pos: {}", m.show_set(&rr.delta_pos)));
    r.line(format!("delta_reg: {}", m.show_set(&rr.delta_reg)));
    r.line(format!("essential domain: {}", m.show_set(&m.essential_domain(depth).set)));
    let mut csv = String::from("property,status,depth\n");
    for p in [
        CheckChoice::Free,
        CheckChoice::Minimal,
        CheckChoice::Contracting,
        CheckChoice::OneCircuit,
        CheckChoice::Simple,
        CheckChoice::PureInfinite,
    ] {
        let v = run_check(&m, p, None, depth)?;
        r.line(v.to_text(&m));
        csv.push_str(&format!("{:?},{},{}\n", v.property, v.status, v.depth));
    }
    r.table("verdicts", csv);
    Ok(r)
}

fn roundtrip(ctx: &mut Ctx) -> Result<Report, Error> {
    let arg = ctx.cli.spec.clone().ok_or_else(|| Error::Parse("--spec is required".into()))?;
    let input = read_spec(&arg)?;
    let canon = spec_file::roundtrip(&input.text)?;
    let again = spec_file::roundtrip(&canon)?;
    let mut r = Report::new(Vec::new());
    r.line(canon.trim_end());
    if again != canon {
        eprintln!("warning: canonical form is not a fixed point");
        r.code = 1;
    }
    Ok(r)
}
