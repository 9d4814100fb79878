//! Problem files, task dispatch and reports for the `nestlab` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::algebra::{close_algebra, AmbientAlgebra, MatrixAlgebra};
use crate::error::Error;
use crate::factorization::{
    factorization_from_lattice, logmodularity_gap, nest_cholesky, triangularize_with_lattice, witness_generator,
    FactorizationReport, Nest, Verdict, WitnessMode, DEFAULT_EPSILON, DEFAULT_MAX_ITER,
};
use crate::lattice::{atoms, compute_lat, Classification, Projection, ProjectionLattice, DEFAULT_BUDGET};
use crate::numerics::{c64, CMatrix, ToleranceConfig};
use crate::reflexivity::{alg_of, hull_from_lattice, masa_check, reflexivity_from_lattice, ReflexivityStatus};
use crate::twoproj::{halmos_decompose, residuals};

pub const FORMAT_VERSION: &str = "1";
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
/// α values used by the GENERIC witness when none are given.
pub const DEFAULT_ALPHAS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
/// Random positive matrices factored by `diagnose`.
pub const DEFAULT_SAMPLES: usize = 2;

const PARAM_KEYS: [&str; 13] = [
    "generators", "projections", "nest", "x", "p", "q", "mode", "epsilon", "alpha", "seed", "budget", "max_iter",
    "samples",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Lat,
    Alg,
    Hull,
    Reflexive,
    Factorize,
    Gap,
    Triangularize,
    Halmos,
    Witness,
    Diagnose,
}

impl Task {
    pub const ALL: [Task; 10] = [
        Task::Lat,
        Task::Alg,
        Task::Hull,
        Task::Reflexive,
        Task::Factorize,
        Task::Gap,
        Task::Triangularize,
        Task::Halmos,
        Task::Witness,
        Task::Diagnose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Lat => "lat",
            Task::Alg => "alg",
            Task::Hull => "hull",
            Task::Reflexive => "reflexive",
            Task::Factorize => "factorize",
            Task::Gap => "gap",
            Task::Triangularize => "triangularize",
            Task::Halmos => "halmos",
            Task::Witness => "witness",
            Task::Diagnose => "diagnose",
        }
    }

    fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
    #[error(transparent)]
    Library(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } | CliError::Io { .. } => 2,
            CliError::Library(Error::NonCslSuspected { .. }) => 3,
            CliError::Library(Error::NumericalFailure(_)) => 4,
            CliError::Library(_) => 2,
        }
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Validation { path: path.into(), message: message.into() }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq)]
pub enum NestItem {
    Name(String),
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, Default)]
pub struct Params {
    pub generators: Option<Vec<String>>,
    pub projections: Option<Vec<String>>,
    pub nest: Option<Vec<NestItem>>,
    pub x: Option<String>,
    pub p: Option<String>,
    pub q: Option<String>,
    pub mode: Option<WitnessMode>,
    pub epsilon: Option<f64>,
    pub alpha: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub max_iter: Option<usize>,
    pub samples: Option<usize>,
}

/// A validated problem file.
#[derive(Debug, Clone)]
pub struct Problem {
    pub version: String,
    pub ambient: AmbientAlgebra,
    pub matrices: BTreeMap<String, CMatrix>,
    pub task: Task,
    pub params: Params,
}

pub fn matrix_to_json(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|i| Value::Array((0..m.cols()).map(|j| json!([num(m.get(i, j).re), num(m.get(i, j).im)])).collect()))
            .collect(),
    )
}

/// Parses `[[[re, im], …], …]` as a `rows × cols` matrix.
pub fn matrix_from_json(v: &Value, path: &str, rows: usize, cols: usize) -> CliResult<CMatrix> {
    let r = v.as_array().ok_or_else(|| invalid(path, "expected an array of rows"))?;
    if r.len() != rows {
        return Err(invalid(path, format!("expected {rows} rows, found {}", r.len())));
    }
    let mut m = CMatrix::zeros(rows, cols);
    for (i, row) in r.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let row = row.as_array().ok_or_else(|| invalid(&rp, "expected an array of [re, im] entries"))?;
        if row.len() != cols {
            return Err(invalid(&rp, format!("expected {cols} entries, found {}", row.len())));
        }
        for (j, e) in row.iter().enumerate() {
            let ep = format!("{rp}[{j}]");
            let pair = e.as_array().filter(|p| p.len() == 2).ok_or_else(|| invalid(&ep, "expected an [re, im] pair"))?;
            let part = |k: usize| {
                pair[k].as_f64().filter(|x| x.is_finite()).ok_or_else(|| invalid(format!("{ep}[{k}]"), "expected a finite number"))
            };
            m.set(i, j, c64(part(0)?, part(1)?));
        }
    }
    Ok(m)
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn get_uint(v: &Value, path: &str) -> CliResult<u64> {
    v.as_u64().ok_or_else(|| invalid(path, "expected a non-negative integer"))
}

fn get_positive(v: &Value, path: &str) -> CliResult<usize> {
    match get_uint(v, path)? {
        0 => Err(invalid(path, "expected a positive integer")),
        k => usize::try_from(k).map_err(|_| invalid(path, "integer too large")),
    }
}

fn get_f64(v: &Value, path: &str) -> CliResult<f64> {
    v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| invalid(path, "expected a finite number"))
}

impl Problem {
    /// Parses and validates a problem file. Projections named in the parameters
    /// are checked against `tol`.
    pub fn parse(text: &str, tol: &ToleranceConfig) -> CliResult<Problem> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| invalid("$", format!("malformed JSON at line {} column {}: {e}", e.line(), e.column())))?;
        let obj = root.as_object().ok_or_else(|| invalid("$", "expected an object"))?;
        for key in obj.keys() {
            if !["version", "ambient", "matrices", "task", "params"].contains(&key.as_str()) {
                return Err(invalid(format!("$.{key}"), "unknown field"));
            }
        }
        let field = |k: &str| obj.get(k).ok_or_else(|| invalid("$", format!("missing required field \"{k}\"")));

        let version = field("version")?.as_str().ok_or_else(|| invalid("$.version", "expected a string"))?;
        if version.split('.').next() != Some(FORMAT_VERSION) {
            return Err(invalid("$.version", format!("unsupported format version \"{version}\"")));
        }

        let amb = field("ambient")?.as_object().ok_or_else(|| invalid("$.ambient", "expected an object"))?;
        for key in amb.keys() {
            if key != "dim" && key != "block_dims" {
                return Err(invalid(format!("$.ambient.{key}"), "unknown field"));
            }
        }
        let dim = get_positive(amb.get("dim").ok_or_else(|| invalid("$.ambient", "missing required field \"dim\""))?, "$.ambient.dim")?;
        let ambient = match amb.get("block_dims") {
            None | Some(Value::Null) => AmbientAlgebra::full(dim)?,
            Some(v) => {
                let arr = v.as_array().ok_or_else(|| invalid("$.ambient.block_dims", "expected an array"))?;
                let dims = arr
                    .iter()
                    .enumerate()
                    .map(|(i, d)| get_positive(d, &format!("$.ambient.block_dims[{i}]")))
                    .collect::<CliResult<Vec<_>>>()?;
                if dims.iter().sum::<usize>() != dim {
                    return Err(invalid("$.ambient.block_dims", format!("block sizes {dims:?} do not sum to dim = {dim}")));
                }
                AmbientAlgebra::block_diagonal(&dims)?
            }
        };

        let mut matrices = BTreeMap::new();
        if let Some(v) = obj.get("matrices") {
            let ms = v.as_object().ok_or_else(|| invalid("$.matrices", "expected an object"))?;
            for (name, m) in ms {
                let path = format!("$.matrices.{name}");
                matrices.insert(name.clone(), matrix_from_json(m, &path, dim, dim)?);
            }
        }

        let task_str = field("task")?.as_str().ok_or_else(|| invalid("$.task", "expected a string"))?;
        let task = Task::parse(task_str).ok_or_else(|| invalid("$.task", format!("unknown task \"{task_str}\"")))?;

        let mut problem = Problem { version: version.to_string(), ambient, matrices, task, params: Params::default() };
        if let Some(v) = obj.get("params") {
            let map = v.as_object().ok_or_else(|| invalid("$.params", "expected an object"))?;
            problem.params = problem.parse_params(map, tol)?;
        }
        Ok(problem)
    }

    fn name(&self, v: &Value, path: &str) -> CliResult<String> {
        let s = v.as_str().ok_or_else(|| invalid(path, "expected a matrix name"))?;
        if !self.matrices.contains_key(s) {
            return Err(invalid(path, format!("undefined matrix \"{s}\"")));
        }
        Ok(s.to_string())
    }

    fn names(&self, v: &Value, path: &str) -> CliResult<Vec<String>> {
        let arr = v.as_array().ok_or_else(|| invalid(path, "expected an array of matrix names"))?;
        arr.iter().enumerate().map(|(i, x)| self.name(x, &format!("{path}[{i}]"))).collect()
    }

    fn check_projection(&self, name: &str, path: &str, tol: &ToleranceConfig) -> CliResult<()> {
        let m = &self.matrices[name];
        Projection::new(m.clone(), tol).map_err(|e| invalid(path, format!("\"{name}\": {e}")))?;
        let residual = self.ambient.residual(m)?;
        if !tol.close(residual, m.fro_norm()) {
            return Err(invalid(path, format!("\"{name}\" lies outside the ambient algebra (residual {residual:e})")));
        }
        Ok(())
    }

    fn parse_params(&self, map: &Map<String, Value>, tol: &ToleranceConfig) -> CliResult<Params> {
        let mut p = Params::default();
        let n = self.ambient.dim();
        for (key, v) in map {
            let path = format!("$.params.{key}");
            match key.as_str() {
                "generators" => p.generators = Some(self.names(v, &path)?),
                "projections" => {
                    let names = self.names(v, &path)?;
                    for (i, name) in names.iter().enumerate() {
                        self.check_projection(name, &format!("{path}[{i}]"), tol)?;
                    }
                    p.projections = Some(names);
                }
                "nest" => {
                    let arr = v.as_array().ok_or_else(|| invalid(&path, "expected an array"))?;
                    let mut items = Vec::new();
                    for (i, item) in arr.iter().enumerate() {
                        let ip = format!("{path}[{i}]");
                        if item.is_string() {
                            let name = self.name(item, &ip)?;
                            self.check_projection(&name, &ip, tol)?;
                            items.push(NestItem::Name(name));
                        } else {
                            let idx = item.as_array().ok_or_else(|| invalid(&ip, "expected a matrix name or an array of indices"))?;
                            let mut set = Vec::new();
                            for (j, x) in idx.iter().enumerate() {
                                let k = get_uint(x, &format!("{ip}[{j}]"))? as usize;
                                if k >= n {
                                    return Err(invalid(format!("{ip}[{j}]"), format!("index {k} out of range for dimension {n}")));
                                }
                                set.push(k);
                            }
                            items.push(NestItem::Indices(set));
                        }
                    }
                    p.nest = Some(items);
                }
                "x" => p.x = Some(self.name(v, &path)?),
                "p" | "q" => {
                    let name = self.name(v, &path)?;
                    self.check_projection(&name, &path, tol)?;
                    if key == "p" {
                        p.p = Some(name);
                    } else {
                        p.q = Some(name);
                    }
                }
                "mode" => {
                    p.mode = Some(match v.as_str() {
                        Some("ORTHOGONAL") => WitnessMode::Orthogonal,
                        Some("COMMUTING") => WitnessMode::Commuting,
                        Some("GENERIC") => WitnessMode::Generic,
                        _ => return Err(invalid(&path, "expected one of \"ORTHOGONAL\", \"COMMUTING\", \"GENERIC\"")),
                    })
                }
                "epsilon" => p.epsilon = Some(get_f64(v, &path)?),
                "alpha" => {
                    p.alpha = Some(match v.as_array() {
                        Some(arr) => arr
                            .iter()
                            .enumerate()
                            .map(|(i, a)| get_f64(a, &format!("{path}[{i}]")))
                            .collect::<CliResult<_>>()?,
                        None => vec![get_f64(v, &path)?],
                    })
                }
                "seed" => p.seed = Some(get_uint(v, &path)?),
                "budget" => p.budget = Some(get_uint(v, &path)? as usize),
                "max_iter" => p.max_iter = Some(get_positive(v, &path)?),
                "samples" => p.samples = Some(get_uint(v, &path)? as usize),
                _ => {
                    return Err(invalid(&path, format!("unknown parameter; expected one of {}", PARAM_KEYS.join(", "))))
                }
            }
        }
        Ok(p)
    }
}

/// Command-line overrides. Unset values fall back to the problem file, then to defaults.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub eq_tol: Option<f64>,
    pub budget: Option<usize>,
}

impl RunOptions {
    pub fn tolerance(&self) -> CliResult<ToleranceConfig> {
        let mut tol = ToleranceConfig::default();
        if let Some(e) = self.eq_tol {
            tol = tol.with_eq_tol(e);
        }
        tol.validate().map_err(|e| invalid("--eq-tol", e.to_string()))?;
        Ok(tol)
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub text: String,
    pub exit_code: i32,
}

struct Ctx<'a> {
    problem: &'a Problem,
    tol: ToleranceConfig,
    seed: u64,
    budget: usize,
}

impl Ctx<'_> {
    fn matrix(&self, name: &str) -> &CMatrix {
        &self.problem.matrices[name]
    }

    fn projection(&self, name: &str) -> CliResult<Projection> {
        Ok(Projection::new(self.matrix(name).clone(), &self.tol)?)
    }

    fn require<'b, T>(&self, v: &'b Option<T>, key: &str) -> CliResult<&'b T> {
        v.as_ref().ok_or_else(|| {
            invalid(format!("$.params.{key}"), format!("required for task \"{}\"", self.problem.task.name()))
        })
    }

    fn nest(&self) -> CliResult<Option<Nest>> {
        let Some(items) = &self.problem.params.nest else { return Ok(None) };
        let n = self.problem.ambient.dim();
        let chain = items
            .iter()
            .map(|it| match it {
                NestItem::Name(s) => self.projection(s),
                NestItem::Indices(ix) => Ok(Projection::coordinate(n, ix)),
            })
            .collect::<CliResult<Vec<_>>>()?;
        let nest = Nest::from_chain(n, &chain, &self.tol).map_err(|e| invalid("$.params.nest", e.to_string()))?;
        nest.check_in_ambient(&self.problem.ambient, &self.tol)
            .map_err(|e| invalid("$.params.nest", e.to_string()))?;
        Ok(Some(nest))
    }

    /// The algebra named by `generators`, `projections` or `nest`, in that order.
    fn algebra(&self) -> CliResult<MatrixAlgebra> {
        let p = &self.problem.params;
        let m = &self.problem.ambient;
        if let Some(g) = &p.generators {
            let gens: Vec<CMatrix> = g.iter().map(|s| self.matrix(s).clone()).collect();
            for (i, (g, name)) in gens.iter().zip(g).enumerate() {
                let residual = m.residual(g)?;
                if !self.tol.close(residual, g.fro_norm()) {
                    return Err(invalid(
                        format!("$.params.generators[{i}]"),
                        format!("\"{name}\" lies outside the ambient algebra (residual {residual:e})"),
                    ));
                }
            }
            return Ok(close_algebra(&gens, m, &self.tol)?);
        }
        if let Some(ps) = &p.projections {
            let e = ps.iter().map(|s| self.projection(s)).collect::<CliResult<Vec<_>>>()?;
            return Ok(alg_of(&e, m, &self.tol)?);
        }
        if let Some(nest) = self.nest()? {
            return Ok(alg_of(nest.projections(), m, &self.tol)?);
        }
        Err(invalid("$.params", format!("task \"{}\" needs one of generators, projections or nest", self.problem.task.name())))
    }
}

fn lattice_json(l: &ProjectionLattice, tol: &ToleranceConfig) -> CliResult<Value> {
    let elements: Vec<Value> =
        l.elements().iter().map(|p| json!({"rank": p.rank(), "matrix": matrix_to_json(p.matrix())})).collect();
    let witness = l.witness().map(|(p, q)| {
        json!({"p": matrix_to_json(p.matrix()), "q": matrix_to_json(q.matrix()), "commutator_norm": num(p.commutator_norm(q))})
    });
    let atom_list = if l.classification() != Classification::NonCsl && l.complete() {
        Some(atoms(l, tol)?.iter().map(|a| json!({"rank": a.atom.rank(), "matrix": matrix_to_json(a.atom.matrix())})).collect::<Vec<_>>())
    } else {
        None
    };
    Ok(json!({
        "classification": l.classification(),
        "complete": l.complete(),
        "size": l.len(),
        "elements": elements,
        "witness": witness,
        "atoms": atom_list,
    }))
}

fn algebra_json(a: &MatrixAlgebra) -> Value {
    json!({"dim": a.dim(), "basis": a.basis().iter().map(matrix_to_json).collect::<Vec<_>>()})
}

fn report_json(r: &FactorizationReport) -> Value {
    json!({
        "status": r.status,
        "s": r.s.as_ref().map(matrix_to_json),
        "s_inv": r.s_inv.as_ref().map(matrix_to_json),
        "residual": num(r.residual),
        "gap": r.gap.map(num),
        "iterations": r.iterations,
        "membership_residual": r.membership_residual.map(num),
        "membership_residual_inv": r.membership_residual_inv.map(num),
        "trace": r.trace.iter().map(|t| json!({
            "start": t.start, "iterations": t.iterations, "residual": num(t.residual), "stop": t.stop,
        })).collect::<Vec<_>>(),
        "cross_check": r.cross_check.as_ref().map(|c| json!({"nest_residual": num(c.nest_residual), "agrees": c.agrees})),
    })
}

fn reflexivity_json(s: &ReflexivityStatus) -> Value {
    serde_json::to_value(s).unwrap_or(Value::Null)
}

fn status_line(r: &FactorizationReport) -> String {
    match r.gap {
        Some(g) => format!("GAP {g:.6e}"),
        None => format!("FACTORED (residual {:.3e})", r.residual),
    }
}

/// Runs `task` on a validated problem.
pub fn run(problem: &Problem, task: Task, opts: &RunOptions) -> CliResult<Report> {
    let tol = opts.tolerance()?;
    let ctx = Ctx {
        problem,
        tol,
        seed: opts.seed.or(problem.params.seed).unwrap_or(0),
        budget: opts.budget.or(problem.params.budget).unwrap_or(DEFAULT_BUDGET),
    };
    let mut text = String::new();
    let outcome = match task {
        Task::Lat => run_lat(&ctx, &mut text),
        Task::Alg => run_alg(&ctx, &mut text),
        Task::Hull => run_hull(&ctx, &mut text),
        Task::Reflexive => run_reflexive(&ctx, &mut text),
        Task::Factorize => run_factorize(&ctx, &mut text),
        Task::Gap => run_gap(&ctx, &mut text),
        Task::Triangularize => run_triangularize(&ctx, &mut text),
        Task::Halmos => run_halmos(&ctx, &mut text),
        Task::Witness => run_witness(&ctx, &mut text),
        Task::Diagnose => run_diagnose(&ctx, &mut text),
    };
    let (status, result, exit_code) = match outcome {
        Ok((status, result)) => {
            let code = if status == "INDETERMINATE" { 3 } else { 0 };
            (status, result, code)
        }
        Err(CliError::Library(Error::NonCslSuspected { cap })) => {
            let _ = writeln!(text, "NON_CSL_SUSPECTED: lattice closure exceeded {cap} elements");
            ("NON_CSL_SUSPECTED", json!({"cap": cap}), 3)
        }
        Err(e) => return Err(e),
    };
    let json = json!({
        "nestlab_version": LIBRARY_VERSION,
        "format_version": FORMAT_VERSION,
        "task": task,
        "seed": ctx.seed,
        "budget": ctx.budget,
        "tolerance": {"eq_tol": tol.eq_tol, "rank_tol": tol.rank_tol, "psd_tol": tol.psd_tol},
        "ambient": {"dim": problem.ambient.dim(), "block_dims": problem.ambient.block_dims()},
        "status": status,
        "result": result,
    });
    Ok(Report { json, text, exit_code })
}

type TaskOutput = CliResult<(&'static str, Value)>;

fn run_lat(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let a = ctx.algebra()?;
    let l = compute_lat(&a, ctx.seed, ctx.budget, &ctx.tol)?;
    let _ = writeln!(text, "Lat(A): {} ({} elements, complete: {})", l.classification(), l.len(), l.complete());
    let ranks: Vec<String> = l.elements().iter().map(|p| p.rank().to_string()).collect();
    let _ = writeln!(text, "ranks: {}", ranks.join(" "));
    if let Some((p, q)) = l.witness() {
        let _ = writeln!(text, "witness: projections of rank {} and {} with commutator norm {:.3e}", p.rank(), q.rank(), p.commutator_norm(q));
    }
    Ok(("OK", json!({"algebra_dim": a.dim(), "lattice": lattice_json(&l, &ctx.tol)?})))
}

fn run_alg(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let p = &ctx.problem.params;
    let a = if p.projections.is_some() || p.nest.is_some() {
        ctx.algebra()?
    } else {
        return Err(invalid("$.params", "task \"alg\" needs projections or nest"));
    };
    let _ = writeln!(text, "Alg_M(E): dimension {}", a.dim());
    Ok(("OK", json!({"algebra": algebra_json(&a)})))
}

fn run_hull(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let a = ctx.algebra()?;
    let l = compute_lat(&a, ctx.seed, ctx.budget, &ctx.tol)?;
    if l.classification() == Classification::NonCsl || !l.complete() {
        let _ = writeln!(text, "hull computed from a {} lattice", l.classification());
    }
    let h = hull_from_lattice(&a, &l, &ctx.tol)?;
    let _ = writeln!(text, "dim A = {}, dim Alg Lat A = {}", a.dim(), h.dim());
    Ok(("OK", json!({"algebra_dim": a.dim(), "hull": algebra_json(&h)})))
}

fn run_reflexive(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let a = ctx.algebra()?;
    let l = compute_lat(&a, ctx.seed, ctx.budget, &ctx.tol)?;
    let s = reflexivity_from_lattice(&a, &l, &ctx.tol)?;
    let _ = writeln!(text, "reflexivity: {}", serde_json::to_string(&s).unwrap_or_default());
    Ok(("OK", json!({"algebra_dim": a.dim(), "classification": l.classification(), "reflexivity": reflexivity_json(&s)})))
}

fn run_factorize(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let x = ctx.matrix(ctx.require(&ctx.problem.params.x, "x")?);
    let nest = ctx.nest()?.ok_or_else(|| invalid("$.params.nest", "required for task \"factorize\""))?;
    let r = nest_cholesky(x, &nest, &ctx.tol)?;
    let _ = writeln!(text, "nest atoms {:?}: {}", nest.atom_dims(), status_line(&r));
    Ok(("OK", json!({"atom_dims": nest.atom_dims(), "factorization": report_json(&r)})))
}

fn run_gap(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let x = ctx.matrix(ctx.require(&ctx.problem.params.x, "x")?);
    let a = ctx.algebra()?;
    let max_iter = ctx.problem.params.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let r = logmodularity_gap(x, &a, ctx.seed, max_iter, &ctx.tol)?;
    let _ = writeln!(text, "{}", status_line(&r));
    if let Some(c) = &r.cross_check {
        let _ = writeln!(text, "nest-Cholesky residual {:.3e} ({})", c.nest_residual, if c.agrees { "agrees" } else { "DISAGREES" });
    }
    Ok(("OK", json!({"algebra_dim": a.dim(), "factorization": report_json(&r)})))
}

fn run_triangularize(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let a = ctx.algebra()?;
    let l = compute_lat(&a, ctx.seed, ctx.budget, &ctx.tol)?;
    let t = triangularize_with_lattice(&a, &l, &ctx.tol)?;
    let _ = writeln!(text, "atom dimensions {:?}, max lower-left block {:.3e}", t.atom_dims, t.max_lower_left);
    Ok(("OK", json!({"u": matrix_to_json(&t.u), "atom_dims": t.atom_dims, "max_lower_left": num(t.max_lower_left)})))
}

fn run_halmos(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let p = ctx.projection(ctx.require(&ctx.problem.params.p, "p")?)?;
    let q = ctx.projection(ctx.require(&ctx.problem.params.q, "q")?)?;
    let h = halmos_decompose(&p, &q, &ctx.tol)?;
    let r = residuals(&h, &p, &q);
    let [a, b, c, d] = h.corner_ranks();
    let _ = writeln!(text, "corners P∧Q {a}, P∧Q⊥ {b}, P⊥∧Q {c}, P⊥∧Q⊥ {d}; generic dimension {}", h.generic_dim);
    let _ = writeln!(text, "reconstruction residual {:.3e}", r.reconstruction);
    Ok((
        "OK",
        json!({
            "corner_ranks": {"p_and_q": a, "p_and_not_q": b, "not_p_and_q": c, "not_p_and_not_q": d},
            "generic_dim": h.generic_dim,
            "commutes": h.generic_dim == 0,
            "u": matrix_to_json(&h.u),
            "x": matrix_to_json(&h.x),
            "y": matrix_to_json(&h.y),
            "residuals": {
                "commutator": num(r.commutator),
                "pythagoras": num(r.pythagoras),
                "min_singular": num(r.min_singular),
                "reconstruction": num(r.reconstruction),
                "unitarity": num(r.unitarity),
            },
        }),
    ))
}

fn full_ambient(ctx: &Ctx) -> CliResult<MatrixAlgebra> {
    let m = &ctx.problem.ambient;
    Ok(close_algebra(&m.basis(), m, &ctx.tol)?)
}

/// Witness `Z` for a pair and its factorization against `Alg{p, q}` and against `M`.
fn witness_section(ctx: &Ctx, p: &Projection, q: &Projection, mode: WitnessMode, eps: f64, alpha: f64, max_iter: usize) -> CliResult<Value> {
    let m = &ctx.problem.ambient;
    let w = witness_generator(p, q, m, mode, eps, alpha, &ctx.tol)?;
    let a = alg_of(&[p.clone(), q.clone()], m, &ctx.tol)?;
    let in_alg = logmodularity_gap(&w.z, &a, ctx.seed, max_iter, &ctx.tol)?;
    let in_m = logmodularity_gap(&w.z, &full_ambient(ctx)?, ctx.seed, max_iter, &ctx.tol)?;
    let zn = w.z.norm();
    let bound = match mode {
        WitnessMode::Orthogonal => Some(eps / zn),
        WitnessMode::Commuting => Some(eps / ((1.0 + eps) * zn)),
        WitnessMode::Generic => None,
    };
    Ok(json!({
        "mode": mode,
        "epsilon": if mode == WitnessMode::Generic { Value::Null } else { num(eps) },
        "alpha": if mode == WitnessMode::Generic { num(alpha) } else { Value::Null },
        "z": matrix_to_json(&w.z),
        "v": matrix_to_json(&w.v),
        "lower_bound": bound.map(num),
        "against_alg_pq": report_json(&in_alg),
        "against_ambient": report_json(&in_m),
    }))
}

fn run_witness(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let params = &ctx.problem.params;
    let p = ctx.projection(ctx.require(&params.p, "p")?)?;
    let q = ctx.projection(ctx.require(&params.q, "q")?)?;
    let mode = *ctx.require(&params.mode, "mode")?;
    let eps = params.epsilon.unwrap_or(DEFAULT_EPSILON);
    let max_iter = params.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let alphas = match (mode, &params.alpha) {
        (WitnessMode::Generic, Some(a)) => a.clone(),
        (WitnessMode::Generic, None) => DEFAULT_ALPHAS.to_vec(),
        _ => vec![1.0],
    };
    let mut sections = Vec::new();
    for &alpha in &alphas {
        let s = witness_section(ctx, &p, &q, mode, eps, alpha, max_iter)?;
        let gap = s["against_alg_pq"]["gap"].as_f64();
        let full = s["against_ambient"]["status"].as_str().unwrap_or("");
        match mode {
            WitnessMode::Generic => {
                let _ = writeln!(text, "alpha {alpha}: gap in Alg{{p,q}} {}, in M {full}", gap.map_or("none".into(), |g| format!("{g:.6e}")));
            }
            _ => {
                let _ = writeln!(text, "gap in Alg{{p,q}} {}, in M {full}", gap.map_or("none".into(), |g| format!("{g:.6e}")));
            }
        }
        sections.push(s);
    }
    Ok(("OK", json!({"witnesses": sections})))
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Yes => "YES",
        Verdict::No => "NO",
        Verdict::Indeterminate => "INDETERMINATE",
    }
}

fn run_diagnose(ctx: &Ctx, text: &mut String) -> TaskOutput {
    let tol = &ctx.tol;
    let m = &ctx.problem.ambient;
    let a = ctx.algebra()?;
    let lat = match compute_lat(&a, ctx.seed, ctx.budget, tol) {
        Ok(l) => l,
        Err(Error::NonCslSuspected { cap }) => {
            let _ = writeln!(text, "UNDETERMINED LATTICE (factorization: INDETERMINATE)");
            return Ok(("INDETERMINATE", json!({"verdict": "INDETERMINATE", "reason": format!("lattice closure exceeded {cap} elements")})));
        }
        Err(e) => return Err(e.into()),
    };
    let hull = hull_from_lattice(&a, &lat, tol)?;
    let refl = reflexivity_from_lattice(&a, &lat, tol)?;
    let masa = masa_check(&a, ctx.seed, tol)?;
    let verdict = factorization_from_lattice(&a, lat.clone(), tol)?;
    let tri = verdict.triangularization.as_ref();

    let label = match (lat.classification(), &refl, verdict.verdict) {
        (_, _, Verdict::Indeterminate) => "UNDETERMINED LATTICE",
        (Classification::NonCsl, _, _) => "NON-COMMUTATIVE LATTICE",
        (_, ReflexivityStatus::NotReflexive { .. }, _) => "NON-REFLEXIVE ALGEBRA",
        (Classification::Nest, _, Verdict::Yes) => "NEST ALGEBRA",
        (_, _, Verdict::Yes) => "DIRECT SUM OF NEST ALGEBRAS",
        (Classification::CslNotNest, _, _) => "CSL ALGEBRA, NOT A NEST",
        _ => "ALGEBRA",
    };
    let headline = format!("{label} (factorization: {})", verdict_name(verdict.verdict));
    let _ = writeln!(text, "{headline}");
    let _ = writeln!(text, "reason: {}", verdict.reason);
    let _ = writeln!(text, "dim A = {}, dim Alg Lat A = {}", a.dim(), hull.dim());
    let _ = writeln!(text, "Lat(A): {} ({} elements)", lat.classification(), lat.len());
    let _ = writeln!(text, "contains a masa: {}", masa.contains_masa);
    if let Some(t) = tri {
        let _ = writeln!(text, "triangular form: atoms {:?}", t.atom_dims);
    }

    // Random positive elements of M, and a witness where the lattice provides one.
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let n = m.dim();
    let max_iter = ctx.problem.params.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let mut samples = Vec::new();
    let mut review = false;
    for k in 0..ctx.problem.params.samples.unwrap_or(DEFAULT_SAMPLES) {
        let g = m.project(&CMatrix::random_gaussian(n, n, &mut rng));
        let x = &(&g.adjoint() * &g).scale(1.0 / n as f64) + &CMatrix::identity(n);
        let r = logmodularity_gap(&x, &a, ctx.seed, max_iter, tol)?;
        let disagrees = verdict.verdict == Verdict::Yes && r.gap.is_some();
        review |= disagrees;
        let _ = writeln!(text, "sample {k}: {}", status_line(&r));
        samples.push(json!({"x": matrix_to_json(&x), "factorization": report_json(&r), "disagrees_with_verdict": disagrees}));
    }
    let witness = match (lat.classification(), verdict.verdict) {
        (Classification::NonCsl, _) => match lat.witness() {
            Some((p, q)) => witness_section(ctx, p, q, WitnessMode::Generic, DEFAULT_EPSILON, 1.0, max_iter).ok(),
            None => None,
        },
        (Classification::CslNotNest, Verdict::No) => lat
            .elements()
            .iter()
            .enumerate()
            .flat_map(|(i, p)| lat.elements()[i + 1..].iter().map(move |q| (p, q)))
            .filter(|(p, q)| !p.le(q, tol) && !q.le(p, tol))
            .find_map(|(p, q)| {
                let mode = if (p.matrix() * q.matrix()).norm() <= tol.eq_tol { WitnessMode::Orthogonal } else { WitnessMode::Commuting };
                witness_section(ctx, p, q, mode, DEFAULT_EPSILON, 1.0, max_iter).ok()
            }),
        _ => None,
    };
    if let Some(w) = &witness {
        let g = w["against_alg_pq"]["gap"].as_f64();
        let _ = writeln!(text, "witness ({}): gap in Alg{{p,q}} {}", w["mode"].as_str().unwrap_or(""), g.map_or("none".into(), |g| format!("{g:.6e}")));
    }
    if review {
        let _ = writeln!(text, "MANUAL REVIEW: the gap estimator disagrees with the structural verdict");
    }
    let status = if verdict.verdict == Verdict::Indeterminate { "INDETERMINATE" } else { "OK" };
    Ok((
        status,
        json!({
            "headline": headline,
            "verdict": verdict_name(verdict.verdict),
            "reason": verdict.reason,
            "algebra_dim": a.dim(),
            "hull_dim": hull.dim(),
            "lattice": lattice_json(&lat, tol)?,
            "reflexivity": reflexivity_json(&refl),
            "masa": {"contains_masa": masa.contains_masa, "diagonal_dim": masa.diagonal_dim},
            "triangularization": tri.map(|t| json!({"u": matrix_to_json(&t.u), "atom_dims": t.atom_dims, "max_lower_left": num(t.max_lower_left)})),
            "block_nests": verdict.block_nests.iter().map(|e| e.atom_dims()).collect::<Vec<_>>(),
            "samples": samples,
            "witness": witness,
            "manual_review": review,
        }),
    ))
}

/// Deterministic pretty JSON with a trailing newline.
pub fn render_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const T2: &str = r#"{"version": "1", "ambient": {"dim": 2},
        "matrices": {"E11": [[[1,0],[0,0]],[[0,0],[0,0]]], "E12": [[[0,0],[1,0]],[[0,0],[0,0]]]},
        "task": "lat", "params": {"generators": ["E11", "E12"]}}"#;

    fn parse(s: &str) -> CliResult<Problem> {
        Problem::parse(s, &ToleranceConfig::default())
    }

    #[test]
    fn lat_on_t2() {
        let p = parse(T2).unwrap();
        let r = run(&p, Task::Lat, &RunOptions::default()).unwrap();
        assert_eq!(r.exit_code, 0);
        assert_eq!(r.json["result"]["lattice"]["classification"], "NEST");
        assert_eq!(r.json["result"]["lattice"]["size"], 3);
    }

    #[test]
    fn lat_on_scalars_reports_witness() {
        let s = r#"{"version": "1", "ambient": {"dim": 2}, "matrices": {}, "task": "lat", "params": {"generators": []}}"#;
        let r = run(&parse(s).unwrap(), Task::Lat, &RunOptions::default()).unwrap();
        assert_eq!(r.exit_code, 0);
        assert_eq!(r.json["result"]["lattice"]["classification"], "NON_CSL");
        assert!(r.json["result"]["lattice"]["witness"].is_object());
    }

    #[test]
    fn factorize_example() {
        let s = r#"{"version": "1", "ambient": {"dim": 2},
            "matrices": {"X": [[[2,0],[1,0]],[[1,0],[2,0]]]},
            "task": "factorize", "params": {"x": "X", "nest": [[0]]}}"#;
        let r = run(&parse(s).unwrap(), Task::Factorize, &RunOptions::default()).unwrap();
        assert!(r.json["result"]["factorization"]["residual"].as_f64().unwrap() < 1e-9);
        let s_mat = matrix_from_json(&r.json["result"]["factorization"]["s"], "$", 2, 2).unwrap();
        assert!((s_mat.get(0, 0).re - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn validation_paths() {
        let cases = [
            ("{", "$"),
            (r#"{"version": "2", "ambient": {"dim": 2}, "task": "lat"}"#, "$.version"),
            (r#"{"version": "1", "ambient": {"dim": 2, "block_dims": [1, 2]}, "task": "lat"}"#, "$.ambient.block_dims"),
            (r#"{"version": "1", "ambient": {"dim": 2}, "matrices": {"A": [[[1,0],[0,0]]]}, "task": "lat"}"#, "$.matrices.A"),
            (r#"{"version": "1", "ambient": {"dim": 1}, "matrices": {"A": [[[1,"x"]]]}, "task": "lat"}"#, "$.matrices.A[0][0][1]"),
            (r#"{"version": "1", "ambient": {"dim": 1}, "task": "lat", "params": {"generators": ["B"]}}"#, "$.params.generators[0]"),
            (r#"{"version": "1", "ambient": {"dim": 1}, "task": "nope"}"#, "$.task"),
            (r#"{"version": "1", "ambient": {"dim": 2}, "task": "factorize", "params": {"nest": [[5]]}}"#, "$.params.nest[0][0]"),
            (r#"{"version": "1", "ambient": {"dim": 2}, "matrices": {"A": [[[1,0],[1,0]],[[0,0],[0,0]]]}, "task": "halmos", "params": {"p": "A"}}"#, "$.params.p"),
            (r#"{"version": "1", "ambient": {"dim": 1}, "task": "lat", "params": {"gens": []}}"#, "$.params.gens"),
        ];
        for (text, path) in cases {
            match parse(text) {
                Err(e @ CliError::Validation { .. }) => {
                    assert_eq!(e.exit_code(), 2);
                    let CliError::Validation { path: got, .. } = e else { unreachable!() };
                    assert_eq!(got, path, "{text}");
                }
                other => panic!("{text}: expected a validation error, got {other:?}"),
            }
        }
    }

    #[test]
    fn missing_task_parameter_is_a_validation_error() {
        let s = r#"{"version": "1", "ambient": {"dim": 2}, "task": "gap", "params": {"nest": [[0]]}}"#;
        let e = run(&parse(s).unwrap(), Task::Gap, &RunOptions::default()).unwrap_err();
        assert!(matches!(&e, CliError::Validation { path, .. } if path == "$.params.x"));
    }

    #[test]
    fn matrices_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = CMatrix::random_gaussian(3, 3, &mut rng);
        let text = serde_json::to_string(&matrix_to_json(&m)).unwrap();
        let back = matrix_from_json(&serde_json::from_str(&text).unwrap(), "$", 3, 3).unwrap();
        assert_eq!(back.distance(&m), 0.0);
    }
}
