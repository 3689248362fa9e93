//! End-to-end runs: scenario → minimizer → boundary loop → partial indices,
//! with persisted records, reports and plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::birkhoff::{partial_indices, symbol_from_loop, virtual_dimension, ExistenceVerdict, PartialIndexResult};
use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::loops::{assemble_loop, maslov_index, CornerConvention};
use crate::mesh::build_mesh;
use crate::scenario::Scenario;
use crate::solver::{minimize, write_trace_csv};

/// Density retries for the index stage when the rank gate is inconclusive.
const INDEX_RETRIES: u32 = 2;

pub const RECORDS_FILE: &str = "runs.jsonl";

pub const GRIFFITHS_NOTE: &str = "positivity is evaluated as min(kappa) > 0; a stricter reading asks for every kappa > 1";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Verdict,
    Inconclusive,
    Error,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Verdict => 0,
            Outcome::Inconclusive => 2,
            Outcome::Error => 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub existence: Option<ExistenceVerdict>,
    pub griffiths_positive: Option<bool>,
    pub virtual_dimension: Option<i64>,
    /// `dbar_residual < 0.1·√dirichlet`.
    pub holomorphic: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub level: u32,
    pub h: f64,
    pub nodes: Option<usize>,
    pub triangles: Option<usize>,
    pub energy: Option<EnergyReport>,
    pub max_violation: Option<f64>,
    pub mu: Option<i64>,
    pub samples_per_arc: Option<usize>,
    pub indices: Option<PartialIndexResult>,
    pub verdicts: Verdicts,
    pub corners: CornerConvention,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub artifacts: BTreeMap<String, String>,
    pub outcome: Outcome,
    pub error: Option<String>,
}

impl RunRecord {
    fn new(name: &str, scenario: &Scenario, level: u32, seed: u64) -> Self {
        RunRecord {
            scenario: name.to_string(),
            scenario_hash: scenario.hash(),
            seed,
            level,
            h: scenario.level_h(level),
            nodes: None,
            triangles: None,
            energy: None,
            max_violation: None,
            mu: None,
            samples_per_arc: None,
            indices: None,
            verdicts: Verdicts::default(),
            corners: scenario.indices.corners,
            timings: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            outcome: Outcome::Error,
            error: None,
        }
    }

    /// Cross-module consistency: `μ = Σκ` and `virtual_dimension = n − 3 + μ`.
    pub fn check_consistency(&self, n: usize) -> Result<()> {
        if let (Some(mu), Some(r)) = (self.mu, &self.indices) {
            let sum: i64 = r.kappas.iter().sum();
            if sum != mu || r.mu != mu {
                return Err(Error::Consistency(format!("Maslov index {mu} but partial indices {:?}", r.kappas)));
            }
            if self.verdicts.virtual_dimension != Some(virtual_dimension(n, mu)) {
                return Err(Error::Consistency("virtual dimension disagrees with n − 3 + μ".into()));
            }
        }
        Ok(())
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
}

fn list(v: &[i64]) -> String {
    let items: Vec<String> = v.iter().map(|k| k.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// Fixed-order text report. Timings are left out so that reruns are
/// byte-identical.
pub fn format_report(r: &RunRecord) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| writeln!(s, "{k}: {v}").unwrap();
    line("scenario", r.scenario.clone());
    line("scenario_hash", r.scenario_hash.clone());
    line("seed", r.seed.to_string());
    line("level", r.level.to_string());
    line("h", real(r.h));
    line("nodes", opt(r.nodes));
    line("triangles", opt(r.triangles));
    let e = r.energy.as_ref();
    line("dirichlet", opt(e.map(|e| real(e.dirichlet))));
    line("area", opt(e.map(|e| real(e.area))));
    line("conformality_defect", opt(e.map(|e| real(e.conformality_defect))));
    line("dbar_residual", opt(e.map(|e| real(e.dbar_residual))));
    line("perpendicularity_defect", opt(e.map(|e| real(e.perpendicularity_defect))));
    line("iterations", opt(e.map(|e| e.iterations)));
    line("converged", opt(e.map(|e| e.converged)));
    line("max_violation", opt(r.max_violation.map(real)));
    line("holomorphic", opt(r.verdicts.holomorphic));
    line("samples_per_arc", opt(r.samples_per_arc));
    line("corner_convention", serde_json::to_value(r.corners).unwrap().as_str().unwrap_or_default().to_string());
    line("maslov_index", opt(r.mu));
    let idx = r.indices.as_ref();
    line("kappas", opt(idx.map(|i| list(&i.kappas))));
    line("doubled_degrees", opt(idx.map(|i| list(&i.doubled_degrees))));
    line("existence_verdict", opt(r.verdicts.existence));
    line("griffiths_positive", opt(r.verdicts.griffiths_positive));
    line("griffiths_note", GRIFFITHS_NOTE.into());
    line("virtual_dimension", opt(r.verdicts.virtual_dimension));
    line("outcome", format!("{:?}", r.outcome).to_lowercase());
    line("error", opt(r.error.clone()));
    s
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f();
    timings.insert(stage.to_string(), t.elapsed().as_secs_f64());
    out
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn stages(scenario: &Scenario, base: &Path, opts: &RunOptions, rec: &mut RunRecord) -> Result<()> {
    let stem = format!("{}_L{}", rec.scenario, rec.level);
    let problem = timed(&mut rec.timings, "validate", || scenario.problem())
        .map_err(|e| e.in_stage("validate", "each x_k must be a transversal intersection of L_k and L_{k+1}"))?;

    let mesh = timed(&mut rec.timings, "mesh", || build_mesh(scenario.mesh.n, rec.h, scenario.mesh.grading))
        .map_err(|e| e.in_stage("mesh", "use a larger h or a smaller grading exponent"))?;
    rec.nodes = Some(mesh.num_nodes());
    rec.triangles = Some(mesh.triangles.len());
    let mesh = Arc::new(mesh);

    let init = timed(&mut rec.timings, "initialize", || scenario.initializer.build(&problem, mesh.clone(), base))
        .map_err(|e| e.in_stage("initialize", "pick an initializer whose map meets every Lagrangian constraint"))?;

    let result = timed(&mut rec.timings, "minimize", || minimize(&problem, init, &scenario.optimizer))
        .map_err(|e| e.in_stage("minimize", "raise optimizer.max_iter or start closer to a minimizer"))?;
    rec.max_violation = Some(problem.max_violation(&result.field)?);
    let e = &result.report;
    rec.verdicts.holomorphic = Some(e.dbar_residual <= 0.1 * e.dirichlet.sqrt());
    rec.energy = Some(result.report.clone());

    let name = format!("{stem}_field.csv");
    result.field.write_csv(create(&opts.out, &name)?)?;
    rec.artifacts.insert("field".into(), name);
    let name = format!("{stem}_trace.csv");
    write_trace_csv(&result.trace, create(&opts.out, &name)?)?;
    rec.artifacts.insert("trace".into(), name);

    let settings = &scenario.indices;
    let mut spa = settings.samples_per_arc;
    let mut attempt = 0;
    let (lp, indices) = loop {
        let lp = timed(&mut rec.timings, "loop", || assemble_loop(&problem, &result.field, spa, settings.style, settings.corners))
            .map_err(|e| e.in_stage("loop", "raise indices.samples_per_arc"))?;
        let mu = timed(&mut rec.timings, "maslov", || maslov_index(&lp))
            .map_err(|e| e.in_stage("maslov", "raise indices.samples_per_arc"))?;
        rec.mu = Some(mu);
        rec.samples_per_arc = Some(spa);
        let idx = timed(&mut rec.timings, "indices", || {
            let g = symbol_from_loop(&lp, settings.order)?;
            partial_indices(&g)
        });
        match idx {
            Err(Error::IndeterminateRank { .. }) if attempt < INDEX_RETRIES => {
                attempt += 1;
                spa *= 2;
            }
            other => break (lp, other.map_err(|e| e.in_stage("indices", "raise indices.samples_per_arc or indices.N"))?),
        }
    };
    let name = format!("{stem}_loop.csv");
    lp.write_csv(create(&opts.out, &name)?)?;
    rec.artifacts.insert("loop".into(), name);

    let indices = indices.with_marked_points(problem.n());
    rec.verdicts.existence = Some(indices.existence_verdict);
    rec.verdicts.griffiths_positive = Some(indices.griffiths_positive);
    rec.verdicts.virtual_dimension = indices.virtual_dimension;
    rec.indices = Some(indices);
    rec.check_consistency(problem.n()).map_err(|e| e.in_stage("verdicts", "report this scenario as a bug"))?;
    rec.outcome = match rec.verdicts.existence {
        Some(ExistenceVerdict::Inconclusive) => Outcome::Inconclusive,
        _ => Outcome::Verdict,
    };
    Ok(())
}

fn persist(rec: &mut RunRecord, opts: &RunOptions) -> Result<()> {
    let name = format!("{}_L{}_report.txt", rec.scenario, rec.level);
    rec.artifacts.insert("report".into(), name.clone());
    fs::write(opts.out.join(&name), format_report(rec))?;
    let mut f = OpenOptions::new().create(true).append(true).open(opts.out.join(RECORDS_FILE))?;
    writeln!(f, "{}", serde_json::to_string(rec)?)?;
    Ok(())
}

/// Runs one mesh level. Stage failures are recorded in the returned record
/// and returned alongside it.
pub fn run_level(
    scenario: &Scenario,
    name: &str,
    base: &Path,
    level: u32,
    opts: &RunOptions,
) -> (RunRecord, Option<Error>) {
    let mut rec = RunRecord::new(name, scenario, level, opts.seed);
    let err = stages(scenario, base, opts, &mut rec).err();
    if let Some(e) = &err {
        rec.outcome = Outcome::Error;
        rec.error = Some(e.to_string());
    }
    let err = match persist(&mut rec, opts) {
        Ok(()) => err,
        Err(p) => {
            rec.outcome = Outcome::Error;
            err.or(Some(p.in_stage("persist", "check that the output directory is writable")))
        }
    };
    (rec, err)
}

fn load(path: &Path, opts: &RunOptions) -> Result<(Scenario, String, PathBuf)> {
    let scenario = Scenario::load(path).map_err(|e| e.in_stage("load", "the scenario must be valid JSON with the documented keys"))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    fs::create_dir_all(&opts.out).map_err(|e| Error::from(e).in_stage("load", "check the --out directory"))?;
    Ok((scenario, name, base))
}

/// Runs the scenario at its base mesh size.
pub fn run(path: &Path, opts: &RunOptions) -> Result<RunRecord> {
    let (scenario, name, base) = load(path, opts)?;
    match run_level(&scenario, &name, &base, 0, opts) {
        (rec, None) => Ok(rec),
        (_, Some(e)) => Err(e),
    }
}

/// One run per level, continuing past failures, plus a convergence CSV.
/// `None` uses the levels listed in the scenario.
pub fn sweep(path: &Path, levels: Option<&[u32]>, opts: &RunOptions) -> Result<Vec<RunRecord>> {
    let (scenario, name, base) = load(path, opts)?;
    let levels: Vec<u32> = match levels {
        Some(l) => l.to_vec(),
        None => scenario.mesh.levels.clone().unwrap_or_default(),
    };
    if levels.is_empty() {
        return Ok(Vec::new());
    }
    let records: Vec<RunRecord> = levels.iter().map(|&l| run_level(&scenario, &name, &base, l, opts).0).collect();
    write_convergence_csv(&records, create(&opts.out, &format!("{name}_convergence.csv"))?)?;
    Ok(records)
}

pub fn write_convergence_csv<W: Write>(records: &[RunRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "level",
        "h",
        "dirichlet",
        "area",
        "conformality_defect",
        "dbar_residual",
        "perpendicularity_defect",
        "kappas",
    ])?;
    for r in records {
        let e = r.energy.as_ref();
        let f = |g: fn(&EnergyReport) -> f64| e.map(|e| real(g(e))).unwrap_or_default();
        let kappas = r
            .indices
            .as_ref()
            .map(|i| i.kappas.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "))
            .unwrap_or_default();
        wr.write_record([
            r.level.to_string(),
            real(r.h),
            f(|e| e.dirichlet),
            f(|e| e.area),
            f(|e| e.conformality_defect),
            f(|e| e.dbar_residual),
            f(|e| e.perpendicularity_defect),
            kappas,
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Exit status of a sweep: an error at any level wins, otherwise the
/// finest level decides.
pub fn sweep_outcome(records: &[RunRecord]) -> Outcome {
    if records.iter().any(|r| r.outcome == Outcome::Error) {
        return Outcome::Error;
    }
    records.last().map(|r| r.outcome).unwrap_or(Outcome::Verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(outcome: Outcome) -> RunRecord {
        let scenario = Scenario::parse(crate::scenario::tests::LUNE).unwrap();
        let mut r = RunRecord::new("lune", &scenario, 1, 5);
        r.outcome = outcome;
        r
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Outcome::Verdict.exit_code(), 0);
        assert_eq!(Outcome::Inconclusive.exit_code(), 2);
        assert_eq!(Outcome::Error.exit_code(), 1);
    }

    #[test]
    fn report_fields_keep_their_order() {
        let text = format_report(&record(Outcome::Error));
        let keys: Vec<&str> = text.lines().map(|l| l.split(':').next().unwrap()).collect();
        assert_eq!(&keys[..5], &["scenario", "scenario_hash", "seed", "level", "h"]);
        assert_eq!(keys.last(), Some(&"error"));
        assert!(text.contains("h: 1.0000000000000001e-1\n"));
        assert!(text.contains("kappas: none\n"));
        assert!(text.contains("every kappa > 1"));
    }

    #[test]
    fn sweep_outcome_prefers_errors_then_the_finest_level() {
        assert_eq!(sweep_outcome(&[]), Outcome::Verdict);
        let v = record(Outcome::Verdict);
        let i = record(Outcome::Inconclusive);
        assert_eq!(sweep_outcome(&[v.clone(), i.clone()]), Outcome::Inconclusive);
        assert_eq!(sweep_outcome(&[i, v.clone()]), Outcome::Verdict);
        assert_eq!(sweep_outcome(&[record(Outcome::Error), v]), Outcome::Error);
    }

    #[test]
    fn consistency_rejects_mismatched_sums() {
        let mut r = record(Outcome::Verdict);
        r.mu = Some(2);
        r.indices = Some(PartialIndexResult::from_kappas(vec![1]).with_marked_points(2));
        r.verdicts.virtual_dimension = Some(1);
        assert!(r.check_consistency(2).is_err());
        r.mu = Some(1);
        r.verdicts.virtual_dimension = Some(0);
        r.check_consistency(2).unwrap();
    }
}
