//! Batch commands behind the `ghalab` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ghalab::adversary::{registry, run_breakdown_game, AlgorithmUnderTest, GameTranscript};
use ghalab::exact_arith::{
    fmt_rational, int, parse_rational, serde_rational, serde_rational_opt, to_f64, QVector,
    Rational,
};
use ghalab::networks::Net;
use ghalab::optimality::{
    compute_certificate, is_eps_accurate, max_jacobian_frobenius_sq, Verdict,
};
use ghalab::oracle::{verify_contract, Channel, ExactOracle, JitterOracle, Oracle, QueryLog};
use ghalab::problems::{Branch, FamilyConfig, FamilyKind, ProblemFamily, TrainingSet};
use ghalab::trainers::{
    blowup_witness, pinv_train, rbf_train, PinvParams, PrecisionCertificate, TrainingOutcome,
};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "GHALAB_OUT";

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("ghalab-out"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_config(path: &Path) -> Result<FamilyConfig> {
    read_json(path)
}

/// A family manifest, or a config that is built on the fly.
pub fn load_family(path: &Path) -> Result<ProblemFamily> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(f) = serde_json::from_str::<ProblemFamily>(&text) {
        f.validate()?;
        return Ok(f);
    }
    let config: FamilyConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(ProblemFamily::build(&config)?)
}

#[derive(Serialize)]
struct Member<'a> {
    branch: Branch,
    n: u32,
    set: &'a TrainingSet,
}

/// Writes `family.json` and `members.json` under `out`.
pub fn cmd_build(config: &Path, out: &Path) -> Result<ProblemFamily> {
    let config = load_config(config)?;
    let family = ProblemFamily::build(&config)?;
    write_json(&out.join("family.json"), &family)?;
    let members = family.members()?;
    let listed: Vec<Member> = members
        .iter()
        .map(|(branch, n, set)| Member {
            branch: *branch,
            n: *n,
            set,
        })
        .collect();
    write_json(&out.join("members.json"), &listed)?;
    Ok(family)
}

pub fn member(family: &ProblemFamily, branch: Branch, n: u32) -> Result<TrainingSet> {
    Ok(family.iota(branch, n)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKey {
    Rbf,
    Pinv,
}

impl std::str::FromStr for TrainerKey {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(TrainerKey::Rbf),
            "pinv" => Ok(TrainerKey::Pinv),
            other => bail!("unknown trainer {other:?} (expected rbf or pinv)"),
        }
    }
}

impl std::fmt::Display for TrainerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainerKey::Rbf => "rbf",
            TrainerKey::Pinv => "pinv",
        })
    }
}

/// Everything needed to re-derive a training cell's verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainCell {
    pub branch: Branch,
    pub n: u32,
    #[serde(with = "serde_rational")]
    pub eps: Rational,
    pub trainer: TrainerKey,
    /// Jitter seed; `None` means exact rounding.
    pub seed: Option<u64>,
    pub net: Option<Net>,
    pub certificate: Option<PrecisionCertificate>,
    pub verdict: Option<Verdict>,
    #[serde(with = "serde_rational_opt", default)]
    pub jacobian_frobenius_sq: Option<Rational>,
    #[serde(with = "serde_rational_opt", default)]
    pub blowup_quotient_sq: Option<Rational>,
    pub queries: u64,
    pub max_precision: u32,
    pub error: Option<String>,
}

fn run_trainer(
    family: &ProblemFamily,
    trainer: TrainerKey,
    set: &TrainingSet,
    eps: &Rational,
    seed: Option<u64>,
) -> Result<TrainingOutcome> {
    let oracle: Box<dyn Oracle> = match seed {
        Some(s) => Box::new(JitterOracle::new(set.clone(), s)),
        None => Box::new(ExactOracle::new(set.clone())),
    };
    let ch = Channel::new(oracle);
    Ok(match trainer {
        TrainerKey::Rbf => rbf_train(ch, eps)?,
        TrainerKey::Pinv => {
            if family.kind != FamilyKind::Thm5 {
                bail!("pinv needs a thm5 family (basis pairs)");
            }
            pinv_train(ch, eps, &PinvParams::from_family(family)?)?
        }
    })
}

/// Train on one member and compute every verdict of the cell. Training
/// failures are recorded in the cell, not returned.
pub fn train_cell(
    family: &ProblemFamily,
    branch: Branch,
    n: u32,
    eps: &Rational,
    trainer: TrainerKey,
    seed: Option<u64>,
) -> Result<(TrainCell, QueryLog)> {
    let set = member(family, branch, n)?;
    let mut cell = TrainCell {
        branch,
        n,
        eps: eps.clone(),
        trainer,
        seed,
        net: None,
        certificate: None,
        verdict: None,
        jacobian_frobenius_sq: None,
        blowup_quotient_sq: None,
        queries: 0,
        max_precision: 0,
        error: None,
    };
    let out = match run_trainer(family, trainer, &set, eps, seed) {
        Ok(o) => o,
        Err(e) => {
            cell.error = Some(e.to_string());
            return Ok((cell, QueryLog::new()));
        }
    };
    let verdict = is_eps_accurate(&out.net, family, &set, eps)?;
    let m2: Vec<QVector> = compute_certificate(&family.a, &family.constrained_domain(&set))?
        .measurements();
    cell.jacobian_frobenius_sq = Some(max_jacobian_frobenius_sq(&out.net, &m2)?);
    let delta = &family.epsilon1 / int(2);
    cell.blowup_quotient_sq = Some(blowup_witness(&out.net, family, n, &delta)?.quotient_sq);
    cell.verdict = Some(verdict);
    cell.queries = out.queries;
    cell.max_precision = out.max_precision;
    cell.net = Some(out.net);
    cell.certificate = Some(out.certificate);
    Ok((cell, out.log))
}

fn cell_dir(out: &Path, id: &str) -> PathBuf {
    out.join("cells").join(id)
}

fn train_cell_id(c: &TrainCell) -> String {
    let seed = c.seed.map_or("exact".to_string(), |s| format!("seed{s}"));
    format!(
        "train-b{}-n{}-{}-eps{}-{}",
        c.branch,
        c.n,
        c.trainer,
        fmt_rational(&c.eps).replace('/', "_"),
        seed
    )
}

pub fn save_train_cell(out: &Path, cell: &TrainCell, log: &QueryLog) -> Result<PathBuf> {
    let dir = cell_dir(out, &train_cell_id(cell));
    write_json(&dir.join("cell.json"), cell)?;
    fs::write(dir.join("transcript.jsonl"), log.to_jsonl())?;
    Ok(dir)
}

/// A stored game: the transcript plus the target it was played at.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameCell {
    #[serde(with = "serde_rational")]
    pub eps: Rational,
    pub game: GameTranscript,
}

fn game_cell_id(alg: &str, eps: &Rational) -> String {
    format!("game-{}-eps{}", alg, fmt_rational(eps).replace('/', "_"))
}

pub fn play_games(
    family: &ProblemFamily,
    eps: &Rational,
    budget: u64,
    only: Option<&str>,
) -> Result<Vec<GameCell>> {
    let algs: Vec<Box<dyn AlgorithmUnderTest>> = registry(family)
        .into_iter()
        .filter(|a| only.is_none_or(|o| a.name() == o))
        .collect();
    if algs.is_empty() {
        bail!("no registered algorithm named {:?}", only.unwrap_or(""));
    }
    algs.iter()
        .map(|a| {
            Ok(GameCell {
                eps: eps.clone(),
                game: run_breakdown_game(a.as_ref(), family, eps, budget, 0)?,
            })
        })
        .collect()
}

pub fn save_game_cell(out: &Path, cell: &GameCell) -> Result<PathBuf> {
    let dir = cell_dir(out, &game_cell_id(&cell.game.algorithm, &cell.eps));
    let transcript = dir.join("transcript.jsonl");
    fs::create_dir_all(&dir)?;
    fs::write(&transcript, cell.game.log.to_jsonl())?;
    write_json(&dir.join("cell.json"), cell)?;
    write_json(
        &dir.join("report.json"),
        &cell.game.report(transcript.display().to_string()),
    )?;
    Ok(dir)
}

/// Sweep description, read from JSON. `family` is a manifest or config path
/// relative to the spec file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    pub family: String,
    pub eps: Vec<String>,
    pub n: Vec<u32>,
    pub trainers: Vec<TrainerKey>,
    #[serde(default)]
    pub adversary: bool,
    #[serde(default)]
    pub jitter_seeds: Vec<u64>,
    #[serde(default)]
    pub budget: Option<u64>,
}

impl SweepSpec {
    pub fn eps_grid(&self) -> Result<Vec<Rational>> {
        if self.eps.is_empty() || self.n.is_empty() || self.trainers.is_empty() {
            bail!("sweep grids must be non-empty");
        }
        self.eps
            .iter()
            .map(|s| {
                let q = parse_rational(s)?;
                if q <= int(0) {
                    bail!("eps {s} is not positive");
                }
                Ok(q)
            })
            .collect()
    }
}

pub const CSV_HEADER: [&str; 16] = [
    "family",
    "kind",
    "branch",
    "n",
    "eps",
    "trainer",
    "verdict",
    "violation_sq",
    "jacobian_frobenius_sq",
    "blowup_quotient_sq",
    "queries",
    "max_precision",
    "declared_branch",
    "error_sq",
    "float_advisory",
    "wall_ms",
];

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SweepRow {
    /// "train" or "game"; training rows sort first.
    pub row: String,
    /// Member branch of a training row, 0 for game rows.
    pub branch: u8,
    pub n: u32,
    pub trainer: String,
    pub seed: String,
    pub eps: Rational,
    pub verdict: String,
    pub violation_sq: String,
    pub jacobian_frobenius_sq: String,
    pub blowup_quotient_sq: String,
    pub queries: u64,
    pub max_precision: u32,
    pub declared_branch: Option<u8>,
    pub error_sq: String,
    /// `violation_sq` (training) or `error_sq` (games) as a float.
    pub advisory: String,
    pub wall_ms: u128,
}

fn opt_q(q: &Option<Rational>) -> String {
    q.as_ref().map(fmt_rational).unwrap_or_default()
}

fn train_row(cell: &TrainCell, wall_ms: u128) -> SweepRow {
    let verdict = match (&cell.verdict, &cell.error) {
        (Some(v), _) if v.pass => "PASS".to_string(),
        (Some(_), _) => "FAIL".to_string(),
        (None, Some(e)) => format!("ERROR: {e}"),
        (None, None) => "ERROR".to_string(),
    };
    let violation = cell.verdict.as_ref().map(|v| v.violation_sq.clone());
    SweepRow {
        row: "train".into(),
        branch: cell.branch.into(),
        n: cell.n,
        trainer: cell.trainer.to_string(),
        seed: cell.seed.map_or(String::new(), |s| s.to_string()),
        eps: cell.eps.clone(),
        verdict,
        violation_sq: opt_q(&violation),
        jacobian_frobenius_sq: opt_q(&cell.jacobian_frobenius_sq),
        blowup_quotient_sq: opt_q(&cell.blowup_quotient_sq),
        queries: cell.queries,
        max_precision: cell.max_precision,
        declared_branch: None,
        error_sq: String::new(),
        advisory: violation.map(|v| format!("{:.6e}", to_f64(&v))).unwrap_or_default(),
        wall_ms,
    }
}

fn game_row(cell: &GameCell, wall_ms: u128) -> SweepRow {
    let g = &cell.game;
    let verdict = if g.nonhalting {
        "NONHALTING".to_string()
    } else if g.defeated() {
        "DEFEATED".to_string()
    } else {
        "SURVIVED".to_string()
    };
    SweepRow {
        row: "game".into(),
        branch: 0,
        n: g.n_adv,
        trainer: g.algorithm.clone(),
        seed: String::new(),
        eps: cell.eps.clone(),
        verdict,
        violation_sq: opt_q(&g.verdict.as_ref().map(|v| v.violation_sq.clone())),
        jacobian_frobenius_sq: String::new(),
        blowup_quotient_sq: String::new(),
        queries: g.log.len() as u64,
        max_precision: g.log.max_precision().unwrap_or(0),
        declared_branch: Some(g.declared_branch.into()),
        error_sq: opt_q(&g.error_sq),
        advisory: g.error_sq.as_ref().map(|e| format!("{:.6e}", to_f64(e))).unwrap_or_default(),
        wall_ms,
    }
}

enum Job {
    Train {
        branch: Branch,
        n: u32,
        eps: Rational,
        trainer: TrainerKey,
        seed: Option<u64>,
    },
    Game {
        eps: Rational,
        alg: String,
    },
}

/// Runs the sweep on `jobs` workers and writes `results.csv` plus one cell
/// directory per row under `out`. Rows come out sorted, independent of
/// completion order.
pub fn cmd_sweep(spec_path: &Path, out: &Path, jobs: usize) -> Result<Vec<SweepRow>> {
    let spec: SweepSpec = read_json(spec_path)?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let family = load_family(&base.join(&spec.family))?;
    let eps_grid = spec.eps_grid()?;
    let budget = spec.budget.unwrap_or(ghalab::adversary::DEFAULT_BUDGET);
    let family_name = Path::new(&spec.family)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut work = Vec::new();
    let mut seeds: Vec<Option<u64>> = vec![None];
    seeds.extend(spec.jitter_seeds.iter().map(|s| Some(*s)));
    let mut members: Vec<(Branch, u32)> = spec
        .n
        .iter()
        .filter(|n| (1..=family.n_max).contains(*n))
        .map(|n| (Branch::One, *n))
        .collect();
    members.push((Branch::Two, 1));
    for &(branch, n) in &members {
        for &trainer in &spec.trainers {
            for eps in &eps_grid {
                for seed in &seeds {
                    work.push(Job::Train {
                        branch,
                        n,
                        eps: eps.clone(),
                        trainer,
                        seed: *seed,
                    });
                }
            }
        }
    }
    if spec.adversary {
        for eps in &eps_grid {
            for alg in registry(&family) {
                work.push(Job::Game {
                    eps: eps.clone(),
                    alg: alg.name(),
                });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?;
    let results: Vec<Result<SweepRow>> = pool.install(|| {
        use rayon::prelude::*;
        work.par_iter()
            .map(|job| {
                let start = Instant::now();
                match job {
                    Job::Train {
                        branch,
                        n,
                        eps,
                        trainer,
                        seed,
                    } => {
                        let (cell, log) = train_cell(&family, *branch, *n, eps, *trainer, *seed)?;
                        save_train_cell(out, &cell, &log)?;
                        Ok(train_row(&cell, start.elapsed().as_millis()))
                    }
                    Job::Game { eps, alg } => {
                        let cell = play_games(&family, eps, budget, Some(alg))?
                            .pop()
                            .expect("one algorithm selected");
                        save_game_cell(out, &cell)?;
                        Ok(game_row(&cell, start.elapsed().as_millis()))
                    }
                }
            })
            .collect()
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    // training rows first, game rows appended
    rows.sort_by(|a, b| (a.row == "game").cmp(&(b.row == "game")).then_with(|| a.cmp(b)));
    let kind = family.kind.to_string();
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("results.csv"))?;
    w.write_record(CSV_HEADER)?;
    for r in &rows {
        w.write_record([
            family_name.as_str(),
            kind.as_str(),
            &if r.branch == 0 {
                String::new()
            } else {
                r.branch.to_string()
            },
            &r.n.to_string(),
            &fmt_rational(&r.eps),
            &if r.seed.is_empty() {
                r.trainer.clone()
            } else {
                format!("{}@jitter{}", r.trainer, r.seed)
            },
            &r.verdict,
            &r.violation_sq,
            &r.jacobian_frobenius_sq,
            &r.blowup_quotient_sq,
            &r.queries.to_string(),
            &r.max_precision.to_string(),
            &r.declared_branch.map_or(String::new(), |b| b.to_string()),
            &r.error_sq,
            &r.advisory,
            &r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct VerifySummary {
    pub checked: usize,
    pub mismatches: Vec<String>,
}

/// Re-derives every stored cell under `out` from its net and transcript.
pub fn cmd_verify(family: &ProblemFamily, out: &Path) -> Result<VerifySummary> {
    let mut summary = VerifySummary::default();
    let cells = out.join("cells");
    let mut dirs: Vec<PathBuf> = fs::read_dir(&cells)
        .with_context(|| format!("reading {}", cells.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("cell.json").exists())
        .collect();
    dirs.sort();
    for dir in dirs {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let log = QueryLog::from_jsonl(&fs::read_to_string(dir.join("transcript.jsonl"))?)?;
        let mut problems = Vec::new();
        if name.starts_with("train-") {
            let cell: TrainCell = read_json(&dir.join("cell.json"))?;
            let set = member(family, cell.branch, cell.n)?;
            if !verify_contract(&log, &set) {
                problems.push("transcript violates the oracle contract".to_string());
            }
            if let (Some(net), Some(stored)) = (&cell.net, &cell.verdict) {
                let fresh = is_eps_accurate(net, family, &set, &cell.eps)?;
                if fresh != *stored {
                    problems.push(format!("verdict {} re-derived as {}", stored.pass, fresh.pass));
                }
            }
            if let Some(c) = &cell.certificate {
                if !c.verify() {
                    problems.push("precision certificate does not re-verify".into());
                }
            }
        } else {
            let cell: GameCell = read_json(&dir.join("cell.json"))?;
            let g = &cell.game;
            let iota2 = family.iota(Branch::Two, 1)?;
            let iota1 = family.iota_unchecked(Branch::One, g.n_adv)?;
            if !(verify_contract(&log, &iota2) && verify_contract(&log, &iota1)) {
                problems.push("served answers are not valid for both candidates".into());
            }
            if let Some(net) = &g.net {
                let z = net.eval(&QVector::zeros(family.y_dim()))?;
                let (b, e) = ghalab::adversary::declare_branch(&z, &family.v, &family.kappa_eff_sq);
                if b != g.declared_branch || Some(e) != g.error_sq {
                    problems.push("declared branch or error does not re-derive".into());
                }
            }
        }
        summary.checked += 1;
        summary
            .mismatches
            .extend(problems.into_iter().map(|p| format!("{name}: {p}")));
    }
    Ok(summary)
}

/// Reruns a trainer against the recorded transcript of a member.
pub fn cmd_replay(
    family: &ProblemFamily,
    branch: Branch,
    n: u32,
    eps: &Rational,
    trainer: TrainerKey,
    transcript: &Path,
) -> Result<TrainingOutcome> {
    let log = QueryLog::from_jsonl(&fs::read_to_string(transcript)?)?;
    let set = member(family, branch, n)?;
    let oracle = ghalab::oracle::replay(&log, ghalab::oracle::Shape::of(&set))?;
    let ch = Channel::new(oracle);
    Ok(match trainer {
        TrainerKey::Rbf => rbf_train(ch, eps)?,
        TrainerKey::Pinv => pinv_train(ch, eps, &PinvParams::from_family(family)?)?,
    })
}
