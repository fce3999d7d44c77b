use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ldvote_core::analysis::{
    bootstrap_exp1, estimate_thresholds, frequency_summary, ingest, ks_two_sample, BootstrapSummary, ClusterLevel,
    FrequencyRow, RowIssue,
};
use ldvote_core::analytic::eu_mv;
use ldvote_core::engine::Behavior;
use ldvote_core::equilibrium::{self, robustness_sweep, threshold_grid, SweepPoint, SweepSummary, DEFAULT_TOL};
use ldvote_core::model::{
    Electorate, PrecisionDistribution, StrategyProfileLD, StrategyProfileMVA, SubjectDataset, System, Treatment,
};
use ldvote_core::montecarlo::{
    compare_systems, generate_dataset, simulate_batch, simulate_records, AccuracyPopulation, BatchResult,
    PopulationBehavior, SyntheticDesign,
};
use log::{info, warn};
use serde::Serialize;

use crate::config::{parse_grid, parse_support, usage, Format, OrUsage, RunConfig};
use crate::manifest::OutputDir;

const DEFAULT_P: f64 = 0.7;
const DEFAULT_DIST: &str = "uniform:0.5:0.7";
const DEFAULT_SUPPORT: &str = "0.5:0.7";
const DEFAULT_GRID_STEP: f64 = 0.002;

pub fn dispatch(c: RunConfig) -> Result<()> {
    let command = c.command.clone().ok_or_else(|| usage("no subcommand"))?;
    match command.as_str() {
        "equilibrium" => cmd_equilibrium(&c),
        "sweep" => cmd_sweep(&c),
        "simulate" => cmd_simulate(&c),
        "compare" => cmd_compare(&c),
        "bootstrap" => cmd_bootstrap(&c),
        "analyze" => cmd_analyze(&c),
        "gen-synthetic" => cmd_gen_synthetic(&c),
        other => Err(usage(format!("unknown command '{other}'"))),
    }
}

/// Fields shared by every command's resolved config. The output directory
/// is left out so that identical runs leave identical manifests wherever they
/// write.
fn base(c: &RunConfig) -> RunConfig {
    RunConfig {
        command: c.command.clone(),
        format: Some(c.format.unwrap_or_default()),
        ..Default::default()
    }
}

fn out_dir(c: &RunConfig) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn print(c: &RunConfig, table: &str, json: &impl Serialize) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match c.format.unwrap_or_default() {
        Format::Table => stdout.write_all(table.as_bytes())?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut stdout, json)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

struct Model {
    system: System,
    el: Electorate,
    dist: PrecisionDistribution,
}

fn resolve_model(c: &RunConfig, r: &mut RunConfig) -> Result<Model> {
    let system = c.system.ok_or_else(|| usage("missing --system (ld, mva or mv)"))?;
    let n = c.n.ok_or_else(|| usage("missing --n"))?;
    let k = c.k.ok_or_else(|| usage("missing --k"))?;
    let p = c.p.unwrap_or(DEFAULT_P);
    let el = Electorate::new(n, k, p).or_usage()?;
    let dist: PrecisionDistribution = c.dist.as_deref().unwrap_or(DEFAULT_DIST).parse().or_usage()?;
    r.system = Some(system);
    r.n = Some(n);
    r.k = Some(k);
    r.p = Some(p);
    r.dist = Some(dist.to_string());
    Ok(Model { system, el, dist })
}

/// The behaviour to play: an explicit one, a common threshold, or the lowest
/// interior equilibrium of `system`.
fn resolve_behavior(c: &RunConfig, m: &Model, system: System, r: &mut RunConfig) -> Result<Behavior> {
    let behavior = if let Some(b) = &c.behavior {
        b.clone()
    } else {
        let t = match c.threshold {
            Some(t) => t,
            None => {
                let solve_for = if system == System::Mv { System::Ld } else { system };
                let report = equilibrium::solve(solve_for, &m.el, &m.dist, DEFAULT_TOL)?;
                let first = report.interior.first().ok_or_else(|| {
                    usage(format!("no interior {solve_for} equilibrium to play; pass --threshold or --behavior"))
                })?;
                info!("playing the interior equilibrium at {}", first.threshold);
                first.threshold
            }
        };
        match system {
            System::Mva => Behavior::Mva(StrategyProfileMVA::new(t, &m.dist).or_usage()?),
            _ => Behavior::Ld(StrategyProfileLD::canonical(t, &m.dist).or_usage()?),
        }
    };
    behavior.check_system(system).or_usage()?;
    r.behavior = Some(behavior.clone());
    Ok(behavior)
}

fn cmd_equilibrium(c: &RunConfig) -> Result<()> {
    let mut r = base(c);
    let m = resolve_model(c, &mut r)?;
    if m.system == System::Mv {
        return Err(usage("equilibria are solved for ld or mva"));
    }
    let tol = c.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    r.tol = Some(tol);

    let report = equilibrium::solve(m.system, &m.el, &m.dist, tol)?;
    let table = report.table();
    let mut out = OutputDir::create(&out_dir(c))?;
    out.json("equilibrium.json", &report)?;
    out.text("equilibrium.txt", &table)?;
    out.finish("equilibrium", r)?;
    print(c, &table, &report)
}

#[derive(Serialize)]
struct SweepOutput {
    system: System,
    eu_mv: f64,
    summary: Option<SweepSummary>,
    loss_to_gain_ratio: Option<f64>,
}

fn cmd_sweep(c: &RunConfig) -> Result<()> {
    let mut r = base(c);
    let m = resolve_model(c, &mut r)?;
    let grid_spec = c
        .grid
        .clone()
        .unwrap_or_else(|| format!("{}:{}:{DEFAULT_GRID_STEP}", m.dist.lo(), m.dist.hi()));
    let (lo, hi, step) = parse_grid(&grid_spec)?;
    let grid = threshold_grid(lo, hi, step).or_usage()?;
    for &t in &grid {
        m.dist.check_in_support(t).or_usage()?;
    }
    r.grid = Some(grid_spec);

    let points: Vec<SweepPoint> = robustness_sweep(m.system, &m.el, &m.dist, &grid)?;
    let summary = SweepSummary::from_points(&points);
    let output = SweepOutput {
        system: m.system,
        eu_mv: eu_mv(&m.el, &m.dist),
        summary,
        loss_to_gain_ratio: summary.filter(|s| s.max_gain > 0.0).map(|s| s.loss_to_gain_ratio()),
    };
    let mut out = OutputDir::create(&out_dir(c))?;
    out.csv("sweep.csv", &points)?;
    out.json("sweep_summary.json", &output)?;
    out.finish("sweep", r)?;

    let table = match (summary, output.loss_to_gain_ratio) {
        (Some(s), ratio) => format!(
            "{} points; peak ratio at t = {:.4} (gain {:.5}), max loss {:.5}, loss/gain {}\n",
            points.len(),
            s.peak_threshold,
            s.max_gain,
            s.max_loss,
            ratio.map_or("n/a".to_string(), |x| format!("{x:.3}")),
        ),
        (None, _) => "empty grid\n".to_string(),
    };
    print(c, &table, &output)
}

#[derive(Serialize)]
struct SimulateOutput {
    batch: BatchResult,
    /// Exact ex-ante utility of the played profile, when it has one.
    analytic_eu: Option<f64>,
}

fn cmd_simulate(c: &RunConfig) -> Result<()> {
    let mut r = base(c);
    let m = resolve_model(c, &mut r)?;
    let behavior = resolve_behavior(c, &m, m.system, &mut r)?;
    let reps = c.reps.unwrap_or(100_000);
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let seed = c.seed.unwrap_or(0);
    r.reps = Some(reps);
    r.seed = Some(seed);
    r.audit = c.audit;

    let batch = simulate_batch(m.system, &m.el, &m.dist, &behavior, reps, seed)?;
    let analytic_eu = match (m.system, &behavior) {
        (System::Mv, _) => Some(eu_mv(&m.el, &m.dist)),
        (System::Ld, Behavior::Ld(p)) if p.is_canonical() => {
            Some(equilibrium::ex_ante_eu(System::Ld, p.threshold, &m.el, &m.dist)?)
        }
        (System::Mva, Behavior::Mva(p)) => Some(equilibrium::ex_ante_eu(System::Mva, p.threshold, &m.el, &m.dist)?),
        _ => None,
    };
    let output = SimulateOutput { batch, analytic_eu };

    let mut out = OutputDir::create(&out_dir(c))?;
    out.json("simulate.json", &output)?;
    if let Some(count) = c.audit.filter(|&a| a > 0) {
        let records = simulate_records(m.system, &m.el, &m.dist, &behavior, 0..count.min(reps), seed)?;
        let mut w = out.raw("audit.jsonl")?;
        for rec in &records {
            serde_json::to_writer(&mut w, rec)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    out.finish("simulate", r)?;

    let b = &output.batch;
    let mut table = format!(
        "{} elections under {}: correct {:.5} (se {:.5}), MV on same signals {:.5}\n",
        b.n_elections, b.system, b.freq_correct, b.std_error, b.freq_mv_correct
    );
    if let Some(eu) = output.analytic_eu {
        table.push_str(&format!("exact ex-ante utility {eu:.5}\n"));
    }
    print(c, &table, &output)
}

fn cmd_compare(c: &RunConfig) -> Result<()> {
    let mut r = base(c);
    let sizes = c.sizes.clone().unwrap_or_else(|| vec![5, 15, 125]);
    let reps = c.reps.unwrap_or(10_000);
    let seed = c.seed.unwrap_or(0);
    let population = c.population.clone().unwrap_or_else(AccuracyPopulation::calibrated);
    population.validate().or_usage()?;
    let defaults = PopulationBehavior::default();
    let behavior = PopulationBehavior {
        delegate_prob: c.delegate_prob.unwrap_or(defaults.delegate_prob),
        abstain_prob: c.abstain_prob.unwrap_or(defaults.abstain_prob),
    };
    for (name, v) in [("delegate", behavior.delegate_prob), ("abstain", behavior.abstain_prob)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(usage(format!("--{name}-prob must lie in [0, 1]")));
        }
    }
    if reps == 0 || sizes.is_empty() || sizes.iter().any(|&n| n < 3 || n % 2 == 0) {
        return Err(usage("compare needs reps >= 1 and odd sizes of at least 3"));
    }
    r.sizes = Some(sizes.clone());
    r.reps = Some(reps);
    r.seed = Some(seed);
    r.population = Some(population.clone());
    r.delegate_prob = Some(behavior.delegate_prob);
    r.abstain_prob = Some(behavior.abstain_prob);

    let report = compare_systems(&population, &sizes, &behavior, reps, seed)?;
    let mut out = OutputDir::create(&out_dir(c))?;
    out.csv("compare.csv", &report.rows)?;
    out.csv("ordering.csv", &report.ordering)?;
    out.json("compare.json", &report)?;
    out.finish("compare", r)?;

    let mut table = format!("{:>5}  {:<4} {:>9} {:>9}\n", "n", "sys", "correct", "se");
    for row in &report.rows {
        table.push_str(&format!(
            "{:>5}  {:<4} {:>9.5} {:>9.5}\n",
            row.n,
            row.system.to_string(),
            row.freq_correct,
            row.std_error
        ));
    }
    print(c, &table, &report)
}

/// Reads and validates every input file, reporting rejected rows by file and
/// line.
fn load_inputs(c: &RunConfig, r: &mut RunConfig, out: &mut OutputDir) -> Result<(SubjectDataset, Vec<FileIssue>)> {
    let inputs = c.input.clone().filter(|v| !v.is_empty()).ok_or_else(|| usage("missing --input"))?;
    let support = parse_support(c.support.as_deref().unwrap_or(DEFAULT_SUPPORT))?;
    r.input = Some(inputs.clone());
    r.support = Some(format!("{}:{}", support.0, support.1));

    let mut dataset = SubjectDataset::default();
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for path in &inputs {
        let bytes = out.read_input(path)?;
        let report = ingest(bytes.as_slice(), Some(support)).with_context(|| path.display().to_string())?;
        for RowIssue { line, message } in report.issues {
            warn!("{}:{line}: {message}", path.display());
            issues.push(FileIssue {
                file: path.clone(),
                line,
                message,
            });
        }
        for row in report.dataset.rows {
            if !seen.insert((row.subject_id.clone(), row.treatment, row.round)) {
                bail!(
                    "{}: subject {} appears twice in {} round {}",
                    path.display(),
                    row.subject_id,
                    row.treatment,
                    row.round
                );
            }
            dataset.rows.push(row);
        }
    }
    if !issues.is_empty() {
        eprintln!("warning: {} rows rejected; see issues.csv", issues.len());
    }
    if dataset.is_empty() {
        bail!("no valid rows in {}", display_paths(&inputs));
    }
    Ok((dataset, issues))
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Serialize)]
struct FileIssue {
    file: PathBuf,
    line: u64,
    message: String,
}

fn treatment_cells(data: &SubjectDataset) -> BTreeSet<(Treatment, u32)> {
    data.rows.iter().map(|r| (r.treatment, r.group_size)).collect()
}

#[derive(Serialize)]
struct BootstrapRow {
    replication: u64,
    frequency: f64,
    differential: Option<f64>,
}

#[derive(Serialize)]
struct BootstrapCell {
    treatment: Treatment,
    group_size: u32,
    file: String,
    reps: u64,
    decisions_per_rep: usize,
    against_signal_rate: f64,
    frequency: Option<BootstrapSummary>,
    differential: Option<BootstrapSummary>,
    no_disagreement_reps: u64,
}

fn cmd_bootstrap(c: &RunConfig) -> Result<()> {
    let mut r = base(c);
    let reps = c.reps.unwrap_or(10_000);
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let seed = c.seed.unwrap_or(0);
    if let Some(g) = c.group_size.filter(|g| ![5, 15].contains(g)) {
        return Err(usage(format!("the bootstrap covers group sizes 5 and 15, not {g}")));
    }
    r.reps = Some(reps);
    r.seed = Some(seed);
    r.treatment = c.treatment;
    r.group_size = c.group_size;

    let mut out = OutputDir::create(&out_dir(c))?;
    let (data, issues) = load_inputs(c, &mut r, &mut out)?;
    let cells: Vec<(Treatment, u32)> = treatment_cells(&data)
        .into_iter()
        .filter(|&(t, g)| c.treatment.is_none_or(|x| x == t) && c.group_size.is_none_or(|x| x == g))
        .filter(|&(t, g)| {
            let covered = g == 5 || g == 15;
            if !covered {
                warn!("skipping {t}{g}: the bootstrap covers group sizes 5 and 15");
            }
            covered
        })
        .collect();
    if cells.is_empty() {
        bail!("no treatment in the input matches the requested treatment and group size");
    }

    let mut summaries = Vec::new();
    for (t, g) in cells {
        let b = bootstrap_exp1(&data, t, g, reps, seed).with_context(|| format!("bootstrapping {t}{g}"))?;
        let rows: Vec<BootstrapRow> = b
            .frequency
            .values
            .iter()
            .zip(&b.stats)
            .enumerate()
            .map(|(i, (&f, s))| BootstrapRow {
                replication: i as u64,
                frequency: f,
                differential: s.value,
            })
            .collect();
        let file = format!("bootstrap_{t}{g}.csv");
        out.csv(&file, &rows)?;
        summaries.push(BootstrapCell {
            treatment: t,
            group_size: g,
            file,
            reps: b.reps,
            decisions_per_rep: b.decisions_per_rep,
            against_signal_rate: b.against_signal_rate,
            frequency: b.frequency.summary,
            differential: b.differential.summary,
            no_disagreement_reps: b.no_disagreement_reps,
        });
    }
    out.json("bootstrap_summary.json", &summaries)?;
    if !issues.is_empty() {
        out.csv("issues.csv", &issues)?;
    }
    out.finish("bootstrap", r)?;

    let mut table = format!("{:<6} {:>9} {:>9} {:>9}\n", "cell", "freq", "diff", "P(d<0)");
    for s in &summaries {
        let f = s.frequency.as_ref().map_or(f64::NAN, |x| x.mean);
        let (d, below) = s.differential.as_ref().map_or((f64::NAN, f64::NAN), |x| (x.mean, x.mass_below_zero));
        table.push_str(&format!(
            "{:<6} {f:>9.4} {d:>9.4} {below:>9.4}\n",
            format!("{}{}", s.treatment, s.group_size)
        ));
    }
    print(c, &table, &summaries)
}

#[derive(Serialize)]
struct ThresholdRow {
    treatment: Treatment,
    group_size: u32,
    subject_id: String,
    n_decisions: usize,
    min_violations: usize,
    range_low: f64,
    range_high: f64,
    threshold_mean: f64,
}

#[derive(Serialize)]
struct KsRow {
    group_size: u32,
    n_ld: usize,
    n_mva: usize,
    statistic: f64,
    p_value: f64,
    permutations: u64,
}

#[derive(Serialize)]
struct AnalyzeOutput {
    cluster: ClusterLevel,
    frequencies: Vec<FrequencyRow>,
    thresholds: Vec<ThresholdRow>,
    /// Subjects never seen as non-experts, by treatment cell.
    flagged: BTreeMap<String, Vec<String>>,
    ks: Vec<KsRow>,
    rejected_rows: usize,
}

fn cmd_analyze(c: &RunConfig) -> Result<()> {
    let mut r = base(c);
    let cluster = c.cluster.unwrap_or(ClusterLevel::Session);
    let permutations = c.permutations.unwrap_or(10_000);
    let seed = c.seed.unwrap_or(0);
    r.cluster = Some(cluster);
    r.permutations = Some(permutations);
    r.seed = Some(seed);

    let mut out = OutputDir::create(&out_dir(c))?;
    let (data, issues) = load_inputs(c, &mut r, &mut out)?;
    let support = parse_support(r.support.as_deref().unwrap_or(DEFAULT_SUPPORT))?;

    let frequencies = frequency_summary(&data, cluster)?;
    let mut thresholds = Vec::new();
    let mut flagged = BTreeMap::new();
    let mut means: BTreeMap<(u32, Treatment), Vec<f64>> = BTreeMap::new();
    for (t, g) in treatment_cells(&data) {
        let report = estimate_thresholds(&data, t, g, support)?;
        if !report.flagged.is_empty() {
            flagged.insert(format!("{t}{g}"), report.flagged);
        }
        for e in report.estimates {
            means.entry((g, t)).or_default().push(e.threshold_mean);
            thresholds.push(ThresholdRow {
                treatment: t,
                group_size: g,
                subject_id: e.subject_id,
                n_decisions: e.n_decisions,
                min_violations: e.min_violation_count,
                range_low: e.threshold_range.0,
                range_high: e.threshold_range.1,
                threshold_mean: e.threshold_mean,
            });
        }
    }
    let sizes: BTreeSet<u32> = means.keys().map(|&(g, _)| g).collect();
    let mut tests = Vec::new();
    for g in sizes {
        if let (Some(a), Some(b)) = (means.get(&(g, Treatment::Ld)), means.get(&(g, Treatment::Mva))) {
            let ks = ks_two_sample(a, b, permutations, seed)?;
            tests.push(KsRow {
                group_size: g,
                n_ld: a.len(),
                n_mva: b.len(),
                statistic: ks.statistic,
                p_value: ks.p_value,
                permutations: ks.permutations,
            });
        }
    }
    let output = AnalyzeOutput {
        cluster,
        frequencies,
        thresholds,
        flagged,
        ks: tests,
        rejected_rows: issues.len(),
    };

    out.csv("frequency.csv", &output.frequencies)?;
    out.csv("thresholds.csv", &output.thresholds)?;
    out.csv("ks.csv", &output.ks)?;
    out.csv("issues.csv", &issues)?;
    out.json("analyze.json", &output)?;
    out.finish("analyze", r)?;

    let mut table = format!("{:<6} {:>8} {:>9} {:>19}\n", "cell", "n", "freq", "95% CI");
    for f in &output.frequencies {
        let ci = match (f.ci_low, f.ci_high) {
            (Some(lo), Some(hi)) => format!("[{lo:.4}, {hi:.4}]"),
            _ => f.flag.clone().unwrap_or_default(),
        };
        table.push_str(&format!(
            "{:<6} {:>8} {:>9.4} {ci:>19}\n",
            format!("{}{}", f.treatment, f.group_size),
            f.n_decisions,
            f.frequency
        ));
    }
    for k in &output.ks {
        table.push_str(&format!(
            "KS LD vs MVA, N={}: D = {:.4}, p = {:.4}\n",
            k.group_size, k.statistic, k.p_value
        ));
    }
    print(c, &table, &output)
}

fn cmd_gen_synthetic(c: &RunConfig) -> Result<()> {
    let mut r = base(c);
    let m = resolve_model(c, &mut r)?;
    let treatment = match m.system {
        System::Ld => Treatment::Ld,
        System::Mva => Treatment::Mva,
        System::Mv => return Err(usage("synthetic datasets are generated for ld or mva")),
    };
    let behavior = resolve_behavior(c, &m, m.system, &mut r)?;
    let sessions = c.sessions.unwrap_or(4);
    let subjects = c.subjects.unwrap_or(15);
    let rounds = c.rounds.unwrap_or(20);
    let seed = c.seed.unwrap_or(0);
    if sessions == 0 || rounds == 0 {
        return Err(usage("--sessions and --rounds must be at least 1"));
    }
    r.sessions = Some(sessions);
    r.subjects = Some(subjects);
    r.rounds = Some(rounds);
    r.seed = Some(seed);

    let design = SyntheticDesign {
        treatment,
        group_size: m.el.n_total(),
        n_experts: m.el.n_experts(),
        expert_precision: m.el.expert_precision(),
        distribution: m.dist.clone(),
        behavior,
        n_sessions: sessions,
        subjects_per_session: subjects,
        rounds: u32::try_from(rounds).map_err(|_| usage("--rounds is too large"))?,
    };
    let data = generate_dataset(&design, seed).or_usage()?;
    let mut out = OutputDir::create(&out_dir(c))?;
    let w = out.raw("synthetic.csv")?;
    ldvote_core::analysis::write_csv(&data, w)?;
    let path = out_dir(c).join("synthetic.csv");
    out.finish("gen-synthetic", r)?;

    let summary = GenSummary {
        rows: data.len(),
        file: path.clone(),
    };
    print(c, &format!("{} rows written to {}\n", data.len(), path.display()), &summary)
}

#[derive(Serialize)]
struct GenSummary {
    rows: usize,
    file: PathBuf,
}
