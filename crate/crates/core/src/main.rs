use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use session_trees::analysis::{
    prune_threshold, threshold_curve, threshold_for_fraction, tree_metrics,
};
use session_trees::dot::{export_dot, DotOptions};
use session_trees::gaze::{self, Aoi, Eye, Fixation, StimulusWindow, DEFAULT_MIN_FIXATION_MS};
use session_trees::io::{load_tree, tree_to_json, LoadedTree};
use session_trees::merge::{merge_all_outcome, MergeError, MergeOptions, DEFAULT_BUDGET};
use session_trees::session::{build_session_tree, parse_session_log};
use session_trees::stats::{compare_groups, outcomes_to_csv, FeatureRow, Method};
use session_trees::weights::{tree_weight, WeightConfig, WeightMode};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_BUDGET: u8 = 3;

/// Session-tree construction, merging and analysis for clickstream logs.
#[derive(Parser)]
#[command(name = "session-trees", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one tree per session of a log.
    Parse {
        log: PathBuf,
        /// Write `<session_id>.json` files here instead of a JSON array to stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Merge the sessions of a log into one combined tree.
    Merge {
        log: PathBuf,
        /// Only merge sessions of this group.
        #[arg(long)]
        group: Option<String>,
        #[command(flatten)]
        weights: WeightArgs,
        /// Maximum evaluated matchings per pairwise merge.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Pair children greedily once the budget is spent instead of failing.
        #[arg(long)]
        greedy_fallback: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Drop every edge lighter than a threshold, with its subtree.
    Prune {
        tree: PathBuf,
        #[arg(
            long,
            conflicts_with = "fraction",
            required_unless_present = "fraction"
        )]
        threshold: Option<u64>,
        /// Keep edges shared by at least this fraction of the sessions.
        #[arg(long)]
        fraction: Option<f64>,
        /// Session count for --fraction; defaults to the tree's metadata.
        #[arg(long, requires = "fraction")]
        sessions: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Node count for every threshold, as CSV.
    Curve {
        tree: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Structural metrics and root subtree weight, as JSON.
    Metrics {
        tree: PathBuf,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Mann-Whitney U test per feature between two groups.
    Compare {
        /// Long-format CSV with header `feature,group,value`.
        csv: PathBuf,
        /// First group; defaults to the first group seen.
        #[arg(long)]
        group_a: Option<String>,
        /// Second group; defaults to the second group seen.
        #[arg(long)]
        group_b: Option<String>,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fixation and dwell statistics per area of interest.
    Gaze {
        /// CSV `participant,eye,stimulus,x,y,start_ms,duration_ms`.
        #[arg(long)]
        fixations: PathBuf,
        /// JSON list of `{name, stimulus, rect: [x, y, w, h]}`.
        #[arg(long)]
        aois: PathBuf,
        /// CSV `participant,stimulus,enter_ms,first_interaction_ms`.
        #[arg(long)]
        windows: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_FIXATION_MS)]
        min_duration: u64,
        /// Write stable-eye decisions and AOI overlap warnings as JSON.
        #[arg(long)]
        eye_report: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Graphviz rendering; edge thickness follows edge weight.
    Dot {
        tree: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        min_penwidth: f64,
        #[arg(long, default_value_t = 8.0)]
        max_penwidth: f64,
        #[arg(long)]
        show_labels: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct WeightArgs {
    #[arg(long, default_value_t = WeightMode::Stabilized)]
    mode: WeightMode,
    #[arg(long, default_value_t = 2.0)]
    log_base: f64,
}

impl WeightArgs {
    fn config(&self) -> Result<WeightConfig, UsageError> {
        WeightConfig::new(self.mode, self.log_base).map_err(|e| UsageError(e.to_string()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Exact,
    Normal,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => Method::Auto,
            MethodArg::Exact => Method::Exact,
            MethodArg::Normal => Method::Normal,
        }
    }
}

/// Bad arguments that clap cannot catch on its own.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else if e.chain().any(|c| c.downcast_ref::<MergeError>().is_some()) {
                ExitCode::from(EXIT_BUDGET)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Parse { log, out_dir } => parse(&log, out_dir.as_deref()),
        Command::Merge {
            log,
            group,
            weights,
            budget,
            greedy_fallback,
            output,
        } => {
            let options = MergeOptions {
                weights: weights.config()?,
                budget,
                greedy_fallback,
            };
            merge(&log, group.as_deref(), &options, output.as_deref())
        }
        Command::Prune {
            tree,
            threshold,
            fraction,
            sessions,
            output,
        } => {
            let loaded = read_tree(&tree)?;
            let threshold = match (threshold, fraction) {
                (Some(t), _) => t,
                (None, Some(f)) => {
                    let n = match sessions {
                        Some(n) => n,
                        None => session_count(&loaded).ok_or_else(|| {
                            UsageError("--fraction needs --sessions when the tree has no session count in its metadata".into())
                        })?,
                    };
                    threshold_for_fraction(f, n).map_err(|e| UsageError(e.to_string()))?
                }
                (None, None) => unreachable!("clap requires one of the two"),
            };
            let pruned = prune_threshold(&loaded.tree, threshold);
            let mut meta = loaded.meta.unwrap_or_default();
            meta.insert("threshold".into(), json!(threshold));
            write_output(
                output.as_deref(),
                &(tree_to_json(&pruned, Some(meta)) + "\n"),
            )
        }
        Command::Curve { tree, output } => {
            let loaded = read_tree(&tree)?;
            if loaded.tree.is_empty() {
                bail!("{}: tree is empty", tree.display());
            }
            write_output(output.as_deref(), &threshold_curve(&loaded.tree).to_csv())
        }
        Command::Metrics {
            tree,
            weights,
            output,
        } => {
            let config = weights.config()?;
            let loaded = read_tree(&tree)?;
            let metrics =
                tree_metrics(&loaded.tree, &config).with_context(|| tree.display().to_string())?;
            write_output(
                output.as_deref(),
                &(serde_json::to_string_pretty(&metrics)? + "\n"),
            )
        }
        Command::Compare {
            csv,
            group_a,
            group_b,
            method,
            alpha,
            output,
        } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(UsageError(format!("--alpha must lie in (0, 1), got {alpha}")).into());
            }
            let rows = read_features(&csv, group_a, group_b)?;
            let outcomes = compare_groups(&rows, method.into(), alpha);
            write_output(output.as_deref(), &outcomes_to_csv(&outcomes))
        }
        Command::Gaze {
            fixations,
            aois,
            windows,
            min_duration,
            eye_report,
            output,
        } => {
            let fixations = read_fixations(&fixations)?;
            let aois: Vec<Aoi> = serde_json::from_str(&read_text(&aois)?)
                .with_context(|| format!("{}: invalid AOI JSON", aois.display()))?;
            let windows = read_windows(&windows)?;
            let out = gaze::run_pipeline(&fixations, &windows, &aois, min_duration)?;
            for w in &out.report.overlaps {
                eprintln!(
                    "warning: fixation of {} on {} at {} ms lies in several AOIs: {}",
                    w.participant,
                    w.stimulus,
                    w.start_ms,
                    w.aois.join(", ")
                );
            }
            if let Some(path) = eye_report {
                let report = json!({
                    "min_duration_ms": min_duration,
                    "eyes": out.eyes,
                    "overlaps": out.report.overlaps,
                });
                write_output(
                    Some(&path),
                    &(serde_json::to_string_pretty(&report)? + "\n"),
                )?;
            }
            write_output(output.as_deref(), &gaze::stats_to_csv(&out.report.stats))
        }
        Command::Dot {
            tree,
            min_penwidth,
            max_penwidth,
            show_labels,
            output,
        } => {
            let options = DotOptions {
                min_penwidth,
                max_penwidth,
                show_labels,
            };
            options.validate().map_err(|e| UsageError(e.to_string()))?;
            let loaded = read_tree(&tree)?;
            let dot =
                export_dot(&loaded.tree, &options).with_context(|| tree.display().to_string())?;
            write_output(output.as_deref(), &dot)
        }
    }
}

fn parse(log: &Path, out_dir: Option<&Path>) -> Result<()> {
    let records = parse_session_log(&read_text(log)?).with_context(|| log.display().to_string())?;
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.session_id.as_str()) {
            bail!("{}: duplicate session id {:?}", log.display(), r.session_id);
        }
    }

    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            for r in &records {
                if r.session_id.contains(['/', '\\']) || r.session_id.starts_with('.') {
                    bail!("session id {:?} is not usable as a file name", r.session_id);
                }
                let mut meta = Map::new();
                meta.insert("session_id".into(), json!(r.session_id));
                meta.insert("group".into(), json!(r.group));
                let path = dir.join(format!("{}.json", r.session_id));
                write_output(
                    Some(&path),
                    &(tree_to_json(&build_session_tree(r), Some(meta)) + "\n"),
                )?;
            }
            Ok(())
        }
        None => {
            let sessions: Vec<Value> = records
                .iter()
                .map(|r| {
                    let tree: Value =
                        serde_json::from_str(&tree_to_json(&build_session_tree(r), None))?;
                    Ok(json!({ "session_id": r.session_id, "group": r.group, "tree": tree }))
                })
                .collect::<Result<_>>()?;
            write_output(None, &(serde_json::to_string_pretty(&sessions)? + "\n"))
        }
    }
}

fn merge(
    log: &Path,
    group: Option<&str>,
    options: &MergeOptions,
    output: Option<&Path>,
) -> Result<()> {
    let records = parse_session_log(&read_text(log)?).with_context(|| log.display().to_string())?;
    let trees: Vec<_> = records
        .iter()
        .filter(|r| group.is_none_or(|g| r.group == g))
        .map(build_session_tree)
        .collect();
    if let Some(g) = group {
        if trees.is_empty() {
            bail!("{}: no sessions in group {g:?}", log.display());
        }
    }
    let outcome = merge_all_outcome(&trees, options)?;
    if outcome.greedy_pairs > 0 {
        eprintln!(
            "warning: budget exhausted; {} node pairs were merged greedily",
            outcome.greedy_pairs
        );
    }

    let mut meta = Map::new();
    meta.insert("mode".into(), json!(options.weights.mode));
    meta.insert("log_base".into(), json!(options.weights.log_base));
    meta.insert("sessions".into(), json!(trees.len()));
    if let Some(g) = group {
        meta.insert("group".into(), json!(g));
    }
    // Literal weighting can degenerate; null then marks "undefined".
    meta.insert(
        "subtree_weight".into(),
        json!(tree_weight(&outcome.tree, &options.weights).ok()),
    );
    meta.insert(
        "evaluated_matchings".into(),
        json!(outcome.evaluated_matchings),
    );
    meta.insert("greedy_pairs".into(), json!(outcome.greedy_pairs));
    write_output(output, &(tree_to_json(&outcome.tree, Some(meta)) + "\n"))
}

fn session_count(loaded: &LoadedTree) -> Option<usize> {
    loaded
        .meta
        .as_ref()?
        .get("sessions")?
        .as_u64()
        .map(|n| n as usize)
}

#[derive(Deserialize)]
struct FeatureRecord {
    feature: String,
    group: String,
    value: f64,
}

fn read_features(
    path: &Path,
    group_a: Option<String>,
    group_b: Option<String>,
) -> Result<Vec<FeatureRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut groups: Vec<String> = Vec::new();
    // Feature -> group -> values, features in order of first appearance.
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for (i, record) in reader.deserialize::<FeatureRecord>().enumerate() {
        let r = record.with_context(|| format!("{}: bad record {}", path.display(), i + 1))?;
        if !groups.contains(&r.group) {
            groups.push(r.group.clone());
        }
        if !values.contains_key(&r.feature) {
            order.push(r.feature.clone());
        }
        values
            .entry(r.feature)
            .or_default()
            .entry(r.group)
            .or_default()
            .push(r.value);
    }

    let (a, b) = match (group_a, group_b) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            if groups.len() > 2 {
                bail!(
                    "{}: found {} groups; choose two with --group-a and --group-b",
                    path.display(),
                    groups.len()
                );
            }
            let given = a.clone().or_else(|| b.clone());
            let mut rest = groups
                .iter()
                .filter(|g| Some(*g) != given.as_ref())
                .cloned();
            let a = a.or_else(|| rest.next());
            let b = b.or_else(|| rest.next());
            match (a, b) {
                (Some(a), Some(b)) => (a, b),
                _ => bail!(
                    "{}: need two groups, found {}",
                    path.display(),
                    groups.len()
                ),
            }
        }
    };
    if a == b {
        return Err(UsageError("--group-a and --group-b must differ".into()).into());
    }
    for g in [&a, &b] {
        if !groups.contains(g) {
            bail!("{}: group {g:?} does not occur", path.display());
        }
    }

    Ok(order
        .into_iter()
        .map(|feature| {
            let mut by_group = values.remove(&feature).unwrap_or_default();
            FeatureRow {
                group_a: by_group.remove(&a).unwrap_or_default(),
                group_b: by_group.remove(&b).unwrap_or_default(),
                feature,
            }
        })
        .collect())
}

#[derive(Deserialize)]
struct FixationRecord {
    participant: String,
    eye: String,
    stimulus: String,
    x: f64,
    y: f64,
    start_ms: i64,
    duration_ms: u64,
}

fn read_fixations(path: &Path) -> Result<Vec<Fixation>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    reader
        .deserialize::<FixationRecord>()
        .enumerate()
        .map(|(i, record)| {
            let r = record.with_context(|| format!("{}: bad record {}", path.display(), i + 1))?;
            let eye = match r.eye.to_ascii_lowercase().as_str() {
                "left" | "l" => Eye::Left,
                "right" | "r" => Eye::Right,
                other => bail!(
                    "{}: record {}: unknown eye {other:?}",
                    path.display(),
                    i + 1
                ),
            };
            Ok(Fixation {
                participant: r.participant,
                eye,
                stimulus: r.stimulus,
                x: r.x,
                y: r.y,
                start_ms: r.start_ms,
                duration_ms: r.duration_ms,
            })
        })
        .collect()
}

fn read_windows(path: &Path) -> Result<Vec<StimulusWindow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    reader
        .deserialize::<StimulusWindow>()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{}: bad record {}", path.display(), i + 1)))
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_tree(path: &Path) -> Result<LoadedTree> {
    let loaded = load_tree(path)?;
    for w in &loaded.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(loaded)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
