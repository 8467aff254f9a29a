//! Subcommand implementations. Each reads its inputs, drives the library,
//! and writes the artifacts listed in its `--help`. All files are plain
//! CSV/JSON/DOT text; floats print with Rust's shortest round-trip
//! formatting so reruns are byte-identical.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use shelltox::dataset::Dataset;
use shelltox::evaluate::{
    self, compute_metrics, grid_search, repeated_eval, Algo, AlgoConfig, EvalReport, GridSpec,
    OptimizeMetric, RepeatedEvalConfig, ResampleGrid, ResampleSpec,
};
use shelltox::explain::{
    beeswarm_data, export_dot, force_data, permutation_importance, treeshap, ExplainError,
    Explanation, PermMetric,
};
use shelltox::ingest::{
    self, IngestError, MeteoRow, PhytoRecord, RiverRow, SeawaterRow, ToxTest,
};
use shelltox::models::{
    ClassWeight, Criterion, ForestConfig, MlpConfig, Model, ModelFile, SvmConfig, TreeConfig,
    MODEL_FORMAT_VERSION,
};
use shelltox::preprocess::{
    clean_overlap, consolidate, consolidated_from_csv, consolidated_to_csv,
    interpolate_station_gaps, project_2d, select_sample_per_visit, split, ConsolidatedInstance,
    MatchDirection, PreprocessError, SplitSpec, StationRanking,
};
use shelltox::resample::{random_undersample, smote, ResampleError};
use shelltox::seeding;
use shelltox::species::FEATURE_NAMES;
use shelltox::synth::{
    self, SynthError, METEO_FILE, PHYTO_FILE, RIVER_FILE, SEAWATER_FILE, TOX_FILE,
};

use crate::{
    AlgoArg, CliError, CriterionArg, DescribeArgs, EvaluateArgs, ExplainArgs, Globals, GridArg,
    IngestArgs, MatchDirArg, OptimizeArg, PermMetricArg, PreprocessArgs, SideArg, SynthArgs,
    TrainArgs,
};

// ---------------------------------------------------------------- shared

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn schema_in(path: &Path, e: IngestError) -> CliError {
    match e {
        IngestError::EmptyDataset => CliError::Empty(format!("{}: {e}", path.display())),
        _ => CliError::Schema(format!("{}: {e}", path.display())),
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> CliError {
        match e {
            PreprocessError::EmptyInput => CliError::Empty(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<evaluate::EvalError> for CliError {
    fn from(e: evaluate::EvalError) -> CliError {
        CliError::Other(e.to_string())
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> CliError {
        CliError::Other(e.to_string())
    }
}

impl From<shelltox::models::ModelError> for CliError {
    fn from(e: shelltox::models::ModelError) -> CliError {
        CliError::Other(e.to_string())
    }
}

/// Quote a CSV field if it contains a delimiter, quote, or newline.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn algo_of(a: AlgoArg) -> Algo {
    match a {
        AlgoArg::Dt => Algo::Dt,
        AlgoArg::Rf => Algo::Rf,
        AlgoArg::Svm => Algo::Svm,
        AlgoArg::Mlp => Algo::Mlp,
    }
}

/// Raw tables as parsed from an input directory.
struct RawTables {
    phyto: Vec<PhytoRecord>,
    tox: Vec<ToxTest>,
    seawater: Vec<SeawaterRow>,
    meteo: Vec<MeteoRow>,
    river: Vec<RiverRow>,
}

fn read_raw_tables(dir: &Path) -> Result<RawTables, CliError> {
    let text_of = |name: &str| read_input(&dir.join(name));
    let phyto = ingest::parse_phyto(&text_of(PHYTO_FILE)?)
        .map_err(|e| schema_in(&dir.join(PHYTO_FILE), e))?;
    let tox =
        ingest::parse_tox(&text_of(TOX_FILE)?).map_err(|e| schema_in(&dir.join(TOX_FILE), e))?;
    let seawater = ingest::parse_seawater(&text_of(SEAWATER_FILE)?)
        .map_err(|e| schema_in(&dir.join(SEAWATER_FILE), e))?;
    let meteo = ingest::parse_meteo(&text_of(METEO_FILE)?)
        .map_err(|e| schema_in(&dir.join(METEO_FILE), e))?;
    let river = ingest::parse_river(&text_of(RIVER_FILE)?)
        .map_err(|e| schema_in(&dir.join(RIVER_FILE), e))?;
    Ok(RawTables { phyto, tox, seawater, meteo, river })
}

fn read_consolidated(path: &Path) -> Result<Vec<ConsolidatedInstance>, CliError> {
    consolidated_from_csv(&read_input(path)?).map_err(|e| schema_in(path, e))
}

fn labeled_dataset(instances: &[ConsolidatedInstance], path: &Path) -> Result<Dataset, CliError> {
    let ds = shelltox::preprocess::to_dataset(instances);
    if ds.is_empty() {
        return Err(CliError::Empty(format!("{}: no labeled instances", path.display())));
    }
    Ok(ds)
}

/// `train` and `explain` must agree on the split, so both derive it from
/// the master seed through this one path.
fn split_spec(globals: &Globals, train_fraction: Option<f64>) -> SplitSpec {
    SplitSpec {
        train_fraction: train_fraction
            .or(globals.file.train_fraction)
            .unwrap_or(SplitSpec::default().train_fraction),
        seed: seeding::derive_seed(globals.seed, &["split".into()]),
        stratified: true,
    }
}

fn dataset_csv(ds: &Dataset) -> String {
    let mut s = format!("{},label\n", FEATURE_NAMES.join(","));
    for (row, y) in ds.x.iter().zip(&ds.y) {
        for v in row {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{y}");
    }
    s
}

// ----------------------------------------------------------------- synth

pub fn synth(globals: &Globals, args: SynthArgs) -> Result<(), CliError> {
    let mut cfg = globals.file.synth.clone().unwrap_or_default();
    if let Some(years) = args.years {
        cfg.years = years as usize;
    }
    if let Some(y) = args.start_year {
        cfg.start_year = y;
    }
    if let Some(stations) = args.stations {
        cfg.stations = stations;
    }
    if let Some(c) = args.coverage {
        cfg.test_coverage = c;
    }
    if let Some(p) = args.prevalence {
        cfg.label.target_prevalence = p;
    }
    let out = synth::generate(&cfg, globals.seed).map_err(|e| match e {
        SynthError::BadConfig(_) => CliError::Schema(e.to_string()),
        SynthError::InfeasiblePrevalence { .. } => CliError::Other(e.to_string()),
    })?;
    out.write_to(&globals.out)
        .map_err(|e| CliError::Other(format!("{}: {e}", globals.out.display())))?;
    for name in [PHYTO_FILE, TOX_FILE, SEAWATER_FILE, METEO_FILE, RIVER_FILE, synth::GROUND_TRUTH_FILE] {
        println!("wrote {}", globals.out.join(name).display());
    }
    let tested = out.rows.iter().filter(|r| r.tested).count();
    let positives = out.rows.iter().filter(|r| r.tested && r.label == 1).count();
    println!(
        "visits={} tested={tested} positives={positives} achieved_prevalence={} intercept={}",
        out.rows.len(),
        out.achieved_prevalence,
        out.intercept
    );
    Ok(())
}

// ---------------------------------------------------------------- ingest

pub fn ingest(globals: &Globals, args: IngestArgs) -> Result<(), CliError> {
    let tables = read_raw_tables(&args.input)?;

    fn stations_of<'a>(names: impl Iterator<Item = &'a str>) -> String {
        names.collect::<BTreeSet<_>>().len().to_string()
    }
    // (table, rows, distinct stations or "" for station-free tables, dates)
    let summaries: [(&str, usize, String, Vec<chrono::NaiveDate>); 5] = [
        (
            "phyto",
            tables.phyto.len(),
            stations_of(tables.phyto.iter().map(|r| r.station.as_str())),
            tables.phyto.iter().map(|r| r.date).collect(),
        ),
        (
            "toxicity",
            tables.tox.len(),
            stations_of(tables.tox.iter().map(|r| r.station.as_str())),
            tables.tox.iter().map(|r| r.date).collect(),
        ),
        (
            "seawater",
            tables.seawater.len(),
            stations_of(tables.seawater.iter().map(|r| r.station.as_str())),
            tables.seawater.iter().map(|r| r.date).collect(),
        ),
        ("meteo", tables.meteo.len(), String::new(), tables.meteo.iter().map(|r| r.date).collect()),
        ("river", tables.river.len(), String::new(), tables.river.iter().map(|r| r.date).collect()),
    ];
    if summaries.iter().all(|s| s.1 == 0) {
        return Err(CliError::Empty(format!(
            "{}: all five tables are empty",
            args.input.display()
        )));
    }

    let mut csv = String::from("table,rows,stations,first_date,last_date\n");
    for (table, rows, stations, dates) in &summaries {
        let first = dates.iter().min().map_or(String::new(), |d| d.to_string());
        let last = dates.iter().max().map_or(String::new(), |d| d.to_string());
        let _ = writeln!(csv, "{table},{rows},{stations},{first},{last}");
        println!("{table}: {rows} rows");
    }
    write_artifact(&globals.out, "ingest_summary.csv", &csv)
}

// ------------------------------------------------------------ preprocess

pub fn preprocess(globals: &Globals, args: PreprocessArgs) -> Result<(), CliError> {
    if !args.no_clean && args.enn_k == 0 {
        return Err(CliError::Schema("--enn-k must be at least 1".into()));
    }
    let mut cfg = globals.file.windows.clone().unwrap_or_default();
    if let Some(d) = args.tox_window {
        cfg.tox_match_days = d;
    }
    if let Some(d) = args.meteo_window {
        cfg.meteo_window_days = d;
    }
    if let Some(d) = args.river_window {
        cfg.river_window_days = d;
    }
    if let Some(d) = args.interp_days {
        cfg.interp_days = d;
    }
    if let Some(l) = args.limit {
        cfg.regulatory_limit = l;
    }
    let direction = match args.match_direction {
        Some(MatchDirArg::Backward) => MatchDirection::Backward,
        _ => MatchDirection::Forward,
    };

    let tables = read_raw_tables(&args.input)?;
    let phyto = ingest::harmonize(tables.phyto);
    let visits = select_sample_per_visit(&phyto);
    let ranking =
        StationRanking::from_config(globals.file.interpolation.clone().unwrap_or_default());
    let (seawater, interp) = interpolate_station_gaps(&tables.seawater, &ranking, &cfg);
    let fused = consolidate(
        &visits,
        &tables.tox,
        &seawater,
        &tables.meteo,
        &tables.river,
        &cfg,
        direction,
    )?;
    if fused.labeled.is_empty() && fused.unlabeled.is_empty() {
        return Err(CliError::Empty(format!(
            "{}: no visit survived consolidation",
            args.input.display()
        )));
    }

    // Overlap cleaning runs on the labeled set only; removed indices
    // refer to positions in `fused.labeled`.
    let removed: BTreeSet<usize> = if args.no_clean || fused.labeled.is_empty() {
        BTreeSet::new()
    } else {
        let ds = shelltox::preprocess::to_dataset(&fused.labeled);
        match clean_overlap(&ds, args.enn_k, !args.raw_distances) {
            Ok(outcome) => outcome.removed.into_iter().collect(),
            Err(PreprocessError::Resample(ResampleError::TooFewInstances { needed, found })) => {
                println!("overlap cleaning skipped: needs {needed} instances, found {found}");
                BTreeSet::new()
            }
            Err(e) => return Err(e.into()),
        }
    };
    let labeled_clean: Vec<ConsolidatedInstance> = fused
        .labeled
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, inst)| inst.clone())
        .collect();

    let mut all: Vec<ConsolidatedInstance> =
        labeled_clean.iter().cloned().chain(fused.unlabeled.iter().cloned()).collect();
    all.sort_by(|a, b| (a.date, &a.station).cmp(&(b.date, &b.station)));
    write_artifact(&globals.out, "consolidated.csv", &consolidated_to_csv(&all))?;

    let positives = labeled_clean.iter().filter(|i| i.label == Some(1)).count();
    let audit = &fused.audit;
    let mut drops = String::from("counter,value\n");
    for (name, value) in [
        ("visits", audit.visits),
        ("labeled", audit.labeled),
        ("unlabeled", audit.unlabeled),
        ("dropped", audit.dropped),
        ("missing_sst", audit.missing_sst),
        ("missing_salinity", audit.missing_salinity),
        ("missing_meteo", audit.missing_meteo),
        ("missing_river", audit.missing_river),
        ("interp_filled_sst", interp.filled_sst),
        ("interp_filled_salinity", interp.filled_salinity),
        ("interp_unfilled_sst", interp.missing_sst),
        ("interp_unfilled_salinity", interp.missing_salinity),
        ("overlap_removed", removed.len()),
        ("labeled_after_clean", labeled_clean.len()),
        ("positives_after_clean", positives),
        ("negatives_after_clean", labeled_clean.len() - positives),
    ] {
        let _ = writeln!(drops, "{name},{value}");
    }
    write_artifact(&globals.out, "drops_audit.csv", &drops)?;

    // 2-D projection of the labeled set before and after cleaning, for
    // eyeballing how much class overlap the cleaning pass removed.
    let mut proj = String::from("phase,x,y,label\n");
    let mut project_into = |phase: &str, insts: &[ConsolidatedInstance]| -> Result<(), CliError> {
        if insts.is_empty() {
            return Ok(());
        }
        let p = project_2d(&shelltox::preprocess::to_dataset(insts))?;
        if p.rank_deficient {
            println!("projection ({phase}): fewer than two informative axes");
        }
        for (pt, label) in p.points.iter().zip(&p.labels) {
            let _ = writeln!(proj, "{phase},{},{},{label}", pt[0], pt[1]);
        }
        Ok(())
    };
    project_into("before", &fused.labeled)?;
    project_into("after", &labeled_clean)?;
    write_artifact(&globals.out, "projection.csv", &proj)?;

    println!(
        "visits={} labeled={} unlabeled={} dropped={} overlap_removed={} kept={}",
        audit.visits,
        audit.labeled,
        audit.unlabeled,
        audit.dropped,
        removed.len(),
        all.len()
    );
    Ok(())
}

// -------------------------------------------------------------- describe

pub fn describe(globals: &Globals, args: DescribeArgs) -> Result<(), CliError> {
    let mut instances = read_consolidated(&args.input)?;
    if args.labeled_only {
        instances.retain(|i| i.label.is_some());
    }
    if instances.is_empty() {
        return Err(CliError::Empty(format!("{}: no instances", args.input.display())));
    }
    let stats = ingest::describe(&instances).map_err(|e| schema_in(&args.input, e))?;

    let mut summary = String::from("variable,min,max,mean,median\n");
    for v in &stats.variables {
        let _ = writeln!(summary, "{},{},{},{},{}", v.name, v.min, v.max, v.mean, v.median);
    }
    write_artifact(&globals.out, "summary.csv", &summary)?;

    let mut bands = String::from("variable,month,n,mean,p10,p90\n");
    for b in &stats.monthly {
        let _ = writeln!(bands, "{},{},{},{},{},{}", b.variable, b.month, b.n, b.mean, b.p10, b.p90);
    }
    write_artifact(&globals.out, "monthly_bands.csv", &bands)?;

    let mut labels = String::from("month,positive,negative\n");
    for m in &stats.monthly_labels {
        let _ = writeln!(labels, "{},{},{}", m.month, m.pos, m.neg);
    }
    write_artifact(&globals.out, "monthly_labels.csv", &labels)?;

    println!(
        "instances={} variables={} labeled_months={}",
        instances.len(),
        stats.variables.len(),
        stats.monthly_labels.len()
    );
    Ok(())
}

// ----------------------------------------------------------------- train

pub fn train(globals: &Globals, args: TrainArgs) -> Result<(), CliError> {
    let instances = read_consolidated(&args.input)?;
    let ds = labeled_dataset(&instances, &args.input)?;
    let spec = split_spec(globals, args.train_fraction);
    let (train_ds, test_ds) = split(&ds, &spec)?;

    let fit_input = if args.no_resample {
        train_ds.clone()
    } else {
        let resample = ResampleSpec {
            smote_k: args.smote_k,
            smote_strategy: args.smote_strategy,
            under_strategy: args.under_strategy,
        };
        let cfg = resample.config(seeding::derive_seed(globals.seed, &["resample".into()]));
        let oversampled =
            smote(&train_ds, &cfg).map_err(|e| CliError::Other(format!("resampling: {e}")))?;
        random_undersample(&oversampled, &cfg)
            .map_err(|e| CliError::Other(format!("resampling: {e}")))?
    };

    let criterion = match args.criterion {
        CriterionArg::Gini => Criterion::Gini,
        CriterionArg::Entropy => Criterion::Entropy,
    };
    let class_weight = if args.balanced { ClassWeight::Balanced } else { ClassWeight::None };
    let algo_cfg = match args.algo {
        AlgoArg::Dt => AlgoConfig::Dt(TreeConfig {
            criterion,
            max_depth: args.max_depth,
            class_weight,
            ..TreeConfig::default()
        }),
        AlgoArg::Rf => AlgoConfig::Rf(ForestConfig {
            n_estimators: args.trees,
            criterion,
            max_depth: args.max_depth,
            class_weight,
            ..ForestConfig::default()
        }),
        AlgoArg::Svm => AlgoConfig::Svm(SvmConfig { c: args.c, ..SvmConfig::default() }),
        AlgoArg::Mlp => AlgoConfig::Mlp {
            config: MlpConfig { hidden: args.hidden, ..MlpConfig::default() },
            drop_month: !args.keep_month,
        },
    };
    let model = algo_cfg.fit(&fit_input, seeding::derive_seed(globals.seed, &["fit".into()]))?;

    let feature_names: Vec<String> = match &algo_cfg {
        AlgoConfig::Mlp { drop_month: true, .. } => {
            FEATURE_NAMES.iter().skip(1).map(|s| s.to_string()).collect()
        }
        _ => FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let file = ModelFile::new(model, feature_names);
    write_artifact(&globals.out, "model.json", &file.to_json())?;
    // The saved splits are pre-resampling; the model saw the resampled
    // training side, the metrics below the untouched test side.
    write_artifact(&globals.out, "split_train.csv", &dataset_csv(&train_ds))?;
    write_artifact(&globals.out, "split_test.csv", &dataset_csv(&test_ds))?;

    let test_view = algo_cfg.view(&test_ds);
    let preds = file.model.predictions(&test_view.x)?;
    let m = compute_metrics(&test_ds.y, &preds)?;
    println!(
        "algo={} train={} fitted_on={} test={} precision={:.3} recall={:.3} f1={:.3}",
        algo_of(args.algo).name(),
        train_ds.len(),
        fit_input.len(),
        test_ds.len(),
        m.precision,
        m.recall,
        m.f1
    );
    Ok(())
}

// -------------------------------------------------------------- evaluate

/// Reduced search spaces for quick runs: one resampling setting and a
/// couple of model variants per algorithm.
fn small_grid(algo: Algo) -> GridSpec {
    let resample = ResampleGrid::fixed(5, 0.5, 0.6);
    match algo {
        Algo::Dt => GridSpec::Dt {
            max_depths: vec![Some(3), None],
            criteria: vec![Criterion::Gini],
            class_weights: vec![ClassWeight::None, ClassWeight::Balanced],
            resample,
        },
        Algo::Rf => GridSpec::Rf {
            n_estimators: vec![100],
            criteria: vec![Criterion::Gini],
            resample,
        },
        Algo::Svm => GridSpec::Svm { c: vec![1.0, 10.0], resample },
        Algo::Mlp => GridSpec::Mlp { hidden: vec![3], drop_month: true, resample },
    }
}

fn resolve_algos(globals: &Globals, flag: Option<Vec<AlgoArg>>) -> Result<Vec<Algo>, CliError> {
    let mut algos: Vec<Algo> = match flag {
        Some(list) => list.into_iter().map(algo_of).collect(),
        None => match globals.file.evaluate.as_ref().and_then(|e| e.algos.as_ref()) {
            Some(names) => names
                .iter()
                .map(|n| {
                    Algo::parse(n)
                        .ok_or_else(|| CliError::Schema(format!("unknown algorithm {n:?}")))
                })
                .collect::<Result<_, _>>()?,
            None => Algo::ALL.to_vec(),
        },
    };
    let mut seen = BTreeSet::new();
    algos.retain(|a| seen.insert(a.name()));
    Ok(algos)
}

fn eval_report_csv(report: &EvalReport) -> String {
    let mut s = String::from(
        "iteration,algorithm,precision,recall,f1,f1_of_mean_pr,winning_cell_id,winning_label\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},,{},{}",
            r.iteration,
            r.algo.name(),
            r.metrics.precision,
            r.metrics.recall,
            r.metrics.f1,
            r.winning_cell_id,
            csv_field(&r.winning_label)
        );
    }
    for a in &report.aggregates {
        let _ = writeln!(
            s,
            "mean,{},{},{},{},{},,",
            a.algo, a.precision_mean, a.recall_mean, a.f1_mean, a.f1_of_mean_pr
        );
        let _ = writeln!(s, "std,{},{},{},{},,,", a.algo, a.precision_std, a.recall_std, a.f1_std);
    }
    s
}

fn pr_curve_csv(report: &EvalReport) -> String {
    let mut s = String::from("algorithm,fold,recall,precision\n");
    for r in &report.rows {
        for (recall, precision) in &r.pr {
            let _ = writeln!(s, "{},{},{recall},{precision}", r.algo.name(), r.iteration);
        }
    }
    for (algo, curve) in &report.averaged_pr {
        for (recall, precision) in curve {
            let _ = writeln!(s, "{},mean,{recall},{precision}", algo.name());
        }
    }
    s
}

pub fn evaluate(globals: &Globals, args: EvaluateArgs) -> Result<(), CliError> {
    let instances = read_consolidated(&args.input)?;
    let ds = labeled_dataset(&instances, &args.input)?;
    let algos = resolve_algos(globals, args.algos)?;
    let section = globals.file.evaluate.as_ref();
    let defaults = RepeatedEvalConfig::default();
    let optimize = match args.optimize {
        Some(OptimizeArg::F1) => OptimizeMetric::F1,
        Some(OptimizeArg::Recall) => OptimizeMetric::Recall,
        Some(OptimizeArg::Precision) => OptimizeMetric::Precision,
        None => match section.and_then(|e| e.optimize.as_deref()) {
            Some(name) => OptimizeMetric::parse(name)
                .ok_or_else(|| CliError::Schema(format!("unknown metric {name:?}")))?,
            None => defaults.optimize,
        },
    };
    let config = RepeatedEvalConfig {
        n_iterations: args
            .iters
            .or_else(|| section.and_then(|e| e.iters))
            .unwrap_or(defaults.n_iterations),
        train_fraction: args
            .train_fraction
            .or(globals.file.train_fraction)
            .unwrap_or(defaults.train_fraction),
        fixed_split: args.fixed_split
            || section.and_then(|e| e.fixed_split).unwrap_or(defaults.fixed_split),
        optimize,
    };
    let grids: Vec<GridSpec> = algos
        .iter()
        .map(|&a| match args.grid {
            GridArg::Full => GridSpec::default_for(a),
            GridArg::Small => small_grid(a),
        })
        .collect();

    let report = repeated_eval(&ds, &grids, &config, globals.seed)?;
    write_artifact(&globals.out, "eval_report.csv", &eval_report_csv(&report))?;
    write_artifact(&globals.out, "pr_curve.csv", &pr_curve_csv(&report))?;

    // Full cross-validation table of every grid cell, from one split
    // drawn outside the iteration loop.
    let (grid_train, _) = split(
        &ds,
        &SplitSpec {
            train_fraction: config.train_fraction,
            seed: seeding::derive_seed(globals.seed, &["grid".into(), "split".into()]),
            stratified: true,
        },
    )?;
    let mut table = String::from(
        "algorithm,cell_id,label,fold1,fold2,fold3,fold4,fold5,mean_score,error\n",
    );
    for grid in &grids {
        let result = grid_search(
            &grid_train,
            grid,
            seeding::derive_seed(globals.seed, &["grid".into(), grid.algo().name().into()]),
            config.optimize,
        )?;
        for cell in &result.table {
            let folds: Vec<String> = (0..5)
                .map(|i| cell.fold_scores.get(i).map_or(String::new(), |v| v.to_string()))
                .collect();
            let _ = writeln!(
                table,
                "{},{},{},{},{},{}",
                grid.algo().name(),
                cell.cell.id,
                csv_field(&cell.cell.label()),
                folds.join(","),
                cell.mean_score,
                csv_field(cell.error.as_deref().unwrap_or(""))
            );
        }
    }
    write_artifact(&globals.out, "grid_table.csv", &table)?;

    for a in &report.aggregates {
        println!(
            "{}: precision={:.3}±{:.3} recall={:.3}±{:.3} f1={:.3}±{:.3} (n={})",
            a.algo,
            a.precision_mean,
            a.precision_std,
            a.recall_mean,
            a.recall_std,
            a.f1_mean,
            a.f1_std,
            a.iterations
        );
    }
    Ok(())
}

// --------------------------------------------------------------- explain

#[derive(Serialize)]
struct NamedContribution<'a> {
    feature: &'a str,
    value: f64,
    phi: f64,
}

#[derive(Serialize)]
struct NamedForce<'a> {
    base: f64,
    prediction: f64,
    contributions: Vec<NamedContribution<'a>>,
}

pub fn explain(globals: &Globals, args: ExplainArgs) -> Result<(), CliError> {
    let file = ModelFile::from_json(&read_input(&args.model)?)
        .map_err(|e| CliError::Schema(format!("{}: {e}", args.model.display())))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(CliError::Schema(format!(
            "{}: format version {} (this build reads {})",
            args.model.display(),
            file.format_version,
            MODEL_FORMAT_VERSION
        )));
    }
    // The model names the columns it was trained on; pick exactly those
    // out of the consolidated layout, in the model's order.
    let columns: Vec<usize> = file
        .feature_names
        .iter()
        .map(|name| {
            FEATURE_NAMES.iter().position(|n| n == name).ok_or_else(|| {
                CliError::Schema(format!("{}: unknown feature {name:?}", args.model.display()))
            })
        })
        .collect::<Result<_, _>>()?;
    if columns.len() != file.model.n_features() {
        return Err(CliError::Schema(format!(
            "{}: {} feature names for a {}-feature model",
            args.model.display(),
            columns.len(),
            file.model.n_features()
        )));
    }

    let instances = read_consolidated(&args.input)?;
    let ds = labeled_dataset(&instances, &args.input)?;
    let spec = split_spec(globals, args.train_fraction);
    let (train_ds, test_ds) = split(&ds, &spec)?;
    let side = match args.on {
        SideArg::Train => &train_ds,
        SideArg::Test => &test_ds,
    };
    let x: Vec<Vec<f64>> =
        side.x.iter().map(|row| columns.iter().map(|&c| row[c]).collect()).collect();
    let names: Vec<&str> = file.feature_names.iter().map(String::as_str).collect();

    let metric = match args.metric {
        PermMetricArg::Accuracy => PermMetric::Accuracy,
        PermMetricArg::F1 => PermMetric::F1,
        PermMetricArg::Recall => PermMetric::Recall,
    };
    let report = permutation_importance(
        &file.model,
        &x,
        &side.y,
        metric,
        args.repeats,
        seeding::derive_seed(globals.seed, &["perm".into()]),
    )?;
    let mut importance = String::from("feature,mean,std\n");
    for e in &report.entries {
        let _ = writeln!(importance, "{},{},{}", names[e.feature], e.mean, e.std);
    }
    write_artifact(&globals.out, "importance.csv", &importance)?;
    println!(
        "importance: metric={} baseline={} repeats={} side={} rows={}",
        report.metric.name(),
        report.baseline,
        report.n_repeats,
        match args.on {
            SideArg::Train => "train",
            SideArg::Test => "test",
        },
        x.len()
    );

    match &file.model {
        Model::Tree(_) | Model::Forest(_) => {
            let explanations: Vec<Explanation> =
                x.iter().map(|row| treeshap(&file.model, row)).collect::<Result<_, _>>()?;
            let swarm = beeswarm_data(&explanations)?;
            let mut shap = String::from("instance,feature,value,phi\n");
            for row in &swarm.rows {
                let _ = writeln!(
                    shap,
                    "{},{},{},{}",
                    row.instance, names[row.feature], row.value, row.phi
                );
            }
            write_artifact(&globals.out, "shap_values.csv", &shap)?;

            for &id in args.instances.as_deref().unwrap_or(&[]) {
                let e = explanations.get(id).ok_or_else(|| {
                    CliError::Other(format!(
                        "instance {id} out of range (explained side has {} rows)",
                        explanations.len()
                    ))
                })?;
                let record = force_data(e);
                let named = NamedForce {
                    base: record.base,
                    prediction: record.prediction,
                    contributions: record
                        .contributions
                        .iter()
                        .map(|c| NamedContribution {
                            feature: names[c.feature],
                            value: c.value,
                            phi: c.phi,
                        })
                        .collect(),
                };
                let mut json = serde_json::to_string_pretty(&named)
                    .map_err(|e| CliError::Other(e.to_string()))?;
                json.push('\n');
                write_artifact(&globals.out, &format!("force_{id}.json"), &json)?;
            }
        }
        _ => {
            println!(
                "shap: skipped ({} models have no tree paths to attribute)",
                file.model.algo_name()
            );
            if args.instances.is_some() {
                println!("force records: skipped for the same reason");
            }
        }
    }

    if let Model::Tree(t) = &file.model {
        write_artifact(&globals.out, "tree.dot", &export_dot(&t.root, &names))?;
    } else {
        println!("tree.dot: skipped (model is a {})", file.model.algo_name());
    }
    Ok(())
}
