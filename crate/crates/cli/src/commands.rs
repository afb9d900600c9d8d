use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use terpscape::classify::{
    default_search_space, randomized_search, stratified_kfold_cv, ClassificationMetrics, ClassificationReport,
    MetricSummary, SearchResult,
};
use terpscape::cluster::{run_benchmark, write_benchmark_csv, BenchmarkData, ClusterRun, ReducerKind};
use terpscape::ingest::{self, IngestSidecar};
use terpscape::preprocess::{self, FittedTransform};
use terpscape::profile::{self, ProfileReport};
use terpscape::{RecordSet, SubclassLabel};

use crate::artifacts::{self as names, Artifact, OutDir};
use crate::config::{sha256_hex, RunConfig};
use crate::error::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestData {
    pub dataset: String,
    pub dataset_sha256: String,
    pub sidecar: IngestSidecar,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterData {
    pub classes: Vec<String>,
    pub n_rows: usize,
    pub transform: FittedTransform,
    pub table: String,
    pub runs: Vec<ClusterRun>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelBlock {
    pub search: Option<SearchResult>,
    pub report: ClassificationReport,
    pub confusion_csv: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassifyData {
    pub classes: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub transform: FittedTransform,
    pub warnings: Vec<String>,
    pub models: Vec<ModelBlock>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportBundle {
    pub ingest: IngestData,
    pub profile: Option<ProfileReport>,
    pub cluster: Option<ClusterData>,
    pub classify: Option<ClassifyData>,
    /// Artifacts not yet produced.
    pub missing: Vec<String>,
}

fn subclass_set(v: &[SubclassLabel]) -> BTreeSet<SubclassLabel> {
    v.iter().copied().collect()
}

pub fn ingest(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let input = cfg.input()?;
    let r = &cfg.resolved;
    let file = File::open(input).map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
    let rs = ingest::parse_dataset(BufReader::new(file), &r.schema)
        .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let parsed = rs.len();
    let rs = ingest::filter_taxonomy(&rs, &r.ingest.superclass, &subclass_set(&r.ingest.subclasses));
    let (rs, dropped) = ingest::drop_sparse_columns(&rs, r.schema.drop_threshold)?;
    let rs = ingest::expand_categoricals(&rs);

    let mut bytes = Vec::new();
    ingest::write_canonical(&rs, &mut bytes)?;
    let path = out.file(names::DATASET);
    std::fs::write(&path, &bytes).map_err(|e| CliError::io(&path, e))?;
    let sidecar = IngestSidecar::new(&r.schema, &rs, &dropped);

    println!("{parsed} records parsed, {} kept", rs.len());
    if !dropped.is_empty() {
        println!("dropped sparse columns: {}", dropped.join(", "));
    }
    println!("{:<20} {:>8}", "subclass", "count");
    for (name, count) in &sidecar.subclass_counts {
        println!("{name:<20} {count:>8}");
    }
    out.write_json(
        names::INGEST,
        cfg,
        "ingest",
        IngestData {
            dataset: names::DATASET.into(),
            dataset_sha256: sha256_hex(&bytes),
            sidecar,
        },
    )
}

/// Loads the canonical dataset after checking it matches the current config.
fn load_dataset(cfg: &RunConfig, out: &OutDir) -> Result<RecordSet, CliError> {
    let meta: Artifact<IngestData> = out.read_json(names::INGEST)?;
    check_fresh(cfg, names::INGEST, &meta.dataset_hash)?;
    let path = out.file(&meta.data.dataset);
    let bytes = std::fs::read(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Data(format!("missing upstream artifact {}", path.display()))
        } else {
            CliError::io(&path, e)
        }
    })?;
    if sha256_hex(&bytes) != meta.data.dataset_sha256 {
        return Err(CliError::Data(format!(
            "{} does not match the checksum in {}; rerun ingest",
            path.display(),
            names::INGEST
        )));
    }
    Ok(ingest::read_canonical(bytes.as_slice())?)
}

fn check_fresh(cfg: &RunConfig, name: &str, dataset_hash: &str) -> Result<(), CliError> {
    if dataset_hash != cfg.dataset_hash() {
        return Err(CliError::Data(format!(
            "stale upstream artifact {name}: it was built from a different input, schema or ingest section; rerun ingest"
        )));
    }
    Ok(())
}

pub fn profile(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let rs = load_dataset(cfg, out)?;
    let report = profile::subclass_profile(&rs, &cfg.resolved.profile)?;
    let mut w = out.create("profile_histograms.csv")?;
    profile::write_histograms_csv(&report, &mut w)?;
    w.flush()
        .map_err(|e| CliError::io(&out.file("profile_histograms.csv"), e))?;
    print!("{}", profile::render_table(&report));
    out.write_json(names::PROFILE, cfg, "profile", report)
}

fn benchmark_table(runs: &[ClusterRun]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<42} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "cell", "homo", "compl", "v_meas", "ari", "ami", "silh"
    );
    for r in runs {
        let cell = format!("{} / {}", r.group, r.reducer);
        match (&r.scores, &r.error) {
            (Some(sc), _) => {
                let e = &sc.external;
                let silh = sc.silhouette.map_or("-".to_string(), |v| format!("{v:.3}"));
                let _ = writeln!(
                    s,
                    "{cell:<42} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {silh:>7}",
                    e.homogeneity, e.completeness, e.v_measure, e.adjusted_rand, e.adjusted_mutual_info
                );
            }
            (None, err) => {
                let _ = writeln!(s, "{cell:<42} failed: {}", err.as_deref().unwrap_or("unknown error"));
            }
        }
    }
    s
}

pub fn cluster(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let section = &cfg.resolved.cluster;
    for r in &section.grid.reducers {
        if let ReducerKind::Imported { path } = &r.kind {
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "embedding for reducer {:?} not found: {}",
                    r.name,
                    path.display()
                )));
            }
        }
    }
    let rs = load_dataset(cfg, out)?;
    let labeled = preprocess::labeled_data(&rs, &subclass_set(&section.subclasses))?;
    if labeled.classes.len() < 2 {
        return Err(CliError::Data(format!(
            "clustering needs at least two subclasses present, found {:?}",
            labeled.classes
        )));
    }
    let data = BenchmarkData::from_labeled(&labeled);
    let (_, transform) = preprocess::impute_and_scale(&labeled.features);
    let runs = run_benchmark(&data, &section.grid, cfg.seed());
    for r in &runs {
        out.log_timing("cluster", &format!("{} / {}", r.group, r.reducer), r.wall_seconds);
        if let Some(e) = &r.error {
            log::warn!("{} / {}: {e}", r.group, r.reducer);
        }
    }
    let mut w = out.create("cluster_benchmark.csv")?;
    write_benchmark_csv(&runs, &mut w)?;
    w.flush()
        .map_err(|e| CliError::io(&out.file("cluster_benchmark.csv"), e))?;
    let table = benchmark_table(&runs);
    print!("{table}");
    out.write_json(
        names::CLUSTER,
        cfg,
        "cluster",
        ClusterData {
            classes: data.classes.clone(),
            n_rows: data.features.rows(),
            transform,
            table,
            runs,
        },
    )
}

pub fn classify(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let rs = load_dataset(cfg, out)?;
    let section = &cfg.resolved.classify;
    let seed = cfg.seed();
    let labeled = preprocess::labeled_data(&rs, &subclass_set(&section.subclasses))?;
    if labeled.classes.len() < 2 {
        return Err(CliError::Data(format!(
            "classification needs at least two subclasses present, found {:?}",
            labeled.classes
        )));
    }
    let split = preprocess::train_test_split(&labeled, 1.0 - section.test_fraction, seed)?;
    let split = preprocess::fit_apply_scaler(preprocess::fit_apply_imputer(split));
    let (x, y) = (&split.train.features.values, &split.train.labels);
    let (xt, yt) = (&split.test.features.values, &split.test.labels);
    let classes = &labeled.classes;

    let mut models = Vec::new();
    let mut used_names: BTreeMap<String, usize> = BTreeMap::new();
    for spec in &cfg.models {
        let base = spec.clone().with_seed(seed);
        let alg = base.algorithm.name();
        let start = Instant::now();
        let search = match &section.search {
            Some(s) => {
                let space = s
                    .spaces
                    .get(alg)
                    .cloned()
                    .unwrap_or_else(|| default_search_space(base.algorithm));
                Some(randomized_search(
                    &base, &space, x, y, classes, s.n_iter, s.folds, seed,
                )?)
            }
            None => None,
        };
        let chosen = search.as_ref().map_or(base, |s| s.best.clone());
        let mut report = stratified_kfold_cv(&chosen, x, y, classes, section.folds, seed)?;
        report.evaluate_test(x, y, xt, yt)?;
        out.log_timing("classify", alg, start.elapsed().as_secs_f64());

        let seen = used_names.entry(alg.to_string()).or_insert(0);
        *seen += 1;
        let confusion_csv = if *seen == 1 {
            format!("confusion_{alg}.csv")
        } else {
            format!("confusion_{alg}_{seen}.csv")
        };
        let mut w = out.create(&confusion_csv)?;
        report.write_confusion_csv(&mut w)?;
        w.flush().map_err(|e| CliError::io(&out.file(&confusion_csv), e))?;
        models.push(ModelBlock {
            search,
            report,
            confusion_csv,
        });
    }
    let data = ClassifyData {
        classes: classes.clone(),
        n_train: y.len(),
        n_test: yt.len(),
        transform: split.transform,
        warnings: split.warnings,
        models,
    };
    print!("{}", classify_table(&data));
    out.write_json(names::CLASSIFY, cfg, "classify", data)
}

fn metric_row(m: &MetricSummary) -> [f64; 5] {
    [
        m.accuracy,
        m.weighted_precision,
        m.weighted_recall,
        m.weighted_f1,
        m.ovo_auc,
    ]
}

fn test_row(m: &ClassificationMetrics) -> [f64; 5] {
    [
        m.accuracy,
        m.weighted_precision,
        m.weighted_recall,
        m.weighted_f1,
        m.ovo_auc,
    ]
}

fn classify_table(data: &ClassifyData) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:>6} {:>17} {:>17} {:>17} {:>17} {:>17}",
        "model", "split", "accuracy", "w-precision", "w-recall", "w-F1", "OVO AUC"
    );
    for m in &data.models {
        let r = &m.report;
        let name = r.spec.algorithm.name();
        let cv: String = metric_row(&r.mean)
            .iter()
            .zip(metric_row(&r.std))
            .map(|(a, b)| format!(" {:>17}", format!("{a:.4} ± {b:.4}")))
            .collect();
        let _ = writeln!(s, "{name:<22} {:>6}{cv}", format!("cv{}", r.folds.len()));
        if let Some(t) = &r.test {
            let row: String = test_row(t).iter().map(|v| format!(" {v:>17.4}")).collect();
            let _ = writeln!(s, "{name:<22} {:>6}{row}", "test");
        }
    }
    s
}

fn read_optional<T: serde::de::DeserializeOwned>(
    cfg: &RunConfig,
    out: &OutDir,
    name: &str,
    missing: &mut Vec<String>,
) -> Result<Option<T>, CliError> {
    if !out.file(name).is_file() {
        missing.push(name.to_string());
        return Ok(None);
    }
    let a: Artifact<T> = out.read_json(name)?;
    check_fresh(cfg, name, &a.dataset_hash)?;
    Ok(Some(a.data))
}

pub fn report(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let ingest: Artifact<IngestData> = out.read_json(names::INGEST)?;
    check_fresh(cfg, names::INGEST, &ingest.dataset_hash)?;
    let mut missing = Vec::new();
    let profile: Option<ProfileReport> = read_optional(cfg, out, names::PROFILE, &mut missing)?;
    let cluster: Option<ClusterData> = read_optional(cfg, out, names::CLUSTER, &mut missing)?;
    let classify: Option<ClassifyData> = read_optional(cfg, out, names::CLASSIFY, &mut missing)?;
    let bundle = ReportBundle {
        ingest: ingest.data,
        profile,
        cluster,
        classify,
        missing,
    };
    let summary = render_summary(cfg, &bundle);
    print!("{summary}");
    out.write_text(names::SUMMARY, &summary)?;
    out.write_json(names::REPORT, cfg, "report", bundle)
}

fn render_summary(cfg: &RunConfig, b: &ReportBundle) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "terpscape report");
    let _ = writeln!(s, "config sha256 {}", cfg.config_hash());
    let _ = writeln!(s, "seed {}", cfg.seed());
    let _ = writeln!(s);
    let side = &b.ingest.sidecar;
    let _ = writeln!(s, "== dataset: {} records ==", side.records);
    for (name, count) in &side.subclass_counts {
        let _ = writeln!(s, "{name:<20} {count:>8}");
    }
    if !side.dropped_columns.is_empty() {
        let _ = writeln!(s, "dropped sparse columns: {}", side.dropped_columns.join(", "));
    }
    if let Some(p) = &b.profile {
        let _ = writeln!(s, "\n== profile ==");
        s.push_str(&profile::render_table(p));
        let l = &p.overall.lipinski;
        let shares: Vec<String> = l
            .shares
            .iter()
            .enumerate()
            .map(|(v, x)| format!("{v}: {:.1}%", 100.0 * x))
            .collect();
        let total: f64 = 100.0 * l.shares.iter().sum::<f64>();
        let _ = writeln!(
            s,
            "Lipinski violations over {} evaluated records: {} (sum {total:.1}%)",
            l.evaluated,
            shares.join(", ")
        );
    }
    if let Some(c) = &b.cluster {
        let _ = writeln!(
            s,
            "\n== clustering benchmark: {} rows, classes {} ==",
            c.n_rows,
            c.classes.join(", ")
        );
        s.push_str(&c.table);
    }
    if let Some(c) = &b.classify {
        let _ = writeln!(
            s,
            "\n== classification: {} train / {} test rows, classes {} ==",
            c.n_train,
            c.n_test,
            c.classes.join(", ")
        );
        s.push_str(&classify_table(c));
    }
    if !b.missing.is_empty() {
        let _ = writeln!(s, "\nnot yet run: {}", b.missing.join(", "));
    }
    s
}
