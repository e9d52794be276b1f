use std::io::Write;
use std::path::PathBuf;

use qdbc::classifier::{class_distribution, loocv_report, sample_classify};
use qdbc::data::{bundled_iris, load_iris, write_report, Dataset, Report, ReportFormat, StatsScope, Table};
use qdbc::encoding::{
    interfered_state, prep_circuit_2f, prep_circuit_4f, prep_circuit_4f_general, FeatureVector,
    Preprocessing, Preprocessor,
};
use qdbc::exec::stream_rng;
use qdbc::oqw::{class_curves, GraphKind, Scenario, StartRule, WalkEngine};
use qdbc::recycling::{recycle_classify, scan_pairs, scheme_comparison, Neighborhood, SchemeComparison};
use qdbc::{ClassId, Execution};
use rand::Rng;

use crate::args::{Cli, ClassifyArgs, Command, PrepCheckArgs, RecycleArgs, TablesArgs, WalkArgs};
use crate::config::FileConfig;
use crate::error::CliError;

pub const PREP_TOL: f64 = 1e-10;

struct Settings {
    data: Option<PathBuf>,
    preprocess: Preprocessing,
    seed: u64,
    out: Option<PathBuf>,
    format: ReportFormat,
    class_order: Option<Vec<String>>,
}

fn parse<T: std::str::FromStr>(flag: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{value}` for --{flag}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let c = cli.common;
    let settings = Settings {
        data: c.data.or(file.data.clone()),
        preprocess: parse(
            "preprocess",
            c.preprocess.or(file.preprocess.clone()).as_deref().unwrap_or("minmax"),
        )?,
        seed: c.seed.or(file.seed).unwrap_or(0),
        out: c.out.or(file.out.clone()),
        format: parse("format", c.format.or(file.format.clone()).as_deref().unwrap_or("csv"))?,
        class_order: c.class_order.or(file.class_order.clone()),
    };
    let report = match cli.command {
        Command::Tables(a) => tables(&settings, &file, a)?,
        Command::Walk(a) => walk(&settings, &file, a)?,
        Command::Recycle(a) => recycle(&settings, &file, a)?,
        Command::PrepCheck(a) => return prep_check(&settings, &file, a),
        Command::Classify(a) => classify(&settings, &file, a)?,
    };
    emit(&settings, &report)
}

fn emit(s: &Settings, report: &Report) -> Result<(), CliError> {
    let bytes = write_report(report, s.format)?;
    match &s.out {
        Some(path) => std::fs::write(path, bytes).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        }),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|source| CliError::Output {
                path: "stdout".into(),
                source,
            }),
    }
}

fn dataset(s: &Settings) -> Result<Dataset, CliError> {
    let raw = match &s.data {
        Some(p) => load_iris(p).map_err(|source| CliError::Data {
            context: format!("loading {}", p.display()),
            source,
        })?,
        None => bundled_iris(),
    };
    let context = format!("labelling {}", raw.source.display());
    match &s.class_order {
        Some(order) => raw.into_dataset_with_order(order),
        None => raw.into_dataset(),
    }
    .map_err(|source| CliError::Data { context, source })
}

fn base_report(s: &Settings, command: &str) -> Report {
    let mut r = Report::default()
        .with_meta("command", command)
        .with_meta(
            "data",
            s.data
                .as_ref()
                .map_or("bundled".to_string(), |p| p.display().to_string()),
        )
        .with_meta("preprocess", s.preprocess)
        .with_meta("seed", s.seed)
        .with_meta("format", s.format);
    if let Some(order) = &s.class_order {
        r = r.with_meta("class_order", order.join(","));
    }
    r
}

fn class_table(name: &str, names: &[String], rows: &[Vec<f64>]) -> Table {
    let mut t = Table::new(name, "class", names.to_vec());
    for (n, row) in names.iter().zip(rows) {
        t.push_row(n.clone(), row.clone());
    }
    t
}

fn class_id(ds: &Dataset, name: &str) -> Result<ClassId, CliError> {
    ds.class_id(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown class `{name}`; classes are {}",
            ds.class_names().join(",")
        ))
    })
}

fn tables(s: &Settings, file: &FileConfig, a: TablesArgs) -> Result<Report, CliError> {
    let stats = a.stats.or(file.stats.clone()).unwrap_or_else(|| "full".into());
    let scope = match stats.as_str() {
        "full" => StatsScope::FullDataset,
        "per-fold" => StatsScope::PerFold,
        other => return Err(CliError::Usage(format!("invalid value `{other}` for --stats"))),
    };
    let ds = dataset(s)?;
    let t = loocv_report(&ds, s.preprocess, scope, Execution::default())?;
    let mut success = Table::new("success", "class", vec!["success_probability".into()]);
    for (n, v) in t.class_names.iter().zip(&t.success) {
        success.push_row(n.clone(), vec![*v]);
    }
    let mut r = base_report(s, "tables").with_meta("stats", stats);
    r.tables = vec![
        class_table("post_selection", &t.class_names, &t.post_selection),
        class_table("conditional", &t.class_names, &t.conditional),
        success,
    ];
    Ok(r)
}

fn walk(s: &Settings, file: &FileConfig, a: WalkArgs) -> Result<Report, CliError> {
    let steps = a.steps.or(file.steps).unwrap_or(1000);
    if steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    let scenario_name = a.scenario.or(file.scenario.clone()).unwrap_or_else(|| "clustered".into());
    let mut scenario = match scenario_name.as_str() {
        "clustered" => Scenario::clustered(),
        "interleaved" => Scenario::interleaved(),
        other => return Err(CliError::Usage(format!("invalid value `{other}` for --scenario"))),
    };
    let graph = a.graph.or(file.graph.clone()).unwrap_or_else(|| "cycle".into());
    scenario.graph = parse::<GraphKind>("graph", &graph)?;
    let ds = dataset(s)?;
    let start = a.start.or(file.start.clone()).unwrap_or_else(|| {
        if scenario_name == "clustered" {
            format!("mid-{}", ds.class_names()[0])
        } else {
            "node:0".into()
        }
    });
    scenario.start = if let Some(name) = start.strip_prefix("mid-") {
        StartRule::MiddleOfClass(class_id(&ds, name)?)
    } else if let Some(n) = start.strip_prefix("node:") {
        StartRule::Node(parse("start", n)?)
    } else {
        return Err(CliError::Usage(format!("invalid value `{start}` for --start")));
    };
    let engine_name = a.engine.or(file.engine.clone()).unwrap_or_else(|| "blocks".into());
    let engine = match engine_name.as_str() {
        "blocks" => WalkEngine::Blocks,
        "marginal" => WalkEngine::Marginal,
        other => return Err(CliError::Usage(format!("invalid value `{other}` for --engine"))),
    };
    let pre = ds.preprocess(s.preprocess)?;
    let curves = class_curves(&pre, scenario, steps, engine, Execution::default())?;
    let mut limits = Table::new("limits", "class", vec!["limit".into()]);
    for (n, v) in curves.class_names.iter().zip(&curves.limits) {
        limits.push_row(n.clone(), vec![*v]);
    }
    let mut r = base_report(s, "walk")
        .with_meta("steps", steps)
        .with_meta("scenario", scenario_name)
        .with_meta("graph", graph)
        .with_meta("start", start)
        .with_meta("engine", engine_name);
    r.tables = vec![curves.to_table("curve"), limits];
    Ok(r)
}

fn comparison_table(name: &str, c: &SchemeComparison) -> Table {
    let mut t = Table::new(
        name,
        "class",
        vec!["one_step".into(), "two_step".into(), "win_fraction".into()],
    );
    for k in 0..2 {
        t.push_row(
            c.class_names[k].clone(),
            vec![c.one_step[k], c.two_step[k], c.win_fraction[k]],
        );
    }
    t
}

fn recycle(s: &Settings, file: &FileConfig, a: RecycleArgs) -> Result<Report, CliError> {
    let graph = a.graph.or(file.graph.clone()).unwrap_or_else(|| "complete".into());
    let neighborhood = match graph.as_str() {
        "complete" => Neighborhood::Complete,
        "bipartite" => Neighborhood::Bipartite,
        other => return Err(CliError::Usage(format!("invalid value `{other}` for --graph"))),
    };
    let ds = dataset(s)?;
    let mut r = base_report(s, "recycle").with_meta("graph", graph);
    if a.all_pairs {
        let pairs = scan_pairs(&ds, s.preprocess, neighborhood, Execution::default())?;
        r = r.with_meta("classes", "all-pairs");
        r.tables = pairs
            .iter()
            .map(|c| comparison_table(&format!("recycling_{}_{}", c.class_names[0], c.class_names[1]), c))
            .collect();
        return Ok(r);
    }
    let classes = a
        .classes
        .or(file.classes.clone())
        .unwrap_or_else(|| ds.class_names().iter().take(2).cloned().collect());
    if classes.len() != 2 {
        return Err(CliError::Usage(format!(
            "--classes needs exactly two classes, got {}",
            classes.len()
        )));
    }
    let pair = (class_id(&ds, &classes[0])?, class_id(&ds, &classes[1])?);
    let c = scheme_comparison(&ds, pair, s.preprocess, neighborhood, Execution::default())?;
    r = r.with_meta("classes", classes.join(","));
    r.tables = vec![comparison_table("recycling", &c)];
    Ok(r)
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> FeatureVector {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-4 {
            return FeatureVector::new(v)
                .and_then(|x| x.normalized())
                .expect("nonzero finite vector");
        }
    }
}

fn prep_check(s: &Settings, file: &FileConfig, a: PrepCheckArgs) -> Result<(), CliError> {
    let features = a.features.or(file.features).unwrap_or(2);
    let trials = a.trials.or(file.trials).unwrap_or(1000);
    if features != 2 && features != 4 {
        return Err(CliError::Usage(format!("--features must be 2 or 4, got {features}")));
    }
    let circuit = match (features, a.template) {
        (2, _) => "template",
        (_, true) => "template",
        _ => "general",
    };
    let mut rng = stream_rng(s.seed, 0);
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    let mut census = None;
    for _ in 0..trials {
        let t = random_unit(&mut rng, features);
        let x = random_unit(&mut rng, features);
        let target = interfered_state(&t, &x)?;
        let built = match (features, a.template) {
            (2, _) => Ok(prep_circuit_2f(t.angle()?, x.angle()?)),
            (_, true) => prep_circuit_4f(&t, &x),
            _ => prep_circuit_4f_general(&t, &x),
        };
        let residual = match built {
            Ok(c) => {
                census.get_or_insert(c.census());
                1.0 - c.fidelity_to(&target)?
            }
            Err(qdbc::Error::Synthesis { fidelity, .. }) => {
                failures += 1;
                1.0 - fidelity
            }
            Err(e) => return Err(e.into()),
        };
        worst = worst.max(residual);
    }
    let mut table = Table::new(
        "prep_check",
        "features",
        vec!["trials".into(), "max_residual".into(), "failures".into()],
    );
    table.push_row(
        features.to_string(),
        vec![trials as f64, worst, failures as f64],
    );
    let mut r = base_report(s, "prep-check")
        .with_meta("features", features)
        .with_meta("trials", trials)
        .with_meta("circuit", circuit);
    if let Some(c) = census {
        r = r.with_meta(
            "census",
            format!("H={} Ry={} CNOT={} X={}", c.hadamards, c.rotations, c.cnots, c.paulis),
        );
    }
    r.tables = vec![table];
    emit(s, &r)?;
    if worst < PREP_TOL && failures == 0 {
        eprintln!("max residual < 1e-10 ({worst:.2e} over {trials} pairs)");
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "max residual {worst:.3e} over {trials} pairs, {failures} unreachable by the {circuit} circuit"
        )))
    }
}

fn classify(s: &Settings, file: &FileConfig, a: ClassifyArgs) -> Result<Report, CliError> {
    let method = a.method.or(file.method.clone()).unwrap_or_else(|| "sample".into());
    let ds = dataset(s)?;
    let raw = FeatureVector::new(a.vector.clone())?;
    let pre = Preprocessor::fit(ds.features(), s.preprocess)?;
    let test = pre.transform(&raw)?;
    let train = ds.preprocess(s.preprocess)?.training_set()?;
    let names = ds.class_names();
    let exact = class_distribution(&test, &train)?;
    let mut dist = Table::new("distribution", "class", vec!["probability".into()]);
    for (n, p) in names.iter().zip(&exact.conditional) {
        dist.push_row(n.clone(), vec![*p]);
    }
    let vector: Vec<String> = a.vector.iter().map(|v| v.to_string()).collect();
    let mut r = base_report(s, "classify")
        .with_meta("vector", vector.join(","))
        .with_meta("method", &method);
    let label = |l: Option<ClassId>| l.map_or("none".to_string(), |c| names[c].clone());
    match method.as_str() {
        "sample" => {
            let cap = a.max_steps.or(file.max_steps).unwrap_or(1000);
            let t = sample_classify(&test, &train, s.seed, cap)?;
            let mut steps = Table::new(
                "transcript",
                "attempt",
                vec!["sampled_index".into(), "sample_class".into()],
            );
            for (k, &i) in t.sampled_indices.iter().enumerate() {
                steps.push_row((k + 1).to_string(), vec![i as f64, train.labels()[i] as f64]);
            }
            r = r
                .with_meta("max_steps", cap)
                .with_meta("attempts", t.attempts)
                .with_meta("label", label(t.final_label));
            r.tables = vec![steps, dist];
        }
        "recycle" => {
            let cap = a.max_steps.or(file.max_steps).unwrap_or(2);
            let t = recycle_classify(&test, &train, None, s.seed, cap)?;
            let mut steps = Table::new(
                "transcript",
                "step",
                vec!["sampled_index".into(), "outcome".into(), "sample_class".into()],
            );
            for (k, st) in t.steps.iter().enumerate() {
                steps.push_row(
                    (k + 1).to_string(),
                    vec![
                        st.sampled_index as f64,
                        f64::from(st.ancilla_outcome),
                        train.labels()[st.sampled_index] as f64,
                    ],
                );
            }
            r = r
                .with_meta("max_steps", cap)
                .with_meta("label", label(t.label));
            r.tables = vec![steps, dist];
        }
        other => return Err(CliError::Usage(format!("invalid value `{other}` for --method"))),
    }
    Ok(r)
}
