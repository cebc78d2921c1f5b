use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use densekit::asa::{
    asa_vs_density, compute_asa, mean_asa, read_attention_file, Aggregate, AsaConfig, FrequencyWeight, SpectrumMode,
    SubsetAttention,
};
use densekit::corpus::{read_conll_file, write_conll_file, Corpus, RepairPolicy};
use densekit::gsa::{
    correlate_all, fit_knn_surrogate, read_records, record_bounds, run_morris, run_sobol, ExperimentRecord,
    ExternalCommand, ResponseSurface,
};
use densekit::metrics::{
    o_label_proportion, score_spans, Feature, FeatureConfig, FeatureExtractor, FeatureVector, LogBase, NedVariant,
    FEATURE_CSV_HEADER, SCORE_CSV_HEADER,
};
use densekit::resample::{build_density_family, build_stratified_subsets, materialize, Strategy, SubsetSpec};
use densekit::wom::{run_wom, sweep, BackendConfig, MockBehavior, ThresholdMode, WomError, WomMode};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::config::ToolConfig;
use crate::error::CliError;
use crate::svg::{self, Chart, Style};
use crate::Report;

pub(crate) struct Failure {
    pub report: Option<Report>,
    pub error: CliError,
}

impl From<CliError> for Failure {
    fn from(error: CliError) -> Self {
        Failure { report: None, error }
    }
}

pub(crate) fn dispatch(command: &Command, cfg: &mut ToolConfig) -> Result<Report, Failure> {
    match command {
        Command::Metrics(a) => Ok(metrics(a, cfg)?),
        Command::Score(a) => Ok(score(a)?),
        Command::Resample(a) => Ok(resample(a, cfg)?),
        Command::Correlate(a) => Ok(correlate(a, cfg)?),
        Command::Gsa(a) => Ok(gsa(a, cfg)?),
        Command::Asa(a) => Ok(asa(a, cfg)?),
        Command::AsaDensity(a) => Ok(asa_density(a, cfg)?),
        Command::Wom(a) => wom(a, cfg),
    }
}

fn input_path(arg: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    arg.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Usage(format!("no {what} given on the command line or in the config")))
}

fn policy(r: RepairArg) -> RepairPolicy {
    match r {
        RepairArg::Strict => RepairPolicy::Strict,
        RepairArg::Coerce => RepairPolicy::Coerce,
    }
}

fn feature_config(flags: &FeatureFlags, cfg: &ToolConfig) -> FeatureConfig {
    let mut fc = cfg.feature.clone();
    if let Some(l) = flags.lambda {
        fc.lambda = l;
    }
    if let Some(v) = flags.ned_variant {
        fc.ned_variant = match v {
            NedVariantArg::Eq1 => NedVariant::Eq1,
            NedVariantArg::RatioLog => NedVariant::RatioLog,
        };
    }
    if let Some(b) = flags.log_base {
        fc.log_base = match b {
            LogBaseArg::Natural => LogBase::Natural,
            LogBaseArg::Base2 => LogBase::Base2,
        };
    }
    if let Some(v) = &flags.vocab {
        fc.wordpiece_vocab_path = Some(v.to_string_lossy().into_owned());
    }
    if flags.ele_case_sensitive {
        fc.ele_case_sensitive = true;
    }
    fc
}

fn load_corpus(path: &Path, repair: RepairArg) -> Result<(Corpus, usize), CliError> {
    let parsed = read_conll_file(path, policy(repair)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((parsed.corpus, parsed.repairs))
}

fn csv_table(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn metrics(a: &MetricsArgs, cfg: &ToolConfig) -> Result<Report, CliError> {
    let path = input_path(&a.corpus, &cfg.paths.corpus, "corpus")?;
    let (corpus, repairs) = load_corpus(&path, a.feature.repair)?;
    let fc = feature_config(&a.feature, cfg);
    let features = FeatureExtractor::new(&fc)?.corpus(&corpus)?;
    let csv = csv_table(
        &format!("corpus,sentences,tokens,{FEATURE_CSV_HEADER}"),
        [format!("{},{},{},{}", path.display(), corpus.len(), corpus.token_count(), features.csv_row())],
    );
    Ok(Report {
        json: json!({
            "command": "metrics",
            "corpus": path,
            "sentences": corpus.len(),
            "tokens": corpus.token_count(),
            "categories": corpus.categories(),
            "repairs": repairs,
            "config": fc,
            "features": features,
        }),
        csv: Some(csv),
    })
}

fn score(a: &ScoreArgs) -> Result<Report, CliError> {
    let (gold, _) = load_corpus(&a.gold, a.repair)?;
    let (pred, _) = load_corpus(&a.predicted, a.repair)?;
    let report = score_spans(&gold, &pred)?;
    Ok(Report {
        json: json!({
            "command": "score",
            "gold": a.gold,
            "predicted": a.predicted,
            "report": report,
            "gold_o_proportion": o_label_proportion(gold.sentences()),
            "predicted_o_proportion": o_label_proportion(pred.sentences()),
        }),
        csv: Some(csv_table(SCORE_CSV_HEADER, [report.csv_row()])),
    })
}

fn resample(a: &ResampleArgs, cfg: &ToolConfig) -> Result<Report, CliError> {
    let path = input_path(&a.corpus, &cfg.paths.corpus, "corpus")?;
    let (corpus, _) = load_corpus(&path, a.feature.repair)?;
    let extractor = FeatureExtractor::new(&feature_config(&a.feature, cfg))?;
    let seed = cfg.seed();
    let manifests = match a.strategy {
        StrategyArg::Density => {
            if a.count.is_some() {
                return Err(CliError::Usage("--count applies to --strategy stratified".into()));
            }
            let rates = a.rates.clone().unwrap_or_else(|| cfg.resample.rates.clone());
            build_density_family(&corpus, &rates, seed, &extractor)?
        }
        StrategyArg::Stratified => {
            let spec = SubsetSpec {
                seed,
                strategy: Strategy::Stratified,
                p: None,
                count: Some(a.count.unwrap_or(cfg.resample.count)),
                rarity_bins: a.rarity_bins.unwrap_or(cfg.resample.rarity_bins),
                rarity_control: cfg.resample.rarity_control && !a.no_rarity_control,
            };
            build_stratified_subsets(&corpus, &spec, &extractor)?
        }
    };
    if let Some(dir) = &a.materialize {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        for m in &manifests {
            let subset = materialize(&corpus, m)?;
            write_conll_file(&subset, dir.join(format!("{}.conll", m.subset_id)))?;
            let manifest = serde_json::to_string_pretty(m).expect("manifest serializes");
            write_file(&dir.join(format!("{}.manifest.json", m.subset_id)), &(manifest + "\n"))?;
        }
    }
    let csv = csv_table(
        &format!("subset_id,sentences,{FEATURE_CSV_HEADER}"),
        manifests
            .iter()
            .map(|m| format!("{},{},{}", m.subset_id, m.sentence_ids.len(), m.features.csv_row())),
    );
    Ok(Report {
        json: json!({
            "command": "resample",
            "corpus": path,
            "strategy": match a.strategy { StrategyArg::Density => "density_family", StrategyArg::Stratified => "stratified" },
            "seed": seed,
            "materialized": a.materialize,
            "subsets": manifests,
        }),
        csv: Some(csv),
    })
}

fn load_records(arg: &Option<PathBuf>, cfg: &ToolConfig) -> Result<(PathBuf, Vec<ExperimentRecord>), CliError> {
    let path = input_path(arg, &cfg.paths.records, "records file")?;
    let records = read_records(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((path, records))
}

fn correlate(a: &CorrelateArgs, cfg: &ToolConfig) -> Result<Report, CliError> {
    let (path, records) = load_records(&a.records, cfg)?;
    let results = correlate_all(&records);
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (feature, result) in &results {
        match result {
            Ok(c) => {
                entries.push(serde_json::to_value(c).expect("correlation serializes"));
                rows.push(format!(
                    "{},{},{},{},{},{}",
                    c.feature, c.n, c.pearson, c.spearman, c.pearson_p, c.spearman_p
                ));
            }
            Err(e) => {
                entries.push(json!({ "feature": feature.name(), "target": "f1", "error": e.to_string() }));
                rows.push(format!("{},{},,,,", feature.name(), records.len()));
            }
        }
    }
    if let Some(dir) = &a.svg {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        for (feature, result) in &results {
            let title = match result {
                Ok(c) => format!("F1 vs {} (Pearson {:.3}, Spearman {:.3})", feature.name(), c.pearson, c.spearman),
                Err(_) => format!("F1 vs {}", feature.name()),
            };
            let points: Vec<_> = records.iter().map(|r| (r.features.get(*feature), r.f1, None)).collect();
            let chart = Chart {
                title: &title,
                x_label: feature.name(),
                y_label: "F1",
            };
            write_file(&dir.join(format!("{}_vs_f1.svg", feature.name())), &svg::render(&chart, &points, Style::Points))?;
        }
    }
    Ok(Report {
        json: json!({
            "command": "correlate",
            "records": path,
            "n": records.len(),
            "target": "f1",
            "correlations": entries,
        }),
        csv: Some(csv_table("feature,n,pearson,spearman,pearson_p,spearman_p", rows)),
    })
}

fn gsa(a: &GsaArgs, cfg: &ToolConfig) -> Result<Report, CliError> {
    let (path, records) = load_records(&a.records, cfg)?;
    let external = match &a.external_command {
        Some(program) => Some(ExternalCommand::new(
            program.clone(),
            a.external_args.clone(),
            Duration::from_secs_f64(a.external_timeout.unwrap_or(300.0)),
        )),
        None => cfg.gsa.external.clone(),
    };
    let k = a.k.unwrap_or(cfg.gsa.knn_k);
    let (surface, kind) = match external {
        Some(cmd) => (ResponseSurface::external(cmd, record_bounds(&records))?, "external_command"),
        None => (fit_knn_surrogate(&records, k)?, "knn_surrogate"),
    };
    let run_m = a.method != GsaMethod::Sobol;
    let run_s = a.method != GsaMethod::Morris;
    if a.svg.is_some() && !run_m {
        return Err(CliError::Usage("--svg draws the Morris chart; it conflicts with --method sobol".into()));
    }
    let mut mc = cfg.gsa.morris.clone();
    mc.trajectories = a.trajectories.unwrap_or(mc.trajectories);
    mc.levels = a.levels.unwrap_or(mc.levels);
    mc.workers = a.workers.unwrap_or(mc.workers);
    let mut sc = cfg.gsa.sobol.clone();
    sc.base_samples = a.base_samples.unwrap_or(sc.base_samples);
    sc.bootstrap = a.bootstrap.unwrap_or(sc.bootstrap);
    sc.workers = a.workers.unwrap_or(sc.workers);

    let morris = if run_m { Some(run_morris(&surface, &mc)?) } else { None };
    let sobol = if run_s { Some(run_sobol(&surface, &sc)?) } else { None };

    if let (Some(file), Some(m)) = (&a.svg, &morris) {
        let points: Vec<_> = m.indices.iter().map(|i| (i.mu_star, i.sigma, Some(i.name.clone()))).collect();
        let chart = Chart {
            title: "Morris screening",
            x_label: "mu*",
            y_label: "sigma",
        };
        write_file(file, &svg::render(&chart, &points, Style::Points))?;
    }

    let rows = Feature::ALL.iter().enumerate().map(|(i, f)| {
        let m = morris.as_ref().map(|m| &m.indices[i]);
        let s = sobol.as_ref().map(|s| &s.indices[i]);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            f.name(),
            opt(m.map(|m| m.mu_star)),
            opt(m.map(|m| m.mu)),
            opt(m.map(|m| m.sigma)),
            opt(s.map(|s| s.s1)),
            opt(s.map(|s| s.s1_ci95[0])),
            opt(s.map(|s| s.s1_ci95[1])),
            opt(s.map(|s| s.st)),
            opt(s.map(|s| s.st_ci95[0])),
            opt(s.map(|s| s.st_ci95[1])),
        )
    });
    let csv = csv_table("feature,mu_star,mu,sigma,s1,s1_lo,s1_hi,st,st_lo,st_hi", rows.collect::<Vec<_>>());
    Ok(Report {
        json: json!({
            "command": "gsa",
            "records": path,
            "n": records.len(),
            "surface": kind,
            "k": if kind == "knn_surrogate" { Some(k) } else { None },
            "seed": cfg.seed(),
            "morris": morris,
            "sobol": sobol,
            "ranking": {
                "morris": morris.as_ref().map(|m| m.ranking()),
                "sobol_s1": sobol.as_ref().map(|s| s.ranking_s1()),
            },
        }),
        csv: Some(csv),
    })
}

fn asa_config(flags: &AsaFlags, cfg: &ToolConfig) -> AsaConfig {
    let mut c = cfg.asa;
    if let Some(m) = flags.mode {
        c.mode = match m {
            ModeArg::RowWise1d => SpectrumMode::RowWise1d,
            ModeArg::Full2d => SpectrumMode::Full2d,
        };
    }
    if let Some(w) = flags.weight {
        c.weight = match w {
            WeightArg::BinIndex => FrequencyWeight::BinIndex,
            WeightArg::NormalizedFrequency => FrequencyWeight::NormalizedFrequency,
        };
    }
    if let Some(g) = flags.aggregate {
        c.aggregate = match g {
            AggregateArg::Mean => Aggregate::MeanOverRowsHeadsLayers,
            AggregateArg::PerLayer => Aggregate::PerLayer,
        };
    }
    c
}

fn asa(a: &AsaArgs, cfg: &ToolConfig) -> Result<Report, CliError> {
    let ac = asa_config(&a.asa, cfg);
    let tensors = read_attention_file(&a.input).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    let per_tensor: Vec<Value> = tensors
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let r = compute_asa(t, &ac);
            json!({
                "index": i,
                "sentence_id": t.meta.sentence_id,
                "layers": t.layers(),
                "heads": t.heads(),
                "seq_len": t.seq_len(),
                "asa": r.asa,
                "per_layer": r.per_layer,
            })
        })
        .collect();
    let rows = per_tensor.iter().map(|v| {
        format!(
            "{},{},{},{}",
            v["index"],
            v["sentence_id"].as_str().unwrap_or_default(),
            v["seq_len"],
            v["asa"]
        )
    });
    let csv = csv_table("index,sentence_id,seq_len,asa", rows.collect::<Vec<_>>());
    Ok(Report {
        json: json!({
            "command": "asa",
            "input": a.input,
            "config": ac,
            "tensors": tensors.len(),
            "mean_asa": mean_asa(&tensors, &ac),
            "per_tensor": per_tensor,
        }),
        csv: Some(csv),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsetEntry {
    subset_id: String,
    attention: PathBuf,
    #[serde(default)]
    corpus: Option<PathBuf>,
    #[serde(default)]
    features: Option<FeatureVector>,
}

fn asa_density(a: &AsaDensityArgs, cfg: &ToolConfig) -> Result<Report, CliError> {
    let ac = asa_config(&a.asa, cfg);
    let raw = fs::read_to_string(&a.subsets).map_err(|e| CliError::Data(format!("{}: {e}", a.subsets.display())))?;
    let entries: Vec<SubsetEntry> =
        serde_json::from_str(&raw).map_err(|e| CliError::Data(format!("{}: {e}", a.subsets.display())))?;
    let base = a.subsets.parent().unwrap_or(Path::new(""));
    let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
    let extractor = FeatureExtractor::new(&feature_config(&a.feature, cfg))?;
    let mut records = Vec::with_capacity(entries.len());
    for e in entries {
        let features = match (&e.corpus, e.features) {
            (Some(c), None) => extractor.corpus(&load_corpus(&resolve(c), a.feature.repair)?.0)?,
            (None, Some(f)) => f,
            _ => {
                return Err(CliError::Data(format!(
                    "subset {}: give exactly one of corpus or features",
                    e.subset_id
                )))
            }
        };
        let path = resolve(&e.attention);
        let tensors = read_attention_file(&path).map_err(|err| CliError::Data(format!("{}: {err}", path.display())))?;
        records.push(SubsetAttention {
            subset_id: e.subset_id,
            features,
            tensors,
        });
    }
    let table = asa_vs_density(&records, &ac)?;
    if let Some(file) = &a.svg {
        let points: Vec<_> = table.rows.iter().map(|r| (r.ned, r.mean_asa, None)).collect();
        let chart = Chart {
            title: "Attention spectrum vs information density",
            x_label: "NED",
            y_label: "mean ASA",
        };
        write_file(file, &svg::render(&chart, &points, Style::Line))?;
    }
    let csv = csv_table(
        "subset_id,ned,mean_asa,tensors",
        table
            .rows
            .iter()
            .map(|r| format!("{},{},{},{}", r.subset_id, r.ned, r.mean_asa, r.tensors)),
    );
    Ok(Report {
        json: json!({ "command": "asa_density", "config": ac, "table": table }),
        csv: Some(csv),
    })
}

/// Parses `start:stop:step` into the inclusive grid.
pub(crate) fn float_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("grid {spec:?} must be start:stop:step with step > 0 and start <= stop"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || !(start <= stop) || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // Round off accumulated representation error, e.g. 0.03 + 3 * 0.01.
    Ok((0..n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

pub(crate) fn int_grid(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("grid {spec:?} must be start:stop:step of positive integers"));
    let parts: Vec<usize> = spec
        .split(':')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if step == 0 || start == 0 || start > stop {
        return Err(bad());
    }
    Ok((start..=stop).step_by(step).collect())
}

fn backend_config(a: &WomArgs, cfg: &ToolConfig) -> Result<BackendConfig, CliError> {
    let usage = |m: &str| Err(CliError::Usage(m.into()));
    let kind = match (a.backend, a.mock) {
        (Some(k), _) => k,
        (None, Some(_)) => BackendArg::Mock,
        (None, None) => {
            if a.endpoint.is_some() || a.cassette.is_some() || a.token_env.is_some() {
                return usage("--endpoint/--cassette/--token-env need --backend http, replay or record");
            }
            return Ok(cfg.wom.backend.clone());
        }
    };
    if kind != BackendArg::Mock && a.mock.is_some() {
        return usage("--mock conflicts with a non-mock --backend");
    }
    let timeout_secs = a.timeout.unwrap_or(30);
    Ok(match kind {
        BackendArg::Mock => BackendConfig::Mock {
            behavior: match a.mock {
                Some(MockArg::Identity) => MockBehavior::Identity,
                _ => MockBehavior::Paraphrase,
            },
        },
        BackendArg::Http => BackendConfig::Http {
            endpoint: a.endpoint.clone().ok_or_else(|| CliError::Usage("--backend http needs --endpoint".into()))?,
            token_env: a.token_env.clone(),
            timeout_secs,
        },
        BackendArg::Replay => {
            if a.endpoint.is_some() {
                return usage("--endpoint conflicts with --backend replay");
            }
            BackendConfig::Replay {
                cassette: a.cassette.clone().ok_or_else(|| CliError::Usage("--backend replay needs --cassette".into()))?,
            }
        }
        BackendArg::Record => BackendConfig::Record {
            cassette: a.cassette.clone().ok_or_else(|| CliError::Usage("--backend record needs --cassette".into()))?,
            endpoint: a.endpoint.clone().ok_or_else(|| CliError::Usage("--backend record needs --endpoint".into()))?,
            token_env: a.token_env.clone(),
            timeout_secs,
        },
    })
}

fn wom(a: &WomArgs, cfg: &ToolConfig) -> Result<Report, Failure> {
    let path = input_path(&a.corpus, &cfg.paths.corpus, "corpus")?;
    let (corpus, _) = load_corpus(&path, a.feature.repair)?;
    let fc = feature_config(&a.feature, cfg);
    let mut wc = cfg.wom.clone();
    wc.window_size = a.window_size.unwrap_or(wc.window_size);
    if let Some(t) = a.threshold {
        wc.threshold = t;
        wc.threshold_mode = ThresholdMode::Fixed;
    }
    if a.adaptive {
        wc.threshold_mode = ThresholdMode::Adaptive;
    }
    wc.adaptive_fraction = a.adaptive_fraction.unwrap_or(wc.adaptive_fraction);
    if let Some(m) = a.mode {
        wc.mode = match m {
            WomModeArg::Wom => WomMode::Wom,
            WomModeArg::Ga => WomMode::GlobalAugment,
            WomModeArg::Off => WomMode::Off,
        };
    }
    wc.backend = backend_config(a, cfg)?;
    if let Some(p) = &a.pivot {
        wc.pivot_language = p.clone();
    }
    if let Some(s) = &a.source_lang {
        wc.source_language = s.clone();
    }
    wc.in_flight = a.in_flight.unwrap_or(wc.in_flight);
    wc.retries = a.retries.unwrap_or(wc.retries);
    wc.backoff_ms = a.backoff_ms.unwrap_or(wc.backoff_ms);
    wc.failure_limit = a.failure_limit.unwrap_or(wc.failure_limit);
    wc.validate().map_err(CliError::from)?;
    let backend = wc.build_backend().map_err(CliError::from)?;

    if a.sweep_t.is_some() || a.sweep_w.is_some() {
        let ts = match &a.sweep_t {
            Some(s) => float_grid(s)?,
            None => vec![wc.threshold],
        };
        let ws = match &a.sweep_w {
            Some(s) => int_grid(s)?,
            None => vec![wc.window_size],
        };
        let grid: Vec<(usize, f64)> = ws.iter().flat_map(|&w| ts.iter().map(move |&t| (w, t))).collect();
        let rows = sweep(&corpus, &wc, &fc, backend.as_ref(), &grid).map_err(CliError::from)?;
        backend.finish().map_err(|e| CliError::Backend(e.to_string()))?;
        let csv = csv_table(
            "window_size,threshold,windows,barren_windows,candidates,accepted,rejected,sentences_out",
            rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{},{},{}",
                    r.window_size, r.threshold, r.windows, r.barren_windows, r.candidates, r.accepted, r.rejected, r.sentences_out
                )
            }),
        );
        return Ok(Report {
            json: json!({
                "command": "wom_sweep",
                "corpus": path,
                "mode": wc.mode,
                "seed": wc.seed,
                "rows": rows,
            }),
            csv: Some(csv),
        });
    }

    match run_wom(&corpus, &wc, &fc, backend.as_ref()) {
        Ok((out, report)) => {
            if let Some(dest) = &a.out_corpus {
                write_conll_file(&out, dest).map_err(CliError::from)?;
            }
            backend.finish().map_err(|e| CliError::Backend(e.to_string()))?;
            Ok(Report {
                json: json!({
                    "command": "wom",
                    "corpus": path,
                    "output_corpus": a.out_corpus,
                    "seed": wc.seed,
                    "report": report,
                }),
                csv: None,
            })
        }
        Err(WomError::Aborted { rate, limit, report }) => {
            let _ = backend.finish();
            let message = format!("aborted: backend failure rate {rate:.2} exceeds limit {limit:.2}");
            Err(Failure {
                report: Some(Report {
                    json: json!({
                        "command": "wom",
                        "corpus": path,
                        "output_corpus": Value::Null,
                        "seed": wc.seed,
                        "report": report,
                    }),
                    csv: None,
                }),
                error: CliError::Backend(message),
            })
        }
        Err(e) => Err(CliError::from(e).into()),
    }
}
