use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use textcause::causal::{
    adjust_fdr, ate_by_category, effects_svg, estimate_acie, estimate_amce, CausalEstimate, Weighting, CSV_HEADER,
};
use textcause::corpus::{
    encode, ingest, standardize_dtm, tokenize, ColumnRoles, Corpus, InputFormat, StemmerKind, StopwordList, Standardization,
    TextRole, TokenizerConfig,
};
use textcause::lab::{
    enumerate_aisv, fit_reference, overfit_demo, run_stability, DesignKind, OverfitConfig, PotentialOutcomeTable,
    StabilityConfig, StartMode,
};
use textcause::matching::MatchMethod;
use textcause::sibp::{fit_sibp, infer_treatments, SibpConfig, SibpModel};
use textcause::splitter::{self, lock_path, read_json, write_json_atomic, LockState, SplitAssignment, TestLock};
use textcause::stm::{apply_to_corpus, fit, Design, PriorMode, StmConfig, StmModel};
use textcause::synth::{immigration_corpus, planted_features, simulate_stm, StmSimSpec};
use textcause::validate::{representative_docs, top_terms, top_words, LabelRegistry};
use textcause::{Error, Result};

use crate::args::*;
use crate::config;
use crate::output::{sha256_hex, Run};

/// A frozen codebook on disk.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Artifact {
    Stm {
        model: StmModel,
    },
    Sibp {
        model: SibpModel,
        standardization: Standardization,
        vocabulary: Vec<String>,
        tokenizer_config: TokenizerConfig,
        doc_ids: Vec<String>,
    },
}

impl Artifact {
    fn kind(&self) -> &'static str {
        match self {
            Artifact::Stm { .. } => "stm",
            Artifact::Sibp { .. } => "sibp",
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    let name = command.name();
    match command {
        Command::Ingest(a) => cmd_ingest(&a, start(name, &a.out, &a)?),
        Command::Split(a) => cmd_split(&a, start(name, &a.out, &a)?),
        Command::FitStm(a) => cmd_fit_stm(&a, start(name, &a.out, &a)?),
        Command::FitSibp(a) => cmd_fit_sibp(&a, start(name, &a.out, &a)?),
        Command::ApplyG(a) => cmd_estimate(&a, Some("stm"), start(name, &a.out, &a)?),
        Command::InferTreatments(a) => cmd_estimate(&a, Some("sibp"), start(name, &a.out, &a)?),
        Command::Estimate(a) => cmd_estimate(&a, None, start(name, &a.out, &a)?),
        Command::Aisv(a) => cmd_aisv(&a, start(name, &a.out, &a)?),
        Command::Overfit(a) => cmd_overfit(&a, start(name, &a.out, &a)?),
        Command::Stability(a) => cmd_stability(&a, start(name, &a.out, &a)?),
        Command::Synth(a) => cmd_synth(&a, start(name, &a.out, &a)?),
        Command::Describe(a) => cmd_describe(&a),
    }
}

fn start(name: &'static str, out: &Path, args: &impl Serialize) -> Result<Run> {
    Run::new(name, out, config::render(name, args)?)
}

fn finish(run: Run) -> Result<()> {
    let out = run.commit()?;
    println!("wrote {}", out.display());
    Ok(())
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => ingest(path, InputFormat::Jsonl, &ColumnRoles::default()),
        _ => read_json(path),
    }
}

fn tokenizer_config(a: &TokenizerArgs) -> Result<TokenizerConfig> {
    let stemmer = match a.stemmer.as_str() {
        "snowball" | "porter" => StemmerKind::SnowballEnglish,
        "none" => StemmerKind::None,
        s => return Err(Error::invalid(format!("unknown stemmer '{s}' (snowball | none)"))),
    };
    let stopwords = match a.stopwords.as_str() {
        "english" => StopwordList::English,
        "none" => StopwordList::None,
        s => return Err(Error::invalid(format!("unknown stopword list '{s}' (english | none)"))),
    };
    Ok(TokenizerConfig {
        stemmer,
        stopwords,
        min_df: a.min_df,
        max_df: a.max_df,
        ..TokenizerConfig::default()
    })
}

fn labels(run: &mut Run, path: Option<&Path>) -> Result<LabelRegistry> {
    match path {
        Some(p) => {
            run.input(p)?;
            LabelRegistry::load(p)
        }
        None => Ok(LabelRegistry::new()),
    }
}

fn label_template(k: usize, prefix: &str) -> String {
    let mut reg = LabelRegistry::new();
    for i in 0..k {
        reg.set(i, format!("{prefix} {}", i + 1));
    }
    format!("# one label per {}; edit and pass with --labels\n{}", prefix.to_lowercase(), reg.to_text())
}

fn matrix_rows(ids: &[String], m: &DMatrix<f64>) -> Vec<Vec<String>> {
    ids.iter()
        .enumerate()
        .map(|(i, id)| std::iter::once(id.clone()).chain(m.row(i).iter().map(|v| v.to_string())).collect())
        .collect()
}

fn numbered(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}_{i}")).collect()
}

fn cmd_ingest(a: &IngestArgs, mut run: Run) -> Result<()> {
    let format: InputFormat = match &a.format {
        Some(f) => f.parse()?,
        None => match a.input.extension().and_then(|e| e.to_str()) {
            Some("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        },
    };
    let default_field = |flag: &Option<String>, name: &str| match (flag.as_deref(), format) {
        (Some("none"), _) => None,
        (Some(c), _) => Some(c.to_string()),
        (None, InputFormat::Jsonl) => Some(name.to_string()),
        (None, InputFormat::Csv) => None,
    };
    let text_role = match a.text_role.as_deref() {
        None => None,
        Some("outcome") => Some(TextRole::Outcome),
        Some("treatment") => Some(TextRole::Treatment),
        Some(r) => return Err(Error::invalid(format!("unknown text role '{r}' (outcome | treatment)"))),
    };
    let roles = ColumnRoles {
        id: a.id_col.clone(),
        text: a.text_col.clone(),
        covariates: a.covariates.clone(),
        treatment: default_field(&a.treatment_col, "treatment"),
        outcome: default_field(&a.outcome_col, "outcome"),
        text_role,
    };
    run.input(&a.input)?;
    let corpus = ingest(&a.input, format, &roles)?;
    let with = |f: &dyn Fn(&textcause::corpus::Document) -> bool| corpus.documents.iter().filter(|d| f(d)).count();
    run.summary = json!({
        "documents": corpus.len(),
        "with_treatment": with(&|d| d.treatment.is_some()),
        "with_outcome": with(&|d| d.outcome.is_some()),
    });
    run.write_json("corpus.json", &corpus)?;
    finish(run)
}

fn cmd_split(a: &SplitArgs, mut run: Run) -> Result<()> {
    run.input(&a.corpus)?;
    let corpus = load_corpus(&a.corpus)?;
    let (assignment, lock) = splitter::split(&corpus, a.proportion, a.strata.as_deref(), a.seed)?;
    run.summary = json!({"train": assignment.train_ids.len(), "test": assignment.test_ids.len()});
    run.write_json("split.json", &assignment)?;
    run.write_json("split.lock.json", &lock)?;
    finish(run)
}

/// Training documents of the split plus any auxiliary discovery documents.
fn training_corpus(run: &mut Run, corpus_path: &Path, split_path: &Path, aux: Option<&Path>) -> Result<Corpus> {
    run.input(corpus_path)?;
    run.input(split_path)?;
    let corpus = load_corpus(corpus_path)?;
    let assignment: SplitAssignment = read_json(split_path)?;
    let mut docs = corpus.subset(&assignment.train_positions(&corpus)?).documents;
    if let Some(p) = aux {
        run.input(p)?;
        let extra = load_corpus(p)?;
        run.warn(format!(
            "{} auxiliary discovery documents added; their similarity to the experimental sample is not checked",
            extra.len()
        ));
        docs.extend(extra.documents);
    }
    Corpus::new(docs, corpus.text_role)
}

fn cmd_fit_stm(a: &FitStmArgs, mut run: Run) -> Result<()> {
    let train = training_corpus(&mut run, &a.corpus, &a.split, a.aux_train.as_deref())?;
    let train = tokenize(&train, &tokenizer_config(&a.tokenizer)?)?;
    if !train.empty_documents.is_empty() {
        run.warn(format!("{} training documents have no tokens", train.empty_documents.len()));
    }
    let cfg = StmConfig {
        k: a.k,
        prevalence: a.prevalence.clone(),
        max_em_iter: a.max_em_iter,
        tolerance: a.tolerance,
        seed: a.seed,
        ..StmConfig::default()
    };
    let model = fit(&train, &cfg)?;
    if !model.converged {
        run.warn(format!("EM stopped after {} iterations without meeting the tolerance", model.iterations));
    }
    let k = model.k();
    let topics = (0..k)
        .map(|t| Ok(vec![(t + 1).to_string(), format!("Topic {}", t + 1), top_words(&model, t, a.top_words)?.join(" ")]))
        .collect::<Result<Vec<_>>>()?;
    run.write_csv("topics.csv", &["topic", "label", "top_words"], topics)?;
    let mut reps = Vec::new();
    for t in 0..k {
        for (r, id) in representative_docs(&model, t, 5)?.ids.into_iter().enumerate() {
            reps.push(vec![(t + 1).to_string(), (r + 1).to_string(), id]);
        }
    }
    run.write_csv("representative.csv", &["topic", "rank", "id"], reps)?;
    let mut header = vec!["id".to_string()];
    header.extend(numbered("theta", k));
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    run.write_csv("theta_train.csv", &h, matrix_rows(&model.doc_ids, &model.theta()))?;
    run.write_csv(
        "bound.csv",
        &["iteration", "bound"],
        model.bound_trace.iter().enumerate().map(|(i, b)| vec![(i + 1).to_string(), b.to_string()]),
    )?;
    run.write_text("labels.txt", &label_template(k, "Topic"))?;
    run.summary = json!({
        "documents": model.doc_ids.len(),
        "vocabulary": model.n_terms(),
        "k": k,
        "iterations": model.iterations,
        "converged": model.converged,
        "step_halvings": model.step_halvings,
        "final_bound": model.bound_trace.last(),
    });
    run.write_json("model.json", &Artifact::Stm { model })?;
    finish(run)
}

fn cmd_fit_sibp(a: &FitSibpArgs, mut run: Run) -> Result<()> {
    let train = training_corpus(&mut run, &a.corpus, &a.split, a.aux_train.as_deref())?;
    let train = tokenize(&train, &tokenizer_config(&a.tokenizer)?)?;
    let y = train.outcomes()?;
    let std = standardize_dtm(&train.dtm);
    if !std.standardization.zero_variance.is_empty() {
        run.warn(format!("{} terms have zero variance and are ignored", std.standardization.zero_variance.len()));
    }
    let cfg = SibpConfig {
        alpha: a.alpha,
        k_max: a.k_max,
        sigma_n2: a.sigma_n2,
        sigma_a2: a.sigma_a2,
        sigma_beta2: a.sigma_beta2,
        restarts: a.restarts,
        max_iter: a.max_iter,
        seed: a.seed,
        ..SibpConfig::default()
    };
    let model = fit_sibp(&std.matrix, &y, &cfg)?;
    if !model.converged {
        run.warn("best restart stopped before meeting the tolerance");
    }
    let k = model.k();
    let features = (0..k)
        .map(|f| {
            Ok(vec![
                (f + 1).to_string(),
                format!("Feature {}", f + 1),
                model.pi[f].to_string(),
                model.beta_mean[f].to_string(),
                top_terms(&model.a_mean, &train.vocabulary, f, a.top_words)?.join(" "),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    run.write_csv("features.csv", &["feature", "label", "pi", "outcome_coef", "top_words"], features)?;
    let ids: Vec<String> = train.documents.iter().map(|d| d.id.clone()).collect();
    let mut header = vec!["id".to_string()];
    header.extend(numbered("prob", k));
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    run.write_csv("features_train.csv", &h, matrix_rows(&ids, &model.nu))?;
    run.write_csv(
        "bound.csv",
        &["iteration", "bound"],
        model.bound_trace.iter().enumerate().map(|(i, b)| vec![(i + 1).to_string(), b.to_string()]),
    )?;
    run.write_text("labels.txt", &label_template(k, "Feature"))?;
    run.summary = json!({
        "documents": ids.len(),
        "vocabulary": train.vocabulary.len(),
        "k_max": k,
        "pi": model.pi,
        "outcome_coef": model.beta_mean,
        "best_restart": model.best_restart + 1,
        "converged": model.converged,
    });
    let artifact = Artifact::Sibp {
        model,
        standardization: std.standardization,
        vocabulary: train.vocabulary.clone(),
        tokenizer_config: train.tokenizer_config.clone().expect("tokenized"),
        doc_ids: ids,
    };
    run.write_json("model.json", &artifact)?;
    finish(run)
}

/// Applies a frozen codebook and estimates effects as one transaction: the lock is
/// checked first, every output is staged, and only then is the lock consumed on disk.
fn cmd_estimate(a: &EstimateArgs, expected: Option<&str>, mut run: Run) -> Result<()> {
    run.input(&a.model)?;
    let artifact: Artifact = read_json(&a.model)?;
    if let Some(kind) = expected {
        if artifact.kind() != kind {
            return Err(Error::invalid(format!(
                "{} needs a {kind} model but {} holds a {} model",
                if kind == "stm" { "apply-g" } else { "infer-treatments" },
                a.model.display(),
                artifact.kind()
            )));
        }
    }
    run.input(&a.corpus)?;
    run.input(&a.split)?;
    let lock_file = lock_path(&a.split);
    run.input(&lock_file)?;
    let corpus = load_corpus(&a.corpus)?;
    let (assignment, lock): (SplitAssignment, TestLock) = splitter::load(&a.split)?;
    let registry = labels(&mut run, a.labels.as_deref())?;

    let (positions, next_lock, state) = match a.on.as_str() {
        "test" => {
            let digest = assignment.digest_for(&corpus)?;
            let fingerprint = sha256_hex(run.config().as_bytes());
            let (next, state) = lock.consume(&fingerprint, &digest, a.i_know_this_invalidates_inference)?;
            (assignment.test_positions(&corpus)?, Some(next), state)
        }
        "train" => (assignment.train_positions(&corpus)?, None, LockState::NotApplicable),
        s => return Err(Error::invalid(format!("--on must be test or train, got '{s}'"))),
    };
    let sub = corpus.subset(&positions);
    let ids: Vec<String> = sub.documents.iter().map(|d| d.id.clone()).collect();

    let (mut estimates, names, what) = match &artifact {
        Artifact::Stm { model } => {
            let mode: PriorMode = a.prior_mode.parse()?;
            let applied = apply_to_corpus(model, &sub, mode)?;
            if !applied.empty_documents.is_empty() {
                run.warn(format!(
                    "{} documents have no in-vocabulary tokens; their proportions come from the prior",
                    applied.empty_documents.len()
                ));
            }
            let mut header = vec!["id".to_string()];
            header.extend(numbered("theta", model.k()));
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            run.write_csv("theta.csv", &h, matrix_rows(&ids, &applied.theta))?;
            let t = sub.treatments()?;
            let est = ate_by_category(&applied.theta, &t, a.bootstrap, a.seed)?;
            let names = (0..model.k()).map(|k| registry.label(k, "Topic")).collect();
            (est, names, "topic proportions")
        }
        Artifact::Sibp {
            model,
            standardization,
            vocabulary,
            tokenizer_config,
            ..
        } => {
            let m: Weighting = a.weighting.parse()?;
            let encoded = encode(&sub, tokenizer_config, vocabulary)?;
            let x = standardization.apply_dtm(&encoded.dtm)?;
            let tv = infer_treatments(model, &x, a.threshold)?;
            let k = model.k();
            let mut header = vec!["id".to_string()];
            header.extend(numbered("z", k));
            header.extend(numbered("prob", k));
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = ids.iter().zip(&tv).map(|(id, t)| {
                std::iter::once(id.clone())
                    .chain(t.z.iter().map(|z| z.to_string()))
                    .chain(t.probs.iter().map(|p| p.to_string()))
                    .collect()
            });
            run.write_csv("treatments.csv", &h, rows)?;
            let z = DMatrix::from_fn(tv.len(), k, |i, j| tv[i].z[j] as f64);
            let y = sub.outcomes()?;
            let mut est = Vec::new();
            let mut names = Vec::new();
            for f in 0..k {
                match estimate_amce(&y, &z, f, m, a.bootstrap, a.seed) {
                    Ok(e) => {
                        est.push(e);
                        names.push(registry.label(f, "Feature"));
                    }
                    Err(e) => run.warn(format!("AMCE of feature {} not estimated: {e}", f + 1)),
                }
            }
            if a.interactions {
                for f in 0..k {
                    for g in f + 1..k {
                        match estimate_acie(&y, &z, f, g, m, a.bootstrap, a.seed) {
                            Ok(e) => {
                                est.push(e);
                                names.push(format!("{} x {}", registry.label(f, "Feature"), registry.label(g, "Feature")));
                            }
                            Err(e) => run.warn(format!("ACIE of features {} and {} not estimated: {e}", f + 1, g + 1)),
                        }
                    }
                }
            }
            (est, names, "the outcome")
        }
    };
    if estimates.is_empty() {
        return Err(Error::invalid("no effect could be estimated on these documents"));
    }
    estimates = estimates.into_iter().map(|e| e.with_lock(state)).collect();
    if a.fdr {
        adjust_fdr(&mut estimates);
    }
    for (e, name) in estimates.iter().zip(&names) {
        for w in &e.warnings {
            run.warn(format!("{name}: {w}"));
        }
    }
    if state == LockState::Invalidated {
        run.warn("test set reused under override: these estimates are not valid inference");
    }
    write_effects(&mut run, &estimates, &names, what, &a.on, state)?;
    run.lock_state = state;
    run.summary = json!({
        "documents": ids.len(),
        "on": a.on,
        "estimates": estimates.len(),
        "bootstrap": a.bootstrap,
    });
    if let Some(next) = next_lock {
        write_json_atomic(&lock_file, &next)?;
    }
    finish(run)
}

fn write_effects(run: &mut Run, est: &[CausalEstimate], names: &[String], what: &str, on: &str, state: LockState) -> Result<()> {
    let rows = est.iter().zip(names).map(|(e, name)| {
        vec![
            e.estimand.kind().to_string(),
            e.estimand.index_label(),
            name.clone(),
            e.point.to_string(),
            e.se.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            e.b.to_string(),
            e.lock_state.to_string(),
            e.p_value.to_string(),
            e.q_value.map(|q| q.to_string()).unwrap_or_default(),
        ]
    });
    run.write_csv("effects.csv", &CSV_HEADER, rows)?;
    let mut title = format!("Effects on {what} ({on} set, 95% CI)");
    if state == LockState::Invalidated {
        title.push_str(" - INVALIDATED: test set reused");
    }
    run.write_text("effects.svg", &effects_svg(est, names, &title))?;
    #[derive(Serialize)]
    struct Labeled<'a> {
        label: &'a str,
        #[serde(flatten)]
        estimate: &'a CausalEstimate,
    }
    let labeled: Vec<Labeled> = est.iter().zip(names).map(|(e, l)| Labeled { label: l, estimate: e }).collect();
    run.write_json("estimates.json", &labeled)
}

fn cmd_aisv(a: &AisvArgs, mut run: Run) -> Result<()> {
    let table = match &a.table {
        None => PotentialOutcomeTable::stylized(),
        Some(p) => {
            run.input(p)?;
            let mut rdr = csv::Reader::from_path(p)?;
            let mut rows = Vec::new();
            for (i, r) in rdr.records().enumerate() {
                let r = r?;
                if r.len() != 3 {
                    return Err(Error::Malformed {
                        line: i + 2,
                        message: "expected unit, under_treatment, under_control".into(),
                    });
                }
                rows.push((r[0].to_string(), r[1].to_string(), r[2].to_string()));
            }
            let refs: Vec<(&str, &str, &str)> = rows.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect();
            PotentialOutcomeTable::binary(&refs)
        }
    };
    let design: DesignKind = a.design.parse()?;
    let report = enumerate_aisv(&table, design)?;
    let assignment = |t: &[u8]| t.iter().map(|x| x.to_string()).collect::<String>();
    let rows = report.randomizations.iter().zip(&report.discoveries).enumerate().map(|(r, (t, d))| {
        vec![(r + 1).to_string(), assignment(t), d.categories.join(" | ")]
    });
    run.write_csv("randomizations.csv", &["randomization", "assignment", "categories"], rows)?;
    let wit = report.witnesses.iter().map(|w| {
        vec![
            table.units[w.unit].clone(),
            assignment(&report.randomizations[w.a]),
            assignment(&report.randomizations[w.b]),
        ]
    });
    run.write_csv("witnesses.csv", &["unit", "assignment_a", "assignment_b"], wit)?;
    println!(
        "{} randomizations, {} distinct category sets, unstable: {}",
        report.randomizations.len(),
        report.distinct_category_sets.len(),
        report.unstable
    );
    run.summary = json!({
        "randomizations": report.randomizations.len(),
        "distinct_category_sets": report.distinct_category_sets.len(),
        "unstable": report.unstable,
        "witnesses": report.witnesses.len(),
    });
    run.write_json("aisv.json", &json!({"table": table, "report": report}))?;
    finish(run)
}

fn cmd_overfit(a: &OverfitArgs, mut run: Run) -> Result<()> {
    let cfg = OverfitConfig {
        n_units: a.n_units,
        n_noise_gs: a.n_noise_gs,
        replications: a.replications,
        alpha: a.alpha,
        proportion: a.proportion,
        seed: a.seed,
    };
    let r = overfit_demo(&cfg)?;
    println!(
        "rejection rate at alpha {}: same sample {:.3} (MC se {:.3}), split sample {:.3} (MC se {:.3})",
        a.alpha, r.same_sample_rate, r.same_sample_mc_se, r.split_sample_rate, r.split_sample_mc_se
    );
    run.write_csv(
        "overfit.csv",
        &["branch", "rejection_rate", "mc_se"],
        [
            vec!["same_sample".into(), r.same_sample_rate.to_string(), r.same_sample_mc_se.to_string()],
            vec!["split_sample".into(), r.split_sample_rate.to_string(), r.split_sample_mc_se.to_string()],
        ],
    )?;
    run.summary = json!({"same_sample_rate": r.same_sample_rate, "split_sample_rate": r.split_sample_rate});
    run.write_json("overfit.json", &r)?;
    finish(run)
}

fn cmd_stability(a: &StabilityArgs, mut run: Run) -> Result<()> {
    let (dtm, design) = match &a.corpus {
        Some(p) => {
            run.input(p)?;
            let c = tokenize(&load_corpus(p)?, &tokenizer_config(&a.tokenizer)?)?;
            let design = Design::from_corpus(&c, std::slice::from_ref(&a.covariate))?;
            (c.dtm, design)
        }
        None => {
            let mut spec = StmSimSpec::new(a.k, a.synthetic_vocab, a.synthetic_docs, 0.5);
            spec.mean_doc_len = 50.0;
            let sim = simulate_stm(&spec, &a.covariate, a.seed)?;
            (sim.dtm, sim.design)
        }
    };
    let stm = StmConfig {
        prevalence: vec![a.covariate.clone()],
        seed: a.seed,
        ..StmConfig::with_k(a.k)
    };
    let mut cfg = StabilityConfig::new(stm.clone(), &a.covariate);
    cfg.sample_sizes = a.sample_sizes.clone();
    cfg.n_reps = a.reps;
    cfg.mode = a.mode.parse::<StartMode>()?;
    cfg.matching = a.matching.parse::<MatchMethod>()?;
    cfg.top_words = a.top_words;
    cfg.seed = a.seed;
    if !a.tracked_topics.is_empty() {
        if a.tracked_topics.contains(&0) {
            return Err(Error::invalid("tracked topics are numbered from 1"));
        }
        cfg.tracked_topics = a.tracked_topics.iter().map(|t| t - 1).collect();
    }
    eprintln!("fitting the reference model on {} documents", dtm.n_rows());
    let reference = fit_reference(&dtm, &design, &stm)?;
    let report = run_stability(&dtm, &design, &reference, &cfg)?;

    run.write_text("stability.csv", &report.to_csv())?;
    let mut disp = Vec::new();
    for &n in &report.sample_sizes {
        for &t in &report.tracked_topics {
            let rows: Vec<_> = report.rows.iter().filter(|r| r.sample_size == n && r.topic == t).collect();
            let col = |f: &dyn Fn(&textcause::lab::stability::StabilityRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
            disp.push(vec![
                n.to_string(),
                (t + 1).to_string(),
                sd(&col(&|r| r.summary.theta_mean)).to_string(),
                mean(&col(&|r| r.summary.top_word_mass)).to_string(),
                sd(&col(&|r| r.summary.effect)).to_string(),
                mean(&col(&|r| r.similarity)).to_string(),
            ]);
        }
    }
    run.write_csv(
        "dispersion.csv",
        &["sample_size", "topic", "theta_mean_sd", "top_word_mass_mean", "effect_sd", "similarity_mean"],
        disp,
    )?;
    let reference_rows = report.tracked_topics.iter().zip(&report.reference).map(|(t, s)| {
        vec![
            (t + 1).to_string(),
            s.theta_mean.to_string(),
            s.top_word_mass.to_string(),
            s.effect.to_string(),
            s.ci_low.to_string(),
            s.ci_high.to_string(),
        ]
    });
    run.write_csv("reference.csv", &["topic", "theta_mean", "top_word_mass", "effect", "ci_low", "ci_high"], reference_rows)?;
    let summary: Vec<_> = report
        .sample_sizes
        .iter()
        .map(|&n| json!({"sample_size": n, "theta_dispersion": report.theta_dispersion(n)}))
        .collect();
    for s in &summary {
        println!("n = {}: mean across-replication sd of topic means {}", s["sample_size"], s["theta_dispersion"]);
    }
    run.summary = json!({"note": report.note, "dispersion": summary});
    run.write_json("stability.json", &report)?;
    finish(run)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Pronounceable, stem-stable token for column `w` of a synthetic count matrix.
fn synthetic_word(w: usize) -> String {
    const HEADS: [&str; 8] = ["zap", "vok", "quil", "drex", "mub", "tisk", "gorf", "yent"];
    const TAILS: [&str; 8] = ["a", "o", "ix", "ul", "ar", "en", "ok", "ith"];
    format!("{}{}{}", HEADS[w % 8], TAILS[(w / 8) % 8], if w >= 64 { (w / 64).to_string() } else { String::new() })
}

fn cmd_synth(a: &SynthArgs, mut run: Run) -> Result<()> {
    let docs = match a.kind.as_str() {
        "immigration" => immigration_corpus(a.n, a.effect, a.seed),
        "features" => {
            let p = planted_features(a.n, 10, 20, &[2.0 * a.effect, -a.effect], 0.5, 3.0, a.seed);
            (0..a.n)
                .map(|i| {
                    let words: Vec<String> = (0..p.x.ncols())
                        .flat_map(|w| std::iter::repeat(synthetic_word(w)).take(p.x[(i, w)] as usize))
                        .collect();
                    textcause::corpus::Document::new(format!("d{i:05}"), words.join(" ")).with_outcome(p.y[i])
                })
                .collect()
        }
        k => return Err(Error::invalid(format!("unknown synthetic corpus '{k}' (immigration | features)"))),
    };
    let mut text = String::new();
    for d in &docs {
        text.push_str(&serde_json::to_string(d)?);
        text.push('\n');
    }
    run.summary = json!({"documents": docs.len()});
    run.write_text("corpus.jsonl", &text)?;
    finish(run)
}

fn cmd_describe(a: &DescribeArgs) -> Result<()> {
    let value: serde_json::Value = read_json(&a.path)?;
    let summary = if let Ok(art) = serde_json::from_value::<Artifact>(value.clone()) {
        match art {
            Artifact::Stm { model } => json!({
                "kind": "stm", "k": model.k(), "vocabulary": model.n_terms(),
                "training_documents": model.doc_ids.len(), "prevalence": model.design_names,
                "iterations": model.iterations, "converged": model.converged,
            }),
            Artifact::Sibp { model, vocabulary, doc_ids, .. } => json!({
                "kind": "sibp", "k_max": model.k(), "vocabulary": vocabulary.len(),
                "training_documents": doc_ids.len(), "pi": model.pi, "outcome_coef": model.beta_mean,
            }),
        }
    } else if let Ok(c) = serde_json::from_value::<Corpus>(value.clone()) {
        json!({
            "kind": "corpus", "documents": c.len(), "tokenized": c.is_tokenized(),
            "with_treatment": c.documents.iter().filter(|d| d.treatment.is_some()).count(),
            "with_outcome": c.documents.iter().filter(|d| d.outcome.is_some()).count(),
        })
    } else if let Ok(s) = serde_json::from_value::<SplitAssignment>(value.clone()) {
        let lock: Option<TestLock> = read_json(&lock_path(&a.path)).ok();
        json!({
            "kind": "split", "train": s.train_ids.len(), "test": s.test_ids.len(), "proportion": s.proportion,
            "seed": s.seed, "lock_consumed": lock.map(|l| l.consumed),
        })
    } else if let Ok(l) = serde_json::from_value::<TestLock>(value) {
        json!({"kind": "lock", "consumed": l.consumed, "consumed_at": l.consumed_at, "overridden": l.overridden})
    } else {
        return Err(Error::invalid(format!("{} is not a corpus, split, lock or model file", a.path.display())));
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
