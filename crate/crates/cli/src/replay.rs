use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use discotag::domain::{load_catalog, load_sessions, Loaded, SessionRecord};
use discotag::encoders::{train_prod2vec, FeatureEncoder, HashProductEncoder, ProductEmbedding};
use discotag::policies::{PolicyConfig, PolicyKind};
use discotag::replay::{run_replay, PolicySpec, ReplayData, ReplaySettings};
use discotag::tenancy::{snapshot_save, PolicyHandle, TenantId};
use discotag::Error;

use crate::config::{load_toml, ContextEncoderKind, ExperimentConfig};
use crate::Globals;

pub const REPORT_FILE: &str = "report.csv";
pub const ABLATED_LABEL: &str = "mcm_noctx";

fn warn_rejects<T>(g: &Globals, what: &Path, loaded: &Loaded<T>) {
    if loaded.rejects.is_empty() {
        return;
    }
    g.progress(format!(
        "{}: skipped {} invalid lines",
        what.display(),
        loaded.rejects.len()
    ));
    for r in loaded.rejects.iter().take(5) {
        g.progress(format!("  line {}: {}", r.line, r.reason));
    }
}

fn context_encoder(cfg: &ExperimentConfig, train: &[SessionRecord], g: &Globals) -> Result<FeatureEncoder> {
    let products: Arc<dyn ProductEmbedding> = match cfg.encoder.context {
        ContextEncoderKind::Hash => Arc::new(HashProductEncoder {
            dim: cfg.encoder.context_dim,
            seed: cfg.seed,
        }),
        ContextEncoderKind::Prod2vec => {
            let t = Instant::now();
            let trained = train_prod2vec(train, &cfg.encoder.skip_gram(cfg.seed)).context("training prod2vec")?;
            g.progress(format!(
                "prod2vec: {} products, final loss {:.4}, {:.1}s",
                trained.table.ids().len(),
                trained.epoch_losses.last().copied().unwrap_or(f64::NAN),
                t.elapsed().as_secs_f64()
            ));
            Arc::new(trained.table)
        }
    };
    Ok(FeatureEncoder::new(products, cfg.encoder.query_dim, cfg.seed))
}

pub fn run(g: &Globals, data_dir: Option<&Path>, ablate: bool, parallel: bool) -> Result<()> {
    let (mut cfg, base) = match &g.config {
        Some(path) => {
            let cfg: ExperimentConfig = load_toml(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
        None => (ExperimentConfig::default(), PathBuf::new()),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.ablate_context |= ablate;
    cfg.parallel_policies |= parallel;
    cfg.validate()?;
    if cfg.ablate_context && !cfg.policies.contains(&PolicyKind::Mcm) {
        return Err(Error::Config {
            field: "ablate_context".into(),
            message: "needs mcm among the policies".into(),
        }
        .into());
    }
    let tenant = TenantId::new(cfg.tenant.as_str())?;
    let paths = cfg.data_paths(&base, data_dir)?;

    let catalog = load_catalog(&paths.catalog, None)?;
    warn_rejects(g, &paths.catalog, &catalog);
    let catalog = catalog.records;
    let schema = catalog.derive_schema()?;
    let vocabulary = schema.vocabulary(&cfg.tag_type).cloned().ok_or_else(|| Error::Config {
        field: "tag_type".into(),
        message: format!("`{}` does not occur in the catalog", cfg.tag_type),
    })?;
    let mut splits = Vec::new();
    for path in [&paths.train, &paths.test] {
        let loaded = load_sessions(path, &catalog, &schema)?;
        warn_rejects(g, path, &loaded);
        let sessions: Vec<SessionRecord> = loaded
            .records
            .into_iter()
            .filter(|s| s.tag_type.as_str() == cfg.tag_type)
            .collect();
        splits.push(sessions);
    }
    let test = splits.pop().expect("two splits");
    let train = splits.pop().expect("two splits");
    g.progress(format!(
        "{} training and {} test sessions for `{}` ({} values)",
        train.len(),
        test.len(),
        cfg.tag_type,
        vocabulary.len()
    ));

    let encoder = if cfg.policies.contains(&PolicyKind::Mcm) {
        Some(context_encoder(&cfg, &train, g)?)
    } else {
        None
    };
    let mut specs = Vec::new();
    for kind in &cfg.policies {
        match kind {
            PolicyKind::Pop => specs.push(PolicySpec::new("pop", PolicyConfig::Pop)),
            PolicyKind::Mab => specs.push(PolicySpec::new("mab", PolicyConfig::Mab(cfg.mab))),
            PolicyKind::Mcm => {
                let enc = encoder.clone().expect("encoder built for mcm");
                let mcm = PolicyConfig::Mcm(cfg.mcm.config(enc.input_dim(), cfg.seed));
                specs.push(PolicySpec::new("mcm", mcm.clone()).with_encoder(enc.clone()));
                if cfg.ablate_context {
                    specs.push(PolicySpec::new(ABLATED_LABEL, mcm).with_encoder(enc.with_context_ablated(true)));
                }
            }
        }
    }

    let settings = ReplaySettings {
        strategy: cfg.strategy(),
        n_rounds: cfg.n_rounds,
        seed: cfg.seed,
        parallel: cfg.parallel_policies,
    };
    let t = Instant::now();
    let data = ReplayData {
        train: &train,
        test: &test,
        catalog: &catalog,
        vocabulary: &vocabulary,
    };
    let outcome = run_replay(data, &specs, &settings).context("replay failed")?;
    g.progress(format!(
        "replayed {} policies in {:.1}s",
        specs.len(),
        t.elapsed().as_secs_f64()
    ));

    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let report_path = out.join(REPORT_FILE);
    outcome.report.write_csv(&report_path)?;
    outcome.report.write_plot_data(&out.join("plot"))?;
    if cfg.snapshots {
        let dir = out.join("snapshots").join(tenant.as_str());
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (label, policy) in outcome.policies {
            snapshot_save(
                &PolicyHandle::new(tenant.clone(), policy),
                &dir.join(format!("{label}.dsnap")),
            )?;
        }
    }
    g.progress(format!("report written to {}", report_path.display()));

    for spec in &specs {
        let f1 = outcome.report.final_f1(&spec.label).expect("every policy has rows");
        println!("{} final_f1={f1:.6}", spec.label);
    }
    Ok(())
}
