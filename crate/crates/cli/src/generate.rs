use anyhow::{Context, Result};
use discotag::datagen::{gen_catalog, gen_sessions, write_dataset, GenConfig};
use std::path::PathBuf;

use crate::config::load_toml;
use crate::Globals;

pub const ECHO_FILE: &str = "genconfig.toml";

pub fn run(g: &Globals) -> Result<()> {
    let mut cfg: GenConfig = match &g.config {
        Some(path) => load_toml(path)?,
        None => GenConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("data"));

    let catalog = gen_catalog(&cfg)?;
    let sessions = gen_sessions(&cfg, &catalog)?;
    let paths = write_dataset(&out, &catalog, &sessions)?;
    let echo = out.join(ECHO_FILE);
    let text = toml::to_string(&cfg).context("serializing the configuration echo")?;
    std::fs::write(&echo, text).with_context(|| format!("writing {}", echo.display()))?;

    g.progress(format!(
        "wrote {} products to {}, {} training sessions to {}, {} test sessions to {} (seed {})",
        catalog.len(),
        paths.catalog.display(),
        sessions.train.len(),
        paths.train.display(),
        sessions.test.len(),
        paths.test.display(),
        cfg.seed
    ));
    Ok(())
}
