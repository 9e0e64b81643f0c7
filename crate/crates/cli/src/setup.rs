use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Deserialize;
use tutorloop_classifier::{load_model, read_model, ClassifierModel};
use tutorloop_core::clock::{Clock, ManualClock, SystemClock};
use tutorloop_core::config::EngineConfig;
use tutorloop_core::gateway::{build_backend, BackendConfig};
use tutorloop_core::orchestrator::Engine;
use tutorloop_core::prompt::PromptEngine;
use tutorloop_core::verifier::{Verifier, VerifierConfig};

use crate::GlobalArgs;

/// Router trained on the bundled corpus with the default settings; see the
/// classifier crate's `train_bundled` example.
static BUNDLED_ROUTER: &[u8] = include_bytes!("../assets/router.bin");

/// Layout of the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    engine: EngineConfig,
    backend: BackendConfig,
    verifier: VerifierConfig,
}

pub struct Settings {
    pub engine: EngineConfig,
    pub backend: BackendConfig,
    pub verifier: VerifierConfig,
    classifier: Option<PathBuf>,
    virtual_clock: bool,
}

/// `fixtures/all_clean` names `fixtures/all_clean.json` when only the
/// latter exists.
fn resolve_script(path: &Path) -> PathBuf {
    if !path.exists() && path.extension().is_none() {
        let with_ext = path.with_extension("json");
        if with_ext.exists() {
            return with_ext;
        }
    }
    path.to_path_buf()
}

impl Settings {
    /// Reads the config file, if any, and applies the command-line flags on top.
    pub fn load(args: &GlobalArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let FileConfig {
            mut engine,
            mut backend,
            verifier,
        } = file;
        if let Some(kind) = args.backend {
            backend.kind = kind.into();
        }
        if let Some(url) = &args.base_url {
            backend.base_url = Some(url.clone());
        }
        if let Some(model) = &args.model {
            backend.model_name = model.clone();
        }
        if let Some(script) = &args.script {
            backend.script = Some(script.clone());
        }
        backend.script = backend.script.as_deref().map(resolve_script);
        if let Some(n) = args.max_repair_iters {
            engine = engine.with_repair_iters(n);
        }
        engine.validate()?;
        Ok(Settings {
            engine,
            backend,
            verifier,
            classifier: args.classifier.clone(),
            virtual_clock: args.virtual_clock,
        })
    }

    fn router(&self) -> Result<ClassifierModel> {
        match &self.classifier {
            Some(path) => load_model(path)
                .with_context(|| format!("cannot load classifier {}", path.display())),
            None => Ok(read_model(BUNDLED_ROUTER)?),
        }
    }

    pub fn engine(&self) -> Result<Engine> {
        let clock: Arc<dyn Clock> = if self.virtual_clock {
            Arc::new(ManualClock::new(1_700_000_000_000, 1))
        } else {
            Arc::new(SystemClock)
        };
        let backend = build_backend(&self.backend, clock.clone())?;
        Ok(Engine::new(
            backend,
            Arc::new(self.router()?),
            Arc::new(PromptEngine::default()),
            Arc::new(Verifier::new(self.verifier.clone(), clock.clone())),
            clock,
        ))
    }
}
