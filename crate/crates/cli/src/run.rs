use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Base random seed [default: 1]
    #[arg(long, global = true, env = "FOOLING_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core [default: 0]
    #[arg(long, global = true, env = "FOOLING_WORKERS")]
    pub workers: Option<usize>,
    /// TOML file with top-level `seed`/`workers` and one table per subcommand
    #[arg(long, global = true, env = "FOOLING_CONFIG")]
    pub config: Option<PathBuf>,
    /// Run directory [default: runs/<command>-<unix time>]
    #[arg(long, global = true, env = "FOOLING_OUT")]
    pub out: Option<PathBuf>,
    /// Write into a non-empty run directory
    #[arg(long, global = true)]
    pub force: bool,
}

/// Seed and worker count after merging defaults, config file and flags.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub workers: usize,
}

/// Merge defaults < config file table `section` < flags.
pub fn resolve<S: DeserializeOwned + Default>(common: &Common, section: &str) -> CliResult<(Resolved, S)> {
    let mut resolved = Resolved { seed: 1, workers: 0 };
    let mut settings = S::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut table: toml::Table =
            text.parse().map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let bad = |k: &str, e: &dyn std::fmt::Display| CliError::usage(format!("config key `{k}`: {e}"));
        if let Some(v) = table.remove("seed") {
            resolved.seed = v.try_into().map_err(|e| bad("seed", &e))?;
        }
        if let Some(v) = table.remove("workers") {
            resolved.workers = v.try_into().map_err(|e| bad("workers", &e))?;
        }
        if let Some(v) = table.remove(section) {
            settings = v.try_into().map_err(|e| bad(section, &e))?;
        }
        if let Some(k) = table.keys().find(|k| !crate::SUBCOMMANDS.contains(&k.as_str())) {
            return Err(CliError::usage(format!("unknown config key `{k}`")));
        }
    }
    if let Some(s) = common.seed {
        resolved.seed = s;
    }
    if let Some(w) = common.workers {
        resolved.workers = w;
    }
    Ok((resolved, settings))
}

/// Overwrite each listed field of `$dst` with the flag of the same name when given.
macro_rules! overlay {
    ($dst:expr, $flags:expr; $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $flags.$field.clone() { $dst.$field = v.into(); })+
    };
}
pub(crate) use overlay;

/// Output directory of one command invocation.
pub struct RunDir {
    pub path: PathBuf,
    inputs: Vec<(String, String)>,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(common: &Common, command: &str) -> CliResult<RunDir> {
        let path = match &common.out {
            Some(p) => p.clone(),
            None => {
                let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                PathBuf::from("runs").join(format!("{command}-{t}"))
            }
        };
        let non_empty = fs::read_dir(&path).map(|mut d| d.next().is_some()).unwrap_or(false);
        if non_empty && !common.force {
            return Err(CliError::usage(format!("{} is not empty (use --force to overwrite)", path.display())));
        }
        fs::create_dir_all(&path).map_err(|e| fooling::Error::Io { path: path.display().to_string(), source: e })?;
        Ok(RunDir { path, inputs: Vec::new(), outputs: Vec::new() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Record the sha256 of an input file, or of every file under a directory.
    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| io_err(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            entries.sort();
            for e in entries {
                self.input(&e)?;
            }
            return Ok(());
        }
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        self.inputs.push((path.display().to_string(), hex::encode(Sha256::digest(&bytes))));
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.file(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&p, contents).map_err(|e| io_err(&p, e))?;
        self.outputs.push(name.to_string());
        Ok(p)
    }

    pub fn note_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let s = serde_json::to_string_pretty(value).map_err(fooling::Error::from)?;
        self.write(name, s + "\n")
    }

    /// Write `manifest.json` with the resolved configuration and input hashes.
    pub fn finish<S: Serialize>(mut self, command: &str, resolved: Resolved, settings: &S) -> CliResult<()> {
        let inputs: serde_json::Map<String, serde_json::Value> =
            self.inputs.iter().map(|(p, h)| (p.clone(), serde_json::Value::String(h.clone()))).collect();
        let manifest = serde_json::json!({
            "tool": "fooling",
            "version": VERSION,
            "command": command,
            "seed": resolved.seed,
            "workers": resolved.workers,
            "config": settings,
            "inputs": inputs,
            "outputs": self.outputs,
        });
        self.write_json("manifest.json", &manifest)?;
        Ok(())
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    fooling::Error::Io { path: path.display().to_string(), source: e }.into()
}

/// Usage error unless `opt` is set.
pub fn required<T>(opt: Option<T>, what: &str) -> CliResult<T> {
    opt.ok_or_else(|| CliError::usage(format!("missing {what}")))
}

/// Usage error unless `path` exists.
pub fn existing(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} does not exist", path.display())))
    }
}
