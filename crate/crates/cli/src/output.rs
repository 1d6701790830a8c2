use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::Cli;

/// Collects output files and finishes with the run manifest.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::output(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Renders into memory first so a failed render leaves no partial file.
    pub fn write<E>(&mut self, name: &str, render: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<(), CliError>
    where
        CliError: From<E>,
    {
        let mut buf = Vec::new();
        render(&mut buf)?;
        let path = self.root.join(name);
        std::fs::write(&path, buf).map_err(|e| CliError::output(&path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.root.join(name);
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value).map_err(|e| CliError::output(&path, e))?;
            buf.push(b'\n');
            Ok::<_, CliError>(())
        })
    }

    /// Everything needed to repeat the run: the parsed command line, the
    /// resolved configuration and the library version.
    pub fn finish(mut self, cli: &Cli, config: &RunConfig) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'static str,
            version: &'static str,
            seed: u64,
            invocation: &'a Cli,
            config: &'a RunConfig,
            outputs: &'a [String],
        }
        let outputs = std::mem::take(&mut self.written);
        let manifest = Manifest {
            tool: "uys",
            version: env!("CARGO_PKG_VERSION"),
            seed: cli.seed,
            invocation: cli,
            config,
            outputs: &outputs,
        };
        self.write_json("manifest.json", &manifest)
    }
}
