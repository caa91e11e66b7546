//! Output directory handling: CSV files, plot sidecars and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shipstab::ShipParams;

use crate::CliError;

/// Bumped whenever a manifest field changes meaning.
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    /// Parameter set after config and flag overrides.
    pub params: ShipParams,
    pub tolerances: BTreeMap<String, f64>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
}

/// What a sidecar plots: x column against one or more y columns.
pub struct Plot<'a> {
    pub x: &'a str,
    pub y: &'a [&'a str],
    pub points: bool,
}

pub struct OutDir {
    dir: PathBuf,
    plots: bool,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path, plots: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            plots,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv<T: Serialize>(
        &mut self,
        name: &str,
        rows: &[T],
        plot: Option<Plot>,
    ) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        if let (true, Some(p)) = (self.plots, plot) {
            self.sidecar(name, &p)?;
        }
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.path(name), text + "\n")?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn sidecar(&mut self, csv_name: &str, p: &Plot) -> Result<(), CliError> {
        let stem = csv_name.trim_end_matches(".csv");
        let style = if p.points {
            "points pt 7 ps 0.5"
        } else {
            "lines"
        };
        let series: Vec<String> =
            p.y.iter()
                .map(|y| {
                    format!(
                        "'{csv_name}' using '{}':'{y}' with {style} title '{y}'",
                        p.x
                    )
                })
                .collect();
        let script = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel '{}'\nset terminal pngcairo size 900,600\nset output '{stem}.png'\nplot {}\n",
            p.x,
            series.join(", \\\n     ")
        );
        let name = format!("{stem}.gp");
        fs::write(self.path(&name), script)?;
        self.written.push(name);
        Ok(())
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        let name = format!("{}_manifest.json", manifest.command);
        self.written.push(name.clone());
        manifest.outputs = self.written.clone();
        let text = serde_json::to_string_pretty(&manifest)?;
        let path = self.path(&name);
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
