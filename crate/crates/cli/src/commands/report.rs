use std::path::{Path, PathBuf};

use clap::Args;
use fooling::analysis::{archive_confidences, emit_grid, emit_heatmap};
use fooling::mapelites::{archive_load, EliteArchive};
use serde::{Deserialize, Serialize};

use super::{archive_grid, caption};
use crate::error::{CliError, CliResult};
use crate::run::{io_err, overlay, resolve, Common, RunDir};

#[derive(Args, Debug, Default)]
pub struct ReportArgs {
    /// Archive directories, evolve run directories, or folders holding them
    #[arg(value_delimiter = ',')]
    pub archives: Option<Vec<PathBuf>>,
    /// Pixels per heatmap cell [default: 16]
    #[arg(long)]
    pub scale: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub archives: Vec<PathBuf>,
    pub scale: usize,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings { archives: Vec::new(), scale: 16 }
    }
}

fn archive_dir(p: &Path) -> Option<PathBuf> {
    [p.to_path_buf(), p.join("archive")].into_iter().find(|d| is_archive(d))
}

fn is_archive(d: &Path) -> bool {
    std::fs::read_to_string(d.join("manifest.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .is_some_and(|v| v.get("encoding").is_some() && v.get("elites").is_some())
}

fn collect(p: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    if let Some(d) = archive_dir(p) {
        out.push(d);
        return Ok(());
    }
    if !p.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", p.display())));
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(p)
        .map_err(|e| io_err(p, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|e| e.is_dir())
        .collect();
    subdirs.sort();
    out.extend(subdirs.iter().filter_map(|d| archive_dir(d)));
    Ok(())
}

pub fn run(common: &Common, args: &ReportArgs) -> CliResult<()> {
    let (res, mut s) = resolve::<ReportSettings>(common, "report")?;
    overlay!(s, args; archives, scale);
    let mut dirs = Vec::new();
    for p in &s.archives {
        collect(p, &mut dirs)?;
    }
    if dirs.is_empty() {
        return Err(CliError::usage("no archives found"));
    }
    let mut run = RunDir::create(common, "report")?;
    let archives: Vec<EliteArchive> = dirs
        .iter()
        .map(|d| {
            run.input(d)?;
            Ok(archive_load(d)?)
        })
        .collect::<CliResult<_>>()?;
    let per_run: Vec<Vec<f64>> = archives.iter().map(archive_confidences).collect();
    let heat = emit_heatmap(&per_run, s.scale)?;
    heat.image.write_pnm(run.file("heatmap.pgm"))?;
    run.note_output("heatmap.pgm");
    run.write("heatmap.csv", &heat.csv)?;

    if archives.iter().all(|a| a.dims() == archives[0].dims() && a.num_classes() == archives[0].num_classes()) {
        let mut images = Vec::new();
        let mut captions = Vec::new();
        for a in &archives {
            let (w, h, c) = a.dims();
            for class in 0..a.num_classes() {
                let e = a.elite(class);
                images.push(e.map(|e| e.image.clone()).unwrap_or(fooling::dataset::Image::filled(w, h, c, 0)?));
                captions.push(e.map(|e| caption(class, e.confidence)).unwrap_or_else(|| format!("{class}:-")));
            }
        }
        emit_grid(&images, &captions, archives[0].num_classes())?.write_png(run.file("champions.png"))?;
        run.note_output("champions.png");
    } else {
        for (i, a) in archives.iter().enumerate() {
            let name = format!("champions_{i}.png");
            archive_grid(a)?.write_png(run.file(&name))?;
            run.note_output(&name);
        }
    }
    let medians: Vec<String> = heat.medians.iter().map(|m| format!("{:.4}", m)).collect();
    println!("{} archives; median confidence per class: {}", archives.len(), medians.join(" "));
    run.finish("report", res, &s)
}
