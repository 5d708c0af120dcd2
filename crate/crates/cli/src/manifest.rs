//! Run manifests: which files a command reads, where it writes, and the
//! options it runs with.
//!
//! Inputs come from three layers, later ones winning field by field: files
//! discovered in `--dir` by their conventional names, a `--manifest` JSON
//! file, and explicit command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dentsim::{KappaWeighting, Tails};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Inputs {
    pub tooth: Option<PathBuf>,
    pub pristine: Option<PathBuf>,
    pub ideal: Option<PathBuf>,
    pub outcomes: Vec<PathBuf>,
    pub scripts: Vec<PathBuf>,
    pub scores: Option<PathBuf>,
    pub gaze_logs: Vec<PathBuf>,
    pub mesh: Option<PathBuf>,
    pub experts: Option<PathBuf>,
    pub study: Option<PathBuf>,
    pub trials: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Options {
    pub grid: Option<[usize; 3]>,
    pub iso: Option<f64>,
    pub kernel_support: Option<f64>,
    /// Metrics kept in the comparison report; all candidates when absent.
    pub metrics: Option<Vec<String>>,
    pub kappa_weighting: Option<KappaWeighting>,
    pub tails: Option<Tails>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    /// Factor from mesh units to gaze-log units.
    pub mesh_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunManifest {
    pub inputs: Inputs,
    pub output_dir: Option<PathBuf>,
    pub options: Options,
}

fn sorted_files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    files
}

fn existing(path: PathBuf) -> Option<PathBuf> {
    path.is_file().then_some(path)
}

fn over<T>(base: Option<T>, top: Option<T>) -> Option<T> {
    top.or(base)
}

fn over_vec<T>(base: Vec<T>, top: Vec<T>) -> Vec<T> {
    if top.is_empty() {
        base
    } else {
        top
    }
}

impl RunManifest {
    /// Inputs found under `dir` by name: `tooth.json`, `pristine.json`,
    /// `ideal.json`, `outcomes/*.json`, `scripts/*.txt`, `scores.json`,
    /// `gaze/*.txt`, `mesh.ply`, `experts.csv`, `study.csv`, `trials.csv`
    /// and `calibration.json`.
    pub fn discover(dir: &Path) -> RunManifest {
        RunManifest {
            inputs: Inputs {
                tooth: existing(dir.join("tooth.json")),
                pristine: existing(dir.join("pristine.json")),
                ideal: existing(dir.join("ideal.json")),
                outcomes: sorted_files(&dir.join("outcomes"), "json"),
                scripts: sorted_files(&dir.join("scripts"), "txt"),
                scores: existing(dir.join("scores.json")),
                gaze_logs: sorted_files(&dir.join("gaze"), "txt"),
                mesh: existing(dir.join("mesh.ply")),
                experts: existing(dir.join("experts.csv")),
                study: existing(dir.join("study.csv")),
                trials: existing(dir.join("trials.csv")),
                calibration: existing(dir.join("calibration.json")),
            },
            output_dir: None,
            options: Options::default(),
        }
    }

    /// Reads a manifest; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let mut m: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.rebase(base);
        Ok(m)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.tooth,
            &mut i.pristine,
            &mut i.ideal,
            &mut i.scores,
            &mut i.mesh,
            &mut i.experts,
            &mut i.study,
            &mut i.trials,
            &mut i.calibration,
            &mut self.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for p in i.outcomes.iter_mut().chain(&mut i.scripts).chain(&mut i.gaze_logs) {
            fix(p);
        }
    }

    /// `top` wins wherever it says something.
    pub fn overlay(self, top: RunManifest) -> RunManifest {
        let (b, t) = (self.inputs, top.inputs);
        let (bo, to) = (self.options, top.options);
        RunManifest {
            inputs: Inputs {
                tooth: over(b.tooth, t.tooth),
                pristine: over(b.pristine, t.pristine),
                ideal: over(b.ideal, t.ideal),
                outcomes: over_vec(b.outcomes, t.outcomes),
                scripts: over_vec(b.scripts, t.scripts),
                scores: over(b.scores, t.scores),
                gaze_logs: over_vec(b.gaze_logs, t.gaze_logs),
                mesh: over(b.mesh, t.mesh),
                experts: over(b.experts, t.experts),
                study: over(b.study, t.study),
                trials: over(b.trials, t.trials),
                calibration: over(b.calibration, t.calibration),
            },
            output_dir: over(self.output_dir, top.output_dir),
            options: Options {
                grid: over(bo.grid, to.grid),
                iso: over(bo.iso, to.iso),
                kernel_support: over(bo.kernel_support, to.kernel_support),
                metrics: over(bo.metrics, to.metrics),
                kappa_weighting: over(bo.kappa_weighting, to.kappa_weighting),
                tails: over(bo.tails, to.tails),
                k: over(bo.k, to.k),
                seed: over(bo.seed, to.seed),
                mesh_scale: over(bo.mesh_scale, to.mesh_scale),
            },
        }
    }

    /// Every referenced input must exist before a command starts.
    pub fn check_inputs(&self) -> Result<()> {
        let i = &self.inputs;
        let singles = [
            &i.tooth,
            &i.pristine,
            &i.ideal,
            &i.scores,
            &i.mesh,
            &i.experts,
            &i.study,
            &i.trials,
            &i.calibration,
        ];
        let all = singles
            .into_iter()
            .flatten()
            .chain(&i.outcomes)
            .chain(&i.scripts)
            .chain(&i.gaze_logs);
        for p in all {
            if !p.is_file() {
                bail!("input {} does not exist", p.display());
            }
        }
        Ok(())
    }

    /// Creates the output directory if one is set.
    pub fn prepare_output(&self) -> Result<Option<&Path>> {
        match &self.output_dir {
            Some(d) => {
                fs::create_dir_all(d).with_context(|| format!("creating output directory {}", d.display()))?;
                Ok(Some(d))
            }
            None => Ok(None),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// Parses `90x135x90` or `90,135,90`.
pub fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    if parts.len() != 3 {
        return Err(format!("expected NXxNYxNZ, got '{s}'"));
    }
    let mut dims = [0usize; 3];
    for (d, p) in dims.iter_mut().zip(parts) {
        *d = p.trim().parse().map_err(|_| format!("bad grid dimension '{p}'"))?;
    }
    Ok(dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_strings() {
        assert_eq!(parse_grid("90x135x90").unwrap(), [90, 135, 90]);
        assert_eq!(parse_grid("4,5,6").unwrap(), [4, 5, 6]);
        assert!(parse_grid("4x5").is_err());
        assert!(parse_grid("4xax6").is_err());
    }

    #[test]
    fn later_layers_win() {
        let base = RunManifest {
            inputs: Inputs {
                tooth: Some("a.json".into()),
                scripts: vec!["s1.txt".into()],
                ..Inputs::default()
            },
            options: Options {
                k: Some(5),
                ..Options::default()
            },
            ..RunManifest::default()
        };
        let top = RunManifest {
            inputs: Inputs {
                tooth: Some("b.json".into()),
                ..Inputs::default()
            },
            ..RunManifest::default()
        };
        let m = base.overlay(top);
        assert_eq!(m.inputs.tooth, Some("b.json".into()));
        assert_eq!(m.inputs.scripts, vec![PathBuf::from("s1.txt")]);
        assert_eq!(m.options.k, Some(5));
    }

    #[test]
    fn manifest_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"inputs": {"study": "study.csv"}, "options": {"tails": "less"}}"#).unwrap();
        let m = RunManifest::load(&path).unwrap();
        assert_eq!(m.inputs.study, Some(dir.path().join("study.csv")));
        assert_eq!(m.options.tails, Some(Tails::Less));
        assert!(m.check_inputs().is_err());
    }
}
