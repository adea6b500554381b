//! Sweep runner: one CSV row per sensor-noise level, appended as soon as it
//! is computed and skipped on rerun.
//!
//! Columns, in order (costs are per-step rates `J/T`, information in nats):
//!
//! | column | meaning |
//! |---|---|
//! | `config_hash` | provenance hash of the resolved config |
//! | `sigma_v` | sensor noise standard deviation |
//! | `j_ol` | open-loop optimum |
//! | `j_sc` | self-consistent lower bound |
//! | `j_irr_ol` | irreducible cost at the open-loop information budget |
//! | `j_lqg` | simulated linearized LQG controller |
//! | `j_star` | exact optimum (linear systems only) |
//! | `norm_ol`, `norm_sc`, `norm_irr_ol`, `norm_lqg` | the above divided by `j_ol` |
//! | `se_ol`, `se_sc`, `se_lqg` | standard errors |
//! | `i_ol`, `i_sc` | certificate at `J_ol` and `J_sc` (nats) |
//! | `alpha_hat`, `beta_max_hat` | semiconvexity estimate and its ceiling |
//! | `beta_star` | grid maximizer at the fixed point |
//! | `dropped_betas`, `bisection_iters` | diagnostics |
//! | `certified` | whether the convexity ceiling was applied and valid |
//! | `errors` | failure message; numeric fields are empty when set |

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use trfe_core::baselines::LinearSpec;
use trfe_core::systems::{double_integrator_system, dubins_system, scalar_lqg_system, DubinsParams};
use trfe_core::{Dynamics, SystemModel};

use crate::config::{ExperimentConfig, SystemConfig};
use crate::pipeline::{bound_row, shared_artifacts, BoundRow, Settings, Shared};
use crate::plot;

pub const COLUMNS: [&str; 23] = [
    "config_hash",
    "sigma_v",
    "j_ol",
    "j_sc",
    "j_irr_ol",
    "j_lqg",
    "j_star",
    "norm_ol",
    "norm_sc",
    "norm_irr_ol",
    "norm_lqg",
    "se_ol",
    "se_sc",
    "se_lqg",
    "i_ol",
    "i_sc",
    "alpha_hat",
    "beta_max_hat",
    "beta_star",
    "dropped_betas",
    "bisection_iters",
    "certified",
    "errors",
];

pub const CSV_NAME: &str = "sweep.csv";
pub const CONFIG_NAME: &str = "config.resolved.json";
pub const PLOT_NAME: &str = "sweep.svg";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0} holds results for a different configuration (hash {1}); use a fresh output directory")]
    ForeignOutput(PathBuf, String),
    #[error("malformed existing CSV {0}: {1}")]
    Malformed(PathBuf, String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub csv: PathBuf,
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
    pub plot: Option<PathBuf>,
}

pub fn settings(cfg: &ExperimentConfig) -> Settings {
    Settings {
        n_samples: cfg.n_samples,
        n_betas: cfg.n_betas,
        beta_min: cfg.beta_min,
        beta_max: cfg.beta_max,
        n_alpha: cfg.n_alpha,
        epsilon: cfg.epsilon,
        seed: cfg.seed,
        n_eval: cfg.n_eval,
        certify: cfg.certify,
    }
}

/// Runs every pending sweep value, appending rows to `out_dir/sweep.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let config_path = out_dir.join(CONFIG_NAME);
    fs::write(&config_path, cfg.to_pretty_json() + "\n").map_err(io(&config_path))?;

    let hash = cfg.hash();
    let csv_path = out_dir.join(CSV_NAME);
    let done = completed_rows(&csv_path, &hash)?;
    let fresh = done.is_none();
    let done = done.unwrap_or_default();
    let pending: Vec<f64> = cfg.sigma_v.iter().copied().filter(|s| !done.contains(&s.to_bits())).collect();
    let skipped = cfg.sigma_v.len() - pending.len();
    if skipped > 0 {
        log::info!("resuming: {skipped} rows already present");
    }

    let file = OpenOptions::new().create(true).append(true).open(&csv_path).map_err(io(&csv_path))?;
    let mut sink = RowSink::new(file, &csv_path, &hash);
    if fresh {
        sink.header(cfg)?;
    }
    let s = settings(cfg);
    let mut failed = 0;
    if !pending.is_empty() {
        failed = match &cfg.system {
            SystemConfig::Dubins(d) => {
                let make = |sv: f64| {
                    let p = DubinsParams {
                        speed: d.speed,
                        dt: d.dt,
                        horizon: d.horizon,
                        sigma_w: d.sigma_w,
                        sigma_v: sv,
                        heading_weight: d.heading_weight,
                        control_weight: d.control_weight,
                        aspect: d.aspect,
                    };
                    dubins_system(p).map(|sys| (sys, None))
                };
                sweep(&pending, &s, make, &mut sink)?
            }
            SystemConfig::ScalarLqg(c) => {
                let make = |sv: f64| {
                    scalar_lqg_system(c.a, c.b, c.q, c.r, c.sigma_w, sv, c.x0_var, c.horizon)
                        .map(|(sys, spec)| (sys, Some(spec)))
                };
                sweep(&pending, &s, make, &mut sink)?
            }
            SystemConfig::DoubleIntegrator(c) => {
                let make = |sv: f64| {
                    double_integrator_system(c.dt, c.q_vel, c.r, c.sigma_w, sv, c.x0_mean, c.x0_var, c.horizon)
                        .map(|(sys, spec)| (sys, Some(spec)))
                };
                sweep(&pending, &s, make, &mut sink)?
            }
        };
    }

    let plot_path = out_dir.join(PLOT_NAME);
    let plot = match plot::render_file(&csv_path, &plot_path) {
        Ok(()) => Some(plot_path),
        Err(e) => {
            log::warn!("no plot written: {e}");
            None
        }
    };
    Ok(RunSummary {
        csv: csv_path,
        written: pending.len(),
        skipped,
        failed,
        plot,
    })
}

type Built<D> = (SystemModel<f64, D>, Option<LinearSpec<f64>>);

fn sweep<D: Dynamics<f64>>(
    pending: &[f64],
    s: &Settings,
    make: impl Fn(f64) -> trfe_core::Result<Built<D>>,
    sink: &mut RowSink,
) -> Result<usize, RunError> {
    let shared: Result<Shared, String> = make(pending[0])
        .and_then(|(sys, _)| shared_artifacts(&sys, s))
        .map_err(|e| e.to_string());
    if let Err(e) = &shared {
        log::error!("shared artifacts failed: {e}");
    }
    let mut failed = 0;
    for &sv in pending {
        let row = match &shared {
            Ok(sh) => make(sv)
                .and_then(|(sys, spec)| bound_row(&sys, spec.as_ref(), sv, sh, s))
                .map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        match &row {
            Ok(r) => {
                log::info!(
                    "sigma_v = {sv}: J_sc/T = {:.5}, J_irr_ol/T = {:.5}, J_lqg/T = {:.5}, J_ol/T = {:.5}",
                    r.j_sc / r.horizon as f64,
                    r.j_irr_ol / r.horizon as f64,
                    r.j_lqg / r.horizon as f64,
                    r.j_ol / r.horizon as f64
                );
                sanity_warnings(r);
            }
            Err(e) => {
                log::error!("sigma_v = {sv}: {e}");
                failed += 1;
            }
        }
        sink.row(sv, &row)?;
    }
    Ok(failed)
}

fn sanity_warnings(r: &BoundRow) {
    let rel = r.se_sc / r.j_ol.abs().max(f64::MIN_POSITIVE) + r.se_ol / r.j_ol.abs().max(f64::MIN_POSITIVE);
    if r.j_sc / r.j_ol > 1.0 + 3.0 * rel {
        log::warn!("sigma_v = {}: normalized J_sc exceeds 1 beyond three standard errors", r.sigma_v);
    }
}

/// `None` when the file does not exist; otherwise the sweep values already
/// present under `hash`.
fn completed_rows(path: &Path, hash: &str) -> Result<Option<HashSet<u64>>, RunError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io(path)(e)),
    };
    let mut data = String::new();
    let mut file_hash = None;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io(path))?;
        if let Some(c) = line.strip_prefix('#') {
            if let Some(h) = c.trim().strip_prefix("config_hash:") {
                file_hash = Some(h.trim().to_string());
            }
        } else {
            data.push_str(&line);
            data.push('\n');
        }
    }
    match file_hash {
        None if data.trim().is_empty() => return Ok(None),
        None => return Err(RunError::Malformed(path.to_owned(), "no config_hash comment".into())),
        Some(h) if h != hash => return Err(RunError::ForeignOutput(path.to_owned(), h)),
        Some(_) => {}
    }
    let mut rdr = csv::ReaderBuilder::new().from_reader(data.as_bytes());
    let headers = rdr.headers().map_err(|e| RunError::Malformed(path.to_owned(), e.to_string()))?.clone();
    if headers.iter().ne(COLUMNS.iter().copied()) {
        return Err(RunError::Malformed(path.to_owned(), "unexpected column layout".into()));
    }
    let mut done = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| RunError::Malformed(path.to_owned(), e.to_string()))?;
        let sv: f64 = rec[1]
            .parse()
            .map_err(|_| RunError::Malformed(path.to_owned(), format!("bad sigma_v {:?}", &rec[1])))?;
        done.insert(sv.to_bits());
    }
    Ok(Some(done))
}

struct RowSink {
    file: File,
    path: PathBuf,
    hash: String,
}

impl RowSink {
    fn new(file: File, path: &Path, hash: &str) -> Self {
        Self {
            file,
            path: path.to_owned(),
            hash: hash.to_owned(),
        }
    }

    fn header(&mut self, cfg: &ExperimentConfig) -> Result<(), RunError> {
        let text = format!(
            "# trfe sweep\n# config_hash: {}\n# seed: {}\n# costs are per-step rates J/T; information in nats\n{}\n",
            self.hash,
            cfg.seed,
            COLUMNS.join(",")
        );
        self.file.write_all(text.as_bytes()).map_err(io(&self.path))
    }

    fn row(&mut self, sigma_v: f64, row: &Result<BoundRow, String>) -> Result<(), RunError> {
        let fields = format_row(&self.hash, sigma_v, row);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(&fields).expect("in-memory write");
        let bytes = w.into_inner().expect("in-memory flush");
        self.file.write_all(&bytes).map_err(io(&self.path))?;
        self.file.flush().map_err(io(&self.path))
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// CSV fields in [`COLUMNS`] order.
pub fn format_row(hash: &str, sigma_v: f64, row: &Result<BoundRow, String>) -> Vec<String> {
    let mut f = vec![hash.to_string(), num(sigma_v)];
    match row {
        Ok(r) => {
            let t = r.horizon as f64;
            let ol = r.j_ol / t;
            let per = |j: f64| j / t;
            f.extend([per(r.j_ol), per(r.j_sc), per(r.j_irr_ol), per(r.j_lqg)].map(num));
            f.push(r.j_star.map(|j| num(per(j))).unwrap_or_default());
            f.extend([per(r.j_ol) / ol, per(r.j_sc) / ol, per(r.j_irr_ol) / ol, per(r.j_lqg) / ol].map(num));
            f.extend([per(r.se_ol), per(r.se_sc), per(r.se_lqg), r.i_ol, r.i_sc, r.alpha_hat].map(num));
            f.push(r.beta_max_hat.map(num).unwrap_or_else(|| "undefined".into()));
            f.push(num(r.beta_star));
            f.push(r.dropped_betas.to_string());
            f.push(r.bisection_iters.to_string());
            f.push(r.certified.to_string());
            f.push(String::new());
        }
        Err(e) => {
            f.extend(std::iter::repeat_n(String::new(), COLUMNS.len() - 3));
            f.push(e.replace(['\n', '\r'], " "));
        }
    }
    debug_assert_eq!(f.len(), COLUMNS.len());
    f
}
