//! Phased benchmark pipeline with persisted, resumable artifacts.
//!
//! A [`Workspace`] ties an [`ExperimentConfig`] to an output directory and
//! runs five phases:
//!
//! 1. full-order solves over the whole test grid (the training subset is
//!    reused for snapshot collection),
//! 2. proper-orthogonal-decomposition basis from the training snapshots,
//! 3. network training, one surrogate per reduced dimension,
//! 4. reduced-model integration and error evaluation at every test point,
//! 5. CSV report emission.
//!
//! Every phase persists its products and skips work whose artifact already
//! exists, so an interrupted run resumes from disk and rerunning a
//! completed phase changes no outputs. Full-model failures are fatal;
//! reduced-model failures are recorded as divergence. Parameter-level work
//! fans out over the rayon thread pool; results are reduced in fixed
//! parameter order, keeping outputs byte-identical regardless of worker
//! count.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use romkit::burgers::BurgersSystem;
use romkit::deim::{DeimOperator, DeimRomSystem};
use romkit::dynsys::{
    integrate, Counted, EvalCounters, OdeSystem, TimeGrid, Trajectory, TrajectoryStatus,
};
use romkit::flame::{FlameConfig, FlameSystem};
use romkit::galerkin::RomSystem;
use romkit::io;
use romkit::pod::{compute_pod_basis, snapshots_from_trajectories, ReducedBasis, SnapshotSet};
use romkit::romnn::{build_training_data, build_training_data_reevaluated, train_romnn, RomNnSystem};
use romkit::{Error, Result};

use crate::config::{ExperimentConfig, Problem, TargetSource};
use crate::grid::{nested_indices, uniform_grid};
use crate::metrics::relative_error;
use crate::report::{sweep_csv, ErrorReport, Method, ParamRow, Split, METHODS};

/// An experiment bound to its output directory.
pub struct Workspace {
    cfg: ExperimentConfig,
    system: Arc<dyn OdeSystem>,
    counters: Arc<EvalCounters>,
    grid: TimeGrid,
    test_params: Vec<Vec<f64>>,
    /// Flat test-grid indices of the training parameters, ascending.
    train_rows: Vec<usize>,
}

impl Workspace {
    /// Creates the directory layout and binds the configuration to it.
    ///
    /// The resolved configuration is echoed to `config_resolved.txt` on
    /// first use; reopening an existing directory with different settings
    /// is refused so stale artifacts can never be mixed into a run.
    pub fn open(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        for sub in ["hdm", "basis", "nn", "eval", "report"] {
            std::fs::create_dir_all(cfg.out_dir.join(sub))?;
        }
        let echo_path = cfg.out_dir.join("config_resolved.txt");
        let echo = cfg.resolved_text();
        if echo_path.exists() {
            let existing = std::fs::read_to_string(&echo_path)?;
            if existing != echo {
                return Err(Error::InvalidConfig(format!(
                    "output directory {} holds artifacts of a different configuration; \
                     use a fresh directory or matching settings",
                    cfg.out_dir.display()
                )));
            }
        } else {
            write_bytes_atomic(&echo_path, echo.as_bytes())?;
        }
        let (system, counters) = build_system(&cfg)?;
        let grid = TimeGrid::uniform(cfg.t_end, cfg.n_steps)?;
        let bounds = cfg.problem.param_bounds();
        let test_params = uniform_grid(&bounds, &cfg.test_counts)?;
        let mut train_rows = nested_indices(&cfg.train_counts, &cfg.test_counts)?;
        train_rows.sort_unstable();
        Ok(Workspace { cfg, system, counters, grid, test_params, train_rows })
    }

    pub fn cfg(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn system(&self) -> &Arc<dyn OdeSystem> {
        &self.system
    }

    /// Call counters of the wrapped full-order model.
    pub fn counters(&self) -> &Arc<EvalCounters> {
        &self.counters
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// All test-grid parameters in row order (last axis fastest).
    pub fn test_params(&self) -> &[Vec<f64>] {
        &self.test_params
    }

    /// Flat test-grid indices belonging to the training grid, ascending.
    pub fn train_rows(&self) -> &[usize] {
        &self.train_rows
    }

    fn root(&self) -> &Path {
        &self.cfg.out_dir
    }

    fn traj_path(&self, idx: usize) -> PathBuf {
        self.root().join(format!("hdm/traj_{idx:04}.bin"))
    }

    fn snapshots_path(&self) -> PathBuf {
        self.root().join("hdm/snapshots.bin")
    }

    fn basis_path(&self) -> PathBuf {
        self.root().join("basis/basis.bin")
    }

    fn model_path(&self, k: usize) -> PathBuf {
        self.root().join(format!("nn/model_k{k}.bin"))
    }

    fn train_log_path(&self, k: usize) -> PathBuf {
        self.root().join(format!("nn/train_log_k{k}.csv"))
    }

    fn eps_path(&self, k: usize, method: Method) -> PathBuf {
        self.root().join(format!("eval/eps_k{k}_{}.csv", method.as_str()))
    }

    fn hdm_calls_path(&self, k: usize) -> PathBuf {
        self.root().join(format!("eval/hdm_calls_k{k}_romnn.txt"))
    }

    pub fn params_csv_path(&self, k: usize) -> PathBuf {
        self.root().join(format!("report/params_k{k}.csv"))
    }

    pub fn summary_csv_path(&self, k: usize) -> PathBuf {
        self.root().join(format!("report/summary_k{k}.csv"))
    }

    pub fn sweep_csv_path(&self) -> PathBuf {
        self.root().join("report/sweep.csv")
    }

    /// Phase 1: solve the full-order model at every test parameter and
    /// assemble the training-grid snapshot set. A diverged full-order
    /// trajectory is fatal — the full model is the ground truth.
    pub fn phase_hdm(&self) -> Result<()> {
        let n = self.test_params.len();
        let outcomes: Vec<Result<()>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let path = self.traj_path(i);
                if path.exists() {
                    return Ok(());
                }
                log::info!(
                    "full-order solve {}/{} at mu = {:?}",
                    i + 1,
                    n,
                    self.test_params[i]
                );
                let traj = integrate(self.system.as_ref(), &self.grid, &self.test_params[i])?;
                if let TrajectoryStatus::Diverged { step } = traj.status {
                    return Err(Error::HdmDiverged { param: traj.mu, step });
                }
                persist_with(&path, &traj, io::save_trajectory)
            })
            .collect();
        outcomes.into_iter().collect::<Result<Vec<()>>>()?;
        if !self.snapshots_path().exists() {
            let trajs: Vec<Trajectory> = self
                .train_rows
                .iter()
                .map(|&i| io::load_trajectory(&self.traj_path(i)))
                .collect::<Result<_>>()?;
            let snaps = snapshots_from_trajectories(self.system.as_ref(), &self.grid, &trajs)?;
            persist_with(&self.snapshots_path(), &snaps, io::save_snapshots)?;
        }
        Ok(())
    }

    /// Phase 2: orthonormal basis of the training snapshots, computed once
    /// at the largest requested reduced dimension and truncated on use.
    pub fn phase_basis(&self) -> Result<()> {
        if self.basis_path().exists() {
            return Ok(());
        }
        let snaps = io::load_snapshots(&self.snapshots_path())?;
        let k_max = *self.cfg.k_u.iter().max().expect("validated nonempty");
        let offset = self.system.initial_state();
        log::info!(
            "computing rank-{k_max} basis from {} snapshot columns",
            snaps.n_columns()
        );
        let basis = compute_pod_basis(&snaps.states, &offset, k_max)?;
        persist_with(&self.basis_path(), &basis, io::save_basis)
    }

    /// Phase 3: train one velocity surrogate per reduced dimension.
    pub fn phase_train(&self) -> Result<()> {
        let mut loaded: Option<(SnapshotSet, ReducedBasis)> = None;
        for &k in &self.cfg.k_u {
            if self.model_path(k).exists() && self.train_log_path(k).exists() {
                continue;
            }
            if loaded.is_none() {
                loaded = Some((
                    io::load_snapshots(&self.snapshots_path())?,
                    io::load_basis(&self.basis_path())?,
                ));
            }
            let (snaps, basis_full) = loaded.as_ref().expect("just loaded");
            let basis = basis_full.truncate(k);
            let training = match self.cfg.target_source {
                TargetSource::Stored => build_training_data(snaps, &basis)?,
                TargetSource::Reevaluated => {
                    let rom = RomSystem::new(self.system.clone(), basis.clone())?;
                    build_training_data_reevaluated(snaps, &rom)?
                }
            };
            // Each reduced dimension trains from its own stream, derived
            // deterministically from the experiment seed.
            let mut tc = self.cfg.training.clone();
            tc.seed = self.cfg.seed.wrapping_add(k as u64);
            log::info!(
                "training surrogate for k_u = {k}: {} rows, {} epochs max",
                training.n_rows(),
                tc.max_epochs
            );
            let (surrogate, tlog) =
                train_romnn(&training, &self.cfg.hidden_widths, &tc, basis, self.system.as_ref())?;
            persist_with(&self.model_path(k), surrogate.model(), io::save_network)?;
            let mut csv_bytes = Vec::new();
            tlog.write_csv(&mut csv_bytes)?;
            write_bytes_atomic(&self.train_log_path(k), &csv_bytes)?;
            log::info!(
                "k_u = {k}: best epoch {}, final raw loss {:.3e}",
                tlog.best_epoch,
                tlog.final_raw_loss
            );
        }
        Ok(())
    }

    /// Phase 4: integrate the requested reduced models at every test
    /// parameter and record relative errors (divergence as `+inf`).
    ///
    /// During surrogate evaluation the full-model call counters are
    /// watched: the surrogate must run without a single full-order
    /// velocity evaluation, and the observed counts are persisted next to
    /// the errors.
    pub fn phase_evaluate(&self, methods: &[Method]) -> Result<()> {
        let mut pending: Vec<(usize, Method)> = Vec::new();
        for &k in &self.cfg.k_u {
            for &m in methods {
                let done = self.eps_path(k, m).exists()
                    && (m != Method::RomNn || self.hdm_calls_path(k).exists());
                if !done {
                    pending.push((k, m));
                }
            }
        }
        if pending.is_empty() {
            return Ok(());
        }
        let references: Vec<Trajectory> = (0..self.test_params.len())
            .map(|i| io::load_trajectory(&self.traj_path(i)))
            .collect::<Result<_>>()?;
        let basis_full = io::load_basis(&self.basis_path())?;
        let velocities = if pending.iter().any(|&(_, m)| m == Method::Deim) {
            Some(io::load_snapshots(&self.snapshots_path())?.velocities)
        } else {
            None
        };
        for (k, method) in pending {
            let basis = basis_full.truncate(k);
            log::info!("evaluating {} at k_u = {k}", method.as_str());
            match method {
                Method::Rom => {
                    let rom = RomSystem::new(self.system.clone(), basis.clone())?;
                    let eps = self.evaluate_system(&rom, &basis, &references)?;
                    self.write_eps(k, method, &eps)?;
                }
                Method::Deim => {
                    let vel = velocities.as_ref().expect("loaded for interpolation");
                    let built = DeimOperator::build(&basis, vel, self.cfg.k_f_for(k)).and_then(
                        |op| {
                            log::info!(
                                "interpolation operator: k_f = {}, condition {:.3e}",
                                op.k_f(),
                                op.condition_number
                            );
                            DeimRomSystem::new(self.system.clone(), basis.clone(), op)
                        },
                    );
                    let eps = match built {
                        Ok(sys) => self.evaluate_system(&sys, &basis, &references)?,
                        Err(e) => {
                            log::warn!(
                                "interpolation operator for k_u = {k} failed ({e}); \
                                 recording divergence at every parameter"
                            );
                            vec![f64::INFINITY; self.test_params.len()]
                        }
                    };
                    self.write_eps(k, method, &eps)?;
                }
                Method::RomNn => {
                    let model = io::load_network(&self.model_path(k))?;
                    let sys = RomNnSystem::new(model, basis.clone(), self.system.as_ref())?;
                    self.counters.reset();
                    let eps = self.evaluate_system(&sys, &basis, &references)?;
                    let (n_velocity, n_jacobian) = self.counters.counts();
                    if n_velocity != 0 || n_jacobian != 0 {
                        log::warn!(
                            "surrogate evaluation touched the full model: \
                             {n_velocity} velocity / {n_jacobian} Jacobian calls"
                        );
                    }
                    self.write_eps(k, method, &eps)?;
                    write_bytes_atomic(
                        &self.hdm_calls_path(k),
                        format!("velocity = {n_velocity}\njacobian = {n_jacobian}\n").as_bytes(),
                    )?;
                }
            }
        }
        Ok(())
    }

    fn evaluate_system<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        basis: &ReducedBasis,
        references: &[Trajectory],
    ) -> Result<Vec<f64>> {
        (0..self.test_params.len())
            .into_par_iter()
            .map(|i| {
                let reduced = integrate(sys, &self.grid, &self.test_params[i])?;
                let lifted = basis.reconstruct_trajectory(&reduced);
                relative_error(&lifted, &references[i])
            })
            .collect()
    }

    /// Phase 5: assemble per-parameter, summary, and sweep CSVs from the
    /// persisted errors. Always regenerated — output is a pure, determi-
    /// nistic function of the evaluation artifacts, so rerunning cannot
    /// change bytes.
    pub fn phase_report(&self) -> Result<()> {
        let d = self.cfg.problem.param_dim();
        let mut entries: Vec<(usize, ErrorReport)> = Vec::new();
        for &k in &self.cfg.k_u {
            let per_method: Vec<Option<Vec<f64>>> = METHODS
                .iter()
                .map(|&m| self.read_eps(k, m))
                .collect::<Result<_>>()?;
            let mut report = ErrorReport::new(d);
            for i in 0..self.test_params.len() {
                let split = if self.train_rows.binary_search(&i).is_ok() {
                    Split::Train
                } else {
                    Split::Test
                };
                report.push(ParamRow {
                    mu: self.test_params[i].clone(),
                    split,
                    eps_rom: per_method[0].as_ref().map(|v| v[i]),
                    eps_deim: per_method[1].as_ref().map(|v| v[i]),
                    eps_romnn: per_method[2].as_ref().map(|v| v[i]),
                })?;
            }
            write_bytes_atomic(&self.params_csv_path(k), report.per_param_csv().as_bytes())?;
            write_bytes_atomic(&self.summary_csv_path(k), report.summary_csv().as_bytes())?;
            entries.push((k, report));
        }
        let borrowed: Vec<(usize, &ErrorReport)> =
            entries.iter().map(|(k, r)| (*k, r)).collect();
        write_bytes_atomic(&self.sweep_csv_path(), sweep_csv(&borrowed).as_bytes())?;
        Ok(())
    }

    /// Runs every phase in order. Training is skipped when the surrogate
    /// is not among the requested methods.
    pub fn run_all(&self, methods: &[Method]) -> Result<()> {
        self.phase_hdm()?;
        self.phase_basis()?;
        if methods.contains(&Method::RomNn) {
            self.phase_train()?;
        }
        self.phase_evaluate(methods)?;
        self.phase_report()
    }

    /// Parses the emitted per-parameter report for one reduced dimension.
    pub fn load_report(&self, k: usize) -> Result<ErrorReport> {
        let text = std::fs::read_to_string(self.params_csv_path(k))?;
        ErrorReport::parse_per_param_csv(&text)
    }

    /// Full-model (velocity, Jacobian) call counts recorded during the
    /// surrogate evaluation at reduced dimension `k`, if evaluated.
    pub fn surrogate_hdm_calls(&self, k: usize) -> Result<Option<(u64, u64)>> {
        let path = self.hdm_calls_path(k);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        let mut velocity = None;
        let mut jacobian = None;
        for line in text.lines() {
            if let Some((key, value)) = line.split_once('=') {
                let parsed: u64 = value.trim().parse().map_err(|_| {
                    Error::Format(format!("bad counter value '{}'", value.trim()))
                })?;
                match key.trim() {
                    "velocity" => velocity = Some(parsed),
                    "jacobian" => jacobian = Some(parsed),
                    other => return Err(Error::Format(format!("unknown counter '{other}'"))),
                }
            }
        }
        match (velocity, jacobian) {
            (Some(v), Some(j)) => Ok(Some((v, j))),
            _ => Err(Error::Format("incomplete counter file".into())),
        }
    }

    fn write_eps(&self, k: usize, method: Method, eps: &[f64]) -> Result<()> {
        let mut text = String::from("idx,eps\n");
        for (i, e) in eps.iter().enumerate() {
            text.push_str(&format!("{i},{e}\n"));
        }
        write_bytes_atomic(&self.eps_path(k, method), text.as_bytes())
    }

    fn read_eps(&self, k: usize, method: Method) -> Result<Option<Vec<f64>>> {
        let path = self.eps_path(k, method);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        let mut lines = text.lines();
        if lines.next() != Some("idx,eps") {
            return Err(Error::Format(format!("bad header in {}", path.display())));
        }
        let mut eps = Vec::new();
        for line in lines {
            let Some((idx, value)) = line.split_once(',') else {
                return Err(Error::Format(format!("bad row '{line}' in {}", path.display())));
            };
            if idx.parse::<usize>().ok() != Some(eps.len()) {
                return Err(Error::Format(format!(
                    "row index '{idx}' out of order in {}",
                    path.display()
                )));
            }
            eps.push(value.parse().map_err(|_| {
                Error::Format(format!("bad error value '{value}' in {}", path.display()))
            })?);
        }
        if eps.len() != self.test_params.len() {
            return Err(Error::Format(format!(
                "{} holds {} rows for {} test parameters",
                path.display(),
                eps.len(),
                self.test_params.len()
            )));
        }
        Ok(Some(eps))
    }
}

fn build_system(cfg: &ExperimentConfig) -> Result<(Arc<dyn OdeSystem>, Arc<EvalCounters>)> {
    match cfg.problem {
        Problem::Burgers => {
            let sys = Counted::new(BurgersSystem::new(cfg.burgers_elements)?);
            let counters = sys.counters();
            Ok((Arc::new(sys), counters))
        }
        Problem::Flame => {
            let sys = Counted::new(FlameSystem::new(FlameConfig {
                nx: cfg.flame_nx,
                ny: cfg.flame_ny,
                ..FlameConfig::default()
            })?);
            let counters = sys.counters();
            Ok((Arc::new(sys), counters))
        }
    }
}

/// Writes through a temporary sibling then renames, so a crash can never
/// leave a truncated artifact that a resumed run would trust.
fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn persist_with<T: ?Sized>(
    path: &Path,
    value: &T,
    save: impl Fn(&Path, &T) -> Result<()>,
) -> Result<()> {
    let tmp = path.with_extension("tmp");
    save(&tmp, value)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_for(Problem::Burgers);
        cfg.out_dir = dir.to_path_buf();
        cfg.burgers_elements = 12;
        cfg.t_end = 0.2;
        cfg.n_steps = 4;
        cfg.test_counts = vec![2, 2, 2];
        cfg.k_u = vec![2];
        cfg
    }

    #[test]
    fn reopening_with_a_different_config_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        Workspace::open(cfg.clone()).unwrap();
        Workspace::open(cfg.clone()).unwrap();
        let mut other = cfg;
        other.seed = 99;
        let err = match Workspace::open(other) {
            Err(e) => e,
            Ok(_) => panic!("reopening with a different config succeeded"),
        };
        assert!(err.to_string().contains("different configuration"), "{err}");
    }

    #[test]
    fn training_rows_are_the_nested_grid_in_ascending_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(dir.path());
        cfg.test_counts = vec![3, 3, 3];
        let ws = Workspace::open(cfg).unwrap();
        assert_eq!(ws.test_params().len(), 27);
        assert_eq!(ws.train_rows(), &[0, 2, 6, 8, 18, 20, 24, 26]);
    }

    #[test]
    fn atomic_write_leaves_no_temporary_behind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.csv");
        write_bytes_atomic(&path, b"idx,eps\n").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"idx,eps\n");
        assert!(!path.with_extension("tmp").exists());
    }

    #[test]
    fn error_files_round_trip_including_divergence() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tiny_cfg(dir.path())).unwrap();
        let eps = vec![0.25, f64::INFINITY, 1e-9, 0.0, 3.5, 0.125, 0.5, 2.0];
        ws.write_eps(2, Method::Rom, &eps).unwrap();
        assert_eq!(ws.read_eps(2, Method::Rom).unwrap(), Some(eps));
        assert_eq!(ws.read_eps(2, Method::Deim).unwrap(), None);
    }
}
