//! Fixtures shared by the benchmarks.

use esdg_core::experiments::{preset, Experiment, OfflineArtifacts};
use esdg_core::Result;

/// The 1D wall problem shortened to `t_final`, with its offline artifacts
/// for a basis of `modes` modes.
pub fn wall_fixture(t_final: f64, modes: usize) -> Result<(Experiment, OfflineArtifacts)> {
    let mut cfg = preset("euler-wall")?;
    cfg.time.t_final = t_final;
    cfg.time.frames = 101;
    cfg.pod.modes = modes;
    let exp = Experiment::new(cfg)?;
    let traj = exp.run_fom()?;
    let art = exp.offline(&traj)?;
    Ok((exp, art))
}
