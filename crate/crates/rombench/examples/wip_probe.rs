//! Temporary diagnostic: snapshot spectrum decay and flame HDM
//! time-convergence at one parameter.

use nalgebra::DVector;
use romkit::dynsys::{integrate, OdeSystem, TimeGrid};
use romkit::flame::{FlameConfig, FlameSystem};

fn main() {
    let basis = romkit::io::load_basis(std::path::Path::new(
        "/root/scratch/ff2/basis/basis.bin",
    ))
    .unwrap();
    let s = &basis.singular_values;
    println!("spectrum length {}", s.len());
    for i in [0usize, 1, 2, 4, 9, 14, 19, 24, 29, 34, 39, 44, 45, 46, 47] {
        if i < s.len() {
            println!("sigma[{:>3}] / sigma[0] = {:.3e}", i, s[i] / s[0]);
        }
    }

    let sys = FlameSystem::new(FlameConfig::default()).unwrap();
    let mu: Vec<f64> =
        romkit::flame::PARAM_BOX.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    let mut solutions: Vec<(usize, DVector<f64>, DVector<f64>)> = Vec::new();
    for n_steps in [50usize, 100, 200, 400] {
        let grid = TimeGrid::uniform(0.06, n_steps).unwrap();
        let t0 = std::time::Instant::now();
        let traj = integrate(&sys, &grid, &mu).unwrap();
        let mid = traj.states.column(n_steps / 2).clone_owned();
        let last = traj.states.column(n_steps).clone_owned();
        println!(
            "n_steps {:>4}: {:.1} s, diverged = {}",
            n_steps,
            t0.elapsed().as_secs_f64(),
            traj.is_diverged()
        );
        solutions.push((n_steps, mid, last));
    }
    let (_, mid_ref, last_ref) = solutions.last().unwrap().clone();
    for (n_steps, mid, last) in &solutions {
        println!(
            "n_steps {:>4}: rel diff at t=0.03 {:.3e}, at t_end {:.3e}",
            n_steps,
            (mid - &mid_ref).norm() / mid_ref.norm(),
            (last - &last_ref).norm() / last_ref.norm()
        );
    }
}
