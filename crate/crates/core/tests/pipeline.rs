use memctrl::kernels::{MemoryKernel, TimeGrid};
use memctrl::moment::TargetSpec;
use memctrl::spectral::{build_interval_basis, CoeffState};
use memctrl::synthesis::{
    simulate_via_representation, solve_zetas, steer, ControlClass, SteerOptions, ZetaSolver,
};
use memctrl::volterra::auto_steps;
use rand::{Rng, SeedableRng};

fn relative(a: &CoeffState, b: &CoeffState) -> f64 {
    let diff: f64 = a
        .position
        .iter()
        .zip(&b.position)
        .chain(a.velocity.iter().zip(&b.velocity))
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    let norm: f64 = b
        .position
        .iter()
        .chain(&b.velocity)
        .map(|z| z.norm_sqr())
        .sum();
    (diff / norm).sqrt()
}

#[test]
fn random_positions_and_velocities_are_reached() {
    let n = 8;
    let horizon = 2.5;
    let basis = build_interval_basis(0.0, n).unwrap();
    let grid = TimeGrid::new(horizon, auto_steps(horizon, basis.max_abs_lambda())).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let kernels = [
        MemoryKernel::zero(),
        MemoryKernel::constant(0.8),
        MemoryKernel::exponential(-1.2, 0.5),
    ];
    for class in [ControlClass::L2, ControlClass::H10, ControlClass::H20] {
        for kernel in &kernels {
            let xi: Vec<f64> = (1..=n)
                .map(|k| rng.gen_range(-1.0..1.0) / k as f64)
                .collect();
            let eta: Vec<f64> = (1..=n)
                .map(|k| rng.gen_range(-1.0..1.0) / k as f64)
                .collect();
            let target = TargetSpec::real(class.target_class().unwrap(), &xi, &eta).unwrap();
            let result = steer(
                &target,
                &basis,
                kernel,
                grid,
                class,
                &SteerOptions::default(),
            )
            .unwrap_or_else(|e| panic!("{} [{}]: {e}", class.name(), kernel.describe()));
            assert!(result.report.relative_error <= 1e-3);
            assert!(result.control.endpoint_defect() <= 1e-8);
        }
    }
}

#[test]
fn picard_tables_confirm_the_reached_state() {
    // The representation formula on Picard tables is independent of the
    // timestep integrator used inside `steer`.
    let n = 6;
    let horizon = 3.0;
    let basis = build_interval_basis(2.0, n).unwrap();
    let kernel = MemoryKernel::exponential(0.6, 2.0);
    let grid = TimeGrid::new(horizon, 8192).unwrap();
    let xi: Vec<f64> = (1..=n).map(|k| 1.0 / (k * k) as f64).collect();
    let eta: Vec<f64> = (1..=n)
        .map(|k| (-1.0f64).powi(k as i32) / (k as f64).powi(3))
        .collect();
    let class = ControlClass::H10;
    let target = TargetSpec::real(class.target_class().unwrap(), &xi, &eta).unwrap();
    let result = steer(
        &target,
        &basis,
        &kernel,
        grid,
        class,
        &SteerOptions::default(),
    )
    .unwrap();
    let zetas = solve_zetas(&basis, &kernel, grid, ZetaSolver::Picard).unwrap();
    let check = simulate_via_representation(&result.control.f, &zetas).unwrap();
    assert!(relative(&check, &result.report.achieved) <= 1e-3);
    assert!(relative(&check, &target.to_state(&basis).unwrap()) <= 1e-3);
}
