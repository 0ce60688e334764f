mod common;

use common::workspace_root;
use stablelab::parametrix::duhamel_solve_grad;
use stablelab::verify::check_heat_kernel_bounds;
use stablelab::Exec;
use stablelab_cli::Context;

/// Two-sided constant of a shipped configuration at its last verification level.
fn last_level_c1(file: &str) -> (f64, bool) {
    let ctx = Context::load(&workspace_root().join("configs").join(file), None, None).unwrap();
    let c = &ctx.config;
    let sp = c.stable_params().unwrap();
    let field = c.drift_field().unwrap();
    let drift = field.mollify(*c.verify.levels.last().unwrap());
    let dg = duhamel_solve_grad(&sp, &drift, c.solver.start, c.solver.x0, c.drift.horizon, &c.solver.grid, Exec::Parallel)
        .unwrap();
    let k = check_heat_kernel_bounds(&dg, c.rho().unwrap()).unwrap();
    println!("{file}: C1 = {:.3}, C2 = {:?}", k.two_sided, k.gradient);
    (k.two_sided, field.negative_control)
}

#[test]
fn negative_control_has_the_largest_two_sided_constant() {
    let (control, flagged) = last_level_c1("negative_control.toml");
    assert!(flagged);
    for file in ["reference.toml", "smooth.toml", "constant.toml", "zero.toml"] {
        let (c1, flagged) = last_level_c1(file);
        assert!(!flagged);
        assert!(control > c1, "{file}: {c1} vs control {control}");
    }
}
