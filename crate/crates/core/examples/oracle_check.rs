//! Compares the iterative solver with the closed-form linear squared-error
//! oracle on a handful of random instances.

use mimal::oracle::{oracle_equivalence, random_linear_l2_instance};

fn main() -> mimal::Result<()> {
    for seed in 0..5 {
        let data = random_linear_l2_instance(seed, 2000)?;
        let c = oracle_equivalence(&data, seed)?;
        println!(
            "seed {seed}: M={} d={} solver {:.6} oracle {:.6} rel err {:.1e} q {:.3?} vs {:.3?} {}",
            c.num_sources,
            c.dim,
            c.solver_value,
            c.oracle_value,
            c.value_rel_err,
            c.q_solver,
            c.q_oracle,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    Ok(())
}
