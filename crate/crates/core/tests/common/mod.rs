#![allow(dead_code)]

use std::path::Path;

use lbto_core::domain::{DecompositionSpec, Reduction};
use lbto_core::extract::{ExtractionConfig, Strategy};
use lbto_core::fields::FieldSpec;
use lbto_core::geom::Aabb;
use lbto_core::io::lvel;

/// Unit square, 20 x 4 nodes, split at x = 0.5 when `ranks` is 2, with a
/// steady rightward velocity of 1 and cycle_dt 0.04: particles move 0.2 per
/// 5-cycle interval.
pub fn constant_flow(dir: &Path, ranks: usize, strategy: Strategy) -> ExtractionConfig {
    let domain = Aabb::new([0.0; 3], [1.0, 1.0, 0.0], 2);
    lvel::write_series(dir, domain, [20, 4, 1], 10, |_, _| [1.0, 0.0, 0.0]).unwrap();
    ExtractionConfig {
        field: FieldSpec::gridded(dir.to_path_buf(), 0.04),
        decomposition: DecompositionSpec { global_dims: vec![20, 4], rank_layout: vec![ranks, 1] },
        interval: 5,
        reduction: Reduction(1),
        total_cycles: 10,
        strategy,
        rng_seed: 0,
    }
}

/// Small ABC setup on a coarse grid.
pub fn small_abc(n: usize, layout: [usize; 3], interval: u64, total: u64, reduction: u32, strategy: Strategy) -> ExtractionConfig {
    ExtractionConfig {
        field: FieldSpec::abc(0.01),
        decomposition: DecompositionSpec { global_dims: vec![n; 3], rank_layout: layout.to_vec() },
        interval,
        reduction: Reduction(reduction),
        total_cycles: total,
        strategy,
        rng_seed: 0,
    }
}
