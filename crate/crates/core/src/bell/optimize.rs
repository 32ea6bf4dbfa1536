use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chsh_sum;
use crate::correlations::{reduce_angle, AxisConfiguration, CorrelationModel};

/// Grid and refinement parameters for [`max_chsh_over_axes_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisSearch {
    /// Number of grid steps across `[0, π]` per relative angle.
    pub divisions: usize,
    /// Refinement stops once the step falls below this.
    pub min_step: f64,
}

impl Default for AxisSearch {
    fn default() -> Self {
        AxisSearch {
            divisions: 180,
            min_step: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxChsh {
    pub axes: AxisConfiguration,
    /// Successive relative angles `a'→b`, `b→a`, `a→b'`.
    pub relative_angles: [f64; 3],
    pub value: f64,
}

/// CHSH sum as a function of the three successive relative angles.
fn chsh_at(model: CorrelationModel, r: [f64; 3]) -> f64 {
    let e = |t: f64| model.eval_reduced(reduce_angle(t));
    // θ(a,b) = r1, θ(a,b') = r2, θ(a',b) = r0, θ(a',b') = r0 + r1 + r2
    chsh_sum([e(r[1]), e(r[2]), e(r[0]), e(r[0] + r[1] + r[2])])
}

/// [`max_chsh_over_axes_with`] at a `π/180` grid refined down to `1e-6`.
pub fn max_chsh_over_axes(model: CorrelationModel) -> MaxChsh {
    max_chsh_over_axes_with(model, AxisSearch::default())
}

/// Maximizes the CHSH sum of `model` over coplanar axis layouts.
///
/// A full grid over the three relative angles in `[0, π]` is followed by a
/// compass search from the best grid point. Grid ties go to the
/// lexicographically smallest index triple, so the result does not depend on
/// how the grid is split across threads.
pub fn max_chsh_over_axes_with(model: CorrelationModel, search: AxisSearch) -> MaxChsh {
    let n = search.divisions.max(1);
    let step = PI / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    let e_grid: Vec<f64> = grid.iter().map(|&t| model.eval_reduced(t)).collect();

    let better = |a: (f64, [usize; 3]), b: (f64, [usize; 3])| {
        if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
            a
        } else {
            b
        }
    };

    let (_, [i, j, k]) = (0..=n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, [usize::MAX; 3]);
            for j in 0..=n {
                for k in 0..=n {
                    let v = e_grid[j] + e_grid[k] + e_grid[i]
                        - model.eval_reduced(reduce_angle(grid[i] + grid[j] + grid[k]));
                    best = better((v, [i, j, k]), best);
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, [usize::MAX; 3]), better);

    let mut r = [grid[i], grid[j], grid[k]];
    let mut value = chsh_at(model, r);
    let mut h = step;
    while h >= search.min_step {
        let mut moved = false;
        'probe: for c in 0..3 {
            for dir in [1.0, -1.0] {
                let mut cand = r;
                cand[c] = (cand[c] + dir * h).clamp(0.0, PI);
                let v = chsh_at(model, cand);
                if v > value {
                    r = cand;
                    value = v;
                    moved = true;
                    break 'probe;
                }
            }
        }
        if !moved {
            h /= 2.0;
        }
    }

    MaxChsh {
        axes: AxisConfiguration::from_relative(r).expect("finite angles"),
        relative_angles: r,
        value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{chsh_from_model, QUANTUM_BOUND};
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn chsh_at_matches_axis_evaluation() {
        for m in CorrelationModel::ALL {
            for r in [[0.1, 0.7, 2.0], [FRAC_PI_4; 3], [3.0, 0.2, 1.1]] {
                let axes = AxisConfiguration::from_relative(r).unwrap();
                assert!((chsh_at(m, r) - chsh_from_model(m, &axes)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn superquantum_reaches_four_at_quarter_pi() {
        let best = max_chsh_over_axes(CorrelationModel::Superquantum);
        assert_eq!(best.value, 4.0);
        for r in best.relative_angles {
            assert!((r - FRAC_PI_4).abs() < 1e-12, "{:?}", best.relative_angles);
        }
    }

    #[test]
    fn coarse_quantum_search_refines_to_tsirelson() {
        // 7° grid misses π/4; refinement has to find it
        let best = max_chsh_over_axes_with(
            CorrelationModel::QuantumCosine,
            AxisSearch {
                divisions: 25,
                min_step: 1e-6,
            },
        );
        assert!((best.value - QUANTUM_BOUND).abs() < 1e-6, "{}", best.value);
        assert!(best.value <= QUANTUM_BOUND + 1e-12);
    }

    #[test]
    fn search_is_independent_of_thread_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    max_chsh_over_axes_with(
                        CorrelationModel::ClassicalLinear,
                        AxisSearch {
                            divisions: 60,
                            min_step: 1e-6,
                        },
                    )
                })
        };
        assert_eq!(run(1), run(4));
    }
}
