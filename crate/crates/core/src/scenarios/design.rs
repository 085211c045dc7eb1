//! One-stage design problems with a safe and a risky input.
//!
//! Input 0 lands deterministically on cost 4000. Input 1 lands on the cost
//! equal to the disturbance, so the terminal cost `g_h(x) = x` is also the
//! disturbance value.

use crate::model::{AffineMap, Empirical, EmpiricalLayout, EmpiricalTable, FiniteSystem, FiniteSystemParts};
use crate::scenarios::{PenaltyGrid, ScenarioFile, UnitMaps};

/// Cost reached by the safe input.
pub const SAFE_COST: f64 = 4000.0;

/// Weight of the uniform component of the risky input in the first design;
/// the rest sits on the grid values 1800..=2200. Chosen so that the inner
/// value at `gamma_e = gamma_h = 1e6` is 4998.
pub const FIG3_NOISE_WEIGHT: f64 = 0.997_916_488_103_644_2;

/// Mass on each of the small costs 0..=14 in the second design; the rest
/// (0.064) sits on cost 10000, which is then both the most likely and the
/// worst outcome.
pub const FIG4_SMALL_MASS: f64 = 0.0624;

fn one_stage(values: Vec<f64>, safe: usize, risky_row: Vec<f64>) -> FiniteSystem {
    let n = values.len();
    let mut transition = Vec::with_capacity(2 * n * n);
    for _x in 0..n {
        transition.extend(std::iter::repeat_n(safe as u32, n));
        transition.extend(0..n as u32);
    }
    let mut safe_row = vec![0.0; n];
    safe_row[safe] = 1.0;
    FiniteSystem::new(FiniteSystemParts {
        n_states: n,
        n_inputs: 2,
        n_dist: n,
        horizon: 1,
        transition,
        stage_cost: vec![0.0; 2 * n],
        terminal_cost: values,
        empirical: Empirical::Stationary(EmpiricalTable {
            layout: EmpiricalLayout::PerInput,
            rows: safe_row.into_iter().chain(risky_row).collect(),
        }),
    })
    .expect("design system is valid")
}

/// Costs 0, 100, ..., 10000 with the risky input mostly uniform plus a bump
/// around 2000.
pub fn fig3_system_with(noise_weight: f64) -> FiniteSystem {
    let n = 101;
    let values: Vec<f64> = (0..n).map(|i| 100.0 * i as f64).collect();
    let bump = 18..=22;
    let bump_len = bump.clone().count() as f64;
    let risky: Vec<f64> = (0..n)
        .map(|i| noise_weight / n as f64 + if bump.contains(&i) { (1.0 - noise_weight) / bump_len } else { 0.0 })
        .collect();
    one_stage(values, 40, risky)
}

pub fn fig3_system() -> FiniteSystem {
    fig3_system_with(FIG3_NOISE_WEIGHT)
}

/// Costs 0..=14, 4000 and 10000; the risky input almost surely lands on a
/// small cost but its single most likely outcome is 10000.
pub fn fig4_system() -> FiniteSystem {
    let values: Vec<f64> = (0..15).map(f64::from).chain([SAFE_COST, 10000.0]).collect();
    let mut risky = vec![FIG4_SMALL_MASS; 15];
    risky.extend([0.0, 1.0 - 15.0 * FIG4_SMALL_MASS]);
    one_stage(values, 15, risky)
}

pub fn build_fig3_scenario() -> ScenarioFile {
    let mut s = ScenarioFile::finite(fig3_system());
    s.name = Some("fig3".into());
    s.description = Some(
        "One stage. Input 0 costs 4000 for sure; input 1 costs the disturbance, drawn from costs 0..10000 (step 100), nearly uniform with a bump at 1800..2200."
            .into(),
    );
    let map = AffineMap { offset: 0.0, slope: 100.0 };
    s.maps = UnitMaps { state: Some(map), input: None, disturbance: Some(map) };
    s.penalty_grid = Some(PenaltyGrid { pairs: vec![(0.0, 0.0), (1e6, 1e6)], ..Default::default() });
    s
}

pub fn build_fig4_scenario() -> ScenarioFile {
    let mut s = ScenarioFile::finite(fig4_system());
    s.name = Some("fig4".into());
    s.description = Some(
        "One stage. Input 0 costs 4000 for sure; input 1 costs 0..14 with probability 0.936 and 10000 (the single most likely cost) otherwise."
            .into(),
    );
    s.penalty_grid = Some(PenaltyGrid { gamma_h: vec![0.0, 1.0, 100.0], gamma_e: vec![0.0, 1e3, 1e4, 1e5], pairs: vec![] });
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_distributions() {
        for sys in [fig3_system(), fig4_system()] {
            for u in 0..2 {
                let s: f64 = sys.empirical(0, 0, u).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fig4_mode_is_worst_case() {
        let sys = fig4_system();
        let r = sys.empirical(0, 0, 1);
        let mode = (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        assert_eq!(mode, 16);
        assert_eq!(sys.terminal_cost()[sys.next_state(0, 1, mode)], 10000.0);
    }
}
