//! Joint evolution of a wavefunction and a trajectory ensemble.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::guidance::{advance_with_fields, velocity_field_for, TrajectorySet, VelocityField};
use crate::propagator::{energy_expectation, step_sizes, HamiltonianSchedule, SplitOperator};
use crate::state::SpinorWaveFunction;

/// Position constraint applied to every trajectory after each step.
pub type Constraint<'a> = &'a (dyn Fn(&mut [f64]) + Sync);

pub struct DriverOptions<'a> {
    pub dt: f64,
    pub speed_cap: f64,
    /// Times (sorted) at which the observer is called; they are hit exactly.
    pub record_times: Vec<f64>,
    pub constraint: Option<Constraint<'a>>,
}

#[derive(Debug, Clone)]
pub struct DriverOutput {
    pub psi: SpinorWaveFunction,
    pub trajectories: TrajectorySet,
    pub cap_triggers: u64,
    /// Largest `| ||Psi(t)||^2 - ||Psi(0)||^2 |` over all steps.
    pub max_norm_drift: f64,
    /// Relative energy change across each Hamiltonian segment that was visited.
    pub segment_energy_drift: Vec<f64>,
}

/// Advances `psi` and `traj` together to `t_final`, calling `observer` at
/// every record time.
pub fn run_coupled(
    psi: &SpinorWaveFunction,
    traj: &TrajectorySet,
    schedule: &HamiltonianSchedule,
    t_final: f64,
    options: &DriverOptions<'_>,
    mut observer: impl FnMut(&SpinorWaveFunction, &TrajectorySet) -> Result<()>,
) -> Result<DriverOutput> {
    let dt = options.dt;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeStep(dt));
    }
    if t_final < psi.time {
        return Err(Error::param("t_final", "must not precede the state's time"));
    }
    if traj.n_axes() != psi.grid().n_axes() {
        return Err(Error::GridMismatch(
            "trajectories and wavefunction have different axis counts".into(),
        ));
    }
    let records = &options.record_times;
    if records.windows(2).any(|w| w[1] < w[0]) || records.iter().any(|&t| t < psi.time || t > t_final) {
        return Err(Error::param(
            "record_times",
            "must be sorted and lie within the evolution interval",
        ));
    }

    let mut stops: Vec<f64> = records.clone();
    stops.extend(schedule.switch_times(psi.time, t_final));
    stops.push(t_final);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut cur = psi.clone();
    let mut q = traj.clone();
    q.time = cur.time;
    let norm0 = cur.norm_sqr();
    let mut max_norm_drift: f64 = 0.0;
    let mut cap_triggers = 0u64;
    let mut energy_drift = Vec::new();

    let mut rec = records.iter().peekable();
    let mut emit = |cur: &SpinorWaveFunction,
                    q: &TrajectorySet,
                    rec: &mut std::iter::Peekable<std::slice::Iter<f64>>|
     -> Result<()> {
        while rec.peek().is_some_and(|&&t| t <= cur.time + 1e-12 * dt) {
            observer(cur, q)?;
            rec.next();
        }
        Ok(())
    };
    emit(&cur, &q, &mut rec)?;

    let mut seg = schedule.segment_index(cur.time);
    let mut seg_energy = energy_expectation(&cur, schedule.segment(seg))?;
    let mut op: Option<SplitOperator> = None;
    let mut v_start: VelocityField = velocity_field_for(&cur, schedule.segment(seg))?;

    for &stop in &stops {
        let new_seg = schedule.segment_index(cur.time);
        if new_seg != seg {
            let e_end = energy_expectation(&cur, schedule.segment(seg))?;
            energy_drift.push(relative_change(seg_energy, e_end));
            seg = new_seg;
            seg_energy = energy_expectation(&cur, schedule.segment(seg))?;
            op = None;
            v_start = velocity_field_for(&cur, schedule.segment(seg))?;
        }
        let h = schedule.segment(seg);
        for step in step_sizes(cur.time, stop, dt) {
            let t_next = cur.time + step;
            if step == dt {
                if op.is_none() {
                    op = Some(SplitOperator::new(h, dt)?);
                }
                op.as_ref().unwrap().apply(&mut cur)?;
            } else {
                SplitOperator::new(h, step)?.apply(&mut cur)?;
            }
            cur.time = t_next;
            let v_end = velocity_field_for(&cur, h)?;
            let (mut next, stats) = advance_with_fields(&q, &v_start, &v_end, step, options.speed_cap)?;
            if let Some(c) = options.constraint {
                let n = next.n_axes();
                next.positions_mut().par_chunks_mut(n).for_each(c);
            }
            cap_triggers += stats.cap_triggers;
            next.time = cur.time;
            q = next;
            v_start = v_end;
            max_norm_drift = max_norm_drift.max((cur.norm_sqr() - norm0).abs());
        }
        cur.time = stop;
        q.time = stop;
        emit(&cur, &q, &mut rec)?;
    }
    let e_end = energy_expectation(&cur, schedule.segment(seg))?;
    energy_drift.push(relative_change(seg_energy, e_end));

    Ok(DriverOutput {
        psi: cur,
        trajectories: q,
        cap_triggers,
        max_norm_drift,
        segment_energy_drift: energy_drift,
    })
}

fn relative_change(before: f64, after: f64) -> f64 {
    let scale = before.abs().max(f64::MIN_POSITIVE);
    (after - before).abs() / scale
}
