//! The guidance law: velocity fields, trajectory ensembles and trajectory diagnostics.
//!
//! For a spinor wavefunction the velocity of coordinate `a` is
//!
//! ```text
//! v_a = (hbar / m_a) Im( sum_alpha Psi_alpha^* d_a Psi_alpha ) / sum_alpha |Psi_alpha|^2
//! ```
//!
//! plus the drift `D_a(q)` when the Hamiltonian carries a translation
//! generator `D_a p_a` on that axis (the velocity operator `i[H, q_a]/hbar`
//! then contains `D_a`). Gradients are spectral. Cells where the density falls
//! below `NODE_EPSILON_REL * max density` are masked; their velocity is stored
//! as zero and interpolated speeds near them are capped.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{derivative_wavenumbers, GridFft};
use crate::grid::{masses_from_roles, AxisRole, Grid};
use crate::propagator::Hamiltonian;
use crate::state::SpinorWaveFunction;

/// Relative density threshold below which a cell counts as a node.
pub const NODE_EPSILON_REL: f64 = 1e-12;

/// Default speed cap: ten grid diameters per experiment duration.
pub fn default_speed_cap(grid: &Grid, duration: f64) -> f64 {
    10.0 * grid.diameter() / duration
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: Grid,
    components: Vec<Vec<f64>>,
    node_mask: Vec<bool>,
    pub time: f64,
}

impl VelocityField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Velocity component along `axis` in every cell.
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn node_mask(&self) -> &[bool] {
        &self.node_mask
    }

    /// Number of masked cells.
    pub fn masked_count(&self) -> usize {
        self.node_mask.iter().filter(|m| **m).count()
    }

    /// Returns a copy with every component multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> VelocityField {
        let mut out = self.clone();
        for c in out.components.iter_mut() {
            c.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }
}

/// Real-valued spectral derivative of a real field.
fn real_derivative(fft: &GridFft, k: &[f64], field: &[f64], axis: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.forward_axis(&mut buf, axis);
    buf.par_iter_mut().enumerate().for_each(|(flat, z)| {
        *z *= Complex64::new(0.0, k[fft.axis_index(flat, axis)]);
    });
    fft.inverse_axis(&mut buf, axis);
    buf.into_iter().map(|z| z.re).collect()
}

fn guidance_field(
    psi: &SpinorWaveFunction,
    masses: &[f64],
    hbar: f64,
    drift: impl Fn(usize, usize) -> f64,
) -> VelocityField {
    let grid = psi.grid();
    let total = grid.total_points();
    let fft = GridFft::new(grid);
    let mut density = vec![0.0; total];
    let mut currents = vec![vec![0.0; total]; grid.n_axes()];
    for alpha in 0..psi.n_spin() {
        let comp = psi.component(alpha);
        let re: Vec<f64> = comp.iter().map(|z| z.re).collect();
        let im: Vec<f64> = comp.iter().map(|z| z.im).collect();
        for (d, z) in density.iter_mut().zip(comp) {
            *d += z.norm_sqr();
        }
        for (a, cur) in currents.iter_mut().enumerate() {
            let k = derivative_wavenumbers(grid, a);
            let d_re = real_derivative(&fft, &k, &re, a);
            // Im(Psi^* d Psi) = re * d(im) - im * d(re)
            let d_im = if im.iter().all(|&x| x == 0.0) {
                vec![0.0; total]
            } else {
                real_derivative(&fft, &k, &im, a)
            };
            for i in 0..total {
                cur[i] += re[i] * d_im[i] - im[i] * d_re[i];
            }
        }
    }
    let max_density = density.iter().cloned().fold(0.0, f64::max);
    let threshold = NODE_EPSILON_REL * max_density;
    let node_mask: Vec<bool> = density.iter().map(|&d| !(d >= threshold) || d == 0.0).collect();
    let components = currents
        .into_iter()
        .enumerate()
        .map(|(a, cur)| {
            (0..total)
                .map(|i| {
                    if node_mask[i] {
                        0.0
                    } else {
                        hbar / masses[a] * cur[i] / density[i] + drift(a, i)
                    }
                })
                .collect()
        })
        .collect();
    VelocityField {
        grid: grid.clone(),
        components,
        node_mask,
        time: psi.time,
    }
}

/// The guidance velocity field of `psi` for particles with the masses in `roles`.
pub fn velocity_field(psi: &SpinorWaveFunction, roles: &[AxisRole], hbar: f64) -> Result<VelocityField> {
    let masses = masses_from_roles(psi.grid(), roles)?;
    Ok(guidance_field(psi, &masses, hbar, |_, _| 0.0))
}

/// The guidance velocity field of `psi` under `h`, including its drift terms.
pub fn velocity_field_for(psi: &SpinorWaveFunction, h: &Hamiltonian) -> Result<VelocityField> {
    if psi.grid() != h.grid() || psi.n_spin() != h.n_spin() {
        return Err(Error::GridMismatch(
            "wavefunction does not match the Hamiltonian's grid".into(),
        ));
    }
    Ok(guidance_field(psi, h.masses(), h.hbar(), |a, i| h.drift_at(a, i)))
}

/// Result of interpolating a velocity field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySample {
    pub velocity: Vec<f64>,
    /// True when the stencil touched a masked cell.
    pub near_node: bool,
    /// True when the speed was reduced to the cap.
    pub capped: bool,
}

/// Stencil of the `2^n` cells surrounding `point`, with multilinear weights.
fn stencil(grid: &Grid, point: &[f64], mut visit: impl FnMut(usize, f64)) {
    let n_axes = grid.n_axes();
    let strides = grid.strides();
    let mut lo = [0usize; 4];
    let mut hi = [0usize; 4];
    let mut frac = [0.0f64; 4];
    for a in 0..n_axes {
        let ax = grid.axis(a);
        let n = ax.n_points as isize;
        let u = (ax.wrap(point[a]) - ax.lower) / ax.spacing() - 0.5;
        let i0 = u.floor();
        frac[a] = u - i0;
        let i0 = i0 as isize;
        lo[a] = i0.rem_euclid(n) as usize;
        hi[a] = (i0 + 1).rem_euclid(n) as usize;
    }
    for corner in 0..(1usize << n_axes) {
        let mut flat = 0;
        let mut w = 1.0;
        for a in 0..n_axes {
            if corner >> a & 1 == 1 {
                flat += hi[a] * strides[a];
                w *= frac[a];
            } else {
                flat += lo[a] * strides[a];
                w *= 1.0 - frac[a];
            }
        }
        visit(flat, w);
    }
}

/// Multilinear interpolation of one or two velocity fields blended in time
/// (`(1 - s) a + s b`) at `point`; returns (near node flag, capped flag).
fn interpolate_blend(
    a: &VelocityField,
    b: Option<(&VelocityField, f64)>,
    point: &[f64],
    speed_cap: f64,
    out: &mut [f64],
) -> (bool, bool) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut near_node = false;
    let n_axes = out.len();
    stencil(&a.grid, point, |flat, w| match b {
        None => {
            near_node |= a.node_mask[flat];
            for (ax, o) in out.iter_mut().enumerate() {
                *o += w * a.components[ax][flat];
            }
        }
        Some((b, s)) => {
            near_node |= a.node_mask[flat] || b.node_mask[flat];
            for (ax, o) in out.iter_mut().enumerate().take(n_axes) {
                *o += w * ((1.0 - s) * a.components[ax][flat] + s * b.components[ax][flat]);
            }
        }
    });
    let speed = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut capped = false;
    if speed > speed_cap || !speed.is_finite() {
        let f = if speed.is_finite() { speed_cap / speed } else { 0.0 };
        out.iter_mut().for_each(|v| *v *= f);
        capped = true;
    }
    (near_node, capped)
}

/// Velocity at an arbitrary configuration point (periodically wrapped).
pub fn interpolate_velocity(v: &VelocityField, point: &[f64], speed_cap: f64) -> VelocitySample {
    let mut out = vec![0.0; v.grid.n_axes()];
    let (near_node, capped) = interpolate_blend(v, None, point, speed_cap, &mut out);
    VelocitySample {
        velocity: out,
        near_node,
        capped,
    }
}

/// Ensemble of configuration points `Q(t)`.
///
/// Trajectory `i` was drawn from random stream `stream_base + i` of `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    n_axes: usize,
    positions: Vec<f64>,
    pub time: f64,
    pub seed: u64,
    pub stream_base: u64,
}

impl TrajectorySet {
    pub fn new(n_axes: usize, positions: Vec<f64>, time: f64, seed: u64) -> Result<Self> {
        if n_axes == 0 || positions.is_empty() || !positions.len().is_multiple_of(n_axes) {
            return Err(Error::param(
                "positions",
                "need at least one trajectory with one coordinate per axis",
            ));
        }
        Ok(TrajectorySet {
            n_axes,
            positions,
            time,
            seed,
            stream_base: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.n_axes
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn n_axes(&self) -> usize {
        self.n_axes
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.n_axes..(i + 1) * self.n_axes]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    /// Coordinate `axis` of every trajectory.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.positions.chunks(self.n_axes).map(|p| p[axis]).collect()
    }

    /// Trajectories `range` as their own set (stream indices follow).
    pub fn slice(&self, range: std::ops::Range<usize>) -> TrajectorySet {
        TrajectorySet {
            n_axes: self.n_axes,
            positions: self.positions[range.start * self.n_axes..range.end * self.n_axes].to_vec(),
            time: self.time,
            seed: self.seed,
            stream_base: self.stream_base + range.start as u64,
        }
    }

    /// Concatenates sets with the same axis count (provenance of the first is kept).
    pub fn concat(sets: &[TrajectorySet]) -> Result<TrajectorySet> {
        let first = sets
            .first()
            .ok_or_else(|| Error::param("sets", "nothing to concatenate"))?;
        if sets.iter().any(|s| s.n_axes != first.n_axes) {
            return Err(Error::param("sets", "axis counts differ"));
        }
        let mut out = first.clone();
        for s in &sets[1..] {
            out.positions.extend_from_slice(&s.positions);
        }
        Ok(out)
    }

    /// Mirror image `q_axis -> -q_axis` of every trajectory.
    pub fn mirrored(&self, axis: usize) -> TrajectorySet {
        let mut out = self.clone();
        for p in out.positions.chunks_mut(self.n_axes) {
            p[axis] = -p[axis];
        }
        out
    }
}

/// Outcome of one ensemble step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Number of stage evaluations where the speed cap was applied.
    pub cap_triggers: u64,
}

/// One RK4 step of every trajectory through the time-blended velocity
/// field, `v(t + s dt) = (1 - s) v_start + s v_end`, with periodic wrap.
pub fn advance_with_fields(
    traj: &TrajectorySet,
    v_start: &VelocityField,
    v_end: &VelocityField,
    dt: f64,
    speed_cap: f64,
) -> Result<(TrajectorySet, StepStats)> {
    let grid = v_start.grid();
    if grid != v_end.grid() || grid.n_axes() != traj.n_axes {
        return Err(Error::GridMismatch(
            "velocity fields and trajectories disagree on the grid".into(),
        ));
    }
    let n = traj.n_axes;
    let mut out = traj.clone();
    let caps: u64 = out
        .positions
        .par_chunks_mut(n)
        .map(|p| {
            let mut caps = 0u64;
            let mut k1 = [0.0; 4];
            let mut k2 = [0.0; 4];
            let mut k3 = [0.0; 4];
            let mut k4 = [0.0; 4];
            let mut tmp = [0.0; 4];
            let mut eval = |s: f64, x: &[f64], k: &mut [f64]| {
                let blend = if s == 0.0 { None } else { Some((v_end, s)) };
                let (_, capped) = interpolate_blend(v_start, blend, x, speed_cap, k);
                caps += capped as u64;
            };
            eval(0.0, p, &mut k1[..n]);
            for a in 0..n {
                tmp[a] = p[a] + 0.5 * dt * k1[a];
            }
            eval(0.5, &tmp[..n], &mut k2[..n]);
            for a in 0..n {
                tmp[a] = p[a] + 0.5 * dt * k2[a];
            }
            eval(0.5, &tmp[..n], &mut k3[..n]);
            for a in 0..n {
                tmp[a] = p[a] + dt * k3[a];
            }
            eval(1.0, &tmp[..n], &mut k4[..n]);
            for a in 0..n {
                p[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
            grid.wrap(p);
            caps
        })
        .sum();
    out.time = traj.time + dt;
    Ok((out, StepStats { cap_triggers: caps }))
}

/// One RK4 step between two wavefunction snapshots.
pub fn advance_trajectories(
    traj: &TrajectorySet,
    psi_start: &SpinorWaveFunction,
    psi_end: &SpinorWaveFunction,
    roles: &[AxisRole],
    hbar: f64,
    speed_cap: f64,
) -> Result<(TrajectorySet, StepStats)> {
    psi_start.check_compatible(psi_end)?;
    let dt = psi_end.time - psi_start.time;
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let va = velocity_field(psi_start, roles, hbar)?;
    let vb = velocity_field(psi_end, roles, hbar)?;
    advance_with_fields(traj, &va, &vb, dt, speed_cap)
}

/// Grid L2 norm of `d|Psi|^2/dt + div(|Psi|^2 v)` between two snapshots,
/// with a centred time difference and the flux divergence averaged over the ends.
pub fn continuity_residual(
    psi_start: &SpinorWaveFunction,
    psi_end: &SpinorWaveFunction,
    v_start: &VelocityField,
    v_end: &VelocityField,
) -> Result<f64> {
    psi_start.check_compatible(psi_end)?;
    let grid = psi_start.grid();
    if v_start.grid() != grid || v_end.grid() != grid {
        return Err(Error::GridMismatch("velocity field grid differs".into()));
    }
    let dt = psi_end.time - psi_start.time;
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let fft = GridFft::new(grid);
    let ra = psi_start.density();
    let rb = psi_end.density();
    let mut residual: Vec<f64> = ra.values().iter().zip(rb.values()).map(|(a, b)| (b - a) / dt).collect();
    for (rho, v) in [(&ra, v_start), (&rb, v_end)] {
        for a in 0..grid.n_axes() {
            let flux: Vec<f64> = rho.values().iter().zip(v.component(a)).map(|(r, v)| r * v).collect();
            let k = derivative_wavenumbers(grid, a);
            let div = real_derivative(&fft, &k, &flux, a);
            for (r, d) in residual.iter_mut().zip(div) {
                *r += 0.5 * d;
            }
        }
    }
    Ok((residual.iter().map(|r| r * r).sum::<f64>() * grid.cell_volume()).sqrt())
}

/// Axis-0 velocity at `(x1, x2_a)` and `(x1, x2_b)` for a two-axis wavefunction.
pub fn nonlocality_probe(
    psi: &SpinorWaveFunction,
    roles: &[AxisRole],
    hbar: f64,
    x1: f64,
    x2_a: f64,
    x2_b: f64,
) -> Result<(f64, f64)> {
    if psi.grid().n_axes() != 2 {
        return Err(Error::param("psi", "the probe needs a two-axis grid"));
    }
    let v = velocity_field(psi, roles, hbar)?;
    let at = |x2: f64| -> Result<f64> {
        let s = interpolate_velocity(&v, &[x1, x2], f64::INFINITY);
        if s.near_node {
            return Err(Error::MaskedPoint);
        }
        Ok(s.velocity[0])
    };
    Ok((at(x2_a)?, at(x2_b)?))
}

/// Recorded ensemble positions at a sequence of times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryHistory {
    pub times: Vec<f64>,
    pub frames: Vec<TrajectorySet>,
}

impl TrajectoryHistory {
    pub fn push(&mut self, traj: &TrajectorySet) {
        self.times.push(traj.time);
        self.frames.push(traj.clone());
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// CSV with columns `trajectory_id,time,q0,q1,...`, trajectory-major.
    pub fn write_csv<W: Write>(&self, mut w: W, max_trajectories: usize) -> io::Result<()> {
        let Some(first) = self.frames.first() else {
            return writeln!(w, "trajectory_id,time");
        };
        let n_axes = first.n_axes();
        write!(w, "trajectory_id,time")?;
        for a in 0..n_axes {
            write!(w, ",q{a}")?;
        }
        writeln!(w)?;
        for i in 0..first.len().min(max_trajectories) {
            for f in &self.frames {
                write!(w, "{i},{}", f.time)?;
                for x in f.position(i) {
                    write!(w, ",{x}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// True when, on `axis`, the ordering of all trajectories is the same in
    /// every recorded frame (strict: no ties appear where none existed).
    pub fn ordering_preserved(&self, axis: usize) -> bool {
        let Some(first) = self.frames.first() else {
            return true;
        };
        let x0 = first.coordinate(axis);
        let mut order: Vec<usize> = (0..x0.len()).collect();
        order.sort_by(|&i, &j| x0[i].total_cmp(&x0[j]));
        self.frames.iter().all(|f| {
            let x = f.coordinate(axis);
            order.windows(2).all(|w| x0[w[0]] == x0[w[1]] || x[w[0]] < x[w[1]])
        })
    }
}

/// Earliest time each trajectory crosses `q_axis = threshold`, linearly
/// interpolated between recorded frames. Jumps longer than half of `period`
/// (periodic wrap-around) are not crossings.
///
/// This is a trajectory-level diagnostic; arrival statistics at the level of
/// pointer readouts do not depend on it.
pub fn first_crossing_times(
    history: &TrajectoryHistory,
    axis: usize,
    threshold: f64,
    period: Option<f64>,
) -> Vec<Option<f64>> {
    let Some(first) = history.frames.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            for w in history.frames.windows(2) {
                let (x0, x1) = (w[0].position(i)[axis], w[1].position(i)[axis]);
                if let Some(p) = period {
                    if (x1 - x0).abs() > 0.5 * p {
                        continue;
                    }
                }
                let (d0, d1) = (x0 - threshold, x1 - threshold);
                if d0 == 0.0 {
                    continue;
                }
                if d1 == 0.0 || (d0 < 0.0) != (d1 < 0.0) {
                    let f = d0 / (d0 - d1);
                    return Some(w[0].time + f * (w[1].time - w[0].time));
                }
            }
            None
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, Role};
    use crate::propagator::{evolve_to, Hamiltonian};
    use crate::state::gaussian_amplitude;
    use std::f64::consts::PI;

    fn roles1(m: f64) -> Vec<AxisRole> {
        vec![AxisRole::new(0, Role::System, 0, m)]
    }

    #[test]
    fn plane_wave_velocity() {
        let g = Grid::line(64, 0.0, 2.0 * PI).unwrap();
        let amp = (2.0 * PI).powf(-0.5);
        let p = 4.0;
        let m = 1.7;
        let psi = SpinorWaveFunction::from_fn(g, |q| Complex64::from_polar(amp, p * q[0])).unwrap();
        let v = velocity_field(&psi, &roles1(m), 1.0).unwrap();
        for x in v.component(0) {
            assert!((x - p / m).abs() < 1e-10);
        }
    }

    #[test]
    fn real_gaussian_has_zero_velocity() {
        let g = Grid::line(256, -16.0, 16.0).unwrap();
        let psi = SpinorWaveFunction::from_fn(g, |q| gaussian_amplitude(q[0], 0.3, 1.0, 0.0, 1.0)).unwrap();
        let v = velocity_field(&psi, &roles1(1.0), 1.0).unwrap();
        for x in v.component(0) {
            assert!(x.abs() < 1e-12);
        }
    }

    /// Closed-form velocity of the freely spreading Gaussian, coded from
    /// the phase `x^2 tau / (4 sigma^2 (1 + tau^2))`, `tau = hbar t / (2 m sigma^2)`.
    fn spreading_velocity(x: f64, t: f64, sigma: f64, m: f64, hbar: f64) -> f64 {
        let tau = hbar * t / (2.0 * m * sigma * sigma);
        hbar / m * x * tau / (2.0 * sigma * sigma * (1.0 + tau * tau))
    }

    #[test]
    fn spreading_gaussian_velocity_matches_closed_form() {
        let g = Grid::line(1024, -40.0, 40.0).unwrap();
        let roles = roles1(1.0);
        let psi = SpinorWaveFunction::from_fn(g.clone(), |q| gaussian_amplitude(q[0], 0.0, 1.0, 0.0, 1.0)).unwrap();
        let h = Hamiltonian::free(&g, 1, &roles, 1.0).unwrap();
        let t = 1.5;
        let psi_t = evolve_to(&psi, &h, t, 0.1, &[]).unwrap().pop().unwrap();
        let v = velocity_field(&psi_t, &roles, 1.0).unwrap();
        let rho = psi_t.density();
        for (i, x) in g.axis(0).nodes().iter().enumerate() {
            // compare where the density is appreciable (|x| < 6 sigma(t))
            if rho.values()[i] > 1e-8 {
                let exact = spreading_velocity(*x, t, 1.0, 1.0, 1.0);
                assert!((v.component(0)[i] - exact).abs() < 1e-8, "x={x}");
            }
        }
    }

    #[test]
    fn global_phase_and_galilean_boost() {
        let g = Grid::line(256, -16.0, 16.0).unwrap();
        let roles = roles1(2.0);
        let psi = SpinorWaveFunction::from_fn(g.clone(), |q| {
            gaussian_amplitude(q[0], 0.0, 1.0, 0.5, 1.0) + gaussian_amplitude(q[0], 2.0, 0.7, -1.0, 1.0)
        })
        .unwrap()
        .normalize()
        .unwrap();
        let v = velocity_field(&psi, &roles, 1.0).unwrap();
        let vp = velocity_field(&psi.with_global_phase(1.234), &roles, 1.0).unwrap();
        let rho = psi.density();
        for i in 0..g.total_points() {
            if rho.values()[i] > 1e-8 {
                assert!((v.component(0)[i] - vp.component(0)[i]).abs() < 1e-10);
            }
        }
        // boost by u: m u / hbar must be a grid wavenumber (multiple of 2 pi / 32)
        let k = 2.0 * PI / 32.0 * 5.0;
        let u = k / 2.0;
        let boosted = psi.multiplied_by(|q| Complex64::from_polar(1.0, k * q[0]));
        let vb = velocity_field(&boosted, &roles, 1.0).unwrap();
        for i in 0..g.total_points() {
            if !v.node_mask()[i] {
                assert!((vb.component(0)[i] - v.component(0)[i] - u).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn interpolation_cases() {
        let g = Grid::line(16, 0.0, 16.0).unwrap();
        let psi = SpinorWaveFunction::from_fn(g.clone(), |_| Complex64::new(0.25, 0.0)).unwrap();
        let mut v = velocity_field(&psi, &roles1(1.0), 1.0).unwrap();
        // linear field on nodes 0.5 .. 15.5
        v.components[0] = g.axis(0).nodes();
        let s = interpolate_velocity(&v, &[3.5], f64::INFINITY);
        assert_eq!(s.velocity[0], 3.5);
        let s = interpolate_velocity(&v, &[7.0], f64::INFINITY);
        assert!((s.velocity[0] - 7.0).abs() < 1e-12);
        v.components[0] = vec![2.5; 16];
        for x in [0.1, 3.3, 15.9, 17.2, -4.0] {
            assert!((interpolate_velocity(&v, &[x], f64::INFINITY).velocity[0] - 2.5).abs() < 1e-12);
        }
        let capped = interpolate_velocity(&v, &[1.0], 1.0);
        assert!(capped.capped && (capped.velocity[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn masked_cells_are_flagged() {
        let g = Grid::line(64, -8.0, 8.0).unwrap();
        // node at the origin of an odd wavefunction
        let psi = SpinorWaveFunction::from_fn(g.clone(), |q| {
            Complex64::new(q[0] * (-q[0] * q[0] / 2.0).exp(), 0.0) * if q[0].abs() < 0.2 { 0.0 } else { 1.0 }
        })
        .unwrap();
        let v = velocity_field(&psi, &roles1(1.0), 1.0).unwrap();
        assert!(v.masked_count() >= 2);
        let s = interpolate_velocity(&v, &[0.0], 5.0);
        assert!(s.near_node);
    }

    #[test]
    fn plane_wave_trajectories_move_uniformly() {
        let g = Grid::line(64, 0.0, 2.0 * PI).unwrap();
        let amp = (2.0 * PI).powf(-0.5);
        let p = 3.0;
        let roles = roles1(1.0);
        let psi = SpinorWaveFunction::from_fn(g.clone(), |q| Complex64::from_polar(amp, p * q[0])).unwrap();
        let h = Hamiltonian::free(&g, 1, &roles, 1.0).unwrap();
        let dt = 0.01;
        let next = evolve_to(&psi, &h, dt, dt, &[]).unwrap().pop().unwrap();
        let traj = TrajectorySet::new(1, vec![0.3, 1.7, 4.0], 0.0, 0).unwrap();
        let (out, stats) = advance_trajectories(&traj, &psi, &next, &roles, 1.0, 1e3).unwrap();
        assert_eq!(stats.cap_triggers, 0);
        for (a, b) in traj.positions().iter().zip(out.positions()) {
            assert!((b - a - p * dt).abs() < 1e-12);
        }
    }

    #[test]
    fn spreading_gaussian_trajectory_matches_closed_form() {
        let g = Grid::line(1024, -40.0, 40.0).unwrap();
        let roles = roles1(1.0);
        let psi = SpinorWaveFunction::from_fn(g.clone(), |q| gaussian_amplitude(q[0], 0.0, 1.0, 0.0, 1.0)).unwrap();
        let h = Hamiltonian::free(&g, 1, &roles, 1.0).unwrap();
        let starts = vec![-2.0, -0.5, 0.25, 1.0, 2.5];
        let mut traj = TrajectorySet::new(1, starts.clone(), 0.0, 0).unwrap();
        let t_end = 4.0;
        let dt = 0.02;
        let mut cur = psi;
        let mut v0 = velocity_field(&cur, &roles, 1.0).unwrap();
        while cur.time < t_end - 1e-12 {
            let next = evolve_to(&cur, &h, cur.time + dt, dt, &[]).unwrap().pop().unwrap();
            let v1 = velocity_field(&next, &roles, 1.0).unwrap();
            traj = advance_with_fields(&traj, &v0, &v1, dt, 1e3).unwrap().0;
            cur = next;
            v0 = v1;
        }
        let growth = (1.0f64 + (t_end / 2.0).powi(2)).sqrt();
        for (x0, x) in starts.iter().zip(traj.positions()) {
            let exact = x0 * growth;
            assert!(((x - exact) / exact).abs() < 1e-4, "{x} vs {exact}");
        }
    }

    fn entangled(relative_phase: f64, product: bool) -> SpinorWaveFunction {
        let g = Grid::new(vec![Axis::new(128, -16.0, 16.0); 2]).unwrap();
        SpinorWaveFunction::from_fn(g, |q| {
            let (x1, x2) = (q[0], q[1]);
            let a = gaussian_amplitude(x1, 0.0, 1.0, 1.0, 1.0) * gaussian_amplitude(x2, -4.0, 1.0, 0.0, 1.0);
            let b = gaussian_amplitude(x1, 0.0, 1.0, -1.0, 1.0) * gaussian_amplitude(x2, 4.0, 1.0, 0.0, 1.0);
            if product {
                gaussian_amplitude(x1, 0.0, 1.0, 1.0, 1.0)
                    * (gaussian_amplitude(x2, -4.0, 1.0, 0.0, 1.0) + gaussian_amplitude(x2, 4.0, 1.0, 0.0, 1.0))
            } else {
                a + b * Complex64::from_polar(1.0, relative_phase)
            }
        })
        .unwrap()
        .normalize()
        .unwrap()
    }

    fn roles2() -> Vec<AxisRole> {
        vec![
            AxisRole::new(0, Role::System, 0, 1.0),
            AxisRole::new(1, Role::Rest, 1, 1.0),
        ]
    }

    #[test]
    fn nonlocality_probe_cases() {
        let (a, b) = nonlocality_probe(&entangled(0.0, true), &roles2(), 1.0, 0.0, -4.0, 4.0).unwrap();
        assert!((a - b).abs() < 1e-10);
        let (a, b) = nonlocality_probe(&entangled(PI / 3.0, false), &roles2(), 1.0, 0.0, -4.0, 4.0).unwrap();
        assert!((a - b).abs() > 0.1, "{a} {b}");
        let (c, d) = nonlocality_probe(&entangled(PI / 3.0, false), &roles2(), 1.0, 0.0, 4.0, -4.0).unwrap();
        assert_eq!((a, b), (d, c));
    }

    #[test]
    fn continuity_residual_cases() {
        // stationary oscillator ground state, exact stationary evolution
        let g = Grid::line(256, -16.0, 16.0).unwrap();
        let roles = roles1(1.0);
        let s = 0.5f64.sqrt();
        let gs = SpinorWaveFunction::from_fn(g.clone(), |q| gaussian_amplitude(q[0], 0.0, s, 0.0, 1.0)).unwrap();
        let mut later = gs.with_global_phase(-0.5 * 0.01);
        later.time = 0.01;
        let va = velocity_field(&gs, &roles, 1.0).unwrap();
        let vb = velocity_field(&later, &roles, 1.0).unwrap();
        assert!(continuity_residual(&gs, &later, &va, &vb).unwrap() < 1e-8);

        // free Gaussian: centred differences converge at second order
        let g = Grid::line(512, -32.0, 32.0).unwrap();
        let psi = SpinorWaveFunction::from_fn(g.clone(), |q| gaussian_amplitude(q[0], 0.0, 1.0, 0.5, 1.0)).unwrap();
        let h = Hamiltonian::free(&g, 1, &roles, 1.0).unwrap();
        let t0 = evolve_to(&psi, &h, 1.0, 0.1, &[]).unwrap().pop().unwrap();
        let res = |dt: f64| {
            let t1 = evolve_to(&t0, &h, 1.0 + dt, dt, &[]).unwrap().pop().unwrap();
            let va = velocity_field(&t0, &roles, 1.0).unwrap();
            let vb = velocity_field(&t1, &roles, 1.0).unwrap();
            (
                continuity_residual(&t0, &t1, &va, &vb).unwrap(),
                continuity_residual(&t0, &t1, &va.scaled(2.0), &vb.scaled(2.0)).unwrap(),
            )
        };
        let (r1, bad) = res(0.1);
        let (r2, _) = res(0.05);
        let ratio = r1 / r2;
        assert!((3.6..=4.4).contains(&ratio), "ratio {ratio}");
        assert!(bad > 10.0 * r1, "{bad} vs {r1}");
    }

    #[test]
    fn crossing_times() {
        let mut h = TrajectoryHistory::default();
        for step in 0..=10 {
            let t = step as f64 * 0.1;
            let mut s = TrajectorySet::new(1, vec![-1.0 + 2.0 * t, -0.5 - t], t, 0).unwrap();
            s.time = t;
            h.push(&s);
        }
        let c = first_crossing_times(&h, 0, 0.0, None);
        assert!((c[0].unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(c[1], None);
        assert!(!h.ordering_preserved(0));
        let mut csv = Vec::new();
        h.write_csv(&mut csv, 10).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("trajectory_id,time,q0\n0,0,-1\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 11);
    }
}
