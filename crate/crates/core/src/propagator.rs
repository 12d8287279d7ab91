//! Unitary time evolution by symmetric (Strang) operator splitting.
//!
//! The Hamiltonian is
//!
//! ```text
//! H = sum_a p_a^2 / 2 m_a  +  V(q)  +  sum_d D_d(q) p_{a_d}
//! ```
//!
//! where `V` is an `n_spin x n_spin` Hermitian matrix field and every drift
//! term `D_d` is a real field that does not depend on its own axis `a_d`. A
//! drift term generates a configuration-dependent translation along `a_d`; it
//! is how pointer couplings `g K (x) p_pointer` are expressed. One step is
//!
//! ```text
//! e^{-iV dt/2} e^{-iD dt/2} e^{-iT dt} e^{-iD dt/2} e^{-iV dt/2}
//! ```
//!
//! with the potential applied cell by cell (a matrix exponential over spin
//! indices), drifts applied in the mixed position/momentum representation and
//! the kinetic term applied exactly in momentum space.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::GridFft;
use crate::grid::{masses_from_roles, AxisRole, Grid};
use crate::state::SpinorWaveFunction;

const HERMITIAN_TOL: f64 = 1e-12;

/// Potential energy field.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Zero,
    /// Same scalar potential for every spin component.
    Scalar(Vec<f64>),
    /// One scalar field per spin component (no spin mixing).
    Diagonal(Vec<Vec<f64>>),
    /// Full `n_spin x n_spin` matrix per cell, row-major, cell-major
    /// (`values[cell * n * n + row * n + col]`). Only `n_spin <= 2`.
    Matrix(Vec<Complex64>),
}

/// Configuration-dependent translation generator `D(q) p_axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    pub axis: usize,
    /// Velocity-valued field over the grid, constant along `axis`.
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    grid: Grid,
    n_spin: usize,
    masses: Vec<f64>,
    hbar: f64,
    potential: Potential,
    drifts: Vec<Drift>,
}

impl Hamiltonian {
    /// Free Hamiltonian with masses taken from `roles`.
    pub fn free(grid: &Grid, n_spin: usize, roles: &[AxisRole], hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::param("hbar", "must be positive"));
        }
        if n_spin == 0 {
            return Err(Error::param("n_spin", "must be at least 1"));
        }
        Ok(Hamiltonian {
            grid: grid.clone(),
            n_spin,
            masses: masses_from_roles(grid, roles)?,
            hbar,
            potential: Potential::Zero,
            drifts: Vec::new(),
        })
    }

    pub fn with_potential(mut self, potential: Potential) -> Result<Self> {
        let total = self.grid.total_points();
        let n = self.n_spin;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match &potential {
            Potential::Zero => {}
            Potential::Scalar(v) => {
                if v.len() != total || !finite(v) {
                    return Err(Error::InvalidHamiltonian(
                        "scalar potential must be finite with one value per cell".into(),
                    ));
                }
            }
            Potential::Diagonal(vs) => {
                if vs.len() != n || vs.iter().any(|v| v.len() != total || !finite(v)) {
                    return Err(Error::InvalidHamiltonian(
                        "diagonal potential needs one finite field per spin component".into(),
                    ));
                }
            }
            Potential::Matrix(m) => {
                if n > 2 {
                    return Err(Error::InvalidHamiltonian(
                        "matrix potentials support at most two spin components".into(),
                    ));
                }
                if m.len() != total * n * n {
                    return Err(Error::InvalidHamiltonian("matrix potential has wrong size".into()));
                }
                for cell in 0..total {
                    let b = &m[cell * n * n..(cell + 1) * n * n];
                    for r in 0..n {
                        for c in 0..n {
                            let (x, y) = (b[r * n + c], b[c * n + r]);
                            if !(x.re.is_finite() && x.im.is_finite()) {
                                return Err(Error::InvalidHamiltonian("non-finite potential value".into()));
                            }
                            if (x - y.conj()).norm() > HERMITIAN_TOL {
                                return Err(Error::InvalidHamiltonian(format!(
                                    "potential is not Hermitian at cell {cell}"
                                )));
                            }
                        }
                    }
                }
            }
        }
        self.potential = potential;
        Ok(self)
    }

    /// Convenience: scalar potential evaluated at every node.
    pub fn with_scalar_potential(self, v: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = self.grid.map_nodes(v);
        self.with_potential(Potential::Scalar(values))
    }

    pub fn with_drift(mut self, drift: Drift) -> Result<Self> {
        let total = self.grid.total_points();
        if drift.axis >= self.grid.n_axes() {
            return Err(Error::InvalidHamiltonian("drift axis out of range".into()));
        }
        if drift.velocity.len() != total || drift.velocity.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidHamiltonian(
                "drift field must be finite with one value per cell".into(),
            ));
        }
        if self.drifts.iter().any(|d| d.axis == drift.axis) {
            return Err(Error::InvalidHamiltonian(format!(
                "axis {} already carries a drift term",
                drift.axis
            )));
        }
        let stride = self.grid.strides()[drift.axis];
        let n = self.grid.axis(drift.axis).n_points;
        for flat in 0..total {
            let i = (flat / stride) % n;
            let base = flat - i * stride;
            if (drift.velocity[flat] - drift.velocity[base]).abs() > 1e-12 {
                return Err(Error::InvalidHamiltonian(format!(
                    "drift on axis {} must not depend on that axis",
                    drift.axis
                )));
            }
        }
        self.drifts.push(drift);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_spin(&self) -> usize {
        self.n_spin
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn drifts(&self) -> &[Drift] {
        &self.drifts
    }

    /// Drift velocity on `axis` at flattened cell `flat` (0 when none).
    pub fn drift_at(&self, axis: usize, flat: usize) -> f64 {
        self.drifts
            .iter()
            .find(|d| d.axis == axis)
            .map_or(0.0, |d| d.velocity[flat])
    }

    /// Largest potential magnitude (spectral bound) over all cells.
    pub fn max_potential(&self) -> f64 {
        let n = self.n_spin;
        match &self.potential {
            Potential::Zero => 0.0,
            Potential::Scalar(v) => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Potential::Diagonal(vs) => vs.iter().flat_map(|v| v.iter()).fold(0.0, |m, x| m.max(x.abs())),
            Potential::Matrix(mat) => mat
                .chunks(n * n)
                .map(|b| b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        }
    }

    fn check_state(&self, psi: &SpinorWaveFunction) -> Result<()> {
        if psi.grid() != &self.grid || psi.n_spin() != self.n_spin {
            return Err(Error::GridMismatch(
                "wavefunction does not match the Hamiltonian's grid".into(),
            ));
        }
        Ok(())
    }
}

/// Default step: `max|V| dt / hbar <= 0.05`, the kinetic phase at the Nyquist
/// momentum `<= 0.5` rad, and the drift phase at the Nyquist momentum `<= 0.5` rad.
pub fn default_time_step(h: &Hamiltonian) -> f64 {
    let mut dt = f64::INFINITY;
    let vmax = h.max_potential();
    if vmax > 0.0 {
        dt = dt.min(0.05 * h.hbar / vmax);
    }
    for (a, ax) in h.grid.axes().iter().enumerate() {
        let k = std::f64::consts::PI / ax.spacing();
        dt = dt.min(0.5 / (h.hbar * k * k / (2.0 * h.masses[a])));
    }
    for d in &h.drifts {
        let k = std::f64::consts::PI / h.grid.axis(d.axis).spacing();
        let dmax = d.velocity.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if dmax > 0.0 {
            dt = dt.min(0.5 / (dmax * k));
        }
    }
    dt
}

/// Precomputed propagator factors for one Hamiltonian and one signed step.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    dt: f64,
    n_spin: usize,
    total: usize,
    fft: GridFft,
    kinetic: Vec<Complex64>,
    half_potential: HalfPotential,
    half_drifts: Vec<(usize, Vec<Complex64>)>,
}

#[derive(Debug, Clone)]
enum HalfPotential {
    None,
    Scalar(Vec<Complex64>),
    Diagonal(Vec<Vec<Complex64>>),
    Matrix(Vec<[Complex64; 4]>),
}

impl SplitOperator {
    /// Builds the step operator for signed time step `dt` (negative steps run backwards).
    pub fn new(h: &Hamiltonian, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        let grid = &h.grid;
        let total = grid.total_points();
        let fft = GridFft::new(grid);
        let hbar = h.hbar;

        let kvecs: Vec<Vec<f64>> = grid.axes().iter().map(|a| a.wavenumbers()).collect();
        let kinetic: Vec<Complex64> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let e: f64 = (0..grid.n_axes())
                    .map(|a| {
                        let k = kvecs[a][fft.axis_index(flat, a)];
                        hbar * k * k / (2.0 * h.masses[a])
                    })
                    .sum();
                Complex64::from_polar(1.0, -e * dt)
            })
            .collect();

        let tau = dt / (2.0 * hbar);
        let phase = |v: &f64| Complex64::from_polar(1.0, -v * tau);
        let half_potential = match &h.potential {
            Potential::Zero => HalfPotential::None,
            Potential::Scalar(v) => HalfPotential::Scalar(v.iter().map(phase).collect()),
            Potential::Diagonal(vs) => {
                HalfPotential::Diagonal(vs.iter().map(|v| v.iter().map(phase).collect()).collect())
            }
            Potential::Matrix(m) => {
                if h.n_spin == 1 {
                    HalfPotential::Scalar(m.iter().map(|z| phase(&z.re)).collect())
                } else {
                    HalfPotential::Matrix(m.chunks(4).map(|b| expm_hermitian_2x2(b, tau)).collect())
                }
            }
        };

        let half_drifts = h
            .drifts
            .iter()
            .map(|d| {
                let k = grid.axis(d.axis).wavenumbers();
                let f = (0..total)
                    .map(|flat| {
                        let kk = k[fft.axis_index(flat, d.axis)];
                        Complex64::from_polar(1.0, -d.velocity[flat] * kk * dt / 2.0)
                    })
                    .collect();
                (d.axis, f)
            })
            .collect();

        Ok(SplitOperator {
            dt,
            n_spin: h.n_spin,
            total,
            fft,
            kinetic,
            half_potential,
            half_drifts,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_potential(&self, amps: &mut [Complex64]) {
        let total = self.total;
        match &self.half_potential {
            HalfPotential::None => {}
            HalfPotential::Scalar(f) => {
                for comp in amps.chunks_mut(total) {
                    comp.par_iter_mut().zip(f).for_each(|(z, w)| *z *= w);
                }
            }
            HalfPotential::Diagonal(fs) => {
                for (comp, f) in amps.chunks_mut(total).zip(fs) {
                    comp.par_iter_mut().zip(f).for_each(|(z, w)| *z *= w);
                }
            }
            HalfPotential::Matrix(u) => {
                let (up, down) = amps.split_at_mut(total);
                up.par_iter_mut()
                    .zip(down.par_iter_mut())
                    .zip(u.par_iter())
                    .for_each(|((a, b), m)| {
                        let (x, y) = (*a, *b);
                        *a = m[0] * x + m[1] * y;
                        *b = m[2] * x + m[3] * y;
                    });
            }
        }
    }

    fn apply_drifts(&self, amps: &mut [Complex64], reverse: bool) {
        let total = self.total;
        let mut order: Vec<&(usize, Vec<Complex64>)> = self.half_drifts.iter().collect();
        if reverse {
            order.reverse();
        }
        for (axis, f) in order {
            for comp in amps.chunks_mut(total) {
                self.fft.forward_axis(comp, *axis);
                comp.par_iter_mut().zip(f).for_each(|(z, w)| *z *= w);
                self.fft.inverse_axis(comp, *axis);
            }
        }
    }

    fn apply_kinetic(&self, amps: &mut [Complex64]) {
        for comp in amps.chunks_mut(self.total) {
            self.fft.forward(comp);
            comp.par_iter_mut().zip(&self.kinetic).for_each(|(z, w)| *z *= w);
            self.fft.inverse(comp);
        }
    }

    /// Advances `psi` in place by this operator's step.
    pub fn apply(&self, psi: &mut SpinorWaveFunction) -> Result<()> {
        debug_assert_eq!(psi.n_spin(), self.n_spin);
        let amps = psi.amplitudes_mut();
        self.apply_potential(amps);
        self.apply_drifts(amps, false);
        self.apply_kinetic(amps);
        self.apply_drifts(amps, true);
        self.apply_potential(amps);
        if !psi.all_finite() {
            return Err(Error::NonFiniteAmplitude);
        }
        psi.time += self.dt;
        Ok(())
    }
}

/// `exp(-i V tau)` for a 2x2 Hermitian block `[[a, b], [b*, d]]`.
fn expm_hermitian_2x2(b: &[Complex64], tau: f64) -> [Complex64; 4] {
    let a0 = 0.5 * (b[0].re + b[3].re);
    let z = 0.5 * (b[0].re - b[3].re);
    let off = b[1];
    let r = (z * z + off.norm_sqr()).sqrt();
    let global = Complex64::from_polar(1.0, -a0 * tau);
    let c = (r * tau).cos();
    // sin(r tau) / r, finite as r -> 0
    let s = if r * tau.abs() < 1e-8 { tau } else { (r * tau).sin() / r };
    let mi = Complex64::new(0.0, -1.0);
    [
        global * (c + mi * s * z),
        global * (mi * s * off),
        global * (mi * s * off.conj()),
        global * (c - mi * s * z),
    ]
}

/// One forward step of length `dt > 0`.
pub fn evolve_step(psi: &SpinorWaveFunction, h: &Hamiltonian, dt: f64) -> Result<SpinorWaveFunction> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeStep(dt));
    }
    h.check_state(psi)?;
    let mut out = psi.clone();
    SplitOperator::new(h, dt)?.apply(&mut out)?;
    Ok(out)
}

/// One backward step of length `dt > 0` (time decreases by `dt`).
pub fn reverse_step(psi: &SpinorWaveFunction, h: &Hamiltonian, dt: f64) -> Result<SpinorWaveFunction> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeStep(dt));
    }
    h.check_state(psi)?;
    let mut out = psi.clone();
    SplitOperator::new(h, -dt)?.apply(&mut out)?;
    Ok(out)
}

/// Piecewise-constant Hamiltonian: segment `i` is active on `[start_i, start_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSchedule {
    segments: Vec<(f64, Hamiltonian)>,
}

impl HamiltonianSchedule {
    pub fn constant(h: Hamiltonian) -> Self {
        HamiltonianSchedule {
            segments: vec![(f64::NEG_INFINITY, h)],
        }
    }

    /// Segments must have strictly increasing start times and share a grid.
    pub fn new(segments: Vec<(f64, Hamiltonian)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidHamiltonian("empty schedule".into()));
        }
        for w in segments.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidHamiltonian("schedule switch times must increase".into()));
            }
            if w[0].1.grid != w[1].1.grid || w[0].1.n_spin != w[1].1.n_spin {
                return Err(Error::InvalidHamiltonian(
                    "schedule segments must share grid and spin layout".into(),
                ));
            }
        }
        Ok(HamiltonianSchedule { segments })
    }

    pub fn segment_index(&self, t: f64) -> usize {
        self.segments.iter().rposition(|(start, _)| *start <= t).unwrap_or(0)
    }

    pub fn at(&self, t: f64) -> &Hamiltonian {
        &self.segments[self.segment_index(t)].1
    }

    pub fn segment(&self, i: usize) -> &Hamiltonian {
        &self.segments[i].1
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Finite switch times strictly inside `(t0, t1)`.
    pub fn switch_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        self.segments
            .iter()
            .map(|(s, _)| *s)
            .filter(|s| s.is_finite() && *s > t0 && *s < t1)
            .collect()
    }
}

/// Splits `[t0, t1]` into steps of at most `dt`; the last step is shortened.
pub fn step_sizes(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let span = t1 - t0;
    if !(span > 0.0) {
        return Vec::new();
    }
    let n_full = ((span / dt) * (1.0 - 1e-12)).floor() as usize;
    let mut steps = vec![dt; n_full];
    let rest = span - n_full as f64 * dt;
    if rest > 1e-12 * dt {
        steps.push(rest);
    } else if let Some(last) = steps.last_mut() {
        *last += rest;
    }
    steps
}

/// Evolves under `schedule` to `t_final`, returning snapshots at every time in
/// `snapshot_times` (sorted, within `[psi.time, t_final]`), or only the final
/// state when `snapshot_times` is empty. Snapshot times are hit exactly.
pub fn evolve_schedule(
    psi: &SpinorWaveFunction,
    schedule: &HamiltonianSchedule,
    t_final: f64,
    dt: f64,
    snapshot_times: &[f64],
) -> Result<Vec<SpinorWaveFunction>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeStep(dt));
    }
    if t_final < psi.time {
        return Err(Error::param("t_final", "must not precede the state's time"));
    }
    if snapshot_times.windows(2).any(|w| w[1] < w[0]) || snapshot_times.iter().any(|&t| t < psi.time || t > t_final) {
        return Err(Error::param(
            "snapshot_times",
            "must be sorted and lie within the evolution interval",
        ));
    }
    schedule.at(psi.time).check_state(psi)?;

    let mut stops: Vec<f64> = snapshot_times.to_vec();
    stops.extend(schedule.switch_times(psi.time, t_final));
    stops.push(t_final);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut out = Vec::new();
    let mut cur = psi.clone();
    let mut cache: Option<(usize, SplitOperator)> = None;
    let mut snap_iter = snapshot_times.iter().peekable();
    while snap_iter.peek().is_some_and(|&&t| t <= cur.time) {
        out.push(cur.clone());
        snap_iter.next();
    }
    for &stop in &stops {
        let seg = schedule.segment_index(cur.time);
        for h_step in step_sizes(cur.time, stop, dt) {
            if h_step == dt {
                if cache.as_ref().map(|c| c.0) != Some(seg) {
                    cache = Some((seg, SplitOperator::new(schedule.segment(seg), dt)?));
                }
                cache.as_ref().unwrap().1.apply(&mut cur)?;
            } else {
                SplitOperator::new(schedule.segment(seg), h_step)?.apply(&mut cur)?;
            }
        }
        cur.time = stop;
        while snap_iter.peek().is_some_and(|&&t| t <= cur.time) {
            out.push(cur.clone());
            snap_iter.next();
        }
    }
    if snapshot_times.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

/// [`evolve_schedule`] with a single time-independent Hamiltonian.
pub fn evolve_to(
    psi: &SpinorWaveFunction,
    h: &Hamiltonian,
    t_final: f64,
    dt: f64,
    snapshot_times: &[f64],
) -> Result<Vec<SpinorWaveFunction>> {
    evolve_schedule(
        psi,
        &HamiltonianSchedule::constant(h.clone()),
        t_final,
        dt,
        snapshot_times,
    )
}

/// `<psi|H|psi>`: kinetic part in momentum space, potential cell by cell,
/// drift terms in the mixed representation.
pub fn energy_expectation(psi: &SpinorWaveFunction, h: &Hamiltonian) -> Result<f64> {
    h.check_state(psi)?;
    let grid = &h.grid;
    let total = grid.total_points();
    let dv = grid.cell_volume();
    let fft = GridFft::new(grid);
    let kvecs: Vec<Vec<f64>> = grid.axes().iter().map(|a| a.wavenumbers()).collect();
    let hbar = h.hbar;

    let mut kinetic = 0.0;
    for alpha in 0..h.n_spin {
        let mut c = psi.component(alpha).to_vec();
        fft.forward(&mut c);
        for (flat, z) in c.iter().enumerate() {
            let t: f64 = (0..grid.n_axes())
                .map(|a| {
                    let k = kvecs[a][fft.axis_index(flat, a)];
                    hbar * hbar * k * k / (2.0 * h.masses[a])
                })
                .sum();
            kinetic += z.norm_sqr() * t;
        }
    }
    kinetic *= dv / total as f64;

    let n = h.n_spin;
    let mut potential = 0.0;
    match &h.potential {
        Potential::Zero => {}
        Potential::Scalar(v) => {
            for alpha in 0..n {
                potential += psi
                    .component(alpha)
                    .iter()
                    .zip(v)
                    .map(|(z, v)| z.norm_sqr() * v)
                    .sum::<f64>();
            }
        }
        Potential::Diagonal(vs) => {
            for (alpha, v) in vs.iter().enumerate() {
                potential += psi
                    .component(alpha)
                    .iter()
                    .zip(v)
                    .map(|(z, v)| z.norm_sqr() * v)
                    .sum::<f64>();
            }
        }
        Potential::Matrix(m) => {
            let amps = psi.amplitudes();
            for cell in 0..total {
                let b = &m[cell * n * n..(cell + 1) * n * n];
                for r in 0..n {
                    for c in 0..n {
                        potential += (amps[r * total + cell].conj() * b[r * n + c] * amps[c * total + cell]).re;
                    }
                }
            }
        }
    }
    potential *= dv;

    let mut drift = 0.0;
    for d in &h.drifts {
        let k = grid.axis(d.axis).wavenumbers();
        for alpha in 0..n {
            let comp = psi.component(alpha);
            let mut p = comp.to_vec();
            fft.forward_axis(&mut p, d.axis);
            for (flat, z) in p.iter_mut().enumerate() {
                *z *= hbar * k[fft.axis_index(flat, d.axis)];
            }
            fft.inverse_axis(&mut p, d.axis);
            drift += comp
                .iter()
                .zip(&p)
                .zip(&d.velocity)
                .map(|((a, pa), v)| v * (a.conj() * pa).re)
                .sum::<f64>();
        }
    }
    drift *= dv;

    Ok(kinetic + potential + drift)
}
