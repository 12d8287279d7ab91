use bohmian_core::phonon::{
    dense_frequencies, dominant_frequency, energy_centroid, extrapolated_sound_speed, integrate_atoms,
    interpretation1_trajectory, lorentz_boost_check, marginal_total_variation, normal_modes, quasiparticle_wave,
    wave_equation_residual, Dispersion, LatticeChain, OnePhononState, PhononField, QuasiparticleWave, SampleBox,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{at_least, conservation_checks, positive, record_times};
use crate::artifacts::{Cell, Check, CheckKind, Csv, Report};
use crate::error::{Context, RunnerError};

const DISP: &str = "phonon-dispersion";
const TRAJ: &str = "phonon-trajectories";
const BOOST: &str = "boost-check";

/// Chain constants shared by the lattice experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConstants {
    pub mass: f64,
    pub spring: f64,
    pub spacing: f64,
    pub hbar: f64,
}

impl Default for ChainConstants {
    fn default() -> Self {
        ChainConstants {
            mass: 1.0,
            spring: 1.0,
            spacing: 1.0,
            hbar: 1.0,
        }
    }
}

impl ChainConstants {
    fn chain(&self, n: usize) -> Result<LatticeChain, RunnerError> {
        LatticeChain::new(n, self.mass, self.spring, self.spacing, self.hbar)
            .map_err(|e| RunnerError::Validation(e.to_string()))
    }

    fn validate(&self) -> Result<(), RunnerError> {
        positive("chain.mass", self.mass)?;
        positive("chain.spring", self.spring)?;
        positive("chain.spacing", self.spacing)?;
        positive("chain.hbar", self.hbar)
    }
}

/// `(x, t)` sampling box centred on the packet, in lattice units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSettings {
    pub x_half_width: f64,
    pub nx: usize,
    pub t_max: f64,
    pub nt: usize,
}

impl BoxSettings {
    fn sample(&self, spacing: f64, sound_speed: f64) -> SampleBox {
        let tau = spacing / sound_speed;
        SampleBox {
            x_min: -self.x_half_width * spacing,
            x_max: self.x_half_width * spacing,
            nx: self.nx,
            t_min: 0.0,
            t_max: self.t_max * tau,
            nt: self.nt,
        }
    }

    fn validate(&self) -> Result<(), RunnerError> {
        positive("sample.x_half_width", self.x_half_width)?;
        positive("sample.t_max", self.t_max)?;
        at_least("sample.nx", self.nx, 2)?;
        at_least("sample.nt", self.nt, 2)
    }
}

/// `| sum |gamma_k(t)|^2 - 1 |` and the relative change of
/// `E_0 + hbar sum omega_k |gamma_k|^2` between the first and every later time.
fn closed_form_conservation(field: &PhononField, times: &[f64]) -> (f64, f64) {
    let omega = &field.modes().real_frequencies;
    let hbar = field.modes().chain().hbar;
    let e0: f64 = 0.5 * hbar * omega.iter().sum::<f64>();
    let moments = |t: f64| {
        let g = field.gamma(t);
        let norm: f64 = g.iter().map(|c| c.norm_sqr()).sum();
        let e: f64 = e0 + hbar * g.iter().zip(omega).map(|(c, w)| w * c.norm_sqr()).sum::<f64>();
        (norm, e)
    };
    let (_, e_start) = moments(times[0]);
    times.iter().fold((0.0, 0.0), |(dn, de), &t| {
        let (n, e) = moments(t);
        (dn.max((n - 1.0).abs()), de.max((e - e_start).abs() / e_start))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionParams {
    pub chain_sizes: Vec<usize>,
    pub oracle_tolerance: f64,
    pub sound_speed_tolerance: f64,
    /// `p0 a` of the single plane wave.
    pub single_mode_pa: f64,
    pub identity_tolerance: f64,
    pub packet_atoms: usize,
    pub packet_pa: Vec<f64>,
    /// Packet momentum spread as a fraction of `p0`.
    pub packet_width_ratio: f64,
    /// Allowed spread of `residual / (p0 a)^2` across the packets.
    pub scaling_tolerance: f64,
    pub chain: ChainConstants,
    pub sample: BoxSettings,
}

impl Default for DispersionParams {
    fn default() -> Self {
        DispersionParams {
            chain_sizes: vec![8, 64, 256],
            oracle_tolerance: 1e-10,
            sound_speed_tolerance: 1e-6,
            single_mode_pa: 0.1,
            identity_tolerance: 1e-6,
            packet_atoms: 8192,
            packet_pa: vec![0.05, 0.1, 0.2],
            packet_width_ratio: 0.1,
            scaling_tolerance: 0.2,
            chain: ChainConstants::default(),
            sample: BoxSettings {
                x_half_width: 150.0,
                nx: 61,
                t_max: 10.0,
                nt: 6,
            },
        }
    }
}

impl DispersionParams {
    pub fn validate(&self) -> Result<(), RunnerError> {
        self.chain.validate()?;
        self.sample.validate()?;
        if self.chain_sizes.is_empty() {
            return Err(RunnerError::validation("chain_sizes", "need at least one chain"));
        }
        for &n in self.chain_sizes.iter().chain([&self.packet_atoms]) {
            self.chain.chain(n)?;
        }
        positive("single_mode_pa", self.single_mode_pa)?;
        positive("packet_width_ratio", self.packet_width_ratio)?;
        if self.packet_pa.len() < 2 || self.packet_pa.iter().any(|p| !(*p > 0.0 && *p < std::f64::consts::PI)) {
            return Err(RunnerError::validation(
                "packet_pa",
                "need two or more values in (0, pi)",
            ));
        }
        Ok(())
    }
}

pub fn dispersion(p: &DispersionParams) -> Result<Report, RunnerError> {
    let mut report = Report::default();
    let mut table = Csv::new(&["n_atoms", "p", "omega", "omega_over_cs_p"]);
    let mut oracle = Csv::new(&["n_atoms", "index", "omega_analytic", "omega_dense"]);
    let mut worst: f64 = 0.0;
    for &n in &p.chain_sizes {
        let chain = p.chain.chain(n)?;
        let modes = normal_modes(&chain);
        let analytic = modes.sorted_frequencies();
        let dense = dense_frequencies(&chain);
        for (i, (a, d)) in analytic.iter().zip(&dense).enumerate() {
            worst = worst.max((a - d).abs());
            oracle.row(&[n.into(), i.into(), (*a).into(), (*d).into()]);
        }
        for (pp, w, r) in modes.dispersion_table() {
            table.row(&[n.into(), pp.into(), w.into(), r.into()]);
        }
        report.metric(&format!("orthonormality_error[{n}]"), modes.orthonormality_error());
    }
    report.metric("dense_oracle_max_error", worst);
    report.check(Check::below(
        "dense_oracle",
        CheckKind::Oracle,
        worst,
        p.oracle_tolerance,
    ));

    let largest = p.chain.chain(*p.chain_sizes.iter().max().expect("non-empty"))?;
    let cs = largest.sound_speed();
    let recovered = extrapolated_sound_speed(&normal_modes(&largest));
    report.metric("sound_speed", cs);
    report.metric("sound_speed_recovered", recovered);
    report.check(Check::below(
        "sound_speed_small_p",
        CheckKind::Analytic,
        (recovered - cs).abs() / cs,
        p.sound_speed_tolerance,
    ));

    let a = p.chain.spacing;
    let half = 0.5 * p.single_mode_pa;
    let identity = 1.0 - (half.sin() / half).powi(2);
    let plane = QuasiparticleWave::plane(&largest, p.single_mode_pa / a, Dispersion::Lattice);
    let sample = p.sample.sample(a, cs);
    let single = wave_equation_residual(&plane, &sample, cs);
    report.metric("single_mode_residual", single);
    report.metric("dispersion_identity", identity);
    report.check(Check::below(
        "single_mode_residual",
        CheckKind::Analytic,
        (single - identity).abs(),
        p.identity_tolerance,
    ));
    let linear = QuasiparticleWave::plane(&largest, p.single_mode_pa / a, Dispersion::Linear);
    let lin = wave_equation_residual(&linear, &sample, cs);
    report.metric("linear_surrogate_residual", lin);
    report.check(Check::below(
        "linear_surrogate_residual",
        CheckKind::Analytic,
        lin,
        1e-10,
    ));

    let chain = p.chain.chain(p.packet_atoms)?;
    let modes = normal_modes(&chain);
    let mut scaling = Csv::new(&["p0a", "residual", "residual_over_p0a2"]);
    let mut ratios = Vec::new();
    let mut conservation = (0.0_f64, 0.0_f64);
    for &pa in &p.packet_pa {
        let p0 = pa / a;
        let state = OnePhononState::gaussian_packet(&chain, p0, p.packet_width_ratio * p0, 0.0).during(DISP)?;
        let wave = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
        let r = wave_equation_residual(&wave, &sample, cs);
        scaling.row(&[pa.into(), r.into(), (r / (pa * pa)).into()]);
        report.metric(&format!("packet_residual[{pa}]"), r);
        ratios.push(r / (pa * pa));
        let field = PhononField::new(&modes, &state).during(DISP)?;
        let c = closed_form_conservation(&field, &[0.0, sample.t_max]);
        conservation = (conservation.0.max(c.0), conservation.1.max(c.1));
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    report.metric("residual_scaling_spread", hi / lo - 1.0);
    report.check(Check::below(
        "residual_quadratic_scaling",
        CheckKind::Analytic,
        hi / lo - 1.0,
        p.scaling_tolerance,
    ));
    conservation_checks(&mut report, conservation.0, &[conservation.1]);

    report.file("dispersion.csv", table.into_bytes());
    report.file("dense_oracle.csv", oracle.into_bytes());
    report.file("residual_scaling.csv", scaling.into_bytes());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhononTrajectoryParams {
    pub n_atoms: usize,
    /// Packet centre momentum times the spacing.
    pub packet_pa: f64,
    pub packet_width_ratio: f64,
    /// Initial packet centre in lattice spacings.
    pub packet_center: f64,
    pub duration: f64,
    pub dt: f64,
    pub ensemble_size: usize,
    pub record_interval: f64,
    pub speed_cap: f64,
    pub centroid_tolerance: f64,
    pub bins: usize,
    pub tv_factor: f64,
    pub beat_atoms: usize,
    pub beat_modes: [i64; 2],
    pub beat_ensemble: usize,
    pub beat_duration: f64,
    pub beat_record_interval: f64,
    pub beat_tolerance: f64,
    pub stationary_mode: i64,
    pub saved_trajectories: usize,
    pub saved_atom_stride: usize,
    pub chain: ChainConstants,
}

impl Default for PhononTrajectoryParams {
    fn default() -> Self {
        PhononTrajectoryParams {
            n_atoms: 256,
            packet_pa: 0.3,
            packet_width_ratio: 1.0 / 6.0,
            packet_center: 128.0,
            duration: 40.0,
            dt: 0.05,
            ensemble_size: 2000,
            record_interval: 5.0,
            speed_cap: 1000.0,
            centroid_tolerance: 0.1,
            bins: 32,
            tv_factor: 2.0,
            beat_atoms: 16,
            beat_modes: [1, 2],
            beat_ensemble: 4000,
            beat_duration: 34.0,
            beat_record_interval: 0.5,
            beat_tolerance: 0.05,
            stationary_mode: 2,
            saved_trajectories: 4,
            saved_atom_stride: 16,
            chain: ChainConstants::default(),
        }
    }
}

impl PhononTrajectoryParams {
    pub fn validate(&self) -> Result<(), RunnerError> {
        self.chain.validate()?;
        let chain = self.chain.chain(self.n_atoms)?;
        let beat = self.chain.chain(self.beat_atoms)?;
        positive("packet_pa", self.packet_pa)?;
        positive("packet_width_ratio", self.packet_width_ratio)?;
        positive("duration", self.duration)?;
        positive("dt", self.dt)?;
        positive("record_interval", self.record_interval)?;
        positive("speed_cap", self.speed_cap)?;
        positive("centroid_tolerance", self.centroid_tolerance)?;
        positive("tv_factor", self.tv_factor)?;
        positive("beat_duration", self.beat_duration)?;
        positive("beat_record_interval", self.beat_record_interval)?;
        positive("beat_tolerance", self.beat_tolerance)?;
        at_least("ensemble_size", self.ensemble_size, 1)?;
        at_least("beat_ensemble", self.beat_ensemble, 1)?;
        at_least("bins", self.bins, 2)?;
        at_least("saved_atom_stride", self.saved_atom_stride, 1)?;
        let h = (self.beat_atoms / 2) as i64;
        let ok = |j: i64| j != 0 && j > -h && j <= h;
        if !(self.beat_modes.iter().all(|&j| ok(j)) && self.beat_modes[0] != self.beat_modes[1]) {
            return Err(RunnerError::validation(
                "beat_modes",
                "need two distinct phonon modes of the beat chain",
            ));
        }
        if !ok(self.stationary_mode) {
            return Err(RunnerError::validation(
                "stationary_mode",
                "not a phonon mode of the beat chain",
            ));
        }
        if beat.omega(beat.momentum(self.beat_modes[0])) == beat.omega(beat.momentum(self.beat_modes[1])) {
            return Err(RunnerError::validation(
                "beat_modes",
                "the two modes are degenerate and do not beat",
            ));
        }
        if self.packet_center < 0.0 || self.packet_center >= chain.n_atoms as f64 {
            return Err(RunnerError::validation("packet_center", "must lie on the chain"));
        }
        Ok(())
    }
}

fn wrap_half(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

pub fn trajectories(p: &PhononTrajectoryParams, seed: u64) -> Result<Report, RunnerError> {
    let mut report = Report::default();
    let mut caps = 0;

    // two-mode beat on a short chain
    let chain = p.chain.chain(p.beat_atoms)?;
    let modes = normal_modes(&chain);
    let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let state = OnePhononState::new(&chain, &[(p.beat_modes[0], c), (p.beat_modes[1], c)]).during(TRAJ)?;
    let field = PhononField::new(&modes, &state).during(TRAJ)?;
    let q0 = field.sample(0.0, p.beat_ensemble, seed).during(TRAJ)?;
    let times = record_times(p.beat_duration, p.beat_record_interval);
    let run = integrate_atoms(&field, &q0, p.beat_duration, p.dt, p.speed_cap, &times).during(TRAJ)?;
    caps += run.cap_triggers;
    let mut beat_csv = Csv::new(&["time", "mean_square_displacement", "closed_form"]);
    let msd: Vec<f64> = run
        .history
        .frames
        .iter()
        .zip(&run.history.times)
        .map(|(f, &t)| {
            let m = f.coordinate(0).iter().map(|u| u * u).sum::<f64>() / f.len() as f64;
            beat_csv.row(&[t.into(), m.into(), field.atom_marginal(0, t).second_moment().into()]);
            m
        })
        .collect();
    let w = |j: i64| modes.frequency_of(j);
    let beat = (w(p.beat_modes[1]) - w(p.beat_modes[0])).abs();
    let max_w = modes.real_frequencies.iter().cloned().fold(0.0, f64::max);
    let fitted = dominant_frequency(&run.history.times, &msd, 0.05 * beat, 2.0 * max_w, 4001);
    report.metric("beat_frequency", beat);
    report.metric("beat_frequency_fitted", fitted);
    report.check(Check::below(
        "beat_frequency",
        CheckKind::Analytic,
        (fitted - beat).abs() / beat,
        p.beat_tolerance,
    ));
    report.file("beat.csv", beat_csv.into_bytes());

    // stationary single-mode ensemble
    let state = OnePhononState::single_mode(&chain, p.stationary_mode).during(TRAJ)?;
    let field = PhononField::new(&modes, &state).during(TRAJ)?;
    let q0 = field.sample(0.0, p.beat_ensemble, seed).during(TRAJ)?;
    let run = integrate_atoms(&field, &q0, p.beat_duration, p.dt, p.speed_cap, &[]).during(TRAJ)?;
    caps += run.cap_triggers;
    let a0 = q0.coordinate(0);
    let a1 = run.final_positions.coordinate(0);
    let m = a0.len() as f64;
    let var = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / m;
    let m4 = a0.iter().map(|v| v.powi(4)).sum::<f64>() / m;
    let se = ((m4 - var(&a0).powi(2)) / m).sqrt();
    report.metric("stationary_variance_change", var(&a1) - var(&a0));
    report.check(Check::below(
        "stationary_variance",
        CheckKind::Statistical,
        (var(&a1) - var(&a0)).abs(),
        3.0 * se,
    ));

    // travelling packet: interpretation 1 against interpretation 2
    let chain = p.chain.chain(p.n_atoms)?;
    let modes = normal_modes(&chain);
    let a = chain.spacing;
    let (p0, x0) = (p.packet_pa / a, p.packet_center * a);
    let state = OnePhononState::gaussian_packet(&chain, p0, p.packet_width_ratio * p0, x0).during(TRAJ)?;
    let field = PhononField::new(&modes, &state).during(TRAJ)?;
    let wave = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
    let path = interpretation1_trajectory(&wave, x0, p.duration, p.dt, p.speed_cap);
    let q0 = field.sample(0.0, p.ensemble_size, seed).during(TRAJ)?;
    let times = record_times(p.duration, p.record_interval);
    let run = integrate_atoms(&field, &q0, p.duration, p.dt, p.speed_cap, &times).during(TRAJ)?;
    caps += run.cap_triggers;

    let x_at = |t: f64| {
        path.iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|s| s.1)
            .expect("non-empty path")
    };
    let mut centroid_csv = Csv::new(&["time", "quasiparticle_x", "energy_centroid"]);
    let mut centroids = Vec::new();
    for (frame, &t) in run.history.frames.iter().zip(&run.history.times) {
        let c = energy_centroid(&field, frame, t).during(TRAJ)?.unwrap_or(f64::NAN);
        centroid_csv.row(&[t.into(), x_at(t).into(), c.into()]);
        centroids.push(c);
    }
    let travelled = x_at(p.duration) - x0;
    let moved = wrap_half(centroids.last().unwrap() - centroids[0], chain.length());
    report.metric("quasiparticle_distance", travelled);
    report.metric("energy_centroid_distance", moved);
    report.check(Check::below(
        "energy_centroid_tracks_quasiparticle",
        CheckKind::Oracle,
        (moved - travelled).abs() / travelled.abs(),
        p.centroid_tolerance,
    ));

    let last = &run.final_positions;
    let lead = ((x0 + travelled) / a).round().rem_euclid(p.n_atoms as f64) as usize;
    for atom in [(x0 / a).round() as usize % p.n_atoms, lead] {
        let marginal = field.atom_marginal(atom, p.duration);
        let (tv, iid) = marginal_total_variation(&last.coordinate(atom), &marginal, p.bins);
        report.metric(&format!("atom_total_variation[{atom}]"), tv);
        report.metric(&format!("atom_iid_baseline[{atom}]"), iid);
        report.check(Check::at_most(
            &format!("atom_equivariance[{atom}]"),
            CheckKind::Statistical,
            tv,
            p.tv_factor * iid,
        ));
    }
    let (dn, de) = closed_form_conservation(&field, &times);
    conservation_checks(&mut report, dn, &[de]);
    report.cap_triggers = caps;

    let mut traj = Csv::new(&["interpretation", "trajectory_id", "atom", "time", "position"]);
    for &(t, x) in &path {
        traj.row(&[Cell::I(1), Cell::I(0), Cell::S(String::new()), t.into(), x.into()]);
    }
    for (frame, &t) in run.history.frames.iter().zip(&run.history.times) {
        for i in 0..p.saved_trajectories.min(frame.len()) {
            let q = frame.position(i);
            for n in (0..p.n_atoms).step_by(p.saved_atom_stride) {
                traj.row(&[Cell::I(2), i.into(), n.into(), t.into(), (n as f64 * a + q[n]).into()]);
            }
        }
    }
    report.file("trajectories.csv", traj.into_bytes());
    report.file("centroid.csv", centroid_csv.into_bytes());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostParams {
    pub n_atoms: usize,
    pub packet_pa: f64,
    pub packet_width_ratio: f64,
    /// Frame speed as a fraction of the sound speed.
    pub velocity_fraction: f64,
    pub residual_limit: f64,
    pub linear_limit: f64,
    /// Frame speeds (fractions of `c_s`) tabulated in `boost_scan.csv`.
    pub scan: Vec<f64>,
    pub chain: ChainConstants,
    pub sample: BoxSettings,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_atoms: 8192,
            packet_pa: 0.1,
            packet_width_ratio: 0.1,
            velocity_fraction: 0.5,
            residual_limit: 5e-3,
            linear_limit: 1e-10,
            scan: (0..10).map(|i| 0.1 * i as f64).collect(),
            chain: ChainConstants::default(),
            sample: BoxSettings {
                x_half_width: 100.0,
                nx: 41,
                t_max: 10.0,
                nt: 6,
            },
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<(), RunnerError> {
        self.chain.validate()?;
        self.sample.validate()?;
        self.chain.chain(self.n_atoms)?;
        positive("packet_pa", self.packet_pa)?;
        positive("packet_width_ratio", self.packet_width_ratio)?;
        for (name, v) in
            std::iter::once(("velocity_fraction", &self.velocity_fraction)).chain(self.scan.iter().map(|v| ("scan", v)))
        {
            if !(v.abs() < 1.0) {
                return Err(RunnerError::validation(
                    name,
                    format!("|v| = {} c_s is not below the sound speed", v.abs()),
                ));
            }
        }
        Ok(())
    }
}

pub fn boost(p: &BoostParams) -> Result<Report, RunnerError> {
    let chain = p.chain.chain(p.n_atoms)?;
    let cs = chain.sound_speed();
    let p0 = p.packet_pa / chain.spacing;
    let state = OnePhononState::gaussian_packet(&chain, p0, p.packet_width_ratio * p0, 0.0).during(BOOST)?;
    let wave = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
    let linear = quasiparticle_wave(&state, &chain, Dispersion::Linear);
    let sample = p.sample.sample(chain.spacing, cs);

    let mut report = Report::default();
    let (rest, moving) = lorentz_boost_check(&wave, p.velocity_fraction * cs, cs, &sample).during(BOOST)?;
    report.metric("residual_rest", rest);
    report.metric("residual_boosted", moving);
    report.metric("boosted_over_rest", moving / rest);
    report.check(Check::below("residual_rest", CheckKind::Oracle, rest, p.residual_limit));
    report.check(Check::below(
        "residual_boosted",
        CheckKind::Oracle,
        moving,
        p.residual_limit,
    ));
    let (a, b) = lorentz_boost_check(&wave, 0.0, cs, &sample).during(BOOST)?;
    report.check(Check::holds(
        "identity_boost_bitwise",
        CheckKind::Analytic,
        a.to_bits() == b.to_bits(),
    ));
    let (_, lin) = lorentz_boost_check(&linear, p.velocity_fraction * cs, cs, &sample).during(BOOST)?;
    report.metric("linear_surrogate_boosted", lin);
    report.check(Check::below(
        "linear_surrogate_boosted",
        CheckKind::Analytic,
        lin,
        p.linear_limit,
    ));

    let mut scan = Csv::new(&["v_over_cs", "residual_rest", "residual_boosted", "linear_boosted"]);
    for &v in &p.scan {
        let (r, m) = lorentz_boost_check(&wave, v * cs, cs, &sample).during(BOOST)?;
        let (_, l) = lorentz_boost_check(&linear, v * cs, cs, &sample).during(BOOST)?;
        scan.row(&[v.into(), r.into(), m.into(), l.into()]);
    }
    report.file("boost_scan.csv", scan.into_bytes());

    let field = PhononField::new(&normal_modes(&chain), &state).during(BOOST)?;
    let (dn, de) = closed_form_conservation(&field, &[0.0, sample.t_max]);
    conservation_checks(&mut report, dn, &[de]);
    Ok(report)
}
