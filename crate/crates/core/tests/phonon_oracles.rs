use bohmian_core::grid::{Axis, AxisRole, Grid, Role};
use bohmian_core::guidance::velocity_field;
use bohmian_core::phonon::*;
use bohmian_core::SpinorWaveFunction;
use num_complex::Complex64;

fn unit(n: usize) -> LatticeChain {
    LatticeChain::unit(n).unwrap()
}

#[test]
fn analytic_modes_match_dense_diagonalization() {
    for n in [8, 64, 256] {
        let chain = LatticeChain::new(n, 1.7, 0.6, 1.3, 1.0).unwrap();
        let modes = normal_modes(&chain);
        assert!(modes.orthonormality_error() < 1e-12);
        let dense = dense_frequencies(&chain);
        let worst = modes
            .sorted_frequencies()
            .iter()
            .zip(&dense)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "N = {n}: {worst:e}");
    }
}

#[test]
fn sound_speed_from_small_momenta() {
    let chain = LatticeChain::new(256, 2.0, 0.5, 1.5, 1.0).unwrap();
    let c = extrapolated_sound_speed(&normal_modes(&chain));
    assert!((c - chain.sound_speed()).abs() < 1e-6 * chain.sound_speed());
    for (p, w, ratio) in normal_modes(&chain).dispersion_table() {
        assert!(ratio <= 1.0 && (w - chain.omega(p)).abs() == 0.0);
    }
}

#[test]
fn packet_residual_is_quadratic_in_momentum() {
    let chain = unit(8192);
    let sample = SampleBox {
        x_min: -150.0,
        x_max: 150.0,
        nx: 61,
        t_min: 0.0,
        t_max: 10.0,
        nt: 6,
    };
    let scaled: Vec<f64> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&p0| {
            let state = OnePhononState::gaussian_packet(&chain, p0, 0.1 * p0, 0.0).unwrap();
            let w = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
            wave_equation_residual(&w, &sample, chain.sound_speed()) / (p0 * p0)
        })
        .collect();
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().cloned().fold(0.0, f64::max);
    assert!(hi / lo < 1.2, "{scaled:?}");
}

#[test]
fn packet_boost_residuals() {
    let chain = unit(8192);
    let c = chain.sound_speed();
    let state = OnePhononState::gaussian_packet(&chain, 0.1, 0.01, 0.0).unwrap();
    let w = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
    let sample = SampleBox {
        x_min: -100.0,
        x_max: 100.0,
        nx: 41,
        t_min: 0.0,
        t_max: 10.0,
        nt: 6,
    };
    let (rest, moving) = lorentz_boost_check(&w, 0.5 * c, c, &sample).unwrap();
    assert!(rest < 5e-3 && moving < 5e-3, "{rest} {moving}");
    let (a, b) = lorentz_boost_check(&w, 0.0, c, &sample).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    let lin = quasiparticle_wave(&state, &chain, Dispersion::Linear);
    let (_, b) = lorentz_boost_check(&lin, 0.5 * c, c, &sample).unwrap();
    assert!(b < 1e-10);
}

#[test]
fn packet_envelope_moves_at_group_speed() {
    let chain = unit(4096);
    let p0 = 0.1;
    let state = OnePhononState::gaussian_packet(&chain, p0, 0.02, 0.0).unwrap();
    let w = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
    let period = chain.length();
    let x0 = wave_centroid(&w, 0.0, 0.0, period, 16384);
    let x1 = wave_centroid(&w, 20.0, 0.0, period, 16384);
    let speed = (x1 - x0) / 20.0;
    let vg = chain.group_velocity(p0);
    assert!((speed - vg).abs() < 0.01 * vg, "{speed} vs {vg}");
}

#[test]
fn quasiparticle_path_stays_inside_the_envelope() {
    let chain = unit(4096);
    let state = OnePhononState::gaussian_packet(&chain, 0.1, 0.05, 0.0).unwrap();
    let w = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
    let start = w.evaluate(0.0, 0.0).norm();
    let path = interpretation1_trajectory(&w, 0.0, 10.0, 0.05, 10.0);
    for &(t, x) in &path {
        assert!(w.evaluate(x, t).norm() > 0.5 * start, "t = {t}");
    }
    // the path is smooth: its speed changes little between steps
    let speeds: Vec<f64> = path.windows(2).map(|p| (p[1].1 - p[0].1) / (p[1].0 - p[0].0)).collect();
    assert!(speeds.windows(2).all(|s| (s[1] - s[0]).abs() < 1e-2));
}

/// Grid wavefunction of a travelling mode in its own (Q_c, Q_s) plane, with
/// every other mode in its ground state at the origin.
#[test]
fn closed_form_velocities_match_the_grid_field() {
    let chain = unit(8);
    let modes = normal_modes(&chain);
    let j = 1;
    let state = OnePhononState::single_mode(&chain, j).unwrap();
    let field = PhononField::new(&modes, &state).unwrap();
    let (kc, ks) = (2 * j as usize - 1, 2 * j as usize);
    let beta = chain.mass * modes.real_frequencies[kc] / chain.hbar;
    let axis = Axis::new(128, -8.0, 8.0);
    let grid = Grid::new(vec![axis, axis]).unwrap();
    let s = (2.0 * beta).sqrt();
    let psi = SpinorWaveFunction::from_fn(grid.clone(), |q| {
        Complex64::new(s * q[0], s * q[1]) * (-0.5 * beta * (q[0] * q[0] + q[1] * q[1])).exp()
    })
    .unwrap();
    let roles = [
        AxisRole::new(0, Role::System, 0, chain.mass),
        AxisRole::new(1, Role::System, 1, chain.mass),
    ];
    let v = velocity_field(&psi, &roles, chain.hbar).unwrap();
    let rho = psi.density();
    let floor = 1e-8 * rho.max_value();
    let mut checked = 0;
    for flat in 0..grid.total_points() {
        if rho.values()[flat] < floor {
            continue;
        }
        let qm = grid.node_coords(flat);
        let u: Vec<f64> = (0..8)
            .map(|n| qm[0] * modes.vectors[kc][n] + qm[1] * modes.vectors[ks][n])
            .collect();
        let vn = field.velocities(&u, 0.3).unwrap();
        for (axis, k) in [(0, kc), (1, ks)] {
            let vq: f64 = vn.iter().zip(&modes.vectors[k]).map(|(a, b)| a * b).sum();
            assert!((vq - v.component(axis)[flat]).abs() < 1e-6);
        }
        checked += 1;
    }
    assert!(checked > 1000);
}

#[test]
fn vacuum_atoms_stay_put() {
    let chain = unit(16);
    let modes = normal_modes(&chain);
    let field = PhononField::new(&modes, &OnePhononState::vacuum(16)).unwrap();
    let q0 = field.sample(0.0, 200, 4).unwrap();
    let run = integrate_atoms(&field, &q0, 5.0, 0.1, 100.0, &[0.0, 5.0]).unwrap();
    assert_eq!(run.final_positions.positions(), q0.positions());
    assert_eq!(run.history.len(), 2);
}

#[test]
fn single_mode_ensemble_is_stationary() {
    let chain = unit(16);
    let modes = normal_modes(&chain);
    let state = OnePhononState::single_mode(&chain, 2).unwrap();
    let field = PhononField::new(&modes, &state).unwrap();
    let m = 4000;
    let q0 = field.sample(0.0, m, 11).unwrap();
    let run = integrate_atoms(&field, &q0, 10.0, 0.02, 1e3, &[]).unwrap();
    for atom in [0, 3, 9] {
        let var = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let a = q0.coordinate(atom);
        let b = run.final_positions.coordinate(atom);
        let m4 = a.iter().map(|v| v.powi(4)).sum::<f64>() / m as f64;
        let sigma = ((m4 - var(&a).powi(2)) / m as f64).sqrt();
        assert!((var(&a) - var(&b)).abs() < 3.0 * sigma, "atom {atom}");
    }
}

#[test]
fn beat_state_oscillates_at_the_difference_frequency_and_stays_in_equilibrium() {
    let chain = unit(16);
    let modes = normal_modes(&chain);
    let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let state = OnePhononState::new(&chain, &[(1, c), (2, c)]).unwrap();
    let field = PhononField::new(&modes, &state).unwrap();
    let q0 = field.sample(0.0, 4000, 21).unwrap();
    let times: Vec<f64> = (0..=68).map(|i| 0.5 * i as f64).collect();
    let run = integrate_atoms(&field, &q0, 34.0, 0.05, 1e3, &times).unwrap();
    let msd: Vec<f64> = run
        .history
        .frames
        .iter()
        .map(|f| f.coordinate(0).iter().map(|u| u * u).sum::<f64>() / f.len() as f64)
        .collect();
    let beat = (modes.frequency_of(2) - modes.frequency_of(1)).abs();
    let fitted = dominant_frequency(&run.history.times, &msd, 0.1, 1.0, 901);
    assert!((fitted - beat).abs() < 0.05 * beat, "{fitted} vs {beat}");
    let t_end = *times.last().unwrap();
    for atom in [0, 5] {
        let marginal = field.atom_marginal(atom, t_end);
        let (tv, iid) = marginal_total_variation(&run.final_positions.coordinate(atom), &marginal, 32);
        assert!(tv <= 2.0 * iid, "atom {atom}: {tv} vs {iid}");
    }
}

#[test]
fn kinetic_energy_centroid_tracks_the_quasiparticle() {
    let chain = unit(256);
    let modes = normal_modes(&chain);
    let (p0, x0) = (0.3, 128.0);
    let state = OnePhononState::gaussian_packet(&chain, p0, 0.05, x0).unwrap();
    let field = PhononField::new(&modes, &state).unwrap();
    let wave = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
    let t_end = 40.0;
    let path = interpretation1_trajectory(&wave, x0, t_end, 0.05, 10.0);
    let x_end = path.last().unwrap().1;
    let q0 = field.sample(0.0, 2000, 5).unwrap();
    let run = integrate_atoms(&field, &q0, t_end, 0.05, 1e3, &[t_end]).unwrap();
    let c0 = energy_centroid(&field, &q0, 0.0).unwrap().unwrap();
    let c1 = energy_centroid(&field, &run.final_positions, t_end).unwrap().unwrap();
    let travelled = x_end - x0;
    assert!(travelled > 20.0);
    assert!(
        ((c1 - c0) - travelled).abs() < 0.1 * travelled,
        "centroid moved {} vs quasiparticle {}",
        c1 - c0,
        travelled
    );
}
