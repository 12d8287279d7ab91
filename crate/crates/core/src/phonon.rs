//! The periodic harmonic chain, its one-phonon states in closed form, and the
//! wave behaviour that emerges from them.
//!
//! Atoms `n = 0..N` have displacements `u_n` and interact through
//! `V = (kappa / 2) sum_n (u_{n+1} - u_n)^2`. The real orthonormal normal modes
//! are the uniform mode (frozen), cosine/sine pairs for `0 < j < N/2`, and
//! the alternating mode `j = N/2`. Mode coordinates `Q_k = e_k . u` are
//! whitened as `z_k = Q_k sqrt(2 beta_k)`, `beta_k = m omega_k / hbar`, so
//! that the ground state density is a standard normal in `z`.
//!
//! A one-phonon state is `Psi = F(z, t) Psi_0 e^{-i E_0 t / hbar}`, with
//! `F = sum_p c_p f_p e^{-i omega_p t}` and the raising factors
//! `f_{+p} = (z_c + i z_s) / sqrt 2`, `f_{-p} = (z_c - i z_s) / sqrt 2`,
//! `f_{N/2} = z_N`. `F` is linear in the displacements, `F = G(t) . u`, so
//! the guidance velocity of atom `n` is `(hbar / m) Im(G_n / F)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::trajectory_rng;
use crate::error::{Error, Result};
use crate::guidance::{TrajectoryHistory, TrajectorySet};

/// `|F|^2` below this (its ensemble mean is 1) counts as a node.
pub const NODE_EPSILON: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeChain {
    pub n_atoms: usize,
    pub mass: f64,
    pub spring: f64,
    pub spacing: f64,
    pub hbar: f64,
}

impl LatticeChain {
    pub fn new(n_atoms: usize, mass: f64, spring: f64, spacing: f64, hbar: f64) -> Result<Self> {
        if n_atoms < 8 || !n_atoms.is_multiple_of(2) {
            return Err(Error::param("n_atoms", "must be even and at least 8"));
        }
        for (name, v) in [("mass", mass), ("spring", spring), ("spacing", spacing), ("hbar", hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        Ok(LatticeChain {
            n_atoms,
            mass,
            spring,
            spacing,
            hbar,
        })
    }

    /// Chain with `m = kappa = a = hbar = 1`.
    pub fn unit(n_atoms: usize) -> Result<Self> {
        Self::new(n_atoms, 1.0, 1.0, 1.0, 1.0)
    }

    /// `c_s = a sqrt(kappa / m)`.
    pub fn sound_speed(&self) -> f64 {
        self.spacing * (self.spring / self.mass).sqrt()
    }

    /// `omega(p) = 2 sqrt(kappa / m) |sin(p a / 2)|`.
    pub fn omega(&self, p: f64) -> f64 {
        2.0 * (self.spring / self.mass).sqrt() * (0.5 * p * self.spacing).sin().abs()
    }

    /// `d omega / d p = c_s cos(p a / 2) sign(p)`.
    pub fn group_velocity(&self, p: f64) -> f64 {
        self.sound_speed() * (0.5 * p * self.spacing).cos() * p.signum() * (p != 0.0) as i32 as f64
    }

    /// `p_j = 2 pi j / (N a)`.
    pub fn momentum(&self, j: i64) -> f64 {
        2.0 * PI * j as f64 / (self.n_atoms as f64 * self.spacing)
    }

    pub fn length(&self) -> f64 {
        self.n_atoms as f64 * self.spacing
    }

    /// Mode indices `-N/2 + 1 ..= N/2`.
    pub fn mode_indices(&self) -> std::ops::RangeInclusive<i64> {
        let h = (self.n_atoms / 2) as i64;
        -h + 1..=h
    }
}

/// A real normal mode of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RealMode {
    Uniform,
    Cos(usize),
    Sin(usize),
    Alternating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhononModeSet {
    chain: LatticeChain,
    /// `p_j` for `j = -N/2 + 1 ..= N/2`.
    pub momenta: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub real_modes: Vec<RealMode>,
    pub real_frequencies: Vec<f64>,
    /// Row `k` is the unit vector of real mode `k` over the atoms.
    pub vectors: Vec<Vec<f64>>,
}

/// Analytic frequencies and real plane-wave mode vectors.
pub fn normal_modes(chain: &LatticeChain) -> PhononModeSet {
    let n = chain.n_atoms;
    let h = n / 2;
    let momenta: Vec<f64> = chain.mode_indices().map(|j| chain.momentum(j)).collect();
    let frequencies = momenta.iter().map(|&p| chain.omega(p)).collect();
    let norm = (2.0 / n as f64).sqrt();
    let mut real_modes = vec![RealMode::Uniform];
    let mut vectors = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for j in 1..h {
        let theta = |site: usize| 2.0 * PI * (j * site % n) as f64 / n as f64;
        real_modes.push(RealMode::Cos(j));
        vectors.push((0..n).map(|s| norm * theta(s).cos()).collect());
        real_modes.push(RealMode::Sin(j));
        vectors.push((0..n).map(|s| norm * theta(s).sin()).collect());
    }
    real_modes.push(RealMode::Alternating);
    vectors.push(
        (0..n)
            .map(|s| if s % 2 == 0 { 1.0 } else { -1.0 } / (n as f64).sqrt())
            .collect(),
    );
    let real_frequencies = real_modes
        .iter()
        .map(|m| match *m {
            RealMode::Uniform => 0.0,
            RealMode::Cos(j) | RealMode::Sin(j) => chain.omega(chain.momentum(j as i64)),
            RealMode::Alternating => chain.omega(chain.momentum(h as i64)),
        })
        .collect();
    PhononModeSet {
        chain: *chain,
        momenta,
        frequencies,
        real_modes,
        real_frequencies,
        vectors,
    }
}

/// Frequencies from a dense symmetric eigensolver applied to the dynamical
/// matrix `(kappa / m)(2 I - S - S^T)`, sorted ascending.
pub fn dense_frequencies(chain: &LatticeChain) -> Vec<f64> {
    let n = chain.n_atoms;
    let k = chain.spring / chain.mass;
    let d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * k
        } else if (i + 1) % n == j || (j + 1) % n == i {
            -k
        } else {
            0.0
        }
    });
    // eigenvalues at rounding level belong to the uniform mode
    let floor = 64.0 * f64::EPSILON * 4.0 * k;
    let mut w: Vec<f64> = SymmetricEigen::new(d)
        .eigenvalues
        .iter()
        .map(|&l| if l < floor { 0.0 } else { l.sqrt() })
        .collect();
    w.sort_by(f64::total_cmp);
    w
}

impl PhononModeSet {
    pub fn chain(&self) -> &LatticeChain {
        &self.chain
    }

    /// Real-mode frequencies sorted ascending.
    pub fn sorted_frequencies(&self) -> Vec<f64> {
        let mut w = self.real_frequencies.clone();
        w.sort_by(f64::total_cmp);
        w
    }

    fn slot(&self, j: i64) -> usize {
        (j + self.chain.n_atoms as i64 / 2 - 1) as usize
    }

    pub fn momentum_of(&self, j: i64) -> f64 {
        self.momenta[self.slot(j)]
    }

    pub fn frequency_of(&self, j: i64) -> f64 {
        self.frequencies[self.slot(j)]
    }

    /// Largest deviation of `sum_n e_k[n] e_l[n]` from `delta_kl`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, a) in self.vectors.iter().enumerate() {
            for (l, b) in self.vectors.iter().enumerate().skip(k) {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let expect = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((dot - expect).abs());
            }
        }
        worst
    }

    /// Rows `(p, omega, omega / (c_s p))` for `p > 0`.
    pub fn dispersion_table(&self) -> Vec<(f64, f64, f64)> {
        let c = self.chain.sound_speed();
        self.momenta
            .iter()
            .zip(&self.frequencies)
            .filter(|(p, _)| **p > 0.0)
            .map(|(&p, &w)| (p, w, w / (c * p)))
            .collect()
    }

    /// `beta_k = m omega_k / hbar` of every real mode.
    fn betas(&self) -> Vec<f64> {
        self.real_frequencies
            .iter()
            .map(|w| self.chain.mass * w / self.chain.hbar)
            .collect()
    }
}

/// Sound speed recovered from the two smallest positive momenta by
/// Richardson extrapolation of `omega / p` (which is even in `p`).
pub fn extrapolated_sound_speed(modes: &PhononModeSet) -> f64 {
    let r = |j: i64| modes.frequency_of(j) / modes.momentum_of(j);
    (4.0 * r(1) - r(2)) / 3.0
}

/// One-phonon superposition `sum_p c_p |1_p>` (or the vacuum when all `c_p` vanish).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnePhononState {
    n_atoms: usize,
    /// `c_j` at slot `j + N/2 - 1`.
    coefficients: Vec<Complex64>,
    pub time_origin: f64,
}

impl OnePhononState {
    pub fn vacuum(n_atoms: usize) -> Self {
        OnePhononState {
            n_atoms,
            coefficients: vec![ZERO; n_atoms],
            time_origin: 0.0,
        }
    }

    /// State from `(j, c_j)` pairs; `sum |c_j|^2` must be 1 within 1e-12.
    pub fn new(chain: &LatticeChain, terms: &[(i64, Complex64)]) -> Result<Self> {
        let mut s = Self::vacuum(chain.n_atoms);
        let h = (chain.n_atoms / 2) as i64;
        for &(j, c) in terms {
            if j == 0 || j <= -h || j > h {
                return Err(Error::param(
                    "terms",
                    format!("mode {j} is not a phonon mode of this chain"),
                ));
            }
            s.coefficients[(j + h - 1) as usize] += c;
        }
        let norm: f64 = s.coefficients.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::param("terms", format!("sum |c_p|^2 = {norm}, expected 1")));
        }
        Ok(s)
    }

    /// As [`new`](Self::new), rescaling the coefficients to unit norm first.
    pub fn normalized(chain: &LatticeChain, terms: &[(i64, Complex64)]) -> Result<Self> {
        let norm: f64 = terms.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let scaled: Vec<(i64, Complex64)> = terms.iter().map(|&(j, c)| (j, c / norm)).collect();
        Self::new(chain, &scaled)
    }

    pub fn single_mode(chain: &LatticeChain, j: i64) -> Result<Self> {
        Self::new(chain, &[(j, Complex64::new(1.0, 0.0))])
    }

    /// Gaussian packet `c_p ~ exp(-(p - p0)^2 / (4 dp^2) - i p x0)` over
    /// `p > 0`, with negligible terms dropped.
    pub fn gaussian_packet(chain: &LatticeChain, p0: f64, dp: f64, x0: f64) -> Result<Self> {
        if !(dp > 0.0) {
            return Err(Error::param("dp", "must be positive"));
        }
        let terms: Vec<(i64, Complex64)> = chain
            .mode_indices()
            .filter(|&j| j > 0)
            .filter_map(|j| {
                let p = chain.momentum(j);
                let amp = (-(p - p0).powi(2) / (4.0 * dp * dp)).exp();
                (amp > 1e-16).then(|| (j, Complex64::from_polar(amp, -p * x0)))
            })
            .collect();
        Self::normalized(chain, &terms)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn is_vacuum(&self) -> bool {
        self.coefficients.iter().all(|c| *c == ZERO)
    }

    pub fn coefficient(&self, j: i64) -> Complex64 {
        self.coefficients[(j + self.n_atoms as i64 / 2 - 1) as usize]
    }

    /// Non-zero `(j, c_j)` pairs.
    pub fn terms(&self) -> Vec<(i64, Complex64)> {
        let h = self.n_atoms as i64 / 2;
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != ZERO)
            .map(|(s, c)| (s as i64 - h + 1, *c))
            .collect()
    }
}

/// Closed-form evaluator of a one-phonon state on a chain.
#[derive(Debug, Clone)]
pub struct PhononField {
    modes: PhononModeSet,
    state: OnePhononState,
    betas: Vec<f64>,
    ground_energy: f64,
}

impl PhononField {
    pub fn new(modes: &PhononModeSet, state: &OnePhononState) -> Result<Self> {
        if state.n_atoms != modes.chain.n_atoms {
            return Err(Error::param("state", "atom count differs from the chain"));
        }
        let ground_energy = 0.5 * modes.chain.hbar * modes.real_frequencies.iter().sum::<f64>();
        Ok(PhononField {
            betas: modes.betas(),
            modes: modes.clone(),
            state: state.clone(),
            ground_energy,
        })
    }

    pub fn modes(&self) -> &PhononModeSet {
        &self.modes
    }

    pub fn state(&self) -> &OnePhononState {
        &self.state
    }

    /// Coefficients `gamma_k(t)` of `F = sum_k gamma_k z_k` over the real modes.
    pub fn gamma(&self, t: f64) -> Vec<Complex64> {
        let mut g = vec![ZERO; self.modes.real_modes.len()];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let tau = t - self.state.time_origin;
        let h = self.modes.chain.n_atoms as i64 / 2;
        for (j, c) in self.state.terms() {
            let c = c * Complex64::from_polar(1.0, -self.modes.frequency_of(j) * tau);
            if j == h {
                let k = self.modes.real_modes.len() - 1;
                g[k] += c;
                continue;
            }
            let jj = j.unsigned_abs() as usize;
            let (kc, ks) = (2 * jj - 1, 2 * jj);
            g[kc] += c * s;
            let sign = if j > 0 { 1.0 } else { -1.0 };
            g[ks] += c * Complex64::new(0.0, sign * s);
        }
        g
    }

    /// `G_n(t)`: gradient of `F` with respect to `u_n`.
    pub fn gradient_coefficients(&self, t: f64) -> Vec<Complex64> {
        let gamma = self.gamma(t);
        let n = self.modes.chain.n_atoms;
        let mut g = vec![ZERO; n];
        for (k, gk) in gamma.iter().enumerate() {
            if *gk == ZERO {
                continue;
            }
            let w = *gk * (2.0 * self.betas[k]).sqrt();
            for (gn, e) in g.iter_mut().zip(&self.modes.vectors[k]) {
                *gn += w * e;
            }
        }
        g
    }

    fn mode_coordinates(&self, q: &[f64]) -> Vec<f64> {
        self.modes
            .vectors
            .iter()
            .map(|e| e.iter().zip(q).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Psi_0(q)`; the frozen uniform mode does not enter.
    pub fn ground_amplitude(&self, q: &[f64]) -> f64 {
        let qk = self.mode_coordinates(q);
        let mut log = 0.0;
        for (k, (&b, &x)) in self.betas.iter().zip(&qk).enumerate() {
            if self.modes.real_modes[k] == RealMode::Uniform {
                continue;
            }
            log += 0.25 * (b / PI).ln() - 0.5 * b * x * x;
        }
        log.exp()
    }

    /// `F(q, t)` (1 for the vacuum).
    pub fn prefactor(&self, q: &[f64], t: f64) -> Complex64 {
        if self.state.is_vacuum() {
            return Complex64::new(1.0, 0.0);
        }
        dot(&self.gradient_coefficients(t), q)
    }

    /// `Psi(q, t)`.
    pub fn amplitude(&self, q: &[f64], t: f64) -> Complex64 {
        let phase = Complex64::from_polar(1.0, -self.ground_energy * t / self.modes.chain.hbar);
        self.prefactor(q, t) * self.ground_amplitude(q) * phase
    }

    /// Atom velocities at `q`; [`Error::NodalPoint`] where `|F|^2` vanishes.
    pub fn velocities(&self, q: &[f64], t: f64) -> Result<Vec<f64>> {
        if self.state.is_vacuum() {
            return Ok(vec![0.0; q.len()]);
        }
        let g = self.gradient_coefficients(t);
        velocities_from(&g, q, self.modes.chain.hbar / self.modes.chain.mass)
    }

    /// `div(|Psi|^2 v)` in closed form:
    /// `-(2 hbar / m) Psi_0^2 Im(F^* sum_k beta_k Q_k gamma_k sqrt(2 beta_k))`.
    pub fn flux_divergence(&self, q: &[f64], t: f64) -> f64 {
        if self.state.is_vacuum() {
            return 0.0;
        }
        let gamma = self.gamma(t);
        let qk = self.mode_coordinates(q);
        let f = self.prefactor(q, t);
        let s: Complex64 = gamma
            .iter()
            .zip(&qk)
            .zip(&self.betas)
            .map(|((g, &x), &b)| g * (b * x * (2.0 * b).sqrt()))
            .sum();
        let psi0 = self.ground_amplitude(q);
        -2.0 * self.modes.chain.hbar / self.modes.chain.mass * psi0 * psi0 * (f.conj() * s).im
    }

    /// Density of one atom's displacement under `|Psi(t)|^2`.
    pub fn atom_marginal(&self, atom: usize, t: f64) -> AtomMarginal {
        // u_atom = w . z with w_k = e_k[atom] / sqrt(2 beta_k)
        let mut var = 0.0;
        let mut gw = ZERO;
        let gamma = self.gamma(t);
        for (k, e) in self.modes.vectors.iter().enumerate() {
            if self.modes.real_modes[k] == RealMode::Uniform {
                continue;
            }
            let w = e[atom] / (2.0 * self.betas[k]).sqrt();
            var += w * w;
            gw += gamma[k] * w;
        }
        let weight = if self.state.is_vacuum() {
            0.0
        } else {
            gw.norm_sqr() / var
        };
        AtomMarginal { variance: var, weight }
    }

    /// Draws `m` exact samples of `|Psi(t)|^2`.
    ///
    /// In whitened coordinates the density is `|gamma . z|^2 phi(z)`. With
    /// `gamma = a + i b`, the quadratic form `a a^T + b b^T` has at most two
    /// non-zero eigenvalues `l_1, l_2` (orthonormal directions `d_1, d_2`), so
    /// the density is the mixture `sum_i (l_i / (l_1 + l_2)) y_i^2 phi(z)`,
    /// `y_i = d_i . z`: pick `i`, draw `|y_i|` from a chi distribution with
    /// three degrees of freedom and every other direction from a standard normal.
    pub fn sample(&self, t: f64, m: usize, seed: u64) -> Result<TrajectorySet> {
        let n = self.modes.chain.n_atoms;
        let n_modes = self.modes.real_modes.len();
        let gamma = self.gamma(t);
        let a: Vec<f64> = gamma.iter().map(|g| g.re).collect();
        let b: Vec<f64> = gamma.iter().map(|g| g.im).collect();
        let (dirs, weights) = rank_two_eigen(&a, &b);
        let vacuum = self.state.is_vacuum();
        let scale: Vec<f64> = self
            .betas
            .iter()
            .map(|b| if *b > 0.0 { 1.0 / (2.0 * b).sqrt() } else { 0.0 })
            .collect();
        let mut positions = vec![0.0; m * n];
        positions.par_chunks_mut(n).enumerate().for_each(|(i, q)| {
            let mut rng = trajectory_rng(seed, i as u64);
            let mut z: Vec<f64> = (0..n_modes).map(|_| rng.sample(StandardNormal)).collect();
            if !vacuum {
                let u: f64 = rng.random();
                let pick = if u * (weights[0] + weights[1]) < weights[0] {
                    0
                } else {
                    1
                };
                let d = &dirs[pick];
                let r: f64 = (0..3)
                    .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let y: f64 = z.iter().zip(d).map(|(a, b)| a * b).sum();
                for (zk, dk) in z.iter_mut().zip(d) {
                    *zk += (sign * r - y) * dk;
                }
            }
            for (k, e) in self.modes.vectors.iter().enumerate() {
                let qk = z[k] * scale[k];
                if qk != 0.0 {
                    for (qn, en) in q.iter_mut().zip(e) {
                        *qn += qk * en;
                    }
                }
            }
        });
        let mut set = TrajectorySet::new(n, positions, t, seed)?;
        set.time = t;
        Ok(set)
    }
}

fn dot(g: &[Complex64], q: &[f64]) -> Complex64 {
    g.iter().zip(q).map(|(a, b)| a * b).sum()
}

fn velocities_from(g: &[Complex64], q: &[f64], hbar_over_m: f64) -> Result<Vec<f64>> {
    let f = dot(g, q);
    if f.norm_sqr() < NODE_EPSILON {
        return Err(Error::NodalPoint);
    }
    Ok(g.iter().map(|gn| hbar_over_m * (gn / f).im).collect())
}

/// Orthonormal eigen-directions and eigenvalues of `a a^T + b b^T` on span{a, b}.
fn rank_two_eigen(a: &[f64], b: &[f64]) -> ([Vec<f64>; 2], [f64; 2]) {
    let n = a.len();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    // Gram-Schmidt basis of span{a, b}
    let (e1, e2) = if na > 0.0 {
        let e1: Vec<f64> = a.iter().map(|x| x / na).collect();
        let proj: f64 = b.iter().zip(&e1).map(|(x, y)| x * y).sum();
        let r: Vec<f64> = b.iter().zip(&e1).map(|(x, y)| x - proj * y).collect();
        let nr = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let e2 = if nr > 1e-14 * (na + 1.0) {
            r.iter().map(|x| x / nr).collect()
        } else {
            vec![0.0; n]
        };
        (e1, e2)
    } else {
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nb == 0.0 {
            return ([vec![0.0; n], vec![0.0; n]], [0.0, 0.0]);
        }
        (b.iter().map(|x| x / nb).collect(), vec![0.0; n])
    };
    let d = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let (a1, a2, b1, b2) = (d(a, &e1), d(a, &e2), d(b, &e1), d(b, &e2));
    // 2x2 form in the (e1, e2) basis
    let m11 = a1 * a1 + b1 * b1;
    let m22 = a2 * a2 + b2 * b2;
    let m12 = a1 * a2 + b1 * b2;
    let tr = m11 + m22;
    let disc = ((m11 - m22).powi(2) + 4.0 * m12 * m12).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = (0.5 * (tr - disc)).max(0.0);
    let theta = 0.5 * (2.0 * m12).atan2(m11 - m22);
    let (c, s) = (theta.cos(), theta.sin());
    let d1: Vec<f64> = e1.iter().zip(&e2).map(|(x, y)| c * x + s * y).collect();
    let d2: Vec<f64> = e1.iter().zip(&e2).map(|(x, y)| -s * x + c * y).collect();
    ([d1, d2], [l1, l2])
}

/// Single-atom displacement density
/// `rho(s) = phi(s; var) [1 + weight (s^2 / var - 1)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomMarginal {
    pub variance: f64,
    pub weight: f64,
}

impl AtomMarginal {
    pub fn pdf(&self, s: f64) -> f64 {
        let t2 = s * s / self.variance;
        (-0.5 * t2).exp() / (2.0 * PI * self.variance).sqrt() * (1.0 + self.weight * (t2 - 1.0))
    }

    pub fn cdf(&self, s: f64) -> f64 {
        let t = s / self.variance.sqrt();
        let phi = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        0.5 * libm::erfc(-t / std::f64::consts::SQRT_2) - self.weight * t * phi
    }

    /// Second moment `var (1 + 2 weight)`.
    pub fn second_moment(&self) -> f64 {
        self.variance * (1.0 + 2.0 * self.weight)
    }
}

/// Total variation between the histogram of `values` and `marginal` over
/// `bins` equal cells spanning four standard deviations either side (tails
/// folded into the end cells), together with the expected i.i.d. value.
pub fn marginal_total_variation(values: &[f64], marginal: &AtomMarginal, bins: usize) -> (f64, f64) {
    let half = 4.0 * marginal.second_moment().sqrt();
    let width = 2.0 * half / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = ((v + half) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[b] += 1;
    }
    let edge = |b: usize| match b {
        0 => 0.0,
        b if b == bins => 1.0,
        b => marginal.cdf(-half + b as f64 * width),
    };
    let masses: Vec<f64> = (0..bins).map(|b| edge(b + 1) - edge(b)).collect();
    let m = values.len() as f64;
    let tv = 0.5
        * counts
            .iter()
            .zip(&masses)
            .map(|(&c, &p)| (c as f64 / m - p).abs())
            .sum::<f64>();
    (
        tv,
        crate::equilibrium::iid_total_variation_estimate(&masses, values.len()),
    )
}

/// Angular frequency in `[lo, hi]` (scanned on `n` points) whose least-squares
/// fit `A + B cos(w t) + C sin(w t)` leaves the smallest residual.
pub fn dominant_frequency(times: &[f64], values: &[f64], lo: f64, hi: f64, n: usize) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut best = (f64::INFINITY, lo);
    for i in 0..n {
        let w = lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64;
        let basis = |t: f64| [1.0, (w * t).cos(), (w * t).sin()];
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = nalgebra::Vector3::<f64>::zeros();
        for (&t, &y) in times.iter().zip(values) {
            let b = nalgebra::Vector3::from(basis(t));
            ata += b * b.transpose();
            atb += b * (y - mean);
        }
        let Some(coef) = ata.lu().solve(&atb) else { continue };
        let rss: f64 = times
            .iter()
            .zip(values)
            .map(|(&t, &y)| (y - mean - nalgebra::Vector3::from(basis(t)).dot(&coef)).powi(2))
            .sum();
        if rss < best.0 {
            best = (rss, w);
        }
    }
    best.1
}

/// Free-function form of [`PhononField::amplitude`].
pub fn one_phonon_wavefunction(modes: &PhononModeSet, state: &OnePhononState, q: &[f64], t: f64) -> Result<Complex64> {
    Ok(PhononField::new(modes, state)?.amplitude(q, t))
}

/// Free-function form of [`PhononField::velocities`].
pub fn atom_velocities(modes: &PhononModeSet, state: &OnePhononState, q: &[f64], t: f64) -> Result<Vec<f64>> {
    PhononField::new(modes, state)?.velocities(q, t)
}

#[derive(Debug, Clone)]
pub struct AtomRun {
    pub history: TrajectoryHistory,
    pub final_positions: TrajectorySet,
    pub cap_triggers: u64,
}

/// RK4 integration of every atom configuration in `q0` through the closed-form
/// velocity field; stage velocities faster than `speed_cap` (or at nodes) are capped.
pub fn integrate_atoms(
    field: &PhononField,
    q0: &TrajectorySet,
    t_final: f64,
    dt: f64,
    speed_cap: f64,
    record_times: &[f64],
) -> Result<AtomRun> {
    let n = field.modes.chain.n_atoms;
    if q0.n_axes() != n {
        return Err(Error::param("q0", "need one coordinate per atom"));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let k = field.modes.chain.hbar / field.modes.chain.mass;
    let vacuum = field.state.is_vacuum();
    let mut q = q0.clone();
    let mut history = TrajectoryHistory::default();
    let mut caps = 0u64;
    let mut rec = record_times.iter().peekable();
    let tol = 1e-9 * dt;
    while rec.peek().is_some_and(|&&t| t <= q.time + tol) {
        history.push(&q);
        rec.next();
    }
    let mut stops: Vec<f64> = record_times
        .iter()
        .cloned()
        .filter(|&t| t > q.time + tol && t < t_final)
        .collect();
    stops.push(t_final);
    for stop in stops {
        for h in crate::propagator::step_sizes(q.time, stop, dt) {
            if !vacuum {
                let t = q.time;
                let g0 = field.gradient_coefficients(t);
                let gm = field.gradient_coefficients(t + 0.5 * h);
                let g1 = field.gradient_coefficients(t + h);
                caps += q
                    .positions_mut()
                    .par_chunks_mut(n)
                    .map(|p| rk4_step(p, &g0, &gm, &g1, h, k, speed_cap))
                    .sum::<u64>();
            }
            q.time += h;
        }
        q.time = stop;
        while rec.peek().is_some_and(|&&t| t <= q.time + tol) {
            history.push(&q);
            rec.next();
        }
    }
    Ok(AtomRun {
        history,
        final_positions: q,
        cap_triggers: caps,
    })
}

fn capped_velocity(g: &[Complex64], q: &[f64], k: f64, cap: f64, out: &mut [f64]) -> bool {
    let f = dot(g, q);
    if f.norm_sqr() < NODE_EPSILON {
        out.iter_mut().for_each(|v| *v = 0.0);
        // direction undefined at the node itself; stand still for this stage
        return true;
    }
    let inv = f.inv();
    for (o, gn) in out.iter_mut().zip(g) {
        *o = k * (gn * inv).im;
    }
    let speed = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if speed > cap {
        let s = cap / speed;
        out.iter_mut().for_each(|v| *v *= s);
        return true;
    }
    false
}

fn rk4_step(p: &mut [f64], g0: &[Complex64], gm: &[Complex64], g1: &[Complex64], h: f64, k: f64, cap: f64) -> u64 {
    let n = p.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut caps = 0;
    caps += capped_velocity(g0, p, k, cap, &mut k1) as u64;
    for i in 0..n {
        tmp[i] = p[i] + 0.5 * h * k1[i];
    }
    caps += capped_velocity(gm, &tmp, k, cap, &mut k2) as u64;
    for i in 0..n {
        tmp[i] = p[i] + 0.5 * h * k2[i];
    }
    caps += capped_velocity(gm, &tmp, k, cap, &mut k3) as u64;
    for i in 0..n {
        tmp[i] = p[i] + h * k3[i];
    }
    caps += capped_velocity(g1, &tmp, k, cap, &mut k4) as u64;
    for i in 0..n {
        p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    caps
}

/// Position of the ensemble-mean kinetic energy `(1/2) m v_n^2` along the
/// ring (circular mean over atom sites), or `None` when no atom moves.
pub fn energy_centroid(field: &PhononField, q: &TrajectorySet, t: f64) -> Result<Option<f64>> {
    let n = field.modes.chain.n_atoms;
    let energy = mean_kinetic_energy(field, q, t)?;
    let c: Complex64 = energy
        .iter()
        .enumerate()
        .map(|(s, e)| Complex64::from_polar(*e, 2.0 * PI * s as f64 / n as f64))
        .sum();
    if c.norm() < 1e-300 {
        return Ok(None);
    }
    let theta = c.arg().rem_euclid(2.0 * PI);
    Ok(Some(theta / (2.0 * PI) * field.modes.chain.length()))
}

/// Ensemble mean of `(1/2) m v_n^2` for every atom.
pub fn mean_kinetic_energy(field: &PhononField, q: &TrajectorySet, t: f64) -> Result<Vec<f64>> {
    let n = field.modes.chain.n_atoms;
    if field.state.is_vacuum() {
        return Ok(vec![0.0; n]);
    }
    let g = field.gradient_coefficients(t);
    let k = field.modes.chain.hbar / field.modes.chain.mass;
    let m = field.modes.chain.mass;
    let per: Vec<Option<Vec<f64>>> = q
        .positions()
        .par_chunks(n)
        .map(|p| velocities_from(&g, p, k).ok())
        .collect();
    let mut sums = vec![0.0; n];
    for v in per.into_iter().flatten() {
        sums.iter_mut().zip(&v).for_each(|(a, x)| *a += 0.5 * m * x * x);
    }
    Ok(sums.into_iter().map(|s| s / q.len() as f64).collect())
}

/// Dispersion used by a quasiparticle wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dispersion {
    /// The chain's `omega(p)`.
    Lattice,
    /// `omega = c_s |p|` (the long-wavelength limit taken exactly).
    Linear,
}

/// `psi(x, t) = sum_p c_p e^{-i (omega(p) t - p x)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiparticleWave {
    pub momenta: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub group_velocities: Vec<f64>,
    pub coefficients: Vec<Complex64>,
}

pub fn quasiparticle_wave(state: &OnePhononState, chain: &LatticeChain, dispersion: Dispersion) -> QuasiparticleWave {
    let c = chain.sound_speed();
    let mut w = QuasiparticleWave {
        momenta: Vec::new(),
        frequencies: Vec::new(),
        group_velocities: Vec::new(),
        coefficients: Vec::new(),
    };
    for (j, cj) in state.terms() {
        let p = chain.momentum(j);
        let (omega, vg) = match dispersion {
            Dispersion::Lattice => (chain.omega(p), chain.group_velocity(p)),
            Dispersion::Linear => (c * p.abs(), c * p.signum()),
        };
        w.momenta.push(p);
        w.frequencies.push(omega);
        w.group_velocities.push(vg);
        w.coefficients.push(cj);
    }
    w
}

/// `psi` and its analytic second derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveDerivatives {
    pub value: Complex64,
    pub d_tt: Complex64,
    pub d_xx: Complex64,
}

impl QuasiparticleWave {
    /// Single plane wave at an arbitrary momentum `p` (not restricted to the
    /// chain's allowed momenta).
    pub fn plane(chain: &LatticeChain, p: f64, dispersion: Dispersion) -> Self {
        let c = chain.sound_speed();
        let (omega, vg) = match dispersion {
            Dispersion::Lattice => (chain.omega(p), chain.group_velocity(p)),
            Dispersion::Linear => (c * p.abs(), c * p.signum()),
        };
        QuasiparticleWave {
            momenta: vec![p],
            frequencies: vec![omega],
            group_velocities: vec![vg],
            coefficients: vec![Complex64::new(1.0, 0.0)],
        }
    }

    pub fn evaluate(&self, x: f64, t: f64) -> Complex64 {
        self.terms(x, t).map(|(_, _, e)| e).sum()
    }

    fn terms(&self, x: f64, t: f64) -> impl Iterator<Item = (f64, f64, Complex64)> + '_ {
        self.momenta
            .iter()
            .zip(&self.frequencies)
            .zip(&self.coefficients)
            .map(move |((&p, &w), &c)| (p, w, c * Complex64::from_polar(1.0, p * x - w * t)))
    }

    pub fn derivatives(&self, x: f64, t: f64) -> WaveDerivatives {
        let mut d = WaveDerivatives {
            value: ZERO,
            d_tt: ZERO,
            d_xx: ZERO,
        };
        for (p, w, e) in self.terms(x, t) {
            d.value += e;
            d.d_tt -= e * (w * w);
            d.d_xx -= e * (p * p);
        }
        d
    }

    /// `Re(psi^* v_hat psi) / |psi|^2`, `v_hat` the group-velocity operator.
    pub fn guidance_velocity(&self, x: f64, t: f64) -> Option<f64> {
        let mut psi = ZERO;
        let mut vpsi = ZERO;
        for ((_, _, e), vg) in self.terms(x, t).zip(&self.group_velocities) {
            psi += e;
            vpsi += e * *vg;
        }
        let rho = psi.norm_sqr();
        (rho > 1e-300).then(|| (psi.conj() * vpsi).re / rho)
    }

    /// Same wave seen from a frame moving with speed `v`: every mode's
    /// `(omega, p)` goes to `(gamma (omega - v p), gamma (p - v omega / c^2))`.
    pub fn boosted(&self, v: f64, c: f64) -> Result<QuasiparticleWave> {
        if !(v.abs() < c) {
            return Err(Error::SuperluminalBoost {
                speed: v.abs(),
                limit: c,
            });
        }
        let g = 1.0 / (1.0 - (v / c).powi(2)).sqrt();
        let mut out = self.clone();
        for ((p, w), (p0, w0)) in out
            .momenta
            .iter_mut()
            .zip(out.frequencies.iter_mut())
            .zip(self.momenta.iter().zip(&self.frequencies))
        {
            *w = g * (w0 - v * p0);
            *p = g * (p0 - v * w0 / (c * c));
        }
        Ok(out)
    }
}

/// Rectangular `(x, t)` sampling lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub nt: usize,
}

impl SampleBox {
    fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let step = |lo: f64, hi: f64, n: usize, i: usize| {
            if n > 1 {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            } else {
                lo
            }
        };
        (0..self.nt).flat_map(move |it| {
            let t = step(self.t_min, self.t_max, self.nt, it);
            (0..self.nx).map(move |ix| (step(self.x_min, self.x_max, self.nx, ix), t))
        })
    }
}

/// `RMS |psi_tt / c^2 - psi_xx| / RMS |psi_xx|` over the sample box.
pub fn wave_equation_residual(wave: &QuasiparticleWave, sample: &SampleBox, c: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, t) in sample.points() {
        let d = wave.derivatives(x, t);
        num += (d.d_tt / (c * c) - d.d_xx).norm_sqr();
        den += d.d_xx.norm_sqr();
    }
    (num / den).sqrt()
}

/// Wave-equation residual in the rest frame and in a frame moving with `v`
/// (invariant speed `c`), both over the same sample box.
pub fn lorentz_boost_check(wave: &QuasiparticleWave, v: f64, c: f64, sample: &SampleBox) -> Result<(f64, f64)> {
    let boosted = wave.boosted(v, c)?;
    let rest = wave.boosted(0.0, c)?;
    Ok((
        wave_equation_residual(&rest, sample, c),
        wave_equation_residual(&boosted, sample, c),
    ))
}

/// Quasiparticle trajectory `dX/dt = Re(psi^* v_hat psi) / |psi|^2` by RK4.
/// Returns `(t, X)` after every step, starting with `(0, x0)`.
pub fn interpretation1_trajectory(
    wave: &QuasiparticleWave,
    x0: f64,
    t_final: f64,
    dt: f64,
    speed_cap: f64,
) -> Vec<(f64, f64)> {
    let v = |x: f64, t: f64| {
        wave.guidance_velocity(x, t)
            .map_or(0.0, |u| u.clamp(-speed_cap, speed_cap))
    };
    let mut out = vec![(0.0, x0)];
    let (mut t, mut x) = (0.0, x0);
    for h in crate::propagator::step_sizes(0.0, t_final, dt) {
        let k1 = v(x, t);
        let k2 = v(x + 0.5 * h * k1, t + 0.5 * h);
        let k3 = v(x + 0.5 * h * k2, t + 0.5 * h);
        let k4 = v(x + h * k3, t + h);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        out.push((t, x));
    }
    out
}

/// Centroid of `|psi(x, t)|^2` over one period `[x_centre - L/2, x_centre + L/2)`.
pub fn wave_centroid(wave: &QuasiparticleWave, t: f64, x_centre: f64, period: f64, samples: usize) -> f64 {
    let dx = period / samples as f64;
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for i in 0..samples {
        let x = x_centre - 0.5 * period + (i as f64 + 0.5) * dx;
        let r = wave.evaluate(x, t).norm_sqr();
        m0 += r;
        m1 += r * x;
    }
    m1 / m0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn chain_validation() {
        assert!(LatticeChain::unit(6).is_err());
        assert!(LatticeChain::unit(9).is_err());
        assert!(LatticeChain::new(8, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(LatticeChain::unit(8).is_ok());
    }

    #[test]
    fn analytic_frequencies() {
        let chain = LatticeChain::unit(64).unwrap();
        let modes = normal_modes(&chain);
        assert!((modes.frequency_of(32) - 2.0).abs() < 1e-12);
        assert_eq!(modes.frequency_of(-1), modes.frequency_of(1));
        assert_eq!(chain.omega(0.0), 0.0);
        assert_eq!(modes.real_frequencies[0], 0.0);
        assert!(modes.orthonormality_error() < 1e-12);
        let ratio = chain.omega(0.1) / (chain.sound_speed() * 0.1);
        assert!((ratio - 0.05f64.sin() / 0.05).abs() < 1e-10);
        assert!((ratio - 0.999_583_385_4).abs() < 1e-10);
    }

    #[test]
    fn modes_diagonalize_the_dynamical_matrix() {
        let chain = LatticeChain::new(16, 1.3, 0.7, 1.0, 1.0).unwrap();
        let modes = normal_modes(&chain);
        let k = chain.spring / chain.mass;
        for (e, w) in modes.vectors.iter().zip(&modes.real_frequencies) {
            for s in 0..16 {
                let de = k * (2.0 * e[s] - e[(s + 1) % 16] - e[(s + 15) % 16]);
                assert!((de - w * w * e[s]).abs() < 1e-12);
            }
        }
    }

    fn random_q(n: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn closed_form_examples() {
        let chain = LatticeChain::unit(16).unwrap();
        let modes = normal_modes(&chain);
        let single = OnePhononState::single_mode(&chain, 3).unwrap();
        let f = PhononField::new(&modes, &single).unwrap();
        assert_eq!(f.amplitude(&[0.0; 16], 0.7).norm(), 0.0);
        let vac = PhononField::new(&modes, &OnePhononState::vacuum(16)).unwrap();
        let q = random_q(16, 1, 0.5);
        let a = vac.amplitude(&q, 0.0);
        assert!(a.im == 0.0 && a.re > 0.0);
        assert!(vac.velocities(&q, 1.0).unwrap().iter().all(|v| *v == 0.0));
        for seed in 0..5 {
            let q = random_q(16, seed, 0.7);
            let r0 = f.amplitude(&q, 0.0).norm_sqr();
            let r1 = f.amplitude(&q, 3.7).norm_sqr();
            assert!((r0 - r1).abs() <= 1e-12 * r0.max(1e-300));
            assert!(f.flux_divergence(&q, 2.0).abs() < 1e-8);
        }
        assert!(OnePhononState::new(&chain, &[(0, Complex64::new(1.0, 0.0))]).is_err());
        assert!(OnePhononState::new(&chain, &[(1, Complex64::new(0.5, 0.0))]).is_err());
    }

    #[test]
    fn velocities_and_divergence_match_finite_differences() {
        let chain = LatticeChain::unit(8).unwrap();
        let modes = normal_modes(&chain);
        let state = OnePhononState::normalized(
            &chain,
            &[
                (1, Complex64::new(1.0, 0.0)),
                (-2, Complex64::new(0.3, 0.8)),
                (4, Complex64::new(0.0, 0.5)),
            ],
        )
        .unwrap();
        let f = PhononField::new(&modes, &state).unwrap();
        let q = random_q(8, 5, 0.6);
        let t = 0.9;
        let v = f.velocities(&q, t).unwrap();
        let h = 1e-5;
        let mut div = 0.0;
        for n in 0..8 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[n] += h;
            qm[n] -= h;
            // phase derivative of Psi
            let dphase = (f.amplitude(&qp, t) / f.amplitude(&qm, t)).arg() / (2.0 * h);
            assert!((v[n] - dphase).abs() < 1e-6, "{} vs {}", v[n], dphase);
            let flux = |x: &[f64]| f.amplitude(x, t).norm_sqr() * f.velocities(x, t).unwrap()[n];
            div += (flux(&qp) - flux(&qm)) / (2.0 * h);
        }
        let analytic = f.flux_divergence(&q, t);
        assert!(
            (div - analytic).abs() < 1e-6 * analytic.abs().max(1e-3),
            "{div} vs {analytic}"
        );
        // continuity: d|Psi|^2/dt = -div
        let dt = 1e-5;
        let drho = (f.amplitude(&q, t + dt).norm_sqr() - f.amplitude(&q, t - dt).norm_sqr()) / (2.0 * dt);
        assert!((drho + analytic).abs() < 1e-6 * analytic.abs().max(1e-3));
    }

    #[test]
    fn nodal_point_is_reported() {
        let chain = LatticeChain::unit(8).unwrap();
        let modes = normal_modes(&chain);
        let state = OnePhononState::single_mode(&chain, 2).unwrap();
        assert_eq!(atom_velocities(&modes, &state, &[0.0; 8], 0.0), Err(Error::NodalPoint));
    }

    #[test]
    fn sampler_matches_marginal_moments() {
        let chain = LatticeChain::unit(16).unwrap();
        let modes = normal_modes(&chain);
        let state = OnePhononState::normalized(&chain, &[(1, Complex64::new(1.0, 0.0)), (2, Complex64::new(0.0, 1.0))])
            .unwrap();
        let f = PhononField::new(&modes, &state).unwrap();
        let m = 40_000;
        let s = f.sample(0.0, m, 3).unwrap();
        for atom in [0, 5] {
            let marg = f.atom_marginal(atom, 0.0);
            let x = s.coordinate(atom);
            let m2 = x.iter().map(|v| v * v).sum::<f64>() / m as f64;
            let m4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / m as f64;
            let se = ((m4 - m2 * m2) / m as f64).sqrt();
            assert!(
                (m2 - marg.second_moment()).abs() < 4.0 * se,
                "{m2} vs {}",
                marg.second_moment()
            );
        }
        // the zero mode is frozen: atoms keep their centre of mass
        let com: f64 = s.position(7).iter().sum();
        assert!(com.abs() < 1e-12);
        // the marginal integrates to one
        let marg = f.atom_marginal(3, 0.0);
        assert!((marg.cdf(50.0) - 1.0).abs() < 1e-12 && marg.cdf(-50.0).abs() < 1e-12);
    }

    #[test]
    fn quasiparticle_wave_examples() {
        let chain = LatticeChain::unit(64).unwrap();
        let single = OnePhononState::single_mode(&chain, 3).unwrap();
        let w = quasiparticle_wave(&single, &chain, Dispersion::Lattice);
        for x in [0.0, 3.3, -17.0] {
            assert!((w.evaluate(x, 2.5).norm() - 1.0).abs() < 1e-12);
        }
        let packet = OnePhononState::normalized(
            &chain,
            &(1..6)
                .map(|j| (j, Complex64::new(1.0 / j as f64, 0.0)))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let w = quasiparticle_wave(&packet, &chain, Dispersion::Lattice);
        let at0 = w.evaluate(0.0, 0.0).norm();
        for i in 1..64 {
            assert!(w.evaluate(i as f64 * 0.5, 0.0).norm() <= at0);
        }
    }

    #[test]
    fn single_mode_residual_is_the_dispersion_identity() {
        let chain = LatticeChain::unit(64).unwrap();
        let c = chain.sound_speed();
        let sample = SampleBox {
            x_min: 0.0,
            x_max: 10.0,
            nx: 7,
            t_min: 0.0,
            t_max: 5.0,
            nt: 5,
        };
        for j in [1, 5, 20] {
            let state = OnePhononState::single_mode(&chain, j).unwrap();
            let w = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
            let half = 0.5 * chain.momentum(j);
            let sinc = half.sin() / half;
            let r = wave_equation_residual(&w, &sample, c);
            assert!((r - (1.0 - sinc * sinc)).abs() < 1e-12, "{r}");
            let lin = quasiparticle_wave(&state, &chain, Dispersion::Linear);
            assert!(wave_equation_residual(&lin, &sample, c) < 1e-14);
        }
        // p a = 0.1 is not a chain momentum for any integer N, so set it directly
        let w = QuasiparticleWave::plane(&chain, 0.1, Dispersion::Lattice);
        let r = wave_equation_residual(&w, &sample, c);
        assert!((r - 8.3305e-4).abs() < 1e-8, "{r}");
    }

    #[test]
    fn boost_examples() {
        let chain = LatticeChain::unit(64).unwrap();
        let c = chain.sound_speed();
        let state = OnePhononState::single_mode(&chain, 1).unwrap();
        let w = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
        let sample = SampleBox {
            x_min: 0.0,
            x_max: 10.0,
            nx: 5,
            t_min: 0.0,
            t_max: 5.0,
            nt: 5,
        };
        let (r0, r1) = lorentz_boost_check(&w, 0.0, c, &sample).unwrap();
        assert_eq!(r0.to_bits(), r1.to_bits());
        let (rest, moving) = lorentz_boost_check(&w, 0.5 * c, c, &sample).unwrap();
        // omega^2 - c^2 p^2 is invariant, so the ratio is (p / p')^2, which
        // tends to (1 + b) / (1 - b) = 3 as omega / (c p) tends to 1
        let p = chain.momentum(1);
        let b = w.boosted(0.5 * c, c).unwrap().momenta[0];
        assert!((moving / rest - (p / b).powi(2)).abs() < 1e-9);
        assert!((moving / rest - 3.0).abs() < 3e-3, "{}", moving / rest);
        let (rest, moving) = lorentz_boost_check(&w, 0.3 * c, c, &sample).unwrap();
        assert!(moving < 2.0 * rest && rest < 2.0 * moving);
        assert!(matches!(
            lorentz_boost_check(&w, c, c, &sample),
            Err(Error::SuperluminalBoost { .. })
        ));
        let lin = quasiparticle_wave(&state, &chain, Dispersion::Linear);
        let (_, b) = lorentz_boost_check(&lin, 0.7 * c, c, &sample).unwrap();
        assert!(b < 1e-10);
    }

    #[test]
    fn single_mode_quasiparticle_moves_uniformly() {
        let chain = LatticeChain::unit(64).unwrap();
        let state = OnePhononState::single_mode(&chain, 2).unwrap();
        let w = quasiparticle_wave(&state, &chain, Dispersion::Lattice);
        let path = interpretation1_trajectory(&w, 1.5, 10.0, 0.1, 100.0);
        let vg = chain.group_velocity(chain.momentum(2));
        let (t, x) = *path.last().unwrap();
        assert!((x - 1.5 - vg * t).abs() < 1e-10);
    }

    #[test]
    fn dense_oracle_agrees() {
        for n in [8, 64] {
            let chain = LatticeChain::new(n, 2.0, 3.0, 0.5, 1.0).unwrap();
            let a = normal_modes(&chain).sorted_frequencies();
            let b = dense_frequencies(&chain);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
