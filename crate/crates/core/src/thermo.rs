//! Microcanonical counting, entropy and temperature on a spectrum family,
//! canonical states, and Nyquist-Kubo friction tensors.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::family::{check_coords, HamiltonianFamily};
use crate::frame::{build_frame, AdiabaticFrame};
use crate::operator::{hermitian_eigenvalues, CMatrix, C64};
use crate::state::QuantumState;
use crate::units::{HBAR, K_B};

/// Number of levels with `W_j <= e`.
pub fn counting_function(levels: &[f64], e: f64) -> usize {
    levels.iter().filter(|&&w| w <= e).count()
}

/// Counting function with each step replaced by a Gaussian error function of
/// width `sigma`.
pub fn smoothed_count(levels: &[f64], e: f64, sigma: f64) -> f64 {
    let s = sigma * std::f64::consts::SQRT_2;
    levels.iter().map(|&w| 0.5 * erfc((w - e) / s)).sum()
}

fn gaussian(d: f64, sigma: f64) -> f64 {
    (-0.5 * (d / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Gaussian-broadened density of states.
pub fn density_of_states(levels: &[f64], e: f64, sigma: f64) -> f64 {
    levels.iter().map(|&w| gaussian(e - w, sigma)).sum()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::validation(format!("smoothing width must be positive, got {sigma}")));
    }
    Ok(())
}

/// Mean spacing over the central half of the sorted spectrum.
pub fn mean_level_spacing(levels: &[f64]) -> Result<f64> {
    let m = levels.len();
    if m < 2 {
        return Err(Error::validation("level spacing needs at least two levels"));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = if m >= 8 { (m / 4, 3 * m / 4) } else { (0, m - 1) };
    let spacing = (sorted[hi] - sorted[lo]) / (hi - lo) as f64;
    if !(spacing > 0.0) {
        return Err(Error::domain("spectrum has zero mean level spacing"));
    }
    Ok(spacing)
}

/// Default Kubo regularization: a tenth of the mean level spacing, as a rate.
pub fn default_eta(levels: &[f64]) -> Result<f64> {
    Ok(0.1 * mean_level_spacing(levels)? / HBAR)
}

#[derive(Debug, Clone, Serialize)]
pub struct ThermoCurve {
    pub energy: Vec<f64>,
    pub omega: Vec<f64>,
    /// `k_B ln omega`.
    pub entropy: Vec<f64>,
    /// From a centered difference of the entropy in energy.
    pub temperature: Vec<f64>,
    pub density: Vec<f64>,
    pub sigma: f64,
    /// `|omega - k_B T G| / omega` per grid point.
    pub identity_residual: Vec<f64>,
}

fn entropy_at(levels: &[f64], e: f64, sigma: f64) -> Result<f64> {
    let omega = smoothed_count(levels, e, sigma);
    if !(omega > 0.0) {
        return Err(Error::domain(format!("no states below E = {e}; entropy undefined")));
    }
    Ok(K_B * omega.ln())
}

fn temperature_at(levels: &[f64], e: f64, sigma: f64) -> Result<f64> {
    // Richardson-extrapolated centered difference, accurate to O(h^4).
    let centered = |h: f64| -> Result<f64> {
        Ok((entropy_at(levels, e + h, sigma)? - entropy_at(levels, e - h, sigma)?) / (2.0 * h))
    };
    let h = 0.02 * sigma;
    let inv_t = (4.0 * centered(h / 2.0)? - centered(h)?) / 3.0;
    if !(inv_t > 0.0) {
        return Err(Error::domain(format!("entropy is flat at E = {e}; temperature undefined")));
    }
    Ok(1.0 / inv_t)
}

/// Entropy, temperature and density of states of `levels` on `grid`.
pub fn entropy_temperature(levels: &[f64], grid: &[f64], sigma: f64) -> Result<ThermoCurve> {
    check_sigma(sigma)?;
    let mut curve = ThermoCurve {
        energy: grid.to_vec(),
        omega: Vec::with_capacity(grid.len()),
        entropy: Vec::with_capacity(grid.len()),
        temperature: Vec::with_capacity(grid.len()),
        density: Vec::with_capacity(grid.len()),
        sigma,
        identity_residual: Vec::with_capacity(grid.len()),
    };
    for &e in grid {
        let omega = smoothed_count(levels, e, sigma);
        let s = entropy_at(levels, e, sigma)?;
        let t = temperature_at(levels, e, sigma)?;
        let g = density_of_states(levels, e, sigma);
        curve.identity_residual.push((omega - K_B * t * g).abs() / omega);
        curve.omega.push(omega);
        curve.entropy.push(s);
        curve.temperature.push(t);
        curve.density.push(g);
    }
    Ok(curve)
}

fn weighted_force(energies: &[f64], slopes: &[Vec<f64>], e: f64, sigma: f64) -> Result<Vec<f64>> {
    let weights: Vec<f64> = energies.iter().map(|&w| gaussian(e - w, sigma)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain(format!("no spectral weight near E = {e}")));
    }
    Ok(slopes
        .iter()
        .map(|s| -s.iter().zip(&weights).map(|(d, w)| d * w).sum::<f64>() / total)
        .collect())
}

/// Mean adiabatic force of the microcanonical shell at `e`.
pub fn microcanonical_force(fam: &dyn HamiltonianFamily, x: &[f64], e: f64, sigma: f64) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let frame = build_frame(fam, x, None)?;
    weighted_force(frame.energies(), &frame.level_slopes(), e, sigma)
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxwellPoint {
    pub energy: f64,
    pub coord: usize,
    /// Weighted mean of `-dW_j/dx`.
    pub force: f64,
    /// `T (dS/dx)` at fixed energy.
    pub entropy_side: f64,
    /// `-(dE/dx)` at fixed entropy.
    pub energy_side: f64,
    pub temperature: f64,
    pub identity_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxwellReport {
    pub sigma: f64,
    pub step: f64,
    pub points: Vec<MaxwellPoint>,
    /// Largest relative deviation of either side from `force`.
    pub max_deviation: f64,
    /// Largest `|omega - k_B T G| / omega` over the energies.
    pub max_identity_residual: f64,
}

/// Energy at which `S(., levels) = target`, bracketed around `guess`.
fn energy_at_entropy(levels: &[f64], target: f64, sigma: f64, guess: f64) -> Result<f64> {
    let f = |e: f64| -> Result<f64> { Ok(entropy_at(levels, e, sigma)? - target) };
    let mut width = sigma;
    let (mut lo, mut hi) = (guess - width, guess + width);
    let mut iterations = 0;
    while f(lo)? > 0.0 || f(hi)? < 0.0 {
        width *= 2.0;
        lo = guess - width;
        hi = guess + width;
        iterations += 1;
        if iterations > 60 {
            return Err(Error::domain("could not bracket the fixed-entropy energy"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Compare the shell force with `T (dS/dx)_E` and `-(dE/dx)_S` at each
/// energy. Coordinate derivatives use a centered difference of step `step`.
pub fn maxwell_check(
    fam: &dyn HamiltonianFamily,
    x: &[f64],
    energies: &[f64],
    sigma: f64,
    step: f64,
) -> Result<MaxwellReport> {
    check_sigma(sigma)?;
    check_coords(fam, x)?;
    if !(step > 0.0) {
        return Err(Error::validation(format!("finite-difference step must be positive, got {step}")));
    }
    let frame = build_frame(fam, x, None)?;
    let levels = frame.energies().to_vec();
    let slopes = frame.level_slopes();
    let shifted: Vec<(Vec<f64>, Vec<f64>)> = (0..x.len())
        .map(|k| -> Result<_> {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += step;
            xm[k] -= step;
            Ok((
                hermitian_eigenvalues(&fam.evaluate(&xp)?)?,
                hermitian_eigenvalues(&fam.evaluate(&xm)?)?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut max_dev = 0.0f64;
    let mut max_identity = 0.0f64;
    for &e in energies {
        let force = weighted_force(&levels, &slopes, e, sigma)?;
        let t = temperature_at(&levels, e, sigma)?;
        let s = entropy_at(&levels, e, sigma)?;
        let omega = smoothed_count(&levels, e, sigma);
        let identity = (omega - K_B * t * density_of_states(&levels, e, sigma)).abs() / omega;
        max_identity = max_identity.max(identity);
        for (k, (plus, minus)) in shifted.iter().enumerate() {
            let ds_dx = (entropy_at(plus, e, sigma)? - entropy_at(minus, e, sigma)?) / (2.0 * step);
            let entropy_side = t * ds_dx;
            let e_plus = energy_at_entropy(plus, s, sigma, e)?;
            let e_minus = energy_at_entropy(minus, s, sigma, e)?;
            let energy_side = -(e_plus - e_minus) / (2.0 * step);
            let scale = force[k].abs().max(entropy_side.abs()).max(energy_side.abs());
            if scale > 0.0 {
                let dev = (entropy_side - force[k]).abs().max((energy_side - force[k]).abs()) / scale;
                max_dev = max_dev.max(dev);
            }
            points.push(MaxwellPoint {
                energy: e,
                coord: k,
                force: force[k],
                entropy_side,
                energy_side,
                temperature: t,
                identity_residual: identity,
            });
        }
    }
    Ok(MaxwellReport {
        sigma,
        step,
        points,
        max_deviation: max_dev,
        max_identity_residual: max_identity,
    })
}

/// `e^{-beta W} / Z`, diagonal in the basis of `levels`.
pub fn canonical_state(levels: &[f64], beta: f64) -> Result<QuantumState> {
    if levels.is_empty() {
        return Err(Error::validation("canonical state needs at least one level"));
    }
    if !beta.is_finite() {
        return Err(Error::validation(format!("beta must be finite, got {beta}")));
    }
    let weights = boltzmann_weights(levels, beta);
    QuantumState::from_populations(&weights)
}

pub(crate) fn boltzmann_weights(levels: &[f64], beta: f64) -> Vec<f64> {
    // Shift by the extreme level that keeps every exponent non-positive.
    let shift = if beta >= 0.0 {
        levels.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    let raw: Vec<f64> = levels.iter().map(|w| (-beta * (w - shift)).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / z).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FrictionTensor {
    /// `Gamma[k][j]`.
    #[serde(serialize_with = "serialize_matrix")]
    pub gamma: DMatrix<f64>,
    pub beta: f64,
    pub eta: f64,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().cloned().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl FrictionTensor {
    pub fn asymmetry(&self) -> f64 {
        let scale = self.gamma.amax();
        if scale == 0.0 {
            0.0
        } else {
            (&self.gamma - self.gamma.transpose()).amax() / scale
        }
    }

    pub fn min_diagonal(&self) -> f64 {
        self.gamma.diagonal().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// `(e^{beta hbar w} - 1) / w`, continued to `beta hbar` at `w = 0`.
fn kubo_bracket(beta: f64, omega: f64) -> f64 {
    let a = beta * HBAR * omega;
    if a.abs() < 1e-8 {
        beta * HBAR * (1.0 + 0.5 * a)
    } else {
        a.exp_m1() / omega
    }
}

/// Nyquist-Kubo friction of the canonical ensemble at `x`.
pub fn kubo_friction(fam: &dyn HamiltonianFamily, x: &[f64], beta: f64, eta: f64) -> Result<FrictionTensor> {
    let frame = build_frame(fam, x, None)?;
    kubo_friction_in_frame(&frame, beta, eta)
}

/// As [`kubo_friction`], evaluated in an already-built frame.
pub fn kubo_friction_in_frame(frame: &AdiabaticFrame, beta: f64, eta: f64) -> Result<FrictionTensor> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::validation(format!("eta must be positive, got {eta}")));
    }
    if !beta.is_finite() {
        return Err(Error::validation(format!("beta must be finite, got {beta}")));
    }
    let w = frame.energies();
    let rho = boltzmann_weights(w, beta);
    let forces: Vec<CMatrix> = frame.diabatic_forces().into_iter().map(|f| f.into_matrix()).collect();
    let n = forces.len();
    let m = w.len();

    let mut coeff = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            if a != b {
                let omega = (w[a] - w[b]) / HBAR;
                coeff[(a, b)] = rho[a] * kubo_bracket(beta, omega) * eta / (eta * eta + omega * omega) / HBAR;
            }
        }
    }
    let mut gamma = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            let mut sum = C64::new(0.0, 0.0);
            for a in 0..m {
                for b in 0..m {
                    if a != b {
                        sum += forces[j][(a, b)] * forces[k][(b, a)] * coeff[(a, b)];
                    }
                }
            }
            gamma[(k, j)] = sum.re;
        }
    }
    Ok(FrictionTensor { gamma, beta, eta })
}
