//! Discrete decoherence: repeated Gaussian fuzzy measurements and series of
//! weak ancilla interactions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::export::csv_table;
use crate::hilbert::{c64, check_dims, expm, hermitian_spectrum, hermitize, CMatrix, CVector, DensityMatrix, HermitianOperator, NonHermitianOperator, QuantumState, Spectrum};
use crate::quadrature::GaussHermite;

/// Default population deficit at which a chain counts as collapsed.
pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 1e-4;

const CHUNK: usize = 64;

/// Gaussian fuzzy measurement of A with operators R_a = exp(−s(A − a)²)
/// and outcome measure √(2s/π) da.
#[derive(Debug, Clone)]
pub struct FuzzyKraus {
    a: HermitianOperator,
    strength: f64,
    spectrum: Spectrum,
}

impl FuzzyKraus {
    pub fn new(a: HermitianOperator, strength: f64) -> Result<Self> {
        if !(strength > 0.0 && strength.is_finite()) {
            return Err(Error::InvalidParameter("fuzzy measurement strength must be positive".into()));
        }
        let spectrum = a.spectrum();
        Ok(Self { a, strength, spectrum })
    }

    pub fn observable(&self) -> &HermitianOperator {
        &self.a
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// R_a = exp(−s(A − a)²).
    pub fn operator(&self, a: f64) -> CMatrix {
        let s = self.strength;
        self.spectrum.apply_fn(|l| c64((-s * (l - a) * (l - a)).exp(), 0.0))
    }

    /// Max-norm deviation of ∫ da √(2s/π) R_a² from the identity by
    /// Gauss–Hermite quadrature centered on the spectrum.
    pub fn completeness_defect(&self, order: usize) -> Result<f64> {
        let gh = GaussHermite::new(order)?;
        let v = &self.spectrum.values;
        let center = 0.5 * (v[0] + v[v.len() - 1]);
        let scale = (2.0 * self.strength).sqrt();
        let n = self.a.dim();
        let mut total = CMatrix::zeros(n, n);
        for (x, w) in gh.unweighted() {
            let r = self.operator(center + x / scale);
            total += (&r * &r).scale(w / PI.sqrt());
        }
        Ok((total - CMatrix::identity(n, n)).iter().fold(0.0, |m, z| m.max(z.norm())))
    }

    /// Populations of the eigenvectors of A, in ascending eigenvalue order.
    pub fn populations(&self, psi: &QuantumState) -> Vec<f64> {
        let coeffs = self.spectrum.vectors.adjoint() * psi.amplitudes();
        coeffs.iter().map(|z| z.norm_sqr()).collect()
    }

    fn check_nondegenerate(&self) -> Result<()> {
        if self.spectrum.values.windows(2).any(|w| w[1] - w[0] < 1e-9) {
            return Err(Error::InvalidParameter("observable has a degenerate spectrum".into()));
        }
        Ok(())
    }
}

/// Draws one outcome from p(a) = √(2s/π)‖R_a ψ‖², applies R_a and
/// renormalizes. Returns the new state, the readout and p(a).
pub fn sample_fuzzy_shot<R: Rng + ?Sized>(k: &FuzzyKraus, psi: &QuantumState, rng: &mut R) -> Result<(QuantumState, f64, f64)> {
    check_dims(k.a.dim(), psi.dim())?;
    let s = k.strength;
    let coeffs = k.spectrum.vectors.adjoint() * psi.amplitudes();
    let weights: Vec<f64> = coeffs.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut m = weights.len() - 1;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            m = i;
            break;
        }
    }
    let z: f64 = rng.sample(StandardNormal);
    let a = k.spectrum.values[m] + z / (2.0 * s.sqrt());

    let exponents: Vec<f64> = k.spectrum.values.iter().map(|l| -s * (l - a) * (l - a)).collect();
    let top = exponents.iter().zip(&weights).filter(|(_, &w)| w > 0.0).map(|(e, _)| *e).fold(f64::NEG_INFINITY, f64::max);
    let scaled = CVector::from_iterator(coeffs.len(), coeffs.iter().zip(&exponents).map(|(c, e)| c * (e - top).exp()));
    let density = weights.iter().zip(&exponents).map(|(w, e)| w * (2.0 * e).exp()).sum::<f64>() * (2.0 * s / PI).sqrt() / total;
    let state = QuantumState::new(&k.spectrum.vectors * scaled)?.normalized();
    Ok((state, a, density))
}

#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub final_state: QuantumState,
    pub readouts: Vec<f64>,
    /// Index into the ascending spectrum of A.
    pub collapsed_to: Option<usize>,
    /// Eigenvector populations before the first shot and after every shot.
    pub populations: Vec<Vec<f64>>,
}

impl ChainOutcome {
    /// CSV with columns shot, a, p_0, …; one row per shot.
    pub fn to_csv(&self) -> String {
        let dim = self.populations[0].len();
        let mut header = vec!["shot".to_string(), "a".to_string()];
        header.extend((0..dim).map(|m| format!("p_{m}")));
        let rows = self.readouts.iter().enumerate().map(|(i, &a)| {
            let mut row = vec![(i + 1) as f64, a];
            row.extend_from_slice(&self.populations[i + 1]);
            row
        });
        csv_table(&header, rows)
    }
}

fn collapsed(populations: &[f64], threshold: f64) -> Option<usize> {
    populations.iter().position(|&p| p > 1.0 - threshold)
}

/// Repeats fuzzy shots until one eigenvector population exceeds
/// 1 − `collapse_threshold` or `n_steps` shots have been taken. A threshold
/// of 0 never stops early.
pub fn run_decoherence_chain(k: &FuzzyKraus, psi0: &QuantumState, n_steps: usize, seed: u64, collapse_threshold: f64) -> Result<ChainOutcome> {
    check_dims(k.a.dim(), psi0.dim())?;
    k.check_nondegenerate()?;
    if !(0.0..1.0).contains(&collapse_threshold) {
        return Err(Error::InvalidParameter("collapse threshold must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = psi0.normalized();
    let mut populations = vec![k.populations(&psi)];
    let mut readouts = Vec::new();
    let mut collapsed_to = collapsed(&populations[0], collapse_threshold);
    while collapsed_to.is_none() && readouts.len() < n_steps {
        let (next, a, _) = sample_fuzzy_shot(k, &psi, &mut rng)?;
        psi = next;
        readouts.push(a);
        populations.push(k.populations(&psi));
        collapsed_to = collapsed(populations.last().expect("non-empty"), collapse_threshold);
    }
    Ok(ChainOutcome { final_state: psi, readouts, collapsed_to, populations })
}

#[derive(Debug, Clone)]
pub struct ChainEnsemble {
    pub n_chains: usize,
    /// Chains collapsed onto each eigenvector of A.
    pub collapse_counts: Vec<usize>,
    pub uncollapsed: usize,
    /// Mean eigenvector populations after each shot count 0..=n_steps; a
    /// stopped chain contributes its final populations to later shots.
    pub mean_populations: Vec<Vec<f64>>,
    /// Means of the squared populations, for standard errors.
    pub mean_square_populations: Vec<Vec<f64>>,
    pub mean_final_rho: DensityMatrix,
}

impl ChainEnsemble {
    /// Standard error of `mean_populations[shot][m]`.
    pub fn standard_error(&self, shot: usize, m: usize) -> f64 {
        let mean = self.mean_populations[shot][m];
        let var = (self.mean_square_populations[shot][m] - mean * mean).max(0.0);
        (var / (self.n_chains as f64 - 1.0).max(1.0)).sqrt()
    }
}

/// Runs `n_chains` chains with seeds `seed_base + i` and reduces them in a
/// fixed order.
pub fn run_chain_ensemble(k: &FuzzyKraus, psi0: &QuantumState, n_steps: usize, n_chains: usize, seed_base: u64, collapse_threshold: f64) -> Result<ChainEnsemble> {
    if n_chains == 0 {
        return Err(Error::InvalidParameter("n_chains must be positive".into()));
    }
    let dim = k.a.dim();
    struct Sums {
        counts: Vec<usize>,
        uncollapsed: usize,
        pops: Vec<Vec<f64>>,
        pops_sq: Vec<Vec<f64>>,
        rho: CMatrix,
    }
    let empty = || Sums {
        counts: vec![0; dim],
        uncollapsed: 0,
        pops: vec![vec![0.0; dim]; n_steps + 1],
        pops_sq: vec![vec![0.0; dim]; n_steps + 1],
        rho: CMatrix::zeros(dim, dim),
    };
    let chunks: Vec<Result<Sums>> = (0..n_chains.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = empty();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_chains) {
                let out = run_decoherence_chain(k, psi0, n_steps, seed_base.wrapping_add(i as u64), collapse_threshold)?;
                match out.collapsed_to {
                    Some(m) => sums.counts[m] += 1,
                    None => sums.uncollapsed += 1,
                }
                let last = out.populations.len() - 1;
                for shot in 0..=n_steps {
                    let pops = &out.populations[shot.min(last)];
                    for m in 0..dim {
                        sums.pops[shot][m] += pops[m];
                        sums.pops_sq[shot][m] += pops[m] * pops[m];
                    }
                }
                sums.rho += out.final_state.projector();
            }
            Ok(sums)
        })
        .collect();
    let mut total = empty();
    for chunk in chunks {
        let s = chunk?;
        for (a, b) in total.counts.iter_mut().zip(&s.counts) {
            *a += b;
        }
        total.uncollapsed += s.uncollapsed;
        for (acc, row) in total.pops.iter_mut().zip(&s.pops) {
            for (a, b) in acc.iter_mut().zip(row) {
                *a += b;
            }
        }
        for (acc, row) in total.pops_sq.iter_mut().zip(&s.pops_sq) {
            for (a, b) in acc.iter_mut().zip(row) {
                *a += b;
            }
        }
        total.rho += s.rho;
    }
    let inv = 1.0 / n_chains as f64;
    Ok(ChainEnsemble {
        n_chains,
        collapse_counts: total.counts,
        uncollapsed: total.uncollapsed,
        mean_populations: total.pops.into_iter().map(|row| row.into_iter().map(|p| p * inv).collect()).collect(),
        mean_square_populations: total.pops_sq.into_iter().map(|row| row.into_iter().map(|p| p * inv).collect()).collect(),
        mean_final_rho: DensityMatrix::renormalized(&total.rho.scale(inv))?,
    })
}

/// A series of `n_shots` weak couplings exp(−i g A⊗σy) to fresh ancillas
/// prepared in |0⟩, each read out in the computational basis.
#[derive(Debug, Clone, Copy)]
pub struct AncillaScheme {
    pub g: f64,
    pub n_shots: usize,
}

impl AncillaScheme {
    pub fn new(g: f64, n_shots: usize) -> Result<Self> {
        if !(g >= 0.0 && g.is_finite()) || n_shots == 0 {
            return Err(Error::InvalidParameter("coupling must be non-negative and n_shots positive".into()));
        }
        Ok(Self { g, n_shots })
    }

    /// Small-g strength of the post-selected series over total time
    /// `duration`: n·g²/(2T).
    pub fn predicted_kappa(&self, duration: f64) -> f64 {
        self.n_shots as f64 * self.g * self.g / (2.0 * duration)
    }
}

/// Branch operators (M₀, M₁) of one ancilla interaction, taken from the
/// blocks of exp(−i g A⊗σy) with system index major. M₀ = cos(gA) and
/// M₁ = sin(gA).
pub fn branch_operators(g: f64, a: &HermitianOperator) -> Result<(CMatrix, CMatrix)> {
    let n = a.dim();
    let sy = HermitianOperator::pauli_y();
    let coupling = a.matrix().kronecker(sy.matrix()).map(|z| z * c64(0.0, -g));
    let u = expm(&coupling)?;
    let block = |outcome: usize| CMatrix::from_fn(n, n, |i, k| u[(2 * i + outcome, 2 * k)]);
    Ok((block(0), block(1)))
}

#[derive(Debug, Clone)]
pub struct AncillaBranch {
    pub state: QuantumState,
    pub probability: f64,
    pub outcome: u8,
}

/// Both measurement branches of a single weak interaction; branches of zero
/// probability are dropped.
pub fn weak_ancilla_shot(scheme: &AncillaScheme, a: &HermitianOperator, psi: &QuantumState) -> Result<Vec<AncillaBranch>> {
    check_dims(a.dim(), psi.dim())?;
    let strength = scheme.g * a.spectral_norm();
    if strength > 0.5 {
        return Err(Error::InvalidParameter(format!("weak coupling requires g*|A| <= 0.5, got {strength}")));
    }
    let (m0, m1) = branch_operators(scheme.g, a)?;
    let mut branches = Vec::with_capacity(2);
    for (outcome, m) in [(0u8, m0), (1u8, m1)] {
        let v = m * psi.amplitudes();
        let probability = v.norm_squared();
        if probability > 0.0 {
            branches.push(AncillaBranch { state: QuantumState::new(v)?.normalized(), probability, outcome });
        }
    }
    Ok(branches)
}

/// Φ = i·log(M₀ⁿ) for the series post-selected on all outcomes 0, so that
/// M₀ⁿ = exp(−iΦ).
pub fn postselected_log_operator(scheme: &AncillaScheme, a: &HermitianOperator) -> Result<NonHermitianOperator> {
    let strength = scheme.g * a.spectral_norm();
    if strength > 0.5 {
        return Err(Error::InvalidParameter(format!("weak coupling requires g*|A| <= 0.5, got {strength}")));
    }
    let (m0, _) = branch_operators(scheme.g, a)?;
    let power = m0.pow(scheme.n_shots as u32);
    let spec = hermitian_spectrum(&hermitize(&power));
    if spec.values[0] <= 0.0 {
        return Err(Error::InvalidParameter("post-selected operator is not positive".into()));
    }
    NonHermitianOperator::new(spec.apply_fn(|l| c64(0.0, l.ln())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub kappa_eff: f64,
    /// Center ā of the fitted quadratic.
    pub offset: f64,
    /// Largest absolute deviation of −Im of the eigenvalues from the fit.
    pub residual: f64,
}

/// Least-squares fit of −Im(eigenvalues of Φ) to κ_eff·(a_m − ā)²·T over the
/// eigenvalues a_m of A. Φ must be diagonal in the eigenbasis of A.
pub fn fit_effective_quadratic(phi: &NonHermitianOperator, a: &HermitianOperator, duration: f64) -> Result<QuadraticFit> {
    check_dims(a.dim(), phi.dim())?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter("duration must be positive".into()));
    }
    let spec = a.spectrum();
    let rotated = spec.vectors.adjoint() * phi.matrix() * &spec.vectors;
    let n = a.dim();
    let scale = rotated.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    let off = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .fold(0.0_f64, |m, (i, j)| m.max(rotated[(i, j)].norm()));
    if off > 1e-8 * scale {
        return Err(Error::NotDiagonal(off));
    }
    let xs = spec.values.clone();
    let ys: Vec<f64> = (0..n).map(|m| -rotated[(m, m)].im).collect();

    // For fixed ā the best κ·T is Σyq/Σq² with q = (a − ā)².
    let amplitude = |center: f64| {
        let (num, den) = xs.iter().zip(&ys).fold((0.0, 0.0), |(num, den), (x, y)| {
            let q = (x - center) * (x - center);
            (num + y * q, den + q * q)
        });
        if den > 0.0 { num / den } else { 0.0 }
    };
    let sse = |center: f64| {
        let k = amplitude(center);
        xs.iter().zip(&ys).map(|(x, y)| (y - k * (x - center).powi(2)).powi(2)).sum::<f64>()
    };
    let spread = xs[n - 1] - xs[0];
    let (lo, hi) = (xs[0] - 2.0 * spread - 1.0, xs[n - 1] + 2.0 * spread + 1.0);
    let samples = 4000;
    let h = (hi - lo) / samples as f64;
    let best = (0..=samples).map(|i| lo + i as f64 * h).min_by(|p, q| sse(*p).total_cmp(&sse(*q))).expect("non-empty scan");
    let center = golden_section(&sse, best - h, best + h);
    let k = amplitude(center);
    let residual = xs.iter().zip(&ys).map(|(x, y)| (y - k * (x - center).powi(2)).abs()).fold(0.0, f64::max);
    Ok(QuadraticFit { kappa_eff: k / duration, offset: center, residual })
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}
