//! Real spherical-harmonics basis and per-patch least-squares fitting.
//!
//! The basis is the orthonormal real one: for degree `l` and order `m`,
//!
//! ```text
//! Y_{l,0}  = N(l,0) * P_l^0(cos polar)
//! Y_{l,m}  = sqrt(2) * N(l,m)  * P_l^m(cos polar)  * cos(m * azimuth)   (m > 0)
//! Y_{l,-m} = sqrt(2) * N(l,m)  * P_l^m(cos polar)  * sin(m * azimuth)   (m > 0)
//! ```
//!
//! with `N(l,m) = sqrt((2l+1)/(4*pi) * (l-m)!/(l+m)!)` and `P_l^m` the
//! associated Legendre function carrying the Condon-Shortley phase. The phase
//! is applied exactly once: it lives inside [`legendre_assoc`] and nowhere
//! else. Entries are placed at the flat index `j = l^2 + l + m + 1`.
//!
//! Fitting uses an SVD (rank-revealing orthogonal factorization), so
//! rank-deficient systems get the minimum-norm solution instead of blowing
//! up on nearly dependent columns, which is the norm for small angular
//! patches.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Degree/order pair with its flat container index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShDegreeIndex {
    pub l: usize,
    pub m: isize,
}

impl ShDegreeIndex {
    pub fn new(l: usize, m: isize) -> Self {
        debug_assert!(m.unsigned_abs() <= l);
        Self { l, m }
    }

    /// One-based flat index `j = l^2 + l + m + 1`.
    pub fn flat(&self) -> usize {
        ((self.l * self.l + self.l) as isize + self.m + 1) as usize
    }

    /// Inverse of [`flat`](Self::flat).
    pub fn from_flat(j: usize) -> Self {
        debug_assert!(j >= 1);
        let l = ((j - 1) as f64).sqrt().floor() as usize;
        let l = if (l + 1) * (l + 1) < j { l + 1 } else { l };
        let m = j as isize - (l * l + l) as isize - 1;
        Self::new(l, m)
    }
}

/// Coefficient vector for one patch, indexed by the flat SH index.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoefficients {
    pub degree: usize,
    pub values: Vec<f64>,
}

impl ShCoefficients {
    pub fn new(degree: usize, values: Vec<f64>) -> Result<Self> {
        let expected = (degree + 1) * (degree + 1);
        if values.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "degree {degree} needs {expected} coefficients, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite coefficient".into()));
        }
        Ok(Self { degree, values })
    }

    pub fn zeros(degree: usize) -> Self {
        Self {
            degree,
            values: vec![0.0; (degree + 1) * (degree + 1)],
        }
    }
}

/// Angular samples with target radial ranges, optionally weighted.
#[derive(Debug, Clone)]
pub struct SampleSet {
    /// (polar, azimuth) pairs in the canonical convention.
    pub angles: Vec<(f64, f64)>,
    /// Radial ranges in meters.
    pub targets: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn new(angles: Vec<(f64, f64)>, targets: Vec<f64>) -> Result<Self> {
        if angles.is_empty() || angles.len() != targets.len() {
            return Err(Error::InvalidConfig(format!(
                "sample set needs matching non-empty angles/targets ({} vs {})",
                angles.len(),
                targets.len()
            )));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("non-finite target".into()));
        }
        Ok(Self {
            angles,
            targets,
            weights: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Associated Legendre function `P_l^m(x)` with the Condon-Shortley phase,
/// by the stable three-term recurrence in `l`.
pub fn legendre_assoc(l: usize, m: usize, x: f64) -> f64 {
    assert!(m <= l, "legendre_assoc: m={m} > l={l}");
    assert!((-1.0..=1.0).contains(&x), "legendre_assoc: |x| > 1");

    // P_m^m = (-1)^m (2m-1)!! (1-x^2)^(m/2)
    let somx2 = ((1.0 - x) * (1.0 + x)).sqrt();
    let mut pmm = 1.0;
    for k in 1..=m {
        pmm *= -((2 * k - 1) as f64) * somx2;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm; // P_{m+1}^m
    if l == m + 1 {
        return pm1;
    }
    let mut plm = 0.0;
    for ll in m + 2..=l {
        plm = (x * (2 * ll - 1) as f64 * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = plm;
    }
    plm
}

/// Orthonormalization constant `sqrt((2l+1)/(4*pi) * (l-m)!/(l+m)!)`.
pub fn norm_factor(l: usize, m: usize) -> f64 {
    debug_assert!(m <= l);
    let mut ratio = 1.0f64; // (l-m)!/(l+m)! = 1 / prod_{k=l-m+1}^{l+m} k
    for k in l - m + 1..=l + m {
        ratio /= k as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// Evaluates the full real basis row up to `degree` at one angle pair.
/// The returned vector has `(degree+1)^2` entries at flat indices.
pub fn sh_basis_row(polar: f64, azimuth: f64, degree: usize) -> Vec<f64> {
    let k = (degree + 1) * (degree + 1);
    let mut row = vec![0.0; k];
    let x = polar.cos();
    let somx2 = ((1.0 - x) * (1.0 + x)).sqrt();
    let sqrt2 = std::f64::consts::SQRT_2;

    // march m outward, ascending l inside each m via the three-term recurrence
    let mut pmm = 1.0f64;
    for m in 0..=degree {
        if m > 0 {
            pmm *= -((2 * m - 1) as f64) * somx2;
        }
        let (cos_m, sin_m) = if m == 0 {
            (1.0, 0.0)
        } else {
            let a = m as f64 * azimuth;
            (a.cos(), a.sin())
        };
        let mut p_prev = pmm; // P_m^m
        let mut p_curr = if degree > m {
            x * (2 * m + 1) as f64 * pmm // P_{m+1}^m
        } else {
            0.0
        };
        for l in m..=degree {
            let p = if l == m {
                p_prev
            } else if l == m + 1 {
                p_curr
            } else {
                let next = (x * (2 * l - 1) as f64 * p_curr - (l + m - 1) as f64 * p_prev)
                    / (l - m) as f64;
                p_prev = p_curr;
                p_curr = next;
                next
            };
            let scaled = norm_factor(l, m) * p;
            let base = l * l + l; // flat index of (l, 0) minus 1
            if m == 0 {
                row[base] = scaled;
            } else {
                row[base + m] = sqrt2 * scaled * cos_m;
                row[base - m] = sqrt2 * scaled * sin_m;
            }
        }
    }
    row
}

/// Least-squares SH fit. Returns the coefficients and the mean absolute
/// radial training residual in meters.
pub fn fit_least_squares(samples: &SampleSet, degree: usize) -> Result<(ShCoefficients, f64)> {
    let n = samples.len();
    let k = (degree + 1) * (degree + 1);
    let mut design = DMatrix::<f64>::zeros(n, k);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, (&(polar, azimuth), &target)) in samples.angles.iter().zip(&samples.targets).enumerate()
    {
        let row = sh_basis_row(polar, azimuth, degree);
        for (j, v) in row.iter().enumerate() {
            design[(i, j)] = *v;
        }
        rhs[i] = target;
    }
    let (scaled_design, scaled_rhs) = match &samples.weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidConfig("weights length mismatch".into()));
            }
            let mut d = design.clone();
            let mut r = rhs.clone();
            for i in 0..n {
                if w[i] < 0.0 {
                    return Err(Error::InvalidConfig("negative weight".into()));
                }
                let s = w[i].sqrt();
                for j in 0..k {
                    d[(i, j)] *= s;
                }
                r[i] *= s;
            }
            (d, r)
        }
        None => (design.clone(), rhs.clone()),
    };

    let svd = scaled_design
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let rank_eps = sigma_max * n.max(k) as f64 * f64::EPSILON;
    let solution = svd
        .solve(&scaled_rhs, rank_eps)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;

    let coeffs = ShCoefficients::new(degree, solution.iter().cloned().collect())?;
    let predicted = design * DVector::from_column_slice(&coeffs.values);
    let residual = (predicted - rhs).abs().sum() / n as f64;
    Ok((coeffs, residual))
}

/// Evaluates a fitted expansion at the given angles.
pub fn evaluate(coeffs: &ShCoefficients, angles: &[(f64, f64)]) -> Vec<f64> {
    angles
        .iter()
        .map(|&(polar, azimuth)| evaluate_one(coeffs, polar, azimuth))
        .collect()
}

/// Single-angle evaluation, `f = sum_j c_j Y_j`.
pub fn evaluate_one(coeffs: &ShCoefficients, polar: f64, azimuth: f64) -> f64 {
    let row = sh_basis_row(polar, azimuth, coeffs.degree);
    row.iter().zip(&coeffs.values).map(|(y, c)| y * c).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    /// Independent oracle from the Rodrigues route: build the Legendre
    /// polynomial coefficients exactly, differentiate m times, then apply
    /// the (-1)^m (1-x^2)^(m/2) factor.
    fn legendre_rodrigues(l: usize, m: usize, x: f64) -> f64 {
        // Bonnet recurrence on coefficient vectors (exact in f64 for small l)
        let mut p_prev = vec![1.0f64]; // P_0
        let mut p_curr = vec![0.0, 1.0]; // P_1
        if l == 0 {
            p_curr = p_prev.clone();
        }
        for ll in 2..=l {
            let mut next = vec![0.0; ll + 1];
            for (i, &c) in p_curr.iter().enumerate() {
                next[i + 1] += (2 * ll - 1) as f64 * c / ll as f64;
            }
            for (i, &c) in p_prev.iter().enumerate() {
                next[i] -= (ll - 1) as f64 * c / ll as f64;
            }
            p_prev = p_curr;
            p_curr = next;
        }
        let mut coeffs = p_curr;
        for _ in 0..m {
            let mut d = vec![0.0; coeffs.len().saturating_sub(1).max(1)];
            for (i, &c) in coeffs.iter().enumerate().skip(1) {
                d[i - 1] = c * i as f64;
            }
            coeffs = d;
        }
        let poly: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * x.powi(i as i32))
            .sum();
        let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * (1.0 - x * x).powf(m as f64 / 2.0) * poly
    }

    #[test]
    fn flat_index_bijection() {
        let mut j = 1usize;
        for l in 0..=64usize {
            for m in -(l as isize)..=(l as isize) {
                let idx = ShDegreeIndex::new(l, m);
                assert_eq!(idx.flat(), j, "flat index for l={l}, m={m}");
                assert_eq!(ShDegreeIndex::from_flat(j), idx);
                j += 1;
            }
            assert_eq!(j - 1, (l + 1) * (l + 1));
        }
    }

    #[test]
    fn legendre_closed_forms() {
        for x in [-0.9, -0.3, 0.0, 0.5, 1.0] {
            assert_eq!(legendre_assoc(0, 0, x), 1.0);
        }
        assert_relative_eq!(legendre_assoc(1, 0, 0.5), 0.5);
        // Condon-Shortley phase lives inside P: P_1^1(0) = -1
        assert_relative_eq!(legendre_assoc(1, 1, 0.0), -1.0);
        // P_2^1(x) = -3 x sqrt(1-x^2)
        let x = 0.4;
        assert_relative_eq!(
            legendre_assoc(2, 1, x),
            -3.0 * x * (1.0 - x * x).sqrt(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn legendre_matches_rodrigues_oracle() {
        for &(l, m) in &[(5usize, 3usize), (7, 0), (6, 6), (10, 4), (12, 7)] {
            for &x in &[-0.85, -0.3, 0.0, 0.3, 0.77] {
                let got = legendre_assoc(l, m, x);
                let want = legendre_rodrigues(l, m, x);
                assert_relative_eq!(got, want, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn basis_degree_zero_is_constant() {
        for &(p, a) in &[(0.1, 0.0), (1.2, 3.0), (2.9, 6.0)] {
            let row = sh_basis_row(p, a, 0);
            assert_eq!(row.len(), 1);
            assert_relative_eq!(row[0], 1.0 / (4.0 * PI).sqrt(), max_relative = 1e-15);
        }
    }

    #[test]
    fn basis_pole_kills_nonzero_orders() {
        let row = sh_basis_row(0.0, 1.234, 1);
        // flat order: (1,-1), (1,0), (1,1) at indices 1..4
        assert_eq!(row[1], 0.0);
        assert_eq!(row[3], 0.0);
        assert!(row[2] > 0.0); // Y_{1,0}(0) = sqrt(3/4pi)
        assert_relative_eq!(row[2], (3.0 / (4.0 * PI)).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn basis_matches_explicit_degree_one() {
        let (polar, az) = (1.1, 2.3);
        let row = sh_basis_row(polar, az, 1);
        let n11 = (3.0 / (8.0 * PI)).sqrt();
        assert_relative_eq!(
            row[1],
            std::f64::consts::SQRT_2 * n11 * (-polar.sin()) * az.sin(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            row[2],
            (3.0 / (4.0 * PI)).sqrt() * polar.cos(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            row[3],
            std::f64::consts::SQRT_2 * n11 * (-polar.sin()) * az.cos(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn basis_row_consistent_with_scalar_path() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let polar = rng.random_range(0.0..PI);
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let row = sh_basis_row(polar, az, 8);
            for l in 0..=8usize {
                for m in -(l as isize)..=(l as isize) {
                    let j = ShDegreeIndex::new(l, m).flat() - 1;
                    let p = legendre_assoc(l, m.unsigned_abs(), polar.cos());
                    let n = norm_factor(l, m.unsigned_abs());
                    let expect = match m.cmp(&0) {
                        std::cmp::Ordering::Equal => n * p,
                        std::cmp::Ordering::Greater => {
                            std::f64::consts::SQRT_2 * n * p * (m as f64 * az).cos()
                        }
                        std::cmp::Ordering::Less => {
                            std::f64::consts::SQRT_2 * n * p * ((-m) as f64 * az).sin()
                        }
                    };
                    assert_relative_eq!(row[j], expect, max_relative = 1e-12, epsilon = 1e-12);
                }
            }
        }
    }

    fn well_spread_samples(n_polar: usize, n_az: usize) -> Vec<(f64, f64)> {
        let mut angles = Vec::new();
        for i in 0..n_polar {
            let polar = (i as f64 + 0.5) * PI / n_polar as f64;
            for j in 0..n_az {
                let az = (j as f64 + 0.5) * std::f64::consts::TAU / n_az as f64;
                angles.push((polar, az));
            }
        }
        angles
    }

    #[test]
    fn fit_constant_function() {
        let c = 12.5;
        let angles = well_spread_samples(4, 8);
        let targets = vec![c; angles.len()];
        let samples = SampleSet::new(angles, targets).unwrap();
        let (coeffs, residual) = fit_least_squares(&samples, 0).unwrap();
        assert_relative_eq!(
            coeffs.values[0],
            c * (4.0 * PI).sqrt(),
            max_relative = 1e-12
        );
        assert!(residual < 1e-12);
        // evaluating anywhere reproduces the constant
        let out = evaluate(&coeffs, &[(0.3, 0.4), (2.0, 5.0)]);
        for v in out {
            assert_relative_eq!(v, c, max_relative = 1e-12);
        }
    }

    #[test]
    fn fit_recovers_synthesized_coefficients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let degree = 3;
        let k = (degree + 1) * (degree + 1);
        let truth: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let truth = ShCoefficients::new(degree, truth).unwrap();
        let angles = well_spread_samples(8, 8);
        let targets = evaluate(&truth, &angles);
        let samples = SampleSet::new(angles.clone(), targets.clone()).unwrap();
        let (fit, _) = fit_least_squares(&samples, degree).unwrap();
        for (a, b) in fit.values.iter().zip(&truth.values) {
            assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-8);
        }
        // prediction at the training angles matches targets
        let pred = evaluate(&fit, &angles);
        for (p, t) in pred.iter().zip(&targets) {
            assert_relative_eq!(p, t, max_relative = 1e-8, epsilon = 1e-8);
        }
    }

    #[test]
    fn underdetermined_fit_interpolates() {
        let angles = vec![(0.4, 0.1), (0.9, 2.0), (1.4, 3.5), (2.0, 5.0), (2.6, 0.7)];
        let targets = vec![3.0, 4.5, 2.2, 6.1, 5.0];
        let samples = SampleSet::new(angles.clone(), targets.clone()).unwrap();
        let (coeffs, residual) = fit_least_squares(&samples, 3).unwrap();
        assert!(residual < 1e-9, "residual {residual}");
        let pred = evaluate(&coeffs, &angles);
        for (p, t) in pred.iter().zip(&targets) {
            assert!((p - t).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_coefficients_evaluate_to_zero() {
        let coeffs = ShCoefficients::zeros(4);
        let out = evaluate(&coeffs, &well_spread_samples(3, 3));
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fit_first_order_optimality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let angles = well_spread_samples(6, 6);
        let targets: Vec<f64> = (0..angles.len())
            .map(|_| rng.random_range(5.0..15.0))
            .collect();
        let samples = SampleSet::new(angles.clone(), targets.clone()).unwrap();
        let degree = 2;
        let (coeffs, _) = fit_least_squares(&samples, degree).unwrap();

        let l2 = |c: &ShCoefficients| -> f64 {
            evaluate(c, &angles)
                .iter()
                .zip(&targets)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                .sqrt()
        };
        let base = l2(&coeffs);
        for j in 0..coeffs.values.len() {
            for delta in [1e-4, -1e-4] {
                let mut perturbed = coeffs.clone();
                perturbed.values[j] += delta;
                assert!(l2(&perturbed) >= base - 1e-12);
            }
        }
    }

    #[test]
    fn evaluation_is_smooth_in_angles() {
        // smoke test: halving the angular offset roughly halves the output
        // change, with an empirical per-neighborhood slope bound
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let coeffs =
            ShCoefficients::new(4, (0..25).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        for &(polar, az) in &[(0.7, 1.0), (1.5, 4.0), (2.3, 5.5)] {
            let base = evaluate_one(&coeffs, polar, az);
            let coarse = (evaluate_one(&coeffs, polar + 1e-3, az) - base).abs();
            let fine = (evaluate_one(&coeffs, polar + 1e-5, az) - base).abs();
            // local slope from the coarse step bounds the fine step
            let slope = coarse / 1e-3;
            assert!(fine <= (slope + 1.0) * 1e-5 * 3.0 + 1e-12);
        }
    }

    #[test]
    fn weighted_fit_downweights_outlier() {
        let angles = well_spread_samples(4, 8);
        let mut targets = vec![10.0; angles.len()];
        targets[0] = 500.0; // corrupt sample
        let mut samples = SampleSet::new(angles, targets).unwrap();
        let mut weights = vec![1.0; samples.len()];
        weights[0] = 0.0;
        samples.weights = Some(weights);
        let (coeffs, _) = fit_least_squares(&samples, 0).unwrap();
        assert_relative_eq!(
            coeffs.values[0],
            10.0 * (4.0 * PI).sqrt(),
            max_relative = 1e-10
        );
    }
}
