use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use qnd_core::coupled::{
    coupled_hamiltonian, coupled_sequence, normal_mode_frequencies, stability_margin, CoupledConfig,
    CoupledState, CoupledSystem,
};
use qnd_core::linalg::dense_symmetric_eigen;
use qnd_core::measurement::Kernel;
use qnd_core::sequence::{ProbabilityMode, ResultPolicy};
use std::f64::consts::PI;

fn config(gamma: f64, n: usize) -> CoupledConfig {
    CoupledConfig {
        m1: 1.0,
        m2: 1.0,
        omega1: 1.0,
        omega2: 1.3,
        gamma,
        da1: 0.5,
        hbar: 1.0,
        n1: n,
        n2: n,
    }
}

#[test]
fn decoupled_spectrum_is_the_sum_of_levels() {
    let mut c = config(0.0, 10);
    c.n2 = 7;
    let h = coupled_hamiltonian(&c).unwrap();
    let dim = c.dim();
    let mut want: Vec<f64> = (0..10)
        .flat_map(|i| (0..7).map(move |j| (i as f64 + 0.5) + 1.3 * (j as f64 + 0.5)))
        .collect();
    want.sort_by(f64::total_cmp);
    let got = dense_symmetric_eigen(&h, dim).unwrap().values;
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12 * w.max(1.0), "{g} vs {w}");
    }
}

#[test]
fn hamiltonian_is_symmetric_and_exchange_invariant() {
    let mut c = config(0.35, 9);
    c.m2 = 2.0;
    c.n2 = 6;
    let h = coupled_hamiltonian(&c).unwrap();
    let dim = c.dim();
    for i in 0..dim {
        for j in 0..dim {
            assert!((h[i * dim + j] - h[j * dim + i]).abs() < 1e-12);
        }
    }
    let swapped = CoupledConfig {
        m1: c.m2,
        m2: c.m1,
        omega1: c.omega2,
        omega2: c.omega1,
        n1: c.n2,
        n2: c.n1,
        ..c
    };
    let a = dense_symmetric_eigen(&h, dim).unwrap().values;
    let b = dense_symmetric_eigen(&coupled_hamiltonian(&swapped).unwrap(), dim).unwrap().values;
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-10);
    }
}

fn mass_weighted_form(c: &CoupledConfig) -> Matrix2<f64> {
    let k = c.gamma / (c.m1 * c.m2).sqrt();
    Matrix2::new(c.omega1 * c.omega1, k, k, c.omega2 * c.omega2)
}

#[test]
fn normal_mode_frequencies_match_the_quadratic_form() {
    for (m, w1, w2, g) in [(1.0, 1.0, 1.3, 0.4), (2.5, 0.7, 0.71, 0.9), (0.3, 2.0, 1.0, -0.1)] {
        let c = CoupledConfig { m1: m, m2: m, omega1: w1, omega2: w2, gamma: g, ..config(0.0, 4) };
        let mut eig: Vec<f64> = mass_weighted_form(&c).symmetric_eigenvalues().iter().map(|v| v.sqrt()).collect();
        eig.sort_by(f64::total_cmp);
        let (lo, hi) = normal_mode_frequencies(&c);
        assert!((lo - eig[0]).abs() < 1e-10 && (hi - eig[1]).abs() < 1e-10);
    }
}

#[test]
fn stability_boundary() {
    let mut c = config(0.0, 4);
    c.m2 = 2.0;
    c.gamma = (c.m1 * c.m2).sqrt() * c.omega1 * c.omega2;
    assert!(stability_margin(&c).abs() < 1e-12);
    assert!(c.validate().is_err());
    c.gamma *= 0.999;
    assert!(stability_margin(&c) > 0.0 && c.validate().is_ok());
}

/// Exact ground-state covariance of the quadratic two-mode Hamiltonian.
fn ground_covariance(c: &CoupledConfig) -> Matrix2<f64> {
    let eig = mass_weighted_form(c).symmetric_eigen();
    let inv = Matrix2::from_diagonal(&eig.eigenvalues.map(|w2| 1.0 / w2.sqrt()));
    let cov_y = eig.eigenvectors * inv * eig.eigenvectors.transpose() * (c.hbar / 2.0);
    let s = Matrix2::new(1.0 / c.m1.sqrt(), 0.0, 0.0, 1.0 / c.m2.sqrt());
    s * cov_y * s
}

#[test]
fn ground_state_indirect_spread_matches_covariance() {
    let c = config(0.45, 24);
    let sys = CoupledSystem::new(c).unwrap();
    let g = sys.ground_state();
    let want = (2.0 * ground_covariance(&c)[(1, 1)]).sqrt();
    let got = sys.indirect_uncertainty(&g);
    assert!((got / want - 1.0).abs() < 0.01, "{got} vs {want}");

    let free = CoupledSystem::new(config(0.0, 24)).unwrap();
    let free_value = free.indirect_uncertainty(&free.ground_state());
    assert!((free_value - (1.0f64 / 1.3).sqrt()).abs() < 1e-12);
    assert!((got - free_value).abs() > 1e-3);
}

#[test]
fn wide_kernel_keeps_the_state() {
    let sys = CoupledSystem::new(config(0.3, 12)).unwrap();
    let g = sys.ground_state();
    let out = sys.apply_x1(&g, 0.2, &Kernel::gaussian(1e6).unwrap());
    for (x, y) in out.amps().iter().zip(g.amps()) {
        assert!((x - y).norm() < 1e-9);
    }
}

#[test]
fn decoupled_measurement_leaves_mode_two_alone() {
    let c = config(0.0, 10);
    let sys = CoupledSystem::new(c).unwrap();
    // product of a mode-1 superposition and the mode-2 state (0.6, 0.8i, 0, …)
    let m1 = [0.5, 0.5, -0.5, 0.5];
    let m2 = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
    let mut amps = vec![Complex64::new(0.0, 0.0); c.dim()];
    for (i, a) in m1.iter().enumerate() {
        for (j, b) in m2.iter().enumerate() {
            amps[i * c.n2 + j] = b * *a;
        }
    }
    let state = CoupledState::new(amps).unwrap();
    let out = sys.measure_x1(&state, 0.7).unwrap();
    for i in 0..c.n1 {
        let row = &out.state.amps()[i * c.n2..(i + 1) * c.n2];
        let scale = row[0] / m2[0];
        for (x, y) in row.iter().zip(&m2) {
            assert!((x - y * scale).norm() < 1e-12);
        }
    }
    assert!((out.state.norm_sq() - 1.0).abs() < 1e-10);
    assert!(out.norm_ratio <= 1.0);
}

#[test]
fn decoupled_trace_is_constant() {
    let sys = CoupledSystem::new(config(0.0, 16)).unwrap();
    let trace = coupled_sequence(&sys, 10, 0.8, &ResultPolicy::Sampled { seed: 3 }, ProbabilityMode::Linear).unwrap();
    let values = trace.indirect_uncertainties();
    assert_eq!(values.len(), 11);
    for v in &values {
        assert!((v - values[0]).abs() < 1e-8);
    }
    let none = coupled_sequence(&sys, 0, 0.8, &ResultPolicy::MostProbable, ProbabilityMode::Linear).unwrap();
    assert_eq!(none.indirect_uncertainties(), vec![values[0]]);
}

/// Normalized Hermite functions from the physicists' polynomials.
fn hermite_functions(xi: f64, n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n];
    h[0] = 1.0;
    if n > 1 {
        h[1] = 2.0 * xi;
    }
    for k in 1..n - 1 {
        h[k + 1] = 2.0 * xi * h[k] - 2.0 * k as f64 * h[k - 1];
    }
    let mut fact = 1.0;
    (0..n)
        .map(|k| {
            if k > 0 {
                fact *= k as f64;
            }
            h[k] * (-0.5 * xi * xi).exp() / (2f64.powi(k as i32) * fact * PI.sqrt()).sqrt()
        })
        .collect()
}

/// Brute-force 2-D grid model in the 8 × 8 product basis.
struct GridOracle {
    n: usize,
    nodes: Vec<f64>,
    weight: f64,
    /// basis[k][i]: i-th function at node k (both modes use ħ = m = 1)
    basis1: Vec<Vec<f64>>,
    basis2: Vec<Vec<f64>>,
    l2: f64,
    values: nalgebra::DVector<f64>,
    vectors: DMatrix<f64>,
}

impl GridOracle {
    fn new(c: &CoupledConfig) -> Self {
        let n = c.n1;
        let ladder = |l: f64| {
            DMatrix::from_fn(n, n, |i, j| {
                if j == i + 1 {
                    l * (j as f64 / 2.0).sqrt()
                } else if i == j + 1 {
                    l * (i as f64 / 2.0).sqrt()
                } else {
                    0.0
                }
            })
        };
        let l1 = (c.hbar / (c.m1 * c.omega1)).sqrt();
        let l2 = (c.hbar / (c.m2 * c.omega2)).sqrt();
        let eye = DMatrix::<f64>::identity(n, n);
        let n1 = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| c.omega1 * (i as f64 + 0.5)));
        let n2 = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| c.omega2 * (i as f64 + 0.5)));
        let h = n1.kronecker(&eye) + eye.kronecker(&n2) + ladder(l1).kronecker(&ladder(l2)) * c.gamma;
        let eig = h.symmetric_eigen();
        let count = 1601;
        let half = 12.0;
        let step = 2.0 * half / (count - 1) as f64;
        let nodes: Vec<f64> = (0..count).map(|k| -half + k as f64 * step).collect();
        let basis1 = nodes.iter().map(|x| hermite_functions(x / l1, n).iter().map(|v| v / l1.sqrt()).collect()).collect();
        let basis2 = nodes.iter().map(|x| hermite_functions(x / l2, n).iter().map(|v| v / l2.sqrt()).collect()).collect();
        Self { n, nodes, weight: step, basis1, basis2, l2, values: eig.eigenvalues, vectors: eig.eigenvectors }
    }

    fn evolve(&self, c: &[Complex64], t: f64) -> Vec<Complex64> {
        let d = self.n * self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); d];
        for k in 0..d {
            let v = self.vectors.column(k);
            let p: Complex64 = (0..d).map(|i| c[i] * v[i]).sum::<Complex64>() * Complex64::from_polar(1.0, -self.values[k] * t);
            for i in 0..d {
                out[i] += p * v[i];
            }
        }
        out
    }

    /// ψ on the 2-D grid, multiplied pointwise by the kernel in x_1 and
    /// projected back on the product functions.
    fn measure(&self, c: &[Complex64], a: f64, width: f64) -> Vec<Complex64> {
        let n = self.n;
        let g = self.nodes.len();
        let mut psi = vec![Complex64::new(0.0, 0.0); g * g];
        for p in 0..g {
            let w = (-(self.nodes[p] - a).powi(2) / (2.0 * width * width)).exp();
            for q in 0..g {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        s += c[i * n + j] * self.basis1[p][i] * self.basis2[q][j];
                    }
                }
                psi[p * g + q] = s * w;
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for p in 0..g {
            for q in 0..g {
                let v = psi[p * g + q] * self.weight * self.weight;
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] += v * self.basis1[p][i] * self.basis2[q][j];
                    }
                }
            }
        }
        let norm = out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        out.iter().map(|z| z / norm).collect()
    }

    /// √(2 Var x_2) by quadrature of the mode-2 marginal.
    fn indirect(&self, c: &[Complex64]) -> f64 {
        let n = self.n;
        let (mut m1, mut m2) = (0.0, 0.0);
        for (q, x) in self.nodes.iter().enumerate() {
            let mut rho = 0.0;
            for i in 0..n {
                let amp: Complex64 = (0..n).map(|j| c[i * n + j] * self.basis2[q][j]).sum();
                rho += amp.norm_sqr();
            }
            m1 += rho * x * self.weight;
            m2 += rho * x * x * self.weight;
        }
        let _ = self.l2;
        (2.0 * (m2 - m1 * m1)).sqrt()
    }
}

#[test]
fn sequence_matches_the_grid_oracle() {
    let c = CoupledConfig { gamma: 0.1, ..config(0.0, 8) };
    let sys = CoupledSystem::new(c).unwrap();
    let oracle = GridOracle::new(&c);
    let dt = PI / c.omega1;
    let trace = coupled_sequence(&sys, 5, dt, &ResultPolicy::MostProbable, ProbabilityMode::Linear).unwrap();

    let ground = oracle.values.argmin().0;
    let mut state: Vec<Complex64> = oracle.vectors.column(ground).iter().map(|v| Complex64::new(*v, 0.0)).collect();
    assert!((oracle.indirect(&state) - trace.initial_indirect).abs() < 1e-9);
    for (k, step) in trace.steps.iter().enumerate() {
        if k > 0 {
            state = oracle.evolve(&state, dt);
        }
        state = oracle.measure(&state, step.result, c.da1);
        let want = oracle.indirect(&state);
        assert!(
            (step.indirect_uncertainty - want).abs() < 1e-8,
            "step {k}: {} vs {want}",
            step.indirect_uncertainty
        );
        // γ = 0.1 at the mode-1 half period: the oracle drift peaks at 2.7%
        assert!((want / trace.initial_indirect - 1.0).abs() < 0.03, "step {k}: {want}");
    }
}

#[test]
fn measurement_narrows_mode_one() {
    let c = config(0.3, 8);
    let sys = CoupledSystem::new(c).unwrap();
    let g = sys.ground_state();
    let before = sys.mode1_moments(&g).1;
    let m = sys.measure_x1(&g, 0.0).unwrap();
    let after = sys.mode1_moments(&m.state).1;
    assert!(after < before, "{after} vs {before}");

    let c = config(0.3, 24);
    let sys = CoupledSystem::new(c).unwrap();
    let g = sys.ground_state();
    let before = sys.mode1_moments(&g).1;
    let after = sys.mode1_moments(&sys.measure_x1(&g, 0.0).unwrap().state).1;
    // Gaussian algebra for the mode-1 marginal of a Gaussian state:
    // |w ψ|² multiplies the density by exp(-x²/Δa²): 1/σ'² = 1/σ² + 2/Δa²
    let want = (1.0 / (1.0 / (before * before) + 2.0 / (c.da1 * c.da1))).sqrt();
    assert!((after / want - 1.0).abs() < 1e-3, "{after} vs {want}");
}

#[test]
fn leak_is_reported() {
    let c = CoupledConfig { da1: 0.05, ..config(0.3, 6) };
    let sys = CoupledSystem::new(c).unwrap();
    let m = sys.measure_x1(&sys.ground_state(), 0.3).unwrap();
    assert!(m.warning && m.leak > 1e-3);
    let c = CoupledConfig { da1: 2.0, ..config(0.3, 24) };
    let sys = CoupledSystem::new(c).unwrap();
    let m = sys.measure_x1(&sys.ground_state(), 0.3).unwrap();
    assert!(!m.warning, "leak {}", m.leak);
}

#[test]
fn fixed_coupled_policy_needs_one_result_per_measurement() {
    let sys = CoupledSystem::new(config(0.1, 6)).unwrap();
    let p = ResultPolicy::Fixed(vec![0.0, 0.1]);
    assert!(coupled_sequence(&sys, 3, 1.0, &p, ProbabilityMode::Linear).is_err());
    assert!(coupled_sequence(&sys, 2, 1.0, &p, ProbabilityMode::Linear).is_ok());
}

#[test]
fn experimental_mode_two_spread_is_finite_and_wider_than_the_state() {
    let sys = CoupledSystem::new(config(0.3, 12)).unwrap();
    let g = sys.ground_state();
    let spread = sys.mode2_outcome_spread(&g, 0.5, 801).unwrap();
    assert!(spread.is_finite() && spread > sys.indirect_uncertainty(&g));
}
