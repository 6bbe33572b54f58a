//! Dense reference computations for small chains.
//!
//! Nothing here goes through the gate kernels of [`crate::statevector`] or
//! the tensor contractions of [`crate::mps`]: operators are assembled as
//! explicit `2^N × 2^N` matrices, gates are matrix exponentials of their
//! generators, and the continuous-time quench is integrated as an ODE. These
//! are the yardsticks the fast backends are tested against. Basis index bit
//! `q` is qubit `q`, matching the rest of the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::model::QuenchSchedule;
use crate::trotter::{Circuit, GateOp};

pub type Matrix = DMatrix<C64>;
pub type Vector = DVector<C64>;

fn pauli(which: char) -> Matrix {
    let (o, l, i) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0));
    match which {
        'I' => Matrix::from_row_slice(2, 2, &[l, o, o, l]),
        'X' => Matrix::from_row_slice(2, 2, &[o, l, l, o]),
        'Y' => Matrix::from_row_slice(2, 2, &[o, -i, i, o]),
        'Z' => Matrix::from_row_slice(2, 2, &[l, o, o, -l]),
        'H' => Matrix::from_row_slice(2, 2, &[l, l, l, -l]) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        _ => unreachable!(),
    }
}

/// Tensor product with `factors[q]` acting on qubit `q`.
pub fn tensor(factors: &[Matrix]) -> Matrix {
    // qubit 0 is the least significant bit, so it is the rightmost factor
    let mut out = Matrix::identity(1, 1);
    for f in factors {
        out = f.kronecker(&out);
    }
    out
}

/// Single-qubit operator `op` on qubit `q` of an `n`-qubit register.
pub fn embed(n: usize, q: usize, op: char) -> Matrix {
    let factors: Vec<Matrix> = (0..n).map(|k| pauli(if k == q { op } else { 'I' })).collect();
    tensor(&factors)
}

pub fn x_string(n: usize, mask: u64) -> Matrix {
    let factors: Vec<Matrix> = (0..n)
        .map(|k| pauli(if (mask >> k) & 1 == 1 { 'X' } else { 'I' }))
        .collect();
    tensor(&factors)
}

pub fn bond_operator(n: usize, bond: usize) -> Matrix {
    x_string(n, 0b11 << bond)
}

/// `n̂ = (1/2N) Σ (1 - X_i X_{i+1})`.
pub fn kink_operator(n: usize) -> Matrix {
    let dim = 1 << n;
    let mut sum = Matrix::zeros(dim, dim);
    for b in 0..n - 1 {
        sum += Matrix::identity(dim, dim) - bond_operator(n, b);
    }
    sum / C64::new(2.0 * n as f64, 0.0)
}

pub fn kink_operator_power(n: usize, m: u32) -> Matrix {
    let k = kink_operator(n);
    let mut out = Matrix::identity(1 << n, 1 << n);
    for _ in 0..m {
        out = &out * &k;
    }
    out
}

/// Coefficient of the X string `mask` in the Pauli expansion of `op`.
pub fn x_string_coefficient(op: &Matrix, n: usize, mask: u64) -> f64 {
    let p = x_string(n, mask);
    (&p * op).trace().re / (1u64 << n) as f64
}

/// `Σ_i X_i X_{i+1}` and `Σ_i Z_i`.
pub fn ising_terms(n: usize) -> (Matrix, Matrix) {
    let dim = 1 << n;
    let mut xx = Matrix::zeros(dim, dim);
    let mut z = Matrix::zeros(dim, dim);
    for b in 0..n - 1 {
        xx += bond_operator(n, b);
    }
    for q in 0..n {
        z += embed(n, q, 'Z');
    }
    (xx, z)
}

pub fn ising_hamiltonian(n: usize, schedule: &QuenchSchedule, t: f64) -> Matrix {
    let (xx, z) = ising_terms(n);
    let (j, h) = schedule.couplings_at(t).expect("time inside schedule");
    xx * C64::new(-j, 0.0) + z * C64::new(-h, 0.0)
}

pub fn basis_state(n: usize, index: usize) -> Vector {
    let mut v = Vector::zeros(1 << n);
    v[index] = C64::new(1.0, 0.0);
    v
}

/// Integrates `i dψ/dt = H(t) ψ` from `|0…0⟩` over the whole quench with
/// classical fourth-order Runge–Kutta on `steps` uniform steps.
pub fn quench_final_state(n: usize, schedule: &QuenchSchedule, steps: usize) -> Vector {
    let (xx, z) = ising_terms(n);
    let minus_i = C64::new(0.0, -1.0);
    let rhs = |t: f64, psi: &Vector| -> Vector {
        let s = (t / schedule.tau_q).clamp(0.0, 1.0);
        let j = schedule.j0 * s;
        let h = schedule.h0 * (1.0 - s);
        let hpsi = &xx * psi * C64::new(-j, 0.0) + &z * psi * C64::new(-h, 0.0);
        hpsi * minus_i
    };
    let dt = schedule.tau_q / steps as f64;
    let mut psi = basis_state(n, 0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = rhs(t, &psi);
        let k2 = rhs(t + 0.5 * dt, &(&psi + &k1 * C64::new(0.5 * dt, 0.0)));
        let k3 = rhs(t + 0.5 * dt, &(&psi + &k2 * C64::new(0.5 * dt, 0.0)));
        let k4 = rhs(t + dt, &(&psi + &k3 * C64::new(dt, 0.0)));
        psi += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
    }
    psi
}

/// RK4 steps used when callers do not pick their own resolution.
pub const DEFAULT_ODE_STEPS: usize = 40_000;

pub fn expectation(psi: &Vector, op: &Matrix) -> f64 {
    (psi.adjoint() * op * psi)[(0, 0)].re
}

/// `exp(i θ G)` for a Hermitian generator, by matrix exponential.
pub fn exp_i(theta: f64, generator: &Matrix) -> Matrix {
    (generator * C64::new(0.0, theta)).exp()
}

pub fn gate_unitary(n: usize, op: &GateOp) -> Matrix {
    match *op {
        GateOp::HadamardLayer => tensor(&vec![pauli('H'); n]),
        GateOp::PauliX(q) => embed(n, q, 'X'),
        GateOp::PauliY(q) => embed(n, q, 'Y'),
        GateOp::PauliZ(q) => embed(n, q, 'Z'),
        GateOp::FieldRotation { qubit, angle } => exp_i(angle, &embed(n, qubit, 'Z')),
        GateOp::CouplingRotation { qubit, angle } => exp_i(angle, &bond_operator(n, qubit)),
    }
}

/// Product of all gate unitaries, first gate rightmost.
pub fn circuit_unitary(circuit: &Circuit) -> Matrix {
    ops_unitary(circuit.n_qubits, &circuit.ops)
}

pub fn ops_unitary(n: usize, ops: &[GateOp]) -> Matrix {
    let mut u = Matrix::identity(1 << n, 1 << n);
    for op in ops {
        u = gate_unitary(n, op) * u;
    }
    u
}

/// Largest entry-wise deviation between two unitaries after removing the
/// global phase that best aligns them.
pub fn unitary_distance_up_to_phase(a: &Matrix, b: &Matrix) -> f64 {
    let overlap = (a.adjoint() * b).trace();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    (a * phase - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; trials + 1];
    let mut binom = 1.0f64;
    for (k, slot) in pmf.iter_mut().enumerate() {
        if k > 0 {
            binom *= (trials + 1 - k) as f64 / k as f64;
        }
        *slot = binom * p.powi(k as i32) * (1.0 - p).powi((trials - k) as i32);
    }
    pmf
}

/// ODE reference for one sweep point: `⟨n̂⟩` and the bond correlators.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OdeReport {
    pub n_qubits: usize,
    pub tau_q: f64,
    pub steps: usize,
    pub kink_density: f64,
    pub bond_correlators: Vec<f64>,
}

pub fn ode_report(n: usize, schedule: &QuenchSchedule, steps: usize) -> OdeReport {
    let psi = quench_final_state(n, schedule, steps);
    OdeReport {
        n_qubits: n,
        tau_q: schedule.tau_q,
        steps,
        kink_density: expectation(&psi, &kink_operator(n)),
        bond_correlators: (0..n - 1).map(|b| expectation(&psi, &bond_operator(n, b))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exp_of_pauli_is_cos_plus_i_sin() {
        let theta = 0.37;
        let u = exp_i(theta, &bond_operator(2, 0));
        let want =
            Matrix::identity(4, 4) * C64::new(theta.cos(), 0.0) + bond_operator(2, 0) * C64::new(0.0, theta.sin());
        assert!((u - want).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn ode_conserves_norm_and_starts_in_plateau_state() {
        let s = QuenchSchedule::new(1e-6).unwrap();
        let r = ode_report(3, &s, 100);
        assert_abs_diff_eq!(r.kink_density, 2.0 / 6.0, epsilon = 1e-9);
        let s = QuenchSchedule::new(2.0).unwrap();
        let psi = quench_final_state(3, &s, 2000);
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-10);
    }
}
