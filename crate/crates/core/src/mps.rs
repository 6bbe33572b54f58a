//! Matrix-product states evolved gate by gate (TEBD).
//!
//! Site tensors have shape `(left bond, 2, right bond)`. Two-site gates are
//! applied at the orthogonality center: contract the pair, apply the 4×4
//! gate, split with an SVD and drop the longest tail of singular values
//! whose relative squared weight is at most `trunc_tol`. The kept spectrum
//! is renormalized after every truncation.

use std::io::{Read, Write};

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use ndarray_linalg::{JobSvd, QR, SVD, SVDDC};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::model::BondTerm;
use crate::rng::StreamRng;
use crate::statevector::{sample_noisy, BitstringBatch, InitialState, NoiseModel, SampleOptions, ShotSampler};
use crate::trotter::{Circuit, GateOp, MeasureBasis};

pub const DEFAULT_TRUNC_TOL: f64 = 1e-10;
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpsOptions {
    pub trunc_tol: f64,
    /// `None` means unlimited.
    pub max_bond: Option<usize>,
    pub memory_budget: u64,
}

impl Default for MpsOptions {
    fn default() -> Self {
        Self {
            trunc_tol: DEFAULT_TRUNC_TOL,
            max_bond: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MpsStats {
    pub two_site_gates: usize,
    /// SVDs that dropped a nonzero singular value.
    pub truncations: usize,
    /// Sum of relative discarded weights over all truncations.
    pub discarded_weight: f64,
    pub worst_discarded: f64,
    pub max_bond: usize,
}

#[derive(Debug, Clone)]
pub struct MpsState {
    n_qubits: usize,
    tensors: Vec<Array3<C64>>,
    center: usize,
    options: MpsOptions,
    stats: MpsStats,
}

fn linalg(e: ndarray_linalg::error::LinalgError) -> Error {
    Error::Linalg(e.to_string())
}

/// Single-qubit gate as `[[u00, u01], [u10, u11]]` acting on the physical index.
type Gate1 = [[C64; 2]; 2];

fn single_site_matrix(op: &GateOp) -> Option<(usize, Gate1)> {
    let i = C64::new(0.0, 1.0);
    Some(match *op {
        GateOp::PauliX(q) => (q, [[ZERO, ONE], [ONE, ZERO]]),
        GateOp::PauliY(q) => (q, [[ZERO, -i], [i, ZERO]]),
        GateOp::PauliZ(q) => (q, [[ONE, ZERO], [ZERO, -ONE]]),
        GateOp::FieldRotation { qubit, angle } => (
            qubit,
            [
                [C64::from_polar(1.0, angle), ZERO],
                [ZERO, C64::from_polar(1.0, -angle)],
            ],
        ),
        _ => return None,
    })
}

fn hadamard() -> Gate1 {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

/// `a[:, s, :]` as a matrix.
fn slice(a: &Array3<C64>, s: usize) -> ArrayView2<'_, C64> {
    a.index_axis(Axis(1), s)
}

impl MpsState {
    pub fn product(n_qubits: usize, init: InitialState, options: MpsOptions) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Construction("register needs at least one qubit".into()));
        }
        let site = match init {
            InitialState::AllZero => [ONE, ZERO],
            InitialState::AllPlus => [C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0); 2],
        };
        let t = Array3::from_shape_vec((1, 2, 1), site.to_vec()).expect("shape");
        Ok(Self {
            n_qubits,
            tensors: vec![t; n_qubits],
            center: 0,
            options,
            stats: MpsStats {
                max_bond: 1,
                ..MpsStats::default()
            },
        })
    }

    /// Builds a state from explicit tensors and brings it to canonical form
    /// with the center on site 0. The state is not renormalized.
    pub fn from_tensors(tensors: Vec<Array3<C64>>, options: MpsOptions) -> Result<Self> {
        let n = tensors.len();
        if n == 0 {
            return Err(Error::Construction("no site tensors".into()));
        }
        for (i, t) in tensors.iter().enumerate() {
            let (dl, d, dr) = t.dim();
            let left_ok = if i == 0 { dl == 1 } else { dl == tensors[i - 1].dim().2 };
            if d != 2 || !left_ok || (i == n - 1 && dr != 1) {
                return Err(Error::Construction(format!(
                    "site {i} has incompatible shape {:?}",
                    t.dim()
                )));
            }
        }
        let max_bond = tensors.iter().map(|t| t.dim().2).max().unwrap_or(1);
        let mut s = Self {
            n_qubits: n,
            tensors,
            center: 0,
            options,
            stats: MpsStats {
                max_bond,
                ..MpsStats::default()
            },
        };
        // left-to-right QR makes everything left of the last site isometric
        for c in 0..n - 1 {
            s.center = c;
            s.shift_right()?;
        }
        s.center = n - 1;
        s.move_center(0)?;
        Ok(s)
    }

    /// Evolves `|0…0⟩` through `circuit`.
    pub fn run(circuit: &Circuit, options: MpsOptions) -> Result<Self> {
        Self::run_ops(circuit.n_qubits, &circuit.ops, options)
    }

    pub fn run_ops(n_qubits: usize, ops: &[GateOp], options: MpsOptions) -> Result<Self> {
        let mut s = Self::product(n_qubits, InitialState::AllZero, options)?;
        s.evolve_ops(ops)?;
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn tensors(&self) -> &[Array3<C64>] {
        &self.tensors
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn stats(&self) -> &MpsStats {
        &self.stats
    }

    pub fn options(&self) -> &MpsOptions {
        &self.options
    }

    /// Right bond dimension of every site but the last.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.n_qubits - 1].iter().map(|t| t.dim().2).collect()
    }

    pub fn memory_bytes(&self) -> u128 {
        self.tensors.iter().map(|t| t.len() as u128 * 16).sum()
    }

    pub fn evolve_circuit(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.n_qubits != self.n_qubits {
            return Err(Error::Construction(format!(
                "circuit on {} qubits applied to a {}-qubit state",
                circuit.n_qubits, self.n_qubits
            )));
        }
        self.evolve_ops(&circuit.ops)
    }

    /// Applies a gate list. Within a run of coupling rotations on disjoint
    /// bonds the gates commute, and they are visited in whichever direction
    /// needs the shorter trip of the orthogonality center.
    pub fn evolve_ops(&mut self, ops: &[GateOp]) -> Result<()> {
        for op in ops {
            if let Some(q) = op.max_qubit() {
                if q >= self.n_qubits {
                    return Err(Error::InvalidTarget {
                        qubit: q,
                        n_qubits: self.n_qubits,
                    });
                }
            }
        }
        let mut i = 0;
        while i < ops.len() {
            match ops[i] {
                GateOp::CouplingRotation { .. } => {
                    let mut layer: Vec<(usize, f64)> = Vec::new();
                    while let Some(&GateOp::CouplingRotation { qubit, angle }) = ops.get(i) {
                        if layer.iter().any(|&(b, _)| b.abs_diff(qubit) < 2) {
                            break;
                        }
                        layer.push((qubit, angle));
                        i += 1;
                    }
                    let first = layer.first().unwrap().0;
                    let last = layer.last().unwrap().0;
                    let forward = self.center.abs_diff(first) + first.abs_diff(last);
                    let backward = self.center.abs_diff(last) + first.abs_diff(last);
                    if backward < forward {
                        layer.reverse();
                    }
                    for (q, theta) in layer {
                        self.coupling(q, theta)?;
                    }
                }
                GateOp::HadamardLayer => {
                    let h = hadamard();
                    for q in 0..self.n_qubits {
                        self.apply_single(q, &h);
                    }
                    i += 1;
                }
                ref op => {
                    let (q, g) = single_site_matrix(op).expect("single-site gate");
                    self.apply_single(q, &g);
                    i += 1;
                }
            }
        }
        Ok(())
    }

    /// Unitary on the physical index; canonical form is unaffected.
    fn apply_single(&mut self, q: usize, g: &Gate1) {
        let t = &self.tensors[q];
        let (a0, a1) = (slice(t, 0).to_owned(), slice(t, 1).to_owned());
        let mut out = Array3::zeros(t.dim());
        out.index_axis_mut(Axis(1), 0).assign(&(&a0 * g[0][0] + &a1 * g[0][1]));
        out.index_axis_mut(Axis(1), 1).assign(&(&a0 * g[1][0] + &a1 * g[1][1]));
        self.tensors[q] = out;
    }

    /// `exp(+iθ X_q X_{q+1})`.
    fn coupling(&mut self, q: usize, theta: f64) -> Result<()> {
        let (c, s) = (C64::new(theta.cos(), 0.0), C64::new(0.0, theta.sin()));
        // center onto q or q+1; either way the pair holds all the weight
        if self.center < q {
            self.move_center(q)?;
        } else if self.center > q + 1 {
            self.move_center(q + 1)?;
        }
        let (dl, _, m) = self.tensors[q].dim();
        let dr = self.tensors[q + 1].dim().2;
        let a = self.tensors[q]
            .view()
            .into_shape_with_order((dl * 2, m))
            .expect("contiguous");
        let b = self.tensors[q + 1]
            .view()
            .into_shape_with_order((m, 2 * dr))
            .expect("contiguous");
        let theta_old = a.dot(&b).into_shape_with_order((dl, 2, 2, dr)).expect("shape");
        let mut th = theta_old.clone();
        for s1 in 0..2 {
            for s2 in 0..2 {
                let flipped = theta_old.slice(s![.., 1 - s1, 1 - s2, ..]);
                let mut dst = th.slice_mut(s![.., s1, s2, ..]);
                dst.zip_mut_with(&flipped, |x, &y| *x = *x * c + y * s);
            }
        }
        let mat = th.into_shape_with_order((dl * 2, 2 * dr)).expect("shape");
        let (u, sv, vt) = svd(&mat)?;

        let total: f64 = sv.iter().map(|x| x * x).sum();
        let mut keep = sv.len();
        let mut tail = 0.0;
        while keep > 1 {
            let w = sv[keep - 1] * sv[keep - 1];
            if (tail + w) / total > self.options.trunc_tol {
                break;
            }
            tail += w;
            keep -= 1;
        }
        if let Some(cap) = self.options.max_bond {
            if keep > cap {
                let dropped: f64 = sv[cap..].iter().map(|x| x * x).sum::<f64>() / total;
                return Err(Error::TruncationOverflow {
                    bond: q,
                    max_bond: cap,
                    discarded: dropped,
                });
            }
        }
        let discarded = tail / total;
        if tail > 0.0 {
            self.stats.truncations += 1;
            self.stats.discarded_weight += discarded;
            self.stats.worst_discarded = self.stats.worst_discarded.max(discarded);
        }
        self.stats.two_site_gates += 1;
        self.stats.max_bond = self.stats.max_bond.max(keep);

        let kept_norm = (total - tail).sqrt();
        let left = u.slice(s![.., ..keep]).to_owned();
        let mut right = vt.slice(s![..keep, ..]).to_owned();
        for (k, mut row) in right.axis_iter_mut(Axis(0)).enumerate() {
            row *= C64::new(sv[k] / kept_norm, 0.0);
        }
        self.tensors[q] = left.into_shape_with_order((dl, 2, keep)).expect("shape");
        self.tensors[q + 1] = right.into_shape_with_order((keep, 2, dr)).expect("shape");
        self.center = q + 1;

        let bytes = self.memory_bytes();
        if bytes > self.options.memory_budget as u128 {
            return Err(Error::Resource {
                what: "MPS tensors",
                required_bytes: bytes,
                budget_bytes: self.options.memory_budget as u128,
            });
        }
        Ok(())
    }

    pub fn move_center(&mut self, target: usize) -> Result<()> {
        while self.center < target {
            self.shift_right()?;
        }
        while self.center > target {
            self.shift_left()?;
        }
        Ok(())
    }

    fn shift_right(&mut self) -> Result<()> {
        let c = self.center;
        let (dl, _, dr) = self.tensors[c].dim();
        let a = self.tensors[c]
            .view()
            .into_shape_with_order((dl * 2, dr))
            .expect("contiguous");
        let (q, r) = a.qr().map_err(linalg)?;
        let k = q.ncols();
        self.tensors[c] = q.into_shape_with_order((dl, 2, k)).expect("shape");
        let (_, _, dr2) = self.tensors[c + 1].dim();
        let next = self.tensors[c + 1]
            .view()
            .into_shape_with_order((dr, 2 * dr2))
            .expect("contiguous");
        self.tensors[c + 1] = r.dot(&next).into_shape_with_order((k, 2, dr2)).expect("shape");
        self.center = c + 1;
        Ok(())
    }

    fn shift_left(&mut self) -> Result<()> {
        let c = self.center;
        let (dl, _, dr) = self.tensors[c].dim();
        let a = self.tensors[c]
            .view()
            .into_shape_with_order((dl, 2 * dr))
            .expect("contiguous");
        // A = L Q from the QR factorization of A†
        let ah = a.t().mapv(|z| z.conj());
        let (q, r) = ah.qr().map_err(linalg)?;
        let k = q.ncols();
        let qh = q.t().mapv(|z| z.conj());
        let l = r.t().mapv(|z| z.conj());
        self.tensors[c] = qh
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((k, 2, dr))
            .expect("shape");
        let (dl0, _, _) = self.tensors[c - 1].dim();
        let prev = self.tensors[c - 1]
            .view()
            .into_shape_with_order((dl0 * 2, dl))
            .expect("contiguous");
        self.tensors[c - 1] = prev.dot(&l).into_shape_with_order((dl0, 2, k)).expect("shape");
        self.center = c - 1;
        Ok(())
    }

    /// Largest deviation from the isometry conditions: `Σ_s A_s† A_s = 1`
    /// left of the center and `Σ_s A_s A_s† = 1` right of it.
    pub fn isometry_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, t) in self.tensors.iter().enumerate() {
            let (dl, _, dr) = t.dim();
            if i < self.center {
                let mut g = Array2::<C64>::zeros((dr, dr));
                for s in 0..2 {
                    let a = slice(t, s);
                    g = g + a.t().mapv(|z| z.conj()).dot(&a);
                }
                worst = worst.max(identity_deviation(&g));
            } else if i > self.center {
                let mut g = Array2::<C64>::zeros((dl, dl));
                for s in 0..2 {
                    let a = slice(t, s);
                    g = g + a.dot(&a.t().mapv(|z| z.conj()));
                }
                worst = worst.max(identity_deviation(&g));
            }
        }
        worst
    }

    /// `⟨ψ|ψ⟩`.
    pub fn norm_sqr(&self) -> f64 {
        let t = &self.tensors[self.center];
        t.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Transfer step `E ↦ Σ_s (Σ_{s'} O_{s s'} A_{s'})† … ` for an operator
    /// `op` on one site (`None` is the identity).
    fn transfer(env: &Array2<C64>, t: &Array3<C64>, op: Option<&Gate1>) -> Array2<C64> {
        let (_, _, dr) = t.dim();
        let mut out = Array2::<C64>::zeros((dr, dr));
        for s in 0..2 {
            let bra = slice(t, s).mapv(|z| z.conj());
            let ket = match op {
                None => slice(t, s).to_owned(),
                Some(g) => &slice(t, 0) * g[s][0] + &slice(t, 1) * g[s][1],
            };
            out = out + bra.t().dot(&env.dot(&ket));
        }
        out
    }

    /// `⟨X_S⟩` for the X string on `support`, normalized by `⟨ψ|ψ⟩`.
    fn x_string_expectation(&self, support: &[usize]) -> f64 {
        if support.is_empty() {
            return 1.0;
        }
        let x: Gate1 = [[ZERO, ONE], [ONE, ZERO]];
        let lo = support[0].min(self.center);
        let hi = support[support.len() - 1].max(self.center);
        let dl = self.tensors[lo].dim().0;
        let mut env = Array2::<C64>::eye(dl);
        let mut norm_env = env.clone();
        for site in lo..=hi {
            let op = support.binary_search(&site).is_ok().then_some(&x);
            env = Self::transfer(&env, &self.tensors[site], op);
            norm_env = Self::transfer(&norm_env, &self.tensors[site], None);
        }
        let tr = |m: &Array2<C64>| m.diag().iter().sum::<C64>();
        tr(&env).re / tr(&norm_env).re
    }

    /// Expectation of each term's bond product (coefficients not applied).
    pub fn expectation_bond_terms(&self, terms: &[BondTerm]) -> Result<Vec<f64>> {
        terms
            .iter()
            .map(|t| {
                let support = t.qubit_support();
                if let Some(&q) = support.last() {
                    if q >= self.n_qubits {
                        return Err(Error::SupportOutOfRange {
                            qubit: q,
                            n_qubits: self.n_qubits,
                        });
                    }
                }
                Ok(self.x_string_expectation(&support))
            })
            .collect()
    }

    /// `⟨X_i X_{i+1}⟩` for all bonds from one pass of left and right
    /// environments.
    pub fn bond_correlators(&self) -> Vec<f64> {
        let n = self.n_qubits;
        let mut left = Vec::with_capacity(n + 1);
        left.push(Array2::<C64>::eye(1));
        for t in &self.tensors {
            let next = Self::transfer(left.last().unwrap(), t, None);
            left.push(next);
        }
        let norm = left[n][[0, 0]].re;
        // right[i] contracts sites i..n
        let mut right = vec![Array2::<C64>::eye(1); n + 1];
        for i in (0..n).rev() {
            right[i] = Self::transfer_right(&right[i + 1], &self.tensors[i]);
        }
        let x: Gate1 = [[ZERO, ONE], [ONE, ZERO]];
        (0..n.saturating_sub(1))
            .map(|b| {
                let e = Self::transfer(&left[b], &self.tensors[b], Some(&x));
                let e = Self::transfer(&e, &self.tensors[b + 1], Some(&x));
                (&e * &right[b + 2]).iter().sum::<C64>().re / norm
            })
            .collect()
    }

    /// `F ↦ Σ_s A_s F A_s†`, transposed so that `Σ_ij L_ij R_ij` closes a
    /// network against a left environment `L`.
    fn transfer_right(env: &Array2<C64>, t: &Array3<C64>) -> Array2<C64> {
        let (dl, _, _) = t.dim();
        let mut out = Array2::<C64>::zeros((dl, dl));
        for s in 0..2 {
            let a = slice(t, s);
            // L_{ab} contracts conj(A)[a] with A[b]; close with conj(A) F A^T
            out = out + a.mapv(|z| z.conj()).dot(env).dot(&a.t());
        }
        out
    }

    /// `E[C(K, j)]` for `j = 0..=order`, where `K` counts unequal
    /// neighbouring bits in a computational-basis readout of this state.
    /// Entry 0 is 1. Exact for the (truncated) state.
    pub fn kink_factorial_moments(&self, order: usize) -> Vec<f64> {
        let n = self.n_qubits;
        let deg = order + 1;
        // envs[prev_bit][j]
        let project = |t: &Array3<C64>, s: usize, env: &Array2<C64>| -> Array2<C64> {
            let a = slice(t, s);
            a.t().mapv(|z| z.conj()).dot(&env.dot(&a))
        };
        let t0 = &self.tensors[0];
        let one = Array2::<C64>::eye(1);
        let mut envs: Vec<Vec<Array2<C64>>> = (0..2)
            .map(|s| {
                let mut v = vec![Array2::<C64>::zeros((t0.dim().2, t0.dim().2)); deg];
                v[0] = project(t0, s, &one);
                v
            })
            .collect();
        for t in &self.tensors[1..n] {
            let dr = t.dim().2;
            let mut next = vec![vec![Array2::<C64>::zeros((dr, dr)); deg]; 2];
            #[allow(clippy::needless_range_loop)]
            for prev in 0..2 {
                for s in 0..2 {
                    for j in 0..deg {
                        let p = project(t, s, &envs[prev][j]);
                        if s != prev {
                            // multiply by (1 + ε): shift into degree j + 1 as well
                            if j + 1 < deg {
                                next[s][j + 1] = &next[s][j + 1] + &p;
                            }
                        }
                        next[s][j] = &next[s][j] + &p;
                    }
                }
            }
            envs = next;
        }
        let coeff: Vec<f64> = (0..deg)
            .map(|j| envs[0][j][[0, 0]].re + envs[1][j][[0, 0]].re)
            .collect();
        coeff.iter().map(|c| c / coeff[0]).collect()
    }

    /// Raw moments `E[K], E[K²], E[K³]` of the readout kink count.
    pub fn kink_count_moments(&self) -> [f64; 3] {
        let f = self.kink_factorial_moments(3);
        [f[1], 2.0 * f[2] + f[1], 6.0 * f[3] + 6.0 * f[2] + f[1]]
    }

    /// Sequential conditional sampling. `basis == X` reads every qubit in
    /// the Hadamard-rotated basis.
    pub fn sample(&self, shots: usize, basis: MeasureBasis, seed: u64) -> Result<BitstringBatch> {
        let mut state = self.clone();
        if basis == MeasureBasis::X {
            let h = hadamard();
            for q in 0..state.n_qubits {
                state.apply_single(q, &h);
            }
        }
        let sampler = MpsSampler::new(state)?;
        let identity = Circuit::bare(self.n_qubits, Vec::new(), basis);
        sample_noisy(
            &sampler,
            &identity,
            &NoiseModel::noiseless(),
            shots,
            seed,
            &SampleOptions::default(),
        )
    }

    /// Writes the site tensors in a versioned little-endian format.
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_qubits as u64).to_le_bytes())?;
        w.write_all(&(self.center as u64).to_le_bytes())?;
        for t in &self.tensors {
            let (dl, d, dr) = t.dim();
            for x in [dl, d, dr] {
                w.write_all(&(x as u64).to_le_bytes())?;
            }
            for z in t.as_standard_layout().iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read, options: MpsOptions) -> Result<Self> {
        let bad = |msg: &str| Error::Parse {
            line: 0,
            msg: format!("checkpoint: {msg}"),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != CHECKPOINT_VERSION {
            return Err(bad("unsupported version"));
        }
        let mut u64_ = || -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let n = u64_()? as usize;
        let center = u64_()? as usize;
        let mut shapes = Vec::with_capacity(n);
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let (dl, d, dr) = (u64_()? as usize, u64_()? as usize, u64_()? as usize);
            if d != 2 || dl * dr > (options.memory_budget / 32) as usize {
                return Err(bad("implausible tensor shape"));
            }
            let mut data = Vec::with_capacity(dl * d * dr);
            for _ in 0..dl * d * dr {
                let re = f64::from_bits(u64_()?);
                let im = f64::from_bits(u64_()?);
                data.push(C64::new(re, im));
            }
            shapes.push((dl, dr));
            tensors.push(Array3::from_shape_vec((dl, d, dr), data).expect("shape"));
        }
        if n == 0
            || center >= n
            || shapes[0].0 != 1
            || shapes[n - 1].1 != 1
            || shapes.windows(2).any(|w| w[0].1 != w[1].0)
        {
            return Err(bad("inconsistent bond dimensions"));
        }
        let max_bond = shapes.iter().map(|s| s.1).max().unwrap_or(1);
        Ok(Self {
            n_qubits: n,
            tensors,
            center,
            options,
            stats: MpsStats {
                max_bond,
                ..MpsStats::default()
            },
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"KZMMPS01";
const CHECKPOINT_VERSION: u32 = 1;

fn identity_deviation(g: &Array2<C64>) -> f64 {
    g.indexed_iter()
        .map(|((i, j), z)| (z - if i == j { ONE } else { ZERO }).norm())
        .fold(0.0, f64::max)
}

/// Divide-and-conquer SVD, falling back to the QR-iteration driver.
fn svd(m: &Array2<C64>) -> Result<(Array2<C64>, Vec<f64>, Array2<C64>)> {
    match m.svddc(JobSvd::Some) {
        Ok((Some(u), s, Some(vt))) => Ok((u, s.to_vec(), vt)),
        _ => match m.svd(true, true) {
            Ok((Some(u), s, Some(vt))) => {
                let k = s.len();
                Ok((
                    u.slice(s![.., ..k]).to_owned(),
                    s.to_vec(),
                    vt.slice(s![..k, ..]).to_owned(),
                ))
            }
            Ok(_) => Err(Error::Linalg("SVD returned no vectors".into())),
            Err(e) => Err(linalg(e)),
        },
    }
}

/// Sampler over a state whose center sits on site 0, so every other site
/// is right-isometric and conditional probabilities are local.
pub(crate) struct MpsSampler {
    state: MpsState,
    options: MpsOptions,
}

impl MpsSampler {
    pub(crate) fn new(mut state: MpsState) -> Result<Self> {
        state.move_center(0)?;
        let deviation = (state.norm_sqr() - 1.0).abs();
        if deviation > 1e-6 {
            return Err(Error::NotNormalized { deviation });
        }
        let options = state.options;
        Ok(Self { state, options })
    }

    fn draw(state: &MpsState, rng: &mut impl Rng) -> BitString {
        let n = state.n_qubits;
        let mut bits = BitString::zeros(n);
        let mut v = ndarray::Array1::from_elem(1, ONE);
        for (i, t) in state.tensors.iter().enumerate() {
            let w0 = v.dot(&slice(t, 0));
            let w1 = v.dot(&slice(t, 1));
            let p0: f64 = w0.iter().map(|z| z.norm_sqr()).sum();
            let p1: f64 = w1.iter().map(|z| z.norm_sqr()).sum();
            let one = rng.random::<f64>() * (p0 + p1) >= p0;
            bits.set(i, one);
            let (w, p) = if one { (w1, p1) } else { (w0, p0) };
            v = w / C64::new(p.sqrt(), 0.0);
        }
        bits
    }
}

impl ShotSampler for MpsSampler {
    fn sample_ideal(&self, rng: &mut StreamRng) -> Result<BitString> {
        Ok(Self::draw(&self.state, rng))
    }

    fn sample_ops(&self, ops: &[GateOp], rng: &mut StreamRng) -> Result<BitString> {
        let mut s = MpsState::run_ops(self.state.n_qubits, ops, self.options)?;
        s.move_center(0)?;
        Ok(Self::draw(&s, rng))
    }
}

/// Samples `circuit` under `noise` with MPS trajectories; same stream
/// layout as [`crate::statevector::run_noisy_with`].
pub fn run_noisy(
    circuit: &Circuit,
    noise: &NoiseModel,
    shots: usize,
    seed: u64,
    mps: MpsOptions,
    options: &SampleOptions,
) -> Result<BitstringBatch> {
    let state = MpsState::run(circuit, mps)?;
    let sampler = MpsSampler::new(state)?;
    sample_noisy(&sampler, circuit, noise, shots, seed, options)
}
