//! Noiseless statevector simulation of the quantum generator circuits.
//!
//! The register convention is little-endian: qubit 0 is the least significant
//! bit of the basis-state index. All gate kernels act in place on the full
//! 2^n amplitude vector and preserve the norm exactly up to floating point.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

/// Largest register the simulator accepts (full statevector, 2^n amplitudes).
pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("qubit count {0} outside supported range 1..={MAX_QUBITS}")]
    QubitCountOutOfRange(usize),
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitIndexOutOfRange { index: usize, n_qubits: usize },
    #[error("control and target must differ, both are qubit {0}")]
    ControlEqualsTarget(usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Full amplitude vector of an n-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// The all-zeros basis state |0...0⟩.
    pub fn new(n_qubits: usize) -> Result<Self, SimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(SimError::QubitCountOutOfRange(n_qubits));
        }
        let mut amps = vec![Complex64::ZERO; 1 << n_qubits];
        amps[0] = Complex64::ONE;
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Squared norm of the amplitude vector; 1 up to floating point.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Probability of each basis state, in index order.
    pub fn basis_probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    fn check_qubit(&self, index: usize) -> Result<(), SimError> {
        if index >= self.n_qubits {
            return Err(SimError::QubitIndexOutOfRange {
                index,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    /// Apply the 2x2 matrix [[m00, m01], [m10, m11]] to one wire.
    fn apply_one_qubit(&mut self, qubit: usize, m: [Complex64; 4]) {
        let step = 1 << qubit;
        for block in (0..self.amps.len()).step_by(2 * step) {
            for offset in 0..step {
                let i = block + offset;
                let j = i + step;
                let a = self.amps[i];
                let b = self.amps[j];
                self.amps[i] = m[0] * a + m[1] * b;
                self.amps[j] = m[2] * a + m[3] * b;
            }
        }
    }

    /// Rotation about X: exp(-i θX/2).
    pub fn apply_rx(&mut self, qubit: usize, theta: f64) -> Result<(), SimError> {
        self.check_qubit(qubit)?;
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let mis = Complex64::new(0.0, -s);
        self.apply_one_qubit(qubit, [c.into(), mis, mis, c.into()]);
        Ok(())
    }

    /// Rotation about Y: exp(-i θY/2). Real matrix, keeps real states real.
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<(), SimError> {
        self.check_qubit(qubit)?;
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        self.apply_one_qubit(qubit, [c.into(), (-s).into(), s.into(), c.into()]);
        Ok(())
    }

    /// Fixed Pauli-Y gate [[0, -i], [i, 0]].
    pub fn apply_pauli_y(&mut self, qubit: usize) -> Result<(), SimError> {
        self.check_qubit(qubit)?;
        let step = 1 << qubit;
        for block in (0..self.amps.len()).step_by(2 * step) {
            for offset in 0..step {
                let i = block + offset;
                let j = i + step;
                let a = self.amps[i];
                let b = self.amps[j];
                self.amps[i] = Complex64::new(b.im, -b.re); // -i * b
                self.amps[j] = Complex64::new(-a.im, a.re); // i * a
            }
        }
        Ok(())
    }

    /// CNOT: flips the target bit on basis states whose control bit is 1.
    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<(), SimError> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(SimError::ControlEqualsTarget(control));
        }
        let cmask = 1 << control;
        let tmask = 1 << target;
        for i in 0..self.amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
        Ok(())
    }

    /// Angle embedding: one RY(z_i) per wire, applied to the fresh register.
    pub fn angle_embed(&mut self, angles: &[f64]) -> Result<(), SimError> {
        if angles.len() != self.n_qubits {
            return Err(SimError::LengthMismatch {
                expected: self.n_qubits,
                got: angles.len(),
            });
        }
        for (qubit, &theta) in angles.iter().enumerate() {
            self.apply_ry(qubit, theta)?;
        }
        Ok(())
    }

    /// Probability of measuring |0⟩ on one wire.
    pub fn prob_zero(&self, qubit: usize) -> Result<f64, SimError> {
        self.check_qubit(qubit)?;
        let mask = 1 << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Per-wire |0⟩ probabilities, one pass over the amplitudes.
    pub fn marginals(&self) -> QubitMarginals {
        let mut probs = vec![0.0; self.n_qubits];
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (qubit, acc) in probs.iter_mut().enumerate() {
                if i & (1 << qubit) == 0 {
                    *acc += p;
                }
            }
        }
        QubitMarginals { probs }
    }
}

/// Probability of measuring |0⟩ on each wire of a register.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitMarginals {
    probs: Vec<f64>,
}

impl QubitMarginals {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// The two 2-local circuit families used by the quantum generators.
///
/// Both alternate single-qubit rotation ladders with a circular CNOT ring
/// (control i, target i+1 mod n). `RxFixedY` follows each RX ladder with a
/// ladder of non-parameterized Pauli-Y gates; `RxRy` uses a second
/// parameterized RY ladder instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AnsatzFamily {
    RxFixedY,
    RxRy,
}

/// Declarative description of a quantum generator circuit.
///
/// The circuit is: angle embedding, then `layers` repetitions of
/// [rotation block, CNOT ring], then one final rotation block, for a total
/// of `layers + 1` rotation blocks. The trailing block is what makes the
/// published parameter counts come out: n(L+1) parameters for `RxFixedY`
/// and 2n(L+1) for `RxRy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AnsatzSpec {
    pub family: AnsatzFamily,
    pub layers: usize,
    pub n_qubits: usize,
}

/// One gate of a reified generator circuit, in application order.
#[derive(Debug, Clone, Copy, PartialEq)]
enum CircuitGate {
    /// RY(z_qubit) from the latent vector.
    EmbedRy { qubit: usize },
    Rx { qubit: usize, param: usize },
    Ry { qubit: usize, param: usize },
    PauliY { qubit: usize },
    Cnot { control: usize, target: usize },
}

impl CircuitGate {
    fn param_index(self) -> Option<usize> {
        match self {
            CircuitGate::Rx { param, .. } | CircuitGate::Ry { param, .. } => Some(param),
            _ => None,
        }
    }
}

impl AnsatzSpec {
    pub fn new(family: AnsatzFamily, layers: usize, n_qubits: usize) -> Result<Self, SimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(SimError::QubitCountOutOfRange(n_qubits));
        }
        if layers == 0 {
            return Err(SimError::LengthMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(Self {
            family,
            layers,
            n_qubits,
        })
    }

    /// Number of trainable rotation angles.
    pub fn param_count(&self) -> usize {
        let per_block = match self.family {
            AnsatzFamily::RxFixedY => self.n_qubits,
            AnsatzFamily::RxRy => 2 * self.n_qubits,
        };
        per_block * (self.layers + 1)
    }

    fn gate_sequence(&self) -> Vec<CircuitGate> {
        let n = self.n_qubits;
        let mut gates = Vec::new();
        for qubit in 0..n {
            gates.push(CircuitGate::EmbedRy { qubit });
        }
        let mut param = 0;
        for layer in 0..=self.layers {
            for qubit in 0..n {
                gates.push(CircuitGate::Rx { qubit, param });
                param += 1;
            }
            match self.family {
                AnsatzFamily::RxFixedY => {
                    for qubit in 0..n {
                        gates.push(CircuitGate::PauliY { qubit });
                    }
                }
                AnsatzFamily::RxRy => {
                    for qubit in 0..n {
                        gates.push(CircuitGate::Ry { qubit, param });
                        param += 1;
                    }
                }
            }
            // No entangler after the final rotation block.
            if layer < self.layers && n > 1 {
                for control in 0..n {
                    gates.push(CircuitGate::Cnot {
                        control,
                        target: (control + 1) % n,
                    });
                }
            }
        }
        debug_assert_eq!(param, self.param_count());
        gates
    }

    fn check_inputs(&self, params: &[f64], z: &[f64]) -> Result<(), SimError> {
        if params.len() != self.param_count() {
            return Err(SimError::LengthMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if z.len() != self.n_qubits {
            return Err(SimError::LengthMismatch {
                expected: self.n_qubits,
                got: z.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, params: &[f64], z: &[f64]) -> Statevector {
        let mut state = Statevector::new(self.n_qubits).expect("validated qubit count");
        for gate in self.gate_sequence() {
            apply_gate(&mut state, gate, params, z);
        }
        state
    }

    /// Execute the circuit and return the per-wire |0⟩ probabilities.
    pub fn run(&self, params: &[f64], z: &[f64]) -> Result<QubitMarginals, SimError> {
        self.check_inputs(params, z)?;
        Ok(self.forward(params, z).marginals())
    }

    /// Parameter-shift Jacobian of the marginals: entry (i, j) is
    /// [p_i(θ_j + π/2) - p_i(θ_j - π/2)] / 2, exact for RX/RY generators.
    pub fn parameter_shift_jacobian(&self, params: &[f64], z: &[f64]) -> Result<Jacobian, SimError> {
        self.check_inputs(params, z)?;
        let p = self.param_count();
        let n = self.n_qubits;
        let shift = std::f64::consts::FRAC_PI_2;
        let columns: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|j| {
                let mut plus = params.to_vec();
                let mut minus = params.to_vec();
                plus[j] += shift;
                minus[j] -= shift;
                let probs_plus = self.forward(&plus, z).marginals();
                let probs_minus = self.forward(&minus, z).marginals();
                (0..n)
                    .map(|i| (probs_plus.probs()[i] - probs_minus.probs()[i]) / 2.0)
                    .collect()
            })
            .collect();
        let mut data = vec![0.0; n * p];
        for (j, column) in columns.iter().enumerate() {
            for (i, &value) in column.iter().enumerate() {
                data[i * p + j] = value;
            }
        }
        Ok(Jacobian {
            n_outputs: n,
            n_params: p,
            data,
        })
    }

    /// Gradient of the weighted marginal sum Σ_i weights_i · p_i with respect
    /// to the circuit parameters, computed by one reverse sweep over the gate
    /// list (adjoint differentiation). Exact, and O(gates) instead of the
    /// parameter-shift rule's O(params · gates); the two agree to roundoff.
    ///
    /// Maintains two vectors while unwinding gate k: the partially undone
    /// state ψ_k = U_k…U_1|ψ0⟩ and λ = U_{k+1}†…U_N† O |ψ_N⟩, so that
    /// d⟨O⟩/dθ_k = 2 Re⟨λ| (-i/2) G_k |ψ_k⟩ for U_k = exp(-i θ_k G_k / 2).
    pub fn adjoint_gradient(
        &self,
        params: &[f64],
        z: &[f64],
        weights: &[f64],
    ) -> Result<Vec<f64>, SimError> {
        self.check_inputs(params, z)?;
        if weights.len() != self.n_qubits {
            return Err(SimError::LengthMismatch {
                expected: self.n_qubits,
                got: weights.len(),
            });
        }
        let gates = self.gate_sequence();
        let mut psi = Statevector::new(self.n_qubits).expect("validated qubit count");
        for &gate in &gates {
            apply_gate(&mut psi, gate, params, z);
        }

        // O = Σ_i weights_i Π_i^{|0⟩} is diagonal in the computational basis.
        let dim = 1 << self.n_qubits;
        let mut diag = vec![0.0; dim];
        for (basis, d) in diag.iter_mut().enumerate() {
            for (qubit, &w) in weights.iter().enumerate() {
                if basis & (1 << qubit) == 0 {
                    *d += w;
                }
            }
        }
        let mut lambda = psi.clone();
        for (amp, &d) in lambda.amps.iter_mut().zip(diag.iter()) {
            *amp *= d;
        }

        let mut grad = vec![0.0; self.param_count()];
        let mut scratch = vec![Complex64::ZERO; dim];
        for &gate in gates.iter().rev() {
            if let Some(param) = gate.param_index() {
                // μ = (-i/2) G ψ_k, with ψ currently equal to ψ_k.
                apply_generator_scaled(&psi, gate, &mut scratch);
                let overlap: Complex64 = lambda
                    .amps
                    .iter()
                    .zip(scratch.iter())
                    .map(|(l, m)| l.conj() * m)
                    .sum();
                grad[param] = 2.0 * overlap.re;
            }
            apply_gate_inverse(&mut psi, gate, params, z);
            apply_gate_inverse(&mut lambda, gate, params, z);
        }
        Ok(grad)
    }
}

fn apply_gate(state: &mut Statevector, gate: CircuitGate, params: &[f64], z: &[f64]) {
    let result = match gate {
        CircuitGate::EmbedRy { qubit } => state.apply_ry(qubit, z[qubit]),
        CircuitGate::Rx { qubit, param } => state.apply_rx(qubit, params[param]),
        CircuitGate::Ry { qubit, param } => state.apply_ry(qubit, params[param]),
        CircuitGate::PauliY { qubit } => state.apply_pauli_y(qubit),
        CircuitGate::Cnot { control, target } => state.apply_cnot(control, target),
    };
    result.expect("gate indices are valid by construction");
}

fn apply_gate_inverse(state: &mut Statevector, gate: CircuitGate, params: &[f64], z: &[f64]) {
    let result = match gate {
        CircuitGate::EmbedRy { qubit } => state.apply_ry(qubit, -z[qubit]),
        CircuitGate::Rx { qubit, param } => state.apply_rx(qubit, -params[param]),
        CircuitGate::Ry { qubit, param } => state.apply_ry(qubit, -params[param]),
        // Pauli-Y and CNOT are involutions.
        CircuitGate::PauliY { qubit } => state.apply_pauli_y(qubit),
        CircuitGate::Cnot { control, target } => state.apply_cnot(control, target),
    };
    result.expect("gate indices are valid by construction");
}

/// Write (-i/2) G |ψ⟩ into `out`, where G is the rotation generator (X or Y)
/// of a parameterized gate.
fn apply_generator_scaled(state: &Statevector, gate: CircuitGate, out: &mut [Complex64]) {
    let half = Complex64::new(0.0, -0.5);
    match gate {
        CircuitGate::Rx { qubit, .. } => {
            // X swaps the pair amplitudes.
            let mask = 1 << qubit;
            for (i, o) in out.iter_mut().enumerate() {
                *o = half * state.amps[i ^ mask];
            }
        }
        CircuitGate::Ry { qubit, .. } => {
            // Y: |0⟩ -> i|1⟩, |1⟩ -> -i|0⟩.
            let mask = 1 << qubit;
            for (i, o) in out.iter_mut().enumerate() {
                let partner = state.amps[i ^ mask];
                *o = if i & mask == 0 {
                    half * Complex64::new(partner.im, -partner.re)
                } else {
                    half * Complex64::new(-partner.im, partner.re)
                };
            }
        }
        _ => unreachable!("only rotation gates carry parameters"),
    }
}

/// Dense row-major matrix of marginal derivatives, n_outputs x n_params.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    n_outputs: usize,
    n_params: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn at(&self, output: usize, param: usize) -> f64 {
        self.data[output * self.n_params + param]
    }

    /// Vector-Jacobian product: upstream^T · J, the pullback of a gradient
    /// with respect to the marginals onto the circuit parameters.
    pub fn vjp(&self, upstream: &[f64]) -> Result<Vec<f64>, SimError> {
        if upstream.len() != self.n_outputs {
            return Err(SimError::LengthMismatch {
                expected: self.n_outputs,
                got: upstream.len(),
            });
        }
        let mut grad = vec![0.0; self.n_params];
        for (i, &u) in upstream.iter().enumerate() {
            for (j, g) in grad.iter_mut().enumerate() {
                *g += u * self.data[i * self.n_params + j];
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ground(n: usize) -> Statevector {
        Statevector::new(n).unwrap()
    }

    #[test]
    fn new_statevector_is_ground_state() {
        let s = ground(1);
        assert_eq!(s.amplitudes(), &[Complex64::ONE, Complex64::ZERO]);
        let s = ground(2);
        assert_eq!(s.amplitudes()[0], Complex64::ONE);
        assert!(s.amplitudes()[1..].iter().all(|a| *a == Complex64::ZERO));
        let s = ground(6);
        assert_eq!(s.amplitudes().len(), 64);
        assert_eq!(s.amplitudes()[0], Complex64::ONE);
    }

    #[test]
    fn new_statevector_rejects_bad_counts() {
        assert_eq!(
            Statevector::new(0).unwrap_err(),
            SimError::QubitCountOutOfRange(0)
        );
        assert_eq!(
            Statevector::new(13).unwrap_err(),
            SimError::QubitCountOutOfRange(13)
        );
        assert!(Statevector::new(12).is_ok());
    }

    #[test]
    fn rx_matches_cos_squared_probability() {
        let mut s = ground(1);
        s.apply_rx(0, PI).unwrap();
        assert_abs_diff_eq!(s.prob_zero(0).unwrap(), 0.0, epsilon = 1e-12);

        let mut s = ground(1);
        s.apply_rx(0, FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(s.prob_zero(0).unwrap(), 0.5, epsilon = 1e-12);

        let mut s = ground(3);
        s.apply_ry(1, 0.7).unwrap();
        let before = s.clone();
        s.apply_rx(2, 0.0).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn ry_rotates_in_the_real_plane() {
        let mut s = ground(1);
        s.apply_ry(0, PI).unwrap();
        assert_abs_diff_eq!(s.prob_zero(0).unwrap(), 0.0, epsilon = 1e-12);

        let mut s = ground(1);
        s.apply_ry(0, FRAC_PI_2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s.amplitudes()[0].re, r, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitudes()[1].re, r, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitudes()[0].im, 0.0, epsilon = 1e-12);

        let mut s = ground(2);
        let before = s.clone();
        s.apply_ry(0, 0.0).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn pauli_y_flips_with_phase() {
        let mut s = ground(1);
        s.apply_pauli_y(0).unwrap();
        assert_abs_diff_eq!(s.prob_zero(0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((s.amplitudes()[1] - Complex64::I).norm(), 0.0, epsilon = 1e-12);

        // Y on |1⟩ gives -i|0⟩.
        s.apply_pauli_y(0).unwrap();
        assert_abs_diff_eq!(s.prob_zero(0).unwrap(), 1.0, epsilon = 1e-12);

        // Y twice restores probabilities on an arbitrary state.
        let mut s = ground(2);
        s.apply_ry(0, 0.9).unwrap();
        s.apply_rx(1, 0.4).unwrap();
        let probs_before = s.basis_probabilities();
        s.apply_pauli_y(1).unwrap();
        s.apply_pauli_y(1).unwrap();
        for (p, q) in probs_before.iter().zip(s.basis_probabilities()) {
            assert_abs_diff_eq!(*p, q, epsilon = 1e-12);
        }
    }

    #[test]
    fn cnot_truth_table_and_involution() {
        // |00⟩ unchanged.
        let mut s = ground(2);
        s.apply_cnot(0, 1).unwrap();
        assert_abs_diff_eq!(s.basis_probabilities()[0], 1.0, epsilon = 1e-12);

        // |10⟩ (qubit 0 set, index 0b01) -> |11⟩ (index 0b11).
        let mut s = ground(2);
        s.apply_rx(0, PI).unwrap();
        s.apply_cnot(0, 1).unwrap();
        assert_abs_diff_eq!(s.basis_probabilities()[0b11], 1.0, epsilon = 1e-12);

        // Applied twice restores an arbitrary state.
        let mut s = ground(3);
        s.apply_ry(0, 1.1).unwrap();
        s.apply_rx(2, 0.3).unwrap();
        let before = s.clone();
        s.apply_cnot(0, 2).unwrap();
        s.apply_cnot(0, 2).unwrap();
        for (a, b) in before.amplitudes().iter().zip(s.amplitudes()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gate_index_errors() {
        let mut s = ground(2);
        assert!(matches!(
            s.apply_rx(2, 0.1),
            Err(SimError::QubitIndexOutOfRange { index: 2, .. })
        ));
        assert!(matches!(
            s.apply_cnot(0, 0),
            Err(SimError::ControlEqualsTarget(0))
        ));
        assert!(matches!(
            s.apply_cnot(0, 5),
            Err(SimError::QubitIndexOutOfRange { index: 5, .. })
        ));
    }

    #[test]
    fn angle_embed_marginals() {
        let mut s = ground(6);
        s.angle_embed(&[0.0; 6]).unwrap();
        assert_abs_diff_eq!(s.basis_probabilities()[0], 1.0, epsilon = 1e-12);

        let mut s = ground(6);
        s.angle_embed(&[PI, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let m = s.marginals();
        assert_abs_diff_eq!(m.probs()[0], 0.0, epsilon = 1e-12);
        for &p in &m.probs()[1..] {
            assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        }

        let mut s = ground(6);
        s.angle_embed(&[FRAC_PI_2; 6]).unwrap();
        for &p in s.marginals().probs() {
            assert_abs_diff_eq!(p, 0.5, epsilon = 1e-12);
        }

        let mut s = ground(6);
        assert!(matches!(
            s.angle_embed(&[0.0; 4]),
            Err(SimError::LengthMismatch { expected: 6, got: 4 })
        ));
    }

    #[test]
    fn paper_parameter_counts() {
        let cases = [
            (AnsatzFamily::RxFixedY, 5, 36),
            (AnsatzFamily::RxFixedY, 10, 66),
            (AnsatzFamily::RxRy, 5, 72),
            (AnsatzFamily::RxRy, 10, 132),
        ];
        for (family, layers, expected) in cases {
            let spec = AnsatzSpec::new(family, layers, 6).unwrap();
            assert_eq!(spec.param_count(), expected);
        }
    }

    #[test]
    fn run_validates_lengths() {
        let spec = AnsatzSpec::new(AnsatzFamily::RxFixedY, 5, 6).unwrap();
        assert!(matches!(
            spec.run(&vec![0.0; 35], &[0.0; 6]),
            Err(SimError::LengthMismatch { expected: 36, got: 35 })
        ));
        let spec = AnsatzSpec::new(AnsatzFamily::RxRy, 10, 6).unwrap();
        assert!(spec.run(&vec![0.0; 132], &[0.0; 6]).is_ok());
    }

    #[test]
    fn zero_circuit_leaves_ground_state() {
        // All-zero parameters reduce every rotation to identity, and the CNOT
        // rings act trivially on |0...0⟩.
        let spec = AnsatzSpec::new(AnsatzFamily::RxRy, 5, 6).unwrap();
        let m = spec.run(&vec![0.0; 72], &[0.0; 6]).unwrap();
        for &p in m.probs() {
            assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn run_is_deterministic() {
        let spec = AnsatzSpec::new(AnsatzFamily::RxRy, 3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-PI..PI)).collect();
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = spec.run(&params, &z).unwrap();
        let b = spec.run(&params, &z).unwrap();
        assert_eq!(a, b);
    }

    /// Central finite differences of the marginals, the independent oracle
    /// for the parameter-shift rule.
    fn finite_difference_jacobian(spec: &AnsatzSpec, params: &[f64], z: &[f64], h: f64) -> Vec<Vec<f64>> {
        let p = spec.param_count();
        let n = spec.n_qubits;
        let mut jac = vec![vec![0.0; p]; n];
        for j in 0..p {
            let mut plus = params.to_vec();
            let mut minus = params.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let mp = spec.run(&plus, z).unwrap();
            let mm = spec.run(&minus, z).unwrap();
            for i in 0..n {
                jac[i][j] = (mp.probs()[i] - mm.probs()[i]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn single_ry_shift_rule_matches_analytic_derivative() {
        // P0 = cos²(θ/2), dP0/dθ = -sin(θ)/2 = -0.5 at θ = π/2.
        let spec = AnsatzSpec {
            family: AnsatzFamily::RxRy,
            layers: 1,
            n_qubits: 1,
        };
        // Isolate one RY by zeroing every other angle: params are
        // [rx0, ry0, rx1, ry1]; probe ry0.
        let params = [0.0, FRAC_PI_2, 0.0, 0.0];
        let jac = spec.parameter_shift_jacobian(&params, &[0.0]).unwrap();
        assert_abs_diff_eq!(jac.at(0, 1), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn parameter_shift_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = AnsatzSpec::new(AnsatzFamily::RxRy, 2, 3).unwrap();
        for _ in 0..5 {
            let params: Vec<f64> =
                (0..spec.param_count()).map(|_| rng.random_range(-PI..PI)).collect();
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let jac = spec.parameter_shift_jacobian(&params, &z).unwrap();
            let fd = finite_difference_jacobian(&spec, &params, &z, 1e-5);
            for i in 0..3 {
                for j in 0..spec.param_count() {
                    assert_abs_diff_eq!(jac.at(i, j), fd[i][j], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn adjoint_gradient_matches_parameter_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for &(family, layers, n) in &[
            (AnsatzFamily::RxFixedY, 2, 4),
            (AnsatzFamily::RxRy, 2, 3),
            (AnsatzFamily::RxFixedY, 5, 6),
        ] {
            let spec = AnsatzSpec::new(family, layers, n).unwrap();
            let params: Vec<f64> =
                (0..spec.param_count()).map(|_| rng.random_range(-PI..PI)).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let adjoint = spec.adjoint_gradient(&params, &z, &weights).unwrap();
            let shift = spec
                .parameter_shift_jacobian(&params, &z)
                .unwrap()
                .vjp(&weights)
                .unwrap();
            for (a, s) in adjoint.iter().zip(shift.iter()) {
                assert_abs_diff_eq!(a, s, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn norm_preserved_under_long_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = rng.random_range(2..=6);
            let mut s = ground(n);
            for _ in 0..200 {
                match rng.random_range(0..4) {
                    0 => s.apply_rx(rng.random_range(0..n), rng.random_range(-PI..PI)).unwrap(),
                    1 => s.apply_ry(rng.random_range(0..n), rng.random_range(-PI..PI)).unwrap(),
                    2 => s.apply_pauli_y(rng.random_range(0..n)).unwrap(),
                    _ => {
                        let c = rng.random_range(0..n);
                        let t = (c + rng.random_range(1..n)) % n;
                        s.apply_cnot(c, t).unwrap();
                    }
                }
            }
            assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
            let total: f64 = s.basis_probabilities().iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            for &p in s.marginals().probs() {
                assert!((-1e-12..=1.0 + 1e-12).contains(&p));
            }
        }
    }
}
