//! Exact few-qubit pure-state simulator.
//!
//! Basis ordering is big-endian: qubit 0 is the leftmost register of a ket,
//! so `|a b c>` lives at index `4a + 2b + c`. Everything here is
//! deterministic; measurement returns both branches and leaves sampling to
//! callers.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Amplitude = Complex64;

pub const NORM_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Amplitude>,
}

impl StateVector {
    /// Builds a state from amplitudes. The length must be a power of two
    /// (at least 2) and the squared norm must be 1 within [`NORM_TOL`].
    pub fn new(amps: Vec<Amplitude>) -> Result<Self> {
        let num_qubits = qubits_for_len(amps.len())?;
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n2));
        }
        Ok(StateVector { num_qubits, amps })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amps: Vec<Amplitude>) -> Result<Self> {
        let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !n2.is_finite() {
            return Err(Error::NonFinite);
        }
        if n2 == 0.0 {
            return Err(Error::ZeroVector(0));
        }
        let s = 1.0 / n2.sqrt();
        Self::new(amps.into_iter().map(|a| a * s).collect())
    }

    pub fn basis(num_qubits: usize, index: usize) -> Self {
        assert!(num_qubits >= 1 && index < (1 << num_qubits));
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        StateVector { num_qubits, amps }
    }

    pub fn zero(num_qubits: usize) -> Self {
        Self::basis(num_qubits, 0)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Amplitude] {
        &self.amps
    }

    /// Real parts of the amplitudes.
    pub fn real_parts(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.re).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `|<self|other>|`, insensitive to global phase.
    pub fn overlap(&self, other: &StateVector) -> Result<f64> {
        Ok(inner(self, other)?.norm())
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::DimensionMismatch {
            expected: len.next_power_of_two().max(2),
            found: len,
        });
    }
    Ok(len.trailing_zeros() as usize)
}

/// Square unitary matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Unitary {
    dim: usize,
    entries: Vec<Amplitude>,
}

impl Unitary {
    pub fn new(dim: usize, entries: Vec<Amplitude>) -> Result<Self> {
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::DimensionMismatch {
                expected: dim.next_power_of_two().max(2),
                found: dim,
            });
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        let u = Unitary { dim, entries };
        let dev = u.unitarity_deviation();
        if dev.is_nan() || dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(u)
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        Self::new(
            dim,
            entries.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn entry(&self, row: usize, col: usize) -> Amplitude {
        self.entries[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Unitary {
        let d = self.dim;
        let mut entries = vec![Complex64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for c in 0..d {
                entries[c * d + r] = self.entries[r * d + c].conj();
            }
        }
        Unitary { dim: d, entries }
    }

    /// Matrix product `self * rhs`.
    pub fn compose(&self, rhs: &Unitary) -> Result<Unitary> {
        if self.dim != rhs.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rhs.dim,
            });
        }
        let d = self.dim;
        let mut entries = vec![Complex64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.entries[r * d + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..d {
                    entries[r * d + c] += a * rhs.entries[k * d + c];
                }
            }
        }
        Ok(Unitary { dim: d, entries })
    }

    /// `max |U†U - I|` over all entries.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += self.entries[k * d + r].conj() * self.entries[k * d + c];
                }
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).norm());
            }
        }
        if worst.is_nan() {
            f64::INFINITY
        } else {
            worst
        }
    }
}

/// Gate constructors. `ry` uses the full-angle convention
/// `Ry(t)|0> = cos t|0> + sin t|1>`, which makes rotations additive.
pub mod gates {
    use super::Unitary;
    use std::f64::consts::FRAC_1_SQRT_2;

    pub fn h() -> Unitary {
        let s = FRAC_1_SQRT_2;
        Unitary::from_real(2, &[s, s, s, -s]).expect("hadamard is unitary")
    }

    pub fn x() -> Unitary {
        Unitary::from_real(2, &[0.0, 1.0, 1.0, 0.0]).expect("pauli x is unitary")
    }

    pub fn ry(theta: f64) -> Unitary {
        let (s, c) = theta.sin_cos();
        Unitary::from_real(2, &[c, -s, s, c]).expect("rotation is unitary")
    }

    /// Two-qubit CNOT; the first target index is the control.
    pub fn cnot() -> Unitary {
        #[rustfmt::skip]
        let m = [
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, 1.0, 0.0,
        ];
        Unitary::from_real(4, &m).expect("cnot is unitary")
    }
}

/// Applies `u` to the listed qubits. The first entry of `targets` is the
/// most significant bit of `u`'s basis.
pub fn apply(state: &StateVector, u: &Unitary, targets: &[usize]) -> Result<StateVector> {
    let k = targets.len();
    if u.dim != 1 << k {
        return Err(Error::DimensionMismatch {
            expected: 1 << k,
            found: u.dim,
        });
    }
    let n = state.num_qubits;
    for (i, &t) in targets.iter().enumerate() {
        if t >= n {
            return Err(Error::QubitOutOfRange {
                qubit: t,
                num_qubits: n,
            });
        }
        if targets[..i].contains(&t) {
            return Err(Error::DuplicateTarget(t));
        }
    }

    let masks: Vec<usize> = targets.iter().map(|&t| 1 << (n - 1 - t)).collect();
    let target_mask: usize = masks.iter().sum();
    let offsets: Vec<usize> = (0..u.dim)
        .map(|sub| {
            masks
                .iter()
                .enumerate()
                .filter(|(m, _)| sub >> (k - 1 - m) & 1 == 1)
                .map(|(_, &mask)| mask)
                .sum()
        })
        .collect();

    let mut out = state.amps.clone();
    let mut gathered = vec![Complex64::new(0.0, 0.0); u.dim];
    for base in (0..state.dim()).filter(|b| b & target_mask == 0) {
        for (g, &off) in gathered.iter_mut().zip(&offsets) {
            *g = state.amps[base | off];
        }
        for (row, &off) in offsets.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, g) in gathered.iter().enumerate() {
                acc += u.entries[row * u.dim + col] * g;
            }
            out[base | off] = acc;
        }
    }
    Ok(StateVector {
        num_qubits: n,
        amps: out,
    })
}

/// Kronecker product with `a`'s qubits leftmost.
pub fn tensor(a: &StateVector, b: &StateVector) -> StateVector {
    let mut amps = Vec::with_capacity(a.dim() * b.dim());
    for x in &a.amps {
        for y in &b.amps {
            amps.push(x * y);
        }
    }
    StateVector {
        num_qubits: a.num_qubits + b.num_qubits,
        amps,
    }
}

/// `<a|b>`, conjugating `a`.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<Amplitude> {
    if a.num_qubits != b.num_qubits {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementBranch {
    pub outcome: u8,
    pub probability: f64,
    /// Renormalized post-measurement state; `None` when the branch is impossible.
    pub post_state: Option<StateVector>,
}

/// Projective measurement of one qubit in the computational basis.
pub fn measure_qubit(state: &StateVector, qubit: usize) -> Result<[MeasurementBranch; 2]> {
    let n = state.num_qubits;
    if qubit >= n {
        return Err(Error::QubitOutOfRange {
            qubit,
            num_qubits: n,
        });
    }
    let mask = 1 << (n - 1 - qubit);
    let branch = |outcome: u8| {
        let projected: Vec<Amplitude> = state
            .amps
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                if ((i & mask != 0) as u8) == outcome {
                    a
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let p: f64 = projected.iter().map(|a| a.norm_sqr()).sum();
        let post_state = if p > 0.0 {
            let s = 1.0 / p.sqrt();
            Some(StateVector {
                num_qubits: n,
                amps: projected.into_iter().map(|a| a * s).collect(),
            })
        } else {
            None
        };
        MeasurementBranch {
            outcome,
            probability: p,
            post_state,
        }
    };
    Ok([branch(0), branch(1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn re(v: &[f64]) -> StateVector {
        StateVector::from_real(v).unwrap()
    }

    fn assert_state_eq(a: &StateVector, b: &StateVector, tol: f64) {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.amps().iter().zip(b.amps()) {
            assert!((x - y).norm() < tol, "{a:?} != {b:?}");
        }
    }

    #[test]
    fn hadamard_on_zero() {
        let s = apply(&StateVector::zero(1), &gates::h(), &[0]).unwrap();
        assert_state_eq(&s, &re(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]), 1e-15);
    }

    #[test]
    fn ry_quarter_turn() {
        let s = apply(&StateVector::zero(1), &gates::ry(FRAC_PI_2), &[0]).unwrap();
        assert_state_eq(&s, &StateVector::basis(1, 1), 1e-15);
    }

    #[test]
    fn cnot_flips_target_when_control_set() {
        let s = apply(&StateVector::basis(2, 0b10), &gates::cnot(), &[0, 1]).unwrap();
        assert_state_eq(&s, &StateVector::basis(2, 0b11), 1e-15);
        // reversed control
        let s = apply(&StateVector::basis(2, 0b01), &gates::cnot(), &[1, 0]).unwrap();
        assert_state_eq(&s, &StateVector::basis(2, 0b11), 1e-15);
    }

    #[test]
    fn apply_hadamard_to_leftmost_qubit() {
        let s = apply(&StateVector::zero(2), &gates::h(), &[0]).unwrap();
        let h = FRAC_1_SQRT_2;
        assert_state_eq(&s, &re(&[h, 0.0, h, 0.0]), 1e-15);
    }

    #[test]
    fn hadamard_on_comparison_state_splits_sum_and_difference() {
        let t = [0.6, 0.8];
        let m = [0.8, -0.6];
        let h = FRAC_1_SQRT_2;
        let psi = re(&[h * t[0], h * t[1], h * m[0], h * m[1]]);
        let out = apply(&psi, &gates::h(), &[0]).unwrap();
        let expect = [
            (t[0] + m[0]) / 2.0,
            (t[1] + m[1]) / 2.0,
            (t[0] - m[0]) / 2.0,
            (t[1] - m[1]) / 2.0,
        ];
        for (a, e) in out.amps().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn apply_errors() {
        let s = StateVector::zero(2);
        assert!(matches!(
            apply(&s, &gates::cnot(), &[0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(
            apply(&s, &gates::cnot(), &[1, 1]),
            Err(Error::DuplicateTarget(1))
        );
        assert!(matches!(
            apply(&s, &gates::h(), &[2]),
            Err(Error::QubitOutOfRange { .. })
        ));
    }

    #[test]
    fn tensor_orders_left_register_first() {
        let s = tensor(&StateVector::basis(1, 0), &StateVector::basis(1, 1));
        assert_state_eq(&s, &StateVector::basis(2, 0b01), 1e-15);
        let phi: f64 = 0.3;
        let a = apply(&StateVector::zero(1), &gates::ry(phi), &[0]).unwrap();
        let s = tensor(&a, &StateVector::zero(1));
        assert_state_eq(&s, &re(&[phi.cos(), 0.0, phi.sin(), 0.0]), 1e-15);
    }

    #[test]
    fn inner_products() {
        let z = StateVector::basis(1, 0);
        let o = StateVector::basis(1, 1);
        assert_eq!(inner(&z, &z).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(inner(&z, &o).unwrap(), Complex64::new(0.0, 0.0));
        let v = inner(&re(&[0.6, 0.8]), &re(&[0.8, 0.6])).unwrap();
        assert_abs_diff_eq!(v.re, 0.96, epsilon = 1e-15);
        assert!(inner(&z, &StateVector::zero(2)).is_err());
    }

    #[test]
    fn inner_conjugates_left() {
        let i = Complex64::new(0.0, FRAC_1_SQRT_2);
        let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let a = StateVector::new(vec![r, i]).unwrap();
        let v = inner(&a, &a).unwrap();
        assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn measure_plus_state() {
        let h = FRAC_1_SQRT_2;
        let [b0, b1] = measure_qubit(&re(&[h, h]), 0).unwrap();
        assert_abs_diff_eq!(b0.probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b1.probability, 0.5, epsilon = 1e-15);
        assert_eq!(b1.outcome, 1);
    }

    #[test]
    fn measure_ancilla_after_interference() {
        let t = [0.6, 0.8];
        let m = [1.0, 0.0];
        let h = FRAC_1_SQRT_2;
        let psi = re(&[h * t[0], h * t[1], h * m[0], h * m[1]]);
        let out = apply(&psi, &gates::h(), &[0]).unwrap();
        let [b0, b1] = measure_qubit(&out, 0).unwrap();
        let plus2 = (t[0] + m[0]).powi(2) + (t[1] + m[1]).powi(2);
        assert_abs_diff_eq!(b0.probability, plus2 / 4.0, epsilon = 1e-15);
        let diff = [t[0] - m[0], t[1] - m[1]];
        let dn = (diff[0] * diff[0] + diff[1] * diff[1]).sqrt();
        let post = b1.post_state.unwrap();
        assert_abs_diff_eq!(post.amps()[2].re, diff[0] / dn, epsilon = 1e-14);
        assert_abs_diff_eq!(post.amps()[3].re, diff[1] / dn, epsilon = 1e-14);
        assert_abs_diff_eq!(post.amps()[0].norm(), 0.0);
    }

    #[test]
    fn impossible_branch_has_no_state() {
        let [b0, b1] = measure_qubit(&StateVector::basis(2, 0b10), 0).unwrap();
        assert_eq!(b0.probability, 0.0);
        assert!(b0.post_state.is_none());
        assert_eq!(b1.probability, 1.0);
        assert!(measure_qubit(&StateVector::zero(2), 5).is_err());
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(matches!(
            StateVector::from_real(&[1.0, 1.0]),
            Err(Error::NotNormalized(_))
        ));
        assert!(StateVector::from_real(&[1.0, 0.0, 0.0]).is_err());
        assert!(matches!(
            StateVector::from_real(&[f64::NAN, 0.0]),
            Err(Error::NonFinite)
        ));
        assert!(matches!(
            Unitary::from_real(2, &[1.0, 1.0, 0.0, 1.0]),
            Err(Error::NotUnitary(_))
        ));
    }

    fn arb_state(n: usize) -> impl Strategy<Value = StateVector> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n)
            .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
            .prop_map(|v| {
                StateVector::normalized(v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
                    .unwrap()
            })
    }

    #[derive(Debug, Clone)]
    enum G {
        H(usize),
        X(usize),
        Ry(usize, f64),
        Cnot(usize, usize),
    }

    fn arb_gate() -> impl Strategy<Value = G> {
        prop_oneof![
            (0usize..3).prop_map(G::H),
            (0usize..3).prop_map(G::X),
            (0usize..3, -7.0f64..7.0).prop_map(|(q, t)| G::Ry(q, t)),
            (0usize..3, 1usize..3).prop_map(|(c, d)| G::Cnot(c, (c + d) % 3)),
        ]
    }

    fn run(s: &StateVector, g: &G) -> StateVector {
        match *g {
            G::H(q) => apply(s, &gates::h(), &[q]),
            G::X(q) => apply(s, &gates::x(), &[q]),
            G::Ry(q, t) => apply(s, &gates::ry(t), &[q]),
            G::Cnot(c, t) => apply(s, &gates::cnot(), &[c, t]),
        }
        .unwrap()
    }

    proptest! {
        #[test]
        fn norm_preserved_over_long_sequences(
            s in arb_state(3),
            seq in prop::collection::vec(arb_gate(), 100),
        ) {
            let out = seq.iter().fold(s, |acc, g| run(&acc, g));
            prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn undo_with_adjoint(s in arb_state(3), t in -7.0f64..7.0, q in 0usize..3) {
            let u = gates::ry(t).compose(&gates::h()).unwrap();
            let back = apply(&apply(&s, &u, &[q]).unwrap(), &u.adjoint(), &[q]).unwrap();
            for (a, b) in s.amps().iter().zip(back.amps()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }

        #[test]
        fn measurement_complete(s in arb_state(3), q in 0usize..3) {
            let [b0, b1] = measure_qubit(&s, q).unwrap();
            prop_assert!((b0.probability + b1.probability - 1.0).abs() < 1e-9);
        }

        #[test]
        fn ry_is_additive(a in -7.0f64..7.0, b in -7.0f64..7.0) {
            let prod = gates::ry(a).compose(&gates::ry(b)).unwrap();
            let sum = gates::ry(a + b);
            for r in 0..2 {
                for c in 0..2 {
                    prop_assert!((prod.entry(r, c) - sum.entry(r, c)).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn constructed_gates_are_unitary(t in -7.0f64..7.0) {
            for u in [gates::h(), gates::x(), gates::ry(t), gates::cnot()] {
                prop_assert!(u.unitarity_deviation() < 1e-10);
            }
        }

        #[test]
        fn tensor_norm_is_one(a in arb_state(1), b in arb_state(2)) {
            prop_assert!((tensor(&a, &b).norm_sqr() - 1.0).abs() < 1e-12);
        }
    }
}
