//! Feature preprocessing, amplitude encoding and state-preparation circuits.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::qstate::{self, gates, StateVector};

/// Tolerance used when checking that a preprocessed vector has unit norm.
pub const UNIT_TOL: f64 = 1e-9;
/// Minimum fidelity accepted from circuit synthesis.
pub const SYNTHESIS_TOL: f64 = 1e-10;

/// Real feature vector. Unit norm after preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::UnsupportedLength(0));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(FeatureVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    pub fn dot(&self, other: &FeatureVector) -> Result<f64> {
        check_len(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn normalized(&self) -> Result<FeatureVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector(0));
        }
        Ok(FeatureVector(self.0.iter().map(|v| v / n).collect()))
    }

    pub fn negated(&self) -> FeatureVector {
        FeatureVector(self.0.iter().map(|v| -v).collect())
    }

    /// Polar angle of a 2-feature vector, `atan2(x1, x0)`.
    pub fn angle(&self) -> Result<f64> {
        if self.len() != 2 {
            return Err(Error::UnsupportedLength(self.len()));
        }
        Ok(self.0[1].atan2(self.0[0]))
    }

    pub fn from_angle(phi: f64) -> FeatureVector {
        FeatureVector(vec![phi.cos(), phi.sin()])
    }
}

pub(crate) fn check_len(a: &FeatureVector, b: &FeatureVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preprocessing {
    /// Scale each vector to unit norm.
    Normalize,
    /// Z-score each feature (population statistics), then normalize.
    Standardize,
    /// Rescale each feature linearly onto [-1, 1], then normalize.
    MinMax,
}

impl Preprocessing {
    pub const ALL: [Preprocessing; 3] = [
        Preprocessing::Normalize,
        Preprocessing::Standardize,
        Preprocessing::MinMax,
    ];
}

impl fmt::Display for Preprocessing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preprocessing::Normalize => "normalize",
            Preprocessing::Standardize => "standardize",
            Preprocessing::MinMax => "minmax",
        })
    }
}

impl FromStr for Preprocessing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalize" => Ok(Preprocessing::Normalize),
            "standardize" => Ok(Preprocessing::Standardize),
            "minmax" => Ok(Preprocessing::MinMax),
            other => Err(Error::InvalidArgument(format!(
                "unknown preprocessing mode `{other}`"
            ))),
        }
    }
}

/// Per-feature affine map `(x - shift) / scale` followed by normalization,
/// fitted on a reference collection.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessor {
    mode: Preprocessing,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Preprocessor {
    pub fn fit(raw: &[FeatureVector], mode: Preprocessing) -> Result<Self> {
        let first = raw.first().ok_or(Error::EmptyDataset)?;
        let dim = first.len();
        if let Some(bad) = raw.iter().find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let column = |f: usize| raw.iter().map(move |x| x.values()[f]);
        let (shift, scale) = match mode {
            Preprocessing::Normalize => (vec![0.0; dim], vec![1.0; dim]),
            Preprocessing::Standardize => {
                let n = raw.len() as f64;
                let mut shift = Vec::with_capacity(dim);
                let mut scale = Vec::with_capacity(dim);
                for f in 0..dim {
                    let mean = column(f).sum::<f64>() / n;
                    let var = column(f).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    if var <= 0.0 {
                        return Err(Error::ZeroVariance(f));
                    }
                    shift.push(mean);
                    scale.push(var.sqrt());
                }
                (shift, scale)
            }
            Preprocessing::MinMax => {
                let mut shift = Vec::with_capacity(dim);
                let mut scale = Vec::with_capacity(dim);
                for f in 0..dim {
                    let lo = column(f).fold(f64::INFINITY, f64::min);
                    let hi = column(f).fold(f64::NEG_INFINITY, f64::max);
                    if hi <= lo {
                        return Err(Error::ZeroVariance(f));
                    }
                    shift.push((hi + lo) / 2.0);
                    scale.push((hi - lo) / 2.0);
                }
                (shift, scale)
            }
        };
        Ok(Preprocessor { mode, shift, scale })
    }

    pub fn mode(&self) -> Preprocessing {
        self.mode
    }

    /// Affine step only, before normalization.
    pub fn rescale(&self, x: &FeatureVector) -> Result<FeatureVector> {
        if x.len() != self.shift.len() {
            return Err(Error::DimensionMismatch {
                expected: self.shift.len(),
                found: x.len(),
            });
        }
        Ok(FeatureVector(
            x.values()
                .iter()
                .zip(self.shift.iter().zip(&self.scale))
                .map(|(v, (s, k))| (v - s) / k)
                .collect(),
        ))
    }

    pub fn transform(&self, x: &FeatureVector) -> Result<FeatureVector> {
        self.rescale(x)?.normalized()
    }
}

/// Fits `mode` on `raw` and maps every vector to unit norm.
pub fn preprocess(raw: &[FeatureVector], mode: Preprocessing) -> Result<Vec<FeatureVector>> {
    let p = Preprocessor::fit(raw, mode)?;
    raw.iter()
        .enumerate()
        .map(|(i, x)| {
            p.transform(x).map_err(|e| match e {
                Error::ZeroVector(_) => Error::ZeroVector(i),
                other => other,
            })
        })
        .collect()
}

/// Amplitude encoding: component `j` becomes the amplitude of `|j>`.
pub fn encode(x: &FeatureVector) -> Result<StateVector> {
    if !x.len().is_power_of_two() || x.len() < 2 {
        return Err(Error::UnsupportedLength(x.len()));
    }
    if !x.is_unit() {
        return Err(Error::NotNormalized(x.norm().powi(2)));
    }
    StateVector::from_real(x.values())
}

/// `(|0>|test> + |1>|sample>)/sqrt(2)`, ancilla leftmost.
pub fn comparison_state(test: &FeatureVector, sample: &FeatureVector) -> Result<StateVector> {
    check_len(test, sample)?;
    let t = encode(test)?;
    let s = encode(sample)?;
    let amps = t
        .amps()
        .iter()
        .chain(s.amps())
        .map(|a| a * FRAC_1_SQRT_2)
        .collect();
    StateVector::new(amps)
}

/// Comparison state after the ancilla Hadamard; the state that is measured.
pub fn interfered_state(test: &FeatureVector, sample: &FeatureVector) -> Result<StateVector> {
    qstate::apply(&comparison_state(test, sample)?, &gates::h(), &[0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateKind {
    H,
    X,
    Ry(f64),
    Cnot,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
}

impl Gate {
    pub fn h(target: usize) -> Self {
        Gate {
            kind: GateKind::H,
            target,
            control: None,
        }
    }

    pub fn x(target: usize) -> Self {
        Gate {
            kind: GateKind::X,
            target,
            control: None,
        }
    }

    pub fn ry(theta: f64, target: usize) -> Self {
        Gate {
            kind: GateKind::Ry(theta),
            target,
            control: None,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GateCensus {
    pub hadamards: usize,
    pub rotations: usize,
    pub cnots: usize,
    pub paulis: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Circuit {
            num_qubits,
            gates: Vec::new(),
        }
    }

    pub fn push(&mut self, gate: Gate) -> &mut Self {
        self.gates.push(gate);
        self
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// The circuit with its last gate removed.
    pub fn without_last(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            gates: self.gates[..self.gates.len().saturating_sub(1)].to_vec(),
        }
    }

    pub fn census(&self) -> GateCensus {
        let mut c = GateCensus::default();
        for g in &self.gates {
            match g.kind {
                GateKind::H => c.hadamards += 1,
                GateKind::X => c.paulis += 1,
                GateKind::Ry(_) => c.rotations += 1,
                GateKind::Cnot => c.cnots += 1,
            }
        }
        c
    }

    pub fn run(&self, input: &StateVector) -> Result<StateVector> {
        self.gates.iter().try_fold(input.clone(), |s, g| match g.kind {
            GateKind::H => qstate::apply(&s, &gates::h(), &[g.target]),
            GateKind::X => qstate::apply(&s, &gates::x(), &[g.target]),
            GateKind::Ry(t) => qstate::apply(&s, &gates::ry(t), &[g.target]),
            GateKind::Cnot => {
                let c = g.control.ok_or_else(|| {
                    Error::InvalidArgument("CNOT without control qubit".into())
                })?;
                qstate::apply(&s, &gates::cnot(), &[c, g.target])
            }
        })
    }

    pub fn run_from_zero(&self) -> Result<StateVector> {
        self.run(&StateVector::zero(self.num_qubits))
    }

    /// `|<target|C|0...0>|`.
    pub fn fidelity_to(&self, target: &StateVector) -> Result<f64> {
        target.overlap(&self.run_from_zero()?)
    }
}

/// Rotation angles of the two-feature preparation circuit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrepAngles {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl PrepAngles {
    pub fn new(phi_test: f64, phi_m: f64) -> Self {
        PrepAngles {
            alpha1: FRAC_PI_4 + (phi_test - phi_m) / 2.0,
            alpha2: -FRAC_PI_4 + (phi_test + phi_m) / 2.0,
        }
    }
}

/// Two-qubit circuit (ancilla 0, feature 1) whose output is the interfered
/// comparison state for `cos(phi)|0> + sin(phi)|1>` test and sample states.
/// Dropping the final Hadamard leaves the comparison state itself.
pub fn prep_circuit_2f(phi_test: f64, phi_m: f64) -> Circuit {
    let PrepAngles { alpha1, alpha2 } = PrepAngles::new(phi_test, phi_m);
    let mut c = Circuit::new(2);
    c.push(Gate::ry(alpha1, 1))
        .push(Gate::h(0))
        .push(Gate::cnot(0, 1))
        .push(Gate::ry(alpha2, 1))
        .push(Gate::h(0));
    c
}

// The last feature qubit sees Ry(t4) X^a Ry(t3) X^b Ry(t2) X^a Ry(t1)|0> in
// branch (a, b). Using X Ry(t)|0> = Ry(pi/2 - t)|0>, its polar angle is
//   (0,0): t1+t2+t3+t4          (1,0): t1-t2-t3+t4
//   (0,1): pi/2-t1-t2+t3+t4     (1,1): pi/2-t1+t2-t3+t4
// The coefficient rows are mutually orthogonal with squared norm 4, so the
// inverse is the transpose over 4.
fn solve_branch_angles(beta: [[f64; 2]; 2]) -> [f64; 4] {
    let e = [
        beta[0][0],
        beta[1][0],
        beta[0][1] - FRAC_PI_2,
        beta[1][1] - FRAC_PI_2,
    ];
    const ROWS: [[f64; 4]; 4] = [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0, 1.0],
        [-1.0, -1.0, 1.0, 1.0],
        [-1.0, 1.0, -1.0, 1.0],
    ];
    let mut theta = [0.0; 4];
    for (k, t) in theta.iter_mut().enumerate() {
        *t = (0..4).map(|r| ROWS[r][k] * e[r]).sum::<f64>() / 4.0;
    }
    theta
}

fn half_angles(x: &FeatureVector) -> ([f64; 2], f64) {
    let v = x.values();
    let lo = v[0].hypot(v[1]);
    let hi = v[2].hypot(v[3]);
    ([v[1].atan2(v[0]), v[3].atan2(v[2])], hi.atan2(lo))
}

fn check_four(test: &FeatureVector, sample: &FeatureVector) -> Result<()> {
    check_len(test, sample)?;
    if test.len() != 4 {
        return Err(Error::UnsupportedLength(test.len()));
    }
    for x in [test, sample] {
        if !x.is_unit() {
            return Err(Error::NotNormalized(x.norm().powi(2)));
        }
    }
    Ok(())
}

fn push_multiplexed_tail(c: &mut Circuit, theta: [f64; 4]) {
    c.push(Gate::ry(theta[0], 2))
        .push(Gate::cnot(0, 2))
        .push(Gate::ry(theta[1], 2))
        .push(Gate::cnot(1, 2))
        .push(Gate::ry(theta[2], 2))
        .push(Gate::cnot(0, 2))
        .push(Gate::ry(theta[3], 2))
        .push(Gate::h(0));
}

fn verified(c: Circuit, test: &FeatureVector, sample: &FeatureVector) -> Result<Circuit> {
    let target = comparison_state(test, sample)?;
    let fidelity = c.without_last().fidelity_to(&target)?;
    if fidelity < 1.0 - SYNTHESIS_TOL {
        return Err(Error::Synthesis {
            fidelity,
            residual: 1.0 - fidelity,
        });
    }
    Ok(c)
}

/// Three-qubit preparation circuit in the fixed four-rotation, three-CNOT
/// template (ancilla 0, feature qubits 1 and 2).
///
/// The middle qubit only receives a Hadamard, so the template reaches a
/// target only when `|(x0, x1)| = |(x2, x3)|` for both vectors. Other inputs
/// fail with [`Error::Synthesis`] carrying the achieved fidelity; use
/// [`prep_circuit_4f_general`] for those.
pub fn prep_circuit_4f(test: &FeatureVector, sample: &FeatureVector) -> Result<Circuit> {
    check_four(test, sample)?;
    let (bt, _) = half_angles(test);
    let (bs, _) = half_angles(sample);
    let theta = solve_branch_angles([bt, bs]);
    let mut c = Circuit::new(3);
    c.push(Gate::h(0)).push(Gate::h(1));
    push_multiplexed_tail(&mut c, theta);
    verified(c, test, sample)
}

/// Exact preparation for any real unit pair: the template with the middle
/// Hadamard replaced by `Ry(u)`, `CNOT(0 -> 1)`, `Ry(v)`.
pub fn prep_circuit_4f_general(test: &FeatureVector, sample: &FeatureVector) -> Result<Circuit> {
    check_four(test, sample)?;
    let (bt, gt) = half_angles(test);
    let (bs, gs) = half_angles(sample);
    // branch a=0 reaches u+v, branch a=1 reaches pi/2-u+v
    let v = (gt + gs - FRAC_PI_2) / 2.0;
    let u = gt - v;
    let theta = solve_branch_angles([bt, bs]);
    let mut c = Circuit::new(3);
    c.push(Gate::h(0))
        .push(Gate::ry(u, 1))
        .push(Gate::cnot(0, 1))
        .push(Gate::ry(v, 1));
    push_multiplexed_tail(&mut c, theta);
    verified(c, test, sample)
}

/// Preparation circuit for any supported feature length; four-feature
/// inputs use the general construction.
pub fn prep_circuit(test: &FeatureVector, sample: &FeatureVector) -> Result<Circuit> {
    check_len(test, sample)?;
    match test.len() {
        2 => verified(
            prep_circuit_2f(test.angle()?, sample.angle()?),
            test,
            sample,
        ),
        4 => prep_circuit_4f_general(test, sample),
        n => Err(Error::UnsupportedLength(n)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelVote {
    Label(i8),
    Tie,
}

/// Classical kernel classifier `sgn sum_i y_i (1 - |x_i - x|^2 / 4M)`.
pub fn kernel_classify(test: &FeatureVector, train: &[(FeatureVector, i8)]) -> Result<KernelVote> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let m = train.len() as f64;
    let mut score = 0.0;
    for (x, y) in train {
        if *y != 1 && *y != -1 {
            return Err(Error::InvalidArgument(format!("label {y} is not +1 or -1")));
        }
        check_len(test, x)?;
        let d2: f64 = x
            .values()
            .iter()
            .zip(test.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        score += f64::from(*y) * (1.0 - d2 / (4.0 * m));
    }
    Ok(if score > 0.0 {
        KernelVote::Label(1)
    } else if score < 0.0 {
        KernelVote::Label(-1)
    } else {
        KernelVote::Tie
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_only() {
        let out = preprocess(&[fv(&[3.0, 4.0])], Preprocessing::Normalize).unwrap();
        assert_abs_diff_eq!(out[0].values()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(out[0].values()[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn standardize_symmetric_pair() {
        let raw = [fv(&[1.0, 5.0]), fv(&[-1.0, 3.0])];
        let p = Preprocessor::fit(&raw, Preprocessing::Standardize).unwrap();
        assert_eq!(p.rescale(&raw[0]).unwrap().values()[0], 1.0);
        assert_eq!(p.rescale(&raw[1]).unwrap().values()[0], -1.0);
        for x in preprocess(&raw, Preprocessing::Standardize).unwrap() {
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn minmax_maps_onto_unit_interval() {
        let raw = [fv(&[0.0, 10.0]), fv(&[2.0, 30.0]), fv(&[4.0, 20.0])];
        let p = Preprocessor::fit(&raw, Preprocessing::MinMax).unwrap();
        assert_eq!(p.rescale(&raw[0]).unwrap().values(), &[-1.0, -1.0]);
        assert_eq!(p.rescale(&raw[1]).unwrap().values(), &[0.0, 1.0]);
        assert_eq!(p.rescale(&raw[2]).unwrap().values(), &[1.0, 0.0]);
    }

    #[test]
    fn preprocessing_errors() {
        assert_eq!(
            preprocess(&[fv(&[1.0, 1.0]), fv(&[0.0, 0.0])], Preprocessing::Normalize),
            Err(Error::ZeroVector(1))
        );
        assert_eq!(
            preprocess(&[fv(&[1.0, 0.0]), fv(&[-1.0, 0.0])], Preprocessing::Standardize),
            Err(Error::ZeroVariance(1))
        );
        assert_eq!(
            preprocess(&[fv(&[1.0, 2.0]), fv(&[1.0, 3.0])], Preprocessing::MinMax),
            Err(Error::ZeroVariance(0))
        );
        // standardized point at the mean
        assert_eq!(
            preprocess(
                &[fv(&[1.0, 1.0]), fv(&[2.0, 2.0]), fv(&[3.0, 3.0])],
                Preprocessing::Standardize
            ),
            Err(Error::ZeroVector(1))
        );
        assert!("zscore".parse::<Preprocessing>().is_err());
        for m in Preprocessing::ALL {
            assert_eq!(m.to_string().parse::<Preprocessing>().unwrap(), m);
        }
    }

    #[test]
    fn encode_examples() {
        let s = encode(&fv(&[0.6, 0.8])).unwrap();
        assert_eq!(s.num_qubits(), 1);
        assert_eq!(s.real_parts(), vec![0.6, 0.8]);
        let s = encode(&fv(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(s, StateVector::zero(2));
        let s = encode(&fv(&[0.5; 4])).unwrap();
        assert!(s.amps().iter().all(|a| (a.re - 0.5).abs() < 1e-15));
        assert!(matches!(encode(&fv(&[1.0, 1.0])), Err(Error::NotNormalized(_))));
        assert!(matches!(
            encode(&fv(&[1.0, 0.0, 0.0])),
            Err(Error::UnsupportedLength(3))
        ));
    }

    #[test]
    fn comparison_state_examples() {
        let h = FRAC_1_SQRT_2;
        let z = fv(&[1.0, 0.0]);
        let o = fv(&[0.0, 1.0]);
        let s = comparison_state(&z, &z).unwrap();
        assert_eq!(s.real_parts(), vec![h, 0.0, h, 0.0]);
        let s = comparison_state(&z, &o).unwrap();
        assert_eq!(s.real_parts(), vec![h, 0.0, 0.0, h]);
        let [b0, b1] = qstate::measure_qubit(&s, 0).unwrap();
        assert_abs_diff_eq!(b0.probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b1.probability, 0.5, epsilon = 1e-15);
        assert!(comparison_state(&z, &fv(&[1.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn two_feature_angles_at_origin() {
        let a = PrepAngles::new(0.0, 0.0);
        assert_eq!(a.alpha1, FRAC_PI_4);
        assert_eq!(a.alpha2, -FRAC_PI_4);
        let c = prep_circuit_2f(0.0, 0.0);
        assert_eq!(
            c.gates().iter().map(|g| g.kind).collect::<Vec<_>>(),
            vec![
                GateKind::Ry(FRAC_PI_4),
                GateKind::H,
                GateKind::Cnot,
                GateKind::Ry(-FRAC_PI_4),
                GateKind::H
            ]
        );
    }

    #[test]
    fn equal_angles_give_product_state() {
        let phi: f64 = 0.7;
        let out = prep_circuit_2f(phi, phi).without_last().run_from_zero().unwrap();
        let h = FRAC_1_SQRT_2;
        let expect = [h * phi.cos(), h * phi.sin(), h * phi.cos(), h * phi.sin()];
        for (a, e) in out.amps().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn four_feature_basis_pair() {
        let e0 = fv(&[1.0, 0.0, 0.0, 0.0]);
        let c = prep_circuit_4f_general(&e0, &e0).unwrap();
        let out = c.without_last().run_from_zero().unwrap();
        let h = FRAC_1_SQRT_2;
        let expect = [h, 0.0, 0.0, 0.0, h, 0.0, 0.0, 0.0];
        for (a, e) in out.amps().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-12);
        }
        // |00> has all weight in the low half: the template cannot reach it
        match prep_circuit_4f(&e0, &e0) {
            Err(Error::Synthesis { fidelity, .. }) => {
                assert_abs_diff_eq!(fidelity, FRAC_1_SQRT_2, epsilon = 1e-12)
            }
            other => panic!("expected synthesis failure, got {other:?}"),
        }
    }

    #[test]
    fn template_census() {
        let h = 0.5;
        let x = fv(&[h, h, h, h]);
        let c = prep_circuit_4f(&x, &x).unwrap();
        assert_eq!(
            c.census(),
            GateCensus {
                hadamards: 3,
                rotations: 4,
                cnots: 3,
                paulis: 0
            }
        );
        let rot_targets: Vec<_> = c
            .gates()
            .iter()
            .filter(|g| matches!(g.kind, GateKind::Ry(_)))
            .map(|g| g.target)
            .collect();
        assert_eq!(rot_targets, vec![2; 4]);
    }

    #[test]
    fn kernel_examples() {
        let train = [(fv(&[1.0, 0.0]), 1)];
        assert_eq!(
            kernel_classify(&fv(&[1.0, 0.0]), &train).unwrap(),
            KernelVote::Label(1)
        );
        let train = [(fv(&[1.0, 0.0]), 1), (fv(&[0.0, 1.0]), -1)];
        assert_eq!(
            kernel_classify(&fv(&[0.6, 0.8]), &train).unwrap(),
            KernelVote::Label(-1)
        );
        let train = [(fv(&[0.0, 1.0]), 1), (fv(&[0.0, -1.0]), -1)];
        assert_eq!(
            kernel_classify(&fv(&[1.0, 0.0]), &train).unwrap(),
            KernelVote::Tie
        );
        assert_eq!(
            kernel_classify(&fv(&[1.0, 0.0]), &[]),
            Err(Error::EmptyTrainingSet)
        );
        assert!(kernel_classify(&fv(&[1.0, 0.0]), &[(fv(&[1.0, 0.0]), 2)]).is_err());
    }

    fn unit4() -> impl Strategy<Value = FeatureVector> {
        prop::collection::vec(-1.0f64..1.0, 4)
            .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-4)
            .prop_map(|v| FeatureVector::new(v).unwrap().normalized().unwrap())
    }

    /// Unit vectors whose two halves carry equal weight.
    fn balanced4() -> impl Strategy<Value = FeatureVector> {
        (-7.0f64..7.0, -7.0f64..7.0).prop_map(|(a, b)| {
            let h = FRAC_1_SQRT_2;
            fv(&[h * a.cos(), h * a.sin(), h * b.cos(), h * b.sin()])
        })
    }

    proptest! {
        #[test]
        fn angle_identities(phi in -7.0f64..7.0, phi_m in -7.0f64..7.0) {
            let a = PrepAngles::new(phi, phi_m);
            prop_assert!((a.alpha1 + a.alpha2 - phi).abs() < 1e-12);
            prop_assert!((FRAC_PI_2 - a.alpha1 + a.alpha2 - phi_m).abs() < 1e-12);
        }

        #[test]
        fn two_feature_circuit_matches_direct_state(phi in -7.0f64..7.0, phi_m in -7.0f64..7.0) {
            let t = FeatureVector::from_angle(phi);
            let s = FeatureVector::from_angle(phi_m);
            let c = prep_circuit_2f(phi, phi_m);
            prop_assert!(c.fidelity_to(&interfered_state(&t, &s).unwrap()).unwrap() >= 1.0 - 1e-10);
            let pre = c.without_last();
            prop_assert!(pre.fidelity_to(&comparison_state(&t, &s).unwrap()).unwrap() >= 1.0 - 1e-10);
        }

        #[test]
        fn general_four_feature_circuit(t in unit4(), s in unit4()) {
            let c = prep_circuit_4f_general(&t, &s).unwrap();
            prop_assert!(c.fidelity_to(&interfered_state(&t, &s).unwrap()).unwrap() >= 1.0 - 1e-10);
        }

        #[test]
        fn template_reaches_balanced_targets(t in balanced4(), s in balanced4()) {
            let c = prep_circuit_4f(&t, &s).unwrap();
            prop_assert!(c.fidelity_to(&interfered_state(&t, &s).unwrap()).unwrap() >= 1.0 - 1e-10);
        }

        #[test]
        fn encoding_round_trip(t in unit4()) {
            prop_assert_eq!(encode(&t).unwrap().real_parts(), t.values().to_vec());
        }
    }
}
