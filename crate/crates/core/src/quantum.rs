//! Trine states, the trine POVM and two-qubit polarization states.
//!
//! Qubits are written in the (H, V) polarization basis, two-qubit operators
//! in the product basis ordered (HH, HV, VH, VV) with Alice's photon first.

use std::fmt;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub type ComplexAmplitude = Complex64;

/// Tolerance for algebraic identities (normalization, hermiticity, traces).
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Tolerance on the smallest eigenvalue when checking positivity.
pub const PSD_TOL: f64 = 1e-10;

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Index of a trine state, POVM element or detector. Always 1, 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TrineIndex(u8);

impl TrineIndex {
    pub const ONE: TrineIndex = TrineIndex(1);
    pub const TWO: TrineIndex = TrineIndex(2);
    pub const THREE: TrineIndex = TrineIndex(3);
    pub const ALL: [TrineIndex; 3] = [Self::ONE, Self::TWO, Self::THREE];

    pub fn new(value: u8) -> Result<Self> {
        match value {
            1..=3 => Ok(TrineIndex(value)),
            _ => Err(domain(format!("trine index {value} not in 1..=3"))),
        }
    }

    /// Builds from a zero-based position, reduced mod 3.
    pub fn from_zero_based(k: usize) -> Self {
        TrineIndex((k % 3) as u8 + 1)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn zero_based(self) -> usize {
        usize::from(self.0 - 1)
    }

    /// Cyclic successor: 1 → 2 → 3 → 1.
    pub fn next(self) -> Self {
        Self::from_zero_based(self.zero_based() + 1)
    }

    /// Cyclic predecessor: 1 → 3 → 2 → 1.
    pub fn prev(self) -> Self {
        Self::from_zero_based(self.zero_based() + 2)
    }
}

impl TryFrom<u8> for TrineIndex {
    type Error = crate::Error;

    fn try_from(value: u8) -> Result<Self> {
        TrineIndex::new(value)
    }
}

impl From<TrineIndex> for u8 {
    fn from(i: TrineIndex) -> u8 {
        i.0
    }
}

impl fmt::Display for TrineIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Normalized single-qubit pure state `alpha|H> + beta|V>`.
///
/// Stored in canonical phase: the first nonzero coefficient is real and
/// nonnegative, so two states equal up to global phase compare equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureQubit {
    alpha: ComplexAmplitude,
    beta: ComplexAmplitude,
}

impl PureQubit {
    pub fn new(alpha: ComplexAmplitude, beta: ComplexAmplitude) -> Result<Self> {
        if !(alpha.re.is_finite() && alpha.im.is_finite() && beta.re.is_finite() && beta.im.is_finite())
        {
            return Err(domain("qubit amplitude is not finite"));
        }
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(domain(format!("qubit not normalized: |a|^2+|b|^2 = {norm}")));
        }
        let lead = if alpha.norm() > 0.0 { alpha } else { beta };
        let phase = if lead.norm() > 0.0 { lead.conj() / lead.norm() } else { c(1.0) };
        Ok(PureQubit { alpha: alpha * phase, beta: beta * phase })
    }

    pub fn from_real(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(c(alpha), c(beta))
    }

    pub fn horizontal() -> Self {
        PureQubit { alpha: c(1.0), beta: c(0.0) }
    }

    pub fn vertical() -> Self {
        PureQubit { alpha: c(0.0), beta: c(1.0) }
    }

    pub fn alpha(&self) -> ComplexAmplitude {
        self.alpha
    }

    pub fn beta(&self) -> ComplexAmplitude {
        self.beta
    }

    pub fn to_vector(&self) -> Vector2<Complex64> {
        Vector2::new(self.alpha, self.beta)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureQubit) -> Complex64 {
        self.alpha.conj() * other.alpha + self.beta.conj() * other.beta
    }

    /// Bloch vector `(x, y, z)` with |H> at z = +1.
    pub fn bloch(&self) -> [f64; 3] {
        let ab = self.alpha.conj() * self.beta;
        [
            2.0 * ab.re,
            2.0 * ab.im,
            self.alpha.norm_sqr() - self.beta.norm_sqr(),
        ]
    }

    fn projector(&self) -> Matrix2<Complex64> {
        let v = self.to_vector();
        v * v.adjoint()
    }
}

fn hermitian_defect<const N: usize>(m: &nalgebra::SMatrix<Complex64, N, N>) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// One element of a single-qubit POVM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PovmElement(Matrix2<Complex64>);

impl PovmElement {
    pub fn new(m: Matrix2<Complex64>) -> Result<Self> {
        if hermitian_defect(&m) > ALGEBRAIC_TOL {
            return Err(domain("POVM element is not Hermitian"));
        }
        let eig = m.symmetric_eigenvalues();
        for &e in eig.iter() {
            if !(-PSD_TOL..=1.0 + ALGEBRAIC_TOL).contains(&e) {
                return Err(domain(format!("POVM eigenvalue {e} outside [0, 1]")));
            }
        }
        Ok(PovmElement(m))
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.0
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let e = self.0.symmetric_eigenvalues();
        let (lo, hi) = if e[0] <= e[1] { (e[0], e[1]) } else { (e[1], e[0]) };
        [lo, hi]
    }
}

/// Two-qubit density matrix in the (HH, HV, VH, VV) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitDensity(Matrix4<Complex64>);

impl TwoQubitDensity {
    pub fn new(m: Matrix4<Complex64>) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(domain("density matrix entry is not finite"));
        }
        if hermitian_defect(&m) > ALGEBRAIC_TOL {
            return Err(domain("density matrix is not Hermitian"));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > ALGEBRAIC_TOL || tr.im.abs() > ALGEBRAIC_TOL {
            return Err(domain(format!("density matrix trace {tr} != 1")));
        }
        let min_eig = m.symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL {
            return Err(domain(format!("density matrix has eigenvalue {min_eig}")));
        }
        Ok(TwoQubitDensity(m))
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.symmetric_eigenvalues().min()
    }

    /// `Tr(op · rho)`, real part.
    pub fn expectation(&self, op: &Matrix4<Complex64>) -> f64 {
        (op * self.0).trace().re
    }
}

/// The three trine states `psi_1 = |H>`, `psi_2 = |H>/2 + (√3/2)|V>`,
/// `psi_3 = |H>/2 − (√3/2)|V>`.
pub fn trine_states() -> [PureQubit; 3] {
    [
        PureQubit::horizontal(),
        PureQubit { alpha: c(0.5), beta: c(SQRT3_2) },
        PureQubit { alpha: c(0.5), beta: c(-SQRT3_2) },
    ]
}

/// States orthogonal to the trine states; `Pi_i` projects onto `perp_i`.
pub fn trine_perp_states() -> [PureQubit; 3] {
    [
        PureQubit::vertical(),
        PureQubit { alpha: c(SQRT3_2), beta: c(-0.5) },
        PureQubit { alpha: c(SQRT3_2), beta: c(0.5) },
    ]
}

/// `Pi_i = (2/3) |perp_i><perp_i|`.
pub fn trine_povm() -> [PovmElement; 3] {
    trine_perp_states().map(|s| PovmElement(s.projector() * c(2.0 / 3.0)))
}

/// Born-rule probability `<phi|Pi|phi>`.
pub fn born_single(state: &PureQubit, element: &PovmElement) -> f64 {
    let v = state.to_vector();
    let p = (v.adjoint() * element.matrix() * v)[(0, 0)].re;
    p.clamp(0.0, 1.0)
}

/// Detector click probabilities of the passive optical receiver: a partially
/// polarizing splitter (full H transmission, 2/3 V reflection to detector 1),
/// then a half-wave plate at 22.5° and a PBS onto detectors 2 and 3.
pub fn povm_route_probabilities(state: &PureQubit) -> [f64; 3] {
    let (a, b) = (state.alpha(), state.beta());
    let s = 1.0 / 3f64.sqrt();
    [
        2.0 / 3.0 * b.norm_sqr(),
        0.5 * (a - b * s).norm_sqr(),
        0.5 * (a + b * s).norm_sqr(),
    ]
}

/// Density matrix of `|Psi-> = (|HV> − |VH>)/√2`.
pub fn singlet() -> TwoQubitDensity {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let psi = Vector4::new(c(0.0), c(r), c(-r), c(0.0));
    TwoQubitDensity(psi * psi.adjoint())
}

/// `v·singlet + (1 − v)·I/4`.
pub fn werner(v: f64) -> Result<TwoQubitDensity> {
    if !(0.0..=1.0).contains(&v) {
        return Err(domain(format!("Werner visibility {v} not in [0, 1]")));
    }
    let m = singlet().0 * c(v) + Matrix4::identity() * c((1.0 - v) / 4.0);
    Ok(TwoQubitDensity(m))
}

/// Joint outcome probabilities of the trine POVM applied on both sides.
///
/// Cells are laid out with rows for Bob's detector and columns for Alice's,
/// the orientation of the measured coincidence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    /// `cells[bob - 1][alice - 1]`.
    pub cells: [[f64; 3]; 3],
}

impl JointDistribution {
    pub fn uniform() -> Self {
        JointDistribution { cells: [[1.0 / 9.0; 3]; 3] }
    }

    pub fn get(&self, alice: TrineIndex, bob: TrineIndex) -> f64 {
        self.cells[bob.zero_based()][alice.zero_based()]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }

    /// Probability of a diagonal (Ai, Bi) event, i.e. a bit error.
    pub fn error_fraction(&self) -> f64 {
        (0..3).map(|k| self.cells[k][k]).sum()
    }

    /// QBER implied by the distribution: diagonal events are always conclusive
    /// errors, off-diagonal events are conclusive-and-correct half the time.
    pub fn implied_qber(&self) -> f64 {
        let pe = self.error_fraction() / self.total();
        pe / (pe + (1.0 - pe) / 2.0)
    }

    /// Relabels i → i+1 on both sides.
    pub fn cyclic_shift(&self) -> Self {
        let mut out = [[0.0; 3]; 3];
        for (b, row) in self.cells.iter().enumerate() {
            for (a, &p) in row.iter().enumerate() {
                out[(b + 1) % 3][(a + 1) % 3] = p;
            }
        }
        JointDistribution { cells: out }
    }

    /// `(1 − w)·self + w·other`.
    pub fn mix(&self, other: &JointDistribution, w: f64) -> Self {
        let mut out = self.cells;
        for (row, orow) in out.iter_mut().zip(other.cells.iter()) {
            for (p, q) in row.iter_mut().zip(orow.iter()) {
                *p = (1.0 - w) * *p + w * q;
            }
        }
        JointDistribution { cells: out }
    }

    pub fn alice_marginal(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for row in &self.cells {
            for (a, &p) in row.iter().enumerate() {
                m[a] += p;
            }
        }
        m
    }

    pub fn bob_marginal(&self) -> [f64; 3] {
        self.cells.map(|row| row.iter().sum())
    }

    /// Checks entries are finite, nonnegative and sum to one within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.cells.iter().flatten().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(domain("distribution has a negative or non-finite entry"));
        }
        let t = self.total();
        if (t - 1.0).abs() > tol {
            return Err(domain(format!("distribution sums to {t}, not 1")));
        }
        Ok(())
    }
}

/// `P(i, j) = Tr[(Pi_i ⊗ Pi_j) rho]`, Alice on the first tensor factor.
pub fn joint_distribution(rho: &TwoQubitDensity) -> JointDistribution {
    let povm = trine_povm();
    let mut cells = [[0.0; 3]; 3];
    for (a, pa) in povm.iter().enumerate() {
        for (b, pb) in povm.iter().enumerate() {
            let op = pa.matrix().kronecker(pb.matrix());
            cells[b][a] = rho.expectation(&op).max(0.0);
        }
    }
    JointDistribution { cells }
}

/// Visibility `v` for which the Werner state yields QBER `q`
/// (inverse of `Q = 2(1 − v)/(4 − v)`).
pub fn visibility_for_qber(q: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&q) {
        return Err(domain(format!("QBER {q} not reachable by a Werner state")));
    }
    Ok((2.0 - 4.0 * q) / (2.0 - q))
}

/// `Q = 2(1 − v)/(4 − v)`.
pub fn werner_qber(v: f64) -> f64 {
    2.0 * (1.0 - v) / (4.0 - v)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < TOL
    }

    /// Brute-force singlet amplitude onto `perp_i ⊗ perp_j`, written out
    /// component by component without any matrix machinery.
    fn singlet_cell_oracle(a: usize, b: usize) -> f64 {
        let perp = trine_perp_states();
        let (x, y) = (perp[a], perp[b]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // <x ⊗ y | Psi-> = (x_H* y_V* − x_V* y_H*)/√2
        let amp = (x.alpha().conj() * y.beta().conj() - x.beta().conj() * y.alpha().conj()) * r;
        (2.0f64 / 3.0).powi(2) * amp.norm_sqr()
    }

    #[test]
    fn trine_state_values() {
        let s = trine_states();
        assert_eq!(s[0].alpha(), c(1.0));
        assert_eq!(s[0].beta(), c(0.0));
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(close(s[i].inner(&s[j]).norm(), 0.5));
                }
            }
        }
    }

    #[test]
    fn trine_bloch_vectors_form_equilateral_triangle() {
        let v = trine_states().map(|s| s.bloch());
        for b in &v {
            assert!(b[1].abs() < TOL, "not in the X-Z plane");
            assert!(close(b[0] * b[0] + b[2] * b[2], 1.0));
        }
        for i in 0..3 {
            let j = (i + 1) % 3;
            let dot = v[i][0] * v[j][0] + v[i][2] * v[j][2];
            assert!(close(dot, (120f64).to_radians().cos()));
        }
    }

    #[test]
    fn perp_states_are_orthogonal() {
        let s = trine_states();
        let p = trine_perp_states();
        assert_eq!(p[0].alpha(), c(0.0));
        assert_eq!(p[0].beta(), c(1.0));
        for (i, pi) in p.iter().enumerate() {
            for (j, sj) in s.iter().enumerate() {
                let ov = pi.inner(sj).norm_sqr();
                if i == j {
                    assert!(ov < TOL);
                } else {
                    assert!(close(ov, 0.75));
                }
            }
        }
    }

    #[test]
    fn povm_is_complete_and_scaled_projectors() {
        let povm = trine_povm();
        let sum = povm.iter().fold(Matrix2::zeros(), |acc, e| acc + e.matrix());
        let defect = (sum - Matrix2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(defect < TOL);
        let pi1 = povm[0].matrix();
        assert!(close(pi1[(0, 0)].re, 0.0) && close(pi1[(1, 1)].re, 2.0 / 3.0));
        assert!(pi1[(0, 1)].norm() < TOL);
        for e in &povm {
            let [lo, hi] = e.eigenvalues();
            assert!(lo.abs() < 1e-10 && (hi - 2.0 / 3.0).abs() < 1e-10);
            assert!(PovmElement::new(*e.matrix()).is_ok());
        }
        let s = trine_states();
        for k in 0..3 {
            assert!(born_single(&s[k], &povm[k]) < TOL);
        }
    }

    #[test]
    fn born_examples() {
        let povm = trine_povm();
        assert!(close(born_single(&PureQubit::horizontal(), &povm[0]), 0.0));
        assert!(close(born_single(&PureQubit::vertical(), &povm[0]), 2.0 / 3.0));
        assert!(close(born_single(&PureQubit::horizontal(), &povm[1]), 0.5));
    }

    #[test]
    fn routing_examples() {
        let expect = |s: &PureQubit, p: [f64; 3]| {
            let r = povm_route_probabilities(s);
            for k in 0..3 {
                assert!(close(r[k], p[k]), "{r:?} vs {p:?}");
            }
        };
        expect(&PureQubit::horizontal(), [0.0, 0.5, 0.5]);
        expect(&PureQubit::vertical(), [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]);
        expect(&trine_states()[1], [0.5, 0.0, 0.5]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PureQubit::from_real(1.0, 1.0).is_err());
        assert!(PureQubit::from_real(f64::NAN, 0.0).is_err());
        assert!(TrineIndex::new(0).is_err());
        assert!(TrineIndex::new(4).is_err());
        assert!(werner(1.01).is_err());
        assert!(werner(-0.1).is_err());
        let mut m = Matrix2::<Complex64>::identity();
        m[(0, 0)] = c(1.5);
        assert!(PovmElement::new(m).is_err());
        let mut rho = *singlet().matrix();
        rho[(0, 1)] = c(0.3);
        assert!(TwoQubitDensity::new(rho).is_err());
        let bad = Matrix4::from_diagonal(&Vector4::new(c(1.2), c(-0.2), c(0.0), c(0.0)));
        assert!(TwoQubitDensity::new(bad).is_err());
    }

    #[test]
    fn canonical_phase() {
        let i = Complex64::new(0.0, 1.0);
        let a = PureQubit::new(i * 0.6, i * 0.8).unwrap();
        let b = PureQubit::from_real(0.6, 0.8).unwrap();
        assert!((a.alpha() - b.alpha()).norm() < TOL && (a.beta() - b.beta()).norm() < TOL);
    }

    #[test]
    fn trine_index_cycles() {
        assert_eq!(TrineIndex::ONE.prev(), TrineIndex::THREE);
        assert_eq!(TrineIndex::THREE.next(), TrineIndex::ONE);
        assert_eq!(TrineIndex::TWO.next(), TrineIndex::THREE);
    }

    #[test]
    fn singlet_properties() {
        let rho = singlet();
        assert!(close(rho.trace(), 1.0));
        assert!(close(rho.purity(), 1.0));
        assert!(TwoQubitDensity::new(*rho.matrix()).is_ok());
        let d = joint_distribution(&rho);
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { 0.0 } else { 1.0 / 6.0 };
                assert!(close(d.cells[b][a], expected));
                assert!(close(d.cells[b][a], singlet_cell_oracle(a, b)));
            }
        }
    }

    #[test]
    fn werner_endpoints() {
        assert_eq!(werner(1.0).unwrap(), singlet());
        let mixed = werner(0.0).unwrap();
        for k in 0..4 {
            assert!(close(mixed.matrix()[(k, k)].re, 0.25));
        }
        let d = joint_distribution(&mixed);
        assert!(d.cells.iter().flatten().all(|&p| close(p, 1.0 / 9.0)));
    }

    #[test]
    fn werner_distribution_is_linear() {
        for &v in &[0.0, 0.3, 0.9, 0.97, 0.9772, 1.0] {
            let rho = werner(v).unwrap();
            assert!(TwoQubitDensity::new(*rho.matrix()).is_ok());
            let d = joint_distribution(&rho);
            d.validate(TOL).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    let e = if a == b {
                        (1.0 - v) / 9.0
                    } else {
                        v / 6.0 + (1.0 - v) / 9.0
                    };
                    assert!(close(d.cells[b][a], e));
                }
            }
            let pe = d.error_fraction();
            assert!(close(pe, (1.0 - v) / 3.0));
            assert!(close(d.implied_qber(), werner_qber(v)));
            assert!(close(pe / (pe + (1.0 - pe) / 2.0), 2.0 * (1.0 - v) / (4.0 - v)));
        }
        assert!((werner_qber(0.97) - 0.0198).abs() < 5e-5);
    }

    #[test]
    fn visibility_inverse() {
        for &q in &[0.0, 0.0155, 0.1, 0.5] {
            let v = visibility_for_qber(q).unwrap();
            assert!(close(werner_qber(v), q));
        }
    }

    #[test]
    fn cyclic_symmetry() {
        let d = joint_distribution(&werner(0.8).unwrap());
        let s = d.cyclic_shift();
        for (x, y) in d.cells.iter().flatten().zip(s.cells.iter().flatten()) {
            assert!(close(*x, *y));
        }
    }
}
