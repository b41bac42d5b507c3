//! Jones-calculus elements and two-photon path enumeration for the
//! PBS-based Franson circuit.
//!
//! Each local interferometer is a PBS with two folded arms. The horizontal
//! component is transmitted into the short arm and the vertical component is
//! reflected into the long arm. Both arms return through a quarter-wave plate
//! at 45° twice, so the returning light has its polarization swapped. The
//! short-arm light therefore leaves by reflection and the long-arm light by
//! transmission, into the same output port. A photon that
//! entered H can only take the short path (T) and a photon that entered V only
//! the long one (R), so an `HH + VV` input produces exactly the `TT` and `RR`
//! detection alternatives.

use std::f64::consts::FRAC_PI_4;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::SPEED_OF_LIGHT;

const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("invalid two-photon state: {0}")]
    InvalidState(String),
}

/// H/V components of a single-photon polarization state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarizationVector {
    pub h: Complex64,
    pub v: Complex64,
}

impl PolarizationVector {
    pub const ZERO: Self = Self {
        h: Complex64::new(0.0, 0.0),
        v: Complex64::new(0.0, 0.0),
    };

    pub fn new(h: Complex64, v: Complex64) -> Self {
        Self { h, v }
    }

    pub fn horizontal() -> Self {
        Self::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn vertical() -> Self {
        Self::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }

    /// Linear polarization at `angle` radians from H.
    pub fn linear(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(Complex64::new(c, 0.0), Complex64::new(s, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn is_zero(&self) -> bool {
        self.h == Complex64::new(0.0, 0.0) && self.v == Complex64::new(0.0, 0.0)
    }

    /// Detection amplitude behind a linear analyzer at `angle`.
    pub fn analyzer_amplitude(&self, angle: f64) -> Complex64 {
        let (s, c) = angle.sin_cos();
        self.h * c + self.v * s
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::new(self.h * factor, self.v * factor)
    }
}

/// 2×2 complex Jones matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub [[Complex64; 2]; 2]);

impl JonesMatrix {
    pub fn apply(&self, p: &PolarizationVector) -> PolarizationVector {
        let m = &self.0;
        PolarizationVector::new(m[0][0] * p.h + m[0][1] * p.v, m[1][0] * p.h + m[1][1] * p.v)
    }

    pub fn mul(&self, other: &JonesMatrix) -> JonesMatrix {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        JonesMatrix(out)
    }

    pub fn adjoint(&self) -> JonesMatrix {
        let m = &self.0;
        JonesMatrix([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    /// Linear retarder with fast axis at `angle` and phase retardance `delta`.
    pub fn retarder(angle: f64, delta: f64) -> JonesMatrix {
        let (s, c) = angle.sin_cos();
        let re = |x: f64| Complex64::new(x, 0.0);
        let slow = Complex64::from_polar(1.0, delta);
        // R(-θ) · diag(1, e^{iδ}) · R(θ)
        JonesMatrix([
            [re(c * c) + slow * s * s, (re(1.0) - slow) * c * s],
            [(re(1.0) - slow) * c * s, re(s * s) + slow * c * c],
        ])
    }

    pub fn polarizer(angle: f64) -> JonesMatrix {
        let (s, c) = angle.sin_cos();
        let re = |x: f64| Complex64::new(x, 0.0);
        JonesMatrix([[re(c * c), re(c * s)], [re(c * s), re(s * s)]])
    }
}

/// Optical elements on a single photon's path. Angles are radians from H.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Pbs,
    HalfWavePlate(f64),
    QuarterWavePlate(f64),
    Polarizer(f64),
    /// Free propagation over the given optical path length (m). Only the
    /// arrival time changes; the polarization is untouched.
    DelaySegment(f64),
    PhaseShift(f64),
}

/// Result of sending a polarization state through an [`Element`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transfer {
    Single(PolarizationVector),
    /// PBS output ports.
    Split {
        transmitted: PolarizationVector,
        reflected: PolarizationVector,
    },
}

impl Transfer {
    /// The single output, or `None` for a PBS.
    pub fn single(self) -> Option<PolarizationVector> {
        match self {
            Transfer::Single(p) => Some(p),
            Transfer::Split { .. } => None,
        }
    }
}

impl Element {
    /// Jones matrix of a single-output element; `None` for the PBS.
    pub fn matrix(&self) -> Option<JonesMatrix> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match *self {
            Element::Pbs => None,
            Element::HalfWavePlate(a) => Some(JonesMatrix::retarder(a, std::f64::consts::PI)),
            Element::QuarterWavePlate(a) => {
                Some(JonesMatrix::retarder(a, std::f64::consts::FRAC_PI_2))
            }
            Element::Polarizer(a) => Some(JonesMatrix::polarizer(a)),
            Element::DelaySegment(_) => Some(JonesMatrix([[one, zero], [zero, one]])),
            Element::PhaseShift(phi) => {
                let p = Complex64::from_polar(1.0, phi);
                Some(JonesMatrix([[p, zero], [zero, p]]))
            }
        }
    }

    pub fn transfer(&self, p: &PolarizationVector) -> Transfer {
        match self.matrix() {
            Some(m) => Transfer::Single(m.apply(p)),
            None => Transfer::Split {
                transmitted: PolarizationVector::new(p.h, Complex64::new(0.0, 0.0)),
                reflected: PolarizationVector::new(Complex64::new(0.0, 0.0), p.v),
            },
        }
    }
}

/// Polarization label of one photon in an input term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PolarizationLabel {
    H,
    V,
    /// +45° diagonal.
    D,
    /// -45° antidiagonal.
    A,
}

impl PolarizationLabel {
    pub fn vector(self) -> PolarizationVector {
        match self {
            PolarizationLabel::H => PolarizationVector::horizontal(),
            PolarizationLabel::V => PolarizationVector::vertical(),
            PolarizationLabel::D => PolarizationVector::linear(FRAC_PI_4),
            PolarizationLabel::A => PolarizationVector::linear(-FRAC_PI_4),
        }
    }

    fn is_basis(self) -> bool {
        matches!(self, PolarizationLabel::H | PolarizationLabel::V)
    }
}

/// One coherent term of the state leaving the preparation stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputTerm {
    pub coeff: Complex64,
    pub pol_u: PolarizationLabel,
    pub pol_l: PolarizationLabel,
    /// Source-side arrival offset of the upper photon (s).
    pub offset_u: f64,
    /// Source-side arrival offset of the lower photon (s).
    pub offset_l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonInput {
    terms: Vec<InputTerm>,
}

impl TwoPhotonInput {
    pub fn new(terms: Vec<InputTerm>) -> Result<Self, OpticsError> {
        if terms.is_empty() {
            return Err(OpticsError::InvalidState("no terms".into()));
        }
        let norm: f64 = terms.iter().map(|t| t.coeff.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(OpticsError::InvalidState(format!(
                "sum of |coefficient|² is {norm}, expected 1"
            )));
        }
        if terms
            .iter()
            .any(|t| !(t.offset_u.is_finite() && t.offset_l.is_finite()))
        {
            return Err(OpticsError::InvalidState("non-finite offset".into()));
        }
        Ok(Self { terms })
    }

    /// `(|HH> + |VV>)/√2` with the preparation offset `dx0` expressed as
    /// per-term delays: the lower photon of the HH term and the upper photon
    /// of the VV term both trail by `dx0/c`.
    pub fn entangled(dx0: f64) -> Self {
        let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let lag = dx0 / SPEED_OF_LIGHT;
        Self {
            terms: vec![
                InputTerm {
                    coeff: c,
                    pol_u: PolarizationLabel::H,
                    pol_l: PolarizationLabel::H,
                    offset_u: 0.0,
                    offset_l: lag,
                },
                InputTerm {
                    coeff: c,
                    pol_u: PolarizationLabel::V,
                    pol_l: PolarizationLabel::V,
                    offset_u: lag,
                    offset_l: 0.0,
                },
            ],
        }
    }

    pub fn product(pol_u: PolarizationLabel, pol_l: PolarizationLabel) -> Self {
        Self {
            terms: vec![InputTerm {
                coeff: Complex64::new(1.0, 0.0),
                pol_u,
                pol_l,
                offset_u: 0.0,
                offset_l: 0.0,
            }],
        }
    }

    pub fn terms(&self) -> &[InputTerm] {
        &self.terms
    }
}

/// Long arm of one local interferometer: extra optical path relative to the
/// balanced reference, plus any static phase (e.g. a PZT offset).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LongArm {
    pub length: f64,
    pub phase: f64,
}

impl LongArm {
    pub fn new(length: f64, phase: f64) -> Self {
        Self { length, phase }
    }

    pub fn elements(&self) -> [Element; 2] {
        [
            Element::DelaySegment(self.length),
            Element::PhaseShift(self.phase),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// Transmitted / short path.
    Short,
    /// Roundtrip / long path.
    Long,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Short => "T",
            Branch::Long => "R",
        })
    }
}

/// One two-photon detection alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathAmplitude {
    pub coeff: Complex64,
    /// Interferometer delay of the upper photon (s).
    pub tau_u: f64,
    /// Interferometer delay of the lower photon (s).
    pub tau_l: f64,
    pub pol_u: PolarizationVector,
    pub pol_l: PolarizationVector,
    pub term_offset_u: f64,
    pub term_offset_l: f64,
    pub branch_u: Branch,
    pub branch_l: Branch,
    /// Output port index per side; the PBS circuit only has port 0.
    pub ports: (u8, u8),
    /// Extra optical path of each photon (m).
    pub optical_length_u: f64,
    pub optical_length_l: f64,
}

impl PathAmplitude {
    /// `"TT"`, `"RR"`, ...
    pub fn label(&self) -> String {
        format!("{}{}", self.branch_u, self.branch_l)
    }

    /// Total arrival time of each photon, interferometer plus source offset.
    pub fn arrival_times(&self) -> (f64, f64) {
        (
            self.tau_u + self.term_offset_u,
            self.tau_l + self.term_offset_l,
        )
    }

    /// Propagation phase `k (ΔL_u + ΔL_l)` at a common wavenumber.
    pub fn propagation_phase(&self, wavenumber: f64) -> f64 {
        wavenumber * (self.optical_length_u + self.optical_length_l)
    }

    /// Amplitude-weighted detection probability of this path alone, with
    /// no analyzers in place.
    pub fn weight(&self) -> f64 {
        self.coeff.norm_sqr() * self.pol_u.norm_sqr() * self.pol_l.norm_sqr()
    }

    /// Complex amplitude behind analyzers at `theta_u` and `theta_l`.
    pub fn projected(&self, theta_u: f64, theta_l: f64) -> Complex64 {
        self.coeff * self.pol_u.analyzer_amplitude(theta_u) * self.pol_l.analyzer_amplitude(theta_l)
    }
}

/// Output of one local interferometer for a single photon.
#[derive(Debug, Clone, Copy)]
struct LocalOutput {
    branch: Branch,
    port: u8,
    amplitude: Complex64,
    pol: PolarizationVector,
    length: f64,
}

fn run_elements(elements: &[Element], p: PolarizationVector) -> PolarizationVector {
    elements.iter().fold(p, |acc, e| {
        e.transfer(&acc)
            .single()
            .expect("folded arm elements have a single output")
    })
}

/// Routes one photon through a PBS Michelson-type local interferometer.
fn pbs_local(pol: PolarizationVector, arm: &LongArm) -> Vec<LocalOutput> {
    let quarter = Element::QuarterWavePlate(FRAC_PI_4);
    let (into_short, into_long) = match Element::Pbs.transfer(&pol) {
        Transfer::Split {
            transmitted,
            reflected,
        } => (transmitted, reflected),
        Transfer::Single(_) => unreachable!(),
    };
    let mut out = Vec::with_capacity(2);
    if !into_short.is_zero() {
        let back = run_elements(&[quarter, quarter], into_short);
        if let Transfer::Split { reflected, .. } = Element::Pbs.transfer(&back) {
            out.push(LocalOutput {
                branch: Branch::Short,
                port: 0,
                amplitude: Complex64::new(1.0, 0.0),
                pol: reflected,
                length: 0.0,
            });
        }
    }
    if !into_long.is_zero() {
        let [delay, phase] = arm.elements();
        let back = run_elements(&[delay, quarter, quarter, phase], into_long);
        if let Transfer::Split { transmitted, .. } = Element::Pbs.transfer(&back) {
            out.push(LocalOutput {
                branch: Branch::Long,
                port: 0,
                amplitude: Complex64::new(1.0, 0.0),
                pol: transmitted,
                length: arm.length,
            });
        }
    }
    out
}

/// Routes one photon through an unbalanced Mach-Zehnder built from two
/// symmetric 50:50 splitters; polarization is untouched.
fn nonpolarizing_local(pol: PolarizationVector, arm: &LongArm) -> Vec<LocalOutput> {
    let t = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let r = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    let long_phase = Complex64::from_polar(1.0, arm.phase);
    let mut out = Vec::with_capacity(4);
    for (branch, first, length, extra) in [
        (Branch::Short, t, 0.0, Complex64::new(1.0, 0.0)),
        (Branch::Long, r, arm.length, long_phase),
    ] {
        // Port 0 is reached by transmission from the short arm and by
        // reflection from the long arm; port 1 the other way round.
        let (to0, to1) = match branch {
            Branch::Short => (t, r),
            Branch::Long => (r, t),
        };
        for (port, second) in [(0u8, to0), (1u8, to1)] {
            out.push(LocalOutput {
                branch,
                port,
                amplitude: first * second * extra,
                pol,
                length,
            });
        }
    }
    out
}

fn combine(
    input: &TwoPhotonInput,
    long_arm_u: &LongArm,
    long_arm_l: &LongArm,
    local: fn(PolarizationVector, &LongArm) -> Vec<LocalOutput>,
) -> Vec<PathAmplitude> {
    let mut paths = Vec::new();
    for term in input.terms() {
        let ups = local(term.pol_u.vector(), long_arm_u);
        let lows = local(term.pol_l.vector(), long_arm_l);
        for u in &ups {
            for l in &lows {
                paths.push(PathAmplitude {
                    coeff: term.coeff * u.amplitude * l.amplitude,
                    tau_u: u.length / SPEED_OF_LIGHT,
                    tau_l: l.length / SPEED_OF_LIGHT,
                    pol_u: u.pol,
                    pol_l: l.pol,
                    term_offset_u: term.offset_u,
                    term_offset_l: term.offset_l,
                    branch_u: u.branch,
                    branch_l: l.branch,
                    ports: (u.port, l.port),
                    optical_length_u: u.length,
                    optical_length_l: l.length,
                });
            }
        }
    }
    paths
}

/// Detection alternatives of the PBS-based Franson circuit.
///
/// Only H/V basis labels are accepted, because the PBS routing is what
/// removes the short-long and long-short alternatives.
pub fn enumerate_paths(
    input: &TwoPhotonInput,
    long_arm_u: &LongArm,
    long_arm_l: &LongArm,
) -> Result<Vec<PathAmplitude>, OpticsError> {
    if let Some(t) = input
        .terms()
        .iter()
        .find(|t| !(t.pol_u.is_basis() && t.pol_l.is_basis()))
    {
        return Err(OpticsError::InvalidState(format!(
            "term {:?}{:?} is not in the H/V basis",
            t.pol_u, t.pol_l
        )));
    }
    Ok(combine(input, long_arm_u, long_arm_l, pbs_local))
}

/// Detection alternatives of the original Franson scheme with
/// non-polarizing splitters, over both output ports of each side.
pub fn enumerate_paths_nonpolarizing(
    input: &TwoPhotonInput,
    long_arm_u: &LongArm,
    long_arm_l: &LongArm,
) -> Vec<PathAmplitude> {
    combine(input, long_arm_u, long_arm_l, nonpolarizing_local)
}
