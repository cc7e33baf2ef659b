//! Brute-force reference for the closed-form propagators: the Bloch equation
//! `dv/dt = G v` integrated with classical fixed-step RK4.

use crate::error::OracleError;
use crate::model::{BlochVector, ModelKind, SystemParams};

pub const DEFAULT_STEP: f64 = 1e-4;

/// Constant 3x3 generator of the Bloch equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochGenerator(pub [[f64; 3]; 3]);

impl BlochGenerator {
    pub const ZERO: BlochGenerator = BlochGenerator([[0.0; 3]; 3]);

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }
}

/// General generator for drive frequencies along z, x and y:
///
/// ```text
/// [ -g   -wz  -wy ]
/// [  wz  -g   -wx ]
/// [  wy   wx   0  ]
/// ```
pub fn general_generator(gamma: f64, wz: f64, wx: f64, wy: f64) -> BlochGenerator {
    BlochGenerator([[-gamma, -wz, -wy], [wz, -gamma, -wx], [wy, wx, 0.0]])
}

pub fn build_generator(model: ModelKind, params: SystemParams) -> BlochGenerator {
    let SystemParams { omega, gamma } = params;
    match model {
        ModelKind::ZDrive => general_generator(gamma, omega, 0.0, 0.0),
        ModelKind::XDrive => general_generator(gamma, 0.0, omega, 0.0),
        ModelKind::YDrive => general_generator(gamma, 0.0, 0.0, omega),
    }
}

fn rk4_step(gen: &BlochGenerator, v: [f64; 3], h: f64) -> [f64; 3] {
    let axpy = |a: [f64; 3], s: f64, b: [f64; 3]| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = gen.apply(v);
    let k2 = gen.apply(axpy(v, 0.5 * h, k1));
    let k3 = gen.apply(axpy(v, 0.5 * h, k2));
    let k4 = gen.apply(axpy(v, h, k3));
    let mut out = v;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrates from 0 to `t_end` with step `dt`; the last step is shortened to
/// land exactly on `t_end`.
pub fn integrate(
    gen: &BlochGenerator,
    v0: BlochVector,
    t_end: f64,
    dt: f64,
) -> Result<BlochVector, OracleError> {
    let finite = gen.0.iter().flatten().all(|x| x.is_finite())
        && v0.as_array().iter().all(|x| x.is_finite())
        && t_end.is_finite()
        && dt.is_finite();
    if !finite {
        return Err(OracleError::NonFinite);
    }
    if t_end < 0.0 {
        return Err(OracleError::InvalidSpan { t_end, dt });
    }
    if t_end == 0.0 {
        return Ok(v0);
    }
    if dt <= 0.0 {
        return Err(OracleError::InvalidSpan { t_end, dt });
    }

    let full_steps = (t_end / dt).floor() as u64;
    let remainder = t_end - full_steps as f64 * dt;
    let mut v = v0.as_array();
    for _ in 0..full_steps {
        v = rk4_step(gen, v, dt);
    }
    if remainder > 1e-14 * t_end {
        v = rk4_step(gen, v, remainder);
    }
    Ok(v.into())
}
