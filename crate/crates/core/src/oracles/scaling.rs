use std::f64::consts::PI;

/// Scaling-solution functions of the quenched interacting trap at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFunctions {
    /// Scale factor `L(t)`.
    pub l: f64,
    /// `dL/dt`.
    pub l_dot: f64,
    /// `d^2L/dt^2`.
    pub l_ddot: f64,
    /// Scaled time `tau(t) = int_0^t ds / L(s)^2`.
    pub tau: f64,
    /// Phase coefficient `L'/(2L)`.
    pub f: f64,
    /// Norm factor `L^{N/2}` (one spatial dimension).
    pub r: f64,
    /// Post-quench interaction `g0 / L^4`.
    pub g_t: f64,
}

/// `A` and `C` of `L^2 = A cos(2 omega_f t) + C`.
pub fn scaling_coefficients(omega0: f64, omega_f: f64) -> (f64, f64) {
    let wf2 = omega_f * omega_f;
    let w02 = omega0 * omega0;
    ((wf2 - w02) / (2.0 * wf2), (wf2 + w02) / (2.0 * wf2))
}

impl ScalingFunctions {
    pub fn at(t: f64, omega0: f64, omega_f: f64, g0: f64, n: usize) -> Self {
        let (a, c) = scaling_coefficients(omega0, omega_f);
        let x = 2.0 * omega_f * t;
        let l2 = a * x.cos() + c;
        let l = l2.sqrt();
        // (L^2)' = 2 L L'
        let dl2 = -2.0 * a * omega_f * x.sin();
        let ddl2 = -4.0 * a * omega_f * omega_f * x.cos();
        let l_dot = dl2 / (2.0 * l);
        let l_ddot = (ddl2 - 2.0 * l_dot * l_dot) / (2.0 * l);
        Self {
            l,
            l_dot,
            l_ddot,
            tau: scaled_time(t, omega0, omega_f),
            f: l_dot / (2.0 * l),
            r: l.powf(0.5 * n as f64),
            g_t: g0 / (l2 * l2),
        }
    }

    /// `d tau / dt = 1 / L^2`.
    pub fn tau_dot(&self) -> f64 {
        1.0 / (self.l * self.l)
    }

    /// `dF/dt = (L'' L - L'^2) / (2 L^2)`.
    pub fn f_dot(&self) -> f64 {
        (self.l_ddot * self.l - self.l_dot * self.l_dot) / (2.0 * self.l * self.l)
    }
}

/// Closed form of `int_0^t ds / L(s)^2`, continuous across the poles of the
/// tangent.
pub fn scaled_time(t: f64, omega0: f64, omega_f: f64) -> f64 {
    let wt = omega_f * t;
    // branch index floor(wt/pi + 1/2), with the tangent taken on the reduced
    // angle so both pieces switch together at the pole
    let m = (wt / PI + 0.5).floor();
    let u = wt - m * PI;
    (omega0 / omega_f * u.tan()).atan() / omega0 + PI / omega0 * m
}

/// Residual of the Ermakov equation `L'' + omega_f^2 L - omega0^2 / L^3`.
pub fn ermakov_residual(t: f64, omega0: f64, omega_f: f64) -> f64 {
    let s = ScalingFunctions::at(t, omega0, omega_f, 1.0, 1);
    s.l_ddot + omega_f * omega_f * s.l - omega0 * omega0 / s.l.powi(3)
}
