//! Discrete-time kinematic bicycle model.
//!
//! The public state keeps the planar velocity `(vx, vy)`; speed and heading
//! are reconstructed on every step. The simulator and the trajectory
//! optimizer both go through [`step`], so a plan re-simulated here is the
//! plan the vehicle actually executes.

use nalgebra::{Matrix4, Matrix4x2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this speed the heading is not integrated.
pub const STANDSTILL_SPEED: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite vehicle state {0:?}")]
    NonFiniteState(VehicleState),
    #[error("control {0:?} outside actuator bounds")]
    ControlOutOfBounds(ControlInput),
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("invalid vehicle parameters: {0}")]
    BadParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn heading(&self) -> f64 {
        if self.speed() < STANDSTILL_SPEED {
            0.0
        } else {
            self.vy.atan2(self.vx)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Longitudinal acceleration, m/s².
    pub accel: f64,
    /// Front-wheel steering angle, rad.
    pub steer: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        accel: 0.0,
        steer: 0.0,
    };

    pub const fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub length: f64,
    pub width: f64,
    pub l_front: f64,
    pub l_rear: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    pub steer_min: f64,
    pub steer_max: f64,
    pub v_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            length: 5.0,
            width: 2.0,
            l_front: 2.5,
            l_rear: 2.5,
            accel_min: -5.0,
            accel_max: 3.0,
            steer_min: -0.3,
            steer_max: 0.3,
            v_max: 40.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let checks: [(bool, &'static str); 6] = [
            (self.length > 0.0, "length must be positive"),
            (self.width > 0.0, "width must be positive"),
            (
                self.l_front > 0.0 && self.l_rear > 0.0,
                "axle distances must be positive",
            ),
            (
                self.accel_min < 0.0 && 0.0 < self.accel_max,
                "need accel_min < 0 < accel_max",
            ),
            (
                self.steer_min < 0.0 && 0.0 < self.steer_max,
                "need steer_min < 0 < steer_max",
            ),
            (self.v_max > 0.0, "v_max must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(DynamicsError::BadParams(msg)),
            None => Ok(()),
        }
    }

    pub fn contains(&self, u: &ControlInput) -> bool {
        u.accel >= self.accel_min
            && u.accel <= self.accel_max
            && u.steer >= self.steer_min
            && u.steer <= self.steer_max
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            accel: u.accel.clamp(self.accel_min, self.accel_max),
            steer: u.steer.clamp(self.steer_min, self.steer_max),
        }
    }

    fn slip_ratio(&self) -> f64 {
        self.l_rear / (self.l_front + self.l_rear)
    }
}

fn check_inputs(
    s: &VehicleState,
    u: &ControlInput,
    dt: f64,
    p: &VehicleParams,
) -> Result<(), DynamicsError> {
    if !s.is_finite() {
        return Err(DynamicsError::NonFiniteState(*s));
    }
    if !(u.accel.is_finite() && u.steer.is_finite()) || !p.contains(u) {
        return Err(DynamicsError::ControlOutOfBounds(*u));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::BadTimeStep(dt));
    }
    Ok(())
}

/// Advances the vehicle by one control period.
pub fn step(
    s: &VehicleState,
    u: &ControlInput,
    dt: f64,
    p: &VehicleParams,
) -> Result<VehicleState, DynamicsError> {
    check_inputs(s, u, dt, p)?;
    Ok(step_unchecked(s, u, dt, p))
}

pub(crate) fn step_unchecked(
    s: &VehicleState,
    u: &ControlInput,
    dt: f64,
    p: &VehicleParams,
) -> VehicleState {
    let v = s.speed();
    let mut psi = s.heading();
    let beta = (p.slip_ratio() * u.steer.tan()).atan();
    let x = s.x + v * (psi + beta).cos() * dt;
    let y = s.y + v * (psi + beta).sin() * dt;
    if v >= STANDSTILL_SPEED {
        psi += (v / p.l_rear) * beta.sin() * dt;
    }
    let v_next = (v + u.accel * dt).clamp(0.0, p.v_max);
    VehicleState {
        x,
        y,
        vx: v_next * psi.cos(),
        vy: v_next * psi.sin(),
    }
}

/// Linearization of [`step`]: `A = ∂s'/∂s` and `B = ∂s'/∂u`.
///
/// The speed clamp contributes a zero derivative when it is active.
pub fn jacobians(
    s: &VehicleState,
    u: &ControlInput,
    dt: f64,
    p: &VehicleParams,
) -> Result<(Matrix4<f64>, Matrix4x2<f64>), DynamicsError> {
    check_inputs(s, u, dt, p)?;
    Ok(jacobians_unchecked(s, u, dt, p))
}

pub(crate) fn jacobians_unchecked(
    s: &VehicleState,
    u: &ControlInput,
    dt: f64,
    p: &VehicleParams,
) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let v = s.speed();
    let moving = v >= STANDSTILL_SPEED;
    let psi = s.heading();
    let (sp, cp) = psi.sin_cos();

    // d(v, psi) / d(vx, vy)
    let (dv_dvx, dv_dvy) = (cp, sp);
    let (dpsi_dvx, dpsi_dvy) = if moving {
        (-sp / v, cp / v)
    } else {
        (0.0, 0.0)
    };

    let c = p.slip_ratio();
    let tan_d = u.steer.tan();
    let beta = (c * tan_d).atan();
    let dbeta_dsteer = c * (1.0 + tan_d * tan_d) / (1.0 + c * c * tan_d * tan_d);

    let (s_pb, c_pb) = (psi + beta).sin_cos();
    // x' and y' partials w.r.t. (v, psi, beta)
    let dx = [c_pb * dt, -v * s_pb * dt, -v * s_pb * dt];
    let dy = [s_pb * dt, v * c_pb * dt, v * c_pb * dt];

    let psi_next;
    // psi' partials w.r.t. (v, psi, beta)
    let dpsi = if moving {
        psi_next = psi + (v / p.l_rear) * beta.sin() * dt;
        [
            beta.sin() * dt / p.l_rear,
            1.0,
            v * beta.cos() * dt / p.l_rear,
        ]
    } else {
        psi_next = psi;
        [0.0, 1.0, 0.0]
    };

    let v_raw = v + u.accel * dt;
    let gate = if v_raw > 0.0 && v_raw < p.v_max {
        1.0
    } else {
        0.0
    };
    let v_next = v_raw.clamp(0.0, p.v_max);
    // v' partials w.r.t. v and accel
    let dvn_dv = gate;
    let dvn_da = gate * dt;

    let (spn, cpn) = psi_next.sin_cos();

    // Intermediate-variable chain: (vx', vy') = v'·(cos psi', sin psi').
    let dvx_next = |dvn: f64, dpsin: f64| dvn * cpn - v_next * spn * dpsin;
    let dvy_next = |dvn: f64, dpsin: f64| dvn * spn + v_next * cpn * dpsin;

    let mut a = Matrix4::<f64>::zeros();
    let mut b = Matrix4x2::<f64>::zeros();

    a[(0, 0)] = 1.0;
    a[(1, 1)] = 1.0;
    for (col, dv_in, dpsi_in) in [(2, dv_dvx, dpsi_dvx), (3, dv_dvy, dpsi_dvy)] {
        a[(0, col)] = dx[0] * dv_in + dx[1] * dpsi_in;
        a[(1, col)] = dy[0] * dv_in + dy[1] * dpsi_in;
        let dvn = dvn_dv * dv_in;
        let dpsin = dpsi[0] * dv_in + dpsi[1] * dpsi_in;
        a[(2, col)] = dvx_next(dvn, dpsin);
        a[(3, col)] = dvy_next(dvn, dpsin);
    }

    // accel only reaches v'
    b[(2, 0)] = dvx_next(dvn_da, 0.0);
    b[(3, 0)] = dvy_next(dvn_da, 0.0);
    // steering only reaches through beta
    b[(0, 1)] = dx[2] * dbeta_dsteer;
    b[(1, 1)] = dy[2] * dbeta_dsteer;
    let dpsin = dpsi[2] * dbeta_dsteer;
    b[(2, 1)] = dvx_next(0.0, dpsin);
    b[(3, 1)] = dvy_next(0.0, dpsin);

    (a, b)
}

/// Rolls a control sequence forward, returning the `k` successor states.
pub fn rollout(
    s0: &VehicleState,
    controls: &[ControlInput],
    dt: f64,
    p: &VehicleParams,
) -> Result<Vec<VehicleState>, DynamicsError> {
    let mut out = Vec::with_capacity(controls.len());
    let mut s = *s0;
    for u in controls {
        s = step(&s, u, dt, p)?;
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const DT: f64 = 0.1;

    #[test]
    fn straight_motion() {
        let p = VehicleParams::default();
        let s = step(
            &VehicleState::new(0.0, 6.0, 20.0, 0.0),
            &ControlInput::ZERO,
            DT,
            &p,
        )
        .unwrap();
        assert_relative_eq!(s.x, 2.0, epsilon = 1e-12);
        assert_eq!(s.y, 6.0);
        assert_eq!(s.vx, 20.0);
        assert_eq!(s.vy, 0.0);
    }

    #[test]
    fn acceleration_uses_pre_update_speed() {
        let p = VehicleParams::default();
        let s = step(
            &VehicleState::new(0.0, 6.0, 20.0, 0.0),
            &ControlInput::new(2.0, 0.0),
            DT,
            &p,
        )
        .unwrap();
        assert_relative_eq!(s.x, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.vx, 20.2, epsilon = 1e-12);
        assert_eq!(s.vy, 0.0);
    }

    #[test]
    fn steering_golden() {
        let p = VehicleParams::default();
        let s = step(
            &VehicleState::new(0.0, 6.0, 20.0, 0.0),
            &ControlInput::new(0.0, 0.05),
            DT,
            &p,
        )
        .unwrap();
        assert_relative_eq!(s.x, 1.999374250649959, epsilon = 1e-12);
        assert_relative_eq!(s.y, 6.050026051592293, epsilon = 1e-12);
        assert_relative_eq!(s.vx, 19.995995964268985, epsilon = 1e-12);
        assert_relative_eq!(s.vy, 0.4001817049021297, epsilon = 1e-12);
        assert!(s.vy.atan2(s.vx) > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = VehicleParams::default();
        let s = VehicleState::new(0.0, 6.0, 20.0, 0.0);
        assert!(matches!(
            step(&s, &ControlInput::new(4.0, 0.0), DT, &p),
            Err(DynamicsError::ControlOutOfBounds(_))
        ));
        assert!(matches!(
            step(&s, &ControlInput::new(0.0, 0.31), DT, &p),
            Err(DynamicsError::ControlOutOfBounds(_))
        ));
        assert!(matches!(
            step(
                &VehicleState::new(f64::NAN, 0.0, 0.0, 0.0),
                &ControlInput::ZERO,
                DT,
                &p
            ),
            Err(DynamicsError::NonFiniteState(_))
        ));
        assert!(matches!(
            step(&s, &ControlInput::ZERO, 0.0, &p),
            Err(DynamicsError::BadTimeStep(_))
        ));
    }

    #[test]
    fn speed_clamps_at_cap_and_zero() {
        let p = VehicleParams::default();
        let fast = step(
            &VehicleState::new(0.0, 6.0, 39.9, 0.0),
            &ControlInput::new(3.0, 0.0),
            DT,
            &p,
        )
        .unwrap();
        assert_eq!(fast.speed(), 40.0);
        let slow = step(
            &VehicleState::new(0.0, 6.0, 0.2, 0.0),
            &ControlInput::new(-5.0, 0.0),
            DT,
            &p,
        )
        .unwrap();
        assert_eq!(slow.speed(), 0.0);
    }

    #[test]
    fn linear_row_of_straight_motion() {
        let p = VehicleParams::default();
        let (a, _) = jacobians(
            &VehicleState::new(0.0, 6.0, 20.0, 0.0),
            &ControlInput::ZERO,
            DT,
            &p,
        )
        .unwrap();
        assert_relative_eq!(a[(0, 2)] / DT, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_has_no_effect_at_standstill() {
        let p = VehicleParams::default();
        let (_, b) = jacobians(
            &VehicleState::new(0.0, 6.0, 0.0, 0.0),
            &ControlInput::new(0.0, 0.1),
            DT,
            &p,
        )
        .unwrap();
        for r in 0..4 {
            assert_eq!(b[(r, 1)], 0.0);
        }
    }

    fn state_vec(s: &VehicleState) -> [f64; 4] {
        [s.x, s.y, s.vx, s.vy]
    }

    fn from_vec(v: [f64; 4]) -> VehicleState {
        VehicleState::new(v[0], v[1], v[2], v[3])
    }

    /// Central differences of `step`; independent of the analytic chain rule.
    fn finite_difference(
        s: &VehicleState,
        u: &ControlInput,
        p: &VehicleParams,
    ) -> (Matrix4<f64>, Matrix4x2<f64>) {
        let h = 1e-6;
        let mut a = Matrix4::zeros();
        let mut b = Matrix4x2::zeros();
        for col in 0..4 {
            let mut plus = state_vec(s);
            let mut minus = state_vec(s);
            plus[col] += h;
            minus[col] -= h;
            let fp = state_vec(&step_unchecked(&from_vec(plus), u, DT, p));
            let fm = state_vec(&step_unchecked(&from_vec(minus), u, DT, p));
            for row in 0..4 {
                a[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        for col in 0..2 {
            let mut up = *u;
            let mut um = *u;
            if col == 0 {
                up.accel += h;
                um.accel -= h;
            } else {
                up.steer += h;
                um.steer -= h;
            }
            let fp = state_vec(&step_unchecked(s, &up, DT, p));
            let fm = state_vec(&step_unchecked(s, &um, DT, p));
            for row in 0..4 {
                b[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        (a, b)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn jacobians_match_finite_differences(
            x in -100.0..100.0f64,
            y in 0.0..12.0f64,
            speed in 1.0..38.0f64,
            heading in -0.2..0.2f64,
            accel in -4.9..2.9f64,
            steer in -0.29..0.29f64,
        ) {
            let p = VehicleParams::default();
            let s = VehicleState::new(x, y, speed * heading.cos(), speed * heading.sin());
            let u = ControlInput::new(accel, steer);
            let (a, b) = jacobians(&s, &u, DT, &p).unwrap();
            let (fa, fb) = finite_difference(&s, &u, &p);
            for r in 0..4 {
                for c in 0..4 {
                    prop_assert!((a[(r, c)] - fa[(r, c)]).abs() < 1e-5 * (1.0 + a[(r, c)].abs()),
                        "A[{r}][{c}] analytic {} fd {}", a[(r, c)], fa[(r, c)]);
                }
                for c in 0..2 {
                    prop_assert!((b[(r, c)] - fb[(r, c)]).abs() < 1e-5 * (1.0 + b[(r, c)].abs()),
                        "B[{r}][{c}] analytic {} fd {}", b[(r, c)], fb[(r, c)]);
                }
            }
        }

        #[test]
        fn output_speed_within_bounds(
            speed in 0.0..40.0f64,
            heading in -0.5..0.5f64,
            accel in -5.0..3.0f64,
            steer in -0.3..0.3f64,
        ) {
            let p = VehicleParams::default();
            let s = VehicleState::new(0.0, 6.0, speed * heading.cos(), speed * heading.sin());
            let next = step(&s, &ControlInput::new(accel, steer), DT, &p).unwrap();
            prop_assert!(next.speed() >= 0.0 && next.speed() <= p.v_max + 1e-9);
            let again = step(&s, &ControlInput::new(accel, steer), DT, &p).unwrap();
            prop_assert_eq!(next, again);
        }

        #[test]
        fn straight_line_stays_straight(
            speed in 0.0..40.0f64,
            accels in proptest::collection::vec(-5.0..3.0f64, 1..40),
        ) {
            let p = VehicleParams::default();
            let mut s = VehicleState::new(0.0, 6.0, speed, 0.0);
            for a in accels {
                s = step(&s, &ControlInput::new(a, 0.0), DT, &p).unwrap();
                prop_assert_eq!(s.y, 6.0);
                prop_assert_eq!(s.vy, 0.0);
            }
        }
    }
}
