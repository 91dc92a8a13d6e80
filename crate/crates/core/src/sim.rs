//! Kinematic simulation of the magnetic climbing robot on steel plates.
//!
//! Forces are in kgf throughout (the robot's weight `P` is its mass in kg
//! expressed as a force), lengths in metres, angles in radians. The robot is a
//! differential-drive unicycle stepped at a fixed `dt`. Four downward IR
//! sensors sit at the corners of the body outline, indexed front-right,
//! front-left, rear-right, rear-left; the wheel contact patch is the outline
//! inset by `contact_inset` on every side, and is what must stay on steel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRONT_RIGHT: usize = 0;
pub const FRONT_LEFT: usize = 1;
pub const REAR_RIGHT: usize = 2;
pub const REAR_LEFT: usize = 3;
pub const SENSOR_NAMES: [&str; 4] = ["front_right", "front_left", "rear_right", "rear_left"];

/// Smallest steel patch under one wheel that keeps full adhesion (mm).
pub const MIN_CONTACT_MM: (f64, f64) = (20.3, 28.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSpec {
    /// Weight P (kgf).
    pub weight: f64,
    /// Total magnetic adhesion F_mag (kgf).
    pub magnetic_force: f64,
    /// Wheel-cover friction coefficient μ.
    pub friction: f64,
    /// Centre-of-mass height d above the surface (m).
    pub com_height: f64,
    /// Front-to-rear wheel distance L (m).
    pub wheelbase: f64,
    /// Body outline length along the heading (m); IR sensors at its corners.
    pub length: f64,
    /// Body outline width (m).
    pub width: f64,
    /// Distance between left and right wheels (m).
    pub track: f64,
    /// Gap between the body outline and the wheel contact patch (m).
    pub contact_inset: f64,
    /// Wheel speed (m/s) for driving and turning in place.
    pub speed: f64,
    /// Odometer tick length (m).
    pub tick_length: f64,
    /// Calibrated IR ranges r_cal (m), sensor order as above.
    pub ir_calibration: [f64; 4],
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            weight: 6.0,
            magnetic_force: 16.0,
            friction: 0.5,
            com_height: 0.05,
            wheelbase: 0.20,
            length: 0.30,
            width: 0.26,
            track: 0.20,
            contact_inset: 0.03,
            speed: 0.05,
            tick_length: 0.05 / 3.0,
            ir_calibration: [0.02; 4],
        }
    }
}

impl RobotSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("weight", self.weight),
            ("magnetic_force", self.magnetic_force),
            ("com_height", self.com_height),
            ("wheelbase", self.wheelbase),
            ("length", self.length),
            ("width", self.width),
            ("track", self.track),
            ("contact_inset", self.contact_inset),
            ("speed", self.speed),
            ("tick_length", self.tick_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "robot {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.friction > 0.0 && self.friction <= 2.0) {
            return Err(Error::InvalidInput(format!(
                "robot friction must lie in (0, 2], got {}",
                self.friction
            )));
        }
        if 2.0 * self.contact_inset >= self.length.min(self.width) {
            return Err(Error::InvalidInput(
                "contact inset leaves no contact patch".into(),
            ));
        }
        if self.ir_calibration.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("IR calibration must be finite".into()));
        }
        Ok(())
    }

    /// d / L.
    pub fn tip_ratio(&self) -> f64 {
        self.com_height / self.wheelbase
    }
}

/// Adhesion needed against sliding and turn-over on a surface inclined by
/// `alpha`: `max(P sin(a)/μ + P cos(a), 2 P d / L)`.
pub fn required_force(spec: &RobotSpec, alpha: f64) -> Result<f64> {
    if spec.friction == 0.0 {
        return Err(Error::InvalidInput("friction coefficient is zero".into()));
    }
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "inclination {alpha} outside [0, pi/2]"
        )));
    }
    let p = spec.weight;
    let sliding = p * alpha.sin() / spec.friction + p * alpha.cos();
    let turnover = 2.0 * p * spec.com_height / spec.wheelbase;
    Ok(sliding.max(turnover))
}

/// Largest sliding requirement over all inclinations, `P sqrt(1 + 1/μ²)`,
/// reached at `atan(1/μ)`.
pub fn worst_case_sliding(spec: &RobotSpec) -> (f64, f64) {
    let mu = spec.friction;
    (
        spec.weight * (1.0 + 1.0 / (mu * mu)).sqrt(),
        (1.0 / mu).atan(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    pub required: f64,
    /// `F_mag - required` (kgf).
    pub margin: f64,
}

pub fn check_stability(spec: &RobotSpec, alpha: f64) -> Result<Stability> {
    let required = required_force(spec, alpha)?;
    Ok(Stability {
        stable: spec.magnetic_force > required,
        required,
        margin: spec.magnetic_force - required,
    })
}

/// Whether a `a_mm x b_mm` steel patch can hold one wheel, in either
/// orientation.
pub fn min_contact_check(a_mm: f64, b_mm: f64) -> bool {
    let (w, h) = MIN_CONTACT_MM;
    (a_mm >= w && b_mm >= h) || (a_mm >= h && b_mm >= w)
}

/// Axis-aligned steel plate (m) with its inclination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plate {
    pub min: [f64; 2],
    pub max: [f64; 2],
    #[serde(default)]
    pub alpha: f64,
}

impl Plate {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, alpha: f64) -> Self {
        Self {
            min: [x0, y0],
            max: [x1, y1],
            alpha,
        }
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= self.min[0] && p.0 <= self.max[0] && p.1 >= self.min[1] && p.1 <= self.max[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimWorld {
    pub plates: Vec<Plate>,
    /// Start pose; defaults to the centre of the first plate, heading +x.
    #[serde(default)]
    pub start: Option<Pose2>,
}

impl SimWorld {
    pub fn validate(&self) -> Result<()> {
        if self.plates.is_empty() {
            return Err(Error::InvalidInput("world has no plates".into()));
        }
        for (i, p) in self.plates.iter().enumerate() {
            let ok = p.min.iter().chain(&p.max).all(|v| v.is_finite())
                && p.max[0] > p.min[0]
                && p.max[1] > p.min[1];
            if !ok {
                return Err(Error::InvalidInput(format!("plate {i} is degenerate")));
            }
            if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&p.alpha) {
                return Err(Error::InvalidInput(format!(
                    "plate {i} inclination {} outside [0, pi/2]",
                    p.alpha
                )));
            }
        }
        Ok(())
    }

    pub fn on_steel(&self, p: (f64, f64)) -> bool {
        self.plates.iter().any(|pl| pl.contains(p))
    }

    pub fn start_pose(&self) -> Pose2 {
        self.start.unwrap_or_else(|| {
            let p = &self.plates[0];
            Pose2 {
                x: (p.min[0] + p.max[0]) / 2.0,
                y: (p.min[1] + p.max[1]) / 2.0,
                heading: 0.0,
            }
        })
    }

    /// Every point of the rectangle lies on steel. Exact when one plate holds
    /// all four corners; otherwise sampled on a 5 mm lattice.
    pub fn rect_on_steel(&self, corners: &[(f64, f64); 4]) -> bool {
        if self
            .plates
            .iter()
            .any(|pl| corners.iter().all(|&c| pl.contains(c)))
        {
            return true;
        }
        // corners: FR, FL, RR, RL; edges FR->FL and FR->RR span the rectangle.
        let (o, a, b) = (
            corners[REAR_RIGHT],
            corners[FRONT_RIGHT],
            corners[REAR_LEFT],
        );
        let u = (a.0 - o.0, a.1 - o.1);
        let v = (b.0 - o.0, b.1 - o.1);
        let nu = (u.0.hypot(u.1) / 0.005).ceil().max(1.0) as usize;
        let nv = (v.0.hypot(v.1) / 0.005).ceil().max(1.0) as usize;
        (0..=nu).all(|i| {
            (0..=nv).all(|j| {
                let (s, t) = (i as f64 / nu as f64, j as f64 / nv as f64);
                self.on_steel((o.0 + s * u.0 + t * v.0, o.1 + s * u.1 + t * v.1))
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Moving,
    Avoiding,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2,
    /// Cumulative distance rolled by each wheel (m), never decreasing.
    pub wheel_travel: [f64; 4],
    pub ir: [f64; 4],
    pub ir_calibration: [f64; 4],
    pub mode: Mode,
}

impl RobotState {
    pub fn new(pose: Pose2, spec: &RobotSpec) -> Self {
        Self {
            pose,
            wheel_travel: [0.0; 4],
            ir: spec.ir_calibration,
            ir_calibration: spec.ir_calibration,
            mode: Mode::Moving,
        }
    }

    /// Odometer ticks d_i.
    pub fn ticks(&self, spec: &RobotSpec) -> [u64; 4] {
        self.wheel_travel
            .map(|d| (d / spec.tick_length + 1e-9).floor() as u64)
    }
}

fn rect_corners(pose: &Pose2, half_l: f64, half_w: f64) -> [(f64, f64); 4] {
    let (s, c) = pose.heading.sin_cos();
    let at = |fx: f64, fy: f64| (pose.x + c * fx - s * fy, pose.y + s * fx + c * fy);
    [
        at(half_l, -half_w),
        at(half_l, half_w),
        at(-half_l, -half_w),
        at(-half_l, half_w),
    ]
}

/// IR sensor positions (body outline corners) in world coordinates.
pub fn sensor_positions(pose: &Pose2, spec: &RobotSpec) -> [(f64, f64); 4] {
    rect_corners(pose, spec.length / 2.0, spec.width / 2.0)
}

/// Corners of the wheel contact patch in world coordinates.
pub fn contact_corners(pose: &Pose2, spec: &RobotSpec) -> [(f64, f64); 4] {
    rect_corners(
        pose,
        spec.length / 2.0 - spec.contact_inset,
        spec.width / 2.0 - spec.contact_inset,
    )
}

/// Readings equal the calibration over steel and deviate by `10 eps` over
/// void.
pub fn read_ir(world: &SimWorld, state: &RobotState, spec: &RobotSpec, eps: f64) -> [f64; 4] {
    let pos = sensor_positions(&state.pose, spec);
    std::array::from_fn(|i| {
        if world.on_steel(pos[i]) {
            state.ir_calibration[i]
        } else {
            state.ir_calibration[i] + 10.0 * eps
        }
    })
}

/// Sensors whose reading leaves `[r_cal - eps, r_cal + eps]`.
pub fn out_of_band(readings: &[f64; 4], calibration: &[f64; 4], eps: f64) -> Vec<usize> {
    (0..4)
        .filter(|&i| (readings[i] - calibration[i]).abs() > eps)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    /// Exactly one sensor sees void.
    Avoid(usize),
    /// More than one sensor sees void: stop and wait for commands.
    StopAndWait,
}

pub fn classify(readings: &[f64; 4], calibration: &[f64; 4], eps: f64) -> Decision {
    match out_of_band(readings, calibration, eps).as_slice() {
        [] => Decision::Continue,
        [i] => Decision::Avoid(*i),
        _ => Decision::StopAndWait,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Stop,
    /// Drive straight; negative distance reverses.
    Drive(f64),
    /// Turn in place until the outer wheels roll this far; positive is left
    /// (counter-clockwise).
    Rotate(f64),
    Resume,
}

/// Motion distances of the escape maneuver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManeuverParams {
    pub backoff: f64,
    pub turn_arc: f64,
}

impl Default for ManeuverParams {
    fn default() -> Self {
        Self {
            backoff: 0.05,
            turn_arc: 0.03,
        }
    }
}

/// Escape sequence for one sensor over void. Front sensors back off, rear
/// sensors pull forward; right-side sensors turn left, left-side sensors turn
/// right.
pub fn maneuver_for(sensor: usize, p: &ManeuverParams) -> [Maneuver; 4] {
    let drive = if sensor == FRONT_RIGHT || sensor == FRONT_LEFT {
        -p.backoff
    } else {
        p.backoff
    };
    let turn = if sensor == FRONT_RIGHT || sensor == REAR_RIGHT {
        p.turn_arc
    } else {
        -p.turn_arc
    };
    [
        Maneuver::Stop,
        Maneuver::Drive(drive),
        Maneuver::Rotate(turn),
        Maneuver::Resume,
    ]
}

/// Wheel speeds for one step, (left, right) in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub left: f64,
    pub right: f64,
}

impl Command {
    pub const HALT: Command = Command {
        left: 0.0,
        right: 0.0,
    };
}

/// Edge-avoidance state machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub params: ManeuverParams,
    sensor: Option<usize>,
    plan: Vec<Maneuver>,
    /// Wheel travel when the current maneuver step began.
    mark: [f64; 4],
    waiting: bool,
}

impl Controller {
    pub fn new(params: ManeuverParams) -> Self {
        Self {
            params,
            sensor: None,
            plan: Vec::new(),
            mark: [0.0; 4],
            waiting: false,
        }
    }

    pub fn mode(&self) -> Mode {
        if self.waiting {
            Mode::Stopped
        } else if self.plan.is_empty() {
            Mode::Moving
        } else {
            Mode::Avoiding
        }
    }

    /// One control step: consumes the readings and the wheel odometry and
    /// returns the wheel command. A sensor that started the running maneuver
    /// is expected to stay out of band until the maneuver clears it; only a
    /// different sensor restarts the avoidance.
    pub fn step(
        &mut self,
        readings: &[f64; 4],
        state: &RobotState,
        spec: &RobotSpec,
        eps: f64,
    ) -> Command {
        if self.waiting {
            return Command::HALT;
        }
        match classify(readings, &state.ir_calibration, eps) {
            Decision::StopAndWait => {
                self.waiting = true;
                self.plan.clear();
                return Command::HALT;
            }
            Decision::Avoid(i) if self.sensor != Some(i) => {
                self.sensor = Some(i);
                self.plan = maneuver_for(i, &self.params).to_vec();
                self.plan.reverse();
                self.mark = state.wheel_travel;
            }
            _ => {}
        }
        let v = spec.speed;
        loop {
            let Some(&current) = self.plan.last() else {
                self.sensor = None;
                return Command { left: v, right: v };
            };
            let rolled = |wheel: usize| state.wheel_travel[wheel] - self.mark[wheel];
            let done = match current {
                Maneuver::Stop => {
                    // Held for exactly one step.
                    self.plan.pop();
                    self.mark = state.wheel_travel;
                    return Command::HALT;
                }
                Maneuver::Drive(d) => rolled(FRONT_RIGHT) >= d.abs() - 1e-12,
                Maneuver::Rotate(a) => {
                    let wheel = if a > 0.0 { FRONT_RIGHT } else { FRONT_LEFT };
                    rolled(wheel) >= a.abs() - 1e-12
                }
                Maneuver::Resume => true,
            };
            if done {
                self.plan.pop();
                self.mark = state.wheel_travel;
                continue;
            }
            return match current {
                Maneuver::Drive(d) => {
                    let s = d.signum() * v;
                    Command { left: s, right: s }
                }
                Maneuver::Rotate(a) => {
                    let s = a.signum() * v;
                    Command { left: -s, right: s }
                }
                _ => unreachable!(),
            };
        }
    }
}

/// Counts camera captures every `interval` metres of forward travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureTrigger {
    pub interval: f64,
    accumulated: f64,
}

impl CaptureTrigger {
    pub fn new(interval: f64) -> Self {
        Self {
            interval,
            accumulated: 0.0,
        }
    }

    /// Adds forward travel (backward motion is ignored) and returns the number
    /// of capture points crossed.
    pub fn advance(&mut self, forward: f64) -> usize {
        if forward > 0.0 {
            self.accumulated += forward;
        }
        let mut n = 0;
        while self.accumulated >= self.interval - 1e-9 {
            self.accumulated -= self.interval;
            n += 1;
        }
        self.accumulated = self.accumulated.max(0.0);
        n
    }

    pub fn pending(&self) -> f64 {
        self.accumulated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Timestep (s).
    pub dt: f64,
    /// IR band half-width ε (m).
    pub epsilon: f64,
    pub maneuver: ManeuverParams,
    /// Forward travel between captures (m).
    pub capture_interval: f64,
    /// Camera footprint (m) recorded with each capture.
    pub camera_footprint: [f64; 2],
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.01,
            epsilon: 0.005,
            maneuver: ManeuverParams::default(),
            capture_interval: 0.12,
            camera_footprint: [0.18, 0.14],
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("epsilon", self.epsilon),
            ("backoff", self.maneuver.backoff),
            ("turn_arc", self.maneuver.turn_arc),
            ("capture_interval", self.capture_interval),
            ("camera footprint width", self.camera_footprint[0]),
            ("camera footprint height", self.camera_footprint[1]),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "simulation {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Drive straight ahead, leaving it to edge avoidance to turn.
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub pose: Pose2,
    pub mode: Mode,
    pub ir: [f64; 4],
    pub ticks: [u64; 4],
    /// Wheel contact patch entirely on steel after this step.
    pub on_steel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureEvent {
    pub step: usize,
    pub pose: Pose2,
    pub footprint: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeChange {
    pub step: usize,
    pub from: Mode,
    pub to: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub captures: Vec<CaptureEvent>,
    pub mode_changes: Vec<ModeChange>,
    /// Steps whose contact patch left the steel.
    pub violations: usize,
    /// Start-of-run adhesion check.
    pub stability: Stability,
}

/// Fixed-step loop: read IR, run the controller, integrate the kinematics.
pub fn run_sim(
    world: &SimWorld,
    spec: &RobotSpec,
    policy: Policy,
    steps: usize,
    params: &SimParams,
) -> Result<Trajectory> {
    world.validate()?;
    spec.validate()?;
    params.validate()?;
    let Policy::Forward = policy;
    let start = world.start_pose();
    if !world.rect_on_steel(&sensor_positions(&start, spec)) {
        return Err(Error::InvalidInput(
            "robot does not start fully on a plate".into(),
        ));
    }
    let alpha = world
        .plates
        .iter()
        .filter(|p| p.contains((start.x, start.y)))
        .map(|p| p.alpha)
        .fold(0.0, f64::max);
    let stability = check_stability(spec, alpha)?;
    if !stability.stable {
        return Err(Error::Unstable {
            required: stability.required,
            available: spec.magnetic_force,
        });
    }

    let mut state = RobotState::new(start, spec);
    let mut ctrl = Controller::new(params.maneuver);
    let mut trigger = CaptureTrigger::new(params.capture_interval);
    let mut out = Trajectory {
        steps: Vec::with_capacity(steps),
        captures: Vec::new(),
        mode_changes: Vec::new(),
        violations: 0,
        stability,
    };
    for step in 0..steps {
        let readings = read_ir(world, &state, spec, params.epsilon);
        state.ir = readings;
        let before = state.mode;
        let cmd = ctrl.step(&readings, &state, spec, params.epsilon);
        state.mode = ctrl.mode();
        if state.mode != before {
            out.mode_changes.push(ModeChange {
                step,
                from: before,
                to: state.mode,
            });
        }

        let dl = cmd.left * params.dt;
        let dr = cmd.right * params.dt;
        let forward = (dl + dr) / 2.0;
        let turn = (dr - dl) / spec.track;
        let mid = state.pose.heading + turn / 2.0;
        state.pose.x += forward * mid.cos();
        state.pose.y += forward * mid.sin();
        state.pose.heading += turn;
        state.wheel_travel[FRONT_RIGHT] += dr.abs();
        state.wheel_travel[REAR_RIGHT] += dr.abs();
        state.wheel_travel[FRONT_LEFT] += dl.abs();
        state.wheel_travel[REAR_LEFT] += dl.abs();

        for _ in 0..trigger.advance(forward) {
            out.captures.push(CaptureEvent {
                step,
                pose: state.pose,
                footprint: params.camera_footprint,
            });
        }
        let on_steel = world.rect_on_steel(&contact_corners(&state.pose, spec));
        if !on_steel {
            out.violations += 1;
        }
        out.steps.push(StepRecord {
            step,
            pose: state.pose,
            mode: state.mode,
            ir: readings,
            ticks: state.ticks(spec),
            on_steel,
        });
    }
    Ok(out)
}
