//! Widget conditions and their per-frame visual state.
//!
//! The two static widgets draw fixed guidance geometry at the target. The
//! dynamic widget adds five form duos near the tooltip: three `V` pairs for
//! the world-axis position error and two `(` pairs for the guidance-frame
//! rotation error. Each duo's member separation follows a normalized
//! quadratic law between the target threshold `tt` (hidden, collimated) and
//! the max threshold `mt` (frozen at `d_max`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::canon::serialize_fixed6;
use crate::error::{require_positive, ConfigError};
use crate::geometry::{compute_error, guidance_frame, GuidanceError, Pose, UnitQuat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    EntryPoint,
    TargetAxis,
    #[serde(rename = "DWEP")]
    Dwep,
    #[serde(rename = "DWTA")]
    Dwta,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::EntryPoint, Condition::TargetAxis, Condition::Dwep, Condition::Dwta];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::EntryPoint => "EntryPoint",
            Condition::TargetAxis => "TargetAxis",
            Condition::Dwep => "DWEP",
            Condition::Dwta => "DWTA",
        }
    }

    /// Whether the condition shows the form duos.
    pub fn is_dynamic(self) -> bool {
        matches!(self, Condition::Dwep | Condition::Dwta)
    }

    /// Whether any element of the condition conveys the drill orientation.
    pub fn has_rotation_cue(self) -> bool {
        self != Condition::EntryPoint
    }

    /// The static widget this condition is built on.
    pub fn static_base(self) -> Condition {
        match self {
            Condition::EntryPoint | Condition::Dwep => Condition::EntryPoint,
            Condition::TargetAxis | Condition::Dwta => Condition::TargetAxis,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Condition::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown condition `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    PX,
    PY,
    PZ,
    RX,
    RZ,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::PX, Channel::PY, Channel::PZ, Channel::RX, Channel::RZ];

    pub fn is_rotational(self) -> bool {
        matches!(self, Channel::RX | Channel::RZ)
    }

    /// Signed error component driving this channel (mm or degrees).
    pub fn component(self, e: &GuidanceError) -> f64 {
        match self {
            Channel::PX => e.pe_vec.x,
            Channel::PY => e.pe_vec.y,
            Channel::PZ => e.pe_vec.z,
            Channel::RX => e.re_x,
            Channel::RZ => e.re_z,
        }
    }

    /// World axis for positional channels, guidance-frame axis for rotational ones.
    fn axis(self) -> Vec3 {
        match self {
            Channel::PX | Channel::RX => Vec3::X,
            Channel::PY => Vec3::Y,
            Channel::PZ | Channel::RZ => Vec3::Z,
        }
    }

    fn key(self) -> &'static str {
        match self {
            Channel::PX => "px",
            Channel::PY => "py",
            Channel::PZ => "pz",
            Channel::RX => "rx",
            Channel::RZ => "rz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Area {
    Hidden,
    DynamicNonlinear,
    FrozenMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuoShape {
    V,
    Paren,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Cylinder,
    Disc,
    VForm,
    ParenForm,
    DrillAvatar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelColors {
    pub px: String,
    pub py: String,
    pub pz: String,
    pub rx: String,
    pub rz: String,
}

impl Default for ChannelColors {
    fn default() -> Self {
        Self {
            px: "#FFE0E0".into(),
            py: "#E0FFE0".into(),
            pz: "#E0E0FF".into(),
            rx: "#FFF0E0".into(),
            rz: "#E0F8FF".into(),
        }
    }
}

impl ChannelColors {
    fn get(&self, c: Channel) -> &str {
        match c {
            Channel::PX => &self.px,
            Channel::PY => &self.py,
            Channel::PZ => &self.pz,
            Channel::RX => &self.rx,
            Channel::RZ => &self.rz,
        }
    }
}

/// Virtual magnifying loupe attached to the head camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoupeConfig {
    pub disc_radius: f64,
    pub lateral_offset: f64,
    pub forward_offset: f64,
    pub magnification: f64,
}

impl Default for LoupeConfig {
    fn default() -> Self {
        Self { disc_radius: 10.0, lateral_offset: 30.0, forward_offset: 500.0, magnification: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WidgetConfig {
    pub tt_pos: f64,
    pub tt_rot: f64,
    pub mt_pos: f64,
    pub mt_rot: f64,
    pub d_max: f64,
    pub duo_radial_offset: f64,
    pub entry_point_radius: f64,
    pub entry_point_length: f64,
    pub axis_radius: f64,
    pub axis_length: f64,
    pub disc_radius: f64,
    /// Distance of the red disc from the tooltip along the tool bit axis.
    pub disc_offset: f64,
    pub duo_colors: ChannelColors,
    pub loupe: LoupeConfig,
}

impl Default for WidgetConfig {
    fn default() -> Self {
        Self {
            tt_pos: 1.0,
            tt_rot: 0.5,
            mt_pos: 100.0,
            mt_rot: 10.0,
            d_max: 30.0,
            duo_radial_offset: 15.0,
            entry_point_radius: 1.0,
            entry_point_length: 3.0,
            axis_radius: 1.0,
            axis_length: 120.0,
            disc_radius: 5.0,
            disc_offset: 20.0,
            duo_colors: ChannelColors::default(),
            loupe: LoupeConfig::default(),
        }
    }
}

impl WidgetConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("tt_pos", self.tt_pos),
            ("tt_rot", self.tt_rot),
            ("mt_pos", self.mt_pos),
            ("mt_rot", self.mt_rot),
            ("d_max", self.d_max),
            ("duo_radial_offset", self.duo_radial_offset),
            ("entry_point_radius", self.entry_point_radius),
            ("entry_point_length", self.entry_point_length),
            ("axis_radius", self.axis_radius),
            ("axis_length", self.axis_length),
            ("disc_radius", self.disc_radius),
            ("disc_offset", self.disc_offset),
            ("loupe.disc_radius", self.loupe.disc_radius),
            ("loupe.forward_offset", self.loupe.forward_offset),
            ("loupe.magnification", self.loupe.magnification),
        ] {
            require_positive(name, v)?;
        }
        if !(self.loupe.lateral_offset.is_finite() && self.loupe.lateral_offset >= 0.0) {
            return Err(ConfigError::new("loupe.lateral_offset", "must be >= 0"));
        }
        if self.tt_pos >= self.mt_pos {
            return Err(ConfigError::new("tt_pos", "must be smaller than mt_pos"));
        }
        if self.tt_rot >= self.mt_rot {
            return Err(ConfigError::new("tt_rot", "must be smaller than mt_rot"));
        }
        Ok(())
    }

    /// `(tt, mt)` for a channel.
    pub fn thresholds(&self, channel: Channel) -> (f64, f64) {
        if channel.is_rotational() {
            (self.tt_rot, self.mt_rot)
        } else {
            (self.tt_pos, self.mt_pos)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub id: String,
    pub shape: Shape,
    pub pose: Pose,
    /// Cylinders and discs: `(radius, length/thickness, radius)` along local
    /// x, y, z. Forms and the avatar: unit scale.
    pub scale: Vec3,
    pub color: String,
    pub depth_test_exempt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuoState {
    pub channel: Channel,
    pub shape: DuoShape,
    pub area: Area,
    /// Member separation in mm (arc length for rotational duos).
    #[serde(serialize_with = "serialize_fixed6")]
    pub separation: f64,
    pub pair_poses: [Pose; 2],
    pub collimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderFrame {
    pub condition: Condition,
    pub primitives: Vec<Primitive>,
    pub duos: Vec<DuoState>,
}

impl RenderFrame {
    /// Compact JSON with fixed key order and six-decimal numbers.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("render frame serialization is infallible")
    }

    pub fn visible_duo_count(&self) -> usize {
        self.duos.iter().filter(|d| d.area != Area::Hidden).count()
    }

    /// Static guidance elements (cylinders and discs) in the frame.
    pub fn static_cue_count(&self) -> usize {
        self.primitives.iter().filter(|p| matches!(p.shape, Shape::Cylinder | Shape::Disc)).count()
    }
}

/// Visibility area of a single error magnitude.
pub fn classify_area(e_abs: f64, tt: f64, mt: f64) -> Area {
    if e_abs <= tt {
        Area::Hidden
    } else if e_abs < mt {
        Area::DynamicNonlinear
    } else {
        Area::FrozenMax
    }
}

/// Duo member separation for an error magnitude on `channel`:
/// `d_max * ((clamp(e, tt, mt) - tt) / (mt - tt))^2`.
pub fn duo_separation(e_abs: f64, cfg: &WidgetConfig, channel: Channel) -> f64 {
    let (tt, mt) = cfg.thresholds(channel);
    if e_abs >= mt {
        return cfg.d_max;
    }
    let s = (e_abs.max(tt) - tt) / (mt - tt);
    cfg.d_max * s * s
}

const YELLOW: &str = "#FFFF00";
const RED: &str = "#FF0000";
const AVATAR_GREY: &str = "#C0C0C0";

fn static_primitives(tool: &Pose, target: &Pose, base: Condition, cfg: &WidgetConfig) -> Vec<Primitive> {
    let mut out = Vec::with_capacity(3);
    match base {
        Condition::EntryPoint => out.push(Primitive {
            id: "entry_point".into(),
            shape: Shape::Cylinder,
            pose: *target,
            scale: Vec3::new(cfg.entry_point_radius, cfg.entry_point_length, cfg.entry_point_radius),
            color: YELLOW.into(),
            depth_test_exempt: false,
        }),
        _ => {
            out.push(Primitive {
                id: "target_axis".into(),
                shape: Shape::Cylinder,
                pose: *target,
                scale: Vec3::new(cfg.axis_radius, cfg.axis_length, cfg.axis_radius),
                color: YELLOW.into(),
                depth_test_exempt: false,
            });
            out.push(Primitive {
                id: "tool_disc".into(),
                shape: Shape::Disc,
                pose: Pose::new(tool.transform_point(Vec3::Y * cfg.disc_offset), tool.orientation),
                scale: Vec3::new(cfg.disc_radius, 0.5, cfg.disc_radius),
                color: RED.into(),
                depth_test_exempt: false,
            });
        }
    }
    out.push(Primitive {
        id: "drill_avatar".into(),
        shape: Shape::DrillAvatar,
        pose: *tool,
        scale: Vec3::new(1.0, 1.0, 1.0),
        color: AVATAR_GREY.into(),
        depth_test_exempt: false,
    });
    out
}

fn duo_state(tool: &Pose, error: &GuidanceError, channel: Channel, cfg: &WidgetConfig) -> DuoState {
    let component = channel.component(error);
    let (tt, mt) = cfg.thresholds(channel);
    let area = classify_area(component.abs(), tt, mt);
    let separation = duo_separation(component.abs(), cfg, channel);
    let sign = if component < 0.0 { -1.0 } else { 1.0 };
    let axis = channel.axis();
    let r = cfg.duo_radial_offset;

    let pair_poses = if channel.is_rotational() {
        // members sit on a circle of radius r about the guidance-frame axis,
        // separated by an arc of length `separation`
        let rest_local = if channel == Channel::RX { Vec3::Z * r } else { Vec3::X * r };
        let half_deg = (0.5 * separation / r).to_degrees();
        let member = |s: f64| {
            let q = UnitQuat::from_axis_angle(axis, s * sign * half_deg).expect("unit axis");
            tool.compose(&Pose::new(q.rotate(rest_local), q))
        };
        [member(1.0), member(-1.0)]
    } else {
        let rest = tool.position + axis * r;
        let offset = axis * (sign * 0.5 * separation);
        let facing = |dir: Vec3| UnitQuat::from_to(Vec3::Y, dir).expect("unit axis");
        [Pose::new(rest + offset, facing(axis * -sign)), Pose::new(rest - offset, facing(axis * sign))]
    };

    DuoState {
        channel,
        shape: if channel.is_rotational() { DuoShape::Paren } else { DuoShape::V },
        area,
        separation,
        pair_poses,
        collimated: area == Area::Hidden,
    }
}

/// Form duos of the dynamic widget and the primitives for the visible ones.
pub fn dynamic_widget(tool: &Pose, target: &Pose, cfg: &WidgetConfig) -> (Vec<Primitive>, Vec<DuoState>) {
    let error = compute_error(tool, target);
    // rotational duos turn about the axes the error components refer to
    let anchor = Pose::new(tool.position, guidance_frame(&tool.orientation, &target.orientation));
    let duos: Vec<DuoState> = Channel::ALL.iter().map(|&c| duo_state(&anchor, &error, c, cfg)).collect();
    let mut prims = Vec::new();
    for d in duos.iter().filter(|d| d.area != Area::Hidden) {
        let shape = match d.shape {
            DuoShape::V => Shape::VForm,
            DuoShape::Paren => Shape::ParenForm,
        };
        for (member, pose) in ["a", "b"].iter().zip(d.pair_poses) {
            prims.push(Primitive {
                id: format!("duo.{}.{member}", d.channel.key()),
                shape,
                pose,
                scale: Vec3::new(1.0, 1.0, 1.0),
                color: cfg.duo_colors.get(d.channel).to_owned(),
                depth_test_exempt: true,
            });
        }
    }
    (prims, duos)
}

/// Visual state of `condition` for one tool/target pair.
pub fn build_frame(tool: &Pose, target: &Pose, condition: Condition, cfg: &WidgetConfig) -> RenderFrame {
    let mut primitives = static_primitives(tool, target, condition.static_base(), cfg);
    let mut duos = Vec::new();
    if condition.is_dynamic() {
        let (prims, states) = dynamic_widget(tool, target, cfg);
        primitives.extend(prims);
        duos = states;
    }
    RenderFrame { condition, primitives, duos }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomViewport {
    /// Camera pose of the zoom view, looking along its local +z.
    pub pose: Pose,
    #[serde(serialize_with = "serialize_fixed6")]
    pub magnification: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loupe {
    pub discs: [Primitive; 2],
    pub viewport: ZoomViewport,
}

/// Two lens discs rigidly attached ahead of the head camera (local +z is
/// forward, local +x lateral). Disc normals (local y) face the camera axis.
pub fn loupe_geometry(head: &Pose, cfg: &LoupeConfig) -> Loupe {
    let facing = head.orientation * UnitQuat::from_axis_angle(Vec3::X, 90.0).expect("unit axis");
    let disc = |id: &str, lateral: f64| Primitive {
        id: id.into(),
        shape: Shape::Disc,
        pose: Pose::new(head.transform_point(Vec3::new(lateral, 0.0, cfg.forward_offset)), facing),
        scale: Vec3::new(cfg.disc_radius, 0.5, cfg.disc_radius),
        color: "#FFFFFF".into(),
        depth_test_exempt: true,
    };
    Loupe {
        discs: [disc("loupe.left", -cfg.lateral_offset), disc("loupe.right", cfg.lateral_offset)],
        viewport: ZoomViewport {
            pose: Pose::new(head.transform_point(Vec3::Z * cfg.forward_offset), head.orientation),
            magnification: cfg.magnification,
        },
    }
}
