//! Operator vocabulary: signatures, unit tags and coordinate-frame classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Tag attached to every argument position of an operator.
///
/// `Sketch` and `Solid` mark references to earlier temporaries; the other
/// tags describe the physical meaning of a numeric (or plane) literal and
/// drive literal scaling in canonicalization and rotation rewriting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitTag {
    Length,
    Angle,
    Count,
    Ratio,
    Axis,
    Plane,
    Sketch,
    Solid,
}

impl UnitTag {
    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            UnitTag::Length | UnitTag::Angle | UnitTag::Count | UnitTag::Ratio | UnitTag::Axis
        )
    }

    pub fn is_ref(self) -> bool {
        matches!(self, UnitTag::Sketch | UnitTag::Solid)
    }

    pub fn name(self) -> &'static str {
        match self {
            UnitTag::Length => "length",
            UnitTag::Angle => "angle",
            UnitTag::Count => "count",
            UnitTag::Ratio => "ratio",
            UnitTag::Axis => "axis",
            UnitTag::Plane => "plane",
            UnitTag::Sketch => "sketch",
            UnitTag::Solid => "solid",
        }
    }
}

impl fmt::Display for UnitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UnitTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "length" => UnitTag::Length,
            "angle" => UnitTag::Angle,
            "count" => UnitTag::Count,
            "ratio" => UnitTag::Ratio,
            "axis" => UnitTag::Axis,
            _ => return Err(format!("unknown unit tag `{s}`")),
        })
    }
}

/// Coordinate frame in which an operator's arguments are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameClass {
    /// Interpreted in the owning workplane frame (or frame-free).
    Local,
    /// Interpreted in the world frame; rewritten under rotation.
    Global,
}

/// Kind of value an operator produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueKind {
    Number,
    Sketch,
    Solid,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Number => "number",
            ValueKind::Sketch => "sketch",
            ValueKind::Solid => "solid",
        })
    }
}

macro_rules! op_kinds {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Every constructive operator of the language.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum OpKind { $($variant),* }

        impl OpKind {
            pub const ALL: &'static [OpKind] = &[$(OpKind::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(OpKind::$variant => $name),* }
            }

            pub fn from_name(name: &str) -> Option<OpKind> {
                match name { $($name => Some(OpKind::$variant),)* _ => None }
            }
        }
    };
}

op_kinds! {
    Workplane => "workplane",
    MoveTo => "move_to",
    LineTo => "line_to",
    ArcTo => "arc_to",
    Close => "close",
    Rect => "rect",
    Circle => "circle",
    Polygon => "polygon",
    Extrude => "extrude",
    Revolve => "revolve",
    Loft => "loft",
    Sweep => "sweep",
    Box => "box",
    Cylinder => "cylinder",
    Sphere => "sphere",
    Union => "union",
    Cut => "cut",
    Intersect => "intersect",
    Translate => "translate",
    Rotate => "rotate",
    Mirror => "mirror",
    Hole => "hole",
    Shell => "shell",
    Fillet => "fillet",
    Chamfer => "chamfer",
    RectArray => "rect_array",
    PolarArray => "polar_array",
    Scale => "scale",
}

/// A group of consecutive argument positions that form a world-frame vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorArg {
    /// A point or displacement (length-tagged components).
    Point(usize),
    /// A direction (axis-tagged components).
    Direction(usize),
}

impl VectorArg {
    pub fn start(self) -> usize {
        match self {
            VectorArg::Point(i) | VectorArg::Direction(i) => i,
        }
    }
}

/// Static signature of an operator.
#[derive(Debug, Clone, Copy)]
pub struct Signature {
    pub args: &'static [UnitTag],
    pub output: ValueKind,
    pub frame: FrameClass,
    /// World-frame vectors inside `args` (GLOBAL ops and workplane origins).
    pub vectors: &'static [VectorArg],
}

use UnitTag::*;

impl OpKind {
    pub fn signature(self) -> Signature {
        let (args, output, frame, vectors): (&'static [UnitTag], _, _, &'static [VectorArg]) =
            match self {
                // plane code, origin
                OpKind::Workplane => (
                    &[Plane, Length, Length, Length],
                    ValueKind::Sketch,
                    FrameClass::Global,
                    &[VectorArg::Point(1)],
                ),
                OpKind::MoveTo | OpKind::LineTo => (
                    &[Sketch, Length, Length],
                    ValueKind::Sketch,
                    FrameClass::Local,
                    &[],
                ),
                // mid point, end point
                OpKind::ArcTo => (
                    &[Sketch, Length, Length, Length, Length],
                    ValueKind::Sketch,
                    FrameClass::Local,
                    &[],
                ),
                OpKind::Close => (&[Sketch], ValueKind::Sketch, FrameClass::Local, &[]),
                OpKind::Rect => (
                    &[Sketch, Length, Length],
                    ValueKind::Sketch,
                    FrameClass::Local,
                    &[],
                ),
                OpKind::Circle => (&[Sketch, Length], ValueKind::Sketch, FrameClass::Local, &[]),
                // side count, circumscribed diameter
                OpKind::Polygon => (
                    &[Sketch, Count, Length],
                    ValueKind::Sketch,
                    FrameClass::Local,
                    &[],
                ),
                OpKind::Extrude => (&[Sketch, Length], ValueKind::Solid, FrameClass::Local, &[]),
                // angle, axis start (x, y), axis end (x, y) in the sketch plane
                OpKind::Revolve => (
                    &[Sketch, Angle, Length, Length, Length, Length],
                    ValueKind::Solid,
                    FrameClass::Local,
                    &[],
                ),
                OpKind::Loft => (&[Sketch, Sketch], ValueKind::Solid, FrameClass::Local, &[]),
                // profile, path
                OpKind::Sweep => (&[Sketch, Sketch], ValueKind::Solid, FrameClass::Local, &[]),
                OpKind::Box => (
                    &[Sketch, Length, Length, Length],
                    ValueKind::Solid,
                    FrameClass::Local,
                    &[],
                ),
                // height, radius
                OpKind::Cylinder => (
                    &[Sketch, Length, Length],
                    ValueKind::Solid,
                    FrameClass::Local,
                    &[],
                ),
                OpKind::Sphere => (&[Sketch, Length], ValueKind::Solid, FrameClass::Local, &[]),
                OpKind::Union | OpKind::Cut | OpKind::Intersect => {
                    (&[Solid, Solid], ValueKind::Solid, FrameClass::Local, &[])
                }
                OpKind::Translate => (
                    &[Solid, Length, Length, Length],
                    ValueKind::Solid,
                    FrameClass::Global,
                    &[VectorArg::Point(1)],
                ),
                // pivot point, axis direction, angle
                OpKind::Rotate => (
                    &[Solid, Length, Length, Length, Axis, Axis, Axis, Angle],
                    ValueKind::Solid,
                    FrameClass::Global,
                    &[VectorArg::Point(1), VectorArg::Direction(4)],
                ),
                // plane normal, base point
                OpKind::Mirror => (
                    &[Solid, Axis, Axis, Axis, Length, Length, Length],
                    ValueKind::Solid,
                    FrameClass::Global,
                    &[VectorArg::Direction(1), VectorArg::Point(4)],
                ),
                // target solid, workplane locating the hole, diameter, depth
                OpKind::Hole => (
                    &[Solid, Sketch, Length, Length],
                    ValueKind::Solid,
                    FrameClass::Local,
                    &[],
                ),
                OpKind::Shell | OpKind::Fillet | OpKind::Chamfer => {
                    (&[Solid, Length], ValueKind::Solid, FrameClass::Local, &[])
                }
                // x spacing, y spacing, x count, y count
                OpKind::RectArray => (
                    &[Sketch, Length, Length, Count, Count],
                    ValueKind::Sketch,
                    FrameClass::Local,
                    &[],
                ),
                // radius, start angle, sweep angle, count
                OpKind::PolarArray => (
                    &[Sketch, Length, Angle, Angle, Count],
                    ValueKind::Sketch,
                    FrameClass::Local,
                    &[],
                ),
                OpKind::Scale => (&[Solid, Ratio], ValueKind::Solid, FrameClass::Global, &[]),
            };
        Signature {
            args,
            output,
            frame,
            vectors,
        }
    }

    pub fn frame_class(self) -> FrameClass {
        self.signature().frame
    }

    pub fn output(self) -> ValueKind {
        self.signature().output
    }

    /// Kernel treats these as identity and reports them as approximated.
    pub fn is_approximated(self) -> bool {
        matches!(self, OpKind::Fillet | OpKind::Chamfer)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for &op in OpKind::ALL {
            assert_eq!(OpKind::from_name(op.name()), Some(op));
        }
        assert_eq!(OpKind::ALL.len(), 28);
    }

    #[test]
    fn classification_is_total() {
        let mut local = 0;
        let mut global = 0;
        for &op in OpKind::ALL {
            match op.frame_class() {
                FrameClass::Local => local += 1,
                FrameClass::Global => global += 1,
            }
        }
        assert_eq!(local + global, OpKind::ALL.len());
        for op in [
            OpKind::Translate,
            OpKind::Rotate,
            OpKind::Mirror,
            OpKind::Scale,
            OpKind::Workplane,
        ] {
            assert_eq!(op.frame_class(), FrameClass::Global, "{op}");
        }
    }

    #[test]
    fn vector_groups_are_in_bounds() {
        for &op in OpKind::ALL {
            let sig = op.signature();
            for v in sig.vectors {
                let want = match v {
                    VectorArg::Point(_) => UnitTag::Length,
                    VectorArg::Direction(_) => UnitTag::Axis,
                };
                for k in 0..3 {
                    assert_eq!(sig.args[v.start() + k], want, "{op}");
                }
            }
            let refs = sig.args.iter().take_while(|t| t.is_ref()).count();
            assert!(refs >= 1 || op == OpKind::Workplane, "{op} takes no input");
        }
    }
}
