//! Axis-aligned workplane frames encoded as two signed axis letters.
//!
//! `"XY"` is the frame with x-direction +X and y-direction +Y (normal +Z);
//! `"XZ"` has normal −Y, matching CadQuery's named planes. A leading `-`
//! flips an axis, so all 24 right-handed axis-aligned frames are expressible.

use std::fmt;
use std::str::FromStr;

/// A signed coordinate axis: `axis` in 0..3, `sign` ±1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedAxis {
    pub axis: usize,
    pub sign: i8,
}

impl SignedAxis {
    pub fn vector(self) -> [i8; 3] {
        let mut v = [0i8; 3];
        v[self.axis] = self.sign;
        v
    }

    pub fn from_vector(v: [i8; 3]) -> Option<SignedAxis> {
        let mut found = None;
        for (axis, &c) in v.iter().enumerate() {
            if c != 0 {
                if found.is_some() || c.abs() != 1 {
                    return None;
                }
                found = Some(SignedAxis { axis, sign: c });
            }
        }
        found
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlaneCode {
    pub x_dir: SignedAxis,
    pub y_dir: SignedAxis,
}

impl PlaneCode {
    pub const XY: PlaneCode = PlaneCode {
        x_dir: SignedAxis { axis: 0, sign: 1 },
        y_dir: SignedAxis { axis: 1, sign: 1 },
    };

    pub fn new(x_dir: SignedAxis, y_dir: SignedAxis) -> Option<PlaneCode> {
        (x_dir.axis != y_dir.axis).then_some(PlaneCode { x_dir, y_dir })
    }

    pub fn normal(self) -> [i8; 3] {
        let a = self.x_dir.vector();
        let b = self.y_dir.vector();
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    /// Frame axes (x, y, normal) as float vectors.
    pub fn axes(self) -> [[f64; 3]; 3] {
        let f = |v: [i8; 3]| [v[0] as f64, v[1] as f64, v[2] as f64];
        [
            f(self.x_dir.vector()),
            f(self.y_dir.vector()),
            f(self.normal()),
        ]
    }
}

impl fmt::Display for PlaneCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in [self.x_dir, self.y_dir] {
            if a.sign < 0 {
                f.write_str("-")?;
            }
            f.write_str(["X", "Y", "Z"][a.axis])?;
        }
        Ok(())
    }
}

impl FromStr for PlaneCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut axes = Vec::with_capacity(2);
        let mut sign = 1i8;
        for c in s.chars() {
            match c {
                '-' => sign = -1,
                '+' => sign = 1,
                'X' | 'Y' | 'Z' => {
                    let axis = (c as u8 - b'X') as usize;
                    axes.push(SignedAxis { axis, sign });
                    sign = 1;
                }
                _ => return Err(format!("invalid plane code `{s}`")),
            }
        }
        match axes.as_slice() {
            [x, y] => PlaneCode::new(*x, *y).ok_or_else(|| format!("degenerate plane code `{s}`")),
            _ => Err(format!("invalid plane code `{s}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cadquery_named_planes() {
        let n = |s: &str| s.parse::<PlaneCode>().unwrap().normal();
        assert_eq!(n("XY"), [0, 0, 1]);
        assert_eq!(n("YZ"), [1, 0, 0]);
        assert_eq!(n("ZX"), [0, 1, 0]);
        assert_eq!(n("XZ"), [0, -1, 0]);
    }

    #[test]
    fn all_frames_round_trip() {
        let mut count = 0;
        for xa in 0..3 {
            for ya in 0..3 {
                for xs in [-1, 1] {
                    for ys in [-1, 1] {
                        let Some(p) = PlaneCode::new(
                            SignedAxis { axis: xa, sign: xs },
                            SignedAxis { axis: ya, sign: ys },
                        ) else {
                            continue;
                        };
                        count += 1;
                        assert_eq!(p.to_string().parse::<PlaneCode>().unwrap(), p);
                    }
                }
            }
        }
        assert_eq!(count, 24);
        assert!("XX".parse::<PlaneCode>().is_err());
        assert!("X".parse::<PlaneCode>().is_err());
    }
}
