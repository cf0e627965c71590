//! Multi-dimensional coordinates, row-major linearization, and tile grids.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{GnaError, Result};

pub const MAX_RANK: usize = 3;

fn check_rank(rank: usize) -> Result<()> {
    if (1..=MAX_RANK).contains(&rank) {
        Ok(())
    } else {
        Err(GnaError::InvalidRank(rank))
    }
}

/// Per-axis extents of a token grid or tile; 1 to 3 axes, all positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(extents: impl Into<Vec<usize>>) -> Result<Self> {
        let extents = extents.into();
        check_rank(extents.len())?;
        if let Some(axis) = extents.iter().position(|&e| e == 0) {
            return Err(GnaError::ZeroValue { what: "extent", axis });
        }
        Ok(Self(extents))
    }

    /// A shape of `rank` axes, each of extent `value`.
    pub fn uniform(rank: usize, value: usize) -> Result<Self> {
        Self::new(vec![value; rank])
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.0
    }

    pub fn volume(&self) -> usize {
        self.0.iter().product()
    }

    pub fn contains(&self, coord: &Coord) -> bool {
        coord.rank() == self.rank() && coord.0.iter().zip(&self.0).all(|(c, e)| c < e)
    }

    /// Row-major iteration over every in-bounds coordinate.
    pub fn iter_coords(&self) -> CoordIter {
        CoordIter {
            extents: self.0.clone(),
            next: Some(vec![0; self.rank()]),
        }
    }

    pub(crate) fn ensure_rank(&self, what: &'static str, rank: usize) -> Result<()> {
        if self.rank() == rank {
            Ok(())
        } else {
            Err(GnaError::RankMismatch {
                what,
                expected: rank,
                found: self.rank(),
            })
        }
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = GnaError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Shape::new(v)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.0
    }
}

impl std::ops::Index<usize> for Shape {
    type Output = usize;
    fn index(&self, axis: usize) -> &usize {
        &self.0[axis]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_joined(f, &self.0)
    }
}

/// A multi-dimensional index (token or tile coordinate).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coord(Vec<usize>);

impl Coord {
    pub fn new(values: impl Into<Vec<usize>>) -> Result<Self> {
        let values = values.into();
        check_rank(values.len())?;
        Ok(Self(values))
    }

    pub(crate) fn from_vec(values: Vec<usize>) -> Self {
        debug_assert!((1..=MAX_RANK).contains(&values.len()));
        Self(values)
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }
}

impl std::ops::Index<usize> for Coord {
    type Output = usize;
    fn index(&self, axis: usize) -> &usize {
        &self.0[axis]
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

fn write_joined(f: &mut fmt::Formatter<'_>, values: &[usize]) -> fmt::Result {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            f.write_str("x")?;
        }
        write!(f, "{v}")?;
    }
    Ok(())
}

pub struct CoordIter {
    extents: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for CoordIter {
    type Item = Coord;

    fn next(&mut self) -> Option<Coord> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for axis in (0..succ.len()).rev() {
            succ[axis] += 1;
            if succ[axis] < self.extents[axis] {
                self.next = Some(succ);
                break;
            }
            succ[axis] = 0;
        }
        Some(Coord(current))
    }
}

/// Row-major index of `coord` within `shape` (last axis fastest).
pub fn linearize(coord: &Coord, shape: &Shape) -> Result<usize> {
    shape.ensure_rank("coordinate", coord.rank())?;
    let mut index = 0;
    for (axis, (&c, &e)) in coord.0.iter().zip(&shape.0).enumerate() {
        if c >= e {
            return Err(GnaError::CoordOutOfBounds {
                axis,
                value: c,
                extent: e,
            });
        }
        index = index * e + c;
    }
    Ok(index)
}

/// Inverse of [`linearize`].
pub fn delinearize(index: usize, shape: &Shape) -> Result<Coord> {
    let len = shape.volume();
    if index >= len {
        return Err(GnaError::IndexOutOfRange { index, len });
    }
    let mut values = vec![0; shape.rank()];
    let mut rest = index;
    for axis in (0..shape.rank()).rev() {
        values[axis] = rest % shape.0[axis];
        rest /= shape.0[axis];
    }
    Ok(Coord(values))
}

/// Number of tiles per axis (ceiling division; trailing tiles may be partial).
pub fn tile_grid(shape: &Shape, tile: &Shape) -> Result<Shape> {
    shape.ensure_rank("tile", tile.rank())?;
    Ok(Shape(
        shape.0.iter().zip(&tile.0).map(|(&s, &t)| s.div_ceil(t)).collect(),
    ))
}

/// Per-axis extents rounded up to a whole number of tiles.
pub fn padded_extents(shape: &Shape, tile: &Shape) -> Result<Shape> {
    let grid = tile_grid(shape, tile)?;
    Ok(Shape(grid.0.iter().zip(&tile.0).map(|(g, t)| g * t).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(v: &[usize]) -> Shape {
        Shape::new(v.to_vec()).unwrap()
    }

    fn coord(v: &[usize]) -> Coord {
        Coord::new(v.to_vec()).unwrap()
    }

    /// Counts positions with an explicit loop nest instead of the fold in `linearize`.
    fn loop_nest_index(target: &[usize], extents: &[usize]) -> usize {
        let mut n = 0;
        for a in 0..extents[0] {
            for b in 0..extents[1] {
                for c in 0..extents[2] {
                    if [a, b, c] == target {
                        return n;
                    }
                    n += 1;
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn linearize_examples() {
        assert_eq!(linearize(&coord(&[0, 0]), &shape(&[4, 4])).unwrap(), 0);
        assert_eq!(linearize(&coord(&[1, 2]), &shape(&[4, 4])).unwrap(), 6);
        let expected = loop_nest_index(&[2, 3, 7], &[30, 48, 80]);
        assert_eq!(expected, 7927);
        assert_eq!(linearize(&coord(&[2, 3, 7]), &shape(&[30, 48, 80])).unwrap(), 7927);
    }

    #[test]
    fn delinearize_examples() {
        assert_eq!(delinearize(6, &shape(&[4, 4])).unwrap(), coord(&[1, 2]));
        assert_eq!(delinearize(0, &shape(&[30, 48, 80])).unwrap(), coord(&[0, 0, 0]));
        assert_eq!(delinearize(7927, &shape(&[30, 48, 80])).unwrap(), coord(&[2, 3, 7]));
    }

    #[test]
    fn linearize_errors() {
        assert_eq!(
            linearize(&coord(&[1, 2]), &shape(&[4, 4, 4])),
            Err(GnaError::RankMismatch {
                what: "coordinate",
                expected: 2,
                found: 3
            })
        );
        assert!(matches!(
            linearize(&coord(&[4, 0]), &shape(&[4, 4])),
            Err(GnaError::CoordOutOfBounds { axis: 0, .. })
        ));
        assert!(matches!(
            delinearize(16, &shape(&[4, 4])),
            Err(GnaError::IndexOutOfRange { index: 16, len: 16 })
        ));
    }

    #[test]
    fn tile_grid_examples() {
        assert_eq!(
            tile_grid(&shape(&[30, 48, 80]), &shape(&[2, 8, 8])).unwrap(),
            shape(&[15, 6, 10])
        );
        assert_eq!(
            tile_grid(&shape(&[30, 48, 80]), &shape(&[2, 8, 8])).unwrap().volume(),
            900
        );
        assert_eq!(
            tile_grid(&shape(&[30, 48, 80]), &shape(&[4, 8, 8])).unwrap(),
            shape(&[8, 6, 10])
        );
        assert_eq!(tile_grid(&shape(&[8]), &shape(&[8])).unwrap(), shape(&[1]));
        assert!(tile_grid(&shape(&[8]), &shape(&[8, 8])).is_err());
    }

    #[test]
    fn shape_validation() {
        assert_eq!(Shape::new(vec![]), Err(GnaError::InvalidRank(0)));
        assert_eq!(Shape::new(vec![1, 2, 3, 4]), Err(GnaError::InvalidRank(4)));
        assert!(matches!(
            Shape::new(vec![3, 0]),
            Err(GnaError::ZeroValue { axis: 1, .. })
        ));
        assert!(Shape::try_from(vec![2, 0]).is_err());
    }

    #[test]
    fn exhaustive_round_trip() {
        for extents in [vec![7], vec![5, 9], vec![3, 4, 5], vec![46, 47, 46]] {
            let s = shape(&extents);
            for (i, c) in s.iter_coords().enumerate() {
                assert_eq!(linearize(&c, &s).unwrap(), i);
                assert_eq!(delinearize(i, &s).unwrap(), c);
            }
        }
    }

    #[test]
    fn tile_grid_covers_exactly() {
        for e in 1..=20 {
            for t in 1..=20 {
                let g = tile_grid(&shape(&[e]), &shape(&[t])).unwrap()[0];
                assert!(g * t >= e);
                assert!((g - 1) * t < e);
            }
        }
    }
}
