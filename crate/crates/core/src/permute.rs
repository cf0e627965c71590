//! Token permutation: re-layout that makes every multi-dimensional tile a
//! contiguous range, so a one-dimensional tiling kernel sees the same tiles.

use serde::{Deserialize, Serialize};

use crate::coords::{delinearize, linearize, padded_extents, tile_grid, Coord, Shape};
use crate::error::{GnaError, Result};
use crate::sim::FlatOrder;

/// Bijection on the padded index space `[0, padded volume)`.
///
/// Padding slots take part in the map; use [`PermutationMap::is_real`] to
/// filter them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationMap {
    /// `forward[i]` is the destination of padded row-major index `i`
    /// (or, for an inverse map, of permuted position `i`).
    pub forward: Vec<usize>,
    pub layout: Shape,
    pub tile: Shape,
    pub padded_extents: Shape,
    /// Maps permuted positions back to padded row-major indices.
    #[serde(default)]
    pub inverse: bool,
}

/// Row-major tile index times tile volume plus row-major index within the tile.
pub fn permutation_map(layout: &Shape, tile: &Shape) -> Result<PermutationMap> {
    let grid = tile_grid(layout, tile)?;
    let padded = padded_extents(layout, tile)?;
    let rank = layout.rank();
    let volume = tile.volume();
    let forward = padded
        .iter_coords()
        .map(|c| {
            let t = Coord::from_vec((0..rank).map(|a| c[a] / tile[a]).collect());
            let within = Coord::from_vec((0..rank).map(|a| c[a] % tile[a]).collect());
            linearize(&t, &grid).expect("in grid") * volume + linearize(&within, tile).expect("in tile")
        })
        .collect();
    Ok(PermutationMap {
        forward,
        layout: layout.clone(),
        tile: tile.clone(),
        padded_extents: padded,
        inverse: false,
    })
}

pub fn inverse_map(m: &PermutationMap) -> PermutationMap {
    let mut inv = vec![0; m.forward.len()];
    for (i, &p) in m.forward.iter().enumerate() {
        inv[p] = i;
    }
    PermutationMap {
        forward: inv,
        layout: m.layout.clone(),
        tile: m.tile.clone(),
        padded_extents: m.padded_extents.clone(),
        inverse: !m.inverse,
    }
}

impl PermutationMap {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Whether padded row-major index `padded_index` is a layout token.
    pub fn is_real(&self, padded_index: usize) -> bool {
        delinearize(padded_index, &self.padded_extents).is_ok_and(|c| self.layout.contains(&c))
    }

    /// `out[forward[i]] = data[i]`.
    pub fn apply<T: Clone>(&self, data: &[T]) -> Result<Vec<T>> {
        if data.len() != self.len() {
            return Err(GnaError::ShapeMismatch(format!(
                "map covers {} slots, data has {}",
                self.len(),
                data.len()
            )));
        }
        let mut out = data.to_vec();
        for (i, x) in data.iter().enumerate() {
            out[self.forward[i]] = x.clone();
        }
        Ok(out)
    }

    /// Permuted position of every layout token, in row-major token order.
    pub fn token_positions(&self) -> Vec<usize> {
        debug_assert!(!self.inverse);
        self.layout
            .iter_coords()
            .map(|c| self.forward[linearize(&c, &self.padded_extents).expect("padded covers layout")])
            .collect()
    }
}

/// Flat token order produced by permuting queries by `q_tile` and keys by
/// `kv_tile`, padding included.
pub fn permuted_order(layout: &Shape, q_tile: &Shape, kv_tile: &Shape) -> Result<FlatOrder> {
    let q = permutation_map(layout, q_tile)?;
    let kv = permutation_map(layout, kv_tile)?;
    FlatOrder::new(q.token_positions(), q.len(), kv.token_positions(), kv.len())
}

/// Share of attention time spent permuting a tensor in and back out
/// (`2 · bytes / bandwidth / attention_time`).
pub fn permute_overhead(tensor_bytes: u64, bandwidth: f64, attention_time: f64) -> Result<f64> {
    if tensor_bytes == 0 {
        return Err(GnaError::NonPositive("tensor_bytes"));
    }
    for (v, what) in [(bandwidth, "bandwidth"), (attention_time, "attention_time")] {
        if v.is_nan() {
            return Err(GnaError::NonFinite(what));
        }
        if v <= 0.0 {
            return Err(GnaError::NonPositive(what));
        }
    }
    Ok(2.0 * tensor_bytes as f64 / bandwidth / attention_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape(v: &[usize]) -> Shape {
        Shape::new(v.to_vec()).unwrap()
    }

    #[test]
    fn first_tile_is_contiguous() {
        let m = permutation_map(&shape(&[4, 4]), &shape(&[2, 2])).unwrap();
        let got: Vec<usize> = [0, 1, 4, 5].iter().map(|&i| m.forward[i]).collect();
        assert_eq!(got, vec![0, 1, 2, 3]);
    }

    #[test]
    fn unit_tile_is_identity() {
        let m = permutation_map(&shape(&[4, 4]), &shape(&[1, 1])).unwrap();
        assert_eq!(m.forward, (0..16).collect::<Vec<_>>());
        assert_eq!(inverse_map(&m).forward, m.forward);
    }

    #[test]
    fn padding_slots() {
        let m = permutation_map(&shape(&[3, 3]), &shape(&[2, 2])).unwrap();
        assert_eq!(m.padded_extents, shape(&[4, 4]));
        assert_eq!(m.len(), 16);
        assert_eq!((0..16).filter(|&i| m.is_real(i)).count(), 9);
        let real_positions: Vec<usize> = m.token_positions();
        // padding is interleaved: positions of real tokens are not a prefix
        assert!(real_positions.iter().any(|&p| p >= 9));
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let rank = rng.gen_range(1..=3);
            let layout: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=21)).collect();
            let tile: Vec<usize> = layout.iter().map(|&e| rng.gen_range(1..=e)).collect();
            let m = permutation_map(&shape(&layout), &shape(&tile)).unwrap();
            let inv = inverse_map(&m);
            let data: Vec<usize> = (0..m.len()).collect();
            assert_eq!(inv.apply(&m.apply(&data).unwrap()).unwrap(), data);
            // positional containment: a token lands inside its own tile's range
            let grid = tile_grid(&m.layout, &m.tile).unwrap();
            let vol = m.tile.volume();
            let positions = m.token_positions();
            for (tok, c) in m.layout.iter_coords().enumerate() {
                let t = Coord::new((0..rank).map(|a| c[a] / tile[a]).collect::<Vec<_>>()).unwrap();
                assert_eq!(positions[tok] / vol, linearize(&t, &grid).unwrap());
            }
        }
    }

    #[test]
    fn overhead() {
        assert!((permute_overhead(4_000_000_000, 4e12, 1.0).unwrap() - 0.002).abs() < 1e-15);
        let f = permute_overhead(19, 2.0, 1000.0).unwrap();
        assert!((f - 0.019).abs() < 1e-15);
        assert!(permute_overhead(1, 1e300, 1.0).unwrap() < 1e-299);
        assert!(permute_overhead(0, 1.0, 1.0).is_err());
        assert!(permute_overhead(1, -1.0, 1.0).is_err());
    }

    #[test]
    fn json_export() {
        let m = permutation_map(&shape(&[2, 2]), &shape(&[1, 2])).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["forward"], serde_json::json!([0, 1, 2, 3]));
        assert_eq!(v["padded_extents"], serde_json::json!([2, 2]));
    }
}
