use super::{Geometry, Volume, VoxelGrid};
use crate::error::{Error, Result};
use crate::par;

/// Sub-volume size used for segmentation.
pub const DEFAULT_TILE_DIMS: [usize; 3] = [192, 192, 128];

#[derive(Clone, Debug)]
pub struct Tile {
    /// Position of the tile's first voxel in the source lattice.
    pub offset: [usize; 3],
    /// Voxels past the source's upper edge, filled by edge replication.
    pub padding: [usize; 3],
    pub grid: VoxelGrid,
}

#[derive(Clone, Debug)]
pub struct TileSet {
    pub source: Geometry,
    pub tile_dims: [usize; 3],
    pub overlap: [usize; 3],
    pub tiles: Vec<Tile>,
}

fn axis_offsets(n: usize, t: usize, overlap: usize) -> Vec<usize> {
    let mut offsets = vec![0];
    let stride = t - overlap;
    while offsets.last().unwrap() + t < n {
        let next = offsets.last().unwrap() + stride;
        offsets.push(next);
    }
    offsets
}

/// Splits `grid` into overlapping tiles of `tile_dims`.
pub fn tile(grid: &VoxelGrid, tile_dims: [usize; 3], overlap: [usize; 3]) -> Result<TileSet> {
    for a in 0..3 {
        if tile_dims[a] == 0 || overlap[a] >= tile_dims[a] {
            return Err(Error::invalid(format!(
                "overlap {:?} must be smaller than tile dims {:?}",
                overlap, tile_dims
            )));
        }
    }
    let src = grid.geom;
    let offsets: [Vec<usize>; 3] = std::array::from_fn(|a| axis_offsets(src.dims[a], tile_dims[a], overlap[a]));
    let mut origins = Vec::new();
    for &oz in &offsets[2] {
        for &oy in &offsets[1] {
            for &ox in &offsets[0] {
                origins.push([ox, oy, oz]);
            }
        }
    }
    let tiles = par::map_slice(&origins, |&offset| {
        let padding = std::array::from_fn(|a| (offset[a] + tile_dims[a]).saturating_sub(src.dims[a]));
        let geom = Geometry { dims: tile_dims, spacing: src.spacing, origin: src.position(offset) };
        let mut data = Vec::with_capacity(geom.len());
        for z in 0..tile_dims[2] {
            let zs = (offset[2] + z).min(src.dims[2] - 1);
            for y in 0..tile_dims[1] {
                let ys = (offset[1] + y).min(src.dims[1] - 1);
                for x in 0..tile_dims[0] {
                    let xs = (offset[0] + x).min(src.dims[0] - 1);
                    data.push(*grid.at(xs, ys, zs));
                }
            }
        }
        Tile { offset, padding, grid: Volume { geom, data } }
    });
    Ok(TileSet { source: src, tile_dims, overlap, tiles })
}

impl TileSet {
    /// Applies `f` to every tile, keeping offsets and padding.
    pub fn map<F>(&self, f: F) -> TileSet
    where
        F: Fn(&VoxelGrid) -> VoxelGrid + Sync + Send,
    {
        let tiles = par::map_slice(&self.tiles, |t| Tile { offset: t.offset, padding: t.padding, grid: f(&t.grid) });
        TileSet { tiles, ..self.clone_header() }
    }

    fn clone_header(&self) -> TileSet {
        TileSet { source: self.source, tile_dims: self.tile_dims, overlap: self.overlap, tiles: Vec::new() }
    }
}

/// Reassembles the source grid. In overlaps each voxel comes from the tile
/// whose center is closer: the cut sits halfway through the overlap.
pub fn stitch(set: &TileSet) -> Result<VoxelGrid> {
    let src = set.source;
    let offsets: [Vec<usize>; 3] = std::array::from_fn(|a| {
        let mut v: Vec<usize> = set.tiles.iter().map(|t| t.offset[a]).collect();
        v.sort_unstable();
        v.dedup();
        v
    });
    // owner[a][i] = (index into offsets[a], local coordinate)
    let owner: [Vec<(usize, usize)>; 3] = std::array::from_fn(|a| {
        let offs = &offsets[a];
        let mut map = Vec::with_capacity(src.dims[a]);
        let mut k = 0;
        for i in 0..src.dims[a] {
            while k + 1 < offs.len() && i >= offs[k + 1] + set.overlap[a] / 2 {
                k += 1;
            }
            map.push((k, i - offs[k]));
        }
        map
    });
    let lookup = |key: [usize; 3]| {
        set.tiles
            .iter()
            .position(|t| t.offset == key)
            .ok_or_else(|| Error::invalid(format!("tile set has no tile at offset {key:?}")))
    };
    let mut index = vec![0usize; offsets[0].len() * offsets[1].len() * offsets[2].len()];
    for (kz, &oz) in offsets[2].iter().enumerate() {
        for (ky, &oy) in offsets[1].iter().enumerate() {
            for (kx, &ox) in offsets[0].iter().enumerate() {
                index[kx + offsets[0].len() * (ky + offsets[1].len() * kz)] = lookup([ox, oy, oz])?;
            }
        }
    }
    for t in &set.tiles {
        if t.grid.geom.dims != set.tile_dims {
            return Err(Error::invalid("tile dims differ from the tile set"));
        }
    }
    let [nx, ny, _] = src.dims;
    let mut out = vec![0.0f32; src.len()];
    par::for_each_chunk_mut(&mut out, nx * ny, |z, slab| {
        let (kz, lz) = owner[2][z];
        for y in 0..ny {
            let (ky, ly) = owner[1][y];
            for x in 0..nx {
                let (kx, lx) = owner[0][x];
                let t = &set.tiles[index[kx + offsets[0].len() * (ky + offsets[1].len() * kz)]];
                slab[y * nx + x] = *t.grid.at(lx, ly, lz);
            }
        }
    });
    Ok(Volume { geom: src, data: out })
}
