//! Scaled index sets `D_n = c_n C ∩ Z^d`, their J-box tilings, inner and outer
//! approximations, and the ordered neighborhoods used by runs-type statistics.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{LatticeBox, Site};

/// Bounded base shape `C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeC {
    /// `[0, 1)^d`.
    UnitBox { dim: usize },
    /// Union of half-open boxes `[lo, hi)`.
    BoxUnion { dim: usize, boxes: Vec<(Vec<f64>, Vec<f64>)> },
    /// Closed disc in the plane.
    Disc { center: [f64; 2], radius: f64 },
}

impl ShapeC {
    pub fn unit_box(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("geometry.dim", "must be at least 1"));
        }
        Ok(ShapeC::UnitBox { dim })
    }

    pub fn box_union(dim: usize, boxes: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("geometry.dim", "must be at least 1"));
        }
        if boxes.is_empty() {
            return Err(invalid("geometry.boxes", "need at least one box"));
        }
        for (lo, hi) in &boxes {
            if lo.len() != dim || hi.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: lo.len().min(hi.len()),
                });
            }
            if lo.iter().zip(hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
                return Err(invalid("geometry.boxes", "every box needs lo < hi on each axis"));
            }
        }
        Ok(ShapeC::BoxUnion { dim, boxes })
    }

    /// A single half-open box `[lo, hi)`.
    pub fn axis_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        ShapeC::box_union(lo.len(), vec![(lo, hi)])
    }

    pub fn disc(center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !center.iter().all(|c| c.is_finite()) {
            return Err(invalid("geometry.radius", "disc needs a finite center and positive radius"));
        }
        Ok(ShapeC::Disc { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            ShapeC::UnitBox { dim } | ShapeC::BoxUnion { dim, .. } => *dim,
            ShapeC::Disc { .. } => 2,
        }
    }

    /// Lebesgue measure `|C|`.
    pub fn volume(&self) -> f64 {
        match self {
            ShapeC::UnitBox { .. } => 1.0,
            ShapeC::BoxUnion { dim, boxes } => union_volume(*dim, boxes),
            ShapeC::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    /// Bounding box of the shape.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ShapeC::UnitBox { dim } => (vec![0.0; *dim], vec![1.0; *dim]),
            ShapeC::BoxUnion { dim, boxes } => {
                let mut lo = vec![f64::INFINITY; *dim];
                let mut hi = vec![f64::NEG_INFINITY; *dim];
                for (a, b) in boxes {
                    for l in 0..*dim {
                        lo[l] = lo[l].min(a[l]);
                        hi[l] = hi[l].max(b[l]);
                    }
                }
                (lo, hi)
            }
            ShapeC::Disc { center, radius } => (
                vec![center[0] - radius, center[1] - radius],
                vec![center[0] + radius, center[1] + radius],
            ),
        }
    }

    /// Whether the lattice site `v` satisfies `v / c ∈ C`.
    pub fn contains_scaled(&self, v: &[i64], c: &[f64]) -> bool {
        match self {
            ShapeC::UnitBox { .. } => v
                .iter()
                .zip(c)
                .all(|(&x, &cl)| x >= 0 && (x as f64) < cl),
            ShapeC::BoxUnion { boxes, .. } => boxes.iter().any(|(lo, hi)| {
                v.iter().enumerate().all(|(l, &x)| {
                    let x = x as f64;
                    lo[l] * c[l] <= x && x < hi[l] * c[l]
                })
            }),
            ShapeC::Disc { center, radius } => {
                // (v1/c1 - x)^2 + (v2/c2 - y)^2 <= r^2, multiplied through by (c1 c2)^2
                let d1 = (v[0] as f64 - c[0] * center[0]) * c[1];
                let d2 = (v[1] as f64 - c[1] * center[1]) * c[0];
                let r = radius * c[0] * c[1];
                d1 * d1 + d2 * d2 <= r * r
            }
        }
    }

    /// Lattice box covering `c C ∩ Z^d`.
    pub fn scaled_window(&self, c: &[f64]) -> LatticeBox {
        let (lo, hi) = self.bounds();
        let lo: Vec<i64> = lo.iter().zip(c).map(|(a, cl)| (a * cl).floor() as i64 - 1).collect();
        let hi: Vec<i64> = hi.iter().zip(c).map(|(b, cl)| (b * cl).ceil() as i64 + 2).collect();
        LatticeBox::new(lo, hi).expect("bounds are ordered")
    }
}

/// Volume of a union of boxes by coordinate compression.
fn union_volume(dim: usize, boxes: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let cuts: Vec<Vec<f64>> = (0..dim)
        .map(|l| {
            let mut c: Vec<f64> = boxes.iter().flat_map(|(a, b)| [a[l], b[l]]).collect();
            c.sort_by(|x, y| x.total_cmp(y));
            c.dedup();
            c
        })
        .collect();
    let cells = LatticeBox::new(
        vec![0; dim],
        cuts.iter().map(|c| c.len() as i64 - 1).collect(),
    )
    .expect("non-negative extents");
    cells
        .sites()
        .filter_map(|cell| {
            let mid: Vec<f64> = (0..dim)
                .map(|l| 0.5 * (cuts[l][cell[l] as usize] + cuts[l][cell[l] as usize + 1]))
                .collect();
            let inside = boxes
                .iter()
                .any(|(a, b)| (0..dim).all(|l| a[l] <= mid[l] && mid[l] < b[l]));
            inside.then(|| {
                (0..dim)
                    .map(|l| cuts[l][cell[l] as usize + 1] - cuts[l][cell[l] as usize])
                    .product::<f64>()
            })
        })
        .sum()
}

/// Tiling of `Z^d` by boxes `J_z = (x + s (z + [0,1)^d)) ∩ Z^d` with real
/// side lengths `s` and shift `x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tiling {
    side: Vec<f64>,
    shift: Vec<f64>,
}

impl Tiling {
    pub fn new(side: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        if side.len() != shift.len() {
            return Err(Error::DimensionMismatch {
                expected: side.len(),
                got: shift.len(),
            });
        }
        if side.iter().any(|s| !(*s >= 1.0 && s.is_finite())) {
            return Err(invalid("geometry.t_n", "tile sides must be at least 1"));
        }
        if shift.iter().any(|x| !x.is_finite()) {
            return Err(invalid("geometry.x_n", "shift must be finite"));
        }
        Ok(Tiling { side, shift })
    }

    /// Index `z` of the tile containing `v`.
    #[inline]
    pub fn tile_of(&self, v: &[i64]) -> Site {
        v.iter()
            .enumerate()
            .map(|(l, &x)| ((x as f64 - self.shift[l]) / self.side[l]).floor() as i64)
            .collect()
    }

    /// Lattice sites in tile `z` along axis `l`: `[ceil(x + s z), ceil(x + s (z+1)))`.
    fn axis_range(&self, l: usize, z: i64) -> (i64, i64) {
        let a = (self.shift[l] + self.side[l] * z as f64).ceil() as i64;
        let b = (self.shift[l] + self.side[l] * (z + 1) as f64).ceil() as i64;
        (a, b)
    }

    /// The lattice box `J_z`.
    pub fn tile(&self, z: &[i64]) -> LatticeBox {
        let (lo, hi): (Vec<i64>, Vec<i64>) = z
            .iter()
            .enumerate()
            .map(|(l, &zl)| self.axis_range(l, zl))
            .unzip();
        LatticeBox::new(lo, hi).expect("tiles are ordered")
    }

    /// Tile indices of all tiles meeting `window`.
    pub fn tiles_meeting(&self, window: &LatticeBox) -> LatticeBox {
        let lo = self.tile_of(window.lo());
        let last: Vec<i64> = window.hi().iter().map(|h| h - 1).collect();
        let hi: Vec<i64> = self.tile_of(&last).iter().map(|z| z + 1).collect();
        LatticeBox::new(lo, hi).expect("tiles are ordered")
    }

    /// Inner and outer tile counts of a lattice set given as a mask over `window`.
    pub fn inner_outer(&self, window: &LatticeBox, mask: &[bool]) -> (usize, usize) {
        let grid = self.tiles_meeting(window);
        let mut counts = vec![0usize; grid.len()];
        for (i, site) in window.sites().enumerate() {
            if mask[i] {
                let z = self.tile_of(&site);
                counts[grid.index_of(&z).expect("tile inside grid")] += 1;
            }
        }
        let mut inner = 0;
        let mut outer = 0;
        for (j, z) in grid.sites().enumerate() {
            if counts[j] > 0 {
                outer += 1;
                if counts[j] == self.tile(&z).len() {
                    inner += 1;
                }
            }
        }
        (inner, outer)
    }
}

/// `D_n` with its J-box tiling and inner/outer approximations.
#[derive(Debug, Clone, Serialize)]
pub struct IndexSetGeometry {
    shape: ShapeC,
    c_n: Vec<f64>,
    t_n: Vec<i64>,
    x_n: Vec<f64>,
    #[serde(skip)]
    tiling: Tiling,
    window: LatticeBox,
    #[serde(skip)]
    mask: Vec<bool>,
    size: usize,
    #[serde(skip)]
    box_grid: LatticeBox,
    #[serde(skip)]
    box_counts: Vec<usize>,
    inner_boxes: usize,
    outer_boxes: usize,
}

impl IndexSetGeometry {
    pub fn build(shape: ShapeC, c_n: Vec<f64>, t_n: Vec<i64>, x_n: Option<Vec<f64>>) -> Result<Self> {
        let d = shape.dim();
        let x_n = x_n.unwrap_or_else(|| vec![0.0; d]);
        for len in [c_n.len(), t_n.len(), x_n.len()] {
            if len != d {
                return Err(Error::DimensionMismatch { expected: d, got: len });
            }
        }
        if c_n.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(invalid("geometry.c_n", "scaling must be positive"));
        }
        if t_n.iter().any(|t| *t < 1) {
            return Err(invalid("geometry.t_n", "box sides must be positive integers"));
        }
        let tiling = Tiling::new(t_n.iter().map(|&t| t as f64).collect(), x_n.clone())?;
        let bounding = shape.scaled_window(&c_n);
        let full_mask: Vec<bool> = bounding.sites().map(|v| shape.contains_scaled(&v, &c_n)).collect();
        // shrink the window to the tight bounding box of D_n
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        let mut size = 0usize;
        for (i, v) in bounding.sites().enumerate() {
            if full_mask[i] {
                size += 1;
                for l in 0..d {
                    lo[l] = lo[l].min(v[l]);
                    hi[l] = hi[l].max(v[l] + 1);
                }
            }
        }
        if size == 0 {
            return Err(Error::EmptyDomain);
        }
        let window = LatticeBox::new(lo, hi)?;
        let mask: Vec<bool> = window
            .sites()
            .map(|v| full_mask[bounding.index_of(&v).expect("inside")])
            .collect();

        let box_grid = tiling.tiles_meeting(&window);
        let mut box_counts = vec![0usize; box_grid.len()];
        for (i, v) in window.sites().enumerate() {
            if mask[i] {
                box_counts[box_grid.index_of(&tiling.tile_of(&v)).expect("inside")] += 1;
            }
        }
        let t_star: usize = t_n.iter().map(|&t| t as usize).product();
        let inner_boxes = box_counts.iter().filter(|&&c| c == t_star).count();
        let outer_boxes = box_counts.iter().filter(|&&c| c > 0).count();
        Ok(IndexSetGeometry {
            shape,
            c_n,
            t_n,
            x_n,
            tiling,
            window,
            mask,
            size,
            box_grid,
            box_counts,
            inner_boxes,
            outer_boxes,
        })
    }

    pub fn shape(&self) -> &ShapeC {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn c_n(&self) -> &[f64] {
        &self.c_n
    }

    pub fn t_n(&self) -> &[i64] {
        &self.t_n
    }

    pub fn x_n(&self) -> &[f64] {
        &self.x_n
    }

    pub fn tiling(&self) -> &Tiling {
        &self.tiling
    }

    /// Tight bounding box of `D_n`.
    pub fn window(&self) -> &LatticeBox {
        &self.window
    }

    /// Membership of the sites of [`window`](Self::window) in `D_n`.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// `|D_n|`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        self.window.index_of(v).is_some_and(|i| self.mask[i])
    }

    /// Sites of `D_n` in lexicographic order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.window
            .sites()
            .zip(self.mask.iter())
            .filter_map(|(v, &m)| m.then_some(v))
    }

    /// `t_n^*`, the number of sites per J-box.
    pub fn box_volume(&self) -> usize {
        self.t_n.iter().map(|&t| t as usize).product()
    }

    /// `|P_n|`: boxes contained in `D_n`.
    pub fn inner_boxes(&self) -> usize {
        self.inner_boxes
    }

    /// `|Q_n|`: boxes meeting `D_n`.
    pub fn outer_boxes(&self) -> usize {
        self.outer_boxes
    }

    /// `|D_n^-|`.
    pub fn inner_size(&self) -> usize {
        self.inner_boxes * self.box_volume()
    }

    /// `|D_n^+|`.
    pub fn outer_size(&self) -> usize {
        self.outer_boxes * self.box_volume()
    }

    /// Index grid of all boxes meeting the window.
    pub fn box_grid(&self) -> &LatticeBox {
        &self.box_grid
    }

    /// Number of `D_n` sites per box of [`box_grid`](Self::box_grid).
    pub fn box_counts(&self) -> &[usize] {
        &self.box_counts
    }

    /// `P_n` in lexicographic order.
    pub fn inner_box_indices(&self) -> Vec<Site> {
        let t_star = self.box_volume();
        self.box_grid
            .sites()
            .zip(&self.box_counts)
            .filter_map(|(z, &c)| (c == t_star).then_some(z))
            .collect()
    }

    /// `Q_n` in lexicographic order.
    pub fn outer_box_indices(&self) -> Vec<Site> {
        self.box_grid
            .sites()
            .zip(&self.box_counts)
            .filter_map(|(z, &c)| (c > 0).then_some(z))
            .collect()
    }

    /// `(|D_n^+| - |D_n^-|) / |D_n|`.
    pub fn approximation_ratio(&self) -> f64 {
        (self.outer_size() - self.inner_size()) as f64 / self.size as f64
    }

    /// Membership mask of a region over [`window`](Self::window); errors when the
    /// region leaves `D_n`.
    pub fn region_mask(&self, region: &Region) -> Result<Vec<bool>> {
        if region.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: region.dim(),
            });
        }
        let mask: Vec<bool> = self
            .window
            .sites()
            .map(|v| region.contains(&v, &self.c_n))
            .collect();
        if mask.iter().zip(&self.mask).any(|(&r, &d)| r && !d) {
            return Err(Error::RegionOutsideDomain(format!("{region:?}")));
        }
        if let Region::Lattice(b) = region {
            // a lattice box reaching beyond the window has sites outside D_n
            if !self.window.contains_box(b) {
                return Err(Error::RegionOutsideDomain(format!("{region:?}")));
            }
        }
        Ok(mask)
    }

    /// Inner and outer counts of the tiling with sides `c_n / k^(1/d)` for a
    /// lattice region `B_n`.
    pub fn subregion_boxes(&self, k: usize, region: &Region) -> Result<SubregionCounts> {
        if k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        let root = integer_root(k, self.dim());
        let side: Vec<f64> = self.c_n.iter().map(|c| c / root).collect();
        let tiling = Tiling::new(side.clone(), self.x_n.clone())?;
        let mask = self.region_mask(region)?;
        let (inner, outer) = tiling.inner_outer(&self.window, &mask);
        Ok(SubregionCounts {
            k,
            side,
            inner,
            outer,
        })
    }

    pub fn diagnostic_row(&self) -> GeometryRow {
        GeometryRow {
            c_n: self.c_n.clone(),
            t_n: self.t_n.clone(),
            size: self.size,
            inner_size: self.inner_size(),
            outer_size: self.outer_size(),
            ratio: self.approximation_ratio(),
        }
    }
}

/// `k^(1/d)`, exact when `k` is a perfect `d`-th power.
fn integer_root(k: usize, d: usize) -> f64 {
    let r = (k as f64).powf(1.0 / d as f64);
    let rounded = r.round();
    if (rounded as usize).pow(d as u32) == k {
        rounded
    } else {
        r
    }
}

/// Inner/outer counts of a subregion tiling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubregionCounts {
    pub k: usize,
    pub side: Vec<f64>,
    pub inner: usize,
    pub outer: usize,
}

/// One row of a geometry schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryRow {
    pub c_n: Vec<f64>,
    pub t_n: Vec<i64>,
    pub size: usize,
    pub inner_size: usize,
    pub outer_size: usize,
    pub ratio: f64,
}

/// Builds the geometry for each `(c_n, t_n)` of a schedule.
pub fn geometry_schedule(shape: &ShapeC, schedule: &[(Vec<f64>, Vec<i64>)]) -> Result<Vec<GeometryRow>> {
    schedule
        .iter()
        .map(|(c, t)| Ok(IndexSetGeometry::build(shape.clone(), c.clone(), t.clone(), None)?.diagnostic_row()))
        .collect()
}

/// A counting region: a scaled subset `A ⊆ C` or a lattice box `B ⊆ D_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    Scaled(ShapeC),
    Lattice(LatticeBox),
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Scaled(s) => s.dim(),
            Region::Lattice(b) => b.dim(),
        }
    }

    pub fn contains(&self, v: &[i64], c_n: &[f64]) -> bool {
        match self {
            Region::Scaled(s) => s.contains_scaled(v, c_n),
            Region::Lattice(b) => b.contains(v),
        }
    }

    /// Limiting fraction of `|D_n|` covered by the region (`|A| / |C|` for
    /// scaled regions, the exact site fraction for lattice regions).
    pub fn fraction(&self, geom: &IndexSetGeometry) -> f64 {
        match self {
            Region::Scaled(s) => s.volume() / geom.shape().volume(),
            Region::Lattice(b) => b.len() as f64 / geom.size() as f64,
        }
    }
}

/// Lexicographic strict order `a ≺ b`.
#[inline]
pub fn precedes(a: &[i64], b: &[i64]) -> bool {
    a < b
}

/// Offsets `o ≻ 0` in `[-r, r]` (per axis), in lexicographic order.
pub fn positive_offsets(radius: &[i64]) -> Vec<Site> {
    let lo: Vec<i64> = radius.iter().map(|r| -r).collect();
    let hi: Vec<i64> = radius.iter().map(|r| r + 1).collect();
    let zero = vec![0i64; radius.len()];
    LatticeBox::new(lo, hi)
        .expect("radius is non-negative")
        .sites()
        .filter(|o| precedes(&zero, o))
        .collect()
}

/// `A_v = {z ∈ v + [-r, r] : v ≺ z}`.
pub fn ordered_neighborhood(v: &[i64], radius: &[i64]) -> Result<Vec<Site>> {
    if radius.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            got: radius.len(),
        });
    }
    if radius.iter().any(|r| *r < 1) {
        return Err(invalid("radius", "must be at least 1"));
    }
    Ok(positive_offsets(radius)
        .into_iter()
        .map(|o| o.iter().zip(v).map(|(a, b)| a + b).collect())
        .collect())
}
