//! Uniform grid over pickup and dropoff positions.

use crate::geo::{BBox, PlanePoint};

/// Which trip endpoint a position belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Pickup,
    Dropoff,
}

/// Cell -> trip ids, stored as compressed rows.
#[derive(Debug, Clone, Default, PartialEq)]
struct CellLists {
    offsets: Vec<u32>,
    ids: Vec<u32>,
}

impl CellLists {
    fn build(cells: &[u32], cell_count: usize) -> Self {
        let mut offsets = vec![0u32; cell_count + 1];
        for &c in cells {
            offsets[c as usize + 1] += 1;
        }
        for i in 0..cell_count {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut ids = vec![0u32; cells.len()];
        for (id, &c) in cells.iter().enumerate() {
            let slot = &mut cursor[c as usize];
            ids[*slot as usize] = id as u32;
            *slot += 1;
        }
        CellLists { offsets, ids }
    }

    fn cell(&self, c: usize) -> &[u32] {
        &self.ids[self.offsets[c] as usize..self.offsets[c + 1] as usize]
    }
}

/// Uniform grid covering the dataset bounding box. Every trip id is listed
/// in exactly one pickup cell and one dropoff cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridIndex {
    bbox: BBox,
    nx: usize,
    ny: usize,
    scale_x: f64,
    scale_y: f64,
    pickup: CellLists,
    dropoff: CellLists,
}

pub const MAX_GRID_CELLS: usize = 1 << 20;

/// Cell count aiming at roughly 16 trips per cell.
pub fn default_cell_target(n: usize) -> usize {
    (n / 16).clamp(1, MAX_GRID_CELLS)
}

impl GridIndex {
    pub fn build(
        pickups: &[PlanePoint],
        dropoffs: &[PlanePoint],
        bbox: BBox,
        target_cell_count: usize,
    ) -> Self {
        let target = target_cell_count.clamp(1, MAX_GRID_CELLS);
        let (w, h) = (bbox.width(), bbox.height());
        let (nx, ny) = if w <= 0.0 && h <= 0.0 {
            (1, 1)
        } else if w <= 0.0 {
            (1, target)
        } else if h <= 0.0 {
            (target, 1)
        } else {
            let nx = ((target as f64 * w / h).sqrt().round() as usize).clamp(1, target);
            (nx, target.div_ceil(nx).max(1))
        };
        let scale_x = if w > 0.0 { nx as f64 / w } else { 0.0 };
        let scale_y = if h > 0.0 { ny as f64 / h } else { 0.0 };
        let mut grid = GridIndex {
            bbox,
            nx,
            ny,
            scale_x,
            scale_y,
            pickup: CellLists::default(),
            dropoff: CellLists::default(),
        };
        let cells = |pts: &[PlanePoint]| pts.iter().map(|p| grid.cell_of(*p) as u32).collect::<Vec<_>>();
        let (pc, dc) = (cells(pickups), cells(dropoffs));
        grid.pickup = CellLists::build(&pc, nx * ny);
        grid.dropoff = CellLists::build(&dc, nx * ny);
        grid
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    fn col(&self, x: f64) -> usize {
        (((x - self.bbox.min_x) * self.scale_x) as isize).clamp(0, self.nx as isize - 1) as usize
    }

    #[inline]
    fn row(&self, y: f64) -> usize {
        (((y - self.bbox.min_y) * self.scale_y) as isize).clamp(0, self.ny as isize - 1) as usize
    }

    #[inline]
    pub fn cell_of(&self, p: PlanePoint) -> usize {
        self.row(p.y) * self.nx + self.col(p.x)
    }

    fn lists(&self, endpoint: Endpoint) -> &CellLists {
        match endpoint {
            Endpoint::Pickup => &self.pickup,
            Endpoint::Dropoff => &self.dropoff,
        }
    }

    pub fn cell_ids(&self, endpoint: Endpoint, cell: usize) -> &[u32] {
        self.lists(endpoint).cell(cell)
    }

    pub fn occupied_cells(&self, endpoint: Endpoint) -> usize {
        let lists = self.lists(endpoint);
        (0..self.cell_count()).filter(|&c| !lists.cell(c).is_empty()).count()
    }

    /// Ids whose `endpoint` position may lie inside `query`. Every id whose
    /// position is inside the box is returned; others may be too.
    pub fn candidates<'a>(
        &'a self,
        endpoint: Endpoint,
        query: &BBox,
    ) -> impl Iterator<Item = u32> + 'a {
        let disjoint = query.is_empty()
            || query.max_x < self.bbox.min_x
            || query.min_x > self.bbox.max_x
            || query.max_y < self.bbox.min_y
            || query.min_y > self.bbox.max_y;
        let (c0, c1, r0, r1) = if disjoint {
            (1, 0, 1, 0)
        } else {
            (self.col(query.min_x), self.col(query.max_x), self.row(query.min_y), self.row(query.max_y))
        };
        let lists = self.lists(endpoint);
        (r0..=r1).flat_map(move |r| {
            let start = lists.offsets[r * self.nx + c0] as usize;
            let end = lists.offsets[r * self.nx + c1 + 1] as usize;
            lists.ids[start..end].iter().copied()
        })
    }
}
