//! Clustered hexagonal cell geometry.
//!
//! Cells are flat-top hexagons of circumradius `cell_radius_km` with the base
//! station at the center, addressed by axial coordinates on the hex lattice.
//! A cluster of `B` adjacent cells forms one coordinated transmitter; the
//! analyzed cluster sits at the origin and is surrounded by interfering cells:
//! one wrap-around layer of full clusters for B=7, the two surrounding tiers
//! of cells for B=1 and B=3.

use crate::error::{Error, Result};

/// Axial hex coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Axial {
    q: i32,
    r: i32,
}

impl Axial {
    const fn new(q: i32, r: i32) -> Self {
        Axial { q, r }
    }

    fn add(self, other: Axial) -> Axial {
        Axial::new(self.q + other.q, self.r + other.r)
    }

    fn sub(self, other: Axial) -> Axial {
        Axial::new(self.q - other.q, self.r - other.r)
    }

    /// Hex grid distance (number of cell hops).
    fn dist(self, other: Axial) -> i32 {
        let d = self.sub(other);
        let x = d.q;
        let z = d.r;
        let y = -x - z;
        (x.abs() + y.abs() + z.abs()) / 2
    }

    /// Center position in km for flat-top hexagons of circumradius `radius`.
    fn center(self, radius: f64) -> [f64; 2] {
        let x = 1.5 * radius * self.q as f64;
        let y = 3f64.sqrt() * radius * (self.r as f64 + self.q as f64 / 2.0);
        [x, y]
    }
}

/// Cluster footprint and the lattice of cluster translates for each
/// supported cluster size. The translate generators tile the plane with
/// copies of the footprint.
fn cluster_shape(cluster_size: usize) -> Result<(Vec<Axial>, Axial, Axial)> {
    match cluster_size {
        1 => Ok((vec![Axial::new(0, 0)], Axial::new(1, 0), Axial::new(0, 1))),
        3 => Ok((
            vec![Axial::new(0, 0), Axial::new(1, 0), Axial::new(0, 1)],
            Axial::new(1, 1),
            Axial::new(-1, 2),
        )),
        7 => Ok((
            vec![
                Axial::new(0, 0),
                Axial::new(1, 0),
                Axial::new(0, 1),
                Axial::new(-1, 1),
                Axial::new(-1, 0),
                Axial::new(0, -1),
                Axial::new(1, -1),
            ],
            Axial::new(2, 1),
            Axial::new(-1, 3),
        )),
        other => Err(Error::Config(format!(
            "cluster_size must be 1, 3 or 7, got {other}"
        ))),
    }
}

/// Cell geometry of the analyzed cluster and its interfering surroundings.
#[derive(Clone, Debug, PartialEq)]
pub struct CellLayout {
    pub cluster_size: usize,
    pub cell_radius_km: f64,
    /// Cell centers in km; the analyzed cluster occupies indices `0..B`.
    pub cell_centers: Vec<[f64; 2]>,
    /// Cluster id per cell; the analyzed cluster is 0.
    pub cluster_of_cell: Vec<usize>,
    /// Each cell's slot within its cluster footprint (0..B); interfering
    /// cells reuse the analyzed cluster's power budget through this slot.
    pub position_in_cluster: Vec<usize>,
    /// Indices into `cell_centers` of all interfering cells.
    pub interferer_cells: Vec<usize>,
}

impl CellLayout {
    pub fn num_cells(&self) -> usize {
        self.cell_centers.len()
    }
}

/// Builds the deterministic layout for a cluster size of 1, 3 or 7 cells.
pub fn build_layout(cluster_size: usize, cell_radius_km: f64) -> Result<CellLayout> {
    if !(cell_radius_km > 0.0) {
        return Err(Error::Config(format!(
            "cell radius must be positive, got {cell_radius_km}"
        )));
    }
    let (shape, gen_u, gen_v) = cluster_shape(cluster_size)?;

    let mut cells: Vec<Axial> = shape.clone();
    let mut cluster_of_cell: Vec<usize> = vec![0; shape.len()];
    let mut position_in_cluster: Vec<usize> = (0..shape.len()).collect();

    if cluster_size == 7 {
        // One wrap-around layer: the six nearest cluster translates.
        let neighbors = [
            gen_u,
            gen_v,
            gen_v.sub(gen_u),
            Axial::new(-gen_u.q, -gen_u.r),
            Axial::new(-gen_v.q, -gen_v.r),
            gen_u.sub(gen_v),
        ];
        for (cluster_id, &t) in neighbors.iter().enumerate() {
            for (slot, &cell) in shape.iter().enumerate() {
                cells.push(cell.add(t));
                cluster_of_cell.push(cluster_id + 1);
                position_in_cluster.push(slot);
            }
        }
    } else {
        // Two surrounding tiers: every cell at hop distance 1 or 2 from the
        // analyzed cluster, grouped into clusters by the tiling.
        let mut ring: Vec<Axial> = Vec::new();
        for q in -6..=6 {
            for r in -6..=6 {
                let cell = Axial::new(q, r);
                let hops = shape.iter().map(|c| cell.dist(*c)).min().unwrap();
                if (1..=2).contains(&hops) {
                    ring.push(cell);
                }
            }
        }
        ring.sort_by_key(|c| (c.q, c.r));
        let mut translate_ids: Vec<Axial> = Vec::new();
        for cell in ring {
            let (translate, slot) = locate_in_tiling(cell, &shape, gen_u, gen_v)?;
            let cluster_id = match translate_ids.iter().position(|&t| t == translate) {
                Some(i) => i + 1,
                None => {
                    translate_ids.push(translate);
                    translate_ids.len()
                }
            };
            cells.push(cell);
            cluster_of_cell.push(cluster_id);
            position_in_cluster.push(slot);
        }
    }

    let mut centers: Vec<[f64; 2]> = cells.iter().map(|c| c.center(cell_radius_km)).collect();
    // Place the analyzed cluster's centroid at the origin.
    let (mut cx, mut cy) = (0.0, 0.0);
    for center in centers.iter().take(cluster_size) {
        cx += center[0];
        cy += center[1];
    }
    cx /= cluster_size as f64;
    cy /= cluster_size as f64;
    for center in centers.iter_mut() {
        center[0] -= cx;
        center[1] -= cy;
    }

    let interferer_cells: Vec<usize> = (cluster_size..cells.len()).collect();
    Ok(CellLayout {
        cluster_size,
        cell_radius_km,
        cell_centers: centers,
        cluster_of_cell,
        position_in_cluster,
        interferer_cells,
    })
}

/// Finds the unique cluster translate `a·u + b·v` and footprint slot such
/// that `cell = shape[slot] + translate`.
fn locate_in_tiling(
    cell: Axial,
    shape: &[Axial],
    gen_u: Axial,
    gen_v: Axial,
) -> Result<(Axial, usize)> {
    for a in -4..=4 {
        for b in -4..=4 {
            let translate = Axial::new(
                a * gen_u.q + b * gen_v.q,
                a * gen_u.r + b * gen_v.r,
            );
            if let Some(slot) = shape.iter().position(|&s| s.add(translate) == cell) {
                return Ok((translate, slot));
            }
        }
    }
    Err(Error::Config(format!(
        "cell ({}, {}) not reachable in the cluster tiling",
        cell.q, cell.r
    )))
}

/// True when `point` (km, relative to the cell center) lies inside a flat-top
/// hexagon of circumradius `radius`.
pub fn inside_hexagon(point: [f64; 2], radius: f64) -> bool {
    let x = point[0].abs();
    let y = point[1].abs();
    let s3 = 3f64.sqrt();
    y <= s3 / 2.0 * radius + 1e-12 && s3 * x + y <= s3 * radius + 1e-12
}
