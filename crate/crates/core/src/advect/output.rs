//! Snapshot writers: legacy VTK structured points and OBJ interface facets.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{AdvectError, MaterialField, Reconstructor};
use crate::geom::cut_polygon;

/// Volume fractions as ASCII legacy VTK cell data.
pub fn write_vtk(field: &MaterialField, path: &Path) -> Result<(), AdvectError> {
    let g = field.grid;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "volume fraction t={}", field.time)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {0} {0} {0}", g.n + 1)?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {0} {0} {0}", g.h)?;
    writeln!(w, "CELL_DATA {}", g.cells())?;
    writeln!(w, "SCALARS C double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for c in &field.vol {
        writeln!(w, "{c}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reconstructed interface polygons of all mixed cells, one OBJ face each.
/// Returns the number of facets written.
pub fn write_obj(field: &MaterialField, rec: &Reconstructor, path: &Path) -> Result<usize, AdvectError> {
    let g = field.grid;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# interface facets, t={}", field.time)?;
    let mut next = 1usize;
    let mut facets = 0;
    for id in field.mixed_cells() {
        let plane = rec.reconstruct(&field.local_centroid(id), field.vol[id])?;
        let Some(poly) = cut_polygon(&plane) else {
            continue;
        };
        if poly.len() < 3 {
            continue;
        }
        let lo = g.cell_lo(id);
        for p in &poly {
            let q = lo + p * g.h;
            writeln!(w, "v {} {} {}", q.x, q.y, q.z)?;
        }
        write!(w, "f")?;
        for k in 0..poly.len() {
            write!(w, " {}", next + k)?;
        }
        writeln!(w)?;
        next += poly.len();
        facets += 1;
    }
    w.flush()?;
    Ok(facets)
}
