use std::io::{Read, Write};

use crate::discretization::grid::{DiscreteScalarField, Grid};
use crate::error::DiscretizationError;

/// Writes one CSV row per node: coordinates `x0, x1, …` then `value`.
pub fn write_csv<W: Write>(
    grid: &Grid,
    field: &DiscreteScalarField,
    out: W,
) -> Result<(), DiscretizationError> {
    grid.check_field(field)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..grid.dim()).map(|k| format!("x{k}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    for a in 0..grid.node_count() {
        let mut row: Vec<String> = grid.point(a).iter().map(|x| format!("{x:e}")).collect();
        row.push(format!("{:e}", field.values()[a]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Binary layout, all little-endian: `u64` axis count `d`, `d` × `u64` node
/// counts, then the values as `f64` in row-major order (last axis fastest).
pub fn write_binary<W: Write>(
    grid: &Grid,
    field: &DiscreteScalarField,
    mut out: W,
) -> Result<(), DiscretizationError> {
    grid.check_field(field)?;
    out.write_all(&(grid.dim() as u64).to_le_bytes())?;
    for &c in grid.counts() {
        out.write_all(&(c as u64).to_le_bytes())?;
    }
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_binary`], returning node counts and values.
pub fn read_binary<R: Read>(mut input: R) -> Result<(Vec<usize>, Vec<f64>), DiscretizationError> {
    let mut buf = [0u8; 8];
    let mut next = |input: &mut R| -> Result<[u8; 8], DiscretizationError> {
        input.read_exact(&mut buf)?;
        Ok(buf)
    };
    let d = u64::from_le_bytes(next(&mut input)?) as usize;
    if d == 0 || d > 16 {
        return Err(DiscretizationError::InvalidGrid(format!(
            "bad axis count {d} in dump"
        )));
    }
    let mut counts = Vec::with_capacity(d);
    for _ in 0..d {
        counts.push(u64::from_le_bytes(next(&mut input)?) as usize);
    }
    let total: usize = counts.iter().product();
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        values.push(f64::from_le_bytes(next(&mut input)?));
    }
    Ok((counts, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ChartSpec;

    #[test]
    fn binary_round_trip() {
        let g = Grid::new(ChartSpec::standard_torus(2).unwrap(), &[4, 6]).unwrap();
        let f = g.sample_with(|p| p[0] - 2.0 * p[1]);
        let mut bytes = Vec::new();
        write_binary(&g, &f, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 * (1 + 2 + 24));
        assert_eq!(&bytes[..8], &2u64.to_le_bytes());
        let (counts, values) = read_binary(bytes.as_slice()).unwrap();
        assert_eq!(counts, vec![4, 6]);
        assert_eq!(values, f.values());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = Grid::new(ChartSpec::standard_torus(2).unwrap(), &[4, 4]).unwrap();
        let mut bytes = Vec::new();
        write_csv(&g, &DiscreteScalarField::constant(&g, 1.0), &mut bytes).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next(), Some("x0,x1,value"));
        assert_eq!(text.lines().count(), 17);
    }
}
