use crate::error::{Error, Result};

/// Start and end (exclusive) of each pooling window along an axis of length `side`.
///
/// Windows start at `0, stride, 2·stride, …` while a full window fits; the
/// last window extends to the end of the axis.
pub fn pool_windows(side: usize, pool: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if pool == 0 || stride == 0 {
        return Err(Error::InvalidArgument("pool and stride must be positive".into()));
    }
    if pool > side {
        return Err(Error::InvalidArgument(format!("pool {pool} exceeds grid side {side}")));
    }
    let count = (side - pool) / stride + 1;
    let mut out: Vec<(usize, usize)> = (0..count).map(|w| (w * stride, w * stride + pool)).collect();
    out.last_mut().expect("at least one window").1 = side;
    Ok(out)
}

/// 2D max pooling of each row of the row-major `rows × side²` matrix `data`.
///
/// Every row is a nodal field on a `side × side` grid with `x` fastest; the
/// output has `rows × w²` entries for `w` windows per axis, windows ordered row-major.
pub fn max_pool_reduce(data: &[f64], rows: usize, side: usize, pool: usize, stride: usize) -> Result<Vec<f64>> {
    if data.len() != rows * side * side {
        return Err(Error::Shape(format!("{} values do not form {rows} rows of {side}×{side}", data.len())));
    }
    let windows = pool_windows(side, pool, stride)?;
    let w = windows.len();
    let mut out = Vec::with_capacity(rows * w * w);
    for row in data.chunks_exact(side * side) {
        for &(y0, y1) in &windows {
            for &(x0, x1) in &windows {
                let mut m = f64::NEG_INFINITY;
                for iy in y0..y1 {
                    for &v in &row[iy * side + x0..iy * side + x1] {
                        m = m.max(v);
                    }
                }
                out.push(m);
            }
        }
    }
    Ok(out)
}
