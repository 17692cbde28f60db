//! Plain CSV tables: LF line endings, '.' decimal point, shortest
//! round-trip float formatting.

use std::fmt::Write;

use crate::hilbert::CMatrix;

pub fn csv_table<I, R>(header: &[String], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let mut first = true;
        for value in row.as_ref() {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{value}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

/// Column names `re_ij,im_ij` for every matrix entry in row-major order.
pub fn matrix_columns(dim: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(2 * dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            cols.push(format!("re_{i}_{j}"));
            cols.push(format!("im_{i}_{j}"));
        }
    }
    cols
}

pub fn push_matrix(row: &mut Vec<f64>, m: &CMatrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            row.push(m[(i, j)].re);
            row.push(m[(i, j)].im);
        }
    }
}
