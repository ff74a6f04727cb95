use super::kernel::similarity_matrix;
use crate::embedding_io::Rows;
use crate::{Error, Result};

fn check(s: &Rows<'_>, t: &Rows<'_>) -> Result<()> {
    if s.is_empty() || t.is_empty() {
        return Err(Error::Empty("segment set".into()));
    }
    if s.dim() != t.dim() {
        return Err(Error::DimensionMismatch {
            left: s.dim(),
            right: t.dim(),
        });
    }
    Ok(())
}

/// Mean over rows of `s` of the best cosine against any row of `t`.
pub fn maxsim(s: Rows<'_>, t: Rows<'_>) -> Result<f64> {
    check(&s, &t)?;
    let total: f64 = similarity_matrix(s, t)
        .chunks_exact(t.len())
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    Ok(total / s.len() as f64)
}

/// Symmetrised MaxSim from a single pass over the similarity matrix: the
/// row maxima give MaxSim(S, T), the column maxima MaxSim(T, S).
pub fn bimax(s: Rows<'_>, t: Rows<'_>) -> Result<f64> {
    check(&s, &t)?;
    let sims = similarity_matrix(s, t);
    let mut col_max = vec![f64::NEG_INFINITY; t.len()];
    let mut row_total = 0.0;
    for row in sims.chunks_exact(t.len()) {
        let mut row_max = f64::NEG_INFINITY;
        for (&sim, cm) in row.iter().zip(col_max.iter_mut()) {
            row_max = row_max.max(sim);
            *cm = cm.max(sim);
        }
        row_total += row_max;
    }
    let forward = row_total / s.len() as f64;
    let backward = col_max.iter().sum::<f64>() / t.len() as f64;
    Ok(0.5 * (forward + backward))
}
