use std::ops::Range;

use super::TravelTimeMatrix;

/// Six steps, i.e. thirty minutes at five-minute resolution.
pub const DEFAULT_MAX_FILL_RUN: usize = 6;

/// Forward-fills missing cells.
///
/// Runs of at most `max_run` missing cells after an observed value are
/// filled with that value. Longer runs, and leading runs with nothing to
/// carry forward, are still filled so the matrix stays finite, but their
/// rows are cut out of the segment list.
pub fn fill_gaps(matrix: &TravelTimeMatrix, max_run: usize) -> TravelTimeMatrix {
    let mut out = matrix.clone();
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let mut broken = vec![false; rows];
    let (values, _, segments) = out.parts_mut();

    for c in 0..cols {
        let at = |t: usize| t * cols + c;
        let mut t = 0;
        while t < rows {
            if !values[at(t)].is_nan() {
                t += 1;
                continue;
            }
            let start = t;
            while t < rows && values[at(t)].is_nan() {
                t += 1;
            }
            let run = start..t;
            let carry = if start > 0 {
                Some(values[at(start - 1)])
            } else {
                None
            };
            let fill = carry.or_else(|| (t < rows).then(|| values[at(t)]));
            if let Some(fill) = fill {
                for r in run.clone() {
                    values[at(r)] = fill;
                }
            }
            if carry.is_none() || run.len() > max_run {
                for r in run {
                    broken[r] = true;
                }
            }
        }
    }

    let split = split_segments(segments, &broken);
    *segments = split;
    out
}

fn split_segments(segments: &[Range<usize>], broken: &[bool]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    for seg in segments {
        let mut start = None;
        for t in seg.clone() {
            match (broken[t], start) {
                (false, None) => start = Some(t),
                (true, Some(s)) => {
                    out.push(s..t);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push(s..seg.end);
        }
    }
    out
}
