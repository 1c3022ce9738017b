//! Tracking accuracy.

use crate::geometry::Vec2;

/// Fraction of `(estimate, truth)` pairs closer than `eps`. Empty input
/// counts as fully tracked.
pub fn accuracy<'a, I>(pairs: I, eps: f64) -> f64
where
    I: IntoIterator<Item = (&'a Vec2, &'a Vec2)>,
{
    let mut total = 0usize;
    let mut tracked = 0usize;
    for (e, t) in pairs {
        total += 1;
        if e.distance(*t) <= eps {
            tracked += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        tracked as f64 / total as f64
    }
}
