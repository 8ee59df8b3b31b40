//! Fraction of samples farther than `D` from every labelled sample.

use super::kmeans::sq_dist;
use super::QueryError;

/// `card{x : min_u ‖x − u‖ > d} / card(X)`; 1 when nothing is labelled.
pub fn far_fraction(points: &[Vec<f64>], labeled: &[Vec<f64>], d: f64) -> Result<f64, QueryError> {
    if points.is_empty() {
        return Err(QueryError::NoSamples);
    }
    let far = points
        .iter()
        .filter(|x| labeled.iter().all(|u| sq_dist(x, u).sqrt() > d))
        .count();
    Ok(far as f64 / points.len() as f64)
}

/// `far_fraction` after each successive label, maintained incrementally.
pub fn far_fraction_curve(points: &[Vec<f64>], labeled_in_order: &[Vec<f64>], d: f64) -> Result<Vec<f64>, QueryError> {
    if points.is_empty() {
        return Err(QueryError::NoSamples);
    }
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut curve = Vec::with_capacity(labeled_in_order.len());
    for u in labeled_in_order {
        for (m, x) in nearest.iter_mut().zip(points) {
            *m = m.min(sq_dist(x, u).sqrt());
        }
        let far = nearest.iter().filter(|m| **m > d).count();
        curve.push(far as f64 / points.len() as f64);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn toy_examples() {
        let x = pts(&[0.0, 1.0, 5.0]);
        assert_eq!(far_fraction(&x, &pts(&[0.0]), 1.5).unwrap(), 1.0 / 3.0);
        assert_eq!(far_fraction(&x, &x, 1.5).unwrap(), 0.0);
        assert_eq!(far_fraction(&x, &[], 1.5).unwrap(), 1.0);
        assert!(far_fraction(&[], &[], 1.5).is_err());
        assert_eq!(far_fraction_curve(&x, &pts(&[0.0, 5.0]), 1.5).unwrap(), vec![1.0 / 3.0, 0.0]);
    }

    #[test]
    fn exactly_d_away_is_covered() {
        assert_eq!(far_fraction(&pts(&[1.5]), &pts(&[0.0]), 1.5).unwrap(), 0.0);
    }
}
