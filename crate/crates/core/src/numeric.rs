// Rounding helpers tolerant to representation error (0.55 * 20 is
// 11.000000000000002 in binary floating point).

const SLACK: f64 = 1e-9;

pub(crate) fn ceil_count(x: f64) -> usize {
    (x - SLACK).ceil().max(0.0) as usize
}

pub(crate) fn floor_count(x: f64) -> usize {
    (x + SLACK).floor().max(0.0) as usize
}

pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5 + SLACK).floor().max(0.0) as usize
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_ignore_representation_error() {
        assert_eq!(ceil_count(0.55 * 20.0), 11);
        assert_eq!(ceil_count(0.1 * 30.0), 3);
        assert_eq!(floor_count(0.35 * 20.0), 7);
        assert_eq!(ceil_count(0.7), 1);
        assert_eq!(round_half_up(0.5 * 2465.0), 1233);
        assert_eq!(round_half_up(0.5 * 10.0), 5);
    }
}
