//! Gauss–Legendre quadrature and tensor-product grids.

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed from the
/// symmetric tridiagonal Jacobi matrix of the Legendre recurrence
/// (Golub–Welsch). Exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut j = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = 2.0 * eig.eigenvectors[(0, i)].powi(2);
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&wi| wi * half).collect(),
    )
}

/// Tensor-product Gauss–Legendre grid over a box, one rule per axis.
/// Returns `(points, weights)` with points flattened row-major.
pub fn tensor_gauss(box_: &[(f64, f64)], nodes_per_axis: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = box_.len();
    let rules: Vec<(Vec<f64>, Vec<f64>)> = box_
        .iter()
        .map(|&(a, b)| gauss_legendre_on(nodes_per_axis, a, b))
        .collect();
    let total = nodes_per_axis.pow(dim as u32);
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut counter = vec![0usize; dim];
    loop {
        let mut p = Vec::with_capacity(dim);
        let mut w = 1.0;
        for (a, &c) in counter.iter().enumerate() {
            p.push(rules[a].0[c]);
            w *= rules[a].1[c];
        }
        points.push(p);
        weights.push(w);
        // odometer increment
        let mut axis = dim;
        loop {
            if axis == 0 {
                return (points, weights);
            }
            axis -= 1;
            counter[axis] += 1;
            if counter[axis] < nodes_per_axis {
                break;
            }
            counter[axis] = 0;
        }
    }
}
