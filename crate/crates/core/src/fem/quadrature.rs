use crate::mesh::ElementKind;

/// Gauss–Legendre points and weights on `[0, 1]`, exact to degree `2n − 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess on [-1, 1], then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[n - 1 - i] = 0.5 * (z + 1.0);
        w[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` on `[-1, 1]`.
fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Shifted Legendre polynomial `L_m(t) = P_m(2t − 1)` on `[0, 1]`.
pub fn shifted_legendre(m: usize, t: f64) -> f64 {
    let z = 2.0 * t - 1.0;
    let (mut p0, mut p1) = (1.0, z);
    if m == 0 {
        return 1.0;
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `(L_m(t), L_m'(t))`.
pub fn shifted_legendre_with_derivative(m: usize, t: f64) -> (f64, f64) {
    let z = 2.0 * t - 1.0;
    // P_k' = P_{k-2}' + (2k − 1) P_{k-1}
    let mut p = vec![1.0, z];
    let mut d = vec![0.0, 1.0];
    for k in 2..=m {
        p.push(((2 * k - 1) as f64 * z * p[k - 1] - (k - 1) as f64 * p[k - 2]) / k as f64);
        d.push(d[k - 2] + (2 * k - 1) as f64 * p[k - 1]);
    }
    (p[m], 2.0 * d[m])
}

/// Tensor rule on the unit square or a collapsed (Duffy) rule on the
/// reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Rule with `n` Gauss points per direction.
    pub fn new(kind: ElementKind, n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                match kind {
                    ElementKind::Quadrilateral => {
                        points.push([x[i], x[j]]);
                        weights.push(w[i] * w[j]);
                    }
                    ElementKind::Triangle => {
                        let u = x[i];
                        points.push([u, x[j] * (1.0 - u)]);
                        weights.push(w[i] * w[j] * (1.0 - u));
                    }
                }
            }
        }
        Self { points, weights }
    }

    /// Rule for products of shape functions of degree at most `max_degree`
    /// (exact to degree `2·max_degree + 2` on affine elements).
    pub fn for_shape_degree(kind: ElementKind, max_degree: usize) -> Self {
        Self::new(kind, max_degree + 2)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_monomials() {
        for n in 1..10 {
            let (x, w) = gauss_legendre(n);
            for d in 0..2 * n {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
                assert!((s - 1.0 / (d as f64 + 1.0)).abs() < 1e-14, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn triangle_rule_integrates_monomials() {
        // ∫_T x^a y^b = a! b! / (a+b+2)!
        let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
        let q = QuadratureRule::new(ElementKind::Triangle, 6);
        for a in 0..6 {
            for b in 0..(6 - a) {
                let s: f64 = q
                    .points
                    .iter()
                    .zip(&q.weights)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((s - exact).abs() < 1e-15, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn legendre_orthogonality() {
        let (x, w) = gauss_legendre(8);
        for m in 0..6 {
            for n in 0..6 {
                let s: f64 = x.iter().zip(&w).map(|(t, w)| w * shifted_legendre(m, *t) * shifted_legendre(n, *t)).sum();
                let e = if m == n { 1.0 / (2 * m + 1) as f64 } else { 0.0 };
                assert!((s - e).abs() < 1e-14);
            }
        }
    }
}
