//! Divided differences of `exp`, the building block of every closed-form integral of
//! `e^{affine}` over simplices, rays and cones.

/// `exp[z₀, …, z_k]`. Equals `∫_{Δ_k} e^{Σλᵢzᵢ} dλ` over the standard simplex (which has
/// volume `1/k!`). Nodes may repeat.
pub fn exp_dd(z: &[f64]) -> f64 {
    assert!(!z.is_empty() && z.len() <= 8, "exp_dd supports 1..=8 nodes");
    let mut s = [0.0; 8];
    s[..z.len()].copy_from_slice(z);
    let s = &mut s[..z.len()];
    s.sort_by(|a, b| a.total_cmp(b));
    dd_sorted(s)
}

fn dd_sorted(z: &[f64]) -> f64 {
    let k = z.len() - 1;
    if k == 0 {
        return z[0].exp();
    }
    let spread = z[k] - z[0];
    if spread > 1.0 {
        return (dd_sorted(&z[1..]) - dd_sorted(&z[..k])) / spread;
    }
    series(z)
}

/// `e^c Σ_{j≥0} h_j(z − c)/(j+k)!` with `h_j` the complete homogeneous symmetric polynomials.
fn series(z: &[f64]) -> f64 {
    const TERMS: usize = 30;
    let k = z.len() - 1;
    let c = z.iter().sum::<f64>() / z.len() as f64;
    // h[j] over the first i+1 variables, updated in place variable by variable
    let mut h = [0.0f64; TERMS];
    h[0] = 1.0;
    let d0 = z[0] - c;
    for j in 1..TERMS {
        h[j] = h[j - 1] * d0;
    }
    for &zi in &z[1..] {
        let d = zi - c;
        for j in 1..TERMS {
            h[j] += d * h[j - 1];
        }
    }
    let mut inv_fact = 1.0;
    for m in 1..=k {
        inv_fact /= m as f64;
    }
    let mut sum = 0.0;
    for (j, hj) in h.iter().enumerate() {
        sum += hj * inv_fact;
        inv_fact /= (j + k + 1) as f64;
    }
    c.exp() * sum
}
