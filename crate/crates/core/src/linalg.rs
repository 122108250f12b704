//! Householder QR with column pivoting, used for all least-squares solves.

/// Relative threshold below which a pivot's remaining norm counts as dependent.
pub const RANK_TOL: f64 = 1e-9;

/// Column-pivoted QR of a column-major `n x k` matrix.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    n: usize,
    k: usize,
    /// R in the upper triangle, Householder vectors below it.
    qr: Vec<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(mut a: Vec<f64>, n: usize, k: usize) -> Self {
        assert_eq!(a.len(), n * k);
        let steps = n.min(k);
        let mut perm: Vec<usize> = (0..k).collect();
        let original: Vec<f64> = (0..k).map(|j| norm(&a[j * n..(j + 1) * n])).collect();
        let mut remaining = original.clone();
        let mut tau = vec![0.0; steps];
        let mut rank = 0;

        for j in 0..steps {
            // pivot on the column with the largest remaining fraction of its own norm
            let mut best = j;
            let mut best_ratio = -1.0;
            for c in j..k {
                let orig = original[perm[c]];
                let ratio = if orig > 0.0 { remaining[c] / orig } else { 0.0 };
                if ratio > best_ratio {
                    best_ratio = ratio;
                    best = c;
                }
            }
            if best_ratio <= RANK_TOL {
                break;
            }
            if best != j {
                swap_columns(&mut a, n, j, best);
                perm.swap(j, best);
                remaining.swap(j, best);
            }

            let col = &mut a[j * n..(j + 1) * n];
            let alpha = norm(&col[j..]);
            if alpha == 0.0 {
                break;
            }
            let beta = if col[j] > 0.0 { -alpha } else { alpha };
            let v0 = col[j] - beta;
            for x in &mut col[j + 1..] {
                *x /= v0;
            }
            tau[j] = (beta - col[j]) / beta;
            col[j] = beta;
            rank = j + 1;

            for c in j + 1..k {
                let (head, tail) = a.split_at_mut(c * n);
                let v = &head[j * n..(j + 1) * n];
                let target = &mut tail[..n];
                let mut dot = target[j];
                for i in j + 1..n {
                    dot += v[i] * target[i];
                }
                dot *= tau[j];
                target[j] -= dot;
                for i in j + 1..n {
                    target[i] -= dot * v[i];
                }
                // recompute instead of downdating; k is small and this avoids cancellation
                remaining[c] = norm(&target[j + 1..]);
            }
        }

        Self { n, k, qr: a, tau, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Overwrites `y` with `Q' y`.
    pub fn apply_qt(&self, y: &mut [f64]) {
        let n = self.n;
        for j in 0..self.rank {
            let v = &self.qr[j * n..(j + 1) * n];
            let mut dot = y[j];
            for i in j + 1..n {
                dot += v[i] * y[i];
            }
            dot *= self.tau[j];
            y[j] -= dot;
            for i in j + 1..n {
                y[i] -= dot * v[i];
            }
        }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.qr[j * self.n + i]
    }

    /// Minimum-norm least-squares solution and residual sum of squares.
    pub fn solve(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let r = self.rank;
        let rss: f64 = qty[r..].iter().map(|v| v * v).sum();
        let c = &qty[..r];

        let z = if r == self.k {
            self.back_substitute(c)
        } else {
            self.min_norm(c)
        };
        let mut beta = vec![0.0; self.k];
        for (pos, &col) in self.perm.iter().enumerate() {
            beta[col] = z[pos];
        }
        (beta, rss)
    }

    fn back_substitute(&self, c: &[f64]) -> Vec<f64> {
        let r = self.rank;
        let mut z = vec![0.0; self.k];
        for i in (0..r).rev() {
            let mut s = c[i];
            for j in i + 1..r {
                s -= self.r(i, j) * z[j];
            }
            z[i] = s / self.r(i, i);
        }
        z
    }

    /// Rank-deficient case: factor `[R11 R12]' = U T` and solve `T' w = c`, `z = U w`.
    fn min_norm(&self, c: &[f64]) -> Vec<f64> {
        let (r, k) = (self.rank, self.k);
        let mut w = vec![0.0; k * r];
        for i in 0..r {
            for j in i..k {
                w[i * k + j] = self.r(i, j);
            }
        }
        let inner = PivotlessQr::new(w, k, r);
        // T' is lower triangular: forward substitution.
        let mut sol = vec![0.0; r];
        for i in 0..r {
            let mut s = c[i];
            for j in 0..i {
                s -= inner.r(j, i) * sol[j];
            }
            sol[i] = s / inner.r(i, i);
        }
        let mut z = vec![0.0; k];
        z[..r].copy_from_slice(&sol);
        inner.apply_q(&mut z);
        z
    }

    /// `(X'X)^{-1}` in original column order (column-major `k x k`); `None` when rank deficient.
    pub fn inverse_gram(&self) -> Option<Vec<f64>> {
        if self.rank < self.k {
            return None;
        }
        let k = self.k;
        let mut rinv = vec![0.0; k * k];
        for col in 0..k {
            for i in (0..=col).rev() {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for j in i + 1..=col {
                    s -= self.r(i, j) * rinv[col * k + j];
                }
                rinv[col * k + i] = s / self.r(i, i);
            }
        }
        // (R'R)^{-1} = R^{-1} R^{-T}, then undo the pivoting.
        let mut out = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let s: f64 = (b..k).map(|c| rinv[c * k + a] * rinv[c * k + b]).sum();
                let (oa, ob) = (self.perm[a], self.perm[b]);
                out[ob * k + oa] = s;
                out[oa * k + ob] = s;
            }
        }
        Some(out)
    }
}

/// Plain Householder QR of a full-column-rank matrix (internal helper).
struct PivotlessQr {
    n: usize,
    qr: Vec<f64>,
    tau: Vec<f64>,
}

impl PivotlessQr {
    fn new(mut a: Vec<f64>, n: usize, k: usize) -> Self {
        let mut tau = vec![0.0; k];
        for j in 0..k {
            let col = &mut a[j * n..(j + 1) * n];
            let alpha = norm(&col[j..]);
            if alpha == 0.0 {
                continue;
            }
            let beta = if col[j] > 0.0 { -alpha } else { alpha };
            let v0 = col[j] - beta;
            for x in &mut col[j + 1..] {
                *x /= v0;
            }
            tau[j] = (beta - col[j]) / beta;
            col[j] = beta;
            for c in j + 1..k {
                let (head, tail) = a.split_at_mut(c * n);
                let v = &head[j * n..(j + 1) * n];
                let target = &mut tail[..n];
                let mut dot = target[j];
                for i in j + 1..n {
                    dot += v[i] * target[i];
                }
                dot *= tau[j];
                target[j] -= dot;
                for i in j + 1..n {
                    target[i] -= dot * v[i];
                }
            }
        }
        Self { n, qr: a, tau }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.qr[j * self.n + i]
    }

    /// Overwrites `y` with `Q y`.
    fn apply_q(&self, y: &mut [f64]) {
        let n = self.n;
        for j in (0..self.tau.len()).rev() {
            let v = &self.qr[j * n..(j + 1) * n];
            let mut dot = y[j];
            for i in j + 1..n {
                dot += v[i] * y[i];
            }
            dot *= self.tau[j];
            y[j] -= dot;
            for i in j + 1..n {
                y[i] -= dot * v[i];
            }
        }
    }
}

fn swap_columns(a: &mut [f64], n: usize, i: usize, j: usize) {
    let (lo, hi) = (i.min(j), i.max(j));
    let (head, tail) = a.split_at_mut(hi * n);
    head[lo * n..(lo + 1) * n].swap_with_slice(&mut tail[..n]);
}

pub fn norm(v: &[f64]) -> f64 {
    // scaled to avoid overflow on extreme inputs
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul(a: &[f64], n: usize, k: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for j in 0..k {
            for i in 0..n {
                out[i] += a[j * n + i] * x[j];
            }
        }
        out
    }

    #[test]
    fn full_rank_solution_is_exact_for_consistent_system() {
        let (n, k) = (6, 3);
        let a: Vec<f64> = (0..n * k).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let x = [1.5, -2.0, 0.25];
        let y = matmul(&a, n, k, &x);
        let qr = PivotedQr::new(a, n, k);
        assert_eq!(qr.rank(), 3);
        let (beta, rss) = qr.solve(&y);
        for (b, t) in beta.iter().zip(x) {
            assert!((b - t).abs() < 1e-12);
        }
        assert!(rss < 1e-20);
    }

    #[test]
    fn duplicated_column_gets_minimum_norm_split() {
        let n = 5;
        let col = [1.0, 2.0, -1.0, 0.5, 3.0];
        let mut a = col.to_vec();
        a.extend_from_slice(&col);
        let y: Vec<f64> = col.iter().map(|v| 2.0 * v).collect();
        let qr = PivotedQr::new(a, n, 2);
        assert_eq!(qr.rank(), 1);
        let (beta, rss) = qr.solve(&y);
        assert!((beta[0] - 1.0).abs() < 1e-12 && (beta[1] - 1.0).abs() < 1e-12, "{beta:?}");
        assert!(rss < 1e-20);
        assert!(qr.inverse_gram().is_none());
    }

    #[test]
    fn inverse_gram_matches_closed_form() {
        // orthogonal columns with squared norms 4 and 9
        let a = vec![1.0, 1.0, 1.0, 1.0, 1.5, -1.5, 1.5, -1.5];
        let qr = PivotedQr::new(a, 4, 2);
        let g = qr.inverse_gram().unwrap();
        assert!((g[0] - 0.25).abs() < 1e-14 && (g[3] - 1.0 / 9.0).abs() < 1e-14);
        assert!(g[1].abs() < 1e-14 && g[2].abs() < 1e-14);
    }
}
