use nalgebra::DMatrix;

const SWEEP_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

fn row_norms(lambda: &DMatrix<f64>) -> Vec<f64> {
    lambda.row_iter().map(|r| r.norm()).collect()
}

fn normalized(lambda: &DMatrix<f64>, kaiser: bool) -> DMatrix<f64> {
    if !kaiser {
        return lambda.clone();
    }
    let h = row_norms(lambda);
    DMatrix::from_fn(lambda.nrows(), lambda.ncols(), |i, k| {
        if h[i] > 0.0 {
            lambda[(i, k)] / h[i]
        } else {
            0.0
        }
    })
}

/// Varimax criterion: summed column variances of the squared (optionally
/// row-normalized) loadings.
pub fn varimax_criterion(lambda: &DMatrix<f64>, kaiser: bool) -> f64 {
    criterion_of(&normalized(lambda, kaiser))
}

fn criterion_of(b: &DMatrix<f64>) -> f64 {
    let p = b.nrows() as f64;
    b.column_iter()
        .map(|col| {
            let sq: f64 = col.iter().map(|v| v * v).sum();
            let quart: f64 = col.iter().map(|v| v.powi(4)).sum();
            (p * quart - sq * sq) / (p * p)
        })
        .sum()
}

/// Kaiser's Varimax by pairwise planar rotations.
///
/// Returns `(lambda · T, T)` with `T` orthogonal. Each column of the result
/// is reflected so that its largest-magnitude loading is positive.
pub fn varimax(lambda: &DMatrix<f64>, kaiser_normalize: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let (p, q) = lambda.shape();
    let mut t = DMatrix::<f64>::identity(q, q);
    if q < 2 || p == 0 {
        return (lambda.clone(), t);
    }
    let mut b = normalized(lambda, kaiser_normalize);
    let pf = p as f64;
    let mut current = criterion_of(&b);

    for _ in 0..MAX_SWEEPS {
        for j in 0..q - 1 {
            for k in j + 1..q {
                let (mut a, mut bb, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let (x, y) = (b[(i, j)], b[(i, k)]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    a += u;
                    bb += v;
                    c += u * u - v * v;
                    d += 2.0 * u * v;
                }
                let num = d - 2.0 * a * bb / pf;
                let den = c - (a * a - bb * bb) / pf;
                let angle = 0.25 * num.atan2(den);
                if angle.abs() < 1e-15 {
                    continue;
                }
                let (s, co) = angle.sin_cos();
                rotate_pair(&mut b, j, k, co, s);
                rotate_pair(&mut t, j, k, co, s);
            }
        }
        let next = criterion_of(&b);
        let change = next - current;
        current = next;
        if change.abs() < SWEEP_TOL {
            break;
        }
    }

    let mut rotated = lambda * &t;
    for k in 0..q {
        let lead = rotated
            .column(k)
            .iter()
            .copied()
            .max_by(|x, y| x.abs().total_cmp(&y.abs()))
            .unwrap_or(0.0);
        if lead < 0.0 {
            rotated.column_mut(k).neg_mut();
            t.column_mut(k).neg_mut();
        }
    }
    (rotated, t)
}

fn rotate_pair(m: &mut DMatrix<f64>, j: usize, k: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, j)], m[(i, k)]);
        m[(i, j)] = x * c + y * s;
        m[(i, k)] = -x * s + y * c;
    }
}
