//! Clairvoyant Cramér-Rao bound for one submodel with known sample labels.
//!
//! Per sample, `x_t = d_t + e_t` and `y_t = Θ d_t + w_t`. The unknowns are
//! `θ = vec(Θᵀ)` (rows of `Θ` stacked) and the inputs `d_1, …, d_N`. With
//! `H(d) = I ⊗ dᵀ` we have `Θ d = H(d) θ`, and the Fisher information is
//!
//! ```text
//! F_θ      = (1/σ_w²) I ⊗ DDᵀ
//! F_d      = (1/σ_e²) I + (1/σ_w²) ΘᵀΘ
//! F_{θ,d_t} = (1/σ_w²) H(d_t)ᵀ Θ
//! ```
//!
//! Eliminating the inputs gives
//! `Cov(θ) ⪰ σ_w² (I ⊗ DDᵀ − σ_e² Σ_Θ ⊗ DDᵀ)⁻¹` with
//! `Σ_Θ = Θ (σ_w² I + σ_e² ΘᵀΘ)⁻¹ Θᵀ`, and
//! `Cov(d_i) ⪰ σ_e² (I + (σ_e²/σ_w²) ΘᵀΘ − (σ_e²/σ_w⁴) Θᵀ H_i C_i H_iᵀ Θ)⁻¹`
//! where `C_i = σ_w² (I ⊗ DDᵀ − σ_e² Σ_{t≠i} H_tᵀ Σ_Θ H_t)⁻¹`.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, kron};

/// Condition limit for every inverse taken here.
pub const CONDITION_LIMIT: f64 = 1e12;

fn check_inputs(theta: MatRef<'_, f64>, d: MatRef<'_, f64>, se2: f64, sw2: f64) -> Result<()> {
    if theta.ncols() != d.nrows() {
        return Err(Error::InvalidArgument(format!(
            "Θ has {} columns but D has {} rows",
            theta.ncols(),
            d.nrows()
        )));
    }
    if !(se2 >= 0.0 && se2.is_finite()) || !(sw2.is_finite() && sw2 >= 0.0) {
        return Err(Error::InvalidArgument("noise variances must be finite and nonnegative".into()));
    }
    if sw2 == 0.0 {
        return Err(Error::ConstrainedCrbOutOfScope);
    }
    if d.ncols() < d.nrows() {
        return Err(Error::InsufficientSamples {
            submodel: 0,
            count: d.ncols(),
            n_d: d.nrows(),
        });
    }
    Ok(())
}

/// `H(d) = I_{N_y} ⊗ dᵀ`.
pub fn h_matrix(n_y: usize, d: &[f64]) -> Mat<f64> {
    let n_d = d.len();
    Mat::from_fn(n_y, n_y * n_d, |r, c| if c / n_d == r { d[c % n_d] } else { 0.0 })
}

fn column(d: MatRef<'_, f64>, t: usize) -> Vec<f64> {
    (0..d.nrows()).map(|i| d[(i, t)]).collect()
}

/// Blocks of the Fisher information matrix.
#[derive(Debug, Clone)]
pub struct FisherBlocks {
    pub f_theta: Mat<f64>,
    /// Shared by every sample.
    pub f_d: Mat<f64>,
    /// One `(N_y·N_d) × N_d` block per sample.
    pub f_theta_d: Vec<Mat<f64>>,
}

impl FisherBlocks {
    /// Full matrix in the order `[θ; d_1; …; d_N]`.
    pub fn assemble(&self) -> Mat<f64> {
        let p = self.f_theta.nrows();
        let n_d = self.f_d.nrows();
        let n = self.f_theta_d.len();
        let dim = p + n * n_d;
        let mut f = Mat::zeros(dim, dim);
        for i in 0..p {
            for j in 0..p {
                f[(i, j)] = self.f_theta[(i, j)];
            }
        }
        for (t, block) in self.f_theta_d.iter().enumerate() {
            let off = p + t * n_d;
            for i in 0..p {
                for j in 0..n_d {
                    f[(i, off + j)] = block[(i, j)];
                    f[(off + j, i)] = block[(i, j)];
                }
            }
            for i in 0..n_d {
                for j in 0..n_d {
                    f[(off + i, off + j)] = self.f_d[(i, j)];
                }
            }
        }
        f
    }
}

/// Fisher information blocks. Requires both variances positive.
pub fn fisher(theta: MatRef<'_, f64>, d: MatRef<'_, f64>, se2: f64, sw2: f64) -> Result<FisherBlocks> {
    check_inputs(theta, d, se2, sw2)?;
    if se2 == 0.0 {
        return Err(Error::InvalidArgument(
            "the Fisher information is unbounded when σ_e² = 0".into(),
        ));
    }
    let (n_y, n_d) = (theta.nrows(), theta.ncols());
    let ddt = d * d.transpose();
    let f_theta = kron(Mat::<f64>::identity(n_y, n_y).as_ref(), ddt.as_ref()) * (1.0 / sw2);
    let tt = theta.transpose() * theta;
    let f_d = Mat::from_fn(n_d, n_d, |i, j| {
        tt[(i, j)] / sw2 + if i == j { 1.0 / se2 } else { 0.0 }
    });
    let f_theta_d = (0..d.ncols())
        .map(|t| {
            let h = h_matrix(n_y, &column(d, t));
            (h.transpose() * theta) * (1.0 / sw2)
        })
        .collect();
    Ok(FisherBlocks {
        f_theta,
        f_d,
        f_theta_d,
    })
}

/// `Σ_Θ = Θ (σ_w² I + σ_e² ΘᵀΘ)⁻¹ Θᵀ`.
pub fn sigma_theta(theta: MatRef<'_, f64>, se2: f64, sw2: f64) -> Result<Mat<f64>> {
    let n_d = theta.ncols();
    let tt = theta.transpose() * theta;
    let inner = Mat::from_fn(n_d, n_d, |i, j| se2 * tt[(i, j)] + if i == j { sw2 } else { 0.0 });
    let inv = linalg::spd_inverse(inner.as_ref(), CONDITION_LIMIT, "σ_w² I + σ_e² ΘᵀΘ")?;
    Ok(linalg::symmetrize((theta * &inv * theta.transpose()).as_ref()))
}

/// The bracketed matrix `I ⊗ DDᵀ − σ_e² Σ_Θ ⊗ DDᵀ`.
fn theta_bracket(theta: MatRef<'_, f64>, d: MatRef<'_, f64>, se2: f64, sig: &Mat<f64>) -> Mat<f64> {
    let n_y = theta.nrows();
    let ddt = d * d.transpose();
    let m = Mat::from_fn(n_y, n_y, |i, j| if i == j { 1.0 } else { 0.0 } - se2 * sig[(i, j)]);
    kron(m.as_ref(), ddt.as_ref())
}

/// Bound on `Cov(vec(Θᵀ))`.
pub fn ccrb_theta(theta: MatRef<'_, f64>, d: MatRef<'_, f64>, se2: f64, sw2: f64) -> Result<Mat<f64>> {
    check_inputs(theta, d, se2, sw2)?;
    let sig = sigma_theta(theta, se2, sw2)?;
    let bracket = theta_bracket(theta, d, se2, &sig);
    let inv = linalg::spd_inverse(bracket.as_ref(), CONDITION_LIMIT, "degenerate design")?;
    Ok(inv * sw2)
}

/// Bound on `Cov(d_i)` for the sample in column `i` (0-based).
pub fn ccrb_d(i: usize, theta: MatRef<'_, f64>, d: MatRef<'_, f64>, se2: f64, sw2: f64) -> Result<Mat<f64>> {
    check_inputs(theta, d, se2, sw2)?;
    let sig = sigma_theta(theta, se2, sw2)?;
    let bracket = theta_bracket(theta, d, se2, &sig);
    ccrb_d_with(i, theta, d, se2, sw2, &sig, &bracket)
}

fn ccrb_d_with(
    i: usize,
    theta: MatRef<'_, f64>,
    d: MatRef<'_, f64>,
    se2: f64,
    sw2: f64,
    sig: &Mat<f64>,
    bracket: &Mat<f64>,
) -> Result<Mat<f64>> {
    if i >= d.ncols() {
        return Err(Error::InvalidArgument(format!(
            "sample {} out of range 1..={}",
            i + 1,
            d.ncols()
        )));
    }
    if d.ncols() < 2 {
        return Err(Error::InsufficientSamples {
            submodel: 0,
            count: d.ncols(),
            n_d: 2,
        });
    }
    let (n_y, n_d) = (theta.nrows(), theta.ncols());
    let h = h_matrix(n_y, &column(d, i));
    let correction = h.transpose() * sig * &h;
    let leave_one_out = Mat::from_fn(bracket.nrows(), bracket.ncols(), |r, c| {
        bracket[(r, c)] + se2 * correction[(r, c)]
    });
    let c_i = linalg::spd_inverse(leave_one_out.as_ref(), CONDITION_LIMIT, "leave-one-out design")? * sw2;
    let tt = theta.transpose() * theta;
    let th = theta.transpose() * &h;
    let q = &th * &c_i * th.transpose();
    let inner = Mat::from_fn(n_d, n_d, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        id + se2 / sw2 * tt[(r, c)] - se2 / (sw2 * sw2) * q[(r, c)]
    });
    let inv = linalg::spd_inverse(inner.as_ref(), CONDITION_LIMIT, "input bound")?;
    Ok(linalg::symmetrize(inv.as_ref()) * se2)
}

/// Negative Gaussian log-likelihood (up to a constant) of one submodel's data.
pub fn negative_log_likelihood(
    theta: MatRef<'_, f64>,
    d: MatRef<'_, f64>,
    x: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    se2: f64,
    sw2: f64,
) -> f64 {
    let pred = theta * d;
    let mut ex = 0.0;
    let mut ey = 0.0;
    for t in 0..d.ncols() {
        for r in 0..d.nrows() {
            ex += (x[(r, t)] - d[(r, t)]).powi(2);
        }
        for r in 0..theta.nrows() {
            ey += (y[(r, t)] - pred[(r, t)]).powi(2);
        }
    }
    ex / (2.0 * se2) + ey / (2.0 * sw2)
}

/// Central finite-difference Hessian of [`negative_log_likelihood`] at the
/// noiseless data `x = D`, `y = Θ D`, in the parameter order of
/// [`FisherBlocks::assemble`].
pub fn finite_difference_hessian(theta: MatRef<'_, f64>, d: MatRef<'_, f64>, se2: f64, sw2: f64, step: f64) -> Mat<f64> {
    let (n_y, n_d, n) = (theta.nrows(), theta.ncols(), d.ncols());
    let x = d.to_owned();
    let y = theta * d;
    let p = n_y * n_d;
    let dim = p + n * n_d;
    let base: Vec<f64> = (0..p)
        .map(|k| theta[(k / n_d, k % n_d)])
        .chain((0..n * n_d).map(|k| d[(k % n_d, k / n_d)]))
        .collect();
    let eval = |v: &[f64]| {
        let th = Mat::from_fn(n_y, n_d, |r, c| v[r * n_d + c]);
        let dd = Mat::from_fn(n_d, n, |r, c| v[p + c * n_d + r]);
        negative_log_likelihood(th.as_ref(), dd.as_ref(), x.as_ref(), y.as_ref(), se2, sw2)
    };
    let mut hess = Mat::zeros(dim, dim);
    let mut v = base.clone();
    for a in 0..dim {
        for b in a..dim {
            let mut f = [0.0; 4];
            for (k, (sa, sb)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].iter().enumerate() {
                v[a] += sa * step;
                v[b] += sb * step;
                f[k] = eval(&v);
                v[a] = base[a];
                v[b] = base[b];
            }
            let h = (f[0] - f[1] - f[2] + f[3]) / (4.0 * step * step);
            hess[(a, b)] = h;
            hess[(b, a)] = h;
        }
    }
    hess
}

/// Name of entry `(r, c)` of submodel `i` (1-based submodel, 0-based indices).
pub fn theta_entry_name(submodel: usize, r: usize, c: usize) -> String {
    format!("theta{submodel}[{r},{c}]")
}

/// Bounds for one submodel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodelBound {
    /// 1-based.
    pub submodel: usize,
    pub samples: usize,
    /// Rows of the `(N_y·N_d)²` bound on `vec(Θᵀ)`.
    pub cov_theta: Vec<Vec<f64>>,
    /// Diagonal of the bound on each `d_t`, keyed by 1-based time index.
    pub cov_d_diag: Vec<(usize, Vec<f64>)>,
}

impl SubmodelBound {
    pub fn theta_diag(&self) -> Vec<f64> {
        (0..self.cov_theta.len()).map(|k| self.cov_theta[k][k]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub n_d: usize,
    pub n_y: usize,
    pub sigma_e2: f64,
    pub sigma_w2: f64,
    pub submodels: Vec<SubmodelBound>,
}

/// Evaluates the bounds submodel by submodel using only that submodel's
/// samples. `labels` are 0-based; the input bounds are skipped unless
/// `with_inputs` is set.
pub fn crb_report(
    thetas: &[Mat<f64>],
    d: MatRef<'_, f64>,
    labels: &[usize],
    se2: f64,
    sw2: f64,
    with_inputs: bool,
) -> Result<CrbReport> {
    if labels.len() != d.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} input columns",
            labels.len(),
            d.ncols()
        )));
    }
    let first = thetas
        .first()
        .ok_or_else(|| Error::InvalidArgument("no submodels".into()))?;
    let mut submodels = Vec::with_capacity(thetas.len());
    for (k, theta) in thetas.iter().enumerate() {
        let cols: Vec<usize> = (0..labels.len()).filter(|&t| labels[t] == k).collect();
        let d_k = linalg::select_columns(d, &cols);
        let wrap = |e: Error| match e {
            Error::InsufficientSamples { count, n_d, .. } => Error::InsufficientSamples {
                submodel: k + 1,
                count,
                n_d,
            },
            other => other,
        };
        let cov = ccrb_theta(theta.as_ref(), d_k.as_ref(), se2, sw2).map_err(wrap)?;
        let mut cov_d_diag = Vec::new();
        if with_inputs {
            let sig = sigma_theta(theta.as_ref(), se2, sw2)?;
            let bracket = theta_bracket(theta.as_ref(), d_k.as_ref(), se2, &sig);
            for (j, &t) in cols.iter().enumerate() {
                let b = ccrb_d_with(j, theta.as_ref(), d_k.as_ref(), se2, sw2, &sig, &bracket).map_err(wrap)?;
                cov_d_diag.push((t + 1, (0..b.nrows()).map(|r| b[(r, r)]).collect()));
            }
        }
        submodels.push(SubmodelBound {
            submodel: k + 1,
            samples: cols.len(),
            cov_theta: linalg::to_rows(cov.as_ref()),
            cov_d_diag,
        });
    }
    Ok(CrbReport {
        n_d: first.ncols(),
        n_y: first.nrows(),
        sigma_e2: se2,
        sigma_w2: sw2,
        submodels,
    })
}

impl CrbReport {
    /// One row per parameter entry: `submodel,entry,bound`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["submodel", "entry", "bound"])?;
        for s in &self.submodels {
            for (k, v) in s.theta_diag().iter().enumerate() {
                let name = theta_entry_name(s.submodel, k / self.n_d, k % self.n_d);
                w.write_record([s.submodel.to_string(), name, v.to_string()])?;
            }
            for (t, diag) in &s.cov_d_diag {
                for (j, v) in diag.iter().enumerate() {
                    w.write_record([s.submodel.to_string(), format!("d{t}[{j}]"), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
        linalg::max_abs_diff(a, b) / linalg::max_abs(b).max(f64::MIN_POSITIVE)
    }

    fn full_inverse(theta: MatRef<'_, f64>, d: MatRef<'_, f64>, se2: f64, sw2: f64) -> Mat<f64> {
        let f = fisher(theta, d, se2, sw2).unwrap().assemble();
        linalg::inverse_checked(f.as_ref(), 1e14, "fim").unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (Mat<f64>, Mat<f64>, f64, f64) {
        let n_d = rng.random_range(1..=2);
        let n_y = rng.random_range(1..=2);
        let n = rng.random_range(n_d + 1..=6);
        let theta = Mat::from_fn(n_y, n_d, |_, _| rng.random_range(-1.5..1.5));
        let d = Mat::from_fn(n_d, n, |_, _| rng.random_range(-1.0..1.0));
        (theta, d, rng.random_range(0.01..0.5), rng.random_range(0.01..0.5))
    }

    #[test]
    fn scalar_fisher() {
        let f = fisher(mat![[0.7]].as_ref(), mat![[1.0, 1.0]].as_ref(), 0.01, 0.01).unwrap();
        assert!((f.f_theta[(0, 0)] - 200.0).abs() < 1e-9);
        assert!((f.f_d[(0, 0)] - (100.0 + 49.0)).abs() < 1e-9);
        assert!((f.f_theta_d[1][(0, 0)] - 70.0).abs() < 1e-9);
    }

    #[test]
    fn zero_theta_decouples() {
        let theta = Mat::<f64>::zeros(2, 2);
        let d = mat![[1.0, 0.3, -0.2], [0.1, 0.8, 0.5]];
        let f = fisher(theta.as_ref(), d.as_ref(), 0.04, 0.02).unwrap();
        assert!(f.f_theta_d.iter().all(|b| linalg::max_abs(b.as_ref()) == 0.0));
        assert!(linalg::max_abs_diff(f.f_d.as_ref(), (Mat::<f64>::identity(2, 2) * 25.0).as_ref()) < 1e-12);
        let bound = ccrb_theta(theta.as_ref(), d.as_ref(), 0.04, 0.02).unwrap();
        let ddt = &d * d.transpose();
        let classical = linalg::spd_inverse(kron(Mat::<f64>::identity(2, 2).as_ref(), ddt.as_ref()).as_ref(), 1e12, "t").unwrap() * 0.02;
        assert!(rel_diff(bound.as_ref(), classical.as_ref()) < 1e-14);
        let bd = ccrb_d(1, theta.as_ref(), d.as_ref(), 0.04, 0.02).unwrap();
        assert!(rel_diff(bd.as_ref(), (Mat::<f64>::identity(2, 2) * 0.04).as_ref()) < 1e-14);
    }

    #[test]
    fn scalar_closed_form() {
        // 100 unit inputs: Σd² = 100
        let d = Mat::from_fn(1, 100, |_, _| 1.0);
        let b = ccrb_theta(mat![[0.7]].as_ref(), d.as_ref(), 0.01, 0.01).unwrap();
        assert!((b[(0, 0)] - 1.49e-4).abs() < 1e-15);
        let full = full_inverse(mat![[0.7]].as_ref(), d.as_ref(), 0.01, 0.01);
        assert!((full[(0, 0)] - b[(0, 0)]).abs() / b[(0, 0)] < 1e-10);
        let bd = ccrb_d(0, mat![[0.7]].as_ref(), d.as_ref(), 0.01, 0.01).unwrap();
        assert!((full[(1, 1)] - bd[(0, 0)]).abs() / bd[(0, 0)] < 1e-10);
    }

    #[test]
    fn bounds_match_schur_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let (theta, d, se2, sw2) = random_instance(&mut rng);
            let full = full_inverse(theta.as_ref(), d.as_ref(), se2, sw2);
            let p = theta.nrows() * theta.ncols();
            let n_d = d.nrows();
            let bt = ccrb_theta(theta.as_ref(), d.as_ref(), se2, sw2).unwrap();
            let ft = Mat::from_fn(p, p, |i, j| full[(i, j)]);
            assert!(rel_diff(bt.as_ref(), ft.as_ref()) < 1e-9);
            for i in 0..d.ncols() {
                let bd = ccrb_d(i, theta.as_ref(), d.as_ref(), se2, sw2).unwrap();
                let off = p + i * n_d;
                let fd = Mat::from_fn(n_d, n_d, |r, c| full[(off + r, off + c)]);
                assert!(rel_diff(bd.as_ref(), fd.as_ref()) < 1e-9);
            }
        }
    }

    #[test]
    fn dropping_the_column_from_dd_is_not_the_schur_complement() {
        // C_i keeps the full DDᵀ; removing column i from D altogether does not
        // reproduce the block inverse
        let theta = mat![[0.9, -0.3]];
        let d = mat![[1.0, 0.2, -0.7, 0.4], [0.1, 0.9, 0.3, -0.6]];
        let (se2, sw2) = (0.2, 0.1);
        let full = full_inverse(theta.as_ref(), d.as_ref(), se2, sw2);
        // precision of d_1 under the literal reading
        let literal = {
            let rest = linalg::select_columns(d.as_ref(), &[1, 2, 3]);
            let c = ccrb_theta(theta.as_ref(), rest.as_ref(), se2, sw2).unwrap();
            let h = h_matrix(1, &[1.0, 0.1]);
            let th = theta.transpose() * &h;
            let q = &th * &c * th.transpose();
            let tt = theta.transpose() * &theta;
            Mat::from_fn(2, 2, |r, k| {
                ((r == k) as u8 as f64 + se2 / sw2 * tt[(r, k)] - se2 / (sw2 * sw2) * q[(r, k)]) / se2
            })
        };
        let fd = Mat::from_fn(2, 2, |r, c| full[(2 + r, 2 + c)]);
        let precision = linalg::inverse_checked(fd.as_ref(), 1e12, "t").unwrap();
        assert!(rel_diff(literal.as_ref(), precision.as_ref()) > 1e-3);
        let exact = ccrb_d(0, theta.as_ref(), d.as_ref(), se2, sw2).unwrap();
        assert!(rel_diff(exact.as_ref(), fd.as_ref()) < 1e-10);
    }

    #[test]
    fn fisher_matches_finite_difference_hessian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let (theta, d, se2, sw2) = random_instance(&mut rng);
            let f = fisher(theta.as_ref(), d.as_ref(), se2, sw2).unwrap().assemble();
            let h = finite_difference_hessian(theta.as_ref(), d.as_ref(), se2, sw2, 1e-4);
            assert!(rel_diff(h.as_ref(), f.as_ref()) < 1e-4);
        }
    }

    #[test]
    fn fim_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let (theta, d, se2, sw2) = random_instance(&mut rng);
            let f = fisher(theta.as_ref(), d.as_ref(), se2, sw2).unwrap().assemble();
            assert!(linalg::max_abs_diff(f.as_ref(), f.transpose()) == 0.0);
            let eig = f.self_adjoint_eigen(faer::Side::Lower).unwrap();
            assert!(eig.S().column_vector()[0] > 0.0);
        }
    }

    #[test]
    fn vanishing_input_noise_gives_classical_bound() {
        let theta = mat![[0.7, -0.2], [0.4, 1.1]];
        let d = mat![[1.0, 0.2, -0.7, 0.4, 0.5], [0.1, 0.9, 0.3, -0.6, 0.2]];
        let sw2 = 0.05;
        let b = ccrb_theta(theta.as_ref(), d.as_ref(), 1e-12 * sw2, sw2).unwrap();
        let ddt = &d * d.transpose();
        let classical = linalg::spd_inverse(kron(Mat::<f64>::identity(2, 2).as_ref(), ddt.as_ref()).as_ref(), 1e12, "t").unwrap() * sw2;
        assert!(rel_diff(b.as_ref(), classical.as_ref()) < 1e-6);
        let bd = ccrb_d(2, theta.as_ref(), d.as_ref(), 0.0, sw2).unwrap();
        assert_eq!(linalg::max_abs(bd.as_ref()), 0.0);
    }

    #[test]
    fn output_noise_weakens_theta_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let (theta, d, se2, sw2) = random_instance(&mut rng);
            let b0 = ccrb_theta(theta.as_ref(), d.as_ref(), se2, sw2).unwrap();
            let b1 = ccrb_theta(theta.as_ref(), d.as_ref(), se2, 2.0 * sw2).unwrap();
            let diff = linalg::symmetrize((&b1 - &b0).as_ref());
            let eig = diff.self_adjoint_eigen(faer::Side::Lower).unwrap();
            assert!(eig.S().column_vector()[0] > -1e-12 * linalg::max_abs(b1.as_ref()));
        }
    }

    #[test]
    fn zero_output_noise_is_refused() {
        let r = ccrb_theta(mat![[0.7]].as_ref(), mat![[1.0, 2.0]].as_ref(), 0.01, 0.0);
        assert!(matches!(r, Err(Error::ConstrainedCrbOutOfScope)));
    }

    #[test]
    fn degenerate_design() {
        let d = mat![[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]];
        let r = ccrb_theta(mat![[0.7, 0.1]].as_ref(), d.as_ref(), 0.01, 0.01);
        assert!(matches!(r, Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn report_per_submodel() {
        let thetas = vec![mat![[0.7]], mat![[0.8]]];
        let d = mat![[1.0, 1.0, 0.5, -0.5, 2.0]];
        let labels = [0, 0, 1, 1, 1];
        let r = crb_report(&thetas, d.as_ref(), &labels, 0.01, 0.01, true).unwrap();
        assert_eq!(r.submodels[0].samples, 2);
        let expected0 = (0.01 + 0.01 * 0.49) / 2.0;
        assert!((r.submodels[0].cov_theta[0][0] - expected0).abs() < 1e-15);
        let expected1 = (0.01 + 0.01 * 0.64) / 4.5;
        assert!((r.submodels[1].cov_theta[0][0] - expected1).abs() < 1e-15);
        assert_eq!(r.submodels[1].cov_d_diag.iter().map(|x| x.0).collect::<Vec<_>>(), vec![3, 4, 5]);
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("submodel,entry,bound\n1,\"theta1[0,0]\","));
        assert_eq!(text.lines().count(), 1 + 2 + 5);
        let back: CrbReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
