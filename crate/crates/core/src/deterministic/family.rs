//! Moment families `C_1, …, C_n` and their resolvent traces.
//!
//! Shared-moment families have the form `C_i = α_i C + L K_i Lᵀ` with `L`
//! of rank at most two. After one eigendecomposition of `C`, evaluating
//! `B = (1/n) Σ w_i C_i + zI` costs `O(n + p)` via the Woodbury identity.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{complex_inverse, sorted_eigen};

type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone)]
pub(crate) struct SharedBase {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SharedBase {
    pub fn new(c: &DMatrix<f64>) -> Self {
        let (values, vectors) = sorted_eigen(c.clone());
        let values = values.map(|v| v.max(0.0));
        Self { values, vectors }
    }

    fn norm(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct MomentFamily {
    n: usize,
    p: usize,
    repr: Repr,
}

#[derive(Debug, Clone)]
enum Repr {
    Dense(Vec<DMatrix<f64>>),
    Shared(Structured),
}

#[derive(Debug, Clone)]
struct Structured {
    base: SharedBase,
    alpha: Vec<f64>,
    /// `Vᵀ L`, `p × r`.
    dirs_rot: DMatrix<f64>,
    /// `L`, `p × r`.
    dirs: DMatrix<f64>,
    k: Vec<DMatrix<f64>>,
}

/// Traces of `B⁻¹` for one evaluation point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `(1/n) tr(C_i B⁻¹)`.
    pub traces: Vec<Complex64>,
    /// `(1/p) tr(B⁻¹)`.
    pub normalized_trace: Complex64,
    /// `vᵀ B⁻¹ v` for the prepared probe, when one was passed.
    pub probe: Option<Complex64>,
}

/// A probe vector prepared for repeated quadratic-form evaluations.
#[derive(Debug, Clone)]
pub struct Probe {
    raw: DVector<f64>,
    rotated: Option<DVector<f64>>,
}

impl MomentFamily {
    pub(crate) fn dense(members: Vec<DMatrix<f64>>) -> Self {
        Self {
            n: members.len(),
            p: members[0].nrows(),
            repr: Repr::Dense(members),
        }
    }

    pub(crate) fn shared(
        base: SharedBase,
        alpha: Vec<f64>,
        mean: &DVector<f64>,
        signal: &DVector<f64>,
        cross: Vec<f64>,
        signal_coef: Vec<f64>,
    ) -> Self {
        let n = alpha.len();
        let p = base.values.len();
        let has_signal = signal.norm() > 0.0 && signal_coef.iter().chain(&cross).any(|v| *v != 0.0);
        let has_mean = has_signal && mean.norm() > 0.0 && cross.iter().any(|v| *v != 0.0);
        let (dirs, k): (DMatrix<f64>, Vec<DMatrix<f64>>) = if !has_signal {
            (DMatrix::zeros(p, 0), vec![DMatrix::zeros(0, 0); n])
        } else if !has_mean {
            (
                DMatrix::from_columns(std::slice::from_ref(signal)),
                signal_coef.iter().map(|b| DMatrix::from_element(1, 1, *b)).collect(),
            )
        } else {
            (
                DMatrix::from_columns(&[mean.clone(), signal.clone()]),
                (0..n)
                    .map(|i| DMatrix::from_row_slice(2, 2, &[0.0, cross[i], cross[i], signal_coef[i]]))
                    .collect(),
            )
        };
        let dirs_rot = base.vectors.transpose() * &dirs;
        Self {
            n,
            p,
            repr: Repr::Shared(Structured {
                base,
                alpha,
                dirs_rot,
                dirs,
                k,
            }),
        }
    }

    /// Dense family from explicit members.
    pub fn from_members(members: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = members
            .first()
            .ok_or_else(|| crate::Error::domain("empty family"))?
            .nrows();
        let members = members
            .iter()
            .map(|m| {
                crate::error::check_len(p, m.nrows())?;
                crate::linalg::symmetrized(m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::dense(members))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn member(&self, i: usize) -> DMatrix<f64> {
        match &self.repr {
            Repr::Dense(m) => m[i].clone(),
            Repr::Shared(s) => {
                let v = &s.base.vectors;
                let c = v * DMatrix::from_diagonal(&s.base.values) * v.transpose();
                c * s.alpha[i] + &s.dirs * &s.k[i] * s.dirs.transpose()
            }
        }
    }

    /// Materializes all members; used by oracles.
    pub fn to_dense(&self) -> Self {
        Self::dense((0..self.n).map(|i| self.member(i)).collect())
    }

    pub fn trace(&self, i: usize) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m[i].trace(),
            Repr::Shared(s) => {
                let mut t = s.alpha[i] * s.base.values.sum();
                let r = s.dirs.ncols();
                for a in 0..r {
                    for b in 0..r {
                        t += s.k[i][(a, b)] * s.dirs.column(a).dot(&s.dirs.column(b));
                    }
                }
                t
            }
        }
    }

    /// Upper bound on the spectral norm of member `i`.
    pub fn norm_bound(&self, i: usize) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m[i].clone().symmetric_eigenvalues().amax(),
            Repr::Shared(s) => {
                // L K Lᵀ shares its nonzero spectrum with G^{1/2} K G^{1/2}, G = LᵀL.
                let low = if s.dirs.ncols() == 0 {
                    0.0
                } else {
                    let g = (s.dirs.transpose() * &s.dirs).symmetric_eigen();
                    let root = &g.eigenvectors
                        * DMatrix::from_diagonal(&g.eigenvalues.map(|v| v.max(0.0).sqrt()))
                        * g.eigenvectors.transpose();
                    (&root * &s.k[i] * &root).symmetric_eigenvalues().amax()
                };
                s.alpha[i].abs() * s.base.norm() + low
            }
        }
    }

    pub fn prepare_probe(&self, v: &DVector<f64>) -> Probe {
        let rotated = match &self.repr {
            Repr::Dense(_) => None,
            Repr::Shared(s) => Some(s.base.vectors.transpose() * v),
        };
        Probe { raw: v.clone(), rotated }
    }

    /// Evaluates traces of `B⁻¹` with `B = (1/n) Σ w_i C_i + zI`.
    pub fn evaluate(&self, w: &[Complex64], z: Complex64, probe: Option<&Probe>) -> Result<Evaluation> {
        crate::error::check_len(self.n, w.len())?;
        match &self.repr {
            Repr::Dense(members) => {
                let binv = complex_inverse(self.assemble_dense(members, w, z))?;
                let n = self.n as f64;
                let traces = members
                    .iter()
                    .map(|m| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (a, col) in m.column_iter().enumerate() {
                            for (b, v) in col.iter().enumerate() {
                                acc += binv[(a, b)] * *v;
                            }
                        }
                        acc / n
                    })
                    .collect();
                let normalized_trace = binv.trace() / self.p as f64;
                let probe = probe.map(|pr| {
                    let v = pr.raw.map(|x| Complex64::new(x, 0.0));
                    (v.transpose() * &binv * &v)[0]
                });
                Ok(Evaluation {
                    traces,
                    normalized_trace,
                    probe,
                })
            }
            Repr::Shared(s) => s.evaluate(self.n, w, z, probe),
        }
    }

    fn assemble_dense(&self, members: &[DMatrix<f64>], w: &[Complex64], z: Complex64) -> CMatrix {
        let p = self.p;
        let n = self.n as f64;
        let mut b = CMatrix::from_element(p, p, Complex64::new(0.0, 0.0));
        for (m, wi) in members.iter().zip(w) {
            let c = wi / n;
            for (x, y) in b.iter_mut().zip(m.iter()) {
                *x += c * *y;
            }
        }
        for i in 0..p {
            b[(i, i)] += z;
        }
        b
    }

    /// `B⁻¹` as an explicit matrix.
    pub fn resolvent_matrix(&self, w: &[Complex64], z: Complex64) -> Result<CMatrix> {
        crate::error::check_len(self.n, w.len())?;
        let members = match &self.repr {
            Repr::Dense(m) => return complex_inverse(self.assemble_dense(m, w, z)),
            Repr::Shared(_) => (0..self.n).map(|i| self.member(i)).collect::<Vec<_>>(),
        };
        complex_inverse(self.assemble_dense(&members, w, z))
    }
}

impl Structured {
    fn evaluate(&self, n: usize, w: &[Complex64], z: Complex64, probe: Option<&Probe>) -> Result<Evaluation> {
        let nf = n as f64;
        let r = self.dirs_rot.ncols();
        let zero = Complex64::new(0.0, 0.0);
        let a: Complex64 = w.iter().zip(&self.alpha).map(|(wi, ai)| wi * *ai).sum::<Complex64>() / nf;
        let c = &self.base.values;
        let inv_d: Vec<Complex64> = c.iter().map(|ck| (a * *ck + z).inv()).collect();
        let mut tr_c: Complex64 = c.iter().zip(&inv_d).map(|(ck, d)| d * *ck).sum();
        let mut tr_0: Complex64 = inv_d.iter().sum();

        let mut h = CMatrix::zeros(r, r);
        let mut wmat = CMatrix::zeros(r, r);
        if r > 0 {
            let mut k = CMatrix::zeros(r, r);
            for (ki, wi) in self.k.iter().zip(w) {
                for idx in 0..r * r {
                    k[idx] += wi * ki[idx] / nf;
                }
            }
            let (mut g, mut jc, mut j0) = (CMatrix::zeros(r, r), CMatrix::zeros(r, r), CMatrix::zeros(r, r));
            for a_ in 0..r {
                for b_ in 0..=a_ {
                    let (mut sg, mut sc, mut s0) = (zero, zero, zero);
                    for kk in 0..c.len() {
                        let uu = self.dirs_rot[(kk, a_)] * self.dirs_rot[(kk, b_)];
                        let d = inv_d[kk];
                        sg += d * uu;
                        s0 += d * d * uu;
                        sc += d * d * (uu * c[kk]);
                    }
                    for (m, v) in [(&mut g, sg), (&mut jc, sc), (&mut j0, s0)] {
                        m[(a_, b_)] = v;
                        m[(b_, a_)] = v;
                    }
                }
            }
            let eye = CMatrix::identity(r, r);
            let inner = complex_inverse(&eye + &g * &k)?;
            wmat = &k * inner;
            tr_c -= (&wmat * &jc).trace();
            tr_0 -= (&wmat * &j0).trace();
            h = &g - &g * &wmat * &g;
        }

        let traces = (0..n)
            .map(|i| {
                let mut t = tr_c * self.alpha[i];
                for idx in 0..r * r {
                    // tr(K_i H) with both symmetric.
                    t += h[idx] * self.k[i][idx];
                }
                t / nf
            })
            .collect();

        let probe = probe.map(|pr| {
            let v = pr.rotated.as_ref().expect("probe prepared for a shared family");
            let mut s = zero;
            let mut gv = vec![zero; r];
            for kk in 0..c.len() {
                let d = inv_d[kk];
                s += d * (v[kk] * v[kk]);
                for (a_, g_) in gv.iter_mut().enumerate() {
                    *g_ += d * (self.dirs_rot[(kk, a_)] * v[kk]);
                }
            }
            for a_ in 0..r {
                for b_ in 0..r {
                    s -= gv[a_] * wmat[(a_, b_)] * gv[b_];
                }
            }
            s
        });

        Ok(Evaluation {
            traces,
            normalized_trace: tr_0 / c.len() as f64,
            probe,
        })
    }
}
