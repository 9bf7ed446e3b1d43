use crate::network::IfnEquivalent;
use crate::numerics::{eigh_desc, hermitian_part, inv_pd, solve_checked, CMat, CVec, RMat, RVec};
use crate::{Error, Result};

/// One data stream: transmit direction, power and MMSE-SIC receiver.
#[derive(Debug, Clone)]
pub struct Stream {
    pub link: usize,
    pub tx: CVec,
    pub power: f64,
    pub rx: CVec,
    pub sinr: f64,
    /// `p / (interference + noise)`, i.e. the SINR divided by the stream gain.
    pub gain: f64,
}

/// Streams, crosstalk `Ψ` and noise vector of a one-hop network at fixed
/// covariances.
#[derive(Debug, Clone)]
pub struct StreamModel {
    pub streams: Vec<Stream>,
    pub crosstalk: RMat,
    /// `r† W'_l r` per stream.
    pub noise: RVec,
}

/// Eigen-streams of a covariance, strongest first. Zero-power streams are
/// dropped.
pub fn decompose_streams(sigma: &CMat) -> Vec<(CVec, f64)> {
    let (vals, vecs) = eigh_desc(sigma);
    let top = vals.first().cloned().unwrap_or(0.0);
    vals.iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0 && v > 1e-13 * top)
        .map(|(i, &v)| (vecs.column(i).into_owned(), v))
        .collect()
}

/// MMSE-SIC receivers for the given streams, decoded in list order within
/// each link. Returns one `(rx, sinr, gain)` per stream.
pub fn mmse_sic_receivers(ifn: &IfnEquivalent, sigma: &[CMat], streams: &[Vec<(CVec, f64)>]) -> Result<Vec<Vec<(CVec, f64, f64)>>> {
    let mut out = Vec::with_capacity(streams.len());
    for (l, link) in streams.iter().enumerate() {
        let h = &ifn.channels[l][l];
        let omega = ifn.omega(sigma, l);
        let signals: Vec<CVec> = link.iter().map(|(t, _)| h * t).collect();
        let mut res = Vec::with_capacity(link.len());
        for m in 0..link.len() {
            let mut cov = omega.clone();
            for i in (m + 1)..link.len() {
                cov += &signals[i] * signals[i].adjoint() * crate::numerics::real(link[i].1);
            }
            let cov = hermitian_part(&cov);
            let ht = &signals[m];
            let mut r = if ht.norm() > 0.0 {
                inv_pd(&cov)? * ht
            } else {
                let mut e = CVec::zeros(h.nrows());
                e[0] = crate::numerics::real(1.0);
                e
            };
            let nr = r.norm();
            if nr > 0.0 {
                r /= crate::numerics::real(nr);
            }
            let den = (r.adjoint() * &cov * &r)[(0, 0)].re;
            let g = (r.adjoint() * ht)[(0, 0)].norm_sqr();
            let p = link[m].1;
            res.push((r, p * g / den, p / den));
        }
        out.push(res);
    }
    Ok(out)
}

/// Crosstalk matrix over the flattened stream list. Stream `(k,n)` leaks
/// into `(l,m)` when `k ≠ l` and `φ_{l,k} = 1`, or `k = l` and `n > m`.
pub fn build_crosstalk(ifn: &IfnEquivalent, streams: &[Stream]) -> RMat {
    let n = streams.len();
    let mut psi = RMat::zeros(n, n);
    let index_in_link: Vec<usize> = {
        let mut seen = vec![0usize; ifn.links()];
        streams
            .iter()
            .map(|s| {
                let i = seen[s.link];
                seen[s.link] += 1;
                i
            })
            .collect()
    };
    for (a, sa) in streams.iter().enumerate() {
        for (b, sb) in streams.iter().enumerate() {
            let leaks = if sa.link == sb.link {
                index_in_link[b] > index_in_link[a]
            } else {
                ifn.coupling[sa.link][sb.link]
            };
            if leaks {
                let h = &ifn.channels[sa.link][sb.link];
                psi[(a, b)] = (sa.rx.adjoint() * h * &sb.tx)[(0, 0)].norm_sqr();
            }
        }
    }
    psi
}

impl StreamModel {
    pub fn build(ifn: &IfnEquivalent, sigma: &[CMat]) -> Result<Self> {
        if sigma.len() != ifn.links() {
            return Err(Error::DimensionMismatch(format!("{} covariances for {} links", sigma.len(), ifn.links())));
        }
        let per_link: Vec<Vec<(CVec, f64)>> = sigma.iter().map(decompose_streams).collect();
        let rx = mmse_sic_receivers(ifn, sigma, &per_link)?;
        let mut streams = Vec::new();
        for (l, (tx, rx)) in per_link.into_iter().zip(rx).enumerate() {
            for ((t, p), (r, sinr, gain)) in tx.into_iter().zip(rx) {
                streams.push(Stream { link: l, tx: t, power: p, rx: r, sinr, gain });
            }
        }
        let crosstalk = build_crosstalk(ifn, &streams);
        let noise = RVec::from_iterator(streams.len(), streams.iter().map(|s| quad(&s.rx, &ifn.noise[s.link])));
        Ok(Self { streams, crosstalk, noise })
    }

    pub fn powers(&self) -> RVec {
        RVec::from_iterator(self.streams.len(), self.streams.iter().map(|s| s.power))
    }

    /// `D⁻¹ - Ψᵀ`.
    pub fn dual_operator(&self) -> RMat {
        let mut m = -self.crosstalk.transpose();
        for (i, s) in self.streams.iter().enumerate() {
            m[(i, i)] += 1.0 / s.gain;
        }
        m
    }

    /// Per-stream transmit-side noise `t† M_l t`.
    pub fn tx_quadratic(&self, m: &[CMat]) -> RVec {
        RVec::from_iterator(self.streams.len(), self.streams.iter().map(|s| quad(&s.tx, &m[s.link])))
    }

    /// Per-stream receive-side noise `r† M_l r`.
    pub fn rx_quadratic(&self, m: &[CMat]) -> RVec {
        RVec::from_iterator(self.streams.len(), self.streams.iter().map(|s| quad(&s.rx, &m[s.link])))
    }

    /// Dual stream powers for dual noise `n̂`.
    pub fn reverse_powers(&self, dual_noise: &RVec) -> Result<RVec> {
        if self.streams.is_empty() {
            return Ok(RVec::zeros(0));
        }
        solve_checked(&self.dual_operator(), dual_noise)
    }

    /// `Σ̂_l = Σ_m q_{l,m} r_{l,m} r_{l,m}†`.
    pub fn assemble(&self, dims: &[usize], q: &RVec) -> Vec<CMat> {
        let mut out: Vec<CMat> = dims.iter().map(|&d| CMat::zeros(d, d)).collect();
        for (s, &qi) in self.streams.iter().zip(q.iter()) {
            out[s.link] += &s.rx * s.rx.adjoint() * crate::numerics::real(qi.max(0.0));
        }
        out.iter().map(hermitian_part).collect()
    }
}

fn quad(v: &CVec, m: &CMat) -> f64 {
    (v.adjoint() * m * v)[(0, 0)].re
}

#[derive(Debug, Clone)]
pub struct CovarianceTransform {
    pub sigma_hat: Vec<CMat>,
    pub reverse_powers: RVec,
    pub model: StreamModel,
}

/// Dual covariances with equal stream SINRs under the penalty matrices of
/// `ifn`, so that `Σ Tr(Σ̂_l W'_l) = Σ Tr(Σ_l Ŵ'_l)`.
pub fn covariance_transform(ifn: &IfnEquivalent, sigma: &[CMat]) -> Result<CovarianceTransform> {
    let model = StreamModel::build(ifn, sigma)?;
    let nhat = model.tx_quadratic(&ifn.constraint);
    let q = model.reverse_powers(&nhat)?;
    let dims: Vec<usize> = ifn.noise.iter().map(|w| w.nrows()).collect();
    let sigma_hat = model.assemble(&dims, &q);
    Ok(CovarianceTransform { sigma_hat, reverse_powers: q, model })
}
