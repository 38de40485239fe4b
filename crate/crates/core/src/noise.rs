//! Kraus-operator noise channels.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::exact::DensityMatrix;
use crate::gates;
use crate::tensor::ComplexTensor;

/// A completely positive trace-preserving map in Kraus form.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    arity: usize,
    kraus: Vec<ComplexTensor>,
    label: String,
    rate: f64,
}

impl KrausChannel {
    /// Builds a channel from explicit Kraus matrices, checking completeness.
    pub fn new(arity: usize, kraus: Vec<ComplexTensor>, label: impl Into<String>, rate: f64) -> Result<Self> {
        if !(arity == 1 || arity == 2) {
            return Err(Error::invalid(format!("channel arity {arity} not supported")));
        }
        if kraus.is_empty() {
            return Err(Error::invalid("a channel needs at least one Kraus operator"));
        }
        let dim = 1 << arity;
        for k in &kraus {
            if k.shape() != [dim, dim] {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator of shape {:?} for arity {arity}",
                    k.shape()
                )));
            }
        }
        let ch = Self {
            arity,
            kraus,
            label: label.into(),
            rate,
        };
        let dev = ch.completeness_deviation();
        if dev > 1e-10 {
            return Err(Error::invalid(format!(
                "Kraus operators violate completeness by {dev:.3e}"
            )));
        }
        Ok(ch)
    }

    fn from_mats2(kraus: Vec<gates::Mat2>, label: &str, rate: f64) -> Self {
        Self {
            arity: 1,
            kraus: kraus
                .iter()
                .map(|m| ComplexTensor::from_raw(vec![2, 2], gates::flatten2(m)))
                .collect(),
            label: label.to_string(),
            rate,
        }
    }

    pub fn identity(arity: usize) -> Self {
        let dim = 1 << arity;
        Self {
            arity,
            kraus: vec![ComplexTensor::identity(dim)],
            label: "identity".into(),
            rate: 0.0,
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        1 << self.arity
    }

    pub fn kraus(&self) -> &[ComplexTensor] {
        &self.kraus
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Largest entry of `|Σ_k E_k† E_k − I|`.
    pub fn completeness_deviation(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for e in &self.kraus {
                    let m = e.data();
                    for k in 0..d {
                        acc += m[k * d + i].conj() * m[k * d + j];
                    }
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }

    /// Superoperator `S = Σ_k E_k ⊗ conj(E_k)` acting on row-major vectorized
    /// `d×d` blocks: `vec(E ρ E†)[(i,j)] = Σ S[(i,j),(i',j')] ρ[(i',j')]`.
    pub(crate) fn superoperator(&self) -> Vec<C64> {
        let d = self.dim();
        let dd = d * d;
        let mut s = vec![C64::new(0.0, 0.0); dd * dd];
        for e in &self.kraus {
            let m = e.data();
            for i in 0..d {
                for j in 0..d {
                    for ip in 0..d {
                        for jp in 0..d {
                            s[(i * d + j) * dd + ip * d + jp] += m[i * d + ip] * m[j * d + jp].conj();
                        }
                    }
                }
            }
        }
        s
    }
}

fn check_rate(model: &'static str, rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidRate { model, rate })
    }
}

fn scaled(m: &gates::Mat2, f: f64) -> gates::Mat2 {
    [[m[0][0] * f, m[0][1] * f], [m[1][0] * f, m[1][1] * f]]
}

/// `ρ → (1−ε)ρ + ε ZρZ`.
pub fn dephasing(rate: f64) -> Result<KrausChannel> {
    check_rate("dephasing", rate)?;
    let mut ops = vec![scaled(&gates::IDENTITY, (1.0 - rate).sqrt())];
    if rate > 0.0 {
        ops.push(scaled(&gates::PAULI_Z, rate.sqrt()));
    }
    Ok(KrausChannel::from_mats2(ops, "dephasing", rate))
}

/// `ρ → (1−ε)ρ + ε tr(ρ) I/2`, written with the four Pauli Kraus operators.
pub fn depolarizing(rate: f64) -> Result<KrausChannel> {
    check_rate("depolarizing", rate)?;
    let mut ops = vec![scaled(&gates::IDENTITY, (1.0 - 0.75 * rate).sqrt())];
    if rate > 0.0 {
        let p = (rate / 4.0).sqrt();
        ops.push(scaled(&gates::PAULI_X, p));
        ops.push(scaled(&gates::PAULI_Y, p));
        ops.push(scaled(&gates::PAULI_Z, p));
    }
    Ok(KrausChannel::from_mats2(ops, "depolarizing", rate))
}

pub fn amplitude_damping(rate: f64) -> Result<KrausChannel> {
    check_rate("amplitude-damping", rate)?;
    let o = C64::new(0.0, 0.0);
    let a0 = [[C64::new(1.0, 0.0), o], [o, C64::new((1.0 - rate).sqrt(), 0.0)]];
    let mut ops = vec![a0];
    if rate > 0.0 {
        ops.push([[o, C64::new(rate.sqrt(), 0.0)], [o, o]]);
    }
    Ok(KrausChannel::from_mats2(ops, "amplitude-damping", rate))
}

/// Two-qubit `ρ → (1−ε)ρ + ε Z_c ρ Z_c` with `Z_c = diag(1, −1, −1, 1)`.
pub fn collective_dephasing(rate: f64) -> Result<KrausChannel> {
    check_rate("collective-dephasing", rate)?;
    let zc = gates::kron(&gates::PAULI_Z, &gates::PAULI_Z);
    let mut kraus = vec![{
        let mut t = ComplexTensor::identity(4);
        t.scale(C64::new((1.0 - rate).sqrt(), 0.0));
        t
    }];
    if rate > 0.0 {
        let mut t = ComplexTensor::from_raw(vec![4, 4], gates::flatten4(&zc));
        t.scale(C64::new(rate.sqrt(), 0.0));
        kraus.push(t);
    }
    Ok(KrausChannel {
        arity: 2,
        kraus,
        label: "collective-dephasing".into(),
        rate,
    })
}

/// Applies `channel` to the given sites of `rho`.
pub fn apply_to_density(channel: &KrausChannel, rho: &DensityMatrix, sites: &[usize]) -> Result<DensityMatrix> {
    let mut out = rho.clone();
    out.apply_channel(channel, sites)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseModel {
    None,
    Dephasing,
    Depolarizing,
    AmplitudeDamping,
    CollectiveDephasing,
}

impl NoiseModel {
    pub const ALL: [NoiseModel; 4] = [
        NoiseModel::Dephasing,
        NoiseModel::Depolarizing,
        NoiseModel::AmplitudeDamping,
        NoiseModel::CollectiveDephasing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::Dephasing => "dephasing",
            NoiseModel::Depolarizing => "depolarizing",
            NoiseModel::AmplitudeDamping => "amplitude-damping",
            NoiseModel::CollectiveDephasing => "collective-dephasing",
        }
    }

    pub fn channel(self, rate: f64) -> Result<Option<KrausChannel>> {
        Ok(match self {
            NoiseModel::None => None,
            NoiseModel::Dephasing => Some(dephasing(rate)?),
            NoiseModel::Depolarizing => Some(depolarizing(rate)?),
            NoiseModel::AmplitudeDamping => Some(amplitude_damping(rate)?),
            NoiseModel::CollectiveDephasing => Some(collective_dephasing(rate)?),
        })
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseModel::None),
            "dephasing" => Ok(NoiseModel::Dephasing),
            "depolarizing" => Ok(NoiseModel::Depolarizing),
            "amplitude-damping" => Ok(NoiseModel::AmplitudeDamping),
            "collective-dephasing" => Ok(NoiseModel::CollectiveDephasing),
            other => Err(Error::Parse(format!("unknown noise model '{other}'"))),
        }
    }
}

/// Gate-noise specification, written `<model>:<rate>` (or just `none`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub rate: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        model: NoiseModel::None,
        rate: 0.0,
    };

    pub fn new(model: NoiseModel, rate: f64) -> Result<Self> {
        model.channel(rate)?;
        Ok(Self { model, rate })
    }

    pub fn is_noiseless(&self) -> bool {
        self.model == NoiseModel::None
    }

    pub fn channel(&self) -> Result<Option<KrausChannel>> {
        self.model.channel(self.rate)
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_noiseless() {
            f.write_str("none")
        } else {
            write!(f, "{}:{}", self.model, self.rate)
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (model, rate) = match s.split_once(':') {
            Some((m, r)) => {
                let rate: f64 = r
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad noise rate '{r}'")))?;
                (m.trim().parse::<NoiseModel>()?, rate)
            }
            None => (s.trim().parse::<NoiseModel>()?, 0.0),
        };
        if model != NoiseModel::None && !s.contains(':') {
            return Err(Error::Parse(format!("noise spec '{s}' needs a rate, e.g. {model}:0.01")));
        }
        NoiseSpec::new(model, rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::DensityMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn plus_state() -> DensityMatrix {
        DensityMatrix::from_entries(1, vec![c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]).unwrap()
    }

    fn random_density(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        let d = 1 << n;
        let a: Vec<C64> = (0..d * d).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let mut rho = vec![c(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                rho[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k].conj()).sum();
            }
        }
        let tr: f64 = (0..d).map(|i| rho[i * d + i].re).sum();
        for z in &mut rho {
            *z /= tr;
        }
        DensityMatrix::from_entries(n, rho).unwrap()
    }

    fn all_channels(rate: f64) -> Vec<KrausChannel> {
        vec![
            dephasing(rate).unwrap(),
            depolarizing(rate).unwrap(),
            amplitude_damping(rate).unwrap(),
            collective_dephasing(rate).unwrap(),
        ]
    }

    #[test]
    fn completeness_on_rate_grid() {
        for k in 0..=10 {
            for ch in all_channels(k as f64 / 10.0) {
                assert!(ch.completeness_deviation() < 1e-12, "{} at {}", ch.label(), ch.rate());
            }
        }
    }

    #[test]
    fn rates_outside_unit_interval_rejected() {
        for r in [-0.1, 1.1, f64::NAN] {
            assert!(dephasing(r).is_err());
            assert!(depolarizing(r).is_err());
            assert!(amplitude_damping(r).is_err());
            assert!(collective_dephasing(r).is_err());
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        for ch in all_channels(0.0) {
            assert_eq!(ch.kraus().len(), 1);
            assert_eq!(ch.kraus()[0], ComplexTensor::identity(ch.dim()));
        }
    }

    #[test]
    fn dephasing_scales_coherences() {
        let eps = 0.0231;
        let out = apply_to_density(&dephasing(eps).unwrap(), &plus_state(), &[0]).unwrap();
        assert!((out.get(0, 1) - c(0.5 * (1.0 - 2.0 * eps), 0.0)).norm() < 1e-15);
        assert!((out.get(0, 0) - c(0.5, 0.0)).norm() < 1e-15);
        let full = apply_to_density(&dephasing(0.5).unwrap(), &plus_state(), &[0]).unwrap();
        assert!(full.get(0, 1).norm() < 1e-15);
        assert!((full.get(1, 1).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn depolarizing_on_ground_state() {
        let eps = 0.0302;
        let out = apply_to_density(&depolarizing(eps).unwrap(), &DensityMatrix::basis(1, 0), &[0]).unwrap();
        assert!((out.get(0, 0).re - (1.0 - eps / 2.0)).abs() < 1e-15);
        assert!((out.get(1, 1).re - eps / 2.0).abs() < 1e-15);
        let full = apply_to_density(&depolarizing(1.0).unwrap(), &plus_state(), &[0]).unwrap();
        assert!((full.get(0, 0).re - 0.5).abs() < 1e-15 && full.get(0, 1).norm() < 1e-15);
    }

    #[test]
    fn amplitude_damping_decay() {
        let eps = 0.0454;
        let out = apply_to_density(&amplitude_damping(eps).unwrap(), &DensityMatrix::basis(1, 1), &[0]).unwrap();
        assert!((out.get(0, 0).re - eps).abs() < 1e-15);
        assert!((out.get(1, 1).re - (1.0 - eps)).abs() < 1e-15);
        let full = apply_to_density(&amplitude_damping(1.0).unwrap(), &DensityMatrix::basis(1, 1), &[0]).unwrap();
        assert!((full.get(0, 0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn collective_dephasing_element() {
        // |00⟩⟨11| picks up Z_c[0]·Z_c[3] = +1 from the ε term, so it is left alone;
        // |00⟩⟨01| picks up Z_c[0]·Z_c[1] = −1 and scales by (1−2ε).
        let eps = 0.3;
        let mut m = vec![c(0.0, 0.0); 16];
        m[0 * 4 + 3] = c(1.0, 0.0);
        m[0 * 4 + 1] = c(1.0, 0.0);
        let zc = [1.0, -1.0, -1.0, 1.0];
        let ch = collective_dephasing(eps).unwrap();
        let rho = DensityMatrix::from_entries_unchecked(2, m.clone());
        let out = apply_to_density(&ch, &rho, &[0, 1]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = m[i * 4 + j] * ((1.0 - eps) + eps * zc[i] * zc[j]);
                assert!((out.get(i, j) - expect).norm() < 1e-15);
            }
        }
        assert!((out.get(0, 3).re - 1.0).abs() < 1e-15);
        assert!((out.get(0, 1).re - (1.0 - 2.0 * eps)).abs() < 1e-15);
    }

    #[test]
    fn full_dephasing_twice_equals_once() {
        // ε=1 is conjugation by Z, an involution: applying it twice gives back ρ,
        // not the same as applying it once.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_density(2, &mut rng);
        let ch = dephasing(1.0).unwrap();
        let once = apply_to_density(&ch, &rho, &[1]).unwrap();
        let twice = apply_to_density(&ch, &once, &[1]).unwrap();
        // direct oracle: Z on qubit 1 flips the sign of entries whose qubit-1 bits differ
        for i in 0..4 {
            for j in 0..4 {
                let sign = if (i & 1) != (j & 1) { -1.0 } else { 1.0 };
                assert!((once.get(i, j) - rho.get(i, j) * sign).norm() < 1e-15);
                assert!((twice.get(i, j) - rho.get(i, j)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn channels_preserve_trace_and_hermiticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..1000 {
            let rho = random_density(2, &mut rng);
            let rate: f64 = rng.random();
            for ch in all_channels(rate) {
                let sites: &[usize] = if ch.arity() == 2 { &[0, 1] } else { &[trial % 2] };
                let out = apply_to_density(&ch, &rho, sites).unwrap();
                assert!((out.trace().re - 1.0).abs() < 1e-12);
                assert!(out.hermiticity_error() < 1e-12);
            }
        }
    }

    #[test]
    fn depolarizing_matches_two_term_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let rho = random_density(1, &mut rng);
            let eps: f64 = rng.random();
            let out = apply_to_density(&depolarizing(eps).unwrap(), &rho, &[0]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let mixed = if i == j { 0.5 } else { 0.0 };
                    let expect = rho.get(i, j) * (1.0 - eps) + c(eps * mixed, 0.0);
                    assert!((out.get(i, j) - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn site_out_of_range() {
        let rho = DensityMatrix::basis(2, 0);
        assert!(matches!(
            apply_to_density(&dephasing(0.1).unwrap(), &rho, &[2]),
            Err(Error::SiteOutOfRange { .. })
        ));
        assert!(apply_to_density(&collective_dephasing(0.1).unwrap(), &rho, &[0]).is_err());
    }

    #[test]
    fn noise_spec_parsing() {
        let s: NoiseSpec = "depolarizing:0.02".parse().unwrap();
        assert_eq!(s.model, NoiseModel::Depolarizing);
        assert_eq!(s.rate, 0.02);
        assert_eq!(s.to_string(), "depolarizing:0.02");
        assert!("none".parse::<NoiseSpec>().unwrap().is_noiseless());
        assert!("dephasing".parse::<NoiseSpec>().is_err());
        assert!("bitflip:0.1".parse::<NoiseSpec>().is_err());
        assert!(matches!("dephasing:1.5".parse::<NoiseSpec>(), Err(Error::InvalidRate { .. })));
        assert_eq!(
            "collective-dephasing:0.3".parse::<NoiseSpec>().unwrap().model,
            NoiseModel::CollectiveDephasing
        );
    }
}
