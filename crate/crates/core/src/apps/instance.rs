//! Versioned JSON form of benchmark instances. Matrices are stored row-major
//! as nested arrays.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use super::gensdp::GenSdpInstance;
use super::qcqp::QcqpInstance;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceSpec {
    Gensdp { n: usize, s: usize, seed: u64, a: Vec<Rows>, ell: Vec<f64>, b: Vec<f64>, c: Rows, f_star: f64 },
    Qcqp { m: usize, seed: u64, a: Vec<Rows> },
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    version: u32,
    #[serde(flatten)]
    spec: InstanceSpec,
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(r: &Rows, what: &str) -> Result<DMatrix<f64>> {
    let n = r.len();
    let k = r.first().map_or(0, Vec::len);
    if r.iter().any(|row| row.len() != k) {
        return Err(Error::Config(format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| r[i][j]))
}

impl From<&GenSdpInstance> for InstanceSpec {
    fn from(i: &GenSdpInstance) -> Self {
        InstanceSpec::Gensdp {
            n: i.n,
            s: i.s,
            seed: i.seed,
            a: i.a.iter().map(rows).collect(),
            ell: i.ell.iter().copied().collect(),
            b: i.b.iter().copied().collect(),
            c: rows(&i.c),
            f_star: i.f_star,
        }
    }
}

impl From<&QcqpInstance> for InstanceSpec {
    fn from(i: &QcqpInstance) -> Self {
        let dynamic = |m: &Matrix2<f64>| DMatrix::from_fn(2, 2, |r, c| m[(r, c)]);
        InstanceSpec::Qcqp { m: i.m, seed: i.seed, a: i.a.iter().map(|m| rows(&dynamic(m))).collect() }
    }
}

impl InstanceSpec {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Envelope { version: SCHEMA_VERSION, spec: self.clone() })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text)?;
        if env.version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported instance schema version {}", env.version)));
        }
        Ok(env.spec)
    }

    pub fn to_gen_sdp(&self) -> Result<GenSdpInstance> {
        let InstanceSpec::Gensdp { n, s, seed, a, ell, b, c, f_star } = self else {
            return Err(Error::Config("not a gen-SDP instance".into()));
        };
        let a = a.iter().map(|m| matrix(m, "A")).collect::<Result<Vec<_>>>()?;
        let c = matrix(c, "C")?;
        if a.len() != *s || ell.len() != *s || b.len() != *n || c.shape() != (*n, *n) {
            return Err(Error::Config("gen-SDP instance dimensions are inconsistent".into()));
        }
        if a.iter().any(|m| m.shape() != (*n, *n)) {
            return Err(Error::Config("constraint matrix has the wrong shape".into()));
        }
        Ok(GenSdpInstance {
            n: *n,
            s: *s,
            seed: *seed,
            a,
            ell: DVector::from_column_slice(ell),
            b: DVector::from_column_slice(b),
            c,
            f_star: *f_star,
        })
    }

    pub fn to_qcqp(&self) -> Result<QcqpInstance> {
        let InstanceSpec::Qcqp { m, seed, a } = self else {
            return Err(Error::Config("not a QCQP instance".into()));
        };
        let mats = a
            .iter()
            .map(|r| {
                let d = matrix(r, "A")?;
                if d.shape() != (2, 2) {
                    return Err(Error::Config("QCQP matrices must be 2x2".into()));
                }
                Ok(Matrix2::new(d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)]))
            })
            .collect::<Result<Vec<_>>>()?;
        if mats.len() != *m {
            return Err(Error::Config("QCQP constraint count does not match m".into()));
        }
        Ok(QcqpInstance::from_matrices(mats, *seed))
    }
}
