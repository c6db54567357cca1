use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;

use super::Integrator;
use crate::controllers::Pair;
use crate::error::{Error, Result};

/// One recorded instant of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: Pair<DVector<f64>>,
    pub qdot: Pair<DVector<f64>>,
    pub theta: Option<Pair<DVector<f64>>>,
    pub tau: Pair<DVector<f64>>,
    pub force: Pair<DVector<f64>>,
    /// `‖q_l - q_r‖`
    pub err_norm: f64,
    /// Total energy `H`.
    pub energy: f64,
}

impl Sample {
    pub fn theta_tilde(&self) -> Option<Pair<DVector<f64>>> {
        self.theta
            .as_ref()
            .map(|t| Pair::new(&t.local - &self.q.local, &t.remote - &self.q.remote))
    }

    pub fn forces_zero(&self) -> bool {
        self.force.iter().all(|f| f.iter().all(|x| *x == 0.0))
    }
}

/// Decimated record of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    dof: usize,
    dt: f64,
    integrator: Integrator,
    samples: Vec<Sample>,
}

impl SimTrace {
    pub fn new(dof: usize, dt: f64, integrator: Integrator) -> Self {
        SimTrace { dof, dt, integrator, samples: Vec::new() }
    }

    pub(crate) fn push(&mut self, s: Sample) {
        debug_assert!(self.samples.last().is_none_or(|p| p.t < s.t));
        self.samples.push(s);
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    /// Integration step that produced the trace.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.err_norm).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.energy).collect()
    }

    /// Column names of the CSV export.
    pub fn header(dof: usize) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        for prefix in ["ql", "qr", "dql", "dqr", "thl", "thr", "taul", "taur", "fl", "fr"] {
            cols.extend((1..=dof).map(|k| format!("{prefix}{k}")));
        }
        cols.push("err_norm".into());
        cols.push("H".into());
        cols
    }

    /// CSV text with 17 significant digits per value. Virtual-state columns
    /// hold `NaN` for variants without them.
    pub fn to_csv(&self) -> String {
        let n = self.dof;
        let mut out = Self::header(n).join(",");
        out.push('\n');
        let nan = DVector::from_element(n, f64::NAN);
        for s in &self.samples {
            let (thl, thr) = match &s.theta {
                Some(t) => (&t.local, &t.remote),
                None => (&nan, &nan),
            };
            let _ = write!(out, "{:.16e}", s.t);
            for v in [
                &s.q.local,
                &s.q.remote,
                &s.qdot.local,
                &s.qdot.remote,
                thl,
                thr,
                &s.tau.local,
                &s.tau.remote,
                &s.force.local,
                &s.force.remote,
            ] {
                for x in v.iter() {
                    let _ = write!(out, ",{x:.16e}");
                }
            }
            let _ = writeln!(out, ",{:.16e},{:.16e}", s.err_norm, s.energy);
        }
        out
    }

    /// Writes the CSV through a temporary file and a rename, so readers
    /// never see a partial trace.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    /// Parses a trace written by [`SimTrace::to_csv`]. `dt` and the
    /// integrator are not part of the CSV and are taken as given.
    pub fn from_csv(text: &str, dt: f64, integrator: Integrator) -> Result<Self> {
        let path = Path::new("<csv>");
        let parse_err = |line: usize, message: String| Error::Parse { path: path.into(), line, column: 1, message };
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or(Error::EmptyTrace)?.split(',').collect();
        if header.len() < 3 || !(header.len() - 3).is_multiple_of(10) {
            return Err(parse_err(1, format!("unexpected column count {}", header.len())));
        }
        let n = (header.len() - 3) / 10;
        if header != Self::header(n).iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(parse_err(1, "header does not match the trace layout".into()));
        }
        let mut trace = SimTrace::new(n, dt, integrator);
        for (idx, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(idx + 2, e.to_string()))?;
            if vals.len() != header.len() {
                return Err(parse_err(idx + 2, format!("expected {} values, found {}", header.len(), vals.len())));
            }
            let block = |b: usize| DVector::from_row_slice(&vals[1 + b * n..1 + (b + 1) * n]);
            let theta = Pair::new(block(4), block(5));
            let theta = (!theta.local.iter().all(|x| x.is_nan())).then_some(theta);
            trace.samples.push(Sample {
                t: vals[0],
                q: Pair::new(block(0), block(1)),
                qdot: Pair::new(block(2), block(3)),
                theta,
                tau: Pair::new(block(6), block(7)),
                force: Pair::new(block(8), block(9)),
                err_norm: vals[1 + 10 * n],
                energy: vals[2 + 10 * n],
            });
        }
        Ok(trace)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::Io { path: tmp.clone(), source: e })?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, theta: bool) -> Sample {
        let v = |a: f64| DVector::from_row_slice(&[a, -a / 3.0]);
        Sample {
            t,
            q: Pair::new(v(1.0), v(0.1)),
            qdot: Pair::new(v(0.2), v(-0.7)),
            theta: theta.then(|| Pair::new(v(0.9), v(std::f64::consts::PI))),
            tau: Pair::new(v(1e-300), v(12.5)),
            force: Pair::new(v(0.0), v(0.0)),
            err_norm: 0.123_456_789_012_345_68,
            energy: 2.0 / 3.0,
        }
    }

    #[test]
    fn header_layout() {
        let h = SimTrace::header(2).join(",");
        assert_eq!(
            h,
            "t,ql1,ql2,qr1,qr2,dql1,dql2,dqr1,dqr2,thl1,thl2,thr1,thr2,taul1,taul2,taur1,taur2,fl1,fl2,fr1,fr2,err_norm,H"
        );
    }

    #[test]
    fn csv_reload_is_bit_exact() {
        for theta in [false, true] {
            let mut tr = SimTrace::new(2, 1e-4, Integrator::Euler);
            tr.push(sample(0.0, theta));
            tr.push(sample(1e-3, theta));
            let back = SimTrace::from_csv(&tr.to_csv(), 1e-4, Integrator::Euler).unwrap();
            assert_eq!(back, tr);
        }
    }

    #[test]
    fn bad_csv_reports_line() {
        let mut text = SimTrace::header(1).join(",");
        text.push_str("\n0,1,2\n");
        match SimTrace::from_csv(&text, 1e-4, Integrator::Euler) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
