//! Result rows, aggregates and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESULT_HEADER: [&str; 10] = [
    "experiment_id",
    "p_t_dbm",
    "block",
    "beta",
    "trial",
    "trial_seed",
    "nmse_direct",
    "nmse_cascaded",
    "ber",
    "fer",
];

/// One estimation pass of one trial. `nmse_direct` is empty when the direct
/// link is not estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub p_t_dbm: f64,
    pub block: usize,
    pub beta: usize,
    pub trial: usize,
    pub trial_seed: u64,
    pub nmse_direct: Option<f64>,
    pub nmse_cascaded: f64,
    pub ber: f64,
    pub fer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub p_t_dbm: f64,
    pub block: usize,
    pub beta: usize,
    pub trials: usize,
    pub nmse_direct_mean: Option<f64>,
    pub nmse_direct_std: Option<f64>,
    pub nmse_cascaded_mean: f64,
    pub nmse_cascaded_std: f64,
    pub ber_mean: f64,
    pub ber_std: f64,
    pub fer_mean: f64,
    pub fer_std: f64,
}

fn key(r: &ResultRow) -> (&str, f64, usize, usize, usize) {
    (&r.experiment_id, r.p_t_dbm, r.block, r.beta, r.trial)
}

/// Canonical row order: experiment, power, block, pass, trial.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.cmp(&kb.2))
            .then(ka.3.cmp(&kb.3))
            .then(ka.4.cmp(&kb.4))
    });
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for one
/// sample).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v.sqrt())
}

/// Groups sorted rows by `(experiment, power, block, β)`.
pub fn aggregate(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut out = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let r0 = &sorted[start];
        let mut end = start;
        while end < sorted.len() {
            let r = &sorted[end];
            if r.experiment_id != r0.experiment_id
                || r.p_t_dbm.total_cmp(&r0.p_t_dbm).is_ne()
                || r.block != r0.block
                || r.beta != r0.beta
            {
                break;
            }
            end += 1;
        }
        let g = &sorted[start..end];
        let col = |f: &dyn Fn(&ResultRow) -> f64| g.iter().map(f).collect::<Vec<f64>>();
        let direct: Option<Vec<f64>> = g.iter().map(|r| r.nmse_direct).collect();
        let (dm, ds) = match direct {
            Some(d) => {
                let (m, s) = mean_std(&d);
                (Some(m), Some(s))
            }
            None => (None, None),
        };
        let (cm, cs) = mean_std(&col(&|r| r.nmse_cascaded));
        let (bm, bs) = mean_std(&col(&|r| r.ber));
        let (fm, fs) = mean_std(&col(&|r| r.fer));
        out.push(SummaryRow {
            experiment_id: r0.experiment_id.clone(),
            p_t_dbm: r0.p_t_dbm,
            block: r0.block,
            beta: r0.beta,
            trials: g.len(),
            nmse_direct_mean: dm,
            nmse_direct_std: ds,
            nmse_cascaded_mean: cm,
            nmse_cascaded_std: cs,
            ber_mean: bm,
            ber_std: bs,
            fer_mean: fm,
            fer_std: fs,
        });
        start = end;
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(mut rows: Vec<ResultRow>) -> Self {
        sort_rows(&mut rows);
        Self { rows }
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        aggregate(&self.rows)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(w, &self.rows)
    }

    /// Reads a results CSV and checks its header.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().ne(RESULT_HEADER.iter().copied()) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
            });
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            rows.push(rec?);
        }
        Ok(Self { rows })
    }

    /// Writes `results.csv` and `summary.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("results.csv"))?)?;
        write_rows(
            std::fs::File::create(dir.join("summary.csv"))?,
            &self.summary(),
        )
    }
}

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
