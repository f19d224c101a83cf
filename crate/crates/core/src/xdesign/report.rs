//! ECDFs and per-point ratios over result rows.

use std::collections::BTreeMap;
use std::io::Write;

use super::campaign::{ResultRow, RowStatus};
use super::XdesignError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    FractionReceived,
    RebufferMs,
}

impl Metric {
    pub fn parse(s: &str) -> Result<Self, XdesignError> {
        match s {
            "fraction_received" => Ok(Metric::FractionReceived),
            "rebuffer_ms" => Ok(Metric::RebufferMs),
            other => Err(XdesignError::Usage(format!(
                "unknown metric {other:?} (fraction_received or rebuffer_ms)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::FractionReceived => "fraction_received",
            Metric::RebufferMs => "rebuffer_ms",
        }
    }

    pub fn of(self, row: &ResultRow) -> f64 {
        match self {
            Metric::FractionReceived => row.fraction_received,
            Metric::RebufferMs => row.rebuffer_ms,
        }
    }
}

/// Distinct values with the fraction of samples at or below each.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>, XdesignError> {
    if values.is_empty() {
        return Err(XdesignError::Usage("ECDF of no values".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(XdesignError::Usage("ECDF input contains NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => out.push((*x, f)),
        }
    }
    Ok(out)
}

/// Per-contender ECDFs of `metric`, skipping failed rows. Contenders keep
/// their first-appearance order.
pub fn ecdf_by_contender(
    rows: &[ResultRow],
    metric: Metric,
) -> Result<Vec<(String, Vec<(f64, f64)>)>, XdesignError> {
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status != RowStatus::Failed) {
        if !values.contains_key(&r.contender) {
            order.push(r.contender.clone());
        }
        values
            .entry(r.contender.clone())
            .or_default()
            .push(metric.of(r));
    }
    order
        .into_iter()
        .map(|c| {
            let e = ecdf(&values[&c])?;
            Ok((c, e))
        })
        .collect()
}

pub fn write_ecdf<W: Write>(
    out: W,
    metric: Metric,
    curves: &[(String, Vec<(f64, f64)>)],
) -> Result<(), XdesignError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["contender", metric.name(), "ecdf"])?;
    for (c, curve) in curves {
        for (x, f) in curve {
            w.write_record([c.clone(), x.to_string(), f.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// a / b with the conventions 0/0 = 1 and x/0 = +inf.
pub fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

/// Per-point `metric(a) / metric(b)`, ordered by point id.
pub fn ratio_table(
    rows: &[ResultRow],
    a: &str,
    b: &str,
    metric: Metric,
) -> Result<Vec<(usize, f64)>, XdesignError> {
    let pick = |name: &str| -> BTreeMap<usize, f64> {
        rows.iter()
            .filter(|r| r.contender == name)
            .map(|r| (r.point_id, metric.of(r)))
            .collect()
    };
    let (ma, mb) = (pick(a), pick(b));
    if ma.is_empty() || mb.is_empty() {
        return Err(XdesignError::Usage(format!("no rows for {a:?} or {b:?}")));
    }
    if ma.keys().ne(mb.keys()) {
        return Err(XdesignError::Usage(format!(
            "{a:?} and {b:?} are not paired"
        )));
    }
    Ok(ma.iter().map(|(&p, &x)| (p, ratio(x, mb[&p]))).collect())
}

pub fn write_ratios<W: Write>(out: W, ratios: &[(usize, f64)]) -> Result<(), XdesignError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["point_id", "ratio"])?;
    for (p, r) in ratios {
        w.write_record([p.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
