//! CSV formats. Floats are written with the shortest representation that
//! parses back to the same bits.

use std::io::{Read, Write};

use super::benchmark::BenchmarkSummary;
use super::inject::AnomalyLabel;
use crate::error::{Error, Result};
use crate::model::Conditions;
use crate::series::GraphSeries;

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize, what: &str) -> Result<T> {
    rec.get(i)
        .ok_or_else(|| Error::Format(format!("row {row}: missing {what}")))?
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("row {row}: bad {what} {:?}", rec.get(i).unwrap_or(""))))
}

fn expect_header<R: Read>(r: &mut csv::Reader<R>, want: &[&str]) -> Result<()> {
    let got = r.headers()?;
    if got.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(Error::Format(format!("expected header {}, found {}", want.join(","), got.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(())
}

/// `t,channel,node,value`, one row per entry.
pub fn write_series<W: Write>(series: &GraphSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "channel", "node", "value"])?;
    for t in 0..series.len() {
        for c in 0..series.channels() {
            for n in 0..series.nodes() {
                w.write_record([t.to_string(), c.to_string(), n.to_string(), series.get(t, c, n).to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads [`write_series`] output in any row order; every entry must appear
/// exactly once.
pub fn read_series<R: Read>(input: R, step_minutes: u32) -> Result<GraphSeries> {
    let mut r = csv::Reader::from_reader(input);
    expect_header(&mut r, &["t", "channel", "node", "value"])?;
    let mut rows = Vec::new();
    let (mut tmax, mut cmax, mut nmax) = (0usize, 0usize, 0usize);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let t: usize = parse(&rec, 0, i, "t")?;
        let c: usize = parse(&rec, 1, i, "channel")?;
        let n: usize = parse(&rec, 2, i, "node")?;
        let v: f64 = parse(&rec, 3, i, "value")?;
        tmax = tmax.max(t);
        cmax = cmax.max(c);
        nmax = nmax.max(n);
        rows.push((t, c, n, v));
    }
    if rows.is_empty() {
        return Err(Error::Format("series file has no rows".into()));
    }
    let (len, channels, nodes) = (tmax + 1, cmax + 1, nmax + 1);
    if rows.len() != len * channels * nodes {
        return Err(Error::Format(format!(
            "{} rows do not cover {len} steps × {channels} channels × {nodes} nodes",
            rows.len()
        )));
    }
    let mut values = vec![0.0; rows.len()];
    let mut seen = vec![false; rows.len()];
    for (t, c, n, v) in rows {
        let i = t * channels * nodes + n * channels + c;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Format(format!("duplicate entry t={t} channel={c} node={n}")));
        }
        values[i] = v;
    }
    GraphSeries::new(nodes, channels, step_minutes, values)
}

/// `t,weekday,holiday,weather,temp,wind`.
pub fn write_conditions<W: Write>(conditions: &[Conditions], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "weekday", "holiday", "weather", "temp", "wind"])?;
    for (t, c) in conditions.iter().enumerate() {
        w.write_record([
            t.to_string(),
            c.weekday.to_string(),
            (c.holiday as u8).to_string(),
            c.weather.to_string(),
            c.temperature.to_string(),
            c.windspeed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_conditions<R: Read>(input: R) -> Result<Vec<Conditions>> {
    let mut r = csv::Reader::from_reader(input);
    expect_header(&mut r, &["t", "weekday", "holiday", "weather", "temp", "wind"])?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if parse::<usize>(&rec, 0, i, "t")? != i {
            return Err(Error::Format(format!("row {i}: steps must be consecutive from 0")));
        }
        let holiday = match parse::<u8>(&rec, 2, i, "holiday")? {
            0 => false,
            1 => true,
            v => return Err(Error::Format(format!("row {i}: holiday flag {v}"))),
        };
        out.push(Conditions {
            weekday: parse(&rec, 1, i, "weekday")?,
            holiday,
            weather: parse(&rec, 3, i, "weather")?,
            temperature: parse(&rec, 4, i, "temp")?,
            windspeed: parse(&rec, 5, i, "wind")?,
        });
    }
    Ok(out)
}

const LABEL_HEADER: [&str; 8] = ["type", "k", "p", "q", "halfwidth", "t0", "t1", "magnitude"];

/// `type,k,p,q,halfwidth,t0,t1,magnitude`; `t1` is exclusive.
pub fn write_labels<W: Write>(labels: &[AnomalyLabel], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LABEL_HEADER)?;
    for l in labels {
        w.write_record([
            l.kind.to_string(),
            l.channel.to_string(),
            l.p.to_string(),
            l.q.to_string(),
            l.half_width.to_string(),
            l.t0.to_string(),
            l.t1.to_string(),
            l.magnitude.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(input: R) -> Result<Vec<AnomalyLabel>> {
    let mut r = csv::Reader::from_reader(input);
    expect_header(&mut r, &LABEL_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        out.push(AnomalyLabel {
            kind: rec
                .get(0)
                .ok_or_else(|| Error::Format(format!("row {i}: missing type")))?
                .parse()?,
            channel: parse(&rec, 1, i, "k")?,
            p: parse(&rec, 2, i, "p")?,
            q: parse(&rec, 3, i, "q")?,
            half_width: parse(&rec, 4, i, "halfwidth")?,
            t0: parse(&rec, 5, i, "t0")?,
            t1: parse(&rec, 6, i, "t1")?,
            magnitude: parse(&rec, 7, i, "magnitude")?,
        });
    }
    Ok(out)
}

/// `type,trials,mean_ap,sd_ap,mean_auc,sd_auc`.
pub fn write_metrics<W: Write>(summaries: &[BenchmarkSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["type", "trials", "mean_ap", "sd_ap", "mean_auc", "sd_auc"])?;
    for s in summaries {
        w.write_record([
            s.kind.to_string(),
            s.trials.len().to_string(),
            s.mean_ap.to_string(),
            s.sd_ap.to_string(),
            s.mean_auc.to_string(),
            s.sd_auc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per trial with its placement, metrics and localization counts.
pub fn write_trials<W: Write>(summaries: &[BenchmarkSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "type", "trial", "seed", "k", "p", "q", "halfwidth", "t0", "t1", "magnitude", "ap", "auc", "flagged",
        "loc_inside", "loc_total",
    ])?;
    for s in summaries {
        for r in &s.trials {
            let l = &r.label;
            w.write_record([
                s.kind.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                l.channel.to_string(),
                l.p.to_string(),
                l.q.to_string(),
                l.half_width.to_string(),
                l.t0.to_string(),
                l.t1.to_string(),
                l.magnitude.to_string(),
                r.ap.to_string(),
                r.auc.to_string(),
                r.flagged.to_string(),
                r.localized_inside.to_string(),
                r.localized_total.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::AnomalyKind;

    #[test]
    fn series_round_trip_is_exact() {
        let values: Vec<f64> = (0..24).map(|i| (i as f64 * 0.1).sin() / 3.0 + 1e-17 * i as f64).collect();
        let s = GraphSeries::new(3, 2, 30, values).unwrap();
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        assert!(buf.starts_with(b"t,channel,node,value\n0,0,0,0\n0,0,1,"));
        let back = read_series(buf.as_slice(), 30).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn incomplete_series_rejected() {
        let text = "t,channel,node,value\n0,0,0,1\n0,0,1,2\n1,0,0,3\n";
        assert!(read_series(text.as_bytes(), 30).is_err());
        let dup = "t,channel,node,value\n0,0,0,1\n0,0,0,2\n";
        assert!(read_series(dup.as_bytes(), 30).is_err());
        assert!(read_series("a,b\n".as_bytes(), 30).is_err());
    }

    #[test]
    fn conditions_and_labels_round_trip() {
        let c = vec![
            Conditions { weekday: 3, holiday: true, weather: 15, temperature: -3.25, windspeed: 0.1 + 0.2 },
            Conditions { weekday: 4, holiday: false, weather: 0, temperature: 1e-9, windspeed: 48.6 },
        ];
        let mut buf = Vec::new();
        write_conditions(&c, &mut buf).unwrap();
        assert_eq!(read_conditions(buf.as_slice()).unwrap(), c);

        let l = vec![AnomalyLabel {
            kind: AnomalyKind::Lms,
            channel: 1,
            p: 3,
            q: 5,
            half_width: 1,
            t0: 7,
            t1: 15,
            magnitude: 0.456_789_012_345_678_9,
        }];
        let mut buf = Vec::new();
        write_labels(&l, &mut buf).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), l);
    }
}
