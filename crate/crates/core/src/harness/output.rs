use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::config::OutputFormat;
use super::estimate::McSummary;
use super::HarnessError;

/// One header row then one row per point, columns in [`McSummary`] field order.
pub fn write_csv<W: Write>(writer: W, rows: &[McSummary]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per line. Non-finite numbers become `null`.
pub fn write_jsonl<W: Write>(mut writer: W, rows: &[McSummary]) -> Result<(), HarnessError> {
    for row in rows {
        serde_json::to_writer(&mut writer, row)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_summaries(path: &Path, format: OutputFormat, rows: &[McSummary]) -> Result<(), HarnessError> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        OutputFormat::Csv => write_csv(file, rows),
        OutputFormat::Jsonl => write_jsonl(file, rows),
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<McSummary>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<McSummary>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Dmc;
    use crate::harness::{run_campaign_on, CampaignConfig, RhoFamily};
    use crate::scheme::Mode;

    fn rows() -> Vec<McSummary> {
        let mut c = CampaignConfig::new("bsc.json", vec![40.0, 80.0], RhoFamily::PowerLaw { s: 1.0 / 3.0 }, 500, 9);
        c.messages = Some(8);
        c.mode = Mode::Theory;
        run_campaign_on(&Dmc::bsc(0.1).unwrap(), &c).unwrap().points
    }

    #[test]
    fn csv_round_trip() {
        let rows = rows();
        let dir = std::env::temp_dir().join(format!("vlf-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.csv");
        write_summaries(&path, OutputFormat::Csv, &rows).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.n, b.n);
            assert_eq!(a.md_ratio, b.md_ratio);
            assert_eq!(a.mean_tau, b.mean_tau);
            assert_eq!(a.config_hash, b.config_hash);
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("n,rho,messages,rate,rho_eff,regime,mode,log_eps,p0,trials"));
        assert!(!header.contains("wall"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn jsonl_has_one_line_per_point() {
        let rows = rows();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), rows.len());
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("md_ratio_cond").is_some());
        }
    }
}
