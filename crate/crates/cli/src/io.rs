use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use esp_core::{SlotInput, Trace};

use crate::error::CliError;

pub const CSV_HEADER: [&str; 4] = ["slot", "demand_mwh", "price_per_mwh", "renewable_mwh"];

/// Reads a trace from a CSV file.
pub fn ingest_csv(path: &Path) -> Result<Trace, CliError> {
    let file = File::open(path).map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))?;
    parse_csv(file)
}

/// Parses a trace from CSV with header `slot,demand_mwh,price_per_mwh,renewable_mwh`.
/// Slots must run 1..T without gaps or repeats.
pub fn parse_csv<R: Read>(reader: R) -> Result<Trace, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::BadInput(format!("line 1: {e}")))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(CliError::BadInput(format!(
            "line 1: expected header {}, got {}",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut slots = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::BadInput(format!("line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<f64, CliError> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| CliError::BadInput(format!("line {line}: {} is not a number: {raw:?}", CSV_HEADER[i])))
        };
        let slot: usize = record
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| CliError::BadInput(format!("line {line}: slot is not a positive integer")))?;
        let expected = slots.len() + 1;
        if slot < expected {
            return Err(CliError::BadInput(format!("line {line}: duplicate or out-of-order slot {slot}")));
        }
        if slot > expected {
            return Err(CliError::BadInput(format!("line {line}: missing slot {expected}")));
        }
        let input = SlotInput::new(field(1)?, field(2)?, field(3)?);
        if !(input.demand >= 0.0 && input.renewable >= 0.0 && input.price > 0.0)
            || !(input.demand.is_finite() && input.price.is_finite() && input.renewable.is_finite())
        {
            return Err(CliError::BadInput(format!(
                "line {line}: invalid trace: need demand >= 0, price > 0, renewable >= 0"
            )));
        }
        slots.push(input);
    }
    Ok(Trace::new(slots)?)
}

/// Writes a trace as CSV with six decimals.
pub fn write_csv<W: Write>(trace: &Trace, mut out: W) -> Result<(), CliError> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for (i, s) in trace.slots().iter().enumerate() {
        writeln!(out, "{},{:.6},{:.6},{:.6}", i + 1, s.demand, s.price, s.renewable)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_zero_demand_row() {
        let t = parse_csv("slot,demand_mwh,price_per_mwh,renewable_mwh\n1,0,1.0,0\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.total_demand(), 0.0);
    }

    #[test]
    fn gap_is_named() {
        let err = parse_csv("slot,demand_mwh,price_per_mwh,renewable_mwh\n1,0,1,0\n3,0,1,0\n".as_bytes())
            .unwrap_err();
        assert!(err.to_string().contains("missing slot 2"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn zero_price_is_rejected_with_line() {
        let err = parse_csv("slot,demand_mwh,price_per_mwh,renewable_mwh\n1,1,0,0\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("price > 0"), "{msg}");
    }

    #[test]
    fn malformed_number_reports_line() {
        let err = parse_csv("slot,demand_mwh,price_per_mwh,renewable_mwh\n1,1,2,0\n2,x,2,0\n".as_bytes())
            .unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
