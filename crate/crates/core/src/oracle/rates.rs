use std::f64::consts::LN_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::oracle::landscape::csv_err;
use crate::oracle::sig12;

/// Slack when flagging bounds that grow with `beta`.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// One solved point of a `beta` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInput {
    pub beta: f64,
    pub expected_cost: f64,
    /// `I_{m,n}` of the returned policy, nats.
    pub information: f64,
    /// Directed information of the returned policy when it could be computed.
    pub directed: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub beta: f64,
    pub expected_cost: f64,
    pub information_nats: f64,
    /// Lower bound on the rate of any encoder realizing the policy, bits.
    pub bound_bits: f64,
    pub directed_nats: Option<f64>,
    pub directed_bound_bits: Option<f64>,
    /// The bound exceeds the bound at the next smaller `beta`.
    pub nonmonotone: bool,
}

/// Rate lower bounds `I / log 2` per `beta`, ascending in `beta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBoundReport {
    pub rows: Vec<RateRow>,
}

impl RateBoundReport {
    pub const HEADER: [&'static str; 7] =
        ["beta", "J", "I_nats", "bound_bits", "I_directed_nats", "bound_bits_directed", "nonmonotone"];

    pub fn any_nonmonotone(&self) -> bool {
        self.rows.iter().any(|r| r.nonmonotone)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                sig12(r.beta),
                sig12(r.expected_cost),
                sig12(r.information_nats),
                sig12(r.bound_bits),
                r.directed_nats.map(sig12).unwrap_or_default(),
                r.directed_bound_bits.map(sig12).unwrap_or_default(),
                r.nonmonotone.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the trade-off table. Information is clamped at zero.
pub fn rate_bound_report(inputs: &[RateInput]) -> RateBoundReport {
    let mut sorted = inputs.to_vec();
    sorted.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let mut rows: Vec<RateRow> = Vec::with_capacity(sorted.len());
    for input in sorted {
        let information = input.information.max(0.0);
        let bound_bits = information / LN_2;
        let nonmonotone = rows.last().is_some_and(|prev| bound_bits > prev.bound_bits + MONOTONE_SLACK);
        let directed = input.directed.map(|d| d.max(0.0));
        rows.push(RateRow {
            beta: input.beta,
            expected_cost: input.expected_cost,
            information_nats: information,
            bound_bits,
            directed_nats: directed,
            directed_bound_bits: directed.map(|d| d / LN_2),
            nonmonotone,
        });
    }
    RateBoundReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(beta: f64, information: f64) -> RateInput {
        RateInput { beta, expected_cost: 1.0, information, directed: None }
    }

    #[test]
    fn unit_conversion() {
        let r = rate_bound_report(&[input(1.0, 0.0), input(2.0, LN_2)]);
        assert_eq!(r.rows[0].bound_bits, 0.0);
        assert!((r.rows[1].bound_bits - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flags_growth_with_beta() {
        let r = rate_bound_report(&[input(10.0, 0.5), input(1.0, 0.4), input(0.1, 2.0)]);
        let flags: Vec<bool> = r.rows.iter().map(|r| r.nonmonotone).collect();
        assert_eq!(flags, [false, false, true]);
        assert!(r.any_nonmonotone());
    }

    #[test]
    fn csv_has_fixed_header() {
        let mut buf = Vec::new();
        rate_bound_report(&[input(1.0, LN_2)]).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("beta,J,I_nats,bound_bits,I_directed_nats,bound_bits_directed,nonmonotone\n"));
        assert!(text.contains("1.00000000000e0"));
    }
}
