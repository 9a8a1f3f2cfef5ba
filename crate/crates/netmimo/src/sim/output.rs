//! CSV and JSON emission for experiment results.
//!
//! Every file keeps its header line even when there are no data rows, so
//! downstream plotting scripts can rely on the schema.

use std::path::Path;

use crate::error::{Error, Result};

use super::run::ExperimentResult;

fn write_text(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "scheme,cluster_size,drops_used,nonconverged_drops,mean_rate_bits,std_rate_bits\n",
    );
    for s in &result.summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.scheme.label(),
            result.config.cluster_size,
            s.drops_used,
            s.nonconverged_drops,
            s.mean_rate_bits,
            s.std_rate_bits
        ));
    }
    out
}

/// Sorted values with empirical CDF levels (i + 1) / n.
fn cdf_rows(values: &mut [f64]) -> Vec<(f64, f64)> {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, (i + 1) as f64 / n))
        .collect()
}

fn cdf_sumrate_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("scheme,normalized_rate_bits,cdf\n");
    for (s, summary) in result.summaries.iter().enumerate() {
        let mut values: Vec<f64> = result
            .drops
            .iter()
            .map(|d| &d.schemes[s])
            .filter(|r| r.converged)
            .map(|r| r.normalized_rate_bits)
            .collect();
        for (value, level) in cdf_rows(&mut values) {
            out.push_str(&format!("{},{},{}\n", summary.scheme.label(), value, level));
        }
    }
    out
}

fn cdf_meanrate_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("scheme,user_rate_bits,cdf\n");
    for (s, summary) in result.summaries.iter().enumerate() {
        let mut values: Vec<f64> = result
            .drops
            .iter()
            .map(|d| &d.schemes[s])
            .filter(|r| r.converged)
            .flat_map(|r| r.user_rates_bits.iter().copied())
            .collect();
        for (value, level) in cdf_rows(&mut values) {
            out.push_str(&format!("{},{},{}\n", summary.scheme.label(), value, level));
        }
    }
    out
}

fn convergence_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "scheme,drop,iteration,normalized_dual_bits,normalized_primal_bits,normalized_gap_bits,step,kkt_residual\n",
    );
    let b = result.config.cluster_size as f64;
    for drop in &result.drops {
        for scheme in &drop.schemes {
            for t in &scheme.trace {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    scheme.scheme.label(),
                    drop.drop_index,
                    t.iteration,
                    t.dual_bits / b,
                    t.primal_bits / b,
                    t.gap_bits / b,
                    t.step,
                    t.kkt_residual
                ));
            }
        }
    }
    out
}

/// Writes summary.csv, cdf_sumrate.csv, cdf_meanrate.csv, convergence.csv
/// and config.echo.json into `dir`, creating it if needed.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_text(&dir.join("summary.csv"), summary_csv(result))?;
    write_text(&dir.join("cdf_sumrate.csv"), cdf_sumrate_csv(result))?;
    write_text(&dir.join("cdf_meanrate.csv"), cdf_meanrate_csv(result))?;
    write_text(&dir.join("convergence.csv"), convergence_csv(result))?;
    let mut json = serde_json::to_string_pretty(&result.config)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    json.push('\n');
    write_text(&dir.join("config.echo.json"), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{ConstraintKind, ExperimentConfig, Scheme};
    use crate::sim::run::{run_experiment, SchemeSummary};

    fn small_result() -> ExperimentResult {
        let config = ExperimentConfig {
            cluster_size: 1,
            n_t: 2,
            n_r: 1,
            users_per_cell: 2,
            drops: 3,
            workers: 1,
            trace_drops: 1,
            schemes: vec![Scheme::Conventional, Scheme::OptimalSum],
            constraint: ConstraintKind::Sum,
            master_seed: 5,
            ..ExperimentConfig::default()
        };
        run_experiment(&config).unwrap()
    }

    #[test]
    fn emits_all_files_with_expected_shapes() {
        let result = small_result();
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&result, dir.path()).unwrap();

        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("scheme,cluster_size,"));
        assert!(lines[1].starts_with("conventional,1,"));
        assert!(lines[2].starts_with("optimal-sum,1,"));

        let cdf = std::fs::read_to_string(dir.path().join("cdf_sumrate.csv")).unwrap();
        let rows: Vec<&str> = cdf.lines().skip(1).collect();
        assert!(!rows.is_empty());
        let last: Vec<&str> = rows.last().unwrap().split(',').collect();
        assert_eq!(last[2].parse::<f64>().unwrap(), 1.0);
        let levels: Vec<f64> = rows
            .iter()
            .filter(|r| r.starts_with("optimal-sum,"))
            .map(|r| r.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert!(levels.windows(2).all(|w| w[0] < w[1]));

        let mean = std::fs::read_to_string(dir.path().join("cdf_meanrate.csv")).unwrap();
        // Two users over three converged drops per scheme at most.
        assert!(mean.lines().count() > 1);

        let conv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
        assert!(conv.starts_with("scheme,drop,iteration,normalized_dual_bits,"));
        let conv_rows: Vec<&str> = conv.lines().skip(1).collect();
        assert!(!conv_rows.is_empty());
        assert!(conv_rows.iter().all(|r| r.starts_with("optimal-sum,0,")));

        let echo = std::fs::read_to_string(dir.path().join("config.echo.json")).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&echo).unwrap();
        assert_eq!(back, result.config);
    }

    #[test]
    fn empty_results_keep_headers() {
        let result = ExperimentResult {
            config: ExperimentConfig::default(),
            drops: Vec::new(),
            summaries: vec![SchemeSummary {
                scheme: Scheme::OptimalPerAntenna,
                drops_used: 0,
                nonconverged_drops: 0,
                mean_rate_bits: 0.0,
                std_rate_bits: 0.0,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&result, dir.path()).unwrap();
        for name in ["cdf_sumrate.csv", "cdf_meanrate.csv", "convergence.csv"] {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert_eq!(text.lines().count(), 1, "{name} should be header-only");
        }
    }
}
