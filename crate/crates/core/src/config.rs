//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! alpha = 0.025
//! alpha1 = 0.005
//! m = 3
//!
//! [window]
//! in_sample_n = 1000
//!
//! [universe]
//! models = ["GJR-GARCH-t", "CAViaR-AS"]
//!
//! [optimizer]
//! seed = 7
//! ```
//!
//! Every section and key is optional; missing values take their defaults.

use std::path::Path;

use crate::error::{FcwqError, Result};
use crate::pipeline::PipelineConfig;

pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = toml::from_str(text).map_err(|e| FcwqError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn to_toml(cfg: &PipelineConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| FcwqError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;
    use crate::pipeline::Variant;

    #[test]
    fn parses_documented_keys() {
        let cfg = parse_config(
            r#"
            [optimizer]
            tol = 1e-9
            max_iter = 300
            n_starts = 5
            seed = 11

            [universe]
            models = ["GJR-GARCH-t", "CAViaR-AS"]

            [pot]
            threshold_frac = 0.12

            [care]
            grid_size = 50

            [caviar]
            starts = 2000

            [grid]
            m = 5

            [window]
            in_sample_n = 500
            out_sample_h = 100

            [pipeline]
            variants = ["FC-WQ"]
            reestimate_every = 5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.optimizer.seed, 11);
        assert_eq!(cfg.optimizer.max_iter, 300);
        assert_eq!(cfg.universe.models, vec![ModelKind::GjrGarchT, ModelKind::CaviarAs]);
        assert_eq!(cfg.pot.threshold_frac, 0.12);
        assert_eq!(cfg.care.grid_size, 50);
        assert_eq!(cfg.caviar.starts, 2000);
        assert_eq!(cfg.caviar.refine, 10);
        assert_eq!(cfg.quantile_grid().unwrap().m(), 5);
        assert_eq!(cfg.window.out_sample_h, Some(100));
        assert_eq!(cfg.pipeline.variants, vec![Variant::FcWq]);
        assert_eq!(cfg.pipeline.reestimate_every, 5);
    }

    #[test]
    fn round_trip_and_errors() {
        let cfg = PipelineConfig::default();
        assert_eq!(parse_config(&to_toml(&cfg).unwrap()).unwrap(), cfg);
        assert!(parse_config("[grid]\nalpha1 = 0.5").is_err());
        assert!(parse_config("[universe]\nmodels = [\"RiskMetrics\"]").is_err());
        assert!(parse_config("[nonsense]\nx = 1").is_err());
    }
}
