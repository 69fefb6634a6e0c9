use std::fmt;
use std::str::FromStr;

use crate::config::is_float_key;
use crate::error::CliError;

/// `param:start:stop:step`, inclusive of `stop` when it falls on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanAxis {
    pub param: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl ScanAxis {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for ScanAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::Usage(format!("scan {s:?}: {why}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let [param, start, stop, step] = parts[..] else {
            return Err(bad("expected param:start:stop:step"));
        };
        // flag spellings are accepted too
        let param = if param.contains('.') {
            param.replace('-', "_")
        } else {
            param.replacen('-', ".", 1).replace('-', "_")
        };
        if !is_float_key(&param) {
            return Err(bad(&format!("{param} is not a numeric parameter")));
        }
        let num = |x: &str| x.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        let (Some(start), Some(stop), Some(step)) = (num(start), num(stop), num(step)) else {
            return Err(bad("start, stop and step must be finite numbers"));
        };
        if step <= 0.0 {
            return Err(bad("step must be positive"));
        }
        if stop < start {
            return Err(bad("stop is below start"));
        }
        Ok(ScanAxis {
            param,
            start,
            stop,
            step,
        })
    }
}

impl fmt::Display for ScanAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.param, self.start, self.stop, self.step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inclusive_grid() {
        let a: ScanAxis = "control.delay:24:40:4".parse().unwrap();
        assert_eq!(a.values(), vec![24.0, 28.0, 32.0, 36.0, 40.0]);
        let a: ScanAxis = "control-delay:24:40:4".parse().unwrap();
        assert_eq!(a.param, "control.delay");
        let a: ScanAxis = "probe-critical-r:2:3:0.5".parse().unwrap();
        assert_eq!(a.param, "probe.critical_r");
    }

    #[test]
    fn degenerate_ranges_give_one_point() {
        let a: ScanAxis = "pump.intensity:1e14:1e14:1e13".parse().unwrap();
        assert_eq!(a.values(), vec![1e14]);
        let a: ScanAxis = "control.delay:24:26:10".parse().unwrap();
        assert_eq!(a.values(), vec![24.0]);
    }

    #[test]
    fn rounding_keeps_the_endpoint() {
        let a: ScanAxis = "control.delay:0:0.3:0.1".parse().unwrap();
        assert_eq!(a.values().len(), 4);
    }

    #[test]
    fn rejects_malformed() {
        for s in [
            "control.delay:24:40",
            "control.delay:24:40:0",
            "control.delay:24:40:-1",
            "control.delay:40:24:4",
            "control.delay:a:40:4",
            "ensemble.levels:1:2:1",
            "nothing:1:2:1",
        ] {
            assert!(s.parse::<ScanAxis>().is_err(), "{s}");
        }
    }

    #[test]
    fn display_parses_back() {
        let a: ScanAxis = "pump.intensity:2e13:5e14:9.6e13".parse().unwrap();
        assert_eq!(a.to_string().parse::<ScanAxis>().unwrap(), a);
    }
}
