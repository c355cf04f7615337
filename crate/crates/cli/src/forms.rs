//! Text forms of scale functions and schedules.
//!
//! Scale functions: `const:C`, `sqrt`, `power:G` (`n^G`), `power:G:C`
//! (`C n^G`), `exp-power:A` (`exp(n^A)`). A bare number is `const`.

use std::collections::BTreeMap;

use treefire::analytics::{LambdaSchedule, ScaleFn};

pub fn parse_scale(text: &str) -> Result<ScaleFn, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number in scale `{text}`"));
    let parts: Vec<&str> = text.trim().split(':').collect();
    let scale = match parts.as_slice() {
        ["sqrt"] => ScaleFn::sqrt(),
        ["one"] => ScaleFn::ONE,
        ["const", c] => ScaleFn::Constant { value: num(c)? },
        ["power", g] => ScaleFn::power(num(g)?),
        ["power", g, c] => ScaleFn::Power { coefficient: num(c)?, exponent: num(g)? },
        ["exp-power", a] => ScaleFn::ExpPower { alpha: num(a)? },
        [c] => ScaleFn::Constant { value: num(c)? },
        _ => return Err(format!("unrecognized scale `{text}` (const:C, sqrt, power:G[:C], exp-power:A)")),
    };
    scale.validate().map_err(|e| e.to_string())?;
    Ok(scale)
}

/// `n=value` pairs separated by commas.
pub fn parse_table(text: &str) -> Result<BTreeMap<u32, f64>, String> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (n, v) = pair.split_once('=').ok_or_else(|| format!("table entry `{pair}` is not n=value"))?;
            let n = n.trim().parse::<u32>().map_err(|_| format!("bad depth `{n}`"))?;
            let v = v.trim().parse::<f64>().map_err(|_| format!("bad rate `{v}`"))?;
            Ok((n, v))
        })
        .collect()
}

/// Builds a schedule from its form name and parameters.
pub fn build_schedule(
    r: u32,
    form: &str,
    lambda: Option<f64>,
    tau: Option<f64>,
    g: Option<&str>,
    table: Option<&str>,
) -> Result<LambdaSchedule, String> {
    let schedule = match form {
        "constant" => {
            let lambda = lambda.ok_or("form `constant` needs --lambda")?;
            LambdaSchedule::constant(r, lambda)
        }
        "g-over-m" => {
            let tau = tau.ok_or("form `g-over-m` needs --tau")?;
            LambdaSchedule::g_over_m(r, tau, parse_scale(g.unwrap_or("const:1"))?)
        }
        "table" => LambdaSchedule::table(r, parse_table(table.ok_or("form `table` needs --table")?)?),
        other => return Err(format!("unknown schedule form `{other}` (constant, g-over-m, table)")),
    };
    schedule.map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales() {
        assert_eq!(parse_scale("sqrt").unwrap(), ScaleFn::sqrt());
        assert_eq!(parse_scale("2.5").unwrap(), ScaleFn::Constant { value: 2.5 });
        assert_eq!(parse_scale("power:0.5:3").unwrap(), ScaleFn::Power { coefficient: 3.0, exponent: 0.5 });
        assert_eq!(parse_scale("exp-power:0.6").unwrap(), ScaleFn::ExpPower { alpha: 0.6 });
        assert!(parse_scale("const:-1").is_err());
        assert!(parse_scale("cube").is_err());
    }

    #[test]
    fn schedules() {
        assert!(build_schedule(2, "constant", Some(0.1), None, None, None).is_ok());
        assert!(build_schedule(2, "constant", None, None, None, None).is_err());
        let t = build_schedule(2, "table", None, None, None, Some("3=0.5, 4=0.25")).unwrap();
        assert_eq!(t.lambda(4).unwrap(), 0.25);
        assert!(build_schedule(2, "g-over-m", None, Some(0.2), None, None).is_err());
    }
}
