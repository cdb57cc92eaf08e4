//! Flag values: plain numbers, `b^k` powers, comma lists and `b^k..b^l`
//! exponent ranges.

/// Parses `3.5`, `1e-3`, `2^11` or `2^-7`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('^') {
        Some((base, exp)) => {
            let b: f64 = base
                .trim()
                .parse()
                .map_err(|_| format!("bad base in '{s}'"))?;
            let e: f64 = exp
                .trim()
                .parse()
                .map_err(|_| format!("bad exponent in '{s}'"))?;
            b.powf(e)
        }
        None => s.parse().map_err(|_| format!("'{s}' is not a number"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn power_parts(s: &str) -> Result<(f64, i32), String> {
    let (b, e) = s
        .trim()
        .split_once('^')
        .ok_or_else(|| format!("range end '{s}' must be written as base^exponent"))?;
    let base: f64 = b.trim().parse().map_err(|_| format!("bad base in '{s}'"))?;
    let exp: i32 = e
        .trim()
        .parse()
        .map_err(|_| format!("range exponents must be integers, got '{s}'"))?;
    Ok((base, exp))
}

/// Parses a comma list of numbers, or `b^k..b^l` for `b^k, b^(k+1), …, b^l`.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if let Some((lo, hi)) = s.split_once("..") {
        let (b0, k0) = power_parts(lo)?;
        let (b1, k1) = power_parts(hi)?;
        if b0 != b1 {
            return Err(format!("range '{s}' mixes bases {b0} and {b1}"));
        }
        if k0 > k1 {
            return Err(format!("range '{s}' is empty"));
        }
        return Ok((k0..=k1).map(|k| b0.powi(k)).collect());
    }
    let vals: Vec<f64> = s.split(',').map(parse_number).collect::<Result<_, _>>()?;
    if vals.is_empty() {
        return Err("empty list".into());
    }
    Ok(vals)
}

/// Compact form for logs and CSV cells: `2^-7` when the value is an
/// integral power of two, shortest round-trip otherwise.
pub fn show(v: f64) -> String {
    if v > 0.0 {
        let k = v.log2().round();
        if k != 0.0 && k.abs() < 1024.0 && 2f64.powi(k as i32) == v {
            return format!("2^{}", k as i32);
        }
    }
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_powers() {
        assert_eq!(parse_number("2^11").unwrap(), 2048.0);
        assert_eq!(parse_number("2^-7").unwrap(), 0.0078125);
        assert_eq!(parse_number(" 0.333 ").unwrap(), 0.333);
        assert_eq!(parse_number("1e-3").unwrap(), 1e-3);
        assert!(parse_number("two").is_err());
        assert!(parse_number("2^x").is_err());
        assert!(parse_number("10^400").is_err());
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(
            parse_list("0,20,50,100").unwrap(),
            vec![0.0, 20.0, 50.0, 100.0]
        );
        let g = parse_list("2^5..2^15").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[10]), (32.0, 32768.0));
        let n = parse_list("2^-20..2^-5").unwrap();
        assert_eq!(n.len(), 16);
        assert_eq!(n[15], 2f64.powi(-5));
        assert_eq!(parse_list("2^3,4").unwrap(), vec![8.0, 4.0]);
        assert!(parse_list("2^5..3^6").is_err());
        assert!(parse_list("2^6..2^5").is_err());
        assert!(parse_list("2^0.5..2^2").is_err());
    }

    #[test]
    fn show_prefers_powers_of_two() {
        assert_eq!(show(2048.0), "2^11");
        assert_eq!(show(0.0078125), "2^-7");
        assert_eq!(show(1.0), "1.0");
        assert_eq!(show(20.0), "20.0");
    }
}
