//! Value grammars for command-line flags.

use mapfluct::C64;

/// Parses `re`, `imi`, `re+imi` or `re-imi`; a bare `i` means one.
pub fn complex(s: &str) -> Result<C64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("{s:?} is not a complex literal of the form re+imi");
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i') else {
        return t
            .parse::<f64>()
            .map(|re| C64::new(re, 0.0))
            .map_err(|_| bad());
    };
    // split at the last sign that is not the leading one or an exponent sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |m: &str| -> Result<f64, String> {
        match m {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => m.parse::<f64>().map_err(|_| bad()),
        }
    };
    match split {
        Some(k) => {
            let re = body[..k].parse::<f64>().map_err(|_| bad())?;
            Ok(C64::new(re, imag(&body[k..])?))
        }
        None => Ok(C64::new(0.0, imag(body)?)),
    }
}

/// A comma-separated list of reals, kept as one flag value.
#[derive(Clone, Debug, PartialEq)]
pub struct Reals(pub Vec<f64>);

pub fn reals(s: &str) -> Result<Reals, String> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>()
                .map_err(|_| format!("{p:?} is not a number"))
        })
        .collect::<Result<_, _>>()
        .map(Reals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        assert_eq!(complex("0.5").unwrap(), C64::new(0.5, 0.0));
        assert_eq!(complex("i").unwrap(), C64::new(0.0, 1.0));
        assert_eq!(complex("-i").unwrap(), C64::new(0.0, -1.0));
        assert_eq!(complex("2.5i").unwrap(), C64::new(0.0, 2.5));
        assert_eq!(complex("-0.2+0.5i").unwrap(), C64::new(-0.2, 0.5));
        assert_eq!(complex("1-i").unwrap(), C64::new(1.0, -1.0));
        assert_eq!(complex("1e-3-2E+1i").unwrap(), C64::new(1e-3, -20.0));
        assert_eq!(complex("-1e-3i").unwrap(), C64::new(0.0, -1e-3));
        for bad in ["", "x", "1+2", "1+2j", "1++2i", "i1"] {
            assert!(complex(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn real_lists() {
        assert_eq!(reals("0.3, 0.7").unwrap().0, vec![0.3, 0.7]);
        assert!(reals("0.3,,0.7").is_err());
    }
}
