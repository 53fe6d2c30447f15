//! Angles in config files: rational multiples of π (`"3/4pi"`, `"pi/2"`,
//! `"-pi"`) or plain radians.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    /// `num/den · π`, with `den > 0`.
    PiFraction {
        num: i64,
        den: i64,
    },
    Radians(f64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AngleError(pub String);

impl fmt::Display for AngleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cannot parse angle {:?} (expected e.g. \"3/4pi\", \"pi/2\" or radians)",
            self.0
        )
    }
}

fn parse_ratio(s: &str) -> Option<(i64, i64)> {
    let s = s.trim();
    if s.is_empty() {
        return Some((1, 1));
    }
    match s.split_once('/') {
        Some((a, b)) => {
            let num = a.trim().parse::<i64>().ok()?;
            let den = b.trim().parse::<i64>().ok()?;
            (den > 0).then_some((num, den))
        }
        None => s.parse::<i64>().ok().map(|num| (num, 1)),
    }
}

impl Angle {
    pub fn parse(text: &str) -> Result<Angle, AngleError> {
        let err = || AngleError(text.to_string());
        let t = text.trim();
        let (sign, body) = match t.strip_prefix('-') {
            Some(rest) => (-1, rest.trim_start()),
            None => (1, t.strip_prefix('+').unwrap_or(t).trim_start()),
        };
        let pi_at = body
            .find("pi")
            .map(|i| (i, 2))
            .or_else(|| body.find('π').map(|i| (i, 'π'.len_utf8())));
        let Some((at, len)) = pi_at else {
            return body
                .parse::<f64>()
                .map(|v| Angle::Radians(sign as f64 * v))
                .map_err(|_| err());
        };
        let before = body[..at].trim().trim_end_matches('*').trim();
        let after = body[at + len..].trim();
        let (mut num, mut den) = parse_ratio(before).ok_or_else(err)?;
        if !after.is_empty() {
            let d = after
                .strip_prefix('/')
                .and_then(|d| d.trim().parse::<i64>().ok())
                .filter(|d| *d > 0)
                .ok_or_else(err)?;
            den = den.checked_mul(d).ok_or_else(err)?;
        }
        num *= sign;
        Ok(Angle::PiFraction { num, den })
    }

    pub fn radians(self) -> f64 {
        match self {
            Angle::PiFraction { num, den } => num as f64 / den as f64 * std::f64::consts::PI,
            Angle::Radians(v) => v,
        }
    }

    /// Index `j` with `angle = 2πj/q (mod 2π)`, when it exists exactly.
    pub fn lattice_index(self, q: u32) -> Option<u32> {
        let (num, den) = match self {
            Angle::PiFraction { num, den } => (num, den),
            Angle::Radians(0.0) => (0, 1),
            Angle::Radians(_) => return None,
        };
        // num/den · π = 2πj/q  ⇔  j = num·q / (2·den).
        let top = num as i128 * q as i128;
        let bottom = 2 * den as i128;
        (top % bottom == 0).then(|| (top / bottom).rem_euclid(q as i128) as u32)
    }
}
