use crate::error::{Error, Result};

/// A state quantity readable by name. Names use one-based bus and patch
/// numbers: `time`, `mu_tot`, `y_<j>`, `z_<i>_<j>`, `H_<j>`, `c_<j>`, plus
/// `in_<i>_<j>` (bus `i` is in patch `j`) and `phase_<i>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    Time,
    MuTot,
    Y(usize),
    Z(usize, usize),
    H(usize),
    C(usize),
    In(usize, usize),
    Phase(usize),
}

impl Observable {
    /// Resolves `name` for a model with `n` patches and `beta` buses;
    /// indices in the result are zero-based.
    pub fn parse(name: &str, n: usize, beta: usize) -> Result<Self> {
        let unknown = || Error::Eval(format!("unknown state variable `{name}`"));
        let idx = |s: &str, max: usize| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 && v <= max => Ok(v - 1),
                _ => Err(unknown()),
            }
        };
        match name {
            "time" => return Ok(Observable::Time),
            "mu_tot" => return Ok(Observable::MuTot),
            _ => {}
        }
        let parts: Vec<&str> = name.split('_').collect();
        match parts.as_slice() {
            ["y", j] => Ok(Observable::Y(idx(j, n)?)),
            ["H", j] => Ok(Observable::H(idx(j, n)?)),
            ["c", j] => Ok(Observable::C(idx(j, n)?)),
            ["z", i, j] => Ok(Observable::Z(idx(i, beta)?, idx(j, n)?)),
            ["in", i, j] => Ok(Observable::In(idx(i, beta)?, idx(j, n)?)),
            ["phase", i] => Ok(Observable::Phase(idx(i, beta)?)),
            _ => Err(unknown()),
        }
    }

    /// Counters usable as a steady-state clock.
    pub fn is_clock(&self) -> bool {
        matches!(self, Observable::Time | Observable::C(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert_eq!(Observable::parse("time", 3, 2).unwrap(), Observable::Time);
        assert_eq!(Observable::parse("y_3", 3, 2).unwrap(), Observable::Y(2));
        assert_eq!(
            Observable::parse("z_2_1", 3, 2).unwrap(),
            Observable::Z(1, 0)
        );
        assert_eq!(Observable::parse("H_1", 3, 2).unwrap(), Observable::H(0));
        assert!(Observable::parse("y_0", 3, 2).is_err());
        assert!(Observable::parse("y_4", 3, 2).is_err());
        let e = Observable::parse("Q", 3, 2).unwrap_err().to_string();
        assert!(e.contains("`Q`"));
    }
}
