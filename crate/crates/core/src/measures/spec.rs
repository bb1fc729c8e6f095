use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const DENSITY_MASS_TOL: f64 = 1e-9;
const MAX_NESTING: usize = 4;

/// Spectral density `h` on `[0, 1]`, piecewise constant on a uniform grid.
///
/// `values[j]` is the density on the cell `(j/M, (j+1)/M]` with `M` cells, so
/// the grid has `M + 1` points. The density must be non-negative,
/// non-increasing and integrate to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpectralDensity {
    values: Vec<f64>,
    // cumulative mass at each grid point, length M + 1
    cumulative: Vec<f64>,
}

impl SpectralDensity {
    pub const DEFAULT_CELLS: usize = 1000;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input(
                "spectral density grid needs at least 2 points",
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input("spectral density values must be finite and >= 0"));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::input("spectral density must be non-increasing"));
        }
        let cells = values.len() as f64;
        let mut cumulative = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for v in &values {
            acc += v / cells;
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > DENSITY_MASS_TOL {
            return Err(Error::input(format!(
                "spectral density integrates to {acc}, expected 1"
            )));
        }
        Ok(Self { values, cumulative })
    }

    /// Samples `h` at cell midpoints and renormalizes the result.
    pub fn from_fn(cells: usize, h: impl Fn(f64) -> f64) -> Result<Self> {
        if cells == 0 {
            return Err(Error::input("spectral density grid needs at least 2 points"));
        }
        let m = cells as f64;
        let mut values: Vec<f64> = (0..cells).map(|j| h((j as f64 + 0.5) / m)).collect();
        let mass: f64 = values.iter().sum::<f64>() / m;
        if !(mass > 0.0) {
            return Err(Error::input("spectral density has no mass"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(values)
    }

    /// The density `(1/α)·1_{u ≤ α}` of expected shortfall.
    ///
    /// Exact when `α·cells` is an integer; otherwise the cell straddling `α`
    /// carries its average.
    pub fn expected_shortfall(alpha: f64, cells: usize) -> Result<Self> {
        check_level(alpha)?;
        if cells == 0 {
            return Err(Error::input("spectral density grid needs at least 2 points"));
        }
        let m = cells as f64;
        let values = (0..cells)
            .map(|j| (alpha * m - j as f64).clamp(0.0, 1.0) / alpha)
            .collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    /// `∫₀ᵘ h`, exact for the piecewise-constant representation.
    pub fn mass_below(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return self.cumulative[self.values.len()];
        }
        let m = self.values.len() as f64;
        let j = ((u * m).floor() as usize).min(self.values.len() - 1);
        self.cumulative[j] + self.values[j] * (u - j as f64 / m)
    }

    /// `‖h‖_q` for `q ∈ [1, ∞]`.
    pub fn norm(&self, q: f64) -> f64 {
        let m = self.values.len() as f64;
        if q.is_infinite() {
            return self.values[0];
        }
        (self.values.iter().map(|v| v.powf(q)).sum::<f64>() / m).powf(1.0 / q)
    }
}

impl TryFrom<Vec<f64>> for SpectralDensity {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<SpectralDensity> for Vec<f64> {
    fn from(d: SpectralDensity) -> Self {
        d.values
    }
}

/// A law-invariant convex risk measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskMeasureSpec {
    /// `β·log E[exp(−X/β)]`.
    Entropic { beta: f64 },
    /// Average of VaR over the worst `α`-tail.
    ExpectedShortfall { alpha: f64 },
    /// Mixture `Σ wⱼ ES_{αⱼ}` stored as `(weight, alpha)` pairs.
    Distortion { components: Vec<(f64, f64)> },
    Spectral { density: SpectralDensity },
    /// Convex combination `Σ wᵢ ρᵢ` of other measures.
    Combination { terms: Vec<(f64, RiskMeasureSpec)> },
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("level {alpha} must lie in (0,1)")))
    }
}

fn check_weights(weights: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut sum = 0.0;
    let mut count = 0;
    for w in weights {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::input(format!("{what} weight {w} must be positive")));
        }
        sum += w;
        count += 1;
    }
    if count == 0 {
        return Err(Error::input(format!("{what} needs at least one term")));
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::input(format!("{what} weights sum to {sum}, expected 1")));
    }
    Ok(())
}

impl RiskMeasureSpec {
    pub fn entropic(beta: f64) -> Result<Self> {
        let s = RiskMeasureSpec::Entropic { beta };
        s.validate()?;
        Ok(s)
    }

    pub fn es(alpha: f64) -> Result<Self> {
        let s = RiskMeasureSpec::ExpectedShortfall { alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn distortion(components: Vec<(f64, f64)>) -> Result<Self> {
        let s = RiskMeasureSpec::Distortion { components };
        s.validate()?;
        Ok(s)
    }

    pub fn combination(terms: Vec<(f64, RiskMeasureSpec)>) -> Result<Self> {
        let s = RiskMeasureSpec::Combination { terms };
        s.validate()?;
        Ok(s)
    }

    /// `(1−ε)·base + ε·perturbation`; strictly convex whenever the
    /// perturbation is.
    pub fn perturbed(base: RiskMeasureSpec, perturbation: RiskMeasureSpec, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::input(format!("perturbation weight {eps} must lie in (0,1)")));
        }
        Self::combination(vec![(1.0 - eps, base), (eps, perturbation)])
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_at(1)
    }

    fn validate_at(&self, depth: usize) -> Result<()> {
        match self {
            RiskMeasureSpec::Entropic { beta } => {
                if *beta > 0.0 && beta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::input(format!("entropic beta {beta} must be positive")))
                }
            }
            RiskMeasureSpec::ExpectedShortfall { alpha } => check_level(*alpha),
            RiskMeasureSpec::Distortion { components } => {
                check_weights(components.iter().map(|c| c.0), "distortion")?;
                components.iter().try_for_each(|c| check_level(c.1))
            }
            // construction already validated the density
            RiskMeasureSpec::Spectral { .. } => Ok(()),
            RiskMeasureSpec::Combination { terms } => {
                if depth > MAX_NESTING {
                    return Err(Error::input(format!(
                        "combination nesting deeper than {MAX_NESTING}"
                    )));
                }
                check_weights(terms.iter().map(|t| t.0), "combination")?;
                terms.iter().try_for_each(|t| t.1.validate_at(depth + 1))
            }
        }
    }

    /// True for measures of the form `∫ VaR_u h(u) du` with bounded `h`.
    pub fn is_spectral(&self) -> bool {
        match self {
            RiskMeasureSpec::Entropic { .. } => false,
            RiskMeasureSpec::ExpectedShortfall { .. }
            | RiskMeasureSpec::Distortion { .. }
            | RiskMeasureSpec::Spectral { .. } => true,
            RiskMeasureSpec::Combination { terms } => terms.iter().all(|t| t.1.is_spectral()),
        }
    }

    /// Cumulative spectral mass `∫₀ᵘ h`, for spectral measures only.
    pub fn spectral_mass_below(&self, u: f64) -> Option<f64> {
        let u = u.clamp(0.0, 1.0);
        match self {
            RiskMeasureSpec::Entropic { .. } => None,
            RiskMeasureSpec::ExpectedShortfall { alpha } => Some((u / alpha).min(1.0)),
            RiskMeasureSpec::Distortion { components } => Some(
                components
                    .iter()
                    .map(|&(w, a)| w * (u / a).min(1.0))
                    .sum(),
            ),
            RiskMeasureSpec::Spectral { density } => Some(density.mass_below(u)),
            RiskMeasureSpec::Combination { terms } => terms
                .iter()
                .map(|(w, s)| s.spectral_mass_below(u).map(|v| w * v))
                .sum(),
        }
    }

    /// Spectral density as a function of `u`, for spectral measures only.
    /// Returns the right-continuous-from-the-left value `h(u)` for `u ∈ (0,1]`.
    pub fn spectral_density_at(&self, u: f64) -> Option<f64> {
        match self {
            RiskMeasureSpec::Entropic { .. } => None,
            RiskMeasureSpec::ExpectedShortfall { alpha } => {
                Some(if u <= *alpha { 1.0 / alpha } else { 0.0 })
            }
            RiskMeasureSpec::Distortion { components } => Some(
                components
                    .iter()
                    .map(|&(w, a)| if u <= a { w / a } else { 0.0 })
                    .sum(),
            ),
            RiskMeasureSpec::Spectral { density } => {
                let m = density.cells();
                let j = ((u * m as f64).ceil() as usize).clamp(1, m) - 1;
                Some(density.values()[j])
            }
            RiskMeasureSpec::Combination { terms } => terms
                .iter()
                .map(|(w, s)| s.spectral_density_at(u).map(|v| w * v))
                .sum(),
        }
    }

    /// Breakpoints in `(0,1)` where the spectral density jumps.
    pub(crate) fn spectral_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            RiskMeasureSpec::Entropic { .. } => {}
            RiskMeasureSpec::ExpectedShortfall { alpha } => out.push(*alpha),
            RiskMeasureSpec::Distortion { components } => out.extend(components.iter().map(|c| c.1)),
            RiskMeasureSpec::Spectral { density } => {
                let m = density.cells();
                out.extend((1..m).map(|j| j as f64 / m as f64));
            }
            RiskMeasureSpec::Combination { terms } => {
                terms.iter().for_each(|t| t.1.spectral_breakpoints(out))
            }
        }
    }

    /// `‖h‖_q` of the spectral density, exact for piecewise-constant `h`.
    pub fn spectral_norm(&self, q: f64) -> Option<f64> {
        if !self.is_spectral() {
            return None;
        }
        let mut knots = vec![0.0, 1.0];
        self.spectral_breakpoints(&mut knots);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut acc = 0.0;
        let mut sup: f64 = 0.0;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let h = self.spectral_density_at(0.5 * (a + b))?;
            sup = sup.max(h);
            if q.is_finite() {
                acc += h.powf(q) * (b - a);
            }
        }
        Some(if q.is_infinite() { sup } else { acc.powf(1.0 / q) })
    }
}

impl fmt::Display for RiskMeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskMeasureSpec::Entropic { beta } => write!(f, "entropic(beta={beta:?})"),
            RiskMeasureSpec::ExpectedShortfall { alpha } => write!(f, "es(alpha={alpha:?})"),
            RiskMeasureSpec::Distortion { components } => {
                write!(f, "distortion(")?;
                for (i, (w, a)) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{w:?}*es({a:?})")?;
                }
                write!(f, ")")
            }
            RiskMeasureSpec::Spectral { density } => {
                write!(f, "spectral(")?;
                for (i, v) in density.values().iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v:?}")?;
                }
                write!(f, ")")
            }
            RiskMeasureSpec::Combination { terms } => {
                write!(f, "mix(")?;
                for (i, (w, s)) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{w:?}*{s}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl FromStr for RiskMeasureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser::new(s);
        let spec = p.spec()?;
        p.expect_end()?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Small recursive-descent parser shared by the textual spec grammars.
pub(crate) struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Self { src: src.as_bytes(), pos: 0 }
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse { column: self.pos + 1, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    pub(crate) fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", c as char)))
        }
    }

    pub(crate) fn expect_end(&mut self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(c) => Err(self.error(format!("unexpected trailing '{}'", c as char))),
        }
    }

    /// Lower-cased identifier, or empty if none.
    pub(crate) fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphabetic()
                || self.src[self.pos] == b'_'
                || (self.pos > start && self.src[self.pos].is_ascii_digit()))
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).to_ascii_lowercase()
    }

    pub(crate) fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
        if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
            i += 1;
        }
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'-' || bytes[j] == b'+') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&bytes[start..i]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos = i;
                Ok(v)
            }
            Err(_) => Err(self.error("expected a number")),
        }
    }

    /// `name=` prefix (optional) followed by a number.
    pub(crate) fn named_number(&mut self, name: &str) -> Result<f64> {
        let save = self.pos;
        let id = self.ident();
        if id.is_empty() {
            self.pos = save;
        } else if id == name {
            self.expect(b'=')?;
        } else {
            return Err(self.error(format!("expected '{name}=' or a number, found '{id}'")));
        }
        self.number()
    }

    fn spec(&mut self) -> Result<RiskMeasureSpec> {
        self.spec_at(1)
    }

    fn spec_at(&mut self, depth: usize) -> Result<RiskMeasureSpec> {
        if depth > MAX_NESTING + 1 {
            return Err(self.error("risk measure nested too deeply"));
        }
        let head = self.ident();
        match head.as_str() {
            "entropic" | "entr" => {
                self.expect(b'(')?;
                let beta = self.named_number("beta")?;
                self.expect(b')')?;
                Ok(RiskMeasureSpec::Entropic { beta })
            }
            "es" => {
                self.expect(b'(')?;
                let alpha = self.named_number("alpha")?;
                self.expect(b')')?;
                Ok(RiskMeasureSpec::ExpectedShortfall { alpha })
            }
            "distortion" => {
                self.expect(b'(')?;
                let mut components = Vec::new();
                loop {
                    let w = self.number()?;
                    self.expect(b'*')?;
                    match self.spec_at(depth + 1)? {
                        RiskMeasureSpec::ExpectedShortfall { alpha } => components.push((w, alpha)),
                        _ => return Err(self.error("distortion terms must be es(...)")),
                    }
                    if !self.eat(b'+') {
                        break;
                    }
                }
                self.expect(b')')?;
                Ok(RiskMeasureSpec::Distortion { components })
            }
            "mix" => {
                self.expect(b'(')?;
                let mut terms = Vec::new();
                loop {
                    let w = self.number()?;
                    self.expect(b'*')?;
                    terms.push((w, self.spec_at(depth + 1)?));
                    if !self.eat(b'+') {
                        break;
                    }
                }
                self.expect(b')')?;
                Ok(RiskMeasureSpec::Combination { terms })
            }
            "spectral" => {
                self.expect(b'(')?;
                let mut values = vec![self.number()?];
                while self.eat(b',') {
                    values.push(self.number()?);
                }
                self.expect(b')')?;
                Ok(RiskMeasureSpec::Spectral { density: SpectralDensity::new(values)? })
            }
            "" => Err(self.error("expected a risk measure")),
            other => Err(self.error(format!("unknown risk measure '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_canonical_forms() {
        let e: RiskMeasureSpec = "entropic(beta=2.0)".parse().unwrap();
        assert_eq!(e, RiskMeasureSpec::Entropic { beta: 2.0 });
        let es: RiskMeasureSpec = "es(alpha=0.8)".parse().unwrap();
        assert_eq!(es, RiskMeasureSpec::ExpectedShortfall { alpha: 0.8 });
        let d: RiskMeasureSpec = "distortion(0.5*es(0.8)+0.5*es(0.7))".parse().unwrap();
        assert_eq!(d, RiskMeasureSpec::Distortion { components: vec![(0.5, 0.8), (0.5, 0.7)] });
        let m: RiskMeasureSpec = "mix(0.99*es(0.8)+0.01*entropic(1.0))".parse().unwrap();
        assert_eq!(
            m,
            RiskMeasureSpec::Combination {
                terms: vec![
                    (0.99, RiskMeasureSpec::ExpectedShortfall { alpha: 0.8 }),
                    (0.01, RiskMeasureSpec::Entropic { beta: 1.0 }),
                ]
            }
        );
    }

    #[test]
    fn parser_is_case_and_whitespace_tolerant() {
        let a: RiskMeasureSpec = "  Distortion ( 0.7 * ES( Alpha = 0.9 ) + 0.3*es(0.5) ) ".parse().unwrap();
        assert_eq!(a, RiskMeasureSpec::Distortion { components: vec![(0.7, 0.9), (0.3, 0.5)] });
        let b: RiskMeasureSpec = "ENTROPIC(BETA = 3e-1)".parse().unwrap();
        assert_eq!(b, RiskMeasureSpec::Entropic { beta: 0.3 });
    }

    #[test]
    fn parse_errors_carry_column() {
        match "es(alpha=1.5)".parse::<RiskMeasureSpec>() {
            Err(Error::Input(_)) => {}
            other => panic!("{other:?}"),
        }
        match "es(alpha=0.5".parse::<RiskMeasureSpec>() {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 13),
            other => panic!("{other:?}"),
        }
        assert!("foo(1)".parse::<RiskMeasureSpec>().is_err());
        assert!("distortion(0.5*entropic(1)+0.5*es(0.5))".parse::<RiskMeasureSpec>().is_err());
        assert!("es(0.5) trailing".parse::<RiskMeasureSpec>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "entropic(beta=2.0)",
            "es(alpha=0.8)",
            "distortion(0.5*es(0.8)+0.5*es(0.7))",
            "mix(0.99*es(alpha=0.8)+0.01*entropic(beta=1.0))",
            "mix(0.5*mix(0.5*es(alpha=0.3)+0.5*entropic(beta=0.1))+0.5*distortion(1.0*es(0.2)))",
            "spectral(2.0,0.0)",
        ] {
            let spec: RiskMeasureSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
            assert_eq!(spec.to_string().parse::<RiskMeasureSpec>().unwrap(), spec);
        }
    }

    #[test]
    fn weight_invariants() {
        assert!(RiskMeasureSpec::distortion(vec![(0.5, 0.8), (0.4, 0.7)]).is_err());
        assert!(RiskMeasureSpec::distortion(vec![]).is_err());
        assert!(RiskMeasureSpec::distortion(vec![(1.0, 1.0)]).is_err());
        assert!(RiskMeasureSpec::entropic(0.0).is_err());
        assert!(RiskMeasureSpec::es(0.0).is_err());
        assert!(RiskMeasureSpec::combination(vec![(1.0, RiskMeasureSpec::Entropic { beta: 1.0 })]).is_ok());
    }

    #[test]
    fn nesting_depth_limited() {
        let mut s = RiskMeasureSpec::Entropic { beta: 1.0 };
        for _ in 0..4 {
            s = RiskMeasureSpec::Combination { terms: vec![(1.0, s)] };
        }
        assert!(s.validate().is_ok());
        let s = RiskMeasureSpec::Combination { terms: vec![(1.0, s)] };
        assert!(s.validate().is_err());
    }

    #[test]
    fn density_invariants() {
        assert!(SpectralDensity::new(vec![]).is_err());
        assert!(SpectralDensity::new(vec![0.5, 1.5]).is_err());
        assert!(SpectralDensity::new(vec![1.5, 0.4]).is_err());
        assert!(SpectralDensity::new(vec![1.5, 0.5]).is_ok());
        let es = SpectralDensity::expected_shortfall(0.8, 100).unwrap();
        assert_eq!(es.cells(), 100);
        assert!((es.mass_below(0.8) - 1.0).abs() < 1e-12);
        assert!((es.mass_below(0.4) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn es_density_norm() {
        // ‖(1/α)1_{(0,α]}‖_q = α^{1/q − 1}
        let es = RiskMeasureSpec::ExpectedShortfall { alpha: 0.7 };
        let n = es.spectral_norm(2.0).unwrap();
        assert!((n - 0.7f64.powf(-0.5)).abs() < 1e-12);
        assert!(RiskMeasureSpec::Entropic { beta: 1.0 }.spectral_norm(2.0).is_none());
    }
}
