use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAst {
    pub select: Select,
    pub source: String,
    pub predicate: Predicate,
    /// Disjunction of conjunctions; never empty, nor is any conjunction.
    pub because: Vec<Vec<KpiAtom>>,
    pub options: QueryOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Select {
    All,
    Columns(Vec<String>),
}

impl Select {
    pub fn includes(&self, name: &str) -> bool {
        match self {
            Select::All => true,
            Select::Columns(cols) => cols.iter().any(|c| c == name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub const ALL: [Comparator; 6] =
        [Comparator::Eq, Comparator::Ne, Comparator::Lt, Comparator::Le, Comparator::Gt, Comparator::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Eq => lhs == rhs,
            Comparator::Ne => lhs != rhs,
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub metric: String,
    pub cmp: Comparator,
    pub value: f64,
}

impl Predicate {
    pub fn holds(&self, v: f64) -> bool {
        self.cmp.holds(v, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    #[default]
    Any,
    Rising,
    Falling,
}

impl Sign {
    pub fn admits(self, tau: f64) -> bool {
        match self {
            Sign::Any => true,
            Sign::Rising => tau > 0.0,
            Sign::Falling => tau < 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpiAtom {
    pub kpi: String,
    #[serde(default)]
    pub sign: Sign,
}

impl KpiAtom {
    pub fn new(kpi: &str, sign: Sign) -> Self {
        Self { kpi: kpi.to_string(), sign }
    }
}

/// `WITH` overrides of the execution configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryOptions {
    pub bandwidth: Option<usize>,
    pub delta: Option<usize>,
    pub alpha: Option<f64>,
}

impl QueryOptions {
    pub fn is_empty(&self) -> bool {
        self.bandwidth.is_none() && self.delta.is_none() && self.alpha.is_none()
    }
}

impl QueryAst {
    /// KPI names in order of first appearance.
    pub fn kpi_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for atom in self.because.iter().flatten() {
            if !names.contains(&atom.kpi.as_str()) {
                names.push(&atom.kpi);
            }
        }
        names
    }
}

/// Canonical text: uppercase keywords, single spaces, options in the order
/// BANDWIDTH, DELTA, ALPHA.
impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.select {
            Select::All => f.write_str("*")?,
            Select::Columns(cols) => f.write_str(&cols.join(", "))?,
        }
        write!(
            f,
            " FROM {} WHERE {} {} {} BECAUSE ",
            self.source,
            self.predicate.metric,
            self.predicate.cmp.symbol(),
            self.predicate.value
        )?;
        for (i, conj) in self.because.iter().enumerate() {
            if i > 0 {
                f.write_str(" OR ")?;
            }
            for (j, atom) in conj.iter().enumerate() {
                if j > 0 {
                    f.write_str(" AND ")?;
                }
                f.write_str(&atom.kpi)?;
                match atom.sign {
                    Sign::Any => {}
                    Sign::Rising => f.write_str(" RISING")?,
                    Sign::Falling => f.write_str(" FALLING")?,
                }
            }
        }
        let mut opts = Vec::new();
        if let Some(b) = self.options.bandwidth {
            opts.push(format!("BANDWIDTH = {b}"));
        }
        if let Some(d) = self.options.delta {
            opts.push(format!("DELTA = {d}"));
        }
        if let Some(a) = self.options.alpha {
            opts.push(format!("ALPHA = {a}"));
        }
        if !opts.is_empty() {
            write!(f, " WITH {}", opts.join(", "))?;
        }
        Ok(())
    }
}
