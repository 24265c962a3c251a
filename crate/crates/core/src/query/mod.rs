//! The BECAUSE query language.
//!
//! ```text
//! query  = "SELECT" select "FROM" ident "WHERE" pred "BECAUSE" expr [opts] ;
//! select = "*" | ident { "," ident } ;
//! pred   = ident cmp number ;
//! cmp    = "=" | "!=" | "<" | "<=" | ">" | ">=" ;
//! expr   = conj { "OR" conj } ;
//! conj   = atom { "AND" atom } ;
//! atom   = ident [ "RISING" | "FALLING" ] ;
//! opts   = "WITH" opt { "," opt } ;
//! opt    = ("BANDWIDTH" | "DELTA" | "ALPHA") "=" number ;
//! ```
//!
//! Keywords are case-insensitive and reserved.

mod ast;
mod exec;
mod parser;

pub use ast::{Comparator, KpiAtom, Predicate, QueryAst, QueryOptions, Select, Sign};
pub use exec::{
    EvidenceWindow, FitLines, KpiSummary, MatchedAtom, PlotRole, QueryConfig, QueryError, QueryResult, SeriesSegment,
    WindowPlot, cached_null_threshold, execute, query_hash, run, sample_frames, summarize,
};
pub use parser::{SyntaxError, is_identifier, parse};
