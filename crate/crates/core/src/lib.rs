pub mod image;
pub mod ingest;
pub mod json;
pub mod kpi;
pub mod metrics;
pub mod project;
pub mod query;
pub mod rdd;
pub mod results;
pub mod surrogate;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/projects.md")]
    mod projects {}
    #[doc = include_str!("../../../book/src/kpis.md")]
    mod kpis {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/discontinuities.md")]
    mod discontinuities {}
    #[doc = include_str!("../../../book/src/queries.md")]
    mod queries {}
    #[doc = include_str!("../../../book/src/surrogate.md")]
    mod surrogate {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/interfaces.md")]
    mod interfaces {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
