//! Shared fixtures for the benchmark targets.

use arwlab_core::network::{generate, BaseGraph, GeneratorSpec, InsertionRule, Network};

pub fn wheel(n: usize) -> Network {
    generate(&GeneratorSpec::Wheel {
        n,
        insertion: InsertionRule::Uniform,
    })
    .expect("wheel generates")
}

pub fn path(n: usize) -> Network {
    generate(&GeneratorSpec::TransitiveMinusVertex {
        base: BaseGraph::Cycle,
        n,
        insertion: InsertionRule::Uniform,
    })
    .expect("path generates")
}
