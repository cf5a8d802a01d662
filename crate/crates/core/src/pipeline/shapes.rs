//! Allocation-only walk over every matrix of a configuration, used to
//! confirm large encoder-shaped settings without training.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::classifier::{combine, project_inputs, ModelShape};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeCheck {
    pub name: String,
    pub expected: (usize, usize),
    pub actual: (usize, usize),
}

impl ShapeCheck {
    pub fn ok(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DryRunReport {
    pub label: String,
    pub checks: Vec<ShapeCheck>,
}

impl DryRunReport {
    pub fn ok(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(ShapeCheck::ok)
    }

    pub fn find(&self, name: &str) -> Option<&ShapeCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.label);
        for c in &self.checks {
            out.push_str(&format!("{:<24} {:?} {}\n", c.name, c.actual, if c.ok() { "ok" } else { "MISMATCH" }));
        }
        out
    }
}

/// Allocates each block one at a time (dropping it before the next) so the
/// peak footprint is a single block, and runs the projections and the
/// combination on zero inputs.
pub fn dry_run(label: &str, shape: ModelShape, users: usize) -> DryRunReport {
    let ModelShape { n, d1, d2, classes, .. } = shape;
    let mut checks = Vec::new();
    let mut alloc = |name: &str, dims: (usize, usize)| {
        let m = Array2::<f64>::zeros(dims);
        checks.push(ShapeCheck {
            name: name.into(),
            expected: dims,
            actual: m.dim(),
        });
    };
    for block in ["comments.layer1", "comments.layer2", "roles.matt", "fusion.matt_s", "fusion.matt_role"] {
        for w in ["wq", "wk", "wv", "wo"] {
            alloc(&format!("{block}.{w}"), (d1, d1));
        }
    }
    alloc("fuse.w1", (d1, 2 * d1));
    alloc("fuse.b1", (1, d1));
    alloc("roles.w2", (d1, 2 * d1));
    alloc("roles.b2", (1, d1));
    alloc("fusion.w_gs", (d2, d2));
    alloc("fusion.w_gr", (d2, d2));
    alloc("fusion.b_gs", (1, d2));
    alloc("fusion.b_gr", (1, d2));
    alloc("fusion.w_o", (classes, 4 * d2));
    alloc("fusion.b_o", (1, classes));
    alloc("inputs.h_at", (users, d1));
    alloc("inputs.comment", (n, d1));

    let mut run = |name: &str, rows: usize, expected: (usize, usize)| {
        let h = Array2::<f64>::zeros((rows, d1));
        let w = Array2::<f64>::zeros((rows, d2));
        let m = project_inputs(&h, &w, &Array1::zeros(d2)).map(|m| m.dim()).unwrap_or((0, 0));
        checks.push(ShapeCheck {
            name: name.into(),
            expected,
            actual: m,
        });
        checks.push(ShapeCheck {
            name: format!("{name}.w"),
            expected: (rows, d2),
            actual: w.dim(),
        });
        checks.push(ShapeCheck {
            name: format!("{name}.h"),
            expected: (rows, d1),
            actual: h.dim(),
        });
    };
    run("m_s", n, (d2, d1));
    run("m_rf", 3, (d2, d1));
    run("m_role", 4, (d2, d1));

    let g = combine(&Array1::zeros(d2), &Array1::zeros(d2));
    checks.push(ShapeCheck {
        name: "g_o".into(),
        expected: (1, 4 * d2),
        actual: (1, g.len()),
    });
    DryRunReport { label: label.into(), checks }
}

pub fn chatglm_shape() -> ModelShape {
    ModelShape {
        n: 128,
        d1: 4096,
        d2: 2048,
        classes: 7,
        self_heads: 8,
        role_heads: 8,
        fusion_heads: 8,
    }
}

pub fn qwen_shape() -> ModelShape {
    ModelShape {
        n: 128,
        d1: 5120,
        d2: 2560,
        classes: 7,
        self_heads: 8,
        role_heads: 8,
        fusion_heads: 8,
    }
}
