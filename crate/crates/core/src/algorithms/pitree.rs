//! Import of distilled decision-tree ABR policies into controller source.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AlgError;
use crate::dsl::{Binding, ControllerProgram};

/// Binary tree over ABR scalar inputs. A split sends `feature < threshold`
/// to `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecisionTreeSpec {
    Leaf {
        leaf: usize,
    },
    Split {
        feature: String,
        threshold: f64,
        left: Box<DecisionTreeSpec>,
        right: Box<DecisionTreeSpec>,
    },
}

impl DecisionTreeSpec {
    /// Direct traversal, reading features by name.
    pub fn predict(&self, feature: &dyn Fn(&str) -> f64) -> usize {
        match self {
            DecisionTreeSpec::Leaf { leaf } => *leaf,
            DecisionTreeSpec::Split {
                feature: name,
                threshold,
                left,
                right,
            } => {
                if feature(name) < *threshold {
                    left.predict(feature)
                } else {
                    right.predict(feature)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            DecisionTreeSpec::Leaf { .. } => 0,
            DecisionTreeSpec::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Nested `if`/`else` source equivalent to the tree.
pub fn pitree_import(spec: &DecisionTreeSpec) -> Result<String, AlgError> {
    let mut out = String::new();
    emit(spec, 0, &mut out)?;
    // Normalise through the parser so the text is canonical.
    let program = ControllerProgram::parse(&out, Binding::Abr).map_err(|e| AlgError::Tree(e.to_string()))?;
    Ok(program.render())
}

fn emit(node: &DecisionTreeSpec, depth: usize, out: &mut String) -> Result<(), AlgError> {
    let pad = "  ".repeat(depth);
    match node {
        DecisionTreeSpec::Leaf { leaf } => {
            let _ = writeln!(out, "{pad}return {leaf}");
        }
        DecisionTreeSpec::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if Binding::Abr.scalar_index(feature).is_none() {
                return Err(AlgError::Tree(format!("unknown feature `{feature}`")));
            }
            if !threshold.is_finite() {
                return Err(AlgError::Tree(format!("threshold for `{feature}` is not finite")));
            }
            let _ = writeln!(out, "{pad}if {feature} < {threshold} {{");
            emit(left, depth + 1, out)?;
            let _ = writeln!(out, "{pad}}} else {{");
            emit(right, depth + 1, out)?;
            let _ = writeln!(out, "{pad}}}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dsl::EvalContext;

    fn split(feature: &str, threshold: f64, left: DecisionTreeSpec, right: DecisionTreeSpec) -> DecisionTreeSpec {
        DecisionTreeSpec::Split {
            feature: feature.into(),
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn leaf(l: usize) -> DecisionTreeSpec {
        DecisionTreeSpec::Leaf { leaf: l }
    }

    #[test]
    fn single_leaf() {
        assert_eq!(pitree_import(&leaf(2)).unwrap(), "return 2\n");
    }

    #[test]
    fn one_split() {
        let src = pitree_import(&split("buffer", 5.0, leaf(0), leaf(3))).unwrap();
        assert_eq!(src, "if buffer < 5 {\n  return 0\n} else {\n  return 3\n}\n");
    }

    #[test]
    fn unknown_feature_is_rejected() {
        assert!(pitree_import(&split("bitrates", 1.0, leaf(0), leaf(1))).is_err());
        assert!(pitree_import(&split("nope", 1.0, leaf(0), leaf(1))).is_err());
    }

    #[test]
    fn json_shape() {
        let text = r#"{"feature": "buffer", "threshold": 4.5, "left": {"leaf": 0}, "right": {"leaf": 2}}"#;
        let t: DecisionTreeSpec = serde_json::from_str(text).unwrap();
        assert_eq!(t, split("buffer", 4.5, leaf(0), leaf(2)));
    }

    const FEATURES: [&str; 5] = ["buffer", "speed", "last_level", "chunk_index", "chunks_remaining"];

    fn tree(depth: u32) -> BoxedStrategy<DecisionTreeSpec> {
        let leaf_s = (0usize..6).prop_map(leaf).boxed();
        if depth == 0 {
            return leaf_s;
        }
        let sub = tree(depth - 1);
        prop_oneof![
            1 => leaf_s,
            4 => (prop::sample::select(FEATURES.to_vec()), 0.0f64..60.0, sub.clone(), sub)
                .prop_map(|(f, t, l, r)| split(f, (t * 4.0).round() / 4.0, l, r)),
        ]
        .boxed()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn program_matches_tree_walk(t in tree(4), seed in any::<u64>()) {
            use rand::Rng;
            let program = ControllerProgram::parse(&pitree_import(&t).unwrap(), Binding::Abr).unwrap();
            let mut rng = crate::seeding::rng(seed);
            for _ in 0..1000 {
                let scalars: Vec<f64> = (0..Binding::Abr.scalar_inputs().len())
                    .map(|_| (rng.random_range(0.0..60.0f64) * 4.0).round() / 4.0)
                    .collect();
                let ctx = EvalContext::from_parts(Binding::Abr, scalars.clone(), vec![vec![], vec![], vec![]]).unwrap();
                let expect = t.predict(&|name| scalars[Binding::Abr.scalar_index(name).unwrap()]);
                prop_assert_eq!(program.evaluate(&ctx).unwrap(), expect as f64);
            }
        }
    }
}
