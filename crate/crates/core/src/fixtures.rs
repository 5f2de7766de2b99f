//! Bundled toy corpus for the policy-optimization demo: source charts drawn
//! by the in-process renderer, ten-question QA sets, and mock Inspector
//! rules that answer faithfully about each chart's own render.

use crate::image_io::sha256_hex;
use crate::inspector::{MockRule, MockRules};
use crate::model::{Category, ChartSample, Provenance, QAItem, QASet};
use crate::sandbox::{execute_script, ExecutionLimits, ToyRenderer};
use crate::toy_rl::{ToyPolicy, CODE_PLACEHOLDER};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyChartSpec {
    pub id: &'static str,
    pub kind: &'static str,
    pub data: Vec<f64>,
    pub color: &'static str,
    pub dashed: bool,
    pub title: &'static str,
}

impl ToyChartSpec {
    pub fn code(&self) -> String {
        let data: Vec<String> = self.data.iter().map(|v| v.to_string()).collect();
        let mut code = format!(
            "# {}\nchart {}\ndata {}\ncolor {}\n",
            self.title,
            self.kind,
            data.join(" "),
            self.color
        );
        if self.dashed {
            code.push_str("style dashed\n");
        }
        code.push_str(&format!("title {}\nsave\n", self.title));
        code
    }

    /// The 1/1/2/1/3/2 question mix with absolute tolerances at 10% of the
    /// gold value.
    pub fn qa_items(&self) -> Vec<QAItem> {
        let first = self.data[0];
        let max = self.data.iter().cloned().fold(f64::MIN, f64::max);
        let tol = |v: f64| (0.1 * v.abs()).max(0.1);
        vec![
            QAItem::boolean(
                format!("Is this a {} chart?", self.kind),
                true,
                Category::ChartType,
            ),
            QAItem::boolean(
                "Does the figure consist of a single panel?",
                true,
                Category::Layout,
            ),
            QAItem::text(
                "What is the chart title?",
                self.title,
                Category::TextPositive,
            ),
            QAItem::boolean(
                "Are the axes drawn on the left and bottom?",
                true,
                Category::TextPositive,
            ),
            QAItem::boolean(
                "Does the chart contain a legend?",
                false,
                Category::TextNegative,
            ),
            QAItem::float(
                "What is the value of the first data point?",
                first,
                tol(first),
            ),
            QAItem::float("What is the largest plotted value?", max, tol(max)),
            QAItem::float(
                "How many data points are plotted?",
                self.data.len() as f64,
                tol(self.data.len() as f64),
            ),
            QAItem::text(
                "What colour is the data series?",
                self.color,
                Category::Style,
            ),
            QAItem::boolean(
                "Is the series drawn with a dashed line?",
                self.dashed,
                Category::Style,
            ),
        ]
    }

    /// The reply a faithful reader of a chart drawn from `spec` would give.
    fn reply(item: &QAItem, spec: &ToyChartSpec) -> String {
        let q = item.question.as_str();
        if q.starts_with("Is this a") {
            return "Yes".into();
        }
        match q {
            "Does the figure consist of a single panel?"
            | "Are the axes drawn on the left and bottom?" => "Yes".into(),
            "What is the chart title?" => spec.title.to_string(),
            "Does the chart contain a legend?" => "No, there is no legend.".into(),
            "What is the value of the first data point?" => format!("About {}", spec.data[0]),
            "What is the largest plotted value?" => {
                format!("{}", spec.data.iter().cloned().fold(f64::MIN, f64::max))
            }
            "How many data points are plotted?" => format!("{} points", spec.data.len()),
            "What colour is the data series?" => spec.color.to_string(),
            "Is the series drawn with a dashed line?" => {
                if spec.dashed { "Yes" } else { "No" }.into()
            }
            _ => "unknown".into(),
        }
    }
}

pub fn toy_chart_specs() -> Vec<ToyChartSpec> {
    vec![
        ToyChartSpec {
            id: "toy-bar-sales",
            kind: "bar",
            data: vec![3.0, 5.0, 2.0, 7.0],
            color: "blue",
            dashed: false,
            title: "Sales",
        },
        ToyChartSpec {
            id: "toy-line-temp",
            kind: "line",
            data: vec![12.0, 15.5, 14.0, 18.0, 21.0],
            color: "red",
            dashed: false,
            title: "Temperature",
        },
        ToyChartSpec {
            id: "toy-scatter-yield",
            kind: "scatter",
            data: vec![1.0, 4.0, 9.0, 16.0],
            color: "green",
            dashed: false,
            title: "Yield",
        },
        ToyChartSpec {
            id: "toy-line-load",
            kind: "line",
            data: vec![40.0, 35.0, 50.0, 45.0],
            color: "purple",
            dashed: true,
            title: "Load",
        },
    ]
}

/// Arm templates. `{code}` is replaced by the sample's reference script.
pub const FAITHFUL_TEMPLATE: &str = "{code}";
pub const BROKEN_TEMPLATE: &str = "{code}\nplot(";
/// Executes, but re-colours the series before saving.
pub const SLOPPY_TEMPLATE: &str = "{code}\ncolor gray\nsave";

#[derive(Debug, Clone)]
pub struct ToyBundle {
    pub samples: Vec<ChartSample>,
    pub mock_rules: MockRules,
}

fn render(code: &str) -> Vec<u8> {
    let out = execute_script(&ToyRenderer, code, &ExecutionLimits::default())
        .expect("toy renderer is always available");
    assert!(
        out.is_success(),
        "bundled fixture failed to render: {}",
        out.diagnostic
    );
    out.image.expect("success carries an image")
}

fn rules_for(image: &[u8], items: &[QAItem], spec: &ToyChartSpec) -> Vec<MockRule> {
    let fingerprint = sha256_hex(image);
    items
        .iter()
        .map(|item| MockRule {
            image_fingerprint: fingerprint.clone(),
            question_pattern: item.question.clone(),
            reply: ToyChartSpec::reply(item, spec),
        })
        .collect()
}

/// Samples plus Inspector rules for their faithful renders and for the
/// re-coloured renders produced by [`SLOPPY_TEMPLATE`].
pub fn toy_bundle() -> ToyBundle {
    let mut samples = Vec::new();
    let mut rules = Vec::new();
    for spec in toy_chart_specs() {
        let code = spec.code();
        let image = render(&code);
        let items = spec.qa_items();
        rules.extend(rules_for(&image, &items, &spec));

        let sloppy_code = SLOPPY_TEMPLATE.replace(CODE_PLACEHOLDER, &code);
        let sloppy_spec = ToyChartSpec {
            color: "gray",
            ..spec.clone()
        };
        rules.extend(rules_for(&render(&sloppy_code), &items, &sloppy_spec));

        samples.push(
            ChartSample::new(spec.id, image, Provenance::Rendered)
                .with_caption(format!("A {} chart titled {}.", spec.kind, spec.title))
                .with_code(code)
                .with_qa(QASet {
                    source_image_id: spec.id.to_string(),
                    items,
                }),
        );
    }
    ToyBundle {
        samples,
        mock_rules: MockRules {
            rules,
            ..Default::default()
        },
    }
}

/// Faithful vs broken, starting with 20% mass on the faithful arm.
pub fn two_arm_policy(seed: u64) -> ToyPolicy {
    ToyPolicy::new(
        vec![FAITHFUL_TEMPLATE.into(), BROKEN_TEMPLATE.into()],
        vec![0.0, 4f64.ln()],
        seed,
    )
    .expect("valid fixture policy")
}

/// Faithful, sloppy and broken arms with uniform initial mass.
pub fn three_arm_policy(seed: u64) -> ToyPolicy {
    ToyPolicy::new(
        vec![
            FAITHFUL_TEMPLATE.into(),
            SLOPPY_TEMPLATE.into(),
            BROKEN_TEMPLATE.into(),
        ],
        vec![0.0; 3],
        seed,
    )
    .expect("valid fixture policy")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_qa_distribution, validate_sample};

    #[test]
    fn bundle_samples_are_valid_and_schema_conformant() {
        let bundle = toy_bundle();
        assert_eq!(bundle.samples.len(), 4);
        for s in &bundle.samples {
            assert!(validate_sample(s).is_empty(), "{:?}", validate_sample(s));
            let report = validate_qa_distribution(s.qa_set.as_ref().unwrap());
            assert!(report.conformant, "{report:?}");
        }
        assert_eq!(bundle.mock_rules.rules.len(), 4 * 10 * 2);
    }
}
