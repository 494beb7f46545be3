use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{TaskLabel, ToolParams, ToolSpec};
use crate::error::{Error, Result};

/// Ordered tool lists per task. The first entry of each list is the primary tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolRegistry {
    tools: BTreeMap<TaskLabel, Vec<ToolSpec>>,
}

impl ToolRegistry {
    /// Checks that every task has at least one tool, that each spec is filed
    /// under its own task, that ids are unique per task and parameters valid.
    pub fn new(tools: BTreeMap<TaskLabel, Vec<ToolSpec>>) -> Result<Self> {
        let r = Self { tools };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for task in TaskLabel::ALL {
            let list = self.tools.get(&task).map(Vec::as_slice).unwrap_or_default();
            if list.is_empty() {
                return Err(Error::ParamOutOfRange(format!(
                    "no tool registered for {task}"
                )));
            }
            for (i, spec) in list.iter().enumerate() {
                if spec.task != task {
                    return Err(Error::ParamOutOfRange(format!(
                        "tool {} declares task {} but is listed under {task}",
                        spec.tool_id, spec.task
                    )));
                }
                if list[..i].iter().any(|s| s.tool_id == spec.tool_id) {
                    return Err(Error::ParamOutOfRange(format!(
                        "duplicate tool id {} for {task}",
                        spec.tool_id
                    )));
                }
                spec.params.validate()?;
            }
        }
        Ok(())
    }

    pub fn tools(&self, task: TaskLabel) -> &[ToolSpec] {
        self.tools.get(&task).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn primary(&self, task: TaskLabel) -> &ToolSpec {
        &self.tools(task)[0]
    }

    pub fn get(&self, task: TaskLabel, tool_id: &str) -> Result<&ToolSpec> {
        self.tools(task)
            .iter()
            .find(|s| s.tool_id == tool_id)
            .ok_or_else(|| Error::UnknownTool {
                task: task.to_string(),
                tool_id: tool_id.to_string(),
            })
    }

    /// Replaces the tool list of each task present in `overrides`.
    pub fn with_overrides(&self, overrides: BTreeMap<TaskLabel, Vec<ToolSpec>>) -> Result<Self> {
        let mut tools = self.tools.clone();
        tools.extend(overrides);
        Self::new(tools)
    }

    /// Same registry with only the primary tool of every task.
    pub fn primaries_only(&self) -> Self {
        let tools = self
            .tools
            .iter()
            .map(|(k, v)| (*k, vec![v[0].clone()]))
            .collect();
        Self { tools }
    }

    pub fn iter(&self) -> impl Iterator<Item = (TaskLabel, &[ToolSpec])> {
        self.tools.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}

/// Noise presets in intensity units for the three denoising slots.
pub fn noise_preset(task: TaskLabel) -> Option<f32> {
    match task {
        TaskLabel::DnL => Some(10.0 / 255.0),
        TaskLabel::DnM => Some(25.0 / 255.0),
        TaskLabel::DnH => Some(50.0 / 255.0),
        _ => None,
    }
}

const DEBLUR_NSR: [f32; 3] = [0.002, 0.01, 0.05];

pub fn default_registry() -> ToolRegistry {
    use TaskLabel::*;
    let mut tools = BTreeMap::new();
    for task in [DnL, DnM, DnH] {
        let sigma = noise_preset(task).expect("noise task");
        tools.insert(
            task,
            vec![
                ToolSpec::new(
                    task,
                    "nlm",
                    ToolParams::Nlm {
                        patch: 5,
                        window: 11,
                        h: 0.7 * sigma,
                    },
                ),
                ToolSpec::new(
                    task,
                    "bilateral",
                    ToolParams::Bilateral {
                        sigma_s: 3.0,
                        sigma_r: 2.0 * sigma,
                    },
                ),
            ],
        );
    }
    tools.insert(
        Dj,
        vec![ToolSpec::new(
            Dj,
            "deblock",
            ToolParams::Deblock {
                gate: 1.5,
                max_step: 0.12,
                h: 4.0 / 255.0,
            },
        )],
    );
    tools.insert(
        Dr,
        vec![
            ToolSpec::new(
                Dr,
                "directional_median",
                ToolParams::DirectionalMedian { length: 9 },
            ),
            ToolSpec::new(
                Dr,
                "directional_opening",
                ToolParams::DirectionalOpening { length: 9 },
            ),
        ],
    );
    tools.insert(
        Dh,
        vec![ToolSpec::new(
            Dh,
            "dark_channel",
            ToolParams::DarkChannel {
                omega: 0.95,
                t_min: 0.1,
                radius: 20,
                eps: 1e-3,
            },
        )],
    );
    tools.insert(
        Mdb,
        vec![ToolSpec::new(
            Mdb,
            "wiener_motion",
            ToolParams::WienerMotion {
                nsr: DEBLUR_NSR.to_vec(),
            },
        )],
    );
    tools.insert(
        Ddb,
        vec![ToolSpec::new(
            Ddb,
            "wiener_disk",
            ToolParams::WienerDisk {
                radii: vec![2.0, 3.0, 4.0, 5.0, 6.0],
                nsr: DEBLUR_NSR.to_vec(),
            },
        )],
    );
    tools.insert(
        Le,
        vec![
            ToolSpec::new(
                Le,
                "adaptive_gamma",
                ToolParams::AdaptiveGamma {
                    target_mean: 0.45,
                    low_pct: 2.0,
                    high_pct: 98.0,
                },
            ),
            ToolSpec::new(
                Le,
                "tile_equalize",
                ToolParams::TileEqualize {
                    tiles: 8,
                    clip: 2.0,
                },
            ),
        ],
    );
    tools.insert(
        Sr,
        vec![ToolSpec::new(
            Sr,
            "back_projection",
            ToolParams::BackProjection {
                iterations: 5,
                amount: 0.6,
                radius: 1.5,
            },
        )],
    );
    ToolRegistry::new(tools).expect("default registry is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_task_mapped() {
        let r = default_registry();
        for t in TaskLabel::ALL {
            assert!(!r.tools(t).is_empty(), "{t}");
            assert!(r.tools(t).iter().all(|s| s.task == t));
        }
    }

    #[test]
    fn dn_m_has_nlm_and_bilateral() {
        let r = default_registry();
        let ids: Vec<_> = r
            .tools(TaskLabel::DnM)
            .iter()
            .map(|s| s.tool_id.as_str())
            .collect();
        assert_eq!(ids, ["nlm", "bilateral"]);
        match &r.primary(TaskLabel::DnM).params {
            ToolParams::Nlm { h, .. } => {
                assert!((h - 0.7 * 25.0 / 255.0).abs() < 1e-7);
            }
            other => panic!("unexpected primary {other:?}"),
        }
    }

    #[test]
    fn serde_round_trip() {
        let r = default_registry();
        let s = serde_json::to_string(&r).unwrap();
        let back: ToolRegistry = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert!(s.contains("\"DN_M\""));
    }

    #[test]
    fn unknown_tool() {
        let r = default_registry();
        assert!(matches!(
            r.get(TaskLabel::Dh, "nope"),
            Err(Error::UnknownTool { .. })
        ));
        assert!(r.get(TaskLabel::Dh, "dark_channel").is_ok());
    }

    #[test]
    fn overrides_are_validated() {
        let r = default_registry();
        let mut o = BTreeMap::new();
        o.insert(TaskLabel::Sr, vec![]);
        assert!(r.with_overrides(o).is_err());
        let mut o = BTreeMap::new();
        o.insert(
            TaskLabel::Sr,
            vec![ToolSpec::new(
                TaskLabel::Dh,
                "x",
                ToolParams::TileEqualize {
                    tiles: 8,
                    clip: 2.0,
                },
            )],
        );
        assert!(r.with_overrides(o).is_err());
        let mut o = BTreeMap::new();
        o.insert(
            TaskLabel::Le,
            vec![ToolSpec::new(
                TaskLabel::Le,
                "eq",
                ToolParams::TileEqualize {
                    tiles: 4,
                    clip: 3.0,
                },
            )],
        );
        let r2 = r.with_overrides(o).unwrap();
        assert_eq!(r2.tools(TaskLabel::Le).len(), 1);
        assert_eq!(r2.tools(TaskLabel::Dh), r.tools(TaskLabel::Dh));
    }

    #[test]
    fn bad_params_rejected() {
        let bad = ToolParams::Nlm {
            patch: 4,
            window: 11,
            h: 0.1,
        };
        assert!(matches!(bad.validate(), Err(Error::ParamOutOfRange(_))));
        assert!(ToolParams::WienerMotion { nsr: vec![] }.validate().is_err());
    }
}
