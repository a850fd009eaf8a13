use super::{EncodeError, EncodeRequest};
use crate::multipliers::FrameMultipliers;
use std::collections::BTreeMap;
use std::path::Path;

/// Values available to a command template. Only keys present here may
/// appear as `{placeholders}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateVars {
    values: BTreeMap<&'static str, String>,
}

/// Integral multipliers keep one decimal ("1.0"); others use the shortest
/// representation that reads back to the same float.
pub fn format_multiplier(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

impl TemplateVars {
    pub fn new() -> Self {
        TemplateVars::default()
    }

    pub fn set(&mut self, key: &'static str, value: impl Into<String>) -> &mut Self {
        self.values.insert(key, value.into());
        self
    }

    pub fn path(&mut self, key: &'static str, value: &Path) -> &mut Self {
        self.set(key, value.to_string_lossy().into_owned())
    }

    pub fn multipliers(&mut self, m: &FrameMultipliers) -> &mut Self {
        self.set("k_all", format_multiplier(m.all))
            .set("k_kf", format_multiplier(m.kf))
            .set("k_gf_arf", format_multiplier(m.gf_arf))
    }

    /// Encoder-stage variables for a request: the source as `{input}`,
    /// `work_dir/out.bin` as `{output}`, and the profile's target size
    /// (0 for native).
    pub fn for_request(request: &EncodeRequest) -> Self {
        let mut v = TemplateVars::new();
        v.path("input", &request.source_path)
            .path("output", &request.work_dir.join("out.bin"))
            .set("qp", request.qp.to_string())
            .multipliers(&request.multipliers.routed())
            .set("preset", request.profile.speed_preset.to_string())
            .set("width", request.profile.target_width.to_string())
            .set("height", request.profile.target_height.to_string());
        v
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Splits `template` into arguments (shell-style quoting) and substitutes
/// placeholders inside each argument. `{{` and `}}` are literal braces.
pub fn render_command(template: &str, vars: &TemplateVars) -> Result<Vec<String>, EncodeError> {
    let words = shell_words::split(template).map_err(|e| EncodeError::Template(e.to_string()))?;
    if words.is_empty() {
        return Err(EncodeError::Template("empty command".into()));
    }
    words.iter().map(|w| substitute(w, vars)).collect()
}

fn substitute(word: &str, vars: &TemplateVars) -> Result<String, EncodeError> {
    let mut out = String::with_capacity(word.len());
    let mut chars = word.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                out.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                out.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) => name.push(ch),
                        None => {
                            return Err(EncodeError::Template(format!("unclosed placeholder in {word:?}")))
                        }
                    }
                }
                let value = vars
                    .get(&name)
                    .ok_or_else(|| EncodeError::UnknownPlaceholder(name.clone()))?;
                out.push_str(value);
            }
            '}' => return Err(EncodeError::Template(format!("stray '}}' in {word:?}"))),
            c => out.push(c),
        }
    }
    Ok(out)
}
