//! Plain-text space configuration.
//!
//! ```text
//! name = my-space
//! family = twins          # or deit
//! class_token = false     # deit only
//! in_channels = 3
//!
//! [stage]
//! embed_patch = 4
//! embed_max_dim = 128
//! embed_ratios = 1/2,1    # optional, defaults to 1
//! layers = 4
//! ops = local,global
//! heads = 2,4
//! max_attn_dim = 480
//! max_mlp_dim = 512
//! attn_ratios = 1/10,2/10
//! mlp_ratios = 0.5,1
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use num_rational::Ratio;

use super::{DimRatio, EmbedSpec, Family, OpKind, SpaceSpec, StageSpec};
use crate::error::{Error, Result};

const BUILTINS: &[(&str, &str)] = &[
    ("twins-tiny", include_str!("../../spaces/twins-tiny.space")),
    ("twins-small", include_str!("../../spaces/twins-small.space")),
    ("twins-base", include_str!("../../spaces/twins-base.space")),
    ("twins-large", include_str!("../../spaces/twins-large.space")),
    ("deit-tiny", include_str!("../../spaces/deit-tiny.space")),
    ("deit-small", include_str!("../../spaces/deit-small.space")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

/// Config text of a built-in space.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Loads a built-in space by name.
pub fn load_space(name: &str) -> Result<SpaceSpec> {
    let text = builtin_source(name).ok_or_else(|| {
        let known: Vec<_> = builtin_names().collect();
        Error::invalid(format!("unknown built-in space `{name}` (known: {})", known.join(", ")))
    })?;
    parse_space_spec(text)
}

struct Section {
    header_line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section {
    fn new(header_line: usize) -> Self {
        Section { header_line, entries: BTreeMap::new() }
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn required(&self, key: &str) -> Result<(usize, &str)> {
        self.raw(key).ok_or_else(|| Error::Parse { line: self.header_line, message: format!("missing key `{key}`") })
    }

    fn scalar<T: FromStr>(&self, key: &str) -> Result<T> {
        let (line, v) = self.required(key)?;
        parse_item(line, key, v)
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let (line, v) = self.required(key)?;
        parse_list(line, key, v, |s| s.parse().ok())
    }

    fn ratios(&self, key: &str) -> Result<Vec<DimRatio>> {
        let (line, v) = self.required(key)?;
        parse_list(line, key, v, parse_ratio)
    }
}

fn parse_item<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse { line, message: format!("bad value `{v}` for `{key}`") })
}

fn parse_list<T>(line: usize, key: &str, v: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .map(|item| {
            f(item).ok_or_else(|| Error::Parse { line, message: format!("bad list item `{item}` for `{key}`") })
        })
        .collect()
}

/// Accepts `a/b`, integers and plain decimals (`0.25`), all parsed exactly.
fn parse_ratio(s: &str) -> Option<DimRatio> {
    if let Some((n, d)) = s.split_once('/') {
        let d: u64 = d.trim().parse().ok()?;
        let n: u64 = n.trim().parse().ok()?;
        return (d != 0).then(|| Ratio::new(n, d));
    }
    match s.split_once('.') {
        Some((int, frac)) => {
            if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            let den = 10u64.pow(frac.len() as u32);
            let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
            Some(Ratio::new(int * den + frac.parse::<u64>().ok()?, den))
        }
        None => Some(Ratio::from_integer(s.parse().ok()?)),
    }
}

const GLOBAL_KEYS: &[&str] = &["name", "family", "class_token", "in_channels"];
const STAGE_KEYS: &[&str] = &[
    "embed_patch",
    "embed_max_dim",
    "embed_ratios",
    "layers",
    "ops",
    "heads",
    "max_attn_dim",
    "max_mlp_dim",
    "attn_ratios",
    "mlp_ratios",
];

/// Parses and validates a space config document.
pub fn parse_space_spec(text: &str) -> Result<SpaceSpec> {
    let mut global = Section::new(1);
    let mut stages: Vec<Section> = Vec::new();
    let mut last_line = 1;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if content != "[stage]" {
                return Err(Error::Parse { line, message: format!("unknown section `{content}`") });
            }
            stages.push(Section::new(line));
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, message: format!("expected `key = value`, got `{content}`") })?;
        let (key, value) = (key.trim(), value.trim());
        let (section, allowed) = match stages.last_mut() {
            Some(s) => (s, STAGE_KEYS),
            None => (&mut global, GLOBAL_KEYS),
        };
        if !allowed.contains(&key) {
            return Err(Error::Parse { line, message: format!("unknown key `{key}`") });
        }
        if value.is_empty() {
            return Err(Error::Parse { line, message: format!("empty value for `{key}`") });
        }
        if section.entries.insert(key.to_string(), (line, value.to_string())).is_some() {
            return Err(Error::Parse { line, message: format!("duplicate key `{key}`") });
        }
    }

    if stages.is_empty() {
        return Err(Error::Parse { line: last_line, message: "document defines no `[stage]`".into() });
    }

    let name = global.raw("name").map_or("custom", |(_, v)| v).to_string();
    let family = match global.raw("family") {
        Some((line, v)) => v.parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?,
        None => Family::TwinsLike,
    };
    let class_token = match global.raw("class_token") {
        Some((line, v)) => parse_item(line, "class_token", v)?,
        None => false,
    };
    let in_channels = match global.raw("in_channels") {
        Some((line, v)) => parse_item(line, "in_channels", v)?,
        None => 3,
    };

    let stages = stages.iter().map(parse_stage).collect::<Result<Vec<_>>>()?;
    let spec = SpaceSpec { name, family, class_token, in_channels, stages };
    spec.validate()?;
    Ok(spec)
}

fn parse_stage(sec: &Section) -> Result<StageSpec> {
    let embed = EmbedSpec {
        patch_choices: sec.list("embed_patch")?,
        max_dim: sec.scalar("embed_max_dim")?,
        ratio_choices: match sec.raw("embed_ratios") {
            Some(_) => sec.ratios("embed_ratios")?,
            None => vec![Ratio::from_integer(1)],
        },
    };
    let layers: usize = sec.scalar("layers")?;
    if layers == 0 {
        return Ok(StageSpec {
            embed,
            layers,
            ops: Vec::new(),
            heads: Vec::new(),
            max_attn_dim: 0,
            max_mlp_dim: 0,
            attn_ratios: Vec::new(),
            mlp_ratios: Vec::new(),
        });
    }
    let (ops_line, ops_raw) = sec.required("ops")?;
    let ops = parse_list(ops_line, "ops", ops_raw, |s| OpKind::from_str(s).ok())?;
    Ok(StageSpec {
        embed,
        layers,
        ops,
        heads: sec.list("heads")?,
        max_attn_dim: sec.scalar("max_attn_dim")?,
        max_mlp_dim: sec.scalar("max_mlp_dim")?,
        attn_ratios: sec.ratios("attn_ratios")?,
        mlp_ratios: sec.ratios("mlp_ratios")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_forms() {
        assert_eq!(parse_ratio("3/10"), Some(Ratio::new(3, 10)));
        assert_eq!(parse_ratio("0.25"), Some(Ratio::new(1, 4)));
        assert_eq!(parse_ratio("1"), Some(Ratio::from_integer(1)));
        assert_eq!(parse_ratio("1/0"), None);
        assert_eq!(parse_ratio("x"), None);
    }

    #[test]
    fn empty_document_is_a_parse_error() {
        assert!(matches!(parse_space_spec(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_space_spec("# nothing\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_space_spec("name = a\n[stage]\nlayers = 2\nbogus = 1\n").unwrap_err();
        assert_eq!(err, Error::Parse { line: 4, message: "unknown key `bogus`".into() });
        let err = parse_space_spec("[stage]\nembed_patch = 4\nlayers = 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err:?}");
        let err = parse_space_spec("[stage]\nembed_patch = 4,x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn embedding_only_stage() {
        let spec = parse_space_spec("[stage]\nembed_patch = 16\nembed_max_dim = 64\nlayers = 0\n").unwrap();
        assert_eq!(spec.stages[0].layers, 0);
        assert_eq!(spec.stages[0].per_layer_choices(), 0);
    }

    #[test]
    fn builtin_shapes() {
        let twins = load_space("twins-small").unwrap();
        let layers: Vec<_> = twins.stages.iter().map(|s| s.layers).collect();
        assert_eq!(layers, [4, 4, 12, 6]);
        assert_eq!(twins.stages[0].per_layer_choices(), 800);

        let deit = load_space("deit-small").unwrap();
        assert_eq!(deit.stages.len(), 1);
        assert_eq!(deit.stages[0].layers, 14);
        assert_eq!(deit.stages[0].embed.max_dim, 768);
        assert_eq!(deit.stages[0].max_attn_dim, 2880);
        assert!(deit.class_token);

        let base = load_space("twins-base").unwrap();
        let layers: Vec<_> = base.stages.iter().map(|s| s.layers).collect();
        assert_eq!(layers, [4, 4, 20, 4]);
        assert!(load_space("nope").is_err());
    }
}
