//! Run configuration: a training config plus where the data comes from and
//! where artifacts go.

use std::path::{Path, PathBuf};

use mfdml::data::{
    class_disjoint_split, generate_synthetic, load_dataset, DataFormat, Dataset, SyntheticSpec,
};
use mfdml::model::ModelKind;
use mfdml::train::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    File {
        path: PathBuf,
        /// Guessed from the extension when absent.
        #[serde(default)]
        format: Option<DataFormat>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataSource,
    pub output_dir: PathBuf,
    /// Split scored during training and in `report.txt`.
    pub eval_split: Split,
}

fn parse_field<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = match (prefix.is_empty(), path.as_str()) {
            (true, p) => p.to_string(),
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        CliError::Config(format!("field `{field}`: {}", e.inner()))
    })
}

impl RunConfig {
    /// Parses `data`, `output_dir` and `eval_split`; every other top-level
    /// key belongs to [`TrainConfig`].
    pub fn from_value(value: Value) -> Result<Self, CliError> {
        let Value::Object(mut map) = value else {
            return Err(CliError::Config("run config must be a JSON object".into()));
        };
        let data = map
            .remove("data")
            .ok_or_else(|| CliError::Config("field `data`: missing".into()))?;
        let data: DataSource = parse_field(data, "data")?;
        let output_dir = match map.remove("output_dir") {
            Some(v) => parse_field(v, "output_dir")?,
            None => PathBuf::from("out"),
        };
        let eval_split = match map.remove("eval_split") {
            Some(v) => parse_field(v, "eval_split")?,
            None => Split::Test,
        };
        let train: TrainConfig = parse_field(Value::Object(map), "")?;
        let cfg = Self {
            train,
            data,
            output_dir,
            eval_split,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Fully expanded JSON form, defaults included.
    pub fn to_value(&self) -> Value {
        let mut map: Map<String, Value> =
            match serde_json::to_value(&self.train).expect("config serializes") {
                Value::Object(m) => m,
                _ => unreachable!("TrainConfig serializes to an object"),
            };
        map.insert(
            "data".into(),
            serde_json::to_value(&self.data).expect("data source serializes"),
        );
        map.insert(
            "output_dir".into(),
            serde_json::to_value(&self.output_dir).expect("path serializes"),
        );
        map.insert(
            "eval_split".into(),
            serde_json::to_value(self.eval_split).expect("split serializes"),
        );
        Value::Object(map)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        if self.eval_split == Split::All {
            return Err(CliError::Config(
                "field `eval_split`: must be `train` or `test`".into(),
            ));
        }
        if self.train.model.kind == ModelKind::Table && self.eval_split != Split::Train {
            return Err(CliError::Config(
                "field `eval_split`: a table model can only be evaluated on `train`".into(),
            ));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()
                .map_err(|e| CliError::Config(format!("field `data.synthetic`: {e}")))?;
        }
        Ok(())
    }
}

pub fn load_source(source: &DataSource) -> Result<Dataset, CliError> {
    match source {
        DataSource::Synthetic(spec) => Ok(generate_synthetic(spec)?),
        DataSource::File { path, format } => {
            let format = format
                .or_else(|| DataFormat::from_path(path))
                .ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: cannot tell the format from the extension (use .csv or .bin)",
                        path.display()
                    ))
                })?;
            Ok(load_dataset(path, format)?)
        }
    }
}

/// Train and test halves of a class-disjoint split.
pub struct Splits {
    pub full: Dataset,
    pub train: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn new(full: Dataset) -> Result<Self, CliError> {
        let (train, test) = class_disjoint_split(&full)?;
        Ok(Self { full, train, test })
    }

    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
            Split::All => &self.full,
        }
    }
}

/// `--data` argument of `eval`: inline JSON or a `.json` file holding either
/// a bare synthetic spec or a config-style `data` object, otherwise a
/// dataset file.
pub fn parse_data_arg(arg: &str) -> Result<DataSource, CliError> {
    let synthetic = |text: &str| -> Result<DataSource, CliError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("--data: invalid JSON: {e}")))?;
        let wrapped = value
            .as_object()
            .is_some_and(|o| o.contains_key("synthetic") || o.contains_key("file"));
        if wrapped {
            parse_field(value, "data")
        } else {
            Ok(DataSource::Synthetic(parse_field(value, "data")?))
        }
    };
    if arg.trim_start().starts_with('{') {
        return synthetic(arg);
    }
    let path = PathBuf::from(arg);
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        return synthetic(&text);
    }
    Ok(DataSource::File { path, format: None })
}
