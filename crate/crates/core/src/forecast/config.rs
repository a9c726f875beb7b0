use serde::{Deserialize, Serialize};

use super::{ForecastError, Result};

/// Embedding and MLP sizes of the feature branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Category/attribute embedding size.
    pub d_c: usize,
    /// Size of each of the four date embeddings.
    pub d_t: usize,
    /// Size of each of the two demographic embeddings.
    pub d_g: usize,
    pub n_mlp: usize,
    pub u_mlp: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            d_c: 16,
            d_t: 8,
            d_g: 4,
            n_mlp: 2,
            u_mlp: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QarKind {
    #[serde(rename = "lr")]
    Lr,
    #[serde(rename = "lstm")]
    Lstm,
    #[serde(rename = "feedback_lstm")]
    FeedbackLstm,
    #[serde(rename = "cnn")]
    Cnn,
    #[serde(rename = "conv_lstm")]
    ConvLstm,
    #[serde(rename = "transformer")]
    Transformer,
}

impl QarKind {
    pub const ALL: [QarKind; 6] = [
        QarKind::Lr,
        QarKind::Lstm,
        QarKind::FeedbackLstm,
        QarKind::Cnn,
        QarKind::ConvLstm,
        QarKind::Transformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QarKind::Lr => "lr",
            QarKind::Lstm => "lstm",
            QarKind::FeedbackLstm => "feedback_lstm",
            QarKind::Cnn => "cnn",
            QarKind::ConvLstm => "conv_lstm",
            QarKind::Transformer => "transformer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Trend branch. `hidden`, `kernel`, `layers`, `heads` and `ff_dim` are read
/// only by the kinds that use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QarConfig {
    pub kind: QarKind,
    pub n: usize,
    pub a_max: usize,
    pub q: usize,
    /// ConvLSTM state channels; CNN intermediate channels.
    pub hidden: usize,
    /// CNN / ConvLSTM kernel width.
    pub kernel: usize,
    /// CNN conv layers; Transformer encoder layers.
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Transformer only: learnable positional embedding.
    pub positional: bool,
}

impl QarConfig {
    pub fn new(kind: QarKind) -> Self {
        Self {
            kind,
            n: 12,
            a_max: 8,
            q: 32,
            hidden: 16,
            kernel: 3,
            layers: 2,
            heads: 2,
            ff_dim: 64,
            positional: true,
        }
    }
}

impl Default for QarConfig {
    fn default() -> Self {
        Self::new(QarKind::Lstm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    FusionMlp,
    Qar,
    MuQar,
}

impl Architecture {
    pub fn uses_fusion(self) -> bool {
        matches!(self, Architecture::FusionMlp | Architecture::MuQar)
    }

    pub fn uses_qar(self) -> bool {
        matches!(self, Architecture::Qar | Architecture::MuQar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hemisphere {
    Northern,
    Southern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub fusion: FusionConfig,
    pub qar: QarConfig,
    /// Forecast horizon.
    pub k: usize,
    /// Hidden units of the head MLP.
    pub head_units: usize,
    /// Visual feature size (0 = no visual input).
    pub feature_dim: usize,
    pub num_categories: usize,
    pub num_attributes: usize,
    /// The feature branch embeds a demographic stratum; requests must carry one.
    pub demographic: bool,
    pub hemisphere: Hemisphere,
}

impl ModelConfig {
    pub fn new(
        architecture: Architecture,
        feature_dim: usize,
        num_categories: usize,
        num_attributes: usize,
    ) -> Self {
        Self {
            architecture,
            fusion: FusionConfig::default(),
            qar: QarConfig::default(),
            k: 1,
            head_units: 64,
            feature_dim,
            num_categories,
            num_attributes,
            demographic: false,
            hemisphere: Hemisphere::Northern,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.fusion;
        let q = &self.qar;
        let positive = [
            ("k", self.k),
            ("head_units", self.head_units),
            ("num_categories", self.num_categories),
            ("d_c", f.d_c),
            ("d_t", f.d_t),
            ("d_g", f.d_g),
            ("u_mlp", f.u_mlp),
            ("n", q.n),
            ("a_max", q.a_max),
            ("q", q.q),
            ("hidden", q.hidden),
            ("kernel", q.kernel),
            ("layers", q.layers),
            ("heads", q.heads),
            ("ff_dim", q.ff_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ForecastError::Config(format!("{name} must be positive")));
        }
        if self.architecture.uses_fusion() && f.n_mlp == 0 {
            return Err(ForecastError::Config("n_mlp must be positive".into()));
        }
        if q.kind == QarKind::Cnn && q.layers * (q.kernel - 1) >= q.n {
            return Err(ForecastError::Config(format!(
                "{} valid convolutions of width {} need more than {} steps",
                q.layers, q.kernel, q.n
            )));
        }
        if q.kind == QarKind::Transformer && q.q % q.heads != 0 {
            return Err(ForecastError::Config(format!(
                "q = {} is not divisible by {} heads",
                q.q, q.heads
            )));
        }
        Ok(())
    }
}

/// Optimizer schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop after this many epochs without validation MAE improvement.
    pub patience: Option<usize>,
    /// Stop once the epoch training MSE falls below this.
    pub target_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            patience: Some(8),
            target_loss: None,
        }
    }
}
