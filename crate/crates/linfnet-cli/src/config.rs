//! Flat key=value training configuration: parsing, defaults, overrides.

use linfnet::config::KvMap;
use linfnet::training::{ArchSpec, Augment, Loss, OptimizerKind, SurrogateKind, TrainConfig};
use linfnet::{Error, Result};

use crate::data::DataSpec;

/// Everything a `train` or `ensemble` run needs from its config file.
#[derive(Debug)]
pub struct RunSpec {
    pub train: DataSpec,
    pub val: DataSpec,
    pub cfg: TrainConfig,
}

/// Canonical defaults, printable via `--print-defaults`. The output is
/// itself a runnable config (it trains on a synthetic corner task).
pub const DEFAULTS: &str = "\
# dataset: IDX pair (optionally .gz) or a synthetic corner task
#data.train.images = data/train-images-idx3-ubyte.gz
#data.train.labels = data/train-labels-idx1-ubyte.gz
data.train.synth = 2,16,0.5,200,41
# validation set; defaults to the training selection when absent
#data.val.images = data/t10k-images-idx3-ubyte.gz
#data.val.labels = data/t10k-labels-idx1-ubyte.gz
# optional transforms, applied in this order
#data.take = 5000
#data.val.take = 1000
#data.crop = 4
data.concat = false

# architecture: comma-separated hidden widths of distance layers
arch.hidden = 64,64
# residual mixing coefficient for equal-width layers (unset = plain)
#arch.residual = 0.5
# affine ReLU head widths after the backbone (unset = headless)
#arch.head = 64,10
arch.negate = true

epochs = 30
batch = 128
seed = 0
epsilon = 0.1
# hinge:MARGIN or ce:SCALE
loss = hinge:0.2
# adamw or madam
optimizer = adamw
lr = 0.02
# p-annealing: geometric p.start -> p.end, exact from p.exact_from on
surrogate = pnorm
p.start = 8
p.end = 1000
p.exact_from = 20
# EMA decay for the evaluation shadow; 'none' disables it
ema = 0.99
# random-shift augmentation padding; 0 disables
augment.pad = 0
prototype_init = false
";

pub fn parse_run_spec(text: &str, overrides: &[(String, String)]) -> Result<RunSpec> {
    let mut kv = KvMap::parse(text)?;
    for (key, value) in overrides {
        kv.set(key, value);
    }

    let mut train = data_spec(&mut kv, "data.train")?;
    if train.images.is_none() && train.synth.is_none() {
        return Err(Error::Config(
            "config selects no training data (data.train.images/labels or data.train.synth)"
                .into(),
        ));
    }
    let mut val = data_spec(&mut kv, "data.val")?;
    if val.images.is_none() && val.synth.is_none() {
        // Fall back to evaluating on the training selection.
        val.images = train.images.clone();
        val.labels = train.labels.clone();
        val.synth = train.synth.clone();
        if val.take.is_none() {
            val.take = train.take;
        }
    }
    // Crop/concat preprocess both sets identically.
    let crop = kv.take_usize_opt("data.crop")?;
    let concat = match kv.take_opt("data.concat") {
        None => false,
        Some(text) => match text.as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Config(format!(
                    "data.concat wants true or false, got {other:?}"
                )))
            }
        },
    };
    train.crop = crop;
    train.concat = concat;
    val.crop = crop;
    val.concat = concat;

    let hidden = parse_widths(&kv.take("arch.hidden")?, "arch.hidden")?;
    let head = match kv.take_opt("arch.head") {
        Some(text) => Some(parse_widths(&text, "arch.head")?),
        None => None,
    };
    let arch = ArchSpec::Dense {
        hidden,
        residual_c: kv.take_f64_opt("arch.residual")?,
        head,
        negate: kv.take_bool("arch.negate")?,
    };

    let epochs = kv.take_usize("epochs")?;
    let epsilon = kv.take_f64("epsilon")?;
    let mut cfg = TrainConfig::new(arch, epochs, epsilon);
    cfg.batch_size = kv.take_usize("batch")?;
    cfg.seed = kv.take_u64("seed")?;
    cfg.loss = Loss::parse(&kv.take("loss")?)?;
    cfg.surrogate = SurrogateKind::parse(&kv.take("surrogate")?)?;
    cfg.p_start = kv.take_f64("p.start")?;
    cfg.p_end = kv.take_f64("p.end")?;
    cfg.p_exact_from_epoch = kv.take_usize("p.exact_from")?;
    cfg.prototype_init = kv.take_bool("prototype_init")?;

    let lr = kv.take_f64("lr")?;
    cfg.optimizer = match kv.take("optimizer")?.as_str() {
        "adamw" => OptimizerKind::AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        },
        "madam" => OptimizerKind::MAdam { lr, beta2: 0.999, eps: 1e-8, clip: 3.0 },
        other => {
            return Err(Error::Config(format!(
                "optimizer must be adamw or madam, got {other:?}"
            )))
        }
    };

    cfg.ema_decay = match kv.take("ema")?.as_str() {
        "none" => None,
        text => Some(text.parse().map_err(|_| {
            Error::Config(format!("ema wants a decay in (0,1) or 'none', got {text:?}"))
        })?),
    };

    cfg.augment = match kv.take_usize("augment.pad")? {
        0 => Augment::None,
        pad => Augment::Waug { pad, flip: false },
    };

    kv.finish()?;
    cfg.validate()?;
    Ok(RunSpec { train, val, cfg })
}

/// Pull one dataset selection out of the map. Crop/concat are shared keys
/// applied by the caller.
fn data_spec(kv: &mut KvMap, prefix: &str) -> Result<DataSpec> {
    Ok(DataSpec {
        images: kv.take_opt(&format!("{prefix}.images")).map(Into::into),
        labels: kv.take_opt(&format!("{prefix}.labels")).map(Into::into),
        synth: kv.take_opt(&format!("{prefix}.synth")),
        take: kv.take_usize_opt(&format!("{prefix}.take"))?,
        crop: None,
        concat: false,
    })
}

fn parse_widths(text: &str, key: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: bad width {:?}", part.trim())))
        })
        .collect()
}
