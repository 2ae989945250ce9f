//! Mini-batch training: seeded shuffling, per-batch gradient accumulation on
//! one tape, Adam updates, JSON-line epoch logs, and best-dev checkpointing.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{CharGraph, LabelGrid, Sentence, TagMode};
use crate::decode::{decode_gold, ExtractionResult};
use crate::eval::{score, Metrics};
use crate::io::{self, CheckpointError, VectorTable, VectorsError};
use crate::model::{GridIndex, Model};
use crate::numkit::{Adam, SplitMix64, Tape, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(
        "epoch {epoch} batch {batch}: loss became {loss}; the run is \
         unrecoverable (bad data or a diverged step)"
    )]
    NonFinite { epoch: usize, batch: usize, loss: f32 },
    #[error(transparent)]
    Vectors(#[from] VectorsError),
    #[error("saving checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

/// One JSON line per epoch. `dev` is present on evaluation epochs.
#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<Metrics>,
}

pub struct Trainer<'a> {
    pub train_set: &'a [Sentence],
    pub dev_set: &'a [Sentence],
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate the dev set every this many epochs (0 disables).
    pub eval_every: usize,
    /// Checkpoint target: written immediately when training starts (so an
    /// epochs=0 run still leaves the initialized model behind), then
    /// overwritten with the best-dev-pair-F1 model — or, when no dev
    /// evaluation ever runs, with the final model.
    pub checkpoint: Option<&'a Path>,
    /// Frozen character vectors, required iff the encoder is file-backed.
    pub vectors: Option<&'a VectorTable>,
}

impl Trainer<'_> {
    /// Runs the loop, mutating the model in place, and returns the per-epoch
    /// logs. Deterministic: same seed, config, and corpus give bitwise-equal
    /// f32 losses.
    pub fn run(&self, model: &mut Model<f32>) -> Result<Vec<EpochLog>, TrainError> {
        let prepared: Vec<Prepared> = self
            .train_set
            .iter()
            .map(|s| Prepared::new(s, model, self.vectors))
            .collect::<Result<_, _>>()?;
        let mut opt = Adam::new(model.config.lr, &model.store);
        let mut rng = SplitMix64::new(self.seed);
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let batch = model.config.batch_size;

        if let Some(path) = self.checkpoint {
            io::save(path, model)?;
        }
        let mut best_pair_f1 = f64::NEG_INFINITY;
        let mut logs = Vec::with_capacity(self.epochs);
        for epoch in 1..=self.epochs {
            rng.shuffle(&mut order);
            let mut total = 0.0f32;
            for (b, chunk) in order.chunks(batch).enumerate() {
                let loss = batch_step(model, self.train_set, &prepared, chunk);
                if !loss.is_finite() {
                    return Err(TrainError::NonFinite { epoch, batch: b, loss });
                }
                opt.step(&mut model.store);
                model.store.clear_grads();
                total += loss * chunk.len() as f32;
            }
            let loss = if prepared.is_empty() { 0.0 } else { total / prepared.len() as f32 };

            let evaluate_now = self.eval_every > 0
                && !self.dev_set.is_empty()
                && (epoch % self.eval_every == 0 || epoch == self.epochs);
            let dev = if evaluate_now {
                Some(evaluate(model, self.dev_set, self.vectors)?)
            } else {
                None
            };
            if let Some(metrics) = &dev {
                if metrics.pair.f1 > best_pair_f1 {
                    best_pair_f1 = metrics.pair.f1;
                    if let Some(path) = self.checkpoint {
                        io::save(path, model)?;
                    }
                }
            }
            logs.push(EpochLog { epoch, loss, dev });
        }
        // Without a dev set there is no "best" to track; keep the final model.
        if best_pair_f1 == f64::NEG_INFINITY && self.epochs > 0 {
            if let Some(path) = self.checkpoint {
                io::save(path, model)?;
            }
        }
        Ok(logs)
    }
}

/// Everything about one training sentence that never changes across epochs.
struct Prepared {
    graph: CharGraph,
    ix: GridIndex,
    gold: LabelGrid,
    vectors: Option<Tensor<f32>>,
}

impl Prepared {
    fn new(
        s: &Sentence,
        model: &Model<f32>,
        table: Option<&VectorTable>,
    ) -> Result<Prepared, VectorsError> {
        let vectors = match table {
            Some(t) => Some(t.for_sentence(s, model.config.d_h)?.clone()),
            None => None,
        };
        Ok(Prepared {
            graph: CharGraph::build(s, &model.vocabs),
            ix: GridIndex::new(s, model.config.mode),
            gold: LabelGrid::encode(s, model.config.mode),
            vectors,
        })
    }
}

/// Forward + backward over one shuffled chunk; gradients land in the store,
/// the mean per-sentence loss comes back.
fn batch_step(
    model: &mut Model<f32>,
    sentences: &[Sentence],
    prepared: &[Prepared],
    chunk: &[usize],
) -> f32 {
    let mut tape = Tape::new();
    let binding = model.bind(&mut tape);
    let mut sum = None;
    for &k in chunk {
        let p = &prepared[k];
        let fwd = model.forward(
            &mut tape,
            &binding,
            &sentences[k],
            &p.graph,
            &p.ix,
            p.vectors.as_ref(),
        );
        let loss = model.sentence_loss(&mut tape, &fwd, &p.ix, &p.gold);
        sum = Some(match sum {
            None => loss,
            Some(acc) => tape.add(acc, loss),
        });
    }
    let sum = sum.expect("batch is never empty");
    let mean = tape.scale(sum, 1.0 / chunk.len() as f32);
    let value = tape.value(mean).data()[0];
    tape.backward(mean);
    model.harvest_grads(&tape, &binding);
    value
}

/// Micro-averaged metrics of the model's predictions against gold.
pub fn evaluate(
    model: &Model<f32>,
    sentences: &[Sentence],
    vectors: Option<&VectorTable>,
) -> Result<Metrics, VectorsError> {
    let mut preds = Vec::with_capacity(sentences.len());
    let mut golds = Vec::with_capacity(sentences.len());
    for s in sentences {
        let v = match vectors {
            Some(t) => Some(t.for_sentence(s, model.config.d_h)?.clone()),
            None => None,
        };
        preds.push(model.predict(s, v.as_ref()));
        golds.push(ExtractionResult::from_gold(s));
    }
    Ok(score(&preds, &golds))
}

/// Metrics of decoding the gold grids themselves — the model bypass used to
/// sanity-check the tagging scheme end to end (always perfect by round trip).
pub fn evaluate_gold_oracle(sentences: &[Sentence], mode: TagMode) -> Metrics {
    let preds: Vec<ExtractionResult> =
        sentences.iter().map(|s| decode_gold(s, mode)).collect();
    let golds: Vec<ExtractionResult> =
        sentences.iter().map(ExtractionResult::from_gold).collect();
    score(&preds, &golds)
}

// ── Tests ────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, SynthParams};
    use crate::model::{ModelConfig, Preset};

    fn tiny_setup(lr: f64) -> (Model<f32>, Vec<Sentence>) {
        let sentences = generate(42, 8, &SynthParams::simple());
        let vocabs = crate::corpus::Vocabs::build(&sentences);
        let mut config = ModelConfig::default();
        config.d_h = 8;
        config.d_r = 4;
        config.d_p = 4;
        config.d_beta = 4;
        config.d_g = 8;
        config.l_layers = 1;
        config.t_rounds = 1;
        config.batch_size = 4;
        config.lr = lr;
        Preset::Gcgts.apply(&mut config);
        (Model::new(config, vocabs, 3), sentences)
    }

    #[test]
    fn zero_epochs_trains_nothing_but_saves_the_init() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("init.gcgts");
        let (mut model, sentences) = tiny_setup(5e-5);
        let before: Vec<Vec<u32>> = model
            .store
            .iter()
            .map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        let trainer = Trainer {
            train_set: &sentences,
            dev_set: &[],
            epochs: 0,
            seed: 1,
            eval_every: 1,
            checkpoint: Some(&path),
            vectors: None,
        };
        let logs = trainer.run(&mut model).unwrap();
        assert!(logs.is_empty());
        let after: Vec<Vec<u32>> = model
            .store
            .iter()
            .map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(before, after, "zero epochs must not touch parameters");
        let restored = io::load(&path).unwrap();
        let restored_bits: Vec<Vec<u32>> = restored
            .store
            .iter()
            .map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(before, restored_bits);
    }

    #[test]
    fn same_seed_gives_bitwise_identical_loss_logs() {
        let run = || {
            let (mut model, sentences) = tiny_setup(5e-5);
            let trainer = Trainer {
                train_set: &sentences,
                dev_set: &sentences,
                epochs: 3,
                seed: 9,
                eval_every: 2,
                checkpoint: None,
                vectors: None,
            };
            trainer
                .run(&mut model)
                .unwrap()
                .iter()
                .map(|l| serde_json::to_string(l).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_goes_down_on_a_tiny_corpus() {
        let (mut model, sentences) = tiny_setup(1e-2);
        let trainer = Trainer {
            train_set: &sentences,
            dev_set: &[],
            epochs: 8,
            seed: 4,
            eval_every: 0,
            checkpoint: None,
            vectors: None,
        };
        let logs = trainer.run(&mut model).unwrap();
        assert!(
            logs.last().unwrap().loss < logs.first().unwrap().loss,
            "loss failed to drop: first {} last {}",
            logs.first().unwrap().loss,
            logs.last().unwrap().loss
        );
    }

    #[test]
    fn dev_metrics_appear_only_on_evaluation_epochs() {
        let (mut model, sentences) = tiny_setup(5e-5);
        let trainer = Trainer {
            train_set: &sentences,
            dev_set: &sentences,
            epochs: 5,
            seed: 2,
            eval_every: 2,
            checkpoint: None,
            vectors: None,
        };
        let logs = trainer.run(&mut model).unwrap();
        let evaluated: Vec<usize> =
            logs.iter().filter(|l| l.dev.is_some()).map(|l| l.epoch).collect();
        // Every second epoch, plus the final one.
        assert_eq!(evaluated, vec![2, 4, 5]);
    }

    #[test]
    fn nan_parameters_abort_with_a_diagnostic() {
        let (mut model, sentences) = tiny_setup(5e-5);
        let k = model.store.index_of("embed.char").unwrap();
        model.store.tensor_mut(k).data_mut()[40] = f32::NAN;
        let trainer = Trainer {
            train_set: &sentences,
            dev_set: &[],
            epochs: 1,
            seed: 1,
            eval_every: 0,
            checkpoint: None,
            vectors: None,
        };
        let err = trainer.run(&mut model).unwrap_err();
        assert!(matches!(err, TrainError::NonFinite { epoch: 1, .. }), "got {err}");
    }

    #[test]
    fn gold_oracle_evaluation_is_perfect() {
        let sentences = generate(7, 40, &SynthParams::mixed());
        for mode in [TagMode::FirstChar, TagMode::AllChar] {
            let m = evaluate_gold_oracle(&sentences, mode);
            assert_eq!(m.pair.f1, 1.0);
            assert_eq!(m.aspect.f1, 1.0);
            assert_eq!(m.opinion.f1, 1.0);
        }
    }

    #[test]
    fn log_lines_serialize_cleanly() {
        let log = EpochLog { epoch: 3, loss: 0.25, dev: None };
        assert_eq!(serde_json::to_string(&log).unwrap(), r#"{"epoch":3,"loss":0.25}"#);
    }
}
