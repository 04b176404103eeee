//! Optimization loops: contrastive pretraining, linear probes and end-to-end
//! fine-tuning, with the class-imbalance helpers they share.

mod finetune;
mod optim;
mod pretrain;
mod probe;
mod sampling;

pub use finetune::{finetune, Classifier, FinetuneConfig};
pub use optim::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use pretrain::{pretrain_ssl, pretraining_spans, PretrainConfig, SslTrainer, StepMetrics, WindowSampler};
pub use probe::{accuracy, argmax_rows, embed, fit_probe, segment_labels, stack_segments, train_probe, LinearProbe, ProbeConfig};
pub use sampling::{
    class_balanced_weights, class_counts, epoch_order, mixup, mixup_with, BalancedSampler, ClassWeights, SamplingMode, DEFAULT_BETA,
    DEFAULT_MIXUP_ALPHA,
};
