mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use candle_core::Tensor;
use common::mini_config;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wikistance::encoding::{EncodedInput, Variant};
use wikistance::model::{
    loss, EncoderConfig, EncoderSpec, Forward, LayerSelection, ModelError, ParamStore, Pooling, Precision,
    TransformerEncoder, WsBert,
};

fn inputs(model: &WsBert) -> Vec<EncodedInput> {
    let enc = model.input_encoder();
    [("text target", "target", "text"), ("target : text text", "text", "target : target")]
        .iter()
        .map(|(d, t, w)| enc.encode(d, t, w).unwrap())
        .collect()
}

fn logits(model: &WsBert, xs: &[EncodedInput]) -> Vec<Vec<f64>> {
    let refs: Vec<&EncodedInput> = xs.iter().collect();
    model.forward(&model.batch(&refs).unwrap(), &mut Forward::eval()).unwrap().rows().unwrap()
}

#[test]
fn checkpoint_round_trip() {
    let cfg = mini_config(Variant::Dual, 2, 32, 3, Precision::F32);
    let model = WsBert::new(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let back = WsBert::load(dir.path()).unwrap();
    assert_eq!(back.config(), model.config());
    let xs = inputs(&model);
    assert_eq!(logits(&model, &xs), logits(&back, &xs));
}

#[test]
fn seeded_construction_is_reproducible() {
    let cfg = mini_config(Variant::Single, 1, 16, 2, Precision::F32);
    let a = WsBert::new(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let b = WsBert::new(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let c = WsBert::new(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let xs = inputs(&a);
    assert_eq!(logits(&a, &xs), logits(&b, &xs));
    assert_ne!(logits(&a, &xs), logits(&c, &xs));
}

#[test]
fn head_width_is_sum_of_encoder_widths() {
    let mut cfg = mini_config(Variant::Dual, 1, 32, 2, Precision::F32);
    cfg.knowledge_encoder = Some(EncoderSpec::miniature(1, 16, 2));
    let model = WsBert::new(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(model.head_input_width(), 48);
    let single = WsBert::new(&mini_config(Variant::Single, 1, 32, 2, Precision::F32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(single.head_input_width(), 32);
}

#[test]
fn variant_and_label_errors() {
    let single = WsBert::new(&mini_config(Variant::Single, 1, 16, 2, Precision::F32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let xs = inputs(&single);
    let batch = single.batch(&[&xs[0]]).unwrap();
    assert!(matches!(single.forward_dual(&batch), Err(ModelError::VariantMismatch(_))));
    let out = single.forward_single(&batch).unwrap();
    assert!(matches!(loss(&out, &[2]), Err(ModelError::LabelOutOfRange { label: 2, num_labels: 2 })));
    assert!(matches!(loss(&out, &[0, 1]), Err(ModelError::ShapeMismatch(_))));

    let mut single = single;
    assert!(matches!(single.freeze_knowledge_encoder(LayerSelection::Top(1)), Err(ModelError::VariantMismatch(_))));

    let mut dual = WsBert::new(&mini_config(Variant::Dual, 2, 16, 2, Precision::F32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(matches!(dual.batch(&[&xs[0]]), Err(ModelError::VariantMismatch(_))));
    assert!(matches!(
        dual.freeze_knowledge_encoder(LayerSelection::Top(3)),
        Err(ModelError::InvalidLayerCount { requested: 3, depth: 2 })
    ));
    dual.freeze_knowledge_encoder(LayerSelection::Top(2)).unwrap();
    assert!(dual.trainable_vars().iter().all(|(n, _)| !n.starts_with("knowledge.embeddings.")));
    assert!(dual.trainable_vars().iter().any(|(n, _)| n.starts_with("knowledge.encoder.layer.0.")));
    dual.freeze_knowledge_encoder(LayerSelection::All).unwrap();
    assert_eq!(dual.trainable_vars().len(), dual.params().len());
}

#[test]
fn pair_encoder_is_never_frozen() {
    let model = WsBert::new(&mini_config(Variant::Dual, 2, 16, 2, Precision::F32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let trainable: Vec<String> = model.trainable_vars().into_iter().map(|(n, _)| n).collect();
    let pair_total = model.params().iter().filter(|(n, _)| n.starts_with("pair.")).count();
    assert_eq!(trainable.iter().filter(|n| n.starts_with("pair.")).count(), pair_total);
    assert!(trainable.iter().any(|n| n.starts_with("head.")));
}

const VOCAB_JSON: &str = r#"{
  "version": "1.0", "truncation": null, "padding": null, "added_tokens": [],
  "normalizer": null, "pre_tokenizer": {"type": "Whitespace"}, "post_processor": null, "decoder": null,
  "model": {"type": "WordLevel", "vocab": {"[PAD]":0,"[CLS]":1,"[SEP]":2,"[UNK]":3,"text":4,"target":5,":":6}, "unk_token": "[UNK]"}
}"#;

const CONFIG_JSON: &str = r#"{"model_type":"bert","vocab_size":7,"hidden_size":16,"num_hidden_layers":2,"num_attention_heads":2,
  "intermediate_size":32,"max_position_embeddings":64,"type_vocab_size":2,"layer_norm_eps":1e-12,"hidden_act":"gelu"}"#;

/// Writes a tiny checkpoint directory in the Hugging Face layout, with
/// `bert.`-prefixed tensor names. Returns the exported tensors.
fn write_pretrained(dir: &Path, pooler: bool) -> HashMap<String, Tensor> {
    fs::write(dir.join("config.json"), CONFIG_JSON).unwrap();
    fs::write(dir.join("tokenizer.json"), VOCAB_JSON).unwrap();
    let cfg = EncoderConfig::from_hf_config(&dir.join("config.json")).unwrap();
    let mut store = ParamStore::new(candle_core::DType::F32, candle_core::Device::Cpu);
    TransformerEncoder::new(&cfg, "", pooler, &mut store, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    let tensors: HashMap<String, Tensor> =
        store.iter().map(|(n, v)| (format!("bert.{n}"), v.as_tensor().copy().unwrap())).collect();
    candle_core::safetensors::save(&tensors, dir.join("model.safetensors")).unwrap();
    tensors
}

#[test]
fn pretrained_weights_and_tokenizer_are_used() {
    let ckpt = tempfile::tempdir().unwrap();
    let exported = write_pretrained(ckpt.path(), true);
    let mut cfg = mini_config(Variant::Dual, 1, 16, 2, Precision::F32);
    cfg.knowledge_encoder = Some(EncoderSpec::Pretrained { dir: ckpt.path().to_path_buf() });
    let model = WsBert::new(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();

    let w = model.params().get("knowledge.encoder.layer.1.output.dense.weight").unwrap();
    let want = &exported["bert.encoder.layer.1.output.dense.weight"];
    assert_eq!(w.as_tensor().to_vec2::<f32>().unwrap(), want.to_vec2::<f32>().unwrap());
    assert_eq!(model.knowledge_encoder().unwrap().pooling(), Pooling::Pooler);

    let enc = model.input_encoder();
    let x = enc.encode("some tweet", "target", "text : target").unwrap();
    assert_eq!(x.knowledge_stream().unwrap().ids, vec![1, 4, 6, 5, 2]);

    // the saved run is self-contained
    let out = tempfile::tempdir().unwrap();
    model.save(out.path()).unwrap();
    drop(ckpt);
    let back = WsBert::load(out.path()).unwrap();
    let xs = vec![x];
    assert_eq!(logits(&model, &xs), logits(&back, &xs));
}

#[test]
fn checkpoint_without_pooler_uses_cls_state() {
    let ckpt = tempfile::tempdir().unwrap();
    write_pretrained(ckpt.path(), false);
    let mut cfg = mini_config(Variant::Single, 1, 16, 2, Precision::F32);
    cfg.pair_encoder = EncoderSpec::Pretrained { dir: ckpt.path().to_path_buf() };
    let model = WsBert::new(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(model.pair_encoder().pooling(), Pooling::ClsState);
    assert!(model.params().get("pair.pooler.dense.weight").is_none());
}

#[test]
fn shape_mismatch_in_checkpoint_is_reported() {
    let ckpt = tempfile::tempdir().unwrap();
    write_pretrained(ckpt.path(), true);
    let bigger = CONFIG_JSON.replace("\"intermediate_size\":32", "\"intermediate_size\":48");
    fs::write(ckpt.path().join("config.json"), bigger).unwrap();
    let mut cfg = mini_config(Variant::Single, 1, 16, 2, Precision::F32);
    cfg.pair_encoder = EncoderSpec::Pretrained { dir: ckpt.path().to_path_buf() };
    assert!(matches!(WsBert::new(&cfg, &mut ChaCha8Rng::seed_from_u64(0)), Err(ModelError::ShapeMismatch(_))));
}
