#include "dmtf/model.hpp"

#include <cmath>

#include "dmtf/errors.hpp"
#include "dmtf/json_util.hpp"

namespace dmtf::net {

using nd::Tensor;

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return nd::add_rowvec(nd::matmul(x, w), b);
}

Tensor pre_norm(const Tensor& x, const Tensor& g, const Tensor& b) {
  return nd::layer_norm(x, g, b, 1e-5);
}

}  // namespace

void ModelConfig::validate() const {
  if (d_m <= 0 || heads <= 0) throw ConfigError("model: d_m and heads must be positive");
  if (d_m % heads != 0) throw ConfigError("model: d_m must be divisible by heads");
  if (enc_layers < 0 || dec_layers <= 0) throw ConfigError("model: bad layer counts");
  if (num_targets < 1) throw ConfigError("model: num_targets must be >= 1");
  if (patch <= 0 || image_h % patch != 0 || image_w % patch != 0) {
    throw ConfigError("model: image dims must be divisible by the patch size");
  }
  if (image_c <= 0 || bands <= 0 || frames <= 0) throw ConfigError("model: bad input dims");
  if (ffn_hidden <= 0 || gru_hidden <= 0 || gru_input <= 0 || cnn_channels <= 0 || delta_dim <= 0) {
    throw ConfigError("model: bad hidden sizes");
  }
  if (actions < 2) throw ConfigError("model: need at least two actions");
  const int set = (no_pe ? 1 : 0) + (no_mti ? 1 : 0) + (no_ensa ? 1 : 0);
  if (set > 1) throw ConfigError("model: contradictory ablation flags (at most one)");
  if (no_pe && (image_h % 16 != 0 || image_w % 16 != 0)) {
    throw ConfigError("model: the no_pe audio encoder needs image dims divisible by 16");
  }
}

std::string ModelConfig::ablation_name() const {
  if (no_pe) return "no_pe";
  if (no_mti) return "no_mti";
  if (no_ensa) return "no_ensa";
  return "none";
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"d_m", d_m},
                        {"heads", heads},
                        {"enc_layers", enc_layers},
                        {"dec_layers", dec_layers},
                        {"num_targets", effective_targets()},
                        {"patch", patch},
                        {"ffn_hidden", ffn_hidden},
                        {"gru_hidden", gru_hidden},
                        {"gru_input", gru_input},
                        {"cnn_channels", cnn_channels},
                        {"delta_dim", delta_dim},
                        {"pointgoal", pointgoal},
                        {"no_pe", no_pe},
                        {"no_mti", no_mti},
                        {"no_ensa", no_ensa},
                        {"image_h", image_h},
                        {"image_w", image_w},
                        {"image_c", image_c},
                        {"bands", bands},
                        {"frames", frames},
                        {"actions", actions}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  const std::string ctx = "model config";
  reject_unknown_keys<ConfigError>(
      j, {"d_m", "heads", "enc_layers", "dec_layers", "num_targets", "patch", "ffn_hidden",
          "gru_hidden", "gru_input", "cnn_channels", "delta_dim", "pointgoal", "no_pe", "no_mti",
          "no_ensa", "image_h", "image_w", "image_c", "bands", "frames", "actions"},
      ctx);
  ModelConfig c;
  c.d_m = get_or<ConfigError, int>(j, "d_m", c.d_m, ctx);
  c.heads = get_or<ConfigError, int>(j, "heads", c.heads, ctx);
  c.enc_layers = get_or<ConfigError, int>(j, "enc_layers", c.enc_layers, ctx);
  c.dec_layers = get_or<ConfigError, int>(j, "dec_layers", c.dec_layers, ctx);
  c.num_targets = get_or<ConfigError, int>(j, "num_targets", c.num_targets, ctx);
  c.patch = get_or<ConfigError, int>(j, "patch", c.patch, ctx);
  c.ffn_hidden = get_or<ConfigError, int>(j, "ffn_hidden", c.ffn_hidden, ctx);
  c.gru_hidden = get_or<ConfigError, int>(j, "gru_hidden", c.gru_hidden, ctx);
  c.gru_input = get_or<ConfigError, int>(j, "gru_input", c.gru_input, ctx);
  c.cnn_channels = get_or<ConfigError, int>(j, "cnn_channels", c.cnn_channels, ctx);
  c.delta_dim = get_or<ConfigError, int>(j, "delta_dim", c.delta_dim, ctx);
  c.pointgoal = get_or<ConfigError, bool>(j, "pointgoal", c.pointgoal, ctx);
  c.no_pe = get_or<ConfigError, bool>(j, "no_pe", c.no_pe, ctx);
  c.no_mti = get_or<ConfigError, bool>(j, "no_mti", c.no_mti, ctx);
  c.no_ensa = get_or<ConfigError, bool>(j, "no_ensa", c.no_ensa, ctx);
  c.image_h = get_or<ConfigError, int>(j, "image_h", c.image_h, ctx);
  c.image_w = get_or<ConfigError, int>(j, "image_w", c.image_w, ctx);
  c.image_c = get_or<ConfigError, int>(j, "image_c", c.image_c, ctx);
  c.bands = get_or<ConfigError, int>(j, "bands", c.bands, ctx);
  c.frames = get_or<ConfigError, int>(j, "frames", c.frames, ctx);
  c.actions = get_or<ConfigError, int>(j, "actions", c.actions, ctx);
  c.validate();
  return c;
}

// ---- building blocks --------------------------------------------------------

std::vector<double> prep_audio(const std::vector<double>& spec, int bands, int frames,
                               int target_h, int target_w, int target_c) {
  if (bands <= 0 || frames <= 0 || target_h <= 0 || target_w <= 0 || target_c <= 0) {
    throw ShapeError("prep_audio: zero-extent input");
  }
  if (spec.size() != static_cast<size_t>(bands) * frames * 2) {
    throw ShapeError("prep_audio: spectrogram buffer does not match bands x frames x 2");
  }
  // map a target axis index onto the source axis: cyclic tile when the source
  // is short, center crop when it is long
  const auto map_axis = [](int target_idx, int target_n, int source_n) {
    if (source_n >= target_n) {
      return target_idx + (source_n - target_n) / 2;
    }
    return target_idx % source_n;
  };
  std::vector<double> out(static_cast<size_t>(target_h) * target_w * target_c, 0.0);
  for (int i = 0; i < target_h; ++i) {
    const int b = map_axis(i, target_h, bands);
    for (int j = 0; j < target_w; ++j) {
      const int t = map_axis(j, target_w, frames);
      double* px = out.data() + (static_cast<size_t>(i) * target_w + j) * target_c;
      const double* src = spec.data() + (static_cast<size_t>(b) * frames + t) * 2;
      for (int ch = 0; ch < target_c && ch < 2; ++ch) px[ch] = src[ch];
    }
  }
  return out;
}

Tensor patch_embed(const Tensor& image, int patch, const Tensor& w, const Tensor& b,
                   const Tensor* pos) {
  Tensor tokens = nd::add_rowvec(nd::matmul(nd::patchify(image, patch), w), b);
  if (pos != nullptr) tokens = nd::add(tokens, *pos);
  return tokens;
}

FusedSequence fuse_concat(const Tensor& visual, const Tensor& audio, const Tensor& type_visual,
                          const Tensor& type_audio) {
  FusedSequence out;
  if (!visual.defined() && !audio.defined()) throw ShapeError("fuse_concat: no tokens");
  std::vector<Tensor> parts;
  if (visual.defined()) {
    if (visual.cols() != type_visual.shape()[0]) throw ShapeError("fuse_concat: d_m mismatch");
    parts.push_back(nd::add_rowvec(visual, type_visual));
    out.boundary = visual.rows();
  }
  if (audio.defined()) {
    if (visual.defined() && audio.cols() != visual.cols()) {
      throw ShapeError("fuse_concat: d_m mismatch between modalities");
    }
    parts.push_back(nd::add_rowvec(audio, type_audio));
  }
  out.tokens = parts.size() == 1 ? parts[0] : nd::concat_rows(parts);
  return out;
}

std::pair<Tensor, Tensor> dmtf_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.cols() != k.cols()) throw ShapeError("dmtf_attention: query/key width mismatch");
  if (k.rows() != v.rows()) throw ShapeError("dmtf_attention: key/value length mismatch");
  const int dk = q.cols();
  if (dk <= 0) throw ConfigError("dmtf_attention: d_k must be positive");
  Tensor scores = nd::scale(nd::matmul(q, nd::transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
  Tensor weights = nd::softmax_lastdim(scores);
  return {nd::matmul(weights, v), weights};
}

Tensor gru_step(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
  Tensor z = nd::sigmoid(nd::add_rowvec(nd::add(nd::matmul(x, p.wz), nd::matmul(h_prev, p.uz)), p.bz));
  Tensor r = nd::sigmoid(nd::add_rowvec(nd::add(nd::matmul(x, p.wr), nd::matmul(h_prev, p.ur)), p.br));
  Tensor n = nd::tanh_t(
      nd::add_rowvec(nd::add(nd::matmul(x, p.wn), nd::matmul(nd::mul(r, h_prev), p.un)), p.bn));
  Tensor keep = nd::add_scalar(nd::neg(z), 1.0);  // 1 - z
  return nd::add(nd::mul(z, n), nd::mul(keep, h_prev));
}

Tensor pool_slots(const Tensor& slots) { return nd::mean_rows(slots); }

std::pair<Tensor, std::vector<Tensor>> multi_head_dmtf(const Tensor& q_in, const Tensor& kv_in,
                                                       const AttnParams& p) {
  if (p.wq.empty() || p.wq.size() != p.wk.size() || p.wq.size() != p.wv.size()) {
    throw ShapeError("multi_head_dmtf: inconsistent per-head projections");
  }
  std::vector<Tensor> outs;
  std::vector<Tensor> weights;
  for (size_t h = 0; h < p.wq.size(); ++h) {
    auto [out, w] = dmtf_attention(nd::matmul(q_in, p.wq[h]), nd::matmul(kv_in, p.wk[h]),
                                   nd::matmul(kv_in, p.wv[h]));
    outs.push_back(out);
    weights.push_back(w);
  }
  Tensor concat = outs.size() == 1 ? outs[0] : nd::concat_cols(outs);
  return {nd::matmul(concat, p.wo), std::move(weights)};
}

Tensor encoder_layer(const Tensor& tokens, const EncLayerParams& p,
                     std::vector<Tensor>* attn_weights) {
  Tensor normed = pre_norm(tokens, p.ln1.g, p.ln1.b);
  auto [attn_out, weights] = multi_head_dmtf(normed, normed, p.attn);
  if (attn_weights != nullptr) {
    attn_weights->insert(attn_weights->end(), weights.begin(), weights.end());
  }
  Tensor x = nd::add(tokens, attn_out);
  Tensor ffin = pre_norm(x, p.ln2.g, p.ln2.b);
  Tensor hidden = nd::relu(linear(ffin, p.ffn.w1, p.ffn.b1));
  return nd::add(x, linear(hidden, p.ffn.w2, p.ffn.b2));
}

std::pair<double, double> modality_importance(const std::vector<std::vector<double>>& cross_weights,
                                              int columns, int boundary) {
  if (cross_weights.empty()) throw DataError("modality_importance: no attention weights captured");
  if (boundary < 0 || boundary > columns) throw DataError("modality_importance: bad boundary");
  double visual_mass = 0.0;
  double total_mass = 0.0;
  for (const std::vector<double>& w : cross_weights) {
    const size_t rows = w.size() / columns;
    for (size_t i = 0; i < rows; ++i) {
      const double* row = w.data() + i * columns;
      for (int j = 0; j < columns; ++j) {
        total_mass += row[j];
        if (j < boundary) visual_mass += row[j];
      }
    }
  }
  if (total_mass <= 0.0) throw DataError("modality_importance: zero attention mass");
  const double w_visual = visual_mass / total_mass;
  return {w_visual, 1.0 - w_visual};  // sums to 1 exactly
}

// ---- model ------------------------------------------------------------------

Tensor Model::add_linear(const std::string& name, int rows, int cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<double> d(static_cast<size_t>(rows) * cols);
  for (double& v : d) v = nd::snap_f32(rng.uniform(-bound, bound));
  Tensor t = Tensor::from_data({rows, cols}, std::move(d));
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

Tensor Model::add_bias(const std::string& name, int n) {
  Tensor t = Tensor::zeros({n});
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

Tensor Model::add_embedding(const std::string& name, nd::Shape shape, Rng& rng) {
  std::vector<double> d(static_cast<size_t>(nd::shape_size(shape)));
  for (double& v : d) v = nd::snap_f32(rng.uniform(-0.02, 0.02));
  Tensor t = Tensor::from_data(std::move(shape), std::move(d));
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

LayerNormParams Model::add_layer_norm(const std::string& prefix) {
  LayerNormParams ln;
  ln.g = Tensor::full({config_.d_m}, 1.0);
  ln.g.set_requires_grad(true);
  params_.push_back({prefix + ".g", ln.g});
  ln.b = add_bias(prefix + ".b", config_.d_m);
  return ln;
}

AttnParams Model::add_attention(const std::string& prefix, Rng& rng) {
  AttnParams p;
  const int dk = config_.head_dim();
  for (int h = 0; h < config_.heads; ++h) {
    p.wq.push_back(add_linear(prefix + ".wq." + std::to_string(h), config_.d_m, dk, rng));
    p.wk.push_back(add_linear(prefix + ".wk." + std::to_string(h), config_.d_m, dk, rng));
    p.wv.push_back(add_linear(prefix + ".wv." + std::to_string(h), config_.d_m, dk, rng));
  }
  p.wo = add_linear(prefix + ".wo", config_.heads * dk, config_.d_m, rng);
  return p;
}

FfnParams Model::add_ffn(const std::string& prefix, Rng& rng) {
  FfnParams f;
  f.w1 = add_linear(prefix + ".w1", config_.d_m, config_.ffn_hidden, rng);
  f.b1 = add_bias(prefix + ".b1", config_.ffn_hidden);
  f.w2 = add_linear(prefix + ".w2", config_.ffn_hidden, config_.d_m, rng);
  f.b2 = add_bias(prefix + ".b2", config_.d_m);
  return f;
}

Model::Model(ModelConfig config, uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x6d6f64ULL));
  const int patch_dim = config_.patch * config_.patch * config_.image_c;
  const int n_patches = config_.patches();

  vis_patch_w_ = add_linear("vis_patch.w", patch_dim, config_.d_m, rng);
  vis_patch_b_ = add_bias("vis_patch.b", config_.d_m);
  vis_pos_ = add_embedding("vis_pos", {n_patches, config_.d_m}, rng);

  if (config_.no_pe) {
    // strided conv encoder (kernel = stride = 4, twice); tokens get no
    // positional encoding on this path
    cnn_w1_ = add_linear("aud_cnn.w1", 4 * 4 * config_.image_c, config_.cnn_channels, rng);
    cnn_b1_ = add_bias("aud_cnn.b1", config_.cnn_channels);
    cnn_w2_ = add_linear("aud_cnn.w2", 4 * 4 * config_.cnn_channels, config_.d_m, rng);
    cnn_b2_ = add_bias("aud_cnn.b2", config_.d_m);
  } else {
    aud_patch_w_ = add_linear("aud_patch.w", patch_dim, config_.d_m, rng);
    aud_patch_b_ = add_bias("aud_patch.b", config_.d_m);
    aud_pos_ = add_embedding("aud_pos", {n_patches, config_.d_m}, rng);
  }

  type_vis_ = add_embedding("fuse.type_vis", {config_.d_m}, rng);
  type_aud_ = add_embedding("fuse.type_aud", {config_.d_m}, rng);

  if (!config_.no_ensa) {
    for (int l = 0; l < config_.enc_layers; ++l) {
      const std::string pv = "enc_vis." + std::to_string(l);
      EncLayerParams layer;
      layer.ln1 = add_layer_norm(pv + ".ln1");
      layer.attn = add_attention(pv + ".attn", rng);
      layer.ln2 = add_layer_norm(pv + ".ln2");
      layer.ffn = add_ffn(pv + ".ffn", rng);
      enc_vis_.push_back(layer);
    }
    for (int l = 0; l < config_.enc_layers; ++l) {
      const std::string pa = "enc_aud." + std::to_string(l);
      EncLayerParams layer;
      layer.ln1 = add_layer_norm(pa + ".ln1");
      layer.attn = add_attention(pa + ".attn", rng);
      layer.ln2 = add_layer_norm(pa + ".ln2");
      layer.ffn = add_ffn(pa + ".ffn", rng);
      enc_aud_.push_back(layer);
    }
  }

  queries_ = add_embedding("queries", {config_.effective_targets(), config_.d_m}, rng);

  for (int l = 0; l < config_.dec_layers; ++l) {
    const std::string pd = "dec." + std::to_string(l);
    DecLayerParams layer;
    layer.ln1 = add_layer_norm(pd + ".ln1");
    layer.self_attn = add_attention(pd + ".self", rng);
    layer.ln2 = add_layer_norm(pd + ".ln2");
    layer.cross_attn = add_attention(pd + ".cross", rng);
    layer.ln3 = add_layer_norm(pd + ".ln3");
    layer.ffn = add_ffn(pd + ".ffn", rng);
    dec_.push_back(layer);
  }
  dec_ln_f_ = add_layer_norm("dec.ln_f");

  class_w_ = add_linear("heads.class.w", config_.d_m, config_.num_classes(), rng);
  class_b_ = add_bias("heads.class.b", config_.num_classes());
  attn_w_ = add_linear("heads.attn.w", config_.d_m, 2, rng);
  attn_b_ = add_bias("heads.attn.b", 2);

  int pool_in = config_.d_m;
  if (config_.pointgoal) {
    delta_w_ = add_linear("delta.w", 2, config_.delta_dim, rng);
    delta_b_ = add_bias("delta.b", config_.delta_dim);
    pool_in += config_.delta_dim;
  }
  pool_w_ = add_linear("pool.w", pool_in, config_.gru_input, rng);
  pool_b_ = add_bias("pool.b", config_.gru_input);

  gru_.wz = add_linear("gru.wz", config_.gru_input, config_.gru_hidden, rng);
  gru_.uz = add_linear("gru.uz", config_.gru_hidden, config_.gru_hidden, rng);
  gru_.bz = add_bias("gru.bz", config_.gru_hidden);
  gru_.wr = add_linear("gru.wr", config_.gru_input, config_.gru_hidden, rng);
  gru_.ur = add_linear("gru.ur", config_.gru_hidden, config_.gru_hidden, rng);
  gru_.br = add_bias("gru.br", config_.gru_hidden);
  gru_.wn = add_linear("gru.wn", config_.gru_input, config_.gru_hidden, rng);
  gru_.un = add_linear("gru.un", config_.gru_hidden, config_.gru_hidden, rng);
  gru_.bn = add_bias("gru.bn", config_.gru_hidden);

  actor_w_ = add_linear("actor.w", config_.gru_hidden, config_.actions, rng);
  actor_b_ = add_bias("actor.b", config_.actions);
  critic_w_ = add_linear("critic.w", config_.gru_hidden, 1, rng);
  critic_b_ = add_bias("critic.b", 1);
}

int64_t Model::param_count() const {
  int64_t n = 0;
  for (const nd::NamedParam& p : params_) n += p.value.size();
  return n;
}

void Model::zero_grad() {
  for (nd::NamedParam& p : params_) p.value.zero_grad();
}

Tensor Model::multi_head(const Tensor& q_in, const Tensor& kv_in, const AttnParams& p,
                         AttnStage stage, int layer, ForwardAux* aux, bool capture) const {
  auto [out, weights] = multi_head_dmtf(q_in, kv_in, p);
  for (size_t h = 0; h < weights.size(); ++h) {
    if (capture && aux != nullptr) {
      aux->attention.push_back({stage, layer, static_cast<int>(h), weights[h].rows(),
                                weights[h].cols(), weights[h].data()});
    }
    if (stage == AttnStage::DecoderCross && aux != nullptr) {
      aux->cross_weights.push_back(weights[h].data());
      aux->cross_cols = weights[h].cols();
    }
  }
  return out;
}

Tensor Model::encoder_stack(Tensor tokens, const std::vector<EncLayerParams>& layers,
                            AttnStage stage, ForwardAux* aux, bool capture) const {
  for (size_t l = 0; l < layers.size(); ++l) {
    std::vector<Tensor> weights;
    tokens = encoder_layer(tokens, layers[l], capture && aux != nullptr ? &weights : nullptr);
    if (capture && aux != nullptr) {
      for (size_t h = 0; h < weights.size(); ++h) {
        aux->attention.push_back({stage, static_cast<int>(l), static_cast<int>(h),
                                  weights[h].rows(), weights[h].cols(), weights[h].data()});
      }
    }
  }
  return tokens;
}

Tensor Model::audio_tokens(const Tensor& image) const {
  if (!config_.no_pe) {
    return patch_embed(image, config_.patch, aud_patch_w_, aud_patch_b_, &aud_pos_);
  }
  // stride-4 conv twice; kernel == stride makes each conv a per-patch linear map
  Tensor t1 = nd::relu(nd::add_rowvec(nd::matmul(nd::patchify(image, 4), cnn_w1_), cnn_b1_));
  const int h1 = config_.image_h / 4, w1 = config_.image_w / 4;
  Tensor img1 = nd::reshape(t1, {h1, w1, config_.cnn_channels});
  return nd::relu(nd::add_rowvec(nd::matmul(nd::patchify(img1, 4), cnn_w2_), cnn_b2_));
}

ForwardResult Model::forward(const env::Observation& obs, const Tensor& h_prev,
                             bool capture_attention) const {
  if (obs.visual.size() != static_cast<size_t>(config_.image_h) * config_.image_w * config_.image_c) {
    throw ShapeError("forward: visual observation does not match the configured dims");
  }
  if (obs.audio.size() != static_cast<size_t>(config_.bands) * config_.frames * 2) {
    throw ShapeError("forward: audio observation does not match the configured dims");
  }
  if (h_prev.shape() != nd::Shape{1, config_.gru_hidden}) {
    throw ShapeError("forward: recurrent state must be [1 x gru_hidden]");
  }
  if (config_.pointgoal && !obs.has_delta) {
    throw ShapeError("forward: pointgoal model needs a displacement observation");
  }

  ForwardResult out;
  ForwardAux& aux = out.aux;

  Tensor vis_img = Tensor::from_data({config_.image_h, config_.image_w, config_.image_c}, obs.visual);
  Tensor aud_img = Tensor::from_data(
      {config_.image_h, config_.image_w, config_.image_c},
      prep_audio(obs.audio, config_.bands, config_.frames, config_.image_h, config_.image_w,
                 config_.image_c));

  Tensor vis_tokens = patch_embed(vis_img, config_.patch, vis_patch_w_, vis_patch_b_, &vis_pos_);
  Tensor aud_tokens = audio_tokens(aud_img);

  if (!config_.no_ensa) {
    vis_tokens = encoder_stack(vis_tokens, enc_vis_, AttnStage::EncoderVisual, &aux,
                               capture_attention);
    aud_tokens = encoder_stack(aud_tokens, enc_aud_, AttnStage::EncoderAudio, &aux,
                               capture_attention);
  }

  FusedSequence fused = fuse_concat(vis_tokens, aud_tokens, type_vis_, type_aud_);
  aux.boundary = fused.boundary;

  Tensor slots = queries_;
  for (size_t l = 0; l < dec_.size(); ++l) {
    const DecLayerParams& layer = dec_[l];
    Tensor normed = pre_norm(slots, layer.ln1.g, layer.ln1.b);
    slots = nd::add(slots, multi_head(normed, normed, layer.self_attn, AttnStage::DecoderSelf,
                                      static_cast<int>(l), &aux, capture_attention));
    Tensor q = pre_norm(slots, layer.ln2.g, layer.ln2.b);
    slots = nd::add(slots, multi_head(q, fused.tokens, layer.cross_attn, AttnStage::DecoderCross,
                                      static_cast<int>(l), &aux, capture_attention));
    Tensor ffin = pre_norm(slots, layer.ln3.g, layer.ln3.b);
    Tensor hidden = nd::relu(linear(ffin, layer.ffn.w1, layer.ffn.b1));
    slots = nd::add(slots, linear(hidden, layer.ffn.w2, layer.ffn.b2));
  }
  Tensor slots_final = pre_norm(slots, dec_ln_f_.g, dec_ln_f_.b);

  aux.class_logits = linear(slots_final, class_w_, class_b_);
  aux.slot_attn = nd::sigmoid(linear(slots_final, attn_w_, attn_b_));
  {
    auto [w_vis, w_aud] = modality_importance(aux.cross_weights, aux.cross_cols, aux.boundary);
    aux.w_visual = w_vis;
    aux.w_audio = w_aud;
  }

  Tensor pooled = pool_slots(slots_final);
  if (config_.pointgoal) {
    Tensor delta = Tensor::from_data({1, 2}, {obs.delta_forward, obs.delta_left});
    Tensor demb = linear(delta, delta_w_, delta_b_);
    pooled = nd::concat_cols({pooled, demb});
  }
  Tensor e_t = linear(pooled, pool_w_, pool_b_);

  out.state = gru_step(e_t, h_prev, gru_);

  Tensor actor_logits = linear(out.state, actor_w_, actor_b_);
  out.probs = nd::softmax_lastdim(actor_logits);
  out.logp = nd::log_softmax_lastdim(actor_logits);
  out.value = linear(out.state, critic_w_, critic_b_);
  return out;
}

}  // namespace dmtf::net
