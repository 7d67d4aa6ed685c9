#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dmtf/gridworld.hpp"
#include "dmtf/rng.hpp"
#include "dmtf/tensor.hpp"
#include "json.hpp"

namespace dmtf::net {

struct ModelConfig {
  int d_m = 128;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int num_targets = 8;
  int patch = 16;
  int ffn_hidden = 256;
  int gru_hidden = 512;
  int gru_input = 128;
  int cnn_channels = 32;  // mid channels of the no_pe audio encoder
  int delta_dim = 16;     // pointgoal displacement embedding width
  bool pointgoal = false;
  bool no_pe = false;
  bool no_mti = false;
  bool no_ensa = false;
  // expected observation dims; must match the environment
  int image_h = 64;
  int image_w = 64;
  int image_c = 3;
  int bands = 64;
  int frames = 64;
  int actions = 4;

  void validate() const;
  int head_dim() const { return d_m / heads; }
  int effective_targets() const { return no_mti ? 1 : num_targets; }
  int patches() const { return (image_h / patch) * (image_w / patch); }
  int num_classes() const { return actions + 1; }  // actions + the no-item class
  std::string ablation_name() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// ---- building blocks -------------------------------------------------------

// Tile-or-crop the spectrogram onto the visual raster: the frame axis is
// cyclically tiled when short and center-cropped when long (the band axis is
// handled the same way); missing channels are zero-padded.
std::vector<double> prep_audio(const std::vector<double>& spec, int bands, int frames,
                               int target_h, int target_w, int target_c);

// Non-overlapping patch projection plus optional learned positional encoding.
nd::Tensor patch_embed(const nd::Tensor& image, int patch, const nd::Tensor& w,
                       const nd::Tensor& b, const nd::Tensor* pos);

struct FusedSequence {
  nd::Tensor tokens;  // [(N_v + N_a) x d_m]
  int boundary = 0;   // N_v: first boundary tokens are visual
};

FusedSequence fuse_concat(const nd::Tensor& visual, const nd::Tensor& audio,
                          const nd::Tensor& type_visual, const nd::Tensor& type_audio);

// Scaled dot-product attention; returns (output, weights), weight rows sum to 1.
std::pair<nd::Tensor, nd::Tensor> dmtf_attention(const nd::Tensor& q, const nd::Tensor& k,
                                                 const nd::Tensor& v);

struct LayerNormParams {
  nd::Tensor g, b;
};

struct AttnParams {
  std::vector<nd::Tensor> wq, wk, wv;  // per head [d_m x d_k]
  nd::Tensor wo;                       // [heads * d_v x d_m]
};

struct FfnParams {
  nd::Tensor w1, b1, w2, b2;
};

struct EncLayerParams {
  LayerNormParams ln1;
  AttnParams attn;
  LayerNormParams ln2;
  FfnParams ffn;
};

struct DecLayerParams {
  LayerNormParams ln1;
  AttnParams self_attn;
  LayerNormParams ln2;
  AttnParams cross_attn;
  LayerNormParams ln3;
  FfnParams ffn;
};

// Per-head projections, scaled dot-product attention, concat, output
// projection. Returns the output and one weight matrix per head.
std::pair<nd::Tensor, std::vector<nd::Tensor>> multi_head_dmtf(const nd::Tensor& q_in,
                                                               const nd::Tensor& kv_in,
                                                               const AttnParams& p);

// Pre-norm self-attention block with residuals: x + attn(ln(x)) + ffn(ln(.)).
nd::Tensor encoder_layer(const nd::Tensor& tokens, const EncLayerParams& p,
                         std::vector<nd::Tensor>* attn_weights = nullptr);

struct GruParams {
  nd::Tensor wz, uz, bz;
  nd::Tensor wr, ur, br;
  nd::Tensor wn, un, bn;
};

// Gated recurrent unit cell: h' = z * n + (1 - z) * h, so a saturated-closed
// update gate (z -> 0) preserves the previous state.
nd::Tensor gru_step(const nd::Tensor& x, const nd::Tensor& h_prev, const GruParams& p);

nd::Tensor pool_slots(const nd::Tensor& slots);  // mean over the slot axis

// Relative attention mass on visual vs audio keys, summed over all provided
// cross-attention weight matrices. w_audio is defined as 1 - w_visual so the
// pair sums to one exactly.
std::pair<double, double> modality_importance(
    const std::vector<std::vector<double>>& cross_weights, int columns, int boundary);

// ---- model ------------------------------------------------------------------

enum class AttnStage { EncoderVisual, EncoderAudio, DecoderSelf, DecoderCross };

struct AttnRecord {
  AttnStage stage;
  int layer = 0;
  int head = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> weights;  // row-major [rows x cols]
};

struct ForwardAux {
  nd::Tensor class_logits;  // [N_t x (actions + 1)]
  nd::Tensor slot_attn;     // [N_t x 2], sigmoid; component 0 audio, 1 visual
  double w_visual = 0.5;    // decoder cross-attention mass split
  double w_audio = 0.5;
  int boundary = 0;
  std::vector<AttnRecord> attention;  // populated when capture is requested
  // raw decoder cross-attention weights per (layer, head), row-major
  std::vector<std::vector<double>> cross_weights;
  int cross_cols = 0;
};

struct ForwardResult {
  nd::Tensor probs;  // [1 x actions]
  nd::Tensor logp;   // [1 x actions]
  nd::Tensor value;  // [1 x 1]
  nd::Tensor state;  // h_t [1 x gru_hidden]
  ForwardAux aux;
};

class Model {
 public:
  Model(ModelConfig config, uint64_t seed);

  ForwardResult forward(const env::Observation& obs, const nd::Tensor& h_prev,
                        bool capture_attention = false) const;

  nd::Tensor initial_state() const { return nd::Tensor::zeros({1, config_.gru_hidden}); }

  const ModelConfig& config() const { return config_; }
  std::vector<nd::NamedParam>& params() { return params_; }
  const std::vector<nd::NamedParam>& params() const { return params_; }
  int64_t param_count() const;
  void zero_grad();

 private:
  nd::Tensor add_linear(const std::string& name, int rows, int cols, Rng& rng);
  nd::Tensor add_bias(const std::string& name, int n);
  nd::Tensor add_embedding(const std::string& name, nd::Shape shape, Rng& rng);
  LayerNormParams add_layer_norm(const std::string& prefix);
  AttnParams add_attention(const std::string& prefix, Rng& rng);
  FfnParams add_ffn(const std::string& prefix, Rng& rng);

  nd::Tensor multi_head(const nd::Tensor& q_in, const nd::Tensor& kv_in, const AttnParams& p,
                        AttnStage stage, int layer, ForwardAux* aux, bool capture) const;
  nd::Tensor encoder_stack(nd::Tensor tokens, const std::vector<EncLayerParams>& layers,
                           AttnStage stage, ForwardAux* aux, bool capture) const;
  nd::Tensor audio_tokens(const nd::Tensor& image) const;

  ModelConfig config_;
  std::vector<nd::NamedParam> params_;

  nd::Tensor vis_patch_w_, vis_patch_b_, vis_pos_;
  nd::Tensor aud_patch_w_, aud_patch_b_, aud_pos_;
  nd::Tensor cnn_w1_, cnn_b1_, cnn_w2_, cnn_b2_;
  nd::Tensor type_vis_, type_aud_;
  std::vector<EncLayerParams> enc_vis_, enc_aud_;
  nd::Tensor queries_;
  std::vector<DecLayerParams> dec_;
  LayerNormParams dec_ln_f_;
  nd::Tensor class_w_, class_b_;
  nd::Tensor attn_w_, attn_b_;
  nd::Tensor delta_w_, delta_b_;
  nd::Tensor pool_w_, pool_b_;
  GruParams gru_;
  nd::Tensor actor_w_, actor_b_;
  nd::Tensor critic_w_, critic_b_;
};

}  // namespace dmtf::net
