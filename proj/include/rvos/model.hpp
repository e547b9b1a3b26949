#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "rvos/encoders.hpp"
#include "rvos/instance_decoder.hpp"
#include "rvos/mask_optimizer.hpp"
#include "rvos/patch_segmentation.hpp"
#include "rvos/scene.hpp"
#include "rvos/spectral_fusion.hpp"

namespace rvos {

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t num_queries = 5;
  bool position = true;
  bool scf_enabled = true;
  double bandwidth = 0.25;
  std::size_t patch = 4;
  std::size_t cpk_hidden = 16;
  bool mso_enabled = true;
  std::size_t mso_dim = 16;
  std::uint64_t seed = 1;

  CPKConfig cpk() const { return {dim, cpk_hidden, patch}; }

  void validate() const {
    if (dim < 2 || dim % 2) throw ConfigError("model.dim must be an even number >= 2");
    if (num_queries == 0) throw ConfigError("model.num_queries must be positive");
    if (!(bandwidth > 0.0)) throw ConfigError("scf.bandwidth must be positive");
    if (patch != 4) throw ConfigError("cpk.patch must be 4 for the stride 16 -> 4 -> 1 layout");
    if (cpk_hidden == 0) throw ConfigError("cpk.hidden must be positive");
    if (mso_dim == 0) throw ConfigError("mso.dim must be positive");
  }
};

/// Every learnable block of the pipeline, backed by one ParamStore.
/// Parameter handles alias the store, so a Model is move-only.
struct Model {
  ModelConfig config;
  ParamStore store;
  VisualEncoderParams visual;
  TextEncoderParams text;
  SCFParams fusion8, fusion16, fusion32;
  EncoderParams transformer;
  AttentionParams decouple_gate;
  CPKHeadParams cpk;
  MSOParams mso;

  explicit Model(const ModelConfig& cfg) : config(cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    visual = make_visual_encoder(store, "visual", cfg.dim, rng);
    text = make_text_encoder(store, "text", vocab::size, cfg.dim, rng);
    fusion8 = make_scf_params(store, "fusion8", cfg.dim, rng);
    fusion16 = make_scf_params(store, "fusion16", cfg.dim, rng);
    fusion32 = make_scf_params(store, "fusion32", cfg.dim, rng);
    transformer = make_encoder_params(store, "transformer", cfg.dim, cfg.enc_layers, cfg.dec_layers, cfg.num_queries, rng);
    decouple_gate = make_attention_params(store, "decouple", cfg.dim, rng);
    cpk = make_cpk_head(store, "cpk", cfg.cpk(), rng);
    mso = make_mso_params(store, "mso", cfg.patch * cfg.patch, cfg.dim, cfg.mso_dim, rng);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
};

}  // namespace rvos
