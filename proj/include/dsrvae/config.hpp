#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "dsrvae/degrade.hpp"
#include "dsrvae/losses.hpp"
#include "dsrvae/nn/networks.hpp"

namespace dsrvae {

enum class TrainPhase { dae, sr, joint };
enum class PairingMode { synthetic_paired, unpaired_reference };

struct TrainConfig {
  double lr = 1e-4;
  int batch = 16;
  int iterations = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  bool decoupled_weight_decay = false;  // default: classic L2-coupled decay
  int lr_patch = 128;
  int ref_patch = 512;
  int alpha = 4;
  LossWeights<double> weights;
  std::uint64_t seed = 0;
  TrainPhase phase = TrainPhase::dae;
  PairingMode pairing = PairingMode::synthetic_paired;
  bool train_decoder = false;    // SR phase: also fine-tune the denoiser
  bool non_saturating = false;   // -log(D) generator term instead of log(1-D)
  ModelConfig model;
  DegradationSpec degradation;

  static TrainConfig desk() {
    TrainConfig c;
    c.batch = 4;
    c.lr_patch = 32;
    c.ref_patch = 128;
    c.model = ModelConfig::desk();
    return c;
  }
};

namespace cfgio {

using nlohmann::json;

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                                const std::string& where) {
  std::string bad;
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) bad += (bad.empty() ? "" : ", ") + it.key();
  if (!bad.empty())
    throw std::invalid_argument("unknown config key(s) in " + where + ": " + bad);
}

inline json to_json(const ModelConfig& m) {
  return json{{"latent_len", m.latent_len},
              {"srsn_blocks", m.srsn_blocks},
              {"srsn_channels", m.srsn_channels},
              {"alpha", m.alpha},
              {"decoder_resblocks", m.decoder_resblocks},
              {"decoder_channels", m.decoder_channels},
              {"encoder_channels", m.encoder_channels},
              {"disc_base_channels", m.disc_base_channels},
              {"encoder_kind",
               m.encoder_kind == EncoderKind::small_conv ? "small-conv"
                                                         : "frozen-pretrained"}};
}

inline ModelConfig model_from_json(const json& j, ModelConfig base = {}) {
  reject_unknown_keys(j,
                      {"latent_len", "srsn_blocks", "srsn_channels", "alpha",
                       "decoder_resblocks", "decoder_channels", "encoder_channels",
                       "disc_base_channels", "encoder_kind"},
                      "model");
  ModelConfig m = base;
  if (j.contains("latent_len")) m.latent_len = j["latent_len"];
  if (j.contains("srsn_blocks")) m.srsn_blocks = j["srsn_blocks"];
  if (j.contains("srsn_channels")) m.srsn_channels = j["srsn_channels"];
  if (j.contains("alpha")) m.alpha = j["alpha"];
  if (j.contains("decoder_resblocks")) m.decoder_resblocks = j["decoder_resblocks"];
  if (j.contains("decoder_channels")) m.decoder_channels = j["decoder_channels"];
  if (j.contains("encoder_channels"))
    m.encoder_channels = j["encoder_channels"].get<std::vector<int>>();
  if (j.contains("disc_base_channels")) m.disc_base_channels = j["disc_base_channels"];
  if (j.contains("encoder_kind")) {
    const std::string k = j["encoder_kind"];
    if (k == "small-conv")
      m.encoder_kind = EncoderKind::small_conv;
    else if (k == "frozen-pretrained")
      m.encoder_kind = EncoderKind::frozen_pretrained;
    else
      throw std::invalid_argument("unknown encoder_kind: " + k);
  }
  return m;
}

inline json to_json(const DegradationSpec& d) {
  return json{{"blur_sigma", d.blur_sigma},
              {"scale", d.scale},
              {"noise_sigma", d.noise_sigma},
              {"seed", d.seed}};
}

inline DegradationSpec degradation_from_json(const json& j, DegradationSpec base = {}) {
  reject_unknown_keys(j, {"blur_sigma", "scale", "noise_sigma", "seed"}, "degradation");
  DegradationSpec d = base;
  if (j.contains("blur_sigma")) d.blur_sigma = j["blur_sigma"];
  if (j.contains("scale")) d.scale = j["scale"];
  if (j.contains("noise_sigma")) d.noise_sigma = j["noise_sigma"];
  if (j.contains("seed")) d.seed = j["seed"];
  return d;
}

inline json to_json(const TrainConfig& c) {
  json j{{"lr", c.lr},
         {"batch", c.batch},
         {"iterations", c.iterations},
         {"adam_beta1", c.adam_beta1},
         {"adam_beta2", c.adam_beta2},
         {"adam_eps", c.adam_eps},
         {"weight_decay", c.weight_decay},
         {"decoupled_weight_decay", c.decoupled_weight_decay},
         {"lr_patch", c.lr_patch},
         {"ref_patch", c.ref_patch},
         {"alpha", c.alpha},
         {"lambda_feat", c.weights.lambda_feat},
         {"eta_adv", c.weights.eta_adv},
         {"kl_weight", c.weights.kl_weight},
         {"seed", c.seed},
         {"phase", c.phase == TrainPhase::dae   ? "dae"
                   : c.phase == TrainPhase::sr ? "sr"
                                               : "joint"},
         {"pairing", c.pairing == PairingMode::synthetic_paired
                         ? "synthetic-paired"
                         : "unpaired-reference"},
         {"train_decoder", c.train_decoder},
         {"non_saturating", c.non_saturating},
         {"model", to_json(c.model)},
         {"degradation", to_json(c.degradation)}};
  return j;
}

inline TrainConfig train_from_json(const json& j) {
  static const std::set<std::string> known = {
      "preset",        "lr",           "batch",       "iterations",
      "adam_beta1",    "adam_beta2",   "adam_eps",    "weight_decay",
      "decoupled_weight_decay",        "lr_patch",    "ref_patch",
      "alpha",         "lambda_feat",  "eta_adv",     "kl_weight",
      "seed",          "phase",        "pairing",     "train_decoder",
      "non_saturating", "model",       "degradation"};
  reject_unknown_keys(j, known, "train config");

  TrainConfig c;
  if (j.contains("preset")) {
    const std::string p = j["preset"];
    if (p == "desk")
      c = TrainConfig::desk();
    else if (p == "full")
      c = TrainConfig{};  // full-scale defaults are the plain defaults
    else
      throw std::invalid_argument("unknown preset: " + p);
  }
  if (j.contains("lr")) c.lr = j["lr"];
  if (j.contains("batch")) c.batch = j["batch"];
  if (j.contains("iterations")) c.iterations = j["iterations"];
  if (j.contains("adam_beta1")) c.adam_beta1 = j["adam_beta1"];
  if (j.contains("adam_beta2")) c.adam_beta2 = j["adam_beta2"];
  if (j.contains("adam_eps")) c.adam_eps = j["adam_eps"];
  if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"];
  if (j.contains("decoupled_weight_decay"))
    c.decoupled_weight_decay = j["decoupled_weight_decay"];
  if (j.contains("lr_patch")) c.lr_patch = j["lr_patch"];
  if (j.contains("ref_patch")) c.ref_patch = j["ref_patch"];
  if (j.contains("alpha")) c.alpha = j["alpha"];
  if (j.contains("lambda_feat")) c.weights.lambda_feat = j["lambda_feat"];
  if (j.contains("eta_adv")) c.weights.eta_adv = j["eta_adv"];
  if (j.contains("kl_weight")) c.weights.kl_weight = j["kl_weight"];
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("phase")) {
    const std::string p = j["phase"];
    if (p == "dae")
      c.phase = TrainPhase::dae;
    else if (p == "sr")
      c.phase = TrainPhase::sr;
    else if (p == "joint")
      c.phase = TrainPhase::joint;
    else
      throw std::invalid_argument("unknown phase: " + p);
  }
  if (j.contains("pairing")) {
    const std::string p = j["pairing"];
    if (p == "synthetic-paired")
      c.pairing = PairingMode::synthetic_paired;
    else if (p == "unpaired-reference")
      c.pairing = PairingMode::unpaired_reference;
    else
      throw std::invalid_argument("unknown pairing: " + p);
  }
  if (j.contains("train_decoder")) c.train_decoder = j["train_decoder"];
  if (j.contains("non_saturating")) c.non_saturating = j["non_saturating"];
  if (j.contains("model")) c.model = model_from_json(j["model"], c.model);
  if (j.contains("degradation"))
    c.degradation = degradation_from_json(j["degradation"], c.degradation);

  // the SR factor lives in both the schedule and the model; keep them single-sourced
  if (j.contains("model") && j["model"].contains("alpha")) {
    if (j.contains("alpha") && c.model.alpha != c.alpha)
      throw std::invalid_argument("alpha mismatch between train config and model");
    c.alpha = c.model.alpha;
  } else {
    c.model.alpha = c.alpha;
  }
  if (c.lr_patch % 16)
    throw std::invalid_argument("lr_patch must be divisible by 16 (decoder stride)");
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }
  return train_from_json(j);
}

}  // namespace cfgio
}  // namespace dsrvae
