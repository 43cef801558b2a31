#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "idiomark/checkpoint.hpp"
#include "idiomark/corpus.hpp"
#include "idiomark/encoder.hpp"
#include "idiomark/errors.hpp"
#include "idiomark/eval.hpp"
#include "idiomark/losses.hpp"
#include "idiomark/optimizer.hpp"
#include "idiomark/postprocess.hpp"
#include "idiomark/predictions.hpp"
#include "idiomark/preprocess.hpp"
#include "idiomark/rng.hpp"
#include "idiomark/schedule.hpp"
#include "idiomark/tokenizer.hpp"

namespace idiomark {

struct TrainConfig {
  double lr_zero_shot = 1e-5;
  double lr_one_shot = 3e-5;
  int batch_size = 32;
  int epochs = 20;
  double warmup_fraction = 0.10;
  double rdrop_alpha = 1.0;
  double fgm_epsilon = 0.0;
  double contrastive_weight = 0.0;
  double contrastive_temperature = 0.05;
  bool aeda_enabled = false;
  uint64_t seed = 42;

  void validate() const {
    if (batch_size < 1) throw ValidationError("config: batch_size < 1");
    if (epochs < 1) throw ValidationError("config: epochs < 1");
    if (warmup_fraction <= 0.0 || warmup_fraction >= 1.0)
      throw ValidationError("config: warmup_fraction must be in (0,1)");
    if (rdrop_alpha < 0.0) throw ValidationError("config: rdrop_alpha < 0");
    if (fgm_epsilon < 0.0) throw ValidationError("config: fgm_epsilon < 0");
    if (contrastive_weight < 0.0)
      throw ValidationError("config: contrastive_weight < 0");
    if (contrastive_temperature <= 0.0)
      throw ValidationError("config: contrastive_temperature <= 0");
    if (lr_zero_shot <= 0.0 || lr_one_shot <= 0.0)
      throw ValidationError("config: learning rates must be > 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

/// Flat key=value text, '#' comments. Unknown keys are rejected so typos
/// fail loudly.
inline std::string serialize_train_config(const TrainConfig& c) {
  char buf[64];
  std::ostringstream out;
  auto real = [&](const char* k, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << k << "=" << buf << "\n";
  };
  real("lr_zero_shot", c.lr_zero_shot);
  real("lr_one_shot", c.lr_one_shot);
  out << "batch_size=" << c.batch_size << "\n";
  out << "epochs=" << c.epochs << "\n";
  real("warmup_fraction", c.warmup_fraction);
  real("rdrop_alpha", c.rdrop_alpha);
  real("fgm_epsilon", c.fgm_epsilon);
  real("contrastive_weight", c.contrastive_weight);
  real("contrastive_temperature", c.contrastive_temperature);
  out << "aeda_enabled=" << (c.aeda_enabled ? "true" : "false") << "\n";
  out << "seed=" << c.seed << "\n";
  return out.str();
}

inline TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos <= text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (pos > text.size() && line.empty()) break;
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw SchemaError("config line " + std::to_string(line_no) +
                        ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "lr_zero_shot") c.lr_zero_shot = std::stod(val);
      else if (key == "lr_one_shot") c.lr_one_shot = std::stod(val);
      else if (key == "batch_size") c.batch_size = std::stoi(val);
      else if (key == "epochs") c.epochs = std::stoi(val);
      else if (key == "warmup_fraction") c.warmup_fraction = std::stod(val);
      else if (key == "rdrop_alpha") c.rdrop_alpha = std::stod(val);
      else if (key == "fgm_epsilon") c.fgm_epsilon = std::stod(val);
      else if (key == "contrastive_weight")
        c.contrastive_weight = std::stod(val);
      else if (key == "contrastive_temperature")
        c.contrastive_temperature = std::stod(val);
      else if (key == "aeda_enabled")
        c.aeda_enabled = (val == "true" || val == "1");
      else if (key == "seed") c.seed = std::stoull(val);
      else
        throw SchemaError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ValidationError("config: bad value for '" + key + "': " + val);
    } catch (const std::out_of_range&) {
      throw ValidationError("config: value out of range for '" + key + "'");
    }
    if (pos > text.size()) break;
  }
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  return parse_train_config(detail::read_file(path));
}

inline void save_train_config(const TrainConfig& c,
                              const std::filesystem::path& path) {
  detail::write_file_atomic(path, serialize_train_config(c));
}

struct EpochRecord {
  int epoch = 0;  // 1-based
  double mean_ce = 0.0;
  double mean_kl = 0.0;
  double mean_adversarial_ce = 0.0;
  double mean_contrastive = 0.0;
  double dev_macro_f1 = 0.0;
  double lr_end = 0.0;
};

inline std::string serialize_history(const std::vector<EpochRecord>& h) {
  std::string out;
  for (const EpochRecord& r : h) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["mean_ce"] = r.mean_ce;
    j["mean_kl"] = r.mean_kl;
    j["mean_adversarial_ce"] = r.mean_adversarial_ce;
    j["mean_contrastive"] = r.mean_contrastive;
    j["dev_macro_f1"] = r.dev_macro_f1;
    j["lr_end"] = r.lr_end;
    out += j.dump();
    out += "\n";
  }
  return out;
}

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 1-based
};

namespace detail {

// Tokenized training view of a dataset under one policy/vocab.
struct EncodedData {
  std::vector<TokenizedInput> inputs;
  std::vector<int> labels;
};

inline EncodedData encode_dataset(const Dataset& data,
                                  const Tokenizer& tok,
                                  const BuildPolicy& policy,
                                  bool require_labels) {
  EncodedData out;
  out.inputs.reserve(data.size());
  out.labels.reserve(data.size());
  for (const Instance& inst : data.instances) {
    if (require_labels && !inst.label)
      throw ValidationError("training: row '" + inst.id + "' has no label");
    out.inputs.push_back(
        tok.tokenize(build_example(inst, policy), policy.max_tokens));
    out.labels.push_back(inst.label.value_or(-1));
  }
  return out;
}

template <typename T>
inline MatX<T> batch_probabilities(const TransformerModel<T>& model,
                                   const std::vector<TokenizedInput>& inputs,
                                   int batch_size, int pad_id) {
  MatX<T> all(static_cast<Eigen::Index>(inputs.size()), 2);
  for (size_t at = 0; at < inputs.size(); at += batch_size) {
    const size_t take = std::min<size_t>(batch_size, inputs.size() - at);
    std::vector<TokenizedInput> chunk(inputs.begin() + at,
                                      inputs.begin() + at + take);
    const PaddedBatch pb = pad_batch(chunk, pad_id);
    const BatchForward<T> fwd = model.forward(pb, false, nullptr);
    for (size_t r = 0; r < take; ++r)
      all.row(static_cast<Eigen::Index>(at + r)) =
          fwd.probabilities.row(static_cast<Eigen::Index>(r));
  }
  return all;
}

}  // namespace detail

/// Full training loop: seeded shuffling, two dropout-independent forwards
/// per step (the R-drop structure), optional FGM adversarial pass and
/// contrastive auxiliary, warmup+cosine schedule, per-epoch dev Macro F1,
/// best-epoch checkpoint selection (earliest epoch wins ties).
///
/// With init given, training warm-starts from its parameters and vocabulary
/// (the continued-training workflow) and uses lr_one_shot; otherwise a
/// fresh model and vocabulary are built from the training data and
/// lr_zero_shot applies. Optimizer state is never carried over.
inline TrainResult train(const Dataset& train_data, const Dataset& dev_data,
                         const TrainConfig& cfg,
                         const EncoderConfig& enc_template,
                         const Checkpoint* init = nullptr,
                         const BuildPolicy& policy = {}) {
  cfg.validate();
  if (train_data.empty()) throw ValidationError("training: empty train set");
  if (dev_data.empty()) throw ValidationError("training: empty dev set");

  Vocab vocab = init ? init->vocab : build_vocab(train_data, 1);
  EncoderConfig enc = init ? init->config : enc_template;
  if (!init) enc.vocab_size = vocab.size();
  enc.validate();
  const double base_lr = init ? cfg.lr_one_shot : cfg.lr_zero_shot;

  WordTokenizer tok(std::move(vocab));
  detail::EncodedData tr = detail::encode_dataset(train_data, tok, policy,
                                                  true);
  if (cfg.aeda_enabled) {
    const uint64_t aeda_base = derive_seed(cfg.seed, 4);
    const size_t n0 = train_data.size();
    for (size_t i = 0; i < n0; ++i) {
      const std::string text =
          build_example(train_data.instances[i], policy);
      const std::string aug =
          aeda_augment(text, derive_seed(aeda_base, i), policy.sep);
      tr.inputs.push_back(tok.tokenize(aug, policy.max_tokens));
      tr.labels.push_back(tr.labels[i]);
    }
  }
  const detail::EncodedData dv = detail::encode_dataset(dev_data, tok, policy,
                                                        true);

  const int N = static_cast<int>(tr.inputs.size());
  const int steps_per_epoch = (N + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps =
      static_cast<int64_t>(cfg.epochs) * steps_per_epoch;
  const int pad_id = tok.specials().pad;

  TransformerModel<float> model =
      init ? TransformerModel<float>(enc, init->params)
           : TransformerModel<float>(enc, derive_seed(cfg.seed, 1));
  AdamW<float> opt(enc);
  Rng shuffle_rng(derive_seed(cfg.seed, 2));
  Rng dropout_rng(derive_seed(cfg.seed, 3));

  const float alpha = static_cast<float>(cfg.rdrop_alpha);
  const float fgm_eps = static_cast<float>(cfg.fgm_epsilon);
  const float cl_weight = static_cast<float>(cfg.contrastive_weight);
  const float cl_temp = static_cast<float>(cfg.contrastive_temperature);

  ModelTensors<float> grads(enc);
  std::vector<int> order(N);
  for (int i = 0; i < N; ++i) order[i] = i;

  TrainResult result;
  double best_f1 = -1.0;
  int64_t global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = N - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.bounded(
          static_cast<uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }

    double ep_ce = 0, ep_kl = 0, ep_adv = 0, ep_cl = 0;
    for (int at = 0; at < N; at += cfg.batch_size) {
      const int take = std::min(cfg.batch_size, N - at);
      std::vector<TokenizedInput> chunk;
      chunk.reserve(take);
      std::vector<int> labels(take);
      for (int r = 0; r < take; ++r) {
        chunk.push_back(tr.inputs[order[at + r]]);
        labels[r] = tr.labels[order[at + r]];
      }
      const PaddedBatch pb = pad_batch(chunk, pad_id);
      const float invB = 1.0f / static_cast<float>(take);

      grads.set_zero();
      ForwardCache<float> cache1, cache2;
      const BatchForward<float> f1 =
          model.forward(pb, true, &dropout_rng, &cache1);
      const BatchForward<float> f2 =
          model.forward(pb, true, &dropout_rng, &cache2);

      double ce_sum = 0, kl_sum = 0;
      MatX<float> dz1(take, 2), dz2(take, 2);
      for (int r = 0; r < take; ++r) {
        const int y = labels[r];
        const std::vector<double> p1 = {f1.probabilities(r, 0),
                                        f1.probabilities(r, 1)};
        const std::vector<double> p2 = {f2.probabilities(r, 0),
                                        f2.probabilities(r, 1)};
        ce_sum += cross_entropy(p1, y) + cross_entropy(p2, y);
        kl_sum += (kl_div(p1, p2) + kl_div(p2, p1)) / 2.0;

        VecX<float> g1, g2;
        const VecX<float> pf1 = f1.probabilities.row(r).transpose();
        const VecX<float> pf2 = f2.probabilities.row(r).transpose();
        rdrop_logit_grads(pf1, pf2, y, alpha, &g1, &g2);
        dz1.row(r) = g1.transpose() * invB;
        dz2.row(r) = g2.transpose() * invB;
      }
      const double mean_ce = ce_sum / take;
      const double mean_kl = kl_sum / take;

      double cl_loss = 0.0;
      MatX<float> dr1, dr2;
      const bool use_cl = cl_weight > 0.0f && take >= 2;
      if (use_cl) {
        cl_loss = contrastive_auxiliary_loss(cache1.pooled, cache2.pooled,
                                             cl_temp);
        dr1 = MatX<float>::Zero(take, enc.dim);
        dr2 = MatX<float>::Zero(take, enc.dim);
        contrastive_grads(cache1.pooled, cache2.pooled, cl_temp, cl_weight,
                          &dr1, &dr2);
      }

      MatX<float> demb1;
      model.backward(cache1, dz1, use_cl ? &dr1 : nullptr, &grads,
                     fgm_eps > 0.0f ? &demb1 : nullptr);
      model.backward(cache2, dz2, use_cl ? &dr2 : nullptr, &grads, nullptr);

      double mean_adv = 0.0;
      if (fgm_eps > 0.0f) {
        const MatX<float> delta = fgm_perturb(demb1, fgm_eps);
        ForwardCache<float> cache3;
        const BatchForward<float> f3 =
            model.forward(pb, true, &dropout_rng, &cache3, &delta);
        MatX<float> dz3 = f3.probabilities;
        for (int r = 0; r < take; ++r) {
          const std::vector<double> p3 = {f3.probabilities(r, 0),
                                          f3.probabilities(r, 1)};
          mean_adv += cross_entropy(p3, labels[r]);
          dz3(r, labels[r]) -= 1.0f;
        }
        mean_adv /= take;
        dz3 *= invB;
        model.backward(cache3, dz3, nullptr, &grads, nullptr);
      }

      const double step_total = mean_ce + cfg.rdrop_alpha * mean_kl +
                                cfg.contrastive_weight * cl_loss + mean_adv;
      if (!std::isfinite(step_total))
        throw TrainingDiverged(
            "non-finite loss at epoch " + std::to_string(epoch + 1) +
            ", step " + std::to_string(global_step + 1) + " (ce=" +
            std::to_string(mean_ce) + ", kl=" + std::to_string(mean_kl) +
            ", adv=" + std::to_string(mean_adv) + ", contrastive=" +
            std::to_string(cl_loss) + ")");

      const double lr =
          lr_at(global_step + 1, total_steps, base_lr, cfg.warmup_fraction);
      opt.step(&model.params(), grads, static_cast<float>(lr));
      ++global_step;

      ep_ce += mean_ce;
      ep_kl += mean_kl;
      ep_adv += mean_adv;
      ep_cl += cl_loss;
    }

    const MatX<float> dev_probs = detail::batch_probabilities(
        model, dv.inputs, cfg.batch_size, pad_id);
    std::vector<int> pred(dv.inputs.size());
    for (size_t r = 0; r < dv.inputs.size(); ++r) {
      const std::array<double, 2> p = {
          dev_probs(static_cast<Eigen::Index>(r), 0),
          dev_probs(static_cast<Eigen::Index>(r), 1)};
      pred[r] = argmax_label(p);
    }
    const double dev_f1 = macro_f1(dv.labels, pred);

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.mean_ce = ep_ce / steps_per_epoch;
    rec.mean_kl = ep_kl / steps_per_epoch;
    rec.mean_adversarial_ce = ep_adv / steps_per_epoch;
    rec.mean_contrastive = ep_cl / steps_per_epoch;
    rec.dev_macro_f1 = dev_f1;
    rec.lr_end =
        lr_at(global_step, total_steps, base_lr, cfg.warmup_fraction);
    result.history.push_back(rec);

    if (dev_f1 > best_f1) {
      best_f1 = dev_f1;
      result.best_epoch = epoch + 1;
      result.best.config = enc;
      result.best.params = model.params();
      result.best.step = global_step;
      result.best.rng_state = dropout_rng.state();
      result.best.vocab = tok.vocab();
    }
  }
  return result;
}

/// Inference over a dataset with one checkpoint, using the checkpoint's own
/// vocabulary and config.
inline PredictionSet predict_dataset(const Checkpoint& cp, const Dataset& data,
                                     const BuildPolicy& policy = {},
                                     int batch_size = 32) {
  const TransformerModel<float> model(cp.config, cp.params);
  WordTokenizer tok(cp.vocab);
  std::vector<TokenizedInput> inputs;
  inputs.reserve(data.size());
  for (const Instance& inst : data.instances)
    inputs.push_back(
        tok.tokenize(build_example(inst, policy), policy.max_tokens));
  const MatX<float> probs = detail::batch_probabilities(
      model, inputs, batch_size, tok.specials().pad);

  PredictionSet ps;
  ps.items.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    const Instance& inst = data.instances[i];
    Prediction p;
    p.id = inst.id;
    p.language = inst.language;
    p.setting = inst.setting;
    p.mwe = inst.mwe;
    p.probabilities = {probs(static_cast<Eigen::Index>(i), 0),
                       probs(static_cast<Eigen::Index>(i), 1)};
    p.label = argmax_label(p.probabilities);
    ps.items.push_back(std::move(p));
  }
  return ps;
}

enum class Fusion { MeanProb };

struct EnsembleSpec {
  std::vector<std::filesystem::path> checkpoints;
  Fusion fusion = Fusion::MeanProb;
};

/// Arithmetic-mean probability fusion over the member models. Members may
/// differ in architecture and vocabulary; each tokenizes with its own.
inline PredictionSet ensemble_predict(const EnsembleSpec& spec,
                                      const Dataset& data,
                                      const BuildPolicy& policy = {},
                                      int batch_size = 32) {
  if (spec.checkpoints.empty())
    throw ContractError("ensemble_predict: no checkpoints");
  PredictionSet acc;
  int num_classes = -1;
  for (size_t m = 0; m < spec.checkpoints.size(); ++m) {
    const Checkpoint cp = load_checkpoint(spec.checkpoints[m]);
    if (num_classes < 0)
      num_classes = cp.config.num_classes;
    else if (cp.config.num_classes != num_classes)
      throw ValidationError("ensemble_predict: num_classes mismatch at " +
                            spec.checkpoints[m].string());
    PredictionSet ps = predict_dataset(cp, data, policy, batch_size);
    if (m == 0) {
      acc = std::move(ps);
    } else {
      for (size_t i = 0; i < acc.items.size(); ++i) {
        acc.items[i].probabilities[0] += ps.items[i].probabilities[0];
        acc.items[i].probabilities[1] += ps.items[i].probabilities[1];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(spec.checkpoints.size());
  for (Prediction& p : acc.items) {
    p.probabilities[0] *= inv;
    p.probabilities[1] *= inv;
    p.label = argmax_label(p.probabilities);
  }
  return acc;
}

}  // namespace idiomark
