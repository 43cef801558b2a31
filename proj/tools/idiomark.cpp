// Command-line front end for the idiomatic-usage classification pipeline:
// corpus statistics, training, prediction with optional ensemble fusion and
// label overrides, evaluation, synthetic data generation, and the ablation
// harness.

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <idiomark/idiomark.hpp>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace idiomark;

namespace {

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json config_json(const TrainConfig& c) {
  ordered_json j;
  j["lr_zero_shot"] = c.lr_zero_shot;
  j["lr_one_shot"] = c.lr_one_shot;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["warmup_fraction"] = c.warmup_fraction;
  j["rdrop_alpha"] = c.rdrop_alpha;
  j["fgm_epsilon"] = c.fgm_epsilon;
  j["contrastive_weight"] = c.contrastive_weight;
  j["contrastive_temperature"] = c.contrastive_temperature;
  j["aeda_enabled"] = c.aeda_enabled;
  j["seed"] = c.seed;
  return j;
}

ordered_json dataset_json(const fs::path& path, const Dataset& d) {
  ordered_json j;
  j["path"] = path.string();
  j["provenance"] = d.provenance;
  j["rows"] = d.size();
  return j;
}

void write_manifest(const fs::path& dir, ordered_json manifest) {
  manifest["finished_at"] = now_utc();
  detail::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

void print_history(const std::vector<EpochRecord>& history) {
  std::printf("%5s %10s %10s %10s %12s %10s %12s\n", "epoch", "ce", "kl",
              "adv_ce", "contrastive", "dev_f1", "lr");
  for (const EpochRecord& r : history)
    std::printf("%5d %10.4f %10.6f %10.4f %12.6f %10.4f %12.4e\n", r.epoch,
                r.mean_ce, r.mean_kl, r.mean_adversarial_ce,
                r.mean_contrastive, r.dev_macro_f1, r.lr_end);
}

struct EncoderFlags {
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn_dim = 128;
  double dropout = 0.1;
  int max_position = 128;
  std::string pooling = "cls";

  EncoderConfig resolve(int vocab_size_hint) const {
    EncoderConfig e;
    e.vocab_size = vocab_size_hint;
    e.dim = dim;
    e.layers = layers;
    e.heads = heads;
    e.ffn_dim = ffn_dim;
    e.dropout_rate = static_cast<float>(dropout);
    e.max_position = max_position;
    e.pooling = pooling_from_string(pooling);
    return e;
  }
};

void add_encoder_flags(CLI::App* cmd, EncoderFlags* ef) {
  cmd->add_option("--dim", ef->dim, "Model width");
  cmd->add_option("--layers", ef->layers, "Encoder blocks");
  cmd->add_option("--heads", ef->heads, "Attention heads");
  cmd->add_option("--ffn-dim", ef->ffn_dim, "Feed-forward width");
  cmd->add_option("--dropout", ef->dropout, "Dropout rate");
  cmd->add_option("--max-position", ef->max_position,
                  "Positional embedding capacity");
  cmd->add_option("--pooling", ef->pooling,
                  "Sentence pooling: cls|mean|max|first_last_avg|mwe_token");
}

struct PolicyFlags {
  bool context = false;
  int max_tokens = 128;
  bool no_marking = false;

  BuildPolicy resolve() const {
    BuildPolicy p;
    p.include_context = context;
    p.mark_idiom = !no_marking;
    p.max_tokens = max_tokens;
    return p;
  }
};

void add_policy_flags(CLI::App* cmd, PolicyFlags* pf) {
  cmd->add_flag("--context", pf->context,
                "Include previous/next sentences in the example text");
  cmd->add_option("--max-tokens", pf->max_tokens, "Truncation length");
  cmd->add_flag("--no-marking", pf->no_marking,
                "Disable expression marking entirely");
}

// ---------------------------------------------------------------- commands

int cmd_gen(int n, double cue_strength, uint64_t seed, const fs::path& out) {
  fs::create_directories(out);
  const std::string started = now_utc();
  SyntheticCorpus corpus = generate_synthetic_corpus(n, cue_strength, seed);
  save_dataset(corpus.train, out / "train.csv");
  save_dataset(corpus.dev, out / "dev.csv");

  ordered_json m;
  m["command"] = "gen";
  m["n"] = n;
  m["cue_strength"] = cue_strength;
  m["seed"] = seed;
  m["outputs"] = {(out / "train.csv").string(), (out / "dev.csv").string()};
  m["started_at"] = started;
  write_manifest(out, std::move(m));
  std::printf("wrote %zu train rows, %zu dev rows to %s\n",
              corpus.train.size(), corpus.dev.size(), out.string().c_str());
  return 0;
}

int cmd_stats(const fs::path& data_path, const std::string& tokenizer_name) {
  const Dataset data = load_dataset(data_path, false);
  LengthStats st;
  if (tokenizer_name == "whitespace") {
    WhitespaceTokenizer tok;
    st = length_statistics(data, tok);
  } else {
    WordTokenizer tok(build_vocab(data));
    st = length_statistics(data, tok);
  }
  std::printf("rows                    %zu\n", st.rows);
  std::printf("target length   mean %8.2f   median %8.2f   p90 %5d   max %5d\n",
              st.mean, st.median, st.p90, st.max);
  std::printf("rows with locatable expression   %zu\n",
              st.rows_with_mwe_position);
  if (st.rows_with_mwe_position > 0)
    std::printf("expression position   mean %8.2f   median %8.2f   p90 %5d   max %5d\n",
                st.mwe_position_mean, st.mwe_position_median,
                st.mwe_position_p90, st.mwe_position_max);
  return 0;
}

int cmd_train(const fs::path& train_path, const fs::path& dev_path,
              const std::string& config_path,
              const std::string& init_checkpoint, const fs::path& out,
              const EncoderFlags& ef, const PolicyFlags& pf) {
  fs::create_directories(out);
  const std::string started = now_utc();

  const Dataset train_data = load_dataset(train_path, true);
  const Dataset dev_data = load_dataset(dev_path, true);
  const TrainConfig cfg = config_path.empty()
                              ? TrainConfig{}
                              : load_train_config(config_path);
  const BuildPolicy policy = pf.resolve();

  std::optional<Checkpoint> init;
  if (!init_checkpoint.empty()) init = load_checkpoint(init_checkpoint);

  // vocab_size is replaced inside train() for cold starts; the hint only
  // needs to satisfy config validation.
  const EncoderConfig enc = ef.resolve(8);
  TrainResult res = train(train_data, dev_data, cfg, enc,
                          init ? &*init : nullptr, policy);

  const fs::path ckpt_path = out / "checkpoint.bin";
  save_checkpoint(res.best, ckpt_path);
  detail::write_file_atomic(out / "history.jsonl",
                            serialize_history(res.history));
  save_train_config(cfg, out / "config.txt");

  ordered_json m;
  m["command"] = "train";
  m["config"] = config_json(cfg);
  m["datasets"] = {{"train", dataset_json(train_path, train_data)},
                   {"dev", dataset_json(dev_path, dev_data)}};
  m["seed"] = cfg.seed;
  m["init_checkpoint"] = init_checkpoint;
  m["checkpoint"] = ckpt_path.string();
  m["outputs"] = {ckpt_path.string(), (out / "history.jsonl").string(),
                  (out / "config.txt").string()};
  m["started_at"] = started;
  write_manifest(out, std::move(m));

  print_history(res.history);
  std::printf("best epoch %d, dev macro F1 %.4f, checkpoint %s\n",
              res.best_epoch, res.history[res.best_epoch - 1].dev_macro_f1,
              ckpt_path.string().c_str());
  return 0;
}

int cmd_predict(const std::vector<std::string>& checkpoints,
                const fs::path& data_path, const std::string& postprocess,
                const fs::path& out_path, const PolicyFlags& pf) {
  const Dataset data = load_dataset(data_path, false);
  EnsembleSpec spec;
  for (const std::string& c : checkpoints) spec.checkpoints.push_back(c);

  PredictionSet preds = ensemble_predict(spec, data, pf.resolve());
  if (!postprocess.empty()) {
    const Dataset table_src = load_dataset(postprocess, true);
    preds = apply_overrides(preds, build_override_table(table_src));
  }
  save_predictions(preds, out_path);

  size_t overridden = 0;
  for (const Prediction& p : preds.items) overridden += p.overridden ? 1 : 0;
  std::printf("wrote %zu predictions to %s (%zu overridden)\n",
              preds.items.size(), out_path.string().c_str(), overridden);
  return 0;
}

int cmd_evaluate(const fs::path& pred_path, const fs::path& gold_path,
                 const std::string& group_by, bool as_json) {
  const PredictionSet preds = load_predictions(pred_path);
  const Dataset gold = load_dataset(gold_path, true);
  GroupBy g = GroupBy::None;
  if (group_by == "language") g = GroupBy::Language;
  else if (group_by == "setting") g = GroupBy::Setting;
  else if (!group_by.empty() && group_by != "none")
    throw ValidationError("evaluate: unknown --group-by '" + group_by + "'");

  const EvalResult res = evaluate(preds, gold, g);
  if (as_json) {
    std::printf("%s\n", report_to_json(res.overall).c_str());
    for (const auto& [key, rep] : res.groups) {
      ordered_json j = nlohmann::ordered_json::parse(report_to_json(rep));
      j["group"] = key;
      std::printf("%s\n", j.dump().c_str());
    }
  } else {
    std::fputs(format_result(res).c_str(), stdout);
  }
  return 0;
}

// One ablation cell: a fully trained zero-shot stage plus a warm-started
// one-shot stage, scored by best dev Macro F1.
struct AblationCell {
  double zero_f1 = 0.0;
  double one_f1 = 0.0;
  double one_post_f1 = 0.0;
};

AblationCell run_ablation_cell(const TrainConfig& cfg, int n,
                               double cue_strength, uint64_t corpus_seed) {
  const SyntheticCorpus corpus =
      generate_synthetic_corpus(n, cue_strength, corpus_seed);
  const auto [ztr, otr] = split_by_setting(corpus.train);
  const auto [zdv, odv] = split_by_setting(corpus.dev);

  const EncoderConfig enc{};  // default tiny encoder
  AblationCell cell;

  TrainResult zero = train(ztr, zdv, cfg, enc);
  cell.zero_f1 = zero.history[zero.best_epoch - 1].dev_macro_f1;

  TrainResult one = train(otr, odv, cfg, enc, &zero.best);
  cell.one_f1 = one.history[one.best_epoch - 1].dev_macro_f1;

  PredictionSet preds = predict_dataset(one.best, odv);
  preds = apply_overrides(preds, build_override_table(otr));
  std::vector<int> gold_l, pred_l;
  for (const Instance& i : odv.instances) gold_l.push_back(*i.label);
  for (const Prediction& p : preds.items) pred_l.push_back(p.label);
  cell.one_post_f1 = macro_f1(gold_l, pred_l);
  return cell;
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0;
    for (double x : xs) acc += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return r;
}

int cmd_ablate(uint64_t seed, int seeds, int n, double cue_strength,
               int epochs, const fs::path& out) {
  fs::create_directories(out);
  const std::string started = now_utc();

  TrainConfig base;
  base.epochs = epochs;
  base.rdrop_alpha = 0.0;

  struct Variant {
    std::string name;
    TrainConfig cfg;
    bool postprocess_row;  // reuse the previous variant's cells
  };
  std::vector<Variant> variants;
  variants.push_back({"baseline_ce", base, false});
  {
    TrainConfig c = base;
    c.fgm_epsilon = 1.0;
    variants.push_back({"+fgm", c, false});
  }
  {
    TrainConfig c = base;
    c.rdrop_alpha = 1.0;
    variants.push_back({"+rdrop", c, false});
  }
  variants.push_back({"+rdrop+override", variants.back().cfg, true});
  {
    TrainConfig c = base;
    c.aeda_enabled = true;
    variants.push_back({"+aeda", c, false});
  }
  {
    TrainConfig c = base;
    c.contrastive_weight = 0.1;
    variants.push_back({"+contrastive", c, false});
  }

  std::string jsonl;
  std::string table;
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %-19s %-19s\n", "variant",
                "zero-shot", "one-shot");
  table += line;

  std::vector<AblationCell> prev_cells;
  for (const Variant& v : variants) {
    std::vector<AblationCell> cells;
    if (v.postprocess_row) {
      cells = prev_cells;
    } else {
      for (int s = 0; s < seeds; ++s) {
        TrainConfig cfg = v.cfg;
        cfg.seed = seed + static_cast<uint64_t>(s);
        cells.push_back(
            run_ablation_cell(cfg, n, cue_strength, seed + s));
      }
    }
    std::vector<double> zs, os;
    for (int s = 0; s < seeds; ++s) {
      const AblationCell& c = cells[s];
      const double one = v.postprocess_row ? c.one_post_f1 : c.one_f1;
      zs.push_back(c.zero_f1);
      os.push_back(one);
      ordered_json j;
      j["variant"] = v.name;
      j["seed"] = seed + static_cast<uint64_t>(s);
      j["zero_shot_f1"] = c.zero_f1;
      j["one_shot_f1"] = one;
      jsonl += j.dump();
      jsonl += "\n";
    }
    const MeanSd z = mean_sd(zs), o = mean_sd(os);
    std::snprintf(line, sizeof line,
                  "%-18s %7.4f \xc2\xb1 %6.4f    %7.4f \xc2\xb1 %6.4f\n",
                  v.name.c_str(), z.mean, z.sd, o.mean, o.sd);
    table += line;
    std::fputs(line, stdout);
    prev_cells = cells;
  }

  detail::write_file_atomic(out / "ablation.txt", table);
  detail::write_file_atomic(out / "ablation.jsonl", jsonl);

  ordered_json m;
  m["command"] = "ablate";
  m["seed"] = seed;
  m["seeds"] = seeds;
  m["n"] = n;
  m["cue_strength"] = cue_strength;
  m["epochs"] = epochs;
  m["outputs"] = {(out / "ablation.txt").string(),
                  (out / "ablation.jsonl").string()};
  m["started_at"] = started;
  write_manifest(out, std::move(m));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Idiomatic-expression usage classifier: marking, training, "
      "prediction, evaluation"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic labeled corpus");
  int gen_n = 2000;
  double gen_cue = 1.0;
  uint64_t gen_seed = 42;
  std::string gen_out = "synthetic";
  gen->add_option("--n", gen_n, "Total rows (train+dev)");
  gen->add_option("--cue-strength", gen_cue,
                  "Probability the cue word agrees with the label");
  gen->add_option("--seed", gen_seed, "Corpus seed");
  gen->add_option("--out-dir", gen_out, "Output directory");

  // stats
  auto* stats = app.add_subcommand("stats", "Token-length statistics");
  std::string stats_data;
  std::string stats_tok = "builtin";
  stats->add_option("data", stats_data, "Dataset CSV/TSV")->required();
  stats->add_option("--tokenizer", stats_tok, "builtin|whitespace");

  // train
  auto* tr = app.add_subcommand("train", "Train a classifier");
  std::string tr_train, tr_dev, tr_config, tr_init;
  std::string tr_out = "run";
  EncoderFlags tr_enc;
  PolicyFlags tr_pol;
  tr->add_option("train", tr_train, "Training CSV/TSV")->required();
  tr->add_option("dev", tr_dev, "Development CSV/TSV")->required();
  tr->add_option("--config", tr_config, "key=value training config file");
  tr->add_option("--init-checkpoint", tr_init,
                 "Warm-start parameters and vocabulary from this checkpoint");
  tr->add_option("--out-dir", tr_out, "Output directory");
  add_encoder_flags(tr, &tr_enc);
  add_policy_flags(tr, &tr_pol);

  // predict
  auto* pr = app.add_subcommand("predict", "Predict labels for a dataset");
  std::vector<std::string> pr_ckpts;
  std::string pr_data, pr_post;
  std::string pr_out = "predictions.csv";
  PolicyFlags pr_pol;
  pr->add_option("data", pr_data, "Dataset CSV/TSV")->required();
  pr->add_option("-c,--checkpoint", pr_ckpts,
                 "Model checkpoint (repeat for mean-probability fusion)")
      ->required();
  pr->add_option("--postprocess", pr_post,
                 "Labeled training data; unanimous-label expressions seen "
                 "there override model predictions");
  pr->add_option("-o,--out", pr_out, "Output CSV path");
  add_policy_flags(pr, &pr_pol);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score predictions against gold");
  std::string ev_pred, ev_gold, ev_group;
  bool ev_json = false;
  ev->add_option("predictions", ev_pred, "Prediction CSV")->required();
  ev->add_option("gold", ev_gold, "Gold dataset CSV/TSV")->required();
  ev->add_option("--group-by", ev_group, "none|language|setting");
  ev->add_flag("--json", ev_json, "Line-delimited JSON reports");

  // ablate
  auto* ab = app.add_subcommand(
      "ablate", "Train the objective matrix on synthetic corpora");
  uint64_t ab_seed = 42;
  int ab_seeds = 5, ab_n = 1000, ab_epochs = 20;
  double ab_cue = 0.85;
  std::string ab_out = "ablation";
  ab->add_option("--seed", ab_seed, "Base seed");
  ab->add_option("--seeds", ab_seeds, "Number of seeds per variant");
  ab->add_option("--n", ab_n, "Synthetic corpus size");
  ab->add_option("--cue-strength", ab_cue, "Cue agreement probability");
  ab->add_option("--epochs", ab_epochs, "Epochs per training stage");
  ab->add_option("--out-dir", ab_out, "Output directory");

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen(gen_n, gen_cue, gen_seed, gen_out);
    if (stats->parsed()) return cmd_stats(stats_data, stats_tok);
    if (tr->parsed())
      return cmd_train(tr_train, tr_dev, tr_config, tr_init, tr_out, tr_enc,
                       tr_pol);
    if (pr->parsed())
      return cmd_predict(pr_ckpts, pr_data, pr_post, pr_out, pr_pol);
    if (ev->parsed()) return cmd_evaluate(ev_pred, ev_gold, ev_group, ev_json);
    if (ab->parsed())
      return cmd_ablate(ab_seed, ab_seeds, ab_n, ab_cue, ab_epochs, ab_out);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
