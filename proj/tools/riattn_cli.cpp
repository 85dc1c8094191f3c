// Copyright 2026 The riattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// riattn: gen-data / train / eval / infer / render.
//
// Exit codes: 0 success, 1 bad input (one line "error: <Category>: ..." on
// stderr), 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "riattn/riattn.hpp"

namespace fs = std::filesystem;
using namespace riattn;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitUsage = 2;

/// Default location for outputs when --out is not given.
fs::path default_out(const std::string& name) {
  if (const char* dir = std::getenv("RIATTN_OUT_DIR"); dir && *dir) return fs::path(dir) / name;
  return fs::path(name);
}

fs::path sidecar(const fs::path& ckpt, const std::string& suffix) {
  return fs::path(ckpt.string() + suffix);
}

struct GenArgs {
  std::size_t n = 64;
  std::uint64_t seed = 1;
  std::string out;
  SceneSpec spec;
};

int run_gen_data(const GenArgs& a) {
  const fs::path out = a.out.empty() ? default_out("data") : fs::path(a.out);
  const auto scenes = generate_dataset(a.spec, a.n, a.seed);
  save_scenes(out, scenes);
  nlohmann::ordered_json meta;
  meta["seed"] = a.seed;
  meta["n"] = a.n;
  meta["h"] = a.spec.h;
  meta["w"] = a.spec.w;
  meta["f"] = a.spec.f;
  meta["amplitude"] = a.spec.amplitude;
  meta["noise_sigma"] = a.spec.noise_sigma;
  meta["reason_prob"] = a.spec.reason_prob;
  write_text_atomic(out / "dataset.json", meta.dump(2) + "\n");
  std::cout << "scenes=" << scenes.size() << "\nout=" << out.string() << "\n";
  return 0;
}

/// Seed recorded by gen-data, if the directory has one.
std::optional<std::uint64_t> dataset_seed(const fs::path& dir) {
  if (!fs::exists(dir / "dataset.json")) return std::nullopt;
  try {
    return nlohmann::json::parse(read_text(dir / "dataset.json")).at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("dataset.json: ") + e.what());
  }
}

struct TrainArgs {
  std::string data, config, out;
  std::vector<std::string> overrides;  // key=value
  std::optional<std::size_t> epochs, batch_size, threads, d;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::string> loss_mask, optimizer;
  bool gate = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  ConfigMap kv;
  if (!a.config.empty()) kv = parse_config(read_text(a.config));
  for (const auto& o : a.overrides) {
    auto more = parse_config(o);
    if (more.empty()) fail(Errc::InvalidConfig, "--set expects key=value, got '" + o + "'");
    for (auto& [k, v] : more) kv[k] = v;
  }
  if (a.epochs) kv["epochs"] = std::to_string(*a.epochs);
  if (a.batch_size) kv["batch_size"] = std::to_string(*a.batch_size);
  if (a.threads) kv["threads"] = std::to_string(*a.threads);
  if (a.d) kv["d"] = std::to_string(*a.d);
  if (a.seed) kv["seed"] = std::to_string(*a.seed);
  if (a.lr) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *a.lr);
    kv["learning_rate"] = buf;
  }
  if (a.loss_mask) kv["loss_mask"] = *a.loss_mask;
  if (a.optimizer) kv["optimizer"] = *a.optimizer;
  if (a.gate) kv["gate_enabled"] = "true";
  apply_config(kv, cfg);

  const fs::path data(a.data);
  const auto vocab = read_vocabulary(data / "vocab.txt");
  const auto scenes = load_scenes(data, vocab, cfg.max_length);
  if (scenes.empty()) fail(Errc::EmptyDataset, "no scenes in " + data.string());
  const auto examples = to_examples(scenes);

  const fs::path out = a.out.empty() ? default_out("model.riac") : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_vocabulary(sidecar(out, ".vocab.txt"), vocab);
  write_text_atomic(sidecar(out, ".config"), format_config(cfg));

  auto hook = [&](std::size_t epoch, const DecoderParams& params, const TrainReport& r) {
    const auto bytes = encode_checkpoint(params);
    write_file_atomic(out, bytes);
    std::fprintf(stderr, "epoch %zu loss %.6f accuracy %.4f\n", epoch + 1, r.epoch_loss.back(),
                 r.token_accuracy.back());
    return checkpoint_id(bytes);
  };
  auto [params, report] = fit(examples, cfg, vocab.size(), hook);
  save_checkpoint(out, params);
  report.checkpoint_id = checkpoint_id(read_file(out));

  auto j = train_report_json(report);
  if (auto s = dataset_seed(data)) j["data_seed"] = *s;
  write_text_atomic(sidecar(out, ".report.json"), j.dump(2) + "\n");
  std::cout << "final_loss=" << nlohmann::json(report.epoch_loss.back()).dump() << "\n"
            << "checkpoint=" << out.string() << "\n"
            << "checkpoint_id=" << report.checkpoint_id << "\n";
  return 0;
}

Vocabulary vocab_for(const fs::path& ckpt, const std::string& explicit_path) {
  if (!explicit_path.empty()) return read_vocabulary(explicit_path);
  return read_vocabulary(sidecar(ckpt, ".vocab.txt"));
}

struct EvalArgs {
  std::string ckpt, data, json_out, vocab;
  std::size_t threads = 1;
  bool held_out = false;
};

int run_eval(const EvalArgs& a) {
  const fs::path ckpt(a.ckpt), data(a.data);
  const auto params = load_checkpoint(ckpt);
  const auto vocab = vocab_for(ckpt, a.vocab);
  if (vocab.size() != params.config.vocab_size)
    fail(Errc::DimMismatch, "vocabulary size does not match the checkpoint");
  if (a.held_out) {
    const auto report_path = sidecar(ckpt, ".report.json");
    std::optional<std::uint64_t> train_seed;
    if (fs::exists(report_path)) {
      auto j = nlohmann::json::parse(read_text(report_path), nullptr, false);
      if (j.is_object() && j.contains("data_seed")) train_seed = j["data_seed"].get<std::uint64_t>();
    }
    const auto test_seed = dataset_seed(data);
    if (!train_seed || !test_seed)
      fail(Errc::InvalidConfig, "--held-out needs the data seeds of both training and test sets");
    if (*train_seed == *test_seed)
      fail(Errc::InvalidConfig, "test data was generated with the training seed " +
                                    std::to_string(*train_seed));
  }
  const auto scenes = load_scenes(data, vocab, params.config.max_length);
  const auto examples = to_examples(scenes);
  const auto m = evaluate_dataset(params, examples, vocab, a.threads);
  std::cout << format_metrics_text(m);
  if (!a.json_out.empty()) write_text_atomic(a.json_out, metrics_json(m).dump() + "\n");
  return 0;
}

struct InferArgs {
  std::string ckpt, features, vocab, trace, render, image;
  std::size_t scale = 32;
};

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

int run_infer(const InferArgs& a) {
  const fs::path ckpt(a.ckpt);
  const auto params = load_checkpoint(ckpt);
  const auto vocab = vocab_for(ckpt, a.vocab);
  if (vocab.size() != params.config.vocab_size)
    fail(Errc::DimMismatch, "vocabulary size does not match the checkpoint");
  const auto features = read_feature_file(a.features);
  check_features(features, params.config);
  const auto [seq, trace] = decode_greedy(features, params);
  const auto reasons = extract_reason_set(seq, vocab);
  std::cout << "sentence=" << decode(seq, vocab) << "\n"
            << "reasons=" << join(reason_strings(reasons), ";") << "\n"
            << "actions=" << join(action_strings(derive_actions(reasons)), ";") << "\n";
  if (!a.trace.empty()) write_text_atomic(a.trace, format_trace(trace, vocab));
  if (!a.render.empty()) {
    RenderOptions opts;
    opts.scale = a.scale;
    if (!a.image.empty()) opts.source_image = a.image;
    render_attention(trace, vocab, a.render, opts);
  }
  return 0;
}

struct RenderArgs {
  std::string trace, out, image;
  std::size_t scale = 32;
  double alpha = 0.5;
};

int run_render(const RenderArgs& a) {
  const auto [trace, words] = parse_trace(read_text(a.trace));
  RenderOptions opts;
  opts.scale = a.scale;
  opts.alpha = a.alpha;
  if (!a.image.empty()) opts.source_image = a.image;
  const fs::path out = a.out.empty() ? default_out("render") : fs::path(a.out);
  render_attention(trace, words, out, opts);
  std::cout << "steps=" << trace.size() << "\nout=" << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reason-attention decoder: synthetic data, training, evaluation and inference"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic scene directory");
  gen_cmd->add_option("--n", gen.n, "Number of scenes")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Scene stream seed");
  gen_cmd->add_option("--out", gen.out, "Output directory (default $RIATTN_OUT_DIR/data)");
  gen_cmd->add_option("--height", gen.spec.h, "Feature map rows");
  gen_cmd->add_option("--width", gen.spec.w, "Feature map columns");
  gen_cmd->add_option("--channels", gen.spec.f, "Feature channels");
  gen_cmd->add_option("--amplitude", gen.spec.amplitude, "Planted signal amplitude");
  gen_cmd->add_option("--noise", gen.spec.noise_sigma, "Noise standard deviation");
  gen_cmd->add_option("--reason-prob", gen.spec.reason_prob, "Per-class activation probability");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a decoder on a scene directory");
  train_cmd->add_option("--data", train.data, "Scene directory")->required();
  train_cmd->add_option("--config", train.config, "key=value config file");
  train_cmd->add_option("--out", train.out, "Checkpoint path (default $RIATTN_OUT_DIR/model.riac)");
  train_cmd->add_option("--set", train.overrides, "Config override key=value (repeatable)");
  train_cmd->add_option("--epochs", train.epochs);
  train_cmd->add_option("--batch-size", train.batch_size);
  train_cmd->add_option("--lr", train.lr, "Learning rate");
  train_cmd->add_option("--d", train.d, "Hidden size");
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--threads", train.threads, "Worker threads for batch gradients");
  train_cmd->add_option("--loss-mask", train.loss_mask, "none or after_eos");
  train_cmd->add_option("--optimizer", train.optimizer, "adam or sgd");
  train_cmd->add_flag("--gate", train.gate, "Enable the input gate");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a scene directory");
  eval_cmd->add_option("--ckpt", eval.ckpt)->required();
  eval_cmd->add_option("--data", eval.data)->required();
  eval_cmd->add_option("--json", eval.json_out, "Also write the metrics as one JSON line");
  eval_cmd->add_option("--vocab", eval.vocab, "Vocabulary file (default <ckpt>.vocab.txt)");
  eval_cmd->add_option("--threads", eval.threads)->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--held-out", eval.held_out, "Refuse data generated with the training seed");

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "Explain one feature file");
  infer_cmd->add_option("--ckpt", infer.ckpt)->required();
  infer_cmd->add_option("--features", infer.features)->required();
  infer_cmd->add_option("--vocab", infer.vocab, "Vocabulary file (default <ckpt>.vocab.txt)");
  infer_cmd->add_option("--trace", infer.trace, "Write the attention trace as JSON");
  infer_cmd->add_option("--render", infer.render, "Render attention maps into this directory");
  infer_cmd->add_option("--image", infer.image, "PPM image to overlay the maps on");
  infer_cmd->add_option("--scale", infer.scale)->check(CLI::PositiveNumber);

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "Render an attention trace");
  render_cmd->add_option("--trace", render.trace)->required();
  render_cmd->add_option("--out", render.out, "Output directory (default $RIATTN_OUT_DIR/render)");
  render_cmd->add_option("--image", render.image, "PPM image to overlay the maps on");
  render_cmd->add_option("--scale", render.scale)->check(CLI::PositiveNumber);
  render_cmd->add_option("--alpha", render.alpha)->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: UsageError: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*infer_cmd) return run_infer(infer);
    if (*render_cmd) return run_render(render);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitUsage;
}
