// stancegen: train, evaluate and inspect cross-target stance classifiers.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stancegen/commands.hpp"
#include "stancegen/errors.hpp"

using namespace stancegen;

namespace {

struct EvalFlags {
  std::string checkpoint;
  std::vector<std::string> data;
  std::string config;
  std::string split = "test";
  unsigned threads = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--checkpoint,-c", checkpoint, "Model checkpoint")->required();
    cmd->add_option("--data", data, "TSV file(s) evaluated as one dataset");
    cmd->add_option("--config", config, "Run config; evaluates --split and checks the vocabulary");
    cmd->add_option("--split", split, "train, dev or test (with --config)");
    cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
  }

  EvalRequest request() const {
    EvalRequest r;
    r.checkpoint = checkpoint;
    for (const auto& d : data) r.data_files.emplace_back(d);
    if (!config.empty()) r.config = load_config(config);
    r.split = split;
    r.threads = threads;
    return r;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-target stance detection with domain-adversarial training"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train one model per seed");
  std::string config_path, variant, seeds, out_dir, precision;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool no_count_check = false, parallel_seeds = false;
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--variant", variant, "Concat, ConcatInvar, BCA, BCAInvar or BCAInvarSpec");
  train->add_option("--lambda", lambda, "Weight of the domain loss");
  auto* seed_opt = train->add_option("--seed", seed, "Single seed");
  train->add_option("--seeds", seeds, "Comma-separated seeds")->excludes(seed_opt);
  train->add_flag("--no-count-check", no_count_check, "Do not enforce the expected split sizes");
  train->add_option("--out-dir", out_dir, "Output directory");
  train->add_option("--precision", precision, "float32 or float64");
  train->add_flag("--parallel-seeds", parallel_seeds, "Train seeds concurrently");
  train->add_option("--set", overrides, "Extra key=value config overrides");

  // eval / dump-attention
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  EvalFlags eval_flags;
  eval_flags.add_to(eval);

  auto* dump = app.add_subcommand("dump-attention", "Write attention weights per example");
  EvalFlags dump_flags;
  dump_flags.add_to(dump);
  std::string dump_out;
  dump->add_option("--out", dump_out, "Output directory (created if missing)")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "Classify one target/sentence pair");
  std::string pred_ckpt, pred_target, pred_text;
  predict->add_option("--checkpoint,-c", pred_ckpt, "Model checkpoint")->required();
  predict->add_option("--target", pred_target, "Target text")->required();
  predict->add_option("--text", pred_text, "Sentence text")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every backward rule");
  std::string inject_fault;
  gradcheck->add_option("--inject-fault", inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*train) {
    return run_command(
        [&] {
          RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
          for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
          }
          if (!variant.empty()) cfg.set("variant", variant);
          if (lambda) cfg.hp.lambda = *lambda;
          if (seed) cfg.seeds = {*seed};
          if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
          if (no_count_check) cfg.count_check = false;
          if (!out_dir.empty()) cfg.out_dir = out_dir;
          if (!precision.empty()) cfg.set("precision", precision);
          if (parallel_seeds) cfg.parallel_seeds = true;
          return cmd_train(cfg, std::cout, std::cerr);
        },
        std::cerr);
  }
  if (*eval) {
    return run_command([&] { return cmd_eval(eval_flags.request(), std::cout, std::cerr); },
                       std::cerr);
  }
  if (*dump) {
    return run_command(
        [&] { return cmd_dump_attention(dump_flags.request(), dump_out, std::cout, std::cerr); },
        std::cerr);
  }
  if (*predict) return cmd_predict(pred_ckpt, pred_target, pred_text, std::cout, std::cerr);
  if (*gradcheck) return cmd_gradcheck(std::cout, std::cerr, inject_fault);
  return kExitConfig;
}
