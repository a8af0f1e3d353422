#pragma once
// Command implementations behind the stancegen executable. Every command
// returns a process exit code:
//   0 ok, 1 diagnostic failure / internal error, 2 configuration,
//   3 data, 4 checkpoint, 5 capability.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stancegen/data.hpp"
#include "stancegen/model.hpp"
#include "stancegen/tensor.hpp"
#include "stancegen/training.hpp"

namespace stancegen {

enum ExitCode : int {
  kExitOk = 0,
  kExitDiagnostic = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitCheckpoint = 4,
  kExitCapability = 5,
};

// Flat key=value configuration. Lines starting with '#' are comments.
//
// dataset      semeval (default), synthetic-domain-shift, synthetic-separable
// data_dir     base for relative data paths; defaults to $STANCEGEN_DATA_DIR
// data_files   comma-separated TSV files; default: every *.txt / *.tsv in
//              data_dir whose name does not start with "glove"
// embeddings   word-vector file, or "fallback" for hashed random vectors;
//              default: data_dir/glove.6B.<embed_dim>d.txt if present
// variant, lambda, seeds, out_dir, precision, count_check, min_count,
// embed_dim, hidden_dim, attn_dim, mlp_dim, dropout, batch_size,
// learning_rate, l2, patience, max_epochs, clip_norm, threads,
// parallel_seeds, data_seed
struct RunConfig {
  std::string dataset = "semeval";
  std::filesystem::path data_dir;
  std::vector<std::string> data_files;
  std::string embeddings;
  std::filesystem::path out_dir = "runs";
  Variant variant = Variant::BCAInvar;
  Hyperparams hp;
  std::vector<std::uint64_t> seeds{1};
  Precision precision = Precision::Float32;
  bool count_check = true;
  std::size_t min_count = 1;
  std::size_t attn_dim = 0;
  std::size_t mlp_dim = 0;
  bool parallel_seeds = false;
  std::uint64_t data_seed = 1;

  // Sets one key; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  // Fills data_dir from the environment, resolves defaults and checks that
  // referenced paths exist. Throws ConfigError.
  void finalize();
  ModelSpec model_spec(std::size_t num_domains) const;
};

RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

struct PreparedData {
  Split split;
  Vocabulary vocab;
  std::shared_ptr<const EmbeddingMatrix> embeddings;
};

// Parses (or generates) the corpora named by a finalized config, splits
// them, builds the vocabulary on the training split and loads embeddings.
PreparedData prepare_data(const RunConfig& cfg);

// Corpus from TSV files, indexed with `vocab`.
Corpus load_corpus(std::span<const std::filesystem::path> files, const Vocabulary& vocab);

struct SeedResult {
  std::uint64_t seed = 0;
  double dev_macro_f1 = 0.0;
  double test_macro_f1 = 0.0;
  std::size_t best_epoch = 0;
  std::size_t stop_epoch = 0;
  double wall_seconds = 0.0;
};

// "seed=<s>\tdev=<f1>\ttest=<f1>\tbest_epoch=<n>" lines plus a median line.
std::string format_summary(std::span<const SeedResult> results);
double median(std::vector<double> v);

// Trains one seed and writes <out_dir>/seed_<s>/{model.ckpt,train_log.tsv,
// metrics.txt}.
SeedResult train_one_seed(const RunConfig& cfg, const PreparedData& data, std::uint64_t seed);

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> data_files;  // evaluated as one corpus
  std::optional<RunConfig> config;                // enables split + vocab check
  std::string split = "test";                     // used when data_files empty
  unsigned threads = 0;
};

int cmd_eval(const EvalRequest& req, std::ostream& out, std::ostream& err);
int cmd_predict(const std::filesystem::path& checkpoint, const std::string& target,
                const std::string& text, std::ostream& out, std::ostream& err);
int cmd_dump_attention(const EvalRequest& req, const std::filesystem::path& out_dir,
                       std::ostream& out, std::ostream& err);
int cmd_gradcheck(std::ostream& out, std::ostream& err, const std::string& inject_fault = {});

// Runs `body`, translating exceptions to exit codes and printing them to err.
int run_command(const std::function<int()>& body, std::ostream& err);

}  // namespace stancegen
