#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stancegen/data.hpp"
#include "stancegen/model.hpp"

namespace stancegen {

// rows = gold, cols = predicted, order FAVOR, AGAINST, NONE.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumStances>, kNumStances> counts{};

  void add(Stance gold, Stance pred) {
    ++counts[static_cast<std::size_t>(gold)][static_cast<std::size_t>(pred)];
  }
  std::size_t total() const;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::array<ClassScores, kNumStances> per_class{};
  double macro_f1 = 0.0;  // mean F1 of FAVOR and AGAINST only
  ConfusionMatrix confusion;
  std::size_t count = 0;

  const ClassScores& operator[](Stance s) const { return per_class[static_cast<std::size_t>(s)]; }
};

// Precision, recall and F1 use 0 whenever the denominator is 0.
MetricsReport compute_metrics(std::span<const Stance> preds, std::span<const Stance> golds);

// Block of key=value lines headed by "[split]", mirroring the result tables:
// FAVOR.P, FAVOR.R, FAVOR.F1, AGAINST.*, NONE.*, Macro.
std::string format_metrics(const MetricsReport& report, const std::string& split);

// Evaluation-mode forward over a corpus; results in corpus order. Work is
// spread over `threads` workers (0 = hardware concurrency) sharing read-only
// parameters.
template <typename Real>
std::vector<ForwardOutput> predict_corpus(const Model<Real>& model, const Corpus& corpus,
                                          unsigned threads = 0);

template <typename Real>
MetricsReport evaluate(const Model<Real>& model, const Corpus& corpus, unsigned threads = 0);

struct AttentionRecord {
  std::string target;
  std::vector<std::string> tokens;
  std::vector<double> alpha;
  Stance gold = Stance::None;
  Stance predicted = Stance::None;
};

// Writes one JSON object per line to `jsonl` and, when `html` is non-empty, a
// static heatmap page. Returns the number of records. Throws CapabilityError
// for variants without an attention layer.
template <typename Real>
std::size_t dump_attention(const Model<Real>& model, const Corpus& corpus,
                           const std::filesystem::path& jsonl,
                           const std::filesystem::path& html = {}, unsigned threads = 0);

std::string attention_record_json(const AttentionRecord& record);
std::string attention_html(std::span<const AttentionRecord> records);

}  // namespace stancegen
