#include "stancegen/evaluation.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "stancegen/errors.hpp"

namespace stancegen {

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (std::size_t c : row) n += c;
  }
  return n;
}

MetricsReport compute_metrics(std::span<const Stance> preds, std::span<const Stance> golds) {
  if (preds.size() != golds.size()) {
    throw ArgumentError("compute_metrics: " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(golds.size()) + " gold labels");
  }
  if (preds.empty()) throw ArgumentError("compute_metrics: no examples");
  MetricsReport r;
  r.count = preds.size();
  for (std::size_t i = 0; i < preds.size(); ++i) r.confusion.add(golds[i], preds[i]);
  const auto& m = r.confusion.counts;
  for (std::size_t k = 0; k < kNumStances; ++k) {
    std::size_t predicted = 0, gold = 0;
    for (std::size_t j = 0; j < kNumStances; ++j) {
      predicted += m[j][k];
      gold += m[k][j];
    }
    const double tp = static_cast<double>(m[k][k]);
    ClassScores& s = r.per_class[k];
    s.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    s.recall = gold ? tp / static_cast<double>(gold) : 0.0;
    const double denom = s.precision + s.recall;
    s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  }
  r.macro_f1 = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
  return r;
}

std::string format_metrics(const MetricsReport& report, const std::string& split) {
  std::ostringstream os;
  char buf[64];
  os << "[" << split << "]\n";
  for (std::size_t k = 0; k < kNumStances; ++k) {
    const auto name = stance_name(static_cast<Stance>(k));
    const auto& s = report.per_class[k];
    std::snprintf(buf, sizeof buf, "%.4f", s.precision);
    os << name << ".P=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.4f", s.recall);
    os << name << ".R=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.4f", s.f1);
    os << name << ".F1=" << buf << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.4f", report.macro_f1);
  os << "Macro=" << buf << "\n";
  os << "N=" << report.count << "\n";
  return os.str();
}

template <typename Real>
std::vector<ForwardOutput> predict_corpus(const Model<Real>& model, const Corpus& corpus,
                                          unsigned threads) {
  std::vector<ForwardOutput> out(corpus.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, corpus.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      out[i] = model_forward(model, corpus.examples[i], false, nullptr);
    }
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < corpus.size(); i = next++) {
          out[i] = model_forward(model, corpus.examples[i], false, nullptr);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

template <typename Real>
MetricsReport evaluate(const Model<Real>& model, const Corpus& corpus, unsigned threads) {
  auto outputs = predict_corpus(model, corpus, threads);
  std::vector<Stance> preds, golds;
  preds.reserve(outputs.size());
  golds.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    preds.push_back(outputs[i].predicted());
    golds.push_back(corpus.examples[i].stance);
  }
  return compute_metrics(preds, golds);
}

std::string attention_record_json(const AttentionRecord& record) {
  nlohmann::ordered_json j;
  j["target"] = record.target;
  j["gold"] = stance_name(record.gold);
  j["predicted"] = stance_name(record.predicted);
  j["tokens"] = record.tokens;
  j["alpha"] = record.alpha;
  return j.dump();
}

namespace {

std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string attention_html(std::span<const AttentionRecord> records) {
  std::ostringstream os;
  os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Attention</title>\n"
     << "<style>body{font-family:sans-serif} .rec{margin:1em 0} "
     << ".tok{padding:2px 3px;margin:1px;display:inline-block} "
     << ".meta{font-size:85%;color:#444}</style></head><body>\n";
  char buf[64];
  for (const auto& r : records) {
    double peak = 0.0;
    for (double a : r.alpha) peak = std::max(peak, a);
    os << "<div class=\"rec\"><div class=\"meta\">Target: " << html_escape(r.target)
       << " | gold: " << stance_name(r.gold) << " | predicted: " << stance_name(r.predicted)
       << "</div><div>";
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
      const double intensity = peak > 0.0 ? r.alpha[i] / peak : 0.0;
      std::snprintf(buf, sizeof buf, "rgba(220,30,30,%.3f)", intensity);
      os << "<span class=\"tok\" style=\"background:" << buf << "\" title=\"";
      std::snprintf(buf, sizeof buf, "%.4f", r.alpha[i]);
      os << buf << "\">" << html_escape(r.tokens[i]) << "</span>";
    }
    os << "</div></div>\n";
  }
  os << "</body></html>\n";
  return os.str();
}

template <typename Real>
std::size_t dump_attention(const Model<Real>& model, const Corpus& corpus,
                           const std::filesystem::path& jsonl, const std::filesystem::path& html,
                           unsigned threads) {
  if (!has_attention(model.spec().variant)) {
    throw CapabilityError(std::string(variant_name(model.spec().variant)) +
                          " has no attention layer");
  }
  auto outputs = predict_corpus(model, corpus, threads);
  std::vector<AttentionRecord> records;
  records.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& ex = corpus.examples[i];
    AttentionRecord r;
    r.target = ex.target;
    r.tokens = ex.sentence_tokens;
    r.alpha = outputs[i].attention.value();
    r.gold = ex.stance;
    r.predicted = outputs[i].predicted();
    records.push_back(std::move(r));
  }
  if (!jsonl.parent_path().empty()) std::filesystem::create_directories(jsonl.parent_path());
  std::ofstream out(jsonl, std::ios::binary);
  if (!out) throw DataError("cannot write " + jsonl.string());
  for (const auto& r : records) out << attention_record_json(r) << "\n";
  if (!html.empty()) {
    std::ofstream h(html, std::ios::binary);
    if (!h) throw DataError("cannot write " + html.string());
    h << attention_html(records);
  }
  return records.size();
}

template std::vector<ForwardOutput> predict_corpus(const Model<float>&, const Corpus&, unsigned);
template std::vector<ForwardOutput> predict_corpus(const Model<double>&, const Corpus&, unsigned);
template MetricsReport evaluate(const Model<float>&, const Corpus&, unsigned);
template MetricsReport evaluate(const Model<double>&, const Corpus&, unsigned);
template std::size_t dump_attention(const Model<float>&, const Corpus&,
                                    const std::filesystem::path&, const std::filesystem::path&,
                                    unsigned);
template std::size_t dump_attention(const Model<double>&, const Corpus&,
                                    const std::filesystem::path&, const std::filesystem::path&,
                                    unsigned);

}  // namespace stancegen
