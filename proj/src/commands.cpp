#include "stancegen/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "stancegen/checkpoint.hpp"
#include "stancegen/diagnostics.hpp"
#include "stancegen/errors.hpp"
#include "stancegen/evaluation.hpp"
#include "stancegen/simd/kernels.hpp"
#include "stancegen/synthetic.hpp"

namespace fs = std::filesystem;

namespace stancegen {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

template <typename T>
T parse_num(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end) {
    throw ConfigError("bad value '" + std::string(v) + "' for '" + std::string(key) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  std::string s;
  for (char c : v) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for '" + std::string(key) + "'");
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "dataset") {
    dataset = std::string(value);
  } else if (key == "data_dir") {
    data_dir = std::string(value);
  } else if (key == "data_files") {
    data_files = split_list(value);
  } else if (key == "embeddings") {
    embeddings = std::string(value);
  } else if (key == "out_dir") {
    out_dir = std::string(value);
  } else if (key == "variant") {
    variant = parse_variant(value);
  } else if (key == "lambda") {
    hp.lambda = parse_num<double>(key, value);
  } else if (key == "seed" || key == "seeds") {
    seeds = parse_seed_list(value);
  } else if (key == "precision") {
    precision = parse_precision(value);
  } else if (key == "count_check") {
    count_check = parse_bool(key, value);
  } else if (key == "min_count") {
    min_count = parse_num<std::size_t>(key, value);
  } else if (key == "embed_dim") {
    hp.embed_dim = parse_num<std::size_t>(key, value);
  } else if (key == "hidden_dim") {
    hp.hidden_dim = parse_num<std::size_t>(key, value);
  } else if (key == "attn_dim") {
    attn_dim = parse_num<std::size_t>(key, value);
  } else if (key == "mlp_dim") {
    mlp_dim = parse_num<std::size_t>(key, value);
  } else if (key == "dropout") {
    hp.dropout = parse_num<double>(key, value);
  } else if (key == "batch_size") {
    hp.batch_size = parse_num<std::size_t>(key, value);
  } else if (key == "learning_rate") {
    hp.learning_rate = parse_num<double>(key, value);
  } else if (key == "l2") {
    hp.l2 = parse_num<double>(key, value);
  } else if (key == "patience") {
    hp.patience = parse_num<std::size_t>(key, value);
  } else if (key == "max_epochs") {
    hp.max_epochs = parse_num<std::size_t>(key, value);
  } else if (key == "clip_norm") {
    hp.clip_norm = parse_num<double>(key, value);
  } else if (key == "threads") {
    hp.eval_threads = parse_num<unsigned>(key, value);
  } else if (key == "parallel_seeds") {
    parallel_seeds = parse_bool(key, value);
  } else if (key == "data_seed") {
    data_seed = parse_num<std::uint64_t>(key, value);
  } else {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
}

void RunConfig::finalize() {
  if (data_dir.empty()) {
    if (const char* env = std::getenv("STANCEGEN_DATA_DIR"); env && *env) data_dir = env;
  }
  hp.validate();
  if (seeds.empty()) throw ConfigError("no seeds given");
  model_spec(is_adversarial(variant) ? 4 : 0).validate();

  if (dataset == "synthetic-domain-shift" || dataset == "synthetic-separable") return;
  if (dataset != "semeval") throw ConfigError("unknown dataset '" + dataset + "'");

  if (data_files.empty()) {
    if (data_dir.empty()) {
      throw ConfigError("no data_files given and STANCEGEN_DATA_DIR is not set");
    }
    if (!fs::is_directory(data_dir)) {
      throw ConfigError("data directory " + data_dir.string() + " does not exist");
    }
    for (const auto& entry : fs::directory_iterator(data_dir)) {
      const auto name = entry.path().filename().string();
      const auto ext = entry.path().extension().string();
      if (entry.is_regular_file() && (ext == ".txt" || ext == ".tsv") &&
          name.rfind("glove", 0) != 0) {
        data_files.push_back(name);
      }
    }
    std::sort(data_files.begin(), data_files.end());
    if (data_files.empty()) throw ConfigError("no data files found in " + data_dir.string());
  }
  for (auto& f : data_files) {
    fs::path p(f);
    if (p.is_relative() && !data_dir.empty() && !fs::exists(p)) p = data_dir / p;
    if (!fs::is_regular_file(p)) throw ConfigError("data file " + p.string() + " does not exist");
    f = p.string();
  }

  if (embeddings.empty()) {
    const auto guess = data_dir / ("glove.6B." + std::to_string(hp.embed_dim) + "d.txt");
    if (data_dir.empty() || !fs::is_regular_file(guess)) {
      throw ConfigError("no embeddings path given (set embeddings=<file> or embeddings=fallback)");
    }
    embeddings = guess.string();
  }
  if (embeddings != "fallback") {
    fs::path p(embeddings);
    if (p.is_relative() && !data_dir.empty() && !fs::exists(p)) p = data_dir / p;
    if (!fs::is_regular_file(p)) {
      throw ConfigError("embeddings file " + p.string() + " does not exist");
    }
    embeddings = p.string();
  }
}

ModelSpec RunConfig::model_spec(std::size_t num_domains) const {
  ModelSpec s;
  s.variant = variant;
  s.embed_dim = hp.embed_dim;
  s.hidden_dim = hp.hidden_dim;
  s.attn_dim = attn_dim;
  s.mlp_dim = mlp_dim;
  s.num_domains = num_domains;
  s.dropout = hp.dropout;
  return s;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(text)) out.push_back(parse_num<std::uint64_t>("seeds", item));
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  return parse_config(f, path.string());
}

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData out;
  if (cfg.dataset == "synthetic-domain-shift" || cfg.dataset == "synthetic-separable") {
    synthetic::Dataset d;
    if (cfg.dataset == "synthetic-separable") {
      synthetic::SeparableConfig sc;
      sc.embed_dim = cfg.hp.embed_dim;
      sc.seed = cfg.data_seed;
      d = synthetic::make_separable(sc);
    } else {
      synthetic::DomainShiftConfig dc;
      dc.embed_dim = cfg.hp.embed_dim;
      dc.seed = cfg.data_seed;
      d = synthetic::make_domain_shift(dc);
    }
    out.split = Split{std::move(d.train), std::move(d.dev), std::move(d.test),
                      std::move(d.domain_names)};
    out.vocab = std::move(d.vocab);
    out.embeddings = std::move(d.embeddings);
    return out;
  }

  Corpus full;
  for (const auto& f : cfg.data_files) {
    auto c = parse_semeval_tsv(fs::path(f));
    for (auto& ex : c.examples) full.examples.push_back(std::move(ex));
  }
  if (full.empty()) throw DataError("no examples in the configured data files");
  out.split = make_split(full);
  if (cfg.count_check) verify_split_counts(out.split);
  const Corpus* sources[] = {&out.split.train};
  out.vocab = build_vocab(sources, cfg.min_count);
  index_corpus(out.split.train, out.vocab);
  index_corpus(out.split.dev, out.vocab);
  index_corpus(out.split.test, out.vocab);
  if (cfg.embeddings == "fallback") {
    out.embeddings =
        std::make_shared<EmbeddingMatrix>(fallback_embeddings(out.vocab, cfg.hp.embed_dim));
  } else {
    out.embeddings = std::make_shared<EmbeddingMatrix>(
        load_embeddings(fs::path(cfg.embeddings), out.vocab, cfg.hp.embed_dim));
  }
  return out;
}

Corpus load_corpus(std::span<const fs::path> files, const Vocabulary& vocab) {
  Corpus c;
  for (const auto& f : files) {
    auto part = parse_semeval_tsv(f);
    for (auto& ex : part.examples) c.examples.push_back(std::move(ex));
  }
  if (c.empty()) throw DataError("dataset is empty");
  index_corpus(c, vocab);
  return c;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median of an empty list");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::string format_summary(std::span<const SeedResult> results) {
  std::ostringstream os;
  std::vector<double> dev, test;
  for (const auto& r : results) {
    os << "seed=" << r.seed << "\tdev=" << fixed4(r.dev_macro_f1)
       << "\ttest=" << fixed4(r.test_macro_f1) << "\tbest_epoch=" << r.best_epoch << "\n";
    dev.push_back(r.dev_macro_f1);
    test.push_back(r.test_macro_f1);
  }
  os << "median\tdev=" << fixed4(median(dev)) << "\ttest=" << fixed4(median(test))
     << "\tseeds=" << results.size() << "\n";
  return os.str();
}

namespace {

template <typename Real>
SeedResult train_seed(const RunConfig& cfg, const PreparedData& data, std::uint64_t seed) {
  const auto spec = cfg.model_spec(data.split.domain_names.size());
  auto model = build_model<Real>(spec, seed, data.embeddings);
  Hyperparams hp = cfg.hp;
  hp.seed = seed;
  const fs::path dir = cfg.out_dir / ("seed_" + std::to_string(seed));
  fs::create_directories(dir);

  std::ofstream log(dir / "train_log.tsv", std::ios::binary | std::ios::trunc);
  if (!log) throw DataError("cannot write " + (dir / "train_log.tsv").string());
  const auto report = train(model, data.split.train, data.split.dev, hp, &log);

  const auto dev = evaluate(model, data.split.dev, hp.eval_threads);
  const auto test = evaluate(model, data.split.test, hp.eval_threads);
  write_file(dir / "metrics.txt", format_metrics(dev, "dev") + format_metrics(test, "test"));
  save_checkpoint(dir / "model.ckpt", model, data.vocab, data.split.domain_names);

  SeedResult r;
  r.seed = seed;
  r.dev_macro_f1 = dev.macro_f1;
  r.test_macro_f1 = test.macro_f1;
  r.best_epoch = report.best_epoch;
  r.stop_epoch = report.stop_epoch;
  r.wall_seconds = report.wall_seconds;
  return r;
}

}  // namespace

SeedResult train_one_seed(const RunConfig& cfg, const PreparedData& data, std::uint64_t seed) {
  return cfg.precision == Precision::Float64 ? train_seed<double>(cfg, data, seed)
                                             : train_seed<float>(cfg, data, seed);
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return run_command(
      [&] {
        RunConfig cfg = config;
        cfg.finalize();
        const auto data = prepare_data(cfg);
        if (is_adversarial(cfg.variant) && data.split.domain_names.size() < 2) {
          throw ConfigError("adversarial variants need at least two source domains");
        }
        fs::create_directories(cfg.out_dir);
        out << "train " << data.split.train.size() << " dev " << data.split.dev.size() << " test "
            << data.split.test.size() << " vocab " << data.vocab.size() << " variant "
            << variant_name(cfg.variant) << " kernels " << simd::isa_name(simd::active_isa()) << "\n";

        std::vector<SeedResult> results(cfg.seeds.size());
        if (cfg.parallel_seeds && cfg.seeds.size() > 1) {
          std::vector<std::exception_ptr> errors(cfg.seeds.size());
          std::vector<std::thread> pool;
          for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
            pool.emplace_back([&, i] {
              try {
                results[i] = train_one_seed(cfg, data, cfg.seeds[i]);
              } catch (...) {
                errors[i] = std::current_exception();
              }
            });
          }
          for (auto& t : pool) t.join();
          for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
          }
        } else {
          for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
            results[i] = train_one_seed(cfg, data, cfg.seeds[i]);
          }
        }
        for (const auto& r : results) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "seed %llu: dev %.4f test %.4f (best epoch %zu of %zu, %.1fs)\n",
                        static_cast<unsigned long long>(r.seed), r.dev_macro_f1, r.test_macro_f1,
                        r.best_epoch, r.stop_epoch, r.wall_seconds);
          out << buf;
        }
        const auto summary = format_summary(results);
        write_file(cfg.out_dir / "summary.txt", summary);
        out << summary;
        return kExitOk;
      },
      err);
}

namespace {

struct LoadedEval {
  Checkpoint ck;
  Corpus corpus;
  std::string split_name;
};

LoadedEval load_for_eval(const EvalRequest& req) {
  LoadedEval le{load_checkpoint(req.checkpoint), {}, "data"};
  if (req.config) {
    RunConfig cfg = *req.config;
    cfg.finalize();
    auto data = prepare_data(cfg);
    if (data.vocab.hash() != le.ck.vocab.hash()) {
      throw CheckpointError("vocabulary hash mismatch: checkpoint was trained on different data");
    }
    if (req.data_files.empty()) {
      if (req.split == "train") le.corpus = std::move(data.split.train);
      else if (req.split == "dev") le.corpus = std::move(data.split.dev);
      else if (req.split == "test") le.corpus = std::move(data.split.test);
      else throw ConfigError("unknown split '" + req.split + "'");
      le.split_name = req.split;
      if (le.corpus.empty()) throw DataError("split '" + req.split + "' is empty");
      return le;
    }
  }
  if (req.data_files.empty()) throw ConfigError("no dataset given (use --data or --config)");
  le.corpus = load_corpus(req.data_files, le.ck.vocab);
  return le;
}

}  // namespace

int cmd_eval(const EvalRequest& req, std::ostream& out, std::ostream& err) {
  return run_command(
      [&] {
        auto le = load_for_eval(req);
        const auto report = std::visit(
            [&](const auto& model) { return evaluate(model, le.corpus, req.threads); }, le.ck.model);
        out << format_metrics(report, le.split_name);
        return kExitOk;
      },
      err);
}

int cmd_predict(const fs::path& checkpoint, const std::string& target, const std::string& text,
                std::ostream& out, std::ostream& err) {
  return run_command(
      [&] {
        auto ck = load_checkpoint(checkpoint);
        Example ex;
        ex.target = target;
        ex.text = text;
        ex.target_tokens = tokenize(target);
        ex.sentence_tokens = tokenize(text);
        Corpus c;
        c.examples.push_back(ex);
        index_corpus(c, ck.vocab);
        const auto result = std::visit(
            [&](const auto& model) { return model_forward(model, c.examples[0], false, nullptr); },
            ck.model);
        char buf[64];
        out << "stance=" << stance_name(result.predicted()) << "\n";
        for (std::size_t k = 0; k < kNumStances; ++k) {
          std::snprintf(buf, sizeof buf, "%.6f", result.stance_probs[k]);
          out << "p." << stance_name(static_cast<Stance>(k)) << "=" << buf << "\n";
        }
        return kExitOk;
      },
      err);
}

int cmd_dump_attention(const EvalRequest& req, const fs::path& out_dir, std::ostream& out,
                       std::ostream& err) {
  return run_command(
      [&] {
        auto ck = load_checkpoint(req.checkpoint);
        if (!has_attention(ck.spec.variant)) {
          throw CapabilityError(std::string(variant_name(ck.spec.variant)) +
                                " checkpoint has no attention layer");
        }
        auto le = load_for_eval(req);
        fs::create_directories(out_dir);
        const auto n = std::visit(
            [&](const auto& model) {
              return dump_attention(model, le.corpus, out_dir / "attention.jsonl",
                                    out_dir / "attention.html", req.threads);
            },
            le.ck.model);
        out << "wrote " << n << " attention records to " << (out_dir / "attention.jsonl").string()
            << "\n";
        return kExitOk;
      },
      err);
}

int cmd_gradcheck(std::ostream& out, std::ostream& err, const std::string& inject_fault) {
  return run_command(
      [&] {
        set_backward_fault(inject_fault);
        GradcheckReport report;
        try {
          report = run_gradcheck();
        } catch (...) {
          set_backward_fault("");
          throw;
        }
        set_backward_fault("");
        char buf[160];
        for (const auto& r : report.results) {
          std::snprintf(buf, sizeof buf, "%-26s %.3e  %s\n", r.component.c_str(), r.max_rel_error,
                        r.passed ? "ok" : "FAIL");
          out << buf;
        }
        std::snprintf(buf, sizeof buf, "%zu components, threshold %.0e, %.2fs\n",
                      report.results.size(), report.threshold, report.seconds);
        out << buf;
        if (report.passed()) return kExitOk;
        err << "gradient check failed:";
        for (const auto& name : report.failing()) err << " " << name;
        err << "\n";
        return kExitDiagnostic;
      },
      err);
}

int run_command(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const CapabilityError& e) {
    err << "unsupported: " << e.what() << "\n";
    return kExitCapability;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitDiagnostic;
  }
}

}  // namespace stancegen
